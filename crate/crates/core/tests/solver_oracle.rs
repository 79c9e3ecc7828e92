mod common;

use std::time::Instant;

use eopfair::metrics::group_average_utility;
use eopfair::solver::{fit_l1_regularized, solve_baseline, solve_eop_training, SolverConfig, Status};
use eopfair::UtilitySpec;

fn check_seed(seed: u64) {
    let spec = UtilitySpec::crime();
    let (ds, lambda, factor) = common::toy(seed);
    let (_, eps_min) = fit_l1_regularized(&ds, lambda).unwrap();
    let cfg = SolverConfig::new(factor * eps_min, lambda);

    let t = Instant::now();
    let r = solve_eop_training(&ds, &spec, &cfg).unwrap();
    assert!(t.elapsed().as_secs_f64() < 5.0, "seed {seed}: eop solve too slow");
    let t = Instant::now();
    let b = solve_baseline(&ds, &cfg).unwrap();
    assert!(t.elapsed().as_secs_f64() < 5.0, "seed {seed}: baseline solve too slow");
    assert_eq!(r.status, Status::Optimal);
    assert_eq!(b.status, Status::Optimal);

    for res in [&r, &b] {
        assert!(common::loss(&ds, &res.weights, lambda) <= cfg.epsilon + 1e-8, "seed {seed}");
        assert!(res.duality_gap() <= cfg.tolerance_optimality, "seed {seed}: gap {}", res.duality_gap());
    }
    let per_group = group_average_utility(&ds, &r.model(), &spec).unwrap();
    assert!(per_group.values().all(|u| *u >= r.sigma - 1e-8), "seed {seed}");

    let oracle = common::grid_oracle(&ds, lambda, cfg.epsilon, |th| common::min_group_utility(&ds, &spec, th)).unwrap();
    assert!((r.sigma - oracle).abs() <= 1e-3, "seed {seed}: eop {} vs grid {oracle}", r.sigma);
    let ob = common::grid_oracle(&ds, lambda, cfg.epsilon, |th| common::mean_residual(&ds, th)).unwrap();
    assert!((b.sigma - ob).abs() <= 1e-3, "seed {seed}: baseline {} vs grid {ob}", b.sigma);
}

#[test]
fn one_dimensional_toys_match_grid_oracle() {
    for seed in (0..12).step_by(2) {
        check_seed(seed);
    }
}

#[test]
fn two_dimensional_toys_match_grid_oracle() {
    for seed in (1..12).step_by(2) {
        check_seed(seed);
    }
}
