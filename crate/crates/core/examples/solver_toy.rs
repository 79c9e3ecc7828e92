//! Max-min group utility training versus the residual baseline on a toy problem.

use eopfair::data::make_toy_instance;
use eopfair::solver::{fit_l1_regularized, solve_baseline, solve_eop_training, SolverConfig};
use eopfair::UtilitySpec;

fn main() {
    let ds = make_toy_instance(4, 2, (6, 5), 0.2).unwrap();
    let lambda = 1e-3;
    let (fit, eps_min) = fit_l1_regularized(&ds, lambda).unwrap();
    println!("lasso weights {:?}, epsilon_min {eps_min:.5}", fit.weights);

    let spec = UtilitySpec::crime();
    println!("{:>8} {:>10} {:>10} {:>10}", "eps/min", "eop sigma", "baseline", "gap");
    for f in [1.0, 1.1, 1.5, 2.0, 3.0] {
        let cfg = SolverConfig::new(f * eps_min, lambda);
        let r = solve_eop_training(&ds, &spec, &cfg).unwrap();
        let b = solve_baseline(&ds, &cfg).unwrap();
        println!("{f:>8.2} {:>10.5} {:>10.5} {:>10.2e}", r.sigma, b.sigma, r.duality_gap());
    }
}
