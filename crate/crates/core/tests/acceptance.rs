//! Acceptance criteria, one PASS/FAIL line each. Exits nonzero if any fails.
//!
//! The crime criteria read the Communities & Crime file named by
//! `COMMUNITIES_DATA`, falling back to `data/communities.data` at the
//! workspace root.

mod common;

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use eopfair::data::load_communities;
use eopfair::eop::{self, luck_egalitarian_on_view, rawlsian_on_view, Atom, FiniteJointDistribution, RankRule, ViewPoint};
use eopfair::experiments::{self, Method};
use eopfair::metrics::group_average_utility;
use eopfair::rational::{q, qi, Q};
use eopfair::solver::{self, fit_l1_regularized, solve_baseline, solve_eop_training, SolverConfig, Status};
use eopfair::tradeoffs;
use eopfair::utility::{coefficients_from_benefit_table, BenefitTable};
use eopfair::UtilitySpec;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn report(id: &str, title: &str, o: &Outcome, failed: &mut usize) {
    if !o.pass {
        *failed += 1;
    }
    println!("{} {id} {title}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
}

fn proposition_suite() -> Outcome {
    let t = Instant::now();
    let summaries = eop::run_proposition_suite(8);
    let secs = t.elapsed().as_secs_f64();
    let mut pass = summaries.len() == 4 && secs < 60.0;
    let mut parts = Vec::new();
    for s in &summaries {
        pass &= s.cases == 6435 && s.outside_hypothesis == 0 && s.counterexamples == 0 && s.side_failures == 0;
        parts.push(format!("{}={}/{}", s.name, s.counterexamples, s.cases));
    }
    outcome(pass, format!("counterexamples {} in {secs:.2}s (limit 60s)", parts.join(" ")))
}

fn random_q(rng: &mut ChaCha8Rng) -> Q {
    q(rng.random_range(-1000..=1000), rng.random_range(1..=97))
}

fn benefit_table_round_trip() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut bad = 0;
    for _ in 0..1000 {
        let table = BenefitTable::new(random_q(&mut rng), random_q(&mut rng), random_q(&mut rng), random_q(&mut rng));
        let c = coefficients_from_benefit_table(&table);
        for (y, yh) in [(false, false), (false, true), (true, false), (true, true)] {
            let yhat = if yh { qi(1) } else { qi(0) };
            if c.reconstruct(y, yhat) != *table.get(y, yh) {
                bad += 1;
            }
        }
    }
    outcome(bad == 0, format!("1000 tables, {bad} inexact points of 4000"))
}

fn optimal_prediction_table() -> Outcome {
    match tradeoffs::verify_table(100) {
        Ok(cells) => {
            let failures: usize = cells.iter().map(|c| c.failures).sum();
            let all_100 = cells.iter().all(|c| c.cases == 100);
            outcome(
                cells.len() == 16 && all_100 && failures == 0,
                format!("{} cells x 100 seeds, {failures} failures", cells.len()),
            )
        }
        Err(e) => outcome(false, format!("error: {e}")),
    }
}

fn solver_oracle() -> Outcome {
    let spec = UtilitySpec::crime();
    let mut worst_diff: f64 = 0.0;
    let mut worst_resid: f64 = 0.0;
    let mut slowest: f64 = 0.0;
    let mut problems = Vec::new();
    let mut dims = BTreeMap::new();
    for seed in 0..50u64 {
        let (ds, lambda, factor) = common::toy(seed);
        *dims.entry(ds.k()).or_insert(0) += 1;
        let (_, eps_min) = match fit_l1_regularized(&ds, lambda) {
            Ok(v) => v,
            Err(e) => {
                problems.push(format!("seed {seed}: {e}"));
                continue;
            }
        };
        let cfg = SolverConfig::new(factor * eps_min, lambda);
        let t = Instant::now();
        let r = solve_eop_training(&ds, &spec, &cfg);
        slowest = slowest.max(t.elapsed().as_secs_f64());
        let t = Instant::now();
        let b = solve_baseline(&ds, &cfg);
        slowest = slowest.max(t.elapsed().as_secs_f64());
        let (r, b) = match (r, b) {
            (Ok(r), Ok(b)) => (r, b),
            (r, b) => {
                problems.push(format!("seed {seed}: {:?} {:?}", r.err(), b.err()));
                continue;
            }
        };
        if r.status != Status::Optimal || b.status != Status::Optimal {
            problems.push(format!("seed {seed}: status {:?}/{:?}", r.status, b.status));
        }
        for res in [&r, &b] {
            let resid = (common::loss(&ds, &res.weights, lambda) - cfg.epsilon).max(0.0);
            worst_resid = worst_resid.max(resid).max(res.feasibility_residual);
        }
        if let Ok(groups) = group_average_utility(&ds, &r.model(), &spec) {
            for u in groups.values() {
                worst_resid = worst_resid.max(r.sigma - u);
            }
        }
        let oe = common::grid_oracle(&ds, lambda, cfg.epsilon, |th| common::min_group_utility(&ds, &spec, th));
        let ob = common::grid_oracle(&ds, lambda, cfg.epsilon, |th| common::mean_residual(&ds, th));
        match (oe, ob) {
            (Some(oe), Some(ob)) => {
                worst_diff = worst_diff.max((r.sigma - oe).abs()).max((b.sigma - ob).abs());
            }
            _ => problems.push(format!("seed {seed}: grid has no feasible point")),
        }
    }
    let pass = problems.is_empty() && worst_diff <= 1e-3 && worst_resid <= 1e-8 && slowest < 5.0;
    let mut detail = format!(
        "50 toys {dims:?} (k: count), max |solver - grid| {worst_diff:.2e} (limit 1e-3), \
         max feasibility residual {worst_resid:.2e} (limit 1e-8), slowest solve {slowest:.3}s (limit 5s)"
    );
    if !problems.is_empty() {
        detail.push_str(&format!("; {}", problems.join("; ")));
    }
    outcome(pass, detail)
}

fn data_path() -> PathBuf {
    std::env::var_os("COMMUNITIES_DATA")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/communities.data"))
}

fn crime_sweep() -> [Outcome; 4] {
    let path = data_path();
    let missing = || outcome(false, format!("dataset not found at {}", path.display()));
    if !path.exists() {
        return [missing(), missing(), missing(), missing()];
    }
    let t = Instant::now();
    let run = || -> Result<Vec<experiments::SweepRow>, String> {
        let (ds, _) = load_communities(&path).map_err(|e| e.to_string())?;
        let lambda = solver::select_lambda(&ds, &solver::default_lambda_grid(), 10, 0).map_err(|e| e.to_string())?;
        let (_, eps_min) = fit_l1_regularized(&ds, lambda).map_err(|e| e.to_string())?;
        let grid = experiments::default_epsilon_grid(eps_min);
        if grid.len() != 12 {
            return Err(format!("epsilon grid has {} points", grid.len()));
        }
        experiments::run_epsilon_sweep(&ds, &UtilitySpec::crime(), lambda, &grid, 5, 0).map_err(|e| e.to_string())
    };
    let rows = match run() {
        Ok(r) => r,
        Err(e) => {
            let err = || outcome(false, format!("sweep error: {e}"));
            return [err(), err(), err(), err()];
        }
    };
    let secs = t.elapsed().as_secs_f64();
    let checks = experiments::qualitative_checks(&rows, 1e-6, 0.05);
    let endpoints = |m: Method| {
        let s = experiments::summarize(&rows);
        let mine: Vec<_> = s.into_iter().filter(|r| r.method == m && r.feasible_folds > 0).collect();
        let (first, last) = (&mine[0], &mine[mine.len() - 1]);
        format!(
            "fold-mean PRD {:.4} -> {:.4}, NRD {:.4} -> {:.4}",
            first.prd.mean, last.prd.mean, first.nrd.mean, last.nrd.mean
        )
    };
    [
        outcome(
            checks.eop_train_sigma_monotone,
            format!(
                "training sigma non-decreasing per fold (tol 1e-6): {}; held-out min-group utility non-decreasing: {}",
                checks.eop_train_sigma_monotone, checks.eop_heldout_utility_monotone
            ),
        ),
        outcome(
            checks.baseline_residuals_shrink,
            format!("baseline PRD and NRD at largest epsilon <= smallest, per fold: {}; {}", checks.baseline_residuals_shrink, endpoints(Method::Baseline)),
        ),
        outcome(
            checks.eop_dominates_baseline,
            format!(
                "largest baseline - eop held-out min-group utility {:.4} (margin 0.05)",
                checks.worst_dominance_shortfall
            ),
        ),
        outcome(secs < 900.0, format!("lambda CV + sweep {secs:.1}s (limit 900s)")),
    ]
}

fn preprocessing_audit() -> Outcome {
    let path = data_path();
    let (ds, rep) = match load_communities(&path) {
        Ok(v) => v,
        Err(e) => return outcome(false, format!("{}: {e}", path.display())),
    };
    let n = ds.len() as f64;
    let (mut worst_mean, mut worst_var): (f64, f64) = (0.0, 0.0);
    // the last column is the raw group indicator
    for j in 0..ds.k() - 1 {
        let col: Vec<f64> = ds.instances().iter().map(|i| i.features[j]).collect();
        let m = col.iter().sum::<f64>() / n;
        let v = col.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
        worst_mean = worst_mean.max(m.abs());
        worst_var = worst_var.max((v - 1.0).abs());
    }
    let targets_ok = ds.targets().iter().all(|t| (0.0..=1.0).contains(t));
    let pass = rep.raw_rows == 1994 && worst_mean <= 1e-9 && worst_var <= 1e-9 && targets_ok;
    outcome(
        pass,
        format!(
            "raw rows {} (expected 1994), {} standardized features, max |mean| {worst_mean:.1e}, \
             max |var - 1| {worst_var:.1e} (limits 1e-9), targets in [0,1]: {targets_ok}",
            rep.raw_rows,
            ds.k() - 1
        ),
    )
}

/// Random law on groups {0,1}, y and ŷ in {0,1,2}. With `copy`, group 1 has
/// the same conditional law as group 0.
fn random_distribution(rng: &mut ChaCha8Rng, copy: bool) -> FiniteJointDistribution {
    let cells: Vec<(i64, i64)> = (0..3).flat_map(|y| (0..3).map(move |h| (y, h))).collect();
    let w0: Vec<i64> = cells.iter().map(|_| rng.random_range(0..4)).collect();
    let w1: Vec<i64> = if copy {
        w0.clone()
    } else {
        cells.iter().map(|_| rng.random_range(0..4)).collect()
    };
    let (w0, w1) = if w0.iter().all(|w| *w == 0) || w1.iter().all(|w| *w == 0) {
        (vec![1; 9], vec![1; 9])
    } else {
        (w0, w1)
    };
    let (s0, s1): (i64, i64) = (w0.iter().sum(), w1.iter().sum());
    let mut atoms = Vec::new();
    for (k, &(y, h)) in cells.iter().enumerate() {
        atoms.push((Atom::new(0u32, qi(y), qi(h)), q(w0[k] * s1, 2 * s0 * s1)));
        atoms.push((Atom::new(1u32, qi(y), qi(h)), q(w1[k] * s0, 2 * s0 * s1)));
    }
    FiniteJointDistribution::new(atoms).expect("masses sum to one")
}

/// Replaces each point's effort by `f(group, effort)`, keeping its advantage.
fn move_effort(view: &[ViewPoint], f: impl Fn(usize, &Q) -> Q) -> Vec<ViewPoint> {
    view.iter()
        .map(|p| ViewPoint {
            d: f(p.group.0 as usize, &p.d),
            ..p.clone()
        })
        .collect()
}

fn rank_invariance() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let effort = |a: &Atom| a.yhat.clone() + &a.y;
    let actual = |a: &Atom| a.y.clone() * &a.yhat + &a.y;
    let mut changed = 0;
    let mut satisfied = 0;
    let mut rawls_flips = 0;
    for i in 0..200 {
        let view = random_distribution(&mut rng, i % 2 == 0).view(effort, actual);
        // strictly increasing per group on the effort support {0,..,4}
        let steps: Vec<Vec<Q>> = (0..2)
            .map(|_| (0..5).map(|_| q(rng.random_range(1..20), rng.random_range(1..5))).collect())
            .collect();
        let offsets = [q(rng.random_range(-10..10), 3), q(rng.random_range(-10..10), 3)];
        let moved = move_effort(&view, |g, d| {
            let v = usize::try_from(d.to_integer()).unwrap();
            steps[g][..=v].iter().fold(offsets[g].clone(), |acc, s| acc + s)
        });
        for rule in [RankRule::Ordinal, RankRule::Coupled] {
            let before = luck_egalitarian_on_view(&view, rule);
            let after = luck_egalitarian_on_view(&moved, rule);
            if before.satisfied != after.satisfied || before.gap != after.gap {
                changed += 1;
            }
            if rule == RankRule::Coupled && before.satisfied {
                satisfied += 1;
            }
        }
        if rawlsian_on_view(&view).satisfied != rawlsian_on_view(&moved).satisfied {
            rawls_flips += 1;
        }
    }
    let witness = rawlsian_witness_flips();
    outcome(
        changed == 0 && witness,
        format!(
            "200 distributions x 2 rank rules, {changed} luck-egalitarian verdicts changed \
             ({satisfied} satisfied under the coupled rule); Rawlsian verdict flipped in {rawls_flips}, \
             constructed witness flips: {witness}"
        ),
    )
}

/// Two groups with identical outcomes; shifting group 1's effort by one
/// keeps every rank but moves every Rawlsian stratum.
fn rawlsian_witness_flips() -> bool {
    let atoms = vec![
        (Atom::new(0u32, qi(0), qi(0)), q(1, 4)),
        (Atom::new(0u32, qi(1), qi(1)), q(1, 4)),
        (Atom::new(1u32, qi(0), qi(0)), q(1, 4)),
        (Atom::new(1u32, qi(1), qi(1)), q(1, 4)),
    ];
    let d = FiniteJointDistribution::new(atoms).unwrap();
    let view = d.view(|a| a.y.clone(), |a| qi(2) * &a.y + qi(1));
    let shifted = move_effort(&view, |g, d| d.clone() + qi(g as i64));
    rawlsian_on_view(&view).satisfied
        && !rawlsian_on_view(&shifted).satisfied
        && luck_egalitarian_on_view(&view, RankRule::Coupled).satisfied
        && luck_egalitarian_on_view(&shifted, RankRule::Coupled).satisfied
}

fn main() -> ExitCode {
    let mut failed = 0;
    report("1", "proposition suite", &proposition_suite(), &mut failed);
    report("2", "benefit table closed form", &benefit_table_round_trip(), &mut failed);
    report("3", "optimal prediction table", &optimal_prediction_table(), &mut failed);
    report("4", "solver oracle equivalence", &solver_oracle(), &mut failed);
    let [a, b, c, time] = crime_sweep();
    report("5a", "crime sweep eop utility monotone in epsilon", &a, &mut failed);
    report("5b", "crime sweep baseline residual differences shrink", &b, &mut failed);
    report("5c", "crime sweep eop utility dominates baseline", &c, &mut failed);
    report("5t", "crime sweep runtime", &time, &mut failed);
    report("6", "preprocessing audit", &preprocessing_audit(), &mut failed);
    report("7", "rank invariance", &rank_invariance(), &mut failed);
    println!("{failed} criteria failed");
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
