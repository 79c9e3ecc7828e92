//! Cross-validated epsilon sweep on Communities & Crime, summarized per epsilon.
//!
//! Usage: `cargo run --release --example crime_sweep -- path/to/communities.data`

use std::path::PathBuf;

use eopfair::data::load_communities;
use eopfair::experiments::{self, default_epsilon_grid, run_epsilon_sweep};
use eopfair::solver::{default_lambda_grid, fit_l1_regularized, select_lambda};
use eopfair::UtilitySpec;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path: PathBuf = std::env::args().nth(1).unwrap_or_else(|| "data/communities.data".into()).into();
    let (ds, _) = load_communities(&path)?;
    let lambda = select_lambda(&ds, &default_lambda_grid(), 10, 0)?;
    let (_, eps_min) = fit_l1_regularized(&ds, lambda)?;
    println!("lambda {lambda:.3e}, epsilon_min {eps_min:.5}");

    let rows = run_epsilon_sweep(&ds, &UtilitySpec::crime(), lambda, &default_epsilon_grid(eps_min), 5, 0)?;
    println!("{:<9} {:>8} {:>16} {:>16} {:>16}", "method", "epsilon", "PRD", "NRD", "min utility");
    for s in experiments::summarize(&rows) {
        println!(
            "{:<9} {:>8.4} {:>8.4} ±{:<7.4} {:>8.4} ±{:<7.4} {:>8.4} ±{:<7.4}",
            s.method.to_string(),
            s.epsilon,
            s.prd.mean,
            s.prd.sd,
            s.nrd.mean,
            s.nrd.sd,
            s.min_group_utility.mean,
            s.min_group_utility.sd
        );
    }
    println!("{:?}", experiments::qualitative_checks(&rows, 1e-6, 0.05));
    Ok(())
}
