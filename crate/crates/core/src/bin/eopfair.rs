use std::fs::File;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use serde::Deserialize;

use eopfair::data::{self, write_snapshot};
use eopfair::eop;
use eopfair::experiments::{self, Method};
use eopfair::metrics::{self, MetricReport};
use eopfair::solver::{self, default_lambda_grid};
use eopfair::tradeoffs;
use eopfair::{GroupId, UtilitySpec};

#[derive(Parser)]
#[command(name = "eopfair", version, about = "Fairness metrics, EOP verification and the crime epsilon sweep")]
struct Cli {
    /// TOML file with default values for any flag.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fairness gaps for a CSV with columns y, yhat, group.
    Metrics {
        input: PathBuf,
    },
    /// Exhaustive check of the metric/EOP equivalences on a rational grid.
    VerifyEop {
        /// Masses are multiples of 1/denominator.
        #[arg(long)]
        denominator: Option<u32>,
    },
    /// Brute-force check of the optimal-prediction table.
    VerifyTable {
        #[arg(long)]
        seeds: Option<u64>,
    },
    /// Cross-validated epsilon sweep on Communities & Crime.
    Sweep {
        #[arg(long)]
        data: Option<PathBuf>,
        /// Fixed lambda; skips cross-validation.
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long, value_delimiter = ',')]
        lambda_grid: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',')]
        epsilon_grid: Option<Vec<f64>>,
        #[arg(long)]
        folds: Option<usize>,
        #[arg(long)]
        cv_folds: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Row output; stdout when absent.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Writes the preprocessed dataset as a header CSV snapshot.
    Preprocess {
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    data: Option<PathBuf>,
    lambda: Option<f64>,
    lambda_grid: Option<Vec<f64>>,
    epsilon_grid: Option<Vec<f64>>,
    folds: Option<usize>,
    cv_folds: Option<usize>,
    seed: Option<u64>,
    output: Option<PathBuf>,
    denominator: Option<u32>,
    seeds: Option<u64>,
}

fn read_config(path: Option<&Path>) -> Result<FileConfig> {
    match path {
        None => Ok(FileConfig::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            toml::from_str(&text).with_context(|| format!("parsing {}", p.display()))
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run() -> Result<bool> {
    let cli = Cli::parse();
    let file = read_config(cli.config.as_deref())?;
    match cli.command {
        Command::Metrics { input } => metrics_cmd(&input),
        Command::VerifyEop { denominator } => {
            let den = denominator.or(file.denominator).unwrap_or(8);
            let t = Instant::now();
            let dists = eop::enumerate_binary_cube(den);
            let mut ok = true;
            for (name, v) in eop::PROPOSITIONS {
                let s = eop::summarize(name, v, &dists);
                ok &= s.counterexamples == 0 && s.side_failures == 0;
                println!("{s}");
            }
            for (name, rule) in [
                ("predictive_value_parity_realized_ranks", eop::RankRule::Ordinal),
                ("predictive_value_parity_coupled_slices", eop::RankRule::Coupled),
            ] {
                let s = eop::summarize(name, |d| eop::verify_pvp_equivalence_with(d, rule), &dists);
                println!("{s} (informational)");
            }
            println!("elapsed: {:.2}s", t.elapsed().as_secs_f64());
            Ok(ok)
        }
        Command::VerifyTable { seeds } => {
            let seeds = seeds.or(file.seeds).unwrap_or(100);
            let cells = tradeoffs::verify_table(seeds)?;
            for c in &cells {
                println!("{c}");
            }
            for c in [tradeoffs::Criterion::AtkinsonIndex, tradeoffs::Criterion::Dwork] {
                println!("{c:<30} unsupported");
            }
            Ok(cells.iter().all(|c| c.failures == 0))
        }
        Command::Sweep {
            data,
            lambda,
            lambda_grid,
            epsilon_grid,
            folds,
            cv_folds,
            seed,
            output,
        } => {
            let path = data.or(file.data).context("no dataset path given (--data)")?;
            let (ds, report) = data::load_communities(&path)?;
            eprintln!(
                "loaded {} rows ({} dropped), {} features, groups {:?}",
                report.retained_rows, report.rows_dropped, report.features, report.group_sizes
            );
            let seed = seed.or(file.seed).unwrap_or(0);
            let lambda = match lambda.or(file.lambda) {
                Some(l) => l,
                None => {
                    let grid = lambda_grid.or(file.lambda_grid).unwrap_or_else(default_lambda_grid);
                    solver::select_lambda(&ds, &grid, cv_folds.or(file.cv_folds).unwrap_or(10), seed)?
                }
            };
            let (_, eps_min) = solver::fit_l1_regularized(&ds, lambda)?;
            let grid = epsilon_grid
                .or(file.epsilon_grid)
                .unwrap_or_else(|| experiments::default_epsilon_grid(eps_min));
            eprintln!("lambda = {lambda}, epsilon_min = {eps_min}");
            let rows = experiments::run_epsilon_sweep(
                &ds,
                &UtilitySpec::crime(),
                lambda,
                &grid,
                folds.or(file.folds).unwrap_or(5),
                seed,
            )?;
            let out: Box<dyn Write> = match output.or(file.output) {
                Some(p) => Box::new(File::create(&p).with_context(|| format!("creating {}", p.display()))?),
                None => Box::new(io::stdout()),
            };
            experiments::write_rows(&rows, out)?;
            let checks = experiments::qualitative_checks(&rows, 1e-6, 0.05);
            eprintln!("{checks:?}");
            let mut ok = true;
            for m in [Method::Eop, Method::Baseline] {
                let bad = experiments::infeasible_everywhere(&rows, m);
                if !bad.is_empty() {
                    eprintln!("{m}: infeasible on every fold at epsilon {bad:?}");
                    ok = false;
                }
            }
            Ok(ok)
        }
        Command::Preprocess { data, output } => {
            let path = data.or(file.data).context("no dataset path given (--data)")?;
            let (ds, report) = data::load_communities(&path)?;
            eprintln!("{report:?}");
            match output.or(file.output) {
                Some(p) => write_snapshot(&ds, File::create(&p)?)?,
                None => write_snapshot(&ds, io::stdout())?,
            }
            Ok(true)
        }
    }
}

#[derive(Deserialize)]
struct MetricRow {
    y: f64,
    yhat: f64,
    group: u32,
}

fn metrics_cmd(input: &Path) -> Result<bool> {
    let mut rdr = csv::Reader::from_path(input).with_context(|| format!("reading {}", input.display()))?;
    let rows: Vec<MetricRow> = rdr.deserialize().collect::<Result<_, _>>()?;
    if rows.is_empty() {
        bail!("{} has no rows", input.display());
    }
    let y: Vec<f64> = rows.iter().map(|r| r.y).collect();
    let yhat: Vec<f64> = rows.iter().map(|r| r.yhat).collect();
    let z: Vec<GroupId> = rows.iter().map(|r| GroupId(r.group)).collect();
    let binary = y.iter().chain(&yhat).all(|v| *v == 0.0 || *v == 1.0);
    let mut reports: Vec<MetricReport> = Vec::new();
    if binary {
        reports.push(metrics::statistical_parity_gap(&yhat, &z)?);
        reports.push(metrics::equality_of_odds_gap(&y, &yhat, &z)?);
        reports.push(metrics::predictive_value_parity_gap(&y, &yhat, &z)?);
    }
    reports.push(metrics::accuracy_parity_gap(&y, &yhat, &z)?);
    reports.push(metrics::positive_residual_difference(&y, &yhat, &z)?);
    reports.push(metrics::negative_residual_difference(&y, &yhat, &z)?);
    reports.push(metrics::mean_difference(&yhat, &z)?);
    let mut w = csv::Writer::from_writer(io::stdout());
    w.write_record(MetricReport::record_header())?;
    for r in &reports {
        w.write_record(r.to_record())?;
    }
    w.flush()?;
    Ok(true)
}
