//! Cross-validated ε sweep comparing EOP training against the residual-bound
//! baseline.

use std::collections::BTreeMap;
use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::domain::{Dataset, DomainError};
use crate::metrics::{self, MetricError};
use crate::solver::{self, geometric_grid, SolverConfig, SolverError, Status};
use crate::utility::UtilitySpec;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("need at least 2 folds, got {0}")]
    Folds(usize),
    #[error("group {group} has {size} members, fewer than {folds} folds")]
    SmallGroup { group: String, size: usize, folds: usize },
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Eop,
    Baseline,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Eop => "eop",
            Method::Baseline => "baseline",
        })
    }
}

/// One `(method, ε, fold)` cell. Metric columns are measured on the held-out
/// split; `train_*` columns describe the fitted model on its training split.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub method: Method,
    pub epsilon: f64,
    pub fold: usize,
    pub status: Status,
    pub prd: f64,
    pub nrd: f64,
    pub min_group_utility: f64,
    pub train_sigma: f64,
    pub train_loss: f64,
    pub train_mse: f64,
    pub test_mse: f64,
}

/// Folds stratified by group: each group is shuffled with the seed and dealt
/// round-robin, so every fold holds members of every group.
pub fn stratified_folds(ds: &Dataset, folds: usize, seed: u64) -> Result<Vec<Vec<usize>>, ExperimentError> {
    if folds < 2 {
        return Err(ExperimentError::Folds(folds));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = vec![Vec::new(); folds];
    let mut next = 0;
    for (g, rows) in ds.group_index() {
        if rows.len() < folds {
            return Err(ExperimentError::SmallGroup {
                group: g.to_string(),
                size: rows.len(),
                folds,
            });
        }
        let mut rows = rows.clone();
        rows.shuffle(&mut rng);
        for r in rows {
            out[next % folds].push(r);
            next += 1;
        }
    }
    out.iter_mut().for_each(|f| f.sort_unstable());
    Ok(out)
}

/// 12 points, geometric from `1.02·ε_min` to `3·ε_min`.
pub fn default_epsilon_grid(epsilon_min: f64) -> Vec<f64> {
    geometric_grid(1.02 * epsilon_min, 3.0 * epsilon_min, 12)
}

fn run_cell(
    method: Method,
    train: &Dataset,
    test: &Dataset,
    spec: &UtilitySpec,
    config: &SolverConfig,
    fold: usize,
) -> Result<SweepRow, ExperimentError> {
    let res = match method {
        Method::Eop => solver::solve_eop_training(train, spec, config)?,
        Method::Baseline => solver::solve_baseline(train, config)?,
    };
    let mut row = SweepRow {
        method,
        epsilon: config.epsilon,
        fold,
        status: res.status,
        prd: f64::NAN,
        nrd: f64::NAN,
        min_group_utility: f64::NAN,
        train_sigma: res.sigma,
        train_loss: res.loss,
        train_mse: res.mse,
        test_mse: f64::NAN,
    };
    if res.status == Status::Infeasible {
        return Ok(row);
    }
    let model = res.model();
    let preds = model.predict_all(test)?;
    let y = test.targets();
    let z = test.group_labels();
    row.prd = metrics::positive_residual_difference(&y, &preds, &z)?.gap;
    row.nrd = metrics::negative_residual_difference(&y, &preds, &z)?.gap;
    row.min_group_utility = metrics::min_group_average_utility(test, &model, spec)?;
    row.test_mse = solver::mse(test, &model.weights);
    Ok(row)
}

/// Trains both methods at every ε on every fold's training split and
/// evaluates on the held-out split. Rows are ordered by method, ε, fold.
pub fn run_epsilon_sweep(
    ds: &Dataset,
    spec: &UtilitySpec,
    lambda: f64,
    grid: &[f64],
    folds: usize,
    seed: u64,
) -> Result<Vec<SweepRow>, ExperimentError> {
    spec.covers(&ds.groups()).map_err(SolverError::from)?;
    let parts = stratified_folds(ds, folds, seed)?;
    let splits: Vec<(Dataset, Dataset)> = parts
        .iter()
        .map(|held| Ok((ds.subset(&solver::complement(ds.len(), held))?, ds.subset(held)?)))
        .collect::<Result<_, DomainError>>()?;
    let mut cells = Vec::new();
    for method in [Method::Eop, Method::Baseline] {
        for &eps in grid {
            for fold in 0..folds {
                cells.push((method, eps, fold));
            }
        }
    }
    let mut rows: Vec<SweepRow> = cells
        .par_iter()
        .map(|&(method, eps, fold)| {
            let (train, test) = &splits[fold];
            run_cell(method, train, test, spec, &SolverConfig::new(eps, lambda), fold)
        })
        .collect::<Result<_, _>>()?;
    rows.sort_by(|a, b| {
        (a.method, a.epsilon, a.fold)
            .partial_cmp(&(b.method, b.epsilon, b.fold))
            .expect("finite epsilons")
    });
    Ok(rows)
}

pub fn write_rows<W: std::io::Write>(rows: &[SweepRow], out: W) -> Result<(), ExperimentError> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanSd {
    pub mean: f64,
    pub sd: f64,
}

impl MeanSd {
    /// Population standard deviation; NaN mean for an empty slice.
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let sd = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        MeanSd { mean, sd }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub method: Method,
    pub epsilon: f64,
    pub feasible_folds: usize,
    pub infeasible_folds: usize,
    pub prd: MeanSd,
    pub nrd: MeanSd,
    pub min_group_utility: MeanSd,
    pub train_mse: MeanSd,
    pub test_mse: MeanSd,
}

/// Fold aggregation per `(method, ε)` over feasible rows only.
pub fn summarize(rows: &[SweepRow]) -> Vec<SummaryRow> {
    let mut groups: BTreeMap<(Method, u64), Vec<&SweepRow>> = BTreeMap::new();
    for r in rows {
        groups.entry((r.method, r.epsilon.to_bits())).or_default().push(r);
    }
    let mut out: Vec<SummaryRow> = groups
        .into_values()
        .map(|rs| {
            let ok: Vec<&&SweepRow> = rs.iter().filter(|r| r.status != Status::Infeasible).collect();
            let col = |f: fn(&SweepRow) -> f64| MeanSd::of(&ok.iter().map(|r| f(r)).collect::<Vec<_>>());
            SummaryRow {
                method: rs[0].method,
                epsilon: rs[0].epsilon,
                feasible_folds: ok.len(),
                infeasible_folds: rs.len() - ok.len(),
                prd: col(|r| r.prd),
                nrd: col(|r| r.nrd),
                min_group_utility: col(|r| r.min_group_utility),
                train_mse: col(|r| r.train_mse),
                test_mse: col(|r| r.test_mse),
            }
        })
        .collect();
    out.sort_by(|a, b| (a.method, a.epsilon).partial_cmp(&(b.method, b.epsilon)).expect("finite"));
    out
}

/// ε values at which every fold of `method` was infeasible.
pub fn infeasible_everywhere(rows: &[SweepRow], method: Method) -> Vec<f64> {
    summarize(rows)
        .into_iter()
        .filter(|s| s.method == method && s.feasible_folds == 0)
        .map(|s| s.epsilon)
        .collect()
}

fn by_fold(rows: &[SweepRow], method: Method) -> BTreeMap<usize, Vec<&SweepRow>> {
    let mut m: BTreeMap<usize, Vec<&SweepRow>> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.method == method && r.status != Status::Infeasible) {
        m.entry(r.fold).or_default().push(r);
    }
    m.values_mut()
        .for_each(|v| v.sort_by(|a, b| a.epsilon.partial_cmp(&b.epsilon).expect("finite")));
    m
}

/// Qualitative comparison between the two methods.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QualitativeChecks {
    /// EOP training σ never decreases along ε on any fold (slack `tol`).
    pub eop_train_sigma_monotone: bool,
    /// Same for held-out min-group utility.
    pub eop_heldout_utility_monotone: bool,
    /// Baseline held-out PRD and NRD at the largest ε do not exceed their
    /// values at the smallest feasible ε, per fold.
    pub baseline_residuals_shrink: bool,
    /// EOP held-out min-group utility ≥ baseline's minus `margin` at every
    /// shared `(ε, fold)`.
    pub eop_dominates_baseline: bool,
    pub worst_dominance_shortfall: f64,
}

pub fn qualitative_checks(rows: &[SweepRow], tol: f64, margin: f64) -> QualitativeChecks {
    let monotone = |f: fn(&SweepRow) -> f64| {
        by_fold(rows, Method::Eop)
            .values()
            .all(|v| v.windows(2).all(|w| f(w[1]) >= f(w[0]) - tol))
    };
    let shrink = by_fold(rows, Method::Baseline).values().all(|v| {
        let (first, last) = (v[0], v[v.len() - 1]);
        last.prd <= first.prd && last.nrd <= first.nrd
    });
    let base: BTreeMap<(u64, usize), f64> = rows
        .iter()
        .filter(|r| r.method == Method::Baseline && r.status != Status::Infeasible)
        .map(|r| ((r.epsilon.to_bits(), r.fold), r.min_group_utility))
        .collect();
    let mut shortfall = f64::NEG_INFINITY;
    for r in rows.iter().filter(|r| r.method == Method::Eop && r.status != Status::Infeasible) {
        if let Some(b) = base.get(&(r.epsilon.to_bits(), r.fold)) {
            shortfall = shortfall.max(b - r.min_group_utility);
        }
    }
    QualitativeChecks {
        eop_train_sigma_monotone: monotone(|r| r.train_sigma),
        eop_heldout_utility_monotone: monotone(|r| r.min_group_utility),
        baseline_residuals_shrink: shrink,
        eop_dominates_baseline: shortfall <= margin,
        worst_dominance_shortfall: shortfall,
    }
}
