//! Brute-force optimal predictors for welfare and unfairness criteria over a
//! finite hypothesis class.
//!
//! A hypothesis is a lookup table from instance index to prediction. A
//! population is a list of individuals, each pointing at an instance and
//! carrying a group and a target.

use std::collections::BTreeSet;
use std::fmt;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::domain::{GroupId, TaskMode};
use crate::metrics::{self, MetricError};

/// Two criterion values within this distance are treated as tied.
pub const TIE_TOL: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum TradeoffError {
    #[error("hypothesis class is empty")]
    EmptyClass,
    #[error("hypothesis {index} has {found} predictions, expected {expected}")]
    HypothesisLength {
        index: usize,
        expected: usize,
        found: usize,
    },
    #[error("individual {0} points at an unknown instance")]
    UnknownInstance(usize),
    #[error("criterion {0} has no formula and is not supported")]
    Unsupported(Criterion),
    #[error("claimed optimizer {0} is not in the class")]
    NotRepresentable(String),
    #[error(transparent)]
    Metric(#[from] MetricError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Criterion {
    SocialWelfare,
    AtkinsonIndex,
    Dwork,
    MeanDifference,
    PositiveResidualDifference,
    NegativeResidualDifference,
}

impl Criterion {
    /// Rows with a definition available for evaluation.
    pub const SUPPORTED: [Criterion; 4] = [
        Criterion::SocialWelfare,
        Criterion::MeanDifference,
        Criterion::PositiveResidualDifference,
        Criterion::NegativeResidualDifference,
    ];

    pub fn maximize(&self) -> bool {
        matches!(self, Criterion::SocialWelfare)
    }

    pub fn name(&self) -> &'static str {
        match self {
            Criterion::SocialWelfare => "social_welfare",
            Criterion::AtkinsonIndex => "atkinson_index",
            Criterion::Dwork => "dwork",
            Criterion::MeanDifference => "mean_difference",
            Criterion::PositiveResidualDifference => "positive_residual_difference",
            Criterion::NegativeResidualDifference => "negative_residual_difference",
        }
    }

    /// Welfare is the average prediction; the others are the metrics of the
    /// same name.
    pub fn evaluate(&self, pop: &Population, yhat: &[f64]) -> Result<f64, TradeoffError> {
        let y = pop.targets();
        let z = pop.groups();
        Ok(match self {
            Criterion::SocialWelfare => yhat.iter().sum::<f64>() / yhat.len() as f64,
            Criterion::MeanDifference => metrics::mean_difference(yhat, &z)?.gap,
            Criterion::PositiveResidualDifference => metrics::positive_residual_difference(&y, yhat, &z)?.gap,
            Criterion::NegativeResidualDifference => metrics::negative_residual_difference(&y, yhat, &z)?.gap,
            Criterion::AtkinsonIndex | Criterion::Dwork => return Err(TradeoffError::Unsupported(*self)),
        })
    }
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Realizability {
    /// Targets equal `h*(x)` for some `h*` in the class.
    Realizable,
    /// `h*(x) = E[y | x]` for some `h*` in the class; individual targets scatter around it.
    Unrealizable,
}

impl fmt::Display for Realizability {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(match self {
            Realizability::Realizable => "realizable",
            Realizability::Unrealizable => "unrealizable",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FiniteHypothesisClass {
    pub instances: Vec<Vec<f64>>,
    /// `hypotheses[h][i]` is the prediction of hypothesis `h` on instance `i`.
    pub hypotheses: Vec<Vec<f64>>,
}

impl FiniteHypothesisClass {
    pub fn new(instances: Vec<Vec<f64>>, hypotheses: Vec<Vec<f64>>) -> Result<Self, TradeoffError> {
        if hypotheses.is_empty() {
            return Err(TradeoffError::EmptyClass);
        }
        for (i, h) in hypotheses.iter().enumerate() {
            if h.len() != instances.len() {
                return Err(TradeoffError::HypothesisLength {
                    index: i,
                    expected: instances.len(),
                    found: h.len(),
                });
            }
        }
        Ok(FiniteHypothesisClass { instances, hypotheses })
    }

    pub fn y_max(&self) -> f64 {
        self.hypotheses.iter().flatten().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn y_min(&self) -> f64 {
        self.hypotheses.iter().flatten().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn find(&self, h: &[f64]) -> Option<usize> {
        self.hypotheses.iter().position(|g| g.as_slice() == h)
    }

    pub fn constant(&self, v: f64) -> Option<usize> {
        self.find(&vec![v; self.instances.len()])
    }

    /// Indices of every constant hypothesis.
    pub fn constants(&self) -> Vec<usize> {
        (0..self.hypotheses.len())
            .filter(|&h| self.hypotheses[h].windows(2).all(|w| w[0] == w[1]))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Individual {
    pub instance: usize,
    pub group: GroupId,
    pub target: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Population {
    pub individuals: Vec<Individual>,
}

impl Population {
    pub fn targets(&self) -> Vec<f64> {
        self.individuals.iter().map(|i| i.target).collect()
    }

    pub fn groups(&self) -> Vec<GroupId> {
        self.individuals.iter().map(|i| i.group).collect()
    }

    pub fn predictions(&self, h: &[f64]) -> Result<Vec<f64>, TradeoffError> {
        self.individuals
            .iter()
            .enumerate()
            .map(|(k, i)| h.get(i.instance).copied().ok_or(TradeoffError::UnknownInstance(k)))
            .collect()
    }
}

/// Every hypothesis attaining the best criterion value, ties kept.
pub fn optimal_hypotheses(
    class: &FiniteHypothesisClass,
    pop: &Population,
    criterion: Criterion,
) -> Result<BTreeSet<usize>, TradeoffError> {
    let scores: Vec<f64> = class
        .hypotheses
        .par_iter()
        .map(|h| criterion.evaluate(pop, &pop.predictions(h)?))
        .collect::<Result<_, _>>()?;
    let best = if criterion.maximize() {
        scores.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    } else {
        scores.iter().copied().fold(f64::INFINITY, f64::min)
    };
    Ok((0..scores.len())
        .filter(|&h| (scores[h] - best).abs() <= TIE_TOL)
        .collect())
}

/// The optimizers the table claims for one cell, as class indices.
pub fn claimed_optimizers(
    criterion: Criterion,
    mode: Realizability,
    task: TaskMode,
    class: &FiniteHypothesisClass,
    h_star: usize,
) -> Result<Vec<usize>, TradeoffError> {
    let constant = |v: f64, label: &str| {
        class
            .constant(v)
            .ok_or_else(|| TradeoffError::NotRepresentable(format!("constant {label} = {v}")))
    };
    let (lo, hi, lo_name, hi_name) = match task {
        TaskMode::Classification => (0.0, 1.0, "0", "1"),
        TaskMode::Regression => (class.y_min(), class.y_max(), "y_min", "y_max"),
    };
    let realizable = mode == Realizability::Realizable;
    Ok(match criterion {
        Criterion::SocialWelfare => vec![constant(hi, hi_name)?],
        Criterion::MeanDifference => match task {
            TaskMode::Classification => vec![constant(0.0, "0")?, constant(1.0, "1")?],
            TaskMode::Regression => {
                let c = class.constants();
                if c.is_empty() {
                    return Err(TradeoffError::NotRepresentable("constant c".into()));
                }
                c
            }
        },
        Criterion::PositiveResidualDifference => {
            let mut v = vec![constant(lo, lo_name)?];
            if realizable {
                v.push(h_star);
            }
            v
        }
        Criterion::NegativeResidualDifference => {
            let mut v = vec![constant(hi, hi_name)?];
            if realizable {
                v.push(h_star);
            }
            v
        }
        Criterion::AtkinsonIndex | Criterion::Dwork => return Err(TradeoffError::Unsupported(criterion)),
    })
}

/// True iff every claimed optimizer of the cell lies in the brute-force optimal set.
pub fn verify_table_row(
    criterion: Criterion,
    mode: Realizability,
    task: TaskMode,
    case: &TableCase,
) -> Result<bool, TradeoffError> {
    let claimed = claimed_optimizers(criterion, mode, task, &case.class, case.h_star)?;
    let opt = optimal_hypotheses(&case.class, &case.population, criterion)?;
    Ok(claimed.iter().all(|h| opt.contains(h)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TableCase {
    pub class: FiniteHypothesisClass,
    pub population: Population,
    pub h_star: usize,
}

fn draw_value(rng: &mut ChaCha8Rng, task: TaskMode) -> f64 {
    match task {
        TaskMode::Classification => f64::from(rng.random_range(0..=1u8)),
        // quarter steps in [-1, 2] so that ties happen
        TaskMode::Regression => f64::from(rng.random_range(-4..=8i32)) / 4.0,
    }
}

/// Random instance space of `n_instances` points with a class of at most
/// `max_hypotheses` lookup tables that contains `h*`, the constants the
/// table refers to, and random fill. In regression the class range
/// `[y_min, y_max]` covers every target.
///
/// Realizable: one or two individuals per instance with target `h*(x)`.
/// Unrealizable: two to four individuals per instance whose targets average
/// to `h*(x)` and are not all equal to it.
pub fn random_case(
    seed: u64,
    task: TaskMode,
    mode: Realizability,
    n_instances: usize,
    max_hypotheses: usize,
) -> TableCase {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let instances: Vec<Vec<f64>> = (0..n_instances).map(|i| vec![i as f64]).collect();

    // individuals, labels and h* = per-instance mean label
    let mut individuals = Vec::new();
    let mut h_star = vec![0.0; n_instances];
    for (x, hs) in h_star.iter_mut().enumerate() {
        let reps = match mode {
            Realizability::Realizable => rng.random_range(1..=2),
            Realizability::Unrealizable => rng.random_range(2..=4),
        };
        let labels: Vec<f64> = match mode {
            Realizability::Realizable => vec![draw_value(&mut rng, task); reps],
            Realizability::Unrealizable => loop {
                let l: Vec<f64> = (0..reps).map(|_| draw_value(&mut rng, task)).collect();
                if l.iter().any(|v| *v != l[0]) {
                    break l;
                }
            },
        };
        *hs = labels.iter().sum::<f64>() / reps as f64;
        for y in labels {
            individuals.push(Individual {
                instance: x,
                group: GroupId(rng.random_range(0..=1)),
                target: y,
            });
        }
    }
    // both groups present
    individuals[0].group = GroupId(0);
    individuals[1].group = GroupId(1);

    let mut hypotheses: Vec<Vec<f64>> = vec![h_star.clone()];
    let push = |h: Vec<f64>, hs: &mut Vec<Vec<f64>>| {
        if !hs.contains(&h) {
            hs.push(h);
        }
    };
    let fill = max_hypotheses.saturating_sub(4);
    let mut random: Vec<Vec<f64>> = Vec::new();
    for _ in 0..rng.random_range(0..=fill) {
        random.push((0..n_instances).map(|_| draw_value(&mut rng, task)).collect());
    }
    for h in random {
        push(h, &mut hypotheses);
    }
    match task {
        TaskMode::Classification => {
            push(vec![0.0; n_instances], &mut hypotheses);
            push(vec![1.0; n_instances], &mut hypotheses);
        }
        TaskMode::Regression => {
            // The class range must cover every target for the extreme
            // constants to bound all residuals.
            let all = hypotheses
                .iter()
                .flatten()
                .copied()
                .chain(individuals.iter().map(|i| i.target));
            let lo = all.clone().fold(f64::INFINITY, f64::min);
            let hi = all.fold(f64::NEG_INFINITY, f64::max);
            push(vec![lo; n_instances], &mut hypotheses);
            push(vec![hi; n_instances], &mut hypotheses);
            push(vec![draw_value(&mut rng, task).clamp(lo, hi); n_instances], &mut hypotheses);
        }
    }
    hypotheses.truncate(max_hypotheses);
    hypotheses.shuffle(&mut rng);
    let h_star_idx = hypotheses.iter().position(|h| *h == h_star).expect("h* kept");
    TableCase {
        class: FiniteHypothesisClass::new(instances, hypotheses).expect("non-empty class"),
        population: Population { individuals },
        h_star: h_star_idx,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellSummary {
    pub criterion: Criterion,
    pub mode: Realizability,
    pub task: TaskMode,
    pub cases: usize,
    pub failures: usize,
}

impl fmt::Display for CellSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let task = match self.task {
            TaskMode::Classification => "classification",
            TaskMode::Regression => "regression",
        };
        write!(
            f,
            "{:<30} {:<13} {:<15} cases={} failures={}",
            self.criterion, self.mode, task, self.cases, self.failures
        )
    }
}

/// Verifies every supported cell on `seeds` random 4-instance, at most
/// 16-hypothesis cases.
pub fn verify_table(seeds: u64) -> Result<Vec<CellSummary>, TradeoffError> {
    let mut out = Vec::new();
    for criterion in Criterion::SUPPORTED {
        for mode in [Realizability::Realizable, Realizability::Unrealizable] {
            for task in [TaskMode::Classification, TaskMode::Regression] {
                let results: Vec<bool> = (0..seeds)
                    .into_par_iter()
                    .map(|s| verify_table_row(criterion, mode, task, &random_case(s, task, mode, 4, 16)))
                    .collect::<Result<_, _>>()?;
                out.push(CellSummary {
                    criterion,
                    mode,
                    task,
                    cases: results.len(),
                    failures: results.iter().filter(|ok| !**ok).count(),
                });
            }
        }
    }
    Ok(out)
}
