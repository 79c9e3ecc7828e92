//! Statistical fairness gaps and the worst-off-group utility `F(h, T)`.
//!
//! Classification gaps (statistical parity, equality of odds, predictive value
//! parity) are computed from counts in exact rational arithmetic, so a gap of
//! zero means the definition holds exactly on the sample. Real-valued gaps
//! use `f64` and a tolerance of [`FLOAT_ZERO_TOL`].
//!
//! A conditioning stratum that one group never realizes has no conditional
//! distribution in that group. It is left out of the maximum and reported in
//! [`MetricReport::strata_skipped`].

use std::collections::{BTreeMap, BTreeSet};

use num_traits::{One, Signed, Zero};
use serde::Serialize;
use thiserror::Error;

use crate::domain::{Dataset, DomainError, GroupId, LinearModel};
use crate::rational::{qi, to_f64, Q};
use crate::utility::{UtilityError, UtilitySpec};

pub const FLOAT_ZERO_TOL: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("gap needs at least two groups, found {0}")]
    TooFewGroups(usize),
    #[error("input lengths differ: {0}")]
    LengthMismatch(String),
    #[error("{what} value {value} at position {index} is not 0 or 1")]
    NonBinary {
        what: &'static str,
        index: usize,
        value: f64,
    },
    #[error(transparent)]
    Utility(#[from] UtilityError),
    #[error(transparent)]
    Domain(#[from] DomainError),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricReport {
    pub name: String,
    pub gap: f64,
    pub per_group: BTreeMap<GroupId, f64>,
    pub strata_skipped: Vec<String>,
    /// Exact value of the gap when it was computed from counts.
    #[serde(skip)]
    pub exact_gap: Option<Q>,
}

impl MetricReport {
    fn from_exact(name: &str, g: exact::ExactGap) -> Self {
        MetricReport {
            name: name.to_string(),
            gap: to_f64(&g.gap),
            per_group: g.per_group.iter().map(|(k, v)| (*k, to_f64(v))).collect(),
            strata_skipped: g.skipped,
            exact_gap: Some(g.gap),
        }
    }

    fn from_float(name: &str, gap: f64, per_group: BTreeMap<GroupId, f64>) -> Self {
        MetricReport {
            name: name.to_string(),
            gap,
            per_group,
            strata_skipped: Vec::new(),
            exact_gap: None,
        }
    }

    /// Whether the underlying definition holds: exact zero when computed from
    /// counts, `|gap| <= 1e-12` otherwise.
    pub fn holds(&self) -> bool {
        match &self.exact_gap {
            Some(g) => g.is_zero(),
            None => self.gap.abs() <= FLOAT_ZERO_TOL,
        }
    }

    pub fn record_header() -> [&'static str; 4] {
        ["metric", "gap", "per_group", "strata_skipped"]
    }

    /// Flat record: name, gap, `group=value` pairs joined by `;`, skipped strata joined by `;`.
    pub fn to_record(&self) -> [String; 4] {
        let groups = self
            .per_group
            .iter()
            .map(|(g, v)| format!("{g}={v}"))
            .collect::<Vec<_>>()
            .join(";");
        [
            self.name.clone(),
            format!("{}", self.gap),
            groups,
            self.strata_skipped.join(";"),
        ]
    }
}

/// Exact gap computations over weighted observations.
pub mod exact {
    use super::*;

    /// One atom `(z, y, ŷ)` with non-negative weight.
    #[derive(Debug, Clone, PartialEq)]
    pub struct WeightedObs {
        pub group: GroupId,
        pub y: Q,
        pub yhat: Q,
        pub weight: Q,
    }

    #[derive(Debug, Clone, PartialEq)]
    pub struct ExactGap {
        pub gap: Q,
        pub per_group: BTreeMap<GroupId, Q>,
        pub skipped: Vec<String>,
    }

    type Strata = BTreeMap<Q, (Q, BTreeMap<Q, Q>)>;

    fn group_masses(obs: &[WeightedObs]) -> BTreeMap<GroupId, Q> {
        let mut m: BTreeMap<GroupId, Q> = BTreeMap::new();
        for o in obs {
            *m.entry(o.group).or_insert_with(Q::zero) += &o.weight;
        }
        m.retain(|_, w| !w.is_zero());
        m
    }

    fn groups_of(obs: &[WeightedObs]) -> Result<Vec<GroupId>, MetricError> {
        let g: Vec<GroupId> = group_masses(obs).into_keys().collect();
        if g.len() < 2 {
            return Err(MetricError::TooFewGroups(g.len()));
        }
        Ok(g)
    }

    /// For each group: stratum value -> (stratum mass, target value -> mass).
    fn strata<C, T>(obs: &[WeightedObs], cond: C, target: T) -> BTreeMap<GroupId, Strata>
    where
        C: Fn(&WeightedObs) -> Q,
        T: Fn(&WeightedObs) -> Q,
    {
        let mut out: BTreeMap<GroupId, Strata> = BTreeMap::new();
        for o in obs.iter().filter(|o| !o.weight.is_zero()) {
            let entry = out
                .entry(o.group)
                .or_default()
                .entry(cond(o))
                .or_insert_with(|| (Q::zero(), BTreeMap::new()));
            entry.0 += &o.weight;
            *entry.1.entry(target(o)).or_insert_with(Q::zero) += &o.weight;
        }
        out
    }

    fn prob(stratum: &(Q, BTreeMap<Q, Q>), t: &Q) -> Q {
        stratum.1.get(t).map_or_else(Q::zero, |m| m / &stratum.0)
    }

    /// Gap, per-group strata and the skipped strata.
    pub(crate) type GapParts = (Q, BTreeMap<GroupId, Strata>, Vec<String>);

    /// Max over group pairs, shared strata and target values of
    /// `|P[T = t | C = c, Z = z] - P[T = t | C = c, Z = z']|`.
    pub(crate) fn conditional_gap<C, T>(
        obs: &[WeightedObs],
        cond_name: &str,
        cond: C,
        target: T,
    ) -> Result<GapParts, MetricError>
    where
        C: Fn(&WeightedObs) -> Q,
        T: Fn(&WeightedObs) -> Q,
    {
        let groups = groups_of(obs)?;
        let table = strata(obs, cond, target);
        let all_strata: BTreeSet<&Q> = table.values().flat_map(|s| s.keys()).collect();
        let mut gap = Q::zero();
        let mut skipped = BTreeSet::new();
        for (i, za) in groups.iter().enumerate() {
            for zb in &groups[i + 1..] {
                let (sa, sb) = (&table[za], &table[zb]);
                for c in &all_strata {
                    match (sa.get(*c), sb.get(*c)) {
                        (Some(a), Some(b)) => {
                            let values: BTreeSet<&Q> = a.1.keys().chain(b.1.keys()).collect();
                            for t in values {
                                let d = (prob(a, t) - prob(b, t)).abs();
                                if d > gap {
                                    gap = d;
                                }
                            }
                        }
                        (Some(_), None) => {
                            skipped.insert(format!("{cond_name}={c} absent in group {zb}"));
                        }
                        (None, Some(_)) => {
                            skipped.insert(format!("{cond_name}={c} absent in group {za}"));
                        }
                        (None, None) => {}
                    }
                }
            }
        }
        Ok((gap, table, skipped.into_iter().collect()))
    }

    fn per_group_prob(table: &BTreeMap<GroupId, Strata>, c: &Q, t: &Q) -> BTreeMap<GroupId, Q> {
        table
            .iter()
            .filter_map(|(g, s)| s.get(c).map(|st| (*g, prob(st, t))))
            .collect()
    }

    pub fn statistical_parity(obs: &[WeightedObs]) -> Result<ExactGap, MetricError> {
        let (gap, table, skipped) = conditional_gap(obs, "all", |_| Q::zero(), |o| o.yhat.clone())?;
        Ok(ExactGap {
            gap,
            per_group: per_group_prob(&table, &Q::zero(), &Q::one()),
            skipped,
        })
    }

    pub fn equality_of_odds(obs: &[WeightedObs]) -> Result<ExactGap, MetricError> {
        let (gap, table, skipped) = conditional_gap(obs, "y", |o| o.y.clone(), |o| o.yhat.clone())?;
        Ok(ExactGap {
            gap,
            per_group: per_group_prob(&table, &Q::one(), &Q::one()),
            skipped,
        })
    }

    pub fn predictive_value_parity(obs: &[WeightedObs]) -> Result<ExactGap, MetricError> {
        let (gap, table, skipped) = conditional_gap(obs, "yhat", |o| o.yhat.clone(), |o| o.y.clone())?;
        Ok(ExactGap {
            gap,
            per_group: per_group_prob(&table, &Q::one(), &Q::one()),
            skipped,
        })
    }

    /// Gap between the per-group distributions of `(ŷ - y)²`.
    pub fn squared_error_distribution_parity(obs: &[WeightedObs]) -> Result<ExactGap, MetricError> {
        let sq = |o: &WeightedObs| {
            let e = &o.yhat - &o.y;
            &e * &e
        };
        let (gap, _, skipped) = conditional_gap(obs, "all", |_| Q::zero(), sq)?;
        Ok(ExactGap {
            gap,
            per_group: mean_squared_error(obs),
            skipped,
        })
    }

    fn mean_squared_error(obs: &[WeightedObs]) -> BTreeMap<GroupId, Q> {
        let masses = group_masses(obs);
        let mut sums: BTreeMap<GroupId, Q> = BTreeMap::new();
        for o in obs {
            let e = &o.yhat - &o.y;
            *sums.entry(o.group).or_insert_with(Q::zero) += &o.weight * &e * &e;
        }
        masses
            .iter()
            .map(|(g, m)| (*g, sums.get(g).cloned().unwrap_or_else(Q::zero) / m))
            .collect()
    }

    /// Max pairwise difference of `E[(ŷ - y)² | Z = z]`.
    pub fn accuracy_parity(obs: &[WeightedObs]) -> Result<ExactGap, MetricError> {
        groups_of(obs)?;
        let per_group = mean_squared_error(obs);
        let gap = spread(per_group.values());
        Ok(ExactGap {
            gap,
            per_group,
            skipped: Vec::new(),
        })
    }

    fn spread<'a>(vals: impl Iterator<Item = &'a Q>) -> Q {
        let v: Vec<&Q> = vals.collect();
        match (v.iter().min(), v.iter().max()) {
            (Some(lo), Some(hi)) => (*hi).clone() - (*lo).clone(),
            _ => Q::zero(),
        }
    }
}

use exact::WeightedObs;

fn check_len(a: usize, b: usize, what: &str) -> Result<(), MetricError> {
    if a != b {
        return Err(MetricError::LengthMismatch(format!("{what}: {a} vs {b}")));
    }
    Ok(())
}

fn bit(what: &'static str, index: usize, value: f64) -> Result<Q, MetricError> {
    if value == 0.0 || value == 1.0 {
        Ok(qi(value as i64))
    } else {
        Err(MetricError::NonBinary { what, index, value })
    }
}

fn unit_obs(y: Option<&[f64]>, yhat: &[f64], z: &[GroupId]) -> Result<Vec<WeightedObs>, MetricError> {
    check_len(yhat.len(), z.len(), "predictions vs groups")?;
    if let Some(y) = y {
        check_len(y.len(), yhat.len(), "labels vs predictions")?;
    }
    yhat.iter()
        .zip(z)
        .enumerate()
        .map(|(i, (&p, &g))| {
            Ok(WeightedObs {
                group: g,
                y: match y {
                    Some(y) => bit("label", i, y[i])?,
                    None => Q::zero(),
                },
                yhat: bit("prediction", i, p)?,
                weight: Q::one(),
            })
        })
        .collect()
}

/// Max over `ŷ` and group pairs of `|P̂[Ŷ=ŷ | z] - P̂[Ŷ=ŷ | z']|`. Per-group
/// value: positive prediction rate.
pub fn statistical_parity_gap(yhat: &[f64], z: &[GroupId]) -> Result<MetricReport, MetricError> {
    let obs = unit_obs(None, yhat, z)?;
    Ok(MetricReport::from_exact("statistical_parity", exact::statistical_parity(&obs)?))
}

/// Max over `(y, ŷ)` and group pairs of `|P̂[Ŷ=ŷ | Y=y, z] - P̂[Ŷ=ŷ | Y=y, z']|`.
/// Per-group value: true positive rate.
pub fn equality_of_odds_gap(y: &[f64], yhat: &[f64], z: &[GroupId]) -> Result<MetricReport, MetricError> {
    let obs = unit_obs(Some(y), yhat, z)?;
    Ok(MetricReport::from_exact("equality_of_odds", exact::equality_of_odds(&obs)?))
}

/// Max over `(ŷ, y)` and group pairs of `|P̂[Y=y | Ŷ=ŷ, z] - P̂[Y=y | Ŷ=ŷ, z']|`.
/// Per-group value: positive predictive value.
pub fn predictive_value_parity_gap(
    y: &[f64],
    yhat: &[f64],
    z: &[GroupId],
) -> Result<MetricReport, MetricError> {
    let obs = unit_obs(Some(y), yhat, z)?;
    Ok(MetricReport::from_exact(
        "predictive_value_parity",
        exact::predictive_value_parity(&obs)?,
    ))
}

fn per_group_mean<F>(z: &[GroupId], f: F) -> BTreeMap<GroupId, f64>
where
    F: Fn(usize) -> Option<f64>,
{
    let mut acc: BTreeMap<GroupId, (f64, usize)> = BTreeMap::new();
    for (i, g) in z.iter().enumerate() {
        let e = acc.entry(*g).or_insert((0.0, 0));
        if let Some(v) = f(i) {
            e.0 += v;
            e.1 += 1;
        }
    }
    acc.into_iter()
        .map(|(g, (s, n))| (g, if n == 0 { 0.0 } else { s / n as f64 }))
        .collect()
}

fn float_spread(per_group: &BTreeMap<GroupId, f64>) -> f64 {
    let lo = per_group.values().copied().fold(f64::INFINITY, f64::min);
    let hi = per_group.values().copied().fold(f64::NEG_INFINITY, f64::max);
    if per_group.len() < 2 {
        0.0
    } else {
        hi - lo
    }
}

fn require_groups(per_group: &BTreeMap<GroupId, f64>) -> Result<(), MetricError> {
    if per_group.len() < 2 {
        return Err(MetricError::TooFewGroups(per_group.len()));
    }
    Ok(())
}

/// Max pairwise difference of per-group mean squared error.
pub fn accuracy_parity_gap(y: &[f64], yhat: &[f64], z: &[GroupId]) -> Result<MetricReport, MetricError> {
    check_len(y.len(), yhat.len(), "labels vs predictions")?;
    check_len(yhat.len(), z.len(), "predictions vs groups")?;
    let per_group = per_group_mean(z, |i| Some((yhat[i] - y[i]).powi(2)));
    require_groups(&per_group)?;
    Ok(MetricReport::from_float("accuracy_parity", float_spread(&per_group), per_group))
}

/// Mean of `max(0, ŷ - y)` over the members with `ŷ - y >= 0`; zero when a
/// group has no such member.
fn mean_positive_residuals(y: &[f64], yhat: &[f64], z: &[GroupId]) -> BTreeMap<GroupId, f64> {
    per_group_mean(z, |i| {
        let r = yhat[i] - y[i];
        (r >= 0.0).then_some(r)
    })
}

/// Mean of `max(0, y - ŷ)` over the members with `ŷ - y < 0`.
fn mean_negative_residuals(y: &[f64], yhat: &[f64], z: &[GroupId]) -> BTreeMap<GroupId, f64> {
    per_group_mean(z, |i| {
        let r = y[i] - yhat[i];
        (r > 0.0).then_some(r)
    })
}

/// Absolute cross-group difference of mean positive residuals. With more
/// than two groups the largest pairwise difference is reported.
pub fn positive_residual_difference(
    y: &[f64],
    yhat: &[f64],
    z: &[GroupId],
) -> Result<MetricReport, MetricError> {
    check_len(y.len(), yhat.len(), "labels vs predictions")?;
    check_len(yhat.len(), z.len(), "predictions vs groups")?;
    let per_group = mean_positive_residuals(y, yhat, z);
    Ok(MetricReport::from_float(
        "positive_residual_difference",
        float_spread(&per_group),
        per_group,
    ))
}

pub fn negative_residual_difference(
    y: &[f64],
    yhat: &[f64],
    z: &[GroupId],
) -> Result<MetricReport, MetricError> {
    check_len(y.len(), yhat.len(), "labels vs predictions")?;
    check_len(yhat.len(), z.len(), "predictions vs groups")?;
    let per_group = mean_negative_residuals(y, yhat, z);
    Ok(MetricReport::from_float(
        "negative_residual_difference",
        float_spread(&per_group),
        per_group,
    ))
}

/// `|mean(ŷ | G1) - mean(ŷ | G0)|`, largest pairwise difference beyond two groups.
pub fn mean_difference(yhat: &[f64], z: &[GroupId]) -> Result<MetricReport, MetricError> {
    check_len(yhat.len(), z.len(), "predictions vs groups")?;
    let per_group = per_group_mean(z, |i| Some(yhat[i]));
    require_groups(&per_group)?;
    Ok(MetricReport::from_float("mean_difference", float_spread(&per_group), per_group))
}

/// `(1/n_z) Σ_{i: z_i = z} u(z, y_i, θ·x_i)` for every group.
pub fn group_average_utility(
    ds: &Dataset,
    model: &LinearModel,
    spec: &UtilitySpec,
) -> Result<BTreeMap<GroupId, f64>, MetricError> {
    let preds = model.predict_all(ds)?;
    group_average_utility_of_predictions(ds, &preds, spec)
}

pub fn group_average_utility_of_predictions(
    ds: &Dataset,
    preds: &[f64],
    spec: &UtilitySpec,
) -> Result<BTreeMap<GroupId, f64>, MetricError> {
    check_len(preds.len(), ds.len(), "predictions vs dataset")?;
    ds.group_index()
        .iter()
        .map(|(g, rows)| {
            let mut s = 0.0;
            for &r in rows {
                s += spec.evaluate(*g, ds.instances()[r].target, preds[r])?;
            }
            Ok((*g, s / rows.len() as f64))
        })
        .collect()
}

/// `F(h, T)`: the smallest group average utility.
pub fn min_group_average_utility(
    ds: &Dataset,
    model: &LinearModel,
    spec: &UtilitySpec,
) -> Result<f64, MetricError> {
    let per = group_average_utility(ds, model, spec)?;
    Ok(per.values().copied().fold(f64::INFINITY, f64::min))
}
