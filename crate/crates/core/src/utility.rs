//! Advantage utilities.
//!
//! An individual's advantage is the gap between the actual utility `a` they
//! receive after a prediction and the effort-based utility `d` they deserve:
//! `u = a - d`. Every utility used for training is affine in the prediction,
//!
//! ```text
//! u(z, y, ŷ) = α_z·ŷ·y + β_z·ŷ + γ_z·y + δ_z
//! ```
//!
//! so the expected utility of a group is affine in the weights of a linear
//! model.

use std::collections::BTreeMap;
use std::ops::{Add, Mul, Sub};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{dot, Dataset, GroupId};

#[derive(Debug, Error, PartialEq)]
pub enum UtilityError {
    #[error("utility spec has no coefficients for group {0}")]
    UnknownGroup(GroupId),
}

/// `a - d`.
pub fn advantage<T: Sub<Output = T>>(actual: T, effort_based: T) -> T {
    actual - effort_based
}

/// Benefit `b_{y,ŷ}` of receiving prediction `ŷ` with true label `y`, binary case.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenefitTable<T> {
    pub b00: T,
    pub b01: T,
    pub b10: T,
    pub b11: T,
}

impl<T> BenefitTable<T> {
    pub fn new(b00: T, b01: T, b10: T, b11: T) -> Self {
        BenefitTable { b00, b01, b10, b11 }
    }

    pub fn get(&self, y: bool, yhat: bool) -> &T {
        match (y, yhat) {
            (false, false) => &self.b00,
            (false, true) => &self.b01,
            (true, false) => &self.b10,
            (true, true) => &self.b11,
        }
    }
}

/// Per-label slopes and intercepts with `c_y·ŷ + d_y = b_{y,ŷ}` on `{0,1}²`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenefitCoefficients<T> {
    pub c0: T,
    pub c1: T,
    pub d0: T,
    pub d1: T,
}

impl<T> BenefitCoefficients<T>
where
    T: Clone + Add<Output = T> + Mul<Output = T>,
{
    /// `c_y·ŷ + d_y`.
    pub fn reconstruct(&self, y: bool, yhat: T) -> T {
        let (c, d) = if y {
            (&self.c1, &self.d1)
        } else {
            (&self.c0, &self.d0)
        };
        c.clone() * yhat + d.clone()
    }
}

/// Closed-form solution of the 4×4 system `c_y·ŷ + d_y = b_{y,ŷ}`.
pub fn coefficients_from_benefit_table<T>(table: &BenefitTable<T>) -> BenefitCoefficients<T>
where
    T: Clone + Sub<Output = T>,
{
    BenefitCoefficients {
        c0: table.b01.clone() - table.b00.clone(),
        c1: table.b11.clone() - table.b10.clone(),
        d0: table.b00.clone(),
        d1: table.b10.clone(),
    }
}

/// Coefficients of `α·ŷ·y + β·ŷ + γ·y + δ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffineUtility {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub delta: f64,
}

impl AffineUtility {
    pub const ZERO: AffineUtility = AffineUtility {
        alpha: 0.0,
        beta: 0.0,
        gamma: 0.0,
        delta: 0.0,
    };

    pub fn new(alpha: f64, beta: f64, gamma: f64, delta: f64) -> Self {
        AffineUtility {
            alpha,
            beta,
            gamma,
            delta,
        }
    }

    pub fn eval(&self, y: f64, yhat: f64) -> f64 {
        self.alpha * yhat * y + self.beta * yhat + self.gamma * y + self.delta
    }

    /// Slope in `ŷ` for a fixed label.
    pub fn slope(&self, y: f64) -> f64 {
        self.alpha * y + self.beta
    }

    pub fn scaled(&self, s: f64) -> Self {
        AffineUtility::new(self.alpha * s, self.beta * s, self.gamma * s, self.delta * s)
    }

    /// Expands `c_y·ŷ + d_y` with `c_y = c0 + (c1-c0)y`, `d_y = d0 + (d1-d0)y`.
    pub fn from_benefit_coefficients(c: &BenefitCoefficients<f64>) -> Self {
        AffineUtility::new(c.c1 - c.c0, c.c0, c.d1 - c.d0, c.d0)
    }
}

/// Group-wise utility `u(z, y, ŷ)`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct UtilitySpec {
    groups: BTreeMap<GroupId, AffineUtility>,
    tables: BTreeMap<GroupId, BenefitTable<f64>>,
}

impl UtilitySpec {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_group(mut self, z: impl Into<GroupId>, u: AffineUtility) -> Self {
        let z = z.into();
        self.tables.remove(&z);
        self.groups.insert(z, u);
        self
    }

    /// Group utility given by a binary benefit table. Evaluating at
    /// `(y, ŷ) ∈ {0,1}²` returns the table entry itself.
    pub fn with_benefit_table(mut self, z: impl Into<GroupId>, table: BenefitTable<f64>) -> Self {
        let z = z.into();
        let coeffs = coefficients_from_benefit_table(&table);
        self.groups.insert(z, AffineUtility::from_benefit_coefficients(&coeffs));
        self.tables.insert(z, table);
        self
    }

    /// Constant utility `κ` for every listed group.
    pub fn constant(groups: &[GroupId], kappa: f64) -> Self {
        groups.iter().fold(UtilitySpec::new(), |s, g| {
            s.with_group(*g, AffineUtility::new(0.0, 0.0, 0.0, kappa))
        })
    }

    /// Crime-experiment utilities. Group 0 (majority Caucasian):
    /// `(1 + 0.5ŷy) - 0.5ŷ`. Group 1 (minority Caucasian): `(1 + 3ŷy + 2ŷ) - y`.
    pub fn crime() -> Self {
        UtilitySpec::new()
            .with_group(GroupId(0), AffineUtility::new(0.5, -0.5, 0.0, 1.0))
            .with_group(GroupId(1), AffineUtility::new(3.0, 2.0, -1.0, 1.0))
    }

    pub fn group(&self, z: GroupId) -> Result<&AffineUtility, UtilityError> {
        self.groups.get(&z).ok_or(UtilityError::UnknownGroup(z))
    }

    pub fn groups(&self) -> impl Iterator<Item = (&GroupId, &AffineUtility)> {
        self.groups.iter()
    }

    pub fn covers(&self, groups: &[GroupId]) -> Result<(), UtilityError> {
        groups.iter().try_for_each(|g| self.group(*g).map(|_| ()))
    }

    /// Every coefficient multiplied by `s`.
    pub fn scaled(&self, s: f64) -> Self {
        UtilitySpec {
            groups: self.groups.iter().map(|(g, u)| (*g, u.scaled(s))).collect(),
            tables: self
                .tables
                .iter()
                .map(|(g, t)| (*g, BenefitTable::new(t.b00 * s, t.b01 * s, t.b10 * s, t.b11 * s)))
                .collect(),
        }
    }

    pub fn evaluate(&self, z: GroupId, y: f64, yhat: f64) -> Result<f64, UtilityError> {
        let u = self.group(z)?;
        if let Some(t) = self.tables.get(&z) {
            if let (Some(yb), Some(pb)) = (as_bit(y), as_bit(yhat)) {
                return Ok(*t.get(yb, pb));
            }
        }
        Ok(u.eval(y, yhat))
    }

    /// Average utility of group `z` as an affine function of the weights:
    /// `g_z(θ) = slope·θ + offset`.
    pub fn group_affine_form(&self, ds: &Dataset, z: GroupId) -> Result<GroupAffine, UtilityError> {
        let u = self.group(z)?;
        let rows = ds.group_index().get(&z).map(Vec::as_slice).unwrap_or(&[]);
        let mut slope = vec![0.0; ds.k()];
        let mut offset = 0.0;
        let n = rows.len().max(1) as f64;
        for &r in rows {
            let inst = &ds.instances()[r];
            let s = u.slope(inst.target);
            for (acc, x) in slope.iter_mut().zip(&inst.features) {
                *acc += s * x;
            }
            offset += u.gamma * inst.target + u.delta;
        }
        slope.iter_mut().for_each(|v| *v /= n);
        Ok(GroupAffine {
            group: z,
            slope,
            offset: offset / n,
        })
    }
}

/// `g(θ) = slope·θ + offset`.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupAffine {
    pub group: GroupId,
    pub slope: Vec<f64>,
    pub offset: f64,
}

impl GroupAffine {
    pub fn eval(&self, theta: &[f64]) -> f64 {
        dot(&self.slope, theta) + self.offset
    }
}

/// `u(z, y, ŷ)` under `spec`.
pub fn evaluate_utility(spec: &UtilitySpec, z: GroupId, y: f64, yhat: f64) -> Result<f64, UtilityError> {
    spec.evaluate(z, y, yhat)
}

fn as_bit(v: f64) -> Option<bool> {
    if v == 0.0 {
        Some(false)
    } else if v == 1.0 {
        Some(true)
    } else {
        None
    }
}
