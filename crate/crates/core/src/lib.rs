//! Fairness analysis through the lens of equality of opportunity (EOP).
//!
//! The crate bundles four layers that build on each other:
//!
//! * [`domain`] and [`utility`]: datasets, linear models and the affine
//!   advantage utilities `u = a - d` shared by everything else.
//! * [`metrics`]: empirical group-fairness gaps (statistical parity, equality
//!   of odds, accuracy parity, predictive value parity, residual differences)
//!   and the worst-off-group average utility `F(h, T)`.
//! * [`eop`]: exact Rawlsian and luck-egalitarian EOP checkers over finite
//!   rational distributions, plus executable verifiers for the equivalences
//!   between the classical metrics and EOP.
//! * [`solver`] and [`experiments`]: the max-min group utility training
//!   problem, the residual-bound baseline, and the cross-validated epsilon
//!   sweep on the Communities & Crime data ([`data`]).
//!
//! [`tradeoffs`] brute-forces the optimal predictors for several fairness
//! criteria over small finite hypothesis classes.
//!
//! ```
//! use eopfair::utility::{advantage, coefficients_from_benefit_table, BenefitTable};
//!
//! assert_eq!(advantage(0.25, 0.75), -0.5);
//! let c = coefficients_from_benefit_table(&BenefitTable::new(2.0, 5.0, 1.0, 4.0));
//! assert_eq!((c.c0, c.c1, c.d0, c.d1), (3.0, 3.0, 2.0, 1.0));
//! ```

pub mod data;
pub mod domain;
pub mod eop;
pub mod experiments;
pub mod metrics;
pub mod rational;
pub mod solver;
pub mod tradeoffs;
pub mod utility;

pub use domain::{Dataset, DomainError, GroupId, Instance, LinearModel, TaskMode};
pub use rational::Q;
pub use utility::UtilitySpec;
