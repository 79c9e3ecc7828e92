//! Max-min group utility training under an L1-regularized loss budget.
//!
//! Every solver here reduces to one primitive, the support problem
//!
//! ```text
//! h(c) = max c·θ   s.t.   q(θ) = (1/n)‖Xθ - y‖² + λ‖θ‖₁ ≤ ε
//! ```
//!
//! For a multiplier `t ≥ 0` the penalized problem `min q(θ) - t·c·θ` is a
//! lasso with an extra linear term, solved by coordinate descent on the Gram
//! matrix and polished on its active set. A regula falsi search on `t`
//! drives `q(θ(t))` to `ε` from the feasible side; every `θ(t)` also yields
//! the upper bound `h(c) ≤ c·θ(t) + (ε - q(θ(t)))/t`.
//!
//! The group problem `max_θ min_z g_z(θ)` with affine `g_z(θ) = c_z·θ + e_z`
//! is, by minimax duality over the compact feasible set,
//! `min_{w ∈ Δ} h(Σ w_z c_z) + Σ w_z e_z`, a convex problem on the simplex
//! whose gradient is `g(θ(w))`. Two groups are handled by bisection on the
//! gradient difference; more groups by exponentiated gradient.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{dot, Dataset, DomainError, LinearModel};
use crate::utility::{GroupAffine, UtilityError, UtilitySpec};

#[derive(Debug, Error, PartialEq)]
pub enum SolverError {
    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),
    #[error("lambda grid is empty")]
    EmptyGrid,
    #[error("{n} instances cannot be split into {folds} folds")]
    TooFewInstances { n: usize, folds: usize },
    #[error("objective is unbounded: feature {0} has no variation and is not penalized enough")]
    Unbounded(usize),
    #[error(transparent)]
    Utility(#[from] UtilityError),
    #[error(transparent)]
    Domain(#[from] DomainError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub epsilon: f64,
    pub lambda: f64,
    pub tolerance_feasibility: f64,
    pub tolerance_optimality: f64,
    pub max_iterations: usize,
    /// Multiplier search range `(t_min, t_max)` for the support problem.
    pub dual_bracket: (f64, f64),
}

impl SolverConfig {
    pub fn new(epsilon: f64, lambda: f64) -> Self {
        SolverConfig {
            epsilon,
            lambda,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), SolverError> {
        let bad = |m: &str| Err(SolverError::InvalidConfig(m.to_string()));
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return bad("epsilon must be finite and >= 0");
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad("lambda must be finite and >= 0");
        }
        if !(self.tolerance_feasibility > 0.0 && self.tolerance_optimality > 0.0) {
            return bad("tolerances must be > 0");
        }
        if self.max_iterations == 0 {
            return bad("max_iterations must be positive");
        }
        let (lo, hi) = self.dual_bracket;
        if !(lo > 0.0 && hi > lo) {
            return bad("dual bracket must satisfy 0 < t_min < t_max");
        }
        Ok(())
    }
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            epsilon: 0.0,
            lambda: 0.0,
            tolerance_feasibility: 1e-8,
            tolerance_optimality: 1e-6,
            max_iterations: 50_000,
            dual_bracket: (1e-12, 1e12),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Optimal,
    Infeasible,
    MaxIterations,
}

impl Status {
    pub fn as_str(&self) -> &'static str {
        match self {
            Status::Optimal => "optimal",
            Status::Infeasible => "infeasible",
            Status::MaxIterations => "max_iterations",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverResult {
    pub weights: Vec<f64>,
    /// Objective at `weights`: the smallest group average utility for the
    /// EOP problem, the mean residual for the baseline.
    pub sigma: f64,
    /// Upper bound on the optimal objective.
    pub dual_bound: f64,
    /// `MSE + λ‖θ‖₁` at `weights`.
    pub loss: f64,
    pub mse: f64,
    pub feasibility_residual: f64,
    pub iterations: usize,
    pub status: Status,
    pub epsilon: f64,
    pub lambda: f64,
    /// Smallest feasible ε for this λ.
    pub epsilon_min: f64,
}

impl SolverResult {
    pub fn model(&self) -> LinearModel {
        LinearModel::new(self.weights.clone())
    }

    pub fn duality_gap(&self) -> f64 {
        self.dual_bound - self.sigma
    }

    pub fn record_header() -> [&'static str; 6] {
        ["epsilon", "lambda", "sigma", "loss", "status", "iterations"]
    }

    pub fn to_record(&self) -> [String; 6] {
        [
            self.epsilon.to_string(),
            self.lambda.to_string(),
            self.sigma.to_string(),
            self.loss.to_string(),
            self.status.as_str().to_string(),
            self.iterations.to_string(),
        ]
    }
}

/// `(1/n)‖Xθ - y‖²` computed from residuals.
pub fn mse(ds: &Dataset, theta: &[f64]) -> f64 {
    let n = ds.len() as f64;
    ds.instances()
        .iter()
        .map(|i| (dot(theta, &i.features) - i.target).powi(2))
        .sum::<f64>()
        / n
}

/// `MSE + λ‖θ‖₁` computed from residuals.
pub fn regularized_loss(ds: &Dataset, theta: &[f64], lambda: f64) -> f64 {
    mse(ds, theta) + lambda * l1(theta)
}

fn l1(theta: &[f64]) -> f64 {
    theta.iter().map(|v| v.abs()).sum()
}

fn soft(x: f64, a: f64) -> f64 {
    if x > a {
        x - a
    } else if x < -a {
        x + a
    } else {
        0.0
    }
}

/// Sufficient statistics of the regularized squared loss.
#[derive(Debug, Clone)]
pub struct LossModel {
    gram: DMatrix<f64>,
    xty: DVector<f64>,
    yy: f64,
    lambda: f64,
}

impl LossModel {
    pub fn new(ds: &Dataset, lambda: f64) -> Self {
        let (n, k) = (ds.len(), ds.k());
        let x = DMatrix::from_fn(n, k, |i, j| ds.instances()[i].features[j]);
        let y = DVector::from_iterator(n, ds.instances().iter().map(|i| i.target));
        let nf = n as f64;
        LossModel {
            gram: x.tr_mul(&x) / nf,
            xty: x.tr_mul(&y) / nf,
            yy: y.dot(&y) / nf,
            lambda,
        }
    }

    pub fn k(&self) -> usize {
        self.xty.len()
    }

    /// `θᵀGθ - 2bᵀθ + yᵀy/n + λ‖θ‖₁`.
    pub fn q(&self, theta: &DVector<f64>) -> f64 {
        let gt = &self.gram * theta;
        (theta.dot(&gt) - 2.0 * self.xty.dot(theta) + self.yy).max(0.0) + self.lambda * theta.lp_norm(1)
    }

    /// `argmin q(θ) - lin·θ`, warm-started from `theta`. Returns sweeps used.
    fn minimize(&self, lin: &DVector<f64>, theta: &mut DVector<f64>) -> Result<usize, SolverError> {
        let k = self.k();
        let lam = self.lambda;
        let r: DVector<f64> = 2.0 * &self.xty + lin;
        for j in 0..k {
            if self.gram[(j, j)] <= 0.0 {
                if r[j].abs() > lam {
                    return Err(SolverError::Unbounded(j));
                }
                theta[j] = 0.0;
            }
        }
        let mut gt = &self.gram * &*theta;
        let scale = 1.0 + r.amax();
        let mut sweeps = 0;
        let mut tol = 1e-9;
        loop {
            let mut max_change: f64 = 0.0;
            for j in 0..k {
                let gjj = self.gram[(j, j)];
                if gjj <= 0.0 {
                    continue;
                }
                let old = theta[j];
                let z = 2.0 * gjj * old - (2.0 * gt[j] - r[j]);
                let new = soft(z, lam) / (2.0 * gjj);
                if new != old {
                    let delta = new - old;
                    gt.axpy(delta, &self.gram.column(j), 1.0);
                    theta[j] = new;
                    max_change = max_change.max(delta.abs() * gjj.sqrt());
                }
            }
            sweeps += 1;
            if max_change <= tol * scale || sweeps >= 20_000 {
                if self.polish(&r, theta) || sweeps >= 20_000 || tol <= 1e-14 {
                    return Ok(sweeps);
                }
                gt = &self.gram * &*theta;
                tol *= 1e-2;
            }
        }
    }

    /// Exact solve of the stationarity equations on the current active set.
    /// Accepts the result only if it keeps the signs and satisfies the
    /// optimality conditions off the active set.
    fn polish(&self, r: &DVector<f64>, theta: &mut DVector<f64>) -> bool {
        let lam = self.lambda;
        let active: Vec<usize> = (0..self.k()).filter(|&j| theta[j] != 0.0).collect();
        let mut cand = DVector::zeros(self.k());
        if !active.is_empty() {
            let m = active.len();
            let ga = DMatrix::from_fn(m, m, |a, b| 2.0 * self.gram[(active[a], active[b])]);
            let rhs = DVector::from_fn(m, |a, _| {
                let j = active[a];
                r[j] - lam * theta[j].signum()
            });
            let Some(chol) = ga.cholesky() else {
                return false;
            };
            let sol = chol.solve(&rhs);
            for (a, &j) in active.iter().enumerate() {
                if sol[a].signum() != theta[j].signum() || sol[a] == 0.0 {
                    return false;
                }
                cand[j] = sol[a];
            }
        }
        let grad = 2.0 * (&self.gram * &cand) - r;
        let slack = 1e-9 * (1.0 + r.amax());
        for j in 0..self.k() {
            if cand[j] == 0.0 && grad[j].abs() > lam + slack {
                return false;
            }
        }
        *theta = cand;
        true
    }

    /// Lasso minimizer and `ε_min(λ)`.
    pub fn lasso(&self) -> Result<(DVector<f64>, f64), SolverError> {
        let mut theta = DVector::zeros(self.k());
        self.minimize(&DVector::zeros(self.k()), &mut theta)?;
        let v = self.q(&theta);
        Ok((theta, v))
    }
}

/// Solution of the support problem for one direction `c`.
#[derive(Debug, Clone)]
pub struct SupportSolution {
    pub theta: DVector<f64>,
    pub value: f64,
    pub upper_bound: f64,
    pub q: f64,
    pub multiplier: f64,
    pub iterations: usize,
}

/// Maximizes `c·θ` over `{q(θ) ≤ ε}`, with `q` described by `model`.
#[derive(Debug, Clone)]
pub struct SupportSolver<'a> {
    model: &'a LossModel,
    epsilon: f64,
    anchor: DVector<f64>,
    epsilon_min: f64,
    config: &'a SolverConfig,
}

impl<'a> SupportSolver<'a> {
    /// `None` when ε is below the smallest feasible value by more than the
    /// feasibility tolerance.
    pub fn new(model: &'a LossModel, config: &'a SolverConfig) -> Result<(Option<Self>, f64), SolverError> {
        let (anchor, epsilon_min) = model.lasso()?;
        if config.epsilon < epsilon_min - config.tolerance_feasibility {
            return Ok((None, epsilon_min));
        }
        let s = SupportSolver {
            model,
            epsilon: config.epsilon,
            anchor,
            epsilon_min,
            config,
        };
        Ok((Some(s), epsilon_min))
    }

    pub fn anchor(&self) -> &DVector<f64> {
        &self.anchor
    }

    pub fn epsilon_min(&self) -> f64 {
        self.epsilon_min
    }

    fn point(&self, c: &DVector<f64>, t: f64, warm: &mut DVector<f64>) -> Result<(f64, usize), SolverError> {
        let sweeps = self.model.minimize(&(c * t), warm)?;
        Ok((self.model.q(warm), sweeps))
    }

    /// `t_guess` warm-starts the multiplier search.
    pub fn solve(&self, c: &DVector<f64>, t_guess: Option<f64>) -> Result<SupportSolution, SolverError> {
        let eps = self.epsilon;
        let (t_min, t_max) = self.config.dual_bracket;
        let tol_gap = 1e-3 * self.config.tolerance_optimality;
        let value_of = |th: &DVector<f64>| c.dot(th);
        let mut iterations = 0;

        let q0 = self.model.q(&self.anchor);
        if c.amax() == 0.0 || q0 >= eps {
            // Singleton (or direction-free) feasible set: the anchor.
            let mut bound = value_of(&self.anchor);
            if c.amax() > 0.0 {
                let t = t_min.max(1e-6);
                let mut th = self.anchor.clone();
                let (qt, s) = self.point(c, t, &mut th)?;
                iterations += s;
                bound = bound.max(value_of(&th) + (eps - qt) / t);
            }
            return Ok(SupportSolution {
                value: value_of(&self.anchor),
                theta: self.anchor.clone(),
                upper_bound: bound,
                q: q0,
                multiplier: 0.0,
                iterations,
            });
        }

        let mut lo = (0.0, self.anchor.clone(), q0);
        let mut bound = f64::INFINITY;
        let mut t = t_guess.unwrap_or(1.0).clamp(t_min, t_max);
        let mut th = self.anchor.clone();
        let mut hi;
        loop {
            let (qt, s) = self.point(c, t, &mut th)?;
            iterations += s;
            bound = bound.min(value_of(&th) + (eps - qt) / t);
            if qt >= eps {
                hi = (t, th.clone(), qt);
                break;
            }
            lo = (t, th.clone(), qt);
            if t >= t_max {
                // Budget never binds within the bracket.
                return Ok(SupportSolution {
                    value: value_of(&lo.1),
                    theta: lo.1,
                    upper_bound: bound,
                    q: lo.2,
                    multiplier: t,
                    iterations,
                });
            }
            t = (t * 4.0).min(t_max);
        }
        if lo.0 == 0.0 && t > t_min {
            // Tighten the lower end so the secant starts from a sensible bracket.
            let mut tt = t / 4.0;
            while tt > t_min {
                let mut th2 = hi.1.clone();
                let (qt, s) = self.point(c, tt, &mut th2)?;
                iterations += s;
                bound = bound.min(value_of(&th2) + (eps - qt) / tt);
                if qt < eps {
                    lo = (tt, th2, qt);
                    break;
                }
                hi = (tt, th2, qt);
                tt /= 4.0;
            }
        }

        // Illinois regula falsi on f(t) = q(θ(t)) - ε.
        let (mut f_lo, mut f_hi) = (lo.2 - eps, hi.2 - eps);
        let mut side = 0i8;
        for _ in 0..200 {
            let gap = bound - value_of(&lo.1);
            if gap <= tol_gap || hi.0 - lo.0 <= 1e-15 * hi.0 {
                break;
            }
            let mut tn = (lo.0 * f_hi - hi.0 * f_lo) / (f_hi - f_lo);
            if !(tn > lo.0 && tn < hi.0) {
                tn = 0.5 * (lo.0 + hi.0);
            }
            let mut thn = lo.1.clone();
            let (qn, s) = self.point(c, tn, &mut thn)?;
            iterations += s;
            bound = bound.min(value_of(&thn) + (eps - qn) / tn);
            let fn_ = qn - eps;
            if fn_ >= 0.0 {
                hi = (tn, thn, qn);
                f_hi = fn_;
                if side == 1 {
                    f_lo *= 0.5;
                }
                side = 1;
            } else {
                lo = (tn, thn, qn);
                f_lo = fn_;
                if side == -1 {
                    f_hi *= 0.5;
                }
                side = -1;
            }
        }

        // Mix the bracket ends so the loss budget is used exactly; by
        // convexity the mixture stays feasible and c·θ only improves.
        let (theta, q) = if hi.2 > lo.2 {
            let a = (hi.2 - eps) / (hi.2 - lo.2);
            let mix = &lo.1 * a + &hi.1 * (1.0 - a);
            let qm = self.model.q(&mix);
            if qm <= eps && value_of(&mix) >= value_of(&lo.1) {
                (mix, qm)
            } else {
                (lo.1.clone(), lo.2)
            }
        } else {
            (lo.1.clone(), lo.2)
        };
        let value = value_of(&theta);
        Ok(SupportSolution {
            theta,
            value,
            upper_bound: bound.max(value),
            q,
            multiplier: lo.0.max(hi.0.min(lo.0 * 2.0)),
            iterations,
        })
    }
}

/// Minimizes `(1/n)Σ(θ·x_i - y_i)² + λ‖θ‖₁`. Returns the minimizer and the
/// minimum value `ε_min(λ)`.
pub fn fit_l1_regularized(ds: &Dataset, lambda: f64) -> Result<(LinearModel, f64), SolverError> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(SolverError::InvalidConfig("lambda must be finite and >= 0".into()));
    }
    let model = LossModel::new(ds, lambda);
    let (theta, _) = model.lasso()?;
    let w: Vec<f64> = theta.iter().copied().collect();
    let v = regularized_loss(ds, &w, lambda);
    Ok((LinearModel::new(w), v))
}

/// Geometric grid `lo·(hi/lo)^(i/(n-1))`.
pub fn geometric_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n)
            .map(|i| lo * (hi / lo).powf(i as f64 / (n - 1) as f64))
            .collect(),
    }
}

/// Default λ candidates: 13 points from 1e-5 to 1e-1.
pub fn default_lambda_grid() -> Vec<f64> {
    geometric_grid(1e-5, 1e-1, 13)
}

/// Seeded split of `0..n` into `folds` nearly equal parts.
pub fn kfold_indices(n: usize, folds: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut out = vec![Vec::new(); folds];
    for (i, r) in idx.into_iter().enumerate() {
        out[i % folds].push(r);
    }
    out
}

/// Complement of `held` in `0..n`, ascending.
pub(crate) fn complement(n: usize, held: &[usize]) -> Vec<usize> {
    let mut mask = vec![true; n];
    for &h in held {
        mask[h] = false;
    }
    (0..n).filter(|&i| mask[i]).collect()
}

/// λ with the smallest mean held-out MSE over a seeded `folds`-way split;
/// ties go to the smaller λ.
pub fn select_lambda(ds: &Dataset, grid: &[f64], folds: usize, seed: u64) -> Result<f64, SolverError> {
    if grid.is_empty() {
        return Err(SolverError::EmptyGrid);
    }
    if folds < 2 || ds.len() < folds {
        return Err(SolverError::TooFewInstances { n: ds.len(), folds });
    }
    let parts = kfold_indices(ds.len(), folds, seed);
    let splits: Vec<(Dataset, Dataset)> = parts
        .iter()
        .map(|held| Ok((ds.subset(&complement(ds.len(), held))?, ds.subset(held)?)))
        .collect::<Result<_, DomainError>>()?;
    let scores: Vec<f64> = grid
        .par_iter()
        .map(|&lam| {
            let mut total = 0.0;
            for (train, test) in &splits {
                let (m, _) = fit_l1_regularized(train, lam)?;
                total += mse(test, &m.weights);
            }
            Ok(total / folds as f64)
        })
        .collect::<Result<_, SolverError>>()?;
    let mut best = 0;
    for i in 1..grid.len() {
        let better = scores[i] < scores[best] || (scores[i] == scores[best] && grid[i] < grid[best]);
        if better {
            best = i;
        }
    }
    Ok(grid[best])
}

fn finish(
    ds: &Dataset,
    config: &SolverConfig,
    theta: &DVector<f64>,
    sigma: f64,
    bound: f64,
    iterations: usize,
    epsilon_min: f64,
) -> SolverResult {
    let w: Vec<f64> = theta.iter().copied().collect();
    let m = mse(ds, &w);
    let loss = m + config.lambda * l1(&w);
    let gap = bound - sigma;
    let status = if gap <= config.tolerance_optimality {
        Status::Optimal
    } else {
        Status::MaxIterations
    };
    SolverResult {
        weights: w,
        sigma,
        dual_bound: bound,
        loss,
        mse: m,
        feasibility_residual: (loss - config.epsilon).max(0.0),
        iterations,
        status,
        epsilon: config.epsilon,
        lambda: config.lambda,
        epsilon_min,
    }
}

fn infeasible(ds: &Dataset, config: &SolverConfig, epsilon_min: f64) -> SolverResult {
    SolverResult {
        weights: vec![0.0; ds.k()],
        sigma: f64::NAN,
        dual_bound: f64::NAN,
        loss: f64::NAN,
        mse: f64::NAN,
        feasibility_residual: epsilon_min - config.epsilon,
        iterations: 0,
        status: Status::Infeasible,
        epsilon: config.epsilon,
        lambda: config.lambda,
        epsilon_min,
    }
}

/// Maximizes `(1/n)Σ(θ·x_i - y_i)` under the loss budget. The objective is
/// reported in [`SolverResult::sigma`].
pub fn solve_baseline(ds: &Dataset, config: &SolverConfig) -> Result<SolverResult, SolverError> {
    config.validate()?;
    let model = LossModel::new(ds, config.lambda);
    let (solver, eps_min) = SupportSolver::new(&model, config)?;
    let Some(solver) = solver else {
        return Ok(infeasible(ds, config, eps_min));
    };
    let n = ds.len() as f64;
    let mut c = DVector::zeros(ds.k());
    let mut ybar = 0.0;
    for inst in ds.instances() {
        for (acc, x) in c.iter_mut().zip(&inst.features) {
            *acc += x / n;
        }
        ybar += inst.target / n;
    }
    let s = solver.solve(&c, None)?;
    Ok(finish(
        ds,
        config,
        &s.theta,
        s.value - ybar,
        s.upper_bound - ybar,
        s.iterations,
        eps_min,
    ))
}

struct GroupForms {
    slopes: Vec<DVector<f64>>,
    offsets: Vec<f64>,
}

impl GroupForms {
    fn new(forms: &[GroupAffine]) -> Self {
        GroupForms {
            slopes: forms.iter().map(|f| DVector::from_vec(f.slope.clone())).collect(),
            offsets: forms.iter().map(|f| f.offset).collect(),
        }
    }

    fn values(&self, theta: &DVector<f64>) -> Vec<f64> {
        self.slopes
            .iter()
            .zip(&self.offsets)
            .map(|(c, e)| c.dot(theta) + e)
            .collect()
    }

    fn min_value(&self, theta: &DVector<f64>) -> f64 {
        self.values(theta).into_iter().fold(f64::INFINITY, f64::min)
    }

    fn direction(&self, w: &[f64]) -> (DVector<f64>, f64) {
        let mut c = DVector::zeros(self.slopes[0].len());
        let mut e = 0.0;
        for ((s, off), wz) in self.slopes.iter().zip(&self.offsets).zip(w) {
            c.axpy(*wz, s, 1.0);
            e += wz * off;
        }
        (c, e)
    }
}

/// Maximizes the smallest group average utility `σ` subject to
/// `(1/n)Σ(θ·x_i - y_i)² + λ‖θ‖₁ ≤ ε`.
pub fn solve_eop_training(ds: &Dataset, spec: &UtilitySpec, config: &SolverConfig) -> Result<SolverResult, SolverError> {
    config.validate()?;
    let groups = ds.groups();
    spec.covers(&groups)?;
    let forms: Vec<GroupAffine> = groups
        .iter()
        .map(|g| spec.group_affine_form(ds, *g))
        .collect::<Result<_, _>>()?;
    let forms = GroupForms::new(&forms);
    let model = LossModel::new(ds, config.lambda);
    let (solver, eps_min) = SupportSolver::new(&model, config)?;
    let Some(solver) = solver else {
        return Ok(infeasible(ds, config, eps_min));
    };
    let (theta, sigma, bound, iters) = match groups.len() {
        1 => {
            let s = solver.solve(&forms.slopes[0], None)?;
            (s.theta, s.value + forms.offsets[0], s.upper_bound + forms.offsets[0], s.iterations)
        }
        2 => two_groups(&solver, &forms, config)?,
        _ => many_groups(&solver, &forms, config)?,
    };
    Ok(finish(ds, config, &theta, sigma, bound, iters, eps_min))
}

/// Bisection on `φ(w) = g_1(θ(w)) - g_0(θ(w))`, the derivative of the dual
/// along the segment between the two group directions.
fn two_groups(
    solver: &SupportSolver,
    forms: &GroupForms,
    config: &SolverConfig,
) -> Result<(DVector<f64>, f64, f64, usize), SolverError> {
    let mut iterations = 0;
    let mut t_guess = None;
    let mut upper = f64::INFINITY;
    let mut eval = |w: f64, t_guess: &mut Option<f64>, upper: &mut f64| -> Result<(DVector<f64>, f64), SolverError> {
        let (c, e) = forms.direction(&[1.0 - w, w]);
        let s = solver.solve(&c, *t_guess)?;
        if s.multiplier > 0.0 {
            *t_guess = Some(s.multiplier);
        }
        iterations += s.iterations;
        *upper = upper.min(s.upper_bound + e);
        let g = forms.values(&s.theta);
        Ok((s.theta, g[1] - g[0]))
    };

    let (th0, phi0) = eval(0.0, &mut t_guess, &mut upper)?;
    let (th1, phi1) = eval(1.0, &mut t_guess, &mut upper)?;
    let mut best = (th0.clone(), forms.min_value(&th0));
    let v1 = forms.min_value(&th1);
    if v1 > best.1 {
        best = (th1.clone(), v1);
    }
    if phi0 >= 0.0 || phi1 <= 0.0 {
        return Ok((best.0, best.1, upper_of(upper, best.1), iterations));
    }
    let (mut wl, mut tl, mut pl) = (0.0, th0, phi0);
    let (mut wr, mut tr, mut pr) = (1.0, th1, phi1);
    for _ in 0..config.max_iterations.min(200) {
        // Mixture with equal group values.
        let a = pr / (pr - pl);
        let mix = &tl * a + &tr * (1.0 - a);
        let v = forms.min_value(&mix);
        if v > best.1 {
            best = (mix, v);
        }
        if upper - best.1 <= config.tolerance_optimality * 1e-2 || wr - wl <= 1e-14 {
            break;
        }
        let wm = 0.5 * (wl + wr);
        let (tm, pm) = eval(wm, &mut t_guess, &mut upper)?;
        let v = forms.min_value(&tm);
        if v > best.1 {
            best = (tm.clone(), v);
        }
        if pm == 0.0 {
            break;
        } else if pm < 0.0 {
            (wl, tl, pl) = (wm, tm, pm);
        } else {
            (wr, tr, pr) = (wm, tm, pm);
        }
    }
    Ok((best.0.clone(), best.1, upper_of(upper, best.1), iterations))
}

fn upper_of(upper: f64, primal: f64) -> f64 {
    upper.max(primal)
}

/// Exponentiated-gradient descent on the dual over the simplex, with the
/// running average of the support points as the primal iterate.
fn many_groups(
    solver: &SupportSolver,
    forms: &GroupForms,
    config: &SolverConfig,
) -> Result<(DVector<f64>, f64, f64, usize), SolverError> {
    let m = forms.slopes.len();
    let mut w = vec![1.0 / m as f64; m];
    let mut iterations = 0;
    let mut upper = f64::INFINITY;
    let mut avg = DVector::zeros(forms.slopes[0].len());
    let mut best = (solver.anchor().clone(), forms.min_value(solver.anchor()));
    let mut t_guess = None;
    let scale = forms
        .slopes
        .iter()
        .map(|s| s.norm())
        .fold(1.0, f64::max);
    for it in 1..=config.max_iterations.min(5_000) {
        let (c, e) = forms.direction(&w);
        let s = solver.solve(&c, t_guess)?;
        if s.multiplier > 0.0 {
            t_guess = Some(s.multiplier);
        }
        iterations += s.iterations;
        upper = upper.min(s.upper_bound + e);
        let g = forms.values(&s.theta);
        avg = avg * ((it - 1) as f64 / it as f64) + &s.theta / it as f64;
        for cand in [&s.theta, &avg] {
            let v = forms.min_value(cand);
            if v > best.1 {
                best = (cand.clone(), v);
            }
        }
        if upper - best.1 <= config.tolerance_optimality {
            break;
        }
        let eta = 1.0 / (scale * (it as f64).sqrt());
        let gmin = g.iter().copied().fold(f64::INFINITY, f64::min);
        for (wz, gz) in w.iter_mut().zip(&g) {
            *wz *= (-eta * (gz - gmin)).exp();
        }
        let total: f64 = w.iter().sum();
        w.iter_mut().for_each(|v| *v /= total);
    }
    Ok((best.0.clone(), best.1, upper_of(upper, best.1), iterations))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{Instance, TaskMode};
    use crate::utility::AffineUtility;

    fn ds1(points: &[(f64, u32, f64)]) -> Dataset {
        Dataset::new(
            1,
            points.iter().map(|&(x, z, y)| Instance::new(vec![x], z, y)).collect(),
            TaskMode::Regression,
        )
        .unwrap()
    }

    #[test]
    fn interpolation_fit() {
        let ds = ds1(&[(1.0, 0, 1.0), (2.0, 1, 2.0), (-1.0, 0, -1.0)]);
        let (m, v) = fit_l1_regularized(&ds, 0.0).unwrap();
        assert!((m.weights[0] - 1.0).abs() < 1e-12);
        assert!(v < 1e-20);
    }

    #[test]
    fn soft_threshold_closed_form() {
        // (1/n)Σx² = 1, (1/n)Σxy = 0.5
        let ds = ds1(&[(1.0, 0, 1.0), (-1.0, 1, 0.0)]);
        let (m, _) = fit_l1_regularized(&ds, 0.2).unwrap();
        assert!((m.weights[0] - 0.4).abs() < 1e-12);
        let (m, _) = fit_l1_regularized(&ds, 1.0).unwrap();
        assert_eq!(m.weights[0], 0.0);
    }

    #[test]
    fn lambda_selection_rules() {
        let ds = ds1(&[
            (1.0, 0, 2.0),
            (2.0, 1, 4.0),
            (-1.0, 0, -2.0),
            (0.5, 1, 1.0),
            (3.0, 0, 6.0),
            (-2.0, 1, -4.0),
        ]);
        assert_eq!(select_lambda(&ds, &[0.3], 3, 0).unwrap(), 0.3);
        assert_eq!(select_lambda(&ds, &[10.0, 0.0], 3, 0).unwrap(), 0.0);
        // both λ zero out θ entirely: tie, smaller wins
        assert_eq!(select_lambda(&ds, &[200.0, 100.0], 3, 0).unwrap(), 100.0);
        assert_eq!(select_lambda(&ds, &[], 3, 0), Err(SolverError::EmptyGrid));
    }

    #[test]
    fn infeasible_below_epsilon_min() {
        let ds = ds1(&[(1.0, 0, 0.0), (1.0, 1, 1.0)]);
        let (_, eps_min) = fit_l1_regularized(&ds, 0.0).unwrap();
        let r = solve_eop_training(&ds, &UtilitySpec::crime(), &SolverConfig::new(eps_min - 1e-3, 0.0)).unwrap();
        assert_eq!(r.status, Status::Infeasible);
        let r = solve_baseline(&ds, &SolverConfig::new(eps_min - 1e-3, 0.0)).unwrap();
        assert_eq!(r.status, Status::Infeasible);
    }

    #[test]
    fn epsilon_min_returns_the_anchor() {
        let ds = ds1(&[(1.0, 0, 0.2), (-0.5, 1, 0.9), (2.0, 0, 0.4), (0.3, 1, 0.1)]);
        let lam = 0.05;
        let (m, eps_min) = fit_l1_regularized(&ds, lam).unwrap();
        let r = solve_eop_training(&ds, &UtilitySpec::crime(), &SolverConfig::new(eps_min, lam)).unwrap();
        assert_eq!(r.status, Status::Optimal);
        assert!((r.weights[0] - m.weights[0]).abs() < 1e-6);
        let b = solve_baseline(&ds, &SolverConfig::new(eps_min, lam)).unwrap();
        assert!((b.weights[0] - m.weights[0]).abs() < 1e-6);
    }

    #[test]
    fn baseline_dominates_anchor_and_is_feasible() {
        let ds = ds1(&[(1.0, 0, 0.2), (-0.5, 1, 0.9), (2.0, 0, 0.4), (0.3, 1, 0.1)]);
        let (m, eps_min) = fit_l1_regularized(&ds, 0.01).unwrap();
        let cfg = SolverConfig::new(2.0 * eps_min, 0.01);
        let r = solve_baseline(&ds, &cfg).unwrap();
        assert_eq!(r.status, Status::Optimal);
        assert!(r.feasibility_residual <= 1e-8);
        let anchor_obj: f64 = ds
            .instances()
            .iter()
            .map(|i| m.predict(&i.features) - i.target)
            .sum::<f64>()
            / 4.0;
        assert!(r.sigma >= anchor_obj - 1e-12);
        assert!(r.duality_gap() <= cfg.tolerance_optimality);
    }

    #[test]
    fn scaling_utilities_scales_sigma() {
        let ds = ds1(&[(1.0, 0, 0.2), (-0.5, 1, 0.9), (2.0, 0, 0.4), (0.3, 1, 0.1)]);
        let (_, eps_min) = fit_l1_regularized(&ds, 0.01).unwrap();
        let cfg = SolverConfig::new(1.5 * eps_min, 0.01);
        let a = solve_eop_training(&ds, &UtilitySpec::crime(), &cfg).unwrap();
        let b = solve_eop_training(&ds, &UtilitySpec::crime().scaled(3.0), &cfg).unwrap();
        assert!((3.0 * a.sigma - b.sigma).abs() < 1e-5);
        assert!((a.weights[0] - b.weights[0]).abs() < 1e-4);
    }

    #[test]
    fn three_groups_converge() {
        let spec = UtilitySpec::crime().with_group(2, AffineUtility::new(1.0, 1.0, 0.0, 0.5));
        let ds = Dataset::new(
            2,
            vec![
                Instance::new(vec![1.0, 0.5], 0, 0.2),
                Instance::new(vec![-0.5, 1.0], 1, 0.9),
                Instance::new(vec![2.0, -1.0], 2, 0.4),
                Instance::new(vec![0.3, 0.2], 0, 0.1),
                Instance::new(vec![-1.0, -0.7], 1, 0.6),
                Instance::new(vec![0.1, 0.9], 2, 0.3),
            ],
            TaskMode::Regression,
        )
        .unwrap();
        let (_, eps_min) = fit_l1_regularized(&ds, 0.01).unwrap();
        let cfg = SolverConfig::new(1.5 * eps_min, 0.01);
        let r = solve_eop_training(&ds, &spec, &cfg).unwrap();
        assert!(r.feasibility_residual <= 1e-8);
        assert!(r.duality_gap() < 1e-3, "gap {}", r.duality_gap());
    }

    #[test]
    fn rejects_bad_config() {
        let ds = ds1(&[(1.0, 0, 0.0), (1.0, 1, 1.0)]);
        let cfg = SolverConfig::new(-1.0, 0.0);
        assert!(matches!(solve_baseline(&ds, &cfg), Err(SolverError::InvalidConfig(_))));
    }

    #[test]
    fn grid_shapes() {
        let g = geometric_grid(1.0, 8.0, 4);
        assert_eq!(g.len(), 4);
        assert!((g[1] - 2.0).abs() < 1e-12 && (g[3] - 8.0).abs() < 1e-12);
        let f = kfold_indices(10, 3, 1);
        assert_eq!(f.iter().map(Vec::len).sum::<usize>(), 10);
        assert_eq!(f, kfold_indices(10, 3, 1));
    }
}
