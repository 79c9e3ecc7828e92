#![allow(dead_code)]

use eopfair::{Dataset, UtilitySpec};

/// `(1/n)Σ(θ·x_i - y_i)² + λ‖θ‖₁` straight from residuals.
pub fn loss(ds: &Dataset, theta: &[f64], lambda: f64) -> f64 {
    let n = ds.len() as f64;
    let sq: f64 = ds
        .instances()
        .iter()
        .map(|i| {
            let p: f64 = theta.iter().zip(&i.features).map(|(a, b)| a * b).sum();
            (p - i.target).powi(2)
        })
        .sum();
    sq / n + lambda * theta.iter().map(|v| v.abs()).sum::<f64>()
}

/// Smallest per-group mean of `spec` evaluated on each instance.
pub fn min_group_utility(ds: &Dataset, spec: &UtilitySpec, theta: &[f64]) -> f64 {
    let mut acc = std::collections::BTreeMap::new();
    for i in ds.instances() {
        let p: f64 = theta.iter().zip(&i.features).map(|(a, b)| a * b).sum();
        let e = acc.entry(i.group).or_insert((0.0, 0usize));
        e.0 += spec.evaluate(i.group, i.target, p).unwrap();
        e.1 += 1;
    }
    acc.values().map(|(s, n)| s / *n as f64).fold(f64::INFINITY, f64::min)
}

pub fn mean_residual(ds: &Dataset, theta: &[f64]) -> f64 {
    let n = ds.len() as f64;
    ds.instances()
        .iter()
        .map(|i| theta.iter().zip(&i.features).map(|(a, b)| a * b).sum::<f64>() - i.target)
        .sum::<f64>()
        / n
}

pub const STEP: f64 = 1e-4;
pub const BOX: f64 = 10.0;
const LAST: usize = (2.0 * BOX / STEP) as usize;

fn at(j: usize) -> f64 {
    -BOX + j as f64 * STEP
}

/// Index in `[lo, hi]` minimizing `f`, for `f` convex along the grid.
fn argmin_convex<F: Fn(usize) -> f64>(mut lo: usize, mut hi: usize, f: F) -> usize {
    while hi - lo > 2 {
        let m1 = lo + (hi - lo) / 3;
        let m2 = hi - (hi - lo) / 3;
        if f(m1) <= f(m2) {
            hi = m2;
        } else {
            lo = m1;
        }
    }
    (lo..=hi).min_by(|&a, &b| f(a).total_cmp(&f(b))).unwrap()
}

/// First index in `[lo, hi]` where the monotone predicate turns true.
fn first_true<P: Fn(usize) -> bool>(mut lo: usize, mut hi: usize, p: P) -> usize {
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        if p(mid) {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    lo
}

/// Best `objective` over the grid `{-10 + j·1e-4}^k ∩ {loss ≤ eps}`, `k ≤ 2`.
///
/// In 1-D every grid point is evaluated. In 2-D each `θ₁` line is handled
/// exactly on its grid points: the loss is convex along the line, so its
/// feasible points form one run, and the objective (min of affine maps or
/// a linear map) is concave along that run.
///
/// Panics if the feasible set touches the box, since the grid then would not
/// cover it.
pub fn grid_oracle<F: Fn(&[f64]) -> f64>(ds: &Dataset, lambda: f64, eps: f64, objective: F) -> Option<f64> {
    let feasible = |th: &[f64]| loss(ds, th, lambda) <= eps;
    let edge = |th: &[f64]| th.iter().any(|v| v.abs() >= BOX - STEP / 2.0);
    let mut best: Option<f64> = None;
    let mut offer = |th: &[f64], v: f64| {
        assert!(!edge(th), "feasible set reaches the oracle box at {th:?}");
        best = Some(best.map_or(v, |b: f64| b.max(v)));
    };
    match ds.k() {
        1 => {
            for j in 0..=LAST {
                let th = [at(j)];
                if feasible(&th) {
                    offer(&th, objective(&th));
                }
            }
        }
        2 => {
            for i in 0..=LAST {
                let t1 = at(i);
                let q = |j: usize| loss(ds, &[t1, at(j)], lambda);
                let jm = argmin_convex(0, LAST, q);
                if q(jm) > eps {
                    continue;
                }
                let lo = first_true(0, jm, |j| q(j) <= eps);
                let hi = first_true(jm, LAST + 1, |j| q(j) > eps) - 1;
                let g = |j: usize| -objective(&[t1, at(j)]);
                let jb = argmin_convex(lo, hi, g);
                offer(&[t1, at(lo)], objective(&[t1, at(lo)]));
                offer(&[t1, at(hi)], objective(&[t1, at(hi)]));
                offer(&[t1, at(jb)], -g(jb));
            }
        }
        k => panic!("grid oracle supports k <= 2, got {k}"),
    }
    best
}

/// Seeded toy problem: `k = 1` for even seeds, `k = 2` for odd, with a
/// λ and an ε factor over `ε_min` cycling through small sets.
pub fn toy(seed: u64) -> (Dataset, f64, f64) {
    let k = 1 + (seed % 2) as usize;
    let split = (3 + (seed % 3) as usize, 3 + (seed % 4) as usize);
    let ds = eopfair::data::make_toy_instance(seed, k, split, 0.1).unwrap();
    let lambda = [0.0, 1e-3, 1e-2][(seed % 3) as usize];
    let factor = [1.2, 1.5, 2.0, 3.0][(seed % 4) as usize];
    (ds, lambda, factor)
}
