//! Exact equality-of-opportunity checkers over finite distributions.
//!
//! A distribution over `(z, y, ŷ)` induces, for each individual, an
//! effort-based utility `D` and an advantage `U = A - D`. Rawlsian EOP asks
//! that the law of `U` given `D = d` be the same in every group. The
//! luck-egalitarian variant compares groups at equal *relative* effort: the
//! law of `U` within a quantile slice of each group's own `D` distribution.
//!
//! All comparisons are sup-norm distances between CDFs in exact rationals.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use num_traits::{One, Signed, Zero};
use rayon::prelude::*;
use thiserror::Error;

use crate::domain::GroupId;
use crate::metrics::exact::{self, WeightedObs};
use crate::metrics::MetricError;
use crate::rational::{qi, Q};

#[derive(Debug, Error, PartialEq)]
pub enum EopError {
    #[error("negative mass {mass} on atom {atom}")]
    NegativeMass { atom: Box<Atom>, mass: Q },
    #[error("masses sum to {0}, expected 1")]
    MassSum(Q),
    #[error("atom {0} listed twice")]
    DuplicateAtom(Box<Atom>),
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Atom {
    pub group: GroupId,
    pub y: Q,
    pub yhat: Q,
}

impl Atom {
    pub fn new(group: impl Into<GroupId>, y: Q, yhat: Q) -> Self {
        Atom {
            group: group.into(),
            y,
            yhat,
        }
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(z={}, y={}, yhat={})", self.group, self.y, self.yhat)
    }
}

/// Probability distribution with finite support over `(z, y, ŷ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteJointDistribution {
    atoms: Vec<(Atom, Q)>,
}

impl FiniteJointDistribution {
    pub fn new(atoms: Vec<(Atom, Q)>) -> Result<Self, EopError> {
        let mut seen = BTreeSet::new();
        let mut total = Q::zero();
        for (a, m) in &atoms {
            if m.is_negative() {
                return Err(EopError::NegativeMass {
                    atom: Box::new(a.clone()),
                    mass: m.clone(),
                });
            }
            if !seen.insert(a) {
                return Err(EopError::DuplicateAtom(Box::new(a.clone())));
            }
            total += m;
        }
        if !total.is_one() {
            return Err(EopError::MassSum(total));
        }
        Ok(FiniteJointDistribution { atoms })
    }

    /// Binary `(z, y, ŷ)` cells with masses `counts[i] / denominator`, cell
    /// `i` encoding `z = i>>2, y = (i>>1)&1, ŷ = i&1`.
    pub fn binary_cube(counts: &[u32; 8], denominator: u32) -> Result<Self, EopError> {
        let atoms = (0..8)
            .map(|i| {
                (
                    Atom::new((i >> 2) as u32, qi(((i >> 1) & 1) as i64), qi((i & 1) as i64)),
                    Q::new(counts[i].into(), denominator.into()),
                )
            })
            .collect();
        Self::new(atoms)
    }

    pub fn atoms(&self) -> &[(Atom, Q)] {
        &self.atoms
    }

    /// Groups with positive mass.
    pub fn groups(&self) -> Vec<GroupId> {
        self.atoms
            .iter()
            .filter(|(_, m)| !m.is_zero())
            .map(|(a, _)| a.group)
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }

    pub fn weighted_obs(&self) -> Vec<WeightedObs> {
        self.atoms
            .iter()
            .map(|(a, m)| WeightedObs {
                group: a.group,
                y: a.y.clone(),
                yhat: a.yhat.clone(),
                weight: m.clone(),
            })
            .collect()
    }

    /// The induced `(z, D, U)` view with `U = A - D`.
    pub fn view<D, A>(&self, d_map: D, a_map: A) -> Vec<ViewPoint>
    where
        D: Fn(&Atom) -> Q,
        A: Fn(&Atom) -> Q,
    {
        self.atoms
            .iter()
            .map(|(atom, m)| {
                let d = d_map(atom);
                ViewPoint {
                    group: atom.group,
                    u: a_map(atom) - &d,
                    d,
                    mass: m.clone(),
                }
            })
            .collect()
    }
}

/// One point of the `(z, D, U)` view with its probability mass.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewPoint {
    pub group: GroupId,
    pub d: Q,
    pub u: Q,
    pub mass: Q,
}

impl ViewPoint {
    pub fn new(group: impl Into<GroupId>, d: Q, u: Q, mass: Q) -> Self {
        ViewPoint {
            group: group.into(),
            d,
            u,
            mass,
        }
    }
}

/// What was held fixed when two groups were compared.
#[derive(Debug, Clone, PartialEq)]
pub enum Conditioning {
    Effort(Q),
    /// `k`-th smallest distinct effort value in each group.
    Rank(usize),
    /// Cumulative-probability slice `(lo, hi]` of each group's effort distribution.
    Slice { lo: Q, hi: Q },
}

impl fmt::Display for Conditioning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Conditioning::Effort(d) => write!(f, "D={d}"),
            Conditioning::Rank(k) => write!(f, "rank {k}"),
            Conditioning::Slice { lo, hi } => write!(f, "slice ({lo}, {hi}]"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Witness {
    pub z: GroupId,
    pub z_other: GroupId,
    pub conditioning: Conditioning,
    /// Utility value at which the two CDFs differ the most.
    pub u: Q,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EopVerdict {
    pub satisfied: bool,
    pub gap: Q,
    pub witness: Option<Witness>,
    /// Conditioning values realized by one group of a pair but not the other.
    /// They carry no conditional law in the missing group and are skipped.
    pub unmatched_strata: Vec<(GroupId, Conditioning)>,
}

impl EopVerdict {
    fn from_gap(gap: Q, witness: Option<Witness>, unmatched: Vec<(GroupId, Conditioning)>) -> Self {
        EopVerdict {
            satisfied: gap.is_zero(),
            gap,
            witness,
            unmatched_strata: unmatched,
        }
    }
}

/// How quantile slices of a discrete effort distribution are matched across groups.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RankRule {
    /// The `k`-th distinct effort level of one group is compared with the
    /// `k`-th of the other.
    Ordinal,
    /// Inverse-CDF coupling: each effort value covers the cumulative
    /// probability interval it occupies, and groups are compared on the
    /// common refinement of those intervals.
    Coupled,
}

type Law = BTreeMap<Q, Q>;

/// Sup-norm distance between two CDFs and the point where it is attained.
pub fn cdf_sup_distance(a: &Law, b: &Law) -> (Q, Option<Q>) {
    let ta: Q = a.values().sum();
    let tb: Q = b.values().sum();
    let points: BTreeSet<&Q> = a.keys().chain(b.keys()).collect();
    let (mut ca, mut cb) = (Q::zero(), Q::zero());
    let mut best = (Q::zero(), None);
    for p in points {
        if let Some(m) = a.get(p) {
            ca += m;
        }
        if let Some(m) = b.get(p) {
            cb += m;
        }
        let d = (&ca / &ta - &cb / &tb).abs();
        if d > best.0 {
            best = (d, Some(p.clone()));
        }
    }
    best
}

fn positive_groups(view: &[ViewPoint]) -> Vec<GroupId> {
    view.iter()
        .filter(|p| !p.mass.is_zero())
        .map(|p| p.group)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect()
}

/// group -> effort -> law of U (unnormalized).
fn strata_by_effort(view: &[ViewPoint]) -> BTreeMap<GroupId, BTreeMap<Q, Law>> {
    let mut out: BTreeMap<GroupId, BTreeMap<Q, Law>> = BTreeMap::new();
    for p in view.iter().filter(|p| !p.mass.is_zero()) {
        *out.entry(p.group)
            .or_default()
            .entry(p.d.clone())
            .or_default()
            .entry(p.u.clone())
            .or_insert_with(Q::zero) += &p.mass;
    }
    out
}

struct Worst {
    gap: Q,
    witness: Option<Witness>,
}

impl Worst {
    fn new() -> Self {
        Worst {
            gap: Q::zero(),
            witness: None,
        }
    }

    fn offer(&mut self, za: GroupId, zb: GroupId, cond: Conditioning, a: &Law, b: &Law) {
        let (d, at) = cdf_sup_distance(a, b);
        if d > self.gap {
            self.gap = d;
            self.witness = at.map(|u| Witness {
                z: za,
                z_other: zb,
                conditioning: cond,
                u,
            });
        }
    }
}

/// Rawlsian EOP on a `(z, D, U)` view.
pub fn rawlsian_on_view(view: &[ViewPoint]) -> EopVerdict {
    let groups = positive_groups(view);
    let strata = strata_by_effort(view);
    let mut worst = Worst::new();
    let mut unmatched = BTreeSet::new();
    for (i, &za) in groups.iter().enumerate() {
        for &zb in &groups[i + 1..] {
            let (sa, sb) = (&strata[&za], &strata[&zb]);
            for d in sa.keys().chain(sb.keys()).collect::<BTreeSet<_>>() {
                match (sa.get(d), sb.get(d)) {
                    (Some(a), Some(b)) => worst.offer(za, zb, Conditioning::Effort(d.clone()), a, b),
                    (Some(_), None) => {
                        unmatched.insert((zb, d.clone()));
                    }
                    (None, Some(_)) => {
                        unmatched.insert((za, d.clone()));
                    }
                    (None, None) => {}
                }
            }
        }
    }
    let unmatched = unmatched
        .into_iter()
        .map(|(g, d)| (g, Conditioning::Effort(d)))
        .collect();
    EopVerdict::from_gap(worst.gap, worst.witness, unmatched)
}

/// Luck-egalitarian EOP on a `(z, D, U)` view.
pub fn luck_egalitarian_on_view(view: &[ViewPoint], rule: RankRule) -> EopVerdict {
    let groups = positive_groups(view);
    let strata = strata_by_effort(view);
    let mut worst = Worst::new();
    let mut unmatched = Vec::new();
    for (i, &za) in groups.iter().enumerate() {
        for &zb in &groups[i + 1..] {
            let (sa, sb) = (&strata[&za], &strata[&zb]);
            match rule {
                RankRule::Ordinal => {
                    let la: Vec<&Law> = sa.values().collect();
                    let lb: Vec<&Law> = sb.values().collect();
                    for k in 0..la.len().max(lb.len()) {
                        match (la.get(k), lb.get(k)) {
                            (Some(a), Some(b)) => worst.offer(za, zb, Conditioning::Rank(k), a, b),
                            (Some(_), None) => unmatched.push((zb, Conditioning::Rank(k))),
                            (None, Some(_)) => unmatched.push((za, Conditioning::Rank(k))),
                            (None, None) => {}
                        }
                    }
                }
                RankRule::Coupled => {
                    let ia = quantile_intervals(sa);
                    let ib = quantile_intervals(sb);
                    let cuts: BTreeSet<&Q> = ia.iter().chain(&ib).map(|(_, hi, _)| hi).collect();
                    let mut lo = Q::zero();
                    for hi in cuts {
                        let a = covering(&ia, hi);
                        let b = covering(&ib, hi);
                        let cond = Conditioning::Slice {
                            lo: lo.clone(),
                            hi: hi.clone(),
                        };
                        worst.offer(za, zb, cond, a, b);
                        lo = hi.clone();
                    }
                }
            }
        }
    }
    EopVerdict::from_gap(worst.gap, worst.witness, unmatched)
}

/// Luck-egalitarian EOP for an effort variable with a declared finite set
/// of levels: slice `k` of every group is `{D = levels[k]}`. A group with no
/// mass on a level has an empty slice there, which is reported and skipped.
pub fn luck_egalitarian_on_levels(view: &[ViewPoint], levels: &[Q]) -> EopVerdict {
    let groups = positive_groups(view);
    let strata = strata_by_effort(view);
    let mut worst = Worst::new();
    let mut unmatched = Vec::new();
    for (i, &za) in groups.iter().enumerate() {
        for &zb in &groups[i + 1..] {
            for (k, level) in levels.iter().enumerate() {
                match (strata[&za].get(level), strata[&zb].get(level)) {
                    (Some(a), Some(b)) => worst.offer(za, zb, Conditioning::Rank(k), a, b),
                    (Some(_), None) => unmatched.push((zb, Conditioning::Rank(k))),
                    (None, Some(_)) => unmatched.push((za, Conditioning::Rank(k))),
                    (None, None) => {}
                }
            }
        }
    }
    EopVerdict::from_gap(worst.gap, worst.witness, unmatched)
}

/// `(lo, hi, law)` per distinct effort value, on the group's normalized
/// cumulative scale; zero-length intervals never occur since every stratum
/// has positive mass.
fn quantile_intervals(strata: &BTreeMap<Q, Law>) -> Vec<(Q, Q, &Law)> {
    let total: Q = strata.values().flat_map(|l| l.values()).sum();
    let mut lo = Q::zero();
    strata
        .values()
        .map(|law| {
            let hi = &lo + law.values().sum::<Q>() / &total;
            let out = (lo.clone(), hi.clone(), law);
            lo = hi;
            out
        })
        .collect()
}

/// Law of the interval `(lo, hi]` that contains the refined cell ending at `hi`.
fn covering<'a>(intervals: &[(Q, Q, &'a Law)], hi: &Q) -> &'a Law {
    intervals
        .iter()
        .find(|(_, end, _)| end >= hi)
        .map(|(_, _, law)| *law)
        .expect("refined cut lies within the unit interval")
}

/// Rawlsian EOP where effort depends only on the true outcome `y` and the
/// actual utility `A` on the atom. `U = A - D`.
pub fn check_rawlsian_eop<D, A>(dist: &FiniteJointDistribution, d_map: D, a_map: A) -> EopVerdict
where
    D: Fn(&Q) -> Q,
    A: Fn(&Atom) -> Q,
{
    rawlsian_on_view(&dist.view(|a| d_map(&a.y), a_map))
}

/// Luck-egalitarian EOP; effort may depend on the whole atom, including `z`
/// and the prediction.
pub fn check_luck_egalitarian_eop<D, A>(
    dist: &FiniteJointDistribution,
    d_map: D,
    a_map: A,
    rule: RankRule,
) -> EopVerdict
where
    D: Fn(&Atom) -> Q,
    A: Fn(&Atom) -> Q,
{
    luck_egalitarian_on_view(&dist.view(d_map, a_map), rule)
}

/// Outcome of checking one equivalence on one distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct PropositionCheck {
    /// False when the distribution is outside the equivalence's hypothesis.
    pub applicable: bool,
    pub fairness_side: bool,
    pub eop_side: bool,
    /// Extra implication checked alongside (accuracy: distributional parity
    /// implies equal expected squared error). True when not applicable.
    pub side_condition: bool,
}

impl PropositionCheck {
    fn plain(fairness_side: bool, eop_side: bool) -> Self {
        PropositionCheck {
            applicable: true,
            fairness_side,
            eop_side,
            side_condition: true,
        }
    }

    pub fn holds(&self) -> bool {
        !self.applicable || (self.fairness_side == self.eop_side && self.side_condition)
    }
}

fn gap_is_zero(r: Result<exact::ExactGap, MetricError>) -> bool {
    match r {
        Ok(g) => g.gap.is_zero(),
        // Fewer than two groups: nothing to compare.
        Err(MetricError::TooFewGroups(_)) => true,
        Err(e) => unreachable!("exact gap on a valid distribution: {e}"),
    }
}

/// Equality of odds versus Rawlsian EOP with `D = Y`, `A = Ŷ`.
pub fn verify_equality_of_odds_equivalence(dist: &FiniteJointDistribution) -> PropositionCheck {
    let fair = gap_is_zero(exact::equality_of_odds(&dist.weighted_obs()));
    let eop = check_rawlsian_eop(dist, |y| y.clone(), |a| a.yhat.clone()).satisfied;
    PropositionCheck::plain(fair, eop)
}

/// Statistical parity versus Rawlsian EOP with `D ≡ 1`, `A = Ŷ`.
pub fn verify_statistical_parity_equivalence(dist: &FiniteJointDistribution) -> PropositionCheck {
    let fair = gap_is_zero(exact::statistical_parity(&dist.weighted_obs()));
    let eop = check_rawlsian_eop(dist, |_| Q::one(), |a| a.yhat.clone()).satisfied;
    PropositionCheck::plain(fair, eop)
}

/// Distributional equality of `(Ŷ - Y)²` versus Rawlsian EOP with `D ≡ 0`,
/// `A = (Ŷ - Y)²`. The side condition checks that distributional equality
/// gives equal expected squared error.
pub fn verify_accuracy_parity_equivalence(dist: &FiniteJointDistribution) -> PropositionCheck {
    let obs = dist.weighted_obs();
    let fair = gap_is_zero(exact::squared_error_distribution_parity(&obs));
    let eop = check_rawlsian_eop(
        dist,
        |_| Q::zero(),
        |a| {
            let e = &a.yhat - &a.y;
            &e * &e
        },
    )
    .satisfied;
    let expectation = gap_is_zero(exact::accuracy_parity(&obs));
    PropositionCheck {
        applicable: true,
        fairness_side: fair,
        eop_side: eop,
        side_condition: !fair || expectation,
    }
}

/// Predictive value parity versus luck-egalitarian EOP with `D = Ŷ`, `A = Y`.
///
/// `Ŷ` is binary, so each group has two effort quantiles: the bottom slice
/// `{Ŷ = 0}` and the top slice `{Ŷ = 1}`.
pub fn verify_pvp_equivalence(dist: &FiniteJointDistribution) -> PropositionCheck {
    let fair = gap_is_zero(exact::predictive_value_parity(&dist.weighted_obs()));
    let view = dist.view(|a| a.yhat.clone(), |a| a.y.clone());
    let eop = luck_egalitarian_on_levels(&view, &[Q::zero(), Q::one()]).satisfied;
    PropositionCheck::plain(fair, eop)
}

/// The same comparison with slices built from each group's realized effort
/// values under `rule`. Applies only when every group with positive mass
/// realizes the same set of predictions; otherwise the `k`-th realized rank
/// can name different predictions in different groups.
pub fn verify_pvp_equivalence_with(dist: &FiniteJointDistribution, rule: RankRule) -> PropositionCheck {
    let mut supports: BTreeMap<GroupId, BTreeSet<&Q>> = BTreeMap::new();
    for (a, _) in dist.atoms().iter().filter(|(_, m)| !m.is_zero()) {
        supports.entry(a.group).or_default().insert(&a.yhat);
    }
    let applicable = supports.values().collect::<BTreeSet<_>>().len() <= 1;
    let fair = gap_is_zero(exact::predictive_value_parity(&dist.weighted_obs()));
    let eop = check_luck_egalitarian_eop(dist, |a| a.yhat.clone(), |a| a.y.clone(), rule).satisfied;
    PropositionCheck {
        applicable,
        ..PropositionCheck::plain(fair, eop)
    }
}

/// All ways to place `denominator` units of mass on the 8 binary cells.
pub fn enumerate_binary_cube(denominator: u32) -> Vec<FiniteJointDistribution> {
    let mut out = Vec::new();
    let mut counts = [0u32; 8];
    fn rec(cell: usize, left: u32, den: u32, counts: &mut [u32; 8], out: &mut Vec<FiniteJointDistribution>) {
        if cell == 7 {
            counts[7] = left;
            out.push(FiniteJointDistribution::binary_cube(counts, den).expect("masses sum to one"));
            return;
        }
        for c in 0..=left {
            counts[cell] = c;
            rec(cell + 1, left - c, den, counts, out);
        }
    }
    rec(0, denominator, denominator, &mut counts, &mut out);
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct PropositionSummary {
    pub name: &'static str,
    pub cases: usize,
    pub outside_hypothesis: usize,
    pub counterexamples: usize,
    /// Cases where the side condition failed.
    pub side_failures: usize,
}

impl fmt::Display for PropositionSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}: cases={} outside_hypothesis={} counterexamples={}",
            self.name, self.cases, self.outside_hypothesis, self.counterexamples
        )?;
        if self.side_failures > 0 {
            write!(f, " side_failures={}", self.side_failures)?;
        }
        Ok(())
    }
}

pub type Verifier = fn(&FiniteJointDistribution) -> PropositionCheck;

pub const PROPOSITIONS: [(&str, Verifier); 4] = [
    ("equality_of_odds", verify_equality_of_odds_equivalence),
    ("statistical_parity", verify_statistical_parity_equivalence),
    ("accuracy_parity", verify_accuracy_parity_equivalence),
    ("predictive_value_parity", verify_pvp_equivalence),
];

pub fn summarize<V>(name: &'static str, verifier: V, dists: &[FiniteJointDistribution]) -> PropositionSummary
where
    V: Fn(&FiniteJointDistribution) -> PropositionCheck + Send + Sync,
{
    let checks: Vec<PropositionCheck> = dists.par_iter().map(verifier).collect();
    PropositionSummary {
        name,
        cases: checks.len(),
        outside_hypothesis: checks.iter().filter(|c| !c.applicable).count(),
        counterexamples: checks
            .iter()
            .filter(|c| c.applicable && c.fairness_side != c.eop_side)
            .count(),
        side_failures: checks
            .iter()
            .filter(|c| c.applicable && !c.side_condition)
            .count(),
    }
}

/// Runs all four equivalences over the grid with masses in multiples of `1/denominator`.
pub fn run_proposition_suite(denominator: u32) -> Vec<PropositionSummary> {
    let dists = enumerate_binary_cube(denominator);
    PROPOSITIONS
        .iter()
        .map(|(name, v)| summarize(name, *v, &dists))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::q;

    fn vp(z: u32, d: i64, u: i64, num: i64, den: i64) -> ViewPoint {
        ViewPoint::new(z, qi(d), qi(u), q(num, den))
    }

    fn dist(cells: &[(u32, i64, i64, i64, i64)]) -> FiniteJointDistribution {
        FiniteJointDistribution::new(
            cells
                .iter()
                .map(|&(z, y, yh, n, d)| (Atom::new(z, qi(y), qi(yh)), q(n, d)))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn validates_masses() {
        let a = Atom::new(0, qi(0), qi(0));
        assert!(matches!(
            FiniteJointDistribution::new(vec![(a.clone(), q(1, 2))]),
            Err(EopError::MassSum(_))
        ));
        assert!(matches!(
            FiniteJointDistribution::new(vec![(a.clone(), q(1, 2)), (a.clone(), q(1, 2))]),
            Err(EopError::DuplicateAtom(_))
        ));
        assert!(matches!(
            FiniteJointDistribution::new(vec![(a, q(-1, 2))]),
            Err(EopError::NegativeMass { .. })
        ));
    }

    #[test]
    fn product_construction_satisfies_rawlsian() {
        // same U law given each D in both groups, different D marginals
        let view = vec![
            vp(0, 0, 1, 1, 8),
            vp(0, 0, 2, 1, 8),
            vp(0, 1, 5, 1, 4),
            vp(1, 0, 1, 1, 4),
            vp(1, 0, 2, 1, 4),
            vp(1, 1, 5, 0, 1),
        ];
        let mut view = view;
        view.push(vp(1, 1, 5, 0, 1));
        assert!(rawlsian_on_view(&view).satisfied);
    }

    #[test]
    fn maximal_rawlsian_violation() {
        let view = vec![vp(0, 0, 1, 1, 2), vp(1, 0, 0, 1, 2)];
        let v = rawlsian_on_view(&view);
        assert!(!v.satisfied);
        assert_eq!(v.gap, qi(1));
        let w = v.witness.unwrap();
        assert_eq!(w.conditioning, Conditioning::Effort(qi(0)));
    }

    #[test]
    fn equality_of_odds_distribution_satisfies_rawlsian() {
        // TPR 1/2, FPR 0 in both groups, different base rates
        let d = dist(&[
            (0, 1, 1, 1, 8),
            (0, 1, 0, 1, 8),
            (0, 0, 0, 2, 8),
            (1, 1, 1, 1, 16),
            (1, 1, 0, 1, 16),
            (1, 0, 0, 3, 8),
        ]);
        assert!(check_rawlsian_eop(&d, |y| y.clone(), |a| a.yhat.clone()).satisfied);
        assert!(verify_equality_of_odds_equivalence(&d).holds());
    }

    #[test]
    fn unmatched_effort_stratum_is_reported() {
        let view = vec![vp(0, 0, 1, 1, 2), vp(1, 1, 0, 1, 2)];
        let v = rawlsian_on_view(&view);
        assert!(v.satisfied);
        assert_eq!(v.unmatched_strata.len(), 2);
    }

    #[test]
    fn single_group_is_satisfied() {
        let d = dist(&[(0, 1, 1, 1, 2), (0, 0, 1, 1, 2)]);
        for rule in [RankRule::Ordinal, RankRule::Coupled] {
            assert!(check_luck_egalitarian_eop(&d, |a| a.yhat.clone(), |a| a.y.clone(), rule).satisfied);
        }
    }

    #[test]
    fn pvp_gap_at_top_slice() {
        // P[Y=1 | Ŷ=1] = 9/10 vs 6/10, same P[Ŷ=1] in both groups.
        let d = dist(&[
            (0, 1, 1, 9, 40),
            (0, 0, 1, 1, 40),
            (0, 0, 0, 10, 40),
            (1, 1, 1, 6, 40),
            (1, 0, 1, 4, 40),
            (1, 0, 0, 10, 40),
        ]);
        for rule in [RankRule::Ordinal, RankRule::Coupled] {
            let v = check_luck_egalitarian_eop(&d, |a| a.yhat.clone(), |a| a.y.clone(), rule);
            assert!(!v.satisfied);
            assert_eq!(v.gap, q(3, 10));
        }
        assert!(verify_pvp_equivalence(&d).holds());
    }

    #[test]
    fn pvp_satisfied_when_calibrated_by_group() {
        let d = dist(&[
            (0, 1, 1, 3, 16),
            (0, 0, 1, 1, 16),
            (0, 0, 0, 4, 16),
            (1, 1, 1, 3, 32),
            (1, 0, 1, 1, 32),
            (1, 0, 0, 12, 32),
        ]);
        let c = verify_pvp_equivalence(&d);
        assert!(c.applicable && c.fairness_side && c.eop_side);
    }

    #[test]
    fn coupled_rule_disagrees_when_prediction_rates_differ() {
        let d = dist(&[
            (0, 1, 1, 1, 8),
            (0, 0, 1, 1, 8),
            (0, 0, 0, 1, 8),
            (1, 1, 1, 1, 8),
            (1, 0, 1, 1, 8),
            (1, 0, 0, 3, 8),
        ]);
        assert!(verify_pvp_equivalence(&d).eop_side);
        assert!(verify_pvp_equivalence_with(&d, RankRule::Ordinal).eop_side);
        assert!(!verify_pvp_equivalence_with(&d, RankRule::Coupled).eop_side);
    }

    #[test]
    fn pvp_with_one_sided_prediction_support() {
        // group 1 never predicts 0: only the top slice is compared
        let d = dist(&[(0, 1, 1, 1, 4), (0, 0, 0, 1, 4), (1, 1, 1, 1, 2)]);
        let c = verify_pvp_equivalence(&d);
        assert!(c.applicable && c.fairness_side && c.eop_side);
        assert!(!verify_pvp_equivalence_with(&d, RankRule::Ordinal).applicable);
    }

    #[test]
    fn binary_effort_slices_are_value_strata() {
        let view = vec![vp(0, 0, 0, 1, 4), vp(0, 1, 1, 1, 4), vp(1, 0, 0, 1, 4), vp(1, 1, 1, 1, 4)];
        let v = luck_egalitarian_on_view(&view, RankRule::Coupled);
        assert!(v.satisfied);
        let ordinal = luck_egalitarian_on_view(&view, RankRule::Ordinal);
        assert!(ordinal.satisfied && ordinal.unmatched_strata.is_empty());
    }

    #[test]
    fn rank_invariance_witness() {
        let a = vec![vp(0, 0, 0, 1, 4), vp(0, 1, 1, 1, 4), vp(1, 1, 0, 1, 4), vp(1, 2, 1, 1, 4)];
        let shifted: Vec<ViewPoint> = a
            .iter()
            .map(|p| {
                let mut p = p.clone();
                if p.group == GroupId(1) {
                    p.d -= qi(1);
                }
                p
            })
            .collect();
        assert!(!rawlsian_on_view(&a).satisfied);
        assert!(rawlsian_on_view(&shifted).satisfied);
        for rule in [RankRule::Ordinal, RankRule::Coupled] {
            assert_eq!(
                luck_egalitarian_on_view(&a, rule).satisfied,
                luck_egalitarian_on_view(&shifted, rule).satisfied
            );
        }
    }

    #[test]
    fn perfect_predictor_satisfies_all() {
        let d = dist(&[(0, 1, 1, 1, 4), (0, 0, 0, 1, 4), (1, 1, 1, 1, 4), (1, 0, 0, 1, 4)]);
        for (_, v) in PROPOSITIONS {
            let c = v(&d);
            assert!(c.holds());
        }
        assert!(verify_equality_of_odds_equivalence(&d).fairness_side);
        assert!(verify_accuracy_parity_equivalence(&d).eop_side);
    }

    #[test]
    fn violating_witnesses_fail_on_both_sides() {
        let d = dist(&[(0, 1, 1, 1, 4), (0, 0, 0, 1, 4), (1, 1, 0, 1, 4), (1, 0, 0, 1, 4)]);
        let eo = verify_equality_of_odds_equivalence(&d);
        assert!(!eo.fairness_side && !eo.eop_side);
        let sp = verify_statistical_parity_equivalence(&d);
        assert!(!sp.fairness_side && !sp.eop_side);
        let acc = verify_accuracy_parity_equivalence(&d);
        assert!(!acc.fairness_side && !acc.eop_side && acc.holds());
    }

    #[test]
    fn small_grid_has_no_counterexamples() {
        let dists = enumerate_binary_cube(3);
        assert_eq!(dists.len(), 120);
        for s in run_proposition_suite(3) {
            assert_eq!(s.counterexamples, 0, "{s}");
            assert_eq!(s.side_failures, 0, "{s}");
        }
    }

    #[test]
    fn cdf_distance_normalizes() {
        let a: Law = [(qi(0), q(1, 4)), (qi(1), q(1, 4))].into_iter().collect();
        let b: Law = [(qi(0), qi(1)), (qi(1), qi(1))].into_iter().collect();
        assert_eq!(cdf_sup_distance(&a, &b).0, Q::zero());
    }
}
