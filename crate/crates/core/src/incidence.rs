//! Sum-hyperplanes H_v = {θ : 2v·θ = |v|²}, point–hyperplane incidences and
//! the checkers for the two double-counting incidence lemmas.
//!
//! For a shell F and v = ξ + η with ξ, η ∈ F, the shell points on H_v are
//! exactly S_v = {ξ ∈ F : v − ξ ∈ F}, so |H_v ∩ F| = r(v). The shell fast
//! paths use this identity, the hyperoctahedral symmetry of F (only one v per
//! orbit needs to be the first member of a pair), and the bound
//! |S_v ∩ S_w| ≤ min(r(v), r(w)) to skip most of the family.

use std::cell::RefCell;

use num_bigint::BigUint;
use rustc_hash::{FxHashMap, FxHashSet};
use serde::{Deserialize, Serialize};

use crate::arith::{dot, gcd_slice, isqrt, norm2, rank};
use crate::budget::Budget;
use crate::energy::rep_histogram;
use crate::error::{LabError, Result};
use crate::lattice::{Origin, PointSet, Shell};
use crate::par;
use crate::sums::{SumWalk, Trie};

/// The hyperplane normal·θ = offset in canonical form: gcd of all entries is
/// 1 and the first nonzero normal entry is positive.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Hyperplane {
    normal: Vec<i64>,
    offset: i64,
}

impl Hyperplane {
    pub fn new(normal: Vec<i64>, offset: i64) -> Result<Self> {
        if normal.iter().all(|&c| c == 0) {
            return Err(LabError::OutOfRange("hyperplane normal is zero".into()));
        }
        let mut all = normal.clone();
        all.push(offset);
        let g = gcd_slice(&all);
        let lead = *normal.iter().find(|&&c| c != 0).unwrap();
        let s = if lead < 0 { -g } else { g };
        Ok(Hyperplane { normal: normal.iter().map(|c| c / s).collect(), offset: offset / s })
    }

    pub fn normal(&self) -> &[i64] {
        &self.normal
    }

    pub fn offset(&self) -> i64 {
        self.offset
    }

    pub fn dim(&self) -> usize {
        self.normal.len()
    }

    pub fn contains(&self, p: &[i64]) -> bool {
        dot(&self.normal, p) == self.offset
    }
}

impl std::fmt::Display for Hyperplane {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:?}·θ = {}", self.normal, self.offset)
    }
}

/// H_v for a sum v of two points of the shell of squared radius λ.
///
/// |v|² = 4λ is accepted: it is the sum ξ + ξ, and H_v is then the tangent
/// hyperplane at ξ.
pub fn hyperplane_for_sum(v: &[i64], lambda: u64) -> Result<Hyperplane> {
    if v.iter().all(|&x| x == 0) {
        return Err(LabError::DegenerateSum);
    }
    let n2 = norm2(v);
    if n2 as u128 > 4 * lambda as u128 {
        return Err(LabError::OutOfRange(format!("|v|² = {n2} exceeds 4λ = {}", 4 * lambda as u128)));
    }
    Hyperplane::new(v.iter().map(|x| 2 * x).collect(), n2)
}

/// The sum-hyperplanes of a point set together with their pair counts.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SumFamily {
    /// Sorted by hyperplane; each multiplicity is r(v) for the unique v.
    pub entries: Vec<(Hyperplane, u64)>,
    /// r(0): ordered antipodal pairs, which have no hyperplane.
    pub zero_mass: u64,
}

impl SumFamily {
    pub fn hyperplanes(&self) -> Vec<Hyperplane> {
        self.entries.iter().map(|(h, _)| h.clone()).collect()
    }

    pub fn total_mass(&self) -> u128 {
        self.zero_mass as u128 + self.entries.iter().map(|&(_, r)| r as u128).sum::<u128>()
    }
}

pub fn sum_hyperplane_family(set: &PointSet, lambda: u64, budget: &Budget) -> Result<SumFamily> {
    let hist = rep_histogram(set, budget)?;
    let mut zero_mass = 0;
    let mut merged: FxHashMap<Hyperplane, u64> = FxHashMap::default();
    for (v, r) in hist.entries() {
        if v.is_zero() {
            zero_mass = *r;
            continue;
        }
        *merged.entry(hyperplane_for_sum(v.coords(), lambda)?).or_insert(0) += r;
    }
    let mut entries: Vec<(Hyperplane, u64)> = merged.into_iter().collect();
    entries.sort_unstable();
    Ok(SumFamily { entries, zero_mass })
}

fn check_dims(set: &PointSet, planes: &[Hyperplane]) -> Result<()> {
    match planes.iter().find(|h| h.dim() != set.dim()) {
        Some(h) => Err(LabError::DimensionMismatch { expected: set.dim(), got: h.dim() }),
        None => Ok(()),
    }
}

/// For each hyperplane, the sorted indices of the points on it.
fn members(set: &PointSet, planes: &[Hyperplane], budget: &Budget) -> Result<Vec<Vec<u32>>> {
    check_dims(set, planes)?;
    let work = set.len() as u128 * planes.len() as u128;
    if work > budget.pairs {
        return Err(LabError::budget("point-hyperplane tests", work, budget.pairs));
    }
    Ok(par::map_slice(planes, |h| {
        set.iter().enumerate().filter(|(_, p)| h.contains(p)).map(|(i, _)| i as u32).collect()
    }))
}

/// I(P, H), the number of pairs (p, h) with p ∈ h.
pub fn incidences(set: &PointSet, planes: &[Hyperplane]) -> Result<u128> {
    check_dims(set, planes)?;
    let per_plane = par::map_slice(planes, |h| set.iter().filter(|p| h.contains(p)).count() as u128);
    Ok(per_plane.into_iter().sum())
}

/// Largest number of points of P shared by two distinct hyperplanes of H.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairMultiplicity {
    pub gamma_obs: u64,
    /// Indices into H of the first pair (in index order) attaining the maximum.
    pub pair: Option<(usize, usize)>,
}

/// Incidence structure in both directions plus the shared-point counts.
struct Incidence {
    on_plane: Vec<Vec<u32>>,
    planes_at: Vec<Vec<u32>>,
}

impl Incidence {
    fn build(set: &PointSet, planes: &[Hyperplane], budget: &Budget) -> Result<Self> {
        let on_plane = members(set, planes, budget)?;
        let mut planes_at = vec![Vec::new(); set.len()];
        for (h, pts) in on_plane.iter().enumerate() {
            for &p in pts {
                planes_at[p as usize].push(h as u32);
            }
        }
        let nodes: u128 = planes_at.iter().map(|l| (l.len() as u128).pow(2)).sum();
        if nodes > budget.nodes {
            return Err(LabError::budget("hyperplane pair walk", nodes, budget.nodes));
        }
        Ok(Incidence { on_plane, planes_at })
    }

    /// |h ∩ h' ∩ P| for every h' meeting h, as (h', count) sorted by h'.
    fn shared_with(&self, h: usize) -> Vec<(u32, u32)> {
        let mut counts: FxHashMap<u32, u32> = FxHashMap::default();
        for &p in &self.on_plane[h] {
            for &h2 in &self.planes_at[p as usize] {
                *counts.entry(h2).or_insert(0) += 1;
            }
        }
        let mut out: Vec<(u32, u32)> = counts.into_iter().collect();
        out.sort_unstable();
        out
    }
}

pub fn pairwise_multiplicity(set: &PointSet, planes: &[Hyperplane], budget: &Budget) -> Result<PairMultiplicity> {
    let inc = Incidence::build(set, planes, budget)?;
    let best = par::map_range(planes.len(), |h| {
        inc.shared_with(h).into_iter().filter(|&(h2, _)| h2 as usize > h).fold(
            (0u64, None),
            |acc: (u64, Option<(usize, usize)>), (h2, c)| {
                if c as u64 > acc.0 {
                    (c as u64, Some((h, h2 as usize)))
                } else {
                    acc
                }
            },
        )
    });
    let (gamma_obs, pair) = best.into_iter().fold((0, None), |acc, x| if x.0 > acc.0 { x } else { acc });
    Ok(PairMultiplicity { gamma_obs, pair })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IncidenceCheck {
    /// I ≤ γ(|P| + |H|√|P|) when two hyperplanes share at most γ points.
    PairBound,
    /// I ≤ 4γ(|P| + |H||P|^{2/3}) under the triple-intersection hypothesis.
    TripleBound,
    /// Report-only comparison against the optimal incidence bound.
    OptimalComparison,
}

/// Outcome of one incidence check. `gamma_obs` is always the largest pair
/// multiplicity |H ∩ H' ∩ P|; `gamma_used` is the γ plugged into the bound.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IncidenceReport {
    pub n: usize,
    pub lambda: Option<u64>,
    pub num_points: u64,
    pub num_hyperplanes: u64,
    pub incidences: u128,
    pub gamma_obs: u64,
    pub gamma_used: u64,
    /// Right-hand side, for display; `satisfied` is decided exactly.
    pub bound: f64,
    pub satisfied: bool,
    pub implied_constant: Option<f64>,
    pub check: IncidenceCheck,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub exponents: Option<(f64, f64)>,
}

/// Exact test of I ≤ γ(|P| + |H|√|P|).
fn pair_bound_holds(i: u128, gamma: u64, p: u64, h: u64) -> bool {
    let lhs = i as i128 - gamma as i128 * p as i128;
    if lhs <= 0 {
        return true;
    }
    let lhs = BigUint::from(lhs as u128);
    let rhs = BigUint::from(gamma) * BigUint::from(h);
    &lhs * &lhs <= &rhs * &rhs * BigUint::from(p)
}

/// Exact test of I ≤ 4γ(|P| + |H||P|^{2/3}).
fn triple_bound_holds(i: u128, gamma: u64, p: u64, h: u64) -> bool {
    let lhs = i as i128 - 4 * gamma as i128 * p as i128;
    if lhs <= 0 {
        return true;
    }
    let lhs = BigUint::from(lhs as u128);
    let rhs = BigUint::from(4 * gamma) * BigUint::from(h);
    lhs.pow(3) <= rhs.pow(3) * BigUint::from(p).pow(2)
}

fn pair_bound_report(n: usize, lambda: Option<u64>, p: u64, h: u64, i: u128, gamma_obs: u64) -> IncidenceReport {
    let gamma = gamma_obs.max(5);
    IncidenceReport {
        n,
        lambda,
        num_points: p,
        num_hyperplanes: h,
        incidences: i,
        gamma_obs,
        gamma_used: gamma,
        bound: gamma as f64 * (p as f64 + h as f64 * (p as f64).sqrt()),
        satisfied: pair_bound_holds(i, gamma, p, h),
        implied_constant: None,
        check: IncidenceCheck::PairBound,
        exponents: None,
    }
}

fn triple_bound_report(
    n: usize,
    lambda: Option<u64>,
    p: u64,
    h: u64,
    i: u128,
    gamma_obs: u64,
    gamma: u64,
) -> IncidenceReport {
    IncidenceReport {
        n,
        lambda,
        num_points: p,
        num_hyperplanes: h,
        incidences: i,
        gamma_obs,
        gamma_used: gamma,
        bound: 4.0 * gamma as f64 * (p as f64 + h as f64 * (p as f64).powf(2.0 / 3.0)),
        satisfied: triple_bound_holds(i, gamma, p, h),
        implied_constant: None,
        check: IncidenceCheck::TripleBound,
        exponents: None,
    }
}

/// Pair-multiplicity incidence bound on an explicit configuration, with γ = max(5, observed).
pub fn check_lemma_4d(
    set: &PointSet,
    planes: &[Hyperplane],
    lambda: Option<u64>,
    budget: &Budget,
) -> Result<IncidenceReport> {
    let mult = pairwise_multiplicity(set, planes, budget)?;
    let i = incidences(set, planes)?;
    Ok(pair_bound_report(set.dim(), lambda, set.len() as u64, planes.len() as u64, i, mult.gamma_obs))
}

/// Smallest γ ≥ `floor` with |{u : size_u ≥ γ}| ≤ γ.
fn smallest_gamma(sizes: &mut [u32], floor: u64) -> u64 {
    sizes.sort_unstable_by(|a, b| b.cmp(a));
    let mut g = floor;
    loop {
        let k = sizes.iter().take_while(|&&s| s as u64 >= g).count() as u64;
        if k <= g {
            return g;
        }
        g += 1;
    }
}

/// One step of the triple-hypothesis search. `traces[k]` lists the positions,
/// within the point set of a fixed hyperplane H, of the points lying on the
/// k-th hyperplane meeting H in at least `g` points (H itself is `own`).
/// For a partner H' the trace is T = H ∩ H' ∩ P, and |T ∩ H''| is the
/// number of positions shared with the trace of H''. Returns the smallest
/// γ ≥ g for which every pair (H, H') satisfies
/// |{H'' : |H ∩ H' ∩ H'' ∩ P| ≥ γ}| ≤ γ. Partners flagged in `done` are not
/// used as H' but still count as H''.
fn raise_gamma(traces: &[Vec<u32>], own: usize, done: &[bool], points: usize, mut g: u64) -> u64 {
    let mut at: Vec<Vec<u32>> = vec![Vec::new(); points];
    for (k, t) in traces.iter().enumerate() {
        for &j in t {
            at[j as usize].push(k as u32);
        }
    }
    let mut order: Vec<usize> =
        (0..traces.len()).filter(|&k| k != own && !done[k] && traces[k].len() as u64 >= g).collect();
    order.sort_by_key(|&k| std::cmp::Reverse(traces[k].len()));
    let mut seen: FxHashSet<&[u32]> = FxHashSet::default();
    let mut counts = vec![0u32; traces.len()];
    let mut touched = Vec::new();
    for w in order {
        let t = &traces[w];
        if (t.len() as u64) < g || !seen.insert(t) {
            continue;
        }
        for &j in t {
            for &u in &at[j as usize] {
                if counts[u as usize] == 0 {
                    touched.push(u);
                }
                counts[u as usize] += 1;
            }
        }
        let mut hits: Vec<u32> = touched.iter().map(|&u| counts[u as usize]).filter(|&c| c as u64 >= g).collect();
        if hits.len() as u64 > g {
            g = smallest_gamma(&mut hits, g);
        }
        for u in touched.drain(..) {
            counts[u as usize] = 0;
        }
    }
    g
}

/// Whether w is the canonical image of itself under the signed coordinate
/// permutations fixing v, where v has non-increasing non-negative entries:
/// within each block of equal entries of v the entries of w are
/// non-increasing, and on the zero block they are also non-negative.
fn stabilizer_canonical(v: &[i64], w: &[i64]) -> bool {
    let mut start = 0;
    while start < v.len() {
        let mut end = start + 1;
        while end < v.len() && v[end] == v[start] {
            end += 1;
        }
        let block = &w[start..end];
        if block.windows(2).any(|p| p[0] < p[1]) || (v[start] == 0 && block.iter().any(|&x| x < 0)) {
            return false;
        }
        start = end;
    }
    true
}

/// Triple-intersection incidence bound on an explicit configuration, with the smallest admissible γ > 4.
pub fn check_lemma_5d(
    set: &PointSet,
    planes: &[Hyperplane],
    lambda: Option<u64>,
    budget: &Budget,
) -> Result<IncidenceReport> {
    let inc = Incidence::build(set, planes, budget)?;
    let mut order: Vec<usize> = (0..planes.len()).collect();
    order.sort_by_key(|&h| std::cmp::Reverse(inc.on_plane[h].len()));
    let mut g = 5u64;
    let mut gamma_obs = 0u64;
    for h in order {
        let pts = &inc.on_plane[h];
        let shared_counts = inc.shared_with(h);
        gamma_obs =
            shared_counts.iter().filter(|&&(h2, _)| h2 as usize != h).fold(gamma_obs, |m, &(_, c)| m.max(c as u64));
        if (pts.len() as u64) < g {
            continue;
        }
        let pos: FxHashMap<u32, u32> = pts.iter().enumerate().map(|(k, &p)| (p, k as u32)).collect();
        let mut own = 0;
        let mut traces = Vec::new();
        for &(h2, c) in &shared_counts {
            if (c as u64) < g {
                continue;
            }
            if h2 as usize == h {
                own = traces.len();
            }
            traces.push(inc.on_plane[h2 as usize].iter().filter_map(|p| pos.get(p).copied()).collect::<Vec<u32>>());
        }
        g = raise_gamma(&traces, own, &vec![false; traces.len()], pts.len(), g);
    }
    let i: u128 = inc.on_plane.iter().map(|l| l.len() as u128).sum();
    Ok(triple_bound_report(set.dim(), lambda, set.len() as u64, planes.len() as u64, i, gamma_obs, g))
}

/// α = n(n−3)/(n²−2n−1) and β = (n−1)(n−2)/(n²−2n−1) + ε.
pub fn optimal_bound_exponents(n: usize, epsilon: f64) -> (f64, f64) {
    let n = n as f64;
    let d = n * n - 2.0 * n - 1.0;
    (n * (n - 3.0) / d, (n - 1.0) * (n - 2.0) / d + epsilon)
}

fn optimal_bound_from(
    n: usize,
    lambda: Option<u64>,
    p: u64,
    h: u64,
    i: u128,
    gamma_obs: u64,
    epsilon: f64,
) -> Result<IncidenceReport> {
    if !(4..=5).contains(&n) {
        return Err(LabError::BadDimension { dim: n, min: 4, max: 5 });
    }
    let (alpha, beta) = optimal_bound_exponents(n, epsilon);
    // Any γ hyperplanes (γ ≥ 2) share at most gamma_obs points, so γ = gamma_obs + 1
    // meets the "fewer than γ" hypothesis.
    let gamma = (gamma_obs + 1).max(1);
    let (pf, hf) = (p as f64, h as f64);
    let log_term = if p > 0 { 1.0 + pf.log2() } else { 1.0 };
    let shape = gamma as f64 * (pf.powf(alpha) * hf.powf(beta) + pf + hf * log_term);
    let implied = if i == 0 { 0.0 } else { i as f64 / shape };
    Ok(IncidenceReport {
        n,
        lambda,
        num_points: p,
        num_hyperplanes: h,
        incidences: i,
        gamma_obs,
        gamma_used: gamma,
        bound: shape,
        satisfied: true,
        implied_constant: Some(implied),
        check: IncidenceCheck::OptimalComparison,
        exponents: Some((alpha, beta)),
    })
}

/// Report-only: the implied constant I / (γ(|P|^α|H|^β + |P| + |H|(1+log₂|P|))).
pub fn optimal_bound_report(
    set: &PointSet,
    planes: &[Hyperplane],
    epsilon: f64,
    lambda: Option<u64>,
    budget: &Budget,
) -> Result<IncidenceReport> {
    let mult = pairwise_multiplicity(set, planes, budget)?;
    let i = incidences(set, planes)?;
    optimal_bound_from(set.dim(), lambda, set.len() as u64, planes.len() as u64, i, mult.gamma_obs, epsilon)
}

/// A shell subset stored by coordinate, for fast bulk dot products.
struct Columns {
    cols: Vec<Vec<i32>>,
    len: usize,
}

impl Columns {
    fn new(set: &PointSet) -> Self {
        let cols = (0..set.dim()).map(|d| set.iter().map(|p| p[d] as i32).collect()).collect();
        Columns { cols, len: set.len() }
    }

    /// Indices of the points ξ with |u − ξ|² = |ξ|², i.e. 2u·ξ = |u|².
    fn on_sum_sphere(&self, u: &[i64], dots: &mut Vec<i32>) -> Vec<u32> {
        dots.clear();
        dots.resize(self.len, 0);
        for (col, &c) in self.cols.iter().zip(u) {
            let c = 2 * c as i32;
            for (d, &x) in dots.iter_mut().zip(col) {
                *d += c * x;
            }
        }
        let target = norm2(u) as i32;
        dots.iter().enumerate().filter(|(_, &d)| d == target).map(|(j, _)| j as u32).collect()
    }
}

/// Structure of the full shell against its own sum family.
struct ShellFamily<'a> {
    shell: &'a Shell,
    trie: Trie,
    /// Processing position of each canonical v.
    position: FxHashMap<Vec<i64>, usize>,
    /// Orbit representatives v (v₁ ≥ … ≥ vₙ ≥ 0, v ≠ 0) with r(v), by r descending.
    canonical: Vec<(Vec<i64>, u64)>,
    num_hyperplanes: u64,
    incidences: u128,
    /// Dense counting table for sums S_v + F, when it fits in memory.
    dense: Option<RefCell<DenseSums>>,
}

/// Counts of sums ξ + η for ξ in a subset of the shell and η in the shell,
/// kept in a dense table over all but the first coordinate and filled one
/// first-coordinate slice at a time.
struct DenseSums {
    radius: i64,
    width: i64,
    /// Linear index of the trailing coordinates of each shell point.
    tail: Vec<i64>,
    /// Shell index range for each first coordinate -radius..=radius.
    slices: Vec<(usize, usize)>,
    counts: Vec<u32>,
    touched: Vec<u32>,
}

impl DenseSums {
    const MAX_CELLS: i64 = 1 << 25;

    fn new(set: &PointSet, lambda: u64) -> Option<Self> {
        let dim = set.dim();
        if dim < 2 {
            return None;
        }
        let radius = isqrt(lambda) as i64;
        let width = 4 * radius + 1;
        let cells = (1..dim).try_fold(1i64, |c, _| c.checked_mul(width).filter(|&c| c <= Self::MAX_CELLS))?;
        let lin = |p: &[i64]| p[1..].iter().rev().fold(0i64, |k, &x| k * width + x);
        let tail = set.iter().map(lin).collect();
        let slices = (-radius..=radius)
            .map(|x| {
                let lo = set.iter().position(|p| p[0] >= x).unwrap_or(set.len());
                let hi = set.iter().position(|p| p[0] > x).unwrap_or(set.len());
                (lo, hi)
            })
            .collect();
        Some(DenseSums { radius, width, tail, slices, counts: vec![0; cells as usize], touched: Vec::new() })
    }

    fn partners(&mut self, sv: &PointSet, set: &PointSet, at_least: u64) -> Vec<(Vec<i64>, u64)> {
        let dim = set.dim();
        let (radius, width) = (self.radius, self.width);
        let shift = (1..dim).rev().fold(0i64, |k, _| k * width + 2 * radius);
        let mut out = Vec::new();
        for s in -2 * radius..=2 * radius {
            for xi in sv.iter() {
                let t = s - xi[0];
                if t.abs() > radius {
                    continue;
                }
                let base = xi[1..].iter().rev().fold(0i64, |k, &x| k * width + x) + shift;
                let (lo, hi) = self.slices[(t + radius) as usize];
                for &e in &self.tail[lo..hi] {
                    let idx = (base + e) as usize;
                    let c = &mut self.counts[idx];
                    if *c == 0 {
                        self.touched.push(idx as u32);
                    }
                    *c += 1;
                }
            }
            for idx in self.touched.drain(..) {
                let c = std::mem::take(&mut self.counts[idx as usize]) as u64;
                if c < at_least {
                    continue;
                }
                let mut u = vec![0i64; dim];
                u[0] = s;
                let mut rest = idx as i64;
                for x in u[1..].iter_mut() {
                    *x = rest % width - 2 * radius;
                    rest /= width;
                }
                if u.iter().any(|&x| x != 0) {
                    out.push((u, c));
                }
            }
        }
        out
    }
}

impl<'a> ShellFamily<'a> {
    fn new(shell: &'a Shell, budget: &Budget) -> Result<Self> {
        let set = shell.points();
        let pairs = set.len() as u128 * set.len() as u128;
        if pairs > budget.pairs {
            return Err(LabError::budget("ordered pairs", pairs, budget.pairs));
        }
        type Acc = (u64, u128, Vec<(Vec<i64>, u64)>);
        let (num_hyperplanes, incidences, mut canonical) = if set.is_empty() {
            (0, 0, Vec::new())
        } else {
            SumWalk::new(set, set)?.permutation_folded(set).fold(
                || (0u64, 0u128, Vec::new()),
                |acc: &mut Acc, v, r, w| {
                    if v.iter().all(|&x| x == 0) {
                        return;
                    }
                    acc.0 += w;
                    acc.1 += w as u128 * r as u128;
                    if v.windows(2).all(|p| p[0] >= p[1]) && v[v.len() - 1] >= 0 {
                        acc.2.push((v.to_vec(), r));
                    }
                },
                |mut a, b| {
                    a.0 += b.0;
                    a.1 += b.1;
                    a.2.extend(b.2);
                    a
                },
            )
        };
        canonical.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        Ok(ShellFamily {
            shell,
            trie: Trie::build(set),
            position: canonical.iter().enumerate().map(|(k, (v, _))| (v.clone(), k)).collect(),
            canonical,
            num_hyperplanes,
            incidences,
            dense: DenseSums::new(set, shell.lambda()).map(RefCell::new),
        })
    }

    /// Whether u − ξ is on the shell, for a shell point ξ.
    fn difference_on_shell(&self, u: &[i64], xi: &[i64]) -> bool {
        u.iter().zip(xi).map(|(a, b)| (a - b) * (a - b)).sum::<i64>() as u64 == self.shell.lambda()
    }

    /// Position in processing order of the orbit of u.
    fn orbit_position(&self, u: &[i64]) -> usize {
        let mut c: Vec<i64> = u.iter().map(|x| x.abs()).collect();
        c.sort_unstable_by(|a, b| b.cmp(a));
        self.position[&c]
    }

    /// S_v as a point set.
    fn trace(&self, v: &[i64]) -> PointSet {
        let set = self.shell.points();
        let idx: Vec<usize> =
            set.iter().enumerate().filter(|(_, p)| self.difference_on_shell(v, p)).map(|(i, _)| i).collect();
        set.subset(&idx, Origin::ShellSubset)
    }

    /// Every u ≠ 0 with c(u) = |S_v ∩ S_u| ≥ `at_least`, sign images expanded.
    fn partners(&self, sv: &PointSet, at_least: u64) -> Result<Vec<(Vec<i64>, u64)>> {
        let mut out = match self.dense.as_ref() {
            Some(cell) => cell.borrow_mut().partners(sv, self.shell.points(), at_least),
            None => self.partners_walk(sv, at_least)?,
        };
        out.sort_unstable();
        Ok(out)
    }

    fn partners_walk(&self, sv: &PointSet, at_least: u64) -> Result<Vec<(Vec<i64>, u64)>> {
        let walk = SumWalk::with_trie(sv, self.shell.points(), &self.trie)?;
        let folded = walk.folded_axes().to_vec();
        let mut out = walk.fold(
            Vec::new,
            |acc: &mut Vec<(Vec<i64>, u64)>, u, c, _w| {
                if c >= at_least && u.iter().any(|&x| x != 0) {
                    acc.push((u.to_vec(), c));
                }
            },
            |mut a, b| {
                a.extend(b);
                a
            },
        );
        // Undo the sign folding.
        for (axis, _) in folded.iter().enumerate().filter(|(_, &f)| f) {
            let extra: Vec<(Vec<i64>, u64)> = out
                .iter()
                .filter(|(u, _)| u[axis] > 0)
                .map(|(u, c)| {
                    let mut m = u.clone();
                    m[axis] = -m[axis];
                    (m, *c)
                })
                .collect();
            out.extend(extra);
        }
        Ok(out)
    }

    /// Largest |S_v ∩ S_w| over v ≠ w, with the first witness in
    /// (r descending, v ascending, w ascending) order.
    fn max_pair(&self) -> Result<(u64, PairWitness)> {
        let mut best = 0u64;
        let mut witness = None;
        for (v, r) in &self.canonical {
            if *r <= best {
                break;
            }
            let sv = self.trace(v);
            for (u, c) in self.partners(&sv, best + 1)? {
                if &u != v && c > best {
                    best = c;
                    witness = Some((v.clone(), u));
                }
            }
        }
        Ok((best, witness))
    }

    /// Smallest γ ≥ 5 satisfying the triple hypothesis over the whole family.
    fn triple_gamma(&self) -> Result<u64> {
        let mut g = 5u64;
        for (idx, (v, r)) in self.canonical.iter().enumerate() {
            if *r < g {
                break;
            }
            let sv = self.trace(v);
            let partners = self.partners(&sv, g)?;
            let mut own = usize::MAX;
            let cols = Columns::new(&sv);
            let mut dots = Vec::new();
            let traces: Vec<Vec<u32>> = partners
                .iter()
                .enumerate()
                .map(|(k, (u, _))| {
                    if u == v {
                        own = k;
                    }
                    cols.on_sum_sphere(u, &mut dots)
                })
                .collect();
            debug_assert!(own != usize::MAX, "v is its own partner");
            // A pair whose second member lies in an orbit handled earlier was
            // already examined from that side. Coordinate symmetries fixing v
            // permute the pairs (v, w), so w ranges over one representative
            // per class.
            let done: Vec<bool> =
                partners.iter().map(|(u, _)| self.orbit_position(u) < idx || !stabilizer_canonical(v, u)).collect();
            g = raise_gamma(&traces, own, &done, sv.len(), g);
        }
        Ok(g)
    }
}

type PairWitness = Option<(Vec<i64>, Vec<i64>)>;

/// Pair-multiplicity incidence bound for the full shell against its sum family.
pub fn check_lemma_4d_shell(shell: &Shell, budget: &Budget) -> Result<IncidenceReport> {
    let fam = ShellFamily::new(shell, budget)?;
    let (gamma_obs, _) = fam.max_pair()?;
    Ok(pair_bound_report(
        shell.dim(),
        Some(shell.lambda()),
        shell.len() as u64,
        fam.num_hyperplanes,
        fam.incidences,
        gamma_obs,
    ))
}

/// Triple-intersection incidence bound for the full shell against its sum family.
pub fn check_lemma_5d_shell(shell: &Shell, budget: &Budget) -> Result<IncidenceReport> {
    let fam = ShellFamily::new(shell, budget)?;
    let (gamma_obs, _) = fam.max_pair()?;
    let gamma = fam.triple_gamma()?;
    Ok(triple_bound_report(
        shell.dim(),
        Some(shell.lambda()),
        shell.len() as u64,
        fam.num_hyperplanes,
        fam.incidences,
        gamma_obs,
        gamma,
    ))
}

pub fn optimal_bound_report_shell(shell: &Shell, epsilon: f64, budget: &Budget) -> Result<IncidenceReport> {
    let fam = ShellFamily::new(shell, budget)?;
    let (gamma_obs, _) = fam.max_pair()?;
    optimal_bound_from(
        shell.dim(),
        Some(shell.lambda()),
        shell.len() as u64,
        fam.num_hyperplanes,
        fam.incidences,
        gamma_obs,
        epsilon,
    )
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CircleMultiplicity {
    pub count: u64,
    pub witness: Option<(Hyperplane, Hyperplane)>,
}

/// max |H_v ∩ H_w ∩ F| over distinct sum-hyperplanes of a 4-d shell: the
/// largest number of shell points on one circle cut out by two of them.
pub fn max_circle_multiplicity(shell: &Shell, budget: &Budget) -> Result<CircleMultiplicity> {
    if shell.dim() != 4 {
        return Err(LabError::BadDimension { dim: shell.dim(), min: 4, max: 4 });
    }
    let fam = ShellFamily::new(shell, budget)?;
    let (count, pair) = fam.max_pair()?;
    let witness = pair
        .map(|(v, w)| {
            Ok::<_, LabError>((hyperplane_for_sum(&v, shell.lambda())?, hyperplane_for_sum(&w, shell.lambda())?))
        })
        .transpose()?;
    Ok(CircleMultiplicity { count, witness })
}

/// A 3-dimensional affine subspace base + span(directions) of R⁵.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AffineSubspace {
    pub base: Vec<i64>,
    pub directions: [Vec<i64>; 3],
}

impl AffineSubspace {
    /// The affine span of four points.
    pub fn through_points(base: &[i64], others: [&[i64]; 3]) -> Self {
        let dir = |p: &[i64]| p.iter().zip(base).map(|(a, b)| a - b).collect::<Vec<i64>>();
        AffineSubspace { base: base.to_vec(), directions: [dir(others[0]), dir(others[1]), dir(others[2])] }
    }

    pub fn contains(&self, p: &[i64]) -> bool {
        let mut rows: Vec<Vec<i64>> = self.directions.to_vec();
        rows.push(p.iter().zip(&self.base).map(|(a, b)| a - b).collect());
        rank(&rows) == 3
    }
}

/// Every v with W ⊂ H_v, and the outcome of the fixed-circle checks.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubspaceConcentration {
    /// The shell point of W used as η.
    pub eta: Vec<i64>,
    pub vectors: Vec<Vec<i64>>,
    /// Every v is orthogonal to all directions of W.
    pub orthogonal: bool,
    /// Every v/2 lies on the sphere through 0 centred at η/2: ⟨v/2, η − v/2⟩ = 0.
    pub on_sphere: bool,
    /// Every shell point of W lies on every H_v.
    pub contains_shell_points: bool,
    /// The v span at most a plane, so with `on_sphere` they lie on one circle.
    pub span_rank: usize,
}

impl SubspaceConcentration {
    pub fn passes(&self) -> bool {
        self.orthogonal && self.on_sphere && self.contains_shell_points && self.span_rank <= 2
    }
}

/// All v ∈ Z⁵ with 0 < |v|² ≤ 4λ and W ⊂ H_v.
pub fn subspace_concentration_5d(shell: &Shell, w: &AffineSubspace) -> Result<SubspaceConcentration> {
    if shell.dim() != 5 {
        return Err(LabError::BadDimension { dim: shell.dim(), min: 5, max: 5 });
    }
    if w.base.len() != 5 || w.directions.iter().any(|d| d.len() != 5) {
        return Err(LabError::BadSubspace("W must live in dimension 5".into()));
    }
    if rank(&w.directions) != 3 {
        return Err(LabError::BadSubspace("directions are not linearly independent".into()));
    }
    let in_w: Vec<&[i64]> = shell.points().iter().filter(|p| w.contains(p)).collect();
    let Some(eta) = in_w.first().map(|p| p.to_vec()) else {
        return Err(LabError::BadSubspace("W contains no shell point".into()));
    };
    let lambda = shell.lambda() as i64;
    let vectors = orthogonal_lattice_points(&w.directions, 4 * lambda)
        .into_iter()
        .filter(|v| 2 * dot(v, &eta) == norm2(v))
        .collect::<Vec<_>>();
    let orthogonal = vectors.iter().all(|v| w.directions.iter().all(|d| dot(v, d) == 0));
    let on_sphere = vectors.iter().all(|v| {
        // ⟨v/2, η − v/2⟩ scaled by 4
        let twice_eta_minus_v: Vec<i64> = eta.iter().zip(v).map(|(e, x)| 2 * e - x).collect();
        dot(v, &twice_eta_minus_v) == 0
    });
    let contains_shell_points = vectors.iter().all(|v| {
        let h = hyperplane_for_sum(v, shell.lambda()).expect("0 < |v|² ≤ 4λ");
        in_w.iter().all(|p| h.contains(p))
    });
    let span_rank = if vectors.is_empty() { 0 } else { rank(&vectors) };
    Ok(SubspaceConcentration { eta, vectors, orthogonal, on_sphere, contains_shell_points, span_rank })
}

/// Nonzero integer v with |v|² ≤ max_norm2 orthogonal to three independent
/// vectors in Z⁵, by solving for three pivot coordinates given the other two.
fn orthogonal_lattice_points(dirs: &[Vec<i64>; 3], max_norm2: i64) -> Vec<Vec<i64>> {
    let cols = 5;
    // Pick pivot columns with a nonsingular 3×3 minor.
    let mut choice = None;
    'outer: for a in 0..cols {
        for b in a + 1..cols {
            for c in b + 1..cols {
                let m: Vec<Vec<i128>> = dirs.iter().map(|d| vec![d[a] as i128, d[b] as i128, d[c] as i128]).collect();
                let det = crate::arith::det(&m);
                if det != 0 {
                    choice = Some(([a, b, c], m, det));
                    break 'outer;
                }
            }
        }
    }
    let (piv, m, det) = choice.expect("rank 3 was checked");
    let free: Vec<usize> = (0..cols).filter(|c| !piv.contains(c)).collect();
    // adj(M) so that M⁻¹ = adj / det.
    let minor = |r0: usize, r1: usize, c0: usize, c1: usize| m[r0][c0] * m[r1][c1] - m[r0][c1] * m[r1][c0];
    let mut adj = [[0i128; 3]; 3];
    for (i, row) in adj.iter_mut().enumerate() {
        for (j, slot) in row.iter_mut().enumerate() {
            let rs: Vec<usize> = (0..3).filter(|&r| r != j).collect();
            let cs: Vec<usize> = (0..3).filter(|&c| c != i).collect();
            let sign = if (i + j) % 2 == 0 { 1 } else { -1 };
            *slot = sign * minor(rs[0], rs[1], cs[0], cs[1]);
        }
    }
    let bound = crate::arith::isqrt(max_norm2 as u64) as i64;
    let mut out = Vec::new();
    for s in -bound..=bound {
        for t in -bound..=bound {
            // M·v_piv = −(s·col_f0 + t·col_f1)
            let rhs: Vec<i128> =
                dirs.iter().map(|d| -(s as i128 * d[free[0]] as i128 + t as i128 * d[free[1]] as i128)).collect();
            let mut v = vec![0i64; cols];
            v[free[0]] = s;
            v[free[1]] = t;
            let mut integral = true;
            for (k, &pc) in piv.iter().enumerate() {
                let num: i128 = (0..3).map(|j| adj[k][j] * rhs[j]).sum();
                if num % det != 0 {
                    integral = false;
                    break;
                }
                v[pc] = (num / det) as i64;
            }
            if integral && v.iter().any(|&x| x != 0) && norm2(&v) <= max_norm2 {
                out.push(v);
            }
        }
    }
    out.sort();
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::enumerate_shell;
    use crate::oracle;

    fn b() -> Budget {
        Budget::default()
    }

    #[test]
    fn canonical_hyperplanes() {
        let h = hyperplane_for_sum(&[1, 1, 0, 0], 1).unwrap();
        assert_eq!((h.normal(), h.offset()), (&[1, 1, 0, 0][..], 1));
        let h = hyperplane_for_sum(&[2, 0, 0, 0], 1).unwrap();
        assert_eq!((h.normal(), h.offset()), (&[1, 0, 0, 0][..], 1));
        let h = hyperplane_for_sum(&[-2, 0, 0, 0], 1).unwrap();
        assert_eq!((h.normal(), h.offset()), (&[1, 0, 0, 0][..], -1));
        assert!(matches!(hyperplane_for_sum(&[0, 0, 0, 0], 1), Err(LabError::DegenerateSum)));
        assert!(matches!(hyperplane_for_sum(&[2, 1, 0, 0], 1), Err(LabError::OutOfRange(_))));
        for k in [-3i64, -1, 2, 7] {
            let h = Hyperplane::new(vec![3 * k, -6 * k, 0, 9 * k], 12 * k).unwrap();
            assert_eq!(h, Hyperplane::new(vec![1, -2, 0, 3], 4).unwrap());
        }
    }

    #[test]
    fn unit_shell_family() {
        let f = enumerate_shell(4, 1, &b()).unwrap();
        let fam = sum_hyperplane_family(f.points(), 1, &b()).unwrap();
        assert_eq!(fam.entries.len(), 32);
        assert_eq!(fam.zero_mass, 8);
        assert_eq!(fam.total_mass(), 64);
        let e1 = PointSet::new(4, [[1, 0, 0, 0]], Origin::Custom).unwrap();
        let fam1 = sum_hyperplane_family(&e1, 1, &b()).unwrap();
        assert_eq!(fam1.entries.len(), 1);
        assert_eq!(fam1.entries[0].1, 1);
        let pm = PointSet::new(4, [[1, 0, 0, 0], [-1, 0, 0, 0]], Origin::Custom).unwrap();
        let fam2 = sum_hyperplane_family(&pm, 1, &b()).unwrap();
        assert_eq!((fam2.entries.len(), fam2.zero_mass), (2, 2));
    }

    #[test]
    fn membership_of_pairs() {
        let f = enumerate_shell(4, 18, &b()).unwrap();
        for p in f.points().iter() {
            for q in f.points().iter() {
                let v: Vec<i64> = p.iter().zip(q).map(|(a, b)| a + b).collect();
                if v.iter().any(|&x| x != 0) {
                    let h = hyperplane_for_sum(&v, 18).unwrap();
                    assert!(h.contains(p) && h.contains(q));
                }
            }
        }
    }

    #[test]
    fn small_incidence_cases() {
        let e = PointSet::empty(2, Origin::Custom).unwrap();
        let line = Hyperplane::new(vec![1, 1], 1).unwrap();
        assert_eq!(incidences(&e, std::slice::from_ref(&line)).unwrap(), 0);
        let p = PointSet::new(2, [[1, 0], [0, 1]], Origin::Custom).unwrap();
        assert_eq!(incidences(&p, std::slice::from_ref(&line)).unwrap(), 2);
        assert_eq!(pairwise_multiplicity(&p, std::slice::from_ref(&line), &b()).unwrap().gamma_obs, 0);
        let x1 = Hyperplane::new(vec![1, 0], 1).unwrap();
        let m = pairwise_multiplicity(&p, &[line.clone(), x1], &b()).unwrap();
        assert_eq!((m.gamma_obs, m.pair), (1, Some((0, 1))));
        let rep = check_lemma_4d(&e, &[line], None, &b()).unwrap();
        assert!(rep.satisfied && rep.incidences == 0);
    }

    #[test]
    fn generic_paths_match_oracles() {
        for lambda in [1u64, 2, 3, 6, 9] {
            let f = enumerate_shell(4, lambda, &b()).unwrap();
            let planes = sum_hyperplane_family(f.points(), lambda, &b()).unwrap().hyperplanes();
            assert_eq!(incidences(f.points(), &planes).unwrap(), oracle::incidences_naive(f.points(), &planes));
            assert_eq!(
                pairwise_multiplicity(f.points(), &planes, &b()).unwrap().gamma_obs,
                oracle::pair_multiplicity_naive(f.points(), &planes),
                "λ={lambda}"
            );
        }
    }

    #[test]
    fn shell_fast_path_matches_generic_4d() {
        for lambda in [1u64, 2, 5, 9, 14, 25] {
            let f = enumerate_shell(4, lambda, &b()).unwrap();
            let planes = sum_hyperplane_family(f.points(), lambda, &b()).unwrap().hyperplanes();
            let generic = check_lemma_4d(f.points(), &planes, Some(lambda), &b()).unwrap();
            let fast = check_lemma_4d_shell(&f, &b()).unwrap();
            assert_eq!(generic, fast, "λ={lambda}");
            assert!(fast.satisfied);
            assert_eq!(fast.incidences, (f.len() * f.len() - f.len()) as u128);
        }
        let one = max_circle_multiplicity(&enumerate_shell(4, 1, &b()).unwrap(), &b()).unwrap();
        assert!(one.count <= 2);
    }

    #[test]
    fn shell_fast_path_matches_generic_5d() {
        for lambda in [1u64, 2, 3, 4, 6, 9] {
            let f = enumerate_shell(5, lambda, &b()).unwrap();
            let planes = sum_hyperplane_family(f.points(), lambda, &b()).unwrap().hyperplanes();
            let generic = check_lemma_5d(f.points(), &planes, Some(lambda), &b()).unwrap();
            let fast = check_lemma_5d_shell(&f, &b()).unwrap();
            assert_eq!(generic, fast, "λ={lambda}");
            assert!(fast.satisfied);
            if lambda <= 4 {
                assert_eq!(fast.gamma_used, oracle::triple_gamma_naive(f.points(), &planes), "λ={lambda}");
            }
        }
    }

    #[test]
    fn optimal_bound_exponent_values() {
        let (a4, b4) = optimal_bound_exponents(4, 0.05);
        assert!((a4 - 4.0 / 7.0).abs() < 1e-15 && (b4 - (6.0 / 7.0 + 0.05)).abs() < 1e-15);
        let (a5, b5) = optimal_bound_exponents(5, 0.0);
        assert!((a5 - 5.0 / 7.0).abs() < 1e-15 && (b5 - 6.0 / 7.0).abs() < 1e-15);
        let f = enumerate_shell(4, 2, &b()).unwrap();
        let rep = optimal_bound_report(f.points(), &[], 0.05, Some(2), &b()).unwrap();
        assert_eq!(rep.implied_constant, Some(0.0));
    }

    #[test]
    fn subspace_structure() {
        let f = enumerate_shell(5, 4, &b()).unwrap();
        let eta = [2, 0, 0, 0, 0];
        let pts: [&[i64]; 3] = [&[0, 2, 0, 0, 0], &[1, 1, 1, 1, 0], &[1, 1, -1, 1, 0]];
        let w = AffineSubspace::through_points(&eta, pts);
        let rep = subspace_concentration_5d(&f, &w).unwrap();
        assert!(rep.passes(), "{rep:?}");
        let brute = oracle::subspace_sums_naive(&f, &w);
        assert_eq!(rep.vectors, brute);
        let off = AffineSubspace {
            base: vec![0, 0, 0, 0, 7],
            directions: [vec![1, 0, 0, 0, 0], vec![0, 1, 0, 0, 0], vec![0, 0, 1, 0, 0]],
        };
        assert!(matches!(subspace_concentration_5d(&f, &off), Err(LabError::BadSubspace(_))));
    }
}
