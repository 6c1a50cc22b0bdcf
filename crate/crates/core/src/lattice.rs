//! Integer points on spheres and paraboloid slabs.
//!
//! Point sets are stored flat (`dim` coordinates per point) and kept in
//! strictly ascending lexicographic order, which makes membership a binary
//! search and gives every downstream report a canonical ordering.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::arith::{isqrt, multinomial_arrangements};
use crate::budget::Budget;
use crate::error::{LabError, Result};
use crate::par;

pub mod cache;

pub const MIN_DIM: usize = 2;
pub const MAX_DIM: usize = 8;

pub(crate) fn check_dim(dim: usize) -> Result<()> {
    if (MIN_DIM..=MAX_DIM).contains(&dim) {
        Ok(())
    } else {
        Err(LabError::BadDimension { dim, min: MIN_DIM, max: MAX_DIM })
    }
}

/// A point of Zⁿ, 2 ≤ n ≤ 8.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LatticePoint(Vec<i64>);

impl LatticePoint {
    pub fn new(coords: Vec<i64>) -> Result<Self> {
        check_dim(coords.len())?;
        Ok(LatticePoint(coords))
    }

    /// `sign · e_axis` in dimension `dim`.
    pub fn unit(dim: usize, axis: usize, sign: i64) -> Self {
        let mut c = vec![0; dim];
        c[axis] = sign;
        LatticePoint(c)
    }

    pub fn zero(dim: usize) -> Self {
        LatticePoint(vec![0; dim])
    }

    pub fn coords(&self) -> &[i64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn norm2(&self) -> i64 {
        crate::arith::norm2(&self.0)
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&x| x == 0)
    }
}

impl From<&[i64]> for LatticePoint {
    fn from(c: &[i64]) -> Self {
        LatticePoint(c.to_vec())
    }
}

impl fmt::Display for LatticePoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, x) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{x}")?;
        }
        write!(f, ")")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Origin {
    ShellSubset,
    Paraboloid,
    Custom,
}

/// A finite, duplicate-free, lexicographically sorted set of lattice points.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PointSet {
    dim: usize,
    coords: Vec<i64>,
    origin: Origin,
}

impl PointSet {
    /// Build from arbitrary points; sorts and drops duplicates.
    pub fn new<I, P>(dim: usize, points: I, origin: Origin) -> Result<Self>
    where
        I: IntoIterator<Item = P>,
        P: AsRef<[i64]>,
    {
        check_dim(dim)?;
        let mut rows: Vec<Vec<i64>> = Vec::new();
        for p in points {
            let p = p.as_ref();
            if p.len() != dim {
                return Err(LabError::DimensionMismatch { expected: dim, got: p.len() });
            }
            rows.push(p.to_vec());
        }
        rows.sort_unstable();
        rows.dedup();
        Ok(PointSet { dim, coords: rows.concat(), origin })
    }

    pub fn empty(dim: usize, origin: Origin) -> Result<Self> {
        check_dim(dim)?;
        Ok(PointSet { dim, coords: Vec::new(), origin })
    }

    /// Caller guarantees the flat buffer is sorted and duplicate-free.
    pub(crate) fn from_sorted_flat(dim: usize, coords: Vec<i64>, origin: Origin) -> Self {
        debug_assert_eq!(coords.len() % dim, 0);
        let set = PointSet { dim, coords, origin };
        debug_assert!(set.is_strictly_sorted());
        set
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn origin(&self) -> Origin {
        self.origin
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn point(&self, i: usize) -> &[i64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> std::slice::ChunksExact<'_, i64> {
        self.coords.chunks_exact(self.dim)
    }

    pub fn flat(&self) -> &[i64] {
        &self.coords
    }

    pub fn to_points(&self) -> Vec<LatticePoint> {
        self.iter().map(LatticePoint::from).collect()
    }

    pub fn index_of(&self, p: &[i64]) -> Option<usize> {
        if p.len() != self.dim {
            return None;
        }
        let (mut lo, mut hi) = (0usize, self.len());
        while lo < hi {
            let mid = (lo + hi) / 2;
            match self.point(mid).cmp(p) {
                std::cmp::Ordering::Less => lo = mid + 1,
                std::cmp::Ordering::Greater => hi = mid,
                std::cmp::Ordering::Equal => return Some(mid),
            }
        }
        None
    }

    pub fn contains(&self, p: &[i64]) -> bool {
        self.index_of(p).is_some()
    }

    pub fn is_strictly_sorted(&self) -> bool {
        self.iter().zip(self.iter().skip(1)).all(|(a, b)| a < b)
    }

    /// The points at the given indices, as a new set of the given origin.
    pub fn subset(&self, indices: &[usize], origin: Origin) -> PointSet {
        let mut idx = indices.to_vec();
        idx.sort_unstable();
        idx.dedup();
        let coords = idx.iter().flat_map(|&i| self.point(i).iter().copied()).collect();
        PointSet::from_sorted_flat(self.dim, coords, origin)
    }

    pub fn negated(&self) -> PointSet {
        PointSet::new(self.dim, self.iter().map(|p| p.iter().map(|x| -x).collect::<Vec<_>>()), self.origin)
            .expect("same dimension")
    }

    pub fn translated(&self, by: &[i64]) -> Result<PointSet> {
        if by.len() != self.dim {
            return Err(LabError::DimensionMismatch { expected: self.dim, got: by.len() });
        }
        let shifted = self.iter().map(|p| p.iter().zip(by).map(|(a, b)| a + b).collect::<Vec<_>>());
        PointSet::new(self.dim, shifted, Origin::Custom)
    }

    /// Largest absolute coordinate, per axis.
    pub fn coordinate_bounds(&self) -> Vec<i64> {
        let mut b = vec![0i64; self.dim];
        for p in self.iter() {
            for (m, x) in b.iter_mut().zip(p) {
                *m = (*m).max(x.abs());
            }
        }
        b
    }

    /// Whether flipping the sign of coordinate `axis` maps the set to itself.
    pub fn is_sign_symmetric(&self, axis: usize) -> bool {
        let mut q = vec![0i64; self.dim];
        self.iter().all(|p| {
            q.copy_from_slice(p);
            q[axis] = -q[axis];
            self.contains(&q)
        })
    }
}

/// F_{n,λ}: all integer points of squared norm λ in dimension n.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Shell {
    lambda: u64,
    set: PointSet,
}

impl Shell {
    pub fn n(&self) -> usize {
        self.set.dim
    }

    pub fn dim(&self) -> usize {
        self.set.dim
    }

    pub fn lambda(&self) -> u64 {
        self.lambda
    }

    /// `floor(√λ) + 1`.
    pub fn scale(&self) -> u64 {
        crate::arith::scale_n(self.lambda)
    }

    pub fn points(&self) -> &PointSet {
        &self.set
    }

    pub fn len(&self) -> usize {
        self.set.len()
    }

    pub fn is_empty(&self) -> bool {
        self.set.is_empty()
    }

    pub fn into_point_set(self) -> PointSet {
        self.set
    }

    pub(crate) fn from_parts(lambda: u64, set: PointSet) -> Self {
        Shell { lambda, set }
    }

    /// Orbit representatives under signed coordinate permutations: the
    /// points with `x₁ ≥ x₂ ≥ … ≥ xₙ ≥ 0`, each with the size of its orbit.
    pub fn orbit_representatives(&self) -> Vec<(usize, u128)> {
        self.set
            .iter()
            .enumerate()
            .filter(|(_, p)| p.windows(2).all(|w| w[0] >= w[1]) && p[p.len() - 1] >= 0)
            .map(|(i, p)| (i, orbit_size(p)))
            .collect()
    }
}

/// Size of the orbit of `p` under the hyperoctahedral group.
pub fn orbit_size(p: &[i64]) -> u128 {
    let mut abs: Vec<u64> = p.iter().map(|x| x.unsigned_abs()).collect();
    abs.sort_unstable();
    let nonzero = abs.iter().filter(|&&x| x != 0).count() as u32;
    (1u128 << nonzero) * multinomial_arrangements(&abs)
}

/// Exact |F_{n,λ}| by iterated convolution with the squares, without
/// materializing any point.
pub fn shell_size(n: usize, lambda: u64) -> Result<u128> {
    check_dim(n)?;
    Ok(count_representations(n, lambda))
}

fn count_representations(n: usize, lambda: u64) -> u128 {
    let l = lambda as usize;
    let root = isqrt(lambda) as usize;
    let squares: Vec<usize> = (0..=root).map(|x| x * x).collect();
    // r[t] = number of representations of t as a sum of k squares, t ≤ λ.
    let mut r = vec![0u128; l + 1];
    for (x, &s) in squares.iter().enumerate() {
        r[s] += if x == 0 { 1 } else { 2 };
    }
    for _ in 1..n.saturating_sub(1) {
        let mut next = vec![0u128; l + 1];
        for (t, slot) in next.iter_mut().enumerate() {
            let mut acc = 0u128;
            for (x, &s) in squares.iter().enumerate() {
                if s > t {
                    break;
                }
                let w = if x == 0 { 1 } else { 2 };
                acc += w * r[t - s];
            }
            *slot = acc;
        }
        r = next;
    }
    squares.iter().enumerate().map(|(x, &s)| if x == 0 { r[l - s] } else { 2 * r[l - s] }).sum()
}

/// Shell size used for budget decisions: exact when cheap, a generous
/// volume bound otherwise.
fn estimated_shell_size(n: usize, lambda: u64) -> u128 {
    if lambda <= 200_000 {
        return count_representations(n, lambda);
    }
    // Surface measure of the sphere of radius √λ in dimension n, doubled.
    let nf = n as f64;
    let gamma_half_n = gamma_half_integer(nf / 2.0);
    let est = 2.0 * std::f64::consts::PI.powf(nf / 2.0) / gamma_half_n * (lambda as f64).powf(nf / 2.0 - 1.0);
    (2.0 * est).ceil() as u128
}

/// Γ(x) for x a positive half-integer.
fn gamma_half_integer(x: f64) -> f64 {
    let mut acc = 1.0;
    let mut y = x;
    while y > 1.0 {
        y -= 1.0;
        acc *= y;
    }
    if (y - 0.5).abs() < 1e-12 {
        acc * std::f64::consts::PI.sqrt()
    } else {
        acc
    }
}

/// Enumerate F_{n,λ} in lexicographic order.
pub fn enumerate_shell(n: usize, lambda: u64, budget: &Budget) -> Result<Shell> {
    check_dim(n)?;
    let est = estimated_shell_size(n, lambda);
    if est > budget.points {
        return Err(LabError::budget("shell points", est, budget.points));
    }
    let root = isqrt(lambda) as i64;
    let firsts: Vec<i64> = (-root..=root).collect();
    let chunks = par::map_slice(&firsts, |&x1| {
        let rem = lambda - (x1 * x1) as u64;
        let mut out = Vec::new();
        let mut prefix = Vec::with_capacity(n);
        prefix.push(x1);
        descend(n - 1, rem, &mut prefix, &mut out);
        out
    });
    let coords = chunks.concat();
    Ok(Shell { lambda, set: PointSet::from_sorted_flat(n, coords, Origin::ShellSubset) })
}

/// Coordinate-by-coordinate descent; coordinate i ranges over |xᵢ| ≤ √remaining.
fn descend(dims_left: usize, rem: u64, prefix: &mut Vec<i64>, out: &mut Vec<i64>) {
    if dims_left == 1 {
        if let Some(r) = crate::arith::exact_sqrt(rem) {
            let r = r as i64;
            out.extend_from_slice(prefix);
            out.push(-r);
            if r != 0 {
                out.extend_from_slice(prefix);
                out.push(r);
            }
        }
        return;
    }
    let root = isqrt(rem) as i64;
    for x in -root..=root {
        prefix.push(x);
        descend(dims_left - 1, rem - (x * x) as u64, prefix, out);
        prefix.pop();
    }
}

/// P³_N: the points (ξ₁, ξ₂, ξ₃, ξ₁² + ξ₂² + ξ₃²) with |ξᵢ| ≤ N.
pub fn enumerate_paraboloid(big_n: u64, budget: &Budget) -> Result<PointSet> {
    let side = 2 * big_n as u128 + 1;
    let size = side * side * side;
    if size > budget.points {
        return Err(LabError::budget("paraboloid points", size, budget.points));
    }
    let r = big_n as i64;
    let mut coords = Vec::with_capacity(4 * size as usize);
    for a in -r..=r {
        for b in -r..=r {
            for c in -r..=r {
                coords.extend_from_slice(&[a, b, c, a * a + b * b + c * c]);
            }
        }
    }
    Ok(PointSet::from_sorted_flat(4, coords, Origin::Paraboloid))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute(n: usize, lambda: u64) -> Vec<Vec<i64>> {
        let r = isqrt(lambda) as i64;
        let side = (2 * r + 1) as usize;
        let mut out = Vec::new();
        let total = side.pow(n as u32);
        for idx in 0..total {
            let mut k = idx;
            let mut p = vec![0i64; n];
            for c in p.iter_mut().rev() {
                *c = (k % side) as i64 - r;
                k /= side;
            }
            if p.iter().map(|x| x * x).sum::<i64>() as u64 == lambda {
                out.push(p);
            }
        }
        out
    }

    #[test]
    fn small_shells() {
        let b = Budget::default();
        assert_eq!(enumerate_shell(4, 1, &b).unwrap().len(), 8);
        assert_eq!(enumerate_shell(2, 25, &b).unwrap().len(), 12);
        assert_eq!(enumerate_shell(3, 2, &b).unwrap().len(), 12);
        let origin = enumerate_shell(5, 0, &b).unwrap();
        assert_eq!(origin.len(), 1);
        assert_eq!(origin.points().point(0), &[0, 0, 0, 0, 0]);
        assert!(enumerate_shell(3, 7, &b).unwrap().is_empty());
    }

    #[test]
    fn matches_brute_force() {
        let b = Budget::default();
        for n in 2..=4 {
            for lambda in 0..=30 {
                let s = enumerate_shell(n, lambda, &b).unwrap();
                let got: Vec<Vec<i64>> = s.points().iter().map(|p| p.to_vec()).collect();
                assert_eq!(got, brute(n, lambda), "n={n} λ={lambda}");
            }
        }
    }

    #[test]
    fn sizes() {
        assert_eq!(shell_size(4, 2).unwrap(), 24);
        assert_eq!(shell_size(4, 1).unwrap(), 8);
        assert_eq!(shell_size(2, 0).unwrap(), 1);
        assert_eq!(shell_size(8, 1).unwrap(), 16);
        assert!(matches!(shell_size(9, 1), Err(LabError::BadDimension { .. })));
        assert!(matches!(shell_size(1, 1), Err(LabError::BadDimension { .. })));
    }

    #[test]
    fn budget_is_enforced() {
        let tight = Budget { points: 10, ..Budget::default() };
        assert!(matches!(enumerate_shell(4, 2, &tight), Err(LabError::BudgetExceeded { .. })));
        assert!(matches!(enumerate_paraboloid(2, &tight), Err(LabError::BudgetExceeded { .. })));
    }

    #[test]
    fn paraboloid_points() {
        let b = Budget::default();
        let p1 = enumerate_paraboloid(1, &b).unwrap();
        assert_eq!(p1.len(), 27);
        assert!(p1.contains(&[0, 0, 0, 0]));
        assert!(p1.contains(&[1, 1, 1, 3]));
        assert_eq!(enumerate_paraboloid(2, &b).unwrap().len(), 125);
    }

    #[test]
    fn orbits_cover_shell() {
        let b = Budget::default();
        for (n, lambda) in [(4, 25), (5, 9), (3, 50)] {
            let s = enumerate_shell(n, lambda, &b).unwrap();
            let total: u128 = s.orbit_representatives().iter().map(|&(_, o)| o).sum();
            assert_eq!(total, s.len() as u128);
        }
    }

    #[test]
    fn gamma_half_integers() {
        assert!((gamma_half_integer(2.5) - 1.329_340_388_179_137).abs() < 1e-12);
        assert!((gamma_half_integer(3.0) - 2.0).abs() < 1e-12);
    }
}
