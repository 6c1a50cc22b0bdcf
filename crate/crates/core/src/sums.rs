//! Pair-sum engine: visits every distinct sum v = a + b (a ∈ A, b ∈ B) with
//! its representation count r(v) = |{(a, b) : a + b = v}|.
//!
//! Sums are bucketed by their first coordinate, and within a bucket the two
//! sets are walked as coordinate tries. On any axis where both sets are
//! closed under sign flip only the half-space vᵢ ≥ 0 is visited; each
//! reported sum carries the multiplicity of its sign orbit so that weighted
//! folds reproduce the full sums exactly. When both sets are also closed
//! under coordinate permutations the walk can be narrowed further to sums
//! with v₁ ≥ … ≥ vₙ ≥ 0, weighted by the full signed-permutation orbit.

use std::borrow::Cow;

use rustc_hash::FxHashMap;

use crate::error::{LabError, Result};
use crate::lattice::PointSet;
use crate::par;

const KEY_BITS: u32 = 16;
const KEY_OFFSET: i64 = 1 << (KEY_BITS - 1);

/// Pack up to 8 coordinates into a collision-free 128-bit key.
#[inline]
pub(crate) fn pack(v: &[i64]) -> u128 {
    v.iter().fold(0u128, |k, &x| (k << KEY_BITS) | (x + KEY_OFFSET) as u128)
}

#[inline]
pub(crate) fn unpack(mut key: u128, dim: usize, out: &mut [i64]) {
    for slot in out[..dim].iter_mut().rev() {
        *slot = (key & ((1 << KEY_BITS) - 1)) as i64 - KEY_OFFSET;
        key >>= KEY_BITS;
    }
}

/// Sums must fit the 16-bit-per-coordinate key.
pub(crate) fn check_key_range(a: &PointSet, b: &PointSet) -> Result<()> {
    let ba = a.coordinate_bounds();
    let bb = b.coordinate_bounds();
    if ba.iter().zip(&bb).any(|(x, y)| x + y >= KEY_OFFSET) {
        return Err(LabError::OutOfRange("sum coordinates exceed the 16-bit key range".into()));
    }
    Ok(())
}

/// Coordinate trie over a sorted point set.
#[derive(Clone)]
pub(crate) struct Trie {
    /// levels[d][i] = (coordinate value at depth d, child range in level d+1).
    /// At the last depth the child range is the point index range.
    levels: Vec<Vec<(i64, u32, u32)>>,
    /// Children of the root: range in levels[0].
    root: (u32, u32),
}

impl Trie {
    pub(crate) fn build(set: &PointSet) -> Trie {
        let dim = set.dim();
        let n = set.len();
        let mut levels: Vec<Vec<(i64, u32, u32)>> = vec![Vec::new(); dim];
        // Bottom-up: group point indices, then group groups.
        // ranges[d] holds, for each node at depth d, the point range it covers.
        let mut prev_nodes: Vec<(u32, u32)> = (0..n as u32).map(|i| (i, i + 1)).collect();
        for d in (0..dim).rev() {
            let mut nodes = Vec::new();
            let mut ranges = Vec::new();
            let mut i = 0usize;
            while i < prev_nodes.len() {
                let (start, _) = prev_nodes[i];
                let first = set.point(start as usize);
                let mut j = i + 1;
                while j < prev_nodes.len() {
                    let p = set.point(prev_nodes[j].0 as usize);
                    if p[..=d] != first[..=d] {
                        break;
                    }
                    j += 1;
                }
                nodes.push((first[d], i as u32, j as u32));
                ranges.push((start, prev_nodes[j - 1].1));
                i = j;
            }
            levels[d] = nodes;
            prev_nodes = ranges;
        }
        let root = (0, levels[0].len() as u32);
        Trie { levels, root }
    }

    fn children(&self, depth: usize, range: (u32, u32)) -> &[(i64, u32, u32)] {
        &self.levels[depth][range.0 as usize..range.1 as usize]
    }
}

/// Closed under every coordinate permutation: a transposition and a cyclic
/// shift generate the symmetric group.
fn is_permutation_symmetric(set: &PointSet) -> bool {
    let dim = set.dim();
    let mut q = vec![0i64; dim];
    set.iter().all(|p| {
        q.copy_from_slice(p);
        q.swap(0, dim.saturating_sub(1).min(1));
        if !set.contains(&q) {
            return false;
        }
        q.copy_from_slice(p);
        q.rotate_left(1);
        set.contains(&q)
    })
}

/// Which axes the walk may fold by sign.
fn symmetric_axes(a: &PointSet, b: &PointSet) -> Vec<bool> {
    (0..a.dim()).map(|ax| a.is_sign_symmetric(ax) && (std::ptr::eq(a, b) || b.is_sign_symmetric(ax))).collect()
}

pub(crate) struct SumWalk<'a> {
    a: &'a PointSet,
    ta: Trie,
    tb: Cow<'a, Trie>,
    sym: Vec<bool>,
    same: bool,
    sorted: bool,
}

impl<'a> SumWalk<'a> {
    pub(crate) fn new(a: &'a PointSet, b: &'a PointSet) -> Result<Self> {
        if a.dim() != b.dim() {
            return Err(LabError::DimensionMismatch { expected: a.dim(), got: b.dim() });
        }
        check_key_range(a, b)?;
        let tb = Cow::Owned(Trie::build(b));
        Self::assemble(a, b, tb)
    }

    /// As `new`, reusing a trie already built for `b`.
    pub(crate) fn with_trie(a: &'a PointSet, b: &'a PointSet, tb: &'a Trie) -> Result<Self> {
        if a.dim() != b.dim() {
            return Err(LabError::DimensionMismatch { expected: a.dim(), got: b.dim() });
        }
        check_key_range(a, b)?;
        Self::assemble(a, b, Cow::Borrowed(tb))
    }

    fn assemble(a: &'a PointSet, b: &'a PointSet, tb: Cow<'a, Trie>) -> Result<Self> {
        let same = std::ptr::eq(a, b) || a == b;
        Ok(SumWalk { a, ta: Trie::build(a), tb, sym: symmetric_axes(a, b), same, sorted: false })
    }

    /// Report only sums with non-increasing, non-negative coordinates when
    /// both sets allow it; otherwise leave the walk unchanged.
    pub(crate) fn permutation_folded(mut self, b: &PointSet) -> Self {
        self.sorted = self.sym.iter().all(|&s| s) && is_permutation_symmetric(self.a) && is_permutation_symmetric(b);
        self
    }

    /// Axes on which only sums with a non-negative coordinate are reported.
    pub(crate) fn folded_axes(&self) -> &[bool] {
        &self.sym
    }

    /// Fold over all distinct sums. `f(acc, v, r, w)` receives the sum v,
    /// its representation count r and the number w of sign images of v the
    /// call stands for (1 when no axis is folded).
    pub(crate) fn fold<T, F, C>(&self, init: impl Fn() -> T + Sync, f: F, combine: C) -> T
    where
        T: Send,
        F: Fn(&mut T, &[i64], u64, u64) + Sync,
        C: Fn(T, T) -> T,
    {
        let dim = self.a.dim();
        let firsts_a: Vec<i64> = self.ta.children(0, self.ta.root).iter().map(|c| c.0).collect();
        let firsts_b: Vec<i64> = self.tb.children(0, self.tb.root).iter().map(|c| c.0).collect();
        let (lo, hi) = match (firsts_a.first(), firsts_b.first()) {
            (Some(&la), Some(&lb)) => (la + lb, firsts_a.last().unwrap() + firsts_b.last().unwrap()),
            _ => return init(),
        };
        let lo = if self.sym[0] { lo.max(0) } else { lo };
        let buckets: Vec<i64> = (lo..=hi).collect();
        let partials = par::map_slice(&buckets, |&s| {
            let mut acc = init();
            let mut counts: FxHashMap<u128, u64> = FxHashMap::default();
            let mut v = vec![0i64; dim];
            for &(t, ca, da) in self.ta.children(0, self.ta.root) {
                let u = s - t;
                if self.same && t > u {
                    continue;
                }
                let kids_b = self.tb.children(0, self.tb.root);
                let Ok(ib) = kids_b.binary_search_by_key(&u, |c| c.0) else { continue };
                let (_, cb, db) = kids_b[ib];
                let mult = if self.same && t < u { 2 } else { 1 };
                v[0] = s;
                self.walk(1, (ca, da), (cb, db), &mut v, mult, &mut counts);
            }
            let w0: u64 = if self.sym[0] && s > 0 { 2 } else { 1 };
            let mut full = vec![0i64; dim];
            full[0] = s;
            for (&key, &r) in counts.iter() {
                unpack(key, dim - 1, &mut full[1..]);
                let w = if self.sorted {
                    crate::lattice::orbit_size(&full) as u64
                } else {
                    full[1..].iter().zip(&self.sym[1..]).fold(w0, |w, (&x, &sym)| if sym && x > 0 { w * 2 } else { w })
                };
                f(&mut acc, &full, r, w);
            }
            acc
        });
        let mut it = partials.into_iter();
        let first = it.next().unwrap_or_else(&init);
        it.fold(first, combine)
    }

    fn walk(
        &self,
        depth: usize,
        ra: (u32, u32),
        rb: (u32, u32),
        v: &mut [i64],
        mult: u64,
        counts: &mut FxHashMap<u128, u64>,
    ) {
        let dim = v.len();
        if depth == dim {
            // ra / rb are single-point ranges at the leaves.
            *counts.entry(pack(&v[1..])).or_insert(0) += mult * (ra.1 - ra.0) as u64 * (rb.1 - rb.0) as u64;
            return;
        }
        let kids_a = self.ta.children(depth, ra);
        let kids_b = self.tb.children(depth, rb);
        let sym = self.sym[depth];
        for &(x, ca, da) in kids_a {
            let start = if sym { kids_b.partition_point(|c| c.0 < -x) } else { 0 };
            for &(y, cb, db) in &kids_b[start..] {
                if self.sorted && x + y > v[depth - 1] {
                    break;
                }
                v[depth] = x + y;
                if depth + 1 == dim {
                    *counts.entry(pack(&v[1..])).or_insert(0) += mult * (da - ca) as u64 * (db - cb) as u64;
                } else {
                    self.walk(depth + 1, (ca, da), (cb, db), v, mult, counts);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{enumerate_shell, Origin};
    use crate::Budget;
    use std::collections::HashMap;

    fn brute(a: &PointSet, b: &PointSet) -> HashMap<Vec<i64>, u64> {
        let mut m = HashMap::new();
        for p in a.iter() {
            for q in b.iter() {
                let v: Vec<i64> = p.iter().zip(q).map(|(x, y)| x + y).collect();
                *m.entry(v).or_insert(0) += 1;
            }
        }
        m
    }

    fn expand(walk: &SumWalk) -> (u64, u128, u128) {
        // (distinct sums, Σ r, Σ r²) with orbit weights applied
        walk.fold(
            || (0u64, 0u128, 0u128),
            |acc, _v, r, w| {
                acc.0 += w;
                acc.1 += (w * r) as u128;
                acc.2 += w as u128 * (r as u128) * (r as u128);
            },
            |x, y| (x.0 + y.0, x.1 + y.1, x.2 + y.2),
        )
    }

    #[test]
    fn pack_round_trip() {
        let v = [-5, 0, 32767, -32768, 12];
        let mut out = [0i64; 5];
        unpack(pack(&v), 5, &mut out);
        assert_eq!(out, v);
    }

    #[test]
    fn folded_walk_matches_brute_force() {
        let budget = Budget::default();
        for (n, lambda) in [(4, 1), (4, 9), (5, 6), (3, 11), (2, 25)] {
            let s = enumerate_shell(n, lambda, &budget).unwrap();
            let set = s.points();
            let walk = SumWalk::new(set, set).unwrap();
            let m = brute(set, set);
            let expected = (
                m.len() as u64,
                m.values().map(|&r| r as u128).sum::<u128>(),
                m.values().map(|&r| (r as u128).pow(2)).sum::<u128>(),
            );
            assert_eq!(expand(&walk), expected, "n={n} λ={lambda}");
        }
    }

    #[test]
    fn permutation_folded_walk_matches_brute_force() {
        let budget = Budget::default();
        for (n, lambda) in [(4, 1), (4, 9), (5, 6), (5, 11), (3, 11), (2, 25)] {
            let s = enumerate_shell(n, lambda, &budget).unwrap();
            let set = s.points();
            let neg = set.negated();
            for other in [set, &neg] {
                let walk = SumWalk::new(set, other).unwrap().permutation_folded(other);
                assert!(walk.sorted);
                assert_eq!(expand(&walk), expand_brute(&brute(set, other)), "n={n} λ={lambda}");
            }
        }
        let skew = PointSet::new(2, [[1, 0], [-1, 0]], Origin::Custom).unwrap();
        assert!(!SumWalk::new(&skew, &skew).unwrap().permutation_folded(&skew).sorted);
    }

    fn expand_brute(m: &HashMap<Vec<i64>, u64>) -> (u64, u128, u128) {
        (
            m.len() as u64,
            m.values().map(|&r| r as u128).sum::<u128>(),
            m.values().map(|&r| (r as u128).pow(2)).sum::<u128>(),
        )
    }

    #[test]
    fn asymmetric_sets() {
        let a = PointSet::new(3, [[1, 2, 3], [0, -1, 4], [2, 2, -7], [1, 0, 0]], Origin::Custom).unwrap();
        let b = PointSet::new(3, [[1, 1, 1], [-3, 0, 2], [0, 0, 0]], Origin::Custom).unwrap();
        for (x, y) in [(&a, &b), (&a, &a), (&b, &a)] {
            let walk = SumWalk::new(x, y).unwrap();
            let m = brute(x, y);
            let expected = (
                m.len() as u64,
                m.values().map(|&r| r as u128).sum::<u128>(),
                m.values().map(|&r| (r as u128).pow(2)).sum::<u128>(),
            );
            assert_eq!(expand(&walk), expected);
        }
    }
}
