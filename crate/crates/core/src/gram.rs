//! Integer solutions of Gram systems LᵀL = Λ.
//!
//! Targets are stored doubled (G = 2Λ) so that half-integer Gram entries stay
//! exact. Column j of a solution lies on the shell of squared norm Gⱼⱼ/2 and
//! must satisfy 2xⁱ·xʲ = Gᵢⱼ against every other column.

use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};

use crate::arith::{dot, gcd_slice, is_positive_semidefinite, multinomial_arrangements, norm2, rank};
use crate::budget::Budget;
use crate::error::{LabError, Result};
use crate::lattice::{enumerate_shell, PointSet};
use crate::par;
use crate::sums::SumWalk;

/// Largest solution list returned when enumeration is requested.
pub const MAX_ENUMERATED: u128 = 1_000_000;

/// A Gram system in m dimensions with n columns, stored as G = 2Λ.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GramTarget {
    pub m: usize,
    pub n: usize,
    #[serde(rename = "doubled_gram")]
    pub doubled: Vec<Vec<i64>>,
}

impl GramTarget {
    /// Validates shape and symmetry. Odd diagonal entries are accepted here
    /// and reported by the counter as an impossible target.
    pub fn new(m: usize, doubled: Vec<Vec<i64>>) -> Result<Self> {
        let n = doubled.len();
        if n == 0 || doubled.iter().any(|row| row.len() != n) {
            return Err(LabError::BadSpec("doubled Gram matrix must be square and non-empty".into()));
        }
        if !(n < m && m <= 8) {
            return Err(LabError::BadSpec(format!("need n < m ≤ 8, got n = {n}, m = {m}")));
        }
        if (0..n).any(|i| (0..i).any(|j| doubled[i][j] != doubled[j][i])) {
            return Err(LabError::BadSpec("doubled Gram matrix is not symmetric".into()));
        }
        Ok(GramTarget { m, n, doubled })
    }

    /// From an integer Gram matrix Λ.
    pub fn from_gram(m: usize, gram: &[Vec<i64>]) -> Result<Self> {
        Self::new(m, gram.iter().map(|row| row.iter().map(|x| 2 * x).collect()).collect())
    }

    /// The 3×3 system for triples (x, y, z) in Z⁴ with x·y = a, y·z = b,
    /// x·z = λ + a − b and all three on the λ-shell.
    pub fn triple_4d(lambda: i64, a: i64, b: i64) -> Self {
        let g = [[lambda, a, lambda + a - b], [a, lambda, b], [lambda + a - b, b, lambda]];
        Self::from_gram(4, &g.map(|r| r.to_vec())).expect("valid shape")
    }

    /// The 4×4 system for (u, v, x, y) in Z⁵ with |u|² = a, |v|² = b,
    /// u·v = c, x·y = d, u·x = u·y = a/2, v·x = v·y = b/2, |x|² = |y|² = λ.
    pub fn quadruple_5d(lambda: i64, a: i64, b: i64, c: i64, d: i64) -> Self {
        let g = vec![
            vec![2 * a, 2 * c, a, a],
            vec![2 * c, 2 * b, b, b],
            vec![a, b, 2 * lambda, 2 * d],
            vec![a, b, 2 * d, 2 * lambda],
        ];
        Self::new(5, g).expect("valid shape")
    }

    fn has_odd_diagonal(&self) -> bool {
        (0..self.n).any(|i| self.doubled[i][i] % 2 != 0)
    }

    fn is_psd(&self) -> bool {
        let g: Vec<Vec<i128>> = self.doubled.iter().map(|r| r.iter().map(|&x| x as i128).collect()).collect();
        is_positive_semidefinite(&g)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SolutionCount {
    pub target: GramTarget,
    pub count: u128,
    /// Solutions as lists of columns, in the target's column order.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub enumerated: Option<Vec<Vec<Vec<i64>>>>,
    /// Set when some diagonal entry of 2Λ is odd, so no solution exists.
    pub odd_diagonal: bool,
}

/// Count (and optionally list) all L ∈ M_{m,n}(Z) with LᵀL = Λ.
///
/// Columns are placed in decreasing order of their diagonal entry. After
/// each placement the candidate lists of all remaining columns are filtered
/// by their prescribed dot product with the new column, so an empty list
/// prunes the branch immediately.
pub fn count_gram_solutions(target: &GramTarget, want_enumeration: bool, budget: &Budget) -> Result<SolutionCount> {
    let empty = |odd| SolutionCount {
        target: target.clone(),
        count: 0,
        enumerated: want_enumeration.then(Vec::new),
        odd_diagonal: odd,
    };
    if target.has_odd_diagonal() {
        return Ok(empty(true));
    }
    if !target.is_psd() {
        return Ok(empty(false));
    }
    let n = target.n;
    let g = &target.doubled;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&j| std::cmp::Reverse(g[j][j]));
    let mut shells: FxHashMap<i64, PointSet> = FxHashMap::default();
    for &j in &order {
        if let std::collections::hash_map::Entry::Vacant(e) = shells.entry(g[j][j]) {
            e.insert(enumerate_shell(target.m, (g[j][j] / 2) as u64, budget)?.points().clone());
        }
    }
    let columns: Vec<&PointSet> = order.iter().map(|j| &shells[&g[*j][*j]]).collect();
    // Doubled Gram matrix permuted into placement order.
    let gp: Vec<Vec<i64>> = order.iter().map(|&i| order.iter().map(|&j| g[i][j]).collect()).collect();

    let nodes = std::sync::atomic::AtomicU64::new(0);
    let roots: Vec<usize> = (0..columns[0].len()).collect();
    let search = Search { columns: &columns, gram: &gp, budget, nodes: &nodes, keep: want_enumeration };
    let shards = par::map_slice(&roots, |&root| search.search_root(root));
    let mut count = 0u128;
    let mut enumerated = want_enumeration.then(Vec::new);
    for shard in shards {
        let (c, sols) = shard?;
        count += c;
        if let Some(all) = enumerated.as_mut() {
            for sol in sols {
                // Back to the target's column order.
                let mut cols = vec![Vec::new(); n];
                for (k, col) in sol.into_iter().enumerate() {
                    cols[order[k]] = col;
                }
                all.push(cols);
            }
            if all.len() as u128 > MAX_ENUMERATED {
                return Err(LabError::budget("enumerated solutions", all.len() as u128, MAX_ENUMERATED));
            }
        }
    }
    Ok(SolutionCount { target: target.clone(), count, enumerated, odd_diagonal: false })
}

struct Search<'a> {
    columns: &'a [&'a PointSet],
    gram: &'a [Vec<i64>],
    budget: &'a Budget,
    nodes: &'a std::sync::atomic::AtomicU64,
    keep: bool,
}

type Shard = Result<(u128, Vec<Vec<Vec<i64>>>)>;

impl Search<'_> {
    fn search_root(&self, root: usize) -> Shard {
        let n = self.gram.len();
        let first = self.columns[0].point(root).to_vec();
        if 2 * norm2(&first) != self.gram[0][0] {
            return Ok((0, Vec::new()));
        }
        // Candidate indices for every later column, filtered against the root.
        let mut cands: Vec<Vec<u32>> = Vec::with_capacity(n - 1);
        for k in 1..n {
            let list: Vec<u32> = self.columns[k]
                .iter()
                .enumerate()
                .filter(|(_, z)| 2 * dot(&first, z) == self.gram[0][k])
                .map(|(i, _)| i as u32)
                .collect();
            if list.is_empty() {
                return Ok((0, Vec::new()));
            }
            cands.push(list);
        }
        let mut chosen = vec![first];
        let mut sols = Vec::new();
        let count = self.descend(1, &cands, &mut chosen, &mut sols)?;
        Ok((count, sols))
    }

    /// `cands[i]` lists the surviving candidates for column `depth + i`.
    fn descend(
        &self,
        depth: usize,
        cands: &[Vec<u32>],
        chosen: &mut Vec<Vec<i64>>,
        sols: &mut Vec<Vec<Vec<i64>>>,
    ) -> Result<u128> {
        let n = self.gram.len();
        if depth == n {
            if self.keep {
                sols.push(chosen.clone());
            }
            return Ok(1);
        }
        let visited = self.nodes.fetch_add(cands[0].len() as u64, std::sync::atomic::Ordering::Relaxed) as u128;
        if visited > self.budget.nodes {
            return Err(LabError::budget("Gram search nodes", visited, self.budget.nodes));
        }
        let mut total = 0u128;
        'next: for &c in &cands[0] {
            let x = self.columns[depth].point(c as usize);
            let mut rest = Vec::with_capacity(cands.len() - 1);
            for (off, list) in cands[1..].iter().enumerate() {
                let k = depth + 1 + off;
                let kept: Vec<u32> = list
                    .iter()
                    .copied()
                    .filter(|&i| 2 * dot(x, self.columns[k].point(i as usize)) == self.gram[depth][k])
                    .collect();
                if kept.is_empty() {
                    continue 'next;
                }
                rest.push(kept);
            }
            chosen.push(x.to_vec());
            total += self.descend(depth + 1, &rest, chosen, sols)?;
            chosen.pop();
        }
        Ok(total)
    }
}

/// Triples (x, y, z) on the 4-d λ-shell with −x·y + x·z + y·z = λ. Each
/// distinct pair (x + y, λ + x·y) is resolved once against the shell by the
/// dot-product test s·z = λ + x·y; `visit` receives x, y and the matching z.
fn for_each_triple_class<F>(lambda: u64, budget: &Budget, mut visit: F) -> Result<()>
where
    F: FnMut(&[i64], &[i64], &[u32], &PointSet),
{
    let shell = enumerate_shell(4, lambda, budget)?;
    let set = shell.points();
    let size = set.len() as u128;
    if size * size > budget.pairs {
        return Err(LabError::budget("ordered pairs", size * size, budget.pairs));
    }
    if size * size * size > budget.nodes {
        return Err(LabError::budget("triple scan", size * size * size, budget.nodes));
    }
    let lam = lambda as i64;
    let mut index: FxHashMap<([i64; 4], i64), Vec<u32>> = FxHashMap::default();
    for x in set.iter() {
        for y in set.iter() {
            let s = [x[0] + y[0], x[1] + y[1], x[2] + y[2], x[3] + y[3]];
            let t = lam + dot(x, y);
            let zs = index.entry((s, t)).or_insert_with(|| {
                set.iter().enumerate().filter(|(_, z)| dot(&s, z) == t).map(|(i, _)| i as u32).collect()
            });
            visit(x, y, zs, set);
        }
    }
    Ok(())
}

/// Σ_{|a|,|b| ≤ λ} N_{a,b,λ}, counted over triples without looping over (a, b).
pub fn sum_n_ab(lambda: u64, budget: &Budget) -> Result<u128> {
    let mut total = 0u128;
    for_each_triple_class(lambda, budget, |_, _, zs, _| total += zs.len() as u128)?;
    Ok(total)
}

/// The part of Σ N_{a,b,λ} with a = b, b = λ or a = −λ, where a = x·y and
/// b = y·z are read off each triple.
pub fn singular_case_sum_4d(lambda: u64, budget: &Budget) -> Result<u128> {
    let lam = lambda as i64;
    let mut total = 0u128;
    for_each_triple_class(lambda, budget, |x, y, zs, set| {
        let a = dot(x, y);
        if a == -lam {
            total += zs.len() as u128;
            return;
        }
        total += zs
            .iter()
            .filter(|&&k| {
                let b = dot(y, set.point(k as usize));
                a == b || b == lam
            })
            .count() as u128;
    })?;
    Ok(total)
}

/// Σ_{w ≠ 0} over canonical differences w = y − x (w₁ ≥ … ≥ w₅ ≥ 0) of
/// `f(w, c(w))`, each weighted by the size of its signed-permutation orbit.
fn difference_classes(set: &PointSet, budget: &Budget) -> Result<Vec<(Vec<i64>, u64, u128)>> {
    let size = set.len() as u128;
    if size * size > budget.pairs {
        return Err(LabError::budget("ordered pairs", size * size, budget.pairs));
    }
    let neg = set.negated();
    let mut classes = SumWalk::new(set, &neg)?.permutation_folded(&neg).fold(
        Vec::new,
        |acc: &mut Vec<(Vec<i64>, u64, u128)>, w, c, _| {
            if w.iter().any(|&x| x != 0) && w.windows(2).all(|p| p[0] >= p[1]) && w[w.len() - 1] >= 0 {
                acc.push((w.to_vec(), c, orbit_size(w)));
            }
        },
        |mut a, b| {
            a.extend(b);
            a
        },
    );
    classes.sort_unstable();
    Ok(classes)
}

/// Number of distinct signed permutations of w.
fn orbit_size(w: &[i64]) -> u128 {
    let mut abs: Vec<u64> = w.iter().map(|x| x.unsigned_abs()).collect();
    abs.sort_unstable();
    multinomial_arrangements(&abs) << w.iter().filter(|&&x| x != 0).count()
}

fn check_five(lambda: u64, budget: &Budget) -> Result<PointSet> {
    Ok(enumerate_shell(5, lambda, budget)?.points().clone())
}

/// Σ_{a,b,c,d} N_{a,b,c,d,λ}: quadruples (u, v, x, y) in Z⁵ with x ≠ y on the
/// λ-shell and u, v ∈ (x + F) ∩ (y + F). With c(w) = |{s ∈ F : s − w ∈ F}|
/// this is Σ_{x ≠ y} c(y − x)², and c(w) is also the number of pairs with
/// difference w.
pub fn count_quadruples_5d(lambda: u64, budget: &Budget) -> Result<u128> {
    let set = check_five(lambda, budget)?;
    let classes = difference_classes(&set, budget)?;
    classes.iter().try_fold(0u128, |acc, (_, c, orbit)| {
        let c = *c as u128;
        c.checked_mul(c)
            .and_then(|c2| c2.checked_mul(c))
            .and_then(|c3| c3.checked_mul(*orbit))
            .and_then(|t| acc.checked_add(t))
            .ok_or(LabError::ArithmeticOverflow("quadruple count"))
    })
}

/// Quadruple counts split by rank[u, v, x, y].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankBreakdown {
    pub lambda: u64,
    /// x = −y forces u = v = 0.
    pub rank1: u128,
    pub rank2: u128,
    pub rank3: u128,
    pub rank4: u128,
}

impl RankBreakdown {
    pub fn total(&self) -> u128 {
        self.rank1 + self.rank2 + self.rank3 + self.rank4
    }
}

/// The 3×3 minors of the rows [s; x; w], a linear map in s whose kernel is
/// span(x, w) when x and w are independent.
fn wedge3(s: &[i64], x: &[i64], w: &[i64]) -> [i64; 10] {
    let mut out = [0i64; 10];
    let mut k = 0;
    for a in 0..5 {
        for b in a + 1..5 {
            for c in b + 1..5 {
                out[k] = s[a] * (x[b] * w[c] - x[c] * w[b]) - s[b] * (x[a] * w[c] - x[c] * w[a])
                    + s[c] * (x[a] * w[b] - x[b] * w[a]);
                k += 1;
            }
        }
    }
    out
}

/// Primitive representative of the line through a nonzero integer vector.
fn line_key(mut v: [i64; 10]) -> [i64; 10] {
    let g = gcd_slice(&v);
    let lead = v.iter().find(|&&x| x != 0).copied().unwrap_or(1);
    let g = if lead < 0 { -g } else { g };
    for x in v.iter_mut() {
        *x /= g;
    }
    v
}

/// Exact per-rank counts of the quadruples of [`count_quadruples_5d`].
///
/// Writing y = x + w and u = x + s, v = x + t with s, t ∈ F ∩ (F + w), the
/// rank of [u, v, x, y] equals that of [s, t, x, w]. When x and w are
/// independent this is 2 plus the rank of the images of s and t modulo
/// span(x, w), read off the integer minors of [s; x; w].
pub fn degenerate_breakdown_5d(lambda: u64, budget: &Budget) -> Result<RankBreakdown> {
    let set = check_five(lambda, budget)?;
    let classes = difference_classes(&set, budget)?;
    let work: u128 = classes.iter().map(|(_, c, _)| (*c as u128).pow(2)).sum();
    if work > budget.nodes {
        return Err(LabError::budget("rank classification", work, budget.nodes));
    }
    let parts = par::map_slice(&classes, |(w, c, orbit)| {
        let w2 = norm2(w);
        // x with x + w on the shell: 2x·w = −|w|².
        let xs: Vec<&[i64]> = set.iter().filter(|x| 2 * dot(x, w) == -w2).collect();
        debug_assert_eq!(xs.len() as u64, *c);
        let ss: Vec<Vec<i64>> = xs.iter().map(|x| x.iter().zip(w).map(|(a, b)| a + b).collect()).collect();
        let mut out = RankBreakdown::default();
        for x in &xs {
            if rank(&[x.to_vec(), w.clone()]) < 2 {
                for s in &ss {
                    for t in &ss {
                        let r = rank(&[s.clone(), t.clone(), x.to_vec(), w.clone()]);
                        *out.slot(r) += 1;
                    }
                }
                continue;
            }
            let mut zero = 0u128;
            let mut lines: FxHashMap<[i64; 10], u128> = FxHashMap::default();
            for s in &ss {
                let m = wedge3(s, x, w);
                if m.iter().all(|&v| v == 0) {
                    zero += 1;
                } else {
                    *lines.entry(line_key(m)).or_insert(0) += 1;
                }
            }
            let c = ss.len() as u128;
            let parallel: u128 = lines.values().map(|k| k * k).sum();
            out.rank2 += zero * zero;
            out.rank3 += 2 * zero * (c - zero) + parallel;
            out.rank4 += (c - zero) * (c - zero) - parallel;
        }
        out.rank1 *= orbit;
        out.rank2 *= orbit;
        out.rank3 *= orbit;
        out.rank4 *= orbit;
        out
    });
    let mut total = parts.into_iter().fold(RankBreakdown::default(), |a, b| RankBreakdown {
        lambda: 0,
        rank1: a.rank1 + b.rank1,
        rank2: a.rank2 + b.rank2,
        rank3: a.rank3 + b.rank3,
        rank4: a.rank4 + b.rank4,
    });
    total.lambda = lambda;
    Ok(total)
}

impl RankBreakdown {
    fn slot(&mut self, r: usize) -> &mut u128 {
        match r {
            0 | 1 => &mut self.rank1,
            2 => &mut self.rank2,
            3 => &mut self.rank3,
            _ => &mut self.rank4,
        }
    }
}

/// One row of the Gram count sweep: the 4-d triple sums and the 5-d rank
/// classes at the same λ. The rank-1 class (x = −y, u = v = 0) is not a
/// column; it always equals |F_{5,λ}| for λ > 0.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GramSweepRow {
    pub lambda: u64,
    pub total: u128,
    pub singular_total: u128,
    pub rank2: u128,
    pub rank3: u128,
    pub rank4: u128,
}

pub fn gram_sweep_row(lambda: u64, budget: &Budget) -> Result<GramSweepRow> {
    let ranks = degenerate_breakdown_5d(lambda, budget)?;
    Ok(GramSweepRow {
        lambda,
        total: sum_n_ab(lambda, budget)?,
        singular_total: singular_case_sum_4d(lambda, budget)?,
        rank2: ranks.rank2,
        rank3: ranks.rank3,
        rank4: ranks.rank4,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::additive_energy;
    use crate::oracle;

    fn b() -> Budget {
        Budget::default()
    }

    #[test]
    fn orthonormal_triples_in_four_dimensions() {
        let t = GramTarget::new(4, vec![vec![2, 0, 0], vec![0, 2, 0], vec![0, 0, 2]]).unwrap();
        let c = count_gram_solutions(&t, true, &b()).unwrap();
        assert_eq!(c.count, 192);
        assert_eq!(c.enumerated.unwrap().len(), 192);
    }

    #[test]
    fn equal_unit_columns() {
        let t = GramTarget::triple_4d(1, 1, 1);
        assert_eq!(count_gram_solutions(&t, false, &b()).unwrap().count, 8);
    }

    #[test]
    fn indefinite_and_odd_targets() {
        let t = GramTarget::from_gram(4, &[vec![1, 2], vec![2, 1]]).unwrap();
        assert_eq!(count_gram_solutions(&t, false, &b()).unwrap().count, 0);
        let odd = GramTarget::new(4, vec![vec![3, 0], vec![0, 2]]).unwrap();
        let c = count_gram_solutions(&odd, false, &b()).unwrap();
        assert!(c.odd_diagonal);
        assert_eq!(c.count, 0);
    }

    #[test]
    fn target_validation() {
        assert!(GramTarget::new(3, vec![vec![2, 0, 0], vec![0, 2, 0], vec![0, 0, 2]]).is_err());
        assert!(GramTarget::new(4, vec![vec![2, 1], vec![0, 2]]).is_err());
        assert!(GramTarget::new(9, vec![vec![2]]).is_err());
    }

    #[test]
    fn solutions_satisfy_the_system() {
        let t = GramTarget::quadruple_5d(2, 2, 2, 1, 0);
        let c = count_gram_solutions(&t, true, &b()).unwrap();
        for sol in c.enumerated.unwrap() {
            for i in 0..4 {
                for j in 0..4 {
                    assert_eq!(2 * dot(&sol[i], &sol[j]), t.doubled[i][j]);
                }
            }
        }
    }

    #[test]
    fn triple_sums_small() {
        assert_eq!(sum_n_ab(0, &b()).unwrap(), 1);
        assert_eq!(sum_n_ab(1, &b()).unwrap(), 168);
        assert_eq!(singular_case_sum_4d(0, &b()).unwrap(), 1);
        for lambda in 1..=6 {
            let set = enumerate_shell(4, lambda, &b()).unwrap();
            assert_eq!(sum_n_ab(lambda, &b()).unwrap(), additive_energy(set.points(), &b()).unwrap().energy);
            let s = singular_case_sum_4d(lambda, &b()).unwrap();
            assert_eq!(s, oracle::singular_sum_naive(lambda));
        }
    }

    #[test]
    fn quadruples_match_direct_count() {
        assert_eq!(count_quadruples_5d(0, &b()).unwrap(), 0);
        for lambda in 1..=4 {
            let (total, ranks) = oracle::quadruples_5d_naive(lambda);
            assert_eq!(count_quadruples_5d(lambda, &b()).unwrap(), total, "λ={lambda}");
            let br = degenerate_breakdown_5d(lambda, &b()).unwrap();
            assert_eq!([br.rank1, br.rank2, br.rank3, br.rank4], ranks, "λ={lambda}");
            assert_eq!(oracle::quadruples_5d_naive_total(lambda), total, "λ={lambda}");
        }
    }

    #[test]
    fn rank_one_class_is_antipodal_pairs() {
        for lambda in [1, 3, 6] {
            let br = degenerate_breakdown_5d(lambda, &b()).unwrap();
            let size = enumerate_shell(5, lambda, &b()).unwrap().len() as u128;
            assert_eq!(br.rank1, size);
            assert_eq!(br.total(), count_quadruples_5d(lambda, &b()).unwrap());
        }
    }

    #[test]
    fn collapsed_quadruple_has_low_rank() {
        let x = [1i64, 0, 0, 0, 0];
        let y = [0i64, 1, 0, 0, 0];
        let rows = vec![x.to_vec(), x.to_vec(), x.to_vec(), y.to_vec()];
        assert!(rank(&rows) <= 2);
        // The quotient test agrees: s = 0 (u = x) lies in span(x, w).
        let w: Vec<i64> = y.iter().zip(&x).map(|(a, b)| a - b).collect();
        assert!(wedge3(&[0; 5], &x, &w).iter().all(|&v| v == 0));
    }

    #[test]
    fn orbit_sizes() {
        assert_eq!(orbit_size(&[1, 0, 0, 0, 0]), 10);
        assert_eq!(orbit_size(&[2, 1, 1, 0, 0]), 30 * 8);
    }
}
