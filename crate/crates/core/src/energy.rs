//! Additive energy E(Λ) = |{(a, b, c, d) ∈ Λ⁴ : a + b = c + d}| and the
//! representation counts behind it.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};

use crate::budget::Budget;
use crate::error::{LabError, Result};
use crate::lattice::{LatticePoint, Origin, PointSet, Shell};
use crate::par;
use crate::sums::{pack, unpack, SumWalk};

/// Name of the generator used for random subsets, recorded in reports.
pub const SUBSET_RNG: &str = "ChaCha8Rng/seed_from_u64+stream";

/// Ordered-pair sum counts r(v) for a point set.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RepHistogram {
    dim: usize,
    source_size: usize,
    entries: Vec<(LatticePoint, u64)>,
}

impl RepHistogram {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn source_size(&self) -> usize {
        self.source_size
    }

    /// Entries sorted by sum vector; every stored count is positive.
    pub fn entries(&self) -> &[(LatticePoint, u64)] {
        &self.entries
    }

    pub fn get(&self, v: &[i64]) -> u64 {
        self.entries.binary_search_by(|(p, _)| p.coords().cmp(v)).map(|i| self.entries[i].1).unwrap_or(0)
    }

    pub fn total_mass(&self) -> u128 {
        self.entries.iter().map(|&(_, r)| r as u128).sum()
    }

    pub fn energy(&self) -> Result<u128> {
        self.entries.iter().try_fold(0u128, |acc, &(_, r)| {
            (r as u128)
                .checked_mul(r as u128)
                .and_then(|sq| acc.checked_add(sq))
                .ok_or(LabError::ArithmeticOverflow("histogram energy"))
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnergyResult {
    pub set_size: u64,
    pub energy: u128,
    /// floor(√λ) + 1 when the set lies on a shell.
    #[serde(rename = "N")]
    pub scale: Option<u64>,
}

fn check_pairs(set: &PointSet, budget: &Budget) -> Result<()> {
    let pairs = set.len() as u128 * set.len() as u128;
    if pairs > budget.pairs {
        return Err(LabError::budget("ordered pairs", pairs, budget.pairs));
    }
    Ok(())
}

/// Shell scale of a set whose points share one squared norm.
fn common_scale(set: &PointSet) -> Option<u64> {
    if set.origin() != Origin::ShellSubset || set.is_empty() {
        return None;
    }
    let lambda = crate::arith::norm2(set.point(0));
    set.iter().all(|p| crate::arith::norm2(p) == lambda).then(|| crate::arith::scale_n(lambda as u64))
}

/// Full histogram by a direct pair loop, sharded by the first point.
pub fn rep_histogram(set: &PointSet, budget: &Budget) -> Result<RepHistogram> {
    check_pairs(set, budget)?;
    crate::sums::check_key_range(set, set)?;
    let dim = set.dim();
    let shard = 256usize;
    let shards = set.len().div_ceil(shard);
    let partial = par::map_range(shards, |s| {
        let mut local: FxHashMap<u128, u64> = FxHashMap::default();
        let mut v = vec![0i64; dim];
        for i in s * shard..((s + 1) * shard).min(set.len()) {
            let a = set.point(i);
            for b in set.iter() {
                for ((slot, x), y) in v.iter_mut().zip(a).zip(b) {
                    *slot = x + y;
                }
                *local.entry(pack(&v)).or_insert(0) += 1;
            }
        }
        local
    });
    let mut merged: FxHashMap<u128, u64> = FxHashMap::default();
    for local in partial {
        for (k, r) in local {
            *merged.entry(k).or_insert(0) += r;
        }
    }
    let mut keyed: Vec<(u128, u64)> = merged.into_iter().collect();
    // The packing is order-preserving, so key order is lexicographic order.
    keyed.sort_unstable();
    let mut buf = vec![0i64; dim];
    let entries = keyed
        .into_iter()
        .map(|(k, r)| {
            unpack(k, dim, &mut buf);
            (LatticePoint::from(&buf[..]), r)
        })
        .collect();
    Ok(RepHistogram { dim, source_size: set.len(), entries })
}

/// Exact E(Λ) via the sign-folded sum walk.
pub fn additive_energy(set: &PointSet, budget: &Budget) -> Result<EnergyResult> {
    check_pairs(set, budget)?;
    let energy = if set.is_empty() {
        0
    } else {
        let walk = SumWalk::new(set, set)?.permutation_folded(set);
        walk.fold(
            || Some(0u128),
            |acc, _v, r, w| {
                *acc = acc.and_then(|a| (r as u128).checked_mul(r as u128)?.checked_mul(w as u128)?.checked_add(a));
            },
            |a, b| a.zip(b).and_then(|(a, b)| a.checked_add(b)),
        )
        .ok_or(LabError::ArithmeticOverflow("additive energy"))?
    };
    Ok(EnergyResult { set_size: set.len() as u64, energy, scale: common_scale(set) })
}

/// Number of 2l-tuples with ξ₁+…+ξ_l = ξ_{l+1}+…+ξ_{2l}, by repeated
/// convolution of the l-fold sum histogram.
pub fn l_fold_energy(set: &PointSet, l: u32, budget: &Budget) -> Result<u128> {
    if l < 2 {
        return Err(LabError::OutOfRange(format!("l-fold energy needs l ≥ 2, got {l}")));
    }
    if set.is_empty() {
        return Ok(0);
    }
    let dim = set.dim();
    let bounds = set.coordinate_bounds();
    if bounds.iter().any(|&b| b * l as i64 >= 1 << 15) {
        return Err(LabError::OutOfRange("l-fold sums exceed the 16-bit key range".into()));
    }
    let mut hist: FxHashMap<u128, u128> = set.iter().map(|p| (pack(p), 1u128)).collect();
    let mut v = vec![0i64; dim];
    let mut s = vec![0i64; dim];
    for _ in 1..l {
        let work = hist.len() as u128 * set.len() as u128;
        if work > budget.pairs {
            return Err(LabError::budget("l-fold convolution steps", work, budget.pairs));
        }
        let mut next: FxHashMap<u128, u128> = FxHashMap::default();
        for (&k, &c) in &hist {
            unpack(k, dim, &mut v);
            for p in set.iter() {
                for ((slot, x), y) in s.iter_mut().zip(&v).zip(p) {
                    *slot = x + y;
                }
                *next.entry(pack(&s)).or_insert(0) += c;
            }
        }
        hist = next;
    }
    hist.values().try_fold(0u128, |acc, &c| {
        c.checked_mul(c).and_then(|sq| acc.checked_add(sq)).ok_or(LabError::ArithmeticOverflow("l-fold energy"))
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubsetEnergyRow {
    pub size: usize,
    pub trials: u32,
    pub max_energy: u128,
    /// max_energy / size^exponent
    pub ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubsetEnergyTable {
    pub n: usize,
    pub lambda: u64,
    pub seed: u64,
    pub rng: String,
    /// 7/3 in dimension 4, 5/2 in dimension 5.
    pub exponent: f64,
    pub rows: Vec<SubsetEnergyRow>,
}

/// The random subset used for trial `trial` at size `size`.
pub fn subset_for_trial(shell: &Shell, size: usize, trial: u32, seed: u64) -> PointSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((size as u64) << 32) | trial as u64);
    let idx = sample(&mut rng, shell.len(), size).into_vec();
    shell.points().subset(&idx, Origin::ShellSubset)
}

pub fn subset_energy_experiment(
    shell: &Shell,
    sizes: &[usize],
    trials: u32,
    seed: u64,
    budget: &Budget,
) -> Result<SubsetEnergyTable> {
    let exponent = match shell.dim() {
        4 => 7.0 / 3.0,
        5 => 2.5,
        d => return Err(LabError::BadDimension { dim: d, min: 4, max: 5 }),
    };
    if let Some(&too_big) = sizes.iter().find(|&&s| s > shell.len()) {
        return Err(LabError::OutOfRange(format!("subset size {too_big} exceeds shell size {}", shell.len())));
    }
    let rows = sizes
        .iter()
        .map(|&size| {
            let energies = par::map_range(trials as usize, |t| {
                additive_energy(&subset_for_trial(shell, size, t as u32, seed), budget).map(|e| e.energy)
            });
            let max_energy = energies.into_iter().try_fold(0u128, |m, e| e.map(|e| m.max(e)))?;
            let ratio = if size == 0 { 0.0 } else { max_energy as f64 / (size as f64).powf(exponent) };
            Ok(SubsetEnergyRow { size, trials, max_energy, ratio })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SubsetEnergyTable { n: shell.dim(), lambda: shell.lambda(), seed, rng: SUBSET_RNG.to_string(), exponent, rows })
}

/// E(P³_N) for the paraboloid slab.
pub fn paraboloid_energy(big_n: u64, budget: &Budget) -> Result<EnergyResult> {
    let set = crate::lattice::enumerate_paraboloid(big_n, budget)?;
    additive_energy(&set, budget)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::enumerate_shell;
    use crate::oracle;

    fn set(dim: usize, pts: &[&[i64]]) -> PointSet {
        PointSet::new(dim, pts.iter().copied(), Origin::Custom).unwrap()
    }

    #[test]
    fn tiny_sets() {
        let b = Budget::default();
        let e1 = set(4, &[&[1, 0, 0, 0]]);
        let pm = set(4, &[&[1, 0, 0, 0], &[-1, 0, 0, 0]]);
        assert_eq!(additive_energy(&e1, &b).unwrap().energy, 1);
        assert_eq!(additive_energy(&pm, &b).unwrap().energy, 6);
        let h = rep_histogram(&pm, &b).unwrap();
        assert_eq!(h.get(&[2, 0, 0, 0]), 1);
        assert_eq!(h.get(&[0, 0, 0, 0]), 2);
        assert_eq!(h.get(&[-2, 0, 0, 0]), 1);
        assert_eq!(h.entries().len(), 3);
        assert_eq!(l_fold_energy(&e1, 3, &b).unwrap(), 1);
        assert_eq!(l_fold_energy(&pm, 3, &b).unwrap(), 20);
    }

    #[test]
    fn unit_shell_histogram() {
        let b = Budget::default();
        let f = enumerate_shell(4, 1, &b).unwrap();
        let h = rep_histogram(f.points(), &b).unwrap();
        assert_eq!(h.get(&[0, 0, 0, 0]), 8);
        assert_eq!(h.entries().iter().filter(|(_, r)| *r == 1).count(), 8);
        assert_eq!(h.entries().iter().filter(|(_, r)| *r == 2).count(), 24);
        assert_eq!(h.total_mass(), 64);
        assert_eq!(h.energy().unwrap(), 168);
        let e = additive_energy(f.points(), &b).unwrap();
        assert_eq!(e.energy, 168);
        assert_eq!(e.scale, Some(2));
    }

    #[test]
    fn three_paths_agree_on_shells() {
        let b = Budget::default();
        for (n, lambda) in [(4, 9), (4, 25), (5, 6), (5, 11), (3, 50), (2, 65)] {
            let f = enumerate_shell(n, lambda, &b).unwrap();
            let walk = additive_energy(f.points(), &b).unwrap().energy;
            let hist = rep_histogram(f.points(), &b).unwrap().energy().unwrap();
            let merge = oracle::energy_sorted_merge(f.points());
            assert_eq!(walk, hist, "n={n} λ={lambda}");
            assert_eq!(walk, merge, "n={n} λ={lambda}");
            assert_eq!(l_fold_energy(f.points(), 2, &b).unwrap(), walk);
        }
    }

    #[test]
    fn paraboloid_small() {
        let b = Budget::default();
        let p1 = enumerate_paraboloid_set(1);
        let e1 = paraboloid_energy(1, &b).unwrap();
        assert_eq!(e1.energy, oracle::energy_quadruple_brute(&p1));
        // Frozen from the 27⁴-tuple brute force.
        assert_eq!(e1.energy, 3735);
        assert!(e1.energy >= 729);
        assert_eq!(e1.scale, None);
        let p2 = enumerate_paraboloid_set(2);
        assert_eq!(paraboloid_energy(2, &b).unwrap().energy, oracle::energy_sorted_merge(&p2));
    }

    fn enumerate_paraboloid_set(n: u64) -> PointSet {
        crate::lattice::enumerate_paraboloid(n, &Budget::default()).unwrap()
    }

    #[test]
    fn subset_experiment_edges() {
        let b = Budget::default();
        let shell = enumerate_shell(4, 25, &b).unwrap();
        let full = subset_energy_experiment(&shell, &[shell.len()], 1, 7, &b).unwrap();
        assert_eq!(full.rows[0].max_energy, additive_energy(shell.points(), &b).unwrap().energy);
        let one = subset_energy_experiment(&shell, &[1], 3, 7, &b).unwrap();
        assert_eq!(one.rows[0].max_energy, 1);
        assert_eq!(one.rows[0].ratio, 1.0);
        let again = subset_energy_experiment(&shell, &[1], 3, 7, &b).unwrap();
        assert_eq!(one, again);
        let bad = enumerate_shell(3, 25, &b).unwrap();
        assert!(matches!(subset_energy_experiment(&bad, &[1], 1, 0, &b), Err(LabError::BadDimension { .. })));
    }

    #[test]
    fn budget_signals() {
        let b = Budget::default().with_pairs(10);
        let f = enumerate_shell(4, 2, &Budget::default()).unwrap();
        assert!(matches!(additive_energy(f.points(), &b), Err(LabError::BudgetExceeded { .. })));
        assert!(matches!(rep_histogram(f.points(), &b), Err(LabError::BudgetExceeded { .. })));
    }
}
