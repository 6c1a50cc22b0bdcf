//! Finite-field quadric counts, truncated p-adic local densities of the
//! Gram system LᵀL = Λ, and the mass-formula consistency check.
//!
//! Congruences use the doubled target G = 2Λ: 2xⁱ·xʲ ≡ Gᵢⱼ (mod 2pʳ). A target
//! with an odd entry therefore has no solution modulo any pʳ, which matches
//! the integer situation where 2xⁱ·xʲ is always even.

use std::sync::atomic::{AtomicU64, Ordering};

use num_bigint::{BigInt, BigUint};
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Serialize, Serializer};

use crate::arith::{
    det, gcd, is_positive_definite, is_prime, legendre, multinomial_arrangements, primes_up_to, rem, valuation,
};
use crate::budget::Budget;
use crate::error::{LabError, Result};
use crate::gram::{count_gram_solutions, GramTarget};
use crate::par;

/// Harness constant in |ν_p − 1| ≤ C₀/p².
pub const GOOD_PRIME_C0: u64 = 10;

/// Above this estimated search size the mod-p count at a good prime comes
/// from the chain product instead of the column search.
const DIRECT_SEARCH_LIMIT: f64 = 2e6;

/// N_ξ(d, l): solutions of g(x) = ξ over F_p^l for a form of determinant d.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct QuadricCountSpec {
    pub p: u64,
    pub l: u32,
    pub d: i64,
    pub xi: i64,
}

impl QuadricCountSpec {
    pub fn new(p: u64, l: u32, d: i64, xi: i64) -> Result<Self> {
        let spec = QuadricCountSpec { p, l, d, xi };
        spec.validate()?;
        Ok(spec)
    }

    fn validate(&self) -> Result<()> {
        if self.p == 2 || !is_prime(self.p) {
            return Err(LabError::BadSpec(format!("{} is not an odd prime", self.p)));
        }
        if self.l == 0 {
            return Err(LabError::BadSpec("dimension must be at least 1".into()));
        }
        if rem(self.d as i128, self.p) == 0 {
            return Err(LabError::BadSpec(format!("determinant {} divisible by {}", self.d, self.p)));
        }
        Ok(())
    }
}

/// Closed forms for N₀, N₁ and N_η by the parity of l.
pub fn quadric_count_closed_form(spec: &QuadricCountSpec) -> Result<u128> {
    spec.validate()?;
    let p = spec.p as i128;
    let l = spec.l;
    let nu = l / 2;
    let sign: i128 = if nu.is_multiple_of(2) { 1 } else { -1 };
    let eps = legendre(sign * spec.d as i128, spec.p) as i128;
    let chi_xi = legendre(spec.xi as i128, spec.p) as i128;
    let top = p.pow(l - 1);
    let value = if l % 2 == 1 {
        // l = 2ν + 1
        top + p.pow(nu) * eps * chi_xi
    } else if chi_xi == 0 {
        top + (p - 1) * p.pow(nu - 1) * eps
    } else {
        top - p.pow(nu - 1) * eps
    };
    Ok(value as u128)
}

/// Exhaustive count of d·x₁² + x₂² + … + x_l² ≡ ξ over F_p^l.
pub fn quadric_count_brute(spec: &QuadricCountSpec, budget: &Budget) -> Result<u128> {
    spec.validate()?;
    let p = spec.p;
    let size = (p as u128).checked_pow(spec.l).unwrap_or(u128::MAX);
    let limit = budget.nodes.min(100_000_000);
    if size > limit {
        return Err(LabError::budget("quadric enumeration", size, limit));
    }
    let d = rem(spec.d as i128, p);
    let target = rem(spec.xi as i128, p);
    let l = spec.l as usize;
    let mut x = vec![0u64; l];
    let mut count = 0u128;
    loop {
        let mut value = d * x[0] * x[0];
        for &c in &x[1..] {
            value += c * c;
        }
        if value % p == target {
            count += 1;
        }
        let mut i = 0;
        loop {
            if i == l {
                return Ok(count);
            }
            x[i] += 1;
            if x[i] < p {
                break;
            }
            x[i] = 0;
            i += 1;
        }
    }
}

fn n_xi(p: u64, l: u32, d: i64, xi: i64) -> u128 {
    quadric_count_closed_form(&QuadricCountSpec { p, l, d, xi }).expect("validated by caller")
}

/// |{L ∈ M_{n+1,n}(F_p) : LᵀL = diag(ξ, 1, …, 1)}| as the chain product
/// N_ξ(1, n+1) · Π_{k=2..n} N₁(ξ, k). After the first column the orthogonal
/// complement has determinant class ξ, and it keeps that class as unit
/// columns are split off.
pub fn orthogonal_chain_count(p: u64, n: u32, xi: i64) -> Result<u128> {
    QuadricCountSpec::new(p, n + 1, 1, xi)?;
    if rem(xi as i128, p) == 0 {
        return Err(LabError::BadSpec("ξ must be a unit modulo p".into()));
    }
    let mut total = n_xi(p, n + 1, 1, xi);
    for k in 2..=n {
        total *= n_xi(p, k, xi, 1);
    }
    Ok(total)
}

/// Mod-p count at an odd prime not dividing det Λ: diagonalize Λ over F_p
/// and multiply the quadric counts of the successive complements.
#[allow(clippy::needless_range_loop)]
pub fn good_prime_count_closed_form(m: usize, lam: &[Vec<i64>], p: u64) -> Result<u128> {
    let n = lam.len();
    let mut a: Vec<Vec<u64>> = lam.iter().map(|r| r.iter().map(|&x| rem(x as i128, p)).collect()).collect();
    let mut diag = Vec::with_capacity(n);
    for k in 0..n {
        if a[k][k] == 0 {
            if let Some(i) = (k + 1..n).find(|&i| a[i][i] != 0) {
                a.swap(k, i);
                for row in a.iter_mut() {
                    row.swap(k, i);
                }
            } else if let Some(j) = (k + 1..n).find(|&j| a[k][j] != 0) {
                // Replace e_k by e_k + e_j: new diagonal 2a_kj + a_jj ≠ 0 for odd p.
                for i in 0..n {
                    a[k][i] = (a[k][i] + a[j][i]) % p;
                }
                for i in 0..n {
                    a[i][k] = (a[i][k] + a[i][j]) % p;
                }
            } else {
                return Err(LabError::Precondition(format!("Gram matrix is singular modulo {p}")));
            }
        }
        let pivot = a[k][k];
        let inv = inverse(pivot, p);
        for i in k + 1..n {
            let f = a[i][k] * inv % p;
            for j in k..n {
                a[i][j] = (a[i][j] + p * p - f * a[k][j] % p) % p;
            }
        }
        for j in k + 1..n {
            a[k][j] = 0;
        }
        for i in k + 1..n {
            a[i][k] = 0;
        }
        diag.push(pivot as i64);
    }
    let mut total = 1u128;
    let mut class = 1i64;
    for (k, &d) in diag.iter().enumerate() {
        total *= n_xi(p, (m - k) as u32, class, d);
        class = (class * d) % p as i64;
    }
    Ok(total)
}

fn inverse(u: u64, q: u64) -> u64 {
    let e = (u as i128).extended_gcd(&(q as i128));
    debug_assert_eq!(e.gcd, 1);
    e.x.rem_euclid(q as i128) as u64
}

fn val_mod(x: u64, p: u64, r: u32) -> u32 {
    if x == 0 {
        return r;
    }
    let mut v = 0;
    let mut x = x;
    while x.is_multiple_of(p) {
        x /= p;
        v += 1;
    }
    v
}

/// Solutions y ∈ (Z/q)^m of a linear system, as base + Σ t_k w_k with
/// t_k ∈ 0..range_k.
struct Coset {
    base: Vec<u64>,
    dirs: Vec<(Vec<u64>, u64)>,
}

/// Solve A y ≡ c (mod pʳ) through a Smith form U A V = diag(p^{e_k}).
#[allow(clippy::needless_range_loop)]
fn solve_linear(a: &[Vec<u64>], c: &[u64], m: usize, p: u64, r: u32, q: u64) -> Option<Coset> {
    let rows = a.len();
    let mut a: Vec<Vec<u64>> = a.to_vec();
    let mut u: Vec<Vec<u64>> = (0..rows).map(|i| (0..rows).map(|j| (i == j) as u64).collect()).collect();
    let mut v: Vec<Vec<u64>> = (0..m).map(|i| (0..m).map(|j| (i == j) as u64).collect()).collect();
    let mut exps = Vec::new();
    let sub = |x: u64, y: u64| (x + q - y % q) % q;
    for t in 0..rows.min(m) {
        let mut best: Option<(u32, usize, usize)> = None;
        for (i, row) in a.iter().enumerate().skip(t) {
            for (k, &x) in row.iter().enumerate().skip(t) {
                let e = val_mod(x, p, r);
                if e < r && best.is_none_or(|b| e < b.0) {
                    best = Some((e, i, k));
                }
            }
        }
        let Some((e, i, k)) = best else { break };
        a.swap(t, i);
        u.swap(t, i);
        for row in a.iter_mut() {
            row.swap(t, k);
        }
        for row in v.iter_mut() {
            row.swap(t, k);
        }
        let pe = p.pow(e);
        let unit_inv = inverse(a[t][t] / pe, q);
        for x in a[t].iter_mut().chain(u[t].iter_mut()) {
            *x = *x * unit_inv % q;
        }
        for i in t + 1..rows {
            let f = a[i][t] / pe;
            if f == 0 {
                continue;
            }
            for j in 0..m {
                a[i][j] = sub(a[i][j], f * a[t][j]);
            }
            for j in 0..rows {
                u[i][j] = sub(u[i][j], f * u[t][j]);
            }
        }
        for k in t + 1..m {
            let f = a[t][k] / pe;
            if f == 0 {
                continue;
            }
            for row in a.iter_mut() {
                row[k] = sub(row[k], f * row[t]);
            }
            for row in v.iter_mut() {
                row[k] = sub(row[k], f * row[t]);
            }
        }
        exps.push(e);
    }
    let rank = exps.len();
    let cp: Vec<u64> = (0..rows).map(|i| (0..rows).fold(0, |s, j| (s + u[i][j] * c[j]) % q)).collect();
    if cp[rank..].iter().any(|&x| x != 0) {
        return None;
    }
    let col = |k: usize| -> Vec<u64> { (0..m).map(|i| v[i][k]).collect() };
    let mut base = vec![0u64; m];
    let mut dirs = Vec::new();
    for (t, &e) in exps.iter().enumerate() {
        let pe = p.pow(e);
        if !cp[t].is_multiple_of(pe) {
            return None;
        }
        let z0 = cp[t] / pe;
        let w = col(t);
        for i in 0..m {
            base[i] = (base[i] + z0 * w[i]) % q;
        }
        if e > 0 {
            let step = q / pe;
            dirs.push((w.iter().map(|x| x * step % q).collect(), pe));
        }
    }
    for k in rank..m {
        dirs.push((col(k), q));
    }
    Some(Coset { base, dirs })
}

struct ModSearch<'a> {
    p: u64,
    r: u32,
    q: u64,
    m: usize,
    lam: Vec<Vec<u64>>,
    /// roots[s] lists the square roots of s modulo q.
    roots: Vec<Vec<u32>>,
    budget: &'a Budget,
    nodes: &'a AtomicU64,
}

impl ModSearch<'_> {
    fn dot(&self, x: &[u64], y: &[u64]) -> u64 {
        x.iter().zip(y).fold(0, |s, (a, b)| (s + a * b) % self.q)
    }

    fn charge(&self, n: u64) -> Result<()> {
        let seen = self.nodes.fetch_add(n, Ordering::Relaxed) as u128 + n as u128;
        if seen > self.budget.nodes {
            return Err(LabError::budget("congruence search nodes", seen, self.budget.nodes));
        }
        Ok(())
    }

    /// Number of ways to complete the chosen columns.
    fn complete(&self, cols: &mut Vec<Vec<u64>>) -> Result<u128> {
        let j = cols.len();
        let n = self.lam.len();
        if j == n {
            return Ok(1);
        }
        let c: Vec<u64> = (0..j).map(|i| self.lam[i][j]).collect();
        let Some(coset) = solve_linear(cols, &c, self.m, self.p, self.r, self.q) else {
            return Ok(0);
        };
        let mut total = 0u128;
        let last = j + 1 == n;
        self.for_each_on_quadric(&coset, self.lam[j][j], &mut |y| {
            if last {
                total += 1;
                return Ok(());
            }
            cols.push(y.to_vec());
            let more = self.complete(cols);
            cols.pop();
            total += more?;
            Ok(())
        })?;
        Ok(total)
    }

    /// Visit every y in the coset with y·y ≡ target. When some full-range
    /// direction w has w·w a unit (p odd), its coefficient is solved from
    /// the quadratic instead of enumerated.
    fn for_each_on_quadric(
        &self,
        coset: &Coset,
        target: u64,
        visit: &mut dyn FnMut(&[u64]) -> Result<()>,
    ) -> Result<()> {
        let q = self.q;
        let solved = if self.p == 2 {
            None
        } else {
            coset.dirs.iter().position(|(w, range)| *range == q && !self.dot(w, w).is_multiple_of(self.p))
        };
        let free: Vec<&(Vec<u64>, u64)> =
            coset.dirs.iter().enumerate().filter(|(k, _)| Some(*k) != solved).map(|(_, d)| d).collect();
        let work: u64 = free.iter().map(|d| d.1).product();
        self.charge(work)?;
        let mut t = vec![0u64; free.len()];
        let mut y = coset.base.clone();
        loop {
            match solved {
                None => {
                    if self.dot(&y, &y) == target {
                        visit(&y)?;
                    }
                }
                Some(k) => {
                    let w = &coset.dirs[k].0;
                    let alpha = self.dot(w, w);
                    let beta = 2 * self.dot(w, &y) % q;
                    let gamma = (self.dot(&y, &y) + q - target) % q;
                    let disc = (beta * beta % q + q - 4 * alpha % q * gamma % q) % q;
                    let inv = inverse(2 * alpha % q, q);
                    for &s in &self.roots[disc as usize] {
                        let coef = (s as u64 + q - beta) % q * inv % q;
                        let z: Vec<u64> = y.iter().zip(w).map(|(a, b)| (a + coef * b) % q).collect();
                        visit(&z)?;
                    }
                }
            }
            // Advance the odometer over the free coefficients.
            let mut i = 0;
            loop {
                if i == free.len() {
                    return Ok(());
                }
                let (w, range) = free[i];
                t[i] += 1;
                if t[i] < *range {
                    for (a, b) in y.iter_mut().zip(w) {
                        *a = (*a + b) % q;
                    }
                    break;
                }
                // Wrap: subtract (range − 1)·w.
                let back = (range - 1) % q;
                for (a, b) in y.iter_mut().zip(w) {
                    *a = (*a + q - back * b % q) % q;
                }
                t[i] = 0;
                i += 1;
            }
        }
    }
}

/// First-column representatives modulo signed coordinate permutations:
/// coordinates are class representatives in 0..=q/2, non-increasing. Each
/// comes with the size of its orbit.
fn first_column_orbits(m: usize, q: u64, target: u64) -> Vec<(Vec<u64>, u128)> {
    let half = q / 2;
    let mut out = Vec::new();
    let mut x = Vec::with_capacity(m);
    fn rec(m: usize, q: u64, cap: u64, target: u64, acc: u64, x: &mut Vec<u64>, out: &mut Vec<(Vec<u64>, u128)>) {
        if x.len() == m {
            if acc == target {
                let mut sorted = x.clone();
                sorted.sort_unstable();
                let signs = x.iter().filter(|&&c| (2 * c) % q != 0).count();
                out.push((x.clone(), multinomial_arrangements(&sorted) << signs));
            }
            return;
        }
        for c in 0..=cap {
            x.push(c);
            rec(m, q, c, target, (acc + c * c) % q, x, out);
            x.pop();
        }
    }
    rec(m, q, half, target, 0, &mut x, &mut out);
    out
}

/// |{L ∈ M_{m,n}(Z/pʳ) : 2LᵀL ≡ G (mod 2pʳ)}| by column search: each new
/// column solves its linear congruences against the earlier columns through
/// a Smith form and is then filtered by its norm congruence.
pub fn count_mod_pr(m: usize, doubled: &[Vec<i64>], p: u64, r: u32, budget: &Budget) -> Result<u128> {
    let n = doubled.len();
    if !is_prime(p) {
        return Err(LabError::BadSpec(format!("{p} is not prime")));
    }
    if r == 0 || n == 0 || n > m || m > 8 || doubled.iter().any(|row| row.len() != n) {
        return Err(LabError::BadSpec(format!("need r ≥ 1 and 1 ≤ n ≤ m ≤ 8 (n = {n}, m = {m}, r = {r})")));
    }
    let q =
        p.checked_pow(r).filter(|&q| q <= 1 << 20).ok_or_else(|| LabError::OutOfRange(format!("{p}^{r} too large")))?;
    if doubled.iter().flatten().any(|x| x % 2 != 0) {
        return Ok(0);
    }
    let lam: Vec<Vec<u64>> = doubled.iter().map(|row| row.iter().map(|&x| rem((x / 2) as i128, q)).collect()).collect();
    let mut roots = vec![Vec::new(); q as usize];
    for s in 0..q {
        roots[(s * s % q) as usize].push(s as u32);
    }
    let nodes = AtomicU64::new(0);
    let search = ModSearch { p, r, q, m, lam, roots, budget, nodes: &nodes };
    let reps = first_column_orbits(m, q, search.lam[0][0]);
    search.charge(reps.len() as u64)?;
    let parts = par::map_slice(&reps, |(x, weight)| -> Result<u128> {
        let mut cols = vec![x.clone()];
        Ok(search.complete(&mut cols)? * weight)
    });
    parts.into_iter().try_fold(0u128, |acc, part| Ok(acc + part?))
}

fn big(x: u128) -> BigInt {
    BigInt::from(x)
}

fn ratio_string(r: &BigRational) -> String {
    format!("{}/{}", r.numer(), r.denom())
}

fn ser_ratio<S: Serializer>(r: &BigRational, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&ratio_string(r))
}

fn ser_ratio_opt<S: Serializer>(r: &Option<BigRational>, s: S) -> std::result::Result<S::Ok, S::Error> {
    match r {
        Some(r) => s.serialize_str(&ratio_string(r)),
        None => s.serialize_none(),
    }
}

fn ser_ratio_list<S: Serializer>(list: &[(u32, BigRational)], s: S) -> std::result::Result<S::Ok, S::Error> {
    use serde::ser::SerializeSeq;
    let mut seq = s.serialize_seq(Some(list.len()))?;
    for (r, x) in list {
        seq.serialize_element(&(r, ratio_string(x)))?;
    }
    seq.end()
}

/// How the mod-p count was obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DensityMethod {
    /// Every count by column search.
    Direct,
    /// r = 1 by column search, higher r by the lifting identity.
    DirectLifted,
    /// r = 1 by the chain product, higher r by the lifting identity.
    ClosedFormLifted,
}

#[derive(Clone, Debug, Serialize)]
pub struct DensityEstimate {
    pub p: u64,
    pub m: usize,
    pub n: usize,
    pub doubled_gram: Vec<Vec<i64>>,
    pub counts: Vec<(u32, u128)>,
    #[serde(serialize_with = "ser_ratio_list")]
    pub normalized: Vec<(u32, BigRational)>,
    pub stabilized: bool,
    #[serde(serialize_with = "ser_ratio")]
    pub nu_p: BigRational,
    pub method: DensityMethod,
}

/// Exponent mn − n(n+1)/2 of the normalization.
fn density_exponent(m: usize, n: usize) -> u32 {
    (m * n - n * (n + 1) / 2) as u32
}

fn det_doubled(doubled: &[Vec<i64>]) -> i128 {
    det(&doubled.iter().map(|r| r.iter().map(|&x| x as i128).collect()).collect::<Vec<_>>())
}

/// p is good for the target when it is odd, does not divide det(2Λ) and
/// every entry of 2Λ is even.
pub fn is_good_prime(target: &GramTarget, p: u64) -> bool {
    p != 2 && det_doubled(&target.doubled) % p as i128 != 0 && target.doubled.iter().flatten().all(|x| x % 2 == 0)
}

/// Truncated densities ν_p^{(r)} = count / p^{r(mn − n(n+1)/2)}, r = 1..r_max.
///
/// At a good prime every mod-p solution has full rank, so it lifts to
/// exactly p^{(r−1)(mn − n(n+1)/2)} solutions mod pʳ and the sequence is
/// constant from r = 1. At bad primes every level is counted directly and
/// `stabilized` records whether the last two values agree.
pub fn local_density(target: &GramTarget, p: u64, r_max: u32, budget: &Budget) -> Result<DensityEstimate> {
    if r_max == 0 {
        return Err(LabError::BadSpec("r_max must be at least 1".into()));
    }
    let (m, n) = (target.m, target.n);
    let e = density_exponent(m, n);
    let mut counts = Vec::new();
    let method;
    if is_good_prime(target, p) {
        let direct_cost =
            (p as f64).powi(2 * (m as i32 - 1)) / ((1u64 << m) as f64 * (1..=m as u64).product::<u64>() as f64);
        let c1 = if direct_cost <= DIRECT_SEARCH_LIMIT {
            method = DensityMethod::DirectLifted;
            count_mod_pr(m, &target.doubled, p, 1, budget)?
        } else {
            method = DensityMethod::ClosedFormLifted;
            let lam: Vec<Vec<i64>> = target.doubled.iter().map(|r| r.iter().map(|x| x / 2).collect()).collect();
            good_prime_count_closed_form(m, &lam, p)?
        };
        for r in 1..=r_max {
            let lifts = (p as u128).checked_pow((r - 1) * e).ok_or(LabError::ArithmeticOverflow("lift count"))?;
            counts.push((r, c1.checked_mul(lifts).ok_or(LabError::ArithmeticOverflow("lifted count"))?));
        }
    } else {
        method = DensityMethod::Direct;
        for r in 1..=r_max {
            counts.push((r, count_mod_pr(m, &target.doubled, p, r, budget)?));
        }
    }
    let normalized: Vec<(u32, BigRational)> =
        counts.iter().map(|&(r, c)| (r, BigRational::new(big(c), BigInt::from(p).pow(r * e)))).collect();
    let stabilized = match method {
        DensityMethod::Direct => {
            normalized.len() >= 2 && normalized[normalized.len() - 1].1 == normalized[normalized.len() - 2].1
        }
        _ => true,
    };
    let nu_p = normalized.last().expect("r_max ≥ 1").1.clone();
    Ok(DensityEstimate { p, m, n, doubled_gram: target.doubled.clone(), counts, normalized, stabilized, nu_p, method })
}

#[derive(Clone, Debug, Serialize)]
pub struct GoodPrimeCheck {
    pub p: u64,
    pub c0: u64,
    #[serde(serialize_with = "ser_ratio")]
    pub nu_p: BigRational,
    /// |ν_p − 1|
    #[serde(serialize_with = "ser_ratio")]
    pub deviation: BigRational,
    /// C₀ / p²
    #[serde(serialize_with = "ser_ratio")]
    pub allowed: BigRational,
    /// allowed − deviation, as a float for display.
    pub margin: f64,
    pub passed: bool,
}

/// |ν_p − 1| ≤ C₀/p² at an odd prime p ∤ 2det(Λ).
pub fn good_prime_bound_check(target: &GramTarget, p: u64, budget: &Budget) -> Result<GoodPrimeCheck> {
    if !is_prime(p) || !is_good_prime(target, p) {
        return Err(LabError::Precondition(format!("{p} must be an odd prime not dividing 2det(Λ)")));
    }
    let est = local_density(target, p, 1, budget)?;
    let deviation = (&est.nu_p - BigRational::one()).abs();
    let allowed = BigRational::new(BigInt::from(GOOD_PRIME_C0), BigInt::from(p * p));
    let margin = (&allowed - &deviation).to_f64().unwrap_or(f64::NAN);
    Ok(GoodPrimeCheck {
        p,
        c0: GOOD_PRIME_C0,
        passed: deviation <= allowed,
        nu_p: est.nu_p,
        deviation,
        allowed,
        margin,
    })
}

/// The integer Gram matrix Λ_{a,b} = [[λ, a, λ+a−b], [a, λ, b], [λ+a−b, b, λ]].
pub fn triple_gram(lambda: i64, a: i64, b: i64) -> Vec<Vec<i64>> {
    vec![vec![lambda, a, lambda + a - b], vec![a, lambda, b], vec![lambda + a - b, b, lambda]]
}

#[derive(Clone, Debug, Serialize)]
pub struct BadPrimeReport {
    pub lambda: i64,
    pub a: i64,
    pub b: i64,
    pub p: u64,
    pub det: i128,
    pub o_det: u32,
    /// o_p(λ² − a²); None when λ² = a².
    pub o_lambda_a: Option<u32>,
    pub o_lambda_b: Option<u32>,
    /// o_p(gcd(λ² − a², λ² − b²)); None when both vanish.
    pub o_gcd: Option<u32>,
    pub estimate: DensityEstimate,
    /// o_p(det)² · p^{o_p(gcd)}
    pub bound_shape: Option<f64>,
    /// ν_p^{(r_max)} / bound_shape
    pub implied_constant: Option<f64>,
}

/// Truncated ν_p at a prime dividing det Λ_{a,b}, against the shape
/// o_p(det)² p^{o_p(gcd(λ²−a², λ²−b²))}. Report only.
pub fn bad_prime_report(lambda: i64, a: i64, b: i64, p: u64, r_max: u32, budget: &Budget) -> Result<BadPrimeReport> {
    if a == b || lambda == -a || lambda == b {
        return Err(LabError::Precondition("need a ≠ b and λ ∉ {−a, b}".into()));
    }
    let lam = triple_gram(lambda, a, b);
    let d = det(&lam.iter().map(|r| r.iter().map(|&x| x as i128).collect()).collect::<Vec<_>>());
    if !is_prime(p) || d % p as i128 != 0 {
        return Err(LabError::Precondition(format!("{p} must be a prime dividing det Λ = {d}")));
    }
    let target = GramTarget::from_gram(4, &lam)?;
    let estimate = local_density(&target, p, r_max, budget)?;
    let l2 = (lambda as i128).pow(2);
    let (x, y) = (l2 - (a as i128).pow(2), l2 - (b as i128).pow(2));
    let ov = |v: i128| (v != 0).then(|| valuation(p, v));
    let o_det = valuation(p, d);
    let o_gcd = ov(gcd(x, y));
    let bound_shape = o_gcd.map(|g| (o_det as f64).powi(2) * (p as f64).powi(g as i32));
    let implied_constant = bound_shape.map(|s| estimate.nu_p.to_f64().unwrap_or(f64::NAN) / s);
    Ok(BadPrimeReport {
        lambda,
        a,
        b,
        p,
        det: d,
        o_det,
        o_lambda_a: ov(x),
        o_lambda_b: ov(y),
        o_gcd,
        estimate,
        bound_shape,
        implied_constant,
    })
}

/// Truncation depth used at bad primes.
pub fn default_r_max(p: u64) -> u32 {
    if p <= 3 {
        3
    } else {
        2
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct MassRow {
    pub target_id: usize,
    pub det: i128,
    #[serde(rename = "A")]
    pub a_count: u128,
    #[serde(serialize_with = "ser_ratio")]
    pub product_nu: BigRational,
    #[serde(serialize_with = "ser_ratio_opt")]
    pub ratio: Option<BigRational>,
    /// Bad primes whose truncated density had not settled.
    pub unstable_primes: Vec<u64>,
    pub included: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct MassReport {
    pub m: usize,
    pub n: usize,
    pub assumption: &'static str,
    pub prime_cutoff: u64,
    /// Π_{p > cutoff}(1 + C₀/p²), reported only.
    pub tail_bound: f64,
    pub rows: Vec<MassRow>,
    #[serde(serialize_with = "ser_ratio_opt")]
    pub median: Option<BigRational>,
    #[serde(serialize_with = "ser_ratio_opt")]
    pub max_relative_deviation: Option<BigRational>,
    pub max_relative_deviation_f64: Option<f64>,
}

impl MassReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("target_id,det,A,product_nu,ratio_num,ratio_den\n");
        for row in &self.rows {
            let (num, den) = match &row.ratio {
                Some(r) => (r.numer().to_string(), r.denom().to_string()),
                None => (String::new(), String::new()),
            };
            s.push_str(&format!(
                "{},{},{},{},{},{}\n",
                row.target_id,
                row.det,
                row.a_count,
                ratio_string(&row.product_nu),
                num,
                den
            ));
        }
        s
    }
}

const SINGLE_CLASS: &str = "genus of the identity form treated as a single class; ratios A / (det^((m-n-1)/2) * prod nu_p) should then be constant";

fn tail_bound(cutoff: u64) -> f64 {
    const LIMIT: u64 = 1_000_000;
    let c0 = GOOD_PRIME_C0 as f64;
    let partial: f64 =
        primes_up_to(LIMIT).into_iter().filter(|&p| p > cutoff).map(|p| (c0 / (p as f64).powi(2)).ln_1p()).sum();
    // Σ_{p > LIMIT} 1/p² < 1/LIMIT.
    (partial + c0 / LIMIT as f64).exp()
}

/// Per-target ratios A(I_m, Λ) / (det(Λ)^{(m−n−1)/2} Π_{p ≤ P} ν_p) and
/// their spread around the median. Targets without integral solutions or
/// with an unsettled bad-prime density are reported but excluded from the
/// spread.
pub fn mass_consistency(targets: &[GramTarget], prime_cutoff: u64, budget: &Budget) -> Result<MassReport> {
    let Some(first) = targets.first() else {
        return Err(LabError::Precondition("empty target sample".into()));
    };
    let (m, n) = (first.m, first.n);
    if !(m == 4 || m == 5) || n + 1 != m || targets.iter().any(|t| t.m != m || t.n != n) {
        return Err(LabError::Precondition("mass check needs m ∈ {4, 5} and n = m − 1 for every target".into()));
    }
    let primes = primes_up_to(prime_cutoff);
    let mut rows = Vec::with_capacity(targets.len());
    for (id, target) in targets.iter().enumerate() {
        if target.doubled.iter().flatten().any(|x| x % 2 != 0) {
            return Err(LabError::Precondition(format!("target {id} has a non-integral Gram matrix")));
        }
        let d2 = det_doubled(&target.doubled);
        let det_lam = d2 >> n;
        let g: Vec<Vec<i128>> = target.doubled.iter().map(|r| r.iter().map(|&x| x as i128).collect()).collect();
        if !is_positive_definite(&g) {
            rows.push(MassRow {
                target_id: id,
                det: det_lam,
                a_count: 0,
                product_nu: BigRational::zero(),
                ratio: None,
                unstable_primes: Vec::new(),
                included: false,
                note: Some("not positive definite".into()),
            });
            continue;
        }
        let a_count = count_gram_solutions(target, false, budget)?.count;
        let estimates = par::map_slice(&primes, |&p| {
            let r = if is_good_prime(target, p) { 1 } else { default_r_max(p) };
            local_density(target, p, r, budget)
        });
        let mut product = BigRational::one();
        let mut unstable = Vec::new();
        for est in estimates {
            let est = est?;
            if !est.stabilized {
                unstable.push(est.p);
            }
            product *= est.nu_p;
        }
        let (ratio, included, note) = if a_count == 0 {
            (None, false, Some("no integral solution".to_string()))
        } else if product.is_zero() {
            (None, false, Some("a local density vanishes".to_string()))
        } else {
            let ratio = BigRational::from_integer(big(a_count)) / &product;
            if unstable.is_empty() {
                (Some(ratio), true, None)
            } else {
                (Some(ratio), false, Some("bad-prime density not stabilized".to_string()))
            }
        };
        rows.push(MassRow {
            target_id: id,
            det: det_lam,
            a_count,
            product_nu: product,
            ratio,
            unstable_primes: unstable,
            included,
            note,
        });
    }
    let mut ratios: Vec<BigRational> = rows.iter().filter(|r| r.included).filter_map(|r| r.ratio.clone()).collect();
    ratios.sort();
    let median = match ratios.len() {
        0 => None,
        k if k % 2 == 1 => Some(ratios[k / 2].clone()),
        k => Some((&ratios[k / 2 - 1] + &ratios[k / 2]) / BigRational::from_integer(BigInt::from(2))),
    };
    let max_relative_deviation = median
        .as_ref()
        .map(|med| ratios.iter().map(|r| ((r - med) / med).abs()).max().unwrap_or_else(BigRational::zero));
    let max_relative_deviation_f64 = max_relative_deviation.as_ref().and_then(|r| r.to_f64());
    Ok(MassReport {
        m,
        n,
        assumption: SINGLE_CLASS,
        prime_cutoff,
        tail_bound: tail_bound(prime_cutoff),
        rows,
        median,
        max_relative_deviation,
        max_relative_deviation_f64,
    })
}

/// The nonsingular Λ_{a,b} with |a|, |b| ≤ bound, as 4-dimensional targets.
pub fn triple_targets(lambda: i64, bound: i64) -> Vec<(i64, i64, GramTarget)> {
    let mut out = Vec::new();
    for a in -bound..=bound {
        for b in -bound..=bound {
            let lam = triple_gram(lambda, a, b);
            // det Λ_{a,b} = 2(b − λ)(a + λ)(a − b)
            if (b - lambda) * (a + lambda) * (a - b) != 0 {
                out.push((a, b, GramTarget::from_gram(4, &lam).expect("valid shape")));
            }
        }
    }
    out
}

/// Σ_{|a|,|b| ≤ λ} gcd(λ² − a², λ² − b²), with gcd(0, 0) = 0. Terms are even
/// in a and b, so only a, b ≥ 0 are visited, with weight 2 per nonzero sign.
pub fn gcd_sum(lambda: u64, budget: &Budget) -> Result<u128> {
    let terms = (lambda as u128 + 1).pow(2);
    if terms > budget.pairs {
        return Err(LabError::budget("gcd terms", terms, budget.pairs));
    }
    let l2 = (lambda as i128).pow(2);
    let weight = |a: u64| if a == 0 { 1u128 } else { 2 };
    let rows = par::map_range(lambda as usize + 1, |a| {
        let x = l2 - (a as i128).pow(2);
        (0..=lambda).map(|b| weight(b) * gcd(x, l2 - (b as i128).pow(2)) as u128).sum::<u128>() * weight(a as u64)
    });
    Ok(rows.into_iter().sum())
}

/// The same sum restricted to |a|, |b| < λ and a² ≠ b², dropping the
/// boundary and diagonal terms where the gcd degenerates to λ² − a².
pub fn gcd_sum_off_diagonal(lambda: u64, budget: &Budget) -> Result<u128> {
    let terms = (lambda as u128 + 1).pow(2);
    if terms > budget.pairs {
        return Err(LabError::budget("gcd terms", terms, budget.pairs));
    }
    let l2 = (lambda as i128).pow(2);
    let weight = |a: u64| if a == 0 { 1u128 } else { 2 };
    let rows = par::map_range(lambda as usize, |a| {
        let x = l2 - (a as i128).pow(2);
        (0..lambda)
            .filter(|&b| b != a as u64)
            .map(|b| weight(b) * gcd(x, l2 - (b as i128).pow(2)) as u128)
            .sum::<u128>()
            * weight(a as u64)
    });
    Ok(rows.into_iter().sum())
}

/// Exact BigUint power, used by reports that need p^k beyond u128.
pub fn big_pow(p: u64, k: u32) -> BigUint {
    BigUint::from(p).pow(k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle;

    fn b() -> Budget {
        Budget::default()
    }

    #[test]
    fn off_diagonal_gcd_sum_matches_filtered_loop() {
        for lambda in 0..30i64 {
            let mut want = 0u128;
            for a in -lambda + 1..lambda {
                for b in -lambda + 1..lambda {
                    if a * a != b * b {
                        want += num_integer::gcd(lambda * lambda - a * a, lambda * lambda - b * b) as u128;
                    }
                }
            }
            assert_eq!(gcd_sum_off_diagonal(lambda as u64, &b()).unwrap(), want, "λ={lambda}");
        }
    }

    #[test]
    fn closed_form_examples() {
        let n = |p, l, d, xi| quadric_count_closed_form(&QuadricCountSpec::new(p, l, d, xi).unwrap()).unwrap();
        assert_eq!(n(3, 2, 1, 0), 1);
        assert_eq!(n(5, 3, 1, 1), 30);
        assert_eq!(n(5, 1, 1, 1), 2);
        assert_eq!(n(3, 2, 1, 1), 4);
        assert_eq!(n(5, 1, 1, 2), 0);
    }

    #[test]
    fn closed_form_matches_brute_force_small() {
        for p in [3u64, 5, 7] {
            let eta = crate::arith::least_non_residue(p) as i64;
            for l in 1..=4 {
                for d in [1, eta] {
                    for xi in [0, 1, eta] {
                        let s = QuadricCountSpec::new(p, l, d, xi).unwrap();
                        assert_eq!(
                            quadric_count_closed_form(&s).unwrap(),
                            quadric_count_brute(&s, &b()).unwrap(),
                            "{s:?}"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn bad_specs() {
        assert!(QuadricCountSpec::new(2, 2, 1, 1).is_err());
        assert!(QuadricCountSpec::new(5, 2, 10, 1).is_err());
        assert!(QuadricCountSpec::new(9, 2, 1, 1).is_err());
    }

    #[test]
    fn chain_counts() {
        assert_eq!(orthogonal_chain_count(3, 3, 1).unwrap(), 576);
        assert_eq!(orthogonal_chain_count(5, 2, 1).unwrap(), 120);
        assert_eq!(orthogonal_chain_count(7, 1, 3).unwrap(), n_xi(7, 2, 1, 3));
        assert_eq!(oracle::gram_mod_q_exhaustive(4, &[vec![1, 0, 0], vec![0, 1, 0], vec![0, 0, 1]], 3), 576);
        assert_eq!(oracle::gram_mod_q_exhaustive(3, &[vec![1, 0], vec![0, 1]], 5), 120);
    }

    #[test]
    fn search_matches_exhaustive_count() {
        let cases: Vec<(usize, Vec<Vec<i64>>, u64)> = vec![
            (3, vec![vec![1, 0], vec![0, 2]], 3),
            (3, vec![vec![2, 1], vec![1, 2]], 3),
            (3, vec![vec![3, 1], vec![1, 3]], 4),
            (3, vec![vec![2, 1], vec![1, 2]], 9),
            (3, vec![vec![1, 0], vec![0, 1]], 8),
            (2, vec![vec![5]], 25),
            (4, vec![vec![0, 0], vec![0, 0]], 3),
            (3, vec![vec![3, 3], vec![3, 3]], 9),
        ];
        for (m, lam, q) in cases {
            let (p, r) = prime_power(q);
            let doubled: Vec<Vec<i64>> = lam.iter().map(|row| row.iter().map(|x| 2 * x).collect()).collect();
            assert_eq!(
                count_mod_pr(m, &doubled, p, r, &b()).unwrap(),
                oracle::gram_mod_q_exhaustive(m, &lam, q),
                "m={m} Λ={lam:?} q={q}"
            );
        }
    }

    fn prime_power(q: u64) -> (u64, u32) {
        let p = (2..=q).find(|d| q.is_multiple_of(*d)).unwrap();
        let mut r = 0;
        let mut x = q;
        while x > 1 {
            x /= p;
            r += 1;
        }
        (p, r)
    }

    #[test]
    fn odd_doubled_entry_has_no_solutions() {
        assert_eq!(count_mod_pr(4, &[vec![2, 1], vec![1, 2]], 3, 1, &b()).unwrap(), 0);
        assert_eq!(count_mod_pr(4, &[vec![3]], 5, 1, &b()).unwrap(), 0);
    }

    #[test]
    fn identity_density_at_three() {
        let t = GramTarget::from_gram(4, &[vec![1, 0, 0], vec![0, 1, 0], vec![0, 0, 1]]).unwrap();
        assert_eq!(count_mod_pr(4, &t.doubled, 3, 1, &b()).unwrap(), 576);
        let est = local_density(&t, 3, 2, &b()).unwrap();
        assert_eq!(est.nu_p, BigRational::new(576.into(), 729.into()));
        assert!(est.stabilized);
        let c = good_prime_bound_check(&t, 3, &b()).unwrap();
        assert_eq!(c.deviation, BigRational::new(153.into(), 729.into()));
        assert!(c.passed);
        let c13 = good_prime_bound_check(&t, 13, &b()).unwrap();
        assert!(c13.passed);
    }

    #[test]
    fn closed_form_matches_search_at_good_primes() {
        for (a, bb) in [(1, 2), (-2, 3), (0, 1), (3, -1)] {
            let lam = triple_gram(5, a, bb);
            let t = GramTarget::from_gram(4, &lam).unwrap();
            for p in [3u64, 7, 11] {
                if is_good_prime(&t, p) {
                    assert_eq!(
                        good_prime_count_closed_form(4, &lam, p).unwrap(),
                        count_mod_pr(4, &t.doubled, p, 1, &b()).unwrap(),
                        "a={a} b={bb} p={p}"
                    );
                }
            }
        }
    }

    #[test]
    fn divisible_determinant_is_rejected() {
        let t = GramTarget::from_gram(4, &triple_gram(5, 1, 2)).unwrap();
        let d = det_doubled(&t.doubled) / 8;
        assert_eq!(d, 2 * (2 - 5) * (1 + 5) * (1 - 2));
        assert!(good_prime_bound_check(&t, 3, &b()).is_err());
        assert!(good_prime_bound_check(&t, 2, &b()).is_err());
    }

    #[test]
    fn bad_prime_valuations() {
        let rep = bad_prime_report(5, 3, 1, 2, 2, &b()).unwrap();
        assert_eq!(rep.o_lambda_a, Some(4));
        assert_eq!(rep.o_lambda_b, Some(3));
        assert_eq!(rep.o_gcd, Some(3));
        assert!(bad_prime_report(5, 2, 2, 2, 2, &b()).is_err());
        assert!(bad_prime_report(5, 1, 2, 5, 2, &b()).is_err());
    }

    #[test]
    fn gcd_sums() {
        assert_eq!(gcd_sum(0, &b()).unwrap(), 0);
        assert_eq!(gcd_sum(1, &b()).unwrap(), 5);
        for lambda in 0..=30 {
            assert_eq!(gcd_sum(lambda, &b()).unwrap(), oracle::gcd_sum_naive(lambda));
        }
    }

    #[test]
    fn single_target_has_zero_spread() {
        let t = GramTarget::from_gram(4, &triple_gram(5, 1, 2)).unwrap();
        let rep = mass_consistency(&[t], 20, &b()).unwrap();
        if rep.rows[0].included {
            assert_eq!(rep.max_relative_deviation, Some(BigRational::zero()));
        }
        assert!(rep.to_csv().starts_with("target_id,det,A,product_nu,ratio_num,ratio_den\n"));
    }
}
