//! Naive reference implementations. Each one is written independently of the
//! optimized path it checks (no shared helpers beyond plain integer
//! arithmetic) and is deliberately slow. They are compiled into the library
//! because the acceptance suites run from the CLI as well as from tests.

use crate::incidence::{AffineSubspace, Hyperplane};
use crate::lattice::{PointSet, Shell};

/// All integer points of squared norm `lambda`, by nested loops over
/// [−r, r] in every coordinate, abandoning a prefix once its squares
/// exceed λ.
pub fn shell_brute(n: usize, lambda: u64) -> Vec<Vec<i64>> {
    fn rec(n: usize, lambda: i64, r: i64, acc: i64, p: &mut Vec<i64>, out: &mut Vec<Vec<i64>>) {
        if p.len() == n {
            if acc == lambda {
                out.push(p.clone());
            }
            return;
        }
        for x in -r..=r {
            if acc + x * x > lambda {
                continue;
            }
            p.push(x);
            rec(n, lambda, r, acc + x * x, p, out);
            p.pop();
        }
    }
    let r = (lambda as f64).sqrt() as i64 + 1;
    let mut out = Vec::new();
    rec(n, lambda as i64, r, 0, &mut Vec::with_capacity(n), &mut out);
    out
}

/// Jacobi's four-square count for odd λ: 8 σ(λ).
pub fn four_square_odd(lambda: u64) -> u128 {
    assert!(lambda % 2 == 1, "divisor-sum formula used here only for odd λ");
    8 * (1..=lambda).filter(|d| lambda.is_multiple_of(*d)).map(|d| d as u128).sum::<u128>()
}

/// E(P) by sorting all pairwise sums and squaring run lengths.
pub fn energy_sorted_merge(set: &PointSet) -> u128 {
    let mut sums: Vec<Vec<i64>> = Vec::with_capacity(set.len() * set.len());
    for a in set.iter() {
        for b in set.iter() {
            sums.push(a.iter().zip(b).map(|(x, y)| x + y).collect());
        }
    }
    sums.sort_unstable();
    let mut total = 0u128;
    let mut i = 0;
    while i < sums.len() {
        let mut j = i;
        while j < sums.len() && sums[j] == sums[i] {
            j += 1;
        }
        total += ((j - i) as u128).pow(2);
        i = j;
    }
    total
}

/// E(P) straight from the definition, over |P|⁴ quadruples.
pub fn energy_quadruple_brute(set: &PointSet) -> u128 {
    let pts: Vec<&[i64]> = set.iter().collect();
    let mut count = 0u128;
    for a in &pts {
        for b in &pts {
            for c in &pts {
                for d in &pts {
                    if (0..a.len()).all(|k| a[k] + b[k] == c[k] + d[k]) {
                        count += 1;
                    }
                }
            }
        }
    }
    count
}

/// I(P, H) by testing every point against every hyperplane.
pub fn incidences_naive(set: &PointSet, planes: &[Hyperplane]) -> u128 {
    let mut count = 0u128;
    for h in planes {
        for p in set.iter() {
            let lhs: i64 = h.normal().iter().zip(p).map(|(c, x)| c * x).sum();
            if lhs == h.offset() {
                count += 1;
            }
        }
    }
    count
}

fn on(h: &Hyperplane, p: &[i64]) -> bool {
    h.normal().iter().zip(p).map(|(c, x)| c * x).sum::<i64>() == h.offset()
}

/// max |H ∩ H' ∩ P| over unordered pairs, by a triple loop.
pub fn pair_multiplicity_naive(set: &PointSet, planes: &[Hyperplane]) -> u64 {
    let mut best = 0u64;
    for i in 0..planes.len() {
        for j in i + 1..planes.len() {
            let c = set.iter().filter(|p| on(&planes[i], p) && on(&planes[j], p)).count() as u64;
            best = best.max(c);
        }
    }
    best
}

/// Smallest γ ≥ 5 such that for every pair H ≠ H' at most γ hyperplanes H''
/// satisfy |H ∩ H' ∩ H'' ∩ P| ≥ γ, straight from the definition.
pub fn triple_gamma_naive(set: &PointSet, planes: &[Hyperplane]) -> u64 {
    let holds = |gamma: u64| {
        for i in 0..planes.len() {
            for j in 0..planes.len() {
                if i == j {
                    continue;
                }
                let t: Vec<&[i64]> = set.iter().filter(|p| on(&planes[i], p) && on(&planes[j], p)).collect();
                if (t.len() as u64) < gamma {
                    continue;
                }
                let k = planes.iter().filter(|h| t.iter().filter(|p| on(h, p)).count() as u64 >= gamma).count();
                if k as u64 > gamma {
                    return false;
                }
            }
        }
        true
    };
    let mut gamma = 5;
    while !holds(gamma) {
        gamma += 1;
    }
    gamma
}

/// Every v in the box |vᵢ| ≤ 2√λ with 0 < |v|² ≤ 4λ whose hyperplane
/// 2v·θ = |v|² contains the base point and the three direction endpoints.
pub fn subspace_sums_naive(shell: &Shell, w: &AffineSubspace) -> Vec<Vec<i64>> {
    let lambda = shell.lambda() as i64;
    let r = (2.0 * (lambda as f64).sqrt()) as i64 + 1;
    let mut corners = vec![w.base.clone()];
    for d in &w.directions {
        corners.push(w.base.iter().zip(d).map(|(a, b)| a + b).collect());
    }
    let mut out = Vec::new();
    let mut v = vec![-r; 5];
    loop {
        let n2: i64 = v.iter().map(|x| x * x).sum();
        if n2 > 0
            && n2 <= 4 * lambda
            && corners.iter().all(|c| 2 * v.iter().zip(c).map(|(a, b)| a * b).sum::<i64>() == n2)
        {
            out.push(v.clone());
        }
        let mut i = 5;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            v[i] += 1;
            if v[i] <= r {
                break;
            }
            v[i] = -r;
        }
    }
}

fn dot(a: &[i64], b: &[i64]) -> i64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Σ N_{a,b,λ} restricted to a = b, b = λ or a = −λ, by testing every triple
/// in F_{4,λ}³ against the defining equation and the three conditions.
pub fn singular_sum_naive(lambda: u64) -> u128 {
    let f = shell_brute(4, lambda);
    let lam = lambda as i64;
    let mut count = 0u128;
    for x in &f {
        for y in &f {
            for z in &f {
                let (a, b) = (dot(x, y), dot(y, z));
                if dot(x, z) == lam + a - b && (a == b || b == lam || a == -lam) {
                    count += 1;
                }
            }
        }
    }
    count
}

/// Rank over Q by exact rational-free elimination on i128 rows.
#[allow(clippy::needless_range_loop)]
fn rank_exact(rows: &[[i64; 5]]) -> usize {
    let mut a: Vec<Vec<i128>> = rows.iter().map(|r| r.iter().map(|&x| x as i128).collect()).collect();
    let mut r = 0;
    for col in 0..5 {
        let Some(p) = (r..a.len()).find(|&i| a[i][col] != 0) else { continue };
        a.swap(r, p);
        for i in 0..a.len() {
            if i != r && a[i][col] != 0 {
                let (f, g) = (a[i][col], a[r][col]);
                for j in 0..5 {
                    a[i][j] = a[i][j] * g - a[r][j] * f;
                }
            }
        }
        r += 1;
    }
    r
}

/// Total of the quadruple oracle below without the rank split: for each
/// ordered x ≠ y, the square of the number of u with u − x and u − y on
/// the shell.
pub fn quadruples_5d_naive_total(lambda: u64) -> u128 {
    let f: Vec<[i64; 5]> = shell_brute(5, lambda).into_iter().map(|p| [p[0], p[1], p[2], p[3], p[4]]).collect();
    let member: rustc_hash::FxHashSet<[i64; 5]> = f.iter().copied().collect();
    crate::par::map_slice(&f, |x| {
        let mut total = 0u128;
        for y in &f {
            if x == y {
                continue;
            }
            let c = f.iter().filter(|s| member.contains(&std::array::from_fn(|k| x[k] + s[k] - y[k]))).count() as u128;
            total += c * c;
        }
        total
    })
    .into_iter()
    .sum()
}

/// Quadruples (u, v, x, y) with x ≠ y on F_{5,λ} and u − x, v − x, u − y,
/// v − y all on the shell, by direct membership tests. Returns the total and
/// the counts for rank[u, v, x, y] = 1, 2, 3, 4.
pub fn quadruples_5d_naive(lambda: u64) -> (u128, [u128; 4]) {
    let f: Vec<[i64; 5]> = shell_brute(5, lambda).into_iter().map(|p| [p[0], p[1], p[2], p[3], p[4]]).collect();
    let member: std::collections::HashSet<[i64; 5]> = f.iter().copied().collect();
    let mut ranks = [0u128; 4];
    for x in &f {
        for y in &f {
            if x == y {
                continue;
            }
            let us: Vec<[i64; 5]> = f
                .iter()
                .map(|s| std::array::from_fn(|k| x[k] + s[k]))
                .filter(|u: &[i64; 5]| member.contains(&std::array::from_fn(|k| u[k] - y[k])))
                .collect();
            for u in &us {
                for v in &us {
                    ranks[rank_exact(&[*u, *v, *x, *y]) - 1] += 1;
                }
            }
        }
    }
    (ranks.iter().sum(), ranks)
}

/// |{L ∈ M_{m,n}(Z/q) : LᵀL ≡ Λ}| by enumerating every matrix.
pub fn gram_mod_q_exhaustive(m: usize, lam: &[Vec<i64>], q: u64) -> u128 {
    let n = lam.len();
    let cells = m * n;
    let q = q as i64;
    let mut x = vec![0i64; cells];
    let mut count = 0u128;
    loop {
        let ok = (0..n).all(|i| {
            (0..n).all(|j| {
                let s: i64 = (0..m).map(|k| x[k * n + i] * x[k * n + j]).sum();
                (s - lam[i][j]).rem_euclid(q) == 0
            })
        });
        if ok {
            count += 1;
        }
        let mut i = 0;
        loop {
            if i == cells {
                return count;
            }
            x[i] += 1;
            if x[i] < q {
                break;
            }
            x[i] = 0;
            i += 1;
        }
    }
}

/// Σ gcd(λ² − a², λ² − b²) over every |a|, |b| ≤ λ, with Euclid written out.
pub fn gcd_sum_naive(lambda: u64) -> u128 {
    fn euclid(mut x: i128, mut y: i128) -> i128 {
        x = x.abs();
        y = y.abs();
        while y != 0 {
            (x, y) = (y, x % y);
        }
        x
    }
    let l = lambda as i128;
    let mut total = 0u128;
    for a in -l..=l {
        for b in -l..=l {
            total += euclid(l * l - a * a, l * l - b * b) as u128;
        }
    }
    total
}
