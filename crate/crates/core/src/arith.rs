//! Exact integer helpers shared by the counting modules.

use num_integer::Integer;

/// Floor of the square root.
pub fn isqrt(n: u64) -> u64 {
    n.isqrt()
}

/// `Some(r)` when `n = r²`.
pub fn exact_sqrt(n: u64) -> Option<u64> {
    let r = n.isqrt();
    (r * r == n).then_some(r)
}

/// The scale parameter `floor(√λ) + 1`.
pub fn scale_n(lambda: u64) -> u64 {
    isqrt(lambda) + 1
}

/// gcd with the convention gcd(0, x) = |x|, gcd(0, 0) = 0.
pub fn gcd(a: i128, b: i128) -> i128 {
    a.gcd(&b)
}

pub fn gcd_slice(values: &[i64]) -> i64 {
    values.iter().fold(0i64, |acc, &v| acc.gcd(&v))
}

/// p-adic valuation of a nonzero integer.
pub fn valuation(p: u64, n: i128) -> u32 {
    assert!(n != 0, "valuation of zero");
    let p = p as i128;
    let mut n = n.abs();
    let mut v = 0;
    while n % p == 0 {
        n /= p;
        v += 1;
    }
    v
}

pub fn mod_pow(base: u64, mut exp: u64, modulus: u64) -> u64 {
    if modulus == 1 {
        return 0;
    }
    let m = modulus as u128;
    let mut b = (base as u128) % m;
    let mut acc = 1u128;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = acc * b % m;
        }
        b = b * b % m;
        exp >>= 1;
    }
    acc as u64
}

/// Reduce any integer into `0..m`.
pub fn rem(a: i128, m: u64) -> u64 {
    a.rem_euclid(m as i128) as u64
}

/// Legendre symbol (a/p) for an odd prime p, by Euler's criterion.
pub fn legendre(a: i128, p: u64) -> i32 {
    debug_assert!(p > 2);
    let r = rem(a, p);
    if r == 0 {
        return 0;
    }
    match mod_pow(r, (p - 1) / 2, p) {
        1 => 1,
        x if x == p - 1 => -1,
        x => unreachable!("Euler criterion returned {x} mod {p}; p not prime?"),
    }
}

pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    let mut d = 2;
    while d * d <= n {
        if n.is_multiple_of(d) {
            return false;
        }
        d += 1;
    }
    true
}

pub fn primes_up_to(limit: u64) -> Vec<u64> {
    if limit < 2 {
        return Vec::new();
    }
    let n = limit as usize;
    let mut sieve = vec![true; n + 1];
    sieve[0] = false;
    sieve[1] = false;
    let mut i = 2;
    while i * i <= n {
        if sieve[i] {
            (i * i..=n).step_by(i).for_each(|j| sieve[j] = false);
        }
        i += 1;
    }
    sieve.iter().enumerate().filter(|(_, &s)| s).map(|(i, _)| i as u64).collect()
}

/// Smallest quadratic non-residue modulo an odd prime.
pub fn least_non_residue(p: u64) -> u64 {
    (2..p).find(|&a| legendre(a as i128, p) == -1).expect("odd prime has a non-residue")
}

/// Determinant by fraction-free (Bareiss) elimination.
pub fn det(matrix: &[Vec<i128>]) -> i128 {
    let n = matrix.len();
    if n == 0 {
        return 1;
    }
    let mut a: Vec<Vec<i128>> = matrix.to_vec();
    let mut sign = 1i128;
    let mut prev = 1i128;
    for k in 0..n - 1 {
        if a[k][k] == 0 {
            match (k + 1..n).find(|&i| a[i][k] != 0) {
                Some(i) => {
                    a.swap(k, i);
                    sign = -sign;
                }
                None => return 0,
            }
        }
        for i in k + 1..n {
            for j in k + 1..n {
                a[i][j] = (a[i][j] * a[k][k] - a[i][k] * a[k][j]) / prev;
            }
        }
        prev = a[k][k];
    }
    sign * a[n - 1][n - 1]
}

/// Rank over Q of an integer matrix given by rows, fraction-free.
pub fn rank(rows: &[Vec<i64>]) -> usize {
    let mut a: Vec<Vec<i128>> = rows.iter().map(|r| r.iter().map(|&x| x as i128).collect()).collect();
    let nrows = a.len();
    if nrows == 0 {
        return 0;
    }
    let ncols = a[0].len();
    let mut rank = 0;
    let mut prev = 1i128;
    for col in 0..ncols {
        let Some(pivot) = (rank..nrows).find(|&i| a[i][col] != 0) else {
            continue;
        };
        a.swap(rank, pivot);
        for i in rank + 1..nrows {
            for j in col + 1..ncols {
                a[i][j] = (a[i][j] * a[rank][col] - a[i][col] * a[rank][j]) / prev;
            }
            a[i][col] = 0;
        }
        prev = a[rank][col];
        rank += 1;
        if rank == nrows {
            break;
        }
    }
    rank
}

/// All principal minors nonnegative.
pub fn is_positive_semidefinite(matrix: &[Vec<i128>]) -> bool {
    let n = matrix.len();
    (1u32..(1 << n)).all(|mask| {
        let idx: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
        let sub: Vec<Vec<i128>> = idx.iter().map(|&i| idx.iter().map(|&j| matrix[i][j]).collect()).collect();
        det(&sub) >= 0
    })
}

/// Leading principal minors positive (Sylvester).
pub fn is_positive_definite(matrix: &[Vec<i128>]) -> bool {
    let n = matrix.len();
    (1..=n).all(|k| {
        let sub: Vec<Vec<i128>> = matrix[..k].iter().map(|row| row[..k].to_vec()).collect();
        det(&sub) > 0
    })
}

pub fn dot(a: &[i64], b: &[i64]) -> i64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[i64]) -> i64 {
    dot(a, a)
}

/// Number of distinct arrangements of a multiset, `n! / Π mult!`.
pub fn multinomial_arrangements(sorted_values: &[u64]) -> u128 {
    let n = sorted_values.len();
    let mut total: u128 = (1..=n as u128).product();
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j < n && sorted_values[j] == sorted_values[i] {
            j += 1;
        }
        total /= (1..=(j - i) as u128).product::<u128>();
        i = j;
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn legendre_matches_residue_table() {
        for p in primes_up_to(50).into_iter().filter(|&p| p > 2) {
            let squares: std::collections::HashSet<u64> = (1..p).map(|x| x * x % p).collect();
            for a in 0..p {
                let expected = if a == 0 {
                    0
                } else if squares.contains(&a) {
                    1
                } else {
                    -1
                };
                assert_eq!(legendre(a as i128, p), expected, "({a}/{p})");
            }
        }
    }

    #[test]
    fn det_and_rank_small() {
        let m = vec![vec![2, 1, 0], vec![1, 2, 1], vec![0, 1, 2]];
        assert_eq!(det(&m), 4);
        let singular = vec![vec![1, 2, 3], vec![2, 4, 6], vec![0, 0, 1]];
        assert_eq!(det(&singular), 0);
        assert_eq!(rank(&[vec![1, 2, 3], vec![2, 4, 6], vec![0, 0, 1]]), 2);
        assert_eq!(rank(&[vec![0, 0], vec![0, 0]]), 0);
        assert_eq!(rank(&[vec![0, 1, 0, 0, 0], vec![0, 0, 0, 0, 0], vec![0, 3, 0, 0, 0]]), 1);
    }

    #[test]
    fn det_needs_row_swap() {
        let m = vec![vec![0, 1], vec![1, 0]];
        assert_eq!(det(&m), -1);
        let m = vec![vec![0, 2, 1], vec![3, 0, 0], vec![1, 1, 1]];
        assert_eq!(det(&m), -3);
    }

    #[test]
    fn valuations_and_gcd() {
        assert_eq!(valuation(2, 16), 4);
        assert_eq!(valuation(2, -24), 3);
        assert_eq!(valuation(3, 7), 0);
        assert_eq!(gcd(0, 5), 5);
        assert_eq!(gcd(0, 0), 0);
        assert_eq!(gcd(-4, 6), 2);
    }

    #[test]
    fn sieve() {
        assert_eq!(primes_up_to(20), vec![2, 3, 5, 7, 11, 13, 17, 19]);
        assert!(is_prime(97) && !is_prime(91));
    }

    #[test]
    fn arrangements() {
        assert_eq!(multinomial_arrangements(&[0, 1, 1, 2]), 12);
        assert_eq!(multinomial_arrangements(&[3, 3, 3]), 1);
    }
}
