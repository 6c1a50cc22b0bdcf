//! Property tests: fast paths against the brute-force oracles, plus the
//! structural invariants each quantity must satisfy on arbitrary input.

use proptest::prelude::*;
use sphere_lab::density::{count_mod_pr, gcd_sum, quadric_count_brute, quadric_count_closed_form, QuadricCountSpec};
use sphere_lab::energy::{additive_energy, l_fold_energy};
use sphere_lab::incidence::{hyperplane_for_sum, incidences};
use sphere_lab::lattice::enumerate_shell;
use sphere_lab::scaling::fit_exponent;
use sphere_lab::suites::LambdaRange;
use sphere_lab::{oracle, Budget, Origin, PointSet};

fn budget() -> Budget {
    Budget::default()
}

fn point_set(dim: usize, span: i64, max_len: usize) -> impl Strategy<Value = PointSet> {
    prop::collection::vec(prop::collection::vec(-span..=span, dim), 1..max_len)
        .prop_map(move |pts| PointSet::new(dim, pts, Origin::Custom).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn shell_matches_brute_force(n in 2usize..=5, lambda in 0u64..=60) {
        let s = enumerate_shell(n, lambda, &budget()).unwrap();
        let brute = oracle::shell_brute(n, lambda);
        prop_assert!(s.points().is_strictly_sorted());
        prop_assert!(s.points().iter().eq(brute.iter().map(|p| p.as_slice())));
        prop_assert!(s.points().iter().all(|p| p.iter().map(|x| x * x).sum::<i64>() == lambda as i64));
    }

    #[test]
    fn shell_is_closed_under_signs_and_permutations(n in 2usize..=5, lambda in 1u64..=80) {
        let s = enumerate_shell(n, lambda, &budget()).unwrap();
        for p in s.points().iter() {
            let mut q = p.to_vec();
            q[0] = -q[0];
            prop_assert!(s.points().contains(&q));
            q.swap(0, n - 1);
            prop_assert!(s.points().contains(&q));
        }
    }

    #[test]
    fn energy_matches_quadruple_count(set in point_set(3, 4, 40)) {
        let e = additive_energy(&set, &budget()).unwrap().energy;
        prop_assert_eq!(e, oracle::energy_quadruple_brute(&set));
        prop_assert_eq!(e, oracle::energy_sorted_merge(&set));
    }

    #[test]
    fn energy_is_bracketed_and_affine_invariant(set in point_set(4, 5, 60), shift in prop::collection::vec(-9i64..=9, 4)) {
        let e = additive_energy(&set, &budget()).unwrap().energy;
        let k = set.len() as u128;
        prop_assert!(2 * k * k - k <= e && e <= k * k * k);
        prop_assert_eq!(e, additive_energy(&set.negated(), &budget()).unwrap().energy);
        prop_assert_eq!(e, additive_energy(&set.translated(&shift).unwrap(), &budget()).unwrap().energy);
    }

    #[test]
    fn two_fold_energy_is_additive_energy(set in point_set(2, 6, 40)) {
        let e = additive_energy(&set, &budget()).unwrap().energy;
        prop_assert_eq!(l_fold_energy(&set, 2, &budget()).unwrap(), e);
    }

    #[test]
    fn incidences_match_naive(lambda in 1u64..=30, picks in prop::collection::vec(any::<prop::sample::Index>(), 1..12)) {
        let s = enumerate_shell(4, lambda, &budget()).unwrap();
        let pts = s.points();
        let planes: Vec<_> = picks
            .chunks(2)
            .filter(|c| c.len() == 2)
            .map(|c| {
                let (x, y) = (pts.point(c[0].index(pts.len())), pts.point(c[1].index(pts.len())));
                x.iter().zip(y).map(|(a, b)| a + b).collect::<Vec<i64>>()
            })
            .filter(|v| v.iter().any(|&t| t != 0))
            .map(|v| hyperplane_for_sum(&v, lambda).unwrap())
            .collect();
        prop_assert_eq!(incidences(pts, &planes).unwrap(), oracle::incidences_naive(pts, &planes));
    }

    #[test]
    fn quadric_closed_form_matches_brute(
        p in prop::sample::select(vec![3u64, 5, 7, 11]),
        l in 1u32..=4,
        d in 1i64..=10,
        xi in 0i64..=10,
    ) {
        prop_assume!(d % p as i64 != 0);
        let spec = QuadricCountSpec::new(p, l, d, xi).unwrap();
        prop_assert_eq!(quadric_count_closed_form(&spec).unwrap(), quadric_count_brute(&spec, &budget()).unwrap());
    }

    #[test]
    fn gram_count_matches_exhaustive(
        (p, r) in prop::sample::select(vec![(3u64, 1u32), (5, 1), (3, 2), (7, 1)]),
        entries in prop::collection::vec(-6i64..=6, 3),
    ) {
        let lam = vec![vec![entries[0], entries[1]], vec![entries[1], entries[2]]];
        let doubled: Vec<Vec<i64>> = lam.iter().map(|row| row.iter().map(|x| 2 * x).collect()).collect();
        let q = p.pow(r);
        prop_assert_eq!(
            count_mod_pr(3, &doubled, p, r, &budget()).unwrap(),
            oracle::gram_mod_q_exhaustive(3, &lam, q)
        );
    }

    #[test]
    fn gcd_sum_matches_naive(lambda in 0u64..=60) {
        prop_assert_eq!(gcd_sum(lambda, &budget()).unwrap(), oracle::gcd_sum_naive(lambda));
    }

    #[test]
    fn fit_recovers_power_law(slope in -3.0f64..5.0, c in 0.1f64..10.0) {
        let rows: Vec<(f64, f64)> = (1..=8).map(|k| {
            let x = 10.0 * k as f64;
            (x, c * x.powf(slope))
        }).collect();
        let fit = fit_exponent(&rows).unwrap();
        prop_assert!((fit.slope - slope).abs() < 1e-9);
        prop_assert!((fit.intercept - c.ln()).abs() < 1e-9);
    }

    #[test]
    fn lambda_range_parses_and_filters(lo in 0u64..50, len in 0u64..50, parity in 0usize..3) {
        let hi = lo + len;
        let tag = ["", ":odd", ":even"][parity];
        let r: LambdaRange = format!("{lo}:{hi}{tag}").parse().unwrap();
        let values = r.values();
        prop_assert!(values.iter().all(|&v| lo <= v && v <= hi));
        prop_assert!(values.iter().all(|&v| parity == 0 || v % 2 == (parity == 1) as u64));
        let expected = (lo..=hi).filter(|&v| parity == 0 || v % 2 == (parity == 1) as u64).count();
        prop_assert_eq!(values.len(), expected);
    }
}

#[test]
fn reversed_range_is_rejected() {
    assert!("9:3".parse::<LambdaRange>().is_err());
    assert!("3:9:prime".parse::<LambdaRange>().is_err());
    assert!("3".parse::<LambdaRange>().is_err());
}
