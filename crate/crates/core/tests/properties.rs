use colombeau::forms::{random_polynomial_form, sort_sign, subsets};
use colombeau::tensor::{flat_index, unflat_index};
use colombeau::*;
use proptest::prelude::*;

fn max_abs(a: &KForm, eps: f64, x: &[f64]) -> f64 {
    a.components(0).iter().map(|c| c.at(eps).eval(x).abs()).fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn jet_pythagoras(x in -3.0..3.0f64, y in -3.0..3.0f64, order in 0usize..6) {
        let v = Jet::variables(&[x, y], order);
        let u = v[0].mul(&v[1]).add(&v[0].sin());
        let one = u.sin().mul(&u.sin()).add(&u.cos().mul(&u.cos()));
        prop_assert!((one.value() - 1.0).abs() < 1e-13);
        for c in &one.coeffs()[1..] {
            prop_assert!(c.abs() < 1e-10);
        }
    }

    #[test]
    fn jet_product_commutes(x in -2.0..2.0f64, order in 0usize..8) {
        let v = Jet::variables(&[x], order);
        let a = v[0].exp();
        let b = v[0].cos().add_scalar(2.0);
        let (ab, ba) = (a.mul(&b), b.mul(&a));
        for (p, q) in ab.coeffs().iter().zip(ba.coeffs()) {
            prop_assert!((p - q).abs() <= 1e-14 * (1.0 + p.abs()));
        }
    }

    #[test]
    fn power_law_slope_recovered(m in -5.0..5.0f64, c in 0.1..10.0f64) {
        let grid = EpsGrid::dyadic(4, 14).unwrap();
        let samples: Vec<(f64, f64)> = grid.values().iter().map(|&e| (e, c * e.powf(m))).collect();
        let fit = estimate_order(&samples, &OrderConfig::default()).unwrap();
        prop_assert!((fit.slope - m).abs() < 1e-9);
    }

    #[test]
    fn verdict_is_monotone(a in -30.0..10.0f64, b in -30.0..10.0f64) {
        let cfg = OrderConfig::default();
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        let rank = |v: Verdict| match v {
            Verdict::Divergent => -1i64,
            Verdict::Moderate { n } => 100 - n as i64,
            Verdict::Negligible { .. } => 1000,
        };
        prop_assert!(rank(cfg.verdict(lo)) <= rank(cfg.verdict(hi)));
    }

    #[test]
    fn flat_index_roundtrip(n in 1usize..5, rank in 0usize..4, seed in any::<u64>()) {
        let total = n.pow(rank as u32);
        let f = (seed as usize) % total;
        let idx = unflat_index(n, rank, f);
        prop_assert_eq!(flat_index(n, &idx), f);
    }

    #[test]
    fn sort_sign_is_parity(perm in Just(vec![0usize, 1, 2, 3]).prop_shuffle()) {
        let (sorted, sign) = sort_sign(&perm).unwrap();
        prop_assert_eq!(sorted, vec![0, 1, 2, 3]);
        let mut inversions = 0;
        for i in 0..4 {
            for j in i + 1..4 {
                if perm[i] > perm[j] {
                    inversions += 1;
                }
            }
        }
        prop_assert_eq!(sign, if inversions % 2 == 0 { 1.0 } else { -1.0 });
    }

    #[test]
    fn subsets_are_sorted_and_counted(n in 1usize..6, k in 0usize..6) {
        let s = subsets(n, k);
        let binom = |n: usize, k: usize| if k > n { 0 } else { (0..k).fold(1usize, |acc, i| acc * (n - i) / (i + 1)) };
        prop_assert_eq!(s.len(), binom(n, k));
        prop_assert!(s.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn d_squared_vanishes(seed in any::<u64>(), k in 0usize..2, x in prop::array::uniform3(-1.0..1.0f64)) {
        let a = random_polynomial_form(3, k, 4, seed);
        let dda = exterior_d(&exterior_d(&a).unwrap()).unwrap();
        prop_assert!(max_abs(&dda, 0.1, &x) < 1e-10);
    }

    #[test]
    fn wedge_graded_commutative(s1 in any::<u64>(), s2 in any::<u64>(), x in prop::array::uniform3(-1.0..1.0f64)) {
        let a = random_polynomial_form(3, 1, 3, s1);
        let b = random_polynomial_form(3, 2, 3, s2);
        let ab = wedge(&a, &b).unwrap();
        let ba = wedge(&b, &a).unwrap();
        let diff = ab.sub(&ba).unwrap();
        prop_assert!(max_abs(&diff, 0.05, &x) < 1e-12 * (1.0 + max_abs(&ab, 0.05, &x)));
    }
}
