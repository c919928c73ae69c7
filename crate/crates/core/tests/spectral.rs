use gpgibbs::rng::stream;
use gpgibbs::spectral::{
    analyze, build_basis, gns_constant, gns_ratio, hermite_functions, norm_lp, norm_sobolev,
    synthesize, GridFunction,
};
use gpgibbs::{Complex64, HermiteBasis};
use proptest::prelude::*;

fn coeffs(max_len: usize) -> impl Strategy<Value = Vec<Complex64>> {
    prop::collection::vec((-2.0..2.0f64, -2.0..2.0f64), 1..=max_len)
        .prop_map(|v| v.into_iter().map(|(a, b)| Complex64::new(a, b)).collect())
}

fn basis_for(c: &[Complex64]) -> HermiteBasis {
    HermiteBasis::new(c.len() - 1).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn round_trip(c in coeffs(25)) {
        let b = basis_for(&c);
        let back = analyze(&b, &synthesize(&b, &c).unwrap()).unwrap();
        for (x, y) in c.iter().zip(&back) {
            prop_assert!((x - y).norm() <= 1e-10);
        }
    }

    #[test]
    fn synthesis_is_additive(pair in (1usize..20).prop_flat_map(|n| (coeffs(n), coeffs(n)))) {
        let (a, mut b2) = pair;
        b2.resize(a.len(), Complex64::new(0.0, 0.0));
        let b = basis_for(&a);
        let sum: Vec<Complex64> = a.iter().zip(&b2).map(|(x, y)| x + y).collect();
        let ga = synthesize(&b, &a).unwrap();
        let gb = synthesize(&b, &b2).unwrap();
        let gs = synthesize(&b, &sum).unwrap();
        for j in 0..gs.len() {
            prop_assert!((ga.values[j] + gb.values[j] - gs.values[j]).norm() <= 1e-12);
        }
    }

    #[test]
    fn l2_norm_is_parseval(c in coeffs(20)) {
        let b = basis_for(&c);
        let l2 = norm_lp(&b, &c, 2.0).unwrap();
        let s0 = norm_sobolev(&b, &c, 0.0).unwrap();
        prop_assert!((l2 - s0).abs() <= 1e-8 * s0.max(1.0));
    }

    #[test]
    fn lp_is_homogeneous(c in coeffs(12), p in 1.0..6.0f64) {
        let b = basis_for(&c);
        let doubled: Vec<Complex64> = c.iter().map(|x| x * 2.0).collect();
        let n1 = norm_lp(&b, &c, p).unwrap();
        let n2 = norm_lp(&b, &doubled, p).unwrap();
        prop_assert!((n2 - 2.0 * n1).abs() <= 1e-10 * n2.max(1.0));
    }

    #[test]
    fn gns_ratio_is_scale_invariant(c in coeffs(12), s in 0.1..10.0f64) {
        prop_assume!(c.iter().any(|x| x.norm() > 1e-3));
        let b = basis_for(&c);
        let scaled: Vec<Complex64> = c.iter().map(|x| x * s).collect();
        let r1 = gns_ratio(&b, &c).unwrap();
        let r2 = gns_ratio(&b, &scaled).unwrap();
        prop_assert!((r1 - r2).abs() <= 1e-10 * r1);
    }
}

#[test]
fn gram_within_tolerance_up_to_64() {
    for n in [0, 1, 7, 16, 33, 48, 64] {
        let b = HermiteBasis::new(n).unwrap();
        assert!(b.gram_deviation() <= 1e-8, "N = {n}: {}", b.gram_deviation());
    }
    let b = build_basis(16, 64).unwrap();
    assert!(b.gram_deviation() <= 1e-8);
}

#[test]
fn eigenrelation() {
    let b = HermiteBasis::new(10).unwrap();
    for n in 0..=10 {
        let mut c = vec![Complex64::new(0.0, 0.0); 11];
        c[n] = Complex64::new(1.0, 0.0);
        let s1 = norm_sobolev(&b, &c, 1.0).unwrap();
        assert!((s1 * s1 - (1 + 2 * n) as f64).abs() < 1e-12);
    }
}

#[test]
fn projection_of_basis_functions() {
    let n = 6;
    let b = HermiteBasis::new(n).unwrap();
    let grid = |k: usize| GridFunction {
        values: b
            .quad_nodes()
            .iter()
            .map(|&x| Complex64::new(hermite_functions(k, x)[k], 0.0))
            .collect(),
    };
    let c3 = analyze(&b, &grid(3)).unwrap();
    for (k, c) in c3.iter().enumerate() {
        let expect = if k == 3 { 1.0 } else { 0.0 };
        assert!((c - Complex64::new(expect, 0.0)).norm() <= 1e-8);
    }
    let outside = analyze(&b, &grid(n + 1)).unwrap();
    let norm: f64 = outside.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
    assert!(norm <= 1e-6, "{norm}");
}

#[test]
fn gns_constant_bounds_and_is_stable_across_truncations() {
    let mut consts = Vec::new();
    for n in [8, 16, 32] {
        let b = HermiteBasis::new(n).unwrap();
        let mut rng = stream(5, n as u64);
        let c = gns_constant(&b, 2000, &mut rng);
        let mut rng = stream(6, n as u64);
        for _ in 0..200 {
            let f: Vec<Complex64> = (0..b.dim())
                .map(|k| gpgibbs::fields::complex_normal(&mut rng) / b.eigenvalues()[k])
                .collect();
            assert!(gns_ratio(&b, &f).unwrap() <= c * (1.0 + 1e-9));
        }
        consts.push(c);
    }
    let lo = consts.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = consts.iter().cloned().fold(0.0, f64::max);
    assert!(hi / lo <= 1.1, "{consts:?}");
}
