use detlab::cli::parse_eps_list;
use detlab::fields::{ConstantField, DiagonalField, PolyBump};
use detlab::inequalities::{exponents, field_distance};
use detlab::matkit::{
    cofactor, det, det_lemma_residual, min_eigenvalue, minkowski_gap, psd_check, psd_root_det, GeneralMatrix,
    SymMatrix,
};
use detlab::measures::{hardy_norm, ma_mass_radial, RadialProfile};
use detlab::quadrature::{Domain, IntegrationScheme};
use proptest::prelude::*;

fn square(n: usize, range: f64) -> impl Strategy<Value = GeneralMatrix> {
    prop::collection::vec(prop::collection::vec(-range..range, n), n)
        .prop_map(|rows| GeneralMatrix::from_rows(&rows).unwrap())
}

fn any_square(range: f64) -> impl Strategy<Value = GeneralMatrix> {
    (2usize..=4).prop_flat_map(move |n| square(n, range))
}

/// Gram matrix of `k` vectors, so rank-deficient when `k < n`.
fn psd(n: usize) -> impl Strategy<Value = SymMatrix> {
    (1usize..=n + 1).prop_flat_map(move |k| {
        prop::collection::vec(prop::collection::vec(-1.0..1.0f64, n), k)
            .prop_map(|vs| SymMatrix::gram(&vs).unwrap())
    })
}

fn vector(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0..1.0f64, n)
}

fn bump2() -> impl Strategy<Value = PolyBump> {
    (vector(2), 0.3..0.9f64, 3u32..=4, -2.0..2.0f64)
        .prop_map(|(c, r, k, a)| PolyBump::new(c.iter().map(|v| 0.3 * v).collect(), r, k, a).unwrap())
}

fn diagonal2() -> impl Strategy<Value = DiagonalField> {
    (bump2(), bump2()).prop_map(|(a, b)| DiagonalField::new(vec![vec![a], vec![b]]).unwrap())
}

fn convex_profile() -> impl Strategy<Value = RadialProfile> {
    (0.0..1.0f64, prop::collection::btree_set(1u32..200, 0..5)).prop_flat_map(|(s, cuts)| {
        let breakpoints: Vec<f64> = cuts.into_iter().map(|c| c as f64 / 100.0).collect();
        prop::collection::vec(0.0..3.0f64, breakpoints.len() + 1).prop_map(move |curvatures| {
            RadialProfile::PiecewiseQuadratic { initial_slope: s, breakpoints: breakpoints.clone(), curvatures }
        })
    })
}

fn scale(m: &GeneralMatrix) -> f64 {
    1.0 + m.max_abs().powi(m.dim() as i32)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn cofactor_identity(a in any_square(5.0)) {
        let n = a.dim();
        let resid = a.matmul(&cofactor(&a)).sub(&GeneralMatrix::identity(n).unwrap().scale(det(&a))).max_abs();
        prop_assert!(resid <= 1e-12 * scale(&a), "residual {resid}");
        let left = cofactor(&a).matmul(&a).sub(&GeneralMatrix::identity(n).unwrap().scale(det(&a))).max_abs();
        prop_assert!(left <= 1e-12 * scale(&a));
    }

    #[test]
    fn determinant_is_multiplicative((a, b) in (2usize..=4).prop_flat_map(|n| (square(n, 2.0), square(n, 2.0)))) {
        let lhs = det(&a.matmul(&b));
        prop_assert!((lhs - det(&a) * det(&b)).abs() <= 1e-11 * scale(&a) * scale(&b));
    }

    #[test]
    fn cofactor_of_cofactor((a, _) in (2usize..=4).prop_flat_map(|n| (square(n, 2.0), Just(n)))) {
        // cof(cof A) = det(A)^{n-2} A.
        let n = a.dim() as i32;
        let want = a.scale(det(&a).powi(n - 2));
        let s = scale(&a).powi(n - 1);
        prop_assert!(cofactor(&cofactor(&a)).sub(&want).max_abs() <= 1e-11 * s);
    }

    #[test]
    fn determinant_lemma((a, u, v) in (2usize..=4).prop_flat_map(|n| (square(n, 1.0), vector(n), vector(n)))) {
        let r = det_lemma_residual(&a, &u, &v).unwrap();
        prop_assert!(r <= 1e-12 * (1.0 + det(&a.add(&GeneralMatrix::outer(&u, &v).unwrap())).abs()));
    }

    #[test]
    fn gram_matrices_are_psd(g in (2usize..=4).prop_flat_map(psd)) {
        prop_assert!(psd_check(&g, 1e-13));
        prop_assert!(psd_root_det(&g) >= 0.0);
    }

    #[test]
    fn shifted_negative_matrices_fail_psd(g in (2usize..=4).prop_flat_map(psd), shift in 1e-6..1.0f64) {
        let n = g.dim();
        let lowered = g.sub(&SymMatrix::identity(n).unwrap().scale(min_eigenvalue(&g) + shift));
        prop_assert!(!psd_check(&lowered, 1e-10));
    }

    #[test]
    fn minkowski((a, b) in (2usize..=4).prop_flat_map(|n| (psd(n), psd(n)))) {
        prop_assert!(minkowski_gap(&a, &b).unwrap() >= -1e-10);
    }

    #[test]
    fn root_det_is_homogeneous(g in (2usize..=4).prop_flat_map(psd), t in 0.1..10.0f64) {
        let a = psd_root_det(&g.scale(t));
        let b = t * psd_root_det(&g);
        prop_assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()));
    }

    #[test]
    fn monge_ampere_mass_is_monotone(profile in convex_profile(), n in 2usize..=4) {
        let mut prev = 0.0;
        for k in 1..=250 {
            let m = ma_mass_radial(&profile, 0.01 * k as f64, n).unwrap();
            prop_assert!(m >= prev, "mass dropped at r = {}", 0.01 * k as f64);
            prev = m;
        }
    }

    #[test]
    fn exponent_ranges(p in 1.0..20.0f64, n in 2usize..=4) {
        let e = exponents(p, n).unwrap();
        prop_assert!((0.0..1.0).contains(&e.p_star));
        prop_assert!(e.gain_exponent >= 1.0);
        prop_assert!((e.gain_exponent - 1.0 / (1.0 - e.p_star)).abs() <= 1e-12 * e.gain_exponent);
    }

    #[test]
    fn eps_list_ranges(a in 0i32..12, len in 0i32..8) {
        let b = a + len;
        let v = parse_eps_list(&format!("2^-{a}..2^-{b}")).unwrap();
        prop_assert_eq!(v.len() as i32, len + 1);
        prop_assert!(v.windows(2).all(|w| w[1] == 0.5 * w[0]));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn field_distance_is_a_metric(a in diagonal2(), b in diagonal2(), c in diagonal2(), p in 1.0..3.0f64) {
        let scheme = IntegrationScheme::default().with_grid(16);
        let domain = Domain::Cube { lo: vec![-1.0, -1.0], hi: vec![1.0, 1.0] };
        let d = |x: &DiagonalField, y: &DiagonalField| field_distance(x, y, p, &domain, &scheme).unwrap().value();
        let (ab, bc, ac) = (d(&a, &b), d(&b, &c), d(&a, &c));
        prop_assert!(ac <= ab + bc + 1e-12 * (1.0 + ab + bc));
        prop_assert!((ab - d(&b, &a)).abs() <= 1e-12 * (1.0 + ab));
        prop_assert!(d(&a, &a) == 0.0);
    }

    #[test]
    fn constant_fields_have_matrix_distance(x in psd(2), y in psd(2)) {
        let scheme = IntegrationScheme::default().with_grid(8);
        let domain = Domain::Cube { lo: vec![0.0, 0.0], hi: vec![1.0, 1.0] };
        let dist = field_distance(&ConstantField(x), &ConstantField(y), 2.0, &domain, &scheme).unwrap();
        prop_assert!((dist.matrix_norm - x.sub(&y).frobenius()).abs() <= 1e-12 * (1.0 + dist.matrix_norm));
        prop_assert_eq!(dist.divergence_norm, 0.0);
    }

    #[test]
    fn hardy_norm_dominance(c0 in 0.0..3.0f64, c1 in 0.0..3.0f64, t in 0.0..1.0f64) {
        // 0 ≤ t·f ≤ f and s ↦ s log(1+s) increasing.
        let scheme = IntegrationScheme::default().with_grid(16);
        let domain = Domain::Cube { lo: vec![-1.0, -1.0], hi: vec![1.0, 1.0] };
        let f = move |x: &[f64]| Ok(c0 + c1 * (x[0] * x[0] + x[1] * x[1]));
        let big = hardy_norm(f, &domain, None, &scheme).unwrap();
        let small = hardy_norm(move |x: &[f64]| Ok(t * f(x)?), &domain, None, &scheme).unwrap();
        prop_assert!(small <= big * (1.0 + 1e-14));
        prop_assert!(small >= 0.0);
    }
}
