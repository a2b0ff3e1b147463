//! Property-based invariants over randomly generated inputs.

use proptest::prelude::*;

use subriemann::frames::{enumerate_commutators, lie_bracket, rescale, IndexTuple, lambda_det, volume_polynomial};
use subriemann::frames::PolyVectorField;
use subriemann::functional::{compute_theta, lpq_norm};
use subriemann::grid::{BoxRegion, Lattice, SpaceTimeGridFunction};
use subriemann::poly::Polynomial;

fn arb_poly(dim: usize) -> impl Strategy<Value = Polynomial> {
    proptest::collection::vec(
        (
            -3.0f64..3.0,
            proptest::collection::vec(0u16..3, dim),
        ),
        0..4,
    )
    .prop_map(move |terms| Polynomial::from_terms(dim, terms))
}

fn arb_field(dim: usize) -> impl Strategy<Value = PolyVectorField> {
    proptest::collection::vec(arb_poly(dim), dim).prop_map(PolyVectorField::new)
}

fn arb_field_pair() -> impl Strategy<Value = (PolyVectorField, PolyVectorField)> {
    (2usize..5).prop_flat_map(|dim| (arb_field(dim), arb_field(dim)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// [V, W] + [W, V] cancels term by term even for arbitrary float
    /// coefficients: both orders run the same products.
    #[test]
    fn bracket_antisymmetry_exact((v, w) in arb_field_pair()) {
        let a = lie_bracket(&v, &w).unwrap();
        let b = lie_bracket(&w, &v).unwrap();
        for k in 0..v.dim() {
            let s = a.components()[k].add(&b.components()[k]);
            prop_assert!(s.is_zero(), "component {} kept {:?}", k, s);
        }
    }

    #[test]
    fn lpq_norm_homogeneous_and_subadditive(
        vals in proptest::collection::vec(-5.0f64..5.0, 45),
        c in -4.0f64..4.0,
        p in 1.0f64..4.0,
        q in 1.0f64..4.0,
    ) {
        let lat = Lattice::new(BoxRegion::new(vec![0.0], vec![1.0]).unwrap(), vec![9]).unwrap();
        let slices: Vec<Vec<f64>> = vals.chunks(9).map(|c| c.to_vec()).collect();
        let u = SpaceTimeGridFunction::new(lat.clone(), slices.clone(), 0.1, 0.0).unwrap();
        let scaled = SpaceTimeGridFunction::new(
            lat.clone(),
            slices.iter().map(|s| s.iter().map(|v| c * v).collect()).collect(),
            0.1,
            0.0,
        ).unwrap();
        let n_u = lpq_norm(&u, p, q);
        let n_scaled = lpq_norm(&scaled, p, q);
        prop_assert!((n_scaled - c.abs() * n_u).abs() <= 1e-10 * (1.0 + n_u));

        let doubled = SpaceTimeGridFunction::new(
            lat,
            slices.iter().map(|s| s.iter().map(|v| v + v).collect()).collect(),
            0.1,
            0.0,
        ).unwrap();
        // triangle inequality with itself (u + u)
        prop_assert!(lpq_norm(&doubled, p, q) <= 2.0 * n_u + 1e-12);
    }

    /// A positive theta satisfies both exponent lines on re-substitution.
    #[test]
    fn theta_resubstitution(
        p in 2.5f64..20.0,
        q in 2.0f64..20.0,
        alpha in 1.5f64..20.0,
        beta in 1.5f64..20.0,
        n_hom in 2.5f64..6.0,
    ) {
        if let Ok(theta) = compute_theta(p, q, alpha, beta, n_hom) {
            prop_assert!(theta > 0.0 && theta <= 1.0);
            prop_assert!(p >= 2.0 / (1.0 - theta) - 1e-12 || theta == 1.0);
            prop_assert!(n_hom / (2.0 * p) + 1.0 / q <= (1.0 - theta) / 2.0 + 1e-12);
            prop_assert!(alpha >= 1.0 / (1.0 - theta) - 1e-12 || theta == 1.0);
            prop_assert!(n_hom / (2.0 * alpha) + 1.0 / beta <= 1.0 - theta + 1e-12);
        }
    }

    /// The volume functional grows in the radius and never shrinks when the
    /// rescaling parameter grows.
    #[test]
    fn volume_polynomial_monotone(
        eps1 in 0.0f64..1.0,
        eps2 in 0.0f64..1.0,
        r in 0.01f64..0.5,
        x in proptest::collection::vec(-0.5f64..0.5, 3),
    ) {
        let table = enumerate_commutators(&subriemann::frames::models::heisenberg(), 2).unwrap();
        let (lo, hi) = if eps1 <= eps2 { (eps1, eps2) } else { (eps2, eps1) };
        let fam_lo = rescale(&table, lo).unwrap();
        let fam_hi = rescale(&table, hi).unwrap();
        let v_r = volume_polynomial(&fam_lo, &x, r).unwrap();
        let v_2r = volume_polynomial(&fam_lo, &x, 2.0 * r).unwrap();
        prop_assert!(v_2r > v_r);
        let v_hi = volume_polynomial(&fam_hi, &x, r).unwrap();
        prop_assert!(v_hi + 1e-15 >= v_r);
    }

    /// lambda alternates sign under transpositions; the absolute value is
    /// permutation invariant.
    #[test]
    fn lambda_transposition(x in proptest::collection::vec(-1.0f64..1.0, 3)) {
        let table = enumerate_commutators(&subriemann::frames::models::heisenberg(), 2).unwrap();
        let fam = rescale(&table, 0.35).unwrap();
        let a = IndexTuple::new(&fam, &[1, 2, 4]).unwrap();
        let b = IndexTuple::new(&fam, &[2, 1, 4]).unwrap();
        let la = lambda_det(&fam, &x, &a);
        let lb = lambda_det(&fam, &x, &b);
        prop_assert_eq!(la, -lb);
    }
}
