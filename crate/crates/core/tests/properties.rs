use nalgebra::DVector;
use proptest::collection::vec;
use proptest::prelude::*;

use ograd::geometry::{
    correction_field, projection_matrix, psi, AffineConstraint, Constraint, PsiParams,
    SphereConstraint, SyntheticConstraint,
};
use ograd::io::{read_samples_from, write_samples_to};
use ograd::kernels::{div_y_k_perp, k_perp, KernelSpec};
use ograd::metrics::energy_distance;
use ograd::oracles::{fd_divergence_matrix, relative_error, FdConfig};
use ograd::samplers::{o_svgd_step, o_svgd_velocities};
use ograd::targets::{tempered_target, SyntheticTarget, Target};
use ograd::{Execution, ParticleEnsemble};

fn point() -> impl Strategy<Value = DVector<f64>> {
    (-3.0..3.0f64, -3.0..3.0f64).prop_map(|(a, b)| DVector::from_vec(vec![a, b]))
}

fn ensemble(max: usize) -> impl Strategy<Value = ParticleEnsemble> {
    vec(point(), 1..max).prop_map(|pts| ParticleEnsemble::new(pts).unwrap())
}

fn psi_params() -> impl Strategy<Value = PsiParams> {
    (0.1..200.0f64, 0.0..1.0f64).prop_map(|(a, b)| PsiParams::new(a, b).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn energy_distance_is_symmetric_and_translation_invariant(
        a in ensemble(30),
        b in ensemble(30),
        shift in point(),
    ) {
        let ab = energy_distance(&a, &b).unwrap();
        let ba = energy_distance(&b, &a).unwrap();
        prop_assert!((ab - ba).abs() <= 1e-12 * (1.0 + ab.abs()));
        prop_assert!(ab >= -1e-12);
        prop_assert_eq!(energy_distance(&a, &a).unwrap(), 0.0);
        let moved = energy_distance(&a.translated(&shift).unwrap(), &b.translated(&shift).unwrap()).unwrap();
        prop_assert!((moved - ab).abs() <= 1e-10);
    }

    #[test]
    fn psi_is_odd_and_increasing(p in psi_params(), z in -10.0..10.0f64, dz in 1e-6..5.0f64) {
        prop_assert_eq!(psi(-z, p), -psi(z, p));
        prop_assert!(psi(z + dz, p) > psi(z, p));
        prop_assert_eq!(psi(0.0, p), 0.0);
    }

    #[test]
    fn projector_is_a_symmetric_idempotent_annihilator(x in point()) {
        for c in [
            &SyntheticConstraint as &dyn Constraint,
            &AffineConstraint::new(DVector::from_vec(vec![0.3, -2.0]), 0.5),
        ] {
            let grad = c.gradient(&x);
            let d = projection_matrix(&grad, c.grad_floor()).unwrap();
            prop_assert!((&d * &grad).norm() <= 1e-10 * (1.0 + grad.norm()));
            prop_assert!((&d * &d - &d).norm() <= 1e-12);
            prop_assert!((&d - d.transpose()).norm() <= 1e-15);
            prop_assert!((d.trace() - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn correction_is_the_divergence_of_the_projector_on_spheres(
        x in vec(-2.0..2.0f64, 3),
        radius in 0.5..3.0f64,
    ) {
        let x = DVector::from_vec(x);
        prop_assume!(x.norm() > 0.2);
        let c = SphereConstraint { dim: 3, radius };
        let r = correction_field(&x, &c).unwrap();
        let oracle = fd_divergence_matrix(
            |p| projection_matrix(&c.gradient(p), c.grad_floor()).unwrap(),
            &x,
            &FdConfig::default(),
        )
        .unwrap();
        prop_assert!(relative_error(&r, &oracle, 1e-8) <= 1e-4);
    }

    #[test]
    fn kernel_divergence_matches_finite_differences(x in point(), y in point(), h in 0.5..4.0f64) {
        let c = SyntheticConstraint;
        let exact = div_y_k_perp(&x, &y, &c, h).unwrap();
        let oracle = fd_divergence_matrix(|q| k_perp(&x, q, &c, h).unwrap(), &y, &FdConfig::default()).unwrap();
        prop_assert!(relative_error(&exact, &oracle, 1e-10) <= 1e-4);
    }

    #[test]
    fn o_svgd_velocity_decays_g_exactly(ens in ensemble(12), p in psi_params(), sof in any::<bool>()) {
        let c = SyntheticConstraint;
        let vel = o_svgd_velocities(&ens, &SyntheticTarget, &c, p, &KernelSpec::default(), sof, Execution::Parallel);
        // Coincident particles legitimately have no median bandwidth.
        prop_assume!(vel.is_ok());
        for (x, v) in ens.iter().zip(vel.unwrap()) {
            let want = -psi(c.value(x), p);
            prop_assert!((c.gradient(x).dot(&v) - want).abs() <= 1e-9 * (1.0 + want.abs()));
        }
    }

    #[test]
    fn o_svgd_step_commutes_with_permutation(ens in ensemble(10), seed in any::<u64>()) {
        let c = SyntheticConstraint;
        let n = ens.len();
        let mut order: Vec<usize> = (0..n).collect();
        // Deterministic shuffle driven by the generated seed.
        let mut s = seed;
        for i in (1..n).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            order.swap(i, (s >> 33) as usize % (i + 1));
        }
        let permuted = ParticleEnsemble::new(order.iter().map(|&i| ens[i].clone()).collect()).unwrap();
        let step = |e: &ParticleEnsemble| {
            o_svgd_step(e, &SyntheticTarget, &c, 1e-3, PsiParams::default(), &KernelSpec::default(), false, Execution::Sequential)
        };
        let (Ok(a), Ok(b)) = (step(&ens), step(&permuted)) else {
            return Ok(());
        };
        for (k, &i) in order.iter().enumerate() {
            prop_assert!((&b[k] - &a[i]).norm() <= 1e-9 * (1.0 + a[i].norm()));
        }
    }

    #[test]
    fn tempered_score_differs_only_along_the_normal(x in point(), eta in 1e-4..10.0f64, z in -2.0..2.0f64) {
        let c = SyntheticConstraint;
        let q = tempered_target(SyntheticTarget, SyntheticConstraint, eta, z).unwrap();
        let diff = q.score(&x) - SyntheticTarget.score(&x);
        let grad = c.gradient(&x);
        let expected = &grad * (-(c.value(&x) - z) / eta);
        prop_assert!((&diff - &expected).norm() <= 1e-9 * (1.0 + expected.norm()));
    }

    #[test]
    fn sample_csv_roundtrip_is_lossless(ens in ensemble(20)) {
        let mut buf = Vec::new();
        write_samples_to(&mut buf, &ens).unwrap();
        prop_assert_eq!(read_samples_from(buf.as_slice()).unwrap(), ens);
    }
}
