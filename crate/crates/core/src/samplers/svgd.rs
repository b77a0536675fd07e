//! SVGD and O-SVGD particle updates. Every particle moves from the same frozen
//! copy of the ensemble; the per-particle sums run over `j` in index order.

use nalgebra::DVector;

use crate::ensemble::ParticleEnsemble;
use crate::error::{Error, Result};
use crate::geometry::{Constraint, LocalFrame, PsiParams};
use crate::kernels::KernelSpec;
use crate::par::{self, Execution};
use crate::targets::Target;

fn bandwidth_for(ensemble: &ParticleEnsemble, kernel: &KernelSpec, exec: Execution) -> Result<f64> {
    if ensemble.len() == 1 {
        // k(x, x) = 1 and ∇k(x, x) = 0 for any bandwidth
        return match kernel.bandwidth {
            crate::kernels::Bandwidth::Fixed(_) => kernel.resolve(ensemble, exec),
            crate::kernels::Bandwidth::Median => Ok(1.0),
        };
    }
    kernel.resolve(ensemble, exec)
}

/// `(1/n) Σ_j [k(x_i, x_j) s(x_j) + ∇_{x_j} k(x_i, x_j)]` for every `i`.
pub fn svgd_velocities<T: Target + ?Sized>(
    ensemble: &ParticleEnsemble,
    target: &T,
    kernel: &KernelSpec,
    exec: Execution,
) -> Result<Vec<DVector<f64>>> {
    ensemble.check_dim(target.dim())?;
    let h = bandwidth_for(ensemble, kernel, exec)?;
    let pts = ensemble.points();
    let n = pts.len();
    let scores = par::map_indexed(exec, n, |j| target.score(&pts[j]));
    Ok(par::map_indexed(exec, n, |i| {
        let xi = &pts[i];
        let mut acc = DVector::zeros(xi.len());
        for (xj, sj) in pts.iter().zip(&scores) {
            let diff = xi - xj;
            let k = (-diff.norm_squared() / h).exp();
            acc += sj * k + diff * (2.0 * k / h);
        }
        acc / n as f64
    }))
}

pub fn svgd_step<T: Target + ?Sized>(
    ensemble: &ParticleEnsemble,
    target: &T,
    eta: f64,
    kernel: &KernelSpec,
    exec: Execution,
) -> Result<ParticleEnsemble> {
    let vel = svgd_velocities(ensemble, target, kernel, exec)?;
    advance(ensemble, &vel, eta)
}

/// O-SVGD velocity `v♯(x_i) + (1/n) Σ_j [k⊥(x_i, x_j) s(x_j) + ∇_{x_j}·k⊥(x_i, x_j)]`.
///
/// The sum factors as `D(x_i) Σ_j k_ij [D(x_j) s_j + D(x_j) ∇_{x_j} k_ij / k_ij + r(x_j)]`,
/// so `D(x_i)` is applied once per particle. With `second_order_free` the
/// `r(x_j)` term is dropped.
pub fn o_svgd_velocities<T, C>(
    ensemble: &ParticleEnsemble,
    target: &T,
    c: &C,
    psi: PsiParams,
    kernel: &KernelSpec,
    second_order_free: bool,
    exec: Execution,
) -> Result<Vec<DVector<f64>>>
where
    T: Target + ?Sized,
    C: Constraint + ?Sized,
{
    ensemble.check_dim(target.dim())?;
    ensemble.check_dim(c.dim())?;
    let h = bandwidth_for(ensemble, kernel, exec)?;
    let pts = ensemble.points();
    let n = pts.len();
    let frames = par::try_map_indexed(exec, n, |j| LocalFrame::at(&pts[j], c, !second_order_free))?;
    // D(x_j) s(x_j) + r(x_j)
    let drive = par::map_indexed(exec, n, |j| {
        let mut v = frames[j].project(&target.score(&pts[j]));
        if let Some(r) = &frames[j].correction {
            v += r;
        }
        v
    });
    Ok(par::map_indexed(exec, n, |i| {
        let xi = &pts[i];
        let mut acc = DVector::zeros(xi.len());
        for j in 0..n {
            let diff = xi - &pts[j];
            let k = (-diff.norm_squared() / h).exp();
            acc += &drive[j] * k + frames[j].project(&diff) * (2.0 * k / h);
        }
        frames[i].v_sharp(psi) + frames[i].project(&acc) / n as f64
    }))
}

#[allow(clippy::too_many_arguments)]
pub fn o_svgd_step<T, C>(
    ensemble: &ParticleEnsemble,
    target: &T,
    c: &C,
    eta: f64,
    psi: PsiParams,
    kernel: &KernelSpec,
    second_order_free: bool,
    exec: Execution,
) -> Result<ParticleEnsemble>
where
    T: Target + ?Sized,
    C: Constraint + ?Sized,
{
    let vel = o_svgd_velocities(ensemble, target, c, psi, kernel, second_order_free, exec)?;
    advance(ensemble, &vel, eta)
}

fn advance(
    ensemble: &ParticleEnsemble,
    vel: &[DVector<f64>],
    eta: f64,
) -> Result<ParticleEnsemble> {
    let moved: Vec<DVector<f64>> = ensemble.iter().zip(vel).map(|(x, v)| x + v * eta).collect();
    ParticleEnsemble::new(moved).map_err(|e| match e {
        Error::NonFiniteEvaluation(msg) => Error::NonFiniteEvaluation(format!("{msg} diverged")),
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{correction_field, psi as psi_fn, AffineConstraint, SyntheticConstraint};
    use crate::kernels::{div_y_k_perp, k_perp, surrogate_grad_k_perp, Bandwidth};
    use crate::targets::{
        synthetic_ground_truth, IsotropicGaussian, SyntheticTarget, TargetDensity,
    };
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    fn cloud(n: usize, seed: u64, center: [f64; 2], scale: f64) -> ParticleEnsemble {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        ParticleEnsemble::new(
            (0..n)
                .map(|_| {
                    v(&[
                        center[0] + scale * rng.random_range(-1.0..1.0),
                        center[1] + scale * rng.random_range(-1.0..1.0),
                    ])
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn single_particle_svgd_is_gradient_ascent() {
        let e = ParticleEnsemble::from_rows(&[[0.4, -0.3]]).unwrap();
        let vel = svgd_velocities(
            &e,
            &SyntheticTarget,
            &KernelSpec::default(),
            Execution::Sequential,
        )
        .unwrap();
        assert_eq!(vel[0], SyntheticTarget.score(&e[0]));
    }

    #[test]
    fn two_particle_repulsion() {
        let flat = TargetDensity::new(2, |_| 0.0, |_| DVector::zeros(2));
        let e = ParticleEnsemble::from_rows(&[[0.0, 0.0], [1.0, 2.0]]).unwrap();
        let vel =
            svgd_velocities(&e, &flat, &KernelSpec::default(), Execution::Sequential).unwrap();
        assert!((&vel[0] + &vel[1]).norm() < 1e-15);
        let sep = &e[1] - &e[0];
        // v0 points away from x1, parallel to the separation
        assert!(vel[0].dot(&sep) < 0.0);
        assert!((vel[0][0] * sep[1] - vel[0][1] * sep[0]).abs() < 1e-15);
    }

    #[test]
    fn zero_step_leaves_ensemble_unchanged() {
        let e = cloud(10, 1, [0.0, 0.0], 1.0);
        let next = svgd_step(
            &e,
            &SyntheticTarget,
            0.0,
            &KernelSpec::default(),
            Execution::Parallel,
        )
        .unwrap();
        assert_eq!(next, e);
    }

    #[test]
    fn single_particle_o_svgd_reduction() {
        let p = PsiParams::new(3.0, 0.0).unwrap();
        let e = ParticleEnsemble::from_rows(&[[0.3, 1.1]]).unwrap();
        let c = SyntheticConstraint;
        let vel = o_svgd_velocities(
            &e,
            &SyntheticTarget,
            &c,
            p,
            &KernelSpec::default(),
            false,
            Execution::Sequential,
        )
        .unwrap();
        let x = &e[0];
        let frame = LocalFrame::at(x, &c, true).unwrap();
        let expected = crate::geometry::v_sharp(x, &c, p).unwrap()
            + &frame.projection * SyntheticTarget.score(x)
            + &frame.projection * correction_field(x, &c).unwrap();
        assert!((&vel[0] - expected).norm() < 1e-12);
    }

    #[test]
    fn o_svgd_matches_pairwise_kernel_definition() {
        let c = SyntheticConstraint;
        let e = cloud(7, 3, [0.2, 0.5], 0.8);
        let h = 1.3;
        let kernel = KernelSpec {
            bandwidth: Bandwidth::Fixed(h),
        };
        let p = PsiParams::new(10.0, 0.3).unwrap();
        for sof in [false, true] {
            let vel = o_svgd_velocities(
                &e,
                &SyntheticTarget,
                &c,
                p,
                &kernel,
                sof,
                Execution::Sequential,
            )
            .unwrap();
            for i in 0..e.len() {
                let mut acc = DVector::zeros(2);
                for j in 0..e.len() {
                    acc += k_perp(&e[i], &e[j], &c, h).unwrap() * SyntheticTarget.score(&e[j]);
                    acc += if sof {
                        surrogate_grad_k_perp(&e[i], &e[j], &c, h).unwrap()
                    } else {
                        div_y_k_perp(&e[i], &e[j], &c, h).unwrap()
                    };
                }
                let expected =
                    crate::geometry::v_sharp(&e[i], &c, p).unwrap() + acc / e.len() as f64;
                assert!((&vel[i] - &expected).norm() <= 1e-12 * (1.0 + expected.norm()));
            }
        }
    }

    #[test]
    fn o_svgd_exact_perpendicular_decay() {
        let c = SyntheticConstraint;
        let p = PsiParams::new(100.0, 0.0).unwrap();
        let e = cloud(50, 5, [1.5, 1.5], 0.3);
        let vel = o_svgd_velocities(
            &e,
            &SyntheticTarget,
            &c,
            p,
            &KernelSpec::default(),
            false,
            Execution::Parallel,
        )
        .unwrap();
        for (x, vi) in e.iter().zip(&vel) {
            let resid = c.gradient(x).dot(vi) + psi_fn(c.value(x), p);
            assert!(resid.abs() <= 1e-10, "{resid}");
        }
    }

    #[test]
    fn affine_on_manifold_stays_on_manifold() {
        let c = AffineConstraint::new(v(&[1.0, -2.0]), 0.0);
        let target = IsotropicGaussian {
            mean: v(&[1.0, 1.0]),
        };
        let e = ParticleEnsemble::new(
            (0..10)
                .map(|k| v(&[2.0 * k as f64 * 0.3, k as f64 * 0.3]))
                .collect(),
        )
        .unwrap();
        let next = o_svgd_step(
            &e,
            &target,
            &c,
            0.1,
            PsiParams::default(),
            &KernelSpec::default(),
            false,
            Execution::Sequential,
        )
        .unwrap();
        for x in next.iter() {
            assert!(c.value(x).abs() < 1e-12);
        }
    }

    #[test]
    fn simultaneity_under_permutation() {
        let c = SyntheticConstraint;
        let e = synthetic_ground_truth(20, 9).unwrap();
        let perm: Vec<usize> = (0..20).rev().collect();
        let permuted = ParticleEnsemble::new(perm.iter().map(|&i| e[i].clone()).collect()).unwrap();
        let kernel = KernelSpec::default();
        let p = PsiParams::default();
        let a = o_svgd_step(
            &e,
            &SyntheticTarget,
            &c,
            0.005,
            p,
            &kernel,
            false,
            Execution::Sequential,
        )
        .unwrap();
        let b = o_svgd_step(
            &permuted,
            &SyntheticTarget,
            &c,
            0.005,
            p,
            &kernel,
            false,
            Execution::Sequential,
        )
        .unwrap();
        for (k, &i) in perm.iter().enumerate() {
            assert!((&a[i] - &b[k]).norm() <= 1e-12 * (1.0 + a[i].norm()));
        }
    }

    #[test]
    fn parallel_and_sequential_agree_bitwise() {
        let c = SyntheticConstraint;
        let e = cloud(40, 6, [1.5, 1.5], 0.1);
        let kernel = KernelSpec::default();
        let p = PsiParams::default();
        let a = o_svgd_step(
            &e,
            &SyntheticTarget,
            &c,
            0.005,
            p,
            &kernel,
            false,
            Execution::Sequential,
        )
        .unwrap();
        let b = o_svgd_step(
            &e,
            &SyntheticTarget,
            &c,
            0.005,
            p,
            &kernel,
            false,
            Execution::Parallel,
        )
        .unwrap();
        assert_eq!(a, b);
        let a = svgd_step(&e, &SyntheticTarget, 0.001, &kernel, Execution::Sequential).unwrap();
        let b = svgd_step(&e, &SyntheticTarget, 0.001, &kernel, Execution::Parallel).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn degenerate_ensemble_is_reported() {
        let e = ParticleEnsemble::from_rows(&[[0.5, 0.5], [0.5, 0.5]]).unwrap();
        let err = svgd_step(
            &e,
            &SyntheticTarget,
            0.1,
            &KernelSpec::default(),
            Execution::Sequential,
        );
        assert!(matches!(err, Err(Error::DegenerateEnsemble(_))));
    }
}
