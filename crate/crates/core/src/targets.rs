//! Target densities, known up to an additive constant in log space.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::ensemble::ParticleEnsemble;
use crate::error::{Error, Result};
use crate::geometry::Constraint;

pub trait Target: Send + Sync {
    fn dim(&self) -> usize;

    fn log_density(&self, x: &DVector<f64>) -> f64;

    /// `∇ log π(x)`
    fn score(&self, x: &DVector<f64>) -> DVector<f64>;
}

impl<T: Target + ?Sized> Target for &T {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn log_density(&self, x: &DVector<f64>) -> f64 {
        (**self).log_density(x)
    }
    fn score(&self, x: &DVector<f64>) -> DVector<f64> {
        (**self).score(x)
    }
}

type ScalarFn = Arc<dyn Fn(&DVector<f64>) -> f64 + Send + Sync>;
type VectorFn = Arc<dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync>;

/// A target assembled from user callables.
#[derive(Clone)]
pub struct TargetDensity {
    dim: usize,
    log_density: ScalarFn,
    score: VectorFn,
}

impl TargetDensity {
    pub fn new<L, S>(dim: usize, log_density: L, score: S) -> Self
    where
        L: Fn(&DVector<f64>) -> f64 + Send + Sync + 'static,
        S: Fn(&DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
    {
        Self {
            dim,
            log_density: Arc::new(log_density),
            score: Arc::new(score),
        }
    }
}

impl std::fmt::Debug for TargetDensity {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TargetDensity")
            .field("dim", &self.dim)
            .finish_non_exhaustive()
    }
}

impl Target for TargetDensity {
    fn dim(&self) -> usize {
        self.dim
    }
    fn log_density(&self, x: &DVector<f64>) -> f64 {
        (self.log_density)(x)
    }
    fn score(&self, x: &DVector<f64>) -> DVector<f64> {
        (self.score)(x)
    }
}

/// Pushforward of `N(0, I)` under `x = φ⁻¹(y)` with `φ(x) = (x0 + x1³, x1)`.
///
/// The map has unit Jacobian determinant, so
/// `log π(x) = -((x0 + x1³)² + x1²)/2 - log 2π`.
#[derive(Clone, Copy, Debug, Default)]
pub struct SyntheticTarget;

impl Target for SyntheticTarget {
    fn dim(&self) -> usize {
        2
    }

    fn log_density(&self, x: &DVector<f64>) -> f64 {
        let u = x[0] + x[1] * x[1] * x[1];
        -0.5 * (u * u + x[1] * x[1]) - (2.0 * PI).ln()
    }

    fn score(&self, x: &DVector<f64>) -> DVector<f64> {
        let u = x[0] + x[1] * x[1] * x[1];
        DVector::from_vec(vec![-u, -3.0 * x[1] * x[1] * u - x[1]])
    }
}

pub fn synthetic_target() -> SyntheticTarget {
    SyntheticTarget
}

/// Exact draws from the synthetic target conditioned on `x0 + x1³ = 0`:
/// `x = (-y³, y)` with `y ~ N(0, 1)`.
pub fn synthetic_ground_truth(n: usize, seed: u64) -> Result<ParticleEnsemble> {
    if n == 0 {
        return Err(Error::InvalidConfig(
            "ground-truth sample count must be >= 1".into(),
        ));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let points = (0..n)
        .map(|_| {
            let y: f64 = StandardNormal.sample(&mut rng);
            DVector::from_vec(vec![-(y * y * y), y])
        })
        .collect();
    ParticleEnsemble::new(points)
}

/// Exact unconstrained draws from the synthetic target.
pub fn synthetic_unconstrained(n: usize, seed: u64) -> Result<ParticleEnsemble> {
    if n == 0 {
        return Err(Error::InvalidConfig("sample count must be >= 1".into()));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let points = (0..n)
        .map(|_| {
            let y0: f64 = StandardNormal.sample(&mut rng);
            let y1: f64 = StandardNormal.sample(&mut rng);
            DVector::from_vec(vec![y0 - y1 * y1 * y1, y1])
        })
        .collect();
    ParticleEnsemble::new(points)
}

/// `N(mean, I)`.
#[derive(Clone, Debug)]
pub struct IsotropicGaussian {
    pub mean: DVector<f64>,
}

impl Target for IsotropicGaussian {
    fn dim(&self) -> usize {
        self.mean.len()
    }
    fn log_density(&self, x: &DVector<f64>) -> f64 {
        -0.5 * (x - &self.mean).norm_squared()
    }
    fn score(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.mean - x
    }
}

/// `π_{η,z}(x) ∝ π(x) exp(-(g(x) - z)² / (2η))`, wrapping a base target.
#[derive(Clone, Debug)]
pub struct TemperedTarget<T, C> {
    pub base: T,
    pub constraint: C,
    eta: f64,
    pub z: f64,
}

impl<T: Target, C: Constraint> TemperedTarget<T, C> {
    pub fn new(base: T, constraint: C, eta: f64, z: f64) -> Result<Self> {
        if eta.is_nan() || eta <= 0.0 {
            return Err(Error::NonPositiveEta(eta));
        }
        if base.dim() != constraint.dim() {
            return Err(Error::DimensionMismatch {
                expected: base.dim(),
                found: constraint.dim(),
            });
        }
        Ok(Self {
            base,
            constraint,
            eta,
            z,
        })
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }
}

impl<T: Target, C: Constraint> Target for TemperedTarget<T, C> {
    fn dim(&self) -> usize {
        self.base.dim()
    }

    fn log_density(&self, x: &DVector<f64>) -> f64 {
        let gap = self.constraint.value(x) - self.z;
        self.base.log_density(x) - gap * gap / (2.0 * self.eta)
    }

    fn score(&self, x: &DVector<f64>) -> DVector<f64> {
        let gap = self.constraint.value(x) - self.z;
        self.base.score(x) - self.constraint.gradient(x) * (gap / self.eta)
    }
}

pub fn tempered_target<T: Target, C: Constraint>(
    base: T,
    c: C,
    eta: f64,
    z: f64,
) -> Result<TemperedTarget<T, C>> {
    TemperedTarget::new(base, c, eta, z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::SyntheticConstraint;
    use crate::oracles::{fd_gradient, FdConfig};
    use rand::Rng;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    #[test]
    fn synthetic_examples() {
        let t = synthetic_target();
        let o = v(&[0.0, 0.0]);
        assert!((t.log_density(&o) + (2.0 * PI).ln()).abs() < 1e-15);
        assert_eq!(t.score(&o), v(&[0.0, 0.0]));
        let p = v(&[-1.0, 1.0]);
        assert_eq!(SyntheticConstraint.value(&p), 0.0);
        assert_eq!(t.score(&p), v(&[0.0, -1.0]));
        assert_eq!(t.score(&v(&[1.0, 0.0])), v(&[-1.0, 0.0]));
    }

    fn check_score_fd<T: Target>(t: &T, seed: u64) {
        let cfg = FdConfig::default();
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        for _ in 0..100 {
            let x = DVector::from_fn(t.dim(), |_, _| rng.random_range(-2.0..2.0));
            let fd = fd_gradient(|y| t.log_density(y), &x, &cfg).unwrap();
            let s = t.score(&x);
            assert!((&s - &fd).norm() <= 1e-4 * s.norm().max(1e-3), "x = {x}");
        }
    }

    #[test]
    fn scores_match_finite_differences() {
        check_score_fd(&SyntheticTarget, 1);
        check_score_fd(
            &IsotropicGaussian {
                mean: v(&[0.5, -1.0, 2.0]),
            },
            2,
        );
        check_score_fd(
            &tempered_target(SyntheticTarget, SyntheticConstraint, 0.1, 0.3).unwrap(),
            3,
        );
    }

    #[test]
    fn ground_truth_lies_on_manifold_and_is_reproducible() {
        let a = synthetic_ground_truth(1000, 42).unwrap();
        for x in a.iter() {
            assert!(SyntheticConstraint.value(x).abs() <= 1e-12);
        }
        let b = synthetic_ground_truth(1000, 42).unwrap();
        assert_eq!(a, b);
        assert!(synthetic_ground_truth(0, 1).is_err());
    }

    #[test]
    fn ground_truth_moments() {
        let n = 100_000;
        let gt = synthetic_ground_truth(n, 2024).unwrap();
        let nf = n as f64;
        let mean2 = gt.iter().map(|x| x[1]).sum::<f64>() / nf;
        let var2 = gt.iter().map(|x| (x[1] - mean2).powi(2)).sum::<f64>() / (nf - 1.0);
        assert!(mean2.abs() < 3.0 / nf.sqrt());
        assert!((var2 - 1.0).abs() < 0.02);
        // x0 = -y³ has mean 0 and variance E[y⁶] = 15
        let mean1 = gt.iter().map(|x| x[0]).sum::<f64>() / nf;
        assert!(mean1.abs() < 3.0 * (15.0 / nf).sqrt());
        let var1 = gt.iter().map(|x| (x[0] - mean1).powi(2)).sum::<f64>() / (nf - 1.0);
        // Var(y⁶) = E[y¹²] - 225 = 10395 - 225
        let se_var1 = ((10395.0 - 225.0) / nf).sqrt();
        assert!((var1 - 15.0).abs() < 4.0 * se_var1);
    }

    #[test]
    fn tempered_examples() {
        let t = tempered_target(SyntheticTarget, SyntheticConstraint, 0.1, 0.0).unwrap();
        let on = v(&[-8.0, 2.0]);
        assert_eq!(t.log_density(&on), SyntheticTarget.log_density(&on));
        let s = t.score(&v(&[1.0, 0.0]));
        assert!((s - v(&[-11.0, 0.0])).norm() < 1e-12);

        let loose = tempered_target(SyntheticTarget, SyntheticConstraint, 1e9, 0.0).unwrap();
        let x = v(&[0.7, -1.3]);
        assert!((loose.score(&x) - SyntheticTarget.score(&x)).norm() < 1e-6);

        assert!(matches!(
            tempered_target(SyntheticTarget, SyntheticConstraint, 0.0, 0.0),
            Err(Error::NonPositiveEta(_))
        ));
    }

    #[test]
    fn tempered_log_density_by_construction() {
        let t = tempered_target(SyntheticTarget, SyntheticConstraint, 0.05, -0.5).unwrap();
        let x = v(&[0.2, 0.9]);
        let g = SyntheticConstraint.value(&x);
        let expected = SyntheticTarget.log_density(&x) - (g + 0.5).powi(2) / 0.1;
        assert!((t.log_density(&x) - expected).abs() < 1e-12);
    }

    #[test]
    fn closure_target() {
        let t = TargetDensity::new(1, |x| -0.5 * x[0] * x[0], |x| -x.clone());
        assert_eq!(t.score(&v(&[2.0])), v(&[-2.0]));
        assert_eq!(t.dim(), 1);
    }
}
