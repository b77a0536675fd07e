//! Independent numerical oracles: central finite differences, classical RK4
//! and seeded Monte-Carlo means. Nothing here calls into the samplers or the
//! closed-form geometry, so these routines can check them.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum FdScheme {
    #[default]
    Central,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FdConfig {
    /// Per-coordinate step is `step_scale * (1 + |x_i|)`.
    pub step_scale: f64,
    pub scheme: FdScheme,
    pub relative_tol: f64,
}

impl Default for FdConfig {
    fn default() -> Self {
        Self {
            step_scale: 1e-5,
            scheme: FdScheme::Central,
            relative_tol: 1e-4,
        }
    }
}

impl FdConfig {
    /// Settings for second derivatives built from nested differences.
    pub fn hessian() -> Self {
        Self {
            step_scale: 1e-4,
            scheme: FdScheme::Central,
            relative_tol: 1e-3,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.step_scale > 0.0 && self.step_scale <= 1e-2) {
            return Err(Error::InvalidConfig(format!(
                "finite-difference step scale must lie in (0, 1e-2], got {}",
                self.step_scale
            )));
        }
        if self.relative_tol.is_nan() || self.relative_tol <= 0.0 {
            return Err(Error::InvalidConfig(
                "relative tolerance must be positive".into(),
            ));
        }
        Ok(())
    }

    fn step(&self, xi: f64) -> f64 {
        self.step_scale * (1.0 + xi.abs())
    }
}

fn finite_or_err(v: f64, x: &DVector<f64>) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFiniteEvaluation(format!("{:?}", x.as_slice())))
    }
}

pub fn fd_gradient<F>(f: F, x: &DVector<f64>, cfg: &FdConfig) -> Result<DVector<f64>>
where
    F: Fn(&DVector<f64>) -> f64,
{
    cfg.validate()?;
    let mut out = DVector::zeros(x.len());
    let mut probe = x.clone();
    for i in 0..x.len() {
        let h = cfg.step(x[i]);
        probe[i] = x[i] + h;
        let up = finite_or_err(f(&probe), &probe)?;
        probe[i] = x[i] - h;
        let down = finite_or_err(f(&probe), &probe)?;
        probe[i] = x[i];
        out[i] = (up - down) / (2.0 * h);
    }
    Ok(out)
}

/// Jacobian of a vector field; row `i` holds the gradient of component `i`.
pub fn fd_jacobian<F>(f: F, x: &DVector<f64>, cfg: &FdConfig) -> Result<DMatrix<f64>>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    cfg.validate()?;
    let n = x.len();
    let mut probe = x.clone();
    let mut cols = Vec::with_capacity(n);
    for j in 0..n {
        let h = cfg.step(x[j]);
        probe[j] = x[j] + h;
        let up = f(&probe);
        probe[j] = x[j] - h;
        let down = f(&probe);
        probe[j] = x[j];
        let col = (up - down) / (2.0 * h);
        if col.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteEvaluation(format!("{:?}", x.as_slice())));
        }
        cols.push(col);
    }
    Ok(DMatrix::from_columns(&cols))
}

/// Hessian as the finite-difference Jacobian of a finite-difference gradient,
/// symmetrized.
pub fn fd_hessian<F>(f: F, x: &DVector<f64>) -> Result<DMatrix<f64>>
where
    F: Fn(&DVector<f64>) -> f64,
{
    let cfg = FdConfig::hessian();
    let inner = FdConfig::default();
    let jac = fd_jacobian(
        |y| fd_gradient(&f, y, &inner).unwrap_or_else(|_| DVector::from_element(y.len(), f64::NAN)),
        x,
        &cfg,
    )?;
    Ok((&jac + jac.transpose()) * 0.5)
}

/// Row-wise divergence `out_i = Σ_j ∂_j F_ij(x)` of a matrix field.
pub fn fd_divergence_matrix<F>(field: F, x: &DVector<f64>, cfg: &FdConfig) -> Result<DVector<f64>>
where
    F: Fn(&DVector<f64>) -> DMatrix<f64>,
{
    cfg.validate()?;
    let d = x.len();
    let mut out = DVector::zeros(d);
    let mut probe = x.clone();
    for j in 0..d {
        let h = cfg.step(x[j]);
        probe[j] = x[j] + h;
        let up = field(&probe);
        probe[j] = x[j] - h;
        let down = field(&probe);
        probe[j] = x[j];
        for i in 0..d {
            let v = (up[(i, j)] - down[(i, j)]) / (2.0 * h);
            out[i] += finite_or_err(v, x)?;
        }
    }
    Ok(out)
}

/// Classical fourth-order Runge-Kutta for a scalar ODE `s' = rhs(t, s)`.
pub fn rk4_integrate<F>(rhs: F, s0: f64, t_end: f64, n_steps: usize) -> Result<f64>
where
    F: Fn(f64, f64) -> f64,
{
    if n_steps == 0 {
        return Err(Error::InvalidConfig("rk4 needs at least one step".into()));
    }
    let h = t_end / n_steps as f64;
    let mut s = s0;
    for k in 0..n_steps {
        let t = k as f64 * h;
        let k1 = rhs(t, s);
        let k2 = rhs(t + 0.5 * h, s + 0.5 * h * k1);
        let k3 = rhs(t + 0.5 * h, s + 0.5 * h * k2);
        let k4 = rhs(t + h, s + h * k3);
        s += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        if !s.is_finite() {
            return Err(Error::NonFiniteEvaluation(format!(
                "rk4 state at t = {}",
                t + h
            )));
        }
    }
    Ok(s)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct McEstimate {
    pub mean: f64,
    pub stderr: f64,
}

/// Mean and standard error of `n` draws taken from one ChaCha20 stream.
pub fn mc_mean<F>(mut draw: F, n: usize, seed: u64) -> Result<McEstimate>
where
    F: FnMut(&mut ChaCha20Rng) -> f64,
{
    if n < 2 {
        return Err(Error::InvalidConfig("Monte-Carlo mean needs n >= 2".into()));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    // Welford
    let mut mean = 0.0;
    let mut m2 = 0.0;
    for k in 0..n {
        let v = draw(&mut rng);
        if !v.is_finite() {
            return Err(Error::NonFiniteEvaluation(format!("Monte-Carlo draw {k}")));
        }
        let delta = v - mean;
        mean += delta / (k + 1) as f64;
        m2 += delta * (v - mean);
    }
    let var = m2 / (n - 1) as f64;
    Ok(McEstimate {
        mean,
        stderr: (var / n as f64).sqrt(),
    })
}

/// `‖approx - exact‖ / max(‖exact‖, floor)`.
pub fn relative_error(approx: &DVector<f64>, exact: &DVector<f64>, floor: f64) -> f64 {
    (approx - exact).norm() / exact.norm().max(floor)
}
