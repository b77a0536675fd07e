//! RBF kernel `k(x, y) = exp(-‖x - y‖² / h)` and the matrix-valued
//! orthogonal-space kernel `k⊥(x, y) = k(x, y) D(x) D(y)`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::ensemble::ParticleEnsemble;
use crate::error::{Error, Result};
use crate::geometry::{correction_field, projection_matrix, Constraint};
use crate::par::{self, Execution};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bandwidth {
    Fixed(f64),
    /// `median(pairwise distance)² / log(n + 1)`, recomputed every iteration.
    Median,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub bandwidth: Bandwidth,
}

impl Default for KernelSpec {
    fn default() -> Self {
        Self {
            bandwidth: Bandwidth::Median,
        }
    }
}

impl KernelSpec {
    pub fn validate(&self) -> Result<()> {
        match self.bandwidth {
            Bandwidth::Fixed(h) if !(h > 0.0 && h.is_finite()) => {
                Err(Error::NonPositiveBandwidth(h))
            }
            _ => Ok(()),
        }
    }

    pub fn resolve(&self, ensemble: &ParticleEnsemble, exec: Execution) -> Result<f64> {
        match self.bandwidth {
            Bandwidth::Fixed(h) => {
                self.validate()?;
                Ok(h)
            }
            Bandwidth::Median => median_bandwidth_with(ensemble, exec),
        }
    }
}

fn check_bandwidth(h: f64) -> Result<()> {
    if h > 0.0 && h.is_finite() {
        Ok(())
    } else {
        Err(Error::NonPositiveBandwidth(h))
    }
}

pub fn rbf(x: &DVector<f64>, y: &DVector<f64>, h: f64) -> Result<f64> {
    check_bandwidth(h)?;
    Ok((-(x - y).norm_squared() / h).exp())
}

/// `∇_y k(x, y) = 2 k(x, y) (x - y) / h`
pub fn rbf_grad_y(x: &DVector<f64>, y: &DVector<f64>, h: f64) -> Result<DVector<f64>> {
    let diff = x - y;
    check_bandwidth(h)?;
    let k = (-diff.norm_squared() / h).exp();
    Ok(diff * (2.0 * k / h))
}

pub fn median_bandwidth(particles: &ParticleEnsemble) -> Result<f64> {
    median_bandwidth_with(particles, Execution::default())
}

pub fn median_bandwidth_with(particles: &ParticleEnsemble, exec: Execution) -> Result<f64> {
    let n = particles.len();
    if n < 2 {
        return Err(Error::DegenerateEnsemble(
            "median bandwidth needs at least two particles".into(),
        ));
    }
    let pts = particles.points();
    let rows = par::map_indexed(exec, n, |i| {
        ((i + 1)..n)
            .map(|j| (&pts[i] - &pts[j]).norm())
            .collect::<Vec<_>>()
    });
    let mut dists: Vec<f64> = rows.into_iter().flatten().collect();
    dists.sort_by(f64::total_cmp);
    let m = dists.len();
    let med = if m % 2 == 1 {
        dists[m / 2]
    } else {
        0.5 * (dists[m / 2 - 1] + dists[m / 2])
    };
    if med <= 0.0 {
        // median zero with some positive distances still gives h = 0; fall back
        // to the mean of the positive distances
        let positive: Vec<f64> = dists.iter().copied().filter(|&d| d > 0.0).collect();
        if positive.is_empty() {
            return Err(Error::DegenerateEnsemble("all particles coincide".into()));
        }
        let mean = positive.iter().sum::<f64>() / positive.len() as f64;
        return Ok(mean * mean / ((n + 1) as f64).ln());
    }
    Ok(med * med / ((n + 1) as f64).ln())
}

pub fn k_perp<C: Constraint + ?Sized>(
    x: &DVector<f64>,
    y: &DVector<f64>,
    c: &C,
    h: f64,
) -> Result<DMatrix<f64>> {
    let k = rbf(x, y, h)?;
    let dx = projection_matrix(&c.gradient(x), c.grad_floor())?;
    let dy = projection_matrix(&c.gradient(y), c.grad_floor())?;
    Ok(dx * dy * k)
}

/// `Σ_j ∂_{y_j} k⊥_ij(x, y) = D(x) [D(y) ∇_y k + k r(y)]`.
pub fn div_y_k_perp<C: Constraint + ?Sized>(
    x: &DVector<f64>,
    y: &DVector<f64>,
    c: &C,
    h: f64,
) -> Result<DVector<f64>> {
    let k = rbf(x, y, h)?;
    let grad_k = rbf_grad_y(x, y, h)?;
    let dx = projection_matrix(&c.gradient(x), c.grad_floor())?;
    let dy = projection_matrix(&c.gradient(y), c.grad_floor())?;
    let r = correction_field(y, c)?;
    Ok(dx * (dy * grad_k + r * k))
}

/// Hessian-free surrogate `D(x) D(y) ∇_y k(x, y)`.
pub fn surrogate_grad_k_perp<C: Constraint + ?Sized>(
    x: &DVector<f64>,
    y: &DVector<f64>,
    c: &C,
    h: f64,
) -> Result<DVector<f64>> {
    let grad_k = rbf_grad_y(x, y, h)?;
    let dx = projection_matrix(&c.gradient(x), c.grad_floor())?;
    let dy = projection_matrix(&c.gradient(y), c.grad_floor())?;
    Ok(dx * (dy * grad_k))
}
