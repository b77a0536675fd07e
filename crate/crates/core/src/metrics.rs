//! Evaluation statistics for sample sets.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::ensemble::ParticleEnsemble;
use crate::error::{Error, Result};
use crate::geometry::{Constraint, LocalFrame, PsiParams};
use crate::par::{self, Execution};
use crate::targets::Target;

/// A named series of `(iteration, value)` pairs with strictly increasing
/// iterations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricSeries {
    pub name: String,
    pub values: Vec<(usize, f64)>,
}

impl MetricSeries {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            values: Vec::new(),
        }
    }

    pub fn push(&mut self, iteration: usize, value: f64) -> Result<()> {
        if let Some(&(last, _)) = self.values.last() {
            if iteration <= last {
                return Err(Error::InvalidConfig(format!(
                    "metric '{}' iteration {iteration} does not follow {last}",
                    self.name
                )));
            }
        }
        self.values.push((iteration, value));
        Ok(())
    }

    pub fn last(&self) -> Option<f64> {
        self.values.last().map(|&(_, v)| v)
    }
}

pub fn energy_distance(a: &ParticleEnsemble, b: &ParticleEnsemble) -> Result<f64> {
    energy_distance_with(a, b, Execution::default())
}

fn mean_pairwise(a: &[DVector<f64>], b: &[DVector<f64>], exec: Execution) -> f64 {
    let rows = par::map_indexed(exec, a.len(), |i| {
        b.iter().map(|y| (&a[i] - y).norm()).sum::<f64>()
    });
    rows.iter().sum::<f64>() / (a.len() as f64 * b.len() as f64)
}

/// V-statistic estimate of `2E‖Z - W‖ - E‖Z - Z'‖ - E‖W - W'‖`.
///
/// Self-pairs are included, which biases the within-set terms by `O(1/n)` and
/// keeps the estimate non-negative.
pub fn energy_distance_with(
    a: &ParticleEnsemble,
    b: &ParticleEnsemble,
    exec: Execution,
) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            found: b.dim(),
        });
    }
    let (pa, pb) = (a.points(), b.points());
    let cross = mean_pairwise(pa, pb, exec);
    let within_a = mean_pairwise(pa, pa, exec);
    let within_b = mean_pairwise(pb, pb, exec);
    Ok(2.0 * cross - within_a - within_b)
}

/// Mean absolute constraint value `(1/n) Σ |g(x_i)|`.
pub fn mae<C: Constraint + ?Sized>(samples: &ParticleEnsemble, c: &C) -> f64 {
    samples.iter().map(|x| c.value(x).abs()).sum::<f64>() / samples.len() as f64
}

pub fn max_abs_constraint<C: Constraint + ?Sized>(samples: &ParticleEnsemble, c: &C) -> f64 {
    samples.iter().map(|x| c.value(x).abs()).fold(0.0, f64::max)
}

/// Solution of `Ṡ = -ψ(S)` with `S(0) = M0 >= 0`.
pub fn support_bound(m0: f64, p: PsiParams, t: f64) -> f64 {
    if m0 <= 0.0 {
        return 0.0;
    }
    if t == 0.0 {
        return m0;
    }
    if p.beta == 0.0 {
        m0 * (-p.alpha * t).exp()
    } else {
        (m0.powf(-p.beta) + p.alpha * p.beta * t).powf(-1.0 / p.beta)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SteinEstimate {
    pub mean: f64,
    pub stderr: f64,
}

/// Empirical Stein residual `mean_i [s(x_i)ᵀ D(x_i) c + r(x_i)ᵀ c]` for the
/// tangential test field `φ(x) = D(x) c`, with its Monte-Carlo standard error.
pub fn stein_residual_with_error<T, C>(
    samples: &ParticleEnsemble,
    target: &T,
    c: &C,
    direction: &DVector<f64>,
) -> Result<SteinEstimate>
where
    T: Target + ?Sized,
    C: Constraint + ?Sized,
{
    samples.check_dim(direction.len())?;
    let norm = direction.norm();
    if (norm - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidConfig(format!(
            "direction must be a unit vector, |c| = {norm}"
        )));
    }
    let terms: Vec<f64> = samples
        .iter()
        .map(|x| {
            let frame = LocalFrame::at(x, c, true)?;
            let r = frame
                .correction
                .as_ref()
                .expect("frame built with correction");
            Ok(target.score(x).dot(&frame.project(direction)) + r.dot(direction))
        })
        .collect::<Result<_>>()?;
    let n = terms.len() as f64;
    let mean = terms.iter().sum::<f64>() / n;
    let stderr = if terms.len() > 1 {
        (terms.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt()
    } else {
        f64::NAN
    };
    Ok(SteinEstimate { mean, stderr })
}

pub fn stein_residual<T, C>(
    samples: &ParticleEnsemble,
    target: &T,
    c: &C,
    direction: &DVector<f64>,
) -> Result<f64>
where
    T: Target + ?Sized,
    C: Constraint + ?Sized,
{
    Ok(stein_residual_with_error(samples, target, c, direction)?.mean)
}

/// `mean_i ‖D(x_i)(s_q(x_i) - s_π(x_i))‖²` for an analytically known `q`.
pub fn orthogonal_fisher<Q, T, C>(
    samples: &ParticleEnsemble,
    q: &Q,
    target: &T,
    c: &C,
) -> Result<f64>
where
    Q: Target + ?Sized,
    T: Target + ?Sized,
    C: Constraint + ?Sized,
{
    let mut total = 0.0;
    for x in samples.iter() {
        let frame = LocalFrame::at(x, c, false)?;
        total += frame
            .project(&(q.score(x) - target.score(x)))
            .norm_squared();
    }
    Ok(total / samples.len() as f64)
}
