//! Self-check of the closed-form geometry against finite-difference oracles
//! on random points of the synthetic problem.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{correction_field, projection_matrix, Constraint, SyntheticConstraint};
use crate::kernels::{div_y_k_perp, k_perp, rbf, rbf_grad_y, surrogate_grad_k_perp};
use crate::oracles::{fd_divergence_matrix, fd_gradient, fd_hessian, relative_error, FdConfig};
use crate::targets::{SyntheticTarget, Target};

/// Deliberate defects used to confirm that the suite can fail.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Fault {
    /// Flip the sign of the correction field `r`.
    NegateCorrection,
    /// Append a point at which the constraint gradient vanishes.
    CriticalPoint,
}

#[derive(Clone, Debug)]
pub struct VerifyOptions {
    pub points: usize,
    pub seed: u64,
    /// Points are drawn uniformly from `[-box_half_width, box_half_width]^2`.
    pub box_half_width: f64,
    pub bandwidth: f64,
    pub fault: Option<Fault>,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            points: 1000,
            seed: 0,
            box_half_width: 3.0,
            bandwidth: 1.5,
            fault: None,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CheckRow {
    pub name: &'static str,
    /// Largest residual over the points that evaluated successfully.
    pub max_residual: f64,
    pub tolerance: f64,
    pub evaluated: usize,
    pub errors: usize,
    pub first_error: Option<String>,
    pub passed: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct VerifyReport {
    pub rows: Vec<CheckRow>,
}

impl VerifyReport {
    pub fn all_passed(&self) -> bool {
        self.rows.iter().all(|r| r.passed)
    }

    pub fn render(&self) -> String {
        let mut out = format!(
            "{:<34} {:>12} {:>10} {:>7} {:>7}  {}\n",
            "check", "max_resid", "tol", "points", "errors", "result"
        );
        for r in &self.rows {
            out.push_str(&format!(
                "{:<34} {:>12.3e} {:>10.1e} {:>7} {:>7}  {}\n",
                r.name,
                r.max_residual,
                r.tolerance,
                r.evaluated,
                r.errors,
                if r.passed { "PASS" } else { "FAIL" }
            ));
            if let Some(e) = &r.first_error {
                out.push_str(&format!("    first error: {e}\n"));
            }
        }
        out
    }
}

/// Synthetic constraint whose gradient is forced to zero at one point.
struct WithCriticalPoint {
    at: DVector<f64>,
}

impl Constraint for WithCriticalPoint {
    fn dim(&self) -> usize {
        2
    }
    fn value(&self, x: &DVector<f64>) -> f64 {
        SyntheticConstraint.value(x)
    }
    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        if x == &self.at {
            DVector::zeros(2)
        } else {
            SyntheticConstraint.gradient(x)
        }
    }
    fn hessian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        SyntheticConstraint.hessian(x)
    }
}

struct Accumulator {
    row: CheckRow,
}

impl Accumulator {
    fn new(name: &'static str, tolerance: f64) -> Self {
        Self {
            row: CheckRow {
                name,
                max_residual: 0.0,
                tolerance,
                evaluated: 0,
                errors: 0,
                first_error: None,
                passed: false,
            },
        }
    }

    fn record(&mut self, x: &DVector<f64>, value: Result<f64>) {
        match value {
            Ok(v) => {
                self.row.evaluated += 1;
                // NaN must not be silently ignored by `max`.
                if v.is_nan() || v > self.row.max_residual {
                    self.row.max_residual = if v.is_nan() { f64::INFINITY } else { v };
                }
            }
            Err(e) => {
                self.row.errors += 1;
                if self.row.first_error.is_none() {
                    self.row.first_error = Some(format!("at x = {:?}: {e}", x.as_slice()));
                }
            }
        }
    }

    fn finish(mut self) -> CheckRow {
        self.row.passed = self.row.errors == 0 && self.row.max_residual <= self.row.tolerance;
        self.row
    }
}

pub fn run_verify(opts: &VerifyOptions) -> Result<VerifyReport> {
    if opts.points == 0 {
        return Err(Error::InvalidConfig(
            "verify needs at least one point".into(),
        ));
    }
    if !(opts.box_half_width > 0.0 && opts.bandwidth > 0.0) {
        return Err(Error::InvalidConfig(
            "box half width and bandwidth must be positive".into(),
        ));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(opts.seed);
    let w = opts.box_half_width;
    let mut points: Vec<(DVector<f64>, DVector<f64>)> = (0..opts.points)
        .map(|_| {
            let x = DVector::from_fn(2, |_, _| rng.random_range(-w..=w));
            let y = &x + DVector::from_fn(2, |_, _| rng.random_range(-1.0..=1.0));
            (x, y)
        })
        .collect();

    let critical = DVector::from_vec(vec![0.25, -0.5]);
    let faulty;
    let c: &dyn Constraint = match opts.fault {
        Some(Fault::CriticalPoint) => {
            points.push((critical.clone(), critical.clone()));
            faulty = WithCriticalPoint { at: critical };
            &faulty
        }
        _ => &SyntheticConstraint,
    };
    let sign = if opts.fault == Some(Fault::NegateCorrection) {
        -1.0
    } else {
        1.0
    };
    let r_of = |x: &DVector<f64>| -> Result<DVector<f64>> { Ok(correction_field(x, c)? * sign) };
    let proj = |x: &DVector<f64>| projection_matrix(&c.gradient(x), c.grad_floor());
    let h = opts.bandwidth;
    let fd = FdConfig::default();
    let target = SyntheticTarget;

    let mut annihilation = Accumulator::new("D grad g = 0", 1e-10);
    let mut idempotence = Accumulator::new("D^2 = D", 1e-10);
    let mut spectrum = Accumulator::new("eig(D) = {0, 1}", 1e-10);
    let mut trace = Accumulator::new("grad g . r + tr(DHD) = 0", 1e-8);
    let mut r_fd = Accumulator::new("r = div D (finite diff)", 1e-4);
    let mut grad_fd = Accumulator::new("grad g (finite diff)", 1e-4);
    let mut hess_fd = Accumulator::new("hess g (finite diff)", 1e-3);
    let mut score_fd = Accumulator::new("score (finite diff)", 1e-4);
    let mut kperp_null = Accumulator::new("grad g(x)^T k_perp(x, y) = 0", 1e-10);
    let mut div_fd = Accumulator::new("div_y k_perp (finite diff)", 1e-4);
    let mut surrogate = Accumulator::new("div_y k_perp - surrogate = k D r", 1e-10);

    for (x, y) in &points {
        let grad = c.gradient(x);
        let hess = c.hessian(x);
        annihilation.record(x, proj(x).map(|d| (&d * &grad).norm()));
        idempotence.record(x, proj(x).map(|d| (&d * &d - &d).norm()));
        spectrum.record(
            x,
            proj(x).map(|d| {
                let mut ev: Vec<f64> = SymmetricEigen::new(d).eigenvalues.iter().copied().collect();
                ev.sort_by(f64::total_cmp);
                ev[0].abs().max((ev[1] - 1.0).abs())
            }),
        );
        trace.record(
            x,
            proj(x).and_then(|d| {
                let r = r_of(x)?;
                Ok((grad.dot(&r) + (&d * &hess * &d).trace()).abs())
            }),
        );
        r_fd.record(
            x,
            r_of(x).and_then(|r| {
                let oracle = fd_divergence_matrix(
                    |p| proj(p).unwrap_or_else(|_| DMatrix::from_element(2, 2, f64::NAN)),
                    x,
                    &fd,
                )?;
                Ok(relative_error(&r, &oracle, 1e-8))
            }),
        );
        grad_fd.record(
            x,
            fd_gradient(|p| c.value(p), x, &fd).map(|o| relative_error(&grad, &o, 1e-8)),
        );
        hess_fd.record(
            x,
            fd_hessian(|p| c.value(p), x).map(|o| (&hess - &o).norm() / o.norm().max(1e-8)),
        );
        score_fd.record(
            x,
            fd_gradient(|p| target.log_density(p), x, &fd)
                .map(|o| relative_error(&target.score(x), &o, 1e-8)),
        );
        kperp_null.record(
            x,
            k_perp(x, y, c, h).map(|k| (grad.transpose() * k).norm() / grad.norm()),
        );

        // The analytic divergence is rebuilt here so the correction fault reaches it.
        let analytic_div = || -> Result<DVector<f64>> {
            let k = rbf(x, y, h)?;
            let gk = rbf_grad_y(x, y, h)?;
            Ok(proj(x)? * (proj(y)? * gk + r_of(y)? * k))
        };
        div_fd.record(
            x,
            analytic_div().and_then(|a| {
                let oracle = fd_divergence_matrix(
                    |q| {
                        k_perp(x, q, c, h).unwrap_or_else(|_| DMatrix::from_element(2, 2, f64::NAN))
                    },
                    y,
                    &fd,
                )?;
                Ok(relative_error(&a, &oracle, 1e-8))
            }),
        );
        surrogate.record(
            x,
            (|| -> Result<f64> {
                let full = div_y_k_perp(x, y, c, h)?;
                let sur = surrogate_grad_k_perp(x, y, c, h)?;
                let expected = proj(x)? * correction_field(y, c)? * rbf(x, y, h)?;
                Ok((full - sur - &expected).norm() / (1.0 + expected.norm()))
            })(),
        );
    }

    Ok(VerifyReport {
        rows: [
            annihilation,
            idempotence,
            spectrum,
            trace,
            r_fd,
            grad_fd,
            hess_fd,
            score_fd,
            kperp_null,
            div_fd,
            surrogate,
        ]
        .into_iter()
        .map(Accumulator::finish)
        .collect(),
    })
}
