//! Pointwise geometry of the orthogonal decomposition around a level set
//! `{x : g(x) = 0}`.
//!
//! For a scalar constraint `g` the tangent projector is
//! `D(x) = I - ∇g ∇gᵀ / ‖∇g‖²`, the normal drift is
//! `v♯(x) = -ψ(g(x)) ∇g / ‖∇g‖²` and the correction field is the row-wise
//! divergence `r_i(x) = Σ_j ∂_j D_ij(x)`, evaluated here from its closed form
//!
//! ```text
//! r = -(H ∇g)/‖∇g‖² - (tr H / ‖∇g‖²) ∇g + 2 (∇gᵀ H ∇g / ‖∇g‖⁴) ∇g,   H = ∇²g.
//! ```
//!
//! These quantities satisfy `D ∇g = 0`, `D² = D` and
//! `∇gᵀ r + tr(D H D) = 0`; [`check_identities`] reports all three residuals.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default singularity guard on `‖∇g‖`.
pub const DEFAULT_GRAD_FLOOR: f64 = 1e-10;

/// A scalar constraint `g: R^d -> R` with analytic first and second derivatives.
pub trait Constraint: Send + Sync {
    fn dim(&self) -> usize;

    fn value(&self, x: &DVector<f64>) -> f64;

    fn gradient(&self, x: &DVector<f64>) -> DVector<f64>;

    /// Symmetric Hessian of `g`.
    fn hessian(&self, x: &DVector<f64>) -> DMatrix<f64>;

    fn grad_floor(&self) -> f64 {
        DEFAULT_GRAD_FLOOR
    }
}

impl<C: Constraint + ?Sized> Constraint for &C {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn value(&self, x: &DVector<f64>) -> f64 {
        (**self).value(x)
    }
    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        (**self).gradient(x)
    }
    fn hessian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        (**self).hessian(x)
    }
    fn grad_floor(&self) -> f64 {
        (**self).grad_floor()
    }
}

type ScalarFn = Arc<dyn Fn(&DVector<f64>) -> f64 + Send + Sync>;
type VectorFn = Arc<dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync>;
type MatrixFn = Arc<dyn Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync>;

/// A constraint assembled from user callables.
#[derive(Clone)]
pub struct ConstraintSpec {
    dim: usize,
    g: ScalarFn,
    grad_g: VectorFn,
    hess_g: MatrixFn,
    grad_floor: f64,
}

impl ConstraintSpec {
    pub fn new<G, DG, HG>(dim: usize, g: G, grad_g: DG, hess_g: HG) -> Self
    where
        G: Fn(&DVector<f64>) -> f64 + Send + Sync + 'static,
        DG: Fn(&DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
        HG: Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync + 'static,
    {
        Self {
            dim,
            g: Arc::new(g),
            grad_g: Arc::new(grad_g),
            hess_g: Arc::new(hess_g),
            grad_floor: DEFAULT_GRAD_FLOOR,
        }
    }

    pub fn with_grad_floor(mut self, grad_floor: f64) -> Self {
        self.grad_floor = grad_floor;
        self
    }
}

impl std::fmt::Debug for ConstraintSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ConstraintSpec")
            .field("dim", &self.dim)
            .field("grad_floor", &self.grad_floor)
            .finish_non_exhaustive()
    }
}

impl Constraint for ConstraintSpec {
    fn dim(&self) -> usize {
        self.dim
    }
    fn value(&self, x: &DVector<f64>) -> f64 {
        (self.g)(x)
    }
    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        (self.grad_g)(x)
    }
    fn hessian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        (self.hess_g)(x)
    }
    fn grad_floor(&self) -> f64 {
        self.grad_floor
    }
}

/// `g(x) = x0 + x1³` in two dimensions.
#[derive(Clone, Copy, Debug, Default)]
pub struct SyntheticConstraint;

impl Constraint for SyntheticConstraint {
    fn dim(&self) -> usize {
        2
    }
    fn value(&self, x: &DVector<f64>) -> f64 {
        x[0] + x[1] * x[1] * x[1]
    }
    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_vec(vec![1.0, 3.0 * x[1] * x[1]])
    }
    fn hessian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 6.0 * x[1]])
    }
}

/// `g(x) = aᵀx + b`; constant projector and zero correction field.
#[derive(Clone, Debug)]
pub struct AffineConstraint {
    pub normal: DVector<f64>,
    pub offset: f64,
}

impl AffineConstraint {
    pub fn new(normal: DVector<f64>, offset: f64) -> Self {
        Self { normal, offset }
    }
}

impl Constraint for AffineConstraint {
    fn dim(&self) -> usize {
        self.normal.len()
    }
    fn value(&self, x: &DVector<f64>) -> f64 {
        self.normal.dot(x) + self.offset
    }
    fn gradient(&self, _x: &DVector<f64>) -> DVector<f64> {
        self.normal.clone()
    }
    fn hessian(&self, _x: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::zeros(self.normal.len(), self.normal.len())
    }
}

/// `g(x) = ‖x‖²/2 - radius²/2`, whose zero set is a sphere.
#[derive(Clone, Copy, Debug)]
pub struct SphereConstraint {
    pub dim: usize,
    pub radius: f64,
}

impl Constraint for SphereConstraint {
    fn dim(&self) -> usize {
        self.dim
    }
    fn value(&self, x: &DVector<f64>) -> f64 {
        0.5 * (x.norm_squared() - self.radius * self.radius)
    }
    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        x.clone()
    }
    fn hessian(&self, _x: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::identity(self.dim, self.dim)
    }
}

/// Parameters of the drift `ψ(z) = α sign(z) |z|^(1+β)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PsiParams {
    pub alpha: f64,
    pub beta: f64,
}

impl PsiParams {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        let p = Self { alpha, beta };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "psi alpha must be positive, got {}",
                self.alpha
            )));
        }
        if !(0.0..=1.0).contains(&self.beta) {
            return Err(Error::InvalidConfig(format!(
                "psi beta must lie in [0, 1], got {}",
                self.beta
            )));
        }
        Ok(())
    }
}

impl Default for PsiParams {
    fn default() -> Self {
        Self {
            alpha: 100.0,
            beta: 0.0,
        }
    }
}

pub fn psi(z: f64, p: PsiParams) -> f64 {
    if p.beta == 0.0 {
        return p.alpha * z;
    }
    if z == 0.0 {
        return 0.0;
    }
    p.alpha * z.signum() * z.abs().powf(1.0 + p.beta)
}

fn check_gradient(grad: &DVector<f64>, grad_floor: f64) -> Result<f64> {
    let norm_sq = grad.norm_squared();
    let norm = norm_sq.sqrt();
    if norm.is_nan() || norm < grad_floor {
        return Err(Error::SingularGradient {
            norm,
            floor: grad_floor,
        });
    }
    Ok(norm_sq)
}

/// `D = I - ∇g ∇gᵀ / ‖∇g‖²`.
pub fn projection_matrix(grad: &DVector<f64>, grad_floor: f64) -> Result<DMatrix<f64>> {
    let norm_sq = check_gradient(grad, grad_floor)?;
    let d = grad.len();
    Ok(DMatrix::identity(d, d) - grad * grad.transpose() / norm_sq)
}

/// Applies `D` to `v` without forming the matrix.
pub fn project(grad: &DVector<f64>, v: &DVector<f64>, grad_floor: f64) -> Result<DVector<f64>> {
    let norm_sq = check_gradient(grad, grad_floor)?;
    Ok(v - grad * (grad.dot(v) / norm_sq))
}

pub fn v_sharp<C: Constraint + ?Sized>(
    x: &DVector<f64>,
    c: &C,
    p: PsiParams,
) -> Result<DVector<f64>> {
    let grad = c.gradient(x);
    let norm_sq = check_gradient(&grad, c.grad_floor())?;
    Ok(grad * (-psi(c.value(x), p) / norm_sq))
}

fn correction_from_parts(grad: &DVector<f64>, hess: &DMatrix<f64>, norm_sq: f64) -> DVector<f64> {
    let hg = hess * grad;
    let quad = grad.dot(&hg);
    let coef = -hess.trace() / norm_sq + 2.0 * quad / (norm_sq * norm_sq);
    -hg / norm_sq + grad * coef
}

/// Closed-form row divergence of `D`.
pub fn correction_field<C: Constraint + ?Sized>(x: &DVector<f64>, c: &C) -> Result<DVector<f64>> {
    let grad = c.gradient(x);
    let norm_sq = check_gradient(&grad, c.grad_floor())?;
    Ok(correction_from_parts(&grad, &c.hessian(x), norm_sq))
}

/// Named scalar residuals of the exact identities at one point.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdentityResiduals {
    /// `‖D ∇g‖`
    pub annihilation: f64,
    /// `‖D² - D‖_F`
    pub idempotence: f64,
    /// `∇gᵀ r + tr(D H D)`, signed.
    pub trace_identity: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GeometryReport {
    pub point: DVector<f64>,
    pub d_matrix: DMatrix<f64>,
    pub r_vector: DVector<f64>,
    pub grad_dot_r: f64,
    pub trace_dhd: f64,
    pub residuals: IdentityResiduals,
}

pub fn check_identities<C: Constraint + ?Sized>(x: &DVector<f64>, c: &C) -> Result<GeometryReport> {
    let grad = c.gradient(x);
    let hess = c.hessian(x);
    let d = projection_matrix(&grad, c.grad_floor())?;
    let r = correction_field(x, c)?;
    let grad_dot_r = grad.dot(&r);
    let trace_dhd = (&d * &hess * &d).trace();
    let residuals = IdentityResiduals {
        annihilation: (&d * &grad).norm(),
        idempotence: (&d * &d - &d).norm(),
        trace_identity: grad_dot_r + trace_dhd,
    };
    Ok(GeometryReport {
        point: x.clone(),
        d_matrix: d,
        r_vector: r,
        grad_dot_r,
        trace_dhd,
        residuals,
    })
}

/// Everything the samplers need at one point, computed once.
#[derive(Clone, Debug)]
pub struct LocalFrame {
    pub value: f64,
    pub gradient: DVector<f64>,
    pub projection: DMatrix<f64>,
    /// `None` when the frame was built without second-order information.
    pub correction: Option<DVector<f64>>,
}

impl LocalFrame {
    pub fn at<C: Constraint + ?Sized>(
        x: &DVector<f64>,
        c: &C,
        with_correction: bool,
    ) -> Result<Self> {
        let gradient = c.gradient(x);
        let norm_sq = check_gradient(&gradient, c.grad_floor())?;
        let d = gradient.len();
        let projection = DMatrix::identity(d, d) - &gradient * gradient.transpose() / norm_sq;
        let correction =
            with_correction.then(|| correction_from_parts(&gradient, &c.hessian(x), norm_sq));
        Ok(Self {
            value: c.value(x),
            gradient,
            projection,
            correction,
        })
    }

    pub fn v_sharp(&self, p: PsiParams) -> DVector<f64> {
        &self.gradient * (-psi(self.value, p) / self.gradient.norm_squared())
    }

    /// `D v` computed as `v - ∇g (∇gᵀv)/‖∇g‖²`, which keeps `∇gᵀ D v` at roundoff.
    pub fn project(&self, v: &DVector<f64>) -> DVector<f64> {
        v - &self.gradient * (self.gradient.dot(v) / self.gradient.norm_squared())
    }
}
