use nalgebra::DVector;

use crate::error::Result;
use crate::geometry::{Constraint, LocalFrame, PsiParams};
use crate::targets::Target;

/// `x + η ∇log π(x) + √(2η) ξ`
pub fn langevin_step<T: Target + ?Sized>(
    x: &DVector<f64>,
    target: &T,
    eta: f64,
    noise: &DVector<f64>,
) -> DVector<f64> {
    x + target.score(x) * eta + noise * (2.0 * eta).sqrt()
}

/// One O-Langevin update:
/// `x + η v♯(x) + η D(x) s(x) + η r(x) + √(2η) D(x) ξ`.
///
/// With `second_order_free` the `η r(x)` term is dropped and the constraint
/// Hessian is never evaluated.
pub fn o_langevin_step<T, C>(
    x: &DVector<f64>,
    target: &T,
    c: &C,
    eta: f64,
    psi: PsiParams,
    second_order_free: bool,
    noise: &DVector<f64>,
) -> Result<DVector<f64>>
where
    T: Target + ?Sized,
    C: Constraint + ?Sized,
{
    let frame = LocalFrame::at(x, c, !second_order_free)?;
    let mut drift = frame.v_sharp(psi) + frame.project(&target.score(x));
    if let Some(r) = &frame.correction {
        drift += r;
    }
    Ok(x + drift * eta + frame.project(noise) * (2.0 * eta).sqrt())
}
