use crate::error::{Error, Result};

use super::FactorVector;

/// Euclidean norm.
pub fn norm(x: &[f64]) -> f64 {
    libm::sqrt(x.iter().map(|v| v * v).sum())
}

/// `x - alpha * g`.
pub fn sgd_step(x: &[f64], g: &[f64], alpha: f64) -> Result<FactorVector> {
    let mut out = FactorVector::from(x);
    sgd_step_in_place(&mut out, g, alpha)?;
    Ok(out)
}

/// In-place `x <- x - alpha * g`.
pub fn sgd_step_in_place(x: &mut [f64], g: &[f64], alpha: f64) -> Result<()> {
    if x.len() != g.len() {
        return Err(Error::LengthMismatch {
            expected: x.len(),
            found: g.len(),
        });
    }
    for (xi, gi) in x.iter_mut().zip(g) {
        *xi -= alpha * gi;
    }
    Ok(())
}

/// `min{1, (1/sqrt(gamma)) / ||x||} * x`.
pub fn project(x: &[f64], gamma: f64) -> FactorVector {
    let mut out = FactorVector::from(x);
    project_in_place(&mut out, gamma);
    out
}

/// In-place projection into the ball of radius `1/sqrt(gamma)`.
///
/// The rescaled vector is shrunk by a few ulps when rounding would leave its
/// computed norm above the radius, which makes the projection idempotent in
/// floating point.
pub fn project_in_place(x: &mut [f64], gamma: f64) {
    let radius = 1.0 / libm::sqrt(gamma);
    let n = norm(x);
    if n <= radius {
        return;
    }
    for v in x.iter_mut() {
        *v = *v * radius / n;
    }
    while norm(x) > radius {
        for v in x.iter_mut() {
            *v *= 1.0 - f64::EPSILON;
        }
    }
}
