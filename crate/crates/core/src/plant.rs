//! Ground-truth objective evaluation and its analytic derivatives. These are
//! simulator/oracle facilities; controllers never see them.

use crate::error::{Error, Result};
use crate::linalg::sub_vec;
use crate::types::QuadraticMap;

/// y = q* + (theta - theta*)' H (theta - theta*) / 2.
pub fn evaluate_map(map: &QuadraticMap, theta: &[f64]) -> Result<f64> {
    if theta.len() != map.dim() {
        return Err(Error::DimensionMismatch { expected: map.dim(), got: theta.len() });
    }
    let d = sub_vec(theta, map.theta_star());
    let hd = map.hessian().matvec(&d);
    Ok(map.q_star() + 0.5 * crate::linalg::dot(&d, &hd))
}

/// Analytic gradient H (theta - theta*).
pub fn true_gradient(map: &QuadraticMap, theta: &[f64]) -> Result<Vec<f64>> {
    if theta.len() != map.dim() {
        return Err(Error::DimensionMismatch { expected: map.dim(), got: theta.len() });
    }
    let d = sub_vec(theta, map.theta_star());
    Ok(map.hessian().matvec(&d))
}
