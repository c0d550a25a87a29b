//! The four feedback laws mapping gradient estimates to the tuning input.

use crate::linalg::{norm, Matrix};

/// Unit-vector law u = K g / ||g||, resting at zero when ||g|| <= guard.
pub fn uvc_gradient(g_hat: &[f64], gain: &Matrix, guard: f64) -> Vec<f64> {
    let n = norm(g_hat);
    if n <= guard {
        return vec![0.0; g_hat.len()];
    }
    let unit: Vec<f64> = g_hat.iter().map(|v| v / n).collect();
    gain.matvec(&unit)
}

/// Newton unit-vector law u = -K Gamma g / ||Gamma g||, same guard semantics
/// applied to the transformed vector.
pub fn uvc_newton(g_hat: &[f64], gamma: &Matrix, gain: &Matrix, guard: f64) -> Vec<f64> {
    let v = gamma.matvec(g_hat);
    let n = norm(&v);
    if n <= guard {
        return vec![0.0; g_hat.len()];
    }
    let unit: Vec<f64> = v.iter().map(|x| x / n).collect();
    gain.matvec(&unit).iter().map(|x| -x).collect()
}

/// Classical proportional law u = K g.
pub fn proportional_gradient(g_hat: &[f64], gain: &Matrix) -> Vec<f64> {
    gain.matvec(g_hat)
}

/// Classical Newton proportional law u = -K Gamma g.
pub fn proportional_newton(g_hat: &[f64], gamma: &Matrix, gain: &Matrix) -> Vec<f64> {
    gain.matvec(&gamma.matvec(g_hat)).iter().map(|x| -x).collect()
}

/// Boundary-layer direction v / (||v|| + eps), used by the averaged systems
/// where true sliding occurs and a hard relay would chatter at the Euler
/// step scale.
pub fn boundary_layer_direction(v: &[f64], eps: f64) -> Vec<f64> {
    let n = norm(v) + eps;
    v.iter().map(|x| x / n).collect()
}
