//! Runtime gradient/Hessian estimators, the Riccati inverse-Hessian filter,
//! and the exact trigonometric decompositions of both estimators.
//!
//! The estimators themselves are one-liners (demodulate the measured output).
//! The decompositions expand the same quantities term by term into their
//! constituent sinusoids; they exist so tests can check the estimators
//! against an independently assembled expression at machine precision.

use crate::error::{Error, Result};
use crate::linalg::{dot, Matrix};
use crate::plant::evaluate_map;
use crate::signals::{demod_m, dither_s, hessian_n};
use crate::types::{DitherSpec, QuadraticMap};

/// Gradient estimate M(t) y.
pub fn estimate_gradient(spec: &DitherSpec, t: f64, y: f64) -> Vec<f64> {
    demod_m(t, spec).into_iter().map(|m| m * y).collect()
}

/// Hessian estimate N(t) y.
pub fn estimate_hessian(spec: &DitherSpec, t: f64, y: f64) -> Matrix {
    hessian_n(t, spec).scale(y)
}

/// Right-hand side of the inverse-Hessian filter:
/// dGamma/dt = w_r (Gamma - Gamma H_est Gamma).
pub fn riccati_rhs(gamma: &Matrix, h_est: &Matrix, omega_r: f64) -> Result<Matrix> {
    if !gamma.is_square() || !h_est.is_square() || gamma.rows() != h_est.rows() {
        return Err(Error::DimensionMismatch { expected: gamma.rows(), got: h_est.rows() });
    }
    Ok(gamma.sub(&gamma.matmul(h_est).matmul(gamma)).scale(omega_r))
}

/// Exact split of the gradient estimate:
/// M(t) y = quadratic_term + (H + delta_h(t)) theta~ + delta(t).
#[derive(Debug, Clone)]
pub struct GradientDecomposition {
    /// Zero-mean time-varying Hessian perturbation multiplying theta~.
    pub delta_h: Matrix,
    /// Zero-mean additive disturbance.
    pub delta: Vec<f64>,
    /// M(t) * theta~' H theta~ / 2, quadratic in the estimation error.
    pub quadratic_term: Vec<f64>,
}

impl GradientDecomposition {
    /// Reassemble the right-hand side of the identity.
    pub fn reconstruct(&self, hessian: &Matrix, theta_tilde: &[f64]) -> Vec<f64> {
        let linear = hessian.add(&self.delta_h).matvec(theta_tilde);
        (0..theta_tilde.len())
            .map(|i| self.quadratic_term[i] + linear[i] + self.delta[i])
            .collect()
    }
}

/// Exact split of the Hessian estimate:
/// N(t) y = H + delta_h_hat(t) + residual_term(t).
#[derive(Debug, Clone)]
pub struct HessianDecomposition {
    /// Zero-mean time-varying perturbation (for non-resonant ratios).
    pub delta_h_hat: Matrix,
    /// N(t) * (theta~' H theta~ / 2 + S(t)' H theta~), vanishing with theta~.
    pub residual_term: Matrix,
}

impl HessianDecomposition {
    pub fn reconstruct(&self, hessian: &Matrix) -> Matrix {
        hessian.add(&self.delta_h_hat).add(&self.residual_term)
    }
}

/// Term-by-term expansion of the gradient estimate at estimation error
/// `theta_tilde` and time `t`.
///
/// Every sinusoid the demodulated quadratic map produces is assembled
/// explicitly, which keeps this path independent of [`estimate_gradient`].
pub fn gradient_decomposition(
    map: &QuadraticMap,
    spec: &DitherSpec,
    theta_tilde: &[f64],
    t: f64,
) -> Result<GradientDecomposition> {
    let n = map.dim();
    if theta_tilde.len() != n || spec.dim() != n {
        return Err(Error::DimensionMismatch { expected: n, got: theta_tilde.len() });
    }
    let h = map.hessian();
    let a = spec.amplitudes();
    let w = spec.omegas();
    let q_star = map.q_star();

    // delta_h[i][j]: -H_ij cos(2 w_i t)
    //               + sum_{k != i} H_kj (a_k / a_i) [cos((w_i - w_k) t) - cos((w_i + w_k) t)]
    let mut delta_h = Matrix::zeros(n, n);
    for i in 0..n {
        let c2i = (2.0 * w[i] * t).cos();
        for j in 0..n {
            let mut v = -h[(i, j)] * c2i;
            for k in 0..n {
                if k == i {
                    continue;
                }
                v += h[(k, j)] * (a[k] / a[i])
                    * (((w[i] - w[k]) * t).cos() - ((w[i] + w[k]) * t).cos());
            }
            delta_h[(i, j)] = v;
        }
    }

    // delta[i]: (2 q* / a_i) sin(w_i t)
    //   + (1/4) sum_{j,k} H_jk (a_j a_k / a_i) [ sin((w_i + w_j - w_k) t)
    //                                          + sin((w_i - w_j + w_k) t)
    //                                          - sin((w_i + w_j + w_k) t)
    //                                          - sin((w_i - w_j - w_k) t) ]
    let mut delta = vec![0.0; n];
    for i in 0..n {
        let mut v = 2.0 * q_star / a[i] * (w[i] * t).sin();
        for j in 0..n {
            for k in 0..n {
                let c = h[(j, k)] * a[j] * a[k] / (4.0 * a[i]);
                v += c * ((w[i] + w[j] - w[k]) * t).sin();
                v += c * ((w[i] - w[j] + w[k]) * t).sin();
                v -= c * ((w[i] + w[j] + w[k]) * t).sin();
                v -= c * ((w[i] - w[j] - w[k]) * t).sin();
            }
        }
        delta[i] = v;
    }

    let quad = 0.5 * dot(theta_tilde, &h.matvec(theta_tilde));
    let quadratic_term = demod_m(t, spec).into_iter().map(|m| m * quad).collect();

    Ok(GradientDecomposition { delta_h, delta, quadratic_term })
}

/// Term-by-term expansion of the Hessian estimate at estimation error
/// `theta_tilde` and time `t`, independent of [`estimate_hessian`].
pub fn hessian_decomposition(
    map: &QuadraticMap,
    spec: &DitherSpec,
    theta_tilde: &[f64],
    t: f64,
) -> Result<HessianDecomposition> {
    let n = map.dim();
    if theta_tilde.len() != n || spec.dim() != n {
        return Err(Error::DimensionMismatch { expected: n, got: theta_tilde.len() });
    }
    let h = map.hessian();
    let a = spec.amplitudes();
    let w = spec.omegas();
    let q_star = map.q_star();

    let mut delta_h_hat = Matrix::zeros(n, n);

    // Diagonal entries.
    for i in 0..n {
        let c2i = (2.0 * w[i] * t).cos();
        // N_ii q*
        let mut v = -8.0 * q_star / (a[i] * a[i]) * c2i;
        // diagonal map curvature demodulated through channel i
        for k in 0..n {
            let ratio = (a[k] * a[k]) / (a[i] * a[i]);
            v += -2.0 * h[(k, k)] * ratio * c2i;
            if k == i {
                v += h[(i, i)] * (4.0 * w[i] * t).cos();
            } else {
                v += h[(k, k)]
                    * ratio
                    * ((2.0 * (w[i] - w[k]) * t).cos() + (2.0 * (w[i] + w[k]) * t).cos());
            }
        }
        // cross-curvature pairs
        for k in 0..n {
            for l in (k + 1)..n {
                let c = 2.0 * h[(k, l)] * a[k] * a[l] / (a[i] * a[i]);
                v -= c * ((2.0 * w[i] + w[k] - w[l]) * t).cos();
                v -= c * ((2.0 * w[i] - w[k] + w[l]) * t).cos();
                v += c * ((2.0 * w[i] + w[k] + w[l]) * t).cos();
                v += c * ((2.0 * w[i] - w[k] - w[l]) * t).cos();
            }
        }
        delta_h_hat[(i, i)] = v;
    }

    // Off-diagonal entries.
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let cm = ((w[i] - w[j]) * t).cos();
            let cp = ((w[i] + w[j]) * t).cos();
            // N_ij q*
            let mut v = 2.0 * q_star / (a[i] * a[j]) * (cm - cp);
            // the {i, j} pair demodulated by its own tone pair; the constant
            // part of this product is the H_ij the estimator recovers
            v += h[(i, j)]
                * (0.5 * (2.0 * (w[i] - w[j]) * t).cos() + 0.5 * (2.0 * (w[i] + w[j]) * t).cos()
                    - (2.0 * w[i] * t).cos()
                    - (2.0 * w[j] * t).cos());
            // diagonal map curvature
            for k in 0..n {
                let c = 0.5 * h[(k, k)] * a[k] * a[k] / (a[i] * a[j]);
                v += c * (cm - cp);
                v -= 0.5
                    * c
                    * (((w[i] - w[j] - 2.0 * w[k]) * t).cos()
                        + ((w[i] - w[j] + 2.0 * w[k]) * t).cos()
                        - ((w[i] + w[j] - 2.0 * w[k]) * t).cos()
                        - ((w[i] + w[j] + 2.0 * w[k]) * t).cos());
            }
            // cross-curvature pairs other than {i, j}
            for k in 0..n {
                for l in (k + 1)..n {
                    if (k == i && l == j) || (k == j && l == i) {
                        continue;
                    }
                    let c = 0.5 * h[(k, l)] * a[k] * a[l] / (a[i] * a[j]);
                    v += c * ((w[i] - w[j] + w[k] - w[l]) * t).cos();
                    v += c * ((w[i] - w[j] - w[k] + w[l]) * t).cos();
                    v -= c * ((w[i] - w[j] + w[k] + w[l]) * t).cos();
                    v -= c * ((w[i] - w[j] - w[k] - w[l]) * t).cos();
                    v -= c * ((w[i] + w[j] + w[k] - w[l]) * t).cos();
                    v -= c * ((w[i] + w[j] - w[k] + w[l]) * t).cos();
                    v += c * ((w[i] + w[j] + w[k] + w[l]) * t).cos();
                    v += c * ((w[i] + w[j] - w[k] - w[l]) * t).cos();
                }
            }
            delta_h_hat[(i, j)] = v;
        }
    }

    let s = dither_s(t, spec);
    let h_tilde = h.matvec(theta_tilde);
    let scalar = 0.5 * dot(theta_tilde, &h_tilde) + dot(&s, &h_tilde);
    let residual_term = hessian_n(t, spec).scale(scalar);

    Ok(HessianDecomposition { delta_h_hat, residual_term })
}

/// Output of the map at theta* + theta~ + S(t); shared by the identity tests.
pub fn perturbed_output(map: &QuadraticMap, spec: &DitherSpec, theta_tilde: &[f64], t: f64) -> Result<f64> {
    let s = dither_s(t, spec);
    let theta: Vec<f64> = map
        .theta_star()
        .iter()
        .zip(theta_tilde.iter().zip(&s))
        .map(|(star, (tt, si))| star + tt + si)
        .collect();
    evaluate_map(map, &theta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::norm;
    use crate::signals::common_period;
    use crate::types::DitherSpec;
    use num_rational::Rational64;

    fn ratio(n: i64) -> Rational64 {
        Rational64::from_integer(n)
    }

    fn demo_map() -> QuadraticMap {
        QuadraticMap::new(
            100.0,
            vec![2.0, 4.0],
            Matrix::from_rows(&[vec![100.0, 30.0], vec![30.0, 20.0]]).unwrap(),
        )
        .unwrap()
    }

    fn demo_spec() -> DitherSpec {
        DitherSpec::new(vec![0.1, 0.1], vec![ratio(70), ratio(50)], 0.1).unwrap()
    }

    /// Three-channel setup with distinct amplitudes so every index family in
    /// the decompositions is exercised.
    fn wide_map() -> QuadraticMap {
        QuadraticMap::new(
            100.0,
            vec![2.0, 4.0, 1.0],
            Matrix::from_rows(&[
                vec![100.0, 30.0, 10.0],
                vec![30.0, 20.0, 5.0],
                vec![10.0, 5.0, 40.0],
            ])
            .unwrap(),
        )
        .unwrap()
    }

    fn wide_spec() -> DitherSpec {
        DitherSpec::new(
            vec![0.1, 0.12, 0.08],
            vec![ratio(70), ratio(50), ratio(110)],
            0.1,
        )
        .unwrap()
    }

    fn lcg(state: &mut u64) -> f64 {
        *state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (*state >> 11) as f64 / (1u64 << 53) as f64
    }

    #[test]
    fn estimators_vanish_with_zero_output() {
        let spec = demo_spec();
        assert!(estimate_gradient(&spec, 1.23, 0.0).iter().all(|v| *v == 0.0));
        assert_eq!(estimate_hessian(&spec, 1.23, 0.0).max_abs(), 0.0);
    }

    #[test]
    fn gradient_estimate_vanishes_at_t0() {
        let spec = demo_spec();
        assert!(estimate_gradient(&spec, 0.0, 1037.5).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn hessian_estimate_at_t0() {
        let h = estimate_hessian(&demo_spec(), 0.0, 100.0);
        assert!((h[(0, 0)] + 80_000.0).abs() < 1e-6);
        assert!((h[(1, 1)] + 80_000.0).abs() < 1e-6);
        assert!(h[(0, 1)].abs() < 1e-9);
    }

    #[test]
    fn riccati_fixed_point() {
        let map = demo_map();
        let gamma = map.hessian_inverse().unwrap();
        let rhs = riccati_rhs(&gamma, map.hessian(), 1.0).unwrap();
        assert!(rhs.max_abs() < 1e-12);
    }

    #[test]
    fn riccati_zero_is_invariant() {
        let rhs = riccati_rhs(&Matrix::zeros(2, 2), demo_map().hessian(), 3.0).unwrap();
        assert_eq!(rhs.max_abs(), 0.0);
    }

    #[test]
    fn riccati_scalar_case() {
        let gamma = Matrix::from_flat(1, &[1.0]).unwrap();
        let h = Matrix::from_flat(1, &[2.0]).unwrap();
        let rhs = riccati_rhs(&gamma, &h, 1.0).unwrap();
        assert!((rhs[(0, 0)] + 1.0).abs() < 1e-15);
    }

    #[test]
    fn riccati_dimension_mismatch() {
        assert!(riccati_rhs(&Matrix::identity(2), &Matrix::identity(3), 1.0).is_err());
    }

    #[test]
    fn riccati_euler_steps_preserve_symmetry() {
        let map = demo_map();
        let spec = demo_spec();
        let dt = 1e-3;
        let mut gamma = Matrix::scaled_identity(2, 0.0025);
        for k in 0..2000 {
            let t = k as f64 * dt;
            let y = perturbed_output(&map, &spec, &[0.5, -0.25], t).unwrap();
            let h_est = estimate_hessian(&spec, t, y);
            let rhs = riccati_rhs(&gamma, &h_est, 1.0).unwrap();
            gamma = gamma.add(&rhs.scale(dt));
            assert!(gamma.asymmetry() < 1e-9 * gamma.max_abs().max(1.0));
            if !gamma.is_finite() {
                break; // raw demodulation can blow the filter up; symmetry held until then
            }
        }
    }

    #[test]
    fn gradient_identity_with_zero_error_reduces_to_delta() {
        let map = demo_map();
        let spec = demo_spec();
        for k in 0..50 {
            let t = 0.173 * k as f64;
            let y = perturbed_output(&map, &spec, &[0.0, 0.0], t).unwrap();
            let direct = estimate_gradient(&spec, t, y);
            let d = gradient_decomposition(&map, &spec, &[0.0, 0.0], t).unwrap();
            for (g, (delta, quad)) in direct.iter().zip(d.delta.iter().zip(&d.quadratic_term)) {
                assert!((g - delta).abs() < 1e-9 * g.abs().max(1.0));
                assert_eq!(*quad, 0.0);
            }
        }
    }

    #[test]
    fn gradient_identity_random_draws() {
        let map = wide_map();
        let spec = wide_spec();
        let mut state = 0xfeedbeefu64;
        let mut worst = 0.0f64;
        for _ in 0..1000 {
            let tt: Vec<f64> = (0..3).map(|_| lcg(&mut state) * 6.0 - 3.0).collect();
            let t = lcg(&mut state) * 60.0;
            let y = perturbed_output(&map, &spec, &tt, t).unwrap();
            let direct = estimate_gradient(&spec, t, y);
            let d = gradient_decomposition(&map, &spec, &tt, t).unwrap();
            let recon = d.reconstruct(map.hessian(), &tt);
            let err: Vec<f64> = direct.iter().zip(&recon).map(|(a, b)| a - b).collect();
            worst = worst.max(norm(&err) / norm(&direct).max(1e-12));
        }
        assert!(worst < 1e-9, "worst relative identity residual {worst:.3e}");
    }

    #[test]
    fn hessian_identity_with_zero_error() {
        let map = demo_map();
        let spec = demo_spec();
        for k in 0..50 {
            let t = 0.211 * k as f64;
            let y = perturbed_output(&map, &spec, &[0.0, 0.0], t).unwrap();
            let direct = estimate_hessian(&spec, t, y);
            let d = hessian_decomposition(&map, &spec, &[0.0, 0.0], t).unwrap();
            assert_eq!(d.residual_term.max_abs(), 0.0);
            let recon = map.hessian().add(&d.delta_h_hat);
            let scale = direct.max_abs().max(1.0);
            assert!(direct.sub(&recon).max_abs() < 1e-9 * scale);
        }
    }

    #[test]
    fn hessian_identity_random_draws() {
        let map = wide_map();
        let spec = wide_spec();
        let mut state = 0xabcdef12u64;
        let mut worst = 0.0f64;
        for _ in 0..1000 {
            let tt: Vec<f64> = (0..3).map(|_| lcg(&mut state) * 6.0 - 3.0).collect();
            let t = lcg(&mut state) * 60.0;
            let y = perturbed_output(&map, &spec, &tt, t).unwrap();
            let direct = estimate_hessian(&spec, t, y);
            let d = hessian_decomposition(&map, &spec, &tt, t).unwrap();
            let recon = d.reconstruct(map.hessian());
            worst = worst.max(direct.sub(&recon).frobenius_norm() / direct.frobenius_norm().max(1e-12));
        }
        assert!(worst < 1e-9, "worst relative identity residual {worst:.3e}");
    }

    #[test]
    fn identities_hold_with_four_channels() {
        // n = 4 brings in cross-curvature pairs fully disjoint from the
        // demodulating pair {i, j}; the expansions must cover those too.
        let map = QuadraticMap::new(
            100.0,
            vec![2.0, 4.0, 1.0, -1.0],
            Matrix::from_rows(&[
                vec![100.0, 30.0, 10.0, 7.0],
                vec![30.0, 20.0, 5.0, 3.0],
                vec![10.0, 5.0, 40.0, 2.0],
                vec![7.0, 3.0, 2.0, 60.0],
            ])
            .unwrap(),
        )
        .unwrap();
        let spec = DitherSpec::new(
            vec![0.1, 0.12, 0.08, 0.15],
            vec![ratio(70), ratio(50), ratio(110), ratio(130)],
            0.1,
        )
        .unwrap();
        let mut state = 0x4c4c4c4cu64;
        let mut worst_g = 0.0f64;
        let mut worst_h = 0.0f64;
        for _ in 0..300 {
            let tt: Vec<f64> = (0..4).map(|_| lcg(&mut state) * 6.0 - 3.0).collect();
            let t = lcg(&mut state) * 60.0;
            let y = perturbed_output(&map, &spec, &tt, t).unwrap();
            let direct_g = estimate_gradient(&spec, t, y);
            let recon_g = gradient_decomposition(&map, &spec, &tt, t)
                .unwrap()
                .reconstruct(map.hessian(), &tt);
            let err: Vec<f64> = direct_g.iter().zip(&recon_g).map(|(a, b)| a - b).collect();
            worst_g = worst_g.max(norm(&err) / norm(&direct_g).max(1e-12));
            let direct_h = estimate_hessian(&spec, t, y);
            let recon_h =
                hessian_decomposition(&map, &spec, &tt, t).unwrap().reconstruct(map.hessian());
            worst_h = worst_h
                .max(direct_h.sub(&recon_h).frobenius_norm() / direct_h.frobenius_norm().max(1e-12));
        }
        assert!(worst_g < 1e-9 && worst_h < 1e-9, "residuals {worst_g:.2e} / {worst_h:.2e}");
    }

    #[test]
    fn disturbance_terms_have_zero_mean() {
        let map = demo_map();
        let spec = demo_spec();
        let t_period = common_period(&spec);
        let nodes = 20_000;
        let tt = [0.7, -1.1];
        let mut acc_dh = Matrix::zeros(2, 2);
        let mut acc_delta = [0.0; 2];
        let mut acc_dhh = Matrix::zeros(2, 2);
        for k in 0..nodes {
            let t = t_period * k as f64 / nodes as f64;
            let g = gradient_decomposition(&map, &spec, &tt, t).unwrap();
            acc_dh = acc_dh.add(&g.delta_h);
            for (acc, v) in acc_delta.iter_mut().zip(&g.delta) {
                *acc += v;
            }
            let h = hessian_decomposition(&map, &spec, &tt, t).unwrap();
            acc_dhh = acc_dhh.add(&h.delta_h_hat);
        }
        let inv = 1.0 / nodes as f64;
        assert!(acc_dh.scale(inv).max_abs() < 1e-6);
        assert!(acc_delta.iter().all(|v| (v * inv).abs() < 1e-6));
        assert!(acc_dhh.scale(inv).max_abs() < 1e-6);
    }

    #[test]
    fn period_averaged_gradient_recovers_scaled_error() {
        // With theta^ frozen at theta* + [0.5, 0], the averaged estimate is
        // H [0.5, 0] = [50, 15].
        let map = demo_map();
        let spec = demo_spec();
        let t_period = common_period(&spec);
        let nodes = 20_000;
        let tt = [0.5, 0.0];
        let mut acc = [0.0; 2];
        for k in 0..nodes {
            let t = t_period * k as f64 / nodes as f64;
            let y = perturbed_output(&map, &spec, &tt, t).unwrap();
            let g = estimate_gradient(&spec, t, y);
            acc[0] += g[0];
            acc[1] += g[1];
        }
        acc[0] /= nodes as f64;
        acc[1] /= nodes as f64;
        assert!((acc[0] - 50.0).abs() < 1e-2, "avg G_1 = {}", acc[0]);
        assert!((acc[1] - 15.0).abs() < 1e-2, "avg G_2 = {}", acc[1]);
    }

    #[test]
    fn period_averaged_hessian_recovers_hessian() {
        let map = demo_map();
        let spec = demo_spec();
        let t_period = common_period(&spec);
        let nodes = 20_000;
        let mut acc = Matrix::zeros(2, 2);
        for k in 0..nodes {
            let t = t_period * k as f64 / nodes as f64;
            let y = perturbed_output(&map, &spec, &[0.0, 0.0], t).unwrap();
            acc = acc.add(&estimate_hessian(&spec, t, y));
        }
        acc = acc.scale(1.0 / nodes as f64);
        assert!(acc.sub(map.hessian()).max_abs() < 1e-2, "avg H = {acc}");
    }

    #[test]
    fn averaged_estimators_consistent_at_moderate_error() {
        // Period averages: gradient -> H theta~, Hessian -> H, within 5e-2
        // relative for ||theta~|| <= 0.5.
        let map = demo_map();
        let spec = demo_spec();
        let t_period = common_period(&spec);
        let nodes = 20_000;
        let tt = [0.3, -0.4];
        let expected = map.hessian().matvec(&tt);
        let mut acc_g = [0.0; 2];
        let mut acc_h = Matrix::zeros(2, 2);
        for k in 0..nodes {
            let t = t_period * k as f64 / nodes as f64;
            let y = perturbed_output(&map, &spec, &tt, t).unwrap();
            let g = estimate_gradient(&spec, t, y);
            acc_g[0] += g[0];
            acc_g[1] += g[1];
            acc_h = acc_h.add(&estimate_hessian(&spec, t, y));
        }
        acc_g[0] /= nodes as f64;
        acc_g[1] /= nodes as f64;
        acc_h = acc_h.scale(1.0 / nodes as f64);
        let g_err = norm(&[acc_g[0] - expected[0], acc_g[1] - expected[1]]) / norm(&expected);
        let h_err = acc_h.sub(map.hessian()).frobenius_norm() / map.hessian().frobenius_norm();
        assert!(g_err < 5e-2, "gradient consistency error {g_err:.3e}");
        assert!(h_err < 5e-2, "hessian consistency error {h_err:.3e}");
    }
}
