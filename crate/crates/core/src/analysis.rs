//! Lyapunov certificates, settling-time and residual bounds, sliding-onset
//! detection, and decay-law classification.

use crate::error::{Error, Result};
use crate::linalg::{self, norm, sub_vec, Matrix};
use crate::signals::{common_period, dither_s};
use crate::types::{DitherSpec, QuadraticMap, Trajectory};

/// Certificate for A' P + P A = -Q with P symmetric positive definite.
#[derive(Debug, Clone)]
pub struct LyapunovCertificate {
    pub a_matrix: Matrix,
    pub q_matrix: Matrix,
    pub p_matrix: Matrix,
    pub lambda_min_p: f64,
    pub lambda_max_p: f64,
    pub lambda_min_q: f64,
    pub lambda_max_q: f64,
}

/// Relative residual allowed on the certificate equation.
pub const LYAPUNOV_RESIDUAL_LIMIT: f64 = 1e-10;

/// Solve A' P + P A = -Q by vectorizing to an n^2 x n^2 linear system.
///
/// Success doubles as the crate's Hurwitz test: the solve only yields a
/// symmetric positive-definite P when every eigenvalue of A has a negative
/// real part.
pub fn solve_lyapunov(a_matrix: &Matrix, q_matrix: &Matrix) -> Result<LyapunovCertificate> {
    if !a_matrix.is_square() {
        return Err(Error::DimensionMismatch { expected: a_matrix.rows(), got: a_matrix.cols() });
    }
    let n = a_matrix.rows();
    if q_matrix.rows() != n || q_matrix.cols() != n {
        return Err(Error::DimensionMismatch { expected: n, got: q_matrix.rows() });
    }
    let (lambda_min_q, lambda_max_q) = linalg::symmetric_eigen_bounds(q_matrix)?;
    if lambda_min_q <= 0.0 {
        return Err(Error::InvalidConfig("Q must be symmetric positive definite".into()));
    }

    // Row-major vectorization: vec(A'P) = (A' (x) I) vec(P),
    // vec(P A) = (I (x) A') vec(P).
    let at = a_matrix.transpose();
    let eye = Matrix::identity(n);
    let system = at.kron(&eye).add(&eye.kron(&at));
    let rhs: Vec<f64> = q_matrix.as_slice().iter().map(|v| -v).collect();

    // A Hurwitz matrix cannot have eigenvalue pairs summing to zero, so the
    // vectorized system being singular already rules Hurwitz out.
    let p_flat = linalg::solve(&system, &rhs, 1e-300).map_err(|e| match e {
        Error::Singular { .. } => Error::NotHurwitz,
        other => other,
    })?;
    let p_matrix = Matrix::from_flat(n, &p_flat)?.symmetrized();

    let residual = at
        .matmul(&p_matrix)
        .add(&p_matrix.matmul(a_matrix))
        .add(q_matrix)
        .frobenius_norm();
    let limit = LYAPUNOV_RESIDUAL_LIMIT * q_matrix.frobenius_norm();
    if !residual.is_finite() || residual > limit {
        return Err(Error::LyapunovResidual { residual, limit });
    }

    let (lambda_min_p, lambda_max_p) = linalg::symmetric_eigen_bounds(&p_matrix)?;
    if lambda_min_p <= 0.0 {
        return Err(Error::NotHurwitz);
    }

    Ok(LyapunovCertificate {
        a_matrix: a_matrix.clone(),
        q_matrix: q_matrix.clone(),
        p_matrix,
        lambda_min_p,
        lambda_max_p,
        lambda_min_q,
        lambda_max_q,
    })
}

/// Hurwitz test: succeeds iff the Lyapunov solve with Q = I yields an SPD P.
pub fn assert_hurwitz(a_matrix: &Matrix) -> Result<()> {
    solve_lyapunov(a_matrix, &Matrix::identity(a_matrix.rows())).map(drop)
}

/// Which law family's settling expression to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundForm {
    /// Gradient loop: the original-time expression carries ||H||.
    Gradient,
    /// Newton loop: curvature-free expression.
    Newton,
}

/// Time frame of the reported bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimeFrame {
    /// Slow time t~ = w t: bound = 2 w lmax(P)/lmin(Q) * ||x(0)||.
    SlowTime,
    /// Original seconds: bound = 2 lmax(P)/lmin(Q) * [||H||] * ||x(0)||.
    OriginalTime,
}

/// Upper end of the settling interval certified by `cert`.
///
/// `initial_norm` is ||G^_av(0)|| for the gradient form in slow time and
/// ||theta(0) - theta*|| otherwise. The gradient original-time form needs
/// `h_norm` = ||H||; the Newton forms ignore it.
pub fn settling_bound(
    cert: &LyapunovCertificate,
    form: BoundForm,
    initial_norm: f64,
    omega: f64,
    frame: TimeFrame,
    h_norm: Option<f64>,
) -> Result<f64> {
    if initial_norm < 0.0 {
        return Err(Error::InvalidConfig("initial norm must be nonnegative".into()));
    }
    let base = 2.0 * cert.lambda_max_p / cert.lambda_min_q * initial_norm;
    match frame {
        TimeFrame::SlowTime => Ok(omega * base),
        TimeFrame::OriginalTime => match form {
            BoundForm::Gradient => {
                let h = h_norm.ok_or(Error::MissingHessianNorm)?;
                Ok(base * h)
            }
            BoundForm::Newton => Ok(base),
        },
    }
}

/// Signal whose norm the sliding detector and decay classifier track.
#[derive(Debug, Clone, Copy)]
pub enum SlidingSignal<'a> {
    /// ||G^(t)||.
    GHat,
    /// |G^_i(t)| for one channel (per-component onset reporting).
    GHatComponent(usize),
    /// ||theta^(t) - theta*|| for the supplied optimizer.
    ThetaTilde(&'a [f64]),
}

fn norm_series(traj: &Trajectory, signal: SlidingSignal<'_>) -> Vec<f64> {
    match signal {
        SlidingSignal::GHat => traj.g_hat.iter().map(|g| norm(g)).collect(),
        SlidingSignal::GHatComponent(i) => traj.g_hat.iter().map(|g| g[i].abs()).collect(),
        SlidingSignal::ThetaTilde(star) => {
            traj.theta_hat.iter().map(|th| norm(&sub_vec(th, star))).collect()
        }
    }
}

/// Earliest time from which the moving RMS of the signal norm over
/// `[t, t + window]` stays at or below `tol` through the end of the
/// trajectory; `None` if that never happens.
pub fn detect_sliding(
    traj: &Trajectory,
    signal: SlidingSignal<'_>,
    tol: f64,
    window: f64,
) -> Result<Option<f64>> {
    let span = traj.span();
    if window > span || traj.len() < 2 {
        return Err(Error::WindowTooLong { window, span });
    }
    let dt = traj.sample_dt();
    let m = ((window / dt).round() as usize).max(1);
    let series = norm_series(traj, signal);
    let squares: Vec<f64> = series.iter().map(|v| v * v).collect();

    // Prefix sums give each window's RMS in O(1).
    let mut prefix = Vec::with_capacity(squares.len() + 1);
    prefix.push(0.0);
    for s in &squares {
        prefix.push(prefix.last().unwrap() + s);
    }
    let last_start = series.len() - 1 - m.min(series.len() - 1);
    let rms_at = |idx: usize| {
        let hi = (idx + m + 1).min(series.len());
        ((prefix[hi] - prefix[idx]) / (hi - idx) as f64).sqrt()
    };

    // Walk backwards: the onset is just after the last window above tol.
    let mut onset_idx = None;
    for idx in (0..=last_start).rev() {
        if rms_at(idx) <= tol {
            onset_idx = Some(idx);
        } else {
            break;
        }
    }
    Ok(onset_idx.map(|i| traj.times[i]))
}

/// Decay law of a norm trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecayClass {
    FiniteTimeLinear,
    Exponential,
    Inconclusive,
}

impl DecayClass {
    pub fn label(self) -> &'static str {
        match self {
            DecayClass::FiniteTimeLinear => "finite-time linear",
            DecayClass::Exponential => "exponential",
            DecayClass::Inconclusive => "inconclusive",
        }
    }
}

/// Fit diagnostics accompanying a classification.
#[derive(Debug, Clone)]
pub struct DecayReport {
    pub class: DecayClass,
    /// Least-squares residual of n(t) ~ a - b t on the fitted segment.
    pub linear_rss: f64,
    /// Residual of n(t) ~ c exp(-l t), fitted in log space, evaluated in
    /// the original space.
    pub exponential_rss: f64,
    pub linear_coeffs: (f64, f64),
    pub exponential_coeffs: (f64, f64),
    /// Sample range the fits used.
    pub segment: (usize, usize),
}

/// Dominance factor one model's residual must win by.
const DECAY_DOMINANCE: f64 = 2.0;

/// Classify the decay of the chosen signal by fitting a linear ramp and an
/// exponential to the decaying segment and comparing residuals. The segment
/// runs from the start until the norm first falls below 5% of its initial
/// value; it must cover at least a decade of decay to be conclusive.
pub fn decay_classifier(traj: &Trajectory, signal: SlidingSignal<'_>) -> Result<DecayReport> {
    let series = norm_series(traj, signal);
    if series.len() < 8 {
        return Err(Error::DegenerateTrajectory("too few samples to classify".into()));
    }
    let n0 = series[0];
    let floor = n0 * 0.05;
    let mut end = series.len();
    for (i, v) in series.iter().enumerate() {
        if *v < floor {
            end = i;
            break;
        }
    }
    let end = end.max(8.min(series.len()));
    let seg = &series[..end];
    let times = &traj.times[..end];

    let min_seg = seg.iter().cloned().fold(f64::INFINITY, f64::min);
    let inconclusive = |lin: f64, exp_: f64, lc, ec| DecayReport {
        class: DecayClass::Inconclusive,
        linear_rss: lin,
        exponential_rss: exp_,
        linear_coeffs: lc,
        exponential_coeffs: ec,
        segment: (0, end),
    };

    // Degenerate or non-decaying signals cannot be classified.
    if n0 <= 0.0 || min_seg > n0 * 0.9 {
        return Ok(inconclusive(0.0, 0.0, (n0, 0.0), (n0.max(1e-300), 0.0)));
    }
    // Need a decade of decay somewhere in the trajectory.
    let global_min = series.iter().cloned().fold(f64::INFINITY, f64::min);
    if global_min > n0 * 0.1 {
        return Ok(inconclusive(0.0, 0.0, (n0, 0.0), (n0, 0.0)));
    }

    let (a_lin, b_lin) = least_squares_line(times, seg);
    let linear_rss: f64 =
        times.iter().zip(seg).map(|(t, v)| (a_lin - b_lin * t - v).powi(2)).sum();

    let logs: Vec<f64> = seg.iter().map(|v| v.max(1e-300).ln()).collect();
    let (log_c, lambda) = least_squares_line(times, &logs);
    let c = log_c.exp();
    let exponential_rss: f64 =
        times.iter().zip(seg).map(|(t, v)| (c * (-lambda * t).exp() - v).powi(2)).sum();

    let class = if linear_rss * DECAY_DOMINANCE <= exponential_rss {
        DecayClass::FiniteTimeLinear
    } else if exponential_rss * DECAY_DOMINANCE <= linear_rss {
        DecayClass::Exponential
    } else {
        DecayClass::Inconclusive
    };

    Ok(DecayReport {
        class,
        linear_rss,
        exponential_rss,
        linear_coeffs: (a_lin, b_lin),
        exponential_coeffs: (c, lambda),
        segment: (0, end),
    })
}

/// Fit v ~ a - b t, returning (a, b).
fn least_squares_line(t: &[f64], v: &[f64]) -> (f64, f64) {
    let n = t.len() as f64;
    let mean_t = t.iter().sum::<f64>() / n;
    let mean_v = v.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut var = 0.0;
    for (ti, vi) in t.iter().zip(v) {
        cov += (ti - mean_t) * (vi - mean_v);
        var += (ti - mean_t) * (ti - mean_t);
    }
    if var == 0.0 {
        return (mean_v, 0.0);
    }
    let slope = cov / var;
    (mean_v - slope * mean_t, -slope)
}

/// Closed-form dither-driven components of the ultimate residuals:
/// theta residual ||a||, output residual max over one period of
/// S(t)' H S(t) / 2 (dense sampling).
pub fn residual_bounds(map: &QuadraticMap, spec: &DitherSpec) -> (f64, f64) {
    let theta_residual = norm(spec.amplitudes());
    let t_period = common_period(spec);
    let nodes = 200_000;
    let mut peak = 0.0f64;
    for k in 0..=nodes {
        let t = t_period * k as f64 / nodes as f64;
        let s = dither_s(t, spec);
        let v = 0.5 * linalg::dot(&s, &map.hessian().matvec(&s));
        peak = peak.max(v.abs());
    }
    (theta_residual, peak)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::DitherSpec;
    use num_rational::Rational64;

    fn ratio(n: i64) -> Rational64 {
        Rational64::from_integer(n)
    }

    fn demo_hessian() -> Matrix {
        Matrix::from_rows(&[vec![100.0, 30.0], vec![30.0, 20.0]]).unwrap()
    }

    fn synthetic_trajectory(times: Vec<f64>, norms: Vec<f64>) -> Trajectory {
        // Encode the scalar norm in the first component of g_hat/theta_hat.
        let n = times.len();
        Trajectory {
            times,
            theta: vec![vec![0.0]; n],
            theta_hat: norms.iter().map(|v| vec![*v]).collect(),
            y: vec![0.0; n],
            g_hat: norms.iter().map(|v| vec![*v]).collect(),
            u: vec![vec![0.0]; n],
            gamma: None,
        }
    }

    #[test]
    fn lyapunov_negative_identity() {
        let cert = solve_lyapunov(&Matrix::scaled_identity(2, -1.0), &Matrix::scaled_identity(2, 2.0))
            .unwrap();
        assert!(cert.p_matrix.sub(&Matrix::identity(2)).max_abs() < 1e-12);
    }

    #[test]
    fn lyapunov_minus_unit_gain() {
        let cert = solve_lyapunov(&Matrix::scaled_identity(2, -1.0), &Matrix::identity(2)).unwrap();
        assert!(cert.p_matrix.sub(&Matrix::scaled_identity(2, 0.5)).max_abs() < 1e-12);
        assert!((cert.lambda_max_p - 0.5).abs() < 1e-12);
    }

    #[test]
    fn lyapunov_demo_gradient_loop() {
        // A = -0.025 H with Q = I has the closed form P = 20 H^{-1}.
        let a = demo_hessian().scale(-0.025);
        let cert = solve_lyapunov(&a, &Matrix::identity(2)).unwrap();
        let expected = linalg::invert_small(&demo_hessian()).unwrap().scale(20.0);
        assert!(cert.p_matrix.sub(&expected).max_abs() < 1e-9);
        let residual = a
            .transpose()
            .matmul(&cert.p_matrix)
            .add(&cert.p_matrix.matmul(&a))
            .add(&Matrix::identity(2))
            .frobenius_norm();
        assert!(residual <= 1e-10 * 2.0f64.sqrt());
        // lambda(P) = 20/110 and 20/10
        assert!((cert.lambda_min_p - 20.0 / 110.0).abs() < 1e-9);
        assert!((cert.lambda_max_p - 2.0).abs() < 1e-9);
    }

    #[test]
    fn lyapunov_rejects_non_hurwitz() {
        assert!(matches!(
            solve_lyapunov(&Matrix::identity(2), &Matrix::identity(2)),
            Err(Error::NotHurwitz)
        ));
        // Skew matrix: purely imaginary eigenvalues make the vectorized
        // system singular.
        let skew = Matrix::from_rows(&[vec![0.0, 1.0], vec![-1.0, 0.0]]).unwrap();
        assert!(solve_lyapunov(&skew, &Matrix::identity(2)).is_err());
    }

    #[test]
    fn lyapunov_rejects_indefinite_q() {
        let a = Matrix::scaled_identity(2, -1.0);
        assert!(solve_lyapunov(&a, &Matrix::diagonal(&[1.0, -1.0])).is_err());
    }

    #[test]
    fn settling_bound_plugin_values() {
        let cert = solve_lyapunov(&Matrix::scaled_identity(2, -0.5), &Matrix::identity(2)).unwrap();
        // P = I: slow-time bound with w = 1 and unit initial norm is 2.
        let b = settling_bound(&cert, BoundForm::Gradient, 1.0, 1.0, TimeFrame::SlowTime, None)
            .unwrap();
        assert!((b - 2.0).abs() < 1e-12);
        // lambda_min(Q) sits in the denominator: doubling Q with P held
        // fixed (A = -I, Q = 2I also solves to P = I) halves the bound.
        let cert2 =
            solve_lyapunov(&Matrix::scaled_identity(2, -1.0), &Matrix::scaled_identity(2, 2.0))
                .unwrap();
        assert!(cert2.p_matrix.sub(&Matrix::identity(2)).max_abs() < 1e-12);
        let b2 = settling_bound(&cert2, BoundForm::Gradient, 1.0, 1.0, TimeFrame::SlowTime, None)
            .unwrap();
        assert!((b2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn settling_bound_newton_plugin() {
        // P = I/2, Q = I, ||theta(0) - theta*|| = 1.118: bound = 1.118.
        let cert = solve_lyapunov(&Matrix::scaled_identity(2, -1.0), &Matrix::identity(2)).unwrap();
        let n0 = (0.5f64 * 0.5 + 1.0).sqrt();
        let b =
            settling_bound(&cert, BoundForm::Newton, n0, 0.1, TimeFrame::OriginalTime, None).unwrap();
        assert!((b - n0).abs() < 1e-12);
    }

    #[test]
    fn settling_bound_requires_h_norm() {
        let cert = solve_lyapunov(&Matrix::scaled_identity(2, -1.0), &Matrix::identity(2)).unwrap();
        assert!(matches!(
            settling_bound(&cert, BoundForm::Gradient, 1.0, 0.1, TimeFrame::OriginalTime, None),
            Err(Error::MissingHessianNorm)
        ));
        assert!(settling_bound(
            &cert,
            BoundForm::Gradient,
            1.0,
            0.1,
            TimeFrame::OriginalTime,
            Some(110.0)
        )
        .is_ok());
    }

    #[test]
    fn detect_sliding_zero_signal() {
        let times: Vec<f64> = (0..100).map(|k| k as f64).collect();
        let traj = synthetic_trajectory(times, vec![0.0; 100]);
        let onset = detect_sliding(&traj, SlidingSignal::GHat, 0.01, 10.0).unwrap();
        assert_eq!(onset, Some(0.0));
    }

    #[test]
    fn detect_sliding_ramp() {
        // ||s(t)|| = max(1 - t/600, 0), tol = 0.01, window = 10 s. The RMS of
        // the ramp tail first stays under tol at t ~ 589.74 (solving
        // (v^2 + v v' + v'^2)/3 = tol^2 for the window endpoints).
        let dt = 0.125;
        let times: Vec<f64> = (0..(700.0 / dt) as usize).map(|k| k as f64 * dt).collect();
        let norms: Vec<f64> = times.iter().map(|t| (1.0 - t / 600.0).max(0.0)).collect();
        let traj = synthetic_trajectory(times, norms);
        let onset = detect_sliding(&traj, SlidingSignal::GHat, 0.01, 10.0).unwrap().unwrap();
        assert!((onset - 589.74).abs() < 1.0, "onset = {onset}");
    }

    #[test]
    fn detect_sliding_per_component() {
        // Channel 1 settles at 40 s, channel 2 at 70 s; the detector sees
        // each channel on its own.
        let dt = 0.5;
        let times: Vec<f64> = (0..240).map(|k| k as f64 * dt).collect();
        let n = times.len();
        let g_hat: Vec<Vec<f64>> = times
            .iter()
            .map(|t| vec![(1.0 - t / 40.0).max(0.0), (1.0 - t / 70.0).max(0.0)])
            .collect();
        let traj = Trajectory {
            times,
            theta: vec![vec![0.0, 0.0]; n],
            theta_hat: vec![vec![0.0, 0.0]; n],
            y: vec![0.0; n],
            g_hat,
            u: vec![vec![0.0, 0.0]; n],
            gamma: None,
        };
        let a = detect_sliding(&traj, SlidingSignal::GHatComponent(0), 1e-6, 5.0)
            .unwrap()
            .unwrap();
        let b = detect_sliding(&traj, SlidingSignal::GHatComponent(1), 1e-6, 5.0)
            .unwrap()
            .unwrap();
        assert!((a - 40.0).abs() <= 1.0, "channel 1 onset {a}");
        assert!((b - 70.0).abs() <= 1.0, "channel 2 onset {b}");
    }

    #[test]
    fn detect_sliding_never() {
        let times: Vec<f64> = (0..100).map(|k| k as f64).collect();
        let traj = synthetic_trajectory(times, vec![1.0; 100]);
        let onset = detect_sliding(&traj, SlidingSignal::GHat, 0.01, 10.0).unwrap();
        assert_eq!(onset, None);
    }

    #[test]
    fn detect_sliding_rejects_long_window() {
        let times: Vec<f64> = (0..10).map(|k| k as f64).collect();
        let traj = synthetic_trajectory(times, vec![0.0; 10]);
        assert!(matches!(
            detect_sliding(&traj, SlidingSignal::GHat, 0.01, 100.0),
            Err(Error::WindowTooLong { .. })
        ));
    }

    #[test]
    fn classifier_on_exact_ramp() {
        let dt = 0.1;
        let times: Vec<f64> = (0..=900).map(|k| k as f64 * dt).collect();
        let norms: Vec<f64> = times.iter().map(|t| 1.0 - t / 100.0).collect();
        let traj = synthetic_trajectory(times, norms);
        let report = decay_classifier(&traj, SlidingSignal::GHat).unwrap();
        assert_eq!(report.class, DecayClass::FiniteTimeLinear);
    }

    #[test]
    fn classifier_on_exact_exponential() {
        let dt = 0.25;
        let times: Vec<f64> = (0..=1000).map(|k| k as f64 * dt).collect();
        let norms: Vec<f64> = times.iter().map(|t| (-t / 50.0).exp()).collect();
        let traj = synthetic_trajectory(times, norms);
        let report = decay_classifier(&traj, SlidingSignal::GHat).unwrap();
        assert_eq!(report.class, DecayClass::Exponential);
    }

    #[test]
    fn classifier_on_constant_is_inconclusive() {
        let times: Vec<f64> = (0..200).map(|k| k as f64).collect();
        let traj = synthetic_trajectory(times, vec![1.0; 200]);
        let report = decay_classifier(&traj, SlidingSignal::GHat).unwrap();
        assert_eq!(report.class, DecayClass::Inconclusive);
    }

    #[test]
    fn residual_bounds_demo_values() {
        let map = QuadraticMap::new(100.0, vec![2.0, 4.0], demo_hessian()).unwrap();
        let spec = DitherSpec::new(vec![0.1, 0.1], vec![ratio(70), ratio(50)], 0.1).unwrap();
        let (theta_res, y_res) = residual_bounds(&map, &spec);
        assert!((theta_res - 0.02f64.sqrt()).abs() < 1e-12); // ||a|| = 0.1414
        // Dense sampling of S' H S / 2 over one period peaks at ~0.8589, and
        // can never exceed the Rayleigh bound lambda_max ||a||^2 / 2 = 1.1.
        assert!((y_res - 0.8589).abs() < 2e-3, "y ripple peak = {y_res}");
        assert!(y_res <= 1.1);
    }

    #[test]
    fn residual_bounds_vanish_with_amplitude() {
        let map = QuadraticMap::new(100.0, vec![2.0, 4.0], demo_hessian()).unwrap();
        let spec = DitherSpec::new(vec![1e-6, 1e-6], vec![ratio(70), ratio(50)], 0.1).unwrap();
        let (theta_res, y_res) = residual_bounds(&map, &spec);
        assert!(theta_res < 1e-5);
        assert!(y_res < 1e-10);
    }
}
