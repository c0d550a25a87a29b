//! Fixed-step integration of the full dithered loop and of the averaged
//! systems, plus the scheme comparison driver.
//!
//! The full loop has a discontinuous right-hand side (the relay), so the
//! integrator is deliberately plain forward Euler: higher-order smooth
//! schemes buy nothing across switching surfaces. Signals are evaluated at
//! the step start.

use crate::analysis::{self, detect_sliding, DecayClass, SlidingSignal};
use crate::control::{
    boundary_layer_direction, proportional_gradient, proportional_newton, uvc_gradient, uvc_newton,
};
use crate::error::{Error, Result};
use crate::estimation::riccati_rhs;
use crate::linalg::{axpy, norm, sub_vec, Matrix};
use crate::plant::evaluate_map;
use crate::signals::{common_period, demod_m, dither_s, hessian_n, validate_frequencies};
use crate::types::{ControllerLaw, LawKind, QuadraticMap, SimConfig, Trajectory};

/// Default boundary layer for the averaged systems.
pub const DEFAULT_BOUNDARY_LAYER: f64 = 1e-6;

/// Integrate the full closed loop: theta = theta^ + S(t), y = Q(theta),
/// G^ = M(t) y, dtheta^/dt = u, and for Newton laws H^ = N(t) y with the
/// Riccati filter driving Gamma.
pub fn simulate_full(config: &SimConfig) -> Result<Trajectory> {
    config.validate()?;
    let report = validate_frequencies(&config.dither);
    if !report.is_valid() {
        let detail: Vec<String> = report.violations.iter().take(4).map(|v| v.to_string()).collect();
        return Err(Error::ResonantFrequencies(detail.join("; ")));
    }
    assert_law_applicable(&config.map, &config.law)?;

    let dt = config.dt;
    let n_steps = ((config.t_end / dt) - 1e-9).ceil().max(1.0) as usize;
    let n_samples = n_steps / config.sample_every + 1;

    let newton = config.law.kind().is_newton();
    let mut theta_hat = config.theta_hat0.clone();
    let mut gamma = config.law.gamma0().cloned();
    let omega_r = config.law.riccati_rate();

    let mut traj = Trajectory {
        times: Vec::with_capacity(n_samples),
        theta: Vec::with_capacity(n_samples),
        theta_hat: Vec::with_capacity(n_samples),
        y: Vec::with_capacity(n_samples),
        g_hat: Vec::with_capacity(n_samples),
        u: Vec::with_capacity(n_samples),
        gamma: newton.then(|| Vec::with_capacity(n_samples)),
    };

    for k in 0..=n_steps {
        let t = k as f64 * dt;
        let s = dither_s(t, &config.dither);
        let mut theta = theta_hat.clone();
        axpy(&mut theta, 1.0, &s);
        let y = evaluate_map(&config.map, &theta)?;
        let g_hat: Vec<f64> = demod_m(t, &config.dither).into_iter().map(|m| m * y).collect();
        let u = apply_law(&config.law, &g_hat, gamma.as_ref());

        if !y.is_finite() || u.iter().any(|v| !v.is_finite()) {
            return Err(Error::Diverged { time: t });
        }

        if k % config.sample_every == 0 {
            traj.times.push(t);
            traj.theta.push(theta);
            traj.theta_hat.push(theta_hat.clone());
            traj.y.push(y);
            traj.g_hat.push(g_hat);
            traj.u.push(u.clone());
            if let (Some(series), Some(g)) = (traj.gamma.as_mut(), gamma.as_ref()) {
                series.push(g.clone());
            }
        }

        if k == n_steps {
            break;
        }
        axpy(&mut theta_hat, dt, &u);
        if let Some(g) = gamma.as_mut() {
            let h_est = hessian_n(t, &config.dither).scale(y);
            let rhs = riccati_rhs(g, &h_est, omega_r.expect("Newton law has a rate"))?;
            *g = g.add(&rhs.scale(dt));
            if !g.is_finite() {
                return Err(Error::Diverged { time: t + dt });
            }
        }
        if theta_hat.iter().any(|v| !v.is_finite()) {
            return Err(Error::Diverged { time: t + dt });
        }
    }

    Ok(traj)
}

/// Which averaged system to integrate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AvgKind {
    /// Gradient loop average: dtheta~/dt = K H theta~ / ||H theta~||.
    Gradient,
    /// Newton loop average with the Gamma-error flow
    /// dGamma~/dt = -w_r (Gamma~ + Gamma~ H Gamma~).
    NewtonFull,
    /// Newton average linearized at the origin: dtheta~/dt = -K theta~/||theta~||,
    /// dGamma~/dt = -w_r Gamma~.
    NewtonLinearized,
}

/// Averaged-system initial data. The boundary layer smooths the relay near
/// the sliding manifold; once the error norm falls below it, the state is
/// pinned to zero.
#[derive(Debug, Clone)]
pub struct AverageScheme {
    pub kind: AvgKind,
    pub theta_tilde0: Vec<f64>,
    pub gamma_tilde0: Option<Matrix>,
    pub boundary_layer: f64,
}

impl AverageScheme {
    pub fn gradient(theta_tilde0: Vec<f64>) -> Self {
        Self {
            kind: AvgKind::Gradient,
            theta_tilde0,
            gamma_tilde0: None,
            boundary_layer: DEFAULT_BOUNDARY_LAYER,
        }
    }

    pub fn newton_full(theta_tilde0: Vec<f64>, gamma_tilde0: Matrix) -> Self {
        Self {
            kind: AvgKind::NewtonFull,
            theta_tilde0,
            gamma_tilde0: Some(gamma_tilde0),
            boundary_layer: DEFAULT_BOUNDARY_LAYER,
        }
    }

    pub fn newton_linearized(theta_tilde0: Vec<f64>, gamma_tilde0: Matrix) -> Self {
        Self {
            kind: AvgKind::NewtonLinearized,
            theta_tilde0,
            gamma_tilde0: Some(gamma_tilde0),
            boundary_layer: DEFAULT_BOUNDARY_LAYER,
        }
    }

    pub fn with_boundary_layer(mut self, eps: f64) -> Self {
        self.boundary_layer = eps;
        self
    }

    fn validate(&self, map: &QuadraticMap, law: &ControllerLaw) -> Result<()> {
        let n = map.dim();
        if self.theta_tilde0.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: self.theta_tilde0.len() });
        }
        if law.dim() != n {
            return Err(Error::DimensionMismatch { expected: n, got: law.dim() });
        }
        let newton_scheme = matches!(self.kind, AvgKind::NewtonFull | AvgKind::NewtonLinearized);
        if newton_scheme != law.kind().is_newton() {
            return Err(Error::InvalidConfig(format!(
                "average scheme {:?} does not match law kind {}",
                self.kind,
                law.kind().label()
            )));
        }
        if newton_scheme {
            match &self.gamma_tilde0 {
                Some(g) if g.rows() == n && g.cols() == n => {}
                Some(g) => {
                    return Err(Error::DimensionMismatch { expected: n, got: g.rows() });
                }
                None => {
                    return Err(Error::InvalidConfig(
                        "Newton average schemes need an initial Gamma error".into(),
                    ))
                }
            }
        }
        if self.boundary_layer <= 0.0 || self.boundary_layer.is_nan() {
            return Err(Error::InvalidConfig("boundary layer must be positive".into()));
        }
        Ok(())
    }
}

/// Integrate an averaged closed-loop system.
///
/// The averaged vector fields scale as (1/w) in the slow time t~ = w t, so in
/// original time they are independent of the dither frequency; the output
/// trajectory is sampled in original seconds.
pub fn simulate_average(
    map: &QuadraticMap,
    law: &ControllerLaw,
    scheme: &AverageScheme,
    t_end: f64,
    dt: f64,
) -> Result<Trajectory> {
    scheme.validate(map, law)?;
    if dt <= 0.0 || dt.is_nan() || t_end < dt {
        return Err(Error::InvalidConfig("need 0 < dt <= t_end".into()));
    }
    assert_law_applicable(map, law)?;

    let n = map.dim();
    let hessian = map.hessian();
    let h_inv = map.hessian_inverse()?;
    let eps = scheme.boundary_layer;
    let uvc = law.kind().is_unit_vector();
    let gain = law.gain();
    let omega_r = law.riccati_rate().unwrap_or(0.0);
    let track_gamma = scheme.gamma_tilde0.is_some();

    let mut theta_tilde = scheme.theta_tilde0.clone();
    let mut gamma_tilde = scheme.gamma_tilde0.clone();

    let n_steps = ((t_end / dt) - 1e-9).ceil().max(1.0) as usize;
    let mut traj = Trajectory {
        times: Vec::with_capacity(n_steps + 1),
        theta: Vec::with_capacity(n_steps + 1),
        theta_hat: Vec::with_capacity(n_steps + 1),
        y: Vec::with_capacity(n_steps + 1),
        g_hat: Vec::with_capacity(n_steps + 1),
        u: Vec::with_capacity(n_steps + 1),
        gamma: track_gamma.then(|| Vec::with_capacity(n_steps + 1)),
    };

    for k in 0..=n_steps {
        let t = k as f64 * dt;

        // Relay argument per scheme.
        let relay_arg: Vec<f64> = match scheme.kind {
            AvgKind::Gradient => hessian.matvec(&theta_tilde),
            AvgKind::NewtonFull => {
                let gt = gamma_tilde.as_ref().expect("validated");
                // (I + Gamma~ H) theta~
                Matrix::identity(n).add(&gt.matmul(hessian)).matvec(&theta_tilde)
            }
            AvgKind::NewtonLinearized => theta_tilde.clone(),
        };
        let direction = if uvc {
            boundary_layer_direction(&relay_arg, eps)
        } else {
            relay_arg.clone()
        };
        let mut u = gain.matvec(&direction);
        if law.kind().is_newton() {
            for v in &mut u {
                *v = -*v;
            }
        }

        let theta_abs: Vec<f64> =
            map.theta_star().iter().zip(&theta_tilde).map(|(s, d)| s + d).collect();
        let y = evaluate_map(map, &theta_abs)?;
        let g_av = hessian.matvec(&theta_tilde);

        traj.times.push(t);
        traj.theta.push(theta_abs.clone());
        traj.theta_hat.push(theta_abs);
        traj.y.push(y);
        traj.g_hat.push(g_av);
        traj.u.push(u.clone());
        if let (Some(series), Some(gt)) = (traj.gamma.as_mut(), gamma_tilde.as_ref()) {
            series.push(h_inv.add(gt));
        }

        if k == n_steps {
            break;
        }
        axpy(&mut theta_tilde, dt, &u);
        if norm(&theta_tilde) < eps {
            theta_tilde.iter_mut().for_each(|v| *v = 0.0);
        }
        if let Some(gt) = gamma_tilde.as_mut() {
            let rhs = match scheme.kind {
                AvgKind::NewtonFull => gt.add(&gt.matmul(hessian).matmul(gt)).scale(-omega_r),
                _ => gt.scale(-omega_r),
            };
            *gt = gt.add(&rhs.scale(dt));
        }
        if theta_tilde.iter().any(|v| !v.is_finite()) {
            return Err(Error::Diverged { time: t + dt });
        }
    }

    Ok(traj)
}

fn apply_law(law: &ControllerLaw, g_hat: &[f64], gamma: Option<&Matrix>) -> Vec<f64> {
    match law.kind() {
        LawKind::GradientUvc => uvc_gradient(g_hat, law.gain(), law.relay_guard()),
        LawKind::NewtonUvc => {
            uvc_newton(g_hat, gamma.expect("Newton law has Gamma"), law.gain(), law.relay_guard())
        }
        LawKind::GradientProportional => proportional_gradient(g_hat, law.gain()),
        LawKind::NewtonProportional => {
            proportional_newton(g_hat, gamma.expect("Newton law has Gamma"), law.gain())
        }
    }
}

/// Stability precondition, checked against the ground-truth Hessian:
/// gradient laws need H K Hurwitz, Newton laws need -K Hurwitz.
pub fn assert_law_applicable(map: &QuadraticMap, law: &ControllerLaw) -> Result<()> {
    let a = if law.kind().is_newton() {
        law.gain().scale(-1.0)
    } else {
        map.hessian().matmul(law.gain())
    };
    analysis::assert_hurwitz(&a)
}

/// One comparison row produced by [`compare_schemes`].
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub label: String,
    /// Moving-RMS sliding onset of ||G^||, window = one dither period.
    pub sliding_onset: Option<f64>,
    /// Earliest time after which |y - q*| stays within the band.
    pub time_to_band: Option<f64>,
    pub final_theta_error: f64,
    pub final_y_error: f64,
    /// Decay law of the matching averaged system.
    pub decay: DecayClass,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryTable {
    pub band: f64,
    pub rows: Vec<SummaryRow>,
}

impl std::fmt::Display for SummaryTable {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(
            f,
            "{:<14} {:>12} {:>16} {:>14} {:>12} {:>18}",
            "scheme",
            "onset [s]",
            format!("|y-q*|<={} [s]", self.band),
            "final |th-*|",
            "final |y-*|",
            "averaged decay"
        )?;
        for r in &self.rows {
            let fmt_opt =
                |v: Option<f64>| v.map_or_else(|| "none".to_string(), |x| format!("{x:.1}"));
            writeln!(
                f,
                "{:<14} {:>12} {:>16} {:>14.4e} {:>12.4e} {:>18}",
                r.label,
                fmt_opt(r.sliding_onset),
                fmt_opt(r.time_to_band),
                r.final_theta_error,
                r.final_y_error,
                r.decay.label()
            )?;
        }
        Ok(())
    }
}

/// Run every configuration (all must share the map and dither bank) and
/// summarize onset, output-band entry, final residuals, and the decay class
/// of the matching averaged system. Members run on their own threads;
/// row order follows input order.
pub fn compare_schemes(configs: &[SimConfig], band: f64) -> Result<SummaryTable> {
    let first = configs
        .first()
        .ok_or_else(|| Error::InvalidConfig("compare needs at least one config".into()))?;
    for c in configs {
        if c.map != first.map || c.dither != first.dither {
            return Err(Error::InvalidConfig(
                "compared configurations must share the map and dither spec".into(),
            ));
        }
    }

    let mut results: Vec<Option<Result<SummaryRow>>> = (0..configs.len()).map(|_| None).collect();
    std::thread::scope(|scope| {
        let mut handles = Vec::new();
        for cfg in configs {
            handles.push(scope.spawn(move || summarize_one(cfg, band)));
        }
        for (slot, h) in results.iter_mut().zip(handles) {
            *slot = Some(h.join().expect("comparison worker panicked"));
        }
    });

    let rows = results
        .into_iter()
        .map(|r| r.expect("worker filled"))
        .collect::<Result<Vec<_>>>()?;
    Ok(SummaryTable { band, rows })
}

fn summarize_one(config: &SimConfig, band: f64) -> Result<SummaryRow> {
    let traj = simulate_full(config)?;
    let window = common_period(&config.dither);
    let tol = 0.05 * initial_window_rms(&traj, window);
    let sliding_onset = detect_sliding(&traj, SlidingSignal::GHat, tol, window)?;

    let q_star = config.map.q_star();
    let time_to_band = time_to_output_band(&traj, q_star, band);
    let last = traj.len() - 1;
    let final_theta_error = norm(&sub_vec(&traj.theta[last], config.map.theta_star()));
    let final_y_error = (traj.y[last] - q_star).abs();

    let theta_tilde0 = sub_vec(&config.theta_hat0, config.map.theta_star());
    let scheme = if config.law.kind().is_newton() {
        let gamma_tilde0 =
            config.law.gamma0().expect("Newton law").sub(&config.map.hessian_inverse()?);
        AverageScheme::newton_full(theta_tilde0, gamma_tilde0)
    } else {
        AverageScheme::gradient(theta_tilde0)
    };
    let avg_dt = (config.t_end / 100_000.0).min(0.01);
    let avg = simulate_average(&config.map, &config.law, &scheme, config.t_end, avg_dt)?;
    let decay = analysis::decay_classifier(&avg, SlidingSignal::ThetaTilde(config.map.theta_star()))?
        .class;

    Ok(SummaryRow {
        label: config.law.kind().label().to_string(),
        sliding_onset,
        time_to_band,
        final_theta_error,
        final_y_error,
        decay,
    })
}

/// RMS of ||G^|| over the first `window` seconds of the trajectory.
pub fn initial_window_rms(traj: &Trajectory, window: f64) -> f64 {
    let dt = traj.sample_dt();
    if dt <= 0.0 {
        return 0.0;
    }
    let m = ((window / dt).round() as usize).clamp(1, traj.len());
    let acc: f64 = traj.g_hat[..m].iter().map(|g| crate::linalg::dot(g, g)).sum();
    (acc / m as f64).sqrt()
}

/// Earliest sample time after which |y - q*| <= band holds through the end.
pub fn time_to_output_band(traj: &Trajectory, q_star: f64, band: f64) -> Option<f64> {
    let mut onset = None;
    for (t, y) in traj.times.iter().zip(&traj.y) {
        if (y - q_star).abs() <= band {
            if onset.is_none() {
                onset = Some(*t);
            }
        } else {
            onset = None;
        }
    }
    onset
}
