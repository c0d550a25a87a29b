//! Domain types shared by every module: the ground-truth map, the dither
//! spec, the controller law, and the simulation configuration/output.

use num_rational::Rational64;
use num_traits::{Signed, ToPrimitive};

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};

/// Ground-truth quadratic objective y = q* + (theta - theta*)' H (theta - theta*) / 2.
///
/// Known only to the simulator and the test oracles, never to controllers.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticMap {
    q_star: f64,
    theta_star: Vec<f64>,
    hessian: Matrix,
}

impl QuadraticMap {
    pub fn new(q_star: f64, theta_star: Vec<f64>, hessian: Matrix) -> Result<Self> {
        let n = theta_star.len();
        if hessian.rows() != n || hessian.cols() != n {
            return Err(Error::DimensionMismatch { expected: n, got: hessian.rows() });
        }
        let tol = 1e-12 * hessian.frobenius_norm().max(1.0);
        let deviation = hessian.asymmetry();
        if deviation > tol {
            return Err(Error::NotSymmetric { deviation, tolerance: tol });
        }
        // Invertibility is part of the contract: the Newton machinery and the
        // analysis bounds all need H^{-1} to exist.
        let det = linalg::determinant(&hessian);
        if det.abs() <= linalg::DEFAULT_DET_FLOOR {
            return Err(Error::Singular { det: det.abs(), floor: linalg::DEFAULT_DET_FLOOR });
        }
        Ok(Self { q_star, theta_star, hessian })
    }

    pub fn dim(&self) -> usize {
        self.theta_star.len()
    }

    pub fn q_star(&self) -> f64 {
        self.q_star
    }

    pub fn theta_star(&self) -> &[f64] {
        &self.theta_star
    }

    pub fn hessian(&self) -> &Matrix {
        &self.hessian
    }

    pub fn hessian_inverse(&self) -> Result<Matrix> {
        linalg::invert_small(&self.hessian)
    }
}

/// Sinusoidal dither bank: amplitudes a_i, rational frequency ratios w'_i and
/// the base frequency w, giving probing tones w_i = w'_i * w.
#[derive(Debug, Clone, PartialEq)]
pub struct DitherSpec {
    amplitudes: Vec<f64>,
    ratios: Vec<Rational64>,
    base_omega: f64,
}

impl DitherSpec {
    pub fn new(amplitudes: Vec<f64>, ratios: Vec<Rational64>, base_omega: f64) -> Result<Self> {
        if amplitudes.len() != ratios.len() {
            return Err(Error::DimensionMismatch { expected: amplitudes.len(), got: ratios.len() });
        }
        if amplitudes.is_empty() {
            return Err(Error::InvalidDither("at least one dither channel is required".into()));
        }
        if amplitudes.iter().any(|&a| a <= 0.0 || a.is_nan()) {
            return Err(Error::InvalidDither("amplitudes must all be positive".into()));
        }
        if base_omega <= 0.0 || !base_omega.is_finite() {
            return Err(Error::InvalidDither("base frequency must be positive".into()));
        }
        if ratios.iter().any(|r| !r.is_positive()) {
            return Err(Error::InvalidDither("frequency ratios must all be positive".into()));
        }
        for i in 0..ratios.len() {
            for j in (i + 1)..ratios.len() {
                if ratios[i] == ratios[j] {
                    return Err(Error::InvalidDither(format!(
                        "frequency ratios must be pairwise distinct; ratio {} repeats at channels {} and {}",
                        ratios[i],
                        i + 1,
                        j + 1
                    )));
                }
            }
        }
        Ok(Self { amplitudes, ratios, base_omega })
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &[f64] {
        &self.amplitudes
    }

    pub fn ratios(&self) -> &[Rational64] {
        &self.ratios
    }

    pub fn base_omega(&self) -> f64 {
        self.base_omega
    }

    /// Probing frequency of channel i in rad/s.
    pub fn omega(&self, i: usize) -> f64 {
        self.ratios[i].to_f64().expect("ratio fits in f64") * self.base_omega
    }

    pub fn omegas(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.omega(i)).collect()
    }
}

/// Which feedback law closes the loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LawKind {
    GradientUvc,
    NewtonUvc,
    GradientProportional,
    NewtonProportional,
}

impl LawKind {
    pub fn is_newton(self) -> bool {
        matches!(self, LawKind::NewtonUvc | LawKind::NewtonProportional)
    }

    pub fn is_unit_vector(self) -> bool {
        matches!(self, LawKind::GradientUvc | LawKind::NewtonUvc)
    }

    pub fn label(self) -> &'static str {
        match self {
            LawKind::GradientUvc => "gradient-uvc",
            LawKind::NewtonUvc => "newton-uvc",
            LawKind::GradientProportional => "gradient-prop",
            LawKind::NewtonProportional => "newton-prop",
        }
    }
}

impl std::str::FromStr for LawKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gradient-uvc" => Ok(LawKind::GradientUvc),
            "newton-uvc" => Ok(LawKind::NewtonUvc),
            "gradient-prop" => Ok(LawKind::GradientProportional),
            "newton-prop" => Ok(LawKind::NewtonProportional),
            other => Err(Error::InvalidLaw(format!(
                "unknown law kind {other:?}; expected one of gradient-uvc, newton-uvc, gradient-prop, newton-prop"
            ))),
        }
    }
}

/// A configured control law: the kind, its gain matrix, the relay guard, and
/// (for Newton kinds) the Riccati rate and initial inverse-Hessian estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct ControllerLaw {
    kind: LawKind,
    gain: Matrix,
    relay_guard: f64,
    riccati_rate: Option<f64>,
    gamma0: Option<Matrix>,
}

/// Guard below which the relay output rests at zero instead of normalizing.
pub const DEFAULT_RELAY_GUARD: f64 = 1e-9;

impl ControllerLaw {
    pub fn gradient_uvc(gain: Matrix, relay_guard: f64) -> Result<Self> {
        Self::new(LawKind::GradientUvc, gain, relay_guard, None, None)
    }

    pub fn newton_uvc(gain: Matrix, relay_guard: f64, riccati_rate: f64, gamma0: Matrix) -> Result<Self> {
        Self::new(LawKind::NewtonUvc, gain, relay_guard, Some(riccati_rate), Some(gamma0))
    }

    pub fn gradient_proportional(gain: Matrix) -> Result<Self> {
        Self::new(LawKind::GradientProportional, gain, DEFAULT_RELAY_GUARD, None, None)
    }

    pub fn newton_proportional(gain: Matrix, riccati_rate: f64, gamma0: Matrix) -> Result<Self> {
        Self::new(LawKind::NewtonProportional, gain, DEFAULT_RELAY_GUARD, Some(riccati_rate), Some(gamma0))
    }

    pub fn new(
        kind: LawKind,
        gain: Matrix,
        relay_guard: f64,
        riccati_rate: Option<f64>,
        gamma0: Option<Matrix>,
    ) -> Result<Self> {
        if !gain.is_square() {
            return Err(Error::InvalidLaw("gain matrix must be square".into()));
        }
        if relay_guard <= 0.0 || relay_guard.is_nan() {
            return Err(Error::InvalidLaw("relay guard must be positive".into()));
        }
        if kind.is_newton() {
            let rate = riccati_rate
                .ok_or_else(|| Error::InvalidLaw("Newton laws require a Riccati rate".into()))?;
            if rate <= 0.0 || rate.is_nan() {
                return Err(Error::InvalidLaw("Riccati rate must be positive".into()));
            }
            let g0 = gamma0
                .as_ref()
                .ok_or_else(|| Error::InvalidLaw("Newton laws require an initial Gamma".into()))?;
            if g0.rows() != gain.rows() || g0.cols() != gain.cols() {
                return Err(Error::DimensionMismatch { expected: gain.rows(), got: g0.rows() });
            }
            // Gamma = 0 is an invariant manifold of the Riccati flow from which
            // the filter can never recover, so a singular start is rejected.
            let det = linalg::determinant(g0);
            if det.abs() <= linalg::DEFAULT_DET_FLOOR {
                return Err(Error::Singular { det: det.abs(), floor: linalg::DEFAULT_DET_FLOOR });
            }
        } else if riccati_rate.is_some() || gamma0.is_some() {
            return Err(Error::InvalidLaw(
                "Riccati rate and initial Gamma only apply to Newton laws".into(),
            ));
        }
        Ok(Self { kind, gain, relay_guard, riccati_rate, gamma0 })
    }

    pub fn kind(&self) -> LawKind {
        self.kind
    }

    pub fn gain(&self) -> &Matrix {
        &self.gain
    }

    pub fn relay_guard(&self) -> f64 {
        self.relay_guard
    }

    pub fn riccati_rate(&self) -> Option<f64> {
        self.riccati_rate
    }

    pub fn gamma0(&self) -> Option<&Matrix> {
        self.gamma0.as_ref()
    }

    pub fn dim(&self) -> usize {
        self.gain.rows()
    }

    /// Same law with the gain scaled by `s`; used by the gain sweep.
    pub fn with_gain_scale(&self, s: f64) -> Self {
        let mut out = self.clone();
        out.gain = self.gain.scale(s);
        out
    }
}

/// Everything a full closed-loop run needs.
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub map: QuadraticMap,
    pub dither: DitherSpec,
    pub law: ControllerLaw,
    pub theta_hat0: Vec<f64>,
    pub t_end: f64,
    pub dt: f64,
    pub sample_every: usize,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let n = self.map.dim();
        for (name, got) in [
            ("dither", self.dither.dim()),
            ("law", self.law.dim()),
            ("theta_hat0", self.theta_hat0.len()),
        ] {
            if got != n {
                return Err(Error::InvalidConfig(format!(
                    "{name} has dimension {got} but the map has dimension {n}"
                )));
            }
        }
        if self.dt <= 0.0 || !self.dt.is_finite() {
            return Err(Error::InvalidConfig("dt must be positive".into()));
        }
        if self.t_end < self.dt {
            return Err(Error::InvalidConfig("t_end must be at least one step".into()));
        }
        let fastest = self.dither.omegas().into_iter().fold(0.0f64, f64::max);
        let shortest_period = 2.0 * std::f64::consts::PI / fastest;
        if self.dt > shortest_period / 100.0 {
            return Err(Error::InvalidConfig(format!(
                "dt = {} is too coarse: it must not exceed 1/100 of the shortest dither period {:.6}",
                self.dt, shortest_period
            )));
        }
        if self.sample_every == 0 {
            return Err(Error::InvalidConfig("sample_every must be at least 1".into()));
        }
        Ok(())
    }
}

/// Uniformly sampled closed-loop time series. `gamma` is present only for
/// Newton laws.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub theta: Vec<Vec<f64>>,
    pub theta_hat: Vec<Vec<f64>>,
    pub y: Vec<f64>,
    pub g_hat: Vec<Vec<f64>>,
    pub u: Vec<Vec<f64>>,
    pub gamma: Option<Vec<Matrix>>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.theta.first().map_or(0, Vec::len)
    }

    pub fn span(&self) -> f64 {
        match (self.times.first(), self.times.last()) {
            (Some(a), Some(b)) => b - a,
            _ => 0.0,
        }
    }

    /// Output sample spacing (the series is uniform by construction).
    pub fn sample_dt(&self) -> f64 {
        if self.times.len() < 2 {
            0.0
        } else {
            self.times[1] - self.times[0]
        }
    }

    pub fn validate(&self) -> Result<()> {
        let len = self.times.len();
        for (name, got) in [
            ("theta", self.theta.len()),
            ("theta_hat", self.theta_hat.len()),
            ("y", self.y.len()),
            ("g_hat", self.g_hat.len()),
            ("u", self.u.len()),
        ] {
            if got != len {
                return Err(Error::InvalidConfig(format!(
                    "trajectory series {name} has {got} samples, expected {len}"
                )));
            }
        }
        if let Some(g) = &self.gamma {
            if g.len() != len {
                return Err(Error::InvalidConfig(format!(
                    "trajectory series gamma has {} samples, expected {len}",
                    g.len()
                )));
            }
        }
        if len >= 2 {
            let dt = self.times[1] - self.times[0];
            for w in self.times.windows(2) {
                let step = w[1] - w[0];
                if step <= 0.0 || (step - dt).abs() > 1e-9 * dt.max(1.0) {
                    return Err(Error::InvalidConfig(
                        "trajectory times must be strictly increasing with uniform spacing".into(),
                    ));
                }
            }
        }
        Ok(())
    }
}
