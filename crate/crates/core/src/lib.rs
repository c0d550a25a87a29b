//! Multivariable extremum seeking over unknown quadratic static maps with
//! unit-vector (sliding-mode) and classical proportional control laws.
//!
//! The crate is organized around the closed loop it simulates:
//!
//! - [`signals`]: sinusoidal perturbation/demodulation banks, their common
//!   period, and the resonance conditions the frequency ratios must avoid;
//! - [`plant`]: ground-truth quadratic objective and analytic oracles;
//! - [`estimation`]: demodulation-based gradient/Hessian estimators, the
//!   Riccati inverse-Hessian filter, and exact decompositions used as test
//!   oracles;
//! - [`control`]: the unit-vector and proportional feedback laws;
//! - [`sim`]: forward-Euler integration of the full dithered loop and of the
//!   averaged systems, plus scheme comparison;
//! - [`analysis`]: Lyapunov certificates, settling/residual bounds, sliding
//!   detection, and decay classification;
//! - [`linalg`]: the small dense matrix kit everything shares.

pub mod analysis;
pub mod control;
pub mod error;
pub mod estimation;
pub mod linalg;
pub mod plant;
pub mod presets;
pub mod signals;
pub mod sim;
pub mod types;

pub use analysis::{
    decay_classifier, detect_sliding, residual_bounds, settling_bound, solve_lyapunov, BoundForm,
    DecayClass, DecayReport, LyapunovCertificate, SlidingSignal, TimeFrame,
};
pub use control::{proportional_gradient, proportional_newton, uvc_gradient, uvc_newton};
pub use error::{Error, Result};
pub use estimation::{
    estimate_gradient, estimate_hessian, gradient_decomposition, hessian_decomposition,
    riccati_rhs, GradientDecomposition, HessianDecomposition,
};
pub use linalg::{invert_small, symmetric_eigen_bounds, Matrix};
pub use plant::{evaluate_map, true_gradient};
pub use signals::{
    common_period, demod_m, dither_s, hessian_n, validate_frequencies, validate_ratios, Condition,
    FrequencyReport, Violation,
};
pub use sim::{
    compare_schemes, simulate_average, simulate_full, AverageScheme, AvgKind, SummaryRow,
    SummaryTable,
};
pub use types::{
    ControllerLaw, DitherSpec, LawKind, QuadraticMap, SimConfig, Trajectory, DEFAULT_RELAY_GUARD,
};

/// Re-exported so downstream crates spell rationals the same way.
pub use num_rational::Rational64;
