//! The worked two-parameter scenario shipped with the CLI configs and used
//! throughout the acceptance suite: a quadratic bowl with q* = 100,
//! theta* = [2, 4], H = [[100, 30], [30, 20]], probed at 7 and 5 rad/s.

use num_rational::Rational64;

use crate::linalg::Matrix;
use crate::types::{ControllerLaw, DitherSpec, QuadraticMap, SimConfig};

pub fn demo_map() -> QuadraticMap {
    QuadraticMap::new(
        100.0,
        vec![2.0, 4.0],
        Matrix::from_rows(&[vec![100.0, 30.0], vec![30.0, 20.0]]).unwrap(),
    )
    .unwrap()
}

pub fn demo_dither() -> DitherSpec {
    DitherSpec::new(
        vec![0.1, 0.1],
        vec![Rational64::from_integer(70), Rational64::from_integer(50)],
        0.1,
    )
    .unwrap()
}

/// Initial estimate theta* + [2.5, 5].
pub fn demo_theta_hat0() -> Vec<f64> {
    vec![4.5, 9.0]
}

/// Default step: one two-thousandth of the common dither period.
pub fn demo_dt() -> f64 {
    crate::signals::common_period(&demo_dither()) / 2000.0
}

/// Gradient unit-vector scenario: K = diag(-0.025, -0.025).
pub fn gradient_uvc_scenario() -> SimConfig {
    SimConfig {
        map: demo_map(),
        dither: demo_dither(),
        law: ControllerLaw::gradient_uvc(Matrix::scaled_identity(2, -0.025), 1e-9).unwrap(),
        theta_hat0: demo_theta_hat0(),
        t_end: 1000.0,
        dt: demo_dt(),
        sample_every: 10,
    }
}

/// Newton unit-vector scenario: K = I, w_r = 1, Gamma(0) = 0.0025 I.
pub fn newton_uvc_scenario() -> SimConfig {
    SimConfig {
        map: demo_map(),
        dither: demo_dither(),
        law: ControllerLaw::newton_uvc(
            Matrix::identity(2),
            1e-9,
            1.0,
            Matrix::scaled_identity(2, 0.0025),
        )
        .unwrap(),
        theta_hat0: demo_theta_hat0(),
        t_end: 1000.0,
        dt: demo_dt(),
        sample_every: 10,
    }
}

/// Proportional baseline with the gradient scenario's gain.
pub fn gradient_proportional_scenario() -> SimConfig {
    let mut cfg = gradient_uvc_scenario();
    cfg.law = ControllerLaw::gradient_proportional(Matrix::scaled_identity(2, -0.025)).unwrap();
    cfg
}

/// Proportional baseline with the Newton scenario's gain.
pub fn newton_proportional_scenario() -> SimConfig {
    let mut cfg = newton_uvc_scenario();
    cfg.law = ControllerLaw::newton_proportional(
        Matrix::identity(2),
        1.0,
        Matrix::scaled_identity(2, 0.0025),
    )
    .unwrap();
    cfg
}
