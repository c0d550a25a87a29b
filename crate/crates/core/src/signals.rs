//! Perturbation and demodulation signals, their common period, and the
//! resonance conditions the frequency ratios must avoid.
//!
//! Frequency bookkeeping (periods, resonance checks) runs in exact rational
//! arithmetic; floating point enters only at trig evaluation.

use num_integer::Integer;
use num_rational::Rational64;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::types::DitherSpec;

/// Perturbation vector S(t), component i: a_i sin(w_i t).
pub fn dither_s(t: f64, spec: &DitherSpec) -> Vec<f64> {
    (0..spec.dim())
        .map(|i| spec.amplitudes()[i] * (spec.omega(i) * t).sin())
        .collect()
}

/// Gradient demodulation vector M(t), component i: (2 / a_i) sin(w_i t).
pub fn demod_m(t: f64, spec: &DitherSpec) -> Vec<f64> {
    (0..spec.dim())
        .map(|i| 2.0 / spec.amplitudes()[i] * (spec.omega(i) * t).sin())
        .collect()
}

/// Hessian demodulation matrix N(t):
/// diagonal -(8 / a_i^2) cos(2 w_i t), off-diagonal
/// (2 / (a_i a_j)) [cos((w_i - w_j) t) - cos((w_i + w_j) t)].
pub fn hessian_n(t: f64, spec: &DitherSpec) -> Matrix {
    let n = spec.dim();
    let a = spec.amplitudes();
    let w = spec.omegas();
    let mut m = Matrix::zeros(n, n);
    for i in 0..n {
        m[(i, i)] = -8.0 / (a[i] * a[i]) * (2.0 * w[i] * t).cos();
        for j in (i + 1)..n {
            let v = 2.0 / (a[i] * a[j]) * (((w[i] - w[j]) * t).cos() - ((w[i] + w[j]) * t).cos());
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    m
}

/// Common period T of every probing tone and of every sum/difference
/// combination of two tones.
///
/// With w'_i = p_i / q_i in lowest terms and D = lcm(q_i), each tone is an
/// integer multiple P_i = p_i D / q_i of the base rational w / D, so
/// T = (2 pi / w) * D / gcd(P_1, ..., P_n).
pub fn common_period(spec: &DitherSpec) -> f64 {
    let tau = slow_period_factor(spec.ratios()).expect("spec ratios are validated positive");
    2.0 * std::f64::consts::PI / spec.base_omega() * ratio_to_f64(tau)
}

/// The exact rational tau such that T = 2 pi tau / w.
pub fn slow_period_factor(ratios: &[Rational64]) -> Result<Rational64> {
    if ratios.is_empty() {
        return Err(Error::InvalidDither("at least one ratio is required".into()));
    }
    if ratios.iter().any(|r| *r.numer() <= 0 || *r.denom() <= 0) {
        return Err(Error::InvalidDither("ratios must be positive".into()));
    }
    let mut denom_lcm: i64 = 1;
    for r in ratios {
        denom_lcm = denom_lcm.lcm(r.denom());
    }
    let mut numer_gcd: i64 = 0;
    for r in ratios {
        let scaled = r.numer() * (denom_lcm / r.denom());
        numer_gcd = numer_gcd.gcd(&scaled);
    }
    Ok(Rational64::new(denom_lcm, numer_gcd))
}

fn ratio_to_f64(r: Rational64) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

/// Which resonance condition a frequency ratio violates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Condition {
    /// w'_i = w'_j for some j != i.
    Equal { j: usize },
    /// w'_i = (w'_j + w'_k) / 2, excluding the identity j = k = i.
    HalfSum { j: usize, k: usize },
    /// w'_i = w'_j + 2 w'_k.
    PlusTwice { j: usize, k: usize },
    /// w'_i = w'_k + w'_l or w'_i = w'_k - w'_l.
    SumDiff { k: usize, l: usize, minus: bool },
}

impl Condition {
    pub fn tag(&self) -> &'static str {
        match self {
            Condition::Equal { .. } => "equal",
            Condition::HalfSum { .. } => "half_sum",
            Condition::PlusTwice { .. } => "plus_twice",
            Condition::SumDiff { .. } => "sum_diff",
        }
    }
}

impl std::fmt::Display for Condition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match *self {
            Condition::Equal { j } => write!(f, "equal (j = {})", j + 1),
            Condition::HalfSum { j, k } => write!(f, "half_sum (j = {}, k = {})", j + 1, k + 1),
            Condition::PlusTwice { j, k } => write!(f, "plus_twice (j = {}, k = {})", j + 1, k + 1),
            Condition::SumDiff { k, l, minus } => write!(
                f,
                "sum_diff (k = {}, l = {}, {})",
                k + 1,
                l + 1,
                if minus { "difference" } else { "sum" }
            ),
        }
    }
}

/// One violated resonance condition: the offending channel plus witnesses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Violation {
    pub index: usize,
    pub condition: Condition,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "ratio {} violates {}", self.index + 1, self.condition)
    }
}

/// Result of the exhaustive resonance check over all index tuples.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct FrequencyReport {
    pub violations: Vec<Violation>,
}

impl FrequencyReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

pub fn validate_frequencies(spec: &DitherSpec) -> FrequencyReport {
    validate_ratios(spec.ratios())
}

/// Exhaustive enumeration of the resonance conditions in exact rational
/// arithmetic.
///
/// Index tuples that make a condition an algebraic identity are skipped:
/// only j = k = i for the half-sum (the remaining "degenerate" tuples of the
/// other conditions reduce to a ratio being zero and can never fire for
/// positive ratios).
#[allow(clippy::needless_range_loop)] // index tuples are the subject here
pub fn validate_ratios(ratios: &[Rational64]) -> FrequencyReport {
    let n = ratios.len();
    let two = Rational64::from_integer(2);
    let mut violations = Vec::new();
    for i in 0..n {
        let wi = ratios[i];
        for j in 0..n {
            if j != i && wi == ratios[j] {
                violations.push(Violation { index: i, condition: Condition::Equal { j } });
            }
        }
        for j in 0..n {
            for k in 0..n {
                if j == i && k == i {
                    continue;
                }
                if two * wi == ratios[j] + ratios[k] {
                    violations.push(Violation { index: i, condition: Condition::HalfSum { j, k } });
                }
            }
        }
        for j in 0..n {
            for k in 0..n {
                if wi == ratios[j] + two * ratios[k] {
                    violations
                        .push(Violation { index: i, condition: Condition::PlusTwice { j, k } });
                }
            }
        }
        for k in 0..n {
            for l in 0..n {
                if wi == ratios[k] + ratios[l] {
                    violations.push(Violation {
                        index: i,
                        condition: Condition::SumDiff { k, l, minus: false },
                    });
                }
                if wi == ratios[k] - ratios[l] {
                    violations.push(Violation {
                        index: i,
                        condition: Condition::SumDiff { k, l, minus: true },
                    });
                }
            }
        }
    }
    FrequencyReport { violations }
}
