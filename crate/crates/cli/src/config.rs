//! TOML configuration ingestion.
//!
//! Sections: `[map]`, `[dither]`, `[law]`, `[sim]`, plus an optional
//! `[filters]` block that is accepted for forward compatibility but unused
//! by the simulator (a note is printed when it appears).

use anyhow::{anyhow, bail, Context, Result};
use serde::Deserialize;
use uvesc_core::{
    common_period, ControllerLaw, DitherSpec, LawKind, Matrix, QuadraticMap, Rational64, SimConfig,
};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    map: MapSection,
    dither: DitherSection,
    law: LawSection,
    sim: SimSection,
    pub filters: Option<FiltersSection>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct MapSection {
    q_star: f64,
    theta_star: Vec<f64>,
    hessian: Vec<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct DitherSection {
    amplitudes: Vec<f64>,
    ratios: Vec<RatioValue>,
    base_omega: f64,
}

/// Frequency ratios are exact rationals: integers or "p/q" strings.
#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum RatioValue {
    Integer(i64),
    Fraction(String),
}

impl RatioValue {
    fn parse(&self) -> Result<Rational64> {
        match self {
            RatioValue::Integer(n) => Ok(Rational64::from_integer(*n)),
            RatioValue::Fraction(s) => {
                let (p, q) = s
                    .split_once('/')
                    .ok_or_else(|| anyhow!("ratio {s:?} is not an integer or a \"p/q\" string"))?;
                let p: i64 = p.trim().parse().with_context(|| format!("numerator of {s:?}"))?;
                let q: i64 = q.trim().parse().with_context(|| format!("denominator of {s:?}"))?;
                if q == 0 {
                    bail!("ratio {s:?} has a zero denominator");
                }
                Ok(Rational64::new(p, q))
            }
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct LawSection {
    kind: String,
    gain: Vec<Vec<f64>>,
    relay_guard: Option<f64>,
    riccati_rate: Option<f64>,
    gamma0: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SimSection {
    theta_hat0: Vec<f64>,
    t_end: f64,
    dt: Option<f64>,
    sample_every: Option<usize>,
}

/// Legacy filter knobs some configurations carry. Parsed, reported, unused.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FiltersSection {
    pub omega_l: Option<f64>,
    pub omega_h: Option<f64>,
    pub delta: Option<f64>,
}

pub struct LoadedConfig {
    pub sim: SimConfig,
    pub has_filter_params: bool,
}

pub fn load_config(path: &std::path::Path, scheme_override: Option<LawKind>) -> Result<LoadedConfig> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    let file: ConfigFile =
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
    build(file, scheme_override)
}

fn matrix(rows: &[Vec<f64>], what: &str) -> Result<Matrix> {
    Matrix::from_rows(rows).map_err(|e| anyhow!("{what}: {e}"))
}

fn build(file: ConfigFile, scheme_override: Option<LawKind>) -> Result<LoadedConfig> {
    let map = QuadraticMap::new(
        file.map.q_star,
        file.map.theta_star.clone(),
        matrix(&file.map.hessian, "map.hessian")?,
    )
    .map_err(|e| anyhow!("[map]: {e}"))?;

    let ratios = file
        .dither
        .ratios
        .iter()
        .map(RatioValue::parse)
        .collect::<Result<Vec<_>>>()?;
    let dither = DitherSpec::new(file.dither.amplitudes.clone(), ratios, file.dither.base_omega)
        .map_err(|e| anyhow!("[dither]: {e}"))?;

    let kind = match scheme_override {
        Some(k) => k,
        None => file.law.kind.parse().map_err(|e| anyhow!("[law].kind: {e}"))?,
    };
    let gain = matrix(&file.law.gain, "law.gain")?;
    let guard = file.law.relay_guard.unwrap_or(uvesc_core::DEFAULT_RELAY_GUARD);
    let gamma0 = file.law.gamma0.as_ref().map(|g| matrix(g, "law.gamma0")).transpose()?;
    let (riccati_rate, gamma0) = if kind.is_newton() {
        (file.law.riccati_rate, gamma0)
    } else {
        // A gradient override of a Newton config drops the Newton-only fields.
        (None, None)
    };
    let law = ControllerLaw::new(kind, gain, guard, riccati_rate, gamma0)
        .map_err(|e| anyhow!("[law]: {e}"))?;

    let dt = file.sim.dt.unwrap_or_else(|| common_period(&dither) / 2000.0);
    let sim = SimConfig {
        map,
        dither,
        law,
        theta_hat0: file.sim.theta_hat0.clone(),
        t_end: file.sim.t_end,
        dt,
        sample_every: file.sim.sample_every.unwrap_or(10),
    };
    sim.validate().map_err(|e| anyhow!("[sim]: {e}"))?;

    Ok(LoadedConfig { sim, has_filter_params: file.filters.is_some() })
}
