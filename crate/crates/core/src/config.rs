//! JSON experiment configs.
//!
//! Model and grid parameters may be written as JSON numbers or as strings
//! holding an integer, a decimal or a fraction such as `"141/700"`. Both
//! forms are kept as exact rationals next to their `f64` value, so derived
//! quantities like the premium can be reported exactly.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use num_rational::Ratio;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::grid::{IntensityGrid, StateGrid, SurplusGrid};
use crate::model::{DistributionSpec, ModelParams};
use crate::solver::SolverConfig;

pub type Rational = Ratio<i128>;

/// A parameter value with its exact rational form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Exact {
    ratio: Rational,
}

impl Exact {
    pub fn from_ratio(ratio: Rational) -> Self {
        Self { ratio }
    }

    pub fn ratio(&self) -> Rational {
        self.ratio
    }

    pub fn value(&self) -> f64 {
        ratio_to_f64(self.ratio)
    }
}

impl fmt::Display for Exact {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.ratio)
    }
}

pub fn ratio_to_f64(r: Rational) -> f64 {
    // Division of the two exactly-rounded parts is within one ulp or two of
    // the true value for the small fractions configs contain.
    *r.numer() as f64 / *r.denom() as f64
}

/// Parses `"a/b"`, `"-12"` or `"0.125"` exactly.
pub fn parse_rational(text: &str) -> Result<Rational> {
    let text = text.trim();
    let bad = || Error::Config(format!("`{text}` is not an integer, decimal or fraction"));
    if let Some((num, den)) = text.split_once('/') {
        let num = i128::from_str(num.trim()).map_err(|_| bad())?;
        let den = i128::from_str(den.trim()).map_err(|_| bad())?;
        if den == 0 {
            return Err(Error::Config(format!("`{text}` has a zero denominator")));
        }
        return Ok(Rational::new(num, den));
    }
    if let Some((int, frac)) = text.split_once('.') {
        if frac.is_empty() || !frac.bytes().all(|b| b.is_ascii_digit()) || frac.len() > 30 {
            return Err(bad());
        }
        let negative = int.starts_with('-');
        let int_part = if int.is_empty() || int == "-" || int == "+" {
            0
        } else {
            i128::from_str(int).map_err(|_| bad())?
        };
        let scale = 10i128.pow(frac.len() as u32);
        let frac_part = i128::from_str(frac).map_err(|_| bad())?;
        let magnitude = int_part.abs() * scale + frac_part;
        return Ok(Rational::new(if negative { -magnitude } else { magnitude }, scale));
    }
    i128::from_str(text).map(Rational::from_integer).map_err(|_| bad())
}

fn float_to_rational(x: f64) -> Result<Rational> {
    if !x.is_finite() {
        return Err(Error::Config(format!("{x} is not a finite number")));
    }
    let shortest = format!("{x}");
    match parse_rational(&shortest) {
        Ok(r) => Ok(r),
        Err(_) => Rational::approximate_float(x).ok_or_else(|| Error::Config(format!("{x} cannot be represented"))),
    }
}

impl<'de> Deserialize<'de> for Exact {
    fn deserialize<D: Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Number(f64),
            Text(String),
        }
        let ratio = match Raw::deserialize(de)? {
            Raw::Number(x) => float_to_rational(x),
            Raw::Text(s) => parse_rational(&s),
        }
        .map_err(serde::de::Error::custom)?;
        Ok(Exact::from_ratio(ratio))
    }
}

impl Serialize for Exact {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        if *self.ratio.denom() == 1 {
            s.serialize_str(&self.ratio.numer().to_string())
        } else {
            s.serialize_str(&self.ratio.to_string())
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LawConfig {
    Exponential { rate: Exact },
    Erlang { shape: u32, rate: Exact },
    Deterministic { value: Exact },
}

impl LawConfig {
    pub fn spec(&self) -> Result<DistributionSpec> {
        match *self {
            LawConfig::Exponential { rate } => DistributionSpec::exponential(rate.value()),
            LawConfig::Erlang { shape, rate } => DistributionSpec::erlang(shape, rate.value()),
            LawConfig::Deterministic { value } => DistributionSpec::deterministic(value.value()),
        }
    }

    pub fn exact_mean(&self) -> Result<Rational> {
        let positive = |r: Rational, name: &str| {
            if r > Rational::from_integer(0) {
                Ok(r)
            } else {
                Err(Error::Config(format!("{name} must be > 0, got {r}")))
            }
        };
        match *self {
            LawConfig::Exponential { rate } => Ok(positive(rate.ratio(), "rate")?.recip()),
            LawConfig::Erlang { shape, rate } => {
                Ok(Rational::from_integer(i128::from(shape)) / positive(rate.ratio(), "rate")?)
            }
            LawConfig::Deterministic { value } => positive(value.ratio(), "value"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub lambda_floor: Exact,
    pub beta: Exact,
    pub decay: Exact,
    pub discount: Exact,
    pub loading: Exact,
    pub claim_law: LawConfig,
    pub jump_law: LawConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub delta: Exact,
    pub delta_lambda: Exact,
    pub m_max: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McSection {
    pub n_paths: usize,
    pub seed: u64,
    /// `[n, m]` cells at which the extracted strategy is simulated.
    pub probe_cells: Vec<[usize; 2]>,
    /// Simulation horizon; derived from `horizon_rel_tol` when absent.
    pub horizon: Option<f64>,
    pub horizon_rel_tol: f64,
}

impl Default for McSection {
    fn default() -> Self {
        Self {
            n_paths: 100_000,
            seed: 0,
            probe_cells: Vec::new(),
            horizon: None,
            horizon_rel_tol: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MomentsSection {
    pub times: Vec<f64>,
    pub n_paths: usize,
    /// Starting intensities; the floor and the long-run mean when empty.
    pub lambda0: Vec<Exact>,
}

impl Default for MomentsSection {
    fn default() -> Self {
        Self {
            times: vec![0.5, 1.0, 2.0, 5.0],
            n_paths: 100_000,
            lambda0: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputsSection {
    pub directory: Option<String>,
    pub formats: Vec<OutputFormat>,
}

impl Default for OutputsSection {
    fn default() -> Self {
        Self {
            directory: None,
            formats: vec![OutputFormat::Csv, OutputFormat::Json],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub name: Option<String>,
    pub model: ModelSection,
    pub grid: GridSection,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub mc: McSection,
    #[serde(default)]
    pub moments: MomentsSection,
    #[serde(default)]
    pub outputs: OutputsSection,
}

impl ExperimentConfig {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json_str(&text)
    }

    /// Checks everything that can be checked without solving.
    pub fn validate(&self) -> Result<()> {
        let params = self.params()?;
        self.solver.validate()?;
        let g = self.grid(&params)?;
        for &[n, m] in &self.mc.probe_cells {
            if n > g.surplus.n_max() || m > g.intensity.m_max() {
                return Err(Error::Config(format!(
                    "probe cell [{n}, {m}] is outside the grid (n_max {}, m_max {})",
                    g.surplus.n_max(),
                    g.intensity.m_max()
                )));
            }
        }
        if self.moments.times.iter().any(|t| !(*t >= 0.0)) {
            return Err(Error::Config("moment times must be >= 0".into()));
        }
        Ok(())
    }

    pub fn params(&self) -> Result<ModelParams> {
        let m = &self.model;
        ModelParams::new(
            m.lambda_floor.value(),
            m.beta.value(),
            m.decay.value(),
            m.discount.value(),
            m.loading.value(),
            m.claim_law.spec()?,
            m.jump_law.spec()?,
        )
        .map_err(|e| Error::Config(e.to_string()))
    }

    /// `lambda_floor + beta E(Y) / d` in exact arithmetic.
    pub fn exact_lambda_av(&self) -> Result<Rational> {
        let m = &self.model;
        if m.decay.ratio() <= Rational::from_integer(0) {
            return Err(Error::Config("decay must be > 0".into()));
        }
        Ok(m.lambda_floor.ratio() + m.beta.ratio() * m.jump_law.exact_mean()? / m.decay.ratio())
    }

    /// `(1 + loading) E(U) lambda_av` in exact arithmetic.
    pub fn exact_premium(&self) -> Result<Rational> {
        let m = &self.model;
        Ok((Rational::from_integer(1) + m.loading.ratio()) * m.claim_law.exact_mean()? * self.exact_lambda_av()?)
    }

    pub fn grid(&self, params: &ModelParams) -> Result<StateGrid> {
        let g = &self.grid;
        Ok(StateGrid::new(
            SurplusGrid::new(params.premium(), params.discount(), g.delta.value())?,
            IntensityGrid::new(params.lambda_floor(), g.delta_lambda.value(), g.m_max)?,
        ))
    }

    pub fn display_name(&self) -> &str {
        self.name.as_deref().unwrap_or("experiment")
    }

    /// Starting intensities for the moment check.
    pub fn moment_lambda0(&self, params: &ModelParams) -> Vec<f64> {
        if self.moments.lambda0.is_empty() {
            vec![params.lambda_floor(), params.lambda_av()]
        } else {
            self.moments.lambda0.iter().map(Exact::value).collect()
        }
    }
}
