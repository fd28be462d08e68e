//! Scenario configuration files (TOML).
//!
//! Every section rejects unknown keys, so a misspelt parameter is an error
//! rather than a silently ignored default.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use phenolag::analysis::ClassifyOptions;
use phenolag::rng::derive_seed;
use phenolag::{
    Family, FixationModel, MomentFunctionals, MutationMeasure, Scenario, SpeedModel, SupportSign,
    TruncationPolicy,
};
use serde::de::{self, Deserializer, SeqAccess, Visitor};
use serde::{Deserialize, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {}: {source}", path.display())]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{}: {message}", path.display())]
    Parse { path: PathBuf, message: String },
    #[error("invalid value for `{key}`: {message}")]
    Invalid { key: String, message: String },
}

impl ConfigError {
    fn invalid(key: &str, message: impl fmt::Display) -> Self {
        ConfigError::Invalid {
            key: key.to_string(),
            message: message.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub scenario: ScenarioSpec,
    #[serde(default)]
    pub run: RunSpec,
    #[serde(default)]
    pub outputs: OutputSpec,
    #[serde(default)]
    pub analysis: AnalysisSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub x0: f64,
    pub horizon: f64,
    pub grid_step: f64,
    /// Small-jump cutoff, or `"auto"` for the largest cutoff within the bias threshold.
    #[serde(default)]
    pub epsilon: Epsilon,
    /// Bias threshold for `epsilon = "auto"`; derived from `m` and the speed when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub auto_threshold: Option<f64>,
    pub measure: MeasureSpec,
    pub fixation: FixationModel,
    pub speed: SpeedModel,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Epsilon {
    #[default]
    Auto,
    Fixed(f64),
}

impl Serialize for Epsilon {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Epsilon::Auto => s.serialize_str("auto"),
            Epsilon::Fixed(e) => s.serialize_f64(*e),
        }
    }
}

impl<'de> Deserialize<'de> for Epsilon {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct V;
        impl Visitor<'_> for V {
            type Value = Epsilon;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a non-negative number or \"auto\"")
            }
            fn visit_f64<E: de::Error>(self, v: f64) -> Result<Epsilon, E> {
                Ok(Epsilon::Fixed(v))
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> Result<Epsilon, E> {
                Ok(Epsilon::Fixed(v as f64))
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> Result<Epsilon, E> {
                Ok(Epsilon::Fixed(v as f64))
            }
            fn visit_str<E: de::Error>(self, v: &str) -> Result<Epsilon, E> {
                match v {
                    "auto" => Ok(Epsilon::Auto),
                    other => Err(E::invalid_value(de::Unexpected::Str(other), &self)),
                }
            }
        }
        d.deserialize_any(V)
    }
}

/// A measure family with its parameters, plus an optional `support` key.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasureSpec {
    pub family: Family,
    pub support: SupportSign,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SupportOnly {
    #[serde(default)]
    support: SupportSign,
}

impl Serialize for MeasureSpec {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut table = toml::Table::try_from(&self.family).map_err(serde::ser::Error::custom)?;
        if self.support != SupportSign::default() {
            let support = toml::Value::try_from(self.support).map_err(serde::ser::Error::custom)?;
            table.insert("support".into(), support);
        }
        table.serialize(s)
    }
}

impl<'de> Deserialize<'de> for MeasureSpec {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let mut table = toml::Table::deserialize(d)?;
        let support = match table.remove("support") {
            Some(v) => {
                let mut t = toml::Table::new();
                t.insert("support".into(), v);
                t.try_into::<SupportOnly>()
                    .map_err(de::Error::custom)?
                    .support
            }
            None => SupportSign::default(),
        };
        let family = table.try_into::<Family>().map_err(de::Error::custom)?;
        Ok(MeasureSpec { family, support })
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSpec {
    #[serde(default)]
    pub seeds: Seeds,
    #[serde(default)]
    pub master_seed: u64,
    /// Worker threads; 0 uses every available core.
    #[serde(default)]
    pub workers: usize,
    /// Cap on proposals per path; the simulator default when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub event_cap: Option<u64>,
}

/// Either a number of seeds derived from `master_seed`, or the seeds themselves.
#[derive(Debug, Clone, PartialEq)]
pub enum Seeds {
    Count(u64),
    List(Vec<u64>),
}

impl Default for Seeds {
    fn default() -> Self {
        Seeds::Count(1)
    }
}

impl Serialize for Seeds {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Seeds::Count(n) => s.serialize_u64(*n),
            Seeds::List(v) => v.serialize(s),
        }
    }
}

impl<'de> Deserialize<'de> for Seeds {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct V;
        impl<'de> Visitor<'de> for V {
            type Value = Seeds;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a seed count or a list of seeds")
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> Result<Seeds, E> {
                u64::try_from(v)
                    .map(Seeds::Count)
                    .map_err(|_| E::invalid_value(de::Unexpected::Signed(v), &self))
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> Result<Seeds, E> {
                Ok(Seeds::Count(v))
            }
            fn visit_seq<A: SeqAccess<'de>>(self, mut seq: A) -> Result<Seeds, A::Error> {
                let mut out = Vec::new();
                while let Some(s) = seq.next_element()? {
                    out.push(s);
                }
                Ok(Seeds::List(out))
            }
        }
        d.deserialize_any(V)
    }
}

impl Seeds {
    /// The seeds to simulate, in order.
    pub fn expand(&self, master_seed: u64) -> Vec<u64> {
        match self {
            Seeds::Count(n) => (0..*n).map(|i| derive_seed(master_seed, i)).collect(),
            Seeds::List(v) => v.clone(),
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Seeds::Count(n) => *n as usize,
            Seeds::List(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Format {
    #[serde(rename = "csv")]
    Csv,
    #[serde(rename = "jsonl")]
    Jsonl,
    #[serde(rename = "json-report")]
    JsonReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub directory: Option<PathBuf>,
    #[serde(default = "all_formats")]
    pub formats: Vec<Format>,
    #[serde(default)]
    pub emit_plot_script: bool,
}

fn all_formats() -> Vec<Format> {
    vec![Format::Csv, Format::Jsonl, Format::JsonReport]
}

impl Default for OutputSpec {
    fn default() -> Self {
        OutputSpec {
            directory: None,
            formats: all_formats(),
            emit_plot_script: false,
        }
    }
}

impl OutputSpec {
    pub fn wants(&self, f: Format) -> bool {
        self.formats.contains(&f)
    }
}

/// Settings for regime classification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisSpec {
    /// Relative tolerance for treating `m` and the mean speed as equal.
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_p0")]
    pub p0: f64,
    #[serde(default = "default_beta0")]
    pub beta0: f64,
}

fn default_tol() -> f64 {
    ClassifyOptions::default().tol
}

fn default_p0() -> f64 {
    ClassifyOptions::default().p0
}

fn default_beta0() -> f64 {
    ClassifyOptions::default().beta0
}

impl Default for AnalysisSpec {
    fn default() -> Self {
        AnalysisSpec {
            tol: default_tol(),
            p0: default_p0(),
            beta0: default_beta0(),
        }
    }
}

impl AnalysisSpec {
    pub fn options(&self) -> ClassifyOptions {
        ClassifyOptions {
            tol: self.tol,
            p0: self.p0,
            beta0: self.beta0,
            ..ClassifyOptions::default()
        }
    }
}

/// Values of the mean speed to classify in `sweep`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub v: Vec<f64>,
}

/// A scenario together with the cutoff that was chosen for it.
#[derive(Debug, Clone, PartialEq)]
pub struct Resolved {
    pub scenario: Scenario,
    /// Bias threshold used when the cutoff was chosen automatically.
    pub auto_threshold: Option<f64>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        let config = Self::parse(&text).map_err(|e| match e {
            ConfigError::Parse { message, .. } => ConfigError::Parse {
                path: path.to_path_buf(),
                message,
            },
            other => other,
        })?;
        Ok(config)
    }

    /// Parses and validates a configuration.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let config: RunConfig = toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: PathBuf::from("<config>"),
            message: e.to_string(),
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serialises")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.run.seeds.is_empty() {
            return Err(ConfigError::invalid(
                "run.seeds",
                "at least one seed is required",
            ));
        }
        if let Epsilon::Fixed(e) = self.scenario.epsilon {
            if !(e >= 0.0) || !e.is_finite() {
                return Err(ConfigError::invalid(
                    "scenario.epsilon",
                    format!("must be >= 0, got {e}"),
                ));
            }
        }
        if let Some(t) = self.scenario.auto_threshold {
            if !(t > 0.0) || !t.is_finite() {
                return Err(ConfigError::invalid(
                    "scenario.auto_threshold",
                    format!("must be > 0, got {t}"),
                ));
            }
        }
        if !(self.analysis.tol >= 0.0) {
            return Err(ConfigError::invalid("analysis.tol", "must be >= 0"));
        }
        if !(self.analysis.p0 > 0.0 && self.analysis.p0 < 1.0) {
            return Err(ConfigError::invalid("analysis.p0", "must lie in (0, 1)"));
        }
        if !(self.analysis.beta0 > 0.0 && self.analysis.beta0 < 1.0) {
            return Err(ConfigError::invalid("analysis.beta0", "must lie in (0, 1)"));
        }
        if let Some(sweep) = &self.sweep {
            if sweep.v.is_empty() {
                return Err(ConfigError::invalid("sweep.v", "needs at least one value"));
            }
            if let Some(v) = sweep.v.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
                return Err(ConfigError::invalid(
                    "sweep.v",
                    format!("speeds must be finite and >= 0, got {v}"),
                ));
            }
        }
        self.resolve()?;
        Ok(())
    }

    pub fn measure(&self) -> Result<MutationMeasure, ConfigError> {
        let spec = &self.scenario.measure;
        MutationMeasure::new(spec.family.clone(), spec.support)
            .map_err(|e| ConfigError::invalid("scenario.measure", e))
    }

    pub fn fixation(&self) -> Result<FixationModel, ConfigError> {
        let f = self.scenario.fixation;
        FixationModel::new(f.kind, f.sigma)
            .map_err(|e| ConfigError::invalid("scenario.fixation", e))
    }

    /// Builds the configured scenario.
    pub fn resolve(&self) -> Result<Resolved, ConfigError> {
        self.resolve_with_speed(self.scenario.speed.clone())
    }

    /// Builds the scenario with `speed` in place of the configured one.
    pub fn resolve_with_speed(&self, speed: SpeedModel) -> Result<Resolved, ConfigError> {
        speed
            .validate()
            .map_err(|e| ConfigError::invalid("scenario.speed", e))?;
        let measure = self.measure()?;
        let model = self.fixation()?;
        let (trunc, auto_threshold) = match self.scenario.epsilon {
            Epsilon::Fixed(e) => (
                TruncationPolicy::new(&measure, e)
                    .map_err(|e| ConfigError::invalid("scenario.epsilon", e))?,
                None,
            ),
            Epsilon::Auto => {
                let threshold = self.scenario.auto_threshold.unwrap_or_else(|| {
                    let m = MomentFunctionals::new(measure.clone(), model).limits().0;
                    TruncationPolicy::auto_threshold(m, speed.vbar(), self.analysis.tol)
                });
                let trunc = TruncationPolicy::auto(&measure, threshold)
                    .map_err(|e| ConfigError::invalid("scenario.epsilon", e))?;
                (trunc, Some(threshold))
            }
        };
        let s = &self.scenario;
        let scenario = Scenario::new(measure, trunc, model, speed, s.x0, s.horizon, s.grid_step)
            .map_err(|e| ConfigError::invalid("scenario", e))?;
        Ok(Resolved {
            scenario,
            auto_threshold,
        })
    }

    /// The configured speed model rescaled to mean `v`.
    pub fn speed_with_mean(&self, v: f64) -> Result<SpeedModel, ConfigError> {
        let speed = &self.scenario.speed;
        if speed.is_constant() {
            return Ok(SpeedModel::constant(v));
        }
        let vbar = speed.vbar();
        if !(vbar > 0.0) {
            return Err(ConfigError::invalid(
                "sweep.v",
                "a time-varying speed with zero mean cannot be rescaled",
            ));
        }
        // Rescale amplitudes while keeping the time profile (periods) unchanged.
        let c = v / vbar;
        let scale = |p: &phenolag::RateProfile| match p.clone() {
            phenolag::RateProfile::Constant { v } => phenolag::RateProfile::Constant { v: v * c },
            phenolag::RateProfile::PiecewiseConstant { durations, rates } => {
                phenolag::RateProfile::PiecewiseConstant {
                    durations,
                    rates: rates.iter().map(|r| r * c).collect(),
                }
            }
            phenolag::RateProfile::Sinusoidal {
                mean,
                amplitude,
                period,
                phase,
            } => phenolag::RateProfile::Sinusoidal {
                mean: mean * c,
                amplitude: amplitude * c,
                period,
                phase,
            },
        };
        Ok(match speed {
            SpeedModel::Constant { .. } => SpeedModel::constant(v),
            SpeedModel::DeterministicRate { rate } => {
                SpeedModel::DeterministicRate { rate: scale(rate) }
            }
            SpeedModel::WithBrownianNoise { base, noise_scale } => SpeedModel::WithBrownianNoise {
                base: scale(base),
                noise_scale: *noise_scale,
            },
        })
    }
}
