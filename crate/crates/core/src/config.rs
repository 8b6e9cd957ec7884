//! Experiment configuration: JSON schema, defaults and validation.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classify::ClassifierConfig;
use crate::dists::Violation;
use crate::engine::ModelSpec;
use crate::loynes::DivergenceCheck;
use crate::tails::TailRegime;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed config at {path}: {message}")]
    Parse { path: String, message: String },
    #[error("invalid config:\n{}", ViolationList(.0))]
    Invalid(Vec<Violation>),
}

struct ViolationList<'a>(&'a [Violation]);

impl fmt::Display for ViolationList<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, v) in self.0.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "  {v}")?;
        }
        Ok(())
    }
}

fn schema_version() -> u32 {
    SCHEMA_VERSION
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "schema_version")]
    pub schema: u32,
    #[serde(default)]
    pub seed: u64,
    /// Worker threads; results do not depend on it, so it is left out of reports.
    #[serde(default, skip_serializing)]
    pub threads: Option<usize>,
    pub model: ModelSpec,
    #[serde(default)]
    pub simulate: SimulateConfig,
    #[serde(default)]
    pub stationary: StationaryConfig,
    #[serde(default)]
    pub classify: ClassifierConfig,
    #[serde(default)]
    pub regen: RegenConfig,
    #[serde(default)]
    pub tails: TailsConfig,
    #[serde(default)]
    pub gg1: Gg1Config,
    /// Where results go; not part of the experiment, so left out of reports.
    #[serde(default, skip_serializing)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    pub x0: f64,
    pub n: usize,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self { x0: 0.0, n: 1000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StationaryConfig {
    pub samples: usize,
    pub horizon: usize,
    pub divergence: DivergenceCheck,
    /// Optional total-variation check of `X_n(x0)` against `X_n(0)`.
    pub tv: Option<TvConfig>,
}

impl Default for StationaryConfig {
    fn default() -> Self {
        Self {
            samples: 10_000,
            horizon: 1000,
            divergence: DivergenceCheck::default(),
            tv: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TvConfig {
    pub x0: f64,
    pub n: usize,
    pub reps: usize,
    pub bins: usize,
}

impl Default for TvConfig {
    fn default() -> Self {
        Self {
            x0: 1.0,
            n: 10,
            reps: 10_000,
            bins: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegenConfig {
    pub reps: usize,
    pub horizon: usize,
    /// Length of the single path scanned for regeneration times.
    pub path_length: usize,
}

impl Default for RegenConfig {
    fn default() -> Self {
        Self {
            reps: 1000,
            horizon: 10_000,
            path_length: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TailsConfig {
    pub samples: usize,
    pub horizon: usize,
    /// Evaluation points; a geometric grid over upper pilot quantiles when absent.
    pub grid: Option<Vec<f64>>,
    pub grid_points: usize,
    pub pilot_samples: usize,
    /// Explicit `(δ, μ)` or `(δ, α)` when the service law is not an exact family match.
    pub regime: Option<TailRegime>,
}

impl Default for TailsConfig {
    fn default() -> Self {
        Self {
            samples: 100_000,
            horizon: 1000,
            grid: None,
            grid_points: 8,
            pilot_samples: 100_000,
            regime: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Gg1Config {
    pub w0: f64,
    pub n: usize,
}

impl Default for Gg1Config {
    fn default() -> Self {
        Self { w0: 0.0, n: 1000 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub report: Option<String>,
    pub csv: Option<String>,
}

fn at_least(path: &str, v: usize, min: usize, errs: &mut Vec<Violation>) {
    if v < min {
        errs.push(Violation::new(path, format!("must be at least {min}, got {v}")));
    }
}

fn non_negative(path: &str, v: f64, errs: &mut Vec<Violation>) {
    if !(v.is_finite() && v >= 0.0) {
        errs.push(Violation::new(
            path,
            format!("must be a non-negative finite number, got {v}"),
        ));
    }
}

fn fraction(path: &str, v: f64, errs: &mut Vec<Violation>) {
    if !(v > 0.0 && v <= 1.0) {
        errs.push(Violation::new(path, format!("must lie in (0, 1], got {v}")));
    }
}

impl ExperimentConfig {
    /// Every violation, with its field path.
    pub fn violations(&self) -> Vec<Violation> {
        let mut errs = Vec::new();
        if self.schema != SCHEMA_VERSION {
            errs.push(Violation::new(
                "schema",
                format!("unsupported schema version {}, expected {SCHEMA_VERSION}", self.schema),
            ));
        }
        if self.threads == Some(0) {
            errs.push(Violation::new("threads", "must be at least 1"));
        }
        self.model.validate("model", &mut errs);

        non_negative("simulate.x0", self.simulate.x0, &mut errs);

        let st = &self.stationary;
        at_least("stationary.samples", st.samples, 1, &mut errs);
        at_least("stationary.horizon", st.horizon, 1, &mut errs);
        fraction(
            "stationary.divergence.window_fraction",
            st.divergence.window_fraction,
            &mut errs,
        );
        fraction(
            "stationary.divergence.trip_fraction",
            st.divergence.trip_fraction,
            &mut errs,
        );
        if let Some(tv) = &st.tv {
            non_negative("stationary.tv.x0", tv.x0, &mut errs);
            at_least("stationary.tv.reps", tv.reps, 2, &mut errs);
            at_least("stationary.tv.bins", tv.bins, 1, &mut errs);
        }

        let c = &self.classify;
        at_least("classify.n_max", c.n_max, 10, &mut errs);
        at_least("classify.tail_reps", c.tail_reps, 1, &mut errs);
        at_least("classify.series_reps", c.series_reps, 1, &mut errs);
        if !(c.grid_ratio > 1.0 && c.grid_ratio.is_finite()) {
            errs.push(Violation::new(
                "classify.grid_ratio",
                format!("must exceed 1, got {}", c.grid_ratio),
            ));
        }
        if !c.slope_threshold.is_finite() {
            errs.push(Violation::new("classify.slope_threshold", "must be finite"));
        }
        non_negative("classify.increment_floor", c.increment_floor, &mut errs);
        fraction("classify.vote_fraction", c.vote_fraction, &mut errs);
        if !(c.c > 1.0 && c.c.is_finite()) {
            errs.push(Violation::new("classify.c", format!("must exceed 1, got {}", c.c)));
        }
        if let Some(y) = c.y {
            non_negative("classify.y", y, &mut errs);
        }
        if let Some(w0) = c.w0 {
            non_negative("classify.w0", w0, &mut errs);
        }
        if !(c.quad_tol > 0.0 && c.quad_tol < 1.0) {
            errs.push(Violation::new(
                "classify.quad_tol",
                format!("must lie in (0, 1), got {}", c.quad_tol),
            ));
        }

        at_least("regen.reps", self.regen.reps, 1, &mut errs);
        at_least("regen.horizon", self.regen.horizon, 1, &mut errs);

        let t = &self.tails;
        at_least("tails.samples", t.samples, 1, &mut errs);
        at_least("tails.horizon", t.horizon, 1, &mut errs);
        at_least("tails.grid_points", t.grid_points, 1, &mut errs);
        at_least("tails.pilot_samples", t.pilot_samples, 100, &mut errs);
        if let Some(grid) = &t.grid {
            if grid.is_empty() {
                errs.push(Violation::new("tails.grid", "must not be empty"));
            }
            for (i, x) in grid.iter().enumerate() {
                if !(x.is_finite() && *x > 0.0) {
                    errs.push(Violation::new(
                        format!("tails.grid.{i}"),
                        format!("must be positive, got {x}"),
                    ));
                }
            }
        }
        match t.regime {
            Some(TailRegime::ExpTail { delta, mu }) if !(delta > 0.0 && mu > 0.0) => {
                errs.push(Violation::new("tails.regime", "exp_tail needs delta > 0 and mu > 0"));
            }
            Some(TailRegime::ParetoTail { delta, alpha }) if !(delta > 0.0 && alpha > 1.0) => {
                errs.push(Violation::new(
                    "tails.regime",
                    "pareto_tail needs delta > 0 and alpha > 1",
                ));
            }
            _ => {}
        }

        non_negative("gg1.w0", self.gg1.w0, &mut errs);
        errs
    }

    /// Normalizes the model and fails with every violation found.
    pub fn validated(mut self) -> Result<Self, ConfigError> {
        let errs = self.violations();
        if !errs.is_empty() {
            return Err(ConfigError::Invalid(errs));
        }
        self.model = ModelSpec::new(self.model.interarrival, self.model.service);
        Ok(self)
    }
}

/// Parses and validates a JSON config.
pub fn validate_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let cfg: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| ConfigError::Parse {
        path: e.path().to_string(),
        message: e.inner().to_string(),
    })?;
    cfg.validated()
}

pub fn load_config(path: &str) -> Result<ExperimentConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_string(),
        source,
    })?;
    validate_config(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{"model": {"interarrival": {"kind": "exponential", "rate": 1},
                                       "service": {"kind": "exponential", "rate": 2}}}"#;

    #[test]
    fn minimal_config_gets_defaults() {
        let c = validate_config(MINIMAL).unwrap();
        assert_eq!(c.seed, 0);
        assert_eq!(c.schema, SCHEMA_VERSION);
        assert_eq!(c.classify.n_max, 1_000_000);
        let json = serde_json::to_value(&c).unwrap();
        assert_eq!(json["seed"], 0);
        assert!(json.get("threads").is_none());
    }

    #[test]
    fn negative_alpha_has_field_path() {
        let text = r#"{"model": {"interarrival": {"kind": "exponential", "rate": 1},
                                 "service": {"kind": "pareto", "alpha": -1}}}"#;
        match validate_config(text) {
            Err(ConfigError::Invalid(v)) => {
                assert_eq!(v.len(), 1);
                assert_eq!(v[0].path, "model.service.alpha");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn all_violations_reported() {
        let text = r#"{"model": {"interarrival": {"kind": "deterministic", "value": 0},
                                 "service": {"kind": "truncated_pareto_one", "d1": 2, "x0": 1}},
                       "classify": {"c": 1.0}}"#;
        let Err(ConfigError::Invalid(v)) = validate_config(text) else {
            panic!()
        };
        let paths: Vec<&str> = v.iter().map(|v| v.path.as_str()).collect();
        assert_eq!(
            paths,
            vec!["model.interarrival.value", "model.service.x0", "classify.c"]
        );
    }

    #[test]
    fn unknown_field_and_type_errors() {
        let text = r#"{"model": {"interarrival": {"kind": "exponential", "rate": 1},
                                 "service": {"kind": "exponential", "rate": 1}},
                       "regen": {"reps": 10, "bogus": 1}}"#;
        let Err(ConfigError::Parse { path, .. }) = validate_config(text) else {
            panic!()
        };
        assert!(path.starts_with("regen"), "{path}");
        let text = r#"{"model": {"interarrival": {"kind": "exponential", "rate": "fast"},
                                 "service": {"kind": "exponential", "rate": 1}}}"#;
        let Err(ConfigError::Parse { path, .. }) = validate_config(text) else {
            panic!()
        };
        assert!(path.starts_with("model.interarrival"), "{path}");
    }

    #[test]
    fn wrong_schema_rejected() {
        let text = MINIMAL.replacen('{', r#"{"schema": 7, "#, 1);
        assert!(matches!(validate_config(&text), Err(ConfigError::Invalid(_))));
    }

    #[test]
    fn resolved_config_round_trips() {
        let c = validate_config(MINIMAL).unwrap();
        let text = serde_json::to_string(&c).unwrap();
        assert_eq!(validate_config(&text).unwrap(), c);
    }
}
