//! Structured JSON reports.

use serde::Serialize;

use crate::config::ExperimentConfig;

pub const ARTIFACT: &str = env!("CARGO_PKG_NAME");
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Serialize)]
pub struct Report<'a, T: Serialize> {
    pub artifact: &'static str,
    pub version: &'static str,
    pub command: &'a str,
    /// Set for commands whose verdicts rest on finite simulation.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub evidence: Option<&'static str>,
    pub config: &'a ExperimentConfig,
    pub result: T,
}

pub const NUMERICAL_EVIDENCE: &str =
    "numerical evidence: verdicts on almost-sure and asymptotic statements come from finite simulation with configurable thresholds";

/// Pretty JSON with a trailing newline.
pub fn render<T: Serialize>(
    command: &str,
    evidence: Option<&'static str>,
    config: &ExperimentConfig,
    result: T,
) -> serde_json::Result<String> {
    let report = Report {
        artifact: ARTIFACT,
        version: VERSION,
        command,
        evidence,
        config,
        result,
    };
    let mut text = serde_json::to_string_pretty(&report)?;
    text.push('\n');
    Ok(text)
}
