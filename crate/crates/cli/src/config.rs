//! The run configuration document (TOML).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use scamwatch_core::assessor::{RuleConfig, DEFAULT_FAR_BUDGET};
use scamwatch_core::distill::DistillConfig;
use scamwatch_core::domain::StreamConfig;
use scamwatch_core::http::EndpointConfig;
use scamwatch_core::pipeline::EvolveMode;
use scamwatch_core::skills::RetrievalWeights;
use scamwatch_core::synth::SynthConfig;

/// Overrides `assessor.endpoint.url`.
pub const ASSESSOR_URL_ENV: &str = "SCAMWATCH_ASSESSOR_URL";
/// Overrides `analyzer.endpoint.url`.
pub const ANALYZER_URL_ENV: &str = "SCAMWATCH_ANALYZER_URL";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub stream: StreamConfig,
    pub analyzer: AnalyzerSection,
    pub assessor: AssessorSection,
    pub retrieval: RetrievalSection,
    pub skills: SkillsSection,
    pub alert: AlertSection,
    pub distill: DistillConfig,
    pub synth: SynthConfig,
    pub io: IoSection,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnalyzerKind {
    #[default]
    PassThrough,
    Remote,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalyzerSection {
    pub kind: AnalyzerKind,
    pub endpoint: EndpointConfig,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AssessorKind {
    #[default]
    Rule,
    Logistic,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AssessorSection {
    pub kind: AssessorKind,
    /// Parameter file for the logistic assessor.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub params: Option<PathBuf>,
    pub endpoint: EndpointConfig,
    pub rule: RuleConfig,
    /// FAR ceiling used by calibration.
    pub far_budget: f64,
}

impl Default for AssessorSection {
    fn default() -> Self {
        Self {
            kind: AssessorKind::Rule,
            params: None,
            endpoint: EndpointConfig::default(),
            rule: RuleConfig::default(),
            far_budget: DEFAULT_FAR_BUDGET,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RetrievalSection {
    /// History entries prepended to each window.
    pub budget: usize,
    pub weights: RetrievalWeights,
}

impl Default for RetrievalSection {
    fn default() -> Self {
        Self {
            budget: 5,
            weights: RetrievalWeights::default(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SkillsSection {
    /// Skill library JSON; seeded from the catalog when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub library: Option<PathBuf>,
    /// Forces the library frozen regardless of `evolve`.
    pub frozen: bool,
    pub evolve: EvolveMode,
}

/// The literal string `"calibrated"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CalibratedKeyword {
    #[serde(rename = "calibrated")]
    Calibrated,
}

/// A fixed threshold, or `"calibrated"` to read it from a calibration file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TauSetting {
    Value(f64),
    Calibrated(CalibratedKeyword),
}

impl TauSetting {
    pub const CALIBRATED: TauSetting = TauSetting::Calibrated(CalibratedKeyword::Calibrated);
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AlertSection {
    pub tau: TauSetting,
    /// Calibration file read when `tau = "calibrated"`; defaults to
    /// `calibration.json` in the output directory.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub calibration: Option<PathBuf>,
}

impl Default for AlertSection {
    fn default() -> Self {
        Self {
            tau: TauSetting::Value(0.5),
            calibration: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IoSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub normal_pool: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scam_pool: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dataset: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub manifest: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub predictions: Option<PathBuf>,
    pub out_dir: PathBuf,
}

impl Default for IoSection {
    fn default() -> Self {
        Self {
            normal_pool: None,
            scam_pool: None,
            dataset: None,
            manifest: None,
            predictions: None,
            out_dir: PathBuf::from("out"),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("config-not-found: {}: {e}", path.display()))?;
        Self::parse(&text).map_err(|e| format!("invalid-config: {}: {e}", path.display()))
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    /// Applies endpoint URL overrides from the environment.
    pub fn apply_env(&mut self) {
        if let Ok(url) = std::env::var(ASSESSOR_URL_ENV) {
            self.assessor.endpoint.url = url;
        }
        if let Ok(url) = std::env::var(ANALYZER_URL_ENV) {
            self.analyzer.endpoint.url = url;
        }
    }

    /// The default document, for `--help`.
    pub fn default_toml() -> String {
        toml::to_string_pretty(&Self::default()).expect("default config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let parsed = RunConfig::parse(&RunConfig::default_toml()).unwrap();
        assert_eq!(parsed, RunConfig::default());
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(RunConfig::parse("[stream]\nwindow_size = 10\nstride = 5\nwidth = 3\n").is_err());
        assert!(RunConfig::parse("[nonsense]\n").is_err());
        assert!(RunConfig::parse("[synth]\nseeds = 1\n").is_err());
    }

    #[test]
    fn tau_accepts_number_or_calibrated() {
        let c = RunConfig::parse("[alert]\ntau = \"calibrated\"\n").unwrap();
        assert_eq!(c.alert.tau, TauSetting::CALIBRATED);
        let c = RunConfig::parse("[alert]\ntau = 0.25\n").unwrap();
        assert_eq!(c.alert.tau, TauSetting::Value(0.25));
        assert!(RunConfig::parse("[alert]\ntau = \"tuned\"\n").is_err());
    }

    #[test]
    fn partial_sections_keep_defaults() {
        let c = RunConfig::parse("[assessor]\nkind = \"logistic\"\nparams = \"p.json\"\n[skills]\nevolve = \"predicted\"\n").unwrap();
        assert_eq!(c.assessor.kind, AssessorKind::Logistic);
        assert_eq!(c.assessor.far_budget, DEFAULT_FAR_BUDGET);
        assert_eq!(c.skills.evolve, EvolveMode::Predicted);
        assert_eq!(c.retrieval.budget, 5);
    }
}
