//! Scam-risk assessors and alert-threshold calibration.
//!
//! Every assessor maps an augmented window to a rationale, a three-way label
//! and a scam probability. Metrics only see `probability > tau`; the label
//! bands (0.33 / 0.66) are for reporting and for triggering skill evolution.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::context::{render_context, AugmentedWindow};
use crate::domain::{AlertPolicy, AppCategory, Assessment, Label, ScamSegment};
use crate::http::{EndpointConfig, JsonClient, RemoteError};
use crate::memory::canonical_entity;
use crate::metrics::{self, MetricsError, TrajectoryMetricInput, WindowPrediction};
use crate::skills::SkillLibrary;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AssessError {
    #[error("non-finite-feature: {0}")]
    NonFinite(String),
    #[error("parameter-shape: expected {expected} shared weights, got {got}")]
    ParamShape { expected: usize, got: usize },
    #[error(transparent)]
    Remote(#[from] RemoteError),
}

pub const FEATURE_DIM: usize = 18;

/// Base feature layout: twelve category shares, then evidence features, then
/// a constant bias.
pub const FEATURE_NAMES: [&str; FEATURE_DIM] = [
    "share_communication",
    "share_instant_messaging",
    "share_social_media",
    "share_tools",
    "share_financial",
    "share_multimedia",
    "share_productivity",
    "share_travel_local",
    "share_shopping",
    "share_entertainment",
    "share_health_fitness",
    "share_others",
    "entity_recurrence",
    "window_indicator_hits",
    "history_indicator_hits",
    "sequence_affinity",
    "retrieved_fraction",
    "bias",
];

pub const IDX_ENTITY_RECURRENCE: usize = 12;
pub const IDX_WINDOW_HITS: usize = 13;
pub const IDX_HISTORY_HITS: usize = 14;
pub const IDX_SEQUENCE_AFFINITY: usize = 15;
pub const IDX_RETRIEVED_FRACTION: usize = 16;
pub const IDX_BIAS: usize = 17;

/// Weight of history indicator hits when picking the best-matching skill.
pub const DEFAULT_EVIDENCE_WEIGHT: f64 = 1.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector(pub [f64; FEATURE_DIM]);

impl FeatureVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// How one skill explains an augmented window.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SkillEvidence {
    pub scam_type: Option<String>,
    pub window_hits: usize,
    pub history_hits: usize,
    pub affinity: f64,
    pub window_matches: Vec<String>,
    pub history_matches: Vec<String>,
    /// Summaries that carried at least one hit.
    pub evidence: Vec<String>,
}

impl SkillEvidence {
    pub fn raw_score(&self, evidence_weight: f64) -> f64 {
        self.window_hits as f64 + self.affinity + evidence_weight * self.history_hits as f64
    }
}

/// Evidence of the skill with the highest raw score (first in scam-type
/// order on ties); the default evidence when the library is empty.
pub fn best_evidence(aug: &AugmentedWindow, library: &SkillLibrary, evidence_weight: f64) -> SkillEvidence {
    let categories: Vec<AppCategory> = aug.window.categories();
    let mut best: Option<SkillEvidence> = None;
    for skill in library.skills() {
        let mut ev = SkillEvidence {
            scam_type: Some(skill.scam_type.clone()),
            affinity: skill.sequence_affinity(&categories),
            ..SkillEvidence::default()
        };
        for e in &aug.window.events {
            let m = skill.matched_indicators(&e.content_summary);
            if !m.is_empty() {
                ev.window_hits += m.len();
                push_unique(&mut ev.window_matches, &m);
                ev.evidence.push(e.content_summary.clone());
            }
        }
        for h in &aug.retrieved {
            let m = skill.matched_indicators(&h.summary);
            if !m.is_empty() {
                ev.history_hits += m.len();
                push_unique(&mut ev.history_matches, &m);
                ev.evidence.push(h.summary.clone());
            }
        }
        let better = best
            .as_ref()
            .is_none_or(|b| ev.raw_score(evidence_weight) > b.raw_score(evidence_weight));
        if better {
            best = Some(ev);
        }
    }
    best.unwrap_or_default()
}

fn push_unique(into: &mut Vec<String>, items: &[&str]) {
    for i in items {
        if !into.iter().any(|x| x == i) {
            into.push((*i).to_string());
        }
    }
}

/// Base features of an augmented window. Never includes privileged inputs.
pub fn extract_features(aug: &AugmentedWindow, library: &SkillLibrary) -> FeatureVector {
    let mut x = [0.0; FEATURE_DIM];
    let n = aug.window.events.len().max(1) as f64;
    for e in &aug.window.events {
        x[e.app_category.index()] += 1.0 / n;
    }
    let window_entities = aug.window_entities();
    let recurring: std::collections::BTreeSet<String> = aug
        .retrieved
        .iter()
        .map(|h| canonical_entity(&h.entity))
        .filter(|e| window_entities.contains(e))
        .collect();
    let ev = best_evidence(aug, library, DEFAULT_EVIDENCE_WEIGHT);
    x[IDX_ENTITY_RECURRENCE] = recurring.len() as f64;
    x[IDX_WINDOW_HITS] = ev.window_hits as f64;
    x[IDX_HISTORY_HITS] = ev.history_hits as f64;
    x[IDX_SEQUENCE_AFFINITY] = ev.affinity;
    x[IDX_RETRIEVED_FRACTION] = if aug.budget == 0 {
        0.0
    } else {
        aug.retrieved.len() as f64 / aug.budget as f64
    };
    x[IDX_BIAS] = 1.0;
    FeatureVector(x)
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

pub trait Assessor: Send + Sync {
    fn assess(&self, aug: &AugmentedWindow, library: &SkillLibrary) -> Result<Assessment, AssessError>;
}

fn evidence_rationale(out: &mut String, ev: &SkillEvidence) {
    let _ = write!(
        out,
        "; skill {}; window indicators [{}]; history indicators [{}]",
        ev.scam_type.as_deref().unwrap_or("none"),
        ev.window_matches.join(", "),
        ev.history_matches.join(", "),
    );
    if !ev.evidence.is_empty() {
        let _ = write!(out, "; evidence: {}", ev.evidence.join(" / "));
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RuleConfig {
    /// Raw score mapped to probability 0.5.
    pub bias: f64,
    /// Sigmoid temperature.
    pub scale: f64,
    /// Multiplier of indicator hits found in retrieved history.
    pub evidence_weight: f64,
}

impl Default for RuleConfig {
    fn default() -> Self {
        Self {
            bias: 2.5,
            scale: 0.5,
            evidence_weight: DEFAULT_EVIDENCE_WEIGHT,
        }
    }
}

/// Deterministic baseline: indicator hits plus sequence affinity plus
/// weighted history hits, squashed through a fixed sigmoid.
#[derive(Debug, Clone, Default)]
pub struct RuleAssessor {
    pub config: RuleConfig,
}

impl RuleAssessor {
    pub fn new(config: RuleConfig) -> Self {
        Self { config }
    }
}

impl Assessor for RuleAssessor {
    fn assess(&self, aug: &AugmentedWindow, library: &SkillLibrary) -> Result<Assessment, AssessError> {
        let ev = best_evidence(aug, library, self.config.evidence_weight);
        let raw = ev.raw_score(self.config.evidence_weight);
        let p = sigmoid((raw - self.config.bias) / self.config.scale);
        let label = Label::from_probability(p);
        let mut rationale = format!("rule {label} p={p:.4} raw={raw:.3}");
        evidence_rationale(&mut rationale, &ev);
        Ok(Assessment {
            rationale,
            label,
            probability: p,
            window_end: aug.window.end,
        })
    }
}

/// Logistic weights. The student uses `theta_shared` on base features; the
/// teacher pathway adds `theta_priv` on privileged features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticParams {
    pub theta_shared: Vec<f64>,
    pub theta_priv: Vec<f64>,
}

impl LogisticParams {
    pub fn zeros(n_priv: usize) -> Self {
        Self {
            theta_shared: vec![0.0; FEATURE_DIM],
            theta_priv: vec![0.0; n_priv],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.theta_shared.iter().chain(&self.theta_priv).all(|v| v.is_finite())
    }

    pub fn student_logit(&self, x: &[f64]) -> f64 {
        dot(&self.theta_shared, x)
    }

    pub fn teacher_logit(&self, x: &[f64], z: &[f64]) -> f64 {
        dot(&self.theta_shared, x) + dot(&self.theta_priv, z)
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Debug, Clone)]
pub struct LogisticAssessor {
    pub params: LogisticParams,
}

impl LogisticAssessor {
    pub fn new(params: LogisticParams) -> Result<Self, AssessError> {
        if params.theta_shared.len() != FEATURE_DIM {
            return Err(AssessError::ParamShape {
                expected: FEATURE_DIM,
                got: params.theta_shared.len(),
            });
        }
        if !params.is_finite() {
            return Err(AssessError::NonFinite("parameters".into()));
        }
        Ok(Self { params })
    }

    pub fn probability(&self, x: &FeatureVector) -> f64 {
        sigmoid(self.params.student_logit(x.as_slice()))
    }
}

impl Assessor for LogisticAssessor {
    fn assess(&self, aug: &AugmentedWindow, library: &SkillLibrary) -> Result<Assessment, AssessError> {
        let x = extract_features(aug, library);
        if let Some(i) = x.0.iter().position(|v| !v.is_finite()) {
            return Err(AssessError::NonFinite(FEATURE_NAMES[i].to_string()));
        }
        let p = self.probability(&x);
        let label = Label::from_probability(p);
        let mut contrib: Vec<(usize, f64)> = x
            .0
            .iter()
            .zip(&self.params.theta_shared)
            .map(|(a, b)| a * b)
            .enumerate()
            .collect();
        contrib.sort_by(|a, b| b.1.abs().total_cmp(&a.1.abs()).then(a.0.cmp(&b.0)));
        let top: Vec<String> = contrib
            .iter()
            .take(3)
            .map(|(i, c)| format!("{}={c:+.3}", FEATURE_NAMES[*i]))
            .collect();
        let mut rationale = format!("logistic {label} p={p:.4}; top contributions {}", top.join(", "));
        evidence_rationale(&mut rationale, &best_evidence(aug, library, DEFAULT_EVIDENCE_WEIGHT));
        Ok(Assessment {
            rationale,
            label,
            probability: p,
            window_end: aug.window.end,
        })
    }
}

/// Probability assigned when a remote reply carries no usable probability.
pub fn coerced_probability(label: Label) -> f64 {
    match label {
        Label::Scam => 0.9,
        Label::Risky => 0.6,
        Label::Normal => 0.1,
    }
}

/// Maps a remote reply `{reason, fraud, probability?}` to an assessment.
/// `fraud` is a boolean or a label string.
pub fn parse_remote_reply(reply: &Value, window_end: usize) -> Result<Assessment, RemoteError> {
    let bad = |m: &str| RemoteError::BadResponse(m.to_string());
    let obj = reply.as_object().ok_or_else(|| bad("reply is not an object"))?;
    let label = match obj.get("fraud") {
        Some(Value::Bool(true)) => Label::Scam,
        Some(Value::Bool(false)) => Label::Normal,
        Some(Value::String(s)) => s.parse::<Label>().map_err(|e| bad(&e))?,
        _ => return Err(bad("missing or invalid `fraud`")),
    };
    let rationale = match obj.get("reason") {
        None | Some(Value::Null) => String::new(),
        Some(Value::String(s)) => s.clone(),
        Some(_) => return Err(bad("`reason` must be a string")),
    };
    let probability = match obj.get("probability").and_then(Value::as_f64) {
        Some(p) if (0.0..=1.0).contains(&p) => p,
        other => {
            let p = coerced_probability(label);
            log::warn!("remote probability {other:?} unusable; coerced to {p} from {label}");
            p
        }
    };
    Ok(Assessment {
        rationale,
        label,
        probability,
        window_end,
    })
}

/// Sends the rendered context to an external model endpoint.
#[derive(Debug, Clone)]
pub struct RemoteAssessor {
    client: JsonClient,
}

impl RemoteAssessor {
    pub fn new(config: EndpointConfig) -> Self {
        Self {
            client: JsonClient::new(config),
        }
    }

    pub fn assess_rendered(&self, context: &str, window_end: usize) -> Result<Assessment, AssessError> {
        let reply = self.client.post(&json!({ "context": context }))?;
        Ok(parse_remote_reply(&reply, window_end)?)
    }
}

impl Assessor for RemoteAssessor {
    fn assess(&self, aug: &AugmentedWindow, library: &SkillLibrary) -> Result<Assessment, AssessError> {
        self.assess_rendered(&render_context(aug, library), aug.window.end)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CalibrationError {
    #[error("empty-validation-set")]
    Empty,
    #[error("invalid-far-budget: {0}")]
    InvalidBudget(f64),
    #[error(transparent)]
    Metric(#[from] MetricsError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoredWindow {
    pub start: usize,
    pub end: usize,
    pub probability: f64,
}

/// Assessor probabilities for one validation trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredTrajectory {
    pub trajectory_id: String,
    pub length: usize,
    pub segment: Option<ScamSegment>,
    pub window_size: usize,
    pub windows: Vec<ScoredWindow>,
}

impl ScoredTrajectory {
    pub fn metric_input(&self, policy: &AlertPolicy) -> TrajectoryMetricInput {
        TrajectoryMetricInput {
            trajectory_id: self.trajectory_id.clone(),
            length: self.length,
            segment: self.segment.clone(),
            window_size: self.window_size,
            predictions: self
                .windows
                .iter()
                .map(|w| WindowPrediction::new(w.start, w.end, policy.is_alert(w.probability)))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub tau: f64,
    pub hr: f64,
    pub far: f64,
    pub par: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub tau: f64,
    /// PAR at the chosen tau when the FAR budget is met, otherwise its FAR.
    pub objective_value: f64,
    pub feasible: bool,
    pub far_budget: f64,
    pub sweep: Vec<SweepPoint>,
}

pub const DEFAULT_FAR_BUDGET: f64 = 0.05;

/// The 101 thresholds 0.00, 0.01, ..., 1.00.
pub fn tau_grid() -> Vec<f64> {
    (0..=100).map(|i| i as f64 / 100.0).collect()
}

pub fn sweep(trajectories: &[ScoredTrajectory]) -> Result<Vec<SweepPoint>, CalibrationError> {
    if trajectories.is_empty() {
        return Err(CalibrationError::Empty);
    }
    tau_grid()
        .into_iter()
        .map(|tau| {
            let policy = AlertPolicy { tau };
            let inputs: Vec<TrajectoryMetricInput> =
                trajectories.iter().map(|t| t.metric_input(&policy)).collect();
            Ok(SweepPoint {
                tau,
                hr: metrics::hit_rate(&inputs)?,
                far: metrics::false_alert_rate(&inputs)?,
                par: metrics::par(&inputs)?,
            })
        })
        .collect()
}

/// Picks the grid threshold with the highest PAR among those meeting
/// `FAR <= far_budget`; without any feasible point, the lowest FAR. Ties go
/// to the larger threshold.
pub fn calibrate_tau(trajectories: &[ScoredTrajectory], far_budget: f64) -> Result<CalibrationResult, CalibrationError> {
    if !(0.0..=1.0).contains(&far_budget) {
        return Err(CalibrationError::InvalidBudget(far_budget));
    }
    let points = sweep(trajectories)?;
    let feasible = points.iter().any(|p| p.far <= far_budget);
    let mut best: Option<&SweepPoint> = None;
    for p in &points {
        if feasible && p.far > far_budget {
            continue;
        }
        best = match best {
            None => Some(p),
            Some(b) => {
                let improves = if feasible { p.par >= b.par } else { p.far <= b.far };
                Some(if improves { p } else { b })
            }
        };
    }
    let best = *best.expect("sweep is non-empty");
    Ok(CalibrationResult {
        tau: best.tau,
        objective_value: if feasible { best.par } else { best.far },
        feasible,
        far_budget,
        sweep: points,
    })
}
