//! Domain types shared by every stage of the engine: app events, trajectories,
//! the streaming window protocol and the alerting policy.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Synthetic spacing between consecutive events, in hours. Events carry only
/// an order, so recency heuristics expressed in hours use this conversion.
pub const HOURS_PER_EVENT: f64 = 1.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DomainError {
    #[error("trajectory-too-short: length {length} < window size {window}")]
    TrajectoryTooShort { length: usize, window: usize },
    #[error("invalid-stream-config: {0}")]
    InvalidStreamConfig(String),
    #[error("invalid-threshold: tau {0} outside [0, 1]")]
    InvalidThreshold(f64),
    #[error("invalid-trajectory `{id}`: {reason}")]
    InvalidTrajectory { id: String, reason: String },
    #[error("unknown-app-category: `{0}`")]
    UnknownCategory(String),
    #[error("unknown-split: `{0}`")]
    UnknownSplit(String),
}

/// Functional app category. Exactly twelve values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AppCategory {
    #[serde(rename = "Communication")]
    Communication,
    #[serde(rename = "Instant Messaging")]
    InstantMessaging,
    #[serde(rename = "Social Media")]
    SocialMedia,
    #[serde(rename = "Tools")]
    Tools,
    #[serde(rename = "Financial")]
    Financial,
    #[serde(rename = "Multimedia")]
    Multimedia,
    #[serde(rename = "Productivity")]
    Productivity,
    #[serde(rename = "Travel & Local")]
    TravelLocal,
    #[serde(rename = "Shopping")]
    Shopping,
    #[serde(rename = "Entertainment")]
    Entertainment,
    #[serde(rename = "Health & Fitness")]
    HealthFitness,
    #[serde(rename = "Others")]
    Others,
}

impl AppCategory {
    pub const ALL: [AppCategory; 12] = [
        AppCategory::Communication,
        AppCategory::InstantMessaging,
        AppCategory::SocialMedia,
        AppCategory::Tools,
        AppCategory::Financial,
        AppCategory::Multimedia,
        AppCategory::Productivity,
        AppCategory::TravelLocal,
        AppCategory::Shopping,
        AppCategory::Entertainment,
        AppCategory::HealthFitness,
        AppCategory::Others,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AppCategory::Communication => "Communication",
            AppCategory::InstantMessaging => "Instant Messaging",
            AppCategory::SocialMedia => "Social Media",
            AppCategory::Tools => "Tools",
            AppCategory::Financial => "Financial",
            AppCategory::Multimedia => "Multimedia",
            AppCategory::Productivity => "Productivity",
            AppCategory::TravelLocal => "Travel & Local",
            AppCategory::Shopping => "Shopping",
            AppCategory::Entertainment => "Entertainment",
            AppCategory::HealthFitness => "Health & Fitness",
            AppCategory::Others => "Others",
        }
    }

    /// Position in [`AppCategory::ALL`]; used as the histogram index.
    pub fn index(self) -> usize {
        AppCategory::ALL
            .iter()
            .position(|c| *c == self)
            .expect("category is in ALL")
    }
}

impl fmt::Display for AppCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AppCategory {
    type Err = DomainError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        AppCategory::ALL
            .iter()
            .copied()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| DomainError::UnknownCategory(s.to_string()))
    }
}

/// One app interaction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AppEvent {
    pub order: usize,
    pub app_category: AppCategory,
    pub app_name: Option<String>,
    pub content_summary: String,
    pub entities: Vec<String>,
}

impl AppEvent {
    /// Builds an event, dropping duplicate entity strings (first occurrence wins).
    pub fn new(
        order: usize,
        app_category: AppCategory,
        app_name: Option<&str>,
        content_summary: &str,
        entities: &[&str],
    ) -> Self {
        let mut uniq: Vec<String> = Vec::with_capacity(entities.len());
        for e in entities {
            if !uniq.iter().any(|u| u == e) {
                uniq.push((*e).to_string());
            }
        }
        Self {
            order,
            app_category,
            app_name: app_name.map(str::to_string),
            content_summary: content_summary.to_string(),
            entities: uniq,
        }
    }
}

/// Ground-truth scam span `[start, end]`, inclusive on both ends.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScamSegment {
    pub start: usize,
    pub end: usize,
    pub scam_type: String,
}

impl ScamSegment {
    pub fn new(start: usize, end: usize, scam_type: &str) -> Self {
        Self {
            start,
            end,
            scam_type: scam_type.to_string(),
        }
    }

    pub fn len(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, index: usize) -> bool {
        self.start <= index && index <= self.end
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Validation, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = DomainError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "validation" => Ok(Split::Validation),
            "test" => Ok(Split::Test),
            other => Err(DomainError::UnknownSplit(other.to_string())),
        }
    }
}

/// An ordered app-usage history for one simulated user.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub trajectory_id: String,
    pub split_tag: Split,
    pub events: Vec<AppEvent>,
    pub scam_segment: Option<ScamSegment>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn is_scam(&self) -> bool {
        self.scam_segment.is_some()
    }

    pub fn check(&self) -> Result<(), DomainError> {
        let fail = |reason: String| DomainError::InvalidTrajectory {
            id: self.trajectory_id.clone(),
            reason,
        };
        for (i, ev) in self.events.iter().enumerate() {
            if ev.order != i {
                return Err(fail(format!("event {i} has order {}", ev.order)));
            }
            for (j, e) in ev.entities.iter().enumerate() {
                if ev.entities[..j].contains(e) {
                    return Err(fail(format!("event {i} repeats entity `{e}`")));
                }
            }
        }
        if let Some(seg) = &self.scam_segment {
            if seg.start > seg.end || seg.end >= self.events.len() {
                return Err(fail(format!(
                    "scam segment [{}, {}] out of bounds for length {}",
                    seg.start,
                    seg.end,
                    self.events.len()
                )));
            }
        }
        Ok(())
    }
}

/// Sliding-window parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StreamConfig {
    pub window_size: usize,
    pub stride: usize,
}

impl Default for StreamConfig {
    fn default() -> Self {
        Self {
            window_size: 10,
            stride: 5,
        }
    }
}

impl StreamConfig {
    pub fn new(window_size: usize, stride: usize) -> Result<Self, DomainError> {
        let cfg = Self {
            window_size,
            stride,
        };
        cfg.check()?;
        Ok(cfg)
    }

    pub fn check(&self) -> Result<(), DomainError> {
        if self.window_size == 0 {
            return Err(DomainError::InvalidStreamConfig("window_size must be >= 1".into()));
        }
        if self.stride == 0 {
            return Err(DomainError::InvalidStreamConfig("stride must be >= 1".into()));
        }
        if self.stride > self.window_size {
            return Err(DomainError::InvalidStreamConfig(format!(
                "stride {} exceeds window_size {}",
                self.stride, self.window_size
            )));
        }
        Ok(())
    }
}

/// Enumerates `(start, end)` index pairs of the windows assessed over a
/// trajectory of `length` events.
///
/// Windows end at `W-1, W-1+stride, ...`; when the stepping rule stops short
/// of the last event a final window ending at `length-1` is appended.
pub fn enumerate_windows(
    length: usize,
    config: &StreamConfig,
) -> Result<Vec<(usize, usize)>, DomainError> {
    config.check()?;
    let w = config.window_size;
    if length < w {
        return Err(DomainError::TrajectoryTooShort { length, window: w });
    }
    let mut ends: Vec<usize> = (w - 1..length).step_by(config.stride).collect();
    if ends.last() != Some(&(length - 1)) {
        ends.push(length - 1);
    }
    Ok(ends.into_iter().map(|end| (end + 1 - w, end)).collect())
}

/// Contiguous view of the events visible at one step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationWindow {
    pub start: usize,
    pub end: usize,
    pub events: Vec<AppEvent>,
}

impl ObservationWindow {
    pub fn from_events(events: &[AppEvent], start: usize, end: usize) -> Self {
        Self {
            start,
            end,
            events: events[start..=end].to_vec(),
        }
    }

    pub fn categories(&self) -> Vec<AppCategory> {
        self.events.iter().map(|e| e.app_category).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    Normal,
    Risky,
    Scam,
}

/// Lower edge of the Risky band.
pub const RISKY_BAND: f64 = 0.33;
/// Lower edge of the Scam band.
pub const SCAM_BAND: f64 = 0.66;

impl Label {
    /// Reporting label for a scam probability: Scam above 0.66, Risky above 0.33.
    pub fn from_probability(p: f64) -> Self {
        if p > SCAM_BAND {
            Label::Scam
        } else if p > RISKY_BAND {
            Label::Risky
        } else {
            Label::Normal
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Normal => "Normal",
            Label::Risky => "Risky",
            Label::Scam => "Scam",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "normal" => Ok(Label::Normal),
            "risky" => Ok(Label::Risky),
            "scam" => Ok(Label::Scam),
            other => Err(format!("unknown label `{other}`")),
        }
    }
}

/// Per-window assessor output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assessment {
    pub rationale: String,
    pub label: Label,
    pub probability: f64,
    pub window_end: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlertPolicy {
    pub tau: f64,
}

impl Default for AlertPolicy {
    fn default() -> Self {
        Self { tau: 0.5 }
    }
}

impl AlertPolicy {
    pub fn new(tau: f64) -> Result<Self, DomainError> {
        if !(0.0..=1.0).contains(&tau) {
            return Err(DomainError::InvalidThreshold(tau));
        }
        Ok(Self { tau })
    }

    /// Binary scam flag used by every metric: strictly above tau.
    pub fn is_alert(&self, probability: f64) -> bool {
        probability > self.tau
    }
}

pub fn apply_alert_policy(assessment: &Assessment, policy: &AlertPolicy) -> bool {
    policy.is_alert(assessment.probability)
}
