//! The streaming inference loop over one trajectory.
//!
//! Memory is reset per trajectory. At each window the newly visible events
//! are parsed and ingested, the augmented window is built, assessed and
//! thresholded, and the skill library may evolve from the verdict.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assessor::{AssessError, Assessor};
use crate::context::{build_augmented_window, AugmentedWindow, ScreenAnalyzer};
use crate::domain::{
    enumerate_windows, AlertPolicy, AppEvent, Assessment, DomainError, Label, ObservationWindow, StreamConfig,
    Trajectory,
};
use crate::memory::{MemoryError, MemoryStore};
use crate::metrics::{overlap, TrajectoryMetricInput, WindowPrediction};
use crate::skills::{evolve, RetrievalWeights, SkillError, SkillLibrary};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PipelineError {
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error(transparent)]
    Memory(#[from] MemoryError),
    #[error(transparent)]
    Skill(#[from] SkillError),
    #[error("trajectory {id}: {source}")]
    Assess { id: String, source: AssessError },
}

/// When the skill library may change during a run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvolveMode {
    /// Never evolve.
    #[default]
    Frozen,
    /// Evolve on every window the assessor labels Risky or Scam.
    Predicted,
    /// Evolve on every window that overlaps the ground-truth scam segment.
    GroundTruth,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub stream: StreamConfig,
    pub budget: usize,
    pub weights: RetrievalWeights,
    pub policy: AlertPolicy,
    pub evolve: EvolveMode,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            stream: StreamConfig::default(),
            budget: 5,
            weights: RetrievalWeights::default(),
            policy: AlertPolicy::default(),
            evolve: EvolveMode::Frozen,
        }
    }
}

/// One per-window prediction line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowRecord {
    pub trajectory_id: String,
    pub window_index: usize,
    pub start: usize,
    pub end: usize,
    pub probability: f64,
    pub label: Label,
    pub alert: bool,
    pub rationale: String,
    pub retrieved_orders: Vec<usize>,
    /// Memory entries available to retrieval (source order before the
    /// window start) whose source event lies in the scam segment.
    pub scam_memory_entries: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRun {
    pub trajectory_id: String,
    pub windows: Vec<WindowRecord>,
}

/// Streams `trajectory` through the full loop. `observe` sees every
/// augmented window together with its assessment.
pub fn run_trajectory_with(
    trajectory: &Trajectory,
    analyzer: &dyn ScreenAnalyzer,
    assessor: &dyn Assessor,
    library: &mut SkillLibrary,
    config: &PipelineConfig,
    mut observe: impl FnMut(&AugmentedWindow, &Assessment),
) -> Result<TrajectoryRun, PipelineError> {
    let windows = enumerate_windows(trajectory.len(), &config.stream)?;
    let mut memory = MemoryStore::new();
    let mut parsed: Vec<AppEvent> = Vec::with_capacity(trajectory.len());
    let mut records = Vec::with_capacity(windows.len());
    for (index, (start, end)) in windows.into_iter().enumerate() {
        while parsed.len() <= end {
            let event = analyzer.parse_event(&trajectory.events[parsed.len()]);
            memory.update(&event)?;
            parsed.push(event);
        }
        let window = ObservationWindow::from_events(&parsed, start, end);
        let aug = build_augmented_window(window, &memory, library, config.budget, &config.weights);
        let assessment = assessor.assess(&aug, library).map_err(|source| PipelineError::Assess {
            id: trajectory.trajectory_id.clone(),
            source,
        })?;
        observe(&aug, &assessment);
        let scam_memory_entries = trajectory
            .scam_segment
            .as_ref()
            .filter(|seg| seg.start < start)
            .map_or(0, |seg| memory.distinct_events_in(seg.start, seg.end.min(start - 1)));
        let evolve_label = match config.evolve {
            EvolveMode::Frozen => None,
            EvolveMode::Predicted => Some(assessment.label).filter(|l| *l != Label::Normal),
            EvolveMode::GroundTruth => trajectory
                .scam_segment
                .as_ref()
                .filter(|seg| overlap(start, end, seg) > 0)
                .map(|_| Label::Scam),
        };
        if let Some(label) = evolve_label {
            let outcome = evolve(library, &assessment.rationale, &aug.window, label)?;
            log::debug!("{} window {index}: {outcome:?}", trajectory.trajectory_id);
        }
        records.push(WindowRecord {
            trajectory_id: trajectory.trajectory_id.clone(),
            window_index: index,
            start,
            end,
            probability: assessment.probability,
            label: assessment.label,
            alert: config.policy.is_alert(assessment.probability),
            rationale: assessment.rationale,
            retrieved_orders: aug.retrieved.iter().map(|h| h.order).collect(),
            scam_memory_entries,
        });
    }
    Ok(TrajectoryRun {
        trajectory_id: trajectory.trajectory_id.clone(),
        windows: records,
    })
}

pub fn run_trajectory(
    trajectory: &Trajectory,
    analyzer: &dyn ScreenAnalyzer,
    assessor: &dyn Assessor,
    library: &mut SkillLibrary,
    config: &PipelineConfig,
) -> Result<TrajectoryRun, PipelineError> {
    run_trajectory_with(trajectory, analyzer, assessor, library, config, |_, _| {})
}

/// Metric input built from stored alert flags.
pub fn metric_input(trajectory: &Trajectory, records: &[WindowRecord], window_size: usize) -> TrajectoryMetricInput {
    TrajectoryMetricInput {
        trajectory_id: trajectory.trajectory_id.clone(),
        length: trajectory.len(),
        segment: trajectory.scam_segment.clone(),
        window_size,
        predictions: records
            .iter()
            .map(|r| WindowPrediction::new(r.start, r.end, r.alert))
            .collect(),
    }
}
