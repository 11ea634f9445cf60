//! On-policy self-distillation for the logistic assessor.
//!
//! The teacher is the same logistic model given extra privileged inputs
//! (scam type, how much of the scam's evidence has surfaced, stage
//! progress). Training runs supervised fine-tuning first, then on-policy
//! steps where the student matches the teacher's judgment under reverse KL
//! plus a weighted cross-entropy term.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assessor::{extract_features, sigmoid, LogisticAssessor, LogisticParams, FEATURE_DIM, FEATURE_NAMES};
use crate::context::PassThroughAnalyzer;
use crate::domain::{AlertPolicy, ObservationWindow, Split, Trajectory};
use crate::metrics::{self, coverage, overlap, TrajectoryMetricInput};
use crate::pipeline::{metric_input, run_trajectory_with, EvolveMode, PipelineConfig, PipelineError};
use crate::skills::SkillLibrary;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DistillError {
    #[error("reflection-requires-overlap")]
    ReflectionRequiresOverlap,
    #[error("invalid-distribution: {0}")]
    InvalidDistribution(String),
    #[error("numerical-failure: {0}")]
    NumericalFailure(String),
    #[error("empty-batch")]
    EmptyBatch,
    #[error("invalid-config: {0}")]
    InvalidConfig(String),
    #[error("no-scam-trajectories in train split")]
    NoScamTrajectories,
    #[error("unknown scam type `{0}`")]
    UnknownScamType(String),
    #[error("stale-rollout: built with parameter version {built}, current {current}")]
    StaleRollout { built: u64, current: u64 },
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
}

const FLOOR: f64 = 1e-9;
const SUM_TOLERANCE: f64 = 1e-6;

/// Privileged feature layout: a one-hot over `scam_types`, then the share
/// of the scam's indicator hits already visible, then stage progress.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrivilegedLayout {
    pub scam_types: Vec<String>,
}

impl PrivilegedLayout {
    pub fn new<S: AsRef<str>>(scam_types: &[S]) -> Self {
        let set: BTreeSet<String> = scam_types.iter().map(|s| s.as_ref().to_string()).collect();
        Self {
            scam_types: set.into_iter().collect(),
        }
    }

    pub fn from_dataset(trajectories: &[Trajectory]) -> Self {
        let types: Vec<&str> = trajectories
            .iter()
            .filter_map(|t| t.scam_segment.as_ref().map(|s| s.scam_type.as_str()))
            .collect();
        Self::new(&types)
    }

    pub fn dim(&self) -> usize {
        self.scam_types.len() + 2
    }

    pub fn names(&self) -> Vec<String> {
        self.scam_types
            .iter()
            .map(|t| format!("type:{t}"))
            .chain(["evidence_revealed".to_string(), "stage_progress".to_string()])
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reflection {
    pub text: String,
    pub privileged_features: Vec<f64>,
}

/// Compares the visible window with the full scam trace through the
/// scam type's skill.
pub fn generate_reflection(
    window: &ObservationWindow,
    full_trajectory: &Trajectory,
    library: &SkillLibrary,
    layout: &PrivilegedLayout,
) -> Result<Reflection, DistillError> {
    let seg = full_trajectory
        .scam_segment
        .as_ref()
        .filter(|s| overlap(window.start, window.end, s) > 0)
        .ok_or(DistillError::ReflectionRequiresOverlap)?;
    let type_index = layout
        .scam_types
        .iter()
        .position(|t| *t == seg.scam_type)
        .ok_or_else(|| DistillError::UnknownScamType(seg.scam_type.clone()))?;
    let progress = coverage(window.start, window.end, seg);
    let seen_end = window.end.min(seg.end);
    let skill = library.get(&seg.scam_type);
    let hits_in = |lo: usize, hi: usize| -> usize {
        skill.map_or(0, |sk| {
            full_trajectory.events[lo..=hi]
                .iter()
                .map(|e| sk.indicator_hits(&e.content_summary))
                .sum()
        })
    };
    let total = hits_in(seg.start, seg.end);
    let revealed = if total == 0 {
        0.0
    } else {
        hits_in(seg.start, seen_end) as f64 / total as f64
    };
    let mut matched: Vec<&str> = Vec::new();
    if let Some(sk) = skill {
        for e in &window.events {
            for m in sk.matched_indicators(&e.content_summary) {
                if !matched.contains(&m) {
                    matched.push(m);
                }
            }
        }
    }
    let next = skill
        .and_then(|sk| {
            let seq = &sk.typical_app_sequence;
            let last = window.events.iter().rev().find_map(|e| seq.iter().position(|c| *c == e.app_category));
            match last {
                Some(i) => seq.get(i + 1).copied(),
                None => seq.first().copied(),
            }
        })
        .map_or_else(|| "none".to_string(), |c| c.to_string());
    let remaining = seg.end.saturating_sub(window.end);
    let text = format!(
        "{}: indicators so far [{}]; next expected category {next}; {remaining} of {} scam events still to come",
        seg.scam_type,
        matched.join(", "),
        seg.len(),
    );
    let mut z = vec![0.0; layout.dim()];
    z[type_index] = 1.0;
    z[layout.scam_types.len()] = revealed;
    z[layout.scam_types.len() + 1] = progress;
    Ok(Reflection {
        text,
        privileged_features: z,
    })
}

fn check_distribution(d: &[f64]) -> Result<(), DistillError> {
    if d.is_empty() {
        return Err(DistillError::InvalidDistribution("empty".into()));
    }
    if d.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(DistillError::InvalidDistribution(format!("{d:?} has a negative or non-finite entry")));
    }
    let sum: f64 = d.iter().sum();
    if (sum - 1.0).abs() > SUM_TOLERANCE {
        return Err(DistillError::InvalidDistribution(format!("{d:?} sums to {sum}")));
    }
    Ok(())
}

fn floored(d: &[f64]) -> Vec<f64> {
    let raised: Vec<f64> = d.iter().map(|v| v.max(FLOOR)).collect();
    let sum: f64 = raised.iter().sum();
    raised.into_iter().map(|v| v / sum).collect()
}

/// `KL(student || teacher)` over categorical distributions.
pub fn reverse_kl(student: &[f64], teacher: &[f64]) -> Result<f64, DistillError> {
    check_distribution(student)?;
    check_distribution(teacher)?;
    if student.len() != teacher.len() {
        return Err(DistillError::InvalidDistribution("support sizes differ".into()));
    }
    let (s, t) = (floored(student), floored(teacher));
    let kl: f64 = s.iter().zip(&t).map(|(a, b)| a * (a / b).ln()).sum();
    Ok(kl.max(0.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingItem {
    pub features: Vec<f64>,
    /// Present exactly when the window overlaps the scam segment.
    pub privileged: Option<Vec<f64>>,
    pub label: bool,
    pub overlap: bool,
    /// The window lies inside the scam segment or contains all of it.
    pub saturated: bool,
    pub coverage: f64,
    /// Parameter version of the student that produced this window.
    pub version: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingBatch {
    pub items: Vec<TrainingItem>,
}

/// Parameters behind the teacher pathway during on-policy steps.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TeacherMode {
    /// The parameters reached at the end of fine-tuning.
    #[default]
    Snapshot,
    /// The parameters current at each step.
    Current,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DistillConfig {
    /// Weight of the cross-entropy term.
    pub lambda: f64,
    pub learning_rate: f64,
    pub sft_epochs: usize,
    pub opsd_epochs: usize,
    /// Windows per gradient step during fine-tuning.
    pub batch_size: usize,
    /// Trajectories rolled out per on-policy step.
    pub rollout_trajectories: usize,
    pub seed: u64,
    /// Minimum coverage for an overlapping window to carry the scam label.
    pub coverage_threshold: f64,
    /// Let the skill library evolve during rollouts.
    pub evolve_during_rollouts: bool,
    pub teacher: TeacherMode,
}

impl Default for DistillConfig {
    fn default() -> Self {
        Self {
            lambda: 0.1,
            learning_rate: 0.5,
            sft_epochs: 30,
            opsd_epochs: 30,
            batch_size: 32,
            rollout_trajectories: 8,
            seed: 7,
            coverage_threshold: 0.5,
            evolve_during_rollouts: false,
            teacher: TeacherMode::Snapshot,
        }
    }
}

impl DistillConfig {
    pub fn check(&self) -> Result<(), DistillError> {
        let bad = |m: &str| Err(DistillError::InvalidConfig(m.to_string()));
        if self.lambda.is_nan() || self.lambda <= 0.0 {
            return bad("lambda must be > 0");
        }
        if self.learning_rate.is_nan() || self.learning_rate <= 0.0 {
            return bad("learning_rate must be > 0");
        }
        if self.batch_size == 0 || self.rollout_trajectories == 0 {
            return bad("batch sizes must be >= 1");
        }
        if !(0.0..=1.0).contains(&self.coverage_threshold) {
            return bad("coverage_threshold must lie in [0, 1]");
        }
        Ok(())
    }
}

fn softplus(a: f64) -> f64 {
    if a > 0.0 {
        a + (-a).exp().ln_1p()
    } else {
        a.exp().ln_1p()
    }
}

/// Binary cross-entropy of logit `a` against label `y`.
fn ce(a: f64, y: bool) -> f64 {
    softplus(a) - if y { a } else { 0.0 }
}

/// Binary `KL(sigmoid(a) || sigmoid(b))` and its derivative in `a`.
fn binary_kl(a: f64, b: f64) -> (f64, f64) {
    let p = sigmoid(a);
    let (ln_p, ln_1p) = (-softplus(-a), -softplus(a));
    let (ln_q, ln_1q) = (-softplus(-b), -softplus(b));
    let d_pos = ln_p - ln_q;
    let d_neg = ln_1p - ln_1q;
    let kl = p * d_pos + (1.0 - p) * d_neg;
    (kl.max(0.0), p * (1.0 - p) * (d_pos - d_neg))
}

fn check_item(item: &TrainingItem, params: &LogisticParams) -> Result<(), DistillError> {
    if item.features.len() != FEATURE_DIM || params.theta_shared.len() != FEATURE_DIM {
        return Err(DistillError::InvalidConfig("feature dimension mismatch".into()));
    }
    if item.overlap != item.privileged.is_some() {
        return Err(DistillError::InvalidConfig("privileged features present iff overlap".into()));
    }
    if let Some(z) = &item.privileged {
        if z.len() != params.theta_priv.len() {
            return Err(DistillError::InvalidConfig("privileged dimension mismatch".into()));
        }
    }
    Ok(())
}

fn finite(loss: f64, what: &str) -> Result<f64, DistillError> {
    if loss.is_finite() {
        Ok(loss)
    } else {
        Err(DistillError::NumericalFailure(format!("{what} is {loss}")))
    }
}

/// Distillation objective with the teacher read from `teacher` and held
/// constant. Returns the mean loss and its gradient; only `theta_shared`
/// receives gradient.
pub fn combined_loss_against(
    batch: &TrainingBatch,
    params: &LogisticParams,
    teacher: &LogisticParams,
    config: &DistillConfig,
) -> Result<(f64, LogisticParams), DistillError> {
    if batch.items.is_empty() {
        return Err(DistillError::EmptyBatch);
    }
    let mut grad = LogisticParams::zeros(params.theta_priv.len());
    let mut total = 0.0;
    for item in &batch.items {
        check_item(item, params)?;
        let a = params.student_logit(&item.features);
        let p = sigmoid(a);
        let (loss, da) = match &item.privileged {
            Some(z) => {
                let b = teacher.teacher_logit(&item.features, z);
                let (kl, dkl) = binary_kl(a, b);
                if item.coverage >= config.coverage_threshold {
                    (kl + config.lambda * ce(a, true), dkl + config.lambda * (p - 1.0))
                } else {
                    (kl, dkl)
                }
            }
            None => (ce(a, false), p),
        };
        total += finite(loss, "item loss")?;
        for (g, x) in grad.theta_shared.iter_mut().zip(&item.features) {
            *g += da * x;
        }
    }
    let n = batch.items.len() as f64;
    grad.theta_shared.iter_mut().for_each(|g| *g /= n);
    Ok((finite(total / n, "batch loss")?, grad))
}

/// [`combined_loss_against`] with the teacher taken from `params` itself.
pub fn combined_loss(
    batch: &TrainingBatch,
    params: &LogisticParams,
    config: &DistillConfig,
) -> Result<(f64, LogisticParams), DistillError> {
    combined_loss_against(batch, params, params, config)
}

/// Supervised objective on clean windows: benign windows carry label 0 and
/// saturated windows label 1. Saturated windows also train the teacher
/// pathway, so gradients reach both parameter blocks. Other overlapping
/// windows are rejected.
pub fn sft_loss(batch: &TrainingBatch, params: &LogisticParams) -> Result<(f64, LogisticParams), DistillError> {
    if batch.items.is_empty() {
        return Err(DistillError::EmptyBatch);
    }
    let mut grad = LogisticParams::zeros(params.theta_priv.len());
    let mut total = 0.0;
    for item in &batch.items {
        check_item(item, params)?;
        if item.overlap && !item.saturated {
            return Err(DistillError::InvalidConfig("fine-tuning takes clean windows only".into()));
        }
        let y = if item.saturated { 1.0 } else { 0.0 };
        let a = params.student_logit(&item.features);
        total += ce(a, item.saturated);
        let da = sigmoid(a) - y;
        for (g, x) in grad.theta_shared.iter_mut().zip(&item.features) {
            *g += da * x;
        }
        if let Some(z) = &item.privileged {
            let b = params.teacher_logit(&item.features, z);
            total += ce(b, true);
            let db = sigmoid(b) - 1.0;
            for (g, x) in grad.theta_shared.iter_mut().zip(&item.features) {
                *g += db * x;
            }
            for (g, v) in grad.theta_priv.iter_mut().zip(z) {
                *g += db * v;
            }
        }
    }
    let n = batch.items.len() as f64;
    grad.theta_shared.iter_mut().chain(grad.theta_priv.iter_mut()).for_each(|g| *g /= n);
    Ok((finite(total / n, "sft loss")?, grad))
}

fn descend(params: &mut LogisticParams, grad: &LogisticParams, lr: f64, shared_only: bool) {
    for (w, g) in params.theta_shared.iter_mut().zip(&grad.theta_shared) {
        *w -= lr * g;
    }
    if !shared_only {
        for (w, g) in params.theta_priv.iter_mut().zip(&grad.theta_priv) {
            *w -= lr * g;
        }
    }
}

/// Streams `trajectory` with the student `params` and turns every window
/// into a training item tagged with `version`.
pub fn rollout(
    trajectory: &Trajectory,
    params: &LogisticParams,
    version: u64,
    library: &mut SkillLibrary,
    layout: &PrivilegedLayout,
    pipeline: &PipelineConfig,
    config: &DistillConfig,
) -> Result<Vec<TrainingItem>, DistillError> {
    let student = LogisticAssessor::new(params.clone())
        .map_err(|e| DistillError::NumericalFailure(e.to_string()))?;
    let mut windows = Vec::new();
    let snapshot = library.clone();
    run_trajectory_with(trajectory, &PassThroughAnalyzer, &student, library, pipeline, |aug, _| {
        windows.push((aug.clone(), extract_features(aug, &snapshot)));
    })?;
    let mut items = Vec::with_capacity(windows.len());
    for (aug, x) in windows {
        let w = &aug.window;
        let seg = trajectory.scam_segment.as_ref();
        let ov = seg.map_or(0, |s| overlap(w.start, w.end, s));
        let cov = seg.map_or(0.0, |s| coverage(w.start, w.end, s));
        let privileged = if ov > 0 {
            Some(generate_reflection(w, trajectory, &snapshot, layout)?.privileged_features)
        } else {
            None
        };
        items.push(TrainingItem {
            features: x.0.to_vec(),
            privileged,
            label: ov > 0 && cov >= config.coverage_threshold,
            overlap: ov > 0,
            saturated: seg.is_some_and(|s| ov == (w.end - w.start + 1).min(s.len())),
            coverage: cov,
            version,
        });
    }
    Ok(items)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub epoch: usize,
    pub stage: String,
    pub loss: f64,
    pub par: Option<f64>,
    pub far: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOutcome {
    pub params: LogisticParams,
    /// Parameters at the end of fine-tuning, before on-policy steps.
    pub sft_params: LogisticParams,
    pub layout: PrivilegedLayout,
    pub log: Vec<LogRow>,
}

/// Serialized parameter file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamFile {
    pub version: u32,
    pub feature_names: Vec<String>,
    pub theta_shared: Vec<f64>,
    pub theta_priv: Vec<f64>,
    pub priv_feature_names: Vec<String>,
}

impl ParamFile {
    pub fn new(params: &LogisticParams, layout: &PrivilegedLayout) -> Self {
        Self {
            version: 1,
            feature_names: FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
            theta_shared: params.theta_shared.clone(),
            theta_priv: params.theta_priv.clone(),
            priv_feature_names: layout.names(),
        }
    }

    pub fn params(&self) -> Result<LogisticParams, DistillError> {
        if self.feature_names.iter().map(String::as_str).ne(FEATURE_NAMES.iter().copied()) {
            return Err(DistillError::InvalidConfig("feature_names do not match this build".into()));
        }
        if self.theta_priv.len() != self.priv_feature_names.len() {
            return Err(DistillError::InvalidConfig("theta_priv and priv_feature_names differ in length".into()));
        }
        Ok(LogisticParams {
            theta_shared: self.theta_shared.clone(),
            theta_priv: self.theta_priv.clone(),
        })
    }
}

/// Student PAR and FAR at the default threshold.
pub fn evaluate_student(
    trajectories: &[Trajectory],
    params: &LogisticParams,
    library: &SkillLibrary,
    pipeline: &PipelineConfig,
) -> Result<(Option<f64>, Option<f64>), DistillError> {
    let student = LogisticAssessor::new(params.clone())
        .map_err(|e| DistillError::NumericalFailure(e.to_string()))?;
    let cfg = PipelineConfig {
        policy: AlertPolicy::default(),
        evolve: EvolveMode::Frozen,
        ..pipeline.clone()
    };
    let mut inputs: Vec<TrajectoryMetricInput> = Vec::with_capacity(trajectories.len());
    for t in trajectories {
        let mut lib = library.clone();
        let run = crate::pipeline::run_trajectory(t, &PassThroughAnalyzer, &student, &mut lib, &cfg)?;
        inputs.push(metric_input(t, &run.windows, cfg.stream.window_size));
    }
    Ok((metrics::par(&inputs).ok(), metrics::false_alert_rate(&inputs).ok()))
}

/// Two-stage training over the train split; the validation split (when
/// present) is the held-out slice for the log.
pub fn train(
    dataset: &[Trajectory],
    library: &SkillLibrary,
    config: &DistillConfig,
    pipeline: &PipelineConfig,
) -> Result<TrainOutcome, DistillError> {
    config.check()?;
    let mut train_set: Vec<&Trajectory> = dataset.iter().filter(|t| t.split_tag == Split::Train).collect();
    train_set.sort_by(|a, b| a.trajectory_id.cmp(&b.trajectory_id));
    if !train_set.iter().any(|t| t.is_scam()) {
        return Err(DistillError::NoScamTrajectories);
    }
    let mut held_out: Vec<Trajectory> = dataset
        .iter()
        .filter(|t| t.split_tag == Split::Validation)
        .cloned()
        .collect();
    held_out.sort_by(|a, b| a.trajectory_id.cmp(&b.trajectory_id));
    let owned: Vec<Trajectory> = train_set.iter().map(|t| (*t).clone()).collect();
    let layout = PrivilegedLayout::from_dataset(&owned);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut params = LogisticParams::zeros(layout.dim());
    let mut log = Vec::new();
    let rollout_cfg = PipelineConfig {
        evolve: if config.evolve_during_rollouts {
            EvolveMode::Predicted
        } else {
            EvolveMode::Frozen
        },
        ..pipeline.clone()
    };
    let frozen_cfg = PipelineConfig {
        evolve: EvolveMode::Frozen,
        ..pipeline.clone()
    };
    let held_out_metrics = |p: &LogisticParams, lib: &SkillLibrary| -> Result<(Option<f64>, Option<f64>), DistillError> {
        if held_out.is_empty() {
            Ok((None, None))
        } else {
            evaluate_student(&held_out, p, lib, pipeline)
        }
    };

    let mut items = Vec::new();
    for t in &owned {
        items.extend(rollout(t, &params, 0, &mut library.clone(), &layout, &frozen_cfg, config)?);
    }
    items.retain(|i| !i.overlap || i.saturated);
    for epoch in 0..config.sft_epochs {
        items.shuffle(&mut rng);
        let mut losses = Vec::new();
        for chunk in items.chunks(config.batch_size) {
            let batch = TrainingBatch { items: chunk.to_vec() };
            let (loss, grad) = sft_loss(&batch, &params)?;
            descend(&mut params, &grad, config.learning_rate, false);
            losses.push(loss);
        }
        let (par, far) = held_out_metrics(&params, library)?;
        log.push(LogRow {
            epoch,
            stage: "sft".into(),
            loss: losses.iter().sum::<f64>() / losses.len().max(1) as f64,
            par,
            far,
        });
    }
    let sft_params = params.clone();

    let mut skills = library.clone();
    let mut version: u64 = 0;
    for epoch in 0..config.opsd_epochs {
        let mut order: Vec<&Trajectory> = owned.iter().collect();
        order.shuffle(&mut rng);
        let mut losses = Vec::new();
        for chunk in order.chunks(config.rollout_trajectories) {
            let built = version;
            let mut batch = TrainingBatch::default();
            for t in chunk {
                batch.items.extend(rollout(t, &params, built, &mut skills, &layout, &rollout_cfg, config)?);
            }
            if let Some(stale) = batch.items.iter().find(|i| i.version != version) {
                return Err(DistillError::StaleRollout {
                    built: stale.version,
                    current: version,
                });
            }
            let teacher = match config.teacher {
                TeacherMode::Snapshot => sft_params.clone(),
                TeacherMode::Current => params.clone(),
            };
            let (loss, grad) = combined_loss_against(&batch, &params, &teacher, config)?;
            descend(&mut params, &grad, config.learning_rate, true);
            version += 1;
            losses.push(loss);
        }
        let (par, far) = held_out_metrics(&params, &skills)?;
        log.push(LogRow {
            epoch,
            stage: "opsd".into(),
            loss: losses.iter().sum::<f64>() / losses.len().max(1) as f64,
            par,
            far,
        });
    }
    if !params.is_finite() {
        return Err(DistillError::NumericalFailure("parameters diverged".into()));
    }
    Ok(TrainOutcome {
        params,
        sft_params,
        layout,
        log,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{AppCategory, AppEvent, ScamSegment};
    use crate::skills::CATALOG_TYPES;

    const INVEST: &str = "fake_online_investment_financial_scam";

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn kl_hand_values() {
        assert_eq!(reverse_kl(&[0.3, 0.7], &[0.3, 0.7]).unwrap(), 0.0);
        assert!(close(reverse_kl(&[0.5, 0.5], &[0.9, 0.1]).unwrap(), 0.5 * (25.0f64 / 9.0).ln(), 1e-9));
        let other = 0.9 * 1.8f64.ln() + 0.1 * 0.2f64.ln();
        assert!(close(reverse_kl(&[0.9, 0.1], &[0.5, 0.5]).unwrap(), other, 1e-9));
        assert!(close(other, 0.3681, 1e-4));
    }

    #[test]
    fn kl_rejects_non_distributions() {
        assert!(reverse_kl(&[0.5, 0.6], &[0.5, 0.5]).is_err());
        assert!(reverse_kl(&[-0.1, 1.1], &[0.5, 0.5]).is_err());
        assert!(reverse_kl(&[1.0], &[0.5, 0.5]).is_err());
        assert!(reverse_kl(&[1.0, 0.0], &[0.5, 0.5]).unwrap().is_finite());
    }

    #[test]
    fn binary_kl_agrees_with_categorical() {
        for (a, b) in [(0.3, -1.2), (2.0, 2.0), (-4.0, 1.5)] {
            let (p, q) = (sigmoid(a), sigmoid(b));
            let want = reverse_kl(&[1.0 - p, p], &[1.0 - q, q]).unwrap();
            assert!(close(binary_kl(a, b).0, want, 1e-12));
        }
    }

    fn item(x: f64, privileged: Option<Vec<f64>>, coverage: f64) -> TrainingItem {
        let mut features = vec![0.0; FEATURE_DIM];
        features[0] = x;
        features[FEATURE_DIM - 1] = 1.0;
        TrainingItem {
            overlap: privileged.is_some(),
            label: coverage >= 0.5,
            saturated: false,
            privileged,
            features,
            coverage,
            version: 0,
        }
    }

    #[test]
    fn benign_batch_is_mean_cross_entropy() {
        let mut params = LogisticParams::zeros(1);
        params.theta_shared[0] = 1.5;
        let batch = TrainingBatch {
            items: vec![item(1.0, None, 0.0), item(-2.0, None, 0.0)],
        };
        let (loss, _) = combined_loss(&batch, &params, &DistillConfig::default()).unwrap();
        let want = (ce(1.5, false) + ce(-3.0, false)) / 2.0;
        assert!(close(loss, want, 1e-12));
        assert!(close(ce(1.5, false), (1.0 + 1.5f64.exp()).ln(), 1e-12));
    }

    #[test]
    fn kl_vanishes_when_teacher_matches_student() {
        let mut params = LogisticParams::zeros(1);
        params.theta_shared[0] = 0.7;
        let batch = TrainingBatch {
            items: vec![item(1.0, Some(vec![1.0]), 0.8), item(0.5, Some(vec![1.0]), 0.9)],
        };
        let cfg = DistillConfig::default();
        let (loss, _) = combined_loss(&batch, &params, &cfg).unwrap();
        let want = cfg.lambda * (ce(0.7, true) + ce(0.35, true)) / 2.0;
        assert!(close(loss, want, 1e-12));
    }

    #[test]
    fn low_coverage_overlap_is_kl_only() {
        let mut params = LogisticParams::zeros(1);
        params.theta_priv[0] = 2.0;
        let batch = TrainingBatch {
            items: vec![item(1.0, Some(vec![1.0]), 0.2)],
        };
        let (loss, _) = combined_loss(&batch, &params, &DistillConfig::default()).unwrap();
        assert!(close(loss, binary_kl(0.0, 2.0).0, 1e-12));
    }

    #[test]
    fn privileged_presence_must_match_overlap() {
        let mut bad = item(1.0, None, 0.0);
        bad.overlap = true;
        let batch = TrainingBatch { items: vec![bad] };
        assert!(combined_loss(&batch, &LogisticParams::zeros(1), &DistillConfig::default()).is_err());
        assert_eq!(
            combined_loss(&TrainingBatch::default(), &LogisticParams::zeros(1), &DistillConfig::default()).unwrap_err(),
            DistillError::EmptyBatch
        );
    }

    #[test]
    fn nan_forward_pass_rejected() {
        let mut params = LogisticParams::zeros(1);
        params.theta_shared[0] = f64::NAN;
        let batch = TrainingBatch {
            items: vec![item(1.0, None, 0.0)],
        };
        let err = combined_loss(&batch, &params, &DistillConfig::default()).unwrap_err();
        assert!(err.to_string().starts_with("numerical-failure"));
    }

    fn investment_trajectory() -> Trajectory {
        use AppCategory::*;
        let mut events: Vec<AppEvent> = (0..30).map(|i| AppEvent::new(i, Multimedia, None, "watched clips", &[])).collect();
        let scam = [
            (SocialMedia, "ad promising high returns"),
            (InstantMessaging, "invited to a private group"),
            (InstantMessaging, "mentor shares investment advice"),
            (Tools, "installs investment app via qr code"),
            (Tools, "account setup"),
            (Financial, "test transaction"),
            (Financial, "larger deposit"),
            (Financial, "balance grows"),
            (Financial, "withdrawal blocked"),
            (InstantMessaging, "asked to pay fees"),
        ];
        for (k, (cat, text)) in scam.iter().enumerate() {
            events[10 + k] = AppEvent::new(10 + k, *cat, None, text, &[]);
        }
        Trajectory {
            trajectory_id: "inv".into(),
            split_tag: Split::Train,
            events,
            scam_segment: Some(ScamSegment::new(10, 19, INVEST)),
        }
    }

    #[test]
    fn reflection_progress_and_text() {
        let t = investment_trajectory();
        let lib = SkillLibrary::seeded(CATALOG_TYPES);
        let layout = PrivilegedLayout::new(&[INVEST, "part_time_job_task_scam"]);
        let full = ObservationWindow::from_events(&t.events, 10, 19);
        let r = generate_reflection(&full, &t, &lib, &layout).unwrap();
        assert_eq!(*r.privileged_features.last().unwrap(), 1.0);
        assert_eq!(r.privileged_features[layout.scam_types.len()], 1.0);
        assert!(r.text.contains(INVEST));
        assert!(r.text.contains("high returns"));
        let one_hot: f64 = r.privileged_features[..layout.scam_types.len()].iter().sum();
        assert_eq!(one_hot, 1.0);

        let half = ObservationWindow::from_events(&t.events, 5, 14);
        let r = generate_reflection(&half, &t, &lib, &layout).unwrap();
        assert_eq!(*r.privileged_features.last().unwrap(), 0.5);
        assert!(r.privileged_features[layout.scam_types.len()] < 1.0);

        let before = ObservationWindow::from_events(&t.events, 0, 9);
        assert_eq!(
            generate_reflection(&before, &t, &lib, &layout).unwrap_err(),
            DistillError::ReflectionRequiresOverlap
        );
    }

    #[test]
    fn rollout_items_respect_privilege_split() {
        let t = investment_trajectory();
        let mut lib = SkillLibrary::seeded(CATALOG_TYPES);
        let layout = PrivilegedLayout::new(&[INVEST]);
        let items = rollout(&t, &LogisticParams::zeros(layout.dim()), 3, &mut lib, &layout, &PipelineConfig::default(), &DistillConfig::default())
            .unwrap();
        assert_eq!(items.len(), 5);
        for it in &items {
            assert_eq!(it.features.len(), FEATURE_DIM);
            assert_eq!(it.privileged.is_some(), it.overlap);
            assert_eq!(it.version, 3);
        }
        assert!(items.iter().any(|i| i.saturated));
    }

    #[test]
    fn training_requires_scam_in_train_split() {
        let mut t = investment_trajectory();
        t.split_tag = Split::Test;
        let err = train(&[t], &SkillLibrary::new(), &DistillConfig::default(), &PipelineConfig::default()).unwrap_err();
        assert_eq!(err, DistillError::NoScamTrajectories);
    }

    #[test]
    fn param_file_round_trip() {
        let layout = PrivilegedLayout::new(&["b", "a"]);
        let mut p = LogisticParams::zeros(layout.dim());
        p.theta_shared[3] = 0.25;
        let file = ParamFile::new(&p, &layout);
        assert_eq!(file.priv_feature_names, vec!["type:a", "type:b", "evidence_revealed", "stage_progress"]);
        let back: ParamFile = serde_json::from_str(&serde_json::to_string(&file).unwrap()).unwrap();
        assert_eq!(back.params().unwrap(), p);
    }
}
