//! Metrics reports recomputed from stored predictions, with per-scam-type
//! and memory-scaling breakdowns.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use scamwatch_core::domain::Trajectory;
use scamwatch_core::metrics::{evaluate, overlap, MetricsReport, TrajectoryMetricInput};
use scamwatch_core::pipeline::{metric_input, WindowRecord};

/// A trajectory whose run was abandoned.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbortedTrajectory {
    pub trajectory_id: String,
    pub error: String,
}

/// The report written by `run`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub assessor: String,
    pub tau: f64,
    pub metrics: MetricsReport,
    pub aborted: Vec<AbortedTrajectory>,
}

/// Predictions grouped by trajectory, in id order.
pub fn group_records(records: &[WindowRecord]) -> BTreeMap<&str, Vec<&WindowRecord>> {
    let mut by_id: BTreeMap<&str, Vec<&WindowRecord>> = BTreeMap::new();
    for r in records {
        by_id.entry(r.trajectory_id.as_str()).or_default().push(r);
    }
    for rows in by_id.values_mut() {
        rows.sort_by_key(|r| r.window_index);
    }
    by_id
}

/// Metric inputs for every trajectory that has predictions, sorted by id.
/// Fails on a prediction whose trajectory is not in `dataset`.
pub fn metric_inputs(
    dataset: &[Trajectory],
    records: &[WindowRecord],
    window_size: usize,
) -> Result<Vec<TrajectoryMetricInput>, String> {
    let index: BTreeMap<&str, &Trajectory> = dataset.iter().map(|t| (t.trajectory_id.as_str(), t)).collect();
    group_records(records)
        .into_iter()
        .map(|(id, rows)| {
            let t = index.get(id).ok_or_else(|| format!("id-mismatch: predictions reference unknown trajectory {id}"))?;
            let rows: Vec<WindowRecord> = rows.into_iter().cloned().collect();
            Ok(metric_input(t, &rows, window_size))
        })
        .collect()
}

pub fn build_report(dataset: &[Trajectory], records: &[WindowRecord], window_size: usize) -> Result<MetricsReport, String> {
    Ok(evaluate(&metric_inputs(dataset, records, window_size)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypeRow {
    pub scam_type: String,
    pub n_trajectories: usize,
    pub hr: Option<f64>,
    pub edp_mean: Option<f64>,
    pub par: Option<f64>,
    pub far: Option<f64>,
}

/// One row per entry of `scam_types`, over the scam trajectories of that
/// type that have predictions.
pub fn per_type_rows(
    dataset: &[Trajectory],
    inputs: &[TrajectoryMetricInput],
    scam_types: &BTreeSet<String>,
) -> Vec<TypeRow> {
    let type_of: BTreeMap<&str, &str> = dataset
        .iter()
        .filter_map(|t| t.scam_segment.as_ref().map(|s| (t.trajectory_id.as_str(), s.scam_type.as_str())))
        .collect();
    scam_types
        .iter()
        .map(|ty| {
            let subset: Vec<TrajectoryMetricInput> = inputs
                .iter()
                .filter(|i| type_of.get(i.trajectory_id.as_str()) == Some(&ty.as_str()))
                .cloned()
                .collect();
            let r = evaluate(&subset);
            TypeRow {
                scam_type: ty.clone(),
                n_trajectories: subset.len(),
                hr: r.hr,
                edp_mean: r.edp_mean,
                par: r.par,
                far: r.far,
            }
        })
        .collect()
}

/// Bin bounds over the number of scam-segment memory entries.
pub const MEMORY_BINS: [(usize, Option<usize>); 6] =
    [(0, Some(0)), (1, Some(1)), (2, Some(3)), (4, Some(7)), (8, Some(15)), (16, None)];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub bin: String,
    pub lo: usize,
    pub hi: Option<usize>,
    pub n_windows: usize,
    pub n_correct: usize,
    pub accuracy: Option<f64>,
    /// Windows overlapping a scam segment.
    pub n_scam_windows: usize,
    pub n_detected: usize,
    /// Share of scam windows that raised an alert.
    pub detection_accuracy: Option<f64>,
}

/// Window accuracy binned by scam-related memory available to retrieval. A
/// window is positive when it overlaps the scam segment and correct when
/// its alert flag agrees; detection accuracy covers positive windows only.
pub fn memory_scaling(dataset: &[Trajectory], records: &[WindowRecord]) -> Result<Vec<ScalingRow>, String> {
    let index: BTreeMap<&str, &Trajectory> = dataset.iter().map(|t| (t.trajectory_id.as_str(), t)).collect();
    let mut counts = [(0usize, 0usize, 0usize, 0usize); MEMORY_BINS.len()];
    for r in records {
        let t = index
            .get(r.trajectory_id.as_str())
            .ok_or_else(|| format!("id-mismatch: predictions reference unknown trajectory {}", r.trajectory_id))?;
        let positive = t.scam_segment.as_ref().is_some_and(|s| overlap(r.start, r.end, s) > 0);
        let bin = MEMORY_BINS
            .iter()
            .position(|&(lo, hi)| r.scam_memory_entries >= lo && hi.is_none_or(|h| r.scam_memory_entries <= h))
            .expect("bins cover every count");
        counts[bin].0 += 1;
        counts[bin].1 += usize::from(r.alert == positive);
        if positive {
            counts[bin].2 += 1;
            counts[bin].3 += usize::from(r.alert);
        }
    }
    let share = |a: usize, n: usize| (n > 0).then(|| a as f64 / n as f64);
    Ok(MEMORY_BINS
        .iter()
        .zip(counts)
        .map(|(&(lo, hi), (n, correct, n_scam, detected))| ScalingRow {
            bin: match hi {
                Some(h) if h == lo => lo.to_string(),
                Some(h) => format!("{lo}-{h}"),
                None => format!("{lo}+"),
            },
            lo,
            hi,
            n_windows: n,
            n_correct: correct,
            accuracy: share(correct, n),
            n_scam_windows: n_scam,
            n_detected: detected,
            detection_accuracy: share(detected, n_scam),
        })
        .collect())
}
