//! Streaming early-warning metrics.
//!
//! All metrics work on the binary per-window scam flag (after the alert
//! policy). With a trajectory of length `L`, scam segment `[s, e]` and a
//! window `[s_w, e_w]`:
//!
//! * a *valid detection* is a flagged window with `e_w` in `[s, e]`;
//! * EDP is the smallest `(e_w - s) / (e - s + 1)` over valid detections,
//!   or 1 when there is none;
//! * HR is the fraction of scam trajectories with at least one valid detection;
//! * PAR is the fraction of *candidate* windows (`e_w` in `[s, e]` and
//!   coverage at least 0.5) that are flagged, micro-averaged over trajectories;
//! * FAR is the fraction of flagged windows among windows with no overlap
//!   with the segment (every window of a normal trajectory qualifies).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::ScamSegment;

/// Minimum scam coverage for a window to be a pre-alert candidate.
pub const CANDIDATE_COVERAGE: f64 = 0.5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("window end {end} outside scam segment [{start}, {seg_end}]")]
    OutsideSegment { end: usize, start: usize, seg_end: usize },
    #[error("edp-requires-scam-segment")]
    EdpRequiresSegment,
    #[error("par-undefined: no candidate windows")]
    ParUndefined,
    #[error("hr-undefined: no scam trajectories")]
    HitRateUndefined,
    #[error("far-undefined: no windows outside scam segments")]
    FarUndefined,
    #[error("consistency-undefined: fewer than 2 predictions")]
    ConsistencyUndefined,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowPrediction {
    pub start: usize,
    pub end: usize,
    pub scam_flag: bool,
}

impl WindowPrediction {
    pub fn new(start: usize, end: usize, scam_flag: bool) -> Self {
        Self {
            start,
            end,
            scam_flag,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryMetricInput {
    pub trajectory_id: String,
    pub length: usize,
    pub segment: Option<ScamSegment>,
    pub window_size: usize,
    /// Sorted by window end, one prediction per end.
    pub predictions: Vec<WindowPrediction>,
}

pub fn normalized_position(window_end: usize, segment: &ScamSegment) -> Result<f64, MetricsError> {
    if !segment.contains(window_end) {
        return Err(MetricsError::OutsideSegment {
            end: window_end,
            start: segment.start,
            seg_end: segment.end,
        });
    }
    Ok((window_end - segment.start) as f64 / segment.len() as f64)
}

/// Fraction of the segment covered by the window `[start, end]`.
pub fn coverage(start: usize, end: usize, segment: &ScamSegment) -> f64 {
    overlap(start, end, segment) as f64 / segment.len() as f64
}

/// Number of indices shared by `[start, end]` and the segment.
pub fn overlap(start: usize, end: usize, segment: &ScamSegment) -> usize {
    let lo = start.max(segment.start);
    let hi = end.min(segment.end);
    if lo > hi {
        0
    } else {
        hi - lo + 1
    }
}

pub fn is_candidate(pred: &WindowPrediction, segment: &ScamSegment) -> bool {
    segment.contains(pred.end) && coverage(pred.start, pred.end, segment) >= CANDIDATE_COVERAGE
}

fn valid_positions<'a>(
    input: &'a TrajectoryMetricInput,
    segment: &'a ScamSegment,
) -> impl Iterator<Item = f64> + 'a {
    input
        .predictions
        .iter()
        .filter(move |p| p.scam_flag && segment.contains(p.end))
        .map(move |p| (p.end - segment.start) as f64 / segment.len() as f64)
}

pub fn edp(input: &TrajectoryMetricInput) -> Result<f64, MetricsError> {
    let segment = input
        .segment
        .as_ref()
        .ok_or(MetricsError::EdpRequiresSegment)?;
    Ok(valid_positions(input, segment).fold(1.0, f64::min))
}

/// True when the trajectory has at least one valid detection.
pub fn is_hit(input: &TrajectoryMetricInput) -> Result<bool, MetricsError> {
    let segment = input
        .segment
        .as_ref()
        .ok_or(MetricsError::EdpRequiresSegment)?;
    Ok(valid_positions(input, segment).next().is_some())
}

/// (flagged candidates, candidates) for one trajectory.
pub fn candidate_counts(input: &TrajectoryMetricInput) -> (usize, usize) {
    match &input.segment {
        None => (0, 0),
        Some(seg) => input
            .predictions
            .iter()
            .filter(|p| is_candidate(p, seg))
            .fold((0, 0), |(f, n), p| (f + usize::from(p.scam_flag), n + 1)),
    }
}

/// (flagged, total) over windows with zero segment overlap.
pub fn zero_overlap_counts(input: &TrajectoryMetricInput) -> (usize, usize) {
    input
        .predictions
        .iter()
        .filter(|p| match &input.segment {
            None => true,
            Some(seg) => overlap(p.start, p.end, seg) == 0,
        })
        .fold((0, 0), |(f, n), p| (f + usize::from(p.scam_flag), n + 1))
}

pub fn par(inputs: &[TrajectoryMetricInput]) -> Result<f64, MetricsError> {
    let (flagged, total) = inputs
        .iter()
        .map(candidate_counts)
        .fold((0, 0), |(a, b), (f, n)| (a + f, b + n));
    if total == 0 {
        return Err(MetricsError::ParUndefined);
    }
    Ok(flagged as f64 / total as f64)
}

pub fn hit_rate(inputs: &[TrajectoryMetricInput]) -> Result<f64, MetricsError> {
    let mut scams = 0usize;
    let mut hits = 0usize;
    for input in inputs.iter().filter(|i| i.segment.is_some()) {
        scams += 1;
        hits += usize::from(is_hit(input)?);
    }
    if scams == 0 {
        return Err(MetricsError::HitRateUndefined);
    }
    Ok(hits as f64 / scams as f64)
}

pub fn false_alert_rate(inputs: &[TrajectoryMetricInput]) -> Result<f64, MetricsError> {
    let (flagged, total) = inputs
        .iter()
        .map(zero_overlap_counts)
        .fold((0, 0), |(a, b), (f, n)| (a + f, b + n));
    if total == 0 {
        return Err(MetricsError::FarUndefined);
    }
    Ok(flagged as f64 / total as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Consistency {
    pub consistency: f64,
    pub inconsistency_rate: f64,
    pub flip_count: usize,
}

pub fn consistency_metrics(predictions: &[WindowPrediction]) -> Result<Consistency, MetricsError> {
    if predictions.len() < 2 {
        return Err(MetricsError::ConsistencyUndefined);
    }
    let flips = predictions
        .windows(2)
        .filter(|w| w[0].scam_flag != w[1].scam_flag)
        .count();
    let rate = flips as f64 / (predictions.len() - 1) as f64;
    Ok(Consistency {
        consistency: 1.0 - rate,
        inconsistency_rate: rate,
        flip_count: flips,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryMetrics {
    pub trajectory_id: String,
    pub is_scam: bool,
    pub n_windows: usize,
    pub edp: Option<f64>,
    pub hit: Option<bool>,
    pub n_candidates: usize,
    pub n_flagged_candidates: usize,
    pub n_zero_overlap: usize,
    pub n_false_alerts: usize,
    pub flips: Option<usize>,
}

/// Corpus-level report. A metric is `None` when its denominator is empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub hr: Option<f64>,
    pub edp_mean: Option<f64>,
    pub far: Option<f64>,
    pub par: Option<f64>,
    pub consistency: Option<f64>,
    pub inconsistency_rate: Option<f64>,
    pub flip_count_mean: Option<f64>,
    pub n_scam_trajectories: usize,
    pub n_normal_trajectories: usize,
    pub per_trajectory: Vec<TrajectoryMetrics>,
}

impl MetricsReport {
    pub fn is_fully_populated(&self) -> bool {
        [
            self.hr,
            self.edp_mean,
            self.far,
            self.par,
            self.consistency,
            self.inconsistency_rate,
            self.flip_count_mean,
        ]
        .iter()
        .all(Option::is_some)
    }
}

/// Computes every metric over `inputs`. Per-trajectory records follow input
/// order; callers sort inputs by trajectory id for reproducible output.
///
/// Consistency figures are means of per-trajectory values over trajectories
/// with at least two windows.
pub fn evaluate(inputs: &[TrajectoryMetricInput]) -> MetricsReport {
    let mut per_trajectory = Vec::with_capacity(inputs.len());
    let mut edps = Vec::new();
    let mut rates = Vec::new();
    let mut flips = Vec::new();
    for input in inputs {
        let (n_flagged_candidates, n_candidates) = candidate_counts(input);
        let (n_false_alerts, n_zero_overlap) = zero_overlap_counts(input);
        let edp_value = edp(input).ok();
        if let Some(v) = edp_value {
            edps.push(v);
        }
        let cons = consistency_metrics(&input.predictions).ok();
        if let Some(c) = cons {
            rates.push(c.inconsistency_rate);
            flips.push(c.flip_count as f64);
        }
        per_trajectory.push(TrajectoryMetrics {
            trajectory_id: input.trajectory_id.clone(),
            is_scam: input.segment.is_some(),
            n_windows: input.predictions.len(),
            edp: edp_value,
            hit: is_hit(input).ok(),
            n_candidates,
            n_flagged_candidates,
            n_zero_overlap,
            n_false_alerts,
            flips: cons.map(|c| c.flip_count),
        });
    }
    let mean = |xs: &[f64]| {
        if xs.is_empty() {
            None
        } else {
            Some(xs.iter().sum::<f64>() / xs.len() as f64)
        }
    };
    let inconsistency_rate = mean(&rates);
    let n_scam = inputs.iter().filter(|i| i.segment.is_some()).count();
    MetricsReport {
        hr: hit_rate(inputs).ok(),
        edp_mean: mean(&edps),
        far: false_alert_rate(inputs).ok(),
        par: par(inputs).ok(),
        consistency: inconsistency_rate.map(|r| 1.0 - r),
        inconsistency_rate,
        flip_count_mean: mean(&flips),
        n_scam_trajectories: n_scam,
        n_normal_trajectories: inputs.len() - n_scam,
        per_trajectory,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seg(s: usize, e: usize) -> ScamSegment {
        ScamSegment::new(s, e, "t")
    }

    fn input(len: usize, segment: Option<ScamSegment>, w: usize, preds: &[(usize, bool)]) -> TrajectoryMetricInput {
        TrajectoryMetricInput {
            trajectory_id: "t".into(),
            length: len,
            segment,
            window_size: w,
            predictions: preds
                .iter()
                .map(|&(end, f)| WindowPrediction::new(end + 1 - w, end, f))
                .collect(),
        }
    }

    #[test]
    fn normalized_positions() {
        let s = seg(10, 14);
        assert_eq!(normalized_position(10, &s).unwrap(), 0.0);
        assert!((normalized_position(12, &s).unwrap() - 0.4).abs() < 1e-15);
        assert!((normalized_position(14, &s).unwrap() - 0.8).abs() < 1e-15);
        assert!(normalized_position(15, &s).is_err());
    }

    #[test]
    fn edp_cases() {
        let none = input(30, Some(seg(10, 14)), 3, &[(5, true), (20, true)]);
        assert_eq!(edp(&none).unwrap(), 1.0);
        let two = input(30, Some(seg(10, 14)), 3, &[(12, true), (14, true)]);
        assert!((edp(&two).unwrap() - 0.4).abs() < 1e-15);
        let first = input(30, Some(seg(10, 14)), 3, &[(10, true)]);
        assert_eq!(edp(&first).unwrap(), 0.0);
        let normal = input(30, None, 3, &[(10, true)]);
        assert_eq!(edp(&normal).unwrap_err().to_string(), "edp-requires-scam-segment");
    }

    #[test]
    fn coverage_cases() {
        assert_eq!(coverage(5, 14, &seg(10, 19)), 0.5);
        assert_eq!(coverage(0, 4, &seg(10, 19)), 0.0);
        assert_eq!(coverage(0, 30, &seg(10, 19)), 1.0);
    }

    #[test]
    fn par_cases() {
        let x = input(25, Some(seg(10, 19)), 10, &[(9, false), (14, false), (19, true), (24, true)]);
        assert_eq!(candidate_counts(&x), (1, 2));
        assert_eq!(par(&[x]).unwrap(), 0.5);
        // window [3, 12] covers 3 of 10 segment events
        let low = input(25, Some(seg(10, 19)), 10, &[(12, true)]);
        assert_eq!(candidate_counts(&low), (0, 0));
        assert_eq!(par(&[low]).unwrap_err(), MetricsError::ParUndefined);
        let all = input(25, Some(seg(10, 19)), 10, &[(14, true), (19, true)]);
        assert_eq!(par(&[all]).unwrap(), 1.0);
    }

    #[test]
    fn hit_rate_cases() {
        let hit = || input(30, Some(seg(10, 14)), 3, &[(12, true)]);
        let outside = input(30, Some(seg(10, 14)), 3, &[(20, true), (5, true)]);
        assert_eq!(hit_rate(&[hit(), hit(), hit(), outside]).unwrap(), 0.75);
        assert_eq!(hit_rate(&[hit()]).unwrap(), 1.0);
        assert!(hit_rate(&[input(30, None, 3, &[])]).is_err());
    }

    #[test]
    fn far_cases() {
        let quiet = input(20, None, 3, &[(2, false), (5, false)]);
        assert_eq!(false_alert_rate(&[quiet]).unwrap(), 0.0);
        let preds: Vec<(usize, bool)> = (0..10).map(|i| (i + 2, i < 2)).collect();
        assert_eq!(false_alert_rate(&[input(20, None, 3, &preds)]).unwrap(), 0.2);
        // window [8, 12] half-overlaps [10, 14]; it is neither numerator nor denominator
        let partial = input(30, Some(seg(10, 14)), 5, &[(12, true), (4, false)]);
        assert_eq!(zero_overlap_counts(&partial), (0, 1));
    }

    #[test]
    fn consistency_cases() {
        let p = |flags: &[bool]| -> Vec<WindowPrediction> {
            flags.iter().enumerate().map(|(i, &f)| WindowPrediction::new(i, i, f)).collect()
        };
        let c = consistency_metrics(&p(&[false, true, true, false])).unwrap();
        assert_eq!(c.flip_count, 2);
        assert!((c.inconsistency_rate - 2.0 / 3.0).abs() < 1e-15);
        assert!((c.consistency - 1.0 / 3.0).abs() < 1e-15);
        let c = consistency_metrics(&p(&[true; 5])).unwrap();
        assert_eq!((c.flip_count, c.consistency), (0, 1.0));
        let alt: Vec<bool> = (0..7).map(|i| i % 2 == 0).collect();
        let c = consistency_metrics(&p(&alt)).unwrap();
        assert_eq!((c.flip_count, c.consistency), (6, 0.0));
        assert!(consistency_metrics(&p(&[true])).is_err());
    }

    #[test]
    fn degenerate_assessor_report() {
        let inputs = vec![
            input(30, Some(seg(10, 19)), 10, &[(9, false), (14, false), (19, false), (24, false), (29, false)]),
            input(30, None, 10, &[(9, false), (14, false), (19, false), (24, false), (29, false)]),
        ];
        let r = evaluate(&inputs);
        assert_eq!(r.hr, Some(0.0));
        assert_eq!(r.far, Some(0.0));
        assert_eq!(r.edp_mean, Some(1.0));
        assert_eq!(r.par, Some(0.0));
        assert!(r.is_fully_populated());
        assert_eq!(r.consistency, Some(1.0));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn arb_input() -> impl Strategy<Value = TrajectoryMetricInput> {
            (3usize..40, 1usize..8).prop_flat_map(|(len, w)| {
                let w = w.min(len);
                (
                    Just(len),
                    Just(w),
                    proptest::option::of((0..len, 0..len)),
                    proptest::collection::vec(any::<bool>(), len - w + 1),
                )
                    .prop_map(|(len, w, seg, flags)| {
                        let segment = seg.map(|(a, b)| ScamSegment::new(a.min(b), a.max(b), "x"));
                        let predictions = flags
                            .iter()
                            .enumerate()
                            .map(|(i, &f)| WindowPrediction::new(i, i + w - 1, f))
                            .collect();
                        TrajectoryMetricInput {
                            trajectory_id: "p".into(),
                            length: len,
                            segment,
                            window_size: w,
                            predictions,
                        }
                    })
            })
        }

        proptest! {
            #[test]
            fn edp_is_one_iff_miss(input in arb_input()) {
                if input.segment.is_some() {
                    let v = edp(&input).unwrap();
                    prop_assert!((0.0..=1.0).contains(&v));
                    prop_assert_eq!(v == 1.0, !is_hit(&input).unwrap());
                }
            }

            #[test]
            fn coverage_is_shift_invariant(a in 0usize..50, b in 0usize..50, c in 0usize..50, d in 0usize..50, k in 0usize..100) {
                let seg0 = ScamSegment::new(c.min(d), c.max(d), "x");
                let seg1 = ScamSegment::new(c.min(d) + k, c.max(d) + k, "x");
                let (s, e) = (a.min(b), a.max(b));
                prop_assert_eq!(coverage(s, e, &seg0), coverage(s + k, e + k, &seg1));
            }

            #[test]
            fn report_rates_are_bounded(inputs in proptest::collection::vec(arb_input(), 1..6)) {
                let r = evaluate(&inputs);
                for v in [r.hr, r.edp_mean, r.far, r.par, r.consistency, r.inconsistency_rate].into_iter().flatten() {
                    prop_assert!((0.0..=1.0).contains(&v));
                }
                if let (Some(c), Some(i)) = (r.consistency, r.inconsistency_rate) {
                    prop_assert!((c + i - 1.0).abs() < 1e-12);
                }
            }
        }
    }
}
