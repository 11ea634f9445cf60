//! Benchmark synthesis: long trajectories built by embedding short scam
//! traces in concatenated normal traces, plus rule-based validation.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::domain::{AppCategory, AppEvent, ScamSegment, Split, Trajectory};
use crate::io::{sha256_hex, to_jsonl_bytes};
use crate::memory::canonical_entity;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthError {
    #[error("empty-pool: {0}")]
    EmptyPool(&'static str),
    #[error("scam-trace-too-long: trace {id} has {len} events, target length is {target}")]
    ScamTraceTooLong { id: String, len: usize, target: usize },
    #[error("invalid-ratios: {0}")]
    InvalidRatios(String),
    #[error("invalid-trace {id}: {reason}")]
    InvalidTrace { id: String, reason: String },
    #[error("invalid-config: {0}")]
    InvalidConfig(String),
    #[error("scam-pool-too-small: {available} traces for {needed} splits")]
    PoolTooSmall { available: usize, needed: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceKind {
    Normal,
    Scam,
}

/// A short app trace; event orders are local and 0-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShortTrace {
    pub trace_id: String,
    pub kind: TraceKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scam_type: Option<String>,
    pub events: Vec<AppEvent>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stage_boundaries: Option<Vec<usize>>,
}

impl ShortTrace {
    pub fn check(&self) -> Result<(), SynthError> {
        let fail = |reason: &str| {
            Err(SynthError::InvalidTrace {
                id: self.trace_id.clone(),
                reason: reason.to_string(),
            })
        };
        if self.events.is_empty() {
            return fail("no events");
        }
        if self.events.iter().enumerate().any(|(i, e)| e.order != i) {
            return fail("event orders must be 0, 1, 2, ...");
        }
        if self.kind == TraceKind::Scam && self.scam_type.as_deref().is_none_or(str::is_empty) {
            return fail("scam trace without scam_type");
        }
        if let Some(b) = &self.stage_boundaries {
            let interior = b.iter().all(|&x| x > 0 && x < self.events.len());
            let increasing = b.windows(2).all(|w| w[0] < w[1]);
            if !interior || !increasing {
                return fail("stage_boundaries must be strictly increasing interior indices");
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InsertionMode {
    #[default]
    Contiguous,
    MultiSegment,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub n_trajectories: usize,
    /// Share of trajectories that carry a scam segment.
    pub scam_fraction: f64,
    pub target_length: usize,
    pub insertion_mode: InsertionMode,
    /// Segment count for multi-segment traces without stage boundaries.
    pub max_segments: usize,
    /// Minimum normal events between consecutive scam segments.
    pub min_segment_gap: usize,
    pub seed: u64,
    /// Train, validation and test shares.
    pub split_ratios: [f64; 3],
    /// Length bounds enforced by validation.
    pub min_length: usize,
    pub max_length: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_trajectories: 50,
            scam_fraction: 0.5,
            target_length: 96,
            insertion_mode: InsertionMode::Contiguous,
            max_segments: 3,
            min_segment_gap: 1,
            seed: 0,
            split_ratios: [0.6, 0.2, 0.2],
            min_length: 10,
            max_length: 500,
        }
    }
}

impl SynthConfig {
    pub fn check(&self) -> Result<(), SynthError> {
        let r = self.split_ratios;
        if r.iter().any(|x| !x.is_finite() || *x < 0.0) || (r.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(SynthError::InvalidRatios(format!("{r:?} must be non-negative and sum to 1")));
        }
        if !(0.0..=1.0).contains(&self.scam_fraction) {
            return Err(SynthError::InvalidConfig("scam_fraction must lie in [0, 1]".into()));
        }
        if self.max_segments == 0 || self.min_segment_gap == 0 {
            return Err(SynthError::InvalidConfig("max_segments and min_segment_gap must be >= 1".into()));
        }
        if self.min_length > self.max_length {
            return Err(SynthError::InvalidConfig("min_length exceeds max_length".into()));
        }
        Ok(())
    }
}

/// Per-trajectory record in the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub trajectory_id: String,
    pub split: Split,
    pub length: usize,
    pub normal_traces: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scam_trace: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scam_type: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub segment: Option<[usize; 2]>,
    /// Global indices of scam events, in source order.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scam_positions: Option<Vec<usize>>,
    /// Scam events over hull length.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contamination: Option<f64>,
    /// Digest of the source scam events' content.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub segment_digest: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub scam: usize,
    pub normal: usize,
    pub total: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub config: SynthConfig,
    pub scam_types: Vec<String>,
    pub counts: BTreeMap<Split, SplitCounts>,
    pub total: usize,
    pub trajectories: Vec<ManifestEntry>,
    /// SHA-256 of the dataset JSONL bytes.
    pub content_hash: String,
}

impl Manifest {
    pub fn entry(&self, trajectory_id: &str) -> Option<&ManifestEntry> {
        self.trajectories.iter().find(|e| e.trajectory_id == trajectory_id)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthOutput {
    pub trajectories: Vec<Trajectory>,
    pub manifest: Manifest,
    /// Dataset JSONL, one trajectory per line, sorted by id.
    pub jsonl: Vec<u8>,
}

fn derived_u64(seed: u64, tag: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(tag.as_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("digest has 32 bytes"))
}

fn unit(x: u64) -> f64 {
    (x >> 11) as f64 / (1u64 << 53) as f64
}

const GOLDEN: f64 = 0.618_033_988_749_894_9;

/// Split of a trajectory id. Ids of the form `<kind>-<n>` follow a
/// golden-ratio sequence per kind, which keeps split shares close to the
/// ratios for small datasets; other ids fall back to a hash.
pub fn split_for(trajectory_id: &str, seed: u64, ratios: [f64; 3]) -> Split {
    let u = match trajectory_id.rsplit_once('-').and_then(|(k, n)| n.parse::<u64>().ok().map(|n| (k, n))) {
        Some((kind, n)) => (unit(derived_u64(seed, kind)) + n as f64 * GOLDEN).fract(),
        None => unit(derived_u64(seed, trajectory_id)),
    };
    if u < ratios[0] {
        Split::Train
    } else if u < ratios[0] + ratios[1] {
        Split::Validation
    } else {
        Split::Test
    }
}

/// Content digest of scam events, independent of their global order.
pub fn events_digest<'a>(events: impl IntoIterator<Item = (&'a str, Option<&'a str>, &'a str, &'a [String])>) -> String {
    let mut h = Sha256::new();
    for (cat, app, summary, entities) in events {
        let line = serde_json::json!([cat, app, summary, entities]);
        h.update(line.to_string().as_bytes());
        h.update(b"\n");
    }
    hex::encode(h.finalize())
}

fn trace_digest(events: &[AppEvent]) -> String {
    events_digest(
        events
            .iter()
            .map(|e| (e.app_category.as_str(), e.app_name.as_deref(), e.content_summary.as_str(), e.entities.as_slice())),
    )
}

fn rename_entities(events: &mut [AppEvent], suffix: &str) {
    let mut names: Vec<String> = events.iter().flat_map(|e| e.entities.iter().cloned()).collect();
    names.sort_by(|a, b| b.len().cmp(&a.len()).then(a.cmp(b)));
    names.dedup();
    for e in events.iter_mut() {
        let mut summary = e.content_summary.clone();
        for (i, n) in names.iter().enumerate() {
            if !n.is_empty() {
                summary = summary.replace(n.as_str(), &format!("\u{0}{i}\u{0}"));
            }
        }
        for (i, n) in names.iter().enumerate() {
            summary = summary.replace(&format!("\u{0}{i}\u{0}"), &format!("{n} {suffix}"));
        }
        e.content_summary = summary;
        for n in e.entities.iter_mut() {
            *n = format!("{n} {suffix}");
        }
    }
}

/// Scam pool indices per split; every split with a positive ratio gets at
/// least one trace.
fn partition_scam_pool(n: usize, config: &SynthConfig) -> Result<BTreeMap<Split, Vec<usize>>, SynthError> {
    let active: Vec<usize> = (0..3).filter(|&i| config.split_ratios[i] > 0.0).collect();
    if n < active.len() {
        return Err(SynthError::PoolTooSmall {
            available: n,
            needed: active.len(),
        });
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(derived_u64(config.seed, "scam-pool")));
    let mut sizes = [0usize; 3];
    for &i in &active {
        sizes[i] = ((config.split_ratios[i] * n as f64).round() as usize).max(1);
    }
    while sizes.iter().sum::<usize>() > n {
        let i = *active.iter().max_by_key(|&&i| sizes[i]).expect("active split");
        sizes[i] -= 1;
    }
    while sizes.iter().sum::<usize>() < n {
        sizes[active[0]] += 1;
    }
    let mut out = BTreeMap::new();
    let mut at = 0;
    for (i, split) in Split::ALL.iter().enumerate() {
        out.insert(*split, idx[at..at + sizes[i]].to_vec());
        at += sizes[i];
    }
    Ok(out)
}

fn scam_pieces(trace: &ShortTrace, config: &SynthConfig) -> Vec<Vec<AppEvent>> {
    let n = trace.events.len();
    let cuts: Vec<usize> = match (&config.insertion_mode, &trace.stage_boundaries) {
        (InsertionMode::Contiguous, _) => vec![],
        (InsertionMode::MultiSegment, Some(b)) => b.clone(),
        (InsertionMode::MultiSegment, None) => {
            let k = config.max_segments.min(n);
            (1..k).map(|i| i * n / k).collect()
        }
    };
    let mut pieces = Vec::new();
    let mut from = 0;
    for c in cuts.into_iter().chain([n]) {
        pieces.push(trace.events[from..c].to_vec());
        from = c;
    }
    pieces
}

fn normal_block(rng: &mut ChaCha8Rng, pool: &[ShortTrace], len: usize, suffix: &str) -> (Vec<AppEvent>, Vec<String>) {
    let mut events = Vec::with_capacity(len);
    let mut used = Vec::new();
    while events.len() < len {
        let t = &pool[rng.gen_range(0..pool.len())];
        used.push(t.trace_id.clone());
        let take = (len - events.len()).min(t.events.len());
        events.extend(t.events[..take].iter().cloned());
    }
    rename_entities(&mut events, suffix);
    (events, used)
}

/// Builds the benchmark. Output trajectories are sorted by id and every
/// byte of output is a function of the pools and `config`.
pub fn synthesize(normal_pool: &[ShortTrace], scam_pool: &[ShortTrace], config: &SynthConfig) -> Result<SynthOutput, SynthError> {
    config.check()?;
    if normal_pool.is_empty() {
        return Err(SynthError::EmptyPool("normal"));
    }
    let n_scam = (config.scam_fraction * config.n_trajectories as f64).round() as usize;
    if n_scam > 0 && scam_pool.is_empty() {
        return Err(SynthError::EmptyPool("scam"));
    }
    for t in normal_pool.iter().chain(scam_pool) {
        t.check()?;
    }
    for t in scam_pool {
        if t.events.len() >= config.target_length {
            return Err(SynthError::ScamTraceTooLong {
                id: t.trace_id.clone(),
                len: t.events.len(),
                target: config.target_length,
            });
        }
    }
    let partition = if n_scam > 0 {
        partition_scam_pool(scam_pool.len(), config)?
    } else {
        BTreeMap::new()
    };
    let mut trajectories = Vec::with_capacity(config.n_trajectories);
    let mut entries = Vec::with_capacity(config.n_trajectories);
    let ids = (0..n_scam)
        .map(|i| (format!("scam-{i:05}"), true))
        .chain((0..config.n_trajectories - n_scam).map(|i| (format!("normal-{i:05}"), false)));
    for (id, is_scam) in ids {
        let split = split_for(&id, config.seed, config.split_ratios);
        let mut rng = ChaCha8Rng::seed_from_u64(derived_u64(config.seed, &id));
        let suffix = format!("{:04x}", rng.gen::<u16>());
        let scam = if is_scam {
            let options = &partition[&split];
            Some(&scam_pool[options[rng.gen_range(0..options.len())]])
        } else {
            None
        };
        let scam_len = scam.map_or(0, |t| t.events.len());
        let (normal, normal_ids) = normal_block(&mut rng, normal_pool, config.target_length - scam_len, &suffix);
        let mut entry = ManifestEntry {
            trajectory_id: id.clone(),
            split,
            length: config.target_length,
            normal_traces: normal_ids,
            scam_trace: None,
            scam_type: None,
            segment: None,
            scam_positions: None,
            contamination: None,
            segment_digest: None,
        };
        let (mut events, segment) = match scam {
            None => (normal, None),
            Some(trace) => {
                let pieces = scam_pieces(trace, config);
                let k = pieces.len();
                let gap = config.min_segment_gap;
                let room = normal.len().checked_sub((k - 1) * gap).ok_or_else(|| {
                    SynthError::InvalidConfig(format!("normal block too short for {k} segments"))
                })?;
                let mut cuts: Vec<usize> = (0..k).map(|_| rng.gen_range(0..=room)).collect();
                cuts.sort_unstable();
                let cuts: Vec<usize> = cuts.iter().enumerate().map(|(i, c)| c + i * gap).collect();
                let mut events = Vec::with_capacity(config.target_length);
                let mut positions = Vec::with_capacity(scam_len);
                let mut from = 0;
                for (piece, cut) in pieces.iter().zip(&cuts) {
                    events.extend(normal[from..*cut].iter().cloned());
                    from = *cut;
                    for e in piece {
                        positions.push(events.len());
                        events.push(e.clone());
                    }
                }
                events.extend(normal[from..].iter().cloned());
                let (s, e) = (positions[0], *positions.last().expect("scam trace is non-empty"));
                let scam_type = trace.scam_type.clone().expect("checked scam trace");
                entry.scam_trace = Some(trace.trace_id.clone());
                entry.scam_type = Some(scam_type.clone());
                entry.segment = Some([s, e]);
                entry.contamination = Some(scam_len as f64 / (e - s + 1) as f64);
                entry.scam_positions = Some(positions);
                entry.segment_digest = Some(trace_digest(&trace.events));
                (events, Some(ScamSegment::new(s, e, &scam_type)))
            }
        };
        for (i, e) in events.iter_mut().enumerate() {
            e.order = i;
        }
        trajectories.push(Trajectory {
            trajectory_id: id,
            split_tag: split,
            events,
            scam_segment: segment,
        });
        entries.push(entry);
    }
    trajectories.sort_by(|a, b| a.trajectory_id.cmp(&b.trajectory_id));
    entries.sort_by(|a, b| a.trajectory_id.cmp(&b.trajectory_id));
    let jsonl = to_jsonl_bytes(&trajectories);
    let mut counts: BTreeMap<Split, SplitCounts> = Split::ALL.iter().map(|s| (*s, SplitCounts::default())).collect();
    for t in &trajectories {
        let c = counts.get_mut(&t.split_tag).expect("all splits present");
        c.total += 1;
        if t.is_scam() {
            c.scam += 1;
        } else {
            c.normal += 1;
        }
    }
    let scam_types: BTreeSet<String> = entries.iter().filter_map(|e| e.scam_type.clone()).collect();
    let manifest = Manifest {
        version: 1,
        config: config.clone(),
        scam_types: scam_types.into_iter().collect(),
        counts,
        total: trajectories.len(),
        trajectories: entries,
        content_hash: sha256_hex(&jsonl),
    };
    Ok(SynthOutput {
        trajectories,
        manifest,
        jsonl,
    })
}

/// Event as stored on disk, with the category kept as free text so that
/// out-of-taxonomy values can be reported.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawEvent {
    pub order: usize,
    pub app_category: String,
    pub app_name: Option<String>,
    pub content_summary: String,
    pub entities: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawTrajectory {
    pub trajectory_id: String,
    pub split_tag: Split,
    pub events: Vec<RawEvent>,
    pub scam_segment: Option<ScamSegment>,
}

impl RawTrajectory {
    pub fn from_trajectory(t: &Trajectory) -> Self {
        Self {
            trajectory_id: t.trajectory_id.clone(),
            split_tag: t.split_tag,
            events: t
                .events
                .iter()
                .map(|e| RawEvent {
                    order: e.order,
                    app_category: e.app_category.as_str().to_string(),
                    app_name: e.app_name.clone(),
                    content_summary: e.content_summary.clone(),
                    entities: e.entities.clone(),
                })
                .collect(),
            scam_segment: t.scam_segment.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    EntityLeakage,
    SegmentIntegrity,
    Category,
    Length,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub trajectory_id: String,
    pub kind: ViolationKind,
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub n_trajectories: usize,
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn count(&self, kind: ViolationKind) -> usize {
        self.violations.iter().filter(|v| v.kind == kind).count()
    }
}

/// Rule-based quality checks. Entity leakage is reported once per scam
/// entity that shows up in a split other than the one it was scripted in.
pub fn validate(trajectories: &[RawTrajectory], manifest: &Manifest) -> ValidationReport {
    let mut violations = Vec::new();
    let mut scam_entities: BTreeMap<String, (Split, String)> = BTreeMap::new();
    for t in trajectories {
        let v = |kind, detail: String| Violation {
            trajectory_id: t.trajectory_id.clone(),
            kind,
            detail,
        };
        let len = t.events.len();
        if len < manifest.config.min_length || len > manifest.config.max_length {
            violations.push(v(
                ViolationKind::Length,
                format!("length {len} outside [{}, {}]", manifest.config.min_length, manifest.config.max_length),
            ));
        }
        for e in &t.events {
            if e.app_category.parse::<AppCategory>().is_err() {
                violations.push(v(ViolationKind::Category, format!("event {} has category `{}`", e.order, e.app_category)));
            }
        }
        if let Some(i) = t.events.iter().enumerate().position(|(i, e)| e.order != i) {
            violations.push(v(ViolationKind::SegmentIntegrity, format!("event at index {i} is out of order")));
        }
        let entry = manifest.entry(&t.trajectory_id);
        match (&t.scam_segment, entry) {
            (_, None) => violations.push(v(ViolationKind::SegmentIntegrity, "trajectory missing from manifest".into())),
            (None, Some(m)) if m.segment.is_some() => {
                violations.push(v(ViolationKind::SegmentIntegrity, "manifest lists a segment the trajectory lacks".into()))
            }
            (None, Some(_)) => {}
            (Some(seg), Some(m)) => {
                let positions = m.scam_positions.clone().unwrap_or_default();
                let in_range = positions.iter().all(|&p| p < len);
                if m.segment != Some([seg.start, seg.end]) || !in_range || positions.is_empty() {
                    violations.push(v(ViolationKind::SegmentIntegrity, "segment disagrees with manifest".into()));
                } else {
                    let digest = events_digest(positions.iter().map(|&p| {
                        let e = &t.events[p];
                        (e.app_category.as_str(), e.app_name.as_deref(), e.content_summary.as_str(), e.entities.as_slice())
                    }));
                    if Some(&digest) != m.segment_digest.as_ref() {
                        violations.push(v(ViolationKind::SegmentIntegrity, "scam events differ from the source trace".into()));
                    }
                    for &p in &positions {
                        for name in &t.events[p].entities {
                            scam_entities
                                .entry(canonical_entity(name))
                                .or_insert_with(|| (t.split_tag, t.trajectory_id.clone()));
                        }
                    }
                }
            }
        }
    }
    let mut leaked: BTreeSet<String> = BTreeSet::new();
    for t in trajectories {
        for e in &t.events {
            for name in &e.entities {
                let key = canonical_entity(name);
                if let Some((split, origin)) = scam_entities.get(&key) {
                    if *split != t.split_tag && leaked.insert(key.clone()) {
                        violations.push(Violation {
                            trajectory_id: t.trajectory_id.clone(),
                            kind: ViolationKind::EntityLeakage,
                            detail: format!("scam entity `{key}` from {origin} ({split}) appears in {}", t.split_tag),
                        });
                    }
                }
            }
        }
    }
    ValidationReport {
        n_trajectories: trajectories.len(),
        violations,
    }
}

const NORMAL_ACTIVITIES: &[(AppCategory, &str, &str)] = &[
    (AppCategory::Communication, "Phone", "called {p} about weekend plans"),
    (AppCategory::Communication, "Phone", "missed a call from {p}"),
    (AppCategory::InstantMessaging, "WeChat", "chatted with {p} about dinner"),
    (AppCategory::InstantMessaging, "WeChat", "sent {p} photos from the park"),
    (AppCategory::SocialMedia, "Weibo", "liked a post by {p} about hiking"),
    (AppCategory::SocialMedia, "Douyin", "scrolled short clips about cooking"),
    (AppCategory::Tools, "Calculator", "split a restaurant bill"),
    (AppCategory::Tools, "Weather", "checked the rain forecast"),
    (AppCategory::Financial, "Alipay", "paid the electricity bill"),
    (AppCategory::Financial, "Alipay", "reimbursed {p} for lunch"),
    (AppCategory::Multimedia, "QQ Music", "played a jazz playlist"),
    (AppCategory::Multimedia, "Camera", "took pictures of the garden"),
    (AppCategory::Productivity, "Notes", "wrote a grocery list"),
    (AppCategory::Productivity, "Calendar", "scheduled a dentist visit with {p}"),
    (AppCategory::TravelLocal, "Maps", "looked up the bus route downtown"),
    (AppCategory::TravelLocal, "Didi", "booked a ride to the station"),
    (AppCategory::Shopping, "Taobao", "browsed running shoes"),
    (AppCategory::Shopping, "Meituan", "ordered noodles for delivery"),
    (AppCategory::Entertainment, "Tencent Video", "watched an episode of a drama"),
    (AppCategory::Entertainment, "Bilibili", "watched a documentary about birds"),
    (AppCategory::HealthFitness, "Keep", "logged a morning jog"),
    (AppCategory::HealthFitness, "Mi Fit", "checked sleep statistics"),
    (AppCategory::Others, "Settings", "changed the wallpaper"),
    (AppCategory::Others, "Files", "cleared old downloads"),
];

const NORMAL_PEOPLE: &[&str] = &["Mom", "Jamie", "Coach Rivera", "Priya", "Landlord Wu", "Uncle Bo", "Dana", "Neighbor Ito"];

struct ScamScript {
    scam_type: &'static str,
    role: &'static str,
    stages: &'static [&'static [(AppCategory, &'static str, &'static str)]],
}

const SCAM_SCRIPTS: &[ScamScript] = &[
    ScamScript {
        scam_type: "fake_online_investment_financial_scam",
        role: "Mentor",
        stages: &[
            &[
                (AppCategory::SocialMedia, "Douyin", "{x} posted about high returns from stock tips"),
                (AppCategory::SocialMedia, "Weibo", "{x} sent a qr code for a study circle"),
            ],
            &[
                (AppCategory::InstantMessaging, "WeChat", "{x} added the user to a private group"),
                (AppCategory::InstantMessaging, "WeChat", "{x} shared investment advice in the group"),
            ],
            &[
                (AppCategory::Tools, "Browser", "installed the investment app from {x}'s link"),
                (AppCategory::Tools, "Browser", "registered a trading account recommended by {x}"),
            ],
            &[
                (AppCategory::Financial, "Bank", "made a test transaction as {x} suggested"),
                (AppCategory::Financial, "Bank", "transferred savings after {x} praised the gains"),
                (AppCategory::Financial, "Bank", "withdrawal refused and {x} demanded a tax"),
            ],
        ],
    },
    ScamScript {
        scam_type: "part_time_job_task_scam",
        role: "Recruiter",
        stages: &[
            &[
                (AppCategory::InstantMessaging, "QQ", "{x} offered a part-time liking job"),
                (AppCategory::InstantMessaging, "QQ", "{x} invited the user to a job group"),
            ],
            &[
                (AppCategory::Tools, "Browser", "downloaded a third-party app from {x}"),
                (AppCategory::Tools, "Browser", "completed a task and saw the commission"),
            ],
            &[
                (AppCategory::InstantMessaging, "QQ", "{x} promised more income for group tasks"),
                (AppCategory::InstantMessaging, "QQ", "{x} said a prepay step would unlock rewards"),
            ],
            &[
                (AppCategory::Financial, "Alipay", "sent money to {x} to unlock earnings"),
                (AppCategory::Financial, "Alipay", "paid again after {x} reported a mistake"),
            ],
        ],
    },
    ScamScript {
        scam_type: "impersonating_customer_service_scam",
        role: "Agent",
        stages: &[
            &[
                (AppCategory::Communication, "Phone", "{x} called claiming to be customer service"),
                (AppCategory::Communication, "Phone", "{x} mentioned an order problem with a refund"),
            ],
            &[
                (AppCategory::Shopping, "Taobao", "opened the order page {x} described"),
                (AppCategory::Shopping, "Taobao", "{x} warned about a membership fee"),
            ],
            &[
                (AppCategory::Tools, "Meeting", "started screen sharing at {x}'s request"),
                (AppCategory::Tools, "SMS", "read a verification code aloud to {x}"),
            ],
            &[
                (AppCategory::Financial, "Bank", "moved funds to a safe account named by {x}"),
                (AppCategory::Financial, "Bank", "confirmed a transfer while {x} waited"),
            ],
        ],
    },
    ScamScript {
        scam_type: "fake_loan_scam",
        role: "Lender",
        stages: &[
            &[
                (AppCategory::SocialMedia, "Weibo", "{x} advertised a loan with low interest"),
                (AppCategory::SocialMedia, "Weibo", "{x} promised a high credit limit"),
            ],
            &[
                (AppCategory::Tools, "Browser", "installed the loan app from {x}"),
                (AppCategory::Tools, "Browser", "entered a bank card number for {x}"),
            ],
            &[
                (AppCategory::InstantMessaging, "WeChat", "{x} said the account must unfreeze first"),
                (AppCategory::InstantMessaging, "WeChat", "{x} asked for a deposit fee"),
            ],
            &[
                (AppCategory::Financial, "Bank", "paid the fee to {x}"),
                (AppCategory::Financial, "Bank", "paid an insurance charge demanded by {x}"),
            ],
        ],
    },
    ScamScript {
        scam_type: "romance_investment_scam",
        role: "Sweetheart",
        stages: &[
            &[
                (AppCategory::SocialMedia, "Tantan", "matched with {x} on a dating site"),
                (AppCategory::SocialMedia, "Tantan", "{x} sent long messages every night"),
            ],
            &[
                (AppCategory::InstantMessaging, "WeChat", "{x} talked about building trust"),
                (AppCategory::InstantMessaging, "WeChat", "{x} hinted at insider knowledge"),
            ],
            &[
                (AppCategory::Tools, "Browser", "opened a betting platform link from {x}"),
                (AppCategory::Tools, "Browser", "{x} showed screenshots of guaranteed profit"),
            ],
            &[
                (AppCategory::Financial, "Bank", "made a deposit on the site {x} chose"),
                (AppCategory::Financial, "Bank", "added more money when {x} insisted"),
            ],
        ],
    },
    ScamScript {
        scam_type: "impersonating_police_scam",
        role: "Officer",
        stages: &[
            &[
                (AppCategory::Communication, "Phone", "{x} called claiming to be police"),
                (AppCategory::Communication, "Phone", "{x} cited a case number and an arrest warrant"),
            ],
            &[
                (AppCategory::InstantMessaging, "WeChat", "{x} demanded a confidential video call"),
                (AppCategory::InstantMessaging, "WeChat", "{x} accused the user of money laundering"),
            ],
            &[
                (AppCategory::Tools, "Browser", "opened a fake prosecutor site sent by {x}"),
                (AppCategory::Tools, "Browser", "installed a remote control tool for {x}"),
            ],
            &[
                (AppCategory::Financial, "Bank", "moved savings to a supervised account for {x}"),
                (AppCategory::Financial, "Bank", "transferred the rest while {x} listened"),
            ],
        ],
    },
];

const SURNAMES: &[&str] = &["Zhao", "Qian", "Sun", "Li", "Zhou", "Wu", "Zheng", "Wang", "Feng", "Chen"];

/// Small synthetic pools for demos and tests. Scam traces use unique
/// perpetrator names; normal summaries avoid every seed-skill indicator.
pub fn demo_pools(seed: u64, n_normal: usize, scams_per_type: usize) -> (Vec<ShortTrace>, Vec<ShortTrace>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = (0..n_normal)
        .map(|i| {
            let len = rng.gen_range(4..=12);
            let events = (0..len)
                .map(|o| {
                    let (cat, app, text) = NORMAL_ACTIVITIES[rng.gen_range(0..NORMAL_ACTIVITIES.len())];
                    if text.contains("{p}") {
                        let p = NORMAL_PEOPLE[rng.gen_range(0..NORMAL_PEOPLE.len())];
                        AppEvent::new(o, cat, Some(app), &text.replace("{p}", p), &[p])
                    } else {
                        AppEvent::new(o, cat, Some(app), text, &[])
                    }
                })
                .collect();
            ShortTrace {
                trace_id: format!("n{i:04}"),
                kind: TraceKind::Normal,
                scam_type: None,
                events,
                stage_boundaries: None,
            }
        })
        .collect();
    let mut scam = Vec::new();
    for script in SCAM_SCRIPTS {
        for k in 0..scams_per_type {
            let x = format!("{} {} {}", script.role, SURNAMES[rng.gen_range(0..SURNAMES.len())], scam.len() + 1);
            let mut events = Vec::new();
            let mut boundaries = Vec::new();
            for (si, stage) in script.stages.iter().enumerate() {
                if si > 0 {
                    boundaries.push(events.len());
                }
                let n = rng.gen_range(1..=3);
                for _ in 0..n {
                    let (cat, app, text) = stage[rng.gen_range(0..stage.len())];
                    let summary = text.replace("{x}", &x);
                    let ents: &[&str] = if text.contains("{x}") { &[&x] } else { &[] };
                    events.push(AppEvent::new(events.len(), cat, Some(app), &summary, ents));
                }
            }
            scam.push(ShortTrace {
                trace_id: format!("s-{}-{k:03}", script.scam_type),
                kind: TraceKind::Scam,
                scam_type: Some(script.scam_type.to_string()),
                events,
                stage_boundaries: Some(boundaries),
            });
        }
    }
    (normal, scam)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::skills::{SkillLibrary, CATALOG_TYPES};

    fn pools() -> (Vec<ShortTrace>, Vec<ShortTrace>) {
        demo_pools(3, 40, 4)
    }

    #[test]
    fn demo_pools_are_valid_and_normal_text_is_clean() {
        let (normal, scam) = pools();
        let lib = SkillLibrary::seeded(CATALOG_TYPES);
        for t in normal.iter().chain(&scam) {
            t.check().unwrap();
        }
        for t in &normal {
            for e in &t.events {
                for s in lib.skills() {
                    assert!(s.matched_indicators(&e.content_summary).is_empty(), "{} hits {}", e.content_summary, s.scam_type);
                }
            }
        }
        for t in &scam {
            let s = lib.get(t.scam_type.as_deref().unwrap()).unwrap();
            let hits: usize = t.events.iter().map(|e| s.indicator_hits(&e.content_summary)).sum();
            assert!(hits > 0, "{}", t.trace_id);
        }
    }

    #[test]
    fn contiguous_length_accounting() {
        let (normal, scam) = pools();
        let out = synthesize(&normal, &scam, &SynthConfig::default()).unwrap();
        for (t, m) in out.trajectories.iter().zip(&out.manifest.trajectories) {
            assert_eq!(t.len(), 96);
            if let Some(seg) = &t.scam_segment {
                let src = scam.iter().find(|s| Some(&s.trace_id) == m.scam_trace.as_ref()).unwrap();
                assert_eq!(seg.len(), src.events.len());
                assert_eq!(m.contamination, Some(1.0));
            }
            t.check().unwrap();
        }
        assert_eq!(out.manifest.total, 50);
        assert_eq!(out.manifest.counts.values().map(|c| c.total).sum::<usize>(), 50);
    }

    #[test]
    fn seeded_output_is_byte_identical() {
        let (normal, scam) = pools();
        let cfg = SynthConfig { seed: 11, ..SynthConfig::default() };
        let a = synthesize(&normal, &scam, &cfg).unwrap();
        let b = synthesize(&normal, &scam, &cfg).unwrap();
        assert_eq!(a.jsonl, b.jsonl);
        assert_eq!(a.manifest.content_hash, b.manifest.content_hash);
        let c = synthesize(&normal, &scam, &SynthConfig { seed: 12, ..cfg }).unwrap();
        assert_ne!(a.manifest.content_hash, c.manifest.content_hash);
    }

    #[test]
    fn multi_segment_hull_and_order() {
        let (normal, scam) = pools();
        let cfg = SynthConfig {
            insertion_mode: InsertionMode::MultiSegment,
            ..SynthConfig::default()
        };
        let out = synthesize(&normal, &scam, &cfg).unwrap();
        let mut diluted = 0;
        for (t, m) in out.trajectories.iter().zip(&out.manifest.trajectories) {
            let Some(pos) = &m.scam_positions else { continue };
            let src = scam.iter().find(|s| Some(&s.trace_id) == m.scam_trace.as_ref()).unwrap();
            assert!(pos.windows(2).all(|w| w[0] < w[1]));
            for (p, e) in pos.iter().zip(&src.events) {
                assert_eq!(t.events[*p].content_summary, e.content_summary);
            }
            let c = m.contamination.unwrap();
            assert!(c <= 1.0);
            if c < 1.0 {
                diluted += 1;
            }
            assert_eq!(t.len(), 96);
        }
        assert!(diluted > 0);
        let raw: Vec<RawTrajectory> = out.trajectories.iter().map(RawTrajectory::from_trajectory).collect();
        assert!(validate(&raw, &out.manifest).is_clean());
    }

    #[test]
    fn rejects_bad_inputs() {
        let (normal, scam) = pools();
        let cfg = SynthConfig {
            target_length: 8,
            ..SynthConfig::default()
        };
        assert!(matches!(synthesize(&normal, &scam, &cfg), Err(SynthError::ScamTraceTooLong { .. })));
        let cfg = SynthConfig {
            split_ratios: [0.5, 0.5, 0.5],
            ..SynthConfig::default()
        };
        assert!(matches!(synthesize(&normal, &scam, &cfg), Err(SynthError::InvalidRatios(_))));
        assert!(matches!(synthesize(&[], &scam, &SynthConfig::default()), Err(SynthError::EmptyPool(_))));
    }

    #[test]
    fn split_is_pure_and_tracks_ratios() {
        let r = [0.6, 0.2, 0.2];
        assert_eq!(split_for("scam-00007", 5, r), split_for("scam-00007", 5, r));
        let n = 1000;
        let train = (0..n).filter(|i| split_for(&format!("scam-{i:05}"), 5, r) == Split::Train).count();
        assert!((train as f64 / n as f64 - 0.6).abs() < 0.01);
        assert_eq!(split_for("odd", 1, [1.0, 0.0, 0.0]), Split::Train);
    }

    #[test]
    fn normal_entities_renamed_per_trajectory() {
        let (normal, scam) = pools();
        let out = synthesize(&normal, &scam, &SynthConfig::default()).unwrap();
        let mut owners: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
        for t in &out.trajectories {
            for (i, e) in t.events.iter().enumerate() {
                let in_seg = t.scam_segment.as_ref().is_some_and(|s| s.contains(i));
                if in_seg {
                    continue;
                }
                for n in &e.entities {
                    assert!(e.content_summary.contains(n.as_str()), "{n} not in `{}`", e.content_summary);
                    owners.entry(n.clone()).or_default().insert(t.trajectory_id.clone());
                }
            }
        }
        let shared = owners.values().filter(|o| o.len() > 1).count();
        assert_eq!(shared, 0);
    }

    #[test]
    fn validator_finds_each_injected_fault() {
        let (normal, scam) = pools();
        let out = synthesize(&normal, &scam, &SynthConfig::default()).unwrap();
        let raw: Vec<RawTrajectory> = out.trajectories.iter().map(RawTrajectory::from_trajectory).collect();
        assert!(validate(&raw, &out.manifest).is_clean());

        let first_scam = raw.iter().position(|t| t.scam_segment.is_some()).unwrap();
        let seg = raw[first_scam].scam_segment.clone().unwrap();
        let outside = if seg.start > 0 { 0 } else { seg.end + 1 };

        let mut bad = raw.clone();
        bad[first_scam].events[outside].app_category = "Gaming".into();
        let r = validate(&bad, &out.manifest);
        assert_eq!((r.violations.len(), r.count(ViolationKind::Category)), (1, 1));

        let mut bad = raw.clone();
        bad[first_scam].events[seg.start].content_summary.push_str(" edited");
        let r = validate(&bad, &out.manifest);
        assert_eq!((r.violations.len(), r.count(ViolationKind::SegmentIntegrity)), (1, 1));

        let mut bad = raw.clone();
        let name = raw[first_scam].events[seg.start..=seg.end]
            .iter()
            .find_map(|e| e.entities.first().cloned())
            .unwrap();
        let other = raw.iter().position(|t| t.split_tag != raw[first_scam].split_tag).unwrap();
        bad[other].events[0].entities.push(name);
        let r = validate(&bad, &out.manifest);
        assert_eq!((r.violations.len(), r.count(ViolationKind::EntityLeakage)), (1, 1));

        let mut bad = raw;
        bad[0].events.truncate(5);
        let r = validate(&bad, &out.manifest);
        assert!(r.count(ViolationKind::Length) == 1);
    }
}
