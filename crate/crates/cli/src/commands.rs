//! Subcommand implementations.

use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::Serialize;

use scamwatch_core::assessor::{
    calibrate_tau, Assessor, CalibrationResult, LogisticAssessor, RemoteAssessor, RuleAssessor, ScoredTrajectory,
    ScoredWindow,
};
use scamwatch_core::context::{PassThroughAnalyzer, RemoteScreenAnalyzer, ScreenAnalyzer};
use scamwatch_core::distill::{train, DistillError, ParamFile};
use scamwatch_core::domain::{AlertPolicy, Split, Trajectory};
use scamwatch_core::io::{read_jsonl, sha256_hex, write_bytes, IoError};
use scamwatch_core::pipeline::{run_trajectory, EvolveMode, PipelineConfig, PipelineError, TrajectoryRun, WindowRecord};
use scamwatch_core::skills::{SkillLibrary, CATALOG_TYPES};
use scamwatch_core::synth::{demo_pools, synthesize, validate, Manifest, RawTrajectory, ShortTrace, ValidationReport};

use crate::config::{AnalyzerKind, AssessorKind, RunConfig, TauSetting};
use crate::report::{build_report, memory_scaling, metric_inputs, per_type_rows, AbortedTrajectory, RunReport};

pub const EXIT_FAILURE: u8 = 1;
pub const EXIT_INPUT: u8 = 2;
pub const EXIT_EXTERNAL: u8 = 3;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn failure(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_FAILURE,
            message: message.into(),
        }
    }

    pub fn input(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_INPUT,
            message: message.into(),
        }
    }

    pub fn external(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_EXTERNAL,
            message: message.into(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

impl From<IoError> for CliError {
    fn from(e: IoError) -> Self {
        Self::input(e.to_string())
    }
}

/// Settings shared by every subcommand.
#[derive(Debug, Clone)]
pub struct Context {
    pub config: RunConfig,
    pub out_dir: PathBuf,
    pub parallel: usize,
    pub strict: bool,
    pub allow_violations: bool,
}

impl Context {
    fn out(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }

    fn ensure_out_dir(&self) -> Result<(), CliError> {
        fs::create_dir_all(&self.out_dir)
            .map_err(|e| CliError::input(format!("cannot create {}: {e}", self.out_dir.display())))
    }

    fn dataset_path(&self, arg: Option<&Path>) -> PathBuf {
        pick(arg, self.config.io.dataset.as_deref(), || self.out("dataset.jsonl"))
    }

    fn manifest_path(&self, arg: Option<&Path>) -> PathBuf {
        pick(arg, self.config.io.manifest.as_deref(), || self.out("manifest.json"))
    }
}

fn pick(arg: Option<&Path>, configured: Option<&Path>, fallback: impl FnOnce() -> PathBuf) -> PathBuf {
    arg.or(configured).map(Path::to_path_buf).unwrap_or_else(fallback)
}

fn require(path: &Path, what: &str) -> Result<(), CliError> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::input(format!("{what}-not-found: {}", path.display())))
    }
}

fn read_json<T: DeserializeOwned>(path: &Path, what: &str) -> Result<T, CliError> {
    require(path, what)?;
    let text = fs::read_to_string(path).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::input(format!("invalid {what}: {}: {e}", path.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("serializable value");
    bytes.push(b'\n');
    Ok(write_bytes(path, &bytes)?)
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), CliError> {
    let err = |e: csv::Error| CliError::input(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(err)?;
    for r in rows {
        w.serialize(r).map_err(err)?;
    }
    w.flush().map_err(|e| CliError::input(format!("{}: {e}", path.display())))
}

/// Reads and checks a dataset, sorted by trajectory id.
pub fn load_dataset(path: &Path) -> Result<Vec<Trajectory>, CliError> {
    require(path, "dataset")?;
    let mut data: Vec<Trajectory> = read_jsonl(path)?;
    for t in &data {
        t.check().map_err(|e| CliError::input(format!("{}: {e}", t.trajectory_id)))?;
    }
    data.sort_by(|a, b| a.trajectory_id.cmp(&b.trajectory_id));
    Ok(data)
}

/// Which trajectories a command streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum SplitFilter {
    Train,
    Validation,
    Test,
    All,
}

impl SplitFilter {
    fn keeps(self, split: Split) -> bool {
        match self {
            SplitFilter::All => true,
            SplitFilter::Train => split == Split::Train,
            SplitFilter::Validation => split == Split::Validation,
            SplitFilter::Test => split == Split::Test,
        }
    }
}

pub fn gen_pools(ctx: &Context, seed: u64, n_normal: usize, scams_per_type: usize) -> Result<(), CliError> {
    ctx.ensure_out_dir()?;
    let (normal, scam) = demo_pools(seed, n_normal, scams_per_type);
    write_bytes(&ctx.out("normal_pool.jsonl"), &scamwatch_core::io::to_jsonl_bytes(&normal))?;
    write_bytes(&ctx.out("scam_pool.jsonl"), &scamwatch_core::io::to_jsonl_bytes(&scam))?;
    println!("wrote {} normal and {} scam traces to {}", normal.len(), scam.len(), ctx.out_dir.display());
    Ok(())
}

fn load_pool(path: &Path) -> Result<Vec<ShortTrace>, CliError> {
    if !path.is_file() {
        return Err(CliError::input(format!("pool-not-found: {}", path.display())));
    }
    Ok(read_jsonl(path)?)
}

fn check_validation(ctx: &Context, report: &ValidationReport) -> Result<(), CliError> {
    write_json(&ctx.out("validation.json"), report)?;
    println!("validation: {} trajectories, {} violations", report.n_trajectories, report.violations.len());
    for v in report.violations.iter().take(20) {
        println!("  {} {:?}: {}", v.trajectory_id, v.kind, v.detail);
    }
    if report.is_clean() || ctx.allow_violations {
        Ok(())
    } else {
        Err(CliError::failure(format!("validation-failed: {} violations", report.violations.len())))
    }
}

pub fn synth(ctx: &Context, normal_pool: Option<&Path>, scam_pool: Option<&Path>) -> Result<(), CliError> {
    let normal_path = pick(normal_pool, ctx.config.io.normal_pool.as_deref(), || ctx.out("normal_pool.jsonl"));
    let scam_path = pick(scam_pool, ctx.config.io.scam_pool.as_deref(), || ctx.out("scam_pool.jsonl"));
    let normal = load_pool(&normal_path)?;
    let scam = load_pool(&scam_path)?;
    let out = synthesize(&normal, &scam, &ctx.config.synth).map_err(|e| CliError::input(e.to_string()))?;
    ctx.ensure_out_dir()?;
    let dataset = ctx.dataset_path(None);
    write_bytes(&dataset, &out.jsonl)?;
    write_json(&ctx.manifest_path(None), &out.manifest)?;
    println!(
        "wrote {} trajectories to {} (content hash {})",
        out.manifest.total,
        dataset.display(),
        out.manifest.content_hash
    );
    let raw: Vec<RawTrajectory> = out.trajectories.iter().map(RawTrajectory::from_trajectory).collect();
    check_validation(ctx, &validate(&raw, &out.manifest))
}

pub fn validate_cmd(ctx: &Context, dataset: Option<&Path>, manifest: Option<&Path>) -> Result<(), CliError> {
    let dataset = ctx.dataset_path(dataset);
    require(&dataset, "dataset")?;
    let raw: Vec<RawTrajectory> = read_jsonl(&dataset)?;
    let manifest: Manifest = read_json(&ctx.manifest_path(manifest), "manifest")?;
    ctx.ensure_out_dir()?;
    check_validation(ctx, &validate(&raw, &manifest))
}

/// Everything needed to stream trajectories.
pub struct Engine {
    pub analyzer: Box<dyn ScreenAnalyzer>,
    pub assessor: Box<dyn Assessor>,
    pub library: SkillLibrary,
    pub pipeline: PipelineConfig,
    pub assessor_name: String,
}

fn resolve_tau(ctx: &Context) -> Result<f64, CliError> {
    let tau = match ctx.config.alert.tau {
        TauSetting::Value(t) => t,
        TauSetting::Calibrated(_) => {
            let path = pick(None, ctx.config.alert.calibration.as_deref(), || ctx.out("calibration.json"));
            read_json::<CalibrationResult>(&path, "calibration")?.tau
        }
    };
    AlertPolicy::new(tau).map(|p| p.tau).map_err(|e| CliError::input(e.to_string()))
}

fn load_library(ctx: &Context, arg: Option<&Path>, dataset: &[Trajectory]) -> Result<SkillLibrary, CliError> {
    match arg.or(ctx.config.skills.library.as_deref()) {
        Some(path) => read_json(path, "skill-library"),
        None => {
            let mut types: BTreeSet<String> = CATALOG_TYPES.iter().map(|s| s.to_string()).collect();
            types.extend(dataset.iter().filter_map(|t| t.scam_segment.as_ref().map(|s| s.scam_type.clone())));
            Ok(SkillLibrary::seeded(&types.into_iter().collect::<Vec<_>>()))
        }
    }
}

fn endpoint_url_required(url: &str, section: &str) -> Result<(), CliError> {
    if url.trim().is_empty() {
        Err(CliError::input(format!("{section}.endpoint.url is required for the remote kind")))
    } else {
        Ok(())
    }
}

pub fn build_engine(ctx: &Context, dataset: &[Trajectory], library: Option<&Path>, tau: f64) -> Result<Engine, CliError> {
    let cfg = &ctx.config;
    cfg.stream.check().map_err(|e| CliError::input(e.to_string()))?;
    let analyzer: Box<dyn ScreenAnalyzer> = match cfg.analyzer.kind {
        AnalyzerKind::PassThrough => Box::new(PassThroughAnalyzer),
        AnalyzerKind::Remote => {
            endpoint_url_required(&cfg.analyzer.endpoint.url, "analyzer")?;
            Box::new(RemoteScreenAnalyzer::new(cfg.analyzer.endpoint.clone()))
        }
    };
    let (assessor, assessor_name): (Box<dyn Assessor>, &str) = match cfg.assessor.kind {
        AssessorKind::Rule => (Box::new(RuleAssessor::new(cfg.assessor.rule)), "rule"),
        AssessorKind::Logistic => {
            let path = cfg
                .assessor
                .params
                .as_deref()
                .ok_or_else(|| CliError::input("assessor.params is required for the logistic kind"))?;
            let file: ParamFile = read_json(path, "params")?;
            let params = file.params().map_err(|e| CliError::input(e.to_string()))?;
            (Box::new(LogisticAssessor::new(params).map_err(|e| CliError::input(e.to_string()))?), "logistic")
        }
        AssessorKind::Remote => {
            endpoint_url_required(&cfg.assessor.endpoint.url, "assessor")?;
            (Box::new(RemoteAssessor::new(cfg.assessor.endpoint.clone())), "remote")
        }
    };
    let library = load_library(ctx, library, dataset)?;
    let wants_evolution = cfg.skills.evolve != EvolveMode::Frozen && !cfg.skills.frozen && !library.frozen;
    if ctx.parallel > 1 && wants_evolution {
        return Err(CliError::input("evolution-requires-sequential: set skills.evolve = \"frozen\" or drop --parallel"));
    }
    Ok(Engine {
        analyzer,
        assessor,
        library,
        pipeline: PipelineConfig {
            stream: cfg.stream,
            budget: cfg.retrieval.budget,
            weights: cfg.retrieval.weights,
            policy: AlertPolicy { tau },
            evolve: if wants_evolution { cfg.skills.evolve } else { EvolveMode::Frozen },
        },
        assessor_name: assessor_name.to_string(),
    })
}

/// Streams every trajectory. Sequential runs share one evolving library in
/// id order; parallel runs give each trajectory its own frozen copy.
pub fn stream_all(
    engine: &mut Engine,
    trajectories: &[Trajectory],
    parallel: usize,
) -> Result<(Vec<TrajectoryRun>, Vec<AbortedTrajectory>), CliError> {
    let results: Vec<Result<TrajectoryRun, PipelineError>> = if parallel > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(parallel)
            .build()
            .map_err(|e| CliError::input(format!("thread pool: {e}")))?;
        let engine = &*engine;
        pool.install(|| {
            trajectories
                .par_iter()
                .map(|t| {
                    let mut lib = engine.library.clone();
                    run_trajectory(t, engine.analyzer.as_ref(), engine.assessor.as_ref(), &mut lib, &engine.pipeline)
                })
                .collect()
        })
    } else {
        trajectories
            .iter()
            .map(|t| {
                run_trajectory(t, engine.analyzer.as_ref(), engine.assessor.as_ref(), &mut engine.library, &engine.pipeline)
            })
            .collect()
    };
    let mut runs = Vec::new();
    let mut aborted = Vec::new();
    for r in results {
        match r {
            Ok(run) => runs.push(run),
            Err(PipelineError::Assess { id, source }) => {
                log::warn!("aborted trajectory {id}: {source}");
                aborted.push(AbortedTrajectory {
                    trajectory_id: id,
                    error: source.to_string(),
                });
            }
            Err(e) => return Err(CliError::input(e.to_string())),
        }
    }
    Ok((runs, aborted))
}

fn aborted_outcome(aborted: &[AbortedTrajectory]) -> Result<(), CliError> {
    if aborted.is_empty() {
        Ok(())
    } else {
        Err(CliError::external(format!(
            "{} trajectories aborted after remote failures: {}",
            aborted.len(),
            aborted.iter().map(|a| a.trajectory_id.as_str()).collect::<Vec<_>>().join(", ")
        )))
    }
}

fn select(data: Vec<Trajectory>, split: SplitFilter) -> Vec<Trajectory> {
    data.into_iter().filter(|t| split.keeps(t.split_tag)).collect()
}

pub struct RunArgs<'a> {
    pub dataset: Option<&'a Path>,
    pub split: SplitFilter,
    pub skills: Option<&'a Path>,
    pub save_skills: Option<&'a Path>,
}

pub fn run(ctx: &Context, args: &RunArgs<'_>) -> Result<(), CliError> {
    let data = select(load_dataset(&ctx.dataset_path(args.dataset))?, args.split);
    let tau = resolve_tau(ctx)?;
    let mut engine = build_engine(ctx, &data, args.skills, tau)?;
    let (runs, aborted) = stream_all(&mut engine, &data, ctx.parallel)?;
    let records: Vec<WindowRecord> = runs.into_iter().flat_map(|r| r.windows).collect();
    let metrics = build_report(&data, &records, ctx.config.stream.window_size).map_err(CliError::input)?;
    ctx.ensure_out_dir()?;
    let predictions = pick(None, ctx.config.io.predictions.as_deref(), || ctx.out("predictions.jsonl"));
    write_bytes(&predictions, &scamwatch_core::io::to_jsonl_bytes(&records))?;
    let report = RunReport {
        assessor: engine.assessor_name.clone(),
        tau,
        metrics,
        aborted,
    };
    write_json(&ctx.out("report.json"), &report)?;
    if let Some(path) = args.save_skills {
        write_json(path, &engine.library)?;
    }
    let m = &report.metrics;
    println!(
        "{} trajectories, {} windows at tau {tau}: hr={} edp={} far={} par={} consistency={}",
        m.per_trajectory.len(),
        records.len(),
        fmt_opt(m.hr),
        fmt_opt(m.edp_mean),
        fmt_opt(m.far),
        fmt_opt(m.par),
        fmt_opt(m.consistency)
    );
    aborted_outcome(&report.aborted)?;
    if ctx.strict && !m.is_fully_populated() {
        return Err(CliError::failure("strict: some report metrics are undefined on this dataset"));
    }
    Ok(())
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or_else(|| "n/a".into(), |v| format!("{v:.4}"))
}

pub fn calibrate(
    ctx: &Context,
    dataset: Option<&Path>,
    split: SplitFilter,
    far_budget: Option<f64>,
    skills: Option<&Path>,
) -> Result<(), CliError> {
    let data = select(load_dataset(&ctx.dataset_path(dataset))?, split);
    let mut engine = build_engine(ctx, &data, skills, AlertPolicy::default().tau)?;
    let (runs, aborted) = stream_all(&mut engine, &data, ctx.parallel)?;
    let scored: Vec<ScoredTrajectory> = runs
        .iter()
        .map(|run| {
            let t = data
                .iter()
                .find(|t| t.trajectory_id == run.trajectory_id)
                .expect("runs come from data");
            ScoredTrajectory {
                trajectory_id: t.trajectory_id.clone(),
                length: t.len(),
                segment: t.scam_segment.clone(),
                window_size: ctx.config.stream.window_size,
                windows: run
                    .windows
                    .iter()
                    .map(|w| ScoredWindow {
                        start: w.start,
                        end: w.end,
                        probability: w.probability,
                    })
                    .collect(),
            }
        })
        .collect();
    let budget = far_budget.unwrap_or(ctx.config.assessor.far_budget);
    let result = calibrate_tau(&scored, budget).map_err(|e| CliError::input(e.to_string()))?;
    ctx.ensure_out_dir()?;
    write_json(&ctx.out("calibration.json"), &result)?;
    write_csv(&ctx.out("sweep.csv"), &result.sweep)?;
    println!(
        "tau={} feasible={} objective={:.4} (far budget {budget})",
        result.tau, result.feasible, result.objective_value
    );
    aborted_outcome(&aborted)?;
    if ctx.strict && !result.feasible {
        return Err(CliError::failure(format!("strict: no threshold meets far budget {budget}")));
    }
    Ok(())
}

pub fn train_cmd(ctx: &Context, dataset: Option<&Path>, skills: Option<&Path>) -> Result<(), CliError> {
    let data = load_dataset(&ctx.dataset_path(dataset))?;
    let engine = build_engine(ctx, &data, skills, AlertPolicy::default().tau)?;
    let outcome = train(&data, &engine.library, &ctx.config.distill, &engine.pipeline).map_err(|e| match e {
        DistillError::InvalidConfig(_) | DistillError::UnknownScamType(_) => CliError::input(e.to_string()),
        _ => CliError::failure(e.to_string()),
    })?;
    ctx.ensure_out_dir()?;
    let file = ParamFile::new(&outcome.params, &outcome.layout);
    let mut bytes = serde_json::to_vec_pretty(&file).expect("serializable params");
    bytes.push(b'\n');
    write_bytes(&ctx.out("params.json"), &bytes)?;
    write_csv(&ctx.out("train_log.csv"), &outcome.log)?;
    let last = outcome.log.last();
    println!(
        "trained {} epochs; final loss {} par={} far={}; params sha256 {}",
        outcome.log.len(),
        last.map_or_else(|| "n/a".into(), |r| format!("{:.6}", r.loss)),
        fmt_opt(last.and_then(|r| r.par)),
        fmt_opt(last.and_then(|r| r.far)),
        sha256_hex(&bytes)
    );
    Ok(())
}

pub fn report(
    ctx: &Context,
    predictions: Option<&Path>,
    dataset: Option<&Path>,
    manifest: Option<&Path>,
    expect: Option<&Path>,
) -> Result<(), CliError> {
    let data = load_dataset(&ctx.dataset_path(dataset))?;
    let predictions = pick(predictions, ctx.config.io.predictions.as_deref(), || ctx.out("predictions.jsonl"));
    require(&predictions, "predictions")?;
    let records: Vec<WindowRecord> = read_jsonl(&predictions)?;
    let inputs = metric_inputs(&data, &records, ctx.config.stream.window_size).map_err(CliError::input)?;
    let metrics = scamwatch_core::metrics::evaluate(&inputs);
    let manifest_path = ctx.manifest_path(manifest);
    let scam_types: BTreeSet<String> = if manifest.is_some() || manifest_path.is_file() {
        read_json::<Manifest>(&manifest_path, "manifest")?.scam_types.into_iter().collect()
    } else {
        data.iter().filter_map(|t| t.scam_segment.as_ref().map(|s| s.scam_type.clone())).collect()
    };
    ctx.ensure_out_dir()?;
    write_json(&ctx.out("metrics.json"), &metrics)?;
    write_csv(&ctx.out("per_type.csv"), &per_type_rows(&data, &inputs, &scam_types))?;
    write_csv(&ctx.out("memory_scaling.csv"), &memory_scaling(&data, &records).map_err(CliError::input)?)?;
    println!(
        "report over {} trajectories: hr={} edp={} far={} par={}",
        metrics.per_trajectory.len(),
        fmt_opt(metrics.hr),
        fmt_opt(metrics.edp_mean),
        fmt_opt(metrics.far),
        fmt_opt(metrics.par)
    );
    if let Some(path) = expect {
        let run: RunReport = read_json(path, "run-report")?;
        if run.metrics != metrics {
            return Err(CliError::failure(format!("report-mismatch: {} differs from recomputed metrics", path.display())));
        }
        println!("matches {}", path.display());
    }
    Ok(())
}
