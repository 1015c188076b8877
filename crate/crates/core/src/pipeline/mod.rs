//! File-based stages: each reads artifacts from disk and writes one artifact
//! with provenance, plus a `.meta.json` sidecar holding the wall-clock bits.

mod artifacts;
mod evaluate;
mod validate;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::annotator::{annotate_log, extract_keyframes, frame_id, AnnotatorConfig, QaFile, SkippedFrame};
use crate::expert::{fit_longitudinal, LongitudinalCoeffs, LongitudinalSample, PdmLite, PlannerConfig};
use crate::fixtures;
use crate::labels::{behavior_label, fit_token_bins, interval_deltas, motion_label, tokenize, BehaviorLabel, BinMode, BinThresholds, LabelError, TokenBins};
use crate::metrics::judge::{JudgeConfig, JudgeMode};
use crate::provenance::{config_hash, Provenance};
use crate::runtime::{
    run_graph, teacher_forcing_pairs, Answerer, ContextPolicy, EchoAnswerer, ExecAnswerer, ExternalConfig, FramePrediction, HttpAnswerer,
    OracleAnswerer, PredFile, RunResult, SubgraphFilter, TrainingPair,
};
use crate::sim::{run_scenario, RolloutLog, Scenario};
use crate::{MotionLabel, Vec2D};

pub use artifacts::{digest_for, failed_marker, meta_path, relative_path, write_artifact, ArtifactMeta};
pub use evaluate::{evaluate, EvaluateOptions};
pub use validate::{exit_code as validate_exit_code, validate_file, validate_files, FileKind, FileReport};

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("missing input file {}", .0.display())]
    MissingInput(PathBuf),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Config(String),
    #[error("{stage}: {message}")]
    Stage { stage: &'static str, message: String },
}

impl PipelineError {
    /// 2 for files that are not there, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::MissingInput(_) => 2,
            _ => 1,
        }
    }

    fn stage(stage: &'static str, e: impl std::fmt::Display) -> Self {
        PipelineError::Stage {
            stage,
            message: e.to_string(),
        }
    }
}

pub type Result<T> = std::result::Result<T, PipelineError>;

fn require(path: &Path) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(PipelineError::MissingInput(path.to_path_buf()))
    }
}

fn read_text(path: &Path) -> Result<String> {
    require(path)?;
    std::fs::read_to_string(path).map_err(|e| PipelineError::Io(format!("{}: {e}", path.display())))
}

/// Everything a pipeline run can be configured with. All fields default.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub planner: PlannerConfig,
    pub annotator: AnnotatorConfig,
    pub bins: BinsConfig,
    pub rungraph: RungraphConfig,
    pub judge: JudgeConfig,
    /// Judge used by `evaluate`; no GPT scores when absent.
    pub judge_mode: Option<JudgeMode>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BinsConfig {
    pub mode: BinMode,
}

impl Default for BinsConfig {
    fn default() -> Self {
        // A single straight-road rollout has no lateral spread, which quantile
        // fitting rejects.
        Self { mode: BinMode::Uniform }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RungraphConfig {
    pub answerer: String,
    pub policy: ContextPolicy,
    pub filter: Option<String>,
    pub external: ExternalConfig,
}

impl Default for RungraphConfig {
    fn default() -> Self {
        Self {
            answerer: "oracle".into(),
            policy: ContextPolicy::Graph,
            filter: None,
            external: ExternalConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = read_text(path)?;
        let c: Self = serde_json::from_str(&text).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        self.planner.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
        self.annotator.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
        parse_answerer_spec(&self.rungraph.answerer)?;
        if let Some(f) = &self.rungraph.filter {
            f.parse::<SubgraphFilter>().map_err(|e| PipelineError::Config(e.to_string()))?;
        }
        Ok(())
    }
}

/// Where a scenario comes from: a JSON file or a built-in fixture.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ScenarioSource {
    File(PathBuf),
    Fixture(String),
}

impl ScenarioSource {
    /// Loads the scenario; `seed` replaces the one it carries.
    pub fn load(&self, seed: Option<u64>) -> Result<Scenario> {
        let mut sc = match self {
            ScenarioSource::File(p) => {
                require(p)?;
                Scenario::load(p).map_err(|e| PipelineError::stage("simulate", e))?
            }
            ScenarioSource::Fixture(name) => fixtures::by_name(name, seed.unwrap_or(0)).ok_or_else(|| {
                PipelineError::Config(format!("unknown fixture {name:?}; known: {}", fixtures::NAMES.join(", ")))
            })?,
        };
        if let Some(s) = seed {
            sc.seed = s;
        }
        Ok(sc)
    }
}

/// Runs the expert on a scenario and writes the rollout log.
pub fn simulate(source: &ScenarioSource, seed: Option<u64>, planner: &PlannerConfig, out: &Path) -> Result<RolloutLog> {
    let scenario = source.load(seed)?;
    let mut driver = PdmLite::new(planner.clone());
    let mut log = run_scenario(&scenario, &mut driver).map_err(|e| PipelineError::stage("simulate", e))?;
    artifacts::prepare(out)?;
    if let ScenarioSource::File(p) = source {
        log.header.provenance = log.header.provenance.clone().with_input(digest_for(p, out)?);
    }
    write_artifact(out, "simulate", log.to_jsonl().as_bytes())?;
    Ok(log)
}

fn read_log(path: &Path) -> Result<RolloutLog> {
    require(path)?;
    RolloutLog::read(path).map_err(|e| PipelineError::stage("read log", e))
}

/// `{dir}/{scenario}{suffix}`
pub fn artifact_in(dir: &Path, scenario: &str, suffix: &str) -> PathBuf {
    dir.join(format!("{scenario}{suffix}"))
}

pub fn annotate(log_path: &Path, config: &AnnotatorConfig, out_dir: &Path) -> Result<PathBuf> {
    let log = read_log(log_path)?;
    let templates = config.load_templates().map_err(|e| PipelineError::Config(e.to_string()))?;
    let mut qa = annotate_log(&log, config, &templates).map_err(|e| PipelineError::stage("annotate", e))?;
    let out = artifact_in(out_dir, &log.header.scenario, ".qa.json");
    artifacts::prepare(&out)?;
    qa.provenance.inputs = vec![digest_for(log_path, &out)?];
    write_artifact(&out, "annotate", qa.to_json().as_bytes())?;
    Ok(out)
}

pub const LABELS_FORMAT: &str = "driveforge.labels";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelEntry {
    pub frame_id: String,
    pub tick: u64,
    pub time: f64,
    pub motion: MotionLabel,
    pub deltas: Vec<Vec2D>,
    pub behavior: BehaviorLabel,
}

/// Behavior and motion labels at every keyframe of one rollout.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelFile {
    pub format: String,
    pub version: u32,
    pub provenance: Provenance,
    pub scenario: String,
    pub thresholds: BinThresholds,
    pub entries: Vec<LabelEntry>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub skipped: Vec<SkippedFrame>,
}

impl LabelFile {
    pub fn read(path: &Path) -> Result<Self> {
        let text = read_text(path)?;
        let f: Self = serde_json::from_str(&text).map_err(|e| PipelineError::stage("read labels", format!("{}: {e}", path.display())))?;
        if f.format != LABELS_FORMAT {
            return Err(PipelineError::stage("read labels", format!("{}: not a label file", path.display())));
        }
        Ok(f)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("labels serialize") + "\n"
    }
}

pub fn label_log(log: &RolloutLog, config: &AnnotatorConfig) -> Result<LabelFile> {
    config.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
    let mut entries = Vec::new();
    let mut skipped = Vec::new();
    for k in extract_keyframes(log) {
        let rec = &log.records[k];
        let id = frame_id(&log.header.scenario, rec.tick);
        match motion_label(log, k, config.motion_points, config.motion_dt) {
            Ok(motion) => entries.push(LabelEntry {
                frame_id: id,
                tick: rec.tick,
                time: rec.time,
                deltas: interval_deltas(&motion),
                behavior: behavior_label(&motion, &config.thresholds),
                motion,
            }),
            Err(e @ LabelError::InsufficientHorizon { .. }) => skipped.push(SkippedFrame {
                frame_id: id,
                reason: e.to_string(),
            }),
            Err(e) => return Err(PipelineError::stage("label", e)),
        }
    }
    Ok(LabelFile {
        format: LABELS_FORMAT.into(),
        version: 1,
        provenance: Provenance::new(config.hash(), log.header.seed),
        scenario: log.header.scenario.clone(),
        thresholds: config.thresholds,
        entries,
        skipped,
    })
}

pub fn label(log_path: &Path, config: &AnnotatorConfig, out: &Path) -> Result<LabelFile> {
    let log = read_log(log_path)?;
    let mut file = label_log(&log, config)?;
    artifacts::prepare(out)?;
    file.provenance.inputs = vec![digest_for(log_path, out)?];
    write_artifact(out, "label", file.to_json().as_bytes())?;
    Ok(file)
}

pub const BINS_FORMAT: &str = "driveforge.bins";

/// Token bins as written to disk; `TokenBins::load` reads the same file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinsFile {
    pub format: String,
    pub provenance: Provenance,
    #[serde(flatten)]
    pub bins: TokenBins,
}

pub fn fit_bins(label_paths: &[PathBuf], mode: BinMode, seed: u64, out: &Path) -> Result<TokenBins> {
    let mut corpus = Vec::new();
    for p in label_paths {
        corpus.extend(LabelFile::read(p)?.entries.into_iter().map(|e| e.motion));
    }
    let bins = fit_token_bins(&corpus, mode).map_err(|e| PipelineError::stage("fit-bins", e))?;
    artifacts::prepare(out)?;
    let mut provenance = Provenance::new(config_hash(&mode), seed);
    for p in label_paths {
        provenance = provenance.with_input(digest_for(p, out)?);
    }
    let file = BinsFile {
        format: BINS_FORMAT.into(),
        provenance,
        bins: bins.clone(),
    };
    write_artifact(out, "fit-bins", (serde_json::to_string_pretty(&file).expect("bins serialize") + "\n").as_bytes())?;
    Ok(bins)
}

pub fn load_bins(path: &Path) -> Result<TokenBins> {
    require(path)?;
    TokenBins::load(path).map_err(|e| PipelineError::stage("read bins", e))
}

pub const TOKENS_FORMAT: &str = "driveforge.tokens";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenEntry {
    pub frame_id: String,
    pub tokens: Vec<u32>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TokenFile {
    pub format: String,
    pub provenance: Provenance,
    pub vocab_size: u32,
    pub entries: Vec<TokenEntry>,
}

pub fn tokenize_labels(label_paths: &[PathBuf], bins_path: &Path, out: &Path) -> Result<TokenFile> {
    let bins = load_bins(bins_path)?;
    let mut entries = Vec::new();
    let mut seed = 0;
    for p in label_paths {
        let file = LabelFile::read(p)?;
        seed = file.provenance.seed;
        for e in file.entries {
            let tokens = tokenize(&e.motion, &bins).map_err(|err| PipelineError::stage("tokenize", format!("{}: {err}", e.frame_id)))?;
            entries.push(TokenEntry {
                frame_id: e.frame_id,
                tokens,
            });
        }
    }
    artifacts::prepare(out)?;
    let mut provenance = Provenance::new(config_hash(&bins), seed).with_input(digest_for(bins_path, out)?);
    for p in label_paths {
        provenance = provenance.with_input(digest_for(p, out)?);
    }
    let file = TokenFile {
        format: TOKENS_FORMAT.into(),
        provenance,
        vocab_size: bins.vocab_size(),
        entries,
    };
    write_artifact(out, "tokenize", (serde_json::to_string_pretty(&file).expect("tokens serialize") + "\n").as_bytes())?;
    Ok(file)
}

/// Parsed `--answerer` value.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum AnswererSpec {
    Oracle,
    Echo,
    Exec(String),
    Http(String),
}

pub fn parse_answerer_spec(s: &str) -> Result<AnswererSpec> {
    match s {
        "oracle" => Ok(AnswererSpec::Oracle),
        "echo" => Ok(AnswererSpec::Echo),
        _ => {
            if let Some(cmd) = s.strip_prefix("exec:").filter(|c| !c.trim().is_empty()) {
                Ok(AnswererSpec::Exec(cmd.to_string()))
            } else if s.starts_with("https://") {
                Ok(AnswererSpec::Http(s.to_string()))
            } else if let Some(url) = s.strip_prefix("http:") {
                // Accept both `http:URL` and a bare `http://...` or `https://...`.
                let url = if url.starts_with("//") { s.to_string() } else { url.to_string() };
                Ok(AnswererSpec::Http(url))
            } else {
                Err(PipelineError::Config(format!("unknown answerer {s:?}; use oracle, echo, exec:CMD or http:URL")))
            }
        }
    }
}

fn build_answerer(spec: &AnswererSpec, qa: &[QaFile], external: &ExternalConfig) -> Result<Box<dyn Answerer>> {
    Ok(match spec {
        AnswererSpec::Oracle => Box::new(OracleAnswerer::from_graphs(qa.iter().flat_map(|f| f.frames.iter().map(|fr| &fr.graph)))),
        AnswererSpec::Echo => Box::new(EchoAnswerer),
        AnswererSpec::Exec(cmd) => Box::new(ExecAnswerer::spawn(cmd, external.clone()).map_err(|e| PipelineError::stage("rungraph", e))?),
        AnswererSpec::Http(url) => Box::new(HttpAnswerer::new(url, external.clone())),
    })
}

/// Expands a path argument: a directory yields its files ending in `suffix`, sorted.
pub fn expand_inputs(path: &Path, suffix: &str) -> Result<Vec<PathBuf>> {
    require(path)?;
    if !path.is_dir() {
        return Ok(vec![path.to_path_buf()]);
    }
    let mut out: Vec<PathBuf> = std::fs::read_dir(path)
        .map_err(|e| PipelineError::Io(format!("{}: {e}", path.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.to_string_lossy().ends_with(suffix))
        .collect();
    out.sort();
    Ok(out)
}

pub fn read_qa(path: &Path) -> Result<QaFile> {
    require(path)?;
    QaFile::read(path).map_err(|e| PipelineError::stage("read qa", e))
}

/// Options of the `rungraph` stage.
#[derive(Clone, Debug)]
pub struct RungraphOptions {
    pub answerer: String,
    pub policy: ContextPolicy,
    pub filter: Option<SubgraphFilter>,
    pub external: ExternalConfig,
    pub jobs: usize,
    /// Also write teacher-forcing pairs as JSONL here.
    pub pairs: Option<PathBuf>,
}

impl RungraphOptions {
    pub fn from_config(c: &RungraphConfig, jobs: usize) -> Result<Self> {
        Ok(Self {
            answerer: c.answerer.clone(),
            policy: c.policy,
            filter: c.filter.as_deref().map(str::parse).transpose().map_err(|e: crate::runtime::RuntimeError| PipelineError::Config(e.to_string()))?,
            external: c.external.clone(),
            jobs,
            pairs: None,
        })
    }
}

fn run_frames(qa: &QaFile, answerer: &dyn Answerer, opts: &RungraphOptions) -> Result<Vec<FramePrediction>> {
    let graphs: Vec<_> = qa
        .frames
        .iter()
        .map(|f| match &opts.filter {
            Some(flt) => flt.apply(&f.graph),
            None => f.graph.clone(),
        })
        .collect();
    let jobs = opts.jobs.max(1).min(graphs.len().max(1));
    let chunk = graphs.len().div_ceil(jobs).max(1);
    let results: Vec<Result<RunResult>> = std::thread::scope(|scope| {
        let handles: Vec<_> = graphs
            .chunks(chunk)
            .map(|part| {
                scope.spawn(move || {
                    part.iter()
                        .map(|g| run_graph(g, answerer, opts.policy).map_err(|e| PipelineError::stage("rungraph", e)))
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        handles.into_iter().flat_map(|h| h.join().expect("rungraph worker panicked")).collect()
    });
    graphs
        .iter()
        .zip(results)
        .map(|(g, r)| {
            Ok(FramePrediction {
                frame_id: g.frame_id.clone(),
                result: r?,
            })
        })
        .collect()
}

/// Runs every frame of every QA file and writes `{out_dir}/{scenario}.pred.json`.
pub fn rungraph(qa_paths: &[PathBuf], opts: &RungraphOptions, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let spec = parse_answerer_spec(&opts.answerer)?;
    let files = qa_paths.iter().map(|p| read_qa(p)).collect::<Result<Vec<_>>>()?;
    let answerer = build_answerer(&spec, &files, &opts.external)?;
    let hash = config_hash(&(&opts.answerer, opts.policy, opts.filter.as_ref().map(|f| format!("{f:?}")), &opts.external));
    let mut written = Vec::new();
    let mut pairs: Vec<TrainingPair> = Vec::new();
    for (path, qa) in qa_paths.iter().zip(&files) {
        let out = artifact_in(out_dir, &qa.scenario, ".pred.json");
        artifacts::prepare(&out)?;
        let mut pred = PredFile::new(
            Provenance::new(hash.clone(), qa.provenance.seed).with_input(digest_for(path, &out)?),
            &qa.scenario,
            &answerer.name(),
            opts.policy,
        );
        pred.frames = run_frames(qa, answerer.as_ref(), opts)?;
        let failed: usize = pred.frames.iter().map(|f| f.result.failed.len()).sum();
        if failed > 0 {
            log::warn!("{}: {failed} node(s) failed", qa.scenario);
        }
        write_artifact(&out, "rungraph", pred.to_json().as_bytes())?;
        written.push(out);
        if opts.pairs.is_some() {
            pairs.extend(qa.frames.iter().flat_map(|f| teacher_forcing_pairs(&f.graph)));
        }
    }
    if let Some(p) = &opts.pairs {
        artifacts::prepare(p)?;
        let body: String = pairs.iter().map(|x| serde_json::to_string(x).expect("pair serializes") + "\n").collect();
        write_artifact(p, "rungraph", body.as_bytes())?;
    }
    Ok(written)
}

pub const COEFFS_FORMAT: &str = "driveforge.coeffs";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoeffsFile {
    pub format: String,
    pub provenance: Provenance,
    pub samples: usize,
    pub coeffs: LongitudinalCoeffs,
}

/// Fits the longitudinal controller to the (speed, target, command) triples of a log.
pub fn fit_longitudinal_log(log_path: &Path, out: &Path) -> Result<CoeffsFile> {
    let log = read_log(log_path)?;
    let samples: Vec<LongitudinalSample> = log
        .records
        .iter()
        .map(|r| LongitudinalSample {
            v: r.world.ego.speed,
            target: r.target_speed,
            u: r.controls.throttle() - r.controls.brake(),
        })
        .collect();
    let coeffs = fit_longitudinal(&samples).map_err(|e| PipelineError::stage("fit-longitudinal", e))?;
    artifacts::prepare(out)?;
    let file = CoeffsFile {
        format: COEFFS_FORMAT.into(),
        provenance: Provenance::new(config_hash(&samples.len()), log.header.seed).with_input(digest_for(log_path, out)?),
        samples: samples.len(),
        coeffs,
    };
    write_artifact(out, "fit-longitudinal", (serde_json::to_string_pretty(&file).expect("coeffs serialize") + "\n").as_bytes())?;
    Ok(file)
}

/// Stages of `pipeline`, in execution order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum PipelineStage {
    Simulate,
    Annotate,
    Label,
    FitBins,
    Tokenize,
    Rungraph,
    Evaluate,
}

impl PipelineStage {
    pub const ALL: [PipelineStage; 7] = [
        PipelineStage::Simulate,
        PipelineStage::Annotate,
        PipelineStage::Label,
        PipelineStage::FitBins,
        PipelineStage::Tokenize,
        PipelineStage::Rungraph,
        PipelineStage::Evaluate,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PipelineStage::Simulate => "simulate",
            PipelineStage::Annotate => "annotate",
            PipelineStage::Label => "label",
            PipelineStage::FitBins => "fit-bins",
            PipelineStage::Tokenize => "tokenize",
            PipelineStage::Rungraph => "rungraph",
            PipelineStage::Evaluate => "evaluate",
        }
    }
}

impl std::str::FromStr for PipelineStage {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        PipelineStage::ALL
            .into_iter()
            .find(|st| st.as_str() == s)
            .ok_or_else(|| format!("unknown stage {s:?}"))
    }
}

/// Artifact locations of one pipeline run under `root`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PipelineLayout {
    pub root: PathBuf,
    pub scenario: String,
}

impl PipelineLayout {
    pub fn rollout(&self) -> PathBuf {
        artifact_in(&self.root.join("rollout"), &self.scenario, ".jsonl")
    }
    pub fn qa_dir(&self) -> PathBuf {
        self.root.join("qa")
    }
    pub fn qa(&self) -> PathBuf {
        artifact_in(&self.qa_dir(), &self.scenario, ".qa.json")
    }
    pub fn labels(&self) -> PathBuf {
        artifact_in(&self.root.join("labels"), &self.scenario, ".labels.json")
    }
    pub fn bins(&self) -> PathBuf {
        self.root.join("bins.json")
    }
    pub fn tokens(&self) -> PathBuf {
        artifact_in(&self.root.join("tokens"), &self.scenario, ".tokens.json")
    }
    pub fn pred_dir(&self) -> PathBuf {
        self.root.join("pred")
    }
    pub fn pred(&self) -> PathBuf {
        artifact_in(&self.pred_dir(), &self.scenario, ".pred.json")
    }
    pub fn report(&self) -> PathBuf {
        self.root.join("report.json")
    }

    pub fn artifact(&self, stage: PipelineStage) -> PathBuf {
        match stage {
            PipelineStage::Simulate => self.rollout(),
            PipelineStage::Annotate => self.qa(),
            PipelineStage::Label => self.labels(),
            PipelineStage::FitBins => self.bins(),
            PipelineStage::Tokenize => self.tokens(),
            PipelineStage::Rungraph => self.pred(),
            PipelineStage::Evaluate => self.report(),
        }
    }
}

/// Runs all stages (or only `only`) for one scenario under `root`. A failing
/// stage leaves `{artifact}.failed` next to where its output would go and
/// stops the run; earlier artifacts stay.
pub fn run_pipeline(
    source: &ScenarioSource,
    config: &RunConfig,
    seed: Option<u64>,
    jobs: usize,
    root: &Path,
    only: Option<PipelineStage>,
) -> Result<PipelineLayout> {
    config.validate()?;
    let scenario = source.load(seed)?;
    let layout = PipelineLayout {
        root: root.to_path_buf(),
        scenario: scenario.name.clone(),
    };
    for stage in PipelineStage::ALL {
        if only.is_some_and(|o| o != stage) {
            continue;
        }
        log::info!("stage {}", stage.as_str());
        if let Err(e) = run_stage(stage, &layout, source, config, seed, jobs) {
            artifacts::mark_failed(&layout.artifact(stage), &e);
            return Err(e);
        }
    }
    Ok(layout)
}

fn run_stage(stage: PipelineStage, l: &PipelineLayout, source: &ScenarioSource, config: &RunConfig, seed: Option<u64>, jobs: usize) -> Result<()> {
    match stage {
        PipelineStage::Simulate => simulate(source, seed, &config.planner, &l.rollout()).map(drop),
        PipelineStage::Annotate => annotate(&l.rollout(), &config.annotator, &l.qa_dir()).map(drop),
        PipelineStage::Label => label(&l.rollout(), &config.annotator, &l.labels()).map(drop),
        PipelineStage::FitBins => {
            let seed = LabelFile::read(&l.labels())?.provenance.seed;
            fit_bins(&[l.labels()], config.bins.mode, seed, &l.bins()).map(drop)
        }
        PipelineStage::Tokenize => tokenize_labels(&[l.labels()], &l.bins(), &l.tokens()).map(drop),
        PipelineStage::Rungraph => rungraph(&[l.qa()], &RungraphOptions::from_config(&config.rungraph, jobs)?, &l.pred_dir()).map(drop),
        PipelineStage::Evaluate => {
            let opts = EvaluateOptions {
                bins: Some(l.bins()),
                judge_mode: config.judge_mode,
                judge: config.judge.clone(),
                jobs: Some(jobs),
            };
            evaluate(&[l.qa()], &l.pred_dir(), &opts, &l.report()).map(drop)
        }
    }
}
