use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use super::{artifacts, digest_for, expand_inputs, load_bins, read_qa, write_artifact, PipelineError, Result};
use crate::annotator::{QaFile, Stage};
use crate::labels::{detokenize, BehaviorLabel, TokenBins};
use crate::metrics::judge::{score_batch, JudgeBackend, JudgeConfig, JudgeItem, JudgeMode, LiveJudge, MockJudge, ReplayCache, ReplayJudge};
use crate::metrics::{
    ade, answer_match, behavior_accuracy, collision_rate, completeness, fde, CollisionReport, MetricsReport, COMPLETENESS_THRESHOLD,
};
use crate::provenance::{config_hash, Provenance};
use crate::runtime::{request_id, PredFile};
use crate::MotionLabel;

#[derive(Clone, Debug, Default)]
pub struct EvaluateOptions {
    /// Lets token-id answers to motion questions be decoded.
    pub bins: Option<PathBuf>,
    pub judge_mode: Option<JudgeMode>,
    pub judge: JudgeConfig,
    /// Overrides the judge's in-flight bound.
    pub jobs: Option<usize>,
}

/// A motion answer is either `[(x,y),...]` text or, with bins, token ids.
fn parse_motion(text: &str, gt: &MotionLabel, bins: Option<&TokenBins>) -> Option<MotionLabel> {
    if let Ok(m) = MotionLabel::from_text(text, gt.dt) {
        return Some(m);
    }
    let bins = bins?;
    let ids: Vec<u32> = text
        .split(|c: char| !c.is_ascii_digit())
        .filter(|s| !s.is_empty())
        .map(str::parse)
        .collect::<std::result::Result<_, _>>()
        .ok()?;
    detokenize(&ids, bins).ok().map(|m| MotionLabel::new(m.offsets, gt.dt))
}

fn judge_backend(mode: JudgeMode, config: &JudgeConfig) -> Result<Box<dyn JudgeBackend>> {
    Ok(match mode {
        JudgeMode::Mock => Box::new(MockJudge::new()),
        JudgeMode::Replay => {
            if config.cache.is_none() {
                return Err(PipelineError::Config("replay judge needs judge.cache".into()));
            }
            Box::new(ReplayJudge)
        }
        JudgeMode::Live => Box::new(LiveJudge::from_env(config).map_err(|e| PipelineError::Config(e.to_string()))?),
    })
}

struct FramePair<'a> {
    gt: &'a crate::annotator::FrameAnnotation,
    answers: Option<&'a BTreeMap<String, String>>,
}

/// Scores predictions against the QA ground truth and writes the report.
pub fn evaluate(qa_paths: &[PathBuf], pred: &Path, opts: &EvaluateOptions, out: &Path) -> Result<MetricsReport> {
    let qa: Vec<QaFile> = qa_paths.iter().map(|p| read_qa(p)).collect::<Result<_>>()?;
    let pred_paths = expand_inputs(pred, ".pred.json")?;
    let mut preds: BTreeMap<String, PredFile> = BTreeMap::new();
    for p in &pred_paths {
        let f = PredFile::read(p).map_err(|e| PipelineError::stage("evaluate", e))?;
        preds.insert(f.scenario.clone(), f);
    }
    let bins = opts.bins.as_deref().map(load_bins).transpose()?;

    let hash = config_hash(&(opts.judge_mode, &opts.judge.endpoint, &opts.judge.model, COMPLETENESS_THRESHOLD));
    let seed = qa.first().map_or(0, |f| f.provenance.seed);
    artifacts::prepare(out)?;
    let mut provenance = Provenance::new(hash, seed);
    for p in qa_paths.iter().chain(&pred_paths).chain(opts.bins.iter()) {
        provenance = provenance.with_input(digest_for(p, out)?);
    }
    let mut report = MetricsReport::new(provenance);

    let mut frames: Vec<FramePair> = Vec::new();
    for f in &qa {
        let pf = preds.get(&f.scenario);
        if pf.is_none() {
            report.warnings.push(format!("no predictions for scenario {}", f.scenario));
        }
        for fr in &f.frames {
            let answers = pf.and_then(|p| p.frame(&fr.graph.frame_id)).map(|p| &p.result.answers);
            if pf.is_some() && answers.is_none() {
                report.warnings.push(format!("no predictions for frame {}", fr.graph.frame_id));
            }
            frames.push(FramePair { gt: fr, answers });
        }
    }
    report.frames = frames.len();

    let mut scores = Vec::new();
    let mut judge_items = Vec::new();
    for fp in &frames {
        for node in fp.gt.graph.nodes.values() {
            let key = request_id(&fp.gt.graph.frame_id, &node.id);
            let predicted = fp.answers.and_then(|a| a.get(&node.id));
            let s = answer_match(predicted.map_or("", String::as_str), &node.answer);
            report.answer_scores.insert(key.clone(), s);
            scores.push(s);
            match predicted {
                Some(p) => judge_items.push(JudgeItem {
                    id: key,
                    question: node.question.clone(),
                    gt: node.answer.clone(),
                    pred: p.clone(),
                }),
                None => {
                    if opts.judge_mode.is_some() {
                        report.unscored.insert(key, "no prediction".into());
                    }
                }
            }
        }
    }
    report.nodes = scores.len();
    report.completeness = completeness(&scores, COMPLETENESS_THRESHOLD);
    if report.completeness.empty {
        report.warnings.push("no nodes evaluated; completeness reported as 0".into());
    }

    motion_metrics(&frames, bins.as_ref(), &mut report);
    behavior_metrics(&frames, &mut report);

    if let Some(mode) = opts.judge_mode {
        let backend = judge_backend(mode, &opts.judge)?;
        let cache = match &opts.judge.cache {
            Some(p) => Some(ReplayCache::open(p).map_err(|e| PipelineError::Config(e.to_string()))?),
            None => None,
        };
        let in_flight = opts.jobs.unwrap_or(opts.judge.max_in_flight);
        for (id, r) in score_batch(&judge_items, backend.as_ref(), cache.as_ref(), opts.judge.retry, in_flight) {
            match r {
                Ok(s) => {
                    report.gpt_scores.insert(id, s);
                }
                Err(e) => {
                    report.unscored.insert(id, e.to_string());
                }
            }
        }
        if let Some(c) = &cache {
            if mode != JudgeMode::Replay {
                c.save().map_err(|e| PipelineError::Io(e.to_string()))?;
            }
        }
    }

    let text = serde_json::to_string_pretty(&report).expect("report serializes") + "\n";
    write_artifact(out, "evaluate", text.as_bytes())?;
    Ok(report)
}

fn motion_metrics(frames: &[FramePair], bins: Option<&TokenBins>, report: &mut MetricsReport) {
    let mut ades = Vec::new();
    let mut fdes = Vec::new();
    let mut hits = [0.0; 3];
    let mut counted = 0usize;
    let mut excluded = 0usize;
    let mut unparsed = 0usize;
    for fp in frames {
        let Some(m_node) = fp.gt.graph.nodes_in(Stage::M).next() else { continue };
        let Some(text) = fp.answers.and_then(|a| a.get(&m_node.id)) else {
            unparsed += 1;
            continue;
        };
        let Some(pred) = parse_motion(text, &fp.gt.motion, bins) else {
            unparsed += 1;
            continue;
        };
        match (ade(&pred, &fp.gt.motion), fde(&pred, &fp.gt.motion)) {
            (Ok(a), Ok(f)) => {
                ades.push(a);
                fdes.push(f);
            }
            (Err(e), _) | (_, Err(e)) => {
                report.warnings.push(format!("{}: {e}", fp.gt.graph.frame_id));
                continue;
            }
        }
        match collision_rate(std::slice::from_ref(&pred), std::slice::from_ref(&fp.gt.futures), fp.gt.ego_size) {
            Ok(c) => {
                counted += c.frames;
                excluded += c.excluded;
                for (h, v) in hits.iter_mut().zip(c.per_horizon) {
                    *h += v * c.frames as f64;
                }
            }
            Err(e) => report.warnings.push(format!("{}: {e}", fp.gt.graph.frame_id)),
        }
    }
    if unparsed > 0 {
        report.warnings.push(format!("{unparsed} motion answer(s) missing or unparseable"));
    }
    if !ades.is_empty() {
        report.ade = Some(ades.iter().sum::<f64>() / ades.len() as f64);
        report.fde = Some(fdes.iter().sum::<f64>() / fdes.len() as f64);
        let per_horizon = hits.map(|h| if counted == 0 { 0.0 } else { h / counted as f64 });
        report.collision = Some(CollisionReport {
            rate: per_horizon.iter().sum::<f64>() / 3.0,
            per_horizon,
            frames: counted,
            excluded,
        });
    }
}

fn behavior_metrics(frames: &[FramePair], report: &mut MetricsReport) {
    let mut preds = Vec::new();
    let mut gts = Vec::new();
    let mut unparsed = 0usize;
    for fp in frames {
        let Some(b_node) = fp.gt.graph.nodes_in(Stage::B).next() else { continue };
        match fp.answers.and_then(|a| a.get(&b_node.id)).map(|t| BehaviorLabel::from_text(t)) {
            Some(Ok(b)) => {
                preds.push(b);
                gts.push(fp.gt.behavior);
            }
            _ => unparsed += 1,
        }
    }
    if unparsed > 0 {
        report.warnings.push(format!("{unparsed} behavior answer(s) missing or unparseable"));
    }
    if !preds.is_empty() {
        report.behavior = behavior_accuracy(&preds, &gts).ok();
    }
}
