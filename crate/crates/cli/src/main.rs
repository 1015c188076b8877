use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use driveforge::labels::BinMode;
use driveforge::metrics::judge::JudgeMode;
use driveforge::pipeline::{self as pl, PipelineError, PipelineStage, RunConfig, ScenarioSource};
use driveforge::runtime::{ContextPolicy, SubgraphFilter};

#[derive(Parser)]
#[command(name = "driveforge", version, about = "Driving simulation, graph VQA annotation and evaluation")]
struct Cli {
    /// Seed recorded in every artifact; overrides the scenario's own.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Run configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads for stages that parallelize.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// More log output; repeat for debug.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct ScenarioArg {
    /// Scenario JSON file.
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Built-in scenario by name.
    #[arg(long)]
    fixture: Option<String>,
}

impl ScenarioArg {
    fn source(&self) -> ScenarioSource {
        match (&self.scenario, &self.fixture) {
            (Some(p), _) => ScenarioSource::File(p.clone()),
            (None, Some(n)) => ScenarioSource::Fixture(n.clone()),
            (None, None) => unreachable!("clap enforces one of --scenario/--fixture"),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run the expert on a scenario and write the rollout log.
    Simulate {
        #[command(flatten)]
        scenario: ScenarioArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build QA graphs at the keyframes of rollout logs.
    Annotate {
        /// Rollout log, or a directory of them.
        #[arg(long)]
        log: PathBuf,
        /// Output directory; one `{scenario}.qa.json` per log.
        #[arg(long)]
        out: PathBuf,
    },
    /// Extract behavior and motion labels at keyframes.
    Label {
        #[arg(long)]
        log: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit 256-bin trajectory token bins on label files.
    FitBins {
        /// Label files or directories.
        #[arg(long, required = true, num_args = 1..)]
        labels: Vec<PathBuf>,
        #[arg(long)]
        mode: Option<BinMode>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Turn motion labels into token sequences.
    Tokenize {
        #[arg(long, required = true, num_args = 1..)]
        labels: Vec<PathBuf>,
        #[arg(long)]
        bins: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Answer QA graphs stage by stage.
    Rungraph {
        /// QA file or directory.
        #[arg(long)]
        qa: PathBuf,
        /// oracle, echo, exec:CMD or http:URL
        #[arg(long)]
        answerer: Option<String>,
        #[arg(long)]
        policy: Option<ContextPolicy>,
        /// Comma-separated stage names or node id globs.
        #[arg(long)]
        filter: Option<String>,
        /// Seconds to wait for an external answerer.
        #[arg(long)]
        timeout: Option<f64>,
        #[arg(long)]
        retries: Option<u32>,
        /// Also write teacher-forcing pairs (JSONL).
        #[arg(long)]
        pairs: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score predictions and write a metrics report.
    Evaluate {
        #[arg(long)]
        qa: PathBuf,
        /// Prediction file or directory.
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        bins: Option<PathBuf>,
        #[arg(long)]
        report: PathBuf,
        /// GPT-score backend; omitted means no GPT scores.
        #[arg(long)]
        judge: Option<JudgeMode>,
        /// Replay cache for judge scores.
        #[arg(long)]
        judge_cache: Option<PathBuf>,
    },
    /// Least-squares fit of the longitudinal controller to a log.
    FitLongitudinal {
        #[arg(long)]
        log: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check artifacts; exit 0 when all are clean.
    Validate {
        #[arg(required = true)]
        files: Vec<PathBuf>,
    },
    /// Run every stage for one scenario under one output directory.
    Pipeline {
        #[command(flatten)]
        scenario: ScenarioArg,
        #[arg(long)]
        out: PathBuf,
        /// Run a single stage against existing artifacts.
        #[arg(long)]
        only: Option<PipelineStage>,
    },
}

fn expand_all(paths: &[PathBuf], suffix: &str) -> pl::Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for p in paths {
        out.extend(pl::expand_inputs(p, suffix)?);
    }
    Ok(out)
}

fn first_seed(labels: &[PathBuf]) -> pl::Result<u64> {
    match labels.first() {
        Some(p) => Ok(pl::LabelFile::read(p)?.provenance.seed),
        None => Ok(0),
    }
}

fn nonempty(paths: Vec<PathBuf>, what: &Path) -> pl::Result<Vec<PathBuf>> {
    if paths.is_empty() {
        Err(PipelineError::Config(format!("no input files under {}", what.display())))
    } else {
        Ok(paths)
    }
}

fn run(cli: Cli) -> pl::Result<i32> {
    let mut config = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let jobs = cli.jobs.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get())).max(1);
    match cli.command {
        Command::Simulate { scenario, out } => {
            let log = pl::simulate(&scenario.source(), cli.seed, &config.planner, &out)?;
            println!("wrote {} ({} ticks)", out.display(), log.records.len());
        }
        Command::Annotate { log, out } => {
            for l in nonempty(pl::expand_inputs(&log, ".jsonl")?, &log)? {
                let written = pl::annotate(&l, &config.annotator, &out)?;
                println!("wrote {}", written.display());
            }
        }
        Command::Label { log, out } => {
            let f = pl::label(&log, &config.annotator, &out)?;
            println!("wrote {} ({} keyframes, {} skipped)", out.display(), f.entries.len(), f.skipped.len());
        }
        Command::FitBins { labels, mode, out } => {
            let files = expand_all(&labels, ".labels.json")?;
            let seed = match cli.seed {
                Some(s) => s,
                None => first_seed(&files)?,
            };
            pl::fit_bins(&files, mode.unwrap_or(config.bins.mode), seed, &out)?;
            println!("wrote {}", out.display());
        }
        Command::Tokenize { labels, bins, out } => {
            let files = expand_all(&labels, ".labels.json")?;
            let f = pl::tokenize_labels(&files, &bins, &out)?;
            println!("wrote {} ({} sequences)", out.display(), f.entries.len());
        }
        Command::Rungraph {
            qa,
            answerer,
            policy,
            filter,
            timeout,
            retries,
            pairs,
            out,
        } => {
            let rg = &mut config.rungraph;
            if let Some(a) = answerer {
                rg.answerer = a;
            }
            if let Some(p) = policy {
                rg.policy = p;
            }
            if filter.is_some() {
                rg.filter = filter;
            }
            if let Some(t) = timeout {
                rg.external.timeout_s = t;
            }
            if let Some(r) = retries {
                rg.external.retries = r;
            }
            let mut opts = pl::RungraphOptions::from_config(rg, jobs)?;
            opts.pairs = pairs;
            let files = nonempty(pl::expand_inputs(&qa, ".qa.json")?, &qa)?;
            for w in pl::rungraph(&files, &opts, &out)? {
                println!("wrote {}", w.display());
            }
        }
        Command::Evaluate {
            qa,
            pred,
            bins,
            report,
            judge,
            judge_cache,
        } => {
            if judge_cache.is_some() {
                config.judge.cache = judge_cache;
            }
            let opts = pl::EvaluateOptions {
                bins,
                judge_mode: judge.or(config.judge_mode),
                judge: config.judge.clone(),
                jobs: cli.jobs,
            };
            let files = nonempty(pl::expand_inputs(&qa, ".qa.json")?, &qa)?;
            let r = pl::evaluate(&files, &pred, &opts, &report)?;
            println!(
                "wrote {} ({} frames, {} nodes, completeness {:.3})",
                report.display(),
                r.frames,
                r.nodes,
                r.completeness.value
            );
            let bad = r.violations();
            if !bad.is_empty() {
                for v in bad {
                    eprintln!("violation: {v}");
                }
                return Ok(1);
            }
        }
        Command::FitLongitudinal { log, out } => {
            let c = pl::fit_longitudinal_log(&log, &out)?;
            println!("wrote {} from {} samples: {:?}", out.display(), c.samples, c.coeffs.0);
        }
        Command::Validate { files } => {
            let (reports, code) = pl::validate_files(&files);
            for r in &reports {
                let kind = r.kind.map_or("unknown".to_string(), |k| k.to_string());
                if let Some(e) = &r.unreadable {
                    println!("ERROR {}: {e}", r.path.display());
                    continue;
                }
                if r.violations.is_empty() {
                    println!("OK {} ({kind})", r.path.display());
                } else {
                    println!("FAIL {} ({kind})", r.path.display());
                    for v in &r.violations {
                        println!("  {v}");
                    }
                }
                for n in &r.notes {
                    println!("  note: {n}");
                }
            }
            return Ok(code);
        }
        Command::Pipeline { scenario, out, only } => {
            let layout = pl::run_pipeline(&scenario.source(), &config, cli.seed, jobs, &out, only)?;
            for stage in PipelineStage::ALL.into_iter().filter(|s| only.map_or(true, |o| o == *s)) {
                println!("{:<10} {}", stage.as_str(), layout.artifact(stage).display());
            }
        }
    }
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    // Catch a bad filter before any stage runs.
    if let Command::Rungraph { filter: Some(f), .. } = &cli.command {
        if let Err(e) = f.parse::<SubgraphFilter>() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
