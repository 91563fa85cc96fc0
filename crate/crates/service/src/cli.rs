use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use agentcoach_core::intentcluster::ClusterParams;
use agentcoach_core::respond::RankerConfig;
use agentcoach_core::scorecard::{aggregate_metrics, render_metrics_table, ScoreError, SessionScore, TrainingMetrics};
use agentcoach_core::simcore::{agent_reply, close_session, start_session, CloseReason, Phase, SessionRecord};
use agentcoach_core::textenc::SgnsConfig;

use crate::artifacts::{self, Artifacts, LM_ORDER};
use crate::config::ServiceConfig;
use crate::demo;
use crate::store::{log_files, replay_log, SessionStore};

#[derive(Debug, Parser)]
#[command(name = "agentcoach", version, about = "Customer-service agent trainer")]
pub struct Cli {
    /// TOML config file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Overrides `data_dir` from the config.
    #[arg(long, global = true)]
    pub data_dir: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Strategy {
    /// Replies with the script's expected utterance every turn.
    Echo,
    /// Replies with the lines of `--input`, one per turn.
    File,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate a raw dialogue log into the corpus.
    Ingest { input: PathBuf },
    /// Train word embeddings on the corpus.
    TrainEmbed {
        #[arg(long, default_value_t = 200)]
        dim: usize,
        #[arg(long, default_value_t = 5)]
        window: usize,
        #[arg(long, default_value_t = 5)]
        negatives: usize,
        #[arg(long, default_value_t = 5)]
        epochs: usize,
        #[arg(long, default_value_t = 0.025)]
        learning_rate: f64,
        #[arg(long, default_value_t = 1)]
        min_count: u64,
    },
    /// Cluster dialogues into scenes and pick representative scripts.
    Cluster {
        #[arg(long, default_value_t = 5)]
        min_cluster_size: usize,
        #[arg(long)]
        min_samples: Option<usize>,
        #[arg(long, default_value_t = 3)]
        per_cluster: usize,
    },
    /// Build the context vector index.
    BuildIndex {
        /// Skip the hashing structure; only exact search is possible.
        #[arg(long)]
        exact: bool,
    },
    /// Train the customer and agent language models.
    TrainLm {
        #[arg(long, default_value_t = LM_ORDER)]
        order: usize,
    },
    /// Train the response ranker.
    TrainRanker {
        #[arg(long, default_value_t = 500)]
        epochs: usize,
        #[arg(long, default_value_t = 0.5)]
        learning_rate: f64,
        #[arg(long, default_value_t = 1e-3)]
        l2: f64,
    },
    /// Run one session offline with a scripted trainee.
    Simulate {
        #[arg(long)]
        scene: String,
        #[arg(long, value_enum, default_value_t = Strategy::Echo)]
        strategy: Strategy,
        #[arg(long, required_if_eq("strategy", "file"))]
        input: Option<PathBuf>,
        #[arg(long, default_value = "sim-0001")]
        session_id: String,
        /// Also persist the event log here.
        #[arg(long)]
        log_dir: Option<PathBuf>,
        /// Milliseconds between simulated events.
        #[arg(long, default_value_t = 1000)]
        step_ms: u64,
    },
    /// Score session logs and print aggregate metrics.
    Evaluate {
        /// Directory of session logs; defaults to the configured log dir.
        logs: Option<PathBuf>,
        /// Score reports, one JSON object per line.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        metrics_json: Option<PathBuf>,
        /// Row label in the metrics table.
        #[arg(long, default_value = "Simulator")]
        mode: String,
    },
    /// Run the HTTP service.
    Serve {
        #[arg(long)]
        bind: Option<String>,
    },
    /// Write the templated demo log and rules. The seed defaults to the
    /// one used for the checked-in copy.
    DemoCorpus {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        rules: Option<PathBuf>,
        #[arg(long, default_value_t = demo::DIALOGUES_PER_SCENE)]
        per_scene: usize,
    },
}

#[derive(Debug, Serialize)]
pub struct SimulationReport {
    pub record: SessionRecord,
    pub score: SessionScore,
}

impl Cli {
    pub fn service_config(&self) -> Result<ServiceConfig> {
        let mut cfg = ServiceConfig::load(self.config.as_deref())?;
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(d) = &self.data_dir {
            cfg.data_dir = d.clone();
        }
        Ok(cfg)
    }
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    let mut out = std::io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

pub fn run(cli: Cli) -> Result<()> {
    let mut cfg = cli.service_config()?;
    let seed_flag = cli.seed;
    match cli.command {
        Command::Ingest { input } => {
            let summary = artifacts::ingest(&cfg, &input)?;
            println!("accepted {} dialogues, rejected {} lines", summary.accepted, summary.rejected);
            println!("{}", summary.stats);
        }
        Command::TrainEmbed {
            dim,
            window,
            negatives,
            epochs,
            learning_rate,
            min_count,
        } => {
            let sgns = SgnsConfig {
                dim,
                window,
                negatives,
                epochs,
                learning_rate,
                seed: cfg.seed,
            };
            let n = artifacts::train_embed(&cfg, &sgns, min_count)?;
            println!("trained {dim}-dim embeddings for {n} tokens");
        }
        Command::Cluster {
            min_cluster_size,
            min_samples,
            per_cluster,
        } => {
            let params = ClusterParams {
                min_cluster_size,
                min_samples,
            };
            for line in artifacts::cluster(&cfg, &params, per_cluster)? {
                println!(
                    "{}: {} dialogues, stability {:.4}, scripts {}",
                    line.scene_id,
                    line.size,
                    line.stability,
                    line.representatives.join(",")
                );
            }
        }
        Command::BuildIndex { exact } => {
            let n = artifacts::build_context_index(&cfg, !exact)?;
            println!("indexed {n} contexts");
        }
        Command::TrainLm { order } => {
            let cal = artifacts::train_lms(&cfg, order)?;
            println!("trained order-{order} models; fluency calibration mu {:.4} sigma {:.4}", cal.mu, cal.sigma);
        }
        Command::TrainRanker {
            epochs,
            learning_rate,
            l2,
        } => {
            let config = RankerConfig {
                epochs,
                learning_rate,
                l2,
                seed: cfg.seed,
            };
            let model = artifacts::train_ranker(&cfg, config)?;
            println!("ranker weights {:?} bias {:.4}", model.weights, model.bias);
        }
        Command::Simulate {
            scene,
            strategy,
            input,
            session_id,
            log_dir,
            step_ms,
        } => {
            let lines = match (strategy, input) {
                (Strategy::File, Some(p)) => Some(read_lines(&p)?),
                (Strategy::File, None) => bail!("--input is required with --strategy file"),
                (Strategy::Echo, _) => None,
            };
            let report = simulate(&cfg, &scene, &session_id, lines, log_dir.as_deref(), step_ms)?;
            print_json(&report)?;
        }
        Command::Evaluate {
            logs,
            out,
            metrics_json,
            mode,
        } => {
            let dir = logs.unwrap_or_else(|| cfg.resolve(&cfg.paths.log_dir));
            evaluate(&cfg, &dir, out.as_deref(), metrics_json.as_deref(), &mode)?;
        }
        Command::Serve { bind } => {
            if let Some(b) = bind {
                cfg.bind = b;
            }
            let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
            rt.block_on(crate::api::serve(&cfg))?;
        }
        Command::DemoCorpus { out, rules, per_scene } => {
            if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)?;
            }
            let f = File::create(&out).with_context(|| format!("creating {}", out.display()))?;
            demo::write_demo_log(BufWriter::new(f), per_scene, seed_flag.unwrap_or(demo::DEMO_SEED))?;
            if let Some(r) = rules {
                std::fs::write(&r, demo::DEMO_RULES).with_context(|| format!("writing {}", r.display()))?;
            }
            println!("wrote {} dialogues to {}", per_scene * demo::scene_names().len(), out.display());
        }
    }
    Ok(())
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut out = Vec::new();
    for line in BufReader::new(f).lines() {
        let line = line?;
        if !line.trim().is_empty() {
            out.push(line);
        }
    }
    Ok(out)
}

/// Runs one session against the loaded engine. `lines` of `None` means echo.
pub fn simulate(
    cfg: &ServiceConfig,
    scene: &str,
    session_id: &str,
    lines: Option<Vec<String>>,
    log_dir: Option<&Path>,
    step_ms: u64,
) -> Result<SimulationReport> {
    let arts = Artifacts::load(cfg)?;
    let engine = arts.engine(cfg);
    let store = log_dir.map(SessionStore::open).transpose()?;
    let mut now = 0;
    let mut tick = || {
        now += step_ms;
        now
    };
    let (mut state, _) = start_session(&engine, session_id, scene, &cfg.session_policy(), 0, tick())?;
    if let Some(s) = &store {
        state = {
            let handle = s.insert(state)?;
            let guard = handle.try_lock().expect("fresh handle");
            guard.clone()
        };
    }
    let mut scripted = lines.map(|l| l.into_iter());
    while state.phase() == Phase::AwaitAgent {
        let text = match &mut scripted {
            None => state.expected_utterance().expect("open session").to_string(),
            Some(it) => match it.next() {
                Some(t) => t,
                None => break,
            },
        };
        agent_reply(&engine, &mut state, &text, None, tick())?;
    }
    let reason = if state.phase() == Phase::Completed {
        CloseReason::Completed
    } else if state.phase() == Phase::Abandoned {
        CloseReason::Abandoned
    } else {
        CloseReason::TraineeQuit
    };
    let record = close_session(&mut state, reason, tick())?;
    if let Some(s) = &store {
        s.commit(&mut state)?;
    }
    let score = arts.scorer().score(&record)?;
    Ok(SimulationReport { record, score })
}

/// Scores every log in `dir`; sessions without trainee turns are counted in
/// the metrics but get no score report.
pub fn evaluate(
    cfg: &ServiceConfig,
    dir: &Path,
    out: Option<&Path>,
    metrics_json: Option<&Path>,
    mode: &str,
) -> Result<TrainingMetrics> {
    let files = if dir.is_dir() { log_files(dir)? } else { Vec::new() };
    if files.is_empty() {
        bail!("no sessions found in {}", dir.display());
    }
    let records: Vec<SessionRecord> = files
        .iter()
        .map(|p| replay_log(p).map(|s| s.snapshot()))
        .collect::<Result<_, _>>()?;
    let scorer = artifacts::load_scorer(cfg)?;
    let mut reports = Vec::new();
    for r in &records {
        match scorer.score(r) {
            Ok(s) => {
                println!(
                    "{}  final {:.4}  fluency {:.4}  consistency {:.4}  compliance {}",
                    s.session_id, s.final_score, s.fluency, s.consistency, s.compliance
                );
                reports.push(s);
            }
            Err(ScoreError::Undefined(why)) => println!("{}  not scored: {why}", r.session_id),
            Err(e) => return Err(e.into()),
        }
    }
    if let Some(p) = out {
        let mut w = BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?);
        for s in &reports {
            serde_json::to_writer(&mut w, s)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
    }
    let metrics = aggregate_metrics(&records)?;
    println!();
    println!("{}", render_metrics_table(&[(mode, metrics)]));
    if let Some(p) = metrics_json {
        artifacts::write_json(p, &metrics)?;
    }
    Ok(metrics)
}
