//! Pipeline steps that turn a raw dialogue log into the models the service
//! loads, and the loader itself.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use agentcoach_core::corpus::{
    corpus_stats, ingest_log, ingest_scripts, write_dialogues, write_scripts, CorpusStats, Dialogue,
    DialogueScript, Role,
};
use agentcoach_core::intentcluster::{
    cluster_report, dialogue_embeddings, hdbscan, select_representatives, ClusterParams,
    ClusterReportLine,
};
use agentcoach_core::respond::{
    build_ranker_pairs, context_text, train_ngram, train_ranker_from_pairs, LogisticRanker,
    NGramGenerator, NGramLM, RankerConfig, RankerFeaturizer, RankerModel, ResponseGenerator,
};
use agentcoach_core::scorecard::{
    load_rules, ComplianceRule, FeedbackThresholds, FluencyCalibration, NGramFluency, Scorer,
    CONSISTENCY_THRESHOLD,
};
use agentcoach_core::simcore::Engine;
use agentcoach_core::textenc::{
    build_vocab, read_encoder, train_sgns, write_encoder, HybridMatcher, SgnsConfig, TextEncoder,
};
use agentcoach_core::vindex::{build_index, IndexEntry, Payload, VectorIndex};

use crate::config::ServiceConfig;
use crate::generator::HttpGenerator;

pub const LM_ORDER: usize = 3;
pub const LM_DISCOUNT: f64 = 0.75;

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let r = BufReader::new(File::open(path).with_context(|| format!("opening {}", path.display()))?);
    serde_json::from_reader(r).with_context(|| format!("parsing {}", path.display()))
}

#[derive(Debug, Clone, Serialize)]
pub struct IngestSummary {
    pub accepted: usize,
    pub rejected: usize,
    pub stats: CorpusStats,
}

/// Validates a raw log into the corpus file; rejected lines go to the
/// ingest error file.
pub fn ingest(cfg: &ServiceConfig, input: &Path) -> Result<IngestSummary> {
    let report = ingest_log(input)?;
    if report.items.is_empty() {
        bail!("no valid dialogues in {}", input.display());
    }
    write_dialogues(create(&cfg.resolve(&cfg.paths.corpus))?, &report.items)?;
    let mut w = create(&cfg.resolve(&cfg.paths.ingest_errors))?;
    for e in &report.errors {
        serde_json::to_writer(&mut w, e)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(IngestSummary {
        accepted: report.items.len(),
        rejected: report.errors.len(),
        stats: corpus_stats(&report.items),
    })
}

pub fn load_corpus(cfg: &ServiceConfig) -> Result<Vec<Dialogue>> {
    let report = ingest_log(&cfg.resolve(&cfg.paths.corpus))?;
    if let Some(e) = report.errors.first() {
        bail!("corpus file is not clean: {e}");
    }
    Ok(report.items)
}

pub fn load_encoder(cfg: &ServiceConfig) -> Result<TextEncoder> {
    let path = cfg.resolve(&cfg.paths.encoder);
    let f = File::open(&path).with_context(|| format!("opening {}", path.display()))?;
    Ok(read_encoder(BufReader::new(f))?)
}

pub fn train_embed(cfg: &ServiceConfig, sgns: &SgnsConfig, min_count: u64) -> Result<usize> {
    let corpus = load_corpus(cfg)?;
    let vocab = build_vocab(&corpus, min_count);
    let embeddings = train_sgns(&corpus, &vocab, sgns)?;
    let encoder = TextEncoder::new(vocab, embeddings);
    write_encoder(create(&cfg.resolve(&cfg.paths.encoder))?, &encoder)?;
    Ok(encoder.vocab.len())
}

pub fn cluster(cfg: &ServiceConfig, params: &ClusterParams, per_cluster: usize) -> Result<Vec<ClusterReportLine>> {
    let corpus = load_corpus(cfg)?;
    let encoder = load_encoder(cfg)?;
    let embeddings = dialogue_embeddings(&corpus, &encoder);
    let result = hdbscan(&embeddings, params)?;
    let scenes = select_representatives(&result, &corpus, &embeddings, per_cluster)?;
    if scenes.is_empty() {
        bail!("clustering found no scenes; try a smaller min_cluster_size");
    }
    let scripts: Vec<DialogueScript> = scenes
        .iter()
        .flat_map(|s| s.representative_scripts.iter().cloned())
        .collect();
    write_scripts(create(&cfg.resolve(&cfg.paths.scripts))?, &scripts)?;
    let report = cluster_report(&result, &scenes);
    write_json(&cfg.resolve(&cfg.paths.cluster_report), &report)?;
    Ok(report)
}

pub fn load_scripts(cfg: &ServiceConfig) -> Result<Vec<DialogueScript>> {
    let report = ingest_scripts(&cfg.resolve(&cfg.paths.scripts))?;
    if let Some(e) = report.errors.first() {
        bail!("script file is not clean: {e}");
    }
    Ok(report.items)
}

/// One entry per customer turn after the opening: the preceding
/// `context_window` turns map to that turn.
pub fn index_entries(corpus: &[Dialogue], encoder: &TextEncoder, context_window: usize) -> Vec<IndexEntry<f64>> {
    let mut out = Vec::new();
    for d in corpus {
        let texts: Vec<&str> = d.turns().iter().map(|t| t.text.as_str()).collect();
        for (i, t) in d.turns().iter().enumerate().skip(1) {
            if t.role != Role::Customer {
                continue;
            }
            let e = encoder.embed(&context_text(&texts[..i], context_window));
            if e.oov {
                continue;
            }
            out.push(IndexEntry::new(
                e.vector,
                Payload {
                    dialogue_id: d.id().to_string(),
                    turn_index: i,
                    next_customer_utterance: t.text.clone(),
                },
            ));
        }
    }
    out
}

pub fn build_context_index(cfg: &ServiceConfig, approx: bool) -> Result<usize> {
    let corpus = load_corpus(cfg)?;
    let encoder = load_encoder(cfg)?;
    let entries = index_entries(&corpus, &encoder, cfg.policy.context_window);
    let n = entries.len();
    let index = build_index(encoder.dim(), entries, approx, cfg.seed)?;
    index.write_to(create(&cfg.resolve(&cfg.paths.index))?)?;
    Ok(n)
}

pub fn load_index(cfg: &ServiceConfig) -> Result<VectorIndex<f64>> {
    let path = cfg.resolve(&cfg.paths.index);
    let f = File::open(&path).with_context(|| format!("opening {}", path.display()))?;
    Ok(VectorIndex::read_from(BufReader::new(f))?)
}

/// Customer and agent language models plus the fluency calibration.
pub fn train_lms(cfg: &ServiceConfig, order: usize) -> Result<FluencyCalibration> {
    let corpus = load_corpus(cfg)?;
    let texts = |role| -> Vec<String> {
        corpus
            .iter()
            .flat_map(|d| d.texts_by(role).map(str::to_string).collect::<Vec<_>>())
            .collect()
    };
    let customer = train_ngram(&texts(Role::Customer), order, LM_DISCOUNT)?;
    let agent_texts = texts(Role::Agent);
    let agent = train_ngram(&agent_texts, order, LM_DISCOUNT)?;
    let calibration = FluencyCalibration::fit(&agent, &agent_texts)?;
    write_json(&cfg.resolve(&cfg.paths.customer_lm), &customer)?;
    write_json(&cfg.resolve(&cfg.paths.agent_lm), &agent)?;
    write_json(&cfg.resolve(&cfg.paths.fluency), &calibration)?;
    Ok(calibration)
}

pub fn train_ranker(cfg: &ServiceConfig, config: RankerConfig) -> Result<RankerModel> {
    let scripts = load_scripts(cfg)?;
    let encoder = Arc::new(load_encoder(cfg)?);
    let lm: Arc<NGramLM> = Arc::new(read_json(&cfg.resolve(&cfg.paths.customer_lm))?);
    let (pos, neg) = build_ranker_pairs(&scripts, cfg.policy.context_window, config.seed);
    let featurizer = RankerFeaturizer::new(encoder, lm);
    let model = train_ranker_from_pairs(&featurizer, &pos, &neg, config)?;
    write_json(&cfg.resolve(&cfg.paths.ranker), &model)?;
    Ok(model)
}

pub fn load_rules_file(path: &Path) -> Result<Vec<ComplianceRule>> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    load_rules(BufReader::new(f)).with_context(|| format!("loading rules from {}", path.display()))
}

/// Everything the service reads at startup.
#[derive(Clone)]
pub struct Artifacts {
    pub encoder: Arc<TextEncoder>,
    pub scripts: Vec<DialogueScript>,
    pub index: Arc<VectorIndex<f64>>,
    pub customer_lm: Arc<NGramLM>,
    pub agent_lm: Arc<NGramLM>,
    pub calibration: FluencyCalibration,
    pub ranker: RankerModel,
    pub rules: Vec<ComplianceRule>,
}

impl Artifacts {
    pub fn load(cfg: &ServiceConfig) -> Result<Self> {
        let encoder = Arc::new(load_encoder(cfg)?);
        let index = load_index(cfg)?;
        if index.dim() != encoder.dim() {
            bail!("index dimension {} differs from encoder {}", index.dim(), encoder.dim());
        }
        let scripts = load_scripts(cfg)?;
        if scripts.is_empty() {
            bail!("no scripts in {}", cfg.resolve(&cfg.paths.scripts).display());
        }
        Ok(Artifacts {
            encoder,
            scripts,
            index: Arc::new(index),
            customer_lm: Arc::new(read_json(&cfg.resolve(&cfg.paths.customer_lm))?),
            agent_lm: Arc::new(read_json(&cfg.resolve(&cfg.paths.agent_lm))?),
            calibration: read_json(&cfg.resolve(&cfg.paths.fluency))?,
            ranker: read_json(&cfg.resolve(&cfg.paths.ranker))?,
            rules: load_rules_file(&cfg.resolve(&cfg.paths.rules))?,
        })
    }

    pub fn engine(&self, cfg: &ServiceConfig) -> Engine {
        let ngram: Arc<dyn ResponseGenerator> = Arc::new(NGramGenerator::new(self.customer_lm.clone()));
        let generator: Arc<dyn ResponseGenerator> = if cfg.generator.endpoint.is_empty() {
            ngram.clone()
        } else {
            Arc::new(HttpGenerator::new(
                cfg.generator.endpoint.clone(),
                Duration::from_millis(cfg.generator.timeout_ms),
            ))
        };
        Engine {
            scenes: Engine::group_scripts(self.scripts.clone()),
            matcher: Arc::new(HybridMatcher::new(self.encoder.clone())),
            encoder: self.encoder.clone(),
            index: Some(self.index.clone()),
            search_mode: if self.index.has_approx() {
                cfg.search_mode
            } else {
                agentcoach_core::vindex::SearchMode::Exact
            },
            generator,
            fallback_generator: ngram,
            ranker: Arc::new(LogisticRanker {
                model: self.ranker.clone(),
                featurizer: RankerFeaturizer::new(self.encoder.clone(), self.customer_lm.clone()),
            }),
        }
    }

    pub fn scorer(&self) -> Scorer {
        build_scorer(
            self.encoder.clone(),
            self.agent_lm.clone(),
            self.calibration,
            self.rules.clone(),
        )
    }
}

fn build_scorer(
    encoder: Arc<TextEncoder>,
    agent_lm: Arc<NGramLM>,
    calibration: FluencyCalibration,
    rules: Vec<ComplianceRule>,
) -> Scorer {
    Scorer {
        fluency: Arc::new(NGramFluency {
            lm: agent_lm,
            calibration,
        }),
        matcher: Arc::new(HybridMatcher::new(encoder)),
        rules,
        threshold: CONSISTENCY_THRESHOLD,
        feedback: FeedbackThresholds::default(),
    }
}

/// Scorer from the encoder, agent LM, calibration and rules alone.
pub fn load_scorer(cfg: &ServiceConfig) -> Result<Scorer> {
    Ok(build_scorer(
        Arc::new(load_encoder(cfg)?),
        Arc::new(read_json(&cfg.resolve(&cfg.paths.agent_lm))?),
        read_json(&cfg.resolve(&cfg.paths.fluency))?,
        load_rules_file(&cfg.resolve(&cfg.paths.rules))?,
    ))
}

/// Summary line for `GET /scenes`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSummary {
    pub scene_id: String,
    pub scripts: usize,
    /// Opening customer turn of the scene's first script.
    pub preview: String,
}

pub fn scene_summaries(engine: &Engine) -> Vec<SceneSummary> {
    engine
        .scenes
        .iter()
        .map(|(id, scripts)| SceneSummary {
            scene_id: id.clone(),
            scripts: scripts.len(),
            preview: scripts
                .first()
                .map(|s| s.turns[0].text.clone())
                .unwrap_or_default(),
        })
        .collect()
}
