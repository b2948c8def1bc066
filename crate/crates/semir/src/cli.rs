//! The `semir` command line.

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use semir_core::corpus::{split_train_dev, Corpus, QuerySet};
use semir_core::fusion::{FusionWeights, RankingParams};
use semir_core::lexindex::{FieldPolicy, IndexOptions, InvertedIndex};
use semir_core::metrics::{evaluate_run, ApDenominator, EvalConfig, MatchPolicy};
use semir_core::optimizer::{
    alternating_optimize, balanced_init, CandidateRecord, DevSetEvaluator, Evaluation, WeightEvaluator,
};
use semir_core::siagen::{generate, DictionaryEntityMatcher, SiaConfig, DEFAULT_STS_THRESHOLD};

use crate::config::{build_scorers, load_profile, OptimizerConfig, ScorerOptions, ScorerSpec, WeightsProfile};
use crate::error::{Error, Result};
use crate::io;
use crate::pipeline::{predictions, Pipeline, SearchRequest};
use crate::server::{router, AppState, Loaded, Repository};

#[derive(Debug, Parser)]
#[command(name = "semir", version, about = "Multi-perspective semantic retrieval over biomedical abstracts")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate a corpus JSONL file and write it in canonical form.
    Ingest {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Build an inverted index snapshot.
    Index {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long, value_enum, default_value_t = Fields::TitleAbstract)]
        fields: Fields,
    },
    /// Rank one query and print its predictions-file entry.
    Search {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        query: String,
        #[arg(long, default_value = "search")]
        id: String,
        #[arg(long, default_value_t = 10)]
        top_docs: usize,
        #[arg(long, default_value_t = 10)]
        top_snippets: usize,
        /// Built-in profile name or profile JSON path.
        #[arg(long)]
        profile: Option<String>,
    },
    /// Rank every query of a questions file into a predictions file.
    RankRun {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        queries: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long)]
        profile: Option<String>,
        /// Per-snippet score breakdown as TSV.
        #[arg(long)]
        debug_tsv: Option<PathBuf>,
    },
    /// Learn fusion weights on a labeled query set.
    Optimize {
        #[command(flatten)]
        data: DataArgs,
        /// Gold questions file.
        #[arg(long)]
        gold: PathBuf,
        /// Optimizer configuration JSON; defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Optimize on a random dev split of this size instead of the whole file.
        #[arg(long)]
        dev_count: Option<usize>,
        #[arg(long, default_value_t = 0)]
        split_seed: u64,
        /// Overrides the guided-search seed in the configuration.
        #[arg(long)]
        seed: Option<u64>,
        /// JSON lines, one per evaluated candidate.
        #[arg(long)]
        trace: PathBuf,
        /// Add wall-clock timestamps to trace records; the trace is then no longer reproducible.
        #[arg(long)]
        timestamps: bool,
        /// Weights profile to write.
        #[arg(long)]
        output: PathBuf,
        #[arg(long, default_value = "optimized")]
        name: String,
    },
    /// Score a predictions file against a gold file.
    Evaluate {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gold: PathBuf,
        /// Also write the report as JSON.
        #[arg(long)]
        json: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Denominator::Gold)]
        denominator: Denominator,
        #[arg(long, default_value_t = 1)]
        min_overlap: usize,
        #[arg(long, default_value_t = 0.01)]
        gmap_epsilon: f64,
    },
    /// Generate SIA training pairs from QASC rows.
    Datagen {
        #[arg(long)]
        qasc: PathBuf,
        #[arg(long)]
        embeddings: PathBuf,
        /// Entity lexicon, one term per line.
        #[arg(long)]
        entities: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long)]
        jsonl: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_STS_THRESHOLD)]
        sts_threshold: f64,
        #[arg(long, default_value_t = 0.5)]
        swap_prob: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "reference")]
        relevance: ScorerSpec,
        #[arg(long, default_value = "reference")]
        sts: ScorerSpec,
    },
    /// Run the HTTP gateway.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: String,
        /// Enables `/search`.
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long, requires = "corpus")]
        index: Option<PathBuf>,
        #[arg(long)]
        ranking: Option<PathBuf>,
        /// `NAME=PATH` plain-text sentence repository; repeatable.
        #[arg(long = "repository", value_parser = parse_repository)]
        repositories: Vec<(String, PathBuf)>,
        /// Extra weights profiles; the first becomes the default.
        #[arg(long = "profile")]
        profiles: Vec<String>,
        #[command(flatten)]
        scorers: ScorerArgs,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Fields {
    TitleAbstract,
    Title,
    Abstract,
}

impl From<Fields> for FieldPolicy {
    fn from(f: Fields) -> Self {
        match f {
            Fields::TitleAbstract => FieldPolicy::TitleAbstract,
            Fields::Title => FieldPolicy::Title,
            Fields::Abstract => FieldPolicy::Abstract,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Denominator {
    Gold,
    Capped,
}

#[derive(Debug, Clone, Args)]
pub struct ScorerArgs {
    /// reference, file:PATH, tcp:HOST:PORT or cmd:COMMAND
    #[arg(long, default_value = "reference")]
    pub relevance: ScorerSpec,
    #[arg(long, default_value = "reference")]
    pub sts: ScorerSpec,
    #[arg(long, default_value = "reference")]
    pub sia: ScorerSpec,
    /// word2vec text embeddings for the reference STS and SIA scorers.
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    /// Persistent cache for external scorers.
    #[arg(long)]
    pub cache: Option<PathBuf>,
    #[arg(long, default_value_t = 30)]
    pub timeout_secs: u64,
}

impl ScorerArgs {
    fn options(&self) -> ScorerOptions {
        ScorerOptions {
            relevance: self.relevance.clone(),
            sts: self.sts.clone(),
            sia: self.sia.clone(),
            embeddings: self.embeddings.clone(),
            cache: self.cache.clone(),
            timeout: Duration::from_secs(self.timeout_secs),
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// Index snapshot; built from the corpus when omitted.
    #[arg(long)]
    pub index: Option<PathBuf>,
    /// RankingParams JSON.
    #[arg(long)]
    pub ranking: Option<PathBuf>,
    #[command(flatten)]
    pub scorers: ScorerArgs,
}

fn parse_repository(s: &str) -> std::result::Result<(String, PathBuf), String> {
    match s.split_once('=') {
        Some((name, path)) if !name.is_empty() && !path.is_empty() => Ok((name.into(), path.into())),
        _ => Err(format!("expected NAME=PATH, got {s:?}")),
    }
}

fn load_corpus_and_index(corpus: &Path, index: Option<&Path>) -> Result<(Corpus, InvertedIndex)> {
    let corpus = io::read_corpus_jsonl(corpus)?;
    let index = match index {
        Some(p) => io::read_index(p)?,
        None => InvertedIndex::build(&corpus, IndexOptions::default())?,
    };
    if index.doc_ids().len() != corpus.len() || index.doc_ids().iter().any(|d| corpus.get(d).is_none()) {
        return Err(Error::Config("index does not match the corpus".into()));
    }
    Ok((corpus, index))
}

fn load_ranking(path: Option<&Path>) -> Result<RankingParams> {
    let params = match path {
        Some(p) => io::read_json(p)?,
        None => RankingParams::default(),
    };
    params.validate()?;
    Ok(params)
}

/// Builds a pipeline; `profiles` are added in order and the first becomes the default.
fn load_pipeline(data: &DataArgs, profiles: &[String]) -> Result<(Pipeline, crate::config::BuiltScorers)> {
    let (corpus, index) = load_corpus_and_index(&data.corpus, data.index.as_deref())?;
    let params = load_ranking(data.ranking.as_deref())?;
    let built = build_scorers(&data.scorers.options(), Some(&index))?;
    let mut pipeline = Pipeline::new(corpus, index, built.set.clone(), params);
    for (i, spec) in profiles.iter().enumerate() {
        let WeightsProfile { name, weights } = load_profile(spec)?;
        pipeline.add_profile(name, weights, i == 0);
    }
    Ok((pipeline, built))
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Ingest { input, output } => {
            let corpus = io::read_corpus_jsonl(&input)?;
            io::write_corpus_jsonl(&output, &corpus)?;
            eprintln!("{} documents, {} sentences", corpus.len(), corpus.sentence_count());
        }
        Command::Index { corpus, output, fields } => {
            let corpus = io::read_corpus_jsonl(&corpus)?;
            let index = InvertedIndex::build(&corpus, IndexOptions { fields: fields.into(), ..IndexOptions::default() })?;
            io::write_index(&output, &index)?;
            eprintln!("{} documents, {} terms", index.doc_count(), index.terms().count());
        }
        Command::Search { data, query, id, top_docs, top_snippets, profile } => {
            let profiles: Vec<String> = profile.into_iter().collect();
            let (pipeline, built) = load_pipeline(&data, &profiles)?;
            let req = SearchRequest { query_id: &id, query: &query, top_docs, top_snippets, profile: None };
            println!("{}", pipeline.search_body(&req)?);
            built.save_cache()?;
        }
        Command::RankRun { data, queries, output, profile, debug_tsv } => {
            let profiles: Vec<String> = profile.into_iter().collect();
            let (pipeline, built) = load_pipeline(&data, &profiles)?;
            let queries = io::read_questions(&queries)?;
            let qs = queries.to_query_set().map_err(Error::Core)?;
            let run = pipeline.rank_run(&qs, &pipeline.weights(None)?)?;
            io::write_questions(&output, &predictions(&run))?;
            if let Some(p) = debug_tsv {
                io::write_atomic(&p, run.to_debug_tsv().as_bytes())?;
            }
            built.save_cache()?;
            eprintln!("ranked {} queries", run.entries.len());
        }
        Command::Optimize { data, gold, config, dev_count, split_seed, seed, trace, timestamps, output, name } => {
            optimize(&data, &gold, config.as_deref(), dev_count, split_seed, seed, &trace, timestamps, &output, &name)?;
        }
        Command::Evaluate { pred, gold, json, denominator, min_overlap, gmap_epsilon } => {
            let config = EvalConfig {
                policy: MatchPolicy { min_overlap },
                denominator: match denominator {
                    Denominator::Gold => ApDenominator::Gold,
                    Denominator::Capped => ApDenominator::Capped,
                },
                gmap_epsilon,
            };
            config.policy.validate()?;
            let report = evaluate_run(&io::read_predictions(&pred)?, &io::read_gold(&gold)?, &config)?;
            if let Some(p) = json {
                io::write_json(&p, &report)?;
            }
            print!("{report}");
        }
        Command::Datagen { qasc, embeddings, entities, output, jsonl, sts_threshold, swap_prob, seed, relevance, sts } => {
            let rows = io::read_qasc_jsonl(&qasc)?;
            let opts = ScorerOptions { relevance, sts, embeddings: Some(embeddings), ..ScorerOptions::default() };
            let built = build_scorers(&opts, None)?;
            let matcher = DictionaryEntityMatcher::new(io::read_term_list(&entities)?);
            let config = SiaConfig { sts_threshold, swap_prob, seed };
            let samples =
                generate(&rows, &config, &*built.set.relevance, &*built.set.sts, &built.embeddings, &matcher)?;
            io::write_sia_tsv(&output, &samples)?;
            if let Some(p) = jsonl {
                io::write_sia_jsonl(&p, &samples)?;
            }
            built.save_cache()?;
            eprintln!("{} samples from {} rows", samples.len(), rows.len());
        }
        Command::Serve { addr, corpus, index, ranking, repositories, profiles, scorers } => {
            let spec = ServeSpec { corpus, index, ranking, repositories, profiles, scorers };
            serve(&addr, spec)?;
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct TraceLine<'a> {
    #[serde(flatten)]
    record: &'a CandidateRecord,
    #[serde(skip_serializing_if = "Option::is_none")]
    timestamp_ms: Option<u128>,
}

/// Records when each evaluation finished.
struct Timed<'a, E> {
    inner: &'a E,
    finished: RefCell<Vec<u128>>,
}

impl<E: WeightEvaluator> WeightEvaluator for Timed<'_, E> {
    fn evaluate(&self, w: &FusionWeights) -> semir_core::Result<Evaluation> {
        let e = self.inner.evaluate(w)?;
        let now = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis());
        self.finished.borrow_mut().push(now);
        Ok(e)
    }
}

#[allow(clippy::too_many_arguments)]
fn optimize(
    data: &DataArgs,
    gold: &Path,
    config: Option<&Path>,
    dev_count: Option<usize>,
    split_seed: u64,
    seed: Option<u64>,
    trace_path: &Path,
    timestamps: bool,
    output: &Path,
    name: &str,
) -> Result<()> {
    let mut config: OptimizerConfig = match config {
        Some(p) => io::read_json(p)?,
        None => OptimizerConfig::default(),
    };
    if let (Some(s), semir_core::optimizer::SearchStrategy::Guided { seed, .. }) = (seed, &mut config.strategy) {
        *seed = s;
    }
    if data.ranking.is_some() {
        config.ranking = load_ranking(data.ranking.as_deref())?;
    }
    let (corpus, index) = load_corpus_and_index(&data.corpus, data.index.as_deref())?;
    let built = build_scorers(&data.scorers.options(), Some(&index))?;
    let labeled = io::read_gold(gold)?;
    let dev: QuerySet = match dev_count {
        Some(n) => split_train_dev(&labeled, split_seed, n)?.1,
        None => labeled,
    };
    let evaluator = DevSetEvaluator::prepare(&dev, &corpus, &index, &built.set, config.ranking, config.eval)?;
    built.save_cache()?;
    let timed = Timed { inner: &evaluator, finished: RefCell::new(Vec::new()) };
    let init = config.init.unwrap_or_else(balanced_init);
    let (weights, trace) =
        alternating_optimize(&init, config.e_objective, config.m_objective, &config.strategy, config.max_iters, &timed)?;

    // the first evaluation scores the initial weights; candidate k is evaluation k + 1
    let finished = timed.finished.into_inner();
    let mut out = String::new();
    for rec in &trace.candidates {
        let line = TraceLine { record: rec, timestamp_ms: timestamps.then(|| finished.get(rec.seq + 1).copied()).flatten() };
        out.push_str(&serde_json::to_string(&line).map_err(|e| Error::Config(e.to_string()))?);
        out.push('\n');
    }
    io::write_atomic(trace_path, out.as_bytes())?;
    io::write_json(output, &WeightsProfile { name: name.into(), weights })?;
    let last = trace.accepted_m_values().last().copied().unwrap_or(trace.initial_value);
    eprintln!(
        "{} candidates over {} dev queries; {:?} {} -> {}",
        trace.candidates.len(),
        evaluator.len(),
        config.m_objective,
        trace.initial_value,
        last
    );
    Ok(())
}

/// What `serve` loads, kept so SIGHUP can reload it.
#[derive(Debug, Clone)]
pub struct ServeSpec {
    pub corpus: Option<PathBuf>,
    pub index: Option<PathBuf>,
    pub ranking: Option<PathBuf>,
    pub repositories: Vec<(String, PathBuf)>,
    pub profiles: Vec<String>,
    pub scorers: ScorerArgs,
}

pub fn load_serving(spec: &ServeSpec) -> Result<Loaded> {
    let mut repositories = BTreeMap::new();
    for (name, path) in &spec.repositories {
        repositories.insert(name.clone(), Repository::load(name.clone(), path)?);
    }
    let (pipeline, medic_scorers) = match &spec.corpus {
        Some(corpus) => {
            let data = DataArgs {
                corpus: corpus.clone(),
                index: spec.index.clone(),
                ranking: spec.ranking.clone(),
                scorers: spec.scorers.clone(),
            };
            let (pipeline, built) = load_pipeline(&data, &spec.profiles)?;
            (Some(Arc::new(pipeline)), built.set)
        }
        None => (None, build_scorers(&spec.scorers.options(), None)?.set),
    };
    Ok(Loaded { medic_scorers, repositories, pipeline })
}

fn serve(addr: &str, spec: ServeSpec) -> Result<()> {
    let state = AppState::new(load_serving(&spec)?);
    let runtime = tokio::runtime::Runtime::new().map_err(|e| Error::Config(format!("cannot start runtime: {e}")))?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr).await.map_err(|e| Error::Config(format!("cannot bind {addr}: {e}")))?;
        log::info!("listening on {addr}");
        #[cfg(unix)]
        tokio::spawn(reload_on_sighup(state.clone(), spec));
        axum::serve(listener, router(state))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await
            .map_err(|e| Error::Config(format!("server error: {e}")))
    })
}

#[cfg(unix)]
async fn reload_on_sighup(state: Arc<AppState>, spec: ServeSpec) {
    use tokio::signal::unix::{signal, SignalKind};
    let Ok(mut hup) = signal(SignalKind::hangup()) else { return };
    while hup.recv().await.is_some() {
        let spec = spec.clone();
        match tokio::task::spawn_blocking(move || load_serving(&spec)).await {
            Ok(Ok(loaded)) => {
                state.swap(loaded);
                log::info!("reloaded artifacts");
            }
            Ok(Err(e)) => log::error!("reload failed, keeping the previous artifacts: {e}"),
            Err(e) => log::error!("reload task failed: {e}"),
        }
    }
}
