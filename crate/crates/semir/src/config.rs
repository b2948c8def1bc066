//! Weights profiles, optimizer configuration and scorer wiring.

use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use semir_core::fusion::{FusionWeights, RankingParams};
use semir_core::lexindex::InvertedIndex;
use semir_core::metrics::EvalConfig;
use semir_core::optimizer::{balanced_init, Objective, SearchStrategy, DEFAULT_MAX_ITERS};
use semir_core::scorers::{
    EmbeddingTable, IdfWeights, PerspectiveScorer, ReferenceRelevance, ReferenceSia, ReferenceSts, ScorerKind, ScorerSet,
};

use crate::cache::{CachedScorer, ScoreCache};
use crate::error::{Error, Result};
use crate::external::{ExternalScorer, DEFAULT_TIMEOUT};
use crate::io;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightsProfile {
    pub name: String,
    pub weights: FusionWeights,
}

pub const BALANCED: &str = "balanced";
pub const BIOASQ_REFERENCE: &str = "bioasq-reference";

pub fn builtin_profile(name: &str) -> Option<WeightsProfile> {
    let weights = match name {
        BALANCED => balanced_init(),
        BIOASQ_REFERENCE => FusionWeights::bioasq_reference(),
        _ => return None,
    };
    Some(WeightsProfile { name: name.into(), weights })
}

/// A built-in profile name or the path of a profile JSON file.
pub fn load_profile(spec: &str) -> Result<WeightsProfile> {
    if let Some(p) = builtin_profile(spec) {
        return Ok(p);
    }
    let path = Path::new(spec);
    let profile: WeightsProfile = io::read_json(path)?;
    profile.weights.validate().map_err(|source| Error::Data { path: path.to_path_buf(), source })?;
    Ok(profile)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    /// Balanced weights when absent.
    pub init: Option<FusionWeights>,
    pub strategy: SearchStrategy,
    pub e_objective: Objective,
    pub m_objective: Objective,
    pub max_iters: usize,
    pub ranking: RankingParams,
    pub eval: EvalConfig,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            init: None,
            strategy: SearchStrategy::default(),
            e_objective: Objective::DocMap,
            m_objective: Objective::SentMap,
            max_iters: DEFAULT_MAX_ITERS,
            ranking: RankingParams::default(),
            eval: EvalConfig::default(),
        }
    }
}

/// Where one perspective's scores come from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ScorerSpec {
    /// The built-in lexical/embedding scorer.
    Reference,
    /// Precomputed `query_id \t sentence_key \t score` table.
    File(PathBuf),
    Tcp(String),
    /// A shell command speaking the line protocol on stdin/stdout.
    Cmd(String),
}

impl FromStr for ScorerSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "reference" {
            return Ok(ScorerSpec::Reference);
        }
        match s.split_once(':') {
            Some(("file", p)) if !p.is_empty() => Ok(ScorerSpec::File(p.into())),
            Some(("tcp", a)) if !a.is_empty() => Ok(ScorerSpec::Tcp(a.into())),
            Some(("cmd", c)) if !c.is_empty() => Ok(ScorerSpec::Cmd(c.into())),
            _ => Err(Error::Config(format!(
                "scorer spec {s:?} is not one of reference, file:PATH, tcp:HOST:PORT, cmd:COMMAND"
            ))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ScorerOptions {
    pub relevance: ScorerSpec,
    pub sts: ScorerSpec,
    pub sia: ScorerSpec,
    pub embeddings: Option<PathBuf>,
    /// Persistent cache for external scorers.
    pub cache: Option<PathBuf>,
    pub timeout: Duration,
}

impl Default for ScorerOptions {
    fn default() -> Self {
        Self {
            relevance: ScorerSpec::Reference,
            sts: ScorerSpec::Reference,
            sia: ScorerSpec::Reference,
            embeddings: None,
            cache: None,
            timeout: DEFAULT_TIMEOUT,
        }
    }
}

pub struct BuiltScorers {
    pub set: ScorerSet,
    pub cache: Option<Arc<Mutex<ScoreCache>>>,
    pub embeddings: Arc<EmbeddingTable>,
}

impl BuiltScorers {
    pub fn save_cache(&self) -> Result<()> {
        match &self.cache {
            Some(c) => c.lock().unwrap_or_else(|e| e.into_inner()).save(),
            None => Ok(()),
        }
    }
}

/// Builds the three scorers. Reference relevance uses the index's idf when
/// an index is given. External scorers share one score cache.
pub fn build_scorers(opts: &ScorerOptions, index: Option<&InvertedIndex>) -> Result<BuiltScorers> {
    let embeddings = Arc::new(match &opts.embeddings {
        Some(p) => io::read_embeddings(p)?,
        None => EmbeddingTable::default(),
    });
    let cache = opts.cache.as_ref().map(|p| Arc::new(Mutex::new(ScoreCache::open(p))));
    let idf = index.map(|i| Arc::new(IdfWeights::from_index(i)));

    let build = |kind: ScorerKind, spec: &ScorerSpec| -> Result<Arc<dyn PerspectiveScorer>> {
        let external: Arc<dyn PerspectiveScorer> = match spec {
            ScorerSpec::Reference => {
                return Ok(match kind {
                    ScorerKind::Relevance => Arc::new(ReferenceRelevance::new(idf.clone())),
                    ScorerKind::Sts => Arc::new(ReferenceSts::new(embeddings.clone())),
                    ScorerKind::Sia => Arc::new(ReferenceSia::new(embeddings.clone())),
                })
            }
            ScorerSpec::File(p) => {
                let id = format!("file:{}", p.display());
                return Ok(Arc::new(io::read_score_table(p, kind, &id)?));
            }
            ScorerSpec::Tcp(addr) => Arc::new(ExternalScorer::connect(addr, kind, format!("tcp:{addr}/{kind}"), opts.timeout)?),
            ScorerSpec::Cmd(cmd) => Arc::new(ExternalScorer::spawn(cmd, kind, format!("cmd:{cmd}/{kind}"), opts.timeout)?),
        };
        Ok(match &cache {
            Some(c) => Arc::new(CachedScorer::new(external, c.clone())),
            None => external,
        })
    };
    let set = ScorerSet::new(
        build(ScorerKind::Relevance, &opts.relevance)?,
        build(ScorerKind::Sts, &opts.sts)?,
        build(ScorerKind::Sia, &opts.sia)?,
    )?;
    Ok(BuiltScorers { set, cache, embeddings })
}
