//! Perspective scorers: the contract, deterministic reference scorers and a
//! table-backed scorer for precomputed scores.
//!
//! Every scorer returns raw scores in its kind's native range (relevance
//! `[0,1]`, STS `[0,5]`, SIA `[0,4]`). [`PerspectiveScore`] carries both the
//! raw value and the value divided by the range maximum, which is what fusion
//! consumes by default.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, ScoreError};
use crate::lexindex::{content_tokens, InvertedIndex};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScorerKind {
    Relevance,
    Sts,
    Sia,
}

impl ScorerKind {
    pub const ALL: [ScorerKind; 3] = [ScorerKind::Relevance, ScorerKind::Sts, ScorerKind::Sia];

    pub fn native_max(self) -> f64 {
        match self {
            ScorerKind::Relevance => 1.0,
            ScorerKind::Sts => 5.0,
            ScorerKind::Sia => 4.0,
        }
    }

    pub fn contains(self, raw: f64) -> bool {
        (0.0..=self.native_max()).contains(&raw)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ScorerKind::Relevance => "relevance",
            ScorerKind::Sts => "sts",
            ScorerKind::Sia => "sia",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "relevance" => Some(ScorerKind::Relevance),
            "sts" => Some(ScorerKind::Sts),
            "sia" => Some(ScorerKind::Sia),
            _ => None,
        }
    }
}

impl fmt::Display for ScorerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerspectiveScore {
    pub kind: ScorerKind,
    pub raw: f64,
    pub normalized: f64,
}

impl PerspectiveScore {
    pub fn new(kind: ScorerKind, raw: f64) -> core::result::Result<Self, ScoreError> {
        if !kind.contains(raw) {
            return Err(ScoreError::OutOfRange { kind, index: 0, value: raw });
        }
        Ok(Self { kind, raw, normalized: raw / kind.native_max() })
    }
}

/// One (query, sentence) pair. The ids let table-backed scorers look up
/// precomputed values; text-based scorers only read the texts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScorePair<'a> {
    pub query_id: &'a str,
    pub query: &'a str,
    pub sentence_key: &'a str,
    pub sentence: &'a str,
}

pub trait PerspectiveScorer: Send + Sync {
    /// Name and version; two scorers with the same id must agree on every pair.
    fn scorer_id(&self) -> &str;

    fn kind(&self) -> ScorerKind;

    fn raw_score(&self, pair: &ScorePair<'_>) -> core::result::Result<f64, ScoreError>;

    fn score_batch(&self, pairs: &[ScorePair<'_>]) -> core::result::Result<Vec<f64>, ScoreError> {
        pairs.iter().map(|p| self.raw_score(p)).collect()
    }
}

impl<T: PerspectiveScorer + ?Sized> PerspectiveScorer for Arc<T> {
    fn scorer_id(&self) -> &str {
        (**self).scorer_id()
    }
    fn kind(&self) -> ScorerKind {
        (**self).kind()
    }
    fn raw_score(&self, pair: &ScorePair<'_>) -> core::result::Result<f64, ScoreError> {
        (**self).raw_score(pair)
    }
    fn score_batch(&self, pairs: &[ScorePair<'_>]) -> core::result::Result<Vec<f64>, ScoreError> {
        (**self).score_batch(pairs)
    }
}

/// Scores one pair, validating inputs and the returned range.
pub fn score(scorer: &dyn PerspectiveScorer, pair: &ScorePair<'_>) -> core::result::Result<PerspectiveScore, ScoreError> {
    Ok(score_all(scorer, core::slice::from_ref(pair))?.remove(0))
}

/// Batch form of [`score`]; range errors name the offending pair index.
pub fn score_all(
    scorer: &dyn PerspectiveScorer,
    pairs: &[ScorePair<'_>],
) -> core::result::Result<Vec<PerspectiveScore>, ScoreError> {
    if let Some(index) = pairs.iter().position(|p| p.query.trim().is_empty() || p.sentence.trim().is_empty()) {
        return Err(ScoreError::EmptyInput { index });
    }
    if pairs.is_empty() {
        return Ok(Vec::new());
    }
    let kind = scorer.kind();
    let raw = scorer.score_batch(pairs)?;
    if raw.len() != pairs.len() {
        return Err(ScoreError::Protocol {
            index: raw.len().min(pairs.len()),
            message: alloc::format!("expected {} scores, got {}", pairs.len(), raw.len()),
        });
    }
    raw.into_iter()
        .enumerate()
        .map(|(index, value)| {
            PerspectiveScore::new(kind, value).map_err(|_| ScoreError::OutOfRange { kind, index, value })
        })
        .collect()
}

/// Dense word vectors of a fixed dimension.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EmbeddingTable {
    dim: usize,
    vectors: BTreeMap<String, Vec<f64>>,
}

impl EmbeddingTable {
    pub fn new(dim: usize) -> Self {
        Self { dim, vectors: BTreeMap::new() }
    }

    pub fn insert(&mut self, token: impl Into<String>, vector: Vec<f64>) -> Result<()> {
        let token = token.into();
        if vector.len() != self.dim {
            return Err(Error::DimensionMismatch { token, got: vector.len(), expected: self.dim });
        }
        if vector.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteEmbedding(token));
        }
        self.vectors.insert(token, vector);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn get(&self, token: &str) -> Option<&[f64]> {
        self.vectors.get(token).map(Vec::as_slice)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f64])> {
        self.vectors.iter().map(|(t, v)| (t.as_str(), v.as_slice()))
    }

    /// Mean vector of the covered tokens, `None` when no token is covered.
    pub fn mean_vector<S: AsRef<str>>(&self, tokens: &[S]) -> Option<Vec<f64>> {
        let mut sum = alloc::vec![0.0; self.dim];
        let mut n = 0usize;
        for v in tokens.iter().filter_map(|t| self.get(t.as_ref())) {
            for (s, x) in sum.iter_mut().zip(v) {
                *s += x;
            }
            n += 1;
        }
        if n == 0 {
            return None;
        }
        for s in sum.iter_mut() {
            *s /= n as f64;
        }
        Some(sum)
    }
}

/// Cosine similarity; zero when either vector has zero norm.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let (mut dot, mut aa, mut bb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        dot += x * y;
        aa += x * x;
        bb += y * y;
    }
    if aa == 0.0 || bb == 0.0 {
        return 0.0;
    }
    (dot / libm::sqrt(aa * bb)).clamp(-1.0, 1.0)
}

/// Inverse document frequencies for the reference relevance scorer.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct IdfWeights {
    weights: BTreeMap<String, f64>,
    unseen: f64,
}

impl IdfWeights {
    pub fn from_index(index: &InvertedIndex) -> Self {
        let n = index.doc_count();
        let weights = index.terms().map(|(t, p)| (t.to_string(), crate::lexindex::bm25_idf(n, p.len()))).collect();
        Self { weights, unseen: crate::lexindex::bm25_idf(n, 0) }
    }

    pub fn get(&self, term: &str) -> f64 {
        self.weights.get(term).copied().unwrap_or(self.unseen)
    }
}

const RELEVANCE_STEEPNESS: f64 = 10.0;
const RELEVANCE_MIDPOINT: f64 = 0.5;

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + libm::exp(-x))
}

/// Idf-weighted share of query content tokens present in the sentence,
/// squashed by `1 / (1 + exp(-10 (ratio - 0.5)))`; exactly 0 with no overlap.
pub fn reference_relevance(query: &str, sentence: &str, idf: Option<&IdfWeights>) -> f64 {
    let mut q = content_tokens(query);
    q.sort();
    q.dedup();
    let s = content_tokens(sentence);
    let weight = |t: &str| idf.map_or(1.0, |w| w.get(t));
    let total: f64 = q.iter().map(|t| weight(t)).sum();
    let shared: f64 = q.iter().filter(|t| s.contains(t)).map(|t| weight(t)).sum();
    if shared <= 0.0 || total <= 0.0 {
        return 0.0;
    }
    logistic(RELEVANCE_STEEPNESS * (shared / total - RELEVANCE_MIDPOINT))
}

/// `5 * max(0, cosine(mean(query), mean(sentence)))`, 0 when a side has no
/// embedded token.
pub fn reference_sts(query: &str, sentence: &str, embeddings: &EmbeddingTable) -> f64 {
    let (Some(a), Some(b)) =
        (embeddings.mean_vector(&content_tokens(query)), embeddings.mean_vector(&content_tokens(sentence)))
    else {
        return 0.0;
    };
    5.0 * cosine(&a, &b).max(0.0)
}

/// `4 * mean over query content tokens of the best cosine to any sentence
/// token`. An identical token always counts as 1, an unembedded one as 0.
pub fn reference_sia(query: &str, sentence: &str, embeddings: &EmbeddingTable) -> f64 {
    let q = content_tokens(query);
    let s = content_tokens(sentence);
    if q.is_empty() || s.is_empty() {
        return 0.0;
    }
    let coverage: f64 = q
        .iter()
        .map(|qt| {
            s.iter()
                .map(|st| {
                    if st == qt {
                        return 1.0;
                    }
                    match (embeddings.get(qt), embeddings.get(st)) {
                        (Some(a), Some(b)) => cosine(a, b),
                        _ => 0.0,
                    }
                })
                .fold(0.0, f64::max)
        })
        .sum::<f64>()
        / q.len() as f64;
    4.0 * coverage.clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Default)]
pub struct ReferenceRelevance {
    idf: Option<Arc<IdfWeights>>,
}

impl ReferenceRelevance {
    pub fn new(idf: Option<Arc<IdfWeights>>) -> Self {
        Self { idf }
    }
}

impl PerspectiveScorer for ReferenceRelevance {
    fn scorer_id(&self) -> &str {
        if self.idf.is_some() {
            "reference-relevance-idf/1"
        } else {
            "reference-relevance/1"
        }
    }
    fn kind(&self) -> ScorerKind {
        ScorerKind::Relevance
    }
    fn raw_score(&self, pair: &ScorePair<'_>) -> core::result::Result<f64, ScoreError> {
        Ok(reference_relevance(pair.query, pair.sentence, self.idf.as_deref()))
    }
}

#[derive(Debug, Clone)]
pub struct ReferenceSts {
    embeddings: Arc<EmbeddingTable>,
}

impl ReferenceSts {
    pub fn new(embeddings: Arc<EmbeddingTable>) -> Self {
        Self { embeddings }
    }
}

impl PerspectiveScorer for ReferenceSts {
    fn scorer_id(&self) -> &str {
        "reference-sts/1"
    }
    fn kind(&self) -> ScorerKind {
        ScorerKind::Sts
    }
    fn raw_score(&self, pair: &ScorePair<'_>) -> core::result::Result<f64, ScoreError> {
        Ok(reference_sts(pair.query, pair.sentence, &self.embeddings))
    }
}

#[derive(Debug, Clone)]
pub struct ReferenceSia {
    embeddings: Arc<EmbeddingTable>,
}

impl ReferenceSia {
    pub fn new(embeddings: Arc<EmbeddingTable>) -> Self {
        Self { embeddings }
    }
}

impl PerspectiveScorer for ReferenceSia {
    fn scorer_id(&self) -> &str {
        "reference-sia/1"
    }
    fn kind(&self) -> ScorerKind {
        ScorerKind::Sia
    }
    fn raw_score(&self, pair: &ScorePair<'_>) -> core::result::Result<f64, ScoreError> {
        Ok(reference_sia(pair.query, pair.sentence, &self.embeddings))
    }
}

/// Precomputed raw scores keyed by `(query_id, sentence_key)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreTable {
    id: String,
    kind: ScorerKind,
    scores: BTreeMap<(String, String), f64>,
}

impl ScoreTable {
    pub fn new(id: impl Into<String>, kind: ScorerKind) -> Self {
        Self { id: id.into(), kind, scores: BTreeMap::new() }
    }

    pub fn insert(&mut self, query_id: impl Into<String>, sentence_key: impl Into<String>, raw: f64) -> Result<()> {
        if !self.kind.contains(raw) {
            return Err(ScoreError::OutOfRange { kind: self.kind, index: self.scores.len(), value: raw }.into());
        }
        self.scores.insert((query_id.into(), sentence_key.into()), raw);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str, f64)> {
        self.scores.iter().map(|((q, s), v)| (q.as_str(), s.as_str(), *v))
    }
}

impl PerspectiveScorer for ScoreTable {
    fn scorer_id(&self) -> &str {
        &self.id
    }
    fn kind(&self) -> ScorerKind {
        self.kind
    }
    fn raw_score(&self, pair: &ScorePair<'_>) -> core::result::Result<f64, ScoreError> {
        // BTreeMap<(String, String)> can't be probed with borrowed halves
        self.scores
            .get(&(pair.query_id.to_string(), pair.sentence_key.to_string()))
            .copied()
            .ok_or_else(|| ScoreError::Missing {
                query_id: pair.query_id.into(),
                sentence_key: pair.sentence_key.into(),
            })
    }
}

/// One scorer per perspective.
#[derive(Clone)]
pub struct ScorerSet {
    pub relevance: Arc<dyn PerspectiveScorer>,
    pub sts: Arc<dyn PerspectiveScorer>,
    pub sia: Arc<dyn PerspectiveScorer>,
}

impl ScorerSet {
    pub fn new(
        relevance: Arc<dyn PerspectiveScorer>,
        sts: Arc<dyn PerspectiveScorer>,
        sia: Arc<dyn PerspectiveScorer>,
    ) -> Result<Self> {
        for (s, k) in [(&relevance, ScorerKind::Relevance), (&sts, ScorerKind::Sts), (&sia, ScorerKind::Sia)] {
            if s.kind() != k {
                return Err(Error::InvalidParameter(alloc::format!(
                    "scorer {} has kind {}, expected {}",
                    s.scorer_id(),
                    s.kind(),
                    k
                )));
            }
        }
        Ok(Self { relevance, sts, sia })
    }

    /// Reference scorers over shared embeddings.
    pub fn reference(embeddings: Arc<EmbeddingTable>, idf: Option<Arc<IdfWeights>>) -> Self {
        Self {
            relevance: Arc::new(ReferenceRelevance::new(idf)),
            sts: Arc::new(ReferenceSts::new(embeddings.clone())),
            sia: Arc::new(ReferenceSia::new(embeddings)),
        }
    }

    pub fn get(&self, kind: ScorerKind) -> &dyn PerspectiveScorer {
        match kind {
            ScorerKind::Relevance => &*self.relevance,
            ScorerKind::Sts => &*self.sts,
            ScorerKind::Sia => &*self.sia,
        }
    }
}

impl fmt::Debug for ScorerSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ScorerSet")
            .field("relevance", &self.relevance.scorer_id())
            .field("sts", &self.sts.scorer_id())
            .field("sia", &self.sia.scorer_id())
            .finish()
    }
}
