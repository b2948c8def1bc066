//! Weighted-sum fusion of BM25 and the three perspective scores.
//!
//! Sentence and document scores depend on each other: a document is scored
//! from BM25 and its three best sentences, and a sentence's final score adds
//! the (pool-normalized) score of its document. The dependency is unrolled a
//! fixed number of times, one by default:
//!
//! 1. `base = α1·relevance + α2·sts + α3·sia`
//! 2. `doc = β1·bm25 + β2·(w1·s(1) + w2·s(2) + w3·s(3))` over the three best sentence scores
//! 3. `final = base + α4·minmax(doc)`
//!
//! Further iterations recompute step 2 from the previous final scores.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Query, Snippet};
use crate::error::{Error, Result};
use crate::lexindex::{coarse_search, Bm25Params, InvertedIndex};
use crate::scorers::{score_all, PerspectiveScore, PerspectiveScorer, ScorePair, ScorerKind, ScorerSet};

/// `alpha`: relevance, STS, SIA, document score. `beta`: BM25, sentence sum.
/// `w`: weights of the three best sentence scores. Every component is in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FusionWeights {
    pub alpha: [f64; 4],
    pub beta: [f64; 2],
    pub w: [f64; 3],
}

impl FusionWeights {
    pub const DIM: usize = 9;

    pub fn new(alpha: [f64; 4], beta: [f64; 2], w: [f64; 3]) -> Result<Self> {
        let wts = Self { alpha, beta, w };
        wts.validate()?;
        Ok(wts)
    }

    pub fn validate(&self) -> Result<()> {
        for v in self.to_vector() {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::OutOfRange { what: "fusion weight", value: v, expected: "[0, 1]" });
            }
        }
        Ok(())
    }

    pub fn balanced(value: f64) -> Self {
        Self { alpha: [value; 4], beta: [value; 2], w: [value; 3] }
    }

    /// Weights learned on the BioASQ sentence-relevance development set with
    /// gold documents; shipped as a reference profile.
    pub fn bioasq_reference() -> Self {
        Self {
            alpha: [0.6123, 0.2664, 0.0785, 0.9879],
            beta: [0.0002, 0.8523],
            w: [0.9938, 0.0338, 0.0271],
        }
    }

    /// `[α1..α4, β1, β2, w1..w3]`.
    pub fn to_vector(&self) -> [f64; 9] {
        let [a1, a2, a3, a4] = self.alpha;
        let [b1, b2] = self.beta;
        let [w1, w2, w3] = self.w;
        [a1, a2, a3, a4, b1, b2, w1, w2, w3]
    }

    pub fn from_vector(v: [f64; 9]) -> Self {
        Self { alpha: [v[0], v[1], v[2], v[3]], beta: [v[4], v[5]], w: [v[6], v[7], v[8]] }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bm25Scale {
    #[default]
    Raw,
    /// Min-max normalized over the candidate pool.
    MinMax,
}

pub const MAX_RESULTS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RankingParams {
    /// Documents fetched by BM25 before reranking.
    pub pool_k: usize,
    pub top_docs: usize,
    pub top_snippets: usize,
    pub bm25: Bm25Params,
    pub bm25_scale: Bm25Scale,
    /// Fuse raw perspective scores instead of range-normalized ones.
    pub use_raw_scales: bool,
    pub fixed_point_iters: usize,
}

impl Default for RankingParams {
    fn default() -> Self {
        Self {
            pool_k: 100,
            top_docs: MAX_RESULTS,
            top_snippets: MAX_RESULTS,
            bm25: Bm25Params::default(),
            bm25_scale: Bm25Scale::Raw,
            use_raw_scales: false,
            fixed_point_iters: 1,
        }
    }
}

impl RankingParams {
    pub fn validate(&self) -> Result<()> {
        if self.pool_k == 0 {
            return Err(Error::InvalidParameter("pool_k must be at least 1".into()));
        }
        if self.top_docs > MAX_RESULTS || self.top_snippets > MAX_RESULTS {
            return Err(Error::InvalidParameter(format!(
                "top_docs ({}) and top_snippets ({}) must be at most {MAX_RESULTS}",
                self.top_docs, self.top_snippets
            )));
        }
        if self.fixed_point_iters == 0 {
            return Err(Error::InvalidParameter("fixed_point_iters must be at least 1".into()));
        }
        Bm25Params::new(self.bm25.k1, self.bm25.b)?;
        Ok(())
    }
}

/// `α1·r + α2·s + α3·i` for normalized perspective scores.
pub fn base_sentence_score(wts: &FusionWeights, relevance: f64, sts: f64, sia: f64) -> Result<f64> {
    for (what, v) in [("relevance", relevance), ("sts", sts), ("sia", sia)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::OutOfRange { what, value: v, expected: "[0, 1] (normalized)" });
        }
    }
    Ok(base_unchecked(wts, [relevance, sts, sia]))
}

fn base_unchecked(wts: &FusionWeights, inputs: [f64; 3]) -> f64 {
    wts.alpha[0] * inputs[0] + wts.alpha[1] * inputs[1] + wts.alpha[2] * inputs[2]
}

/// `β1·bm25 + β2·Σ w_i·top_i`.
pub fn document_score(wts: &FusionWeights, bm25: f64, top3: [f64; 3]) -> f64 {
    let sentences = wts.w[0] * top3[0] + wts.w[1] * top3[1] + wts.w[2] * top3[2];
    wts.beta[0] * bm25 + wts.beta[1] * sentences
}

/// `base + α4·doc_score_norm`.
pub fn final_sentence_score(wts: &FusionWeights, base: f64, doc_score_norm: f64) -> f64 {
    base + wts.alpha[3] * doc_score_norm
}

/// The three largest scores in descending order, zero-padded.
pub fn top3(scores: impl IntoIterator<Item = f64>) -> [f64; 3] {
    let mut top = [f64::NEG_INFINITY; 3];
    for s in scores {
        if s > top[2] {
            top[2] = s;
            if top[2] > top[1] {
                top.swap(1, 2);
                if top[1] > top[0] {
                    top.swap(0, 1);
                }
            }
        }
    }
    top.map(|v| if v == f64::NEG_INFINITY { 0.0 } else { v })
}

/// Min-max normalization; all zeros when the values do not spread.
pub fn min_max(values: &[f64]) -> Vec<f64> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return alloc::vec![0.0; values.len()];
    }
    values.iter().map(|v| (v - lo) / (hi - lo)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PooledSentence {
    pub sent_index: usize,
    /// Relevance, STS, SIA.
    pub scores: [PerspectiveScore; 3],
    pub snippet: Snippet,
}

impl PooledSentence {
    fn inputs(&self, raw: bool) -> [f64; 3] {
        self.scores.map(|s| if raw { s.raw } else { s.normalized })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PooledDocument {
    pub doc_id: String,
    pub bm25: f64,
    pub sentences: Vec<PooledSentence>,
}

/// BM25 candidates of one query with every sentence scored from all three
/// perspectives. Independent of the fusion weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidatePool {
    pub query_id: String,
    pub query: String,
    pub docs: Vec<PooledDocument>,
}

impl CandidatePool {
    pub fn sentence_count(&self) -> usize {
        self.docs.iter().map(|d| d.sentences.len()).sum()
    }
}

pub fn sentence_key(doc_id: &str, sent_index: usize) -> String {
    format!("{doc_id}:{sent_index}")
}

/// Coarse retrieval followed by perspective scoring of every pooled sentence.
pub fn score_pool(
    query: &Query,
    corpus: &Corpus,
    index: &InvertedIndex,
    scorers: &ScorerSet,
    params: &RankingParams,
) -> Result<CandidatePool> {
    params.validate()?;
    let hits = coarse_search(index, &params.bm25, &query.body, params.pool_k);

    let mut docs = Vec::with_capacity(hits.len());
    let mut keys = Vec::new();
    for (doc_id, bm25) in hits {
        let doc = corpus.get(&doc_id).ok_or_else(|| Error::UnknownDocument(doc_id.clone()))?;
        for span in &doc.sentences {
            keys.push((docs.len(), span.sent_index, sentence_key(&doc_id, span.sent_index)));
        }
        docs.push((doc, bm25));
    }
    let pairs: Vec<ScorePair<'_>> = keys
        .iter()
        .map(|(d, s, key)| ScorePair {
            query_id: &query.query_id,
            query: &query.body,
            sentence_key: key,
            sentence: docs[*d].0.sentence(*s).unwrap_or_default(),
        })
        .collect();
    let per_kind: Vec<Vec<PerspectiveScore>> =
        ScorerKind::ALL.iter().map(|&k| score_all(scorers.get(k), &pairs)).collect::<core::result::Result<_, _>>()?;

    let mut pooled: Vec<PooledDocument> = docs
        .iter()
        .map(|(doc, bm25)| PooledDocument { doc_id: doc.doc_id.clone(), bm25: *bm25, sentences: Vec::new() })
        .collect();
    for (i, (d, s, _)) in keys.iter().enumerate() {
        let doc = docs[*d].0;
        pooled[*d].sentences.push(PooledSentence {
            sent_index: *s,
            scores: [per_kind[0][i], per_kind[1][i], per_kind[2][i]],
            snippet: doc.sentence_snippet(&doc.sentences[*s]),
        });
    }
    Ok(CandidatePool { query_id: query.query_id.clone(), query: query.body.clone(), docs: pooled })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FusedDocument {
    /// Position in the pool.
    pub doc: usize,
    pub score: f64,
    pub score_norm: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FusedSentence {
    pub doc: usize,
    /// Position within the pooled document.
    pub sentence: usize,
    pub base: f64,
    pub final_score: f64,
}

/// Fusion result over a pool: the kept documents and snippets, best first.
#[derive(Debug, Clone, PartialEq)]
pub struct Fusion {
    pub documents: Vec<FusedDocument>,
    pub snippets: Vec<FusedSentence>,
}

/// Score descending, doc id ascending, sentence index ascending.
fn sentence_order(pool: &CandidatePool, a: &FusedSentence, b: &FusedSentence) -> Ordering {
    b.final_score
        .total_cmp(&a.final_score)
        .then_with(|| pool.docs[a.doc].doc_id.cmp(&pool.docs[b.doc].doc_id))
        .then_with(|| {
            pool.docs[a.doc].sentences[a.sentence].sent_index.cmp(&pool.docs[b.doc].sentences[b.sentence].sent_index)
        })
}

pub fn fuse(pool: &CandidatePool, wts: &FusionWeights, params: &RankingParams) -> Fusion {
    let n = pool.docs.len();
    if n == 0 {
        return Fusion { documents: Vec::new(), snippets: Vec::new() };
    }
    let bm25: Vec<f64> = pool.docs.iter().map(|d| d.bm25).collect();
    let bm25 = match params.bm25_scale {
        Bm25Scale::Raw => bm25,
        Bm25Scale::MinMax => min_max(&bm25),
    };
    let base: Vec<Vec<f64>> = pool
        .docs
        .iter()
        .map(|d| d.sentences.iter().map(|s| base_unchecked(wts, s.inputs(params.use_raw_scales))).collect())
        .collect();

    let mut current = base.clone();
    let mut doc_scores = alloc::vec![0.0; n];
    let mut doc_norm = alloc::vec![0.0; n];
    for _ in 0..params.fixed_point_iters.max(1) {
        for d in 0..n {
            doc_scores[d] = document_score(wts, bm25[d], top3(current[d].iter().copied()));
        }
        doc_norm = min_max(&doc_scores);
        for d in 0..n {
            for (c, b) in current[d].iter_mut().zip(&base[d]) {
                *c = final_sentence_score(wts, *b, doc_norm[d]);
            }
        }
    }

    let mut documents: Vec<FusedDocument> =
        (0..n).map(|d| FusedDocument { doc: d, score: doc_scores[d], score_norm: doc_norm[d] }).collect();
    documents.sort_by(|a, b| {
        b.score.total_cmp(&a.score).then_with(|| pool.docs[a.doc].doc_id.cmp(&pool.docs[b.doc].doc_id))
    });
    documents.truncate(params.top_docs);

    let mut snippets: Vec<FusedSentence> = documents
        .iter()
        .flat_map(|fd| {
            let d = fd.doc;
            (0..base[d].len()).map(move |s| (d, s))
        })
        .map(|(d, s)| FusedSentence { doc: d, sentence: s, base: base[d][s], final_score: current[d][s] })
        .collect();
    snippets.sort_by(|a, b| sentence_order(pool, a, b));
    snippets.truncate(params.top_snippets);
    Fusion { documents, snippets }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedDocument {
    pub doc_id: String,
    pub score: f64,
    pub bm25: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedSnippet {
    pub sent_index: usize,
    pub base: f64,
    /// Unnormalized score of the containing document.
    pub doc_score: f64,
    pub score: f64,
    pub snippet: Snippet,
}

/// Ranked documents and snippets for one query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedEntry {
    pub query_id: String,
    pub body: String,
    pub documents: Vec<RankedDocument>,
    pub snippets: Vec<RankedSnippet>,
}

impl CandidatePool {
    pub fn materialize(&self, fusion: &Fusion) -> RankedEntry {
        let doc_score = |d: usize| fusion.documents.iter().find(|f| f.doc == d).map_or(0.0, |f| f.score);
        RankedEntry {
            query_id: self.query_id.clone(),
            body: self.query.clone(),
            documents: fusion
                .documents
                .iter()
                .map(|f| RankedDocument {
                    doc_id: self.docs[f.doc].doc_id.clone(),
                    score: f.score,
                    bm25: self.docs[f.doc].bm25,
                })
                .collect(),
            snippets: fusion
                .snippets
                .iter()
                .map(|f| {
                    let s = &self.docs[f.doc].sentences[f.sentence];
                    RankedSnippet {
                        sent_index: s.sent_index,
                        base: f.base,
                        doc_score: doc_score(f.doc),
                        score: f.final_score,
                        snippet: s.snippet.clone(),
                    }
                })
                .collect(),
        }
    }
}

/// The full pipeline for one query.
pub fn rank(
    query: &Query,
    corpus: &Corpus,
    index: &InvertedIndex,
    scorers: &ScorerSet,
    wts: &FusionWeights,
    params: &RankingParams,
) -> Result<RankedEntry> {
    wts.validate()?;
    let pool = score_pool(query, corpus, index, scorers, params)?;
    Ok(pool.materialize(&fuse(&pool, wts, params)))
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RankedRun {
    pub entries: Vec<RankedEntry>,
}

impl RankedRun {
    /// `query_id, doc_id, sent_index, base, doc_score, final` per snippet.
    pub fn to_debug_tsv(&self) -> String {
        let mut out = String::from("query_id\tdoc_id\tsent_index\tbase\tdoc_score\tfinal\n");
        for e in &self.entries {
            for s in &e.snippets {
                out.push_str(&format!(
                    "{}\t{}\t{}\t{}\t{}\t{}\n",
                    e.query_id, s.snippet.doc_id, s.sent_index, s.base, s.doc_score, s.score
                ));
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MedicItem {
    pub index: usize,
    pub sentence: String,
    pub score: f64,
    pub relevance: f64,
    pub sts: f64,
    pub context_before: Option<String>,
    pub context_after: Option<String>,
}

pub const DEFAULT_MEDIC_ALPHA: f64 = 0.8;

/// Two-perspective blend `alpha·relevance + (1 − alpha)·sts` over a sentence
/// list. Each returned sentence carries its neighbors as context.
pub fn medic_rank(
    query: &str,
    sentences: &[String],
    topn: usize,
    alpha: f64,
    relevance: &dyn PerspectiveScorer,
    sts: &dyn PerspectiveScorer,
    key_prefix: &str,
) -> Result<Vec<MedicItem>> {
    if topn < 1 {
        return Err(Error::InvalidParameter("topn must be at least 1".into()));
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::OutOfRange { what: "alpha", value: alpha, expected: "[0, 1]" });
    }
    if query.trim().is_empty() {
        return Err(Error::EmptyQuery { query_id: "medic".into() });
    }
    if relevance.kind() != ScorerKind::Relevance || sts.kind() != ScorerKind::Sts {
        return Err(Error::InvalidParameter("medic ranking needs a relevance and an STS scorer".into()));
    }
    let keys: Vec<String> = (0..sentences.len()).map(|i| format!("{key_prefix}:{i}")).collect();
    // blank entries score zero rather than failing the request
    let scored: Vec<usize> = (0..sentences.len()).filter(|&i| !sentences[i].trim().is_empty()).collect();
    let pairs: Vec<ScorePair<'_>> = scored
        .iter()
        .map(|&i| ScorePair { query_id: "medic", query, sentence_key: &keys[i], sentence: &sentences[i] })
        .collect();
    let rel = score_all(relevance, &pairs)?;
    let sim = score_all(sts, &pairs)?;

    let mut items: Vec<MedicItem> = scored
        .iter()
        .enumerate()
        .map(|(k, &i)| {
            let (r, s) = (rel[k].normalized, sim[k].normalized);
            MedicItem {
                index: i,
                sentence: sentences[i].clone(),
                score: alpha * r + (1.0 - alpha) * s,
                relevance: r,
                sts: s,
                context_before: i.checked_sub(1).map(|p| sentences[p].clone()),
                context_after: sentences.get(i + 1).cloned(),
            }
        })
        .collect();
    items.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.index.cmp(&b.index)));
    items.truncate(topn);
    Ok(items)
}
