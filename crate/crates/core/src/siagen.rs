//! Rule-based construction of Semantic Information Availability (SIA) data.
//!
//! From multi-hop QA rows:
//! - label 4: the question with its combined fact;
//! - label 2: the question with the single fact the relevance scorer prefers;
//! - label 0: the question of one row with the combined fact of another row
//!   whose question is semantically similar (STS at or above a threshold).
//!
//! Labels 3 and 1 are derived from 4 and 2 by replacing entity words with one
//! of their five nearest embedding neighbors.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::cmp::Ordering;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lexindex::{token_spans, tokenize};
use crate::scorers::{cosine, score_all, EmbeddingTable, PerspectiveScorer, ScorePair, ScorerKind};

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct QascRow {
    pub question: String,
    #[serde(default)]
    pub possible_answers: String,
    #[serde(default)]
    pub correct_answer: String,
    pub fact1: String,
    pub fact2: String,
    #[serde(alias = "combinedfact", alias = "combinedFact")]
    pub combined_fact: String,
}

impl QascRow {
    pub fn validate(&self) -> core::result::Result<(), &'static str> {
        if self.question.trim().is_empty() {
            return Err("question is empty");
        }
        if self.combined_fact.trim().is_empty() {
            return Err("combined_fact is empty");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Cat4Rule,
    Cat2Rule,
    Cat0Rule,
    SwapFrom4,
    SwapFrom2,
}

impl Provenance {
    pub fn label(self) -> u8 {
        match self {
            Provenance::Cat4Rule => 4,
            Provenance::SwapFrom4 => 3,
            Provenance::Cat2Rule => 2,
            Provenance::SwapFrom2 => 1,
            Provenance::Cat0Rule => 0,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::Cat4Rule => "cat4_rule",
            Provenance::Cat2Rule => "cat2_rule",
            Provenance::Cat0Rule => "cat0_rule",
            Provenance::SwapFrom4 => "swap_from_4",
            Provenance::SwapFrom2 => "swap_from_2",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [Self::Cat4Rule, Self::Cat2Rule, Self::Cat0Rule, Self::SwapFrom4, Self::SwapFrom2]
            .into_iter()
            .find(|p| p.as_str() == s)
    }
}

/// `label` always equals `provenance.label()`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SiaSample {
    pub query: String,
    pub sentence: String,
    pub label: u8,
    pub provenance: Provenance,
    /// Row the sentence was taken from.
    pub row: usize,
}

impl SiaSample {
    pub fn new(query: impl Into<String>, sentence: impl Into<String>, provenance: Provenance, row: usize) -> Self {
        Self { query: query.into(), sentence: sentence.into(), label: provenance.label(), provenance, row }
    }
}

fn check_rows(rows: &[QascRow]) -> Result<()> {
    for (i, r) in rows.iter().enumerate() {
        r.validate().map_err(|m| Error::InvalidParameter(format!("row {i}: {m}")))?;
    }
    Ok(())
}

pub fn gen_cat4(rows: &[QascRow]) -> Result<Vec<SiaSample>> {
    check_rows(rows)?;
    Ok(rows.iter().enumerate().map(|(i, r)| SiaSample::new(&r.question, &r.combined_fact, Provenance::Cat4Rule, i)).collect())
}

/// Pairs each question with the fact `relevance` scores higher; ties go to `fact1`.
pub fn gen_cat2(rows: &[QascRow], relevance: &dyn PerspectiveScorer) -> Result<Vec<SiaSample>> {
    check_rows(rows)?;
    let ids: Vec<String> = (0..rows.len()).map(|i| i.to_string()).collect();
    let pairs: Vec<ScorePair<'_>> = rows
        .iter()
        .zip(&ids)
        .flat_map(|(r, id)| {
            [("fact1", &r.fact1), ("fact2", &r.fact2)]
                .map(|(key, fact)| ScorePair { query_id: id, query: &r.question, sentence_key: key, sentence: fact })
        })
        .collect();
    let scores = score_all(relevance, &pairs)?;
    Ok(rows
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let fact = if scores[2 * i + 1].raw > scores[2 * i].raw { &r.fact2 } else { &r.fact1 };
            SiaSample::new(&r.question, fact, Provenance::Cat2Rule, i)
        })
        .collect())
}

pub const DEFAULT_STS_THRESHOLD: f64 = 4.0;

/// For every pair of distinct, similar questions `i < j`, emits
/// `(question_i, combined_fact_j)` and `(question_j, combined_fact_i)`.
pub fn gen_cat0(rows: &[QascRow], sts: &dyn PerspectiveScorer, threshold: f64) -> Result<Vec<SiaSample>> {
    check_rows(rows)?;
    if !ScorerKind::Sts.contains(threshold) {
        return Err(Error::OutOfRange { what: "sts threshold", value: threshold, expected: "[0, 5]" });
    }
    let mut out = Vec::new();
    for i in 0..rows.len() {
        let id = i.to_string();
        let keys: Vec<String> = (i + 1..rows.len()).map(|j| j.to_string()).collect();
        let candidates: Vec<usize> = (i + 1..rows.len()).filter(|&j| rows[i].question != rows[j].question).collect();
        let pairs: Vec<ScorePair<'_>> = candidates
            .iter()
            .map(|&j| ScorePair {
                query_id: &id,
                query: &rows[i].question,
                sentence_key: &keys[j - i - 1],
                sentence: &rows[j].question,
            })
            .collect();
        let scores = score_all(sts, &pairs)?;
        for (&j, s) in candidates.iter().zip(&scores) {
            if s.raw >= threshold {
                out.push(SiaSample::new(&rows[i].question, &rows[j].combined_fact, Provenance::Cat0Rule, j));
                out.push(SiaSample::new(&rows[j].question, &rows[i].combined_fact, Provenance::Cat0Rule, i));
            }
        }
    }
    Ok(out)
}

pub const NEIGHBORS: usize = 5;

/// The five vocabulary words most cosine-similar to `word`, excluding it;
/// ties go to the lexicographically smaller word.
pub fn knn_top5(embeddings: &EmbeddingTable, word: &str) -> Result<Vec<String>> {
    if embeddings.len() <= NEIGHBORS {
        return Err(Error::VocabularyTooSmall { size: embeddings.len() });
    }
    let target = embeddings.get(word).ok_or_else(|| Error::UnknownWord(word.into()))?;
    let mut scored: Vec<(f64, &str)> =
        embeddings.iter().filter(|(w, _)| *w != word).map(|(w, v)| (cosine(target, v), w)).collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1)));
    Ok(scored.into_iter().take(NEIGHBORS).map(|(_, w)| w.to_string()).collect())
}

/// Finds entity mentions as byte spans of a text.
pub trait EntityProvider {
    fn entities(&self, text: &str) -> Vec<(usize, usize)>;
}

/// Case-insensitive whole-token matching against a term list; longest term
/// wins at each position, matches do not overlap.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DictionaryEntityMatcher {
    terms: Vec<Vec<String>>,
}

impl DictionaryEntityMatcher {
    pub fn new<S: AsRef<str>>(terms: impl IntoIterator<Item = S>) -> Self {
        let mut terms: Vec<Vec<String>> = terms.into_iter().map(|t| tokenize(t.as_ref())).filter(|t| !t.is_empty()).collect();
        terms.sort_by(|a, b| b.len().cmp(&a.len()).then_with(|| a.cmp(b)));
        terms.dedup();
        Self { terms }
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }
}

impl EntityProvider for DictionaryEntityMatcher {
    fn entities(&self, text: &str) -> Vec<(usize, usize)> {
        let spans = token_spans(text);
        let lower: Vec<String> = spans.iter().map(|&(b, e)| text[b..e].to_lowercase()).collect();
        let mut out = Vec::new();
        let mut i = 0;
        while i < spans.len() {
            let hit = self.terms.iter().find(|t| lower.len() - i >= t.len() && lower[i..i + t.len()] == t[..]);
            match hit {
                Some(t) => {
                    out.push((spans[i].0, spans[i + t.len() - 1].1));
                    i += t.len();
                }
                None => i += 1,
            }
        }
        out
    }
}

/// Memoized [`knn_top5`] lookups.
#[derive(Debug)]
pub struct NeighborCache<'a> {
    embeddings: &'a EmbeddingTable,
    cache: BTreeMap<String, Option<Vec<String>>>,
}

impl<'a> NeighborCache<'a> {
    pub fn new(embeddings: &'a EmbeddingTable) -> Self {
        Self { embeddings, cache: BTreeMap::new() }
    }

    /// `None` when the word has no embedding.
    pub fn neighbors(&mut self, word: &str) -> Result<Option<&[String]>> {
        if !self.cache.contains_key(word) {
            let found = match knn_top5(self.embeddings, word) {
                Ok(n) => Some(n),
                Err(Error::UnknownWord(_)) => None,
                Err(e) => return Err(e),
            };
            self.cache.insert(word.to_string(), found);
        }
        Ok(self.cache[word].as_deref())
    }
}

/// Derives a label-3 (from 4) or label-1 (from 2) sample. Each entity span is
/// selected with probability `swap_prob`; every word of a selected entity is
/// replaced by a uniformly drawn member of its five nearest neighbors. Words
/// without an embedding stay as they are. The draw sequence depends only on
/// `(seed, stream)`.
pub fn swap_generate(
    sample: &SiaSample,
    entity_spans: &[(usize, usize)],
    neighbors: &mut NeighborCache<'_>,
    swap_prob: f64,
    seed: u64,
    stream: u64,
) -> Result<SiaSample> {
    let provenance = match sample.label {
        4 => Provenance::SwapFrom4,
        2 => Provenance::SwapFrom2,
        other => return Err(Error::InvalidParameter(format!("cannot swap a sample with label {other}"))),
    };
    if !(0.0..=1.0).contains(&swap_prob) {
        return Err(Error::OutOfRange { what: "swap probability", value: swap_prob, expected: "[0, 1]" });
    }
    let text = &sample.sentence;
    let mut spans = entity_spans.to_vec();
    spans.sort_unstable();
    for (k, &(b, e)) in spans.iter().enumerate() {
        let valid = b <= e && e <= text.len() && text.is_char_boundary(b) && text.is_char_boundary(e);
        if !valid || k > 0 && spans[k - 1].1 > b {
            return Err(Error::InvalidParameter(format!("entity span {b}..{e} is invalid for the sentence")));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let mut replacements: Vec<(usize, usize, String)> = Vec::new();
    for &(b, e) in &spans {
        if rng.random::<f64>() >= swap_prob {
            continue;
        }
        for (wb, we) in token_spans(&text[b..e]) {
            let word = text[b + wb..b + we].to_lowercase();
            match neighbors.neighbors(&word)? {
                Some(n) if !n.is_empty() => {
                    let pick = rng.random_range(0..n.len());
                    replacements.push((b + wb, b + we, n[pick].clone()));
                }
                _ => log::warn!("no embedding for {word:?}; left unswapped"),
            }
        }
    }
    let mut sentence = text.clone();
    for (b, e, w) in replacements.into_iter().rev() {
        sentence.replace_range(b..e, &w);
    }
    Ok(SiaSample::new(&sample.query, sentence, provenance, sample.row))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SiaConfig {
    pub sts_threshold: f64,
    pub swap_prob: f64,
    pub seed: u64,
}

impl Default for SiaConfig {
    fn default() -> Self {
        Self { sts_threshold: DEFAULT_STS_THRESHOLD, swap_prob: 0.5, seed: 0 }
    }
}

/// All five categories in the order 4, 2, 0, 3, 1. The swap for row `i`
/// draws from stream `2i` (from label 4) or `2i + 1` (from label 2).
pub fn generate(
    rows: &[QascRow],
    config: &SiaConfig,
    relevance: &dyn PerspectiveScorer,
    sts: &dyn PerspectiveScorer,
    embeddings: &EmbeddingTable,
    entities: &dyn EntityProvider,
) -> Result<Vec<SiaSample>> {
    let cat4 = gen_cat4(rows)?;
    let cat2 = gen_cat2(rows, relevance)?;
    let cat0 = gen_cat0(rows, sts, config.sts_threshold)?;
    let mut neighbors = NeighborCache::new(embeddings);
    let mut swapped = Vec::with_capacity(2 * rows.len());
    for (samples, offset) in [(&cat4, 0u64), (&cat2, 1u64)] {
        for s in samples {
            let spans = entities.entities(&s.sentence);
            swapped.push(swap_generate(s, &spans, &mut neighbors, config.swap_prob, config.seed, 2 * s.row as u64 + offset)?);
        }
    }
    let (from4, from2): (Vec<_>, Vec<_>) = swapped.into_iter().partition(|s| s.provenance == Provenance::SwapFrom4);
    let mut out = cat4;
    out.extend(cat2);
    out.extend(cat0);
    out.extend(from4);
    out.extend(from2);
    Ok(out)
}

/// Brute-force cosine order used to double-check neighbor sets.
pub fn rank_by_cosine<'a>(embeddings: &'a EmbeddingTable, word: &str) -> Vec<(&'a str, f64)> {
    let Some(target) = embeddings.get(word) else { return Vec::new() };
    let mut all: Vec<(&str, f64)> = embeddings.iter().filter(|(w, _)| *w != word).map(|(w, v)| (w, cosine(target, v))).collect();
    all.sort_by(|a, b| match b.1.partial_cmp(&a.1) {
        Some(Ordering::Equal) | None => a.0.cmp(b.0),
        Some(o) => o,
    });
    all
}
