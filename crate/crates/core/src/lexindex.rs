//! Tokenization, the inverted index and Okapi BM25 retrieval.

use alloc::borrow::Cow;
use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Document};
use crate::error::{Error, Result};

const STOPWORDS: &[&str] = &[
    "a", "about", "after", "all", "also", "an", "and", "any", "are", "as", "at", "be", "been",
    "being", "between", "both", "but", "by", "can", "could", "did", "do", "does", "during",
    "each", "for", "from", "had", "has", "have", "how", "if", "in", "into", "is", "it", "its",
    "may", "more", "most", "no", "not", "of", "on", "or", "other", "our", "over", "should",
    "so", "some", "such", "than", "that", "the", "their", "them", "then", "there", "these",
    "they", "this", "those", "through", "to", "under", "up", "was", "we", "were", "what",
    "when", "where", "which", "while", "who", "whom", "why", "will", "with", "would", "you",
];

pub fn is_stopword(token: &str) -> bool {
    STOPWORDS.binary_search(&token).is_ok()
}

/// Harman's "S" stemmer: strips plural endings only.
pub fn s_stem(token: &str) -> Cow<'_, str> {
    let n = token.len();
    if n > 3 && token.ends_with("ies") && !token.ends_with("eies") && !token.ends_with("aies") {
        let mut s = String::from(&token[..n - 3]);
        s.push('y');
        return Cow::Owned(s);
    }
    if n > 3 && token.ends_with("es") && !token.ends_with("aes") && !token.ends_with("ees") && !token.ends_with("oes") {
        return Cow::Borrowed(&token[..n - 1]);
    }
    if n > 2 && token.ends_with('s') && !token.ends_with("us") && !token.ends_with("ss") {
        return Cow::Borrowed(&token[..n - 1]);
    }
    Cow::Borrowed(token)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenizerOptions {
    pub remove_stopwords: bool,
    pub stem: bool,
}

/// Byte ranges of maximal alphanumeric runs.
pub fn token_spans(text: &str) -> Vec<(usize, usize)> {
    let mut spans = Vec::new();
    let mut start = None;
    for (i, c) in text.char_indices() {
        match (c.is_alphanumeric(), start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                spans.push((s, i));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        spans.push((s, text.len()));
    }
    spans
}

/// Lowercase alphanumeric tokens split on everything else.
pub fn tokenize(text: &str) -> Vec<String> {
    token_spans(text).into_iter().map(|(b, e)| text[b..e].to_lowercase()).collect()
}

pub fn tokenize_with(text: &str, options: TokenizerOptions) -> Vec<String> {
    let mut tokens = tokenize(text);
    if options.remove_stopwords {
        tokens.retain(|t| !is_stopword(t));
    }
    if options.stem {
        for t in tokens.iter_mut() {
            let stemmed = s_stem(t).into_owned();
            *t = stemmed;
        }
    }
    tokens
}

/// Tokens with stopwords removed; falls back to all tokens when nothing remains.
pub fn content_tokens(text: &str) -> Vec<String> {
    let all = tokenize(text);
    let content: Vec<String> = all.iter().filter(|t| !is_stopword(t)).cloned().collect();
    if content.is_empty() {
        all
    } else {
        content
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bm25Params {
    /// Term-frequency saturation.
    pub k1: f64,
    /// Length normalization.
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Self { k1: 0.9, b: 0.4 }
    }
}

impl Bm25Params {
    pub fn new(k1: f64, b: f64) -> Result<Self> {
        if !(k1 > 0.0 && k1.is_finite()) {
            return Err(Error::OutOfRange { what: "k1", value: k1, expected: "> 0" });
        }
        if !(0.0..=1.0).contains(&b) {
            return Err(Error::OutOfRange { what: "b", value: b, expected: "[0, 1]" });
        }
        Ok(Self { k1, b })
    }
}

/// Which document fields are indexed.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldPolicy {
    #[default]
    TitleAbstract,
    Title,
    Abstract,
}

impl FieldPolicy {
    fn text(self, doc: &Document) -> String {
        match self {
            FieldPolicy::TitleAbstract => doc.full_text(),
            FieldPolicy::Title => doc.title.clone(),
            FieldPolicy::Abstract => doc.abstract_text.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexOptions {
    pub fields: FieldPolicy,
    pub tokenizer: TokenizerOptions,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Posting {
    /// Ordinal of the document in the index.
    pub doc: u32,
    pub tf: u32,
}

/// Postings are sorted by document ordinal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvertedIndex {
    options: IndexOptions,
    doc_ids: Vec<String>,
    doc_lengths: Vec<u32>,
    avg_doc_length: f64,
    postings: BTreeMap<String, Vec<Posting>>,
    #[serde(skip)]
    ordinals: BTreeMap<String, u32>,
}

pub fn build_index(corpus: &Corpus, fields: FieldPolicy) -> Result<InvertedIndex> {
    InvertedIndex::build(corpus, IndexOptions { fields, ..IndexOptions::default() })
}

impl InvertedIndex {
    pub fn build(corpus: &Corpus, options: IndexOptions) -> Result<Self> {
        if corpus.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let mut postings: BTreeMap<String, Vec<Posting>> = BTreeMap::new();
        let mut doc_ids = Vec::with_capacity(corpus.len());
        let mut doc_lengths = Vec::with_capacity(corpus.len());
        for (ordinal, doc) in corpus.iter().enumerate() {
            let tokens = tokenize_with(&options.fields.text(doc), options.tokenizer);
            let mut counts: BTreeMap<String, u32> = BTreeMap::new();
            for t in &tokens {
                *counts.entry(t.clone()).or_default() += 1;
            }
            for (term, tf) in counts {
                postings.entry(term).or_default().push(Posting { doc: ordinal as u32, tf });
            }
            doc_ids.push(doc.doc_id.clone());
            doc_lengths.push(tokens.len() as u32);
        }
        let total: u64 = doc_lengths.iter().map(|&l| l as u64).sum();
        let avg_doc_length = total as f64 / doc_lengths.len() as f64;
        let mut index = Self { options, doc_ids, doc_lengths, avg_doc_length, postings, ordinals: BTreeMap::new() };
        index.rebuild_lookup();
        Ok(index)
    }

    /// Restores the id lookup after deserialization.
    pub fn rebuild_lookup(&mut self) {
        self.ordinals = self.doc_ids.iter().enumerate().map(|(i, d)| (d.clone(), i as u32)).collect();
    }

    pub fn validate(&self) -> Result<()> {
        if self.doc_ids.len() != self.doc_lengths.len() || self.ordinals.len() != self.doc_ids.len() {
            return Err(Error::InvalidParameter("index document tables are inconsistent".into()));
        }
        let n = self.doc_ids.len() as u32;
        for (term, list) in &self.postings {
            if list.iter().any(|p| p.doc >= n || p.tf == 0) || list.windows(2).any(|w| w[0].doc >= w[1].doc) {
                return Err(Error::InvalidParameter(alloc::format!("posting list for {term:?} is malformed")));
            }
        }
        Ok(())
    }

    pub fn options(&self) -> IndexOptions {
        self.options
    }

    pub fn doc_count(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn avg_doc_length(&self) -> f64 {
        self.avg_doc_length
    }

    pub fn doc_ids(&self) -> &[String] {
        &self.doc_ids
    }

    pub fn doc_length(&self, doc_id: &str) -> Option<u32> {
        self.ordinals.get(doc_id).map(|&o| self.doc_lengths[o as usize])
    }

    pub fn postings(&self, term: &str) -> &[Posting] {
        self.postings.get(term).map_or(&[], Vec::as_slice)
    }

    pub fn terms(&self) -> impl Iterator<Item = (&str, &[Posting])> {
        self.postings.iter().map(|(t, p)| (t.as_str(), p.as_slice()))
    }

    pub fn document_frequency(&self, term: &str) -> usize {
        self.postings(term).len()
    }

    pub fn term_frequency(&self, term: &str, doc_id: &str) -> Option<u32> {
        let ord = *self.ordinals.get(doc_id)?;
        let list = self.postings(term);
        Some(list.binary_search_by_key(&ord, |p| p.doc).map_or(0, |i| list[i].tf))
    }

    /// Tokenizes a query the same way documents were indexed.
    pub fn query_tokens(&self, query: &str) -> Vec<String> {
        tokenize_with(query, self.options.tokenizer)
    }

    pub fn idf(&self, term: &str) -> f64 {
        bm25_idf(self.doc_count(), self.document_frequency(term))
    }

    fn term_weight(&self, params: &Bm25Params, idf: f64, tf: u32, ordinal: u32) -> f64 {
        let tf = tf as f64;
        let len = self.doc_lengths[ordinal as usize] as f64;
        let norm = 1.0 - params.b + params.b * len / self.avg_doc_length.max(f64::MIN_POSITIVE);
        idf * tf * (params.k1 + 1.0) / (tf + params.k1 * norm)
    }
}

/// `ln(1 + (N - df + 0.5) / (df + 0.5))`, never negative.
pub fn bm25_idf(doc_count: usize, df: usize) -> f64 {
    let n = doc_count as f64;
    let df = df as f64;
    libm::log(1.0 + (n - df + 0.5) / (df + 0.5))
}

fn unique_terms(query_tokens: &[String]) -> BTreeSet<&str> {
    query_tokens.iter().map(String::as_str).collect()
}

/// BM25 of one document; each distinct query term contributes once.
pub fn bm25_score(index: &InvertedIndex, params: &Bm25Params, query_tokens: &[String], doc_id: &str) -> Result<f64> {
    let ordinal = *index.ordinals.get(doc_id).ok_or_else(|| Error::UnknownDocument(doc_id.into()))?;
    let mut score = 0.0;
    for term in unique_terms(query_tokens) {
        let list = index.postings(term);
        if let Ok(i) = list.binary_search_by_key(&ordinal, |p| p.doc) {
            score += index.term_weight(params, bm25_idf(index.doc_count(), list.len()), list[i].tf, ordinal);
        }
    }
    Ok(score)
}

/// Score descending, then doc id ascending.
pub fn rank_order(a: (&str, f64), b: (&str, f64)) -> Ordering {
    b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0))
}

/// Top `k` documents with a positive BM25 score.
pub fn coarse_search(index: &InvertedIndex, params: &Bm25Params, query: &str, k: usize) -> Vec<(String, f64)> {
    let tokens = index.query_tokens(query);
    let mut acc: BTreeMap<u32, f64> = BTreeMap::new();
    for term in unique_terms(&tokens) {
        let list = index.postings(term);
        if list.is_empty() {
            continue;
        }
        let idf = bm25_idf(index.doc_count(), list.len());
        for p in list {
            *acc.entry(p.doc).or_default() += index.term_weight(params, idf, p.tf, p.doc);
        }
    }
    let mut hits: Vec<(&str, f64)> = acc
        .into_iter()
        .filter(|&(_, s)| s > 0.0)
        .map(|(o, s)| (index.doc_ids[o as usize].as_str(), s))
        .collect();
    hits.sort_by(|a, b| rank_order(*a, *b));
    hits.truncate(k);
    hits.into_iter().map(|(d, s)| (String::from(d), s)).collect()
}
