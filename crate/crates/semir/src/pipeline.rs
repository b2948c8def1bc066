//! Loaded ranking artifacts and the operations the CLI and the HTTP gateway
//! share.

use std::collections::BTreeMap;

use semir_core::bioasq::{Question, QuestionsFile};
use semir_core::corpus::{Corpus, Query, QuerySet};
use semir_core::fusion::{rank, FusionWeights, RankedRun, RankingParams, MAX_RESULTS};
use semir_core::lexindex::InvertedIndex;
use semir_core::scorers::ScorerSet;

use crate::cache::sha256_hex;
use crate::config::{builtin_profile, BALANCED, BIOASQ_REFERENCE};
use crate::error::{Error, Result};

pub struct Pipeline {
    pub corpus: Corpus,
    pub index: InvertedIndex,
    pub scorers: ScorerSet,
    pub profiles: BTreeMap<String, FusionWeights>,
    pub default_profile: String,
    pub params: RankingParams,
    pub corpus_fingerprint: String,
    pub index_fingerprint: String,
}

pub fn corpus_fingerprint(corpus: &Corpus) -> String {
    let mut text = String::new();
    for d in corpus.iter() {
        for part in [&d.doc_id, &d.title, &d.abstract_text] {
            text.push_str(&part.len().to_string());
            text.push(':');
            text.push_str(part);
        }
    }
    sha256_hex(&text)
}

pub fn index_fingerprint(index: &InvertedIndex) -> String {
    sha256_hex(&serde_json::to_string(index).expect("index serializes"))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchRequest<'a> {
    pub query_id: &'a str,
    pub query: &'a str,
    pub top_docs: usize,
    pub top_snippets: usize,
    pub profile: Option<&'a str>,
}

impl Pipeline {
    /// Starts with the built-in profiles; `balanced` is the default.
    pub fn new(corpus: Corpus, index: InvertedIndex, scorers: ScorerSet, params: RankingParams) -> Self {
        let profiles = [BALANCED, BIOASQ_REFERENCE]
            .iter()
            .filter_map(|n| builtin_profile(n))
            .map(|p| (p.name, p.weights))
            .collect();
        Self {
            corpus_fingerprint: corpus_fingerprint(&corpus),
            index_fingerprint: index_fingerprint(&index),
            corpus,
            index,
            scorers,
            profiles,
            default_profile: BALANCED.into(),
            params,
        }
    }

    pub fn add_profile(&mut self, name: impl Into<String>, weights: FusionWeights, make_default: bool) {
        let name = name.into();
        if make_default {
            self.default_profile = name.clone();
        }
        self.profiles.insert(name, weights);
    }

    pub fn weights(&self, profile: Option<&str>) -> Result<FusionWeights> {
        let name = profile.unwrap_or(&self.default_profile);
        self.profiles.get(name).copied().ok_or_else(|| Error::Config(format!("unknown weights profile {name:?}")))
    }

    /// One query ranked into a predictions-file entry.
    pub fn search(&self, req: &SearchRequest<'_>) -> Result<Question> {
        if req.top_docs > MAX_RESULTS || req.top_snippets > MAX_RESULTS {
            return Err(Error::Config(format!("top_docs and top_snippets must be at most {MAX_RESULTS}")));
        }
        let weights = self.weights(req.profile)?;
        let params = RankingParams { top_docs: req.top_docs, top_snippets: req.top_snippets, ..self.params };
        let query = Query::new(req.query_id, req.query)?;
        let entry = rank(&query, &self.corpus, &self.index, &self.scorers, &weights, &params)?;
        Ok(Question::from_entry(&entry))
    }

    /// The serialized [`Pipeline::search`] answer.
    pub fn search_body(&self, req: &SearchRequest<'_>) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.search(req)?).expect("question serializes"))
    }

    pub fn rank_run(&self, queries: &QuerySet, weights: &FusionWeights) -> Result<RankedRun> {
        let entries = queries
            .entries()
            .iter()
            .map(|e| rank(&e.query, &self.corpus, &self.index, &self.scorers, weights, &self.params))
            .collect::<semir_core::Result<Vec<_>>>()?;
        Ok(RankedRun { entries })
    }
}

pub fn predictions(run: &RankedRun) -> QuestionsFile {
    QuestionsFile::from_run(run)
}
