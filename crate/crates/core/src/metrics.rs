//! BioASQ-style evaluation: precision, recall, F1, average precision, MAP and
//! GMAP over documents and snippets.
//!
//! Predictions are matched to gold items one-to-one: walking the ranked
//! predictions in order, each claims the unclaimed gold item it overlaps most
//! (earliest gold item on ties). A prediction is relevant iff it claimed one.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::corpus::{QuerySet, Snippet};
use crate::error::{Error, Result};
use crate::fusion::{RankedEntry, RankedRun};

pub const RESULT_LIMIT: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct MatchPolicy {
    /// Characters a predicted snippet must share with a gold snippet; at least 1.
    pub min_overlap: usize,
}

impl Default for MatchPolicy {
    fn default() -> Self {
        Self { min_overlap: 1 }
    }
}

impl MatchPolicy {
    pub fn validate(&self) -> Result<()> {
        if self.min_overlap == 0 {
            return Err(Error::InvalidParameter("min_overlap must be at least 1".into()));
        }
        Ok(())
    }

    /// Match strength of two snippets; zero means no match.
    pub fn snippet_strength(&self, pred: &Snippet, gold: &Snippet) -> usize {
        let overlap = pred.overlap(gold);
        if overlap >= self.min_overlap.max(1) {
            overlap
        } else {
            0
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ApDenominator {
    /// Number of gold items.
    #[default]
    Gold,
    /// `min(|gold|, 10)`, scoring only the first ten predictions.
    Capped,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub policy: MatchPolicy,
    pub denominator: ApDenominator,
    pub gmap_epsilon: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { policy: MatchPolicy::default(), denominator: ApDenominator::Gold, gmap_epsilon: 0.01 }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// For each prediction, the gold index it claimed.
pub fn greedy_matches<P, G>(pred: &[P], gold: &[G], strength: impl Fn(&P, &G) -> usize) -> Vec<Option<usize>> {
    let mut claimed = alloc::vec![false; gold.len()];
    pred.iter()
        .map(|p| {
            let mut best: Option<(usize, usize)> = None;
            for (g, item) in gold.iter().enumerate() {
                if claimed[g] {
                    continue;
                }
                let s = strength(p, item);
                if s > 0 && best.is_none_or(|(_, bs)| s > bs) {
                    best = Some((g, s));
                }
            }
            best.map(|(g, _)| {
                claimed[g] = true;
                g
            })
        })
        .collect()
}

pub fn precision_recall_f1<P, G>(pred: &[P], gold: &[G], strength: impl Fn(&P, &G) -> usize) -> Prf {
    let matched = greedy_matches(pred, gold, strength).iter().filter(|m| m.is_some()).count() as f64;
    let precision = if pred.is_empty() { 0.0 } else { matched / pred.len() as f64 };
    let recall = if gold.is_empty() { 0.0 } else { matched / gold.len() as f64 };
    let f1 = if precision + recall > 0.0 { 2.0 * precision * recall / (precision + recall) } else { 0.0 };
    Prf { precision, recall, f1 }
}

pub fn average_precision<P, G>(
    ranked: &[P],
    gold: &[G],
    strength: impl Fn(&P, &G) -> usize,
    denominator: ApDenominator,
) -> f64 {
    if gold.is_empty() {
        return 0.0;
    }
    let (ranked, denom) = match denominator {
        ApDenominator::Gold => (ranked, gold.len()),
        ApDenominator::Capped => (&ranked[..ranked.len().min(RESULT_LIMIT)], gold.len().min(RESULT_LIMIT)),
    };
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (k, m) in greedy_matches(ranked, gold, strength).iter().enumerate() {
        if m.is_some() {
            hits += 1;
            sum += hits as f64 / (k + 1) as f64;
        }
    }
    sum / denom as f64
}

pub fn doc_strength(pred: &String, gold: &String) -> usize {
    usize::from(pred == gold)
}

pub fn map(aps: &[f64]) -> Result<f64> {
    if aps.is_empty() {
        return Err(Error::EmptyApList);
    }
    Ok(aps.iter().sum::<f64>() / aps.len() as f64)
}

/// `exp(mean ln(ap + epsilon))`. Not clamped, so it reaches `1 + epsilon`
/// when every AP is 1.
pub fn gmap(aps: &[f64], epsilon: f64) -> Result<f64> {
    if aps.is_empty() {
        return Err(Error::EmptyApList);
    }
    if !(epsilon > 0.0) {
        return Err(Error::OutOfRange { what: "gmap epsilon", value: epsilon, expected: "> 0" });
    }
    let mean_log = aps.iter().map(|ap| libm::log(ap + epsilon)).sum::<f64>() / aps.len() as f64;
    Ok(libm::exp(mean_log))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub mean_precision: f64,
    pub mean_recall: f64,
    pub mean_f1: f64,
    pub map: f64,
    pub gmap: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub documents: MetricSummary,
    pub snippets: MetricSummary,
}

impl fmt::Display for EvalReport {
    /// Aligned table: one row for documents, one for snippets.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<10} {:>8} {:>8} {:>10} {:>8} {:>8}", "", "MPrec", "MRec", "F-Measure", "MAP", "GMAP")?;
        for (name, m) in [("documents", &self.documents), ("snippets", &self.snippets)] {
            writeln!(
                f,
                "{:<10} {:>8.4} {:>8.4} {:>10.4} {:>8.4} {:>8.4}",
                name, m.mean_precision, m.mean_recall, m.mean_f1, m.map, m.gmap
            )?;
        }
        Ok(())
    }
}

/// Ranked ids and snippets submitted for one query.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunQuery {
    pub query_id: String,
    pub documents: Vec<String>,
    pub snippets: Vec<Snippet>,
}

impl From<&RankedEntry> for RunQuery {
    fn from(e: &RankedEntry) -> Self {
        Self {
            query_id: e.query_id.clone(),
            documents: e.documents.iter().map(|d| d.doc_id.clone()).collect(),
            snippets: e.snippets.iter().map(|s| s.snippet.clone()).collect(),
        }
    }
}

pub fn run_queries(run: &RankedRun) -> Vec<RunQuery> {
    run.entries.iter().map(RunQuery::from).collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct QueryMetrics {
    pub documents: Prf,
    pub document_ap: f64,
    pub snippets: Prf,
    pub snippet_ap: f64,
}

pub fn evaluate_query(pred: &RunQuery, gold_docs: &[String], gold_snippets: &[Snippet], config: &EvalConfig) -> QueryMetrics {
    let snip = |p: &Snippet, g: &Snippet| config.policy.snippet_strength(p, g);
    QueryMetrics {
        documents: precision_recall_f1(&pred.documents, gold_docs, doc_strength),
        document_ap: average_precision(&pred.documents, gold_docs, doc_strength, config.denominator),
        snippets: precision_recall_f1(&pred.snippets, gold_snippets, snip),
        snippet_ap: average_precision(&pred.snippets, gold_snippets, snip, config.denominator),
    }
}

/// Averages over every gold query; gold queries absent from the run count
/// as empty submissions.
pub fn evaluate_run(run: &[RunQuery], gold: &QuerySet, config: &EvalConfig) -> Result<EvalReport> {
    config.policy.validate()?;
    let mut by_id: BTreeMap<&str, &RunQuery> = BTreeMap::new();
    for q in run {
        if gold.get(&q.query_id).is_none() {
            return Err(Error::UnknownRunQuery(q.query_id.clone()));
        }
        by_id.insert(q.query_id.as_str(), q);
    }
    if gold.is_empty() {
        return Err(Error::EmptyApList);
    }
    let empty = RunQuery::default();
    let mut per_query = Vec::with_capacity(gold.len());
    for entry in gold.entries() {
        let labels = entry.gold.as_ref().ok_or_else(|| Error::MissingGold(entry.query.query_id.clone()))?;
        let pred = by_id.get(entry.query.query_id.as_str()).copied().unwrap_or(&empty);
        per_query.push(evaluate_query(pred, &labels.doc_ids, &labels.snippets, config));
    }
    summarize(&per_query, config.gmap_epsilon)
}

pub fn summarize(per_query: &[QueryMetrics], gmap_epsilon: f64) -> Result<EvalReport> {
    let part = |prf: fn(&QueryMetrics) -> Prf, ap: fn(&QueryMetrics) -> f64| -> Result<MetricSummary> {
        let n = per_query.len() as f64;
        let aps: Vec<f64> = per_query.iter().map(ap).collect();
        Ok(MetricSummary {
            mean_precision: per_query.iter().map(|q| prf(q).precision).sum::<f64>() / n,
            mean_recall: per_query.iter().map(|q| prf(q).recall).sum::<f64>() / n,
            mean_f1: per_query.iter().map(|q| prf(q).f1).sum::<f64>() / n,
            map: map(&aps)?,
            gmap: gmap(&aps, gmap_epsilon)?,
        })
    };
    Ok(EvalReport {
        documents: part(|q| q.documents, |q| q.document_ap)?,
        snippets: part(|q| q.snippets, |q| q.snippet_ap)?,
    })
}
