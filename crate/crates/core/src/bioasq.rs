//! The BioASQ questions schema shared by gold and prediction files.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, GoldLabels, Query, QueryEntry, QuerySet, Section, Snippet};
use crate::error::{Error, Result};
use crate::fusion::{RankedEntry, RankedRun};
use crate::metrics::RunQuery;

pub const PUBMED_URL_PREFIX: &str = "http://www.ncbi.nlm.nih.gov/pubmed/";

pub fn doc_url(doc_id: &str) -> String {
    format!("{PUBMED_URL_PREFIX}{doc_id}")
}

/// The last path segment of a document URL; a bare id is returned as is.
pub fn doc_id_from_url(url: &str) -> Option<&str> {
    let id = url.trim_end_matches('/').rsplit('/').next()?;
    (!id.is_empty()).then_some(id)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SnippetRecord {
    pub document: String,
    pub text: String,
    #[serde(rename = "offsetInBeginSection")]
    pub offset_in_begin_section: usize,
    #[serde(rename = "offsetInEndSection")]
    pub offset_in_end_section: usize,
    #[serde(rename = "beginSection")]
    pub begin_section: String,
    #[serde(rename = "endSection")]
    pub end_section: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Question {
    pub id: String,
    pub body: String,
    #[serde(default)]
    pub documents: Vec<String>,
    #[serde(default)]
    pub snippets: Vec<SnippetRecord>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionsFile {
    pub questions: Vec<Question>,
}

fn schema_err(path: String, message: impl Into<String>) -> Error {
    Error::Schema { path, message: message.into() }
}

impl SnippetRecord {
    pub fn from_snippet(s: &Snippet) -> Self {
        Self {
            document: doc_url(&s.doc_id),
            text: s.text.clone(),
            offset_in_begin_section: s.begin,
            offset_in_end_section: s.end,
            begin_section: s.begin_section.as_str().into(),
            end_section: s.end_section.as_str().into(),
        }
    }

    /// `path` locates the record in diagnostics.
    pub fn to_snippet(&self, path: &str) -> Result<Snippet> {
        let doc_id = doc_id_from_url(&self.document)
            .ok_or_else(|| schema_err(format!("{path}.document"), "no document id in URL"))?;
        let section = |label: &str, field: &str| {
            Section::parse(label).ok_or_else(|| schema_err(format!("{path}.{field}"), format!("unknown section {label:?}")))
        };
        let snippet = Snippet {
            doc_id: doc_id.into(),
            text: self.text.clone(),
            begin_section: section(&self.begin_section, "beginSection")?,
            begin: self.offset_in_begin_section,
            end_section: section(&self.end_section, "endSection")?,
            end: self.offset_in_end_section,
        };
        snippet.validate().map_err(|m| schema_err(path.into(), m))?;
        Ok(snippet)
    }
}

impl Question {
    pub fn from_entry(entry: &RankedEntry) -> Self {
        Self {
            id: entry.query_id.clone(),
            body: entry.body.clone(),
            documents: entry.documents.iter().map(|d| doc_url(&d.doc_id)).collect(),
            snippets: entry.snippets.iter().map(|s| SnippetRecord::from_snippet(&s.snippet)).collect(),
        }
    }

    fn parts(&self, path: &str) -> Result<(Vec<String>, Vec<Snippet>)> {
        let docs = self
            .documents
            .iter()
            .enumerate()
            .map(|(i, u)| {
                doc_id_from_url(u)
                    .map(String::from)
                    .ok_or_else(|| schema_err(format!("{path}.documents[{i}]"), "no document id in URL"))
            })
            .collect::<Result<Vec<_>>>()?;
        let snippets = self
            .snippets
            .iter()
            .enumerate()
            .map(|(i, s)| s.to_snippet(&format!("{path}.snippets[{i}]")))
            .collect::<Result<Vec<_>>>()?;
        Ok((docs, snippets))
    }
}

impl QuestionsFile {
    pub fn from_run(run: &RankedRun) -> Self {
        Self { questions: run.entries.iter().map(Question::from_entry).collect() }
    }

    pub fn from_run_queries(run: &[RunQuery], bodies: impl Fn(&str) -> String) -> Self {
        Self {
            questions: run
                .iter()
                .map(|q| Question {
                    id: q.query_id.clone(),
                    body: bodies(&q.query_id),
                    documents: q.documents.iter().map(|d| doc_url(d)).collect(),
                    snippets: q.snippets.iter().map(SnippetRecord::from_snippet).collect(),
                })
                .collect(),
        }
    }

    /// Gold labels as a query set. Lists longer than ten are rejected.
    pub fn to_query_set(&self) -> Result<QuerySet> {
        let entries = self
            .questions
            .iter()
            .enumerate()
            .map(|(i, q)| {
                let path = format!("questions[{i}]");
                let (docs, snippets) = q.parts(&path)?;
                let query = Query::new(q.id.clone(), q.body.clone())
                    .map_err(|e| schema_err(format!("{path}.body"), format!("{e}")))?;
                let gold = GoldLabels::new(&q.id, docs, snippets).map_err(|e| schema_err(path, format!("{e}")))?;
                Ok(QueryEntry { query, gold: Some(gold) })
            })
            .collect::<Result<Vec<_>>>()?;
        QuerySet::new(entries)
    }

    pub fn from_query_set(qs: &QuerySet) -> Self {
        Self {
            questions: qs
                .entries()
                .iter()
                .map(|e| {
                    let (docs, snips) = e.gold.as_ref().map_or((&[][..], &[][..]), |g| (&g.doc_ids[..], &g.snippets[..]));
                    Question {
                        id: e.query.query_id.clone(),
                        body: e.query.body.clone(),
                        documents: docs.iter().map(|d| doc_url(d)).collect(),
                        snippets: snips.iter().map(SnippetRecord::from_snippet).collect(),
                    }
                })
                .collect(),
        }
    }

    /// Predictions as submitted runs; lists are not truncated.
    pub fn to_run_queries(&self) -> Result<Vec<RunQuery>> {
        self.questions
            .iter()
            .enumerate()
            .map(|(i, q)| {
                let (documents, snippets) = q.parts(&format!("questions[{i}]"))?;
                Ok(RunQuery { query_id: q.id.clone(), documents, snippets })
            })
            .collect()
    }

    /// Checks that every snippet names a corpus document and lies within it.
    pub fn validate_against(&self, corpus: &Corpus) -> Result<()> {
        for (i, q) in self.questions.iter().enumerate() {
            for (j, s) in q.snippets.iter().enumerate() {
                let path = format!("questions[{i}].snippets[{j}]");
                let snippet = s.to_snippet(&path)?;
                let doc = corpus.get(&snippet.doc_id).ok_or_else(|| Error::UnknownDocument(snippet.doc_id.clone()))?;
                snippet.validate_against(doc).map_err(|m| schema_err(path, m))?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Document;
    use alloc::vec;

    fn record(doc: &str, b: usize, e: usize) -> SnippetRecord {
        SnippetRecord {
            document: doc_url(doc),
            text: "t".into(),
            offset_in_begin_section: b,
            offset_in_end_section: e,
            begin_section: "sections.0".into(),
            end_section: "sections.0".into(),
        }
    }

    #[test]
    fn url_mapping() {
        assert!(doc_url("12345").ends_with("/pubmed/12345"));
        assert_eq!(doc_id_from_url("http://www.ncbi.nlm.nih.gov/pubmed/12345"), Some("12345"));
        assert_eq!(doc_id_from_url("https://pubmed.ncbi.nlm.nih.gov/999/"), Some("999"));
        assert_eq!(doc_id_from_url("777"), Some("777"));
        assert_eq!(doc_id_from_url(""), None);
    }

    #[test]
    fn question_with_two_docs_three_snippets() {
        let file = QuestionsFile {
            questions: vec![Question {
                id: "q1".into(),
                body: "What is aspirin?".into(),
                documents: vec![doc_url("1"), doc_url("2")],
                snippets: vec![record("1", 0, 3), record("2", 4, 9), record("1", 5, 8)],
            }],
        };
        let qs = file.to_query_set().unwrap();
        let gold = qs.entries()[0].gold.as_ref().unwrap();
        assert_eq!(gold.doc_ids, ["1", "2"]);
        assert_eq!(gold.snippets.len(), 3);
        assert_eq!(gold.snippets[1].begin_section, Section::Abstract);
    }

    #[test]
    fn bad_section_reports_path() {
        let mut r = record("1", 0, 3);
        r.end_section = "sections.7".into();
        let file = QuestionsFile {
            questions: vec![Question { id: "q".into(), body: "b".into(), documents: vec![doc_url("1")], snippets: vec![r] }],
        };
        match file.to_query_set() {
            Err(Error::Schema { path, .. }) => assert_eq!(path, "questions[0].snippets[0].endSection"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn out_of_bounds_snippet_fails_corpus_validation() {
        let corpus = Corpus::new(vec![Document::new("1", "T", "Short.")]).unwrap();
        let file = QuestionsFile {
            questions: vec![Question { id: "q".into(), body: "b".into(), documents: vec![doc_url("1")], snippets: vec![record("1", 0, 50)] }],
        };
        assert!(file.validate_against(&corpus).is_err());
        let ok = QuestionsFile {
            questions: vec![Question { id: "q".into(), body: "b".into(), documents: vec![doc_url("1")], snippets: vec![record("1", 0, 6)] }],
        };
        assert!(ok.validate_against(&corpus).is_ok());
    }

    #[test]
    fn query_set_round_trip() {
        let file = QuestionsFile {
            questions: vec![Question {
                id: "q1".into(),
                body: "b".into(),
                documents: vec![doc_url("1")],
                snippets: vec![SnippetRecord { begin_section: "abstract".into(), end_section: "abstract".into(), ..record("1", 1, 2) }],
            }],
        };
        assert_eq!(QuestionsFile::from_query_set(&file.to_query_set().unwrap()), file);
    }
}
