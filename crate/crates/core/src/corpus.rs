//! Corpus and query-set data model.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::segment::Segmenter;

/// Part of a document a sentence or snippet offset refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Section {
    Title,
    Abstract,
}

impl Section {
    pub fn as_str(self) -> &'static str {
        match self {
            Section::Title => "title",
            Section::Abstract => "abstract",
        }
    }

    /// Parses a BioASQ section label. `sections.0` is the abstract body.
    pub fn parse(label: &str) -> Option<Self> {
        match label {
            "title" => Some(Section::Title),
            "abstract" | "sections.0" => Some(Section::Abstract),
            _ => None,
        }
    }
}

impl fmt::Display for Section {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Byte range of one sentence within `title + " " + abstract`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SentenceSpan {
    pub sent_index: usize,
    pub begin: usize,
    pub end: usize,
    pub section: Section,
}

/// A titled abstract with its segmented sentences.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    pub title: String,
    #[serde(rename = "abstract")]
    pub abstract_text: String,
    #[serde(skip)]
    pub sentences: Vec<SentenceSpan>,
}

impl Document {
    pub fn new(doc_id: impl Into<String>, title: impl Into<String>, abstract_text: impl Into<String>) -> Self {
        Self::with_segmenter(doc_id, title, abstract_text, &Segmenter::default())
    }

    pub fn with_segmenter(
        doc_id: impl Into<String>,
        title: impl Into<String>,
        abstract_text: impl Into<String>,
        segmenter: &Segmenter,
    ) -> Self {
        let mut doc = Document {
            doc_id: doc_id.into(),
            title: title.into(),
            abstract_text: abstract_text.into(),
            sentences: Vec::new(),
        };
        doc.resegment(segmenter);
        doc
    }

    pub fn resegment(&mut self, segmenter: &Segmenter) {
        let mut spans = segmenter.segment_section(&self.title, Section::Title, 0, 0);
        let next = spans.len();
        spans.extend(segmenter.segment_section(
            &self.abstract_text,
            Section::Abstract,
            self.abstract_offset(),
            next,
        ));
        self.sentences = spans;
    }

    /// Byte position of the abstract within the combined text.
    pub fn abstract_offset(&self) -> usize {
        self.title.len() + 1
    }

    /// `title + " " + abstract`, the text sentence spans index into.
    pub fn full_text(&self) -> String {
        let mut s = String::with_capacity(self.abstract_offset() + self.abstract_text.len());
        s.push_str(&self.title);
        s.push(' ');
        s.push_str(&self.abstract_text);
        s
    }

    pub fn section_text(&self, section: Section) -> &str {
        match section {
            Section::Title => &self.title,
            Section::Abstract => &self.abstract_text,
        }
    }

    pub fn sentence_text(&self, span: &SentenceSpan) -> &str {
        match span.section {
            Section::Title => &self.title[span.begin..span.end],
            Section::Abstract => {
                let off = self.abstract_offset();
                &self.abstract_text[span.begin - off..span.end - off]
            }
        }
    }

    pub fn sentence(&self, sent_index: usize) -> Option<&str> {
        self.sentences.get(sent_index).map(|s| self.sentence_text(s))
    }

    /// Character offsets of a sentence relative to the start of its section.
    pub fn section_char_offsets(&self, span: &SentenceSpan) -> (usize, usize) {
        let base = match span.section {
            Section::Title => 0,
            Section::Abstract => self.abstract_offset(),
        };
        let text = self.section_text(span.section);
        let begin = text[..span.begin - base].chars().count();
        let len = self.sentence_text(span).chars().count();
        (begin, begin + len)
    }

    /// The snippet a sentence is reported as.
    pub fn sentence_snippet(&self, span: &SentenceSpan) -> Snippet {
        let (begin, end) = self.section_char_offsets(span);
        Snippet {
            doc_id: self.doc_id.clone(),
            text: self.sentence_text(span).into(),
            begin_section: span.section,
            begin,
            end_section: span.section,
            end,
        }
    }

    pub fn section_char_len(&self, section: Section) -> usize {
        self.section_text(section).chars().count()
    }
}

/// An immutable collection of documents with unique ids.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Corpus {
    docs: Vec<Document>,
    by_id: BTreeMap<String, usize>,
}

impl Corpus {
    pub fn new(docs: Vec<Document>) -> Result<Self> {
        let mut by_id = BTreeMap::new();
        for (index, doc) in docs.iter().enumerate() {
            if doc.doc_id.is_empty() {
                return Err(Error::EmptyDocId { index });
            }
            if by_id.insert(doc.doc_id.clone(), index).is_some() {
                return Err(Error::DuplicateDocId { doc_id: doc.doc_id.clone(), index });
            }
        }
        Ok(Self { docs, by_id })
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn get(&self, doc_id: &str) -> Option<&Document> {
        self.by_id.get(doc_id).map(|&i| &self.docs[i])
    }

    pub fn position(&self, doc_id: &str) -> Option<usize> {
        self.by_id.get(doc_id).copied()
    }

    pub fn documents(&self) -> &[Document] {
        &self.docs
    }

    pub fn iter(&self) -> impl Iterator<Item = &Document> {
        self.docs.iter()
    }

    pub fn sentence_count(&self) -> usize {
        self.docs.iter().map(|d| d.sentences.len()).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Query {
    pub query_id: String,
    pub body: String,
}

impl Query {
    pub fn new(query_id: impl Into<String>, body: impl Into<String>) -> Result<Self> {
        let q = Query { query_id: query_id.into(), body: body.into() };
        if q.body.trim().is_empty() {
            return Err(Error::EmptyQuery { query_id: q.query_id });
        }
        Ok(q)
    }
}

/// A text span located by section-relative character offsets (end exclusive),
/// the unit BioASQ gold and prediction files exchange.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Snippet {
    pub doc_id: String,
    pub text: String,
    pub begin_section: Section,
    pub begin: usize,
    pub end_section: Section,
    pub end: usize,
}

impl Snippet {
    pub fn validate(&self) -> core::result::Result<(), String> {
        if self.end_section < self.begin_section {
            return Err(alloc::format!("snippet ends in {} before it begins in {}", self.end_section, self.begin_section));
        }
        if self.begin_section == self.end_section && self.end < self.begin {
            return Err(alloc::format!("end offset {} precedes begin offset {}", self.end, self.begin));
        }
        Ok(())
    }

    /// Validates offsets against the section lengths of `doc`.
    pub fn validate_against(&self, doc: &Document) -> core::result::Result<(), String> {
        self.validate()?;
        let begin_len = doc.section_char_len(self.begin_section);
        let end_len = doc.section_char_len(self.end_section);
        if self.begin > begin_len {
            return Err(alloc::format!(
                "begin offset {} exceeds {} length {}",
                self.begin, self.begin_section, begin_len
            ));
        }
        if self.end > end_len {
            return Err(alloc::format!("end offset {} exceeds {} length {}", self.end, self.end_section, end_len));
        }
        Ok(())
    }

    /// Number of characters shared with `other`, zero for different documents.
    pub fn overlap(&self, other: &Snippet) -> usize {
        if self.doc_id != other.doc_id {
            return 0;
        }
        [Section::Title, Section::Abstract]
            .into_iter()
            .map(|s| match (self.restrict(s), other.restrict(s)) {
                (Some((a0, a1)), Some((b0, b1))) => a1.min(b1).saturating_sub(a0.max(b0)),
                _ => 0,
            })
            .sum()
    }

    /// Portion of the snippet inside `section`; an open end is `usize::MAX`.
    fn restrict(&self, section: Section) -> Option<(usize, usize)> {
        if section < self.begin_section || section > self.end_section {
            return None;
        }
        let lo = if section == self.begin_section { self.begin } else { 0 };
        let hi = if section == self.end_section { self.end } else { usize::MAX };
        Some((lo, hi))
    }
}

/// Gold documents and snippets for one query, at most ten of each.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoldLabels {
    pub doc_ids: Vec<String>,
    pub snippets: Vec<Snippet>,
}

pub const GOLD_LIMIT: usize = 10;

impl GoldLabels {
    pub fn new(query_id: &str, doc_ids: Vec<String>, snippets: Vec<Snippet>) -> Result<Self> {
        if doc_ids.len() > GOLD_LIMIT {
            return Err(Error::TooManyGold { query_id: query_id.into(), what: "documents", count: doc_ids.len() });
        }
        if snippets.len() > GOLD_LIMIT {
            return Err(Error::TooManyGold { query_id: query_id.into(), what: "snippets", count: snippets.len() });
        }
        for s in &snippets {
            if !doc_ids.contains(&s.doc_id) {
                return Err(Error::SnippetDocumentNotListed { query_id: query_id.into(), doc_id: s.doc_id.clone() });
            }
            s.validate().map_err(|reason| Error::InvalidSnippet { query_id: query_id.into(), reason })?;
        }
        Ok(Self { doc_ids, snippets })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryEntry {
    pub query: Query,
    pub gold: Option<GoldLabels>,
}

/// Queries with optional gold labels; query ids are unique.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct QuerySet {
    entries: Vec<QueryEntry>,
}

impl QuerySet {
    pub fn new(entries: Vec<QueryEntry>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for e in &entries {
            if !seen.insert(e.query.query_id.as_str()) {
                return Err(Error::DuplicateQueryId(e.query.query_id.clone()));
            }
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[QueryEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, query_id: &str) -> Option<&QueryEntry> {
        self.entries.iter().find(|e| e.query.query_id == query_id)
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.query.query_id.as_str())
    }
}

/// Splits `qs` into `(train, dev)` with `dev_count` queries chosen by a seeded
/// shuffle. Both halves keep the original query order.
pub fn split_train_dev(qs: &QuerySet, seed: u64, dev_count: usize) -> Result<(QuerySet, QuerySet)> {
    let total = qs.len();
    if dev_count >= total {
        return Err(Error::DevCountTooLarge { dev_count, total });
    }
    let mut order: Vec<usize> = (0..total).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let dev: BTreeSet<usize> = order[..dev_count].iter().copied().collect();

    let (mut train, mut dev_entries) = (Vec::new(), Vec::new());
    for (i, e) in qs.entries.iter().enumerate() {
        if dev.contains(&i) {
            dev_entries.push(e.clone());
        } else {
            train.push(e.clone());
        }
    }
    Ok((QuerySet { entries: train }, QuerySet { entries: dev_entries }))
}
