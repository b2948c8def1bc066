use alloc::string::String;

use crate::scorers::ScorerKind;

pub type Result<T, E = Error> = core::result::Result<T, E>;

/// Errors raised by a perspective scorer.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ScoreError {
    #[error("scorer transport failure: {0}")]
    Transport(String),
    #[error("scorer protocol violation at pair {index}: {message}")]
    Protocol { index: usize, message: String },
    #[error("{kind} score {value} at pair {index} is outside the native range")]
    OutOfRange { kind: ScorerKind, index: usize, value: f64 },
    #[error("scorer timed out after {millis} ms")]
    Timeout { millis: u64 },
    #[error("no score available for query {query_id:?}, sentence {sentence_key:?}")]
    Missing { query_id: String, sentence_key: String },
    #[error("query and sentence must be non-empty (pair {index})")]
    EmptyInput { index: usize },
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("document at position {index} has an empty doc_id")]
    EmptyDocId { index: usize },
    #[error("duplicate doc_id {doc_id:?} at position {index}")]
    DuplicateDocId { doc_id: String, index: usize },
    #[error("query {query_id:?} has an empty body")]
    EmptyQuery { query_id: String },
    #[error("duplicate query_id {0:?}")]
    DuplicateQueryId(String),
    #[error("query {query_id:?} lists {count} {what}; at most 10 are allowed")]
    TooManyGold { query_id: String, what: &'static str, count: usize },
    #[error("query {query_id:?}: snippet references document {doc_id:?} missing from its document list")]
    SnippetDocumentNotListed { query_id: String, doc_id: String },
    #[error("invalid snippet in query {query_id:?}: {reason}")]
    InvalidSnippet { query_id: String, reason: String },
    #[error("dev_count {dev_count} must be smaller than the query count {total}")]
    DevCountTooLarge { dev_count: usize, total: usize },
    #[error("cannot build an index over an empty corpus")]
    EmptyCorpus,
    #[error("unknown document {0:?}")]
    UnknownDocument(String),
    #[error("{what} = {value} is out of range ({expected})")]
    OutOfRange { what: &'static str, value: f64, expected: &'static str },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("average-precision list is empty")]
    EmptyApList,
    #[error("run contains query {0:?} which is absent from the gold set")]
    UnknownRunQuery(String),
    #[error("query {0:?} has no gold labels")]
    MissingGold(String),
    #[error("grid over {dims} free parameters with step {step} is too large")]
    GridTooLarge { dims: usize, step: f64 },
    #[error("embedding vocabulary has {size} words; at least 6 are required")]
    VocabularyTooSmall { size: usize },
    #[error("word {0:?} is not in the embedding vocabulary")]
    UnknownWord(String),
    #[error("embedding for {token:?} has dimension {got}, expected {expected}")]
    DimensionMismatch { token: String, got: usize, expected: usize },
    #[error("embedding for {0:?} contains a non-finite value")]
    NonFiniteEmbedding(String),
    #[error("{path}: {message}")]
    Schema { path: String, message: String },
    #[error(transparent)]
    Score(#[from] ScoreError),
}
