//! HTTP gateway.
//!
//! - `GET /bert-ir` (alias `/rank`): two-perspective ranking of posted text
//!   or of a named sentence repository.
//! - `GET /search`: the full pipeline for one query, answered as one entry of
//!   a predictions file.
//! - `GET /health`: liveness plus fingerprints of the loaded artifacts.
//!
//! Handlers read an immutable snapshot of the loaded artifacts; a reload
//! swaps the whole snapshot at once.

// handlers return the finished error response as their `Err`
#![allow(clippy::result_large_err)]

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::{Arc, RwLock};
use std::time::Instant;

use axum::extract::{Query, State};
use axum::http::{HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use serde::{Deserialize, Serialize};

use semir_core::fusion::{medic_rank, MedicItem, DEFAULT_MEDIC_ALPHA, MAX_RESULTS};
use semir_core::scorers::ScorerSet;
use semir_core::segment::Segmenter;

use crate::error::Result;
use crate::io;
use crate::pipeline::{Pipeline, SearchRequest};

pub const RESPONSE_VERSION: u32 = 1;
pub const DEFAULT_REPOSITORY: &str = "handbook";
pub const DEFAULT_TOPN: usize = 3;
pub const ELAPSED_HEADER: &str = "x-elapsed-ms";

/// A named list of sentences the Medic endpoint can rank.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Repository {
    pub name: String,
    pub sentences: Vec<String>,
}

impl Repository {
    pub fn from_text(name: impl Into<String>, text: &str) -> Self {
        Self { name: name.into(), sentences: split_sentences(text) }
    }

    pub fn load(name: impl Into<String>, path: &Path) -> Result<Self> {
        Ok(Self::from_text(name, &io::read_to_string(path)?))
    }
}

pub fn split_sentences(text: &str) -> Vec<String> {
    Segmenter::default().boundaries(text).into_iter().map(|(b, e)| text[b..e].to_string()).collect()
}

/// Everything a request may read.
pub struct Loaded {
    /// Scorers for `/bert-ir`; only relevance and STS are used.
    pub medic_scorers: ScorerSet,
    pub repositories: BTreeMap<String, Repository>,
    pub pipeline: Option<Arc<Pipeline>>,
}

pub struct AppState {
    loaded: RwLock<Arc<Loaded>>,
}

impl AppState {
    pub fn new(loaded: Loaded) -> Arc<Self> {
        Arc::new(Self { loaded: RwLock::new(Arc::new(loaded)) })
    }

    pub fn snapshot(&self) -> Arc<Loaded> {
        self.loaded.read().unwrap_or_else(|e| e.into_inner()).clone()
    }

    /// Replaces all loaded artifacts; in-flight requests keep the old snapshot.
    pub fn swap(&self, loaded: Loaded) {
        *self.loaded.write().unwrap_or_else(|e| e.into_inner()) = Arc::new(loaded);
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/bert-ir", get(bert_ir))
        .route("/rank", get(bert_ir))
        .route("/search", get(search))
        .route("/health", get(health))
        .with_state(state)
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct ApiError {
    pub code: String,
    pub message: String,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct ErrorBody {
    pub error: ApiError,
}

fn error(status: StatusCode, code: &str, message: impl Into<String>) -> Response {
    (status, Json(ErrorBody { error: ApiError { code: code.into(), message: message.into() } })).into_response()
}

/// First value of each parameter, already percent-decoded.
fn first_values(pairs: Vec<(String, String)>) -> BTreeMap<String, String> {
    let mut map = BTreeMap::new();
    for (k, v) in pairs {
        map.entry(k).or_insert(v);
    }
    map
}

fn parse_param<T: std::str::FromStr>(params: &BTreeMap<String, String>, name: &str) -> Result<Option<T>, Response> {
    match params.get(name) {
        None => Ok(None),
        Some(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| error(StatusCode::BAD_REQUEST, &format!("invalid_{name}"), format!("{name}={v:?} is not valid"))),
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ItemSource {
    /// `"request"` for posted text, otherwise the repository name.
    pub origin: String,
    pub sent_index: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct MedicResponseItem {
    pub sentence: String,
    pub score: f64,
    pub relevance: f64,
    pub sts: f64,
    pub context_before: Option<String>,
    pub context_after: Option<String>,
    pub source: ItemSource,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ScorerIds {
    pub relevance: String,
    pub sts: String,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct MedicResponse {
    pub version: u32,
    pub query: String,
    pub alpha: f64,
    pub topn: usize,
    pub repository: Option<String>,
    pub scorers: ScorerIds,
    pub items: Vec<MedicResponseItem>,
}

/// Response body for a Medic request, or the error response.
pub fn medic(loaded: &Loaded, params: &BTreeMap<String, String>) -> Result<MedicResponse, Response> {
    let query = match params.get("query") {
        Some(q) if !q.trim().is_empty() => q.clone(),
        _ => return Err(error(StatusCode::BAD_REQUEST, "missing_query", "the query parameter is required")),
    };
    let alpha: f64 = parse_param(params, "alpha")?.unwrap_or(DEFAULT_MEDIC_ALPHA);
    if !(0.0..=1.0).contains(&alpha) {
        return Err(error(StatusCode::BAD_REQUEST, "invalid_alpha", format!("alpha={alpha} is outside [0, 1]")));
    }
    let topn: usize = parse_param(params, "topn")?.unwrap_or(DEFAULT_TOPN);
    if topn < 1 {
        return Err(error(StatusCode::BAD_REQUEST, "invalid_topn", "topn must be at least 1"));
    }

    let posted;
    let (sentences, origin, repository) = match params.get("sentences").filter(|s| !s.trim().is_empty()) {
        Some(text) => {
            posted = split_sentences(text);
            (&posted, "request".to_string(), None)
        }
        None => {
            let name = params.get("repository").map_or(DEFAULT_REPOSITORY, String::as_str);
            match loaded.repositories.get(name) {
                Some(r) => (&r.sentences, r.name.clone(), Some(r.name.clone())),
                None => return Err(error(StatusCode::NOT_FOUND, "unknown_repository", format!("no repository named {name:?}"))),
            }
        }
    };

    let scorers = &loaded.medic_scorers;
    let ranked = medic_rank(&query, sentences, topn, alpha, &*scorers.relevance, &*scorers.sts, &origin)
        .map_err(|e| error(StatusCode::INTERNAL_SERVER_ERROR, "scoring_failed", e.to_string()))?;
    Ok(MedicResponse {
        version: RESPONSE_VERSION,
        query,
        alpha,
        topn,
        repository,
        scorers: ScorerIds {
            relevance: scorers.relevance.scorer_id().into(),
            sts: scorers.sts.scorer_id().into(),
        },
        items: ranked.into_iter().map(|item| response_item(item, &origin)).collect(),
    })
}

fn response_item(item: MedicItem, origin: &str) -> MedicResponseItem {
    MedicResponseItem {
        sentence: item.sentence,
        score: item.score,
        relevance: item.relevance,
        sts: item.sts,
        context_before: item.context_before,
        context_after: item.context_after,
        source: ItemSource { origin: origin.into(), sent_index: item.index },
    }
}

fn with_elapsed(mut response: Response, started: Instant) -> Response {
    let ms = started.elapsed().as_millis().to_string();
    if let Ok(v) = HeaderValue::from_str(&ms) {
        response.headers_mut().insert(ELAPSED_HEADER, v);
    }
    response
}

async fn bert_ir(State(state): State<Arc<AppState>>, Query(pairs): Query<Vec<(String, String)>>) -> Response {
    let started = Instant::now();
    let loaded = state.snapshot();
    let params = first_values(pairs);
    let result = tokio::task::spawn_blocking(move || medic(&loaded, &params).map(Json)).await;
    let response = match result {
        Ok(Ok(body)) => body.into_response(),
        Ok(Err(resp)) => resp,
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()),
    };
    with_elapsed(response, started)
}

async fn search(State(state): State<Arc<AppState>>, Query(pairs): Query<Vec<(String, String)>>) -> Response {
    let started = Instant::now();
    let Some(pipeline) = state.snapshot().pipeline.clone() else {
        return error(StatusCode::SERVICE_UNAVAILABLE, "no_index", "no index is loaded");
    };
    let params = first_values(pairs);
    let run = move || -> Result<String, Response> {
        let query = match params.get("query") {
            Some(q) if !q.trim().is_empty() => q.as_str(),
            _ => return Err(error(StatusCode::BAD_REQUEST, "missing_query", "the query parameter is required")),
        };
        let top_docs: usize = parse_param(&params, "top_docs")?.unwrap_or(MAX_RESULTS);
        let top_snippets: usize = parse_param(&params, "top_snippets")?.unwrap_or(MAX_RESULTS);
        if top_docs > MAX_RESULTS || top_snippets > MAX_RESULTS {
            return Err(error(StatusCode::BAD_REQUEST, "invalid_limit", format!("top_docs and top_snippets are capped at {MAX_RESULTS}")));
        }
        let profile = params.get("profile").map(String::as_str);
        if let Err(e) = pipeline.weights(profile) {
            return Err(error(StatusCode::NOT_FOUND, "unknown_profile", e.to_string()));
        }
        let req = SearchRequest {
            query_id: params.get("id").map_or("search", String::as_str),
            query,
            top_docs,
            top_snippets,
            profile,
        };
        pipeline.search_body(&req).map_err(|e| error(StatusCode::INTERNAL_SERVER_ERROR, "search_failed", e.to_string()))
    };
    let response = match tokio::task::spawn_blocking(run).await {
        Ok(Ok(body)) => ([(axum::http::header::CONTENT_TYPE, "application/json")], body).into_response(),
        Ok(Err(resp)) => resp,
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()),
    };
    with_elapsed(response, started)
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Health {
    pub status: String,
    pub index: Option<String>,
    pub corpus: Option<String>,
    pub repositories: Vec<String>,
}

pub fn health_body(loaded: &Loaded) -> Health {
    Health {
        status: "ok".into(),
        index: loaded.pipeline.as_ref().map(|p| p.index_fingerprint.clone()),
        corpus: loaded.pipeline.as_ref().map(|p| p.corpus_fingerprint.clone()),
        repositories: loaded.repositories.keys().cloned().collect(),
    }
}

async fn health(State(state): State<Arc<AppState>>) -> Json<Health> {
    Json(health_body(&state.snapshot()))
}
