//! File formats. Every writer goes through [`write_atomic`], so a failed
//! command never leaves a partial output file behind.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use semir_core::bioasq::QuestionsFile;
use semir_core::corpus::{Corpus, Document, QuerySet};
use semir_core::lexindex::InvertedIndex;
use semir_core::metrics::RunQuery;
use semir_core::scorers::{EmbeddingTable, ScoreTable, ScorerKind};
use semir_core::siagen::{QascRow, SiaSample};

use crate::error::{Error, Result};

pub fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Writes through a sibling temporary file and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let name = path.file_name().ok_or_else(|| Error::Config(format!("{} is not a file path", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if let Err(e) = result {
        let _ = fs::remove_file(&tmp);
        return Err(Error::io(path, e));
    }
    Ok(())
}

/// Non-blank lines with their 1-based numbers.
fn lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().map(|(i, l)| (i + 1, l)).filter(|(_, l)| !l.trim().is_empty())
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse { path: path.to_path_buf(), line, message: message.into() }
}

pub fn from_json_str<T: DeserializeOwned>(path: &Path, text: &str) -> Result<T> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| Error::Json {
        path: path.to_path_buf(),
        json_path: e.path().to_string(),
        message: e.inner().to_string(),
    })
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    from_json_str(path, &read_to_string(path)?)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Config(e.to_string()))?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let text = read_to_string(path)?;
    lines(&text)
        .map(|(n, line)| {
            let de = &mut serde_json::Deserializer::from_str(line);
            serde_path_to_error::deserialize(de).map_err(|e| {
                let at = e.path().to_string();
                let msg = if at == "." { e.inner().to_string() } else { format!("at `{at}`: {}", e.inner()) };
                parse_err(path, n, msg)
            })
        })
        .collect()
}

fn write_jsonl<T: Serialize>(path: &Path, items: impl IntoIterator<Item = T>) -> Result<()> {
    let mut out = String::new();
    for item in items {
        out.push_str(&serde_json::to_string(&item).map_err(|e| Error::Config(e.to_string()))?);
        out.push('\n');
    }
    write_atomic(path, out.as_bytes())
}

#[derive(Debug, Deserialize, Serialize)]
struct CorpusRecord {
    doc_id: String,
    #[serde(default)]
    title: String,
    #[serde(rename = "abstract", default)]
    abstract_text: String,
}

/// One `{"doc_id", "title", "abstract"}` object per line.
pub fn read_corpus_jsonl(path: &Path) -> Result<Corpus> {
    let records: Vec<CorpusRecord> = read_jsonl(path)?;
    let docs = records.into_iter().map(|r| Document::new(r.doc_id, r.title, r.abstract_text)).collect();
    Corpus::new(docs).map_err(|source| Error::Data { path: path.to_path_buf(), source })
}

pub fn write_corpus_jsonl(path: &Path, corpus: &Corpus) -> Result<()> {
    write_jsonl(
        path,
        corpus.iter().map(|d| CorpusRecord {
            doc_id: d.doc_id.clone(),
            title: d.title.clone(),
            abstract_text: d.abstract_text.clone(),
        }),
    )
}

fn schema_error(path: &Path, e: semir_core::Error) -> Error {
    match e {
        semir_core::Error::Schema { path: json_path, message } => {
            Error::Json { path: path.to_path_buf(), json_path, message }
        }
        source => Error::Data { path: path.to_path_buf(), source },
    }
}

pub fn read_questions(path: &Path) -> Result<QuestionsFile> {
    read_json(path)
}

pub fn write_questions(path: &Path, file: &QuestionsFile) -> Result<()> {
    write_json(path, file)
}

/// A gold file as a query set with labels.
pub fn read_gold(path: &Path) -> Result<QuerySet> {
    read_questions(path)?.to_query_set().map_err(|e| schema_error(path, e))
}

pub fn read_predictions(path: &Path) -> Result<Vec<RunQuery>> {
    read_questions(path)?.to_run_queries().map_err(|e| schema_error(path, e))
}

/// Whitespace-separated `token v1 … vd` lines. A leading `count dim` header
/// line, as written by word2vec, is skipped.
pub fn read_embeddings(path: &Path) -> Result<EmbeddingTable> {
    let text = read_to_string(path)?;
    let mut table: Option<EmbeddingTable> = None;
    for (n, line) in lines(&text) {
        let mut fields = line.split_whitespace();
        let token = fields.next().unwrap_or_default();
        let values: Vec<&str> = fields.collect();
        if table.is_none() && values.len() == 1 && token.parse::<usize>().is_ok() && values[0].parse::<usize>().is_ok() {
            continue;
        }
        let vector = values
            .iter()
            .map(|v| v.parse::<f64>().map_err(|_| parse_err(path, n, format!("bad number {v:?}"))))
            .collect::<Result<Vec<_>>>()?;
        if vector.is_empty() {
            return Err(parse_err(path, n, "no vector components"));
        }
        let t = table.get_or_insert_with(|| EmbeddingTable::new(vector.len()));
        t.insert(token, vector).map_err(|e| parse_err(path, n, e.to_string()))?;
    }
    Ok(table.unwrap_or_default())
}

/// `query_id \t sentence_key \t score` lines; `#` comments and a
/// `query_id` header are skipped.
pub fn read_score_table(path: &Path, kind: ScorerKind, id: &str) -> Result<ScoreTable> {
    let text = read_to_string(path)?;
    let mut table = ScoreTable::new(id, kind);
    for (n, line) in lines(&text) {
        if line.starts_with('#') || line.starts_with("query_id\t") {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        let [q, s, v] = cols[..] else {
            return Err(parse_err(path, n, format!("expected 3 tab-separated columns, found {}", cols.len())));
        };
        let raw: f64 = v.trim().parse().map_err(|_| parse_err(path, n, format!("bad score {v:?}")))?;
        table.insert(q, s, raw).map_err(|e| parse_err(path, n, e.to_string()))?;
    }
    Ok(table)
}

pub const INDEX_FORMAT_VERSION: u32 = 1;

#[derive(Serialize)]
struct IndexSnapshotRef<'a> {
    format_version: u32,
    index: &'a InvertedIndex,
}

#[derive(Deserialize)]
struct IndexSnapshot {
    format_version: u32,
    index: InvertedIndex,
}

pub fn write_index(path: &Path, index: &InvertedIndex) -> Result<()> {
    let bytes = serde_json::to_vec(&IndexSnapshotRef { format_version: INDEX_FORMAT_VERSION, index })
        .map_err(|e| Error::Config(e.to_string()))?;
    write_atomic(path, &bytes)
}

pub fn read_index(path: &Path) -> Result<InvertedIndex> {
    let snap: IndexSnapshot = read_json(path)?;
    if snap.format_version != INDEX_FORMAT_VERSION {
        return Err(Error::FormatVersion { what: "index", found: snap.format_version, expected: INDEX_FORMAT_VERSION });
    }
    let mut index = snap.index;
    index.rebuild_lookup();
    index.validate().map_err(|source| Error::Data { path: path.to_path_buf(), source })?;
    Ok(index)
}

pub fn read_qasc_jsonl(path: &Path) -> Result<Vec<QascRow>> {
    let rows: Vec<QascRow> = read_jsonl(path)?;
    for (i, r) in rows.iter().enumerate() {
        r.validate().map_err(|m| parse_err(path, i + 1, m))?;
    }
    Ok(rows)
}

fn tsv_field(s: &str) -> String {
    s.replace(['\t', '\n', '\r'], " ")
}

pub fn sia_tsv(samples: &[SiaSample]) -> String {
    let mut out = String::from("query\tsentence\tlabel\tprovenance\n");
    for s in samples {
        out.push_str(&format!("{}\t{}\t{}\t{}\n", tsv_field(&s.query), tsv_field(&s.sentence), s.label, s.provenance.as_str()));
    }
    out
}

pub fn write_sia_tsv(path: &Path, samples: &[SiaSample]) -> Result<()> {
    write_atomic(path, sia_tsv(samples).as_bytes())
}

pub fn write_sia_jsonl(path: &Path, samples: &[SiaSample]) -> Result<()> {
    write_jsonl(path, samples)
}

/// One term per line; `#` starts a comment line.
pub fn read_term_list(path: &Path) -> Result<Vec<String>> {
    let text = read_to_string(path)?;
    Ok(lines(&text).map(|(_, l)| l.trim()).filter(|l| !l.starts_with('#')).map(String::from).collect())
}
