//! Synthetic fixtures and independently coded oracles shared by the
//! integration tests and the acceptance suite.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use semir_core::corpus::{Corpus, Document, GoldLabels, Query, QueryEntry, QuerySet, Section, Snippet};
use semir_core::fusion::{fuse, CandidatePool, FusionWeights, PooledDocument, PooledSentence, RankingParams};
use semir_core::lexindex::is_stopword;
use semir_core::scorers::{EmbeddingTable, PerspectiveScore, ScorerKind};
use semir_core::siagen::QascRow;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

// ---- vocabulary and corpora ----

const ONSETS: [&str; 14] = ["b", "c", "d", "f", "g", "k", "l", "m", "n", "p", "r", "t", "v", "z"];
const NUCLEI: [&str; 5] = ["a", "e", "i", "o", "u"];
const CODAS: [&str; 5] = ["", "n", "r", "l", "x"];

/// `n` distinct pronounceable lowercase words; none is a stopword or ends in `s`.
pub fn vocabulary(n: usize) -> Vec<String> {
    let mut words = Vec::with_capacity(n);
    'outer: for o1 in ONSETS {
        for n1 in NUCLEI {
            for o2 in ONSETS {
                for n2 in NUCLEI {
                    for c in CODAS {
                        if words.len() == n {
                            break 'outer;
                        }
                        let w = format!("{o1}{n1}{o2}{n2}{c}");
                        if !is_stopword(&w) {
                            words.push(w);
                        }
                    }
                }
            }
        }
    }
    assert_eq!(words.len(), n, "vocabulary too small");
    words
}

/// Index skewed toward the front, so word frequencies are uneven.
fn skewed(rng: &mut ChaCha8Rng, n: usize) -> usize {
    let u: f64 = rng.random();
    ((u * u * n as f64) as usize).min(n - 1)
}

fn capitalize(w: &str) -> String {
    let mut c = w.chars();
    c.next().map(|f| f.to_uppercase().chain(c).collect()).unwrap_or_default()
}

pub fn random_sentence(rng: &mut ChaCha8Rng, vocab: &[String], len: usize) -> String {
    let words: Vec<String> = (0..len).map(|_| vocab[skewed(rng, vocab.len())].clone()).collect();
    format!("{} {}.", capitalize(&words[0]), words[1..].join(" "))
}

pub fn doc_id(i: usize) -> String {
    (30_000_000 + 7 * i).to_string()
}

pub fn synthetic_corpus(n_docs: usize, vocab_size: usize, seed: u64) -> Corpus {
    let vocab = vocabulary(vocab_size);
    let mut rng = rng(seed);
    let docs = (0..n_docs)
        .map(|i| {
            let title_len = rng.random_range(3..8);
            let title = random_sentence(&mut rng, &vocab, title_len);
            let n_sent = rng.random_range(1..7);
            let abstract_text: Vec<String> =
                (0..n_sent).map(|_| { let len = rng.random_range(4..14); random_sentence(&mut rng, &vocab, len) }).collect();
            Document::new(doc_id(i), title, abstract_text.join(" "))
        })
        .collect();
    Corpus::new(docs).expect("distinct ids")
}

/// Queries built from words of one target sentence; gold is that sentence
/// (plus sometimes a neighbor) and its document (plus sometimes others).
pub fn gold_queries(corpus: &Corpus, n: usize, seed: u64) -> QuerySet {
    let mut rng = rng(seed);
    let docs = corpus.documents();
    let entries = (0..n)
        .map(|k| {
            let doc = &docs[rng.random_range(0..docs.len())];
            let span = &doc.sentences[rng.random_range(0..doc.sentences.len())];
            let words: Vec<String> = doc.sentence_text(span).split(|c: char| !c.is_alphanumeric())
                .filter(|w| !w.is_empty())
                .map(str::to_lowercase)
                .collect();
            let body: Vec<&str> = (0..3.min(words.len())).map(|_| words[rng.random_range(0..words.len())].as_str()).collect();
            let mut doc_ids = vec![doc.doc_id.clone()];
            for _ in 0..rng.random_range(0..3) {
                let other = &docs[rng.random_range(0..docs.len())].doc_id;
                if !doc_ids.contains(other) {
                    doc_ids.push(other.clone());
                }
            }
            let mut snippets = vec![doc.sentence_snippet(span)];
            if let Some(next) = doc.sentences.get(span.sent_index + 1) {
                if rng.random_bool(0.3) {
                    snippets.push(doc.sentence_snippet(next));
                }
            }
            let id = format!("q{k:03}");
            let gold = GoldLabels::new(&id, doc_ids, snippets).expect("valid gold");
            QueryEntry { query: Query::new(id, body.join(" ")).expect("non-empty"), gold: Some(gold) }
        })
        .collect();
    QuerySet::new(entries).expect("distinct ids")
}

/// Random vectors for every vocabulary word, with groups of words sharing a
/// direction so nearest neighbors are meaningful.
pub fn embeddings(vocab: &[String], dim: usize, seed: u64) -> EmbeddingTable {
    let mut rng = rng(seed);
    let centers: Vec<Vec<f64>> = (0..8).map(|_| (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let mut table = EmbeddingTable::new(dim);
    for (i, w) in vocab.iter().enumerate() {
        let c = &centers[i % centers.len()];
        let v = c.iter().map(|x| x + rng.random_range(-0.4..0.4)).collect();
        table.insert(w.clone(), v).unwrap();
    }
    table
}

pub fn embeddings_text(table: &EmbeddingTable) -> String {
    let mut out = format!("{} {}\n", table.len(), table.dim());
    for (w, v) in table.iter() {
        let nums: Vec<String> = v.iter().map(|x| format!("{x:?}")).collect();
        out.push_str(&format!("{w} {}\n", nums.join(" ")));
    }
    out
}

pub fn corpus_jsonl(corpus: &Corpus) -> String {
    corpus
        .iter()
        .map(|d| {
            serde_json::json!({"doc_id": d.doc_id, "title": d.title, "abstract": d.abstract_text}).to_string() + "\n"
        })
        .collect()
}

// ---- BM25 ----

fn words(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric()).filter(|w| !w.is_empty()).map(str::to_lowercase).collect()
}

/// Okapi BM25 evaluated straight from the document texts.
pub struct DirectBm25 {
    docs: BTreeMap<String, Vec<String>>,
    avg_len: f64,
}

impl DirectBm25 {
    pub fn new(corpus: &Corpus) -> Self {
        let docs: BTreeMap<String, Vec<String>> =
            corpus.iter().map(|d| (d.doc_id.clone(), words(&format!("{} {}", d.title, d.abstract_text)))).collect();
        let avg_len = docs.values().map(Vec::len).sum::<usize>() as f64 / docs.len() as f64;
        Self { docs, avg_len }
    }

    pub fn score(&self, query: &str, doc_id: &str, k1: f64, b: f64) -> f64 {
        let n = self.docs.len() as f64;
        let doc = &self.docs[doc_id];
        let terms: BTreeSet<String> = words(query).into_iter().collect();
        let mut total = 0.0;
        for t in &terms {
            let df = self.docs.values().filter(|d| d.contains(t)).count() as f64;
            let tf = doc.iter().filter(|w| *w == t).count() as f64;
            if tf == 0.0 {
                continue;
            }
            let idf = (1.0 + (n - df + 0.5) / (df + 0.5)).ln();
            total += idf * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * doc.len() as f64 / self.avg_len));
        }
        total
    }
}

// ---- metrics ----

fn positions(s: &Snippet) -> BTreeSet<(Section, usize)> {
    assert_eq!(s.begin_section, s.end_section, "oracle handles single-section snippets");
    (s.begin..s.end).map(|p| (s.begin_section, p)).collect()
}

fn char_overlap(a: &Snippet, b: &Snippet) -> usize {
    if a.doc_id != b.doc_id {
        return 0;
    }
    positions(a).intersection(&positions(b)).count()
}

/// Relevance flag per ranked item: each gold item is claimed at most once, by
/// the first prediction that overlaps it most.
pub fn relevance_flags<P, G>(pred: &[P], gold: &[G], strength: impl Fn(&P, &G) -> usize) -> Vec<bool> {
    let mut taken = BTreeSet::new();
    let mut flags = Vec::new();
    for p in pred {
        let best = (0..gold.len())
            .filter(|g| !taken.contains(g))
            .map(|g| (strength(p, &gold[g]), std::cmp::Reverse(g)))
            .filter(|(s, _)| *s > 0)
            .max();
        if let Some((_, std::cmp::Reverse(g))) = best {
            taken.insert(g);
        }
        flags.push(best.is_some());
    }
    flags
}

pub fn doc_flags(pred: &[String], gold: &[String]) -> Vec<bool> {
    relevance_flags(pred, gold, |a, b| usize::from(a == b))
}

pub fn snippet_flags(pred: &[Snippet], gold: &[Snippet], min_overlap: usize) -> Vec<bool> {
    relevance_flags(pred, gold, |a, b| {
        let o = char_overlap(a, b);
        if o >= min_overlap { o } else { 0 }
    })
}

/// Mean over relevant ranks of precision at that rank, recounted from scratch.
pub fn oracle_ap(flags: &[bool], denominator: usize) -> f64 {
    if denominator == 0 {
        return 0.0;
    }
    let mut sum = 0.0;
    for k in 0..flags.len() {
        if flags[k] {
            let hits = flags[..=k].iter().filter(|f| **f).count();
            sum += hits as f64 / (k + 1) as f64;
        }
    }
    sum / denominator as f64
}

pub fn oracle_prf(flags: &[bool], gold_len: usize) -> (f64, f64, f64) {
    let m = flags.iter().filter(|f| **f).count() as f64;
    let p = if flags.is_empty() { 0.0 } else { m / flags.len() as f64 };
    let r = if gold_len == 0 { 0.0 } else { m / gold_len as f64 };
    let f = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
    (p, r, f)
}

pub fn oracle_map(aps: &[f64]) -> f64 {
    aps.iter().sum::<f64>() / aps.len() as f64
}

pub fn oracle_gmap(aps: &[f64], eps: f64) -> f64 {
    aps.iter().map(|a| a + eps).product::<f64>().powf(1.0 / aps.len() as f64)
}

pub fn random_snippet(rng: &mut ChaCha8Rng) -> Snippet {
    let section = if rng.random_bool(0.2) { Section::Title } else { Section::Abstract };
    let begin = rng.random_range(0..60);
    Snippet {
        doc_id: format!("d{}", rng.random_range(0..3)),
        text: String::new(),
        begin_section: section,
        begin,
        end_section: section,
        end: begin + rng.random_range(1..30),
    }
}

pub fn random_ids(rng: &mut ChaCha8Rng, n: usize, universe: usize) -> Vec<String> {
    (0..n).map(|_| format!("d{}", rng.random_range(0..universe))).collect()
}

// ---- candidate pools ----

pub fn perspective(kind: ScorerKind, unit: f64) -> PerspectiveScore {
    PerspectiveScore::new(kind, unit * kind.native_max()).unwrap()
}

/// Pool of `docs` documents with random normalized scores; `levels` > 0
/// quantizes every score to that many steps so ties occur.
pub fn random_pool(rng: &mut ChaCha8Rng, docs: usize, max_sentences: usize, levels: u32) -> CandidatePool {
    let draw = |rng: &mut ChaCha8Rng| -> f64 {
        let u: f64 = rng.random();
        if levels == 0 { u } else { (u * levels as f64).floor() / levels as f64 }
    };
    let mut ids: Vec<usize> = (0..docs * 3).collect();
    let pooled = (0..docs)
        .map(|_| {
            let id = ids.swap_remove(rng.random_range(0..ids.len()));
            let doc_id = format!("p{id:03}");
            let n = rng.random_range(1..=max_sentences);
            let sentences = (0..n)
                .map(|s| PooledSentence {
                    sent_index: s,
                    scores: [
                        perspective(ScorerKind::Relevance, draw(rng)),
                        perspective(ScorerKind::Sts, draw(rng)),
                        perspective(ScorerKind::Sia, draw(rng)),
                    ],
                    snippet: Snippet {
                        doc_id: doc_id.clone(),
                        text: format!("sentence {s}"),
                        begin_section: Section::Abstract,
                        begin: 20 * s,
                        end_section: Section::Abstract,
                        end: 20 * s + 15,
                    },
                })
                .collect();
            PooledDocument { doc_id, bm25: 20.0 * draw(rng), sentences }
        })
        .collect();
    CandidatePool { query_id: "q".into(), query: "q".into(), docs: pooled }
}

pub fn random_weights(rng: &mut ChaCha8Rng) -> FusionWeights {
    let mut v = [0.0; 9];
    for x in v.iter_mut() {
        *x = rng.random();
    }
    FusionWeights::from_vector(v)
}

/// `(doc_id, sent_index)` of every sentence in the pool ordered by `key`
/// descending, then doc id, then sentence index.
pub fn order_sentences_by(pool: &CandidatePool, key: impl Fn(usize, &PooledSentence) -> f64) -> Vec<(String, usize)> {
    let mut all: Vec<(f64, String, usize)> = pool
        .docs
        .iter()
        .enumerate()
        .flat_map(|(d, doc)| doc.sentences.iter().map(move |s| (d, s)))
        .map(|(d, s)| (key(d, s), pool.docs[d].doc_id.clone(), s.sent_index))
        .collect();
    all.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(&b.1)).then_with(|| a.2.cmp(&b.2)));
    all.into_iter().map(|(_, d, s)| (d, s)).collect()
}

pub fn order_docs_by(pool: &CandidatePool, key: impl Fn(&PooledDocument) -> f64) -> Vec<String> {
    let mut all: Vec<(f64, &str)> = pool.docs.iter().map(|d| (key(d), d.doc_id.as_str())).collect();
    all.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1)));
    all.into_iter().map(|(_, d)| d.to_string()).collect()
}

/// Planted dev set: gold snippets and documents are the top five under
/// `planted` weights.
pub fn planted_dev_set(queries: usize, planted: &FusionWeights, seed: u64) -> (Vec<CandidatePool>, QuerySet) {
    let mut rng = rng(seed);
    let params = RankingParams { top_docs: 5, top_snippets: 5, ..RankingParams::default() };
    let mut pools = Vec::with_capacity(queries);
    let mut entries = Vec::with_capacity(queries);
    for k in 0..queries {
        let n_docs = rng.random_range(6..=10);
        let mut pool = random_pool(&mut rng, n_docs, 5, 0);
        let id = format!("planted{k:03}");
        pool.query_id = id.clone();
        pool.query = format!("planted query {k}");
        let entry = pool.materialize(&fuse(&pool, planted, &params));
        let gold = GoldLabels::new(
            &id,
            entry.documents.iter().map(|d| d.doc_id.clone()).collect(),
            entry.snippets.iter().map(|s| s.snippet.clone()).collect(),
        )
        .expect("planted gold is consistent");
        entries.push(QueryEntry { query: Query::new(id, pool.query.clone()).unwrap(), gold: Some(gold) });
        pools.push(pool);
    }
    (pools, QuerySet::new(entries).unwrap())
}

// ---- SIA data ----

pub struct SiaFixture {
    pub rows: Vec<QascRow>,
    pub embeddings: EmbeddingTable,
    pub entity_terms: Vec<String>,
}

/// Rows come in topic pairs whose questions share most words, so some pairs
/// clear the STS threshold.
pub fn sia_fixture(rows: usize, seed: u64) -> SiaFixture {
    let vocab = vocabulary(120);
    let embeddings = embeddings(&vocab, 16, seed);
    let mut rng = rng(seed ^ 0x51a5);
    let entity_terms: Vec<String> = vocab.iter().step_by(3).cloned().collect();
    let pick = |rng: &mut ChaCha8Rng| vocab[rng.random_range(0..vocab.len())].clone();
    let mut out = Vec::with_capacity(rows);
    let mut topic: Vec<String> = Vec::new();
    for (i, own) in vocab.iter().enumerate().take(rows) {
        if i % 2 == 0 {
            topic = (0..4).map(|_| pick(&mut rng)).collect();
        }
        let question = format!("what {} {} {} {}", topic[0], topic[1], topic[2], if i % 2 == 0 { &topic[3] } else { own });
        let fact1 = format!("{} {} {} {}", topic[0], pick(&mut rng), pick(&mut rng), pick(&mut rng));
        let fact2 = format!("{} {} {} {}", pick(&mut rng), topic[1], topic[2], pick(&mut rng));
        let combined_fact = format!("{} {} {} {}", topic[0], topic[1], topic[2], pick(&mut rng));
        out.push(QascRow { question, possible_answers: String::new(), correct_answer: String::new(), fact1, fact2, combined_fact });
    }
    SiaFixture { rows: out, embeddings, entity_terms }
}

/// Five nearest words by cosine, computed by a full scan.
pub fn brute_force_top5(table: &EmbeddingTable, word: &str) -> Vec<String> {
    let v = table.get(word).unwrap();
    let norm = |x: &[f64]| x.iter().map(|a| a * a).sum::<f64>().sqrt();
    let mut all: Vec<(f64, String)> = table
        .iter()
        .filter(|(w, _)| *w != word)
        .map(|(w, u)| (v.iter().zip(u).map(|(a, b)| a * b).sum::<f64>() / (norm(v) * norm(u)), w.to_string()))
        .collect();
    all.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(&b.1)));
    all.into_iter().take(5).map(|(_, w)| w).collect()
}

/// `5 · max(0, cos(mean(q), mean(s)))` over embedded non-stopword tokens.
pub fn oracle_sts(table: &EmbeddingTable, q: &str, s: &str) -> f64 {
    let mean = |text: &str| -> Option<Vec<f64>> {
        let vecs: Vec<&[f64]> = words(text).iter().filter(|w| !is_stopword(w)).filter_map(|w| table.get(w)).collect();
        if vecs.is_empty() {
            return None;
        }
        Some((0..table.dim()).map(|k| vecs.iter().map(|v| v[k]).sum::<f64>() / vecs.len() as f64).collect())
    };
    let (Some(a), Some(b)) = (mean(q), mean(s)) else { return 0.0 };
    let dot: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    5.0 * (dot / (na * nb)).clamp(-1.0, 1.0).max(0.0)
}
