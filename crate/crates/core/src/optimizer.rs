//! Alternating optimization of the fusion weights.
//!
//! Each iteration runs an E phase (document weights `β`, `w` searched against
//! a document objective, `α` frozen) followed by an M phase (`α` searched
//! against a sentence objective, `β` and `w` frozen). The loop continues while
//! the M objective improves on the best value seen, which starts at the
//! objective of the initial weights.

use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, QuerySet, Snippet};
use crate::error::{Error, Result};
use crate::fusion::{fuse, score_pool, CandidatePool, FusionWeights, RankingParams};
use crate::lexindex::InvertedIndex;
use crate::metrics::{average_precision, doc_strength, precision_recall_f1, EvalConfig};
use crate::scorers::ScorerSet;
use crate::surrogate::Surrogate;

/// Improvements at or below this margin do not continue the loop.
pub const IMPROVEMENT_EPSILON: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    SentMap,
    DocMap,
    DocF1,
}

impl Objective {
    pub fn value(self, e: &Evaluation) -> f64 {
        match self {
            Objective::SentMap => e.sent_map,
            Objective::DocMap => e.doc_map,
            Objective::DocF1 => e.doc_f1,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub doc_map: f64,
    pub sent_map: f64,
    pub doc_f1: f64,
    pub sent_f1: f64,
}

/// Scores a weight vector on a fixed development set; must be pure in the weights.
pub trait WeightEvaluator {
    fn evaluate(&self, wts: &FusionWeights) -> Result<Evaluation>;
}

impl<F: Fn(&FusionWeights) -> Result<Evaluation>> WeightEvaluator for F {
    fn evaluate(&self, wts: &FusionWeights) -> Result<Evaluation> {
        self(wts)
    }
}

#[derive(Debug, Clone, PartialEq)]
struct DevQuery {
    pool: CandidatePool,
    gold_docs: Vec<String>,
    gold_snippets: Vec<Snippet>,
}

/// Development queries with their candidate pools scored once up front, so
/// each weight vector only re-runs fusion and metrics.
#[derive(Debug, Clone, PartialEq)]
pub struct DevSetEvaluator {
    queries: Vec<DevQuery>,
    params: RankingParams,
    config: EvalConfig,
}

impl DevSetEvaluator {
    pub fn prepare(
        dev: &QuerySet,
        corpus: &Corpus,
        index: &InvertedIndex,
        scorers: &ScorerSet,
        params: RankingParams,
        config: EvalConfig,
    ) -> Result<Self> {
        let pools = dev
            .entries()
            .iter()
            .map(|e| score_pool(&e.query, corpus, index, scorers, &params))
            .collect::<Result<Vec<_>>>()?;
        Self::from_pools(pools, dev, params, config)
    }

    /// `pools` must be in the order of `dev`.
    pub fn from_pools(pools: Vec<CandidatePool>, dev: &QuerySet, params: RankingParams, config: EvalConfig) -> Result<Self> {
        params.validate()?;
        config.policy.validate()?;
        if pools.len() != dev.len() {
            return Err(Error::InvalidParameter(alloc::format!(
                "{} candidate pools for {} dev queries",
                pools.len(),
                dev.len()
            )));
        }
        if dev.is_empty() {
            return Err(Error::InvalidParameter("dev set is empty".into()));
        }
        let queries = pools
            .into_iter()
            .zip(dev.entries())
            .map(|(pool, e)| {
                let gold = e.gold.as_ref().ok_or_else(|| Error::MissingGold(e.query.query_id.clone()))?;
                Ok(DevQuery { pool, gold_docs: gold.doc_ids.clone(), gold_snippets: gold.snippets.clone() })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { queries, params, config })
    }

    pub fn len(&self) -> usize {
        self.queries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queries.is_empty()
    }

    pub fn params(&self) -> &RankingParams {
        &self.params
    }
}

impl WeightEvaluator for DevSetEvaluator {
    fn evaluate(&self, wts: &FusionWeights) -> Result<Evaluation> {
        wts.validate()?;
        let mut total = Evaluation::default();
        let policy = self.config.policy;
        let snip = |p: &&Snippet, g: &Snippet| policy.snippet_strength(p, g);
        let doc = |p: &&String, g: &String| doc_strength(p, g);
        for q in &self.queries {
            let fusion = fuse(&q.pool, wts, &self.params);
            let docs: Vec<&String> = fusion.documents.iter().map(|d| &q.pool.docs[d.doc].doc_id).collect();
            let snippets: Vec<&Snippet> =
                fusion.snippets.iter().map(|s| &q.pool.docs[s.doc].sentences[s.sentence].snippet).collect();
            total.doc_map += average_precision(&docs, &q.gold_docs, doc, self.config.denominator);
            total.doc_f1 += precision_recall_f1(&docs, &q.gold_docs, doc).f1;
            total.sent_map += average_precision(&snippets, &q.gold_snippets, snip, self.config.denominator);
            total.sent_f1 += precision_recall_f1(&snippets, &q.gold_snippets, snip).f1;
        }
        let n = self.queries.len() as f64;
        Ok(Evaluation {
            doc_map: total.doc_map / n,
            sent_map: total.sent_map / n,
            doc_f1: total.doc_f1 / n,
            sent_f1: total.sent_f1 / n,
        })
    }
}

/// Subset of the nine weight coordinates `[α1..α4, β1, β2, w1..w3]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamSet(u16);

impl ParamSet {
    pub const ALPHA: ParamSet = ParamSet(0b0_0000_1111);
    pub const BETA_W: ParamSet = ParamSet(0b1_1111_0000);
    pub const ALL: ParamSet = ParamSet(0b1_1111_1111);

    pub fn from_dims(dims: &[usize]) -> Result<Self> {
        let mut bits = 0u16;
        for &d in dims {
            if d >= FusionWeights::DIM {
                return Err(Error::InvalidParameter(alloc::format!("weight coordinate {d} out of range")));
            }
            bits |= 1 << d;
        }
        Ok(ParamSet(bits))
    }

    pub fn dims(self) -> Vec<usize> {
        (0..FusionWeights::DIM).filter(|d| self.0 & (1 << d) != 0).collect()
    }

    pub fn complement(self) -> Self {
        ParamSet(!self.0 & Self::ALL.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SearchStrategy {
    /// Exhaustive over `{0, step, …, 1}` per free coordinate.
    Grid { step: f64 },
    /// A `step1` grid, then a `step2` grid within `±window` of its winner.
    CoarseFine { step1: f64, step2: f64, window: f64 },
    /// Random exploration followed by expected-improvement steps on a GP
    /// surrogate; `budget` counts every evaluation including the start point.
    Guided { budget: usize, seed: u64 },
}

pub const DEFAULT_GUIDED_BUDGET: usize = 200;
pub const DEFAULT_MAX_ITERS: usize = 10;

impl Default for SearchStrategy {
    fn default() -> Self {
        SearchStrategy::Guided { budget: DEFAULT_GUIDED_BUDGET, seed: 0 }
    }
}

impl SearchStrategy {
    pub fn validate(&self) -> Result<()> {
        let step_ok = |s: f64| s > 0.0 && s <= 1.0;
        match *self {
            SearchStrategy::Grid { step } if !step_ok(step) => {
                Err(Error::OutOfRange { what: "grid step", value: step, expected: "(0, 1]" })
            }
            SearchStrategy::CoarseFine { step1, step2, window } => {
                for (what, v) in [("coarse step", step1), ("fine step", step2)] {
                    if !step_ok(v) {
                        return Err(Error::OutOfRange { what, value: v, expected: "(0, 1]" });
                    }
                }
                if !(window > 0.0) {
                    return Err(Error::OutOfRange { what: "fine window", value: window, expected: "> 0" });
                }
                Ok(())
            }
            SearchStrategy::Guided { budget: 0, .. } => Err(Error::InvalidParameter("guided budget must be at least 1".into())),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    /// Document weights.
    E,
    /// Sentence weights.
    M,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateRecord {
    pub seq: usize,
    pub iteration: usize,
    pub phase: Phase,
    pub weights: FusionWeights,
    pub evaluation: Evaluation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub phase: Phase,
    pub objective: Objective,
    pub tried: usize,
    /// Best objective reached by this phase's search.
    pub phase_best: f64,
    pub weights: FusionWeights,
    /// M phases: best sentence objective so far (non-decreasing).
    /// E phases: the document objective of `weights`.
    pub accepted_value: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct OptTrace {
    pub initial_value: f64,
    pub iterations: Vec<IterationRecord>,
    pub candidates: Vec<CandidateRecord>,
}

impl OptTrace {
    pub fn accepted_m_values(&self) -> Vec<f64> {
        self.iterations.iter().filter(|r| r.phase == Phase::M).map(|r| r.accepted_value).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchOutcome {
    pub weights: FusionWeights,
    pub value: f64,
    pub tried: usize,
}

struct Searcher<'a, E: WeightEvaluator + ?Sized> {
    evaluator: &'a E,
    objective: Objective,
    start: FusionWeights,
    dims: Vec<usize>,
    trace: &'a mut OptTrace,
    iteration: usize,
    phase: Phase,
    best: SearchOutcome,
}

impl<E: WeightEvaluator + ?Sized> Searcher<'_, E> {
    fn weights_at(&self, x: &[f64]) -> FusionWeights {
        let mut v = self.start.to_vector();
        for (&d, &xi) in self.dims.iter().zip(x) {
            v[d] = xi;
        }
        FusionWeights::from_vector(v)
    }

    fn coords(&self, w: &FusionWeights) -> Vec<f64> {
        let v = w.to_vector();
        self.dims.iter().map(|&d| v[d]).collect()
    }

    /// Evaluates and records; a strictly better value replaces the best.
    fn try_point(&mut self, x: &[f64]) -> Result<f64> {
        let weights = self.weights_at(x);
        let evaluation = self.evaluator.evaluate(&weights)?;
        let value = self.objective.value(&evaluation);
        self.trace.candidates.push(CandidateRecord {
            seq: self.trace.candidates.len(),
            iteration: self.iteration,
            phase: self.phase,
            weights,
            evaluation,
        });
        self.best.tried += 1;
        if value > self.best.value {
            self.best.weights = weights;
            self.best.value = value;
        }
        Ok(value)
    }

    fn grid(&mut self, axes: &[Vec<f64>]) -> Result<()> {
        if axes.iter().any(Vec::is_empty) {
            return Ok(());
        }
        let mut idx = alloc::vec![0usize; axes.len()];
        loop {
            let x: Vec<f64> = idx.iter().zip(axes).map(|(&i, a)| a[i]).collect();
            self.try_point(&x)?;
            let mut d = axes.len();
            loop {
                if d == 0 {
                    return Ok(());
                }
                d -= 1;
                idx[d] += 1;
                if idx[d] < axes[d].len() {
                    break;
                }
                idx[d] = 0;
            }
        }
    }

    fn guided(&mut self, budget: usize, rng: &mut ChaCha8Rng) -> Result<()> {
        let dim = self.dims.len();
        let mut gp = Surrogate::new(0.2);
        gp.add(self.coords(&self.start), self.best.value);
        if dim == 0 {
            return Ok(());
        }
        let explore = (budget - 1).min((budget / 10).max(10));
        for _ in 0..explore {
            let x = uniform_point(rng, dim);
            let y = self.try_point(&x)?;
            gp.add(x, y);
        }
        for _ in (1 + explore)..budget {
            let posterior = gp.posterior();
            let center = self.coords(&self.best.weights);
            let mut best_x: Option<(Vec<f64>, f64)> = None;
            for c in 0..GUIDED_UNIFORM + GUIDED_LOCAL {
                let x = if c < GUIDED_UNIFORM { uniform_point(rng, dim) } else { perturb(rng, &center, GUIDED_SIGMA) };
                let ei = posterior.expected_improvement(&x, GUIDED_XI);
                if best_x.as_ref().is_none_or(|(_, b)| ei > *b) {
                    best_x = Some((x, ei));
                }
            }
            let x = match best_x {
                Some((x, ei)) if ei >= 1e-12 => x,
                _ => uniform_point(rng, dim),
            };
            let y = self.try_point(&x)?;
            gp.add(x, y);
        }
        Ok(())
    }
}

const GUIDED_UNIFORM: usize = 160;
const GUIDED_LOCAL: usize = 40;
const GUIDED_SIGMA: f64 = 0.05;
const GUIDED_XI: f64 = 0.01;

fn uniform_point(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| rng.random::<f64>()).collect()
}

fn perturb(rng: &mut ChaCha8Rng, center: &[f64], sigma: f64) -> Vec<f64> {
    center
        .iter()
        .map(|c| {
            // Box-Muller
            let u1: f64 = 1.0 - rng.random::<f64>();
            let u2: f64 = rng.random::<f64>();
            let z = libm::sqrt(-2.0 * libm::log(u1)) * libm::cos(2.0 * core::f64::consts::PI * u2);
            (c + sigma * z).clamp(0.0, 1.0)
        })
        .collect()
}

/// `{0, step, 2·step, …}` up to 1, always including 1.
pub fn lattice(step: f64) -> Vec<f64> {
    let n = libm::floor(1.0 / step + 1e-9) as usize;
    let mut v: Vec<f64> = (0..=n).map(|k| round12(k as f64 * step)).collect();
    if *v.last().unwrap_or(&0.0) < 1.0 - 1e-12 {
        v.push(1.0);
    }
    v
}

fn round12(x: f64) -> f64 {
    libm::round(x * 1e12) / 1e12
}

/// Points `center + k·step` within `±window`, kept inside `[0, 1]`.
fn local_lattice(center: f64, step: f64, window: f64) -> Vec<f64> {
    let m = libm::floor(window / step + 1e-9) as i64;
    (-m..=m).map(|k| round12(center + k as f64 * step)).filter(|x| (0.0..=1.0).contains(x)).collect()
}

const GRID_GUARD_DIMS: usize = 6;
const GRID_GUARD_STEP: f64 = 0.1;

/// Optimizes the `free` coordinates of `start` for `objective`, keeping the
/// others fixed. The start point is evaluated first and is only replaced by a
/// strictly better candidate, so the result is never worse than the start.
#[allow(clippy::too_many_arguments)]
pub fn search<E: WeightEvaluator + ?Sized>(
    strategy: &SearchStrategy,
    start: &FusionWeights,
    free: ParamSet,
    objective: Objective,
    evaluator: &E,
    trace: &mut OptTrace,
    iteration: usize,
    phase: Phase,
) -> Result<SearchOutcome> {
    strategy.validate()?;
    start.validate()?;
    let dims = free.dims();
    if let SearchStrategy::Grid { step } | SearchStrategy::CoarseFine { step1: step, .. } = *strategy {
        if dims.len() > GRID_GUARD_DIMS && step <= GRID_GUARD_STEP {
            return Err(Error::GridTooLarge { dims: dims.len(), step });
        }
    }
    let mut s = Searcher {
        evaluator,
        objective,
        start: *start,
        dims,
        trace,
        iteration,
        phase,
        best: SearchOutcome { weights: *start, value: f64::NEG_INFINITY, tried: 0 },
    };
    let x0 = s.coords(start);
    s.try_point(&x0)?;

    match *strategy {
        SearchStrategy::Grid { step } => {
            let axes = alloc::vec![lattice(step); s.dims.len()];
            s.grid(&axes)?;
        }
        SearchStrategy::CoarseFine { step1, step2, window } => {
            let axes = alloc::vec![lattice(step1); s.dims.len()];
            s.grid(&axes)?;
            let center = s.coords(&s.best.weights);
            let axes: Vec<Vec<f64>> = center.iter().map(|&c| local_lattice(c, step2, window)).collect();
            s.grid(&axes)?;
        }
        SearchStrategy::Guided { budget, seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(s.trace.iterations.len() as u64);
            s.guided(budget, &mut rng)?;
        }
    }
    Ok(s.best)
}

/// All α, β and w components equal to `0.5`.
pub fn balanced_init() -> FusionWeights {
    FusionWeights::balanced(0.5)
}

pub fn alternating_optimize<E: WeightEvaluator + ?Sized>(
    init: &FusionWeights,
    e_objective: Objective,
    m_objective: Objective,
    strategy: &SearchStrategy,
    max_iters: usize,
    evaluator: &E,
) -> Result<(FusionWeights, OptTrace)> {
    init.validate()?;
    strategy.validate()?;
    if max_iters == 0 {
        return Err(Error::InvalidParameter("max_iters must be at least 1".into()));
    }
    let mut trace = OptTrace::default();
    let mut best = *init;
    let mut best_value = m_objective.value(&evaluator.evaluate(init)?);
    trace.initial_value = best_value;
    let mut current = *init;

    for iteration in 1..=max_iters {
        let e = search(strategy, &current, ParamSet::BETA_W, e_objective, evaluator, &mut trace, iteration, Phase::E)?;
        trace.iterations.push(IterationRecord {
            iteration,
            phase: Phase::E,
            objective: e_objective,
            tried: e.tried,
            phase_best: e.value,
            weights: e.weights,
            accepted_value: e.value,
        });
        let m = search(strategy, &e.weights, ParamSet::ALPHA, m_objective, evaluator, &mut trace, iteration, Phase::M)?;
        let improved = m.value > best_value + IMPROVEMENT_EPSILON;
        if improved {
            best = m.weights;
            best_value = m.value;
            current = m.weights;
        }
        trace.iterations.push(IterationRecord {
            iteration,
            phase: Phase::M,
            objective: m_objective,
            tried: m.tried,
            phase_best: m.value,
            weights: best,
            accepted_value: best_value,
        });
        log::debug!("iteration {iteration}: {m_objective:?} {} (best {best_value})", m.value);
        if !improved {
            break;
        }
    }
    Ok((best, trace))
}
