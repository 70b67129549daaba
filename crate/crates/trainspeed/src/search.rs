//! Query-based search over a tabular benchmark: random search, regularized
//! evolution, and a density-ratio (TPE-style) Bayesian optimiser, all with
//! simulated-runtime accounting in epoch units.

use std::collections::{HashMap, HashSet, VecDeque};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::curves::{ArchitectureRecord, BenchmarkDataset};
use crate::error::{Error, Result};
use crate::estimators::EstimatorSpec;
use crate::seeding::stream_rng;
use crate::stats::{aggregate, Orientation};

/// How a queried architecture is scored and what one query costs.
#[derive(Debug, Clone, Serialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Evaluator {
    /// Full-budget validation accuracy; costs t_end epoch units per query.
    GroundTruth,
    /// Estimator at its budget T; costs T epoch units per query.
    Estimator(EstimatorSpec),
}

impl Evaluator {
    pub fn name(&self) -> String {
        match self {
            Evaluator::GroundTruth => "gt".into(),
            Evaluator::Estimator(spec) => spec.name(),
        }
    }

    pub fn cost_per_query(&self, bench: &BenchmarkDataset) -> f64 {
        match self {
            Evaluator::GroundTruth => bench.metadata.t_end as f64,
            Evaluator::Estimator(spec) => spec.t as f64,
        }
    }

    pub fn orientation(&self) -> Orientation {
        match self {
            Evaluator::GroundTruth => Orientation::HigherIsBetter,
            Evaluator::Estimator(spec) => spec.orientation(),
        }
    }

    /// Seed-averaged score of one architecture. TLmini vectors are collapsed
    /// to their mean entry here; the per-index protocol only applies to rank
    /// evaluation.
    pub fn score(&self, record: &ArchitectureRecord) -> Result<f64> {
        let mut total = 0.0;
        for curve in record.seeds.values() {
            total += match self {
                Evaluator::GroundTruth => *curve.epoch_val_acc.last().unwrap(),
                Evaluator::Estimator(spec) => spec.score(curve)?.scalar(),
            };
        }
        Ok(total / record.seeds.len() as f64)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TraceEvent {
    pub step: usize,
    pub arch_id: String,
    pub score: f64,
    pub cumulative_cost: f64,
    pub best_true_test_acc: f64,
}

/// Time-ordered log of one search run.
#[derive(Debug, Clone, Serialize)]
pub struct SearchTrace {
    pub strategy: String,
    pub evaluator: String,
    pub seed: u64,
    pub events: Vec<TraceEvent>,
    /// Duplicate queries and mutation fallbacks, for audit.
    pub notes: Vec<String>,
}

impl SearchTrace {
    pub fn final_best_true_acc(&self) -> f64 {
        self.events.last().map(|e| e.best_true_test_acc).unwrap_or(0.0)
    }

    /// Best-so-far true test accuracy at simulated cost `c`.
    pub fn best_at_cost(&self, c: f64) -> f64 {
        self.events
            .iter()
            .take_while(|e| e.cumulative_cost <= c)
            .last()
            .map(|e| e.best_true_test_acc)
            .unwrap_or_else(|| self.events.first().map(|e| e.best_true_test_acc).unwrap_or(0.0))
    }
}

fn better(orientation: Orientation, a: f64, b: f64) -> bool {
    match orientation {
        Orientation::LowerIsBetter => a < b,
        Orientation::HigherIsBetter => a > b,
    }
}

struct TraceBuilder {
    trace: SearchTrace,
    best_score: Option<f64>,
    best_true: f64,
    cumulative: f64,
    orientation: Orientation,
}

impl TraceBuilder {
    fn new(strategy: &str, evaluator: &Evaluator, seed: u64) -> TraceBuilder {
        TraceBuilder {
            trace: SearchTrace {
                strategy: strategy.to_string(),
                evaluator: evaluator.name(),
                seed,
                events: Vec::new(),
                notes: Vec::new(),
            },
            best_score: None,
            best_true: 0.0,
            cumulative: 0.0,
            orientation: evaluator.orientation(),
        }
    }

    fn record(&mut self, record: &ArchitectureRecord, score: f64, cost: f64) {
        self.cumulative += cost;
        let improved = match self.best_score {
            None => true,
            Some(best) => better(self.orientation, score, best),
        };
        if improved {
            self.best_score = Some(score);
        }
        self.best_true = self.best_true.max(record.mean_test_acc());
        self.trace.events.push(TraceEvent {
            step: self.trace.events.len() + 1,
            arch_id: record.arch_id.clone(),
            score,
            cumulative_cost: self.cumulative,
            best_true_test_acc: self.best_true,
        });
    }
}

/// Uniform sampling without replacement until the budget is exhausted.
pub fn random_search(
    bench: &BenchmarkDataset,
    evaluator: &Evaluator,
    budget: f64,
    seed: u64,
) -> Result<SearchTrace> {
    let cost = evaluator.cost_per_query(bench);
    if budget < cost {
        return Err(Error::invalid(format!(
            "budget {budget} below one query's cost {cost}"
        )));
    }
    let mut rng = stream_rng(seed, "search/rs", 0);
    let mut order: Vec<usize> = (0..bench.records.len()).collect();
    order.shuffle(&mut rng);

    let mut builder = TraceBuilder::new("rs", evaluator, seed);
    for idx in order {
        if builder.cumulative + cost > budget {
            break;
        }
        let record = &bench.records[idx];
        builder.record(record, evaluator.score(record)?, cost);
    }
    Ok(builder.trace)
}

/// Per-position choice counts inferred from the population's encodings.
fn position_cardinalities(bench: &BenchmarkDataset) -> Vec<usize> {
    let max_len = bench.records.iter().map(|r| r.encoding.len()).max().unwrap();
    let mut card = vec![0usize; max_len];
    for r in &bench.records {
        for (pos, &v) in r.encoding.iter().enumerate() {
            card[pos] = card[pos].max(v + 1);
        }
    }
    card
}

fn encoding_index(bench: &BenchmarkDataset) -> HashMap<Vec<usize>, usize> {
    bench
        .records
        .iter()
        .enumerate()
        .map(|(i, r)| (r.encoding.clone(), i))
        .collect()
}

/// Queue-based aging evolution: sample S of P, mutate the best-scoring
/// member at one encoding position, evict the oldest.
pub fn regularized_evolution(
    bench: &BenchmarkDataset,
    evaluator: &Evaluator,
    budget: f64,
    pop_size: usize,
    sample_size: usize,
    seed: u64,
) -> Result<SearchTrace> {
    let cost = evaluator.cost_per_query(bench);
    if pop_size == 0 || sample_size == 0 || sample_size > pop_size {
        return Err(Error::invalid(format!(
            "need 1 <= S={sample_size} <= P={pop_size}"
        )));
    }
    if pop_size > bench.records.len() {
        return Err(Error::invalid("population larger than the search space"));
    }
    if budget < pop_size as f64 * cost {
        return Err(Error::invalid(format!(
            "budget {budget} below initialization cost {}",
            pop_size as f64 * cost
        )));
    }

    let mut rng = stream_rng(seed, "search/re", 0);
    let cardinalities = position_cardinalities(bench);
    let by_encoding = encoding_index(bench);
    let mut cached: HashMap<usize, f64> = HashMap::new();
    let mut builder = TraceBuilder::new("re", evaluator, seed);
    let free_duplicates = matches!(evaluator, Evaluator::GroundTruth);

    let query = |idx: usize,
                     builder: &mut TraceBuilder,
                     cached: &mut HashMap<usize, f64>|
     -> Result<f64> {
        let record = &bench.records[idx];
        let (score, charge) = match cached.get(&idx) {
            Some(&s) => {
                builder
                    .trace
                    .notes
                    .push(format!("duplicate query {}", record.arch_id));
                (s, if free_duplicates { 0.0 } else { cost })
            }
            None => {
                let s = evaluator.score(record)?;
                cached.insert(idx, s);
                (s, cost)
            }
        };
        builder.record(record, score, charge);
        Ok(score)
    };

    // initial population
    let mut init: Vec<usize> = (0..bench.records.len()).collect();
    init.shuffle(&mut rng);
    init.truncate(pop_size);
    let mut population: VecDeque<(usize, f64)> = VecDeque::with_capacity(pop_size);
    for idx in init {
        let score = query(idx, &mut builder, &mut cached)?;
        population.push_back((idx, score));
    }

    // runaway guard for zero-cost duplicate loops in ground-truth mode
    let max_steps = ((budget / cost).ceil() as usize) * 4 + pop_size;
    while builder.cumulative + cost <= budget && builder.trace.events.len() < max_steps {
        // sample S distinct queue slots; ties on score go to the youngest
        let mut slots: Vec<usize> = (0..population.len()).collect();
        slots.shuffle(&mut rng);
        slots.truncate(sample_size);
        let mut parent_slot = slots[0];
        for &slot in &slots[1..] {
            let (_, s) = population[slot];
            let (_, best_s) = population[parent_slot];
            if better(builder.orientation, s, best_s) || (s == best_s && slot > parent_slot) {
                parent_slot = slot;
            }
        }
        let parent_idx = population[parent_slot].0;
        let parent_encoding = &bench.records[parent_idx].encoding;

        // single-position mutation to a different value
        let pos = rng.gen_range(0..parent_encoding.len());
        let choices = cardinalities[pos];
        let mut child = parent_encoding.clone();
        if choices > 1 {
            let mut new_value = rng.gen_range(0..choices - 1);
            if new_value >= child[pos] {
                new_value += 1;
            }
            child[pos] = new_value;
        }
        let child_idx = match by_encoding.get(&child) {
            Some(&idx) => idx,
            None => {
                let fallback = rng.gen_range(0..bench.records.len());
                builder.trace.notes.push(format!(
                    "mutation {child:?} not in benchmark; resampled {}",
                    bench.records[fallback].arch_id
                ));
                fallback
            }
        };

        let score = query(child_idx, &mut builder, &mut cached)?;
        population.push_back((child_idx, score));
        population.pop_front();
        debug_assert_eq!(population.len(), pop_size);
    }
    Ok(builder.trace)
}

/// Knobs of the density-ratio optimiser.
#[derive(Debug, Clone, Serialize)]
pub struct TpeConfig {
    /// Quantile of observations treated as the "good" set.
    pub gamma_split: f64,
    /// Random queries before the model phase starts.
    pub n_init: usize,
    /// Candidates sampled from the good model per step.
    pub n_candidates: usize,
}

impl Default for TpeConfig {
    fn default() -> Self {
        TpeConfig {
            gamma_split: 0.25,
            n_init: 10,
            n_candidates: 24,
        }
    }
}

/// Per-position categorical frequency model with add-one smoothing.
struct CategoricalModel {
    /// probs[pos][value]
    probs: Vec<Vec<f64>>,
}

impl CategoricalModel {
    fn fit(encodings: &[&Vec<usize>], cardinalities: &[usize]) -> CategoricalModel {
        let probs = cardinalities
            .iter()
            .enumerate()
            .map(|(pos, &card)| {
                let mut counts = vec![1.0f64; card]; // add-one smoothing
                for enc in encodings {
                    if let Some(&v) = enc.get(pos) {
                        counts[v] += 1.0;
                    }
                }
                let total: f64 = counts.iter().sum();
                counts.into_iter().map(|c| c / total).collect()
            })
            .collect();
        CategoricalModel { probs }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> Vec<usize> {
        self.probs
            .iter()
            .map(|dist| {
                let u: f64 = rng.gen();
                let mut acc = 0.0;
                for (v, &p) in dist.iter().enumerate() {
                    acc += p;
                    if u < acc {
                        return v;
                    }
                }
                dist.len() - 1
            })
            .collect()
    }

    fn likelihood(&self, encoding: &[usize]) -> f64 {
        encoding
            .iter()
            .enumerate()
            .map(|(pos, &v)| self.probs[pos][v])
            .product()
    }
}

/// Density-ratio Bayesian optimisation over categorical encodings: split
/// observations at the gamma quantile, sample candidates from the good-set
/// model, query the unseen candidate with the highest good/bad ratio.
pub fn tpe_search(
    bench: &BenchmarkDataset,
    evaluator: &Evaluator,
    budget: f64,
    cfg: &TpeConfig,
    seed: u64,
) -> Result<SearchTrace> {
    let cost = evaluator.cost_per_query(bench);
    if !(cfg.gamma_split > 0.0 && cfg.gamma_split < 1.0) {
        return Err(Error::invalid(format!(
            "gamma_split={} outside (0,1)",
            cfg.gamma_split
        )));
    }
    if cfg.n_init == 0 || budget < cfg.n_init as f64 * cost {
        return Err(Error::invalid(format!(
            "budget {budget} below n_init cost {}",
            cfg.n_init as f64 * cost
        )));
    }

    let mut rng = stream_rng(seed, "search/tpe", 0);
    let cardinalities = position_cardinalities(bench);
    let by_encoding = encoding_index(bench);
    let mut builder = TraceBuilder::new("tpe", evaluator, seed);
    let mut seen: HashSet<usize> = HashSet::new();
    let mut observations: Vec<(usize, f64)> = Vec::new();

    let mut order: Vec<usize> = (0..bench.records.len()).collect();
    order.shuffle(&mut rng);
    let mut init_iter = order.into_iter();

    while builder.cumulative + cost <= budget {
        let pick = if observations.len() < cfg.n_init {
            init_iter.find(|idx| !seen.contains(idx))
        } else {
            pick_by_density_ratio(
                bench,
                &observations,
                &seen,
                &cardinalities,
                &by_encoding,
                cfg,
                builder.orientation,
                &mut rng,
                &mut builder.trace.notes,
            )
        };
        let Some(idx) = pick else { break };
        let record = &bench.records[idx];
        let score = evaluator.score(record)?;
        builder.record(record, score, cost);
        seen.insert(idx);
        observations.push((idx, score));
    }
    Ok(builder.trace)
}

#[allow(clippy::too_many_arguments)]
fn pick_by_density_ratio(
    bench: &BenchmarkDataset,
    observations: &[(usize, f64)],
    seen: &HashSet<usize>,
    cardinalities: &[usize],
    by_encoding: &HashMap<Vec<usize>, usize>,
    cfg: &TpeConfig,
    orientation: Orientation,
    rng: &mut ChaCha8Rng,
    notes: &mut Vec<String>,
) -> Option<usize> {
    if seen.len() == bench.records.len() {
        return None; // space exhausted
    }
    let uniform_unseen = |rng: &mut ChaCha8Rng| {
        let unseen: Vec<usize> = (0..bench.records.len())
            .filter(|i| !seen.contains(i))
            .collect();
        unseen[rng.gen_range(0..unseen.len())]
    };

    let first = observations[0].1;
    if observations.iter().all(|&(_, s)| s == first) {
        notes.push("degenerate split (all scores equal); uniform fallback".into());
        return Some(uniform_unseen(rng));
    }

    let mut sorted: Vec<&(usize, f64)> = observations.iter().collect();
    sorted.sort_by(|a, b| match orientation {
        Orientation::LowerIsBetter => a.1.partial_cmp(&b.1).unwrap(),
        Orientation::HigherIsBetter => b.1.partial_cmp(&a.1).unwrap(),
    });
    let n_good = ((cfg.gamma_split * sorted.len() as f64).ceil() as usize)
        .clamp(1, sorted.len() - 1);
    let good: Vec<&Vec<usize>> = sorted[..n_good]
        .iter()
        .map(|&&(idx, _)| &bench.records[idx].encoding)
        .collect();
    let bad: Vec<&Vec<usize>> = sorted[n_good..]
        .iter()
        .map(|&&(idx, _)| &bench.records[idx].encoding)
        .collect();
    let good_model = CategoricalModel::fit(&good, cardinalities);
    let bad_model = CategoricalModel::fit(&bad, cardinalities);

    let mut best: Option<(usize, f64)> = None;
    for _ in 0..cfg.n_candidates {
        let candidate = good_model.sample(rng);
        let Some(&idx) = by_encoding.get(&candidate) else { continue };
        if seen.contains(&idx) {
            continue;
        }
        let ratio = good_model.likelihood(&candidate) / bad_model.likelihood(&candidate);
        if best.map_or(true, |(_, r)| ratio > r) {
            best = Some((idx, ratio));
        }
    }
    match best {
        Some((idx, _)) => Some(idx),
        None => {
            notes.push("no unseen model candidate; uniform fallback".into());
            Some(uniform_unseen(rng))
        }
    }
}

/// Which strategy to run, with its knobs.
#[derive(Debug, Clone, Serialize)]
#[serde(tag = "strategy", rename_all = "snake_case")]
pub enum Strategy {
    RandomSearch,
    RegularizedEvolution { pop_size: usize, sample_size: usize },
    Tpe(TpeConfig),
}

impl Strategy {
    pub fn name(&self) -> &'static str {
        match self {
            Strategy::RandomSearch => "rs",
            Strategy::RegularizedEvolution { .. } => "re",
            Strategy::Tpe(_) => "tpe",
        }
    }

    pub fn run(
        &self,
        bench: &BenchmarkDataset,
        evaluator: &Evaluator,
        budget: f64,
        seed: u64,
    ) -> Result<SearchTrace> {
        match self {
            Strategy::RandomSearch => random_search(bench, evaluator, budget, seed),
            Strategy::RegularizedEvolution { pop_size, sample_size } => {
                regularized_evolution(bench, evaluator, budget, *pop_size, *sample_size, seed)
            }
            Strategy::Tpe(cfg) => tpe_search(bench, evaluator, budget, cfg, seed),
        }
    }
}

/// One (strategy, evaluator, cost grid point) aggregate.
#[derive(Debug, Clone, Serialize)]
pub struct ComparisonRow {
    pub strategy: String,
    pub evaluator: String,
    pub cost: f64,
    pub mean_acc: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ComparisonReport {
    pub rows: Vec<ComparisonRow>,
    pub traces: Vec<SearchTrace>,
}

/// Runs every (strategy x evaluator) cell over `n_seeds` seeds and resamples
/// best-so-far true accuracy on a fixed cost grid.
pub fn compare_strategies(
    bench: &BenchmarkDataset,
    evaluators: &[Evaluator],
    strategies: &[Strategy],
    budget: f64,
    n_seeds: u64,
    grid_points: usize,
) -> Result<ComparisonReport> {
    if n_seeds == 0 || grid_points == 0 {
        return Err(Error::invalid("need at least one seed and one grid point"));
    }
    let cells: Vec<(usize, usize, u64)> = (0..strategies.len())
        .flat_map(|s| {
            (0..evaluators.len()).flat_map(move |e| (0..n_seeds).map(move |seed| (s, e, seed)))
        })
        .collect();
    let traces: Vec<Result<SearchTrace>> = cells
        .par_iter()
        .map(|&(s, e, seed)| strategies[s].run(bench, &evaluators[e], budget, seed))
        .collect();
    let traces: Result<Vec<SearchTrace>> = traces.into_iter().collect();
    let traces = traces?;

    let grid: Vec<f64> = (1..=grid_points)
        .map(|i| budget * i as f64 / grid_points as f64)
        .collect();
    let mut rows = Vec::new();
    for strategy in strategies {
        for evaluator in evaluators {
            let cell: Vec<&SearchTrace> = traces
                .iter()
                .filter(|t| t.strategy == strategy.name() && t.evaluator == evaluator.name())
                .collect();
            for &c in &grid {
                let values: Vec<f64> = cell.iter().map(|t| t.best_at_cost(c)).collect();
                let (mean_acc, stderr) = aggregate(&values)?;
                rows.push(ComparisonRow {
                    strategy: strategy.name().to_string(),
                    evaluator: evaluator.name(),
                    cost: c,
                    mean_acc,
                    stderr,
                });
            }
        }
    }
    Ok(ComparisonReport { rows, traces })
}
