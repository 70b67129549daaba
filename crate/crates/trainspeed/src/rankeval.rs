//! Rank-correlation evaluation protocol: how well estimator scores at budget
//! T order a population by its final test accuracy.
//!
//! Scores are computed per training seed, correlated against that seed's test
//! accuracies, and the per-seed correlations are averaged. Lower-is-better
//! estimators report the sign-corrected correlation so that 1.0 always means
//! a perfect ranking.

use serde::Serialize;

use crate::curves::BenchmarkDataset;
use crate::error::{Error, Result};
use crate::estimators::{EstimatorSpec, Score};
use crate::stats::{spearman, Orientation};

/// One (estimator, T) cell of the evaluation grid.
#[derive(Debug, Clone, Serialize)]
pub struct EvalRow {
    pub estimator: String,
    pub t: usize,
    /// Sign-corrected rho per seed; empty when the estimator is unavailable
    /// on this benchmark (e.g. SoVL without recorded validation losses).
    pub per_seed: Vec<(u64, f64)>,
    pub rho: Option<f64>,
    pub n: usize,
}

/// Seeds present in every record of the benchmark.
pub fn common_seeds(bench: &BenchmarkDataset) -> Vec<u64> {
    let mut seeds: Vec<u64> = bench.records[0].seeds.keys().copied().collect();
    seeds.retain(|s| bench.records.iter().all(|r| r.seeds.contains_key(s)));
    seeds
}

fn oriented(rho: f64, orientation: Orientation) -> f64 {
    match orientation {
        Orientation::LowerIsBetter => -rho,
        Orientation::HigherIsBetter => rho,
    }
}

/// Sign-corrected Spearman correlation between the estimator's scores and
/// final test accuracy for one seed.
pub fn rho_for_seed(
    bench: &BenchmarkDataset,
    spec: &EstimatorSpec,
    seed: u64,
) -> Result<f64> {
    let mut scores = Vec::with_capacity(bench.records.len());
    let mut accs = Vec::with_capacity(bench.records.len());
    for record in &bench.records {
        let curve = record.seeds.get(&seed).ok_or_else(|| {
            Error::invalid(format!("record {} missing seed {seed}", record.arch_id))
        })?;
        scores.push(spec.score(curve)?);
        accs.push(curve.final_test_acc);
    }
    match &scores[0] {
        Score::Scalar(_) => {
            let values: Vec<f64> = scores.iter().map(Score::scalar).collect();
            Ok(oriented(spearman(&values, &accs)?, spec.orientation()))
        }
        Score::PerMinibatch(first) => {
            // one correlation per minibatch index, averaged over B
            let b = first.len();
            let mut total = 0.0;
            for i in 0..b {
                let column: Vec<f64> = scores
                    .iter()
                    .map(|s| match s {
                        Score::PerMinibatch(v) => v[i],
                        Score::Scalar(_) => unreachable!("mixed score shapes"),
                    })
                    .collect();
                total += oriented(spearman(&column, &accs)?, spec.orientation());
            }
            Ok(total / b as f64)
        }
    }
}

/// Per-seed and seed-averaged rho for one estimator at one budget.
pub fn evaluate_cell(bench: &BenchmarkDataset, spec: &EstimatorSpec) -> EvalRow {
    let seeds = common_seeds(bench);
    let mut per_seed = Vec::new();
    for &seed in &seeds {
        match rho_for_seed(bench, spec, seed) {
            Ok(rho) => per_seed.push((seed, rho)),
            Err(_) => {
                return EvalRow {
                    estimator: spec.name(),
                    t: spec.t,
                    per_seed: Vec::new(),
                    rho: None,
                    n: bench.records.len(),
                }
            }
        }
    }
    let rho = per_seed.iter().map(|(_, r)| r).sum::<f64>() / per_seed.len() as f64;
    EvalRow {
        estimator: spec.name(),
        t: spec.t,
        per_seed,
        rho: Some(rho),
        n: bench.records.len(),
    }
}

/// Evaluates every estimator over every budget in the grid. Estimators whose
/// preconditions fail at a grid point (window larger than T, missing fields)
/// yield an unavailable row rather than aborting the sweep.
pub fn rank_evaluate(
    bench: &BenchmarkDataset,
    specs: &[EstimatorSpec],
    t_grid: &[usize],
) -> Vec<EvalRow> {
    let mut rows = Vec::new();
    for spec in specs {
        for &t in t_grid {
            match spec.with_t(t) {
                Ok(cell_spec) => rows.push(evaluate_cell(bench, &cell_spec)),
                Err(_) => rows.push(EvalRow {
                    estimator: format!("{}(T={t})", spec.name()),
                    t,
                    per_seed: Vec::new(),
                    rho: None,
                    n: bench.records.len(),
                }),
            }
        }
    }
    rows
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curves::{ArchitectureRecord, BenchmarkDataset, BenchmarkMeta, LearningCurve};
    use crate::estimators::EstimatorKind;
    use crate::stats::ranks;
    use std::collections::BTreeMap;

    fn bench_with_losses(level_and_acc: &[(f64, f64)]) -> BenchmarkDataset {
        let records = level_and_acc
            .iter()
            .enumerate()
            .map(|(i, &(level, acc))| {
                let mtl = vec![vec![level, level * 0.9], vec![level * 0.8, level * 0.7]];
                let curve =
                    LearningCurve::new(mtl, Some(vec![level, level * 0.8]), vec![acc, acc], acc)
                        .unwrap();
                let mut seeds = BTreeMap::new();
                seeds.insert(0u64, curve);
                ArchitectureRecord {
                    arch_id: format!("arch-{i}"),
                    encoding: vec![i],
                    seeds,
                }
            })
            .collect();
        BenchmarkDataset::new(
            BenchmarkMeta {
                name: "t".into(),
                t_end: 2,
                b: 2,
                notes: String::new(),
            },
            records,
        )
        .unwrap()
    }

    #[test]
    fn orientation_flip_reports_positive_rho_for_perfect_anti_order() {
        // lower loss level <-> higher accuracy: raw spearman is -1, the
        // sign-corrected report is +1
        let bench = bench_with_losses(&[(1.0, 0.9), (2.0, 0.8), (3.0, 0.7)]);
        let spec = EstimatorSpec::new(EstimatorKind::Tse, 2).unwrap();
        let row = evaluate_cell(&bench, &spec);
        assert!((row.rho.unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn unavailable_estimator_marks_row() {
        let mut bench = bench_with_losses(&[(1.0, 0.9), (2.0, 0.8)]);
        for r in &mut bench.records {
            for c in r.seeds.values_mut() {
                c.epoch_val_loss = None;
            }
        }
        let spec = EstimatorSpec::new(EstimatorKind::Sovl, 2).unwrap();
        let row = evaluate_cell(&bench, &spec);
        assert!(row.rho.is_none());
    }

    // Independent oracle: per-minibatch-index Spearman computed by brute
    // force (rank-then-Pearson on explicitly built columns).
    #[test]
    fn tlmini_matches_per_index_oracle() {
        let bench = bench_with_losses(&[
            (1.0, 0.9),
            (2.5, 0.6),
            (1.7, 0.8),
            (3.0, 0.5),
            (0.5, 0.95),
        ]);
        let spec = EstimatorSpec::new(EstimatorKind::TlMini, 1).unwrap();
        let got = rho_for_seed(&bench, &spec, 0).unwrap();

        let accs: Vec<f64> = bench.records.iter().map(|r| r.seeds[&0].final_test_acc).collect();
        let mut expected = 0.0;
        for i in 0..2 {
            let col: Vec<f64> = bench
                .records
                .iter()
                .map(|r| r.seeds[&0].minibatch_train_losses[0][i])
                .collect();
            let rx = ranks(&col).unwrap();
            let ry = ranks(&accs).unwrap();
            let n = rx.len() as f64;
            let mx = rx.iter().sum::<f64>() / n;
            let my = ry.iter().sum::<f64>() / n;
            let num: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
            let dx: f64 = rx.iter().map(|a| (a - mx) * (a - mx)).sum();
            let dy: f64 = ry.iter().map(|b| (b - my) * (b - my)).sum();
            expected += -(num / (dx * dy).sqrt());
        }
        expected /= 2.0;
        assert!((got - expected).abs() < 1e-12);
    }

    #[test]
    fn grid_marks_infeasible_window_rows() {
        let bench = bench_with_losses(&[(1.0, 0.9), (2.0, 0.8)]);
        let spec = EstimatorSpec::new(EstimatorKind::TseE { e: 2 }, 2).unwrap();
        let rows = rank_evaluate(&bench, &[spec], &[1, 2]);
        assert!(rows[0].rho.is_none()); // E=2 > T=1
        assert!(rows[1].rho.is_some());
    }
}
