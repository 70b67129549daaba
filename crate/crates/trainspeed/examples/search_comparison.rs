//! Compares search strategies (random search, regularized evolution, TPE)
//! under simulated-runtime accounting: a cheap early-budget estimator lets a
//! search make many more queries than ground truth for the same cost.
//!
//! Run with: cargo run --release --example search_comparison

use trainspeed::estimators::EstimatorSpec;
use trainspeed::search::{compare_strategies, Evaluator, Strategy, TpeConfig};
use trainspeed::toytrain::{
    build_toy_benchmark, enumerate_toy_space, make_synthetic_dataset, Activation, Schedule,
    TrainConfig,
};

fn main() -> trainspeed::Result<()> {
    let space = enumerate_toy_space(&[2, 4, 8, 16], (2, 2), &[Activation::Relu, Activation::Tanh])?;
    let dataset = make_synthetic_dataset(16, 4, 256, 128, 256, 0.7, 0)?;
    let cfg = TrainConfig {
        epochs: 20,
        batch_size: 32,
        learning_rate: 0.1,
        schedule: Schedule::Constant,
        momentum: 0.9,
        weight_decay: 1e-4,
        seed: 0,
    };
    let bench = build_toy_benchmark(&space, &dataset, &cfg, &[0], "searchdemo")?;

    let evaluators = [
        Evaluator::GroundTruth,
        Evaluator::Estimator(EstimatorSpec::parse("tse-ema@T=5")?),
    ];
    let strategies = [
        Strategy::RandomSearch,
        Strategy::RegularizedEvolution { pop_size: 8, sample_size: 3 },
        Strategy::Tpe(TpeConfig { n_init: 5, ..TpeConfig::default() }),
    ];
    let budget = 0.5 * (space.len() * cfg.epochs) as f64;
    let report = compare_strategies(&bench, &evaluators, &strategies, budget, 10, 4)?;

    println!("{:>4} {:>22} {:>8} {:>9} {:>8}", "strat", "evaluator", "cost", "mean_acc", "stderr");
    for row in &report.rows {
        println!(
            "{:>4} {:>22} {:>8.0} {:>9.4} {:>8.4}",
            row.strategy, row.evaluator, row.cost, row.mean_acc, row.stderr
        );
    }
    Ok(())
}
