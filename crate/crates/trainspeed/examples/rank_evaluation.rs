//! Rank-correlation evaluation: how well each estimator at budget T orders
//! a population of architectures by final test accuracy.
//!
//! Run with: cargo run --release --example rank_evaluation

use trainspeed::estimators::EstimatorSpec;
use trainspeed::rankeval::rank_evaluate;
use trainspeed::toytrain::{
    build_toy_benchmark, enumerate_toy_space, make_synthetic_dataset, Activation, Schedule,
    TrainConfig,
};

fn main() -> trainspeed::Result<()> {
    let space = enumerate_toy_space(&[2, 4, 8, 16], (2, 2), &[Activation::Relu])?;
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
    let bench = build_toy_benchmark(&space, &dataset, &cfg, &[0, 1, 2], "rankdemo")?;

    let specs: Vec<EstimatorSpec> = ["tse", "tse-e@E=1", "tse-ema@g=0.999", "sovl", "vacc-es"]
        .iter()
        .map(|s| EstimatorSpec::parse(s))
        .collect::<trainspeed::Result<_>>()?;
    let t_grid = [1, 2, 5, 10, 20];

    println!("{:28} {}", "estimator", t_grid.map(|t| format!("T={t:<3}")).join("  "));
    for (i, spec) in specs.iter().enumerate() {
        let rows = rank_evaluate(&bench, &specs[i..i + 1], &t_grid);
        let cells: Vec<String> = rows
            .iter()
            .map(|r| match r.rho {
                Some(rho) => format!("{rho:+.2}"),
                None => "  NA ".into(),
            })
            .collect();
        println!("{:28} {}", spec.name(), cells.join("  "));
    }
    Ok(())
}
