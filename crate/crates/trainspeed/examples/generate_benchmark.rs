//! Trains a small architecture space from scratch and saves the learning
//! curves as a JSON-lines benchmark.
//!
//! Run with: cargo run --release --example generate_benchmark

use trainspeed::toytrain::{
    build_toy_benchmark, enumerate_toy_space, make_synthetic_dataset, Activation, Schedule,
    TrainConfig,
};

fn main() -> trainspeed::Result<()> {
    let space = enumerate_toy_space(&[4, 8, 16], (1, 2), &[Activation::Relu, Activation::Tanh])?;
    println!("{} architectures, e.g. {}", space.len(), space[0].arch_id());

    let dataset = make_synthetic_dataset(8, 3, 192, 64, 128, 0.6, 0)?;
    let cfg = TrainConfig {
        epochs: 12,
        batch_size: 16,
        learning_rate: 0.1,
        schedule: Schedule::Constant,
        momentum: 0.9,
        weight_decay: 1e-4,
        seed: 0,
    };
    let bench = build_toy_benchmark(&space, &dataset, &cfg, &[0, 1], "demo")?;

    for record in &bench.records {
        let curve = &record.seeds[&0];
        println!(
            "{:24} first-epoch loss {:.3}  final val acc {:.3}  test acc {:.3}",
            record.arch_id,
            curve.epoch_sums()[0],
            curve.epoch_val_acc.last().unwrap(),
            curve.final_test_acc
        );
    }

    let path = std::env::temp_dir().join("demo_benchmark.jsonl");
    bench.save(&path)?;
    println!("saved to {}", path.display());
    Ok(())
}
