//! Toy differentiable search where the architecture parameters descend the
//! accumulated training-loss gradient instead of a validation gradient. Each
//! outer step derives the argmax architecture and retrains it from scratch.
//!
//! Run with: cargo run --release --example diffnas_tse

use trainspeed::diffnas::{darts_tse_run, DiffNasConfig, ToyCell, DEFAULT_OPS};
use trainspeed::seeding::stream_rng;
use trainspeed::toytrain::make_synthetic_dataset;

fn main() -> trainspeed::Result<()> {
    let data = make_synthetic_dataset(8, 3, 192, 64, 128, 0.6, 0)?;
    let cfg = DiffNasConfig {
        k: 100,
        epochs: 50,
        batches_per_epoch: 12,
        batch_size: 16,
        lr_w: 0.05,
        lr_alpha: 0.1,
        seed: 0,
        retrain_epochs: 10,
        retrain_lr: 0.05,
    };
    let mut rng = stream_rng(cfg.seed, "diffnas/init", 0);
    let mut cell = ToyCell::new(data.dim, data.classes, 2, &DEFAULT_OPS, &mut rng)?;

    let trace = darts_tse_run(&mut cell, &data, &cfg)?;
    println!(
        "{} alpha updates, {} weight updates (K = {})",
        trace.alpha_updates, trace.w_updates, cfg.k
    );
    for step in &trace.steps {
        println!(
            "step {:>2}  derived {:?}  retrain test acc {:.4}",
            step.step, step.derived_encoding, step.retrain_test_acc
        );
    }
    println!("final encoding {:?} over ops {:?}", trace.final_encoding, DEFAULT_OPS);
    Ok(())
}
