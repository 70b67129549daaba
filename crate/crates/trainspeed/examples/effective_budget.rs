//! Effective-training-budget procedure: pick T as 0.9 times the earliest
//! epoch at which any sampled curve's mean epoch loss drops below the
//! overfit threshold.
//!
//! Run with: cargo run --example effective_budget

use trainspeed::curves::LearningCurve;
use trainspeed::estimators::{effective_budget, DEFAULT_OVERFIT_THRESHOLD};

/// Curve whose mean epoch loss decays geometrically and crosses the
/// threshold at `crossing_epoch`.
fn decaying_curve(t_end: usize, crossing_epoch: usize, threshold: f64) -> LearningCurve {
    let rate = (threshold / 2.0f64).powf(1.0 / crossing_epoch as f64);
    let mtl = (1..=t_end)
        .map(|t| vec![2.0 * rate.powi(t as i32); 4])
        .collect();
    LearningCurve::new(mtl, None, vec![0.5; t_end], 0.8).unwrap()
}

fn main() -> trainspeed::Result<()> {
    let t_end = 150;
    let threshold = DEFAULT_OVERFIT_THRESHOLD;

    let curves: Vec<LearningCurve> = [50, 80, 120]
        .iter()
        .map(|&c| decaying_curve(t_end, c, threshold))
        .collect();
    let refs: Vec<&LearningCurve> = curves.iter().collect();
    let t = effective_budget(&refs, threshold, t_end)?;
    println!("crossings at epochs 50/80/120 -> T_effective = {t}");

    // a curve that never crosses falls back to t_end
    let flat = LearningCurve::new(vec![vec![1.0; 4]; t_end], None, vec![0.5; t_end], 0.8).unwrap();
    let t = effective_budget(&[&flat], threshold, t_end)?;
    println!("no crossing -> T_effective = floor(0.9 * {t_end}) = {t}");
    Ok(())
}
