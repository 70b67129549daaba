//! Renders a rho-vs-T line chart with the built-in SVG emitter.
//!
//! Run with: cargo run --example svg_chart

use trainspeed::svg::{Chart, Series};

fn main() -> trainspeed::Result<()> {
    let chart = Chart {
        title: "Rank correlation vs training budget".into(),
        x_label: "T (epochs)".into(),
        y_label: "Spearman rho".into(),
        series: vec![
            Series {
                label: "tse-ema".into(),
                points: vec![(1.0, 0.25), (2.0, 0.41), (5.0, 0.58), (10.0, 0.70), (20.0, 0.72)],
            },
            Series {
                label: "vacc-es".into(),
                points: vec![(1.0, 0.35), (2.0, 0.40), (5.0, 0.48), (10.0, 0.60), (20.0, 0.69)],
            },
        ],
    };
    let path = std::env::temp_dir().join("rho_vs_t.svg");
    std::fs::write(&path, chart.render()?).expect("write svg");
    println!("wrote {}", path.display());
    Ok(())
}
