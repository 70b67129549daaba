//! Dependency-free SVG line charts for report output.

use std::fmt::Write as _;

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone)]
pub struct Chart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
}

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 440.0;
const MARGIN_L: f64 = 64.0;
const MARGIN_R: f64 = 150.0;
const MARGIN_T: f64 = 40.0;
const MARGIN_B: f64 = 52.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
];

fn nice_bounds(lo: f64, hi: f64) -> (f64, f64) {
    if lo == hi {
        // degenerate range: pad around the single value
        let pad = if lo == 0.0 { 1.0 } else { lo.abs() * 0.1 };
        (lo - pad, hi + pad)
    } else {
        let pad = (hi - lo) * 0.05;
        (lo - pad, hi + pad)
    }
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

impl Chart {
    /// Renders the chart as a standalone SVG document.
    pub fn render(&self) -> Result<String> {
        if self.series.is_empty() || self.series.iter().all(|s| s.points.is_empty()) {
            return Err(Error::invalid("chart needs at least one non-empty series"));
        }
        let points = self.series.iter().flat_map(|s| s.points.iter());
        if points.clone().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
            return Err(Error::NonFinite("chart point".into()));
        }
        let (mut x_lo, mut x_hi) = (f64::INFINITY, f64::NEG_INFINITY);
        let (mut y_lo, mut y_hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for &(x, y) in points {
            x_lo = x_lo.min(x);
            x_hi = x_hi.max(x);
            y_lo = y_lo.min(y);
            y_hi = y_hi.max(y);
        }
        let (x_lo, x_hi) = nice_bounds(x_lo, x_hi);
        let (y_lo, y_hi) = nice_bounds(y_lo, y_hi);

        let plot_w = WIDTH - MARGIN_L - MARGIN_R;
        let plot_h = HEIGHT - MARGIN_T - MARGIN_B;
        let sx = |x: f64| MARGIN_L + (x - x_lo) / (x_hi - x_lo) * plot_w;
        let sy = |y: f64| MARGIN_T + plot_h - (y - y_lo) / (y_hi - y_lo) * plot_h;

        let mut out = String::new();
        writeln!(
            out,
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
             viewBox=\"0 0 {WIDTH} {HEIGHT}\" font-family=\"sans-serif\" font-size=\"12\">"
        )
        .unwrap();
        writeln!(out, "<rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>").unwrap();
        writeln!(
            out,
            "<text x=\"{:.1}\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">{}</text>",
            MARGIN_L + plot_w / 2.0,
            escape(&self.title)
        )
        .unwrap();

        // axes
        writeln!(
            out,
            "<rect x=\"{MARGIN_L}\" y=\"{MARGIN_T}\" width=\"{plot_w:.1}\" height=\"{plot_h:.1}\" \
             fill=\"none\" stroke=\"#333\"/>"
        )
        .unwrap();

        // ticks and grid lines
        let n_ticks = 5;
        for i in 0..=n_ticks {
            let f = i as f64 / n_ticks as f64;
            let xv = x_lo + f * (x_hi - x_lo);
            let yv = y_lo + f * (y_hi - y_lo);
            let xp = sx(xv);
            let yp = sy(yv);
            writeln!(
                out,
                "<line x1=\"{xp:.1}\" y1=\"{:.1}\" x2=\"{xp:.1}\" y2=\"{:.1}\" stroke=\"#ccc\"/>",
                MARGIN_T,
                MARGIN_T + plot_h
            )
            .unwrap();
            writeln!(
                out,
                "<line x1=\"{MARGIN_L}\" y1=\"{yp:.1}\" x2=\"{:.1}\" y2=\"{yp:.1}\" stroke=\"#ccc\"/>",
                MARGIN_L + plot_w
            )
            .unwrap();
            writeln!(
                out,
                "<text x=\"{xp:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{xv:.3}</text>",
                MARGIN_T + plot_h + 18.0
            )
            .unwrap();
            writeln!(
                out,
                "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\">{yv:.3}</text>",
                MARGIN_L - 6.0,
                yp + 4.0
            )
            .unwrap();
        }

        writeln!(
            out,
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{}</text>",
            MARGIN_L + plot_w / 2.0,
            HEIGHT - 10.0,
            escape(&self.x_label)
        )
        .unwrap();
        writeln!(
            out,
            "<text x=\"16\" y=\"{:.1}\" text-anchor=\"middle\" transform=\"rotate(-90 16 {:.1})\">{}</text>",
            MARGIN_T + plot_h / 2.0,
            MARGIN_T + plot_h / 2.0,
            escape(&self.y_label)
        )
        .unwrap();

        // series polylines and legend
        for (si, series) in self.series.iter().enumerate() {
            let color = PALETTE[si % PALETTE.len()];
            let coords: Vec<String> = series
                .points
                .iter()
                .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
                .collect();
            writeln!(
                out,
                "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.8\"/>",
                coords.join(" ")
            )
            .unwrap();
            let ly = MARGIN_T + 14.0 + 18.0 * si as f64;
            let lx = MARGIN_L + plot_w + 12.0;
            writeln!(
                out,
                "<line x1=\"{lx:.1}\" y1=\"{ly:.1}\" x2=\"{:.1}\" y2=\"{ly:.1}\" stroke=\"{color}\" stroke-width=\"2\"/>",
                lx + 20.0
            )
            .unwrap();
            writeln!(
                out,
                "<text x=\"{:.1}\" y=\"{:.1}\">{}</text>",
                lx + 26.0,
                ly + 4.0,
                escape(&series.label)
            )
            .unwrap();
        }

        writeln!(out, "</svg>").unwrap();
        Ok(out)
    }
}
