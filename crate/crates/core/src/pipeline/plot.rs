//! Log-rank and log-corank plot data with TSV and SVG rendering.
//!
//! Convention: log-size on the horizontal axis, log-(co)rank on the vertical.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::model::{DistributionModel, Space};
use crate::sample::Sample;

pub const GRID_POINTS: usize = 512;
const MAX_DRAWN_POINTS: usize = 2000;
const COLORS: [&str; 6] = [
    "#d62728", "#1f77b4", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlotKind {
    /// `ln(n − i + 1)` against `y_(i)`; model curve `ln(n·(1 − F))`.
    Rank,
    /// `ln(i)` against `y_(i)`; model curve `ln(n·F)`.
    Corank,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Curve {
    pub name: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotTable {
    pub kind: PlotKind,
    pub n: usize,
    pub empirical_y: Vec<f64>,
    pub empirical: Vec<f64>,
    pub grid: Vec<f64>,
    pub curves: Vec<Curve>,
}

fn coord(model: &DistributionModel, y: f64) -> f64 {
    match model.space() {
        Space::Size => y.exp(),
        Space::Log => y,
    }
}

pub(crate) fn build_table(
    kind: PlotKind,
    sample: &Sample,
    models: &[(String, DistributionModel)],
    points: usize,
) -> PlotTable {
    let n = sample.len();
    let nf = n as f64;
    let logs = sample.logs();
    let empirical = (1..=n)
        .map(|i| match kind {
            PlotKind::Rank => ((n - i + 1) as f64).ln(),
            PlotKind::Corank => (i as f64).ln(),
        })
        .collect();
    let (lo, hi) = (logs[0], logs[n - 1]);
    let k = points.max(2) - 1;
    let grid: Vec<f64> = (0..=k)
        .map(|j| lo + (hi - lo) * j as f64 / k as f64)
        .collect();
    let curves = models
        .iter()
        .map(|(name, m)| Curve {
            name: name.clone(),
            values: grid
                .iter()
                .map(|&y| {
                    let x = coord(m, y);
                    let p = match kind {
                        PlotKind::Rank => m.sf(x),
                        PlotKind::Corank => m.cdf(x),
                    };
                    (nf * p).ln()
                })
                .collect(),
        })
        .collect();
    PlotTable {
        kind,
        n,
        empirical_y: logs.to_vec(),
        empirical,
        grid,
        curves,
    }
}

/// Rank-plot table for the sample and the given fitted models.
pub fn rank_plot_data(sample: &Sample, models: &[(String, DistributionModel)]) -> PlotTable {
    build_table(PlotKind::Rank, sample, models, GRID_POINTS)
}

/// Corank-plot table for the sample and the given fitted models.
pub fn corank_plot_data(sample: &Sample, models: &[(String, DistributionModel)]) -> PlotTable {
    build_table(PlotKind::Corank, sample, models, GRID_POINTS)
}

fn num(v: f64) -> String {
    if v.is_finite() {
        format!("{v}")
    } else {
        "nan".into()
    }
}

impl PlotTable {
    fn axis_label(&self) -> &'static str {
        match self.kind {
            PlotKind::Rank => "log_rank",
            PlotKind::Corank => "log_corank",
        }
    }

    /// `log_size<TAB>log_rank` for every observation.
    pub fn empirical_tsv(&self) -> String {
        let mut out = format!("log_size\t{}\n", self.axis_label());
        for (y, r) in self.empirical_y.iter().zip(&self.empirical) {
            let _ = writeln!(out, "{}\t{}", num(*y), num(*r));
        }
        out
    }

    /// Grid column followed by one column per model.
    pub fn models_tsv(&self) -> String {
        let mut out = String::from("log_size");
        for c in &self.curves {
            out.push('\t');
            out.push_str(&c.name);
        }
        out.push('\n');
        for (j, y) in self.grid.iter().enumerate() {
            out.push_str(&num(*y));
            for c in &self.curves {
                out.push('\t');
                out.push_str(&num(c.values[j]));
            }
            out.push('\n');
        }
        out
    }

    /// A standalone SVG. Each series group carries `data-series` (the TSV
    /// column name) and `data-source` (the TSV file it comes from).
    pub fn to_svg(&self, title: &str, empirical_file: &str, models_file: &str) -> String {
        let (w, h) = (640.0, 480.0);
        let (left, right, top, bottom) = (60.0, 20.0, 40.0, 50.0);
        let x_lo = self.grid[0];
        let x_hi = *self.grid.last().expect("grid is non-empty");
        let y_lo = -0.5;
        let y_hi = (self.n as f64).ln() + 0.5;
        let x_span = if x_hi > x_lo { x_hi - x_lo } else { 1.0 };
        let px = |x: f64| left + (x - x_lo) / x_span * (w - left - right);
        let py = |y: f64| top + (y_hi - y) / (y_hi - y_lo) * (h - top - bottom);

        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
        );
        let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
        let _ = writeln!(
            s,
            r#"<text x="{}" y="24" text-anchor="middle" font-family="sans-serif" font-size="15">{}</text>"#,
            w / 2.0,
            escape(title)
        );
        let _ = writeln!(
            s,
            r#"<rect x="{left}" y="{top}" width="{}" height="{}" fill="none" stroke="black"/>"#,
            w - left - right,
            h - top - bottom
        );
        for t in 0..=4 {
            let xv = x_lo + x_span * t as f64 / 4.0;
            let yv = y_lo + (y_hi - y_lo) * t as f64 / 4.0;
            let _ = writeln!(
                s,
                r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" font-family="sans-serif" font-size="11">{:.2}</text>"#,
                px(xv),
                h - bottom + 16.0,
                xv
            );
            let _ = writeln!(
                s,
                r#"<text x="{:.1}" y="{:.1}" text-anchor="end" font-family="sans-serif" font-size="11">{:.2}</text>"#,
                left - 6.0,
                py(yv) + 4.0,
                yv
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="middle" font-family="sans-serif" font-size="12">log size</text>"#,
            (left + w - right) / 2.0,
            h - 12.0
        );
        let _ = writeln!(
            s,
            r#"<text x="16" y="{}" text-anchor="middle" font-family="sans-serif" font-size="12" transform="rotate(-90 16 {})">{}</text>"#,
            (top + h - bottom) / 2.0,
            (top + h - bottom) / 2.0,
            self.axis_label().replace('_', " ")
        );

        let step = self.empirical_y.len().div_ceil(MAX_DRAWN_POINTS).max(1);
        let _ = writeln!(
            s,
            r#"<g data-series="empirical" data-source="{}" fill="black">"#,
            escape(empirical_file)
        );
        for (i, (y, r)) in self.empirical_y.iter().zip(&self.empirical).enumerate() {
            if i % step == 0 || i + 1 == self.empirical_y.len() {
                let _ = writeln!(
                    s,
                    r#"<circle cx="{:.2}" cy="{:.2}" r="1.5"/>"#,
                    px(*y),
                    py(*r)
                );
            }
        }
        s.push_str("</g>\n");

        for (c_idx, c) in self.curves.iter().enumerate() {
            let color = COLORS[c_idx % COLORS.len()];
            let _ = writeln!(
                s,
                r#"<g data-series="{}" data-source="{}" fill="none" stroke="{color}" stroke-width="1.5">"#,
                escape(&c.name),
                escape(models_file)
            );
            let mut segment: Vec<String> = Vec::new();
            let flush = |seg: &mut Vec<String>, s: &mut String| {
                if seg.len() > 1 {
                    let _ = writeln!(s, r#"<polyline points="{}"/>"#, seg.join(" "));
                }
                seg.clear();
            };
            for (x, v) in self.grid.iter().zip(&c.values) {
                if v.is_finite() && *v >= y_lo && *v <= y_hi {
                    segment.push(format!("{:.2},{:.2}", px(*x), py(*v)));
                } else {
                    flush(&mut segment, &mut s);
                }
            }
            flush(&mut segment, &mut s);
            let _ = writeln!(
                s,
                r#"<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="11" fill="{color}" stroke="none">{}</text>"#,
                w - right - 80.0,
                top + 16.0 + 14.0 * c_idx as f64,
                escape(&c.name)
            );
            s.push_str("</g>\n");
        }
        s.push_str("</svg>\n");
        s
    }
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}
