//! SVG figures drawn from metrics logs and option analyses. Each figure is
//! written next to a CSV holding exactly the plotted values.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use serde::{Deserialize, Serialize};

use super::analysis::{csv_err, OptionAnalysis};
use crate::error::{Error, Result};
use crate::evaluation::read_metrics;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlotKind {
    /// KNN accuracy against epoch.
    KnnCurve,
    /// Elimination rate against step.
    EliminationCurve,
    /// Mean KNN accuracy per variant of an option analysis.
    OptionCompare,
}

impl PlotKind {
    fn stem(self) -> &'static str {
        match self {
            PlotKind::KnnCurve => "knn_curve",
            PlotKind::EliminationCurve => "elimination_curve",
            PlotKind::OptionCompare => "option_compare",
        }
    }
}

/// One plotted point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotPoint {
    pub label: String,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlotFiles {
    pub svg: PathBuf,
    pub values: PathBuf,
}

/// Extract the points a figure would show.
pub fn plot_points(input: &Path, kind: PlotKind) -> Result<Vec<PlotPoint>> {
    let points: Vec<PlotPoint> = match kind {
        PlotKind::KnnCurve => read_metrics(input)?
            .records
            .iter()
            .filter_map(|r| {
                r.knn_acc.map(|acc| PlotPoint {
                    label: format!("epoch {}", r.epoch + 1),
                    x: (r.epoch + 1) as f64,
                    y: acc,
                })
            })
            .collect(),
        PlotKind::EliminationCurve => read_metrics(input)?
            .records
            .iter()
            .map(|r| PlotPoint {
                label: format!("step {}", r.step),
                x: r.step as f64,
                y: r.elimination_rate,
            })
            .collect(),
        PlotKind::OptionCompare => OptionAnalysis::load(input)?
            .variants
            .iter()
            .enumerate()
            .map(|(i, v)| PlotPoint {
                label: v.name.clone(),
                x: i as f64,
                y: v.summary.overall_acc.mean,
            })
            .collect(),
    };
    if points.is_empty() {
        return Err(Error::Malformed(format!("{} holds nothing to plot", input.display())));
    }
    Ok(points)
}

/// Render `kind` from `input` into `out_dir`. Nothing is written when the
/// input has no points.
pub fn plot(input: &Path, kind: PlotKind, out_dir: &Path) -> Result<PlotFiles> {
    let points = plot_points(input, kind)?;
    std::fs::create_dir_all(out_dir)?;
    let files = PlotFiles {
        svg: out_dir.join(format!("{}.svg", kind.stem())),
        values: out_dir.join(format!("{}.csv", kind.stem())),
    };
    write_values(&files.values, &points)?;
    std::fs::write(&files.svg, render_svg(kind, &points))?;
    Ok(files)
}

fn write_values(path: &Path, points: &[PlotPoint]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    for p in points {
        w.serialize(p).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Read a values file written by [`plot`].
pub fn read_plot_values(path: &Path) -> Result<Vec<PlotPoint>> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    r.deserialize().map(|p| p.map_err(csv_err)).collect()
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 56.0;

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if hi > lo {
        (lo, hi)
    } else {
        (lo - 0.5, hi + 0.5)
    }
}

fn render_svg(kind: PlotKind, points: &[PlotPoint]) -> String {
    let (x_lo, x_hi) = match kind {
        PlotKind::OptionCompare => (-0.5, points.len() as f64 - 0.5),
        _ => range(points.iter().map(|p| p.x)),
    };
    // every plotted quantity is a rate, so keep [0, 1] in view
    let (y_lo, y_hi) = {
        let (lo, hi) = range(points.iter().map(|p| p.y));
        (lo.min(0.0), hi.max(1.0))
    };
    let sx = |x: f64| MARGIN + (x - x_lo) / (x_hi - x_lo) * (WIDTH - 2.0 * MARGIN);
    let sy = |y: f64| HEIGHT - MARGIN - (y - y_lo) / (y_hi - y_lo) * (HEIGHT - 2.0 * MARGIN);
    let (title, x_label, y_label) = match kind {
        PlotKind::KnnCurve => ("KNN top-1 accuracy", "epoch", "accuracy"),
        PlotKind::EliminationCurve => ("Eliminated similarities", "step", "elimination rate"),
        PlotKind::OptionCompare => ("KNN accuracy by variant", "variant", "mean accuracy"),
    };

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{title}</text>"#, WIDTH / 2.0);
    let (x0, y0, x1, y1) = (MARGIN, HEIGHT - MARGIN, WIDTH - MARGIN, MARGIN);
    let _ = writeln!(s, r#"<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black"/>"#);
    let _ = writeln!(s, r#"<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>"#);
    for i in 0..=4 {
        let v = y_lo + (y_hi - y_lo) * i as f64 / 4.0;
        let y = sy(v);
        let _ = writeln!(
            s,
            r##"<line x1="{x0}" y1="{y:.2}" x2="{x1}" y2="{y:.2}" stroke="#ddd"/><text x="{:.2}" y="{:.2}" text-anchor="end">{v:.3}</text>"##,
            x0 - 4.0,
            y + 4.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">{x_label}</text>"#,
        WIDTH / 2.0,
        HEIGHT - 12.0
    );
    let _ = writeln!(
        s,
        r#"<text x="14" y="{}" text-anchor="middle" transform="rotate(-90 14 {})">{y_label}</text>"#,
        HEIGHT / 2.0,
        HEIGHT / 2.0
    );

    match kind {
        PlotKind::OptionCompare => {
            let bar = (WIDTH - 2.0 * MARGIN) / points.len() as f64 * 0.6;
            for p in points {
                let (cx, top) = (sx(p.x), sy(p.y));
                let _ = writeln!(
                    s,
                    r##"<rect x="{:.2}" y="{top:.2}" width="{bar:.2}" height="{:.2}" fill="#4878a8"/>"##,
                    cx - bar / 2.0,
                    (y0 - top).max(0.0)
                );
                let _ = writeln!(
                    s,
                    r#"<text x="{cx:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
                    y0 + 14.0,
                    p.label
                );
            }
        }
        _ => {
            for i in 0..=4 {
                let v = x_lo + (x_hi - x_lo) * i as f64 / 4.0;
                let _ = writeln!(
                    s,
                    r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{v:.0}</text>"#,
                    sx(v),
                    y0 + 14.0
                );
            }
            let path: Vec<String> = points.iter().map(|p| format!("{:.2},{:.2}", sx(p.x), sy(p.y))).collect();
            let _ = writeln!(
                s,
                r##"<polyline fill="none" stroke="#c0392b" stroke-width="1.5" points="{}"/>"##,
                path.join(" ")
            );
        }
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluation::{track_run, MetricRecord};

    fn log_with(dir: &Path, values: &[f64]) -> PathBuf {
        let p = dir.join("metrics.jsonl");
        let records = values.iter().enumerate().map(|(i, &v)| MetricRecord {
            step: i as u64,
            epoch: i,
            loss: 1.0,
            elimination_rate: v,
            mi_bound: 0.0,
            knn_acc: Some(v),
            lr: 0.1,
        });
        track_run(&p, &serde_json::Value::Null, records).unwrap();
        p
    }

    #[test]
    fn empty_log_is_an_error_and_writes_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let p = log_with(dir.path(), &[]);
        let out = dir.path().join("figs");
        assert!(plot(&p, PlotKind::KnnCurve, &out).is_err());
        assert!(!out.exists());
    }

    #[test]
    fn monotone_series_round_trips_through_values_file() {
        let dir = tempfile::tempdir().unwrap();
        let values = [0.1, 0.25, 0.3333333333333333, 0.5, 0.9];
        let p = log_with(dir.path(), &values);
        let files = plot(&p, PlotKind::EliminationCurve, &dir.path().join("figs")).unwrap();
        let back = read_plot_values(&files.values).unwrap();
        assert_eq!(back.iter().map(|p| p.y).collect::<Vec<_>>(), values);
        assert!(back.windows(2).all(|w| w[1].y > w[0].y));
        let svg = std::fs::read_to_string(&files.svg).unwrap();
        assert!(svg.contains("<polyline"));
        // screen y decreases as the value rises
        let pts = svg.split("points=\"").nth(1).unwrap().split('"').next().unwrap();
        let ys: Vec<f64> = pts.split(' ').map(|xy| xy.split(',').nth(1).unwrap().parse().unwrap()).collect();
        assert!(ys.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn rendering_is_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let p = log_with(dir.path(), &[0.2, 0.4]);
        let a = plot(&p, PlotKind::KnnCurve, &dir.path().join("a")).unwrap();
        let b = plot(&p, PlotKind::KnnCurve, &dir.path().join("b")).unwrap();
        assert_eq!(std::fs::read(a.svg).unwrap(), std::fs::read(b.svg).unwrap());
    }
}
