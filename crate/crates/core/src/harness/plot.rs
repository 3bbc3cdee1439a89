//! Learning-curve charts as standalone SVG.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

use super::metrics::{write_csv, MetricsTable, METRICS_FILE};
use super::run::RunManifest;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 440.0;
const MARGIN: (f64, f64, f64, f64) = (70.0, 20.0, 30.0, 50.0); // left, right, top, bottom
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

/// One curve group: runs sharing an algorithm, resampled to a common grid.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveGroup {
    pub label: String,
    pub runs: Vec<String>,
    pub iterations: Vec<f64>,
    pub mean: Vec<f64>,
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

/// Piecewise-linear value at `x`; held flat outside the observed range.
fn sample_at(series: &[(f64, f64)], x: f64) -> f64 {
    let first = series[0];
    let last = series[series.len() - 1];
    if x <= first.0 {
        return first.1;
    }
    if x >= last.0 {
        return last.1;
    }
    let k = series.partition_point(|p| p.0 <= x);
    let (a, b) = (series[k - 1], series[k]);
    a.1 + (b.1 - a.1) * (x - a.0) / (b.0 - a.0)
}

pub fn group_curves(series: &[(String, String, Vec<(f64, f64)>)]) -> Vec<CurveGroup> {
    let mut groups: BTreeMap<&str, Vec<(&str, &[(f64, f64)])>> = BTreeMap::new();
    for (label, run, s) in series {
        if !s.is_empty() {
            groups.entry(label).or_default().push((run, s));
        }
    }
    groups
        .into_iter()
        .map(|(label, members)| {
            let mut grid: Vec<f64> = members.iter().flat_map(|(_, s)| s.iter().map(|p| p.0)).collect();
            grid.sort_by(f64::total_cmp);
            grid.dedup();
            let samples: Vec<Vec<f64>> = grid
                .iter()
                .map(|&x| members.iter().map(|(_, s)| sample_at(s, x)).collect())
                .collect();
            CurveGroup {
                label: label.to_string(),
                runs: members.iter().map(|(r, _)| r.to_string()).collect(),
                mean: samples.iter().map(|v| v.iter().sum::<f64>() / v.len() as f64).collect(),
                min: samples.iter().map(|v| v.iter().copied().fold(f64::INFINITY, f64::min)).collect(),
                max: samples.iter().map(|v| v.iter().copied().fold(f64::NEG_INFINITY, f64::max)).collect(),
                iterations: grid,
            }
        })
        .collect()
}

fn nice_ticks(lo: f64, hi: f64, target: usize) -> Vec<f64> {
    let span = (hi - lo).max(1e-12);
    let raw = span / target as f64;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| span / s <= target as f64)
        .unwrap_or(10.0 * mag);
    let mut t = (lo / step).ceil() * step;
    let mut out = Vec::new();
    while t <= hi + 1e-9 * span {
        out.push(if t.abs() < step * 1e-9 { 0.0 } else { t });
        t += step;
    }
    out
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace("--", "- -")
}

pub fn render_svg(groups: &[CurveGroup], metric: &str, provenance: &[String]) -> String {
    let xs = groups.iter().flat_map(|g| g.iterations.iter().copied());
    let (x_lo, x_hi) = xs.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
    let ys = groups.iter().flat_map(|g| g.min.iter().chain(&g.max).copied());
    let (mut y_lo, mut y_hi) = ys.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), y| (a.min(y), b.max(y)));
    if y_hi - y_lo < 1e-12 {
        y_lo -= 1.0;
        y_hi += 1.0;
    }
    let x_hi = if x_hi > x_lo { x_hi } else { x_lo + 1.0 };
    let (ml, mr, mt, mb) = MARGIN;
    let px = |x: f64| ml + (x - x_lo) / (x_hi - x_lo) * (WIDTH - ml - mr);
    let py = |y: f64| HEIGHT - mb - (y - y_lo) / (y_hi - y_lo) * (HEIGHT - mt - mb);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(s, "<!-- metric: {} -->", escape(metric));
    for p in provenance {
        let _ = writeln!(s, "<!-- run: {} -->", escape(p));
    }
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<g stroke="black" fill="none"><line x1="{ml}" y1="{b}" x2="{r}" y2="{b}"/><line x1="{ml}" y1="{mt}" x2="{ml}" y2="{b}"/></g>"#,
        b = HEIGHT - mb,
        r = WIDTH - mr
    );
    let _ = writeln!(s, r#"<g font-family="sans-serif" font-size="11">"#);
    if x_lo.is_finite() {
        for t in nice_ticks(x_lo, x_hi, 6) {
            let _ = writeln!(
                s,
                r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
                px(t),
                HEIGHT - mb + 16.0,
                t
            );
        }
        for t in nice_ticks(y_lo, y_hi, 6) {
            let _ = writeln!(
                s,
                r##"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text><line x1="{ml}" x2="{:.1}" y1="{:.1}" y2="{:.1}" stroke="#ddd"/>"##,
                ml - 6.0,
                py(t) + 4.0,
                (t * 1e6).round() / 1e6,
                WIDTH - mr,
                py(t),
                py(t)
            );
        }
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">iteration</text>"#,
        (WIDTH + ml - mr) / 2.0,
        HEIGHT - 12.0
    );
    let _ = writeln!(
        s,
        r#"<text x="14" y="{:.1}" text-anchor="middle" transform="rotate(-90 14 {:.1})">{}</text>"#,
        HEIGHT / 2.0,
        HEIGHT / 2.0,
        escape(metric)
    );
    let _ = writeln!(s, "</g>");
    for (gi, g) in groups.iter().enumerate() {
        let color = PALETTE[gi % PALETTE.len()];
        if g.runs.len() > 1 {
            let upper = g.iterations.iter().zip(&g.max).map(|(&x, &y)| format!("{:.2},{:.2}", px(x), py(y)));
            let lower = g.iterations.iter().zip(&g.min).rev().map(|(&x, &y)| format!("{:.2},{:.2}", px(x), py(y)));
            let pts: Vec<String> = upper.chain(lower).collect();
            let _ = writeln!(
                s,
                r#"<polygon points="{}" fill="{color}" fill-opacity="0.2" stroke="none"/>"#,
                pts.join(" ")
            );
        }
        let pts: Vec<String> = g
            .iterations
            .iter()
            .zip(&g.mean)
            .map(|(&x, &y)| format!("{:.2},{:.2}", px(x), py(y)))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.8"/>"#,
            pts.join(" ")
        );
        let ly = mt + 14.0 + 16.0 * gi as f64;
        let _ = writeln!(
            s,
            r#"<g font-family="sans-serif" font-size="12"><line x1="{:.1}" x2="{:.1}" y1="{ly:.1}" y2="{ly:.1}" stroke="{color}" stroke-width="3"/><text x="{:.1}" y="{:.1}">{} (n={})</text></g>"#,
            WIDTH - mr - 150.0,
            WIDTH - mr - 130.0,
            WIDTH - mr - 124.0,
            ly + 4.0,
            escape(&g.label),
            g.runs.len()
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Reads each run's metrics, groups runs by algorithm, writes the SVG at
/// `out` and the resampled table next to it with a `.csv` extension.
pub fn cmd_plot(run_dirs: &[PathBuf], metric: &str, out: &Path) -> Result<(PathBuf, PathBuf)> {
    if run_dirs.is_empty() {
        return Err(Error::Config("no runs given to plot".into()));
    }
    let column = metric.replace('-', "_");
    let mut series = Vec::new();
    let mut provenance = Vec::new();
    for dir in run_dirs {
        let manifest = RunManifest::read(dir)?;
        let table = MetricsTable::read(&dir.join(METRICS_FILE))?;
        let s = table.series(&column, "eval")?;
        provenance.push(format!(
            "{} algo={} seed={} config={} source={}",
            dir.display(),
            manifest.algo.as_str(),
            manifest.seed,
            manifest.config_hash,
            manifest.source_hash
        ));
        series.push((manifest.algo.as_str().to_string(), dir.display().to_string(), s));
    }
    let groups = group_curves(&series);
    if groups.is_empty() {
        return Err(Error::Config(format!("no evaluation rows carry `{column}`")));
    }
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(out, render_svg(&groups, &column, &provenance)).map_err(|e| Error::io(out, e))?;

    let table_path = out.with_extension("csv");
    let mut grid: Vec<f64> = groups.iter().flat_map(|g| g.iterations.iter().copied()).collect();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    let mut header = vec!["iteration".to_string()];
    for g in &groups {
        header.extend(["mean", "min", "max"].iter().map(|s| format!("{}_{s}", g.label)));
    }
    let rows: Vec<Vec<String>> = grid
        .iter()
        .map(|&x| {
            let mut row = vec![x.to_string()];
            for g in &groups {
                match g.iterations.iter().position(|&i| i == x) {
                    Some(k) => row.extend([g.mean[k], g.min[k], g.max[k]].iter().map(|v| v.to_string())),
                    None => row.extend(std::iter::repeat_n(String::new(), 3)),
                }
            }
            row
        })
        .collect();
    write_csv(&table_path, &header, &rows)?;
    Ok((out.to_path_buf(), table_path))
}
