//! SVG line charts for metric series, plus an HTML index.
//!
//! Output is a pure function of the series: coordinates are printed with a
//! fixed number of decimals and files are written in series order.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::run::{read_metrics_csv, METRICS_FILE};
use crate::error::{LabError, Result};
use crate::metrics::MetricSeries;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 360.0;
const MARGIN: f64 = 48.0;

/// Series drawn as staircases instead of straight segments.
fn is_step_series(name: &str) -> bool {
    name == "repertoire_size"
}

pub fn file_name_for(series: &str) -> String {
    let safe: String = series
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '_' || c == '-' { c } else { '_' })
        .collect();
    format!("{safe}.svg")
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Path data of the chart line, in SVG user units.
pub fn path_data(series: &MetricSeries) -> String {
    let pts = &series.points;
    if pts.is_empty() {
        return String::new();
    }
    let (x0, x1) = (pts[0].0 as f64, pts[pts.len() - 1].0 as f64);
    let (mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY);
    for &(_, v) in pts {
        y0 = y0.min(v);
        y1 = y1.max(v);
    }
    let xspan = if x1 > x0 { x1 - x0 } else { 1.0 };
    let yspan = if y1 > y0 { y1 - y0 } else { 1.0 };
    let px = |x: f64| MARGIN + (x - x0) / xspan * (WIDTH - 2.0 * MARGIN);
    // constant series sit in the middle of the plot
    let py = |y: f64| {
        if y1 > y0 {
            HEIGHT - MARGIN - (y - y0) / yspan * (HEIGHT - 2.0 * MARGIN)
        } else {
            HEIGHT / 2.0
        }
    };
    let mut d = String::new();
    let step = is_step_series(&series.name);
    for (i, &(x, y)) in pts.iter().enumerate() {
        let (sx, sy) = (px(x as f64), py(y));
        if i == 0 {
            let _ = write!(d, "M{sx:.2},{sy:.2}");
            if pts.len() == 1 {
                let _ = write!(d, " H{:.2}", WIDTH - MARGIN);
            }
        } else if step {
            let _ = write!(d, " H{sx:.2} V{sy:.2}");
        } else {
            let _ = write!(d, " L{sx:.2},{sy:.2}");
        }
    }
    d
}

pub fn svg_plot(series: &MetricSeries) -> String {
    let (lo, hi) = series
        .values()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    let first = series.points.first().map_or(0, |p| p.0);
    let last = series.points.last().map_or(0, |p| p.0);
    let title = xml_escape(&series.name);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(s, r#"<title>{title}</title>"#);
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r##"<rect x="{MARGIN}" y="{MARGIN}" width="{}" height="{}" fill="none" stroke="#999"/>"##,
        WIDTH - 2.0 * MARGIN,
        HEIGHT - 2.0 * MARGIN
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="24" font-family="sans-serif" font-size="14" text-anchor="middle">{title}</text>"#,
        WIDTH / 2.0
    );
    let _ = writeln!(
        s,
        r#"<text x="{MARGIN}" y="{}" font-family="sans-serif" font-size="11">{first}</text>"#,
        HEIGHT - MARGIN + 16.0
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" font-family="sans-serif" font-size="11" text-anchor="end">{last}</text>"#,
        WIDTH - MARGIN,
        HEIGHT - MARGIN + 16.0
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" font-family="sans-serif" font-size="11" text-anchor="end">{hi:.4}</text>"#,
        MARGIN - 4.0,
        MARGIN + 4.0
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" font-family="sans-serif" font-size="11" text-anchor="end">{lo:.4}</text>"#,
        MARGIN - 4.0,
        HEIGHT - MARGIN
    );
    let _ = writeln!(
        s,
        r##"<path d="{}" fill="none" stroke="#1f5fa8" stroke-width="1.5"/>"##,
        path_data(series)
    );
    s.push_str("</svg>\n");
    s
}

fn index_html(run_id: &str, series: &[MetricSeries]) -> String {
    let mut s = String::new();
    let title = xml_escape(run_id);
    let _ = writeln!(s, "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\"><title>{title}</title></head><body>");
    let _ = writeln!(s, "<h1>{title}</h1>");
    for m in series {
        let file = file_name_for(&m.name);
        let _ = writeln!(
            s,
            "<figure><img src=\"{file}\" alt=\"{0}\"><figcaption>{0}</figcaption></figure>",
            xml_escape(&m.name)
        );
    }
    s.push_str("</body></html>\n");
    s
}

/// Writes one SVG per series and `index.html` into `out_dir`; returns the files written.
pub fn report(run_id: &str, series: &[MetricSeries], out_dir: &Path) -> Result<Vec<PathBuf>> {
    let series: Vec<&MetricSeries> = series.iter().filter(|s| !s.is_empty()).collect();
    if series.is_empty() {
        return Err(LabError::Config(format!("run {run_id} has no metric series to plot")));
    }
    std::fs::create_dir_all(out_dir).map_err(|e| LabError::io(out_dir, e))?;
    let mut written = Vec::new();
    for m in &series {
        let path = out_dir.join(file_name_for(&m.name));
        std::fs::write(&path, svg_plot(m)).map_err(|e| LabError::io(&path, e))?;
        written.push(path);
    }
    let owned: Vec<MetricSeries> = series.into_iter().cloned().collect();
    let index = out_dir.join("index.html");
    std::fs::write(&index, index_html(run_id, &owned)).map_err(|e| LabError::io(&index, e))?;
    written.push(index);
    Ok(written)
}

/// Plots the metric CSV of a saved run directory.
pub fn report_dir(run_dir: &Path, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let series = read_metrics_csv(&run_dir.join(METRICS_FILE))?;
    let run_id = run_dir
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "run".into());
    report(&run_id, &series, out_dir)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_series_is_horizontal() {
        let mut s = MetricSeries::new("c");
        for step in [100, 200, 300] {
            s.push(step, 0.5).unwrap();
        }
        let d = path_data(&s);
        let ys: Vec<&str> = d
            .split(|c| c == 'M' || c == 'L')
            .filter(|p| !p.trim().is_empty())
            .map(|p| p.trim().split(',').nth(1).unwrap())
            .collect();
        assert_eq!(ys.len(), 3);
        assert!(ys.iter().all(|y| *y == ys[0]));
    }

    #[test]
    fn names_are_file_safe() {
        assert_eq!(file_name_for("competence/agent"), "competence_agent.svg");
    }

    #[test]
    fn empty_set_rejected() {
        let dir = tempfile::tempdir().unwrap();
        assert!(report("r", &[], dir.path()).is_err());
        assert!(report("r", &[MetricSeries::new("x")], dir.path()).is_err());
    }
}
