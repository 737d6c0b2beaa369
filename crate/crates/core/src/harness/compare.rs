//! Cross-run comparison of terminal-state occupancy, coverage and MI.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::config::Facet;
use super::run::{load_summary, RunSummary};
use crate::env::{GridWorld, DEFAULT_STATE_CAP};
use crate::error::{LabError, Result};
use crate::metrics::{distribution_over, js_divergence};

pub const COMPARISON_CSV: &str = "comparison.csv";
pub const COMPARISON_SUMMARY: &str = "summary.txt";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairRow {
    pub run_a: String,
    pub run_b: String,
    pub facet_a: Facet,
    pub facet_b: Facet,
    pub js_divergence: f64,
    pub coverage_a: f64,
    pub coverage_b: f64,
    /// `coverage_b - coverage_a`.
    pub coverage_delta: f64,
    pub mi_a: Option<f64>,
    pub mi_b: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    /// Runs in canonical (run id) order.
    pub runs: Vec<RunSummary>,
    /// Every unordered pair `i < j` in canonical order.
    pub pairs: Vec<PairRow>,
}

impl Comparison {
    /// Mean JS divergence over pairs whose facets differ.
    pub fn mean_between_facets(&self) -> Option<f64> {
        mean(self.pairs.iter().filter(|p| p.facet_a != p.facet_b).map(|p| p.js_divergence))
    }

    /// Mean JS divergence over pairs sharing a facet.
    pub fn mean_within_facet(&self) -> Option<f64> {
        mean(self.pairs.iter().filter(|p| p.facet_a == p.facet_b).map(|p| p.js_divergence))
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let opt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
        w.write_record([
            "run_a",
            "run_b",
            "facet_a",
            "facet_b",
            "js_divergence",
            "coverage_a",
            "coverage_b",
            "coverage_delta",
            "mi_a",
            "mi_b",
        ])
        .map_err(csv_err)?;
        for p in &self.pairs {
            w.write_record([
                p.run_a.clone(),
                p.run_b.clone(),
                p.facet_a.as_str().to_string(),
                p.facet_b.as_str().to_string(),
                p.js_divergence.to_string(),
                p.coverage_a.to_string(),
                p.coverage_b.to_string(),
                p.coverage_delta.to_string(),
                opt(p.mi_a),
                opt(p.mi_b),
            ])
            .map_err(csv_err)?;
        }
        let bytes = w.into_inner().map_err(|e| csv_err(e.into_error().into()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn summary_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "runs compared: {}", self.runs.len());
        for r in &self.runs {
            let mi = r.mutual_information.map_or("-".to_string(), |v| format!("{v:.4}"));
            let _ = writeln!(
                out,
                "  {:<24} facet={:<10} steps={:<8} episodes={:<6} coverage={:.4} mi={}",
                r.run_id,
                r.facet.as_str(),
                r.steps,
                r.episodes,
                r.coverage,
                mi
            );
        }
        let fmt = |x: Option<f64>| x.map_or("n/a".to_string(), |v| format!("{v:.6}"));
        let _ = writeln!(out, "pairs: {}", self.pairs.len());
        let _ = writeln!(out, "mean JS divergence between facets: {}", fmt(self.mean_between_facets()));
        let _ = writeln!(out, "mean JS divergence within facet:   {}", fmt(self.mean_within_facet()));
        if let Some(p) = self
            .pairs
            .iter()
            .max_by(|a, b| a.js_divergence.total_cmp(&b.js_divergence))
        {
            let _ = writeln!(
                out,
                "largest divergence: {} vs {} ({:.6})",
                p.run_a, p.run_b, p.js_divergence
            );
        }
        out
    }

    pub fn write(&self, out_dir: &Path) -> Result<()> {
        std::fs::create_dir_all(out_dir).map_err(|e| LabError::io(out_dir, e))?;
        let csv_path = out_dir.join(COMPARISON_CSV);
        std::fs::write(&csv_path, self.to_csv()?).map_err(|e| LabError::io(&csv_path, e))?;
        let txt = out_dir.join(COMPARISON_SUMMARY);
        std::fs::write(&txt, self.summary_text()).map_err(|e| LabError::io(&txt, e))
    }
}

fn mean(xs: impl Iterator<Item = f64>) -> Option<f64> {
    let (mut sum, mut n) = (0.0, 0usize);
    for x in xs {
        sum += x;
        n += 1;
    }
    (n > 0).then(|| sum / n as f64)
}

fn csv_err(e: csv::Error) -> LabError {
    LabError::Consistency(format!("csv encoding failed: {e}"))
}

/// Compares at least two runs recorded on the same environment.
pub fn compare(records: &[RunSummary]) -> Result<Comparison> {
    if records.len() < 2 {
        return Err(LabError::Config(format!(
            "compare needs at least 2 runs, got {}",
            records.len()
        )));
    }
    let env = &records[0].environment;
    if let Some(other) = records.iter().find(|r| &r.environment != env) {
        return Err(LabError::Config(format!(
            "run {} uses a different environment than {}",
            other.run_id, records[0].run_id
        )));
    }
    let world = GridWorld::new(env.clone())?;
    let support = world.enumerate_states_capped(DEFAULT_STATE_CAP)?;

    let mut runs = records.to_vec();
    // canonical order makes the output independent of argument order
    let tiebreak = |r: &RunSummary| serde_json::to_string(r).unwrap_or_default();
    runs.sort_by(|a, b| a.run_id.cmp(&b.run_id).then_with(|| tiebreak(a).cmp(&tiebreak(b))));

    let dists = runs
        .iter()
        .map(|r| distribution_over(&support, &r.terminal_counts()))
        .collect::<Result<Vec<_>>>()?;
    let mut pairs = Vec::new();
    for i in 0..runs.len() {
        for j in i + 1..runs.len() {
            let (a, b) = (&runs[i], &runs[j]);
            pairs.push(PairRow {
                run_a: a.run_id.clone(),
                run_b: b.run_id.clone(),
                facet_a: a.facet,
                facet_b: b.facet,
                js_divergence: js_divergence(&dists[i], &dists[j])?,
                coverage_a: a.coverage,
                coverage_b: b.coverage,
                coverage_delta: b.coverage - a.coverage,
                mi_a: a.mutual_information,
                mi_b: b.mutual_information,
            });
        }
    }
    Ok(Comparison { runs, pairs })
}

/// Loads each run directory's summary, compares, and writes the report to `out_dir`.
pub fn compare_dirs(run_dirs: &[PathBuf], out_dir: &Path) -> Result<Comparison> {
    let summaries = run_dirs
        .iter()
        .map(|d| load_summary(d))
        .collect::<Result<Vec<_>>>()?;
    let cmp = compare(&summaries)?;
    cmp.write(out_dir)?;
    Ok(cmp)
}
