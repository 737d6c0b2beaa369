use std::path::Path;

use competence_lab::env::GridWorldConfig;
use competence_lab::harness::compare::compare;
use competence_lab::harness::report::{path_data, report, svg_plot};
use competence_lab::harness::run::{EVENTS_FILE, METRICS_FILE};
use competence_lab::harness::{
    read_event_log, read_metrics_csv, replay, run_in_memory, run_into, Facet, LogEvent, RunConfig,
};
use competence_lab::metrics::MetricSeries;
use competence_lab::LabError;

fn playroom(facet: Facet, steps: u64, seed: u64) -> RunConfig {
    RunConfig::new(GridWorldConfig::playroom(), facet, steps, seed)
}

const ALL: [Facet; 6] = [
    Facet::Effectance,
    Facet::Vic,
    Facet::Diayn,
    Facet::Rig,
    Facet::Curious,
    Facet::Imrl,
];

#[test]
fn zero_steps_rejected_before_running() {
    let err = run_in_memory(&playroom(Facet::Diayn, 0, 1)).unwrap_err();
    assert!(matches!(err, LabError::Config(_)));
}

#[test]
fn foreign_settings_rejected() {
    let text = r#"{"environment":"builtin:playroom","facet":"rig","total_steps":10,
                   "skills":{"num_skills":4}}"#;
    let err = RunConfig::from_json_str(text).unwrap().resolve().unwrap_err();
    assert!(matches!(err, LabError::Config(_)), "{err}");
}

#[test]
fn every_facet_runs_and_replays_exactly() {
    let dir = tempfile::tempdir().unwrap();
    for facet in ALL {
        let cfg = playroom(facet, 1234, 7);
        let rec = run_into(&cfg, dir.path()).unwrap();
        assert_eq!(rec.summary.steps, 1234);
        let run_dir = rec.run_dir.clone().unwrap();
        let replayed = replay(&run_dir).unwrap();
        assert_eq!(replayed.series(), rec.series, "{facet}");
        assert_eq!(replayed.finished(), Some((1234, rec.summary.episodes)));
        let from_csv = read_metrics_csv(&run_dir.join(METRICS_FILE)).unwrap();
        assert_eq!(from_csv, rec.series, "{facet}: csv round trip");
        assert!(rec.series.iter().any(|s| s.name == "coverage"));
    }
}

fn read(path: &Path) -> Vec<u8> {
    std::fs::read(path).unwrap()
}

#[test]
fn same_seed_gives_byte_identical_outputs() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for facet in [Facet::Vic, Facet::Curious, Facet::Imrl] {
        let cfg = playroom(facet, 3000, 42);
        let ra = run_into(&cfg, a.path()).unwrap().run_dir.unwrap();
        let rb = run_into(&cfg, b.path()).unwrap().run_dir.unwrap();
        for f in [EVENTS_FILE, METRICS_FILE, "summary.json", "config.json"] {
            assert_eq!(read(&ra.join(f)), read(&rb.join(f)), "{facet} {f}");
        }
    }
}

#[test]
fn different_seeds_differ() {
    let a = run_in_memory(&playroom(Facet::Diayn, 2000, 1)).unwrap();
    let b = run_in_memory(&playroom(Facet::Diayn, 2000, 2)).unwrap();
    assert_ne!(a.summary.terminal_occupancy, b.summary.terminal_occupancy);
}

#[test]
fn event_log_is_well_formed() {
    let dir = tempfile::tempdir().unwrap();
    let rec = run_into(&playroom(Facet::Imrl, 500, 3), dir.path()).unwrap();
    let lines = read_event_log(rec.run_dir.unwrap().join(EVENTS_FILE)).unwrap();
    assert!(matches!(lines[0].event, LogEvent::RunStart { .. }));
    assert!(matches!(lines.last().unwrap().event, LogEvent::RunEnd { steps: 500, .. }));
    let transitions = lines
        .iter()
        .filter(|l| matches!(l.event, LogEvent::Transition { .. }))
        .count();
    assert_eq!(transitions, 500);
}

#[test]
fn diayn_smoke_run_emits_accuracy_series() {
    let text = r#"{"environment":"builtin:empty5x5","facet":"diayn","total_steps":50000,
                   "skills":{"num_skills":4},"seed":3}"#;
    let rec = run_in_memory(&RunConfig::from_json_str(text).unwrap()).unwrap();
    let acc = rec.series("discriminator_accuracy").unwrap();
    assert_eq!(acc.points.len(), 500);
    assert!(acc.values().all(|v| (0.0..=1.0).contains(&v)));
}

#[test]
fn compare_self_is_zero_and_permutation_symmetric() {
    let a = run_in_memory(&playroom(Facet::Effectance, 2000, 1)).unwrap().summary;
    let b = run_in_memory(&playroom(Facet::Diayn, 2000, 1)).unwrap().summary;
    let c = run_in_memory(&playroom(Facet::Rig, 2000, 2)).unwrap().summary;
    let same = compare(&[a.clone(), a.clone()]).unwrap();
    assert!(same.pairs.iter().all(|p| p.js_divergence == 0.0 && p.coverage_delta == 0.0));

    let fwd = compare(&[a.clone(), b.clone(), c.clone()]).unwrap();
    let rev = compare(&[c, b, a]).unwrap();
    assert_eq!(fwd.to_csv().unwrap(), rev.to_csv().unwrap());
    assert_eq!(fwd.summary_text(), rev.summary_text());
    assert!(fwd.pairs.iter().all(|p| p.js_divergence >= 0.0));
}

#[test]
fn compare_rejects_mismatched_environments_and_singletons() {
    let a = run_in_memory(&playroom(Facet::Diayn, 200, 1)).unwrap().summary;
    let other = RunConfig::new(GridWorldConfig::empty(4, 4, competence_lab::Cell(0, 0), 8), Facet::Diayn, 200, 1);
    let b = run_in_memory(&other).unwrap().summary;
    assert!(compare(&[a.clone(), b]).is_err());
    assert!(compare(&[a]).is_err());
}

#[test]
fn effectance_versus_diayn_divergence_baseline() {
    let a = run_in_memory(&playroom(Facet::Effectance, 20_000, 0)).unwrap().summary;
    let b = run_in_memory(&playroom(Facet::Diayn, 20_000, 0)).unwrap().summary;
    let js = compare(&[a, b]).unwrap().pairs[0].js_divergence;
    // measured once and frozen; any change to learning dynamics shows up here
    assert_eq!(format!("{js:.12}"), BASELINE_EFFECTANCE_DIAYN);
}

const BASELINE_EFFECTANCE_DIAYN: &str = "0.543790227784";

#[test]
fn report_is_deterministic_and_shaped() {
    let mut flat = MetricSeries::new("flat");
    for s in 1..=5 {
        flat.push(s * 100, 0.3).unwrap();
    }
    let d = path_data(&flat);
    let ys: Vec<&str> = d
        .split(['M', 'L'])
        .filter(|p| !p.trim().is_empty())
        .map(|p| p.trim().split(',').nth(1).unwrap())
        .collect();
    assert!(ys.windows(2).all(|w| w[0] == w[1]));

    let mut rep = MetricSeries::new("repertoire_size");
    for (s, v) in [(100, 0.0), (200, 1.0), (300, 1.0), (400, 2.0)] {
        rep.push(s, v).unwrap();
    }
    let d = path_data(&rep);
    assert!(!d.contains('L'));
    // SVG y grows downward, so a non-decreasing series has non-increasing V targets
    let vs: Vec<f64> = d
        .split_whitespace()
        .filter_map(|t| t.strip_prefix('V'))
        .map(|v| v.parse().unwrap())
        .collect();
    assert_eq!(vs.len(), 3);
    assert!(vs.windows(2).all(|w| w[1] <= w[0]));

    let out1 = tempfile::tempdir().unwrap();
    let out2 = tempfile::tempdir().unwrap();
    let rec = run_in_memory(&playroom(Facet::Curious, 3000, 5)).unwrap();
    let f1 = report("curious", &rec.series, out1.path()).unwrap();
    let f2 = report("curious", &rec.series, out2.path()).unwrap();
    assert_eq!(f1.len(), rec.series.len() + 1);
    for (x, y) in f1.iter().zip(&f2) {
        assert_eq!(read(x), read(y));
    }
    assert!(svg_plot(&flat).starts_with("<svg"));
}
