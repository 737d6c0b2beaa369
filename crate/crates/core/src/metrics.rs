//! Behavioural measurements: coverage, mutual information between goals and
//! outcomes, Jensen-Shannon divergence, and time series of competence and
//! repertoire size. Natural logarithms throughout.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::curriculum::{competence, CompetenceQueue};
use crate::effectance::VisitCounts;
use crate::env::{GridWorld, State, DEFAULT_STATE_CAP};
use crate::error::{LabError, Result};

/// Time-indexed metric values; step indices strictly increase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSeries {
    pub name: String,
    pub points: Vec<(u64, f64)>,
}

impl MetricSeries {
    pub fn new(name: impl Into<String>) -> Self {
        MetricSeries {
            name: name.into(),
            points: Vec::new(),
        }
    }

    pub fn push(&mut self, step: u64, value: f64) -> Result<()> {
        if !value.is_finite() {
            return Err(LabError::Consistency(format!(
                "metric {} got non-finite value {value} at step {step}",
                self.name
            )));
        }
        if let Some(&(last, _)) = self.points.last() {
            if step <= last {
                return Err(LabError::Consistency(format!(
                    "metric {} step {step} does not follow {last}",
                    self.name
                )));
            }
        }
        self.points.push((step, value));
        Ok(())
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.points.iter().map(|&(_, v)| v)
    }

    pub fn last_value(&self) -> Option<f64> {
        self.points.last().map(|&(_, v)| v)
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Joint counts of (goal index, outcome).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutcomeTable<S: Ord = State> {
    joint: BTreeMap<(usize, S), u64>,
}

impl<S: Ord> Default for OutcomeTable<S> {
    fn default() -> Self {
        OutcomeTable {
            joint: BTreeMap::new(),
        }
    }
}

impl<S: Ord + Clone> OutcomeTable<S> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, goal: usize, outcome: S) {
        *self.joint.entry((goal, outcome)).or_insert(0) += 1;
    }

    pub fn add_count(&mut self, goal: usize, outcome: S, count: u64) {
        if count > 0 {
            *self.joint.entry((goal, outcome)).or_insert(0) += count;
        }
    }

    pub fn total(&self) -> u64 {
        self.joint.values().sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, &S, u64)> {
        self.joint.iter().map(|((g, s), &c)| (*g, s, c))
    }

    pub fn goal_marginal(&self) -> BTreeMap<usize, u64> {
        let mut m = BTreeMap::new();
        for ((g, _), &c) in &self.joint {
            *m.entry(*g).or_insert(0) += c;
        }
        m
    }

    pub fn outcome_marginal(&self) -> BTreeMap<S, u64> {
        let mut m = BTreeMap::new();
        for ((_, s), &c) in &self.joint {
            *m.entry(s.clone()).or_insert(0) += c;
        }
        m
    }
}

/// Plug-in mutual information of the empirical joint, in nats.
pub fn mutual_information<S: Ord + Clone>(t: &OutcomeTable<S>) -> Result<f64> {
    let n = t.total();
    if n == 0 {
        return Err(LabError::NotReady("mutual information of an empty table".into()));
    }
    let goals = t.goal_marginal();
    let outcomes = t.outcome_marginal();
    let n = n as f64;
    let mut mi = 0.0;
    for (g, s, c) in t.iter() {
        let c = c as f64;
        let cg = goals[&g] as f64;
        let cs = outcomes[s] as f64;
        mi += c / n * (c * n / (cg * cs)).ln();
    }
    Ok(mi.max(0.0))
}

/// Jensen-Shannon divergence in nats, within `[0, ln 2]`.
pub fn js_divergence(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(LabError::Config(format!(
            "distributions have different supports ({} vs {})",
            p.len(),
            q.len()
        )));
    }
    for d in [p, q] {
        if d.iter().any(|&x| !(x >= 0.0 && x.is_finite())) {
            return Err(LabError::Config("probabilities must be finite and non-negative".into()));
        }
        let s: f64 = d.iter().sum();
        if (s - 1.0).abs() > 1e-9 {
            return Err(LabError::Config(format!("distribution sums to {s}, not 1")));
        }
    }
    let mut acc = 0.0;
    for (&a, &b) in p.iter().zip(q) {
        let m = 0.5 * (a + b);
        let term = |x: f64| if x > 0.0 { 0.5 * x * (x / m).ln() } else { 0.0 };
        // a single commutative sum per element keeps js(p, q) == js(q, p) exactly
        acc += term(a) + term(b);
    }
    Ok(acc.clamp(0.0, std::f64::consts::LN_2))
}

/// Normalizes counts over an explicit support. States outside the support
/// are an error.
pub fn distribution_over(support: &[State], counts: &BTreeMap<State, u64>) -> Result<Vec<f64>> {
    let total: u64 = counts.values().sum();
    if total == 0 {
        return Err(LabError::NotReady("no occupancy counts".into()));
    }
    let mut dist = vec![0.0; support.len()];
    for (s, &c) in counts {
        let i = support
            .binary_search(s)
            .map_err(|_| LabError::Config(format!("state {s} is outside the support")))?;
        dist[i] = c as f64 / total as f64;
    }
    Ok(dist)
}

/// Fraction of the state space visited at least once.
pub fn coverage(visits: &VisitCounts, world: &GridWorld) -> Result<f64> {
    coverage_of(visits.distinct(), world)
}

pub fn coverage_of(distinct: usize, world: &GridWorld) -> Result<f64> {
    let size = world.state_space_size();
    if size > DEFAULT_STATE_CAP as u128 {
        return Err(LabError::StateCapExceeded {
            size,
            cap: DEFAULT_STATE_CAP,
        });
    }
    Ok(distinct as f64 / size as f64)
}

/// Competence series from `(step, queue)` snapshots; empty queues are skipped.
pub fn competence_curve<'a>(
    name: &str,
    snapshots: impl IntoIterator<Item = (u64, &'a CompetenceQueue)>,
) -> Result<MetricSeries> {
    let mut series = MetricSeries::new(name);
    for (step, q) in snapshots {
        if !q.is_empty() {
            series.push(step, competence(q)?)?;
        }
    }
    Ok(series)
}

/// Repertoire-size series from `(step, size)` snapshots.
pub fn repertoire_curve(snapshots: impl IntoIterator<Item = (u64, usize)>) -> Result<MetricSeries> {
    let mut series = MetricSeries::new("repertoire_size");
    let mut last = 0;
    for (step, size) in snapshots {
        if size < last {
            return Err(LabError::Consistency("repertoire shrank".into()));
        }
        last = size;
        series.push(step, size as f64)?;
    }
    Ok(series)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{Cell, GridWorldConfig};

    #[test]
    fn mi_single_goal_is_zero() {
        let mut t = OutcomeTable::<u32>::new();
        t.add_count(0, 1, 5);
        t.add_count(0, 2, 7);
        assert_eq!(mutual_information(&t).unwrap(), 0.0);
    }

    #[test]
    fn mi_perfect_channel_is_log_two() {
        let mut t = OutcomeTable::<u32>::new();
        t.add_count(0, 10, 50);
        t.add_count(1, 20, 50);
        assert!((mutual_information(&t).unwrap() - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn mi_empty_table_not_ready() {
        assert!(mutual_information(&OutcomeTable::<u32>::new()).is_err());
    }

    #[test]
    fn js_examples() {
        let p = [0.2, 0.3, 0.5];
        assert_eq!(js_divergence(&p, &p).unwrap(), 0.0);
        let js = js_divergence(&[0.5, 0.5, 0.0, 0.0], &[0.0, 0.0, 0.4, 0.6]).unwrap();
        assert!((js - 2f64.ln()).abs() < 1e-12);
        assert!(js_divergence(&[1.0], &[0.5, 0.5]).is_err());
        assert!(js_divergence(&[0.7, 0.7], &[0.5, 0.5]).is_err());
    }

    #[test]
    fn coverage_examples() {
        let world = GridWorld::new(GridWorldConfig::empty(3, 3, Cell(0, 0), 4)).unwrap();
        let mut visits = VisitCounts::new();
        visits.record(&world.initial_state());
        assert!((coverage(&visits, &world).unwrap() - 1.0 / 9.0).abs() < 1e-15);
        for s in world.enumerate_states().unwrap() {
            visits.record(&s);
        }
        assert_eq!(coverage(&visits, &world).unwrap(), 1.0);
    }

    #[test]
    fn series_rejects_bad_points() {
        let mut s = MetricSeries::new("x");
        s.push(1, 0.5).unwrap();
        assert!(s.push(1, 0.5).is_err());
        assert!(s.push(2, f64::NAN).is_err());
    }

    #[test]
    fn constant_success_curve_is_flat() {
        let mut q = CompetenceQueue::new(4).unwrap();
        let mut snaps = Vec::new();
        for step in 1..=6u64 {
            q.push(true);
            snaps.push((step, q.clone()));
        }
        let c = competence_curve("c", snaps.iter().map(|(s, q)| (*s, q))).unwrap();
        assert!(c.values().all(|v| v == 1.0));
        let r = repertoire_curve((1..=5).map(|s| (s, 0))).unwrap();
        assert!(r.values().all(|v| v == 0.0));
    }
}
