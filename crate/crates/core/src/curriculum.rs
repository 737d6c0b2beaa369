//! Competence, learning progress and the two goal-selection schemes driven by
//! them: learning-progress-proportional module selection and Thompson
//! sampling over Beta beliefs.

use std::collections::VecDeque;

use rand::Rng;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::rng::RngStream;

/// A hand-defined subspace of the feature space.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModuleSpec {
    pub id: String,
    pub subspace: Vec<usize>,
}

impl ModuleSpec {
    pub fn validate(&self, feature_dim: usize) -> Result<()> {
        if self.subspace.is_empty() {
            return Err(LabError::Config(format!("module {:?} has an empty subspace", self.id)));
        }
        for (i, &f) in self.subspace.iter().enumerate() {
            if f >= feature_dim {
                return Err(LabError::Config(format!(
                    "module {:?} refers to feature {f}, dimension is {feature_dim}",
                    self.id
                )));
            }
            if self.subspace[..i].contains(&f) {
                return Err(LabError::Config(format!(
                    "module {:?} lists feature {f} twice",
                    self.id
                )));
            }
        }
        Ok(())
    }
}

/// Fixed-capacity FIFO of binary trial outcomes, oldest first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompetenceQueue {
    outcomes: VecDeque<bool>,
    capacity: usize,
}

impl CompetenceQueue {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity < 2 || capacity % 2 != 0 {
            return Err(LabError::Config(format!(
                "queue capacity must be even and at least 2, got {capacity}"
            )));
        }
        Ok(CompetenceQueue {
            outcomes: VecDeque::with_capacity(capacity),
            capacity,
        })
    }

    pub fn from_outcomes(capacity: usize, outcomes: &[bool]) -> Result<Self> {
        let mut q = Self::new(capacity)?;
        outcomes.iter().for_each(|&o| q.push(o));
        Ok(q)
    }

    pub fn push(&mut self, success: bool) {
        if self.outcomes.len() == self.capacity {
            self.outcomes.pop_front();
        }
        self.outcomes.push_back(success);
    }

    pub fn len(&self) -> usize {
        self.outcomes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outcomes.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn outcomes(&self) -> impl DoubleEndedIterator<Item = bool> + '_ {
        self.outcomes.iter().copied()
    }
}

fn mean(xs: impl Iterator<Item = bool>) -> f64 {
    let (n, s) = xs.fold((0usize, 0usize), |(n, s), x| (n + 1, s + x as usize));
    s as f64 / n as f64
}

/// Mean of stored outcomes.
pub fn competence(q: &CompetenceQueue) -> Result<f64> {
    if q.is_empty() {
        return Err(LabError::NotReady("competence of an empty queue".into()));
    }
    Ok(mean(q.outcomes()))
}

/// Mean of the newer half minus mean of the older half; with an odd length the
/// middle outcome belongs to the older half.
pub fn learning_progress(q: &CompetenceQueue) -> Result<f64> {
    let n = q.len();
    if n < 2 {
        return Err(LabError::NotReady(format!(
            "learning progress needs at least 2 outcomes, have {n}"
        )));
    }
    let older = n.div_ceil(2);
    Ok(mean(q.outcomes().skip(older)) - mean(q.outcomes().take(older)))
}

/// `p_i = ε/N + (1 − ε)·|LP_i| / Σ|LP_j|`; when every LP is zero the second
/// term is uniform as well.
pub fn module_probabilities(lps: &[f64], epsilon: f64) -> Result<Vec<f64>> {
    let n = lps.len();
    if n == 0 {
        return Err(LabError::Config("need at least one module".into()));
    }
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(LabError::Config(format!("epsilon must lie in [0, 1], got {epsilon}")));
    }
    if lps.iter().any(|x| !x.is_finite()) {
        return Err(LabError::Config("learning progress values must be finite".into()));
    }
    let uniform = 1.0 / n as f64;
    let total: f64 = lps.iter().map(|x| x.abs()).sum();
    Ok(lps
        .iter()
        .map(|lp| {
            let share = if total > 0.0 { lp.abs() / total } else { uniform };
            epsilon * uniform + (1.0 - epsilon) * share
        })
        .collect())
}

/// Beta posterior over one skill's success probability.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Belief {
    pub successes: f64,
    pub failures: f64,
}

impl Default for Belief {
    fn default() -> Self {
        Belief {
            successes: 1.0,
            failures: 1.0,
        }
    }
}

impl Belief {
    pub fn new(successes: f64, failures: f64) -> Result<Self> {
        if !(successes > 0.0 && failures > 0.0 && successes.is_finite() && failures.is_finite()) {
            return Err(LabError::Config(format!(
                "Beta parameters must be positive, got ({successes}, {failures})"
            )));
        }
        Ok(Belief {
            successes,
            failures,
        })
    }

    pub fn mean(&self) -> f64 {
        self.successes / (self.successes + self.failures)
    }

    pub fn update(&mut self, success: bool) {
        if success {
            self.successes += 1.0;
        } else {
            self.failures += 1.0;
        }
    }
}

/// Samples each belief once and returns the index of the largest draw.
pub fn thompson_select(beliefs: &[Belief], rng: &mut RngStream) -> Result<usize> {
    if beliefs.is_empty() {
        return Err(LabError::Config("Thompson sampling needs at least one belief".into()));
    }
    let mut best = 0;
    let mut best_draw = f64::NEG_INFINITY;
    for (i, b) in beliefs.iter().enumerate() {
        let dist = Beta::new(b.successes, b.failures)
            .map_err(|e| LabError::Config(format!("invalid belief {b:?}: {e}")))?;
        let draw = dist.sample(rng);
        if draw > best_draw {
            best = i;
            best_draw = draw;
        }
    }
    Ok(best)
}

pub fn belief_update(beliefs: &mut [Belief], index: usize, success: bool) -> Result<()> {
    beliefs
        .get_mut(index)
        .ok_or_else(|| LabError::Config(format!("no belief at index {index}")))?
        .update(success);
    Ok(())
}

/// Learning-progress-driven module selector: one competence queue per module.
#[derive(Debug, Clone, PartialEq)]
pub struct LpSelector {
    pub queues: Vec<CompetenceQueue>,
    pub epsilon: f64,
}

impl LpSelector {
    pub fn new(num_modules: usize, queue_len: usize, epsilon: f64) -> Result<Self> {
        if num_modules == 0 {
            return Err(LabError::Config("need at least one module".into()));
        }
        Ok(LpSelector {
            queues: (0..num_modules)
                .map(|_| CompetenceQueue::new(queue_len))
                .collect::<Result<_>>()?,
            epsilon,
        })
    }

    /// Learning progress per module; modules with fewer than two outcomes
    /// count as zero.
    pub fn progress(&self) -> Vec<f64> {
        self.queues
            .iter()
            .map(|q| learning_progress(q).unwrap_or(0.0))
            .collect()
    }

    pub fn probabilities(&self) -> Result<Vec<f64>> {
        module_probabilities(&self.progress(), self.epsilon)
    }

    pub fn select(&self, rng: &mut RngStream) -> Result<usize> {
        let probs = self.probabilities()?;
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (i, p) in probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return Ok(i);
            }
        }
        Ok(probs.len() - 1)
    }

    pub fn record(&mut self, module: usize, success: bool) {
        self.queues[module].push(success);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(xs: &[u8]) -> CompetenceQueue {
        let outcomes: Vec<bool> = xs.iter().map(|&x| x == 1).collect();
        CompetenceQueue::from_outcomes(40, &outcomes).unwrap()
    }

    #[test]
    fn competence_examples() {
        assert_eq!(competence(&q(&[1, 1, 1, 1])).unwrap(), 1.0);
        assert_eq!(competence(&q(&[1, 0, 1, 0])).unwrap(), 0.5);
        assert!(matches!(competence(&q(&[])), Err(LabError::NotReady(_))));
    }

    #[test]
    fn learning_progress_examples() {
        assert_eq!(learning_progress(&q(&[1, 1, 1, 1])).unwrap(), 0.0);
        assert_eq!(learning_progress(&q(&[0, 0, 1, 1])).unwrap(), 1.0);
        assert_eq!(learning_progress(&q(&[1, 1, 0, 0])).unwrap(), -1.0);
        // odd length: middle joins the older half → older (0,1), newer (1)
        assert_eq!(learning_progress(&q(&[0, 1, 1])).unwrap(), 0.5);
        assert!(matches!(learning_progress(&q(&[1])), Err(LabError::NotReady(_))));
    }

    #[test]
    fn queue_evicts_oldest() {
        let mut queue = CompetenceQueue::new(2).unwrap();
        queue.push(false);
        queue.push(false);
        queue.push(true);
        assert_eq!(queue.outcomes().collect::<Vec<_>>(), vec![false, true]);
        assert!(CompetenceQueue::new(3).is_err());
        assert!(CompetenceQueue::new(0).is_err());
    }

    #[test]
    fn module_probability_examples() {
        assert_eq!(module_probabilities(&[0.1, 0.5, -0.3, 0.0], 1.0).unwrap(), vec![0.25; 4]);
        let p = module_probabilities(&[0.2, -0.2, 0.6], 0.0).unwrap();
        for (a, b) in p.iter().zip([0.2, 0.2, 0.6]) {
            assert!((a - b).abs() < 1e-12);
        }
        let p = module_probabilities(&[0.3, 0.1], 0.1).unwrap();
        assert!((p[0] - 0.725).abs() < 1e-12 && (p[1] - 0.275).abs() < 1e-12);
        assert_eq!(module_probabilities(&[0.0, 0.0], 0.3).unwrap(), vec![0.5, 0.5]);
        assert!(module_probabilities(&[], 0.1).is_err());
        assert!(module_probabilities(&[0.1], 1.5).is_err());
    }

    #[test]
    fn module_spec_validation() {
        let ok = ModuleSpec {
            id: "agent".into(),
            subspace: vec![0, 1],
        };
        assert!(ok.validate(6).is_ok());
        assert!(ok.validate(1).is_err());
        let dup = ModuleSpec {
            id: "d".into(),
            subspace: vec![2, 2],
        };
        assert!(dup.validate(6).is_err());
    }

    #[test]
    fn single_belief_always_selected() {
        let mut rng = RngStream::new(0, 1);
        for _ in 0..10 {
            assert_eq!(thompson_select(&[Belief::default()], &mut rng).unwrap(), 0);
        }
        assert!(thompson_select(&[], &mut rng).is_err());
        assert!(Belief::new(0.0, 1.0).is_err());
    }

    #[test]
    fn belief_update_increments_matching_count() {
        let mut beliefs = vec![Belief::default(); 2];
        belief_update(&mut beliefs, 1, true).unwrap();
        belief_update(&mut beliefs, 1, false).unwrap();
        belief_update(&mut beliefs, 0, false).unwrap();
        assert_eq!(beliefs[1], Belief::new(2.0, 2.0).unwrap());
        assert_eq!(beliefs[0], Belief::new(1.0, 2.0).unwrap());
        assert!(belief_update(&mut beliefs, 2, true).is_err());
    }
}
