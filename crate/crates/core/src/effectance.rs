//! Impact-driven reward: the change the agent causes in the controllable part
//! of the feature space, scaled down by how often the resulting state has been
//! seen.

use std::collections::{HashMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::env::{FeatureOwner, GridWorld, State};
use crate::error::{LabError, Result};
use crate::gcrl::{RewardModule, StepContext, Transition};

/// Lifetime visitation counts (persist across episodes).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct VisitCounts {
    counts: HashMap<State, u64>,
}

impl VisitCounts {
    pub fn new() -> Self {
        Self::default()
    }

    /// Records one occurrence of `s` and returns its updated count.
    pub fn record(&mut self, s: &State) -> u64 {
        let c = self.counts.entry(s.clone()).or_insert(0);
        *c += 1;
        *c
    }

    pub fn get(&self, s: &State) -> u64 {
        self.counts.get(s).copied().unwrap_or(0)
    }

    /// Number of distinct states seen at least once.
    pub fn distinct(&self) -> usize {
        self.counts.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&State, u64)> {
        self.counts.iter().map(|(s, &c)| (s, c))
    }
}

/// `‖phi_next − phi_s‖₂ / √visits_next`. Both vectors must already be masked.
pub fn impact_reward(phi_s: &[f64], phi_next: &[f64], visits_next: u64) -> Result<f64> {
    if visits_next == 0 {
        return Err(LabError::Consistency(
            "impact reward requested for a state with zero visits".into(),
        ));
    }
    if phi_s.len() != phi_next.len() {
        return Err(LabError::Config(format!(
            "feature dimension mismatch: {} vs {}",
            phi_s.len(),
            phi_next.len()
        )));
    }
    let sq: f64 = phi_s
        .iter()
        .zip(phi_next)
        .map(|(a, b)| (b - a) * (b - a))
        .sum();
    Ok(sq.sqrt() / (visits_next as f64).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaskParams {
    /// Number of most recent changes of a feature that are remembered.
    #[serde(default = "MaskParams::default_window")]
    pub window: usize,
    /// Minimum attributable fraction for a feature to count as controllable.
    #[serde(default = "MaskParams::default_threshold")]
    pub threshold: f64,
}

impl MaskParams {
    fn default_window() -> usize {
        500
    }
    fn default_threshold() -> f64 {
        0.9
    }

    pub fn validate(&self) -> Result<()> {
        if self.window == 0 {
            return Err(LabError::Config("mask window must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(LabError::Config("mask threshold must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

impl Default for MaskParams {
    fn default() -> Self {
        MaskParams {
            window: Self::default_window(),
            threshold: Self::default_threshold(),
        }
    }
}

/// Per-feature controllability estimate.
///
/// Each feature keeps the attribution outcome of its last `window` changes. A
/// change is attributable when the agent's own action acted on the entity the
/// feature describes: moving (agent coordinates), interacting on the object's
/// cell (object status) or stepping into the block (block coordinates).
/// Transitions in which a feature does not change leave its statistics, and
/// hence its flag, untouched.
#[derive(Debug, Clone, PartialEq)]
pub struct ControllabilityMask {
    owners: Vec<FeatureOwner>,
    toggle_cells: Vec<crate::env::Cell>,
    params: MaskParams,
    history: Vec<VecDeque<bool>>,
    attributed: Vec<usize>,
    flags: Vec<bool>,
}

impl ControllabilityMask {
    pub fn new(world: &GridWorld, params: MaskParams) -> Self {
        let owners = world.feature_owners();
        let dim = owners.len();
        ControllabilityMask {
            owners,
            toggle_cells: (0..world.num_toggles()).map(|t| world.toggle_cell(t)).collect(),
            params,
            history: vec![VecDeque::new(); dim],
            attributed: vec![0; dim],
            flags: vec![false; dim],
        }
    }

    pub fn flags(&self) -> &[bool] {
        &self.flags
    }

    pub fn dim(&self) -> usize {
        self.flags.len()
    }

    /// `(changes in window, attributable changes in window)` of a feature.
    pub fn stats(&self, feature: usize) -> (usize, usize) {
        (self.history[feature].len(), self.attributed[feature])
    }

    fn attributable(&self, owner: FeatureOwner, t: &Transition) -> bool {
        use crate::env::Action;
        match owner {
            FeatureOwner::Agent => t.action != Action::Interact,
            FeatureOwner::Toggle(k) => {
                t.action == Action::Interact && t.state.agent == self.toggle_cells[k]
            }
            FeatureOwner::Block(b) => {
                t.action != Action::Interact && t.next_state.agent == t.state.blocks[b]
            }
        }
    }

    pub fn update(&mut self, phi_s: &[f64], phi_next: &[f64], t: &Transition) {
        for i in 0..self.flags.len() {
            if phi_s[i] == phi_next[i] {
                continue;
            }
            let credit = self.attributable(self.owners[i], t);
            let h = &mut self.history[i];
            h.push_back(credit);
            if credit {
                self.attributed[i] += 1;
            }
            if h.len() > self.params.window {
                if h.pop_front() == Some(true) {
                    self.attributed[i] -= 1;
                }
            }
            let changes = h.len();
            self.flags[i] =
                changes > 0 && self.attributed[i] as f64 >= self.params.threshold * changes as f64;
        }
    }

    /// Zeroes every feature not flagged controllable.
    pub fn apply(&self, phi: &[f64]) -> Vec<f64> {
        phi.iter()
            .zip(&self.flags)
            .map(|(&x, &on)| if on { x } else { 0.0 })
            .collect()
    }
}

/// Reward module for the effectance facet.
#[derive(Debug, Clone)]
pub struct EffectanceReward {
    world: GridWorld,
    pub visits: VisitCounts,
    pub mask: ControllabilityMask,
}

impl EffectanceReward {
    pub fn new(world: &GridWorld, params: MaskParams) -> Self {
        EffectanceReward {
            world: world.clone(),
            visits: VisitCounts::new(),
            mask: ControllabilityMask::new(world, params),
        }
    }
}

impl RewardModule for EffectanceReward {
    fn on_reset(&mut self, start: &State) {
        self.visits.record(start);
    }

    fn observe(&mut self, t: &Transition, _: &StepContext<'_>) -> Result<()> {
        self.visits.record(&t.next_state);
        let phi_s = self.world.features(&t.state);
        let phi_next = self.world.features(&t.next_state);
        self.mask.update(&phi_s.0, &phi_next.0, t);
        Ok(())
    }

    fn reward(&self, t: &Transition, _: &StepContext<'_>) -> Result<f64> {
        let phi_s = self.mask.apply(&self.world.features(&t.state).0);
        let phi_next = self.mask.apply(&self.world.features(&t.next_state).0);
        impact_reward(&phi_s, &phi_next, self.visits.get(&t.next_state))
    }

    fn reward_bound(&self) -> Option<f64> {
        // features live in [0, 1]
        Some((self.mask.dim() as f64).sqrt())
    }
}
