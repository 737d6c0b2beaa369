//! Variational skill rewards built on a count-based discriminator.
//!
//! VIC rewards a skill by how well its start and final states identify it,
//! minus the log-probability of having chosen it; DIAYN rewards every step by
//! how well the current state identifies the active skill. In both the
//! discriminator is a Laplace-smoothed table of goal counts per condition.

use std::collections::HashMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env::State;
use crate::error::{LabError, Result};
use crate::gcrl::{RewardModule, StepContext, Transition};
use crate::rng::RngStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConditionMode {
    /// Conditions on the `(s0, sf)` pair of a whole skill execution.
    StartAndFinal,
    /// Conditions on the state just reached.
    CurrentState,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum ConditionKey {
    StartAndFinal(State, State),
    Current(State),
}

impl ConditionKey {
    fn mode(&self) -> ConditionMode {
        match self {
            ConditionKey::StartAndFinal(..) => ConditionMode::StartAndFinal,
            ConditionKey::Current(_) => ConditionMode::CurrentState,
        }
    }
}

/// Smoothed empirical `q(g | condition)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Discriminator {
    mode: ConditionMode,
    counts: HashMap<ConditionKey, Vec<u64>>,
    lambda: f64,
    num_goals: usize,
}

impl Discriminator {
    pub fn new(mode: ConditionMode, num_goals: usize, lambda: f64) -> Result<Self> {
        if num_goals < 2 {
            return Err(LabError::Config(format!(
                "discriminator needs at least 2 goals, got {num_goals}"
            )));
        }
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(LabError::Config(format!("smoothing lambda must be > 0, got {lambda}")));
        }
        Ok(Discriminator {
            mode,
            counts: HashMap::new(),
            lambda,
            num_goals,
        })
    }

    pub fn mode(&self) -> ConditionMode {
        self.mode
    }

    pub fn num_goals(&self) -> usize {
        self.num_goals
    }

    fn check_key(&self, key: &ConditionKey) -> Result<()> {
        if key.mode() != self.mode {
            return Err(LabError::Config(format!(
                "condition {:?} does not match discriminator mode {:?}",
                key.mode(),
                self.mode
            )));
        }
        Ok(())
    }

    fn check_goal(&self, g: usize) -> Result<()> {
        if g >= self.num_goals {
            return Err(LabError::Config(format!(
                "goal index {g} out of range for {} goals",
                self.num_goals
            )));
        }
        Ok(())
    }

    pub fn observe(&mut self, key: ConditionKey, g: usize) -> Result<()> {
        self.check_key(&key)?;
        self.check_goal(g)?;
        let k = self.num_goals;
        self.counts.entry(key).or_insert_with(|| vec![0; k])[g] += 1;
        Ok(())
    }

    pub fn count(&self, key: &ConditionKey, g: usize) -> u64 {
        self.counts.get(key).map_or(0, |c| c[g])
    }

    /// `(count(key, g) + λ) / (Σ count(key, ·) + λK)`.
    pub fn predict(&self, key: &ConditionKey, g: usize) -> Result<f64> {
        self.check_key(key)?;
        self.check_goal(g)?;
        let k = self.num_goals as f64;
        Ok(match self.counts.get(key) {
            Some(c) => {
                let total: u64 = c.iter().sum();
                (c[g] as f64 + self.lambda) / (total as f64 + self.lambda * k)
            }
            None => 1.0 / k,
        })
    }

    pub fn distribution(&self, key: &ConditionKey) -> Result<Vec<f64>> {
        (0..self.num_goals).map(|g| self.predict(key, g)).collect()
    }

    /// Most probable goal, lowest index on ties.
    pub fn predict_argmax(&self, key: &ConditionKey) -> Result<usize> {
        self.check_key(key)?;
        let Some(c) = self.counts.get(key) else {
            return Ok(0);
        };
        let mut best = 0;
        for g in 1..c.len() {
            if c[g] > c[best] {
                best = g;
            }
        }
        Ok(best)
    }

    /// Replaces the counts for `key` (test and replay helper).
    pub fn set_counts(&mut self, key: ConditionKey, counts: Vec<u64>) -> Result<()> {
        self.check_key(&key)?;
        if counts.len() != self.num_goals {
            return Err(LabError::Config("count vector length must equal K".into()));
        }
        self.counts.insert(key, counts);
        Ok(())
    }
}

/// State-conditioned goal-selection policy `p(g | s0)`, uniform for unseen
/// start states, with every probability kept at or above `floor`.
#[derive(Debug, Clone, PartialEq)]
pub struct GoalPolicy {
    rows: HashMap<State, Vec<f64>>,
    num_goals: usize,
    learning_rate: f64,
    floor: f64,
}

impl GoalPolicy {
    pub fn new(num_goals: usize, learning_rate: f64, floor: f64) -> Result<Self> {
        if num_goals < 1 {
            return Err(LabError::Config("goal policy needs at least one goal".into()));
        }
        if !(learning_rate > 0.0 && learning_rate <= 1.0) {
            return Err(LabError::Config(format!(
                "goal-policy learning rate must lie in (0, 1], got {learning_rate}"
            )));
        }
        if !(floor > 0.0 && floor * num_goals as f64 <= 1.0) {
            return Err(LabError::Config(format!(
                "probability floor {floor} must be > 0 and at most 1/K"
            )));
        }
        Ok(GoalPolicy {
            rows: HashMap::new(),
            num_goals,
            learning_rate,
            floor,
        })
    }

    pub fn num_goals(&self) -> usize {
        self.num_goals
    }

    pub fn floor(&self) -> f64 {
        self.floor
    }

    pub fn probs(&self, s0: &State) -> Vec<f64> {
        self.rows
            .get(s0)
            .cloned()
            .unwrap_or_else(|| vec![1.0 / self.num_goals as f64; self.num_goals])
    }

    pub fn prob(&self, s0: &State, g: usize) -> f64 {
        self.rows
            .get(s0)
            .map_or(1.0 / self.num_goals as f64, |row| row[g])
    }

    /// Replaces the row for `s0`; it must be a distribution respecting the floor.
    pub fn set_probs(&mut self, s0: &State, probs: Vec<f64>) -> Result<()> {
        if probs.len() != self.num_goals {
            return Err(LabError::Config(format!(
                "expected {} probabilities, got {}",
                self.num_goals,
                probs.len()
            )));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-9 || probs.iter().any(|&p| !(p >= self.floor - 1e-15)) {
            return Err(LabError::Config(
                "goal-policy row must sum to 1 with every entry at or above the floor".into(),
            ));
        }
        self.rows.insert(s0.clone(), probs);
        Ok(())
    }

    /// Draws a goal from `p(· | s0)`.
    pub fn sample(&self, s0: &State, rng: &mut RngStream) -> usize {
        sample_categorical(&self.probs(s0), rng)
    }

    /// Exponentiated-gradient step on the chosen goal, followed by flooring.
    pub fn update(&mut self, s0: &State, g: usize, reward: f64) -> Result<()> {
        if !reward.is_finite() {
            return Err(LabError::RewardFault(format!("non-finite goal-policy reward {reward}")));
        }
        if g >= self.num_goals {
            return Err(LabError::Config(format!("goal index {g} out of range")));
        }
        let mut row = self.probs(s0);
        row[g] *= (self.learning_rate * reward).exp();
        let total: f64 = row.iter().sum();
        if !(total.is_finite() && total > 0.0) {
            return Err(LabError::RewardFault("goal-policy weights degenerated".into()));
        }
        row.iter_mut().for_each(|p| *p /= total);
        clip_to_floor(&mut row, self.floor);
        self.rows.insert(s0.clone(), row);
        Ok(())
    }
}

/// Raises every entry below `floor` to exactly `floor` and rescales the
/// remaining entries so the row sums to one, repeating until stable.
fn clip_to_floor(row: &mut [f64], floor: f64) {
    let mut pinned = vec![false; row.len()];
    loop {
        let mut changed = false;
        for (p, pin) in row.iter_mut().zip(pinned.iter_mut()) {
            if !*pin && *p < floor {
                *p = floor;
                *pin = true;
                changed = true;
            }
        }
        if !changed {
            return;
        }
        let pinned_mass = floor * pinned.iter().filter(|&&x| x).count() as f64;
        let free_mass: f64 = row
            .iter()
            .zip(&pinned)
            .filter(|(_, &pin)| !pin)
            .map(|(p, _)| p)
            .sum();
        if free_mass <= 0.0 {
            return;
        }
        let scale = (1.0 - pinned_mass) / free_mass;
        for (p, &pin) in row.iter_mut().zip(&pinned) {
            if !pin {
                *p *= scale;
            }
        }
    }
}

pub(crate) fn sample_categorical(probs: &[f64], rng: &mut RngStream) -> usize {
    let u: f64 = rng.random::<f64>() * probs.iter().sum::<f64>();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

pub fn discriminator_predict(d: &Discriminator, key: &ConditionKey, g: usize) -> Result<f64> {
    d.predict(key, g)
}

/// `log q(g | s0, sf) − log p(g | s0)`.
pub fn vic_reward(d: &Discriminator, p: &GoalPolicy, s0: &State, sf: &State, g: usize) -> Result<f64> {
    if d.mode() != ConditionMode::StartAndFinal {
        return Err(LabError::Config("VIC reward needs a start-and-final discriminator".into()));
    }
    let q = d.predict(&ConditionKey::StartAndFinal(s0.clone(), sf.clone()), g)?;
    Ok(q.ln() - p.prob(s0, g).ln())
}

/// `log q(g | s_next)`; never positive.
pub fn diayn_reward(d: &Discriminator, s_next: &State, g: usize) -> Result<f64> {
    if d.mode() != ConditionMode::CurrentState {
        return Err(LabError::Config("DIAYN reward needs a current-state discriminator".into()));
    }
    Ok(d.predict(&ConditionKey::Current(s_next.clone()), g)?.ln())
}

pub fn vic_goal_step(p: &GoalPolicy, s0: &State, rng: &mut RngStream) -> usize {
    p.sample(s0, rng)
}

pub fn vic_goal_update(p: &mut GoalPolicy, s0: &State, g: usize, reward: f64) -> Result<()> {
    p.update(s0, g, reward)
}

/// Uniform skill index in `[0, k)`.
pub fn diayn_goal_sample(k: usize, rng: &mut RngStream) -> Result<usize> {
    if k < 1 {
        return Err(LabError::Config("need at least one skill".into()));
    }
    Ok(rng.random_range(0..k))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SkillParams {
    #[serde(default = "SkillParams::default_k")]
    pub num_skills: usize,
    #[serde(default = "SkillParams::default_lambda")]
    pub lambda: f64,
    #[serde(default = "SkillParams::default_floor")]
    pub policy_floor: f64,
    #[serde(default = "SkillParams::default_lr")]
    pub policy_learning_rate: f64,
}

impl SkillParams {
    fn default_k() -> usize {
        4
    }
    fn default_lambda() -> f64 {
        1.0
    }
    fn default_floor() -> f64 {
        1e-3
    }
    fn default_lr() -> f64 {
        0.1
    }
}

impl Default for SkillParams {
    fn default() -> Self {
        SkillParams {
            num_skills: Self::default_k(),
            lambda: Self::default_lambda(),
            policy_floor: Self::default_floor(),
            policy_learning_rate: Self::default_lr(),
        }
    }
}

fn goal_index(t: &Transition) -> Result<usize> {
    t.goal
        .as_ref()
        .and_then(|g| g.skill_index())
        .ok_or_else(|| LabError::RewardFault("skill reward needs a skill-index goal".into()))
}

/// VIC: sparse reward on the final step of each skill execution.
#[derive(Debug, Clone)]
pub struct VicReward {
    pub discriminator: Discriminator,
    pub policy: GoalPolicy,
}

impl VicReward {
    pub fn new(params: &SkillParams) -> Result<Self> {
        Ok(VicReward {
            discriminator: Discriminator::new(
                ConditionMode::StartAndFinal,
                params.num_skills,
                params.lambda,
            )?,
            policy: GoalPolicy::new(
                params.num_skills,
                params.policy_learning_rate,
                params.policy_floor,
            )?,
        })
    }
}

impl RewardModule for VicReward {
    fn observe(&mut self, t: &Transition, ctx: &StepContext<'_>) -> Result<()> {
        if ctx.is_final() {
            let key = ConditionKey::StartAndFinal(ctx.start.clone(), t.next_state.clone());
            self.discriminator.observe(key, goal_index(t)?)?;
        }
        Ok(())
    }

    fn reward(&self, t: &Transition, ctx: &StepContext<'_>) -> Result<f64> {
        if !ctx.is_final() {
            return Ok(0.0);
        }
        vic_reward(&self.discriminator, &self.policy, ctx.start, &t.next_state, goal_index(t)?)
    }
}

/// DIAYN: dense reward `log q(g | s_{t+1})`.
#[derive(Debug, Clone)]
pub struct DiaynReward {
    pub discriminator: Discriminator,
}

impl DiaynReward {
    pub fn new(params: &SkillParams) -> Result<Self> {
        Ok(DiaynReward {
            discriminator: Discriminator::new(
                ConditionMode::CurrentState,
                params.num_skills,
                params.lambda,
            )?,
        })
    }
}

impl RewardModule for DiaynReward {
    fn observe(&mut self, t: &Transition, _: &StepContext<'_>) -> Result<()> {
        self.discriminator
            .observe(ConditionKey::Current(t.next_state.clone()), goal_index(t)?)
    }

    fn reward(&self, t: &Transition, _: &StepContext<'_>) -> Result<f64> {
        diayn_reward(&self.discriminator, &t.next_state, goal_index(t)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::Cell;

    fn st(x: u16) -> State {
        State {
            agent: Cell(x, 0),
            objects: vec![],
            blocks: vec![],
        }
    }

    #[test]
    fn zero_counts_predict_uniform() {
        let d = Discriminator::new(ConditionMode::CurrentState, 4, 1.0).unwrap();
        let key = ConditionKey::Current(st(0));
        for g in 0..4 {
            assert_eq!(discriminator_predict(&d, &key, g).unwrap(), 0.25);
        }
        assert!((diayn_reward(&d, &st(0), 2).unwrap() - 0.25f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn laplace_smoothing_closed_form() {
        let mut d = Discriminator::new(ConditionMode::CurrentState, 4, 1.0).unwrap();
        let key = ConditionKey::Current(st(1));
        d.set_counts(key.clone(), vec![9, 0, 0, 0]).unwrap();
        let dist = d.distribution(&key).unwrap();
        let want = [10.0 / 13.0, 1.0 / 13.0, 1.0 / 13.0, 1.0 / 13.0];
        for (a, b) in dist.iter().zip(want) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn wrong_mode_or_goal_rejected() {
        let d = Discriminator::new(ConditionMode::CurrentState, 4, 1.0).unwrap();
        assert!(d.predict(&ConditionKey::StartAndFinal(st(0), st(1)), 0).is_err());
        assert!(d.predict(&ConditionKey::Current(st(0)), 4).is_err());
        let p = GoalPolicy::new(4, 0.1, 1e-3).unwrap();
        assert!(vic_reward(&d, &p, &st(0), &st(1), 0).is_err());
        assert!(Discriminator::new(ConditionMode::CurrentState, 1, 1.0).is_err());
        assert!(Discriminator::new(ConditionMode::CurrentState, 3, 0.0).is_err());
    }

    #[test]
    fn vic_reward_cancels_when_q_equals_p() {
        let d = Discriminator::new(ConditionMode::StartAndFinal, 4, 1.0).unwrap();
        let p = GoalPolicy::new(4, 0.1, 1e-3).unwrap();
        assert!(vic_reward(&d, &p, &st(0), &st(1), 3).unwrap().abs() < 1e-15);
    }

    #[test]
    fn vic_reward_approaches_log_k_for_certain_discriminator() {
        let mut d = Discriminator::new(ConditionMode::StartAndFinal, 4, 1e-12).unwrap();
        let key = ConditionKey::StartAndFinal(st(0), st(1));
        d.set_counts(key, vec![0, 1_000_000, 0, 0]).unwrap();
        let p = GoalPolicy::new(4, 0.1, 1e-3).unwrap();
        let r = vic_reward(&d, &p, &st(0), &st(1), 1).unwrap();
        assert!((r - 4f64.ln()).abs() < 1e-9, "{r}");
    }

    #[test]
    fn diayn_reward_half() {
        let mut d = Discriminator::new(ConditionMode::CurrentState, 2, 1e-12).unwrap();
        d.set_counts(ConditionKey::Current(st(0)), vec![5, 5]).unwrap();
        assert!((diayn_reward(&d, &st(0), 0).unwrap() - 0.5f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn goal_policy_stays_uniform_under_equal_rewards() {
        let mut p = GoalPolicy::new(4, 0.5, 1e-3).unwrap();
        let s = st(0);
        for _round in 0..5 {
            for g in 0..4 {
                p.update(&s, g, 0.7).unwrap();
            }
        }
        for q in p.probs(&s) {
            assert!((q - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn goal_policy_respects_floor() {
        let mut p = GoalPolicy::new(3, 1.0, 0.01).unwrap();
        let s = st(0);
        for _ in 0..100 {
            p.update(&s, 0, 5.0).unwrap();
        }
        let row = p.probs(&s);
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(row.iter().all(|&q| q >= 0.01 - 1e-15), "{row:?}");
        assert!((row[1] - 0.01).abs() < 1e-15);
    }

    #[test]
    fn diayn_sample_single_skill() {
        let mut rng = RngStream::new(5, 2);
        for _ in 0..20 {
            assert_eq!(diayn_goal_sample(1, &mut rng).unwrap(), 0);
        }
        assert!(diayn_goal_sample(0, &mut rng).is_err());
    }
}
