//! Goal-conditioned tabular learning: goals, skills, Q-tables and rollouts.

use std::collections::HashMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env::{Action, EventId, FeatureVec, GridWorld, State};
use crate::error::{LabError, Result};
use crate::rng::RngStream;

/// The parameter of a reward function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Goal {
    SkillIndex { k: usize },
    FeatureTarget { target: FeatureVec },
    ModuleGoal { module: usize, target: FeatureVec },
    SalientEvent { event: EventId },
}

/// Hashable identity of a [`Goal`]; feature targets are compared bitwise.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum GoalKey {
    Skill(usize),
    Feature(Vec<u64>),
    Module(usize, Vec<u64>),
    Event(EventId),
}

impl Goal {
    pub fn skill(k: usize) -> Goal {
        Goal::SkillIndex { k }
    }

    pub fn key(&self) -> GoalKey {
        let bits = |v: &FeatureVec| v.0.iter().map(|x| x.to_bits()).collect();
        match self {
            Goal::SkillIndex { k } => GoalKey::Skill(*k),
            Goal::FeatureTarget { target } => GoalKey::Feature(bits(target)),
            Goal::ModuleGoal { module, target } => GoalKey::Module(*module, bits(target)),
            Goal::SalientEvent { event } => GoalKey::Event(event.clone()),
        }
    }

    pub fn skill_index(&self) -> Option<usize> {
        match self {
            Goal::SkillIndex { k } => Some(*k),
            _ => None,
        }
    }
}

/// Tabular action values with a default for unseen pairs.
#[derive(Debug, Clone)]
pub struct QTable {
    rows: HashMap<State, [f64; Action::COUNT]>,
    default_value: f64,
}

impl Default for QTable {
    fn default() -> Self {
        QTable::new(0.0)
    }
}

impl QTable {
    pub fn new(default_value: f64) -> Self {
        QTable {
            rows: HashMap::new(),
            default_value,
        }
    }

    pub fn default_value(&self) -> f64 {
        self.default_value
    }

    pub fn get(&self, s: &State, a: Action) -> f64 {
        self.row(s)[a.index()]
    }

    pub fn row(&self, s: &State) -> [f64; Action::COUNT] {
        self.rows
            .get(s)
            .copied()
            .unwrap_or([self.default_value; Action::COUNT])
    }

    pub fn set(&mut self, s: &State, a: Action, value: f64) {
        let default = self.default_value;
        if let Some(row) = self.rows.get_mut(s) {
            row[a.index()] = value;
        } else if value != default {
            let mut row = [default; Action::COUNT];
            row[a.index()] = value;
            self.rows.insert(s.clone(), row);
        }
    }

    pub fn max_value(&self, s: &State) -> f64 {
        self.row(s).into_iter().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Highest-valued action; ties go to the lowest action index.
    pub fn greedy_action(&self, s: &State) -> Action {
        let row = self.row(s);
        let mut best = 0;
        for (i, &v) in row.iter().enumerate().skip(1) {
            if v > row[best] {
                best = i;
            }
        }
        Action::ALL[best]
    }

    /// Largest absolute stored value (or the default when nothing is stored).
    pub fn max_abs(&self) -> f64 {
        self.rows
            .values()
            .flat_map(|r| r.iter())
            .fold(self.default_value.abs(), |m, v| m.max(v.abs()))
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

impl PartialEq for QTable {
    /// Equal when every lookup agrees, regardless of which rows are stored.
    fn eq(&self, other: &Self) -> bool {
        self.default_value == other.default_value
            && self.rows.keys().chain(other.rows.keys()).all(|s| self.row(s) == other.row(s))
    }
}

/// A goal-conditioned policy: one Q-table per goal.
#[derive(Debug, Clone, PartialEq)]
pub struct Skill {
    pub goal: Goal,
    pub q: QTable,
}

impl Skill {
    pub fn new(goal: Goal) -> Self {
        Skill {
            goal,
            q: QTable::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub state: State,
    pub action: Action,
    pub next_state: State,
    pub events: Vec<EventId>,
    pub goal: Option<Goal>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LearnerParams {
    #[serde(default = "LearnerParams::default_alpha")]
    pub alpha: f64,
    #[serde(default = "LearnerParams::default_gamma")]
    pub gamma: f64,
    #[serde(default = "LearnerParams::default_epsilon")]
    pub epsilon: f64,
}

impl LearnerParams {
    fn default_alpha() -> f64 {
        0.1
    }
    fn default_gamma() -> f64 {
        0.95
    }
    fn default_epsilon() -> f64 {
        0.1
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(LabError::Config(format!("alpha must lie in (0, 1], got {}", self.alpha)));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(LabError::Config(format!("gamma must lie in [0, 1), got {}", self.gamma)));
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(LabError::Config(format!(
                "epsilon must lie in [0, 1], got {}",
                self.epsilon
            )));
        }
        Ok(())
    }
}

impl Default for LearnerParams {
    fn default() -> Self {
        LearnerParams {
            alpha: Self::default_alpha(),
            gamma: Self::default_gamma(),
            epsilon: Self::default_epsilon(),
        }
    }
}

/// One-step Q-learning backup of `t` with the given reward.
pub fn q_update(q: &mut QTable, t: &Transition, reward: f64, alpha: f64, gamma: f64) -> Result<()> {
    if !reward.is_finite() {
        return Err(LabError::RewardFault(format!("non-finite reward {reward}")));
    }
    let old = q.get(&t.state, t.action);
    let target = reward + gamma * q.max_value(&t.next_state);
    let new = old + alpha * (target - old);
    if !new.is_finite() {
        return Err(LabError::RewardFault(format!("Q-value diverged to {new}")));
    }
    q.set(&t.state, t.action, new);
    Ok(())
}

/// With probability `epsilon` a uniformly random action, otherwise the greedy one.
pub fn epsilon_greedy(q: &QTable, state: &State, epsilon: f64, rng: &mut RngStream) -> Action {
    if rng.random::<f64>() < epsilon {
        Action::ALL[rng.random_range(0..Action::COUNT)]
    } else {
        q.greedy_action(state)
    }
}

/// Per-step information a reward module may condition on.
#[derive(Debug, Clone, Copy)]
pub struct StepContext<'a> {
    /// Step index inside the current rollout, starting at 0.
    pub step: usize,
    pub horizon: usize,
    /// First state of the rollout.
    pub start: &'a State,
}

impl StepContext<'_> {
    pub fn is_final(&self) -> bool {
        self.step + 1 == self.horizon
    }
}

/// Maps transitions (and the goal they carry) to scalar intrinsic reward.
///
/// Rollouts call [`observe`](RewardModule::observe) before
/// [`reward`](RewardModule::reward) on every transition, so count-based
/// rewards already include the transition being rewarded.
pub trait RewardModule {
    /// Called when the world is reset to `start` (not on chained rollouts).
    fn on_reset(&mut self, _start: &State) {}

    fn observe(&mut self, t: &Transition, ctx: &StepContext<'_>) -> Result<()>;

    fn reward(&self, t: &Transition, ctx: &StepContext<'_>) -> Result<f64>;

    /// Called once after the last rollout of an episode.
    fn end_episode(&mut self) -> Result<()> {
        Ok(())
    }

    /// Upper bound on `|reward|`, when the module can state one.
    fn reward_bound(&self) -> Option<f64> {
        None
    }
}

/// Always returns zero.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroReward;

impl RewardModule for ZeroReward {
    fn observe(&mut self, _: &Transition, _: &StepContext<'_>) -> Result<()> {
        Ok(())
    }

    fn reward(&self, _: &Transition, _: &StepContext<'_>) -> Result<f64> {
        Ok(0.0)
    }

    fn reward_bound(&self) -> Option<f64> {
        Some(0.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rollout {
    pub trajectory: Vec<Transition>,
    pub rewards: Vec<f64>,
    /// Discounted sum of intrinsic rewards.
    pub discounted_return: f64,
}

impl Rollout {
    pub fn final_state(&self) -> &State {
        &self.trajectory.last().expect("rollouts are never empty").next_state
    }
}

/// Runs `skill` for `horizon` steps from `start`, learning online from the
/// module's reward.
pub fn rollout(
    world: &GridWorld,
    skill: &mut Skill,
    start: &State,
    module: &mut dyn RewardModule,
    params: &LearnerParams,
    horizon: usize,
    rng: &mut RngStream,
) -> Result<Rollout> {
    if horizon < 1 {
        return Err(LabError::Config("rollout horizon must be at least 1".into()));
    }
    let bound = module.reward_bound();
    let mut trajectory = Vec::with_capacity(horizon);
    let mut rewards = Vec::with_capacity(horizon);
    let mut discounted_return = 0.0;
    let mut discount = 1.0;
    let mut state = start.clone();
    for step in 0..horizon {
        let action = epsilon_greedy(&skill.q, &state, params.epsilon, rng);
        let (next_state, events) = world.step(&state, action)?;
        let t = Transition {
            state,
            action,
            next_state,
            events,
            goal: Some(skill.goal.clone()),
        };
        let ctx = StepContext {
            step,
            horizon,
            start,
        };
        module.observe(&t, &ctx)?;
        let r = module.reward(&t, &ctx)?;
        q_update(&mut skill.q, &t, r, params.alpha, params.gamma)?;
        if let Some(r_max) = bound {
            check_bound(&skill.q, &t, r, r_max, params.gamma)?;
        }
        discounted_return += discount * r;
        discount *= params.gamma;
        state = t.next_state.clone();
        trajectory.push(t);
        rewards.push(r);
    }
    Ok(Rollout {
        trajectory,
        rewards,
        discounted_return,
    })
}

fn check_bound(q: &QTable, t: &Transition, r: f64, r_max: f64, gamma: f64) -> Result<()> {
    const SLACK: f64 = 1e-9;
    if r.abs() > r_max + SLACK {
        return Err(LabError::RewardFault(format!(
            "reward {r} exceeds the declared bound {r_max}"
        )));
    }
    let limit = r_max / (1.0 - gamma) + SLACK;
    let v = q.get(&t.state, t.action);
    if v.abs() > limit.max(q.default_value().abs()) {
        return Err(LabError::RewardFault(format!(
            "Q-value {v} exceeds R_max/(1-gamma) = {limit}"
        )));
    }
    Ok(())
}

/// Executes the greedy policy of `q` without learning; returns the visited
/// states including `start`.
pub fn greedy_path(world: &GridWorld, q: &QTable, start: &State, horizon: usize) -> Result<Vec<State>> {
    let mut path = Vec::with_capacity(horizon + 1);
    path.push(start.clone());
    for _ in 0..horizon {
        let s = path.last().expect("non-empty");
        let (next, _) = world.step(s, q.greedy_action(s))?;
        path.push(next);
    }
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{Cell, GridWorldConfig};

    fn world3() -> GridWorld {
        GridWorld::new(GridWorldConfig::empty(3, 3, Cell(1, 1), 5)).unwrap()
    }

    fn transition(world: &GridWorld, a: Action) -> Transition {
        let s = world.initial_state();
        let (next_state, events) = world.step(&s, a).unwrap();
        Transition {
            state: s,
            action: a,
            next_state,
            events,
            goal: None,
        }
    }

    #[test]
    fn zero_reward_on_zero_table_changes_nothing() {
        let world = world3();
        let mut q = QTable::default();
        q_update(&mut q, &transition(&world, Action::Up), 0.0, 0.1, 0.95).unwrap();
        assert_eq!(q, QTable::default());
    }

    #[test]
    fn single_update_closed_form() {
        let world = world3();
        let t = transition(&world, Action::Up);
        let mut q = QTable::default();
        q_update(&mut q, &t, 1.0, 0.5, 0.95).unwrap();
        assert_eq!(q.get(&t.state, Action::Up), 0.5);
        assert_eq!(q.get(&t.state, Action::Down), 0.0);
        assert_eq!(q.get(&t.next_state, Action::Up), 0.0);
    }

    #[test]
    fn non_finite_reward_is_a_fault() {
        let world = world3();
        let mut q = QTable::default();
        let err = q_update(&mut q, &transition(&world, Action::Up), f64::NAN, 0.1, 0.9);
        assert!(matches!(err, Err(LabError::RewardFault(_))));
    }

    #[test]
    fn greedy_ties_break_to_lowest_index() {
        let world = world3();
        let s = world.initial_state();
        let q = QTable::default();
        let mut rng = RngStream::new(1, 1);
        for _ in 0..50 {
            assert_eq!(epsilon_greedy(&q, &s, 0.0, &mut rng), Action::Up);
        }
        let mut q = QTable::default();
        q.set(&s, Action::Right, 2.0);
        q.set(&s, Action::Interact, 2.0);
        for _ in 0..50 {
            assert_eq!(epsilon_greedy(&q, &s, 0.0, &mut rng), Action::Right);
        }
    }

    #[test]
    fn rollout_horizon_one_and_zero_reward() {
        let world = world3();
        let mut skill = Skill::new(Goal::skill(0));
        let mut rng = RngStream::new(3, 1);
        let start = world.initial_state();
        let out = rollout(
            &world,
            &mut skill,
            &start,
            &mut ZeroReward,
            &LearnerParams::default(),
            1,
            &mut rng,
        )
        .unwrap();
        assert_eq!(out.trajectory.len(), 1);
        assert_eq!(out.discounted_return, 0.0);
        assert_eq!(skill.q, QTable::default());

        let err = rollout(
            &world,
            &mut skill,
            &start,
            &mut ZeroReward,
            &LearnerParams::default(),
            0,
            &mut rng,
        );
        assert!(err.is_err());
    }

    #[test]
    fn rollout_replays_bit_identically() {
        let world = world3();
        let run = || {
            let mut skill = Skill::new(Goal::skill(0));
            let mut rng = RngStream::new(99, 1);
            let params = LearnerParams {
                epsilon: 0.7,
                ..LearnerParams::default()
            };
            rollout(&world, &mut skill, &world.initial_state(), &mut ZeroReward, &params, 40, &mut rng)
                .unwrap()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn learner_params_validation() {
        assert!(LearnerParams::default().validate().is_ok());
        for bad in [
            LearnerParams { alpha: 0.0, ..Default::default() },
            LearnerParams { gamma: 1.0, ..Default::default() },
            LearnerParams { epsilon: 1.5, ..Default::default() },
        ] {
            assert!(bad.validate().is_err());
        }
    }
}
