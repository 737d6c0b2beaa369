//! Salient-event skills: a repertoire that grows when a designated event is
//! first seen, a multi-time model of how reliably (and how quickly) each
//! event follows a state, and a surprise reward derived from it.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::env::{EventId, State};
use crate::error::{LabError, Result};
use crate::gcrl::{q_update, Goal, LearnerParams, RewardModule, Skill, StepContext, Transition};

/// One skill per salient event, in order of first observation. Never shrinks.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SkillRepertoire {
    skills: HashMap<EventId, Skill>,
    order: Vec<EventId>,
}

impl SkillRepertoire {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn creation_order(&self) -> &[EventId] {
        &self.order
    }

    pub fn get(&self, event: &EventId) -> Option<&Skill> {
        self.skills.get(event)
    }

    pub fn contains(&self, event: &EventId) -> bool {
        self.skills.contains_key(event)
    }

    /// Adds a fresh skill for every event not yet in the repertoire; returns
    /// the newly added events.
    pub fn maybe_spawn_skill(&mut self, events: &[EventId]) -> Vec<EventId> {
        let mut spawned = Vec::new();
        for e in events {
            if !self.skills.contains_key(e) {
                self.skills.insert(
                    e.clone(),
                    Skill::new(Goal::SalientEvent { event: e.clone() }),
                );
                self.order.push(e.clone());
                spawned.push(e.clone());
            }
        }
        spawned
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    #[serde(default = "ModelParams::default_alpha")]
    pub alpha_m: f64,
    #[serde(default = "ModelParams::default_gamma")]
    pub gamma_m: f64,
    /// Multiplier of the surprise reward.
    #[serde(default = "ModelParams::default_scale")]
    pub scale: f64,
}

impl ModelParams {
    fn default_alpha() -> f64 {
        0.2
    }
    fn default_gamma() -> f64 {
        0.9
    }
    fn default_scale() -> f64 {
        1.0
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha_m > 0.0 && self.alpha_m <= 1.0) {
            return Err(LabError::Config(format!("alpha_m must lie in (0, 1], got {}", self.alpha_m)));
        }
        if !(self.gamma_m > 0.0 && self.gamma_m < 1.0) {
            return Err(LabError::Config(format!("gamma_m must lie in (0, 1), got {}", self.gamma_m)));
        }
        if !(self.scale >= 0.0 && self.scale.is_finite()) {
            return Err(LabError::Config("scale must be finite and non-negative".into()));
        }
        Ok(())
    }
}

impl Default for ModelParams {
    fn default() -> Self {
        ModelParams {
            alpha_m: Self::default_alpha(),
            gamma_m: Self::default_gamma(),
            scale: Self::default_scale(),
        }
    }
}

/// Discounted reachability estimate `P(state, event)` ∈ [0, 1], zero when unseen.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiTimeModel {
    values: HashMap<(State, EventId), f64>,
    alpha_m: f64,
    gamma_m: f64,
}

impl MultiTimeModel {
    pub fn new(alpha_m: f64, gamma_m: f64) -> Result<Self> {
        ModelParams {
            alpha_m,
            gamma_m,
            scale: 1.0,
        }
        .validate()?;
        Ok(MultiTimeModel {
            values: HashMap::new(),
            alpha_m,
            gamma_m,
        })
    }

    pub fn get(&self, s: &State, e: &EventId) -> f64 {
        self.values.get(&(s.clone(), e.clone())).copied().unwrap_or(0.0)
    }

    /// `P ← (1 − α)P + α·(γ^k if succeeded else 0)`.
    pub fn update(&mut self, start: &State, event: &EventId, steps_taken: usize, succeeded: bool) -> Result<()> {
        if steps_taken < 1 {
            return Err(LabError::Config("steps_taken must be at least 1".into()));
        }
        let target = if succeeded {
            self.gamma_m.powi(steps_taken.min(i32::MAX as usize) as i32)
        } else {
            0.0
        };
        let p = self.values.entry((start.clone(), event.clone())).or_insert(0.0);
        *p = ((1.0 - self.alpha_m) * *p + self.alpha_m * target).clamp(0.0, 1.0);
        Ok(())
    }
}

pub fn model_update(
    model: &mut MultiTimeModel,
    start: &State,
    event: &EventId,
    steps_taken: usize,
    succeeded: bool,
) -> Result<()> {
    model.update(start, event, steps_taken, succeeded)
}

/// Surprise reward: `Σ_e (1 − P(s, e))` over the salient events fired by the
/// transition, zero when none fired.
pub fn imrl_reward(model: &MultiTimeModel, s: &State, _s_next: &State, events: &[EventId]) -> f64 {
    events.iter().map(|e| 1.0 - model.get(s, e)).sum()
}

pub fn maybe_spawn_skill(rep: &mut SkillRepertoire, events: &[EventId]) -> Vec<EventId> {
    rep.maybe_spawn_skill(events)
}

#[derive(Debug, Clone)]
struct PendingUpdate {
    start: State,
    event: EventId,
    steps: usize,
}

/// Reward module for the capacity-growth facet.
///
/// Model updates triggered by a transition are applied on the next call to
/// `observe` (or at episode end), so the transition's own reward measures
/// surprise against the model as it stood before the transition. Every
/// repertoire skill also learns off-policy from each transition, with reward 1
/// when its event fires.
#[derive(Debug, Clone)]
pub struct ImrlReward {
    pub model: MultiTimeModel,
    pub repertoire: SkillRepertoire,
    scale: f64,
    num_salient: usize,
    skill_learning: LearnerParams,
    trail: Vec<State>,
    last_hit: HashMap<EventId, usize>,
    pending: Vec<PendingUpdate>,
    spawned_last: Vec<EventId>,
}

impl ImrlReward {
    pub fn new(params: &ModelParams, num_salient: usize, skill_learning: LearnerParams) -> Result<Self> {
        params.validate()?;
        Ok(ImrlReward {
            model: MultiTimeModel::new(params.alpha_m, params.gamma_m)?,
            repertoire: SkillRepertoire::new(),
            scale: params.scale,
            num_salient,
            skill_learning,
            trail: Vec::new(),
            last_hit: HashMap::new(),
            pending: Vec::new(),
            spawned_last: Vec::new(),
        })
    }

    /// Events whose skills were created by the most recent `observe`.
    pub fn spawned_last(&self) -> &[EventId] {
        &self.spawned_last
    }

    fn flush(&mut self) -> Result<()> {
        for u in std::mem::take(&mut self.pending) {
            self.model.update(&u.start, &u.event, u.steps, true)?;
        }
        Ok(())
    }

    /// Failure updates for every state not followed by each event before the
    /// episode ended.
    fn close_trail(&mut self) -> Result<()> {
        self.flush()?;
        let events: Vec<EventId> = self.repertoire.creation_order().to_vec();
        for e in &events {
            let from = self.last_hit.get(e).map_or(0, |&i| i + 1);
            for i in from..self.trail.len() {
                let steps = self.trail.len() - i;
                self.model.update(&self.trail[i], e, steps, false)?;
            }
        }
        self.trail.clear();
        self.last_hit.clear();
        Ok(())
    }
}

impl RewardModule for ImrlReward {
    fn on_reset(&mut self, _start: &State) {
        // a reset without end_episode still closes the previous trail
        let _ = self.close_trail();
    }

    fn observe(&mut self, t: &Transition, _: &StepContext<'_>) -> Result<()> {
        self.flush()?;
        self.spawned_last = self.repertoire.maybe_spawn_skill(&t.events);

        let step = self.trail.len();
        self.trail.push(t.state.clone());
        for e in &t.events {
            let from = self.last_hit.get(e).map_or(0, |&i| i + 1);
            for i in from..=step {
                self.pending.push(PendingUpdate {
                    start: self.trail[i].clone(),
                    event: e.clone(),
                    steps: step - i + 1,
                });
            }
            self.last_hit.insert(e.clone(), step);
        }

        let LearnerParams { alpha, gamma, .. } = self.skill_learning;
        for e in self.repertoire.creation_order().to_vec() {
            let r = if t.events.contains(&e) { 1.0 } else { 0.0 };
            let skill = self.repertoire.skills.get_mut(&e).expect("ordered events have skills");
            q_update(&mut skill.q, t, r, alpha, gamma)?;
        }
        Ok(())
    }

    fn reward(&self, t: &Transition, _: &StepContext<'_>) -> Result<f64> {
        Ok(self.scale * imrl_reward(&self.model, &t.state, &t.next_state, &t.events))
    }

    fn end_episode(&mut self) -> Result<()> {
        self.close_trail()
    }

    fn reward_bound(&self) -> Option<f64> {
        Some(self.scale * self.num_salient as f64)
    }
}
