//! Metric computation from the event stream alone.
//!
//! A run feeds every log line it writes through a [`MetricsTracker`]; replaying
//! the saved log through a fresh tracker therefore reproduces every metric.

use std::collections::{BTreeMap, BTreeSet, HashSet, VecDeque};

use serde::{Deserialize, Serialize};

use super::config::{Facet, RunConfig};
use super::log::{LogEvent, LogLine};
use crate::curriculum::LpSelector;
use crate::env::{EventId, GridWorld, State};
use crate::error::{LabError, Result};
use crate::gcrl::Goal;
use crate::metrics::{coverage_of, mutual_information, MetricSeries, OutcomeTable};
use crate::skill_use::{ConditionKey, ConditionMode, Discriminator};

/// Episodes in the trailing windows of return, accuracy and MI metrics.
pub const EPISODE_WINDOW: usize = 200;

/// Outcome of one finished episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeOutcome {
    pub end_step: u64,
    pub start: State,
    pub final_state: State,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub skill: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub module: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub success: Option<bool>,
    pub episode_return: f64,
}

struct Current {
    start: State,
    goal: Goal,
}

pub struct MetricsTracker {
    run_id: String,
    facet: Facet,
    world: GridWorld,
    cadence: u64,
    seen: HashSet<State>,
    series: BTreeMap<String, MetricSeries>,
    current: Option<Current>,
    returns: VecDeque<f64>,
    discriminator: Option<Discriminator>,
    correct: VecDeque<bool>,
    recent_outcomes: VecDeque<(usize, State)>,
    selector: Option<LpSelector>,
    module_ids: Vec<String>,
    successes: VecDeque<bool>,
    repertoire: BTreeSet<EventId>,
    repertoire_order: Vec<EventId>,
    terminal: BTreeMap<State, u64>,
    episodes: Vec<EpisodeOutcome>,
    last_step: u64,
    last_emitted: u64,
    finished: Option<(u64, u64)>,
}

impl MetricsTracker {
    /// Builds a tracker from the `run_start` line that opens every log.
    pub fn from_run_start(line: &LogLine) -> Result<Self> {
        let LogEvent::RunStart { run_id, config, .. } = &line.event else {
            return Err(LabError::Consistency("event log must open with run_start".into()));
        };
        let config: &RunConfig = config;
        let world = GridWorld::new(config.environment_config()?)?;
        let discriminator = match (config.facet, &config.skills) {
            (Facet::Diayn, Some(s)) => Some(Discriminator::new(
                ConditionMode::CurrentState,
                s.num_skills,
                s.lambda,
            )?),
            (Facet::Vic, Some(s)) => Some(Discriminator::new(
                ConditionMode::StartAndFinal,
                s.num_skills,
                s.lambda,
            )?),
            _ => None,
        };
        let (selector, module_ids) = match (&config.facet, &config.curriculum) {
            (Facet::Curious, Some(c)) => (
                Some(LpSelector::new(c.modules.len(), c.queue_len, c.epsilon)?),
                c.modules.iter().map(|m| m.id.clone()).collect(),
            ),
            _ => (None, Vec::new()),
        };
        Ok(MetricsTracker {
            run_id: run_id.clone(),
            facet: config.facet,
            world,
            cadence: config.metric_cadence,
            seen: HashSet::new(),
            series: BTreeMap::new(),
            current: None,
            returns: VecDeque::new(),
            discriminator,
            correct: VecDeque::new(),
            recent_outcomes: VecDeque::new(),
            selector,
            module_ids,
            successes: VecDeque::new(),
            repertoire: BTreeSet::new(),
            repertoire_order: Vec::new(),
            terminal: BTreeMap::new(),
            episodes: Vec::new(),
            last_step: 0,
            last_emitted: 0,
            finished: None,
        })
    }

    /// Replays a complete log.
    pub fn replay(lines: &[LogLine]) -> Result<Self> {
        let first = lines
            .first()
            .ok_or_else(|| LabError::Consistency("empty event log".into()))?;
        let mut tracker = Self::from_run_start(first)?;
        for line in &lines[1..] {
            tracker.consume(line)?;
        }
        Ok(tracker)
    }

    pub fn run_id(&self) -> &str {
        &self.run_id
    }

    pub fn facet(&self) -> Facet {
        self.facet
    }

    pub fn consume(&mut self, line: &LogLine) -> Result<()> {
        match &line.event {
            LogEvent::RunStart { .. } => {
                return Err(LabError::Consistency("duplicate run_start".into()));
            }
            LogEvent::EpisodeStart { start, goal, .. } => {
                self.seen.insert(start.clone());
                self.current = Some(Current {
                    start: start.clone(),
                    goal: goal.clone(),
                });
            }
            LogEvent::Transition {
                step, next_state, ..
            } => {
                if *step != self.last_step + 1 {
                    return Err(LabError::Consistency(format!(
                        "transition step {step} follows {}",
                        self.last_step
                    )));
                }
                self.last_step = *step;
                self.seen.insert(next_state.clone());
                if let (Some(d), Some(cur)) = (&mut self.discriminator, &self.current) {
                    if d.mode() == ConditionMode::CurrentState {
                        let g = skill_of(&cur.goal)?;
                        d.observe(ConditionKey::Current(next_state.clone()), g)?;
                    }
                }
                if step % self.cadence == 0 {
                    self.emit(*step)?;
                }
            }
            LogEvent::SkillSpawned { event, .. } => {
                if self.repertoire.insert(event.clone()) {
                    self.repertoire_order.push(event.clone());
                }
            }
            LogEvent::EpisodeEnd {
                step,
                final_state,
                success,
                episode_return,
                ..
            } => {
                let cur = self
                    .current
                    .take()
                    .ok_or_else(|| LabError::Consistency("episode_end without start".into()))?;
                *self.terminal.entry(final_state.clone()).or_insert(0) += 1;
                push_window(&mut self.returns, *episode_return);
                let skill = cur.goal.skill_index();
                let module = match &cur.goal {
                    Goal::ModuleGoal { module, .. } => Some(*module),
                    _ => None,
                };
                if let (Some(d), Some(g)) = (&mut self.discriminator, skill) {
                    let key = match d.mode() {
                        ConditionMode::StartAndFinal => {
                            let key = ConditionKey::StartAndFinal(cur.start.clone(), final_state.clone());
                            d.observe(key.clone(), g)?;
                            key
                        }
                        ConditionMode::CurrentState => ConditionKey::Current(final_state.clone()),
                    };
                    push_window(&mut self.correct, d.predict_argmax(&key)? == g);
                    push_window(&mut self.recent_outcomes, (g, final_state.clone()));
                }
                if let Some(ok) = success {
                    push_window(&mut self.successes, *ok);
                    if let (Some(sel), Some(m)) = (&mut self.selector, module) {
                        sel.record(m, *ok);
                    }
                }
                self.episodes.push(EpisodeOutcome {
                    end_step: *step,
                    start: cur.start,
                    final_state: final_state.clone(),
                    skill,
                    module,
                    success: *success,
                    episode_return: *episode_return,
                });
            }
            LogEvent::RunEnd { steps, episodes } => {
                if *steps != self.last_step {
                    return Err(LabError::Consistency(format!(
                        "run_end reports {steps} steps, log has {}",
                        self.last_step
                    )));
                }
                if self.last_emitted < *steps {
                    self.emit(*steps)?;
                }
                self.finished = Some((*steps, *episodes));
            }
        }
        Ok(())
    }

    fn point(&mut self, name: &str, step: u64, value: f64) -> Result<()> {
        self.series
            .entry(name.to_string())
            .or_insert_with(|| MetricSeries::new(name))
            .push(step, value)
    }

    fn emit(&mut self, step: u64) -> Result<()> {
        self.last_emitted = step;
        let cov = coverage_of(self.seen.len(), &self.world)?;
        self.point("coverage", step, cov)?;
        if !self.returns.is_empty() {
            let mean = self.returns.iter().sum::<f64>() / self.returns.len() as f64;
            self.point("episode_return", step, mean)?;
        }
        if !self.correct.is_empty() {
            let acc = self.correct.iter().filter(|&&c| c).count() as f64 / self.correct.len() as f64;
            self.point("discriminator_accuracy", step, acc)?;
            let mut table = OutcomeTable::new();
            for (g, s) in &self.recent_outcomes {
                table.add(*g, s.clone());
            }
            let mi = mutual_information(&table)?;
            self.point("mutual_information", step, mi)?;
        }
        if !self.successes.is_empty() {
            let rate = self.successes.iter().filter(|&&c| c).count() as f64 / self.successes.len() as f64;
            self.point("goal_success_rate", step, rate)?;
        }
        if let Some(sel) = self.selector.clone() {
            for (i, q) in sel.queues.iter().enumerate() {
                let id = self.module_ids[i].clone();
                if !q.is_empty() {
                    self.point(&format!("competence/{id}"), step, crate::curriculum::competence(q)?)?;
                }
                if q.len() >= 2 {
                    self.point(
                        &format!("learning_progress/{id}"),
                        step,
                        crate::curriculum::learning_progress(q)?,
                    )?;
                }
            }
        }
        if self.facet == Facet::Imrl {
            let size = self.repertoire.len() as f64;
            self.point("repertoire_size", step, size)?;
        }
        Ok(())
    }

    pub fn series(&self) -> Vec<MetricSeries> {
        self.series.values().cloned().collect()
    }

    pub fn get_series(&self, name: &str) -> Option<&MetricSeries> {
        self.series.get(name)
    }

    pub fn terminal_occupancy(&self) -> &BTreeMap<State, u64> {
        &self.terminal
    }

    pub fn episodes(&self) -> &[EpisodeOutcome] {
        &self.episodes
    }

    pub fn coverage(&self) -> Result<f64> {
        coverage_of(self.seen.len(), &self.world)
    }

    pub fn repertoire(&self) -> &[EventId] {
        &self.repertoire_order
    }

    pub fn steps(&self) -> u64 {
        self.last_step
    }

    pub fn finished(&self) -> Option<(u64, u64)> {
        self.finished
    }
}

fn push_window<T>(w: &mut VecDeque<T>, x: T) {
    if w.len() == EPISODE_WINDOW {
        w.pop_front();
    }
    w.push_back(x);
}

fn skill_of(goal: &Goal) -> Result<usize> {
    goal.skill_index()
        .ok_or_else(|| LabError::Consistency("skill-index goal expected".into()))
}

/// Mutual information between skill index and final state over episodes
/// ending in `(from_step, to_step]`.
pub fn window_mutual_information(episodes: &[EpisodeOutcome], from_step: u64, to_step: u64) -> Result<f64> {
    let mut table = OutcomeTable::new();
    for e in episodes {
        if e.end_step > from_step && e.end_step <= to_step {
            if let Some(g) = e.skill {
                table.add(g, e.final_state.clone());
            }
        }
    }
    mutual_information(&table)
}
