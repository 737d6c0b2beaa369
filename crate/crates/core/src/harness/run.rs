//! Seeded facet training loops.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::{BonusKind, Facet, RunConfig, OUTPUT_ROOT_ENV};
use super::log::{read_event_log, EventLogWriter, LogEvent, LogLine};
use super::tracker::{EpisodeOutcome, MetricsTracker};
use crate::curriculum::LpSelector;
use crate::effectance::{EffectanceReward, MaskParams, VisitCounts};
use crate::env::{EventId, FeatureVec, GridWorld, GridWorldConfig, State};
use crate::error::{LabError, Result};
use crate::gcrl::{rollout, Goal, GoalKey, LearnerParams, RewardModule, Rollout, Skill, StepContext, Transition};
use crate::goal_distance::{GoalBuffer, GoalDistanceReward};
use crate::metrics::{mutual_information, MetricSeries, OutcomeTable};
use crate::rng::{streams, RngStream};
use crate::salient::{ImrlReward, ModelParams};
use crate::skill_use::{diayn_goal_sample, vic_goal_step, vic_goal_update, DiaynReward, VicReward};
use crate::ARTIFACT_VERSION;

pub const EVENTS_FILE: &str = "events.jsonl";
pub const METRICS_FILE: &str = "metrics.csv";
pub const CONFIG_FILE: &str = "config.json";
pub const SUMMARY_FILE: &str = "summary.json";
pub const RECORD_FILE: &str = "record.json";

/// Deterministic digest of a run, sufficient for comparisons.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub run_id: String,
    pub facet: Facet,
    pub seed: u64,
    pub environment: GridWorldConfig,
    pub steps: u64,
    pub episodes: u64,
    pub coverage: f64,
    /// Skill/final-state mutual information over all episodes (skill facets).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mutual_information: Option<f64>,
    pub repertoire: Vec<EventId>,
    pub terminal_occupancy: Vec<(State, u64)>,
}

impl RunSummary {
    pub fn terminal_counts(&self) -> BTreeMap<State, u64> {
        self.terminal_occupancy.iter().cloned().collect()
    }
}

#[derive(Debug, Clone)]
pub struct RunRecord {
    pub config: RunConfig,
    pub version: String,
    pub summary: RunSummary,
    pub series: Vec<MetricSeries>,
    pub episodes: Vec<EpisodeOutcome>,
    pub wall_clock_ms: u128,
    /// Directory holding the log and exports, when written to disk.
    pub run_dir: Option<PathBuf>,
}

impl RunRecord {
    pub fn run_id(&self) -> &str {
        &self.summary.run_id
    }

    pub fn series(&self, name: &str) -> Option<&MetricSeries> {
        self.series.iter().find(|s| s.name == name)
    }
}

#[derive(Serialize)]
struct RecordFile<'a> {
    run_id: &'a str,
    version: &'a str,
    steps: u64,
    episodes: u64,
    wall_clock_ms: u128,
    event_log: &'a str,
    metrics: &'a str,
    series: Vec<&'a str>,
}

/// Default output root: `$COMPETENCE_LAB_OUT`, else `runs`.
pub fn default_output_root() -> PathBuf {
    std::env::var_os(OUTPUT_ROOT_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("runs"))
}

/// Runs `config` and writes `<out>/<run id>/` with the event log, metric CSV,
/// resolved configuration and summaries.
pub fn run(config: &RunConfig) -> Result<RunRecord> {
    let root = config.output_dir.clone().unwrap_or_else(default_output_root);
    run_into(config, &root)
}

pub fn run_into(config: &RunConfig, out_root: &Path) -> Result<RunRecord> {
    let resolved = config.resolve()?;
    let dir = out_root.join(resolved.run_id());
    std::fs::create_dir_all(&dir).map_err(|e| LabError::io(&dir, e))?;
    let mut writer = EventLogWriter::create(dir.join(EVENTS_FILE))?;
    let started = Instant::now();
    let mut record = execute(&resolved, |line| writer.append(line))?;
    writer.finish()?;
    record.wall_clock_ms = started.elapsed().as_millis();
    record.run_dir = Some(dir.clone());

    write_json(&dir.join(CONFIG_FILE), &resolved)?;
    write_metrics_csv(&dir.join(METRICS_FILE), record.run_id(), &record.series)?;
    write_json(&dir.join(SUMMARY_FILE), &record.summary)?;
    let file = RecordFile {
        run_id: record.run_id(),
        version: &record.version,
        steps: record.summary.steps,
        episodes: record.summary.episodes,
        wall_clock_ms: record.wall_clock_ms,
        event_log: EVENTS_FILE,
        metrics: METRICS_FILE,
        series: record.series.iter().map(|s| s.name.as_str()).collect(),
    };
    write_json(&dir.join(RECORD_FILE), &file)?;
    Ok(record)
}

/// Runs without touching the filesystem.
pub fn run_in_memory(config: &RunConfig) -> Result<RunRecord> {
    let resolved = config.resolve()?;
    let started = Instant::now();
    let mut record = execute(&resolved, |_| Ok(()))?;
    record.wall_clock_ms = started.elapsed().as_millis();
    Ok(record)
}

/// Runs independent configurations on worker threads; results keep input order.
pub fn run_many(configs: &[RunConfig], in_memory: bool) -> Vec<Result<RunRecord>> {
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(configs.len().max(1));
    let mut results: Vec<Option<Result<RunRecord>>> = (0..configs.len()).map(|_| None).collect();
    let next = std::sync::atomic::AtomicUsize::new(0);
    let slots = std::sync::Mutex::new(&mut results);
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                if i >= configs.len() {
                    break;
                }
                let r = if in_memory {
                    run_in_memory(&configs[i])
                } else {
                    run(&configs[i])
                };
                slots.lock().expect("no worker panicked")[i] = Some(r);
            });
        }
    });
    results.into_iter().map(|r| r.expect("every slot filled")).collect()
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| LabError::io(path, e))
}

pub fn write_metrics_csv(path: &Path, run_id: &str, series: &[MetricSeries]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(["run_id", "metric", "step", "value"])
        .map_err(|e| csv_err(path, e))?;
    for s in series {
        for &(step, value) in &s.points {
            w.write_record([run_id, &s.name, &step.to_string(), &value.to_string()])
                .map_err(|e| csv_err(path, e))?;
        }
    }
    w.flush().map_err(|e| LabError::io(path, e))
}

/// Reads a metric CSV back into series (in file order).
pub fn read_metrics_csv(path: &Path) -> Result<Vec<MetricSeries>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let mut series: Vec<MetricSeries> = Vec::new();
    for row in r.records() {
        let row = row.map_err(|e| csv_err(path, e))?;
        let bad = || LabError::Config(format!("malformed metric row in {}", path.display()));
        let name = row.get(1).ok_or_else(bad)?;
        let step: u64 = row.get(2).ok_or_else(bad)?.parse().map_err(|_| bad())?;
        let value: f64 = row.get(3).ok_or_else(bad)?.parse().map_err(|_| bad())?;
        if series.last().map(|s| s.name.as_str()) != Some(name) {
            series.push(MetricSeries::new(name));
        }
        series.last_mut().expect("just pushed").push(step, value)?;
    }
    Ok(series)
}

fn csv_err(path: &Path, e: csv::Error) -> LabError {
    LabError::io(path, std::io::Error::other(e.to_string()))
}

pub fn load_summary(run_dir: &Path) -> Result<RunSummary> {
    let path = run_dir.join(SUMMARY_FILE);
    let text = std::fs::read_to_string(&path).map_err(|e| LabError::io(&path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// Recomputes every metric of a saved run from its event log alone.
pub fn replay(run_dir: &Path) -> Result<MetricsTracker> {
    let lines = read_event_log(run_dir.join(EVENTS_FILE))?;
    MetricsTracker::replay(&lines)
}

/// Sums the facet reward with weighted bonus rewards.
struct Composite<'a> {
    primary: &'a mut dyn RewardModule,
    bonuses: &'a mut [(f64, Box<dyn RewardModule + Send>)],
}

impl RewardModule for Composite<'_> {
    fn on_reset(&mut self, start: &State) {
        self.primary.on_reset(start);
        for (_, b) in self.bonuses.iter_mut() {
            b.on_reset(start);
        }
    }

    fn observe(&mut self, t: &Transition, ctx: &StepContext<'_>) -> Result<()> {
        self.primary.observe(t, ctx)?;
        for (_, b) in self.bonuses.iter_mut() {
            b.observe(t, ctx)?;
        }
        Ok(())
    }

    fn reward(&self, t: &Transition, ctx: &StepContext<'_>) -> Result<f64> {
        let mut r = self.primary.reward(t, ctx)?;
        for (w, b) in self.bonuses.iter() {
            r += w * b.reward(t, ctx)?;
        }
        Ok(r)
    }

    fn end_episode(&mut self) -> Result<()> {
        self.primary.end_episode()?;
        for (_, b) in self.bonuses.iter_mut() {
            b.end_episode()?;
        }
        Ok(())
    }

    fn reward_bound(&self) -> Option<f64> {
        let mut bound = self.primary.reward_bound()?;
        for (w, b) in self.bonuses.iter() {
            bound += w.abs() * b.reward_bound()?;
        }
        Some(bound)
    }
}

struct Session<'c, F: FnMut(&LogLine) -> Result<()>> {
    config: &'c RunConfig,
    world: GridWorld,
    horizon: usize,
    learner: LearnerParams,
    actions: RngStream,
    goals: RngStream,
    modules: RngStream,
    step: u64,
    episode: u64,
    tracker: MetricsTracker,
    sink: F,
    spawned: BTreeSet<EventId>,
    bonuses: Vec<(f64, Box<dyn RewardModule + Send>)>,
}

impl<F: FnMut(&LogLine) -> Result<()>> Session<'_, F> {
    fn emit(&mut self, event: LogEvent) -> Result<()> {
        let line = LogLine::new(event);
        self.tracker.consume(&line)?;
        (self.sink)(&line)
    }

    fn done(&self) -> bool {
        self.step >= self.config.total_steps
    }

    /// One rollout of the skill, logged. `reset` marks a fresh episode start
    /// (as opposed to a chained continuation).
    fn play(&mut self, skill: &mut Skill, start: &State, module: &mut dyn RewardModule, reset: bool) -> Result<Rollout> {
        let remaining = (self.config.total_steps - self.step) as usize;
        let horizon = self.horizon.min(remaining);
        self.emit(LogEvent::EpisodeStart {
            episode: self.episode,
            step: self.step,
            start: start.clone(),
            goal: skill.goal.clone(),
        })?;
        let mut composite = Composite {
            primary: module,
            bonuses: &mut self.bonuses,
        };
        if reset {
            composite.on_reset(start);
        }
        let out = rollout(
            &self.world,
            skill,
            start,
            &mut composite,
            &self.learner,
            horizon,
            &mut self.actions,
        )?;
        composite.end_episode()?;
        for (t, &r) in out.trajectory.iter().zip(&out.rewards) {
            self.step += 1;
            self.emit(LogEvent::Transition {
                episode: self.episode,
                step: self.step,
                state: t.state.clone(),
                action: t.action,
                next_state: t.next_state.clone(),
                events: t.events.clone(),
                reward: r,
            })?;
            for e in &t.events {
                if self.spawned.insert(e.clone()) {
                    self.emit(LogEvent::SkillSpawned {
                        step: self.step,
                        event: e.clone(),
                    })?;
                }
            }
        }
        Ok(out)
    }

    fn finish_episode(&mut self, out: &Rollout, success: Option<bool>) -> Result<()> {
        self.emit(LogEvent::EpisodeEnd {
            episode: self.episode,
            step: self.step,
            final_state: out.final_state().clone(),
            success,
            episode_return: out.discounted_return,
        })?;
        self.episode += 1;
        Ok(())
    }
}

fn execute<F: FnMut(&LogLine) -> Result<()>>(config: &RunConfig, sink: F) -> Result<RunRecord> {
    let world = GridWorld::new(config.environment_config()?)?;
    let start_line = LogLine::new(LogEvent::RunStart {
        run_id: config.run_id(),
        version: ARTIFACT_VERSION.to_string(),
        config: Box::new(config.clone()),
    });
    let tracker = MetricsTracker::from_run_start(&start_line)?;
    let mut bonuses: Vec<(f64, Box<dyn RewardModule + Send>)> = Vec::new();
    for b in &config.bonuses {
        let module: Box<dyn RewardModule + Send> = match b.reward {
            BonusKind::Effectance => Box::new(EffectanceReward::new(&world, MaskParams::default())),
            BonusKind::Imrl => Box::new(ImrlReward::new(
                &ModelParams::default(),
                world.salient_events().len(),
                config.learner,
            )?),
        };
        bonuses.push((b.weight, module));
    }
    let mut session = Session {
        config,
        horizon: config.horizon(&world),
        world,
        learner: config.learner,
        actions: RngStream::new(config.seed, streams::ACTIONS),
        goals: RngStream::new(config.seed, streams::GOALS),
        modules: RngStream::new(config.seed, streams::MODULES),
        step: 0,
        episode: 0,
        tracker,
        sink,
        spawned: BTreeSet::new(),
        bonuses,
    };
    (session.sink)(&start_line)?;

    match config.facet {
        Facet::Effectance => run_effectance(&mut session)?,
        Facet::Vic => run_vic(&mut session)?,
        Facet::Diayn => run_diayn(&mut session)?,
        Facet::Rig => run_goal_reaching(&mut session, false)?,
        Facet::Curious => run_goal_reaching(&mut session, true)?,
        Facet::Imrl => run_imrl(&mut session)?,
    }

    let (steps, episodes) = (session.step, session.episode);
    session.emit(LogEvent::RunEnd { steps, episodes })?;
    let tracker = session.tracker;

    let mutual_information = if config.facet.uses_skill_indices() {
        let mut table = OutcomeTable::new();
        for e in tracker.episodes() {
            if let Some(g) = e.skill {
                table.add(g, e.final_state.clone());
            }
        }
        Some(mutual_information(&table)?)
    } else {
        None
    };
    let summary = RunSummary {
        run_id: config.run_id(),
        facet: config.facet,
        seed: config.seed,
        environment: config.environment_config()?,
        steps,
        episodes,
        coverage: tracker.coverage()?,
        mutual_information,
        repertoire: tracker.repertoire().to_vec(),
        terminal_occupancy: tracker
            .terminal_occupancy()
            .iter()
            .map(|(s, &c)| (s.clone(), c))
            .collect(),
    };
    Ok(RunRecord {
        config: config.clone(),
        version: ARTIFACT_VERSION.to_string(),
        summary,
        series: tracker.series(),
        episodes: tracker.episodes().to_vec(),
        wall_clock_ms: 0,
        run_dir: None,
    })
}

fn run_effectance<F: FnMut(&LogLine) -> Result<()>>(s: &mut Session<'_, F>) -> Result<()> {
    let mask = s.config.mask.unwrap_or_default();
    let mut module = EffectanceReward::new(&s.world, mask);
    let mut skill = Skill::new(Goal::skill(0));
    let start = s.world.initial_state();
    while !s.done() {
        let out = s.play(&mut skill, &start, &mut module, true)?;
        s.finish_episode(&out, None)?;
    }
    Ok(())
}

fn run_diayn<F: FnMut(&LogLine) -> Result<()>>(s: &mut Session<'_, F>) -> Result<()> {
    let params = s.config.skills.unwrap_or_default();
    let mut module = DiaynReward::new(&params)?;
    let mut skills: Vec<Skill> = (0..params.num_skills).map(|k| Skill::new(Goal::skill(k))).collect();
    let start = s.world.initial_state();
    while !s.done() {
        let g = diayn_goal_sample(params.num_skills, &mut s.goals)?;
        let out = s.play(&mut skills[g], &start, &mut module, true)?;
        s.finish_episode(&out, None)?;
    }
    Ok(())
}

fn run_vic<F: FnMut(&LogLine) -> Result<()>>(s: &mut Session<'_, F>) -> Result<()> {
    let params = s.config.skills.unwrap_or_default();
    let mut module = VicReward::new(&params)?;
    let mut skills: Vec<Skill> = (0..params.num_skills).map(|k| Skill::new(Goal::skill(k))).collect();
    let mut s0 = s.world.initial_state();
    let mut first = true;
    while !s.done() {
        let g = vic_goal_step(&module.policy, &s0, &mut s.goals);
        let out = s.play(&mut skills[g], &s0, &mut module, first)?;
        first = false;
        // discriminator already saw this execution; now reinforce the goal policy
        let reward = *out.rewards.last().expect("rollouts are never empty");
        vic_goal_update(&mut module.policy, &s0, g, reward)?;
        s.finish_episode(&out, None)?;
        s0 = out.final_state().clone();
    }
    Ok(())
}

fn run_goal_reaching<F: FnMut(&LogLine) -> Result<()>>(s: &mut Session<'_, F>, modular: bool) -> Result<()> {
    let goal_params = s.config.goals.clone().unwrap_or_default();
    let weights = goal_params.weight_matrix(s.world.feature_dim())?;
    let curriculum = s.config.curriculum.clone().unwrap_or_default();
    let modules = if modular { curriculum.modules.clone() } else { Vec::new() };
    let subspaces: Vec<Vec<usize>> = modules.iter().map(|m| m.subspace.clone()).collect();
    let mut module = GoalDistanceReward::new(&s.world, weights, &subspaces)?;
    let mut selector = if modular {
        Some(LpSelector::new(modules.len(), curriculum.queue_len, curriculum.epsilon)?)
    } else {
        None
    };
    let mut visits = VisitCounts::new();
    let mut buffer = GoalBuffer::new(goal_params.buffer_capacity)?;
    let mut skills: HashMap<GoalKey, Skill> = HashMap::new();
    let start = s.world.initial_state();

    let remember = |state: &State, visits: &mut VisitCounts, buffer: &mut GoalBuffer, world: &GridWorld| {
        let n = visits.record(state);
        buffer.record(state, world.features(state), n);
    };

    while !s.done() {
        remember(&start, &mut visits, &mut buffer, &s.world);
        let goal = match &selector {
            None => crate::goal_distance::sample_goal(&buffer, goal_params.skew_alpha, &mut s.goals)?,
            Some(sel) => {
                let m = sel.select(&mut s.modules)?;
                let targets = module_targets(&buffer, &modules[m].subspace);
                let i = rand::Rng::random_range(&mut s.goals, 0..targets.len());
                Goal::ModuleGoal {
                    module: m,
                    target: targets[i].clone(),
                }
            }
        };
        let skill = skills.entry(goal.key()).or_insert_with(|| Skill::new(goal.clone()));
        let out = s.play(skill, &start, &mut module, true)?;
        for t in &out.trajectory {
            remember(&t.next_state, &mut visits, &mut buffer, &s.world);
        }
        let success = module.reached(out.final_state(), &goal, goal_params.success_threshold)?;
        if let (Some(sel), Goal::ModuleGoal { module: m, .. }) = (&mut selector, &goal) {
            sel.record(*m, success);
        }
        s.finish_episode(&out, Some(success))?;
    }
    Ok(())
}

/// Distinct projections of buffer entries onto a subspace, in buffer order.
fn module_targets(buffer: &GoalBuffer, subspace: &[usize]) -> Vec<FeatureVec> {
    let mut seen = BTreeSet::new();
    let mut targets = Vec::new();
    for e in buffer.entries() {
        let p = e.features.project(subspace);
        let key: Vec<u64> = p.0.iter().map(|x| x.to_bits()).collect();
        if seen.insert(key) {
            targets.push(p);
        }
    }
    targets
}

fn run_imrl<F: FnMut(&LogLine) -> Result<()>>(s: &mut Session<'_, F>) -> Result<()> {
    let params = s.config.model.unwrap_or_default();
    let mut module = ImrlReward::new(&params, s.world.salient_events().len(), s.learner)?;
    let mut behaviour = Skill::new(Goal::skill(0));
    let start = s.world.initial_state();
    while !s.done() {
        let out = s.play(&mut behaviour, &start, &mut module, true)?;
        s.finish_episode(&out, None)?;
    }
    let logged: Vec<&EventId> = s.tracker.repertoire().iter().collect();
    let held: Vec<&EventId> = module.repertoire.creation_order().iter().collect();
    if logged != held {
        return Err(LabError::Consistency(format!(
            "repertoire {held:?} disagrees with the event log {logged:?}"
        )));
    }
    Ok(())
}
