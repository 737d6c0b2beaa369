//! Python bindings: the grid world, the reward formulas, curriculum and
//! metric helpers, and whole experiment runs.
//!
//! States cross the boundary as `State` objects; run results come back as
//! plain dicts and lists.

use std::path::PathBuf;

use lab::curriculum::{self, Belief, CompetenceQueue};
use lab::effectance;
use lab::goal_distance::{self, WeightMatrix};
use lab::harness::{self, RunConfig};
use lab::metrics::{self, OutcomeTable};
use lab::salient;
use lab::skill_use::{self, ConditionKey, ConditionMode, Discriminator, GoalPolicy};
use lab::{Action, Cell, EventId, LabError, RngStream};
use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;

create_exception!(competence_lab, CompetenceLabError, PyException);

fn err(e: LabError) -> PyErr {
    CompetenceLabError::new_err(format!("[{}] {e}", e.kind()))
}

fn from_json<'py>(py: Python<'py>, value: &impl serde::Serialize) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| err(e.into()))?;
    py.import("json")?.call_method1("loads", (text,))
}

#[pyclass(name = "State", frozen, eq, hash, from_py_object)]
#[derive(Clone, PartialEq, Eq, Hash)]
struct PyState(lab::State);

#[pymethods]
impl PyState {
    #[getter]
    fn agent(&self) -> (u16, u16) {
        (self.0.agent.0, self.0.agent.1)
    }

    #[getter]
    fn objects(&self) -> Vec<bool> {
        self.0.objects.clone()
    }

    #[getter]
    fn blocks(&self) -> Vec<(u16, u16)> {
        self.0.blocks.iter().map(|c| (c.0, c.1)).collect()
    }

    fn __repr__(&self) -> String {
        format!("State({})", self.0)
    }
}

#[pyclass(name = "GridWorld", frozen)]
struct PyGridWorld(lab::GridWorld);

#[pymethods]
impl PyGridWorld {
    /// Builds a world from a JSON configuration string; the playroom when omitted.
    #[new]
    #[pyo3(signature = (config_json=None))]
    fn new(config_json: Option<&str>) -> PyResult<Self> {
        let cfg = match config_json {
            Some(text) => lab::GridWorldConfig::from_json_str(text).map_err(err)?,
            None => lab::GridWorldConfig::playroom(),
        };
        Ok(PyGridWorld(lab::GridWorld::new(cfg).map_err(err)?))
    }

    #[staticmethod]
    #[pyo3(signature = (width, height, episode_horizon=50))]
    fn empty(width: u16, height: u16, episode_horizon: usize) -> PyResult<Self> {
        let cfg = lab::GridWorldConfig::empty(width, height, Cell(0, 0), episode_horizon);
        Ok(PyGridWorld(lab::GridWorld::new(cfg).map_err(err)?))
    }

    #[getter]
    fn width(&self) -> u16 {
        self.0.width()
    }

    #[getter]
    fn height(&self) -> u16 {
        self.0.height()
    }

    #[getter]
    fn episode_horizon(&self) -> usize {
        self.0.episode_horizon()
    }

    #[getter]
    fn feature_dim(&self) -> usize {
        self.0.feature_dim()
    }

    fn salient_events(&self) -> Vec<String> {
        self.0.salient_events().iter().map(|e| e.as_str().to_string()).collect()
    }

    fn config_json(&self) -> PyResult<String> {
        serde_json::to_string(self.0.config()).map_err(|e| err(e.into()))
    }

    fn initial_state(&self) -> PyState {
        PyState(self.0.initial_state())
    }

    /// Action indices: 0 up, 1 down, 2 left, 3 right, 4 interact.
    fn step(&self, state: &PyState, action: usize) -> PyResult<(PyState, Vec<String>)> {
        let action = Action::from_index(action)
            .ok_or_else(|| CompetenceLabError::new_err(format!("action index {action} out of range 0..5")))?;
        let (next, events) = self.0.step(&state.0, action).map_err(err)?;
        Ok((PyState(next), events.into_iter().map(|e| e.0).collect()))
    }

    fn state_space_size(&self) -> u128 {
        self.0.state_space_size()
    }

    fn enumerate_states(&self, py: Python<'_>) -> PyResult<Vec<PyState>> {
        let states = py.detach(|| self.0.enumerate_states()).map_err(err)?;
        Ok(states.into_iter().map(PyState).collect())
    }

    fn features(&self, state: &PyState) -> PyResult<Vec<f64>> {
        self.0.validate_state(&state.0).map_err(err)?;
        Ok(self.0.features(&state.0).0)
    }
}

/// Discounted reachability model behind the surprise reward.
#[pyclass(name = "MultiTimeModel")]
struct PyMultiTimeModel(salient::MultiTimeModel);

#[pymethods]
impl PyMultiTimeModel {
    #[new]
    #[pyo3(signature = (alpha_m=0.2, gamma_m=0.9))]
    fn new(alpha_m: f64, gamma_m: f64) -> PyResult<Self> {
        Ok(PyMultiTimeModel(salient::MultiTimeModel::new(alpha_m, gamma_m).map_err(err)?))
    }

    fn get(&self, state: &PyState, event: &str) -> f64 {
        self.0.get(&state.0, &EventId::new(event))
    }

    fn update(&mut self, state: &PyState, event: &str, steps_taken: usize, succeeded: bool) -> PyResult<()> {
        self.0
            .update(&state.0, &EventId::new(event), steps_taken, succeeded)
            .map_err(err)
    }

    fn reward(&self, state: &PyState, events: Vec<String>) -> f64 {
        let events: Vec<EventId> = events.into_iter().map(EventId).collect();
        salient::imrl_reward(&self.0, &state.0, &state.0, &events)
    }
}

#[pyfunction]
fn impact_reward(phi_s: Vec<f64>, phi_next: Vec<f64>, visits_next: u64) -> PyResult<f64> {
    effectance::impact_reward(&phi_s, &phi_next, visits_next).map_err(err)
}

/// Goal-distance reward; `weights` is a full matrix, identity when omitted.
#[pyfunction]
#[pyo3(signature = (phi_next, phi_goal, weights=None))]
fn rig_reward(phi_next: Vec<f64>, phi_goal: Vec<f64>, weights: Option<Vec<Vec<f64>>>) -> PyResult<f64> {
    let a = match weights {
        Some(rows) => WeightMatrix::from_rows(&rows).map_err(err)?,
        None => WeightMatrix::identity(phi_next.len()),
    };
    goal_distance::rig_reward(&phi_next, &phi_goal, &a).map_err(err)
}

fn placeholder_state() -> lab::State {
    lab::State {
        agent: Cell(0, 0),
        objects: Vec::new(),
        blocks: Vec::new(),
    }
}

/// Skill-discovery reward from discriminator counts over the K goals at one state.
#[pyfunction]
#[pyo3(signature = (counts, goal, smoothing=1.0))]
fn diayn_reward(counts: Vec<u64>, goal: usize, smoothing: f64) -> PyResult<f64> {
    let s = placeholder_state();
    let mut d = Discriminator::new(ConditionMode::CurrentState, counts.len(), smoothing).map_err(err)?;
    d.set_counts(ConditionKey::Current(s.clone()), counts).map_err(err)?;
    skill_use::diayn_reward(&d, &s, goal).map_err(err)
}

/// Option-discovery reward from counts at one (start, final) pair and the goal prior.
#[pyfunction]
#[pyo3(signature = (counts, prior, goal, smoothing=1.0))]
fn vic_reward(counts: Vec<u64>, prior: Vec<f64>, goal: usize, smoothing: f64) -> PyResult<f64> {
    let s = placeholder_state();
    let k = counts.len();
    let mut d = Discriminator::new(ConditionMode::StartAndFinal, k, smoothing).map_err(err)?;
    d.set_counts(ConditionKey::StartAndFinal(s.clone(), s.clone()), counts).map_err(err)?;
    let floor = prior.iter().copied().fold(1.0 / k.max(1) as f64, f64::min);
    let mut p = GoalPolicy::new(k, 0.1, floor).map_err(err)?;
    p.set_probs(&s, prior).map_err(err)?;
    skill_use::vic_reward(&d, &p, &s, &s, goal).map_err(err)
}

#[pyfunction]
fn module_probabilities(learning_progress: Vec<f64>, epsilon: f64) -> PyResult<Vec<f64>> {
    curriculum::module_probabilities(&learning_progress, epsilon).map_err(err)
}

#[pyfunction]
fn competence(outcomes: Vec<bool>) -> PyResult<f64> {
    let q = CompetenceQueue::from_outcomes(outcomes.len().max(1), &outcomes).map_err(err)?;
    curriculum::competence(&q).map_err(err)
}

#[pyfunction]
fn learning_progress(outcomes: Vec<bool>) -> PyResult<f64> {
    let q = CompetenceQueue::from_outcomes(outcomes.len().max(1), &outcomes).map_err(err)?;
    curriculum::learning_progress(&q).map_err(err)
}

/// Draws `draws` arm indices by Thompson sampling over Beta(successes, failures) beliefs.
#[pyfunction]
#[pyo3(signature = (beliefs, seed, draws=1))]
fn thompson_select(beliefs: Vec<(f64, f64)>, seed: u64, draws: usize) -> PyResult<Vec<usize>> {
    let beliefs = beliefs
        .into_iter()
        .map(|(a, b)| Belief::new(a, b))
        .collect::<Result<Vec<_>, _>>()
        .map_err(err)?;
    let mut rng = RngStream::new(seed, lab::rng::streams::MODULES);
    (0..draws)
        .map(|_| curriculum::thompson_select(&beliefs, &mut rng).map_err(err))
        .collect()
}

/// Mutual information (nats) of a goal-by-outcome count table.
#[pyfunction]
fn mutual_information(counts: Vec<Vec<u64>>) -> PyResult<f64> {
    let mut t = OutcomeTable::<usize>::new();
    for (g, row) in counts.iter().enumerate() {
        for (s, &c) in row.iter().enumerate() {
            t.add_count(g, s, c);
        }
    }
    metrics::mutual_information(&t).map_err(err)
}

#[pyfunction]
fn js_divergence(p: Vec<f64>, q: Vec<f64>) -> PyResult<f64> {
    metrics::js_divergence(&p, &q).map_err(err)
}

/// Checks a run configuration and returns its resolved form.
#[pyfunction]
fn validate<'py>(py: Python<'py>, config_json: &str) -> PyResult<Bound<'py, PyAny>> {
    let cfg = RunConfig::from_json_str(config_json).and_then(|c| c.resolve()).map_err(err)?;
    from_json(py, &cfg)
}

/// Runs one experiment. Without `out_dir` nothing is written to disk.
/// Returns `{"summary": ..., "series": {name: [[step, value], ...]}}`.
#[pyfunction]
#[pyo3(signature = (config_json, out_dir=None))]
fn run<'py>(py: Python<'py>, config_json: &str, out_dir: Option<PathBuf>) -> PyResult<Bound<'py, PyAny>> {
    let cfg = RunConfig::from_json_str(config_json).map_err(err)?;
    let rec = py
        .detach(|| match &out_dir {
            Some(root) => harness::run_into(&cfg, root),
            None => harness::run_in_memory(&cfg),
        })
        .map_err(err)?;
    let series: serde_json::Map<String, serde_json::Value> = rec
        .series
        .iter()
        .map(|s| {
            let points = &s.points;
            (s.name.clone(), serde_json::json!(points))
        })
        .collect();
    let mut out = serde_json::json!({ "summary": rec.summary, "series": series });
    if let Some(dir) = &rec.run_dir {
        out["run_dir"] = serde_json::json!(dir.display().to_string());
    }
    from_json(py, &out)
}

/// Compares finished run directories and writes comparison.csv and summary.txt into `out_dir`.
#[pyfunction]
fn compare<'py>(py: Python<'py>, run_dirs: Vec<PathBuf>, out_dir: PathBuf) -> PyResult<Bound<'py, PyAny>> {
    let cmp = py.detach(|| harness::compare_dirs(&run_dirs, &out_dir)).map_err(err)?;
    from_json(
        py,
        &serde_json::json!({
            "pairs": cmp.pairs,
            "mean_between_facets": cmp.mean_between_facets(),
            "mean_within_facet": cmp.mean_within_facet(),
        }),
    )
}

#[pymodule]
fn competence_lab(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("CompetenceLabError", m.py().get_type::<CompetenceLabError>())?;
    m.add_class::<PyState>()?;
    m.add_class::<PyGridWorld>()?;
    m.add_class::<PyMultiTimeModel>()?;
    m.add_function(wrap_pyfunction!(impact_reward, m)?)?;
    m.add_function(wrap_pyfunction!(rig_reward, m)?)?;
    m.add_function(wrap_pyfunction!(diayn_reward, m)?)?;
    m.add_function(wrap_pyfunction!(vic_reward, m)?)?;
    m.add_function(wrap_pyfunction!(module_probabilities, m)?)?;
    m.add_function(wrap_pyfunction!(competence, m)?)?;
    m.add_function(wrap_pyfunction!(learning_progress, m)?)?;
    m.add_function(wrap_pyfunction!(thompson_select, m)?)?;
    m.add_function(wrap_pyfunction!(mutual_information, m)?)?;
    m.add_function(wrap_pyfunction!(js_divergence, m)?)?;
    m.add_function(wrap_pyfunction!(validate, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(compare, m)?)?;
    Ok(())
}
