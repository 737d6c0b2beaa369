//! Negative weighted feature distance to a goal, with goals drawn from
//! previously visited states and rare states favoured by inverse-count
//! weighting.

use std::collections::{HashMap, VecDeque};

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::env::{FeatureVec, GridWorld, State};
use crate::error::{LabError, Result};
use crate::gcrl::{Goal, RewardModule, StepContext, Transition};
use crate::rng::RngStream;
use crate::skill_use::sample_categorical;

const PSD_TOLERANCE: f64 = 1e-9;

/// Symmetric positive-semidefinite weighting of feature dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix {
    dim: usize,
    data: Vec<f64>,
    max_eigenvalue: f64,
}

impl WeightMatrix {
    pub fn identity(dim: usize) -> Self {
        Self::diagonal(&vec![1.0; dim]).expect("identity is PSD")
    }

    pub fn diagonal(weights: &[f64]) -> Result<Self> {
        let n = weights.len();
        let mut rows = vec![vec![0.0; n]; n];
        for (i, &w) in weights.iter().enumerate() {
            rows[i][i] = w;
        }
        Self::from_rows(&rows)
    }

    /// Validates symmetry and PSD-ness. Eigenvalues in `[−1e-9, 0)` are
    /// clipped to zero and the matrix is rebuilt from its eigendecomposition.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(LabError::Config("weight matrix must be square".into()));
        }
        let m = DMatrix::from_fn(n, n, |i, j| rows[i][j]);
        if m.iter().any(|x| !x.is_finite()) {
            return Err(LabError::Config("weight matrix entries must be finite".into()));
        }
        for i in 0..n {
            for j in 0..i {
                if (m[(i, j)] - m[(j, i)]).abs() > PSD_TOLERANCE {
                    return Err(LabError::Config(format!(
                        "weight matrix is not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        if n == 0 {
            return Ok(WeightMatrix {
                dim: 0,
                data: Vec::new(),
                max_eigenvalue: 0.0,
            });
        }
        let eig = SymmetricEigen::new(m.clone());
        if let Some(&low) = eig.eigenvalues.iter().find(|&&l| l < -PSD_TOLERANCE) {
            return Err(LabError::Config(format!(
                "weight matrix is not positive semidefinite (eigenvalue {low})"
            )));
        }
        let needs_clip = eig.eigenvalues.iter().any(|&l| l < 0.0);
        let m = if needs_clip {
            let clipped = eig.eigenvalues.map(|l| l.max(0.0));
            &eig.eigenvectors * DMatrix::from_diagonal(&clipped) * eig.eigenvectors.transpose()
        } else {
            m
        };
        let max_eigenvalue = eig.eigenvalues.iter().fold(0.0f64, |a, &b| a.max(b));
        Ok(WeightMatrix {
            dim: n,
            data: (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).map(|(i, j)| m[(i, j)]).collect(),
            max_eigenvalue,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.dim + j]
    }

    pub fn max_eigenvalue(&self) -> f64 {
        self.max_eigenvalue
    }

    /// Multiplies every entry by `c`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(LabError::Config("scale must be positive".into()));
        }
        Ok(WeightMatrix {
            dim: self.dim,
            data: self.data.iter().map(|x| x * c).collect(),
            max_eigenvalue: self.max_eigenvalue * c,
        })
    }

    /// Principal submatrix on the given indices.
    pub fn restrict(&self, indices: &[usize]) -> Result<Self> {
        let rows: Vec<Vec<f64>> = indices
            .iter()
            .map(|&i| indices.iter().map(|&j| self.get(i, j)).collect())
            .collect();
        Self::from_rows(&rows)
    }

    /// `dᵀ A d`, clamped at zero.
    pub fn quadratic_form(&self, d: &[f64]) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.dim {
            let row = &self.data[i * self.dim..(i + 1) * self.dim];
            let ad: f64 = row.iter().zip(d).map(|(a, x)| a * x).sum();
            acc += d[i] * ad;
        }
        acc.max(0.0)
    }
}

/// `−‖phi_next − phi_goal‖_A`.
pub fn rig_reward(phi_next: &[f64], phi_goal: &[f64], a: &WeightMatrix) -> Result<f64> {
    if phi_next.len() != phi_goal.len() || phi_next.len() != a.dim() {
        return Err(LabError::Config(format!(
            "dimension mismatch: state {}, goal {}, weights {}",
            phi_next.len(),
            phi_goal.len(),
            a.dim()
        )));
    }
    let d: Vec<f64> = phi_next.iter().zip(phi_goal).map(|(x, g)| x - g).collect();
    Ok(-a.quadratic_form(&d).sqrt())
}

/// True when the weighted distance is within `threshold`.
pub fn goal_reached(phi_next: &[f64], phi_goal: &[f64], a: &WeightMatrix, threshold: f64) -> Result<bool> {
    Ok(-rig_reward(phi_next, phi_goal, a)? <= threshold)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BufferEntry {
    pub state: State,
    pub features: FeatureVec,
    pub visits: u64,
}

/// Distinct visited states with their lifetime visit counts; the oldest
/// distinct state is evicted once capacity is reached.
#[derive(Debug, Clone)]
pub struct GoalBuffer {
    entries: VecDeque<BufferEntry>,
    positions: HashMap<State, u64>,
    front_seq: u64,
    capacity: usize,
}

impl GoalBuffer {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(LabError::Config("goal buffer capacity must be positive".into()));
        }
        Ok(GoalBuffer {
            entries: VecDeque::new(),
            positions: HashMap::new(),
            front_seq: 0,
            capacity,
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn entries(&self) -> impl Iterator<Item = &BufferEntry> {
        self.entries.iter()
    }

    /// Records a visit with the state's current lifetime count.
    pub fn record(&mut self, state: &State, features: FeatureVec, visits: u64) {
        if let Some(&seq) = self.positions.get(state) {
            self.entries[(seq - self.front_seq) as usize].visits = visits;
            return;
        }
        if self.entries.len() == self.capacity {
            let old = self.entries.pop_front().expect("capacity > 0");
            self.positions.remove(&old.state);
            self.front_seq += 1;
        }
        let seq = self.front_seq + self.entries.len() as u64;
        self.positions.insert(state.clone(), seq);
        self.entries.push_back(BufferEntry {
            state: state.clone(),
            features,
            visits,
        });
    }

    /// Sampling probabilities `∝ visits^skew_alpha`.
    pub fn sampling_probs(&self, skew_alpha: f64) -> Result<Vec<f64>> {
        if self.entries.is_empty() {
            return Err(LabError::NotReady("goal buffer is empty".into()));
        }
        if !(skew_alpha <= 0.0) {
            return Err(LabError::Config(format!("skew_alpha must be <= 0, got {skew_alpha}")));
        }
        let w: Vec<f64> = self
            .entries
            .iter()
            .map(|e| (e.visits.max(1) as f64).powf(skew_alpha))
            .collect();
        let total: f64 = w.iter().sum();
        Ok(w.into_iter().map(|x| x / total).collect())
    }

    pub fn sample_index(&self, skew_alpha: f64, rng: &mut RngStream) -> Result<usize> {
        Ok(sample_categorical(&self.sampling_probs(skew_alpha)?, rng))
    }

    pub fn get(&self, index: usize) -> &BufferEntry {
        &self.entries[index]
    }
}

/// Draws a feature-target goal from the buffer.
pub fn sample_goal(buffer: &GoalBuffer, skew_alpha: f64, rng: &mut RngStream) -> Result<Goal> {
    let i = buffer.sample_index(skew_alpha, rng)?;
    Ok(Goal::FeatureTarget {
        target: buffer.get(i).features.clone(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GoalParams {
    /// Diagonal of the weight matrix; identity when absent.
    #[serde(default)]
    pub weights: Option<Vec<f64>>,
    #[serde(default = "GoalParams::default_skew")]
    pub skew_alpha: f64,
    #[serde(default)]
    pub success_threshold: f64,
    #[serde(default = "GoalParams::default_capacity")]
    pub buffer_capacity: usize,
}

impl GoalParams {
    fn default_skew() -> f64 {
        -1.0
    }
    fn default_capacity() -> usize {
        4096
    }

    pub fn weight_matrix(&self, dim: usize) -> Result<WeightMatrix> {
        match &self.weights {
            None => Ok(WeightMatrix::identity(dim)),
            Some(w) if w.len() == dim => WeightMatrix::diagonal(w),
            Some(w) => Err(LabError::Config(format!(
                "weights has {} entries, feature dimension is {dim}",
                w.len()
            ))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.skew_alpha <= 0.0) {
            return Err(LabError::Config("skew_alpha must be <= 0".into()));
        }
        if !(self.success_threshold >= 0.0) {
            return Err(LabError::Config("success_threshold must be >= 0".into()));
        }
        if self.buffer_capacity == 0 {
            return Err(LabError::Config("buffer_capacity must be positive".into()));
        }
        Ok(())
    }
}

impl Default for GoalParams {
    fn default() -> Self {
        GoalParams {
            weights: None,
            skew_alpha: Self::default_skew(),
            success_threshold: 0.0,
            buffer_capacity: Self::default_capacity(),
        }
    }
}

/// Distance reward for feature-target goals, and for module goals restricted
/// to the module's feature subspace.
#[derive(Debug, Clone)]
pub struct GoalDistanceReward {
    world: GridWorld,
    weights: WeightMatrix,
    subspaces: Vec<(Vec<usize>, WeightMatrix)>,
}

impl GoalDistanceReward {
    pub fn new(world: &GridWorld, weights: WeightMatrix, subspaces: &[Vec<usize>]) -> Result<Self> {
        if weights.dim() != world.feature_dim() {
            return Err(LabError::Config("weight matrix dimension differs from features".into()));
        }
        let subspaces = subspaces
            .iter()
            .map(|idx| Ok((idx.clone(), weights.restrict(idx)?)))
            .collect::<Result<_>>()?;
        Ok(GoalDistanceReward {
            world: world.clone(),
            weights,
            subspaces,
        })
    }

    pub fn weights(&self) -> &WeightMatrix {
        &self.weights
    }

    /// Reward of reaching `s` under `goal`.
    pub fn reward_for(&self, s: &State, goal: &Goal) -> Result<f64> {
        let phi = self.world.features(s);
        match goal {
            Goal::FeatureTarget { target } => rig_reward(&phi.0, &target.0, &self.weights),
            Goal::ModuleGoal { module, target } => {
                let (idx, a) = self.subspaces.get(*module).ok_or_else(|| {
                    LabError::Config(format!("unknown module {module}"))
                })?;
                rig_reward(&phi.project(idx).0, &target.0, a)
            }
            other => Err(LabError::RewardFault(format!(
                "distance reward cannot use goal {other:?}"
            ))),
        }
    }

    pub fn reached(&self, s: &State, goal: &Goal, threshold: f64) -> Result<bool> {
        Ok(-self.reward_for(s, goal)? <= threshold)
    }
}

impl RewardModule for GoalDistanceReward {
    fn observe(&mut self, _: &Transition, _: &StepContext<'_>) -> Result<()> {
        Ok(())
    }

    fn reward(&self, t: &Transition, _: &StepContext<'_>) -> Result<f64> {
        let goal = t
            .goal
            .as_ref()
            .ok_or_else(|| LabError::RewardFault("distance reward needs a goal".into()))?;
        self.reward_for(&t.next_state, goal)
    }

    fn reward_bound(&self) -> Option<f64> {
        // feature differences lie in [-1, 1]
        Some((self.weights.max_eigenvalue() * self.weights.dim() as f64).sqrt() + 1e-12)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::Cell;

    #[test]
    fn rig_reward_closed_forms() {
        let id2 = WeightMatrix::identity(2);
        assert_eq!(rig_reward(&[0.3, 0.6], &[0.3, 0.6], &id2).unwrap(), 0.0);
        assert!((rig_reward(&[3.0, 4.0], &[0.0, 0.0], &id2).unwrap() + 5.0).abs() < 1e-12);
        let a = WeightMatrix::diagonal(&[4.0, 1.0]).unwrap();
        assert!((rig_reward(&[1.0, 0.0], &[0.0, 0.0], &a).unwrap() + 2.0).abs() < 1e-12);
    }

    #[test]
    fn dimension_mismatch_is_config_error() {
        let id2 = WeightMatrix::identity(2);
        assert!(matches!(
            rig_reward(&[1.0], &[0.0, 0.0], &id2),
            Err(LabError::Config(_))
        ));
    }

    #[test]
    fn null_space_gives_zero_distance() {
        let a = WeightMatrix::diagonal(&[1.0, 0.0]).unwrap();
        assert_eq!(rig_reward(&[0.5, 7.0], &[0.5, -2.0], &a).unwrap(), 0.0);
    }

    #[test]
    fn weight_matrix_validation() {
        assert!(WeightMatrix::from_rows(&[vec![1.0, 2.0], vec![0.0, 1.0]]).is_err());
        assert!(WeightMatrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]]).is_err());
        // tiny negative eigenvalue is clipped
        let m = WeightMatrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0 - 1e-12]]).unwrap();
        assert!(m.quadratic_form(&[1.0, -1.0]) >= 0.0);
        assert!(WeightMatrix::from_rows(&[vec![1.0, 0.0]]).is_err());
    }

    #[test]
    fn goal_reached_examples() {
        let id = WeightMatrix::identity(2);
        assert!(goal_reached(&[0.1, 0.2], &[0.1, 0.2], &id, 0.0).unwrap());
        assert!(!goal_reached(&[3.0, 4.0], &[0.0, 0.0], &id, 1.0).unwrap());
    }

    fn st(x: u16) -> State {
        State {
            agent: Cell(x, 0),
            objects: vec![],
            blocks: vec![],
        }
    }

    #[test]
    fn skewed_sampling_probabilities() {
        let mut buf = GoalBuffer::new(8).unwrap();
        buf.record(&st(0), FeatureVec(vec![0.0]), 1);
        buf.record(&st(1), FeatureVec(vec![1.0]), 4);
        assert_eq!(buf.sampling_probs(0.0).unwrap(), vec![0.5, 0.5]);
        let p = buf.sampling_probs(-1.0).unwrap();
        assert!((p[0] - 0.8).abs() < 1e-12 && (p[1] - 0.2).abs() < 1e-12);
        assert!(buf.sampling_probs(0.5).is_err());
    }

    #[test]
    fn empty_buffer_is_not_ready() {
        let buf = GoalBuffer::new(4).unwrap();
        let mut rng = RngStream::new(1, 2);
        assert!(matches!(sample_goal(&buf, -1.0, &mut rng), Err(LabError::NotReady(_))));
    }

    #[test]
    fn buffer_is_fifo_over_distinct_states() {
        let mut buf = GoalBuffer::new(2).unwrap();
        buf.record(&st(0), FeatureVec(vec![0.0]), 1);
        buf.record(&st(1), FeatureVec(vec![1.0]), 1);
        buf.record(&st(0), FeatureVec(vec![0.0]), 2);
        assert_eq!(buf.len(), 2);
        buf.record(&st(2), FeatureVec(vec![2.0]), 1);
        let states: Vec<_> = buf.entries().map(|e| e.state.agent.0).collect();
        assert_eq!(states, vec![1, 2]);
        buf.record(&st(1), FeatureVec(vec![1.0]), 5);
        assert_eq!(buf.get(0).visits, 5);
    }
}
