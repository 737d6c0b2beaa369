//! Tabular laboratory for competence-driven intrinsic motivation.
//!
//! A deterministic gridworld ([`env`]) and a shared goal-conditioned
//! Q-learning core ([`gcrl`]) host one reward module per competence facet:
//! impact-driven effectance ([`effectance`]), variational skill rewards
//! ([`skill_use`]), goal-distance rewards with inverse-count goal sampling
//! ([`goal_distance`]), learning-progress curricula and Thompson sampling
//! ([`curriculum`]) and salient-event skills with surprise rewards
//! ([`salient`]). [`metrics`] and [`harness`] run seeded experiments and
//! compare the behaviour the facets produce.

pub mod curriculum;
pub mod effectance;
pub mod env;
pub mod error;
pub mod gcrl;
pub mod goal_distance;
pub mod harness;
pub mod metrics;
pub mod rng;
pub mod salient;
pub mod skill_use;

pub use env::{Action, Cell, EventId, FeatureVec, GridWorld, GridWorldConfig, ObjectKind, ObjectSpec, State};
pub use error::{LabError, Result};
pub use gcrl::{Goal, LearnerParams, QTable, RewardModule, Skill, Transition};
pub use rng::RngStream;

/// Version stamped into run records and event logs.
pub const ARTIFACT_VERSION: &str = env!("CARGO_PKG_VERSION");
