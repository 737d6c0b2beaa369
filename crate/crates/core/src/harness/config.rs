use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::curriculum::ModuleSpec;
use crate::effectance::MaskParams;
use crate::env::{Cell, GridWorld, GridWorldConfig};
use crate::error::{LabError, Result};
use crate::gcrl::LearnerParams;
use crate::goal_distance::GoalParams;
use crate::salient::ModelParams;
use crate::skill_use::SkillParams;

/// Environment variable naming the default output root.
pub const OUTPUT_ROOT_ENV: &str = "COMPETENCE_LAB_OUT";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Facet {
    Effectance,
    Vic,
    Diayn,
    Rig,
    Curious,
    Imrl,
}

impl Facet {
    pub const ALL: [Facet; 6] = [
        Facet::Effectance,
        Facet::Vic,
        Facet::Diayn,
        Facet::Rig,
        Facet::Curious,
        Facet::Imrl,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Facet::Effectance => "effectance",
            Facet::Vic => "vic",
            Facet::Diayn => "diayn",
            Facet::Rig => "rig",
            Facet::Curious => "curious",
            Facet::Imrl => "imrl",
        }
    }

    /// Facets whose goals are skill indices.
    pub fn uses_skill_indices(self) -> bool {
        matches!(self, Facet::Vic | Facet::Diayn)
    }
}

impl fmt::Display for Facet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Facet {
    type Err = LabError;

    fn from_str(s: &str) -> Result<Self> {
        Facet::ALL
            .into_iter()
            .find(|f| f.as_str() == s)
            .ok_or_else(|| LabError::Config(format!("unknown facet {s:?}")))
    }
}

/// Where the environment comes from: a built-in name (`builtin:playroom`,
/// `builtin:empty5x5`), a path relative to the run configuration, or an
/// inline document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EnvironmentRef {
    Named(String),
    Inline(GridWorldConfig),
}

impl EnvironmentRef {
    pub fn resolve(&self, base_dir: Option<&Path>) -> Result<GridWorldConfig> {
        match self {
            EnvironmentRef::Inline(cfg) => Ok(cfg.clone()),
            EnvironmentRef::Named(name) => match name.strip_prefix("builtin:") {
                Some("playroom") => Ok(GridWorldConfig::playroom()),
                Some("empty5x5") => Ok(GridWorldConfig::empty(5, 5, Cell(2, 2), 10)),
                Some(other) => Err(LabError::Config(format!("unknown built-in environment {other:?}"))),
                None => {
                    let path = PathBuf::from(name);
                    let path = match base_dir {
                        Some(dir) if path.is_relative() => dir.join(path),
                        _ => path,
                    };
                    GridWorldConfig::load(path)
                }
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurriculumParams {
    /// Feature subspaces; one module per entity when empty.
    #[serde(default)]
    pub modules: Vec<ModuleSpec>,
    #[serde(default = "CurriculumParams::default_queue_len")]
    pub queue_len: usize,
    #[serde(default = "CurriculumParams::default_epsilon")]
    pub epsilon: f64,
}

impl CurriculumParams {
    fn default_queue_len() -> usize {
        40
    }
    fn default_epsilon() -> f64 {
        0.1
    }

    /// Configured modules, or one module per entity of the world.
    pub fn modules_for(&self, world: &GridWorld) -> Vec<ModuleSpec> {
        if !self.modules.is_empty() {
            return self.modules.clone();
        }
        let mut modules = vec![ModuleSpec {
            id: "agent".into(),
            subspace: vec![0, 1],
        }];
        let toggles: Vec<_> = world
            .config()
            .objects
            .iter()
            .filter(|o| o.kind.is_toggleable())
            .collect();
        for (i, obj) in toggles.iter().enumerate() {
            modules.push(ModuleSpec {
                id: obj.id.clone(),
                subspace: vec![2 + i],
            });
        }
        let base = 2 + toggles.len();
        for (b, obj) in world
            .config()
            .objects
            .iter()
            .filter(|o| !o.kind.is_toggleable())
            .enumerate()
        {
            modules.push(ModuleSpec {
                id: obj.id.clone(),
                subspace: vec![base + 2 * b, base + 2 * b + 1],
            });
        }
        modules
    }
}

impl Default for CurriculumParams {
    fn default() -> Self {
        CurriculumParams {
            modules: Vec::new(),
            queue_len: Self::default_queue_len(),
            epsilon: Self::default_epsilon(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BonusKind {
    Effectance,
    Imrl,
}

/// Additive weighted reward term stacked on the facet's own reward.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardBonus {
    pub reward: BonusKind,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub environment: EnvironmentRef,
    pub facet: Facet,
    #[serde(default)]
    pub learner: LearnerParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask: Option<MaskParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub skills: Option<SkillParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub goals: Option<GoalParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub curriculum: Option<CurriculumParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelParams>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub bonuses: Vec<RewardBonus>,
    pub total_steps: u64,
    /// Overrides the environment's episode horizon.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub episode_horizon: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "RunConfig::default_cadence")]
    pub metric_cadence: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

impl RunConfig {
    fn default_cadence() -> u64 {
        100
    }

    /// A configuration with defaults for everything but the essentials.
    pub fn new(environment: GridWorldConfig, facet: Facet, total_steps: u64, seed: u64) -> Self {
        RunConfig {
            environment: EnvironmentRef::Inline(environment),
            facet,
            learner: LearnerParams::default(),
            mask: None,
            skills: None,
            goals: None,
            curriculum: None,
            model: None,
            bonuses: Vec::new(),
            total_steps,
            episode_horizon: None,
            seed,
            metric_cadence: Self::default_cadence(),
            output_dir: None,
        }
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| LabError::Config(e.to_string()))
    }

    /// Loads a configuration and resolves a path-referenced environment
    /// relative to the file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| LabError::io(path, e))?;
        let mut cfg = Self::from_json_str(&text)?;
        let env = cfg.environment.resolve(path.parent())?;
        cfg.environment = EnvironmentRef::Inline(env);
        Ok(cfg)
    }

    pub fn run_id(&self) -> String {
        format!("{}-seed{}", self.facet, self.seed)
    }

    /// Inlines the environment, fills in every facet default and checks the
    /// whole configuration. The result is what a run records and replays.
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = self.clone();
        let env = cfg.environment.resolve(None)?;
        cfg.environment = EnvironmentRef::Inline(env.clone());
        let world = GridWorld::new(env)?;

        if cfg.total_steps < 1 {
            return Err(LabError::Config("total_steps must be at least 1".into()));
        }
        if cfg.metric_cadence < 1 {
            return Err(LabError::Config("metric_cadence must be at least 1".into()));
        }
        if cfg.episode_horizon == Some(0) {
            return Err(LabError::Config("episode_horizon must be at least 1".into()));
        }
        cfg.learner.validate()?;

        let facet = cfg.facet;
        let reject = |name: &str, present: bool, allowed: &[Facet]| -> Result<()> {
            if present && !allowed.contains(&facet) {
                return Err(LabError::Config(format!(
                    "setting {name:?} does not apply to facet {facet}"
                )));
            }
            Ok(())
        };
        reject("mask", cfg.mask.is_some(), &[Facet::Effectance])?;
        reject("skills", cfg.skills.is_some(), &[Facet::Vic, Facet::Diayn])?;
        reject("goals", cfg.goals.is_some(), &[Facet::Rig, Facet::Curious])?;
        reject("curriculum", cfg.curriculum.is_some(), &[Facet::Curious])?;
        reject("model", cfg.model.is_some(), &[Facet::Imrl])?;

        match facet {
            Facet::Effectance => {
                cfg.mask.get_or_insert_with(MaskParams::default).validate()?;
            }
            Facet::Vic | Facet::Diayn => {
                let s = cfg.skills.get_or_insert_with(SkillParams::default);
                if s.num_skills < 2 {
                    return Err(LabError::Config("num_skills must be at least 2".into()));
                }
                if !(s.lambda > 0.0) {
                    return Err(LabError::Config("lambda must be > 0".into()));
                }
                if facet == Facet::Vic
                    && !(s.policy_floor > 0.0 && s.policy_floor * s.num_skills as f64 <= 1.0)
                {
                    return Err(LabError::Config("policy_floor must lie in (0, 1/K]".into()));
                }
                if facet == Facet::Vic
                    && !(s.policy_learning_rate > 0.0 && s.policy_learning_rate <= 1.0)
                {
                    return Err(LabError::Config("policy_learning_rate must lie in (0, 1]".into()));
                }
            }
            Facet::Rig | Facet::Curious => {
                let g = cfg.goals.get_or_insert_with(GoalParams::default);
                g.validate()?;
                g.weight_matrix(world.feature_dim())?;
                if facet == Facet::Curious {
                    let c = cfg.curriculum.get_or_insert_with(CurriculumParams::default);
                    if c.modules.is_empty() {
                        c.modules = c.modules_for(&world);
                    }
                    for m in &c.modules {
                        m.validate(world.feature_dim())?;
                    }
                    if c.queue_len < 2 || c.queue_len % 2 != 0 {
                        return Err(LabError::Config("queue_len must be even and >= 2".into()));
                    }
                    if !(0.0..=1.0).contains(&c.epsilon) {
                        return Err(LabError::Config("curriculum epsilon must lie in [0, 1]".into()));
                    }
                }
            }
            Facet::Imrl => {
                cfg.model.get_or_insert_with(ModelParams::default).validate()?;
                if world.salient_events().is_empty() {
                    return Err(LabError::Config(
                        "imrl needs at least one salient event in the environment".into(),
                    ));
                }
            }
        }
        for b in &cfg.bonuses {
            if !b.weight.is_finite() {
                return Err(LabError::Config("bonus weight must be finite".into()));
            }
        }
        Ok(cfg)
    }

    /// The inline environment of a resolved configuration.
    pub fn environment_config(&self) -> Result<GridWorldConfig> {
        self.environment.resolve(None)
    }

    pub fn horizon(&self, world: &GridWorld) -> usize {
        self.episode_horizon.unwrap_or_else(|| world.episode_horizon())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_steps_rejected() {
        let cfg = RunConfig::new(GridWorldConfig::playroom(), Facet::Effectance, 0, 1);
        assert!(matches!(cfg.resolve(), Err(LabError::Config(_))));
    }

    #[test]
    fn foreign_facet_settings_rejected() {
        let mut cfg = RunConfig::new(GridWorldConfig::playroom(), Facet::Effectance, 10, 1);
        cfg.skills = Some(SkillParams::default());
        assert!(cfg.resolve().is_err());
        let mut cfg = RunConfig::new(GridWorldConfig::playroom(), Facet::Diayn, 10, 1);
        cfg.skills = Some(SkillParams {
            num_skills: 1,
            ..SkillParams::default()
        });
        assert!(cfg.resolve().is_err());
    }

    #[test]
    fn imrl_needs_salient_events() {
        let cfg = RunConfig::new(GridWorldConfig::empty(3, 3, Cell(0, 0), 5), Facet::Imrl, 10, 1);
        assert!(cfg.resolve().is_err());
    }

    #[test]
    fn resolve_fills_defaults_and_round_trips() {
        let cfg = RunConfig::new(GridWorldConfig::playroom(), Facet::Curious, 10, 3)
            .resolve()
            .unwrap();
        assert_eq!(cfg.curriculum.as_ref().unwrap().modules.len(), 4);
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(RunConfig::from_json_str(&text).unwrap(), cfg);
        assert_eq!(cfg.resolve().unwrap(), cfg);
    }

    #[test]
    fn builtin_environments() {
        let text = r#"{"environment": "builtin:playroom", "facet": "diayn", "total_steps": 5}"#;
        let cfg = RunConfig::from_json_str(text).unwrap().resolve().unwrap();
        assert_eq!(cfg.environment_config().unwrap(), GridWorldConfig::playroom());
        let bad = r#"{"environment": "builtin:castle", "facet": "diayn", "total_steps": 5}"#;
        assert!(RunConfig::from_json_str(bad).unwrap().resolve().is_err());
        let unknown = r#"{"environment": "builtin:playroom", "facet": "diayn", "total_steps": 5, "speed": 2}"#;
        assert!(RunConfig::from_json_str(unknown).is_err());
    }

    #[test]
    fn facet_names() {
        for f in Facet::ALL {
            assert_eq!(f.as_str().parse::<Facet>().unwrap(), f);
        }
        assert!("joy".parse::<Facet>().is_err());
    }
}
