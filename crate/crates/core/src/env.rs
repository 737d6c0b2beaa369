//! "Playroom-lite": a deterministic gridworld with an agent, toggleable
//! objects (lights, bells) and pushable blocks.
//!
//! The world is fully observable and the transition function is pure, so every
//! quantity downstream (counts, discriminators, option models) can be checked
//! against brute-force enumeration of the state space.

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};

/// Default refusal threshold for [`GridWorld::enumerate_states`].
pub const DEFAULT_STATE_CAP: u64 = 1_000_000;

/// Grid coordinate `(x, y)`. `y` grows downwards.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Cell(pub u16, pub u16);

impl Cell {
    pub fn x(self) -> u16 {
        self.0
    }

    pub fn y(self) -> u16 {
        self.1
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{}", self.0, self.1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectKind {
    Light,
    Bell,
    Block,
}

impl ObjectKind {
    pub fn is_toggleable(self) -> bool {
        !matches!(self, ObjectKind::Block)
    }

    fn event_suffix(self) -> Option<&'static str> {
        match self {
            ObjectKind::Light => Some("on"),
            ObjectKind::Bell => Some("rung"),
            ObjectKind::Block => None,
        }
    }
}

/// Name of a salient event, e.g. `light_on` or `bell_rung`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EventId(pub String);

impl EventId {
    pub fn new(name: impl Into<String>) -> Self {
        EventId(name.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for EventId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectSpec {
    pub id: String,
    pub cell: Cell,
    pub kind: ObjectKind,
    #[serde(default)]
    pub initial_on: bool,
    /// Toggles by itself on every step, independent of the agent. Only lights
    /// and bells may blink; used to probe the controllability mask.
    #[serde(default)]
    pub blinking: bool,
}

impl ObjectSpec {
    /// The event this object fires when it switches on, if it can switch on.
    pub fn event(&self) -> Option<EventId> {
        self.kind
            .event_suffix()
            .map(|suffix| EventId(format!("{}_{}", self.id, suffix)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridWorldConfig {
    pub width: u16,
    pub height: u16,
    #[serde(default)]
    pub walls: Vec<Cell>,
    #[serde(default)]
    pub objects: Vec<ObjectSpec>,
    #[serde(default = "default_start")]
    pub start: Cell,
    pub episode_horizon: usize,
    #[serde(default)]
    pub salient_events: Vec<EventId>,
}

fn default_start() -> Cell {
    Cell(0, 0)
}

impl GridWorldConfig {
    /// An empty `width × height` room with the agent starting at `start`.
    pub fn empty(width: u16, height: u16, start: Cell, episode_horizon: usize) -> Self {
        GridWorldConfig {
            width,
            height,
            walls: Vec::new(),
            objects: Vec::new(),
            start,
            episode_horizon,
            salient_events: Vec::new(),
        }
    }

    /// The default playroom: 5×5, one light, one bell, one block, with
    /// `light_on` and `bell_rung` declared salient.
    pub fn playroom() -> Self {
        GridWorldConfig {
            width: 5,
            height: 5,
            walls: Vec::new(),
            objects: vec![
                ObjectSpec {
                    id: "light".into(),
                    cell: Cell(4, 0),
                    kind: ObjectKind::Light,
                    initial_on: false,
                    blinking: false,
                },
                ObjectSpec {
                    id: "bell".into(),
                    cell: Cell(0, 4),
                    kind: ObjectKind::Bell,
                    initial_on: false,
                    blinking: false,
                },
                ObjectSpec {
                    id: "block".into(),
                    cell: Cell(2, 2),
                    kind: ObjectKind::Block,
                    initial_on: false,
                    blinking: false,
                },
            ],
            start: Cell(0, 0),
            episode_horizon: 25,
            salient_events: vec![EventId::new("light_on"), EventId::new("bell_rung")],
        }
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let config: GridWorldConfig =
            serde_json::from_str(text).map_err(|e| LabError::Config(e.to_string()))?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| LabError::io(path, e))?;
        Self::from_json_str(&text)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    Up,
    Down,
    Left,
    Right,
    Interact,
}

impl Action {
    pub const COUNT: usize = 5;
    pub const ALL: [Action; Action::COUNT] = [
        Action::Up,
        Action::Down,
        Action::Left,
        Action::Right,
        Action::Interact,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Action> {
        Action::ALL.get(index).copied()
    }

    fn delta(self) -> Option<(i32, i32)> {
        match self {
            Action::Up => Some((0, -1)),
            Action::Down => Some((0, 1)),
            Action::Left => Some((-1, 0)),
            Action::Right => Some((1, 0)),
            Action::Interact => None,
        }
    }
}

/// Full world configuration: agent cell, on/off status of every toggleable
/// object (declaration order) and the cell of every block (declaration order).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct State {
    pub agent: Cell,
    pub objects: Vec<bool>,
    pub blocks: Vec<Cell>,
}

impl fmt::Display for State {
    /// Compact canonical key, e.g. `2,3|10|1,1` (agent | object bits | blocks).
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}|", self.agent)?;
        for &on in &self.objects {
            f.write_str(if on { "1" } else { "0" })?;
        }
        f.write_str("|")?;
        for (i, b) in self.blocks.iter().enumerate() {
            if i > 0 {
                f.write_str(";")?;
            }
            write!(f, "{b}")?;
        }
        Ok(())
    }
}

/// Real-valued feature vector of a state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FeatureVec(pub Vec<f64>);

impl FeatureVec {
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// Restriction to the given coordinates, in the given order.
    pub fn project(&self, indices: &[usize]) -> FeatureVec {
        FeatureVec(indices.iter().map(|&i| self.0[i]).collect())
    }
}

/// Which entity a feature coordinate describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureOwner {
    Agent,
    /// Index into the toggleable objects.
    Toggle(usize),
    /// Index into the blocks.
    Block(usize),
}

#[derive(Debug, Clone)]
struct Toggle {
    cell: Cell,
    blinking: bool,
    /// Set only when the event is declared salient.
    salient_event: Option<EventId>,
}

/// A validated world. All transition logic lives here.
#[derive(Debug, Clone)]
pub struct GridWorld {
    config: GridWorldConfig,
    walls: Vec<bool>,
    toggles: Vec<Toggle>,
    toggle_at: Vec<Option<usize>>,
    initial_blocks: Vec<Cell>,
}

impl GridWorld {
    pub fn new(config: GridWorldConfig) -> Result<Self> {
        let cfg_err = |msg: String| Err(LabError::Config(msg));
        if config.width < 2 || config.height < 2 {
            return cfg_err(format!(
                "grid must be at least 2x2, got {}x{}",
                config.width, config.height
            ));
        }
        if config.episode_horizon < 1 {
            return cfg_err("episode_horizon must be at least 1".into());
        }
        let (w, h) = (config.width as usize, config.height as usize);
        let in_bounds = |c: Cell| (c.0 as usize) < w && (c.1 as usize) < h;

        let mut walls = vec![false; w * h];
        for &c in &config.walls {
            if !in_bounds(c) {
                return cfg_err(format!("wall {c} is out of bounds"));
            }
            walls[c.1 as usize * w + c.0 as usize] = true;
        }
        if walls.iter().all(|&x| x) {
            return cfg_err("walls cover every cell".into());
        }

        let mut ids = HashSet::new();
        let mut occupied = HashSet::new();
        let mut toggles = Vec::new();
        let mut toggle_at = vec![None; w * h];
        let mut initial_blocks = Vec::new();
        let mut known_events = BTreeSet::new();
        for obj in &config.objects {
            if !ids.insert(obj.id.as_str()) {
                return cfg_err(format!("duplicate object id {:?}", obj.id));
            }
            if !in_bounds(obj.cell) || walls[obj.cell.1 as usize * w + obj.cell.0 as usize] {
                return cfg_err(format!(
                    "object {:?} must sit on an in-bounds non-wall cell",
                    obj.id
                ));
            }
            if !occupied.insert(obj.cell) {
                return cfg_err(format!("two objects share cell {}", obj.cell));
            }
            match obj.kind {
                ObjectKind::Block => {
                    if obj.initial_on || obj.blinking {
                        return cfg_err(format!(
                            "block {:?} has no on/off state; initial_on and blinking must be false",
                            obj.id
                        ));
                    }
                    initial_blocks.push(obj.cell);
                }
                _ => {
                    let event = obj.event().expect("toggleable objects have events");
                    known_events.insert(event.clone());
                    toggle_at[obj.cell.1 as usize * w + obj.cell.0 as usize] = Some(toggles.len());
                    toggles.push(Toggle {
                        cell: obj.cell,
                        blinking: obj.blinking,
                        salient_event: config.salient_events.contains(&event).then_some(event),
                    });
                }
            }
        }
        for e in &config.salient_events {
            if !known_events.contains(e) {
                return cfg_err(format!(
                    "salient event {e} does not belong to a declared light or bell"
                ));
            }
        }
        let distinct: BTreeSet<_> = config.salient_events.iter().collect();
        if distinct.len() != config.salient_events.len() {
            return cfg_err("salient events must be unique".into());
        }

        let world = GridWorld {
            config,
            walls,
            toggles,
            toggle_at,
            initial_blocks,
        };
        if !in_bounds(world.config.start) || world.is_wall(world.config.start) {
            return cfg_err(format!(
                "start cell {} must be in bounds and not a wall",
                world.config.start
            ));
        }
        if world.initial_blocks.contains(&world.config.start) {
            return cfg_err("agent cannot start on a block".into());
        }
        Ok(world)
    }

    pub fn config(&self) -> &GridWorldConfig {
        &self.config
    }

    pub fn width(&self) -> u16 {
        self.config.width
    }

    pub fn height(&self) -> u16 {
        self.config.height
    }

    pub fn episode_horizon(&self) -> usize {
        self.config.episode_horizon
    }

    pub fn num_toggles(&self) -> usize {
        self.toggles.len()
    }

    pub fn num_blocks(&self) -> usize {
        self.initial_blocks.len()
    }

    pub fn salient_events(&self) -> &[EventId] {
        &self.config.salient_events
    }

    pub fn toggle_cell(&self, toggle: usize) -> Cell {
        self.toggles[toggle].cell
    }

    fn idx(&self, c: Cell) -> usize {
        c.1 as usize * self.config.width as usize + c.0 as usize
    }

    fn in_bounds(&self, c: Cell) -> bool {
        c.0 < self.config.width && c.1 < self.config.height
    }

    pub fn is_wall(&self, c: Cell) -> bool {
        self.walls[self.idx(c)]
    }

    /// Toggleable object sitting on `c`, if any.
    pub fn toggle_at(&self, c: Cell) -> Option<usize> {
        self.toggle_at[self.idx(c)]
    }

    pub fn initial_state(&self) -> State {
        State {
            agent: self.config.start,
            objects: self
                .config
                .objects
                .iter()
                .filter(|o| o.kind.is_toggleable())
                .map(|o| o.initial_on)
                .collect(),
            blocks: self.initial_blocks.clone(),
        }
    }

    /// Checks every state invariant against this world.
    pub fn validate_state(&self, s: &State) -> Result<()> {
        let bad = |msg: String| Err(LabError::InvalidState(msg));
        if s.objects.len() != self.toggles.len() {
            return bad(format!(
                "expected {} object statuses, got {}",
                self.toggles.len(),
                s.objects.len()
            ));
        }
        if s.blocks.len() != self.initial_blocks.len() {
            return bad(format!(
                "expected {} blocks, got {}",
                self.initial_blocks.len(),
                s.blocks.len()
            ));
        }
        if !self.in_bounds(s.agent) || self.is_wall(s.agent) {
            return bad(format!("agent cell {} is out of bounds or a wall", s.agent));
        }
        for (i, &b) in s.blocks.iter().enumerate() {
            if !self.in_bounds(b) || self.is_wall(b) {
                return bad(format!("block cell {b} is out of bounds or a wall"));
            }
            if self.toggle_at(b).is_some() {
                return bad(format!("block cell {b} overlaps a light or bell"));
            }
            if b == s.agent {
                return bad(format!("agent and block share cell {b}"));
            }
            if s.blocks[..i].contains(&b) {
                return bad(format!("two blocks share cell {b}"));
            }
        }
        Ok(())
    }

    fn offset(&self, c: Cell, (dx, dy): (i32, i32)) -> Option<Cell> {
        let x = c.0 as i32 + dx;
        let y = c.1 as i32 + dy;
        if x < 0 || y < 0 || x >= self.config.width as i32 || y >= self.config.height as i32 {
            return None;
        }
        Some(Cell(x as u16, y as u16))
    }

    /// Pure transition function. Returns the successor and the salient events
    /// fired during the step (in object declaration order).
    pub fn step(&self, state: &State, action: Action) -> Result<(State, Vec<EventId>)> {
        self.validate_state(state)?;
        let mut next = state.clone();
        match action.delta() {
            Some(delta) => {
                if let Some(target) = self.offset(state.agent, delta) {
                    if !self.is_wall(target) {
                        match state.blocks.iter().position(|&b| b == target) {
                            None => next.agent = target,
                            Some(bi) => {
                                let dest = self.offset(target, delta);
                                let free = dest.is_some_and(|d| {
                                    !self.is_wall(d)
                                        && self.toggle_at(d).is_none()
                                        && !state.blocks.contains(&d)
                                });
                                if free {
                                    next.blocks[bi] = dest.expect("checked above");
                                    next.agent = target;
                                }
                            }
                        }
                    }
                }
            }
            None => {
                if let Some(t) = self.toggle_at(state.agent) {
                    next.objects[t] = !next.objects[t];
                }
            }
        }
        for (t, toggle) in self.toggles.iter().enumerate() {
            if toggle.blinking {
                next.objects[t] = !next.objects[t];
            }
        }
        let events = self
            .toggles
            .iter()
            .enumerate()
            .filter(|&(t, _)| !state.objects[t] && next.objects[t])
            .filter_map(|(_, toggle)| toggle.salient_event.clone())
            .collect();
        Ok((next, events))
    }

    fn free_cells(&self) -> Vec<Cell> {
        let mut cells = Vec::new();
        for y in 0..self.config.height {
            for x in 0..self.config.width {
                let c = Cell(x, y);
                if !self.is_wall(c) {
                    cells.push(c);
                }
            }
        }
        cells
    }

    /// Size of the valid state space: ordered block placements on free,
    /// object-free cells × agent cells not under a block × object statuses.
    pub fn state_space_size(&self) -> u128 {
        let free = self.free_cells().len() as u128;
        let block_cells = free - self.toggles.len() as u128;
        let b = self.initial_blocks.len() as u128;
        if block_cells < b || free < b {
            return 0;
        }
        let placements: u128 = (0..b).map(|i| block_cells - i).product();
        placements * (free - b) * (1u128 << self.toggles.len())
    }

    pub fn enumerate_states(&self) -> Result<Vec<State>> {
        self.enumerate_states_capped(DEFAULT_STATE_CAP)
    }

    /// Every valid state exactly once, sorted in canonical (`Ord`) order.
    pub fn enumerate_states_capped(&self, cap: u64) -> Result<Vec<State>> {
        let size = self.state_space_size();
        if size > cap as u128 {
            return Err(LabError::StateCapExceeded { size, cap });
        }
        let free = self.free_cells();
        let block_candidates: Vec<Cell> = free
            .iter()
            .copied()
            .filter(|&c| self.toggle_at(c).is_none())
            .collect();
        let mut placements = Vec::new();
        let mut current = Vec::with_capacity(self.initial_blocks.len());
        place_blocks(
            &block_candidates,
            self.initial_blocks.len(),
            &mut current,
            &mut placements,
        );

        let t = self.toggles.len();
        let mut states = Vec::with_capacity(size as usize);
        for blocks in &placements {
            for &agent in free.iter().filter(|c| !blocks.contains(c)) {
                for bits in 0..(1u64 << t) {
                    let objects = (0..t).map(|i| bits >> (t - 1 - i) & 1 == 1).collect();
                    states.push(State {
                        agent,
                        objects,
                        blocks: blocks.clone(),
                    });
                }
            }
        }
        states.sort_unstable();
        Ok(states)
    }

    pub fn feature_dim(&self) -> usize {
        2 + self.toggles.len() + 2 * self.initial_blocks.len()
    }

    /// The entity each feature coordinate belongs to.
    pub fn feature_owners(&self) -> Vec<FeatureOwner> {
        let mut owners = vec![FeatureOwner::Agent, FeatureOwner::Agent];
        owners.extend((0..self.toggles.len()).map(FeatureOwner::Toggle));
        for b in 0..self.initial_blocks.len() {
            owners.push(FeatureOwner::Block(b));
            owners.push(FeatureOwner::Block(b));
        }
        owners
    }

    /// Fixed feature map: normalized agent coordinates, one indicator per
    /// toggleable object, normalized block coordinates.
    pub fn features(&self, s: &State) -> FeatureVec {
        let sx = (self.config.width - 1) as f64;
        let sy = (self.config.height - 1) as f64;
        let mut v = Vec::with_capacity(self.feature_dim());
        v.push(s.agent.0 as f64 / sx);
        v.push(s.agent.1 as f64 / sy);
        v.extend(s.objects.iter().map(|&on| if on { 1.0 } else { 0.0 }));
        for b in &s.blocks {
            v.push(b.0 as f64 / sx);
            v.push(b.1 as f64 / sy);
        }
        FeatureVec(v)
    }
}

fn place_blocks(candidates: &[Cell], remaining: usize, current: &mut Vec<Cell>, out: &mut Vec<Vec<Cell>>) {
    if remaining == 0 {
        out.push(current.clone());
        return;
    }
    for &c in candidates {
        if current.contains(&c) {
            continue;
        }
        current.push(c);
        place_blocks(candidates, remaining - 1, current, out);
        current.pop();
    }
}
