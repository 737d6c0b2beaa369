//! Independent oracles shared by the oracle and acceptance suites.
#![allow(dead_code)]

use std::collections::BTreeMap;

use competence_lab::env::{Action, Cell, GridWorld, GridWorldConfig, ObjectKind, ObjectSpec};
use competence_lab::gcrl::{q_update, QTable, Transition};

pub fn object(id: &str, cell: Cell, kind: ObjectKind) -> ObjectSpec {
    ObjectSpec {
        id: id.into(),
        cell,
        kind,
        initial_on: false,
        blinking: false,
    }
}

pub fn within_3_sigma(count: usize, n: usize, p: f64) -> bool {
    let mean = n as f64 * p;
    let sd = (n as f64 * p * (1.0 - p)).sqrt();
    (count as f64 - mean).abs() <= 3.0 * sd
}

/// Counts valid states by trying every placement, using only the validity
/// rules: agent and blocks on distinct non-wall cells, blocks off toggle cells.
pub fn brute_force_count(cfg: &GridWorldConfig) -> usize {
    let cells: Vec<Cell> = (0..cfg.height)
        .flat_map(|y| (0..cfg.width).map(move |x| Cell(x, y)))
        .filter(|c| !cfg.walls.contains(c))
        .collect();
    let toggles: Vec<Cell> = cfg
        .objects
        .iter()
        .filter(|o| o.kind != ObjectKind::Block)
        .map(|o| o.cell)
        .collect();
    let n_blocks = cfg.objects.iter().filter(|o| o.kind == ObjectKind::Block).count();
    let block_cells: Vec<Cell> = cells.iter().copied().filter(|c| !toggles.contains(c)).collect();

    let mut placements: Vec<Vec<Cell>> = vec![vec![]];
    for _ in 0..n_blocks {
        let mut next = Vec::new();
        for p in &placements {
            for &c in &block_cells {
                if !p.contains(&c) {
                    let mut q = p.clone();
                    q.push(c);
                    next.push(q);
                }
            }
        }
        placements = next;
    }
    let mut count = 0;
    for p in &placements {
        for a in &cells {
            if !p.contains(a) {
                count += 1 << toggles.len();
            }
        }
    }
    count
}

pub fn small_configs() -> Vec<GridWorldConfig> {
    let mut out = vec![
        GridWorldConfig::empty(2, 2, Cell(0, 0), 5),
        GridWorldConfig::empty(3, 3, Cell(1, 1), 5),
        GridWorldConfig::playroom(),
    ];
    let mut c = GridWorldConfig::empty(2, 2, Cell(0, 0), 5);
    c.objects.push(object("light", Cell(1, 1), ObjectKind::Light));
    out.push(c);
    let mut c = GridWorldConfig::empty(4, 3, Cell(0, 0), 5);
    c.walls.push(Cell(1, 1));
    c.objects.push(object("light", Cell(3, 0), ObjectKind::Light));
    c.objects.push(object("b1", Cell(2, 1), ObjectKind::Block));
    c.objects.push(object("b2", Cell(2, 2), ObjectKind::Block));
    out.push(c);
    let mut c = GridWorldConfig::empty(3, 3, Cell(0, 0), 5);
    c.objects.push(object("light", Cell(2, 0), ObjectKind::Light));
    c.objects.push(object("bell", Cell(0, 2), ObjectKind::Bell));
    c.objects.push(object("block", Cell(1, 1), ObjectKind::Block));
    out.push(c);
    out
}

/// Largest gap between Q-learning on a two-cell corridor (reward 1 for
/// arriving in the right cell) and value iteration on hand-written dynamics.
pub fn chain_fixed_point_gap(sweeps: usize) -> f64 {
    let mut cfg = GridWorldConfig::empty(2, 2, Cell(0, 0), 5);
    cfg.walls = vec![Cell(0, 1), Cell(1, 1)];
    let world = GridWorld::new(cfg).unwrap();
    let states = world.enumerate_states().unwrap();
    assert_eq!(states.len(), 2);
    let b = Cell(1, 0);
    let gamma = 0.9;

    let next_cell = |c: Cell, a: Action| match (c, a) {
        (Cell(0, 0), Action::Right) => Cell(1, 0),
        (Cell(1, 0), Action::Left) => Cell(0, 0),
        (c, _) => c,
    };
    let mut v: BTreeMap<Cell, f64> = [(Cell(0, 0), 0.0), (b, 0.0)].into();
    for _ in 0..2000 {
        let mut nv = v.clone();
        for (&c, val) in nv.iter_mut() {
            *val = Action::ALL
                .iter()
                .map(|&a| {
                    let n = next_cell(c, a);
                    (if n == b { 1.0 } else { 0.0 }) + gamma * v[&n]
                })
                .fold(f64::NEG_INFINITY, f64::max);
        }
        v = nv;
    }

    let mut q = QTable::new(0.0);
    for _ in 0..sweeps {
        for s in &states {
            for a in Action::ALL {
                let (next, events) = world.step(s, a).unwrap();
                let r = if next.agent == b { 1.0 } else { 0.0 };
                let t = Transition {
                    state: s.clone(),
                    action: a,
                    next_state: next,
                    events,
                    goal: None,
                };
                q_update(&mut q, &t, r, 0.5, gamma).unwrap();
            }
        }
    }
    states
        .iter()
        .map(|s| (q.max_value(s) - v[&s.agent]).abs())
        .fold(0.0, f64::max)
}
