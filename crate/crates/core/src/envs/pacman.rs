//! Single-pellet PAC-MAN with one deterministic ghost.
//!
//! Joint state is `(pacman cell, ghost cell, pellet present)` plus one
//! absorbing sink. Eating the pellet or being caught moves to a terminal
//! state that carries the event's features and then to the sink.

use std::collections::VecDeque;

use rand::seq::IndexedRandom;
use serde::{Deserialize, Serialize};

use super::MOVES;
use crate::error::{Error, Result};
use crate::model::{ActionId, FeatureVector, Policy, StateId, TabularMdp};
use crate::seed;

pub type Cell = (usize, usize);

pub const DISCOUNT: f64 = 0.95;
pub const FOOD_REWARD: f64 = 10.0;
pub const DEATH_REWARD: f64 = -500.0;
pub const STEP_REWARD: f64 = -1.0;

/// Ghost candidate moves: horizontal first, then vertical, then stay.
const GHOST_MOVES: [(i64, i64); 5] = [(1, 0), (-1, 0), (0, -1), (0, 1), (0, 0)];
/// Feature direction order N, E, S, W.
const COMPASS: [(i64, i64); 4] = [(0, -1), (1, 0), (0, 1), (-1, 0)];
/// Action index of each compass direction.
const COMPASS_ACTION: [usize; 4] = [0, 3, 1, 2];
const SURVIVAL_HORIZON: usize = 64;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PacmanSpec {
    pub width: usize,
    pub height: usize,
    pub pellet: Cell,
    pub walls: Vec<Cell>,
    pub ghost_start: Cell,
    pub pacman_starts: Vec<Cell>,
    pub seed: u64,
}

impl PacmanSpec {
    /// 6×7 board, pellet in the middle walled on the north, east and west.
    /// The seed picks the ghost's start cell; pacman starts are every cell
    /// at least three steps from the ghost that can reach the pellet safely.
    pub fn standard(seed: u64) -> Result<Self> {
        let pellet = (2, 3);
        let walls = vec![(1, 3), (3, 3), (2, 2)];
        let mut spec = Self {
            width: 6,
            height: 7,
            pellet,
            walls,
            ghost_start: (0, 0),
            pacman_starts: Vec::new(),
            seed,
        };
        let layout = Layout::new(&spec)?;
        let far: Vec<Cell> = layout
            .cells
            .iter()
            .copied()
            .filter(|&c| layout.maze_dist(c, pellet) >= 4)
            .collect();
        let mut rng = seed::rng(seed::derive(seed, 0));
        spec.ghost_start = *far
            .choose(&mut rng)
            .ok_or_else(|| Error::InvalidSpec("no ghost start far from the pellet".into()))?;
        let dyns = Dynamics::new(layout);
        let ghost = spec.ghost_start;
        spec.pacman_starts = dyns
            .layout
            .cells
            .iter()
            .copied()
            .filter(|&c| c != pellet && manhattan(c, ghost) >= 3)
            .filter(|&c| dyns.safe_dist[dyns.live_index(c, ghost)].is_some())
            .collect();
        Ok(spec)
    }
}

fn manhattan(a: Cell, b: Cell) -> usize {
    a.0.abs_diff(b.0) + a.1.abs_diff(b.1)
}

#[derive(Clone, Debug)]
struct Layout {
    width: usize,
    height: usize,
    pellet: Cell,
    /// Free cells in row-major order.
    cells: Vec<Cell>,
    /// Cell → index in `cells`, `None` for walls.
    index: Vec<Option<usize>>,
    /// Maze distance from each free cell to the pellet.
    food_dist: Vec<usize>,
    /// First move (compass index) along a shortest path to the pellet.
    food_dir: Vec<Option<usize>>,
}

impl Layout {
    fn new(spec: &PacmanSpec) -> Result<Self> {
        let (w, h) = (spec.width, spec.height);
        let in_bounds = |c: Cell| c.0 < w && c.1 < h;
        let (px, py) = spec.pellet;
        if px == 0 || py == 0 || px + 1 >= w || py + 1 >= h {
            return Err(Error::InvalidSpec("pellet must lie in the grid interior".into()));
        }
        if spec.walls.iter().any(|&c| !in_bounds(c) || c == spec.pellet) {
            return Err(Error::InvalidSpec("wall outside grid or on the pellet".into()));
        }
        let sides = COMPASS
            .iter()
            .filter(|&&(dx, dy)| {
                let c = ((px as i64 + dx) as usize, (py as i64 + dy) as usize);
                spec.walls.contains(&c)
            })
            .count();
        if sides != 3 {
            return Err(Error::InvalidSpec(format!(
                "pellet must be walled on exactly 3 sides, found {sides}"
            )));
        }
        let mut index = vec![None; w * h];
        let mut cells = Vec::new();
        for y in 0..h {
            for x in 0..w {
                if !spec.walls.contains(&(x, y)) {
                    index[y * w + x] = Some(cells.len());
                    cells.push((x, y));
                }
            }
        }
        let mut layout = Self {
            width: w,
            height: h,
            pellet: spec.pellet,
            cells,
            index,
            food_dist: Vec::new(),
            food_dir: Vec::new(),
        };
        let dist = layout.bfs_from(spec.pellet);
        layout.food_dir = layout
            .cells
            .iter()
            .map(|&c| {
                let d = dist[layout.idx(c)?];
                if d == 0 || d == usize::MAX {
                    return None;
                }
                (0..4).find(|&k| {
                    layout
                        .step(c, COMPASS[k])
                        .is_some_and(|n| dist[layout.idx(n).unwrap()] + 1 == d)
                })
            })
            .collect();
        layout.food_dist = dist;
        Ok(layout)
    }

    fn idx(&self, c: Cell) -> Option<usize> {
        if c.0 < self.width && c.1 < self.height {
            self.index[c.1 * self.width + c.0]
        } else {
            None
        }
    }

    /// Destination of a move, `None` when blocked.
    fn step(&self, c: Cell, (dx, dy): (i64, i64)) -> Option<Cell> {
        let nx = c.0 as i64 + dx;
        let ny = c.1 as i64 + dy;
        if nx < 0 || ny < 0 {
            return None;
        }
        let n = (nx as usize, ny as usize);
        self.idx(n).map(|_| n)
    }

    fn bfs_from(&self, src: Cell) -> Vec<usize> {
        let mut dist = vec![usize::MAX; self.cells.len()];
        let mut queue = VecDeque::new();
        dist[self.idx(src).unwrap()] = 0;
        queue.push_back(src);
        while let Some(c) = queue.pop_front() {
            let d = dist[self.idx(c).unwrap()];
            for &m in &COMPASS {
                if let Some(n) = self.step(c, m) {
                    let ni = self.idx(n).unwrap();
                    if dist[ni] == usize::MAX {
                        dist[ni] = d + 1;
                        queue.push_back(n);
                    }
                }
            }
        }
        dist
    }

    fn maze_dist(&self, a: Cell, b: Cell) -> usize {
        if b == self.pellet {
            return self.food_dist[self.idx(a).unwrap()];
        }
        self.bfs_from(b)[self.idx(a).unwrap()]
    }

    /// Deterministic ghost step toward `target`.
    fn ghost_move(&self, ghost: Cell, target: Cell) -> Cell {
        let mut best = ghost;
        let mut best_d = usize::MAX;
        for &m in &GHOST_MOVES {
            if let Some(n) = self.step(ghost, m) {
                let d = manhattan(n, target);
                if d < best_d {
                    best = n;
                    best_d = d;
                }
            }
        }
        best
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Live,
    Won,
    Dead,
    /// Pacman on the pellet with the pellet still present; never reached.
    Invalid,
    Sink,
}

#[derive(Clone, Debug)]
struct Dynamics {
    layout: Layout,
    n_states: usize,
    /// Successor of each (live state, action).
    next: Vec<usize>,
    safe_dist: Vec<Option<usize>>,
}

impl Dynamics {
    fn new(layout: Layout) -> Self {
        let nf = layout.cells.len();
        let n_states = nf * nf * 2 + 1;
        let mut dyns = Self {
            layout,
            n_states,
            next: Vec::new(),
            safe_dist: Vec::new(),
        };
        let sink = n_states - 1;
        let mut next = vec![sink; n_states * MOVES.len()];
        for s in 0..n_states {
            if dyns.status(s) != Status::Live {
                continue;
            }
            let (p, g, _) = dyns.decode(s);
            for (a, &m) in MOVES.iter().enumerate() {
                next[s * MOVES.len() + a] = dyns.step_live(p, g, m);
            }
        }
        dyns.next = next;
        dyns.safe_dist = dyns.compute_safe_dist();
        dyns
    }

    fn encode(&self, p: usize, g: usize, pellet: bool) -> usize {
        (p * self.layout.cells.len() + g) * 2 + pellet as usize
    }

    fn decode(&self, s: usize) -> (Cell, Cell, bool) {
        let nf = self.layout.cells.len();
        let pellet = s % 2 == 1;
        let pg = s / 2;
        (self.layout.cells[pg / nf], self.layout.cells[pg % nf], pellet)
    }

    fn live_index(&self, p: Cell, g: Cell) -> usize {
        self.encode(
            self.layout.idx(p).unwrap(),
            self.layout.idx(g).unwrap(),
            true,
        )
    }

    fn status(&self, s: usize) -> Status {
        if s == self.n_states - 1 {
            return Status::Sink;
        }
        let (p, g, pellet) = self.decode(s);
        if !pellet {
            Status::Won
        } else if p == g {
            Status::Dead
        } else if p == self.layout.pellet {
            Status::Invalid
        } else {
            Status::Live
        }
    }

    fn step_live(&self, p: Cell, g: Cell, m: (i64, i64)) -> usize {
        let l = &self.layout;
        let p2 = l.step(p, m).unwrap_or(p);
        let pi = l.idx(p2).unwrap();
        if p2 == g {
            return self.encode(pi, l.idx(g).unwrap(), true);
        }
        if p2 == l.pellet {
            return self.encode(pi, l.idx(g).unwrap(), false);
        }
        let g2 = l.ghost_move(g, p2);
        self.encode(pi, l.idx(g2).unwrap(), true)
    }

    fn successor(&self, s: usize, a: usize) -> usize {
        self.next[s * MOVES.len() + a]
    }

    /// Steps to the pellet along the shortest collision-free path.
    fn compute_safe_dist(&self) -> Vec<Option<usize>> {
        let mut dist: Vec<Option<usize>> = vec![None; self.n_states];
        loop {
            let mut changed = false;
            for s in 0..self.n_states {
                if self.status(s) != Status::Live {
                    continue;
                }
                let best = (0..MOVES.len())
                    .filter_map(|a| {
                        let n = self.successor(s, a);
                        match self.status(n) {
                            Status::Won => Some(1),
                            Status::Live => dist[n].map(|d| d + 1),
                            _ => None,
                        }
                    })
                    .min();
                if best.is_some() && best != dist[s] {
                    dist[s] = best;
                    changed = true;
                }
            }
            if !changed {
                return dist;
            }
        }
    }

    /// Steps survived (capped) when no safe path to the pellet exists.
    fn survival(&self) -> Vec<usize> {
        let mut surv = vec![0usize; self.n_states];
        for _ in 0..SURVIVAL_HORIZON {
            let prev = surv.clone();
            for s in 0..self.n_states {
                if self.status(s) != Status::Live {
                    continue;
                }
                surv[s] = (0..MOVES.len())
                    .map(|a| {
                        let n = self.successor(s, a);
                        match self.status(n) {
                            Status::Live => 1 + prev[n],
                            Status::Won => SURVIVAL_HORIZON,
                            _ => 0,
                        }
                    })
                    .max()
                    .unwrap_or(0);
            }
        }
        surv
    }

    fn policy(&self) -> Policy {
        let surv = self.survival();
        let all: Vec<ActionId> = (0..MOVES.len()).map(ActionId).collect();
        let mut canonical = Vec::with_capacity(self.n_states);
        let mut optimal = Vec::with_capacity(self.n_states);
        for s in 0..self.n_states {
            if self.status(s) != Status::Live {
                canonical.push(ActionId(0));
                optimal.push(all.clone());
                continue;
            }
            let score = |a: usize| -> (bool, i64) {
                let n = self.successor(s, a);
                match self.status(n) {
                    Status::Won => (true, -1),
                    Status::Live => match self.safe_dist[n] {
                        Some(d) => (true, -(d as i64) - 1),
                        None => (false, 1 + surv[n] as i64),
                    },
                    _ => (false, 0),
                }
            };
            let scores: Vec<_> = (0..MOVES.len()).map(score).collect();
            let best = *scores.iter().max().unwrap();
            let set: Vec<ActionId> = (0..MOVES.len())
                .filter(|&a| scores[a] == best)
                .map(ActionId)
                .collect();
            canonical.push(set[0]);
            optimal.push(set);
        }
        Policy::new(canonical, optimal).expect("canonical drawn from optimal set")
    }
}

#[derive(Clone, Debug)]
pub struct Pacman {
    pub spec: PacmanSpec,
    /// MDP carrying the IRL features.
    pub mdp: TabularMdp,
    /// Distance to food (normalized), food eaten, caught by ghost.
    pub irl_features: Vec<FeatureVector>,
    /// Direction of nearest food (N,E,S,W one-hot), then per-direction
    /// wall-or-ghost collision indicators.
    pub il_features: Vec<FeatureVector>,
    pub policy: Policy,
    pub rewards: Vec<f64>,
    pub status: Vec<Status>,
    /// Non-terminal states, ascending.
    pub live_states: Vec<StateId>,
    pub start_states: Vec<StateId>,
    dyns: Dynamics,
}

impl Pacman {
    pub fn state_of(&self, pacman: Cell, ghost: Cell) -> StateId {
        StateId(self.dyns.live_index(pacman, ghost))
    }

    pub fn decode(&self, s: StateId) -> (Cell, Cell, bool) {
        self.dyns.decode(s.0)
    }

    pub fn next(&self, s: StateId, a: ActionId) -> StateId {
        if self.status[s.0] == Status::Live {
            StateId(self.dyns.successor(s.0, a.0))
        } else {
            StateId(self.dyns.n_states - 1)
        }
    }

    pub fn manhattan(a: Cell, b: Cell) -> usize {
        manhattan(a, b)
    }
}

pub fn build_pacman(spec: &PacmanSpec) -> Result<Pacman> {
    let layout = Layout::new(spec)?;
    for &c in spec.pacman_starts.iter().chain([&spec.ghost_start]) {
        if layout.idx(c).is_none() || c == spec.pellet {
            return Err(Error::InvalidSpec(format!("start cell {c:?} is not a free cell")));
        }
    }
    let dyns = Dynamics::new(layout);
    for &c in &spec.pacman_starts {
        if c == spec.ghost_start || dyns.safe_dist[dyns.live_index(c, spec.ghost_start)].is_none()
        {
            return Err(Error::UnreachablePellet { start: c });
        }
    }
    let l = &dyns.layout;
    let n = dyns.n_states;
    let status: Vec<Status> = (0..n).map(|s| dyns.status(s)).collect();
    let max_dist = l
        .food_dist
        .iter()
        .copied()
        .filter(|&d| d != usize::MAX)
        .max()
        .unwrap_or(1)
        .max(1) as f64;

    let mut irl_features = Vec::with_capacity(n);
    let mut il_features = Vec::with_capacity(n);
    let mut rewards = Vec::with_capacity(n);
    for s in 0..n {
        let st = status[s];
        if st == Status::Sink {
            irl_features.push(FeatureVector::zeros(3));
            il_features.push(FeatureVector::zeros(8));
            rewards.push(0.0);
            continue;
        }
        let (p, _, _) = dyns.decode(s);
        let dist = |c: Cell| l.food_dist[l.idx(c).unwrap()] as f64 / max_dist;
        let (irl, reward) = match st {
            Status::Live => (vec![dist(p), 0.0, 0.0], STEP_REWARD),
            Status::Won => (vec![0.0, 1.0, 0.0], FOOD_REWARD),
            Status::Dead => (vec![dist(p), 0.0, 1.0], DEATH_REWARD),
            Status::Invalid | Status::Sink => (vec![0.0; 3], 0.0),
        };
        irl_features.push(FeatureVector::new(irl)?);
        rewards.push(reward);

        let mut il = vec![0.0; 8];
        if st == Status::Live {
            if let Some(k) = l.food_dir[l.idx(p).unwrap()] {
                il[k] = 1.0;
            }
            for k in 0..4 {
                let blocked = l.step(p, COMPASS[k]).is_none();
                let caught = dyns.status(dyns.successor(s, COMPASS_ACTION[k])) == Status::Dead;
                if blocked || caught {
                    il[4 + k] = 1.0;
                }
            }
        }
        il_features.push(FeatureVector::new(il)?);
    }

    let sink = n - 1;
    let mut transitions = Vec::with_capacity(n * MOVES.len());
    for (s, st) in status.iter().enumerate() {
        for a in 0..MOVES.len() {
            let next = if *st == Status::Live {
                dyns.successor(s, a)
            } else {
                sink
            };
            transitions.push(vec![(next, 1.0)]);
        }
    }
    let live_states: Vec<StateId> = (0..n)
        .filter(|&s| status[s] == Status::Live)
        .map(StateId)
        .collect();
    let mut start = vec![0.0; n];
    for s in &live_states {
        start[s.0] = 1.0 / live_states.len() as f64;
    }
    let mdp = TabularMdp::new(
        MOVES.len(),
        irl_features.clone(),
        transitions,
        DISCOUNT,
        start,
    )?;
    let start_states = spec
        .pacman_starts
        .iter()
        .map(|&c| StateId(dyns.live_index(c, spec.ghost_start)))
        .collect();
    let policy = dyns.policy();
    Ok(Pacman {
        spec: spec.clone(),
        mdp,
        irl_features,
        il_features,
        policy,
        rewards,
        status,
        live_states,
        start_states,
        dyns,
    })
}
