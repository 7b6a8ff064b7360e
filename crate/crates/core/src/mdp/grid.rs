//! Stochastic grid world with penalty cells.
//!
//! Every cell is a state (row-major, `r * cols + c`), plus one terminal sink.
//! The goal cell has a single zero-cost action into the sink, and the sink
//! loops onto itself at zero cost. In any other cell the four compass actions
//! move to the intended neighbour with `intended_prob` and to each of the
//! other three neighbours with `(1 - intended_prob) / 3`; moves that would
//! leave the grid stay in place. Obstacles do not block movement: an obstacle
//! cell charges `collision_cost` for the step taken out of it, every other
//! cell charges `move_cost`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ActionRow, Mdp, Successor};
use crate::error::{Error, Result};

pub const DEFAULT_OBSTACLE_SEED: u64 = 2024;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    East,
    South,
    West,
    North,
}

impl Direction {
    /// Action order used by the builder.
    pub const ALL: [Direction; 4] = [Direction::East, Direction::South, Direction::West, Direction::North];

    fn step(self, [r, c]: [usize; 2], rows: usize, cols: usize) -> [usize; 2] {
        match self {
            Direction::East if c + 1 < cols => [r, c + 1],
            Direction::South if r + 1 < rows => [r + 1, c],
            Direction::West if c > 0 => [r, c - 1],
            Direction::North if r > 0 => [r - 1, c],
            _ => [r, c],
        }
    }
}

/// Grid-world parameters, as read from a JSON config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    pub rows: usize,
    pub cols: usize,
    pub start: [usize; 2],
    pub goal: [usize; 2],
    /// Explicit obstacle cells; mutually exclusive with `obstacle_count`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub obstacles: Option<Vec<[usize; 2]>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub obstacle_count: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub move_cost: f64,
    pub collision_cost: f64,
    pub intended_prob: f64,
    pub gamma: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            rows: 64,
            cols: 53,
            start: [60, 50],
            goal: [60, 2],
            obstacles: None,
            obstacle_count: Some(80),
            seed: Some(DEFAULT_OBSTACLE_SEED),
            move_cost: 1.0,
            collision_cost: 40.0,
            intended_prob: 0.95,
            gamma: 0.95,
        }
    }
}

/// Grid metadata kept alongside a built MDP.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridLayout {
    pub rows: usize,
    pub cols: usize,
    pub start: [usize; 2],
    pub goal: [usize; 2],
    /// Sorted row-major.
    pub obstacles: Vec<[usize; 2]>,
}

impl GridLayout {
    pub fn state_of(&self, [r, c]: [usize; 2]) -> usize {
        r * self.cols + c
    }

    /// `None` for the terminal sink.
    pub fn cell_of(&self, state: usize) -> Option<[usize; 2]> {
        (state < self.rows * self.cols).then(|| [state / self.cols, state % self.cols])
    }

    pub fn sink(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_obstacle(&self, cell: [usize; 2]) -> bool {
        self.obstacles.binary_search(&cell).is_ok()
    }
}

impl GridSpec {
    fn inside(&self, [r, c]: [usize; 2]) -> bool {
        r < self.rows && c < self.cols
    }

    pub fn validate(&self) -> Result<()> {
        if self.rows == 0 || self.cols == 0 {
            return Err(Error::validation("grid must have at least one row and column"));
        }
        if self.rows * self.cols < 2 {
            return Err(Error::validation("grid needs room for distinct start and goal"));
        }
        if !self.inside(self.start) {
            return Err(Error::validation(format!("start {:?} outside the grid", self.start)));
        }
        if !self.inside(self.goal) {
            return Err(Error::validation(format!("goal {:?} outside the grid", self.goal)));
        }
        if self.start == self.goal {
            return Err(Error::validation("start and goal coincide"));
        }
        if !(self.intended_prob > 0.0 && self.intended_prob <= 1.0) {
            return Err(Error::validation(format!(
                "intended_prob {} not in (0, 1]",
                self.intended_prob
            )));
        }
        if !(self.gamma >= 0.0 && self.gamma < 1.0) {
            return Err(Error::validation(format!("gamma {} not in [0, 1)", self.gamma)));
        }
        if !(self.move_cost.is_finite() && self.collision_cost.is_finite()) {
            return Err(Error::validation("costs must be finite"));
        }
        match (&self.obstacles, self.obstacle_count) {
            (Some(_), Some(_)) => {
                return Err(Error::validation(
                    "give either obstacles or obstacle_count, not both",
                ))
            }
            (Some(cells), None) => {
                for &cell in cells {
                    if !self.inside(cell) {
                        return Err(Error::validation(format!("obstacle {cell:?} outside the grid")));
                    }
                    if cell == self.goal {
                        return Err(Error::validation("goal cell cannot be an obstacle"));
                    }
                    if cell == self.start {
                        return Err(Error::validation("start cell cannot be an obstacle"));
                    }
                }
            }
            (None, Some(count)) => {
                if self.seed.is_none() {
                    return Err(Error::validation("obstacle_count requires a seed"));
                }
                let free = self.rows * self.cols - 2;
                if count > free {
                    return Err(Error::validation(format!(
                        "{count} obstacles requested but only {free} free cells"
                    )));
                }
            }
            (None, None) => {}
        }
        Ok(())
    }

    /// Obstacle cells, sorted and de-duplicated.
    fn place_obstacles(&self) -> Vec<[usize; 2]> {
        let mut cells = match (&self.obstacles, self.obstacle_count) {
            (Some(cells), _) => cells.clone(),
            (None, Some(count)) => {
                let mut free: Vec<[usize; 2]> = (0..self.rows)
                    .flat_map(|r| (0..self.cols).map(move |c| [r, c]))
                    .filter(|&cell| cell != self.start && cell != self.goal)
                    .collect();
                // Partial Fisher-Yates on u64 draws, independent of pointer width.
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed.unwrap_or(DEFAULT_OBSTACLE_SEED));
                let n = free.len() as u64;
                for i in 0..count {
                    let j = rng.gen_range(i as u64..n) as usize;
                    free.swap(i, j);
                }
                free.truncate(count);
                free
            }
            (None, None) => Vec::new(),
        };
        cells.sort_unstable();
        cells.dedup();
        cells
    }
}

/// Build the grid-world MDP described by `spec`.
pub fn build_gridworld(spec: &GridSpec) -> Result<Mdp> {
    spec.validate()?;
    let layout = GridLayout {
        rows: spec.rows,
        cols: spec.cols,
        start: spec.start,
        goal: spec.goal,
        obstacles: spec.place_obstacles(),
    };
    let stray = (1.0 - spec.intended_prob) / 3.0;
    let sink = layout.sink();
    let mut states = Vec::with_capacity(sink + 1);
    for r in 0..spec.rows {
        for c in 0..spec.cols {
            let cell = [r, c];
            if cell == spec.goal {
                states.push(vec![ActionRow::to(0.0, sink)]);
                continue;
            }
            let cost = if layout.is_obstacle(cell) {
                spec.collision_cost
            } else {
                spec.move_cost
            };
            let actions = Direction::ALL
                .iter()
                .map(|&intended| {
                    let mut next: Vec<Successor> = Vec::with_capacity(4);
                    for dir in Direction::ALL {
                        let prob = if dir == intended { spec.intended_prob } else { stray };
                        if prob == 0.0 {
                            continue;
                        }
                        let target = layout.state_of(dir.step(cell, spec.rows, spec.cols));
                        match next.iter_mut().find(|s| s.state == target) {
                            Some(s) => s.prob += prob,
                            None => next.push(Successor { state: target, prob }),
                        }
                    }
                    next.sort_by_key(|s| s.state);
                    ActionRow::new(cost, next)
                })
                .collect();
            states.push(actions);
        }
    }
    states.push(vec![ActionRow::to(0.0, sink)]);
    let mdp = Mdp {
        gamma: spec.gamma,
        start_state: layout.state_of(spec.start),
        goal_states: vec![layout.state_of(spec.goal)],
        states,
        layout: Some(layout),
    };
    mdp.check()?;
    Ok(mdp)
}
