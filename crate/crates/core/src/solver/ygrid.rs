use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sampled confidence-level axis: `0`, then a geometric run from `y_min` to `y_max`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct YGrid {
    nodes: Vec<f64>,
    theta: f64,
}

impl YGrid {
    pub fn new(n: usize, y_min: f64, y_max: f64) -> Result<Self> {
        if n < 3 {
            return Err(Error::domain(format!("y-grid needs at least 3 nodes, got {n}")));
        }
        if !(y_min > 0.0 && y_min < y_max && y_max.is_finite()) {
            return Err(Error::domain(format!(
                "y-grid bounds need 0 < y_min < y_max, got {y_min}, {y_max}"
            )));
        }
        let theta = (y_max / y_min).powf(1.0 / (n - 2) as f64);
        let mut nodes = Vec::with_capacity(n);
        nodes.push(0.0);
        nodes.extend((0..n - 1).map(|k| y_min * theta.powi(k as i32)));
        nodes[n - 1] = y_max;
        Ok(YGrid { nodes, theta })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn y_min(&self) -> f64 {
        self.nodes[1]
    }

    pub fn y_max(&self) -> f64 {
        self.nodes[self.nodes.len() - 1]
    }

    /// Index `i` with `nodes[i] <= y <= nodes[i + 1]`; `y` must lie on the axis.
    pub(crate) fn bracket(&self, y: f64) -> usize {
        let upper = self.nodes.partition_point(|&node| node < y);
        upper.saturating_sub(1).min(self.nodes.len() - 2)
    }

    /// Index of the node equal to `y`, if any.
    pub fn node_index(&self, y: f64) -> Option<usize> {
        self.nodes.iter().position(|&node| node == y)
    }
}

/// Grid of `n` nodes: `{0, y_min, y_min * theta, ..., y_max}`.
pub fn make_ygrid(n: usize, y_min: f64, y_max: f64) -> Result<YGrid> {
    YGrid::new(n, y_min, y_max)
}
