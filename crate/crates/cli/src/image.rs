//! Plain-text PGM/PPM writers and the greedy-path tracer used by `render`.

use std::io::{self, Write};

use rcvar_core::mdp::GridLayout;
use rcvar_core::solver::{policy_step, GreedyPolicy};
use rcvar_core::Result;

/// Row-major 8-bit grayscale image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Gray {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

const RED: [u8; 3] = [255, 0, 0];

impl Gray {
    /// `round(255 (v - min) / (max - min))`; a constant field maps to all zeros.
    pub fn heatmap(width: usize, height: usize, values: &[f64]) -> Self {
        assert_eq!(values.len(), width * height);
        let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let span = hi - lo;
        let pixels = values
            .iter()
            .map(|&v| if span > 0.0 { (255.0 * (v - lo) / span).round() as u8 } else { 0 })
            .collect();
        Gray { width, height, pixels }
    }

    /// Plain `P2` with maxval 255, one image row per line.
    pub fn write_pgm<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "P2\n{} {}\n255", self.width, self.height)?;
        for row in self.pixels.chunks(self.width) {
            let line: Vec<String> = row.iter().map(u8::to_string).collect();
            writeln!(out, "{}", line.join(" "))?;
        }
        Ok(())
    }

    /// Plain `P3` copy of the image with `marked` pixels painted pure red.
    pub fn write_ppm_marked<W: Write>(&self, mut out: W, marked: &[bool]) -> io::Result<()> {
        writeln!(out, "P3\n{} {}\n255", self.width, self.height)?;
        for (row, marks) in self.pixels.chunks(self.width).zip(marked.chunks(self.width)) {
            let line: Vec<String> = row
                .iter()
                .zip(marks)
                .map(|(&g, &m)| {
                    let [r, g, b] = if m { RED } else { [g, g, g] };
                    format!("{r} {g} {b}")
                })
                .collect();
            writeln!(out, "{}", line.join("  "))?;
        }
        Ok(())
    }
}

/// Obstacle map: free cells white, obstacles black, start and goal in grays.
pub fn obstacle_map(layout: &GridLayout) -> Gray {
    let mut pixels = vec![255u8; layout.rows * layout.cols];
    for &cell in &layout.obstacles {
        pixels[layout.state_of(cell)] = 0;
    }
    pixels[layout.state_of(layout.start)] = 85;
    pixels[layout.state_of(layout.goal)] = 170;
    Gray { width: layout.cols, height: layout.rows, pixels }
}

/// Cells visited by the greedy policy from the start at level `alpha`, always
/// moving to the most likely nominal successor. Stops at the goal, at a cell
/// outside the grid, or after `max_steps` moves.
pub fn greedy_path(policy: &GreedyPolicy<'_>, layout: &GridLayout, alpha: f64, max_steps: usize) -> Result<Vec<[usize; 2]>> {
    let mdp = policy.mdp();
    let goal = layout.state_of(layout.goal);
    let (mut x, mut y) = (mdp.start_state, alpha);
    let mut path = Vec::new();
    for _ in 0..=max_steps {
        let Some(cell) = layout.cell_of(x) else { break };
        path.push(cell);
        if x == goal {
            break;
        }
        let row = &mdp.actions(x)[policy.decide(x, y)?.action];
        // First successor among the most likely ones.
        let next = row
            .next
            .iter()
            .fold(None, |best: Option<&rcvar_core::mdp::Successor>, s| match best {
                Some(b) if b.prob >= s.prob => Some(b),
                _ => Some(s),
            })
            .map(|s| s.state)
            .unwrap_or(x);
        let (_, y_next) = policy_step(policy, x, y, next)?;
        x = next;
        y = y_next;
    }
    Ok(path)
}
