//! Gridworld: a `width x height` board with five actions and optional slip.

use super::{GoalProcess, ProcessKind, SuccessCriterion, TabularDynamics};
use crate::error::{Error, Result};

/// Action indices for the gridworld.
pub const UP: usize = 0;
pub const DOWN: usize = 1;
pub const LEFT: usize = 2;
pub const RIGHT: usize = 3;
pub const STAY: usize = 4;

const N_ACTIONS: usize = 5;

fn apply_move(x: usize, y: usize, a: usize, w: usize, h: usize) -> (usize, usize) {
    match a {
        UP => (x, y.saturating_sub(1)),
        DOWN => (x, (y + 1).min(h - 1)),
        LEFT => (x.saturating_sub(1), y),
        RIGHT => ((x + 1).min(w - 1), y),
        STAY => (x, y),
        _ => unreachable!(),
    }
}

/// Build a gridworld with cells indexed `y * width + x`. The intended move
/// succeeds with probability `1 - slip_prob`; otherwise one of the other four
/// actions is applied uniformly at random. Walls clamp.
pub fn make_gridworld(width: usize, height: usize, slip_prob: f64) -> Result<GoalProcess> {
    if width < 2 && height < 2 {
        return Err(Error::invalid(
            "gridworld needs width or height of at least 2",
        ));
    }
    if width < 1 || height < 1 {
        return Err(Error::invalid("gridworld dimensions must be positive"));
    }
    if !(0.0..1.0).contains(&slip_prob) {
        return Err(Error::invalid("slip_prob must lie in [0, 1)"));
    }
    let n = width * height;
    let mut p = vec![0.0; n * N_ACTIONS * n];
    for y in 0..height {
        for x in 0..width {
            let s = y * width + x;
            for a in 0..N_ACTIONS {
                let base = (s * N_ACTIONS + a) * n;
                for eff in 0..N_ACTIONS {
                    let prob = if eff == a {
                        1.0 - slip_prob
                    } else {
                        slip_prob / (N_ACTIONS - 1) as f64
                    };
                    if prob == 0.0 {
                        continue;
                    }
                    let (nx, ny) = apply_move(x, y, eff, width, height);
                    p[base + ny * width + nx] += prob;
                }
            }
        }
    }
    Ok(GoalProcess {
        kind: ProcessKind::Tabular(TabularDynamics {
            n_states: n,
            n_actions: N_ACTIONS,
            p,
            width,
            height,
        }),
        horizon: 50,
        success: SuccessCriterion::ExactMatch,
        pixel: None,
        name: format!("grid{width}x{height}"),
    })
}
