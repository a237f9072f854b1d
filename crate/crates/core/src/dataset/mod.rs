//! Offline goal-conditioned datasets: generation, persistence, and the
//! positive/negative pair construction used by the contrastive losses.

mod io;

pub use io::{load_store, save_store};

use crate::env::{Action, ActionSpace, GoalProcess, Image, Latent, Obs, ObsSpace, ProcessKind};
use crate::error::{Error, Result};
use crate::oracle::sample_geometric;
use crate::rng;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// One trajectory: `obs` has length `T + 1`, `actions` has length `T`.
/// Transition `t` is `(obs[t], actions[t], obs[t+1])`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub obs: Vec<Obs>,
    pub actions: Vec<Action>,
}

impl Trajectory {
    /// Number of transitions.
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    /// Transitions whose future-goal support is nonempty: `t <= T - 2`.
    fn eligible(&self) -> usize {
        self.len().saturating_sub(1)
    }
}

/// Trajectory-segmented transition store; the sole data source for training.
/// Immutable after generation or load, so read-only sampling from several
/// threads is safe.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryStore {
    pub obs_space: ObsSpace,
    pub action_space: ActionSpace,
    pub env_id: String,
    pub behavior_id: String,
    pub seed: u64,
    pub trajectories: Vec<Trajectory>,
}

impl TrajectoryStore {
    pub fn num_trajectories(&self) -> usize {
        self.trajectories.len()
    }

    pub fn num_transitions(&self) -> usize {
        self.trajectories.iter().map(|t| t.len()).sum()
    }

    /// Map a flat transition id to `(trajectory, step)`.
    pub fn locate(&self, index: usize) -> Option<(usize, usize)> {
        let mut rem = index;
        for (i, traj) in self.trajectories.iter().enumerate() {
            if rem < traj.len() {
                return Some((i, rem));
            }
            rem -= traj.len();
        }
        None
    }

    /// `(s, a, s')` for a flat transition id.
    pub fn transition(&self, index: usize) -> Option<(&Obs, &Action, &Obs)> {
        let (i, t) = self.locate(index)?;
        let traj = &self.trajectories[i];
        Some((&traj.obs[t], &traj.actions[t], &traj.obs[t + 1]))
    }
}

/// Data-collection policy for offline generation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Behavior {
    UniformRandom,
    /// Moves greedily toward a per-episode goal; with probability `epsilon`
    /// a uniformly random action is taken instead. `epsilon = 1` degenerates
    /// to the uniform-random behavior.
    ScriptedGoalReacher { epsilon: f64 },
}

impl Behavior {
    pub fn id(&self) -> String {
        match self {
            Behavior::UniformRandom => "uniform".into(),
            Behavior::ScriptedGoalReacher { epsilon } => format!("reacher(eps={epsilon})"),
        }
    }
}

pub(crate) fn greedy_action(process: &GoalProcess, s: &Latent, goal: &Latent, rng: &mut ChaCha8Rng) -> Action {
    match (&process.kind, s, goal) {
        (ProcessKind::Tabular(t), Latent::Index(si), Latent::Index(gi)) => {
            let (w, _h) = (t.width, t.height);
            let (x, y) = (si % w, si / w);
            let (gx, gy) = (gi % w, gi / w);
            let dist = |xx: i64, yy: i64| (xx - gx as i64).abs() + (yy - gy as i64).abs();
            let moves: [(i64, i64); 5] = [(0, -1), (0, 1), (-1, 0), (1, 0), (0, 0)];
            let mut best = i64::MAX;
            let mut candidates = Vec::with_capacity(5);
            for (a, (dx, dy)) in moves.iter().enumerate() {
                let nx = (x as i64 + dx).clamp(0, t.width as i64 - 1);
                let ny = (y as i64 + dy).clamp(0, t.height as i64 - 1);
                let d = dist(nx, ny);
                if d < best {
                    best = d;
                    candidates.clear();
                }
                if d == best {
                    candidates.push(a as u32);
                }
            }
            Action::Discrete(candidates[rng.random_range(0..candidates.len())])
        }
        (ProcessKind::PointMass(pm), Latent::Coords(x), Latent::Coords(g)) => Action::Continuous(
            (0..pm.dim)
                .map(|d| (((g[d] - x[d]) / pm.max_step).clamp(-1.0, 1.0)) as f32)
                .collect(),
        ),
        _ => unreachable!("latent kinds match the process"),
    }
}

/// Generate an offline dataset of exactly `num_transitions` transitions in
/// trajectories of length at most the process horizon. No trajectory is
/// required to reach any evaluation goal end to end.
pub fn generate_offline(
    process: &GoalProcess,
    behavior: Behavior,
    num_transitions: usize,
    seed: u64,
) -> Result<TrajectoryStore> {
    if num_transitions < process.horizon {
        return Err(Error::invalid(format!(
            "too few transitions: need at least one horizon ({})",
            process.horizon
        )));
    }
    if let Behavior::ScriptedGoalReacher { epsilon } = behavior {
        if !(0.0..=1.0).contains(&epsilon) {
            return Err(Error::invalid("epsilon must lie in [0, 1]"));
        }
    }
    let mut rng = rng::stream(seed, rng::STREAM_DATA);
    let mut trajectories = Vec::new();
    let mut produced = 0usize;
    while produced < num_transitions {
        let len = process.horizon.min(num_transitions - produced);
        let goal = process.sample_goal(&mut rng);
        let mut ep = process.episode(&mut rng);
        let mut obs = Vec::with_capacity(len + 1);
        let mut actions = Vec::with_capacity(len);
        obs.push(process.observe(&ep.state));
        for _ in 0..len {
            let a = match behavior {
                Behavior::UniformRandom => process.sample_action(&mut rng),
                Behavior::ScriptedGoalReacher { epsilon } => {
                    if rng.random::<f64>() < epsilon {
                        process.sample_action(&mut rng)
                    } else {
                        greedy_action(process, &ep.state, &goal, &mut rng)
                    }
                }
            };
            ep.step(process, &a, &mut rng);
            obs.push(process.observe(&ep.state));
            actions.push(a);
        }
        produced += len;
        trajectories.push(Trajectory { obs, actions });
    }
    Ok(TrajectoryStore {
        obs_space: process.obs_space(),
        action_space: process.action_space(),
        env_id: process.name.clone(),
        behavior_id: behavior.id(),
        seed,
        trajectories,
    })
}

const MAX_REJECTIONS: usize = 1000;

fn future_index(
    traj: &Trajectory,
    t: usize,
    gamma: f64,
    rng: &mut ChaCha8Rng,
) -> Option<usize> {
    // Future goals are drawn from the state observations of later transitions,
    // i.e. indices t+k with k >= 1 and t+k <= T-1. Offsets that overshoot the
    // trajectory are rejected and redrawn rather than clipped, which would
    // bias mass onto terminal states.
    let last = traj.len().checked_sub(1)?;
    if t >= last {
        return None;
    }
    for _ in 0..MAX_REJECTIONS {
        let k = sample_geometric(gamma, rng);
        if t + k <= last {
            return Some(t + k);
        }
    }
    None
}

/// Draw the in-trajectory future observation for transition `index` using a
/// geometric offset `k ~ Geometric(1 - gamma)` with support `{1, 2, ...}`.
pub fn sample_future_positive(
    store: &TrajectoryStore,
    index: usize,
    gamma: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Obs> {
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::invalid("gamma must lie in [0, 1)"));
    }
    let (i, t) = store
        .locate(index)
        .ok_or_else(|| Error::invalid(format!("transition index {index} out of range")))?;
    let traj = &store.trajectories[i];
    future_index(traj, t, gamma, rng)
        .map(|j| traj.obs[j].clone())
        .ok_or(Error::DegenerateTrajectory { index })
}

/// Aligned rows of (state, action, next-state, future-goal). Row `i`'s goal is
/// its in-trajectory positive; for `i != j`, `(states[i], actions[i],
/// future_goals[j])` is a negative pair by construction of independent rows.
#[derive(Debug, Clone)]
pub struct ContrastiveBatch {
    pub states: Vec<Obs>,
    pub actions: Vec<Action>,
    pub next_states: Vec<Obs>,
    pub future_goals: Vec<Obs>,
    /// Set when the store had fewer usable trajectories than the batch size,
    /// so trajectories were drawn with replacement.
    pub with_replacement: bool,
}

impl ContrastiveBatch {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

/// Assemble a batch of independent rows, one trajectory per row when the
/// store is large enough (falling back to replacement otherwise).
pub fn assemble_batch(
    store: &TrajectoryStore,
    batch_size: usize,
    gamma: f64,
    rng: &mut ChaCha8Rng,
) -> Result<ContrastiveBatch> {
    if batch_size < 2 {
        return Err(Error::invalid("batch_size must be at least 2"));
    }
    let eligible: Vec<u32> = store
        .trajectories
        .iter()
        .enumerate()
        .filter(|(_, t)| t.eligible() > 0)
        .map(|(i, _)| i as u32)
        .collect();
    if eligible.is_empty() {
        return Err(Error::invalid("store has no trajectory with length >= 2"));
    }
    let with_replacement = eligible.len() < batch_size;
    let mut picks = Vec::with_capacity(batch_size);
    if with_replacement {
        for _ in 0..batch_size {
            picks.push(eligible[rng.random_range(0..eligible.len())]);
        }
    } else {
        // partial Fisher-Yates: the first batch_size entries become the picks
        let mut pool = eligible;
        for i in 0..batch_size {
            let j = rng.random_range(i..pool.len());
            pool.swap(i, j);
            picks.push(pool[i]);
        }
    }

    let mut states = Vec::with_capacity(batch_size);
    let mut actions = Vec::with_capacity(batch_size);
    let mut next_states = Vec::with_capacity(batch_size);
    let mut future_goals = Vec::with_capacity(batch_size);
    for &ti in &picks {
        let traj = &store.trajectories[ti as usize];
        let mut row = None;
        for _ in 0..100 {
            let t = rng.random_range(0..traj.eligible());
            if let Some(j) = future_index(traj, t, gamma, rng) {
                row = Some((t, j));
                break;
            }
        }
        let (t, j) = row.ok_or(Error::DegenerateTrajectory { index: ti as usize })?;
        states.push(traj.obs[t].clone());
        actions.push(traj.actions[t].clone());
        next_states.push(traj.obs[t + 1].clone());
        future_goals.push(traj.obs[j].clone());
    }
    Ok(ContrastiveBatch {
        states,
        actions,
        next_states,
        future_goals,
        with_replacement,
    })
}

/// Pad all four sides by `pad` pixels with edge replication, then crop a
/// uniformly random window of the original size.
pub fn random_crop(image: &Image, pad: usize, rng: &mut ChaCha8Rng) -> Result<Image> {
    let dy = rng.random_range(0..=2 * pad);
    let dx = rng.random_range(0..=2 * pad);
    crop_with_offset(image, pad, dy, dx)
}

/// Deterministic crop at offset `(dy, dx)` into the padded image;
/// `(pad, pad)` reproduces the input exactly.
pub fn crop_with_offset(image: &Image, pad: usize, dy: usize, dx: usize) -> Result<Image> {
    if image.h < 2 * pad || image.w < 2 * pad {
        return Err(Error::invalid("image smaller than 2*pad"));
    }
    if dy > 2 * pad || dx > 2 * pad {
        return Err(Error::invalid("crop offset outside padded image"));
    }
    let mut out = Image::new(image.h, image.w, image.c);
    for y in 0..image.h {
        let sy = (y + dy).saturating_sub(pad).min(image.h - 1);
        for x in 0..image.w {
            let sx = (x + dx).saturating_sub(pad).min(image.w - 1);
            for ch in 0..image.c {
                out.set(y, x, ch, image.at(sy, sx, ch));
            }
        }
    }
    Ok(out)
}
