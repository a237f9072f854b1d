//! Small goal-conditioned controlled Markov processes (MDPs without rewards)
//! with deterministic, seeded dynamics.
//!
//! A [`GoalProcess`] is an immutable specification of dynamics; simulation
//! state lives in caller-owned [`Episode`] contexts, so one process can be
//! shared freely across threads.

mod gridworld;
mod pointmass;

pub use gridworld::make_gridworld;
pub use pointmass::{make_pointmass, make_pointmass_pixel};

use crate::error::{Error, Result};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Observation space descriptor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ObsSpace {
    /// Discrete state index in `0..n`.
    TabularIndex { n: usize },
    /// Dense feature vector.
    Vector { dim: usize },
    /// Image with intensities in `[0, 1]`, stored as `h*w*c` bytes (value/255).
    Image { h: usize, w: usize, c: usize },
}

impl ObsSpace {
    /// Dimension of the flat feature encoding fed to networks
    /// (one-hot for tabular, raw values otherwise).
    pub fn feat_dim(&self) -> usize {
        match *self {
            ObsSpace::TabularIndex { n } => n,
            ObsSpace::Vector { dim } => dim,
            ObsSpace::Image { h, w, c } => h * w * c,
        }
    }

    pub fn is_image(&self) -> bool {
        matches!(self, ObsSpace::Image { .. })
    }
}

/// Action space descriptor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ActionSpace {
    Discrete { n: usize },
    /// Box `[low, high]^dim`.
    Box { dim: usize, low: f64, high: f64 },
}

impl ActionSpace {
    pub fn feat_dim(&self) -> usize {
        match *self {
            ActionSpace::Discrete { n } => n,
            ActionSpace::Box { dim, .. } => dim,
        }
    }
}

/// A single observation. Tabular indices and images carry compact storage;
/// the float view is produced at featurization time.
#[derive(Debug, Clone, PartialEq)]
pub enum Obs {
    Index(u32),
    Vector(Vec<f32>),
    Image(Image),
}

/// Row-major `(h, w, c)` image with intensities `data/255` in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub h: usize,
    pub w: usize,
    pub c: usize,
    pub data: Vec<u8>,
}

impl Image {
    pub fn new(h: usize, w: usize, c: usize) -> Self {
        Image {
            h,
            w,
            c,
            data: vec![0; h * w * c],
        }
    }

    #[inline]
    pub fn at(&self, y: usize, x: usize, ch: usize) -> u8 {
        self.data[(y * self.w + x) * self.c + ch]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, ch: usize, v: u8) {
        self.data[(y * self.w + x) * self.c + ch] = v;
    }
}

/// A single action.
#[derive(Debug, Clone, PartialEq)]
pub enum Action {
    Discrete(u32),
    Continuous(Vec<f32>),
}

/// Internal simulator state. For pixel processes the latent coordinates are
/// simulated and observations are rendered views of them.
#[derive(Debug, Clone, PartialEq)]
pub enum Latent {
    Index(usize),
    Coords(Vec<f64>),
}

/// How goal attainment is judged.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SuccessCriterion {
    ExactMatch,
    L2Ball { radius: f64 },
}

impl SuccessCriterion {
    /// Success test on latent states; symmetric in its arguments.
    pub fn is_success(&self, s: &Latent, g: &Latent) -> bool {
        match (self, s, g) {
            (SuccessCriterion::ExactMatch, Latent::Index(a), Latent::Index(b)) => a == b,
            (SuccessCriterion::L2Ball { radius }, Latent::Coords(a), Latent::Coords(b)) => {
                let d2: f64 = a
                    .iter()
                    .zip(b.iter())
                    .map(|(x, y)| (x - y) * (x - y))
                    .sum();
                d2.sqrt() <= *radius
            }
            _ => false,
        }
    }
}

/// Tabular dynamics: dense transition tensor `p[s][a][s']` with stochastic rows.
#[derive(Debug, Clone)]
pub struct TabularDynamics {
    pub n_states: usize,
    pub n_actions: usize,
    /// `p[(s * n_actions + a) * n_states + s2]`
    pub p: Vec<f64>,
    pub width: usize,
    pub height: usize,
}

impl TabularDynamics {
    #[inline]
    pub fn row(&self, s: usize, a: usize) -> &[f64] {
        let base = (s * self.n_actions + a) * self.n_states;
        &self.p[base..base + self.n_states]
    }

    fn sample_next(&self, s: usize, a: usize, rng: &mut ChaCha8Rng) -> usize {
        let row = self.row(s, a);
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (s2, &pr) in row.iter().enumerate() {
            acc += pr;
            if u < acc {
                return s2;
            }
        }
        self.n_states - 1
    }
}

/// Point-mass dynamics on `[0,1]^dim`: `s' = clamp(s + a*max_step + noise)`.
#[derive(Debug, Clone)]
pub struct PointMassDynamics {
    pub dim: usize,
    pub max_step: f64,
    pub noise_std: f64,
}

#[derive(Debug, Clone)]
pub enum ProcessKind {
    Tabular(TabularDynamics),
    PointMass(PointMassDynamics),
}

/// Rendering parameters for pixel observations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PixelSpec {
    pub h: usize,
    pub w: usize,
    pub c: usize,
    /// Disc radius in pixels.
    pub radius: usize,
}

impl Default for PixelSpec {
    fn default() -> Self {
        PixelSpec {
            h: 48,
            w: 48,
            c: 1,
            radius: 4,
        }
    }
}

/// A goal-conditioned controlled Markov process: dynamics, initial-state and
/// goal samplers, an episode horizon, and a success criterion. No rewards.
#[derive(Debug, Clone)]
pub struct GoalProcess {
    pub(crate) kind: ProcessKind,
    pub horizon: usize,
    pub success: SuccessCriterion,
    /// When set, observations are rendered images of the latent coordinates.
    pub pixel: Option<PixelSpec>,
    pub name: String,
}

impl GoalProcess {
    /// Build a tabular process from an explicit transition tensor
    /// `p[(s*n_actions + a)*n_states + s']`. Rows must sum to 1 within 1e-12.
    pub fn from_transition_matrix(
        n_states: usize,
        n_actions: usize,
        p: Vec<f64>,
        horizon: usize,
        name: &str,
    ) -> Result<Self> {
        if n_states == 0 || n_actions == 0 || p.len() != n_states * n_actions * n_states {
            return Err(Error::invalid("transition tensor has wrong size"));
        }
        for s in 0..n_states {
            for a in 0..n_actions {
                let row = &p[(s * n_actions + a) * n_states..][..n_states];
                let sum: f64 = row.iter().sum();
                if (sum - 1.0).abs() > 1e-12 || row.iter().any(|&v| v < 0.0) {
                    return Err(Error::invalid(format!(
                        "transition row ({s},{a}) is not a distribution (sum {sum})"
                    )));
                }
            }
        }
        Ok(GoalProcess {
            kind: ProcessKind::Tabular(TabularDynamics {
                n_states,
                n_actions,
                p,
                width: n_states,
                height: 1,
            }),
            horizon,
            success: SuccessCriterion::ExactMatch,
            pixel: None,
            name: name.to_string(),
        })
    }

    pub fn obs_space(&self) -> ObsSpace {
        if let Some(px) = &self.pixel {
            return ObsSpace::Image {
                h: px.h,
                w: px.w,
                c: px.c,
            };
        }
        match &self.kind {
            ProcessKind::Tabular(t) => ObsSpace::TabularIndex { n: t.n_states },
            ProcessKind::PointMass(pm) => ObsSpace::Vector { dim: pm.dim },
        }
    }

    pub fn action_space(&self) -> ActionSpace {
        match &self.kind {
            ProcessKind::Tabular(t) => ActionSpace::Discrete { n: t.n_actions },
            ProcessKind::PointMass(pm) => ActionSpace::Box {
                dim: pm.dim,
                low: -1.0,
                high: 1.0,
            },
        }
    }

    /// Full transition tensor for tabular processes.
    pub fn tabular(&self) -> Option<&TabularDynamics> {
        match &self.kind {
            ProcessKind::Tabular(t) => Some(t),
            _ => None,
        }
    }

    pub fn is_tabular(&self) -> bool {
        self.tabular().is_some()
    }

    /// One dynamics step on latent state.
    pub fn step_latent(&self, s: &Latent, a: &Action, rng: &mut ChaCha8Rng) -> Latent {
        match (&self.kind, s, a) {
            (ProcessKind::Tabular(t), Latent::Index(si), Action::Discrete(ai)) => {
                Latent::Index(t.sample_next(*si, *ai as usize, rng))
            }
            (ProcessKind::PointMass(pm), Latent::Coords(x), Action::Continuous(u)) => {
                let mut next = vec![0.0; pm.dim];
                for d in 0..pm.dim {
                    let act = f64::from(u[d]).clamp(-1.0, 1.0);
                    let noise = if pm.noise_std > 0.0 {
                        let z: f64 = rand_distr::Distribution::sample(
                            &rand_distr::StandardNormal,
                            rng,
                        );
                        z * pm.noise_std
                    } else {
                        0.0
                    };
                    next[d] = (x[d] + act * pm.max_step + noise).clamp(0.0, 1.0);
                }
                Latent::Coords(next)
            }
            _ => panic!("latent/action kind does not match process"),
        }
    }

    /// Initial-state sampler (uniform over the state space).
    pub fn sample_initial(&self, rng: &mut ChaCha8Rng) -> Latent {
        match &self.kind {
            ProcessKind::Tabular(t) => Latent::Index(rng.random_range(0..t.n_states)),
            ProcessKind::PointMass(pm) => {
                Latent::Coords((0..pm.dim).map(|_| rng.random::<f64>()).collect())
            }
        }
    }

    /// Goal sampler; goals live in the observation space.
    pub fn sample_goal(&self, rng: &mut ChaCha8Rng) -> Latent {
        self.sample_initial(rng)
    }

    /// Observation emitted for a latent state.
    pub fn observe(&self, s: &Latent) -> Obs {
        match (s, &self.pixel) {
            (Latent::Index(i), _) => Obs::Index(*i as u32),
            (Latent::Coords(x), None) => Obs::Vector(x.iter().map(|&v| v as f32).collect()),
            (Latent::Coords(x), Some(_)) => Obs::Image(self.render_pixel(x).expect("renderable")),
        }
    }

    /// Uniform random action.
    pub fn sample_action(&self, rng: &mut ChaCha8Rng) -> Action {
        match self.action_space() {
            ActionSpace::Discrete { n } => Action::Discrete(rng.random_range(0..n) as u32),
            ActionSpace::Box { dim, low, high } => Action::Continuous(
                (0..dim)
                    .map(|_| rng.random_range(low..high) as f32)
                    .collect(),
            ),
        }
    }

    /// Deterministic rendering of point-mass coordinates: a filled disc on a
    /// uniform background. Two states more than two pixel pitches apart render
    /// to distinct images.
    pub fn render_pixel(&self, coords: &[f64]) -> Result<Image> {
        let pm = match &self.kind {
            ProcessKind::PointMass(pm) => pm,
            _ => {
                return Err(Error::UnsupportedOperation(
                    "render_pixel requires a point-mass process".into(),
                ))
            }
        };
        let px = self.pixel.unwrap_or_default();
        if coords.len() != pm.dim {
            return Err(Error::invalid(format!(
                "expected {} coordinates, got {}",
                pm.dim,
                coords.len()
            )));
        }
        let x = coords[0].clamp(0.0, 1.0);
        let y = if pm.dim > 1 { coords[1].clamp(0.0, 1.0) } else { 0.5 };
        let cx = (x * (px.w - 1) as f64).round() as i64;
        let cy = (y * (px.h - 1) as f64).round() as i64;
        let mut img = Image::new(px.h, px.w, px.c);
        let r2 = (px.radius * px.radius) as i64;
        for row in 0..px.h as i64 {
            for col in 0..px.w as i64 {
                let dy = row - cy;
                let dx = col - cx;
                if dy * dy + dx * dx <= r2 {
                    for ch in 0..px.c {
                        img.set(row as usize, col as usize, ch, 255);
                    }
                }
            }
        }
        Ok(img)
    }

    /// Start a fresh episode with caller-owned state.
    pub fn episode(&self, rng: &mut ChaCha8Rng) -> Episode {
        Episode {
            state: self.sample_initial(rng),
            t: 0,
        }
    }
}

/// Caller-owned simulation context; single-threaded by construction.
#[derive(Debug, Clone)]
pub struct Episode {
    pub state: Latent,
    pub t: usize,
}

impl Episode {
    pub fn step(&mut self, process: &GoalProcess, a: &Action, rng: &mut ChaCha8Rng) -> Latent {
        let next = process.step_latent(&self.state, a, rng);
        self.state = next.clone();
        self.t += 1;
        next
    }
}
