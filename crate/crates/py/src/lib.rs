//! Python bindings: processes, offline datasets, oracles, training, and
//! checkpoint queries. Observations cross the boundary as ints (tabular
//! indices), float lists (vectors), or flat u8 lists (images); actions as
//! ints or float lists.

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use scrl::analysis::{evaluate_policy, sample_eval_goals, RolloutPolicy};
use scrl::dataset::{generate_offline, load_store as load_store_rs, save_store, TrajectoryStore};
use scrl::env::{Action, GoalProcess, Image, Obs, ObsSpace};
use scrl::nn::checkpoint::{load_checkpoint as load_ckpt_rs, Checkpoint};
use scrl::nn::{action_features, obs_features};
use scrl::oracle::TabularPolicy;
use scrl::train::{CriticMode, TrainConfig, Trainer};

fn err(e: scrl::Error) -> PyErr {
    match e {
        scrl::Error::Io { .. } | scrl::Error::CorruptFile { .. } => {
            PyIOError::new_err(e.to_string())
        }
        other => PyValueError::new_err(other.to_string()),
    }
}

/// A goal-conditioned controlled Markov process.
#[pyclass(name = "Process")]
struct PyProcess {
    inner: GoalProcess,
}

#[pymethods]
impl PyProcess {
    #[getter]
    fn name(&self) -> String {
        self.inner.name.clone()
    }

    #[getter]
    fn horizon(&self) -> usize {
        self.inner.horizon
    }

    fn num_states(&self) -> Option<usize> {
        self.inner.tabular().map(|t| t.n_states)
    }

    fn num_actions(&self) -> Option<usize> {
        self.inner.tabular().map(|t| t.n_actions)
    }

    /// Row of the transition matrix `P[s, a, .]` (tabular only).
    fn transition_row(&self, s: usize, a: usize) -> PyResult<Vec<f64>> {
        let t = self
            .inner
            .tabular()
            .ok_or_else(|| PyValueError::new_err("not a tabular process"))?;
        if s >= t.n_states || a >= t.n_actions {
            return Err(PyValueError::new_err("state or action out of range"));
        }
        Ok(t.row(s, a).to_vec())
    }

    /// Render point-mass coordinates to a flat image byte list.
    fn render(&self, coords: Vec<f64>) -> PyResult<Vec<u8>> {
        self.inner
            .render_pixel(&coords)
            .map(|img| img.data)
            .map_err(err)
    }
}

#[pyfunction]
fn make_gridworld(width: usize, height: usize, slip_prob: f64) -> PyResult<PyProcess> {
    scrl::env::make_gridworld(width, height, slip_prob)
        .map(|p| PyProcess { inner: p })
        .map_err(err)
}

#[pyfunction]
#[pyo3(signature = (dim, max_step, noise_std, pixel=false, image_size=48))]
fn make_pointmass(
    dim: usize,
    max_step: f64,
    noise_std: f64,
    pixel: bool,
    image_size: usize,
) -> PyResult<PyProcess> {
    let p = if pixel {
        scrl::env::make_pointmass_pixel(
            dim,
            max_step,
            noise_std,
            scrl::env::PixelSpec {
                h: image_size,
                w: image_size,
                c: 1,
                radius: 4,
            },
        )
    } else {
        scrl::env::make_pointmass(dim, max_step, noise_std)
    };
    p.map(|p| PyProcess { inner: p }).map_err(err)
}

/// An offline trajectory dataset.
#[pyclass(name = "Store")]
struct PyStore {
    inner: TrajectoryStore,
}

#[pymethods]
impl PyStore {
    fn num_transitions(&self) -> usize {
        self.inner.num_transitions()
    }

    fn num_trajectories(&self) -> usize {
        self.inner.num_trajectories()
    }

    fn save(&self, path: &str) -> PyResult<()> {
        save_store(&self.inner, path).map_err(err)
    }

    #[getter]
    fn env_id(&self) -> String {
        self.inner.env_id.clone()
    }

    #[getter]
    fn behavior_id(&self) -> String {
        self.inner.behavior_id.clone()
    }
}

#[pyfunction]
#[pyo3(signature = (process, behavior, num_transitions, seed, epsilon=0.3))]
fn generate(
    process: &PyProcess,
    behavior: &str,
    num_transitions: usize,
    seed: u64,
    epsilon: f64,
) -> PyResult<PyStore> {
    let b = match behavior {
        "uniform" => scrl::dataset::Behavior::UniformRandom,
        "reacher" => scrl::dataset::Behavior::ScriptedGoalReacher { epsilon },
        other => {
            return Err(PyValueError::new_err(format!(
                "unknown behavior '{other}'"
            )))
        }
    };
    generate_offline(&process.inner, b, num_transitions, seed)
        .map(|s| PyStore { inner: s })
        .map_err(err)
}

#[pyfunction]
fn load_store(path: &str) -> PyResult<PyStore> {
    load_store_rs(path).map(|s| PyStore { inner: s }).map_err(err)
}

/// Exact discounted occupancy `p(s_f | s, a)` under the uniform policy.
/// Returns a flat list plus the `(states, actions, states)` shape.
#[pyfunction]
fn dp_occupancy(process: &PyProcess, gamma: f64) -> PyResult<(Vec<f64>, (usize, usize, usize))> {
    let t = process
        .inner
        .tabular()
        .ok_or_else(|| PyValueError::new_err("not a tabular process"))?;
    let policy = TabularPolicy::uniform(t.n_states, t.n_actions);
    let occ = scrl::oracle::dp_occupancy(&process.inner, &policy, gamma).map_err(err)?;
    Ok((
        occ.values.clone(),
        (occ.n_states, occ.n_actions, occ.n_states),
    ))
}

fn obs_from_py(space: &ObsSpace, value: &Bound<'_, PyAny>) -> PyResult<Obs> {
    match space {
        ObsSpace::TabularIndex { n } => {
            let idx: usize = value.extract()?;
            if idx >= *n {
                return Err(PyValueError::new_err("state index out of range"));
            }
            Ok(Obs::Index(idx as u32))
        }
        ObsSpace::Vector { dim } => {
            let v: Vec<f32> = value.extract()?;
            if v.len() != *dim {
                return Err(PyValueError::new_err("wrong observation dimension"));
            }
            Ok(Obs::Vector(v))
        }
        ObsSpace::Image { h, w, c } => {
            let data: Vec<u8> = value.extract()?;
            if data.len() != h * w * c {
                return Err(PyValueError::new_err("wrong image size"));
            }
            Ok(Obs::Image(Image {
                h: *h,
                w: *w,
                c: *c,
                data,
            }))
        }
    }
}

fn action_from_py(
    space: &scrl::env::ActionSpace,
    value: &Bound<'_, PyAny>,
) -> PyResult<Action> {
    match space {
        scrl::env::ActionSpace::Discrete { n } => {
            let idx: usize = value.extract()?;
            if idx >= *n {
                return Err(PyValueError::new_err("action index out of range"));
            }
            Ok(Action::Discrete(idx as u32))
        }
        scrl::env::ActionSpace::Box { dim, .. } => {
            let v: Vec<f32> = value.extract()?;
            if v.len() != *dim {
                return Err(PyValueError::new_err("wrong action dimension"));
            }
            Ok(Action::Continuous(v))
        }
    }
}

/// A trained critic/policy pair loaded from a checkpoint file.
#[pyclass(name = "Checkpoint")]
struct PyCheckpoint {
    inner: Checkpoint,
}

#[pymethods]
impl PyCheckpoint {
    #[getter]
    fn step(&self) -> usize {
        self.inner.meta.step
    }

    #[getter]
    fn repr_dim(&self) -> usize {
        self.inner.meta.repr_dim
    }

    /// Critic logit `f(s, a, g) = phi(s, a)^T psi(g)`.
    fn critic_logit(
        &self,
        s: &Bound<'_, PyAny>,
        a: &Bound<'_, PyAny>,
        g: &Bound<'_, PyAny>,
    ) -> PyResult<f64> {
        let meta = &self.inner.meta;
        let s = obs_from_py(&meta.obs_space, s)?;
        let a = action_from_py(&meta.action_space, a)?;
        let g = obs_from_py(&meta.obs_space, g)?;
        let sf = obs_features(&[s], &meta.obs_space);
        let af = action_features(&[a], &meta.action_space);
        let gf = obs_features(&[g], &meta.obs_space);
        let logits = scrl::algo::critic_logits(&self.inner.critic, &sf, &af, &gf).map_err(err)?;
        Ok(logits[(0, 0)])
    }

    /// Goal representation `psi(g)`.
    fn psi(&self, g: &Bound<'_, PyAny>) -> PyResult<Vec<f64>> {
        let meta = &self.inner.meta;
        let g = obs_from_py(&meta.obs_space, g)?;
        let gf = obs_features(&[g], &meta.obs_space);
        let (out, _) = self.inner.critic.psi.forward(gf, None);
        Ok(out.row(0).to_vec())
    }

    /// Greedy policy action at `(s, g)`: action index or float list.
    fn policy_action(
        &self,
        py: Python<'_>,
        s: &Bound<'_, PyAny>,
        g: &Bound<'_, PyAny>,
    ) -> PyResult<Py<PyAny>> {
        let meta = &self.inner.meta;
        let s = obs_from_py(&meta.obs_space, s)?;
        let g = obs_from_py(&meta.obs_space, g)?;
        let action = scrl::train::greedy_action(
            &self.inner.policy,
            &meta.obs_space,
            &meta.action_space,
            &s,
            &g,
        );
        match action {
            Action::Discrete(i) => Ok(i.into_pyobject(py)?.into_any().unbind()),
            Action::Continuous(v) => Ok(v.into_pyobject(py)?.into_any().unbind()),
        }
    }
}

#[pyfunction]
fn load_checkpoint(path: &str) -> PyResult<PyCheckpoint> {
    load_ckpt_rs(path)
        .map(|c| PyCheckpoint { inner: c })
        .map_err(err)
}

/// Train on a store and write metrics/checkpoints under `out_dir`;
/// returns the final checkpoint path.
#[pyfunction]
#[pyo3(signature = (store, out_dir, total_steps=1000, batch_size=256, gamma=0.99,
    lr=3e-4, lambda_bc=0.5, repr_dim=16, mlp_width=64, mlp_depth=2, seed=0,
    critic_mode="mc", cold_init_range=1e-12, use_layer_norm=true, epoch_len=1000))]
#[allow(clippy::too_many_arguments)]
fn train(
    store: &PyStore,
    out_dir: &str,
    total_steps: usize,
    batch_size: usize,
    gamma: f64,
    lr: f64,
    lambda_bc: f64,
    repr_dim: usize,
    mlp_width: usize,
    mlp_depth: usize,
    seed: u64,
    critic_mode: &str,
    cold_init_range: f64,
    use_layer_norm: bool,
    epoch_len: usize,
) -> PyResult<String> {
    let mode = match critic_mode {
        "mc" => CriticMode::Mc,
        "td" => CriticMode::Td,
        other => return Err(PyValueError::new_err(format!("unknown critic mode '{other}'"))),
    };
    let cfg = TrainConfig {
        gamma,
        batch_size,
        repr_dim,
        lr,
        lambda: lambda_bc,
        critic_mode: mode,
        cold_init_range,
        use_layer_norm,
        total_steps,
        epoch_len,
        seed,
        mlp_width,
        mlp_depth,
        ..Default::default()
    };
    let mut trainer =
        Trainer::new(cfg, store.inner.obs_space, store.inner.action_space).map_err(err)?;
    trainer
        .run_to_files(&store.inner, std::path::Path::new(out_dir))
        .map_err(err)?;
    Ok(format!("{out_dir}/ckpt_final"))
}

/// Roll out a checkpoint's greedy policy; returns a dict-like tuple
/// `(success_rate, mean_episode_length)`.
#[pyfunction]
#[pyo3(signature = (process, ckpt, rollouts=10, seed=0))]
fn evaluate(
    process: &PyProcess,
    ckpt: &PyCheckpoint,
    rollouts: usize,
    seed: u64,
) -> PyResult<(f64, f64)> {
    let goals = sample_eval_goals(&process.inner, rollouts, seed);
    let report = evaluate_policy(
        &process.inner,
        RolloutPolicy::Learned(&ckpt.inner.policy),
        &goals,
        process.inner.horizon,
        process.inner.success,
        seed + 1,
    )
    .map_err(err)?;
    Ok((report.success_rate, report.mean_episode_length))
}

/// Run the finite-difference gradient suite; returns (name, rel_err, pass).
#[pyfunction]
fn gradcheck() -> Vec<(String, f64, bool)> {
    scrl::algo::gradcheck::run_suite()
        .into_iter()
        .map(|r| (r.name, r.rel_err, r.pass))
        .collect()
}

#[pymodule]
fn scrl_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyProcess>()?;
    m.add_class::<PyStore>()?;
    m.add_class::<PyCheckpoint>()?;
    m.add_function(wrap_pyfunction!(make_gridworld, m)?)?;
    m.add_function(wrap_pyfunction!(make_pointmass, m)?)?;
    m.add_function(wrap_pyfunction!(generate, m)?)?;
    m.add_function(wrap_pyfunction!(load_store, m)?)?;
    m.add_function(wrap_pyfunction!(dp_occupancy, m)?)?;
    m.add_function(wrap_pyfunction!(load_checkpoint, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(gradcheck, m)?)?;
    Ok(())
}
