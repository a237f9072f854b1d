//! Evaluation and diagnostics: rollout success rates, held-out binary
//! accuracy, representation-space interpolation with permutation error,
//! Q-trace monotonicity, cold-init alignment, and ablation sweeps.

use crate::dataset::{assemble_batch, ContrastiveBatch, TrajectoryStore};
use crate::env::{Action, ActionSpace, GoalProcess, Latent, Obs, ObsSpace, SuccessCriterion};
use crate::error::{Error, Result};
use crate::nn::{action_features, obs_features, CriticPair, PolicyNet};
use crate::rng;
use crate::train::{greedy_action, TrainConfig, Trainer};
use ndarray::Array2;
use serde::Serialize;
use std::io::Write;

/// One evaluation goal: the latent target plus the observation handed to the
/// policy.
#[derive(Debug, Clone)]
pub struct EvalGoal {
    pub latent: Latent,
    pub obs: Obs,
}

pub fn sample_eval_goals(process: &GoalProcess, n: usize, seed: u64) -> Vec<EvalGoal> {
    let mut rng = rng::stream(seed, rng::STREAM_EVAL);
    (0..n)
        .map(|_| {
            let latent = process.sample_goal(&mut rng);
            let obs = process.observe(&latent);
            EvalGoal { latent, obs }
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct GoalOutcome {
    pub goal: usize,
    pub success: bool,
    pub steps: usize,
}

/// Rollout success over a fixed goal set.
#[derive(Debug, Clone)]
pub struct EvalReport {
    pub success_rate: f64,
    pub mean_episode_length: f64,
    pub outcomes: Vec<GoalOutcome>,
}

impl EvalReport {
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "goal,success,steps")?;
        for o in &self.outcomes {
            writeln!(w, "{},{},{}", o.goal, o.success as u8, o.steps)?;
        }
        Ok(())
    }
}

/// How actions are chosen during evaluation rollouts.
pub enum RolloutPolicy<'a> {
    /// Greedy mean/argmax of a learned policy.
    Learned(&'a PolicyNet),
    /// The scripted goal-reacher (an oracle-quality baseline on these tasks).
    Scripted,
    UniformRandom,
}

/// Roll one episode per goal; success when the criterion holds at any step
/// within the horizon.
pub fn evaluate_policy(
    process: &GoalProcess,
    policy: RolloutPolicy,
    goals: &[EvalGoal],
    horizon: usize,
    criterion: SuccessCriterion,
    seed: u64,
) -> Result<EvalReport> {
    if goals.is_empty() {
        return Err(Error::invalid("empty goal set"));
    }
    let obs_space = process.obs_space();
    let action_space = process.action_space();
    let mut rng = rng::stream(seed, rng::STREAM_EVAL);
    let mut outcomes = Vec::with_capacity(goals.len());
    for (gi, goal) in goals.iter().enumerate() {
        let mut ep = process.episode(&mut rng);
        let mut success = ep.state == goal.latent
            || criterion.is_success(&ep.state, &goal.latent);
        let mut steps = 0;
        while !success && steps < horizon {
            let action = match &policy {
                RolloutPolicy::Learned(p) => {
                    let s_obs = process.observe(&ep.state);
                    greedy_action(p, &obs_space, &action_space, &s_obs, &goal.obs)
                }
                RolloutPolicy::Scripted => {
                    crate::dataset::greedy_action(process, &ep.state, &goal.latent, &mut rng)
                }
                RolloutPolicy::UniformRandom => process.sample_action(&mut rng),
            };
            ep.step(process, &action, &mut rng);
            steps += 1;
            success = criterion.is_success(&ep.state, &goal.latent);
        }
        outcomes.push(GoalOutcome {
            goal: gi,
            success,
            steps,
        });
    }
    let successes = outcomes.iter().filter(|o| o.success).count();
    let mean_len =
        outcomes.iter().map(|o| o.steps).sum::<usize>() as f64 / outcomes.len() as f64;
    Ok(EvalReport {
        success_rate: successes as f64 / outcomes.len() as f64,
        mean_episode_length: mean_len,
        outcomes,
    })
}

/// Classification accuracy of a critic over held-out batches: every pair of
/// the B x B matrix counts, positives on the diagonal.
pub fn binary_accuracy(
    critic: &CriticPair,
    obs_space: &ObsSpace,
    action_space: &ActionSpace,
    batches: &[ContrastiveBatch],
) -> Result<f64> {
    if batches.is_empty() {
        return Err(Error::invalid("no evaluation batches"));
    }
    let mut correct = 0usize;
    let mut total = 0usize;
    for batch in batches {
        let s = obs_features(&batch.states, obs_space);
        let a = action_features(&batch.actions, action_space);
        let g = obs_features(&batch.future_goals, obs_space);
        let logits = crate::algo::critic_logits(critic, &s, &a, &g)?;
        let b = logits.nrows();
        for i in 0..b {
            for j in 0..b {
                let l = logits[(i, j)];
                let ok = if i == j { l > 0.0 } else { l <= 0.0 };
                correct += ok as usize;
            }
        }
        total += b * b;
    }
    Ok(correct as f64 / total as f64)
}

/// Convenience: draw `n` held-out batches from a store and score them.
pub fn binary_accuracy_on_store(
    critic: &CriticPair,
    store: &TrajectoryStore,
    batch_size: usize,
    gamma: f64,
    n: usize,
    seed: u64,
) -> Result<f64> {
    let mut rng = rng::stream(seed, rng::STREAM_EVAL);
    let batches: Vec<ContrastiveBatch> = (0..n)
        .map(|_| assemble_batch(store, batch_size, gamma, &mut rng))
        .collect::<Result<_>>()?;
    binary_accuracy(critic, &store.obs_space, &store.action_space, &batches)
}

/// Cosine similarity with the collapse convention: two exactly-zero vectors
/// count as maximally aligned (cold initialization drives outputs to zero).
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 && nb == 0.0 {
        1.0
    } else if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// Result of interpolating between two goal representations and retrieving
/// nearest neighbors from an ordered validation sequence.
#[derive(Debug, Clone, Serialize)]
pub struct InterpolationTrace {
    pub alphas: Vec<f64>,
    pub retrieved: Vec<usize>,
    pub similarities: Vec<f64>,
    pub permutation_error: usize,
}

/// `sum_t |perm[t] - t|`; zero exactly when the retrievals are in order.
pub fn permutation_error(perm: &[usize]) -> usize {
    perm.iter()
        .enumerate()
        .map(|(t, &p)| p.abs_diff(t))
        .sum()
}

fn psi_embed(critic: &CriticPair, obs_space: &ObsSpace, obs: &[Obs]) -> Array2<f64> {
    let feats = obs_features(obs, obs_space);
    critic.psi.forward(feats, None).0
}

/// Interpolate in goal-representation space: for each alpha on a uniform
/// grid, retrieve the validation element whose representation has the
/// highest cosine similarity with `(1-alpha) psi(start) + alpha psi(goal)`.
pub fn interpolate_and_retrieve(
    critic: &CriticPair,
    obs_space: &ObsSpace,
    start: &Obs,
    goal: &Obs,
    validation: &[Obs],
    num_alphas: usize,
) -> Result<InterpolationTrace> {
    if validation.is_empty() {
        return Err(Error::invalid("empty validation set"));
    }
    if num_alphas < 2 {
        return Err(Error::invalid("need at least two interpolation points"));
    }
    let ends = psi_embed(critic, obs_space, &[start.clone(), goal.clone()]);
    let val = psi_embed(critic, obs_space, validation);
    let d = ends.ncols();
    let mut trace = InterpolationTrace {
        alphas: Vec::with_capacity(num_alphas),
        retrieved: Vec::with_capacity(num_alphas),
        similarities: Vec::with_capacity(num_alphas),
        permutation_error: 0,
    };
    for t in 0..num_alphas {
        let alpha = t as f64 / (num_alphas - 1) as f64;
        let z: Vec<f64> = (0..d)
            .map(|k| (1.0 - alpha) * ends[(0, k)] + alpha * ends[(1, k)])
            .collect();
        let mut best = 0usize;
        let mut best_sim = f64::NEG_INFINITY;
        for (v, row) in val.rows().into_iter().enumerate() {
            let sim = cosine_similarity(&z, row.as_slice().unwrap());
            if sim > best_sim {
                best_sim = sim;
                best = v;
            }
        }
        trace.alphas.push(alpha);
        trace.retrieved.push(best);
        trace.similarities.push(best_sim);
    }
    trace.permutation_error = permutation_error(&trace.retrieved);
    Ok(trace)
}

/// Pixel-space baseline for the same retrieval: linear interpolation of raw
/// pixels with L2 nearest neighbors (similarity reported as negated distance).
pub fn pixel_interpolation_trace(
    obs_space: &ObsSpace,
    start: &Obs,
    goal: &Obs,
    validation: &[Obs],
    num_alphas: usize,
) -> Result<InterpolationTrace> {
    if validation.is_empty() {
        return Err(Error::invalid("empty validation set"));
    }
    if num_alphas < 2 {
        return Err(Error::invalid("need at least two interpolation points"));
    }
    let ends = obs_features(&[start.clone(), goal.clone()], obs_space);
    let val = obs_features(validation, obs_space);
    let d = ends.ncols();
    let mut trace = InterpolationTrace {
        alphas: Vec::with_capacity(num_alphas),
        retrieved: Vec::with_capacity(num_alphas),
        similarities: Vec::with_capacity(num_alphas),
        permutation_error: 0,
    };
    for t in 0..num_alphas {
        let alpha = t as f64 / (num_alphas - 1) as f64;
        let mut best = 0usize;
        let mut best_d2 = f64::INFINITY;
        for (v, row) in val.rows().into_iter().enumerate() {
            let d2: f64 = (0..d)
                .map(|k| {
                    let z = (1.0 - alpha) * ends[(0, k)] + alpha * ends[(1, k)];
                    (z - row[k]) * (z - row[k])
                })
                .sum();
            if d2 < best_d2 {
                best_d2 = d2;
                best = v;
            }
        }
        trace.alphas.push(alpha);
        trace.retrieved.push(best);
        trace.similarities.push(-best_d2.sqrt());
    }
    trace.permutation_error = permutation_error(&trace.retrieved);
    Ok(trace)
}

/// Normalized critic values along a trajectory:
/// `(q - min q) / (max q - min q)`, all zeros when the trace is flat.
pub fn q_trace(
    critic: &CriticPair,
    obs_space: &ObsSpace,
    action_space: &ActionSpace,
    trajectory: &[(Obs, Action)],
    goal: &Obs,
) -> Result<Vec<f64>> {
    if trajectory.len() < 2 {
        return Err(Error::invalid("trajectory needs at least two steps"));
    }
    let states: Vec<Obs> = trajectory.iter().map(|(s, _)| s.clone()).collect();
    let actions: Vec<Action> = trajectory.iter().map(|(_, a)| a.clone()).collect();
    let s = obs_features(&states, obs_space);
    let a = action_features(&actions, action_space);
    let (phi_out, _) = critic.phi.forward(s, Some(&a));
    let goal_emb = psi_embed(critic, obs_space, std::slice::from_ref(goal));
    let q: Vec<f64> = phi_out
        .rows()
        .into_iter()
        .map(|row| row.dot(&goal_emb.row(0)))
        .collect();
    let min = q.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = q.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max - min <= 0.0 {
        return Ok(vec![0.0; q.len()]);
    }
    Ok(q.iter().map(|v| (v - min) / (max - min)).collect())
}

/// Roll the scripted reacher toward a goal, recording `(s_t, a_t)` pairs;
/// returns the trajectory and whether the goal was reached.
pub fn scripted_rollout(
    process: &GoalProcess,
    goal: &EvalGoal,
    horizon: usize,
    seed: u64,
) -> (Vec<(Obs, Action)>, bool) {
    let mut rng = rng::stream(seed, rng::STREAM_EVAL);
    let mut ep = process.episode(&mut rng);
    let mut traj = Vec::new();
    let mut success = process.success.is_success(&ep.state, &goal.latent);
    for _ in 0..horizon {
        if success {
            break;
        }
        let s_obs = process.observe(&ep.state);
        let a = crate::dataset::greedy_action(process, &ep.state, &goal.latent, &mut rng);
        traj.push((s_obs, a.clone()));
        ep.step(process, &a, &mut rng);
        success = process.success.is_success(&ep.state, &goal.latent);
    }
    (traj, success)
}

/// Mean cosine similarity between positive-pair representations at
/// initialization, for each cold-init range. The same seed and probe batches
/// are used for every range.
pub fn alignment_at_init(
    base: &TrainConfig,
    store: &TrajectoryStore,
    init_ranges: &[f64],
    num_batches: usize,
    probe_batch: usize,
) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(init_ranges.len());
    for &eps in init_ranges {
        if eps < 0.0 {
            return Err(Error::invalid("init range must be non-negative"));
        }
        let mut cfg = base.clone();
        cfg.cold_init_range = eps;
        let trainer = Trainer::new(cfg, store.obs_space, store.action_space)?;
        let mut rng = rng::stream(base.seed, rng::STREAM_EVAL);
        let mut sum = 0.0;
        let mut count = 0usize;
        for _ in 0..num_batches {
            let batch = assemble_batch(store, probe_batch, base.gamma, &mut rng)?;
            let s = obs_features(&batch.states, &store.obs_space);
            let a = action_features(&batch.actions, &store.action_space);
            let g = obs_features(&batch.future_goals, &store.obs_space);
            let (phi_out, _) = trainer.critic.phi.forward(s, Some(&a));
            let (psi_out, _) = trainer.critic.psi.forward(g, None);
            for i in 0..batch.len() {
                sum += cosine_similarity(
                    phi_out.row(i).as_slice().unwrap(),
                    psi_out.row(i).as_slice().unwrap(),
                );
                count += 1;
            }
        }
        out.push(sum / count as f64);
    }
    Ok(out)
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let ra = ranks(a);
    let rb = ranks(b);
    pearson(&ra, &rb)
}

fn ranks(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&i, &j| x[i].partial_cmp(&x[j]).unwrap_or(std::cmp::Ordering::Equal));
    let mut out = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for k in i..=j {
            out[idx[k]] = avg;
        }
        i = j + 1;
    }
    out
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for i in 0..a.len() {
        let da = a[i] - ma;
        let db = b[i] - mb;
        cov += da * db;
        va += da * da;
        vb += db * db;
    }
    if va == 0.0 || vb == 0.0 {
        return 0.0;
    }
    cov / (va * vb).sqrt()
}

/// Ablation axes understood by [`run_ablation`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AblationAxis {
    MlpWidthDepth,
    BatchSize,
    ColdInitRange,
    LayerNorm,
    Augmentation,
    ReprDim,
}

impl std::str::FromStr for AblationAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "mlp_width_depth" => AblationAxis::MlpWidthDepth,
            "batch_size" => AblationAxis::BatchSize,
            "cold_init_range" => AblationAxis::ColdInitRange,
            "layer_norm" => AblationAxis::LayerNorm,
            "augmentation" => AblationAxis::Augmentation,
            "repr_dim" => AblationAxis::ReprDim,
            other => return Err(Error::invalid(format!("unknown ablation axis '{other}'"))),
        })
    }
}

/// Apply one axis value to a config. Width/depth values use `WIDTHxDEPTH`
/// (e.g. `1024x4`); layer norm uses `on`/`off`; augmentation takes the
/// probability.
pub fn apply_axis(base: &TrainConfig, axis: AblationAxis, value: &str) -> Result<TrainConfig> {
    let mut cfg = base.clone();
    match axis {
        AblationAxis::MlpWidthDepth => {
            let (w, d) = value
                .split_once('x')
                .ok_or_else(|| Error::invalid("expected WIDTHxDEPTH"))?;
            cfg.mlp_width = w
                .parse()
                .map_err(|_| Error::invalid(format!("bad width '{w}'")))?;
            cfg.mlp_depth = d
                .parse()
                .map_err(|_| Error::invalid(format!("bad depth '{d}'")))?;
        }
        AblationAxis::BatchSize => {
            cfg.batch_size = value
                .parse()
                .map_err(|_| Error::invalid(format!("bad batch size '{value}'")))?;
        }
        AblationAxis::ColdInitRange => {
            cfg.cold_init_range = value
                .parse()
                .map_err(|_| Error::invalid(format!("bad init range '{value}'")))?;
        }
        AblationAxis::LayerNorm => {
            cfg.use_layer_norm = match value {
                "on" => true,
                "off" => false,
                other => return Err(Error::invalid(format!("expected on/off, got '{other}'"))),
            };
        }
        AblationAxis::Augmentation => {
            cfg.aug_prob = value
                .parse()
                .map_err(|_| Error::invalid(format!("bad probability '{value}'")))?;
        }
        AblationAxis::ReprDim => {
            cfg.repr_dim = value
                .parse()
                .map_err(|_| Error::invalid(format!("bad repr dim '{value}'")))?;
        }
    }
    Ok(cfg)
}

#[derive(Debug, Clone, Serialize)]
pub struct AblationRow {
    pub axis_value: String,
    pub seed: u64,
    pub success_rate: f64,
    pub binary_accuracy: f64,
}

/// Evaluation settings for ablation variants.
pub struct EvalSpec {
    pub num_goals: usize,
    pub horizon: usize,
    pub criterion: SuccessCriterion,
    pub seed: u64,
}

/// Train every (value, seed) variant and score it: rollout success on fresh
/// goals plus binary accuracy on a held-out store.
#[allow(clippy::too_many_arguments)]
pub fn run_ablation(
    process: &GoalProcess,
    store: &TrajectoryStore,
    held_out: &TrajectoryStore,
    base: &TrainConfig,
    axis: AblationAxis,
    values: &[String],
    seeds: &[u64],
    eval: &EvalSpec,
) -> Result<Vec<AblationRow>> {
    if values.is_empty() {
        return Err(Error::invalid("no ablation values"));
    }
    let mut rows = Vec::new();
    for value in values {
        let cfg_v = apply_axis(base, axis, value)?;
        for &seed in seeds {
            let mut cfg = cfg_v.clone();
            cfg.seed = seed;
            let mut trainer = Trainer::new(cfg.clone(), store.obs_space, store.action_space)
                .map_err(|e| Error::invalid(format!("variant {value}/seed {seed}: {e}")))?;
            for _ in 0..cfg.total_steps {
                trainer.step(store).map_err(|e| match e {
                    Error::TrainingDivergence { step, what } => Error::TrainingDivergence {
                        step,
                        what: format!("variant {value}/seed {seed}: {what}"),
                    },
                    other => other,
                })?;
            }
            let goals = sample_eval_goals(process, eval.num_goals, eval.seed);
            let report = evaluate_policy(
                process,
                RolloutPolicy::Learned(&trainer.policy),
                &goals,
                eval.horizon,
                eval.criterion,
                eval.seed + 1,
            )?;
            let acc = binary_accuracy_on_store(
                &trainer.critic,
                held_out,
                128.min(held_out.num_trajectories().max(2)),
                cfg.gamma,
                4,
                eval.seed + 2,
            )?;
            rows.push(AblationRow {
                axis_value: value.clone(),
                seed,
                success_rate: report.success_rate,
                binary_accuracy: acc,
            });
        }
    }
    Ok(rows)
}

pub fn write_ablation_csv<W: Write>(rows: &[AblationRow], mut w: W) -> std::io::Result<()> {
    writeln!(w, "axis_value,seed,success_rate,binary_accuracy")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{}",
            r.axis_value, r.seed, r.success_rate, r.binary_accuracy
        )?;
    }
    Ok(())
}
