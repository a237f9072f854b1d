//! The offline training loop: assemble a batch, update the critic (MC or TD
//! mode), update the actor, and stream per-step metrics. Deterministic by
//! default: all randomness flows through ChaCha streams derived from the
//! config seed, and runs can be resumed bit-exactly from a resume file.

use crate::algo::{
    actor_grad, mc_critic_grad, td_critic_grad, ActorNoise, LossReport, TdNoise,
};
use crate::dataset::{assemble_batch, random_crop, ContrastiveBatch, TrajectoryStore};
use crate::env::{ActionSpace, Obs, ObsSpace};
use crate::error::{Error, Result};
use crate::nn::checkpoint::{save_checkpoint, CheckpointMeta};
use crate::nn::{
    action_features, build_critic, build_policy, obs_features, Adam, ArchConfig, CriticPair,
    PolicyKind, PolicyNet,
};
use crate::rng;
use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::{Path, PathBuf};

/// Which critic objective drives representation learning.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CriticMode {
    Mc,
    Td,
}

/// Training hyperparameters. Defaults follow the reference recipe: batch
/// size 2048, (1024, 4) MLPs, representation dimension 16, learning rate
/// 3e-4, discount 0.99, cold initialization `Unif[-1e-12, 1e-12]`,
/// augmentation probability 0.5, 1000 steps per epoch, 300 epochs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub gamma: f64,
    pub batch_size: usize,
    pub repr_dim: usize,
    pub lr: f64,
    /// Behavioral-cloning mixing weight; 1 recovers pure goal-conditioned
    /// behavioral cloning, 0 pure critic maximization.
    pub lambda: f64,
    pub critic_mode: CriticMode,
    pub cold_init_range: f64,
    pub use_layer_norm: bool,
    pub aug_prob: f64,
    pub aug_pad: usize,
    /// Extend random cropping to the critic inputs (ablation switch);
    /// default augments only the actor's BC term.
    pub aug_critic_inputs: bool,
    pub td_weight_clip: f64,
    pub total_steps: usize,
    pub epoch_len: usize,
    pub seed: u64,
    pub mlp_width: usize,
    pub mlp_depth: usize,
    pub policy_std: f64,
    /// `None` evaluates the TD stop-gradient weight with the current
    /// parameters; `Some(k)` freezes a target copy refreshed every k steps.
    pub td_target_period: Option<usize>,
    /// Number of batch-assembly worker threads; 0 keeps the loop
    /// single-threaded and bit-deterministic.
    pub workers: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            gamma: 0.99,
            batch_size: 2048,
            repr_dim: 16,
            lr: 3e-4,
            lambda: 0.5,
            critic_mode: CriticMode::Mc,
            cold_init_range: 1e-12,
            use_layer_norm: true,
            aug_prob: 0.5,
            aug_pad: 4,
            aug_critic_inputs: false,
            td_weight_clip: 20.0,
            total_steps: 300_000,
            epoch_len: 1000,
            seed: 0,
            mlp_width: 1024,
            mlp_depth: 4,
            policy_std: 0.15,
            td_target_period: None,
            workers: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::invalid("gamma must lie in [0, 1)"));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::invalid("lambda must lie in [0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.aug_prob) {
            return Err(Error::invalid("aug_prob must lie in [0, 1]"));
        }
        if self.batch_size < 2 {
            return Err(Error::invalid("batch_size must be at least 2"));
        }
        if self.td_weight_clip <= 0.0 {
            return Err(Error::invalid("td_weight_clip must be positive"));
        }
        if self.epoch_len == 0 {
            return Err(Error::invalid("epoch_len must be positive"));
        }
        Ok(())
    }

    pub fn arch(&self, obs: &ObsSpace) -> ArchConfig {
        ArchConfig::for_obs(obs, self.mlp_width, self.mlp_depth, self.use_layer_norm)
    }
}

/// Featurized batch handed to the losses.
struct FeatBatch {
    s: Array2<f64>,
    a: Array2<f64>,
    g: Array2<f64>,
    next_s: Array2<f64>,
    s_bc: Array2<f64>,
    g_bc: Array2<f64>,
}

/// Owns the networks, optimizer state, and RNG streams of one training run.
pub struct Trainer {
    pub cfg: TrainConfig,
    pub obs_space: ObsSpace,
    pub action_space: ActionSpace,
    pub critic: CriticPair,
    pub policy: PolicyNet,
    pub step: usize,
    critic_flat: Vec<f64>,
    policy_flat: Vec<f64>,
    adam_critic: Adam,
    adam_policy: Adam,
    target: Option<CriticPair>,
    rng_batch: ChaCha8Rng,
    rng_aug: ChaCha8Rng,
    rng_policy: ChaCha8Rng,
    rng_td: ChaCha8Rng,
}

impl Trainer {
    pub fn new(cfg: TrainConfig, obs_space: ObsSpace, action_space: ActionSpace) -> Result<Self> {
        cfg.validate()?;
        let arch = cfg.arch(&obs_space);
        let mut init_rng = rng::stream(cfg.seed, rng::STREAM_INIT);
        let mut critic = build_critic(&obs_space, &action_space, &arch, cfg.repr_dim)?;
        critic.phi.init(&mut init_rng);
        critic.psi.init(&mut init_rng);
        let mut policy = build_policy(&obs_space, &action_space, &arch, cfg.policy_std)?;
        policy.init(&mut init_rng);
        // cold initialization of the final layers of phi, psi, and the policy
        critic.phi.cold_init(cfg.cold_init_range, &mut init_rng)?;
        critic.psi.cold_init(cfg.cold_init_range, &mut init_rng)?;
        policy.cold_init(cfg.cold_init_range, &mut init_rng)?;

        let critic_flat = critic.params();
        let policy_flat = policy.params();
        let adam_critic = Adam::new(critic_flat.len(), cfg.lr);
        let adam_policy = Adam::new(policy_flat.len(), cfg.lr);
        let target = match (cfg.critic_mode, cfg.td_target_period) {
            (CriticMode::Td, Some(_)) => Some(critic.clone()),
            _ => None,
        };
        Ok(Trainer {
            rng_batch: rng::stream(cfg.seed, rng::STREAM_BATCH),
            rng_aug: rng::stream(cfg.seed, rng::STREAM_AUG),
            rng_policy: rng::stream(cfg.seed, rng::STREAM_POLICY),
            rng_td: rng::stream(cfg.seed, rng::STREAM_TD),
            cfg,
            obs_space,
            action_space,
            critic,
            policy,
            step: 0,
            critic_flat,
            policy_flat,
            adam_critic,
            adam_policy,
            target,
        })
    }

    fn maybe_crop(&mut self, obs: &Obs, flip: bool) -> Obs {
        match obs {
            Obs::Image(img) if flip => Obs::Image(
                random_crop(img, self.cfg.aug_pad, &mut self.rng_aug).expect("crop-sized image"),
            ),
            other => other.clone(),
        }
    }

    fn featurize(&mut self, batch: &ContrastiveBatch) -> FeatBatch {
        let is_image = self.obs_space.is_image();
        let b = batch.len();
        // BC-term inputs get the random crop with probability aug_prob;
        // the switch extends the same crops to the critic inputs.
        let mut s_bc_obs = Vec::with_capacity(b);
        let mut g_bc_obs = Vec::with_capacity(b);
        if is_image && self.cfg.aug_prob > 0.0 {
            for i in 0..b {
                let flip = self.rng_aug.random::<f64>() < self.cfg.aug_prob;
                let s = self.maybe_crop(&batch.states[i], flip);
                let g = self.maybe_crop(&batch.future_goals[i], flip);
                s_bc_obs.push(s);
                g_bc_obs.push(g);
            }
        }
        let (s_obs, g_obs): (&[Obs], &[Obs]) = if is_image && self.cfg.aug_critic_inputs {
            (&s_bc_obs, &g_bc_obs)
        } else {
            (&batch.states, &batch.future_goals)
        };
        let s = obs_features(s_obs, &self.obs_space);
        let g = obs_features(g_obs, &self.obs_space);
        let a = action_features(&batch.actions, &self.action_space);
        let next_s = obs_features(&batch.next_states, &self.obs_space);
        let (s_bc, g_bc) = if s_bc_obs.is_empty() {
            (s.clone(), g.clone())
        } else {
            (
                obs_features(&s_bc_obs, &self.obs_space),
                obs_features(&g_bc_obs, &self.obs_space),
            )
        };
        FeatBatch {
            s,
            a,
            g,
            next_s,
            s_bc,
            g_bc,
        }
    }

    fn at_step<T>(&self, r: Result<T>) -> Result<T> {
        r.map_err(|e| match e {
            Error::TrainingDivergence { what, .. } => Error::TrainingDivergence {
                step: self.step,
                what,
            },
            other => other,
        })
    }

    /// One optimization step on a pre-assembled batch.
    pub fn step_with_batch(&mut self, batch: &ContrastiveBatch) -> Result<LossReport> {
        let feats = self.featurize(batch);
        let mut report = LossReport {
            step: self.step,
            ..Default::default()
        };

        // critic update
        let mut cgrads = vec![0.0; self.critic_flat.len()];
        match self.cfg.critic_mode {
            CriticMode::Mc => {
                let out = self.at_step(mc_critic_grad(
                    &self.critic,
                    &feats.s,
                    &feats.a,
                    &feats.g,
                    &mut cgrads,
                ))?;
                report.critic_loss = out.0;
                report.binary_accuracy = out.1;
                report.pos_logit_mean = out.2;
                report.neg_logit_mean = out.3;
            }
            CriticMode::Td => {
                let discrete = matches!(self.action_space, ActionSpace::Discrete { .. });
                let noise = TdNoise::sample(
                    batch.len(),
                    self.action_space.feat_dim(),
                    discrete,
                    &mut self.rng_td,
                );
                if let Some(period) = self.cfg.td_target_period {
                    if self.step % period == 0 {
                        self.target = Some(self.critic.clone());
                    }
                }
                let target = self.target.as_ref().unwrap_or(&self.critic);
                let out = self.at_step(td_critic_grad(
                    &self.critic,
                    target,
                    &self.policy,
                    &feats.s,
                    &feats.a,
                    &feats.next_s,
                    &feats.g,
                    self.cfg.gamma,
                    self.cfg.td_weight_clip,
                    &noise,
                    &mut cgrads,
                ))?;
                report.critic_loss = out.0;
                report.binary_accuracy = out.1;
                report.pos_logit_mean = out.2;
                report.neg_logit_mean = out.3;
            }
        }
        let adam_result = self.adam_critic.step(&mut self.critic_flat, &cgrads);
        self.at_step(adam_result)?;
        self.critic.write_params(&self.critic_flat);

        // actor update
        let actions = action_features(&batch.actions, &self.action_space);
        let noise = ActorNoise::sample(
            batch.len(),
            self.action_space.feat_dim(),
            &mut self.rng_policy,
        );
        let mut pgrads = vec![0.0; self.policy_flat.len()];
        let out = self.at_step(actor_grad(
            &self.policy,
            &self.critic,
            &feats.s,
            &feats.g,
            &feats.s_bc,
            &feats.g_bc,
            &actions,
            self.cfg.lambda,
            &noise,
            &mut pgrads,
        ))?;
        report.actor_loss = out.0;
        report.bc_loss = out.1;
        report.critic_term_of_actor = out.2;
        let adam_result = self.adam_policy.step(&mut self.policy_flat, &pgrads);
        self.at_step(adam_result)?;
        self.policy.write_params(&self.policy_flat);

        self.step += 1;
        Ok(report)
    }

    /// Assemble a batch from the store and take one step.
    pub fn step(&mut self, store: &TrajectoryStore) -> Result<LossReport> {
        let batch = assemble_batch(
            store,
            self.cfg.batch_size,
            self.cfg.gamma,
            &mut self.rng_batch,
        )?;
        self.step_with_batch(&batch)
    }

    pub fn checkpoint_meta(&self) -> CheckpointMeta {
        CheckpointMeta {
            obs_space: self.obs_space,
            action_space: self.action_space,
            mlp_width: self.cfg.mlp_width,
            mlp_depth: self.cfg.mlp_depth,
            repr_dim: self.cfg.repr_dim,
            use_layer_norm: self.cfg.use_layer_norm,
            policy_std: self.cfg.policy_std,
            step: self.step,
        }
    }

    /// Run to `total_steps`, streaming metrics and writing per-epoch
    /// checkpoints plus resume files into `out_dir`.
    pub fn run_to_files(&mut self, store: &TrajectoryStore, out_dir: &Path) -> Result<PathBuf> {
        std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
        let metrics_path = out_dir.join("metrics.csv");
        let file =
            std::fs::File::create(&metrics_path).map_err(|e| Error::io(&metrics_path, e))?;
        let mut metrics = std::io::BufWriter::new(file);
        writeln!(
            metrics,
            "step,critic_loss,actor_loss,bc_loss,binary_accuracy,pos_logit_mean,neg_logit_mean,wall_ms"
        )
        .map_err(|e| Error::io(&metrics_path, e))?;

        let deterministic = self.cfg.workers == 0;
        let batch_rx = if deterministic {
            None
        } else {
            Some(spawn_batch_workers(
                store.clone(),
                &self.cfg,
                self.cfg.total_steps.saturating_sub(self.step),
            ))
        };

        while self.step < self.cfg.total_steps {
            let t0 = std::time::Instant::now();
            let report = match &batch_rx {
                Some((rx, _)) => {
                    let batch = rx
                        .recv()
                        .map_err(|_| Error::invalid("batch workers terminated early"))?;
                    self.step_with_batch(&batch)?
                }
                None => self.step(store)?,
            };
            // wall time is suppressed in deterministic mode so identical
            // seeds produce byte-identical metrics files
            let wall_ms = if deterministic {
                0.0
            } else {
                t0.elapsed().as_secs_f64() * 1e3
            };
            writeln!(
                metrics,
                "{},{},{},{},{},{},{},{}",
                report.step,
                report.critic_loss,
                report.actor_loss,
                report.bc_loss,
                report.binary_accuracy,
                report.pos_logit_mean,
                report.neg_logit_mean,
                wall_ms
            )
            .map_err(|e| Error::io(&metrics_path, e))?;
            if self.step % self.cfg.epoch_len == 0 {
                let epoch = self.step / self.cfg.epoch_len;
                self.save_epoch(out_dir, &format!("ckpt_epoch{epoch}"))?;
            }
        }
        metrics.flush().map_err(|e| Error::io(&metrics_path, e))?;
        self.save_epoch(out_dir, "ckpt_final")?;
        Ok(metrics_path)
    }

    fn save_epoch(&self, out_dir: &Path, name: &str) -> Result<()> {
        let ckpt = out_dir.join(name);
        save_checkpoint(&ckpt, &self.checkpoint_meta(), &self.critic, &self.policy)?;
        self.save_resume(&out_dir.join(format!("{name}.resume")))
    }

    /// Full training state for bit-exact resume: f64 parameters, optimizer
    /// moments, and RNG stream positions.
    pub fn save_resume(&self, path: &Path) -> Result<()> {
        let mut body: Vec<u8> = Vec::new();
        body.extend_from_slice(b"SCRLRSUM");
        body.extend_from_slice(&1u32.to_le_bytes());
        body.extend_from_slice(&(self.step as u64).to_le_bytes());
        let write_vec = |body: &mut Vec<u8>, v: &[f64]| {
            body.extend_from_slice(&(v.len() as u64).to_le_bytes());
            for x in v {
                body.extend_from_slice(&x.to_le_bytes());
            }
        };
        write_vec(&mut body, &self.critic_flat);
        write_vec(&mut body, &self.policy_flat);
        write_vec(&mut body, &self.adam_critic.m);
        write_vec(&mut body, &self.adam_critic.v);
        body.extend_from_slice(&self.adam_critic.t.to_le_bytes());
        write_vec(&mut body, &self.adam_policy.m);
        write_vec(&mut body, &self.adam_policy.v);
        body.extend_from_slice(&self.adam_policy.t.to_le_bytes());
        for rng in [&self.rng_batch, &self.rng_aug, &self.rng_policy, &self.rng_td] {
            body.extend_from_slice(&rng.get_word_pos().to_le_bytes());
        }
        // frozen target params (td mode with a target period)
        match &self.target {
            Some(t) => {
                body.push(1);
                write_vec(&mut body, &t.params());
            }
            None => body.push(0),
        }
        let mut hasher = crc32fast::Hasher::new();
        hasher.update(&body);
        body.extend_from_slice(&hasher.finalize().to_le_bytes());
        std::fs::write(path, body).map_err(|e| Error::io(path, e))
    }

    /// Restore training state saved by [`Trainer::save_resume`]; the config
    /// must match the one that produced the file.
    pub fn load_resume(&mut self, path: &Path) -> Result<()> {
        let data = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        if data.len() < 16 {
            return Err(Error::corrupt(path, "file too short"));
        }
        let (body, tail) = data.split_at(data.len() - 4);
        let mut hasher = crc32fast::Hasher::new();
        hasher.update(body);
        if hasher.finalize() != u32::from_le_bytes(tail.try_into().unwrap()) {
            return Err(Error::corrupt(path, "crc32 mismatch"));
        }
        let mut pos = 0usize;
        let take = |pos: &mut usize, n: usize| -> Result<&[u8]> {
            if *pos + n > body.len() {
                return Err(Error::corrupt(path, "unexpected end of file"));
            }
            let s = &body[*pos..*pos + n];
            *pos += n;
            Ok(s)
        };
        if take(&mut pos, 8)? != b"SCRLRSUM" {
            return Err(Error::corrupt(path, "bad magic"));
        }
        let version = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap());
        if version != 1 {
            return Err(Error::corrupt(path, "unsupported version"));
        }
        let step = u64::from_le_bytes(take(&mut pos, 8)?.try_into().unwrap()) as usize;
        let nc = self.critic_flat.len();
        let np = self.policy_flat.len();
        let read_vec = |pos: &mut usize, expect: usize, what: &str| -> Result<Vec<f64>> {
            let n = u64::from_le_bytes(take(pos, 8)?.try_into().unwrap()) as usize;
            if n != expect {
                return Err(Error::IncompatibleCheckpoint(format!(
                    "{what}: expected {expect} values, found {n}"
                )));
            }
            let mut v = Vec::with_capacity(n);
            for _ in 0..n {
                v.push(f64::from_le_bytes(take(pos, 8)?.try_into().unwrap()));
            }
            Ok(v)
        };
        let critic_flat = read_vec(&mut pos, nc, "critic params")?;
        let policy_flat = read_vec(&mut pos, np, "policy params")?;
        let adam_c_m = read_vec(&mut pos, nc, "critic adam m")?;
        let adam_c_v = read_vec(&mut pos, nc, "critic adam v")?;
        let adam_c_t = u64::from_le_bytes(take(&mut pos, 8)?.try_into().unwrap());
        let adam_p_m = read_vec(&mut pos, np, "policy adam m")?;
        let adam_p_v = read_vec(&mut pos, np, "policy adam v")?;
        let adam_p_t = u64::from_le_bytes(take(&mut pos, 8)?.try_into().unwrap());
        let mut positions = [0u128; 4];
        for p in positions.iter_mut() {
            *p = u128::from_le_bytes(take(&mut pos, 16)?.try_into().unwrap());
        }
        let has_target = take(&mut pos, 1)?[0] == 1;
        let target_params = if has_target {
            Some(read_vec(&mut pos, nc, "target params")?)
        } else {
            None
        };
        if pos != body.len() {
            return Err(Error::corrupt(path, "trailing bytes"));
        }

        self.step = step;
        self.critic_flat = critic_flat;
        self.policy_flat = policy_flat;
        self.adam_critic.m = adam_c_m;
        self.adam_critic.v = adam_c_v;
        self.adam_critic.t = adam_c_t;
        self.adam_policy.m = adam_p_m;
        self.adam_policy.v = adam_p_v;
        self.adam_policy.t = adam_p_t;
        self.critic.write_params(&self.critic_flat);
        self.policy.write_params(&self.policy_flat);
        self.rng_batch.set_word_pos(positions[0]);
        self.rng_aug.set_word_pos(positions[1]);
        self.rng_policy.set_word_pos(positions[2]);
        self.rng_td.set_word_pos(positions[3]);
        self.target = target_params.map(|p| {
            let mut t = self.critic.clone();
            t.write_params(&p);
            t
        });
        Ok(())
    }
}

type BatchRx = (
    std::sync::mpsc::Receiver<ContrastiveBatch>,
    Vec<std::thread::JoinHandle<()>>,
);

/// Batch-assembly worker pool: each worker owns stream `base_seed + id` and
/// feeds a bounded queue (one batch in flight per worker). Ordering across
/// workers is not deterministic; the default mode keeps assembly inline.
fn spawn_batch_workers(store: TrajectoryStore, cfg: &TrainConfig, remaining: usize) -> BatchRx {
    let workers = cfg.workers.max(1);
    let (tx, rx) = std::sync::mpsc::sync_channel(workers);
    let store = std::sync::Arc::new(store);
    let per_worker = remaining.div_ceil(workers);
    let mut handles = Vec::new();
    for worker in 0..workers {
        let tx = tx.clone();
        let store = store.clone();
        let batch_size = cfg.batch_size;
        let gamma = cfg.gamma;
        let seed = cfg.seed + worker as u64;
        handles.push(std::thread::spawn(move || {
            let mut rng = rng::stream(seed, rng::STREAM_BATCH);
            for _ in 0..per_worker {
                match assemble_batch(&store, batch_size, gamma, &mut rng) {
                    Ok(batch) => {
                        if tx.send(batch).is_err() {
                            return;
                        }
                    }
                    Err(_) => return,
                }
            }
        }));
    }
    (rx, handles)
}

/// Policy action for evaluation: the greedy mean (continuous) or argmax
/// (discrete) of the action distribution at `(s, g)`.
pub fn greedy_action(
    policy: &PolicyNet,
    obs_space: &ObsSpace,
    action_space: &ActionSpace,
    s: &Obs,
    g: &Obs,
) -> crate::env::Action {
    let sf = obs_features(std::slice::from_ref(s), obs_space);
    let gf = obs_features(std::slice::from_ref(g), obs_space);
    let (params, _) = policy.forward(sf, gf);
    match policy.kind {
        PolicyKind::Categorical { n } => {
            let mut best = 0usize;
            for k in 1..n {
                if params[(0, k)] > params[(0, best)] {
                    best = k;
                }
            }
            crate::env::Action::Discrete(best as u32)
        }
        PolicyKind::Gaussian { dim, .. } => {
            let (low, high) = match action_space {
                ActionSpace::Box { low, high, .. } => (*low, *high),
                _ => (-1.0, 1.0),
            };
            crate::env::Action::Continuous(
                (0..dim)
                    .map(|d| params[(0, d)].clamp(low, high) as f32)
                    .collect(),
            )
        }
    }
}
