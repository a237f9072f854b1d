//! Command-line front end: dataset generation, training, evaluation,
//! interpolation and Q-trace diagnostics, ablation sweeps, and the
//! finite-difference gradient check.
//!
//! Exit codes: 0 success, 1 failed gradient check, 2 bad arguments,
//! 3 training divergence, 4 I/O error.

use clap::{Args, Parser, Subcommand};
use scrl::analysis::{
    evaluate_policy, interpolate_and_retrieve, pixel_interpolation_trace, q_trace, run_ablation,
    sample_eval_goals, scripted_rollout, spearman, write_ablation_csv, AblationAxis, EvalSpec,
    InterpolationTrace, RolloutPolicy,
};
use scrl::config::{EnvConfig, RunConfig};
use scrl::dataset::{generate_offline, load_store, save_store, TrajectoryStore};
use scrl::error::Error;
use scrl::nn::checkpoint::load_checkpoint;
use scrl::train::Trainer;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "scrl",
    version,
    about = "Offline goal-conditioned RL with contrastive occupancy-ratio critics"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate an offline dataset and write it as a store file.
    GenData(GenDataArgs),
    /// Train critic and policy on a store.
    Train(TrainArgs),
    /// Evaluate a checkpoint's policy by goal-reaching rollouts.
    Eval(EvalArgs),
    /// Interpolate goal representations and retrieve nearest neighbors.
    Interp(InterpArgs),
    /// Normalized critic values along scripted successful rollouts.
    Qtrace(QtraceArgs),
    /// Train and score variants along one ablation axis.
    Ablate(AblateArgs),
    /// Run the finite-difference gradient suite; nonzero exit on failure.
    Gradcheck,
}

#[derive(Args)]
struct GenDataArgs {
    /// Environment preset: gridN, gridworld, pointmass, pointmass-pixel.
    #[arg(long, default_value = "grid5")]
    env: String,
    /// Data-collection policy: uniform or reacher.
    #[arg(long, default_value = "uniform")]
    behavior: String,
    /// Random-action probability for the reacher behavior.
    #[arg(long, default_value_t = 0.3)]
    epsilon: f64,
    #[arg(long, default_value_t = 250_000)]
    num_transitions: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    /// Run configuration (TOML); defaults apply for missing keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Store file; overrides the config's data path. Without either, the
    /// dataset is generated in memory from the config's env/data sections.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    out_dir: PathBuf,
    /// Resume from a `.resume` training-state file.
    #[arg(long)]
    resume: Option<PathBuf>,
    /// Batch-assembly workers (0 = deterministic single-threaded).
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out_dir: PathBuf,
    /// Number of evaluation rollouts (one fresh goal each).
    #[arg(long, default_value_t = 10)]
    rollouts: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct InterpArgs {
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 8)]
    num_alphas: usize,
    /// Trajectory index; defaults to the longest trajectory in the store.
    #[arg(long)]
    trajectory: Option<usize>,
}

#[derive(Args)]
struct QtraceArgs {
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out_dir: PathBuf,
    /// Number of scripted successful rollouts to trace.
    #[arg(long, default_value_t = 10)]
    rollouts: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct AblateArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Training store; generated from the config when absent.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Axis: mlp_width_depth, batch_size, cold_init_range, layer_norm,
    /// augmentation, repr_dim.
    #[arg(long)]
    axis: String,
    /// Comma-separated axis values (e.g. `32,128,512` or `1024x4,256x2`).
    #[arg(long, value_delimiter = ',')]
    values: Vec<String>,
    #[arg(long, value_delimiter = ',', default_value = "0,1,2")]
    seeds: Vec<u64>,
    #[arg(long)]
    out_dir: PathBuf,
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::TrainingDivergence { .. } => 3,
        Error::Io { .. } | Error::CorruptFile { .. } => 4,
        _ => 2,
    }
}

fn load_config(path: &Option<PathBuf>) -> scrl::Result<RunConfig> {
    match path {
        Some(p) => RunConfig::from_file(p),
        None => Ok(RunConfig::default()),
    }
}

/// Store from an explicit path, the config path, or fresh generation.
fn obtain_store(cfg: &RunConfig, flag: &Option<PathBuf>) -> scrl::Result<TrajectoryStore> {
    if let Some(path) = flag.as_ref().or(cfg.data.path.as_ref()) {
        return load_store(path);
    }
    let process = cfg.env.build()?;
    eprintln!(
        "no data path given; generating {} transitions in memory",
        cfg.data.num_transitions
    );
    generate_offline(
        &process,
        cfg.data.behavior()?,
        cfg.data.num_transitions,
        cfg.data.seed,
    )
}

fn write_out(path: &Path, contents: &[u8]) -> scrl::Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn cmd_gen_data(args: &GenDataArgs) -> scrl::Result<()> {
    let env = EnvConfig::preset(&args.env)?;
    let process = env.build()?;
    let behavior = match args.behavior.as_str() {
        "uniform" => scrl::dataset::Behavior::UniformRandom,
        "reacher" => scrl::dataset::Behavior::ScriptedGoalReacher {
            epsilon: args.epsilon,
        },
        other => return Err(Error::invalid(format!("unknown behavior '{other}'"))),
    };
    let store = generate_offline(&process, behavior, args.num_transitions, args.seed)?;
    save_store(&store, &args.out)?;
    println!(
        "wrote {}: {} transitions in {} trajectories",
        args.out.display(),
        store.num_transitions(),
        store.num_trajectories()
    );
    Ok(())
}

fn cmd_train(args: &TrainArgs) -> scrl::Result<()> {
    let mut cfg = load_config(&args.config)?;
    if let Some(w) = args.workers {
        cfg.train.workers = w;
    }
    let store = obtain_store(&cfg, &args.data)?;
    let mut trainer = Trainer::new(cfg.train.clone(), store.obs_space, store.action_space)?;
    if let Some(resume) = &args.resume {
        trainer.load_resume(resume)?;
        println!("resumed at step {}", trainer.step);
    }
    let metrics = trainer.run_to_files(&store, &args.out_dir)?;
    println!(
        "trained to step {}; metrics at {}",
        trainer.step,
        metrics.display()
    );
    Ok(())
}

fn cmd_eval(args: &EvalArgs) -> scrl::Result<()> {
    let cfg = load_config(&args.config)?;
    let process = cfg.env.build()?;
    let ckpt = load_checkpoint(&args.ckpt)?;
    if ckpt.meta.obs_space != process.obs_space() {
        return Err(Error::IncompatibleCheckpoint(format!(
            "checkpoint observation space {:?} does not match env {:?}",
            ckpt.meta.obs_space,
            process.obs_space()
        )));
    }
    let goals = sample_eval_goals(&process, args.rollouts.max(1), cfg.eval.seed + args.seed);
    let horizon = cfg.eval.horizon.unwrap_or(process.horizon);
    let criterion = cfg.eval.criterion(&process)?;
    let report = evaluate_policy(
        &process,
        RolloutPolicy::Learned(&ckpt.policy),
        &goals,
        horizon,
        criterion,
        cfg.eval.seed + args.seed + 1,
    )?;
    std::fs::create_dir_all(&args.out_dir).map_err(|e| Error::io(&args.out_dir, e))?;
    let mut buf = Vec::new();
    report
        .write_csv(&mut buf)
        .map_err(|e| Error::io("eval.csv", e))?;
    write_out(&args.out_dir.join("eval.csv"), &buf)?;
    println!(
        "success_rate {} over {} rollouts (mean length {:.1})",
        report.success_rate,
        report.outcomes.len(),
        report.mean_episode_length
    );
    Ok(())
}

#[derive(serde::Serialize)]
struct InterpOutput<'a> {
    learned: &'a InterpolationTrace,
    pixel_baseline: Option<&'a InterpolationTrace>,
}

fn cmd_interp(args: &InterpArgs) -> scrl::Result<()> {
    let store = load_store(&args.data)?;
    let ckpt = load_checkpoint(&args.ckpt)?;
    if ckpt.meta.obs_space != store.obs_space {
        return Err(Error::IncompatibleCheckpoint(
            "checkpoint does not match the store's observation space".into(),
        ));
    }
    if args.num_alphas < 2 {
        return Err(Error::invalid("need at least two interpolation points"));
    }
    let traj_idx = match args.trajectory {
        Some(i) => i,
        None => store
            .trajectories
            .iter()
            .enumerate()
            .max_by_key(|(_, t)| t.len())
            .map(|(i, _)| i)
            .ok_or_else(|| Error::invalid("store holds no trajectories"))?,
    };
    let traj = store
        .trajectories
        .get(traj_idx)
        .ok_or_else(|| Error::invalid(format!("trajectory {traj_idx} out of range")))?;
    if traj.obs.len() < args.num_alphas {
        return Err(Error::invalid(format!(
            "trajectory {traj_idx} has {} observations, need {}",
            traj.obs.len(),
            args.num_alphas
        )));
    }
    // evenly spaced validation sequence along the trajectory
    let validation: Vec<_> = (0..args.num_alphas)
        .map(|t| {
            let idx = t * (traj.obs.len() - 1) / (args.num_alphas - 1);
            traj.obs[idx].clone()
        })
        .collect();
    let start = validation[0].clone();
    let goal = validation[args.num_alphas - 1].clone();
    let learned = interpolate_and_retrieve(
        &ckpt.critic,
        &store.obs_space,
        &start,
        &goal,
        &validation,
        args.num_alphas,
    )?;
    let pixel = if store.obs_space.is_image() {
        Some(pixel_interpolation_trace(
            &store.obs_space,
            &start,
            &goal,
            &validation,
            args.num_alphas,
        )?)
    } else {
        None
    };
    std::fs::create_dir_all(&args.out_dir).map_err(|e| Error::io(&args.out_dir, e))?;
    let out = InterpOutput {
        learned: &learned,
        pixel_baseline: pixel.as_ref(),
    };
    let json = serde_json::to_vec_pretty(&out)
        .map_err(|e| Error::invalid(format!("json encode: {e}")))?;
    write_out(&args.out_dir.join("interp.json"), &json)?;
    println!(
        "permutation error {} (pixel baseline {})",
        learned.permutation_error,
        pixel
            .map(|p| p.permutation_error.to_string())
            .unwrap_or_else(|| "n/a".into())
    );
    Ok(())
}

fn cmd_qtrace(args: &QtraceArgs) -> scrl::Result<()> {
    let cfg = load_config(&args.config)?;
    let process = cfg.env.build()?;
    let ckpt = load_checkpoint(&args.ckpt)?;
    if ckpt.meta.obs_space != process.obs_space() {
        return Err(Error::IncompatibleCheckpoint(
            "checkpoint does not match the env's observation space".into(),
        ));
    }
    std::fs::create_dir_all(&args.out_dir).map_err(|e| Error::io(&args.out_dir, e))?;
    let mut csv = String::from("rollout,step,q_normalized\n");
    let mut rhos = Vec::new();
    let mut produced = 0usize;
    let mut attempt = 0u64;
    while produced < args.rollouts && attempt < 50 * args.rollouts as u64 {
        let goal = &sample_eval_goals(&process, 1, args.seed + 1000 + attempt)[0];
        attempt += 1;
        let (traj, success) =
            scripted_rollout(&process, goal, process.horizon, args.seed + attempt);
        if !success || traj.len() < 2 {
            continue;
        }
        let q = q_trace(
            &ckpt.critic,
            &process.obs_space(),
            &process.action_space(),
            &traj,
            &goal.obs,
        )?;
        let t_axis: Vec<f64> = (0..q.len()).map(|t| t as f64).collect();
        rhos.push(spearman(&q, &t_axis));
        for (t, v) in q.iter().enumerate() {
            csv.push_str(&format!("{produced},{t},{v}\n"));
        }
        produced += 1;
    }
    if produced == 0 {
        return Err(Error::invalid("no successful scripted rollouts"));
    }
    write_out(&args.out_dir.join("qtrace.csv"), csv.as_bytes())?;
    let mean_rho: f64 = rhos.iter().sum::<f64>() / rhos.len() as f64;
    println!("mean spearman(q, t) = {mean_rho:.4} over {produced} rollouts");
    Ok(())
}

fn cmd_ablate(args: &AblateArgs) -> scrl::Result<()> {
    let cfg = load_config(&args.config)?;
    let process = cfg.env.build()?;
    let store = obtain_store(&cfg, &args.data)?;
    // held-out data for binary accuracy, disjoint seed
    let held_out = generate_offline(
        &process,
        cfg.data.behavior()?,
        (cfg.data.num_transitions / 5).max(process.horizon),
        cfg.data.seed + 10_000,
    )?;
    let axis: AblationAxis = args.axis.parse()?;
    let eval = EvalSpec {
        num_goals: cfg.eval.num_goals,
        horizon: cfg.eval.horizon.unwrap_or(process.horizon),
        criterion: cfg.eval.criterion(&process)?,
        seed: cfg.eval.seed,
    };
    let rows = run_ablation(
        &process,
        &store,
        &held_out,
        &cfg.train,
        axis,
        &args.values,
        &args.seeds,
        &eval,
    )?;
    std::fs::create_dir_all(&args.out_dir).map_err(|e| Error::io(&args.out_dir, e))?;
    let mut buf = Vec::new();
    write_ablation_csv(&rows, &mut buf).map_err(|e| Error::io("ablate.csv", e))?;
    write_out(&args.out_dir.join("ablate.csv"), &buf)?;
    for r in &rows {
        println!(
            "{} seed {}: success {} accuracy {:.4}",
            r.axis_value, r.seed, r.success_rate, r.binary_accuracy
        );
    }
    Ok(())
}

fn cmd_gradcheck() -> ExitCode {
    let results = scrl::algo::gradcheck::run_suite();
    let mut ok = true;
    for r in &results {
        println!(
            "{:<34} rel_err {:>10.3e}  {}",
            r.name,
            r.rel_err,
            if r.pass { "pass" } else { "FAIL" }
        );
        ok &= r.pass;
    }
    if ok {
        println!("gradcheck: all {} checks passed", results.len());
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::GenData(args) => cmd_gen_data(args),
        Command::Train(args) => cmd_train(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Interp(args) => cmd_interp(args),
        Command::Qtrace(args) => cmd_qtrace(args),
        Command::Ablate(args) => cmd_ablate(args),
        Command::Gradcheck => return cmd_gradcheck(),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}
