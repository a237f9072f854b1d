//! Ablation probes (removed before final).
use scrl::analysis::{binary_accuracy_on_store, evaluate_policy, sample_eval_goals, RolloutPolicy};
use scrl::dataset::{generate_offline, Behavior, TrajectoryStore};
use scrl::env::{make_pointmass, make_pointmass_pixel, GoalProcess, PixelSpec, SuccessCriterion};
use scrl::train::{TrainConfig, Trainer};

fn pixel_task() -> GoalProcess {
    let mut p = make_pointmass_pixel(2, 0.08, 0.01, PixelSpec { h: 24, w: 24, c: 1, radius: 2 }).unwrap();
    p.horizon = 50;
    p
}

fn train_eval_px(cfg: &TrainConfig, steps: usize) -> (f64, f64) {
    let p = pixel_task();
    let store = generate_offline(&p, Behavior::UniformRandom, 12_000, 100 + cfg.seed).unwrap();
    let held = generate_offline(&p, Behavior::UniformRandom, 4_000, 900).unwrap();
    let mut cfg = cfg.clone();
    cfg.total_steps = steps;
    let mut t = Trainer::new(cfg.clone(), store.obs_space, store.action_space).unwrap();
    for _ in 0..steps { t.step(&store).unwrap(); }
    let goals = sample_eval_goals(&p, 50, 777);
    let rep = evaluate_policy(&p, RolloutPolicy::Learned(&t.policy), &goals, 50, SuccessCriterion::L2Ball { radius: 0.05 }, 778).unwrap();
    let acc = binary_accuracy_on_store(&t.critic, &held, 64, cfg.gamma, 4, 779).unwrap();
    (rep.success_rate, acc)
}

fn base_px() -> TrainConfig {
    TrainConfig {
        gamma: 0.95,
        batch_size: 32,
        repr_dim: 16,
        mlp_width: 64,
        mlp_depth: 2,
        lr: 3e-4,
        lambda: 0.5,
        ..Default::default()
    }
}

#[test]
#[ignore]
fn probe_pixel_arms() {
    let p = pixel_task();
    let goals = sample_eval_goals(&p, 50, 777);
    let rep = evaluate_policy(&p, RolloutPolicy::UniformRandom, &goals, 50, SuccessCriterion::L2Ball { radius: 0.05 }, 778).unwrap();
    println!("pixel random baseline: {:.3}", rep.success_rate);
    let t0 = std::time::Instant::now();
    for steps in [800usize] {
        for seed in [0u64, 1] {
            let mut b = base_px(); b.seed = seed;
            let (s0, a0) = train_eval_px(&b, steps);
            println!("px steps={steps} seed={seed}: base    {s0:.2}/{a0:.3} ({:.0}s)", t0.elapsed().as_secs_f64());
            let mut noln = base_px(); noln.seed = seed; noln.use_layer_norm = false;
            let (s1, a1) = train_eval_px(&noln, steps);
            println!("px steps={steps} seed={seed}: noLN    {s1:.2}/{a1:.3} ({:.0}s)", t0.elapsed().as_secs_f64());
            let mut warm = base_px(); warm.seed = seed; warm.cold_init_range = 1e-4;
            let (s2, a2) = train_eval_px(&warm, steps);
            println!("px steps={steps} seed={seed}: cold1e4 {s2:.2}/{a2:.3} ({:.0}s)", t0.elapsed().as_secs_f64());
            let mut big = base_px(); big.seed = seed; big.repr_dim = 512;
            let (s3, a3) = train_eval_px(&big, steps);
            println!("px steps={steps} seed={seed}: d512    {s3:.2}/{a3:.3} ({:.0}s)", t0.elapsed().as_secs_f64());
        }
    }
}

fn pixel_task_sized(max_step: f64, horizon: usize) -> GoalProcess {
    let mut p = make_pointmass_pixel(2, max_step, 0.01, PixelSpec { h: 24, w: 24, c: 1, radius: 2 }).unwrap();
    p.horizon = horizon;
    p
}

fn train_eval_px2(cfg: &TrainConfig, steps: usize, transitions: usize) -> (f64, f64) {
    let p = pixel_task_sized(0.08, 50);
    let store = generate_offline(&p, Behavior::UniformRandom, transitions, 100 + cfg.seed).unwrap();
    let held = generate_offline(&p, Behavior::UniformRandom, 4_000, 900).unwrap();
    let mut cfg = cfg.clone();
    cfg.total_steps = steps;
    let mut t = Trainer::new(cfg.clone(), store.obs_space, store.action_space).unwrap();
    for _ in 0..steps { t.step(&store).unwrap(); }
    let goals = sample_eval_goals(&p, 50, 777);
    let rep = evaluate_policy(&p, RolloutPolicy::Learned(&t.policy), &goals, 50, SuccessCriterion::L2Ball { radius: 0.05 }, 778).unwrap();
    let acc = binary_accuracy_on_store(&t.critic, &held, 64, cfg.gamma, 4, 779).unwrap();
    (rep.success_rate, acc)
}

#[test]
#[ignore]
fn probe_cold_init_speed() {
    let t0 = std::time::Instant::now();
    for (lr, steps) in [(1e-3f64, 400usize), (1e-3, 300)] {
        for seed in [0u64, 1, 2] {
            let mut cold = base_px(); cold.seed = seed; cold.lr = lr;
            let (s0, a0) = train_eval_px2(&cold, steps, 12_000);
            let mut warm = base_px(); warm.seed = seed; warm.lr = lr; warm.cold_init_range = 1e-4;
            let (s1, a1) = train_eval_px2(&warm, steps, 12_000);
            println!("lr={lr} steps={steps} seed={seed}: cold12 {s0:.2}/{a0:.3} vs cold4 {s1:.2}/{a1:.3}  ({:.0}s)", t0.elapsed().as_secs_f64());
        }
    }
}

#[test]
#[ignore]
fn probe_repr_dim_overfit() {
    let t0 = std::time::Instant::now();
    for transitions in [3000usize] {
        for seed in [0u64, 1, 2] {
            let mut d16 = base_px(); d16.seed = seed;
            let (s0, a0) = train_eval_px2(&d16, 1200, transitions);
            let mut d512 = base_px(); d512.seed = seed; d512.repr_dim = 512;
            let (s1, a1) = train_eval_px2(&d512, 1200, transitions);
            println!("n={transitions} seed={seed}: d16 {s0:.2}/{a0:.3} vs d512 {s1:.2}/{a1:.3}  ({:.0}s)", t0.elapsed().as_secs_f64());
        }
    }
}

#[test]
#[ignore]
fn probe_batch_monotone_vector() {
    let t0 = std::time::Instant::now();
    let task = || { let mut p = make_pointmass(2, 0.05, 0.01).unwrap(); p.horizon = 60; p };
    for seed in [0u64, 1, 2] {
        let p = task();
        let store = generate_offline(&p, Behavior::UniformRandom, 50_000, 100 + seed).unwrap();
        let held = generate_offline(&p, Behavior::UniformRandom, 20_000, 900).unwrap();
        let mut line = format!("seed={seed}:");
        for b in [32usize, 128, 512] {
            let mut cfg = base_px(); cfg.seed = seed; cfg.batch_size = b; cfg.total_steps = 1500;
            let mut t = Trainer::new(cfg.clone(), store.obs_space, store.action_space).unwrap();
            for _ in 0..1500 { t.step(&store).unwrap(); }
            let acc = binary_accuracy_on_store(&t.critic, &held, 128, cfg.gamma, 4, 779).unwrap();
            line.push_str(&format!("  B={b} acc={acc:.4}"));
        }
        println!("{line}  ({:.0}s)", t0.elapsed().as_secs_f64());
    }
}
