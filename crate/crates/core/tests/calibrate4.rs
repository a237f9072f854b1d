//! TD with behavior-policy bootstrap vs oracle (removed before final).
use scrl::algo::{mc_critic_grad, td_critic_grad, TdNoise};
use scrl::dataset::{assemble_batch, generate_offline, Behavior};
use scrl::env::{make_gridworld, Obs, Action};
use scrl::nn::{action_features, build_critic, build_policy, obs_features, Adam, CriticPair};
use scrl::oracle::{dp_occupancy, MarginalTable, TabularPolicy};
use scrl::rng;
use scrl::train::{CriticMode, TrainConfig};

fn critic_only(
    store: &scrl::dataset::TrajectoryStore,
    mode: CriticMode,
    steps: usize,
    gamma: f64,
    seed: u64,
) -> CriticPair {
    let arch = scrl::nn::ArchConfig { cnn: false, mlp_width: 64, mlp_depth: 2, use_layer_norm: true };
    let mut init = rng::stream(seed, rng::STREAM_INIT);
    let mut critic = build_critic(&store.obs_space, &store.action_space, &arch, 16).unwrap();
    critic.phi.init(&mut init);
    critic.psi.init(&mut init);
    critic.phi.cold_init(1e-12, &mut init).unwrap();
    critic.psi.cold_init(1e-12, &mut init).unwrap();
    // zero-parameter policy: uniform action distribution = the data policy
    let uniform_policy = build_policy(&store.obs_space, &store.action_space, &arch, 0.15).unwrap();
    let mut flat = critic.params();
    let mut adam = Adam::new(flat.len(), 3e-4);
    let mut batch_rng = rng::stream(seed, rng::STREAM_BATCH);
    let mut td_rng = rng::stream(seed, rng::STREAM_TD);
    for _ in 0..steps {
        let b = assemble_batch(store, 384, gamma, &mut batch_rng).unwrap();
        let s = obs_features(&b.states, &store.obs_space);
        let a = action_features(&b.actions, &store.action_space);
        let g = obs_features(&b.future_goals, &store.obs_space);
        let mut grads = vec![0.0; flat.len()];
        match mode {
            CriticMode::Mc => {
                mc_critic_grad(&critic, &s, &a, &g, &mut grads).unwrap();
            }
            CriticMode::Td => {
                let next = obs_features(&b.next_states, &store.obs_space);
                let noise = TdNoise::sample(b.len(), 5, true, &mut td_rng);
                td_critic_grad(&critic, &critic, &uniform_policy, &s, &a, &next, &g, gamma, 20.0, &noise, &mut grads).unwrap();
            }
        }
        adam.step(&mut flat, &grads).unwrap();
        critic.write_params(&flat);
    }
    critic
}

#[test]
#[ignore]
fn probe_td_uniform_bootstrap() {
    let t0 = std::time::Instant::now();
    let w = 3usize; let n = w * w; let na = 5usize;
    let gamma = 0.8;
    let mut p = make_gridworld(w, w, 0.1).unwrap();
    p.horizon = 200;
    let store = generate_offline(&p, Behavior::UniformRandom, 100_000, 1).unwrap();
    let occ = dp_occupancy(&p, &TabularPolicy::uniform(n, na), gamma).unwrap();
    let mut sa_w = vec![0.0; n * na];
    let per_traj = 1.0 / store.num_trajectories() as f64;
    for traj in &store.trajectories {
        let el = traj.len() - 1;
        for t in 0..el {
            if let (Obs::Index(s), Action::Discrete(a)) = (&traj.obs[t], &traj.actions[t]) {
                sa_w[*s as usize * na + *a as usize] += per_traj / el as f64;
            }
        }
    }
    let marg = MarginalTable::from_occupancy(&occ, &sa_w).unwrap();

    let logits = |critic: &CriticPair| -> Vec<f64> {
        let goals: Vec<Obs> = (0..n).map(|i| Obs::Index(i as u32)).collect();
        let gfeat = obs_features(&goals, &store.obs_space);
        let (psi_out, _) = critic.psi.forward(gfeat, None);
        let mut out = Vec::new();
        for s in 0..n { for a in 0..na {
            let sfeat = obs_features(&[Obs::Index(s as u32)], &store.obs_space);
            let afeat = action_features(&[Action::Discrete(a as u32)], &store.action_space);
            let (phi_out, _) = critic.phi.forward(sfeat, Some(&afeat));
            for gidx in 0..n { out.push(phi_out.row(0).dot(&psi_out.row(gidx))); }
        }}
        out
    };
    for steps in [12_000usize] {
        let f_mc = logits(&critic_only(&store, CriticMode::Mc, steps, gamma, 0));
        let f_td = logits(&critic_only(&store, CriticMode::Td, steps, gamma, 0));
        let mut worst: f64 = 0.0; let mut sum = 0.0; let mut cnt = 0; let mut bad = 0;
        let mut sum_log_mc = 0.0; let mut sum_log_td = 0.0;
        for s in 0..n { for a in 0..na { for g in 0..n {
            let ratio = occ.row(s, a)[g] / marg.probs[g];
            if !(0.1..=10.0).contains(&ratio) { continue; }
            let idx = (s * na + a) * n + g;
            let rel = (f_td[idx].exp() - f_mc[idx].exp()).abs() / f_mc[idx].exp();
            worst = worst.max(rel); sum += rel; cnt += 1;
            if rel > 0.2 { bad += 1; }
            sum_log_mc += f_mc[idx] - ratio.ln();
            sum_log_td += f_td[idx] - ratio.ln();
        }}}
        println!(
            "steps={steps}: mean rel {:.3} worst {:.3} bad {bad}/{cnt}; log offsets mc {:+.3} td {:+.3} ({:.0}s)",
            sum / cnt as f64, worst, sum_log_mc / cnt as f64, sum_log_td / cnt as f64,
            t0.elapsed().as_secs_f64()
        );
    }
}
