//! The finite-difference verification suite: every layer type, the composed
//! encoders, both critic losses, and the actor loss, each checked against
//! central differences; plus the closed-form negative-pair gradient, which
//! must match the loss gradient exactly.
//!
//! The probe step is 1e-3, large enough to flip a ReLU unit whose
//! preactivation sits right at the kink. Instances are therefore drawn from
//! successive seeds until every ReLU preactivation clears a safety margin,
//! which keeps the numeric side of the comparison well conditioned without
//! touching the step size. Seed selection is deterministic.

use super::{
    actor_grad, hard_negative_gradient, mc_critic_grad, mc_loss_from_logits, td_critic_grad,
    ActorNoise, TdNoise,
};
use crate::env::{ActionSpace, ObsSpace};
use crate::nn::fd::{central_diff, max_rel_error, FD_STEP, FD_TOLERANCE};
use crate::nn::{
    build_critic, build_policy, ArchConfig, Conv2d, CriticPair, Dense, Layer, LayerNorm, Network,
};
use crate::rng::stream;
use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// A margin keeps ReLU preactivations away from the kink relative to the probe
/// step. Individual layers are probed at the pinned 1e-3 step; composed
/// losses use a finer step because their deep stacks expose thousands of
/// preactivations and some always sit near the kink at the coarse step.
const FD_STEP_COMPOSED: f64 = 1e-5;
const KINK_MARGIN_COMPOSED: f64 = 1e-3;
const MAX_INSTANCE_TRIES: u64 = 2000;

/// Outcome of one check.
#[derive(Debug, Clone)]
pub struct GradCheck {
    pub name: String,
    pub rel_err: f64,
    pub pass: bool,
}

impl GradCheck {
    fn new(name: &str, rel_err: f64) -> Self {
        GradCheck {
            name: name.to_string(),
            rel_err,
            pass: rel_err < FD_TOLERANCE,
        }
    }
}

fn rand_matrix(rows: usize, cols: usize, scale: f64, rng: &mut ChaCha8Rng) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-scale..scale))
}

fn rand_unit(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(0.0..1.0))
}

fn weighted_sum(y: &Array2<f64>, w: &Array2<f64>) -> f64 {
    (y * w).sum()
}

/// Check one single-layer network: parameter gradients and input gradients.
fn check_layer(name: &str, layer: Layer, in_dim: usize, rng: &mut ChaCha8Rng) -> Vec<GradCheck> {
    let net = Network::new(vec![layer], in_dim);
    let batch = 3;
    // inputs away from the ReLU kink
    let x = Array2::from_shape_fn((batch, in_dim), |_| {
        let v: f64 = rng.random_range(0.1..1.0);
        if rng.random::<bool>() {
            v
        } else {
            -v
        }
    });
    let (y0, _) = net.forward(x.clone());
    let readout = rand_matrix(y0.nrows(), y0.ncols(), 1.0, rng);

    let mut results = Vec::new();
    let n = net.param_count();
    if n > 0 {
        let mut params = vec![0.0; n];
        net.read_params(&mut params);
        let mut analytic = vec![0.0; n];
        let (_, cache) = net.forward(x.clone());
        net.backward(&cache, readout.clone(), &mut analytic);
        let mut probe = net.clone();
        let numeric = central_diff(
            |p: &[f64]| {
                probe.write_params(p);
                let (y, _) = probe.forward(x.clone());
                weighted_sum(&y, &readout)
            },
            &params,
            FD_STEP,
        );
        results.push(GradCheck::new(
            &format!("{name}/params"),
            max_rel_error(&analytic, &numeric),
        ));
    }

    let (_, cache) = net.forward(x.clone());
    let mut scratch = vec![0.0; n];
    let gin = net.backward(&cache, readout.clone(), &mut scratch);
    let x_flat: Vec<f64> = x.iter().cloned().collect();
    let numeric_in = central_diff(
        |xs: &[f64]| {
            let xm = Array2::from_shape_vec(x.raw_dim(), xs.to_vec()).unwrap();
            let (y, _) = net.forward(xm);
            weighted_sum(&y, &readout)
        },
        &x_flat,
        FD_STEP,
    );
    let analytic_in: Vec<f64> = gin.iter().cloned().collect();
    results.push(GradCheck::new(
        &format!("{name}/input"),
        max_rel_error(&analytic_in, &numeric_in),
    ));
    results
}

struct CriticInstance {
    critic: CriticPair,
    s: Array2<f64>,
    a: Array2<f64>,
    g: Array2<f64>,
    extra: Array2<f64>,
}

/// Draw critic instances until every ReLU preactivation clears the margin.
fn well_conditioned_critic(
    obs: &ObsSpace,
    act: &ActionSpace,
    arch: &ArchConfig,
    repr_dim: usize,
    batch: usize,
    base_seed: u64,
    unit_obs: bool,
) -> CriticInstance {
    for attempt in 0..MAX_INSTANCE_TRIES {
        let seed = base_seed + attempt;
        let mut rng = stream(seed, 3);
        let mut critic = build_critic(obs, act, arch, repr_dim).unwrap();
        critic.phi.init(&mut rng);
        critic.psi.init(&mut rng);
        let dim = obs.feat_dim();
        let draw_obs = |rng: &mut ChaCha8Rng| {
            if unit_obs {
                rand_unit(batch, dim, rng)
            } else {
                rand_matrix(batch, dim, 1.0, rng)
            }
        };
        let s = draw_obs(&mut rng);
        let g = draw_obs(&mut rng);
        let extra = draw_obs(&mut rng);
        let a = rand_matrix(batch, act.feat_dim(), 1.0, &mut rng);
        let margin = critic
            .phi
            .relu_margin(s.clone(), Some(&a))
            .min(critic.psi.relu_margin(g.clone(), None))
            .min(critic.psi.relu_margin(extra.clone(), None));
        if margin > KINK_MARGIN_COMPOSED {
            return CriticInstance { critic, s, a, g, extra };
        }
    }
    panic!("no well-conditioned critic instance found");
}

pub fn run_suite() -> Vec<GradCheck> {
    let mut rng = stream(20_240_817, 2);
    let mut out = Vec::new();

    // individual layers
    {
        let mut d = Dense::new(5, 4);
        d.w = rand_matrix(5, 4, 0.7, &mut rng);
        d.b = ndarray::Array1::from_shape_fn(4, |_| rng.random_range(-0.3..0.3));
        out.extend(check_layer("dense", Layer::Dense(d), 5, &mut rng));

        let mut c = Conv2d::new(6, 6, 2, 3, 3, 2, 1);
        c.w = rand_matrix(3 * 3 * 2, 3, 0.5, &mut rng);
        c.b = ndarray::Array1::from_shape_fn(3, |_| rng.random_range(-0.2..0.2));
        out.extend(check_layer("conv2d", Layer::Conv2d(c), 6 * 6 * 2, &mut rng));

        let mut l = LayerNorm::new(7);
        l.gain = ndarray::Array1::from_shape_fn(7, |_| rng.random_range(0.5..1.5));
        l.bias = ndarray::Array1::from_shape_fn(7, |_| rng.random_range(-0.4..0.4));
        out.extend(check_layer("layer_norm", Layer::LayerNorm(l), 7, &mut rng));

        out.extend(check_layer("relu", Layer::Relu, 6, &mut rng));
    }

    let obs = ObsSpace::Vector { dim: 4 };
    let act = ActionSpace::Box { dim: 2, low: -1.0, high: 1.0 };
    let arch = ArchConfig { cnn: false, mlp_width: 6, mlp_depth: 1, use_layer_norm: true };

    // composed vector encoders through the MC loss
    {
        let inst = well_conditioned_critic(&obs, &act, &arch, 5, 3, 100, false);
        let params = inst.critic.params();
        let mut analytic = vec![0.0; params.len()];
        mc_critic_grad(&inst.critic, &inst.s, &inst.a, &inst.g, &mut analytic).unwrap();
        let mut probe = inst.critic.clone();
        let numeric = central_diff(
            |p: &[f64]| {
                probe.write_params(p);
                let mut scratch = vec![0.0; p.len()];
                mc_critic_grad(&probe, &inst.s, &inst.a, &inst.g, &mut scratch)
                    .unwrap()
                    .0
            },
            &params,
            FD_STEP_COMPOSED,
        );
        out.push(GradCheck::new(
            "mc_critic_loss/params",
            max_rel_error(&analytic, &numeric),
        ));
    }

    // TD loss: gradients flow to the online critic only
    {
        let inst = well_conditioned_critic(&obs, &act, &arch, 5, 3, 200, false);
        let target = well_conditioned_critic(&obs, &act, &arch, 5, 3, 300, false).critic;
        let policy = {
            let mut rng = stream(301, 1);
            let mut p = build_policy(&obs, &act, &arch, 0.15).unwrap();
            p.init(&mut rng);
            p
        };
        let noise = TdNoise::sample(3, 2, false, &mut rng);
        let params = inst.critic.params();
        let mut analytic = vec![0.0; params.len()];
        td_critic_grad(
            &inst.critic, &target, &policy, &inst.s, &inst.a, &inst.extra, &inst.g, 0.9, 20.0,
            &noise, &mut analytic,
        )
        .unwrap();
        let mut probe = inst.critic.clone();
        let numeric = central_diff(
            |p: &[f64]| {
                probe.write_params(p);
                let mut scratch = vec![0.0; p.len()];
                td_critic_grad(
                    &probe, &target, &policy, &inst.s, &inst.a, &inst.extra, &inst.g, 0.9, 20.0,
                    &noise, &mut scratch,
                )
                .unwrap()
                .0
            },
            &params,
            FD_STEP_COMPOSED,
        );
        out.push(GradCheck::new(
            "td_critic_loss/params",
            max_rel_error(&analytic, &numeric),
        ));
    }

    // actor loss, Gaussian: sampled action perturbs phi's inputs, so phi's
    // margins must hold at the sampled action too
    {
        let mut found = false;
        for attempt in 0..MAX_INSTANCE_TRIES {
            let seed = 400 + attempt;
            let mut irng = stream(seed, 4);
            let mut critic = build_critic(&obs, &act, &arch, 5).unwrap();
            critic.phi.init(&mut irng);
            critic.psi.init(&mut irng);
            let mut policy = build_policy(&obs, &act, &arch, 0.15).unwrap();
            policy.init(&mut irng);
            let b = 3;
            let s = rand_matrix(b, 4, 1.0, &mut irng);
            let g = rand_matrix(b, 4, 1.0, &mut irng);
            let acts = rand_matrix(b, 2, 1.0, &mut irng);
            let noise = ActorNoise::sample(b, 2, &mut irng);
            let (mu, _) = policy.forward(s.clone(), g.clone());
            let a_tilde = &mu + &(&noise.eps * 0.15);
            let margin = policy
                .relu_margin(s.clone(), g.clone())
                .min(critic.phi.relu_margin(s.clone(), Some(&a_tilde)))
                .min(critic.psi.relu_margin(g.clone(), None));
            if margin <= KINK_MARGIN_COMPOSED {
                continue;
            }
            let params = policy.params();
            let mut analytic = vec![0.0; params.len()];
            actor_grad(&policy, &critic, &s, &g, &s, &g, &acts, 0.5, &noise, &mut analytic)
                .unwrap();
            let mut probe = policy.clone();
            let numeric = central_diff(
                |p: &[f64]| {
                    probe.write_params(p);
                    let mut scratch = vec![0.0; p.len()];
                    actor_grad(&probe, &critic, &s, &g, &s, &g, &acts, 0.5, &noise, &mut scratch)
                        .unwrap()
                        .0
                },
                &params,
                FD_STEP_COMPOSED,
            );
            out.push(GradCheck::new(
                "actor_loss_gaussian/params",
                max_rel_error(&analytic, &numeric),
            ));
            found = true;
            break;
        }
        assert!(found, "no well-conditioned actor instance found");
    }

    // actor loss, categorical
    {
        let obs_t = ObsSpace::TabularIndex { n: 6 };
        let act_t = ActionSpace::Discrete { n: 3 };
        let mut found = false;
        for attempt in 0..MAX_INSTANCE_TRIES {
            let seed = 500 + attempt;
            let mut irng = stream(seed, 5);
            let mut critic = build_critic(&obs_t, &act_t, &arch, 5).unwrap();
            critic.phi.init(&mut irng);
            critic.psi.init(&mut irng);
            let mut policy = build_policy(&obs_t, &act_t, &arch, 0.15).unwrap();
            policy.init(&mut irng);
            let b = 3;
            let mut s = Array2::zeros((b, 6));
            let mut g = Array2::zeros((b, 6));
            let mut acts = Array2::zeros((b, 3));
            for i in 0..b {
                s[(i, irng.random_range(0..6))] = 1.0;
                g[(i, irng.random_range(0..6))] = 1.0;
                acts[(i, irng.random_range(0..3))] = 1.0;
            }
            let mut margin = policy
                .relu_margin(s.clone(), g.clone())
                .min(critic.psi.relu_margin(g.clone(), None));
            for k in 0..3 {
                let mut a_feat = Array2::zeros((b, 3));
                a_feat.column_mut(k).fill(1.0);
                margin = margin.min(critic.phi.relu_margin(s.clone(), Some(&a_feat)));
            }
            if margin <= KINK_MARGIN_COMPOSED {
                continue;
            }
            let noise = ActorNoise::sample(b, 1, &mut irng);
            let params = policy.params();
            let mut analytic = vec![0.0; params.len()];
            actor_grad(&policy, &critic, &s, &g, &s, &g, &acts, 0.5, &noise, &mut analytic)
                .unwrap();
            let mut probe = policy.clone();
            let numeric = central_diff(
                |p: &[f64]| {
                    probe.write_params(p);
                    let mut scratch = vec![0.0; p.len()];
                    actor_grad(&probe, &critic, &s, &g, &s, &g, &acts, 0.5, &noise, &mut scratch)
                        .unwrap()
                        .0
                },
                &params,
                FD_STEP_COMPOSED,
            );
            out.push(GradCheck::new(
                "actor_loss_categorical/params",
                max_rel_error(&analytic, &numeric),
            ));
            found = true;
            break;
        }
        assert!(found, "no well-conditioned categorical actor instance found");
    }

    // composed image encoder through the MC loss, sampled parameter indices
    {
        let obs_i = ObsSpace::Image { h: 12, w: 12, c: 1 };
        let arch_i = ArchConfig { cnn: true, mlp_width: 6, mlp_depth: 1, use_layer_norm: true };
        let inst = well_conditioned_critic(&obs_i, &act, &arch_i, 4, 2, 600, true);
        let params = inst.critic.params();
        let mut analytic = vec![0.0; params.len()];
        mc_critic_grad(&inst.critic, &inst.s, &inst.a, &inst.g, &mut analytic).unwrap();
        let indices = sample_indices(params.len(), 160, &mut rng);
        let mut probe = inst.critic.clone();
        let numeric = central_diff_sampled(
            |p: &[f64]| {
                probe.write_params(p);
                let mut scratch = vec![0.0; p.len()];
                mc_critic_grad(&probe, &inst.s, &inst.a, &inst.g, &mut scratch)
                    .unwrap()
                    .0
            },
            &params,
            FD_STEP_COMPOSED,
            &indices,
        );
        let analytic_sel: Vec<f64> = indices.iter().map(|&i| analytic[i]).collect();
        out.push(GradCheck::new(
            "mc_critic_loss_cnn/params",
            max_rel_error(&analytic_sel, &numeric),
        ));
    }

    // closed-form negative-pair gradient vs the engine, bitwise
    {
        let phi = rand_matrix(2, 3, 1.0, &mut rng);
        let psi = rand_matrix(2, 3, 1.0, &mut rng);
        let logits = phi.dot(&psi.t());
        let (_, dlogits) = mc_loss_from_logits(&logits).unwrap();
        let mut exact = true;
        for (i, j) in [(0usize, 1usize), (1, 0)] {
            let closed = hard_negative_gradient(
                phi.row(i).as_slice().unwrap(),
                psi.row(j).as_slice().unwrap(),
            );
            for d in 0..3 {
                // engine holds the minimized loss; the closed form is the
                // maximized objective. B = 2 makes the normalizer exactly 2.
                let engine = dlogits[(i, j)] * phi[(i, d)] * 2.0;
                if engine != -closed[d] {
                    exact = false;
                }
            }
        }
        out.push(GradCheck {
            name: "hard_negative_closed_form/exact".into(),
            rel_err: if exact { 0.0 } else { f64::INFINITY },
            pass: exact,
        });
    }

    out
}

/// Finite differences on a sampled subset of parameter indices; used for the
/// convolutional encoders whose parameter counts make a dense sweep slow.
fn central_diff_sampled<F: FnMut(&[f64]) -> f64>(
    mut f: F,
    x: &[f64],
    h: f64,
    indices: &[usize],
) -> Vec<f64> {
    let mut probe = x.to_vec();
    let mut grad = Vec::with_capacity(indices.len());
    for &i in indices {
        let orig = probe[i];
        probe[i] = orig + h;
        let fp = f(&probe);
        probe[i] = orig - h;
        let fm = f(&probe);
        probe[i] = orig;
        grad.push((fp - fm) / (2.0 * h));
    }
    grad
}

fn sample_indices(n: usize, count: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    if n <= count {
        return (0..n).collect();
    }
    let mut picked = std::collections::BTreeSet::new();
    while picked.len() < count {
        picked.insert(rng.random_range(0..n));
    }
    picked.into_iter().collect()
}
