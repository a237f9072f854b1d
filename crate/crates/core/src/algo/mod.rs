//! Training objectives: the Monte-Carlo binary contrastive critic loss over
//! in-batch cross pairs, its temporal-difference variant with a stop-gradient
//! importance weight, and the behavioral-cloning-regularized actor loss.
//!
//! Objectives are stated as maximizations; everything here returns the
//! negated quantity to be minimized. Gradients are exact and are checked
//! against central finite differences in the test suite and the `gradcheck`
//! command.

pub mod gradcheck;

use crate::error::{Error, Result};
use crate::nn::{CriticPair, PolicyKind, PolicyNet};
use ndarray::{Array1, Array2};

/// Numerically stable sigmoid.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow.
#[inline]
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// `log sigma(x) = -softplus(-x)`.
#[inline]
pub fn log_sigmoid(x: f64) -> f64 {
    -softplus(-x)
}

/// Per-step scalars emitted by one training step.
#[derive(Debug, Clone, Default)]
pub struct LossReport {
    pub step: usize,
    pub critic_loss: f64,
    pub actor_loss: f64,
    pub bc_loss: f64,
    pub critic_term_of_actor: f64,
    pub binary_accuracy: f64,
    pub pos_logit_mean: f64,
    pub neg_logit_mean: f64,
    pub wall_ms: f64,
}

/// Logit matrix `L[i, j] = phi(s_i, a_i)^T psi(g_j)`: the diagonal holds the
/// positive logits, everything off-diagonal the negatives.
pub fn critic_logits(
    critic: &CriticPair,
    s: &Array2<f64>,
    a: &Array2<f64>,
    g: &Array2<f64>,
) -> Result<Array2<f64>> {
    if s.nrows() != a.nrows() || s.nrows() != g.nrows() {
        return Err(Error::invalid("batch arrays disagree on length"));
    }
    let (phi_out, _) = critic.phi.forward(s.clone(), Some(a));
    let (psi_out, _) = critic.psi.forward(g.clone(), None);
    Ok(phi_out.dot(&psi_out.t()))
}

/// Classification stats over a logit matrix: a pair counts positive iff
/// `sigma(f) > 0.5`, i.e. `f > 0`; ties classify negative.
pub fn logit_stats(logits: &Array2<f64>) -> (f64, f64, f64) {
    let b = logits.nrows();
    let mut correct = 0usize;
    let mut pos_sum = 0.0;
    let mut neg_sum = 0.0;
    for i in 0..b {
        for j in 0..b {
            let l = logits[(i, j)];
            if i == j {
                pos_sum += l;
                if l > 0.0 {
                    correct += 1;
                }
            } else {
                neg_sum += l;
                if l <= 0.0 {
                    correct += 1;
                }
            }
        }
    }
    let accuracy = correct as f64 / (b * b) as f64;
    let pos_mean = pos_sum / b as f64;
    let neg_mean = if b > 1 {
        neg_sum / (b * b - b) as f64
    } else {
        0.0
    };
    (accuracy, pos_mean, neg_mean)
}

/// Monte-Carlo binary contrastive loss over a `B x B` logit matrix:
/// `-(mean_i log sigma(L_ii) + mean_{i!=j} log(1 - sigma(L_ij)))`.
/// Returns the loss and its gradient w.r.t. the logits.
pub fn mc_loss_from_logits(logits: &Array2<f64>) -> Result<(f64, Array2<f64>)> {
    let b = logits.nrows();
    if b < 2 || logits.ncols() != b {
        return Err(Error::invalid("mc loss needs a square matrix with B >= 2"));
    }
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(Error::TrainingDivergence {
            step: 0,
            what: "non-finite critic logits".into(),
        });
    }
    let npos = b as f64;
    let nneg = (b * b - b) as f64;
    let mut loss = 0.0;
    let mut grad = Array2::zeros((b, b));
    for i in 0..b {
        for j in 0..b {
            let l = logits[(i, j)];
            if i == j {
                loss -= log_sigmoid(l) / npos;
                grad[(i, j)] = -(1.0 - sigmoid(l)) / npos;
            } else {
                loss -= (-softplus(l)) / nneg;
                grad[(i, j)] = sigmoid(l) / nneg;
            }
        }
    }
    Ok((loss, grad))
}

/// Full Monte-Carlo critic step: forward both encoders, compute the loss,
/// and accumulate parameter gradients into `grads` (critic layout).
pub fn mc_critic_grad(
    critic: &CriticPair,
    s: &Array2<f64>,
    a: &Array2<f64>,
    g: &Array2<f64>,
    grads: &mut [f64],
) -> Result<(f64, f64, f64, f64)> {
    let (phi_out, phi_cache) = critic.phi.forward(s.clone(), Some(a));
    let (psi_out, psi_cache) = critic.psi.forward(g.clone(), None);
    let logits = phi_out.dot(&psi_out.t());
    let (loss, dlogits) = mc_loss_from_logits(&logits)?;
    let (acc, pos, neg) = logit_stats(&logits);
    let dphi = dlogits.dot(&psi_out);
    let dpsi = dlogits.t().dot(&phi_out);
    let (gphi, gpsi) = critic.split_grads(grads);
    critic.phi.backward(&phi_cache, dphi, gphi);
    critic.psi.backward(&psi_cache, dpsi, gpsi);
    Ok((loss, acc, pos, neg))
}

/// Fixed stochasticity for one TD step, drawn up front so the loss is a
/// deterministic function of the parameters (as finite differences require).
#[derive(Debug, Clone)]
pub struct TdNoise {
    /// Row -> goal column assignment (a permutation keeps the marginal).
    pub perm: Vec<usize>,
    /// Per-row uniform draws (categorical) or standard normals (Gaussian)
    /// used to sample `a' ~ pi(.|s', g)`.
    pub draws: Array2<f64>,
}

impl TdNoise {
    pub fn sample(
        batch: usize,
        action_dim: usize,
        discrete: bool,
        rng: &mut rand_chacha::ChaCha8Rng,
    ) -> Self {
        use rand::Rng;
        let mut perm: Vec<usize> = (0..batch).collect();
        for i in (1..batch).rev() {
            let j = rng.random_range(0..=i);
            perm.swap(i, j);
        }
        let cols = if discrete { 1 } else { action_dim };
        let mut draws = Array2::zeros((batch, cols));
        for v in draws.iter_mut() {
            *v = if discrete {
                rng.random::<f64>()
            } else {
                rand_distr::Distribution::sample(&rand_distr::StandardNormal, rng)
            };
        }
        TdNoise { perm, draws }
    }
}

fn softmax_rows(logits: &Array2<f64>) -> Array2<f64> {
    let mut out = logits.clone();
    for mut row in out.rows_mut() {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    out
}

/// Sample actions from distribution parameters with fixed noise; returns
/// feature rows (one-hot or raw continuous).
fn sample_actions_fixed(
    kind: &PolicyKind,
    params: &Array2<f64>,
    draws: &Array2<f64>,
) -> Array2<f64> {
    match *kind {
        PolicyKind::Categorical { n } => {
            let probs = softmax_rows(params);
            let mut feats = Array2::zeros((params.nrows(), n));
            for i in 0..params.nrows() {
                let u = draws[(i, 0)];
                let mut acc = 0.0;
                let mut chosen = n - 1;
                for k in 0..n {
                    acc += probs[(i, k)];
                    if u < acc {
                        chosen = k;
                        break;
                    }
                }
                feats[(i, chosen)] = 1.0;
            }
            feats
        }
        PolicyKind::Gaussian { std, .. } => params + &(draws * std),
    }
}

/// Temporal-difference critic loss over rows `(s, a, s', g)`:
///
/// `-(1/B) sum_i [(1-gamma) log sigma(f(s,a,s')) + log(1-sigma(f(s,a,g)))
///                + gamma * w * log sigma(f(s,a,g))]`
///
/// with `w = clip(exp(f_target(s', a', g)), 0, weight_clip)` evaluated under
/// a stop-gradient (`target` receives no gradient) and `a' ~ policy(s', g)`.
#[allow(clippy::too_many_arguments)]
pub fn td_critic_grad(
    critic: &CriticPair,
    target: &CriticPair,
    policy: &PolicyNet,
    s: &Array2<f64>,
    a: &Array2<f64>,
    next_s: &Array2<f64>,
    goals: &Array2<f64>,
    gamma: f64,
    weight_clip: f64,
    noise: &TdNoise,
    grads: &mut [f64],
) -> Result<(f64, f64, f64, f64)> {
    let b = s.nrows();
    if noise.perm.len() != b {
        return Err(Error::invalid("noise permutation length mismatch"));
    }
    // permuted goals: row i classifies against g_{perm(i)}
    let mut g_perm = Array2::zeros((b, goals.ncols()));
    for i in 0..b {
        g_perm.row_mut(i).assign(&goals.row(noise.perm[i]));
    }

    // a' ~ pi(.|s', g_perm) and w = clip(exp(f_target), 0, clip); no gradients
    let (dist_params, _) = policy.forward(next_s.clone(), g_perm.clone());
    let a_next = sample_actions_fixed(&policy.kind, &dist_params, &noise.draws);
    let (phi_t, _) = target.phi.forward(next_s.clone(), Some(&a_next));
    let (psi_t, _) = target.psi.forward(g_perm.clone(), None);
    let mut w = Array1::zeros(b);
    for i in 0..b {
        let f_tgt = phi_t.row(i).dot(&psi_t.row(i));
        let wi = f_tgt.exp();
        if !wi.is_finite() {
            return Err(Error::TrainingDivergence {
                step: 0,
                what: "non-finite TD importance weight".into(),
            });
        }
        w[i] = wi.clamp(0.0, weight_clip);
    }

    // online forwards
    let (phi_out, phi_cache) = critic.phi.forward(s.clone(), Some(a));
    let (psi_next, psi_next_cache) = critic.psi.forward(next_s.clone(), None);
    let (psi_goal, psi_goal_cache) = critic.psi.forward(g_perm, None);

    let bf = b as f64;
    let mut loss = 0.0;
    let mut dphi = Array2::zeros(phi_out.raw_dim());
    let mut dpsi_next = Array2::zeros(psi_next.raw_dim());
    let mut dpsi_goal = Array2::zeros(psi_goal.raw_dim());
    let mut f1_sum = 0.0;
    let mut f2_sum = 0.0;
    let mut correct = 0usize;
    for i in 0..b {
        let f1 = phi_out.row(i).dot(&psi_next.row(i));
        let f2 = phi_out.row(i).dot(&psi_goal.row(i));
        if !f1.is_finite() || !f2.is_finite() {
            return Err(Error::TrainingDivergence {
                step: 0,
                what: "non-finite critic logits".into(),
            });
        }
        f1_sum += f1;
        f2_sum += f2;
        if f1 > 0.0 {
            correct += 1;
        }
        if f2 <= 0.0 {
            correct += 1;
        }
        loss -= ((1.0 - gamma) * log_sigmoid(f1) - softplus(f2)
            + gamma * w[i] * log_sigmoid(f2))
            / bf;
        let df1 = -(1.0 - gamma) * (1.0 - sigmoid(f1)) / bf;
        let df2 = (sigmoid(f2) - gamma * w[i] * (1.0 - sigmoid(f2))) / bf;
        for d in 0..phi_out.ncols() {
            dphi[(i, d)] += df1 * psi_next[(i, d)] + df2 * psi_goal[(i, d)];
            dpsi_next[(i, d)] += df1 * phi_out[(i, d)];
            dpsi_goal[(i, d)] += df2 * phi_out[(i, d)];
        }
    }
    let (gphi, gpsi) = critic.split_grads(grads);
    critic.phi.backward(&phi_cache, dphi, gphi);
    critic.psi.backward(&psi_next_cache, dpsi_next, gpsi);
    critic.psi.backward(&psi_goal_cache, dpsi_goal, gpsi);
    let acc = correct as f64 / (2 * b) as f64;
    Ok((loss, acc, f1_sum / bf, f2_sum / bf))
}

/// Fixed noise for the actor's reparameterized action sample.
#[derive(Debug, Clone)]
pub struct ActorNoise {
    /// Standard normals `[B, action_dim]`; unused for categorical policies.
    pub eps: Array2<f64>,
}

impl ActorNoise {
    pub fn sample(batch: usize, action_dim: usize, rng: &mut rand_chacha::ChaCha8Rng) -> Self {
        let mut eps = Array2::zeros((batch, action_dim.max(1)));
        for v in eps.iter_mut() {
            *v = rand_distr::Distribution::sample(&rand_distr::StandardNormal, rng);
        }
        ActorNoise { eps }
    }
}

const LOG_PROB_FLOOR: f64 = -30.0;

/// Behavioral-cloning-regularized actor loss:
/// `-(1/B) sum_i [(1-lambda) f(s, a~, g) + lambda log pi(a_orig | s_bc, g_bc)]`
/// where `a~` is a reparameterized sample (continuous) or the exact
/// expectation over actions (discrete). Critic parameters receive no
/// gradient; the BC term sees the (possibly augmented) `s_bc, g_bc` inputs.
#[allow(clippy::too_many_arguments)]
pub fn actor_grad(
    policy: &PolicyNet,
    critic: &CriticPair,
    s: &Array2<f64>,
    g: &Array2<f64>,
    s_bc: &Array2<f64>,
    g_bc: &Array2<f64>,
    actions: &Array2<f64>,
    lambda: f64,
    noise: &ActorNoise,
    grads: &mut [f64],
) -> Result<(f64, f64, f64)> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::invalid("lambda must lie in [0, 1]"));
    }
    let b = s.nrows();
    let bf = b as f64;

    // critic term with a sampled/expected action
    let (dist_params, cache_act) = policy.forward(s.clone(), g.clone());
    let mut critic_term = 0.0;
    let mut dparams_critic: Array2<f64> = Array2::zeros(dist_params.raw_dim());
    let mut critic_scratch = vec![0.0; critic.param_count()];
    match policy.kind {
        PolicyKind::Gaussian { std, .. } => {
            let a_tilde = &dist_params + &(&noise.eps * std);
            let (phi_out, phi_cache) = critic.phi.forward(s.clone(), Some(&a_tilde));
            let (psi_out, _) = critic.psi.forward(g.clone(), None);
            for i in 0..b {
                critic_term += phi_out.row(i).dot(&psi_out.row(i)) / bf;
            }
            // d(-loss critic term)/d phi_out = -(1-lambda)/B * psi_out
            let dphi = psi_out.mapv(|v| v) * (-(1.0 - lambda) / bf);
            let (gphi, _) = critic.split_grads(&mut critic_scratch);
            let daux = critic.phi.backward(&phi_cache, dphi, gphi);
            // reparameterization: da~/dmu = I
            dparams_critic += &daux;
        }
        PolicyKind::Categorical { n } => {
            // exact expectation: tile the batch once per action
            let probs = softmax_rows(&dist_params);
            let mut f_all = Array2::zeros((b, n));
            let (psi_out, _) = critic.psi.forward(g.clone(), None);
            for k in 0..n {
                let mut a_feat = Array2::zeros((b, n));
                a_feat.column_mut(k).fill(1.0);
                let (phi_out, _) = critic.phi.forward(s.clone(), Some(&a_feat));
                for i in 0..b {
                    f_all[(i, k)] = phi_out.row(i).dot(&psi_out.row(i));
                }
            }
            for i in 0..b {
                let ev: f64 = (0..n).map(|k| probs[(i, k)] * f_all[(i, k)]).sum();
                critic_term += ev / bf;
                for k in 0..n {
                    dparams_critic[(i, k)] =
                        -(1.0 - lambda) / bf * probs[(i, k)] * (f_all[(i, k)] - ev);
                }
            }
        }
    }
    policy.backward(&cache_act, dparams_critic, grads);

    // behavioral-cloning term on (possibly augmented) inputs
    let (bc_params, cache_bc) = policy.forward(s_bc.clone(), g_bc.clone());
    let mut bc_logp = 0.0;
    let mut dparams_bc: Array2<f64> = Array2::zeros(bc_params.raw_dim());
    match policy.kind {
        PolicyKind::Gaussian { std, dim } => {
            let const_term = -(std.ln()) - 0.5 * (2.0 * std::f64::consts::PI).ln();
            for i in 0..b {
                for d in 0..dim {
                    let diff = actions[(i, d)] - bc_params[(i, d)];
                    bc_logp += (const_term - 0.5 * (diff / std).powi(2)) / bf;
                    dparams_bc[(i, d)] = -lambda / bf * diff / (std * std);
                }
            }
        }
        PolicyKind::Categorical { n } => {
            let probs = softmax_rows(&bc_params);
            for i in 0..b {
                let k = (0..n)
                    .find(|&k| actions[(i, k)] == 1.0)
                    .ok_or_else(|| Error::invalid("action row is not one-hot"))?;
                let max = bc_params.row(i).iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let lse = bc_params
                    .row(i)
                    .iter()
                    .map(|v| (v - max).exp())
                    .sum::<f64>()
                    .ln()
                    + max;
                let logp = bc_params[(i, k)] - lse;
                if logp <= LOG_PROB_FLOOR {
                    bc_logp += LOG_PROB_FLOOR / bf; // clamped: no gradient
                } else {
                    bc_logp += logp / bf;
                    for j in 0..n {
                        let onehot = if j == k { 1.0 } else { 0.0 };
                        dparams_bc[(i, j)] = -lambda / bf * (onehot - probs[(i, j)]);
                    }
                }
            }
        }
    }
    policy.backward(&cache_bc, dparams_bc, grads);

    let loss = -((1.0 - lambda) * critic_term + lambda * bc_logp);
    Ok((loss, -bc_logp, critic_term))
}

/// Closed form of the negative-pair gradient w.r.t. the goal representation:
/// `d/d psi log(1 - sigma(phi^T psi)) = -sigma(phi^T psi) * phi`. Misclassified
/// negatives (large logits) receive the largest push.
pub fn hard_negative_gradient(phi_out: &[f64], psi_neg_out: &[f64]) -> Vec<f64> {
    assert_eq!(phi_out.len(), psi_neg_out.len());
    let logit: f64 = phi_out
        .iter()
        .zip(psi_neg_out.iter())
        .map(|(a, b)| a * b)
        .sum();
    let s = sigmoid(logit);
    phi_out.iter().map(|&v| -s * v).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{ActionSpace, ObsSpace};
    use crate::nn::{build_critic, build_policy, ArchConfig};
    use crate::rng::stream;
    use ndarray::array;
    use rand::Rng;

    #[test]
    fn mc_loss_all_zero_logits() {
        let logits = Array2::zeros((4, 4));
        let (loss, _) = mc_loss_from_logits(&logits).unwrap();
        assert!((loss - 2.0 * std::f64::consts::LN_2).abs() < 1e-12, "{loss}");
    }

    #[test]
    fn mc_loss_perfect_separation_tends_to_zero() {
        let b = 3;
        let mut logits = Array2::from_elem((b, b), -40.0);
        for i in 0..b {
            logits[(i, i)] = 40.0;
        }
        let (loss, _) = mc_loss_from_logits(&logits).unwrap();
        assert!(loss < 1e-12, "{loss}");
    }

    #[test]
    fn mc_loss_rejects_bad_input() {
        assert!(mc_loss_from_logits(&Array2::zeros((1, 1))).is_err());
        let mut l = Array2::zeros((2, 2));
        l[(0, 0)] = f64::NAN;
        assert!(matches!(
            mc_loss_from_logits(&l),
            Err(Error::TrainingDivergence { .. })
        ));
    }

    #[test]
    fn logits_outer_product_example() {
        // d = 1, phi outputs (1, 2), psi outputs (3, 4) -> [[3,4],[6,8]]
        let phi = array![[1.0], [2.0]];
        let psi = array![[3.0], [4.0]];
        let l = phi.dot(&psi.t());
        assert_eq!(l, array![[3.0, 4.0], [6.0, 8.0]]);
    }

    #[test]
    fn binary_accuracy_tie_break() {
        // f == 0 classifies every pair negative: accuracy (B^2 - B)/B^2
        let logits = Array2::zeros((8, 8));
        let (acc, _, _) = logit_stats(&logits);
        assert!((acc - (64.0 - 8.0) / 64.0).abs() < 1e-12);
    }

    #[test]
    fn td_loss_zero_critic_frozen_weights() {
        // f == 0 everywhere, gamma = 0.99: per-row loss is
        // -[(0.01)(-ln2) + (-ln2) + 0.99 * 1 * (-ln2)] = 2 ln 2.
        let obs = ObsSpace::TabularIndex { n: 3 };
        let act = ActionSpace::Discrete { n: 2 };
        let arch = ArchConfig { cnn: false, mlp_width: 8, mlp_depth: 1, use_layer_norm: true };
        let critic = build_critic(&obs, &act, &arch, 4).unwrap(); // zero params -> f == 0
        let policy = build_policy(&obs, &act, &arch, 0.15).unwrap();
        let b = 5;
        let s = Array2::zeros((b, 3));
        let a = Array2::zeros((b, 2));
        let mut rng = stream(3, 0);
        let noise = TdNoise::sample(b, 2, true, &mut rng);
        let mut grads = vec![0.0; critic.param_count()];
        let (loss, _, _, _) = td_critic_grad(
            &critic, &critic, &policy, &s, &a, &s, &s, 0.99, 20.0, &noise, &mut grads,
        )
        .unwrap();
        assert!((loss - 2.0 * std::f64::consts::LN_2).abs() < 1e-12, "{loss}");
    }

    #[test]
    fn hard_negative_examples() {
        assert_eq!(hard_negative_gradient(&[0.0, 0.0], &[1.0, 2.0]), vec![0.0, 0.0]);
        let g = hard_negative_gradient(&[1.0], &[1.0]);
        assert!((g[0] + sigmoid(1.0)).abs() < 1e-15);
        // magnitude is monotone in the logit
        let norms: Vec<f64> = [-2.0, 0.0, 2.0, 5.0]
            .iter()
            .map(|&l| hard_negative_gradient(&[1.0], &[l])[0].abs())
            .collect();
        assert!(norms.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn hard_negative_matches_engine_bitwise() {
        // With B = 2 the off-diagonal normalizer is exactly 2, so scaling the
        // engine's gradient back is exact in floating point.
        let phi = array![[0.3, -1.2, 0.7], [1.1, 0.4, -0.5]];
        let psi = array![[0.9, 0.2, -0.3], [-0.6, 1.5, 0.8]];
        let logits = phi.dot(&psi.t());
        let (_, dlogits) = mc_loss_from_logits(&logits).unwrap();
        // engine gradient of the minimized loss w.r.t. psi_1 from pair (0,1):
        // dL/dl_01 * phi_0 with dL/dl_01 = sigma(l_01)/2
        let engine: Vec<f64> = (0..3).map(|d| dlogits[(0, 1)] * phi[(0, d)] * 2.0).collect();
        let closed = hard_negative_gradient(
            phi.row(0).as_slice().unwrap(),
            psi.row(1).as_slice().unwrap(),
        );
        // maximized objective vs minimized loss: signs flip exactly
        for d in 0..3 {
            assert_eq!(engine[d], -closed[d], "component {d}");
        }
    }

    #[test]
    fn lambda_extremes_zero_out_terms() {
        let obs = ObsSpace::Vector { dim: 2 };
        let act = ActionSpace::Box { dim: 2, low: -1.0, high: 1.0 };
        let arch = ArchConfig { cnn: false, mlp_width: 8, mlp_depth: 1, use_layer_norm: true };
        let mut rng = stream(7, 0);
        let mut critic = build_critic(&obs, &act, &arch, 4).unwrap();
        critic.phi.init(&mut rng);
        critic.psi.init(&mut rng);
        let mut policy = build_policy(&obs, &act, &arch, 0.15).unwrap();
        policy.init(&mut rng);
        let b = 4;
        let s = Array2::from_shape_fn((b, 2), |_| rng.random_range(0.0..1.0));
        let g = Array2::from_shape_fn((b, 2), |_| rng.random_range(0.0..1.0));
        let a = Array2::from_shape_fn((b, 2), |_| rng.random_range(-1.0..1.0));
        let noise = ActorNoise::sample(b, 2, &mut rng);

        // lambda = 1: pure BC; loss must equal bc_loss
        let mut g1 = vec![0.0; policy.param_count()];
        let (loss1, bc1, _) =
            actor_grad(&policy, &critic, &s, &g, &s, &g, &a, 1.0, &noise, &mut g1).unwrap();
        assert!((loss1 - bc1).abs() < 1e-12);

        // lambda = 0: pure critic maximization; loss = -critic_term
        let mut g0 = vec![0.0; policy.param_count()];
        let (loss0, _, ct0) =
            actor_grad(&policy, &critic, &s, &g, &s, &g, &a, 0.0, &noise, &mut g0).unwrap();
        assert!((loss0 + ct0).abs() < 1e-12);
    }
}
