//! Exact and Monte-Carlo ground truth for the discounted state occupancy
//! measure, used to verify every learned critic.
//!
//! Convention: the geometric sum starts at the state one step after `(s, a)`,
//! so `gamma = 0` recovers the one-step transition distribution. This matches
//! the temporal-difference base case, which weights the immediate next state.

use crate::env::GoalProcess;
use crate::error::{Error, Result};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use std::io::Write;

/// Tabular policy: `probs[s * n_actions + a]`, each row a distribution.
#[derive(Debug, Clone)]
pub struct TabularPolicy {
    pub n_states: usize,
    pub n_actions: usize,
    pub probs: Vec<f64>,
}

impl TabularPolicy {
    pub fn uniform(n_states: usize, n_actions: usize) -> Self {
        TabularPolicy {
            n_states,
            n_actions,
            probs: vec![1.0 / n_actions as f64; n_states * n_actions],
        }
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.probs[s * self.n_actions..(s + 1) * self.n_actions]
    }

    fn validate(&self) -> Result<()> {
        for s in 0..self.n_states {
            let sum: f64 = self.row(s).iter().sum();
            if (sum - 1.0).abs() > 1e-9 || self.row(s).iter().any(|&v| v < 0.0) {
                return Err(Error::invalid(format!("policy row {s} is not a distribution")));
            }
        }
        Ok(())
    }

    fn sample(&self, s: usize, rng: &mut ChaCha8Rng) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (a, &pr) in self.row(s).iter().enumerate() {
            acc += pr;
            if u < acc {
                return a;
            }
        }
        self.n_actions - 1
    }
}

/// Exact discounted occupancy `p(s_f | s, a)` for a tabular process.
#[derive(Debug, Clone)]
pub struct OccupancyTable {
    pub gamma: f64,
    pub n_states: usize,
    pub n_actions: usize,
    /// `values[(s * n_actions + a) * n_states + s_f]`
    pub values: Vec<f64>,
}

impl OccupancyTable {
    #[inline]
    pub fn row(&self, s: usize, a: usize) -> &[f64] {
        let base = (s * self.n_actions + a) * self.n_states;
        &self.values[base..base + self.n_states]
    }

    /// CSV export: `state,action,future_state,probability`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "state,action,future_state,probability")?;
        for s in 0..self.n_states {
            for a in 0..self.n_actions {
                for (sf, &v) in self.row(s, a).iter().enumerate() {
                    writeln!(w, "{s},{a},{sf},{v}")?;
                }
            }
        }
        Ok(())
    }
}

/// Marginal distribution over future states under a dataset distribution.
#[derive(Debug, Clone)]
pub struct MarginalTable {
    pub probs: Vec<f64>,
}

impl MarginalTable {
    /// Mix occupancy rows by state-action weights: `p(s_f) = sum_sa w(s,a) p(s_f|s,a)`.
    /// Weights are normalized internally.
    pub fn from_occupancy(occ: &OccupancyTable, sa_weights: &[f64]) -> Result<Self> {
        if sa_weights.len() != occ.n_states * occ.n_actions {
            return Err(Error::invalid("weight vector has wrong length"));
        }
        let total: f64 = sa_weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::invalid("weights must have positive mass"));
        }
        let mut probs = vec![0.0; occ.n_states];
        for s in 0..occ.n_states {
            for a in 0..occ.n_actions {
                let w = sa_weights[s * occ.n_actions + a] / total;
                if w == 0.0 {
                    continue;
                }
                for (sf, &v) in occ.row(s, a).iter().enumerate() {
                    probs[sf] += w * v;
                }
            }
        }
        Ok(MarginalTable { probs })
    }
}

/// Invert a dense matrix by Gauss-Jordan elimination with partial pivoting.
/// For `gamma < 1` the resolvent `I - gamma * P_pi` is strictly diagonally
/// dominant, so this never encounters a zero pivot.
fn invert(a: &[f64], n: usize) -> Vec<f64> {
    let mut m = a.to_vec();
    let mut inv = vec![0.0; n * n];
    for i in 0..n {
        inv[i * n + i] = 1.0;
    }
    for col in 0..n {
        let mut piv = col;
        for r in (col + 1)..n {
            if m[r * n + col].abs() > m[piv * n + col].abs() {
                piv = r;
            }
        }
        if piv != col {
            for k in 0..n {
                m.swap(col * n + k, piv * n + k);
                inv.swap(col * n + k, piv * n + k);
            }
        }
        let d = m[col * n + col];
        assert!(d.abs() > 1e-300, "singular resolvent");
        for k in 0..n {
            m[col * n + k] /= d;
            inv[col * n + k] /= d;
        }
        for r in 0..n {
            if r == col {
                continue;
            }
            let f = m[r * n + col];
            if f == 0.0 {
                continue;
            }
            for k in 0..n {
                m[r * n + k] -= f * m[col * n + k];
                inv[r * n + k] -= f * inv[col * n + k];
            }
        }
    }
    inv
}

/// Exact occupancy by dynamic programming:
/// `p(.|s,a) = (1 - gamma) * P[s,a,.] * (I - gamma * P_pi)^(-1)`.
pub fn dp_occupancy(
    process: &GoalProcess,
    policy: &TabularPolicy,
    gamma: f64,
) -> Result<OccupancyTable> {
    let dyn_ = process.tabular().ok_or_else(|| {
        Error::UnsupportedOperation("dp_occupancy requires a tabular process".into())
    })?;
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::invalid("gamma must lie in [0, 1)"));
    }
    if policy.n_states != dyn_.n_states || policy.n_actions != dyn_.n_actions {
        return Err(Error::invalid("policy shape does not match process"));
    }
    policy.validate()?;
    let n = dyn_.n_states;
    // P_pi[s, s'] = sum_a pi(a|s) P[s,a,s']
    let mut p_pi = vec![0.0; n * n];
    for s in 0..n {
        for a in 0..dyn_.n_actions {
            let w = policy.row(s)[a];
            if w == 0.0 {
                continue;
            }
            for (s2, &pr) in dyn_.row(s, a).iter().enumerate() {
                p_pi[s * n + s2] += w * pr;
            }
        }
    }
    // A = I - gamma * P_pi
    let mut a_mat = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            a_mat[i * n + j] = if i == j { 1.0 } else { 0.0 } - gamma * p_pi[i * n + j];
        }
    }
    let resolvent = invert(&a_mat, n);
    let mut values = vec![0.0; n * dyn_.n_actions * n];
    for s in 0..n {
        for a in 0..dyn_.n_actions {
            let row = dyn_.row(s, a);
            let out = &mut values[(s * dyn_.n_actions + a) * n..][..n];
            for sf in 0..n {
                let mut acc = 0.0;
                for s1 in 0..n {
                    acc += row[s1] * resolvent[s1 * n + sf];
                }
                out[sf] = (1.0 - gamma) * acc;
            }
        }
    }
    Ok(OccupancyTable {
        gamma,
        n_states: n,
        n_actions: dyn_.n_actions,
        values,
    })
}

/// Draw `k ~ Geometric(1 - gamma)` with support `{1, 2, ...}`.
pub fn sample_geometric(gamma: f64, rng: &mut ChaCha8Rng) -> usize {
    if gamma <= 0.0 {
        return 1;
    }
    let u: f64 = rng.random();
    // P(k = j) = (1 - gamma) gamma^(j-1)  <=>  k = ceil(ln u / ln gamma)
    let k = (u.ln() / gamma.ln()).ceil();
    (k as usize).max(1)
}

/// Monte-Carlo occupancy estimate: for each `(s, a)` draw
/// `k ~ Geometric(1 - gamma)` and roll the policy out `k` steps.
pub fn mc_occupancy(
    process: &GoalProcess,
    policy: &TabularPolicy,
    gamma: f64,
    num_samples: usize,
    seed: u64,
) -> Result<OccupancyTable> {
    let dyn_ = process.tabular().ok_or_else(|| {
        Error::UnsupportedOperation("mc_occupancy requires a tabular process".into())
    })?;
    if num_samples == 0 {
        return Err(Error::invalid("num_samples must be at least 1"));
    }
    policy.validate()?;
    let n = dyn_.n_states;
    let mut values = vec![0.0; n * dyn_.n_actions * n];
    let mut rng = crate::rng::stream(seed, crate::rng::STREAM_ORACLE);
    for s in 0..n {
        for a in 0..dyn_.n_actions {
            let out = &mut values[(s * dyn_.n_actions + a) * n..][..n];
            for _ in 0..num_samples {
                let k = sample_geometric(gamma, &mut rng);
                let mut cur = sample_categorical(dyn_.row(s, a), &mut rng);
                for _ in 1..k {
                    let act = policy.sample(cur, &mut rng);
                    cur = sample_categorical(dyn_.row(cur, act), &mut rng);
                }
                out[cur] += 1.0;
            }
            for v in out.iter_mut() {
                *v /= num_samples as f64;
            }
        }
    }
    Ok(OccupancyTable {
        gamma,
        n_states: n,
        n_actions: dyn_.n_actions,
        values,
    })
}

fn sample_categorical(row: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &pr) in row.iter().enumerate() {
        acc += pr;
        if u < acc {
            return i;
        }
    }
    row.len() - 1
}

/// Sigmoid-odds of a critic logit: `sigma(f) / (1 - sigma(f)) = exp(f)`.
/// At the Bayes-optimal critic this equals the occupancy-to-marginal ratio.
pub fn critic_to_occupancy_ratio(logit: f64) -> f64 {
    logit.exp()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{make_gridworld, GoalProcess};
    use proptest::prelude::*;

    /// 2-state process where every action from A (state 0) and B (state 1)
    /// lands in absorbing B.
    fn absorbing() -> GoalProcess {
        let p = vec![
            0.0, 1.0, // s=0, a=0
            0.0, 1.0, // s=1, a=0
        ];
        GoalProcess::from_transition_matrix(2, 1, p, 50, "absorbing").unwrap()
    }

    /// Deterministic 3-cycle 0 -> 1 -> 2 -> 0 with a single action.
    fn cycle3() -> GoalProcess {
        let p = vec![
            0.0, 1.0, 0.0, //
            0.0, 0.0, 1.0, //
            1.0, 0.0, 0.0,
        ];
        GoalProcess::from_transition_matrix(3, 1, p, 50, "cycle3").unwrap()
    }

    #[test]
    fn absorbing_state_has_unit_occupancy() {
        let p = absorbing();
        let occ = dp_occupancy(&p, &TabularPolicy::uniform(2, 1), 0.9).unwrap();
        assert!((occ.row(0, 0)[1] - 1.0).abs() < 1e-12);
        assert!((occ.row(1, 0)[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cycle_matches_geometric_closed_form() {
        // From state 0 with gamma = 1/2 the mass on the state k steps ahead is
        // (1 - gamma) gamma^(k-1) / (1 - gamma^3): 4/7, 2/7, 1/7.
        let occ = dp_occupancy(&cycle3(), &TabularPolicy::uniform(3, 1), 0.5).unwrap();
        let row = occ.row(0, 0);
        assert!((row[1] - 4.0 / 7.0).abs() < 1e-12, "p(1) = {}", row[1]);
        assert!((row[2] - 2.0 / 7.0).abs() < 1e-12, "p(2) = {}", row[2]);
        assert!((row[0] - 1.0 / 7.0).abs() < 1e-12, "p(0) = {}", row[0]);
    }

    #[test]
    fn gamma_zero_recovers_one_step_transitions() {
        let p = make_gridworld(3, 3, 0.25).unwrap();
        let dyn_ = p.tabular().unwrap();
        let occ = dp_occupancy(&p, &TabularPolicy::uniform(9, 5), 0.0).unwrap();
        for s in 0..9 {
            for a in 0..5 {
                for sf in 0..9 {
                    assert!((occ.row(s, a)[sf] - dyn_.row(s, a)[sf]).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn rows_are_distributions() {
        let p = make_gridworld(4, 3, 0.3).unwrap();
        let occ = dp_occupancy(&p, &TabularPolicy::uniform(12, 5), 0.97).unwrap();
        for s in 0..12 {
            for a in 0..5 {
                let sum: f64 = occ.row(s, a).iter().sum();
                assert!((sum - 1.0).abs() < 1e-9);
                assert!(occ.row(s, a).iter().all(|&v| v >= -1e-15));
            }
        }
    }

    #[test]
    fn resolvent_identity_holds() {
        // p(.|s,a) = (1-gamma) P[s,a,.] + gamma * sum_s1 P[s,a,s1] occ_pi(.|s1)
        // where occ_pi(.|s1) = sum_a pi(a|s1) p(.|s1,a).
        let p = make_gridworld(3, 3, 0.2).unwrap();
        let pol = TabularPolicy::uniform(9, 5);
        let gamma = 0.9;
        let occ = dp_occupancy(&p, &pol, gamma).unwrap();
        let dyn_ = p.tabular().unwrap();
        let occ_pi = |s1: usize, sf: usize| -> f64 {
            (0..5).map(|a| pol.row(s1)[a] * occ.row(s1, a)[sf]).sum()
        };
        for s in 0..9 {
            for a in 0..5 {
                for sf in 0..9 {
                    let direct = occ.row(s, a)[sf];
                    let mut recur = (1.0 - gamma) * dyn_.row(s, a)[sf];
                    for s1 in 0..9 {
                        recur += gamma * dyn_.row(s, a)[s1] * occ_pi(s1, sf);
                    }
                    assert!(
                        (direct - recur).abs() < 1e-9,
                        "({s},{a},{sf}): {direct} vs {recur}"
                    );
                }
            }
        }
    }

    #[test]
    fn mc_agrees_with_dp() {
        let p = cycle3();
        let pol = TabularPolicy::uniform(3, 1);
        let dp = dp_occupancy(&p, &pol, 0.5).unwrap();
        let mc = mc_occupancy(&p, &pol, 0.5, 200_000, 11).unwrap();
        for s in 0..3 {
            for sf in 0..3 {
                assert!(
                    (dp.row(s, 0)[sf] - mc.row(s, 0)[sf]).abs() < 0.01,
                    "({s},{sf}): dp {} mc {}",
                    dp.row(s, 0)[sf],
                    mc.row(s, 0)[sf]
                );
            }
        }
    }

    #[test]
    fn mc_absorbing_is_exact() {
        let mc = mc_occupancy(&absorbing(), &TabularPolicy::uniform(2, 1), 0.7, 500, 3).unwrap();
        assert_eq!(mc.row(0, 0)[1], 1.0);
    }

    #[test]
    fn geometric_degenerates_at_gamma_zero() {
        let mut rng = crate::rng::stream(5, 0);
        for _ in 0..1000 {
            assert_eq!(sample_geometric(0.0, &mut rng), 1);
        }
    }

    #[test]
    fn geometric_histogram_matches_pmf() {
        // 100k draws vs the exact pmf within 3 binomial sigmas per bin.
        let gamma = 0.9f64;
        let n = 100_000usize;
        let mut rng = crate::rng::stream(17, 0);
        let kmax = 60;
        let mut counts = vec![0usize; kmax + 2];
        for _ in 0..n {
            let k = sample_geometric(gamma, &mut rng);
            counts[k.min(kmax + 1)] += 1;
        }
        for k in 1..=kmax {
            let pk = (1.0 - gamma) * gamma.powi(k as i32 - 1);
            let sigma = (pk * (1.0 - pk) * n as f64).sqrt();
            assert!(
                (counts[k] as f64 - pk * n as f64).abs() <= 3.0 * sigma + 1.0,
                "k={k}: {} vs {}",
                counts[k],
                pk * n as f64
            );
        }
        // pooled tail
        let tail = gamma.powi(kmax as i32);
        let sigma = (tail * (1.0 - tail) * n as f64).sqrt();
        assert!((counts[kmax + 1] as f64 - tail * n as f64).abs() <= 3.0 * sigma + 1.0);
    }

    #[test]
    fn ratio_examples() {
        assert_eq!(critic_to_occupancy_ratio(0.0), 1.0);
        assert!((critic_to_occupancy_ratio(2.0f64.ln()) - 2.0).abs() < 1e-15);
        assert!((critic_to_occupancy_ratio(-4.0f64.ln()) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn marginal_mixes_and_normalizes() {
        let p = cycle3();
        let occ = dp_occupancy(&p, &TabularPolicy::uniform(3, 1), 0.5).unwrap();
        let m = MarginalTable::from_occupancy(&occ, &[1.0, 1.0, 2.0]).unwrap();
        let sum: f64 = m.probs.iter().sum();
        assert!((sum - 1.0).abs() < 1e-9);
    }

    #[test]
    fn dp_rejects_non_tabular() {
        let p = crate::env::make_pointmass(2, 0.1, 0.0).unwrap();
        assert!(matches!(
            dp_occupancy(&p, &TabularPolicy::uniform(1, 1), 0.9),
            Err(crate::error::Error::UnsupportedOperation(_))
        ));
    }

    #[test]
    fn csv_export_shape() {
        let occ = dp_occupancy(&cycle3(), &TabularPolicy::uniform(3, 1), 0.5).unwrap();
        let mut buf = Vec::new();
        occ.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1 + 3 * 1 * 3);
        assert!(text.starts_with("state,action,future_state,probability"));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        /// sigma-odds identity: ratio(f) * sigma(-f) = sigma(f).
        #[test]
        fn ratio_sigma_identity(f in -30.0f64..30.0) {
            let sig = |x: f64| 1.0 / (1.0 + (-x).exp());
            let lhs = critic_to_occupancy_ratio(f) * sig(-f);
            prop_assert!((lhs - sig(f)).abs() < 1e-12);
        }

        /// Geometric samples always lie in the support {1, 2, ...}.
        #[test]
        fn geometric_support(gamma in 0.0f64..0.999, seed in 0u64..1000) {
            let mut rng = crate::rng::stream(seed, 0);
            let k = sample_geometric(gamma, &mut rng);
            prop_assert!(k >= 1);
        }
    }
}
