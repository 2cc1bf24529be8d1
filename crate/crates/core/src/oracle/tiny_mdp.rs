//! A 2-state, 2-action, horizon-2 decision process small enough to enumerate.
//!
//! Observations are one-hot over `(t, s)`, so a feed-forward network with no
//! hidden layers is exactly a tabular softmax policy (or tabular value).

use rand::Rng;

use crate::episodes::{Episode, RatioClamp, Step};
use crate::error::Result;
use crate::learners::{policy_gradient_with_baseline, update_m1, update_value_offpolicy};
use crate::nets::{Architecture, Network, PolicyNetwork, ValueNetwork};
use crate::nn::ops::Activation;
use crate::nn::params::GradientSet;

pub const HORIZON: usize = 2;
pub const OBS_DIM: usize = 2 * HORIZON;

#[derive(Clone, Debug, PartialEq)]
pub struct TinyMdp {
    pub initial: [f64; 2],
    /// `next_zero[s][a]`: probability the next state is 0.
    pub next_zero: [[f64; 2]; 2],
    pub reward: [[f64; 2]; 2],
}

impl Default for TinyMdp {
    fn default() -> Self {
        TinyMdp {
            initial: [0.6, 0.4],
            next_zero: [[0.7, 0.2], [0.5, 0.9]],
            reward: [[1.0, 2.0], [0.5, 3.0]],
        }
    }
}

pub fn observation(t: usize, s: usize) -> Vec<f64> {
    let mut o = vec![0.0; OBS_DIM];
    o[2 * t + s] = 1.0;
    o
}

/// Tabular softmax policy: logits for `(t, s)` are `table[t][s]`.
pub fn tabular_policy(table: [[[f64; 2]; 2]; HORIZON]) -> PolicyNetwork {
    let mut net = Network::zeros(Architecture::feed_forward(OBS_DIM, vec![], Activation::Linear, 2));
    let w = net.params().index_of("head.weight").expect("head");
    let vals = net.params_mut().entry_mut(w).values_mut();
    for (t, row) in table.iter().enumerate() {
        for (s, logits) in row.iter().enumerate() {
            for (a, &l) in logits.iter().enumerate() {
                vals[a * OBS_DIM + 2 * t + s] = l;
            }
        }
    }
    PolicyNetwork::new(net)
}

/// Tabular value function `V(t, s) = table[t][s]`.
pub fn tabular_value(table: [[f64; 2]; HORIZON]) -> ValueNetwork {
    let mut net = Network::zeros(Architecture::feed_forward(OBS_DIM, vec![], Activation::Linear, 1));
    let w = net.params().index_of("head.weight").expect("head");
    let vals = net.params_mut().entry_mut(w).values_mut();
    for (t, row) in table.iter().enumerate() {
        for (s, &v) in row.iter().enumerate() {
            vals[2 * t + s] = v;
        }
    }
    ValueNetwork::new(net).expect("single output")
}

fn probs(policy: &PolicyNetwork, t: usize, s: usize) -> Result<Vec<f64>> {
    let mut mem = policy.initial_memory();
    Ok(policy.act(&mut mem, &observation(t, s))?.probs().to_vec())
}

impl TinyMdp {
    fn transition(&self, s: usize, a: usize, next: usize) -> f64 {
        if next == 0 {
            self.next_zero[s][a]
        } else {
            1.0 - self.next_zero[s][a]
        }
    }

    /// Every episode with its probability under `behavior`; stored behavior
    /// probabilities come from `behavior` too.
    pub fn enumerate(&self, behavior: &PolicyNetwork) -> Result<Vec<(f64, Episode)>> {
        let mut out = Vec::new();
        let mut id = 0;
        for s0 in 0..2 {
            let p0 = probs(behavior, 0, s0)?;
            for a0 in 0..2 {
                for s1 in 0..2 {
                    let p1 = probs(behavior, 1, s1)?;
                    for a1 in 0..2 {
                        let prob = self.initial[s0] * p0[a0] * self.transition(s0, a0, s1) * p1[a1];
                        let steps = vec![
                            Step {
                                observation: observation(0, s0),
                                action: a0,
                                behavior_prob: p0[a0],
                                reward: self.reward[s0][a0],
                            },
                            Step {
                                observation: observation(1, s1),
                                action: a1,
                                behavior_prob: p1[a1],
                                reward: self.reward[s1][a1],
                            },
                        ];
                        out.push((prob, Episode::new(id, steps, true)?));
                        id += 1;
                    }
                }
            }
        }
        Ok(out)
    }

    /// Exact `V^π(t, s)` by backward induction.
    pub fn exact_values(&self, policy: &PolicyNetwork, gamma: f64) -> Result<[[f64; 2]; HORIZON]> {
        let mut v = [[0.0; 2]; HORIZON];
        for s in 0..2 {
            let p = probs(policy, 1, s)?;
            v[1][s] = (0..2).map(|a| p[a] * self.reward[s][a]).sum();
        }
        for s in 0..2 {
            let p = probs(policy, 0, s)?;
            v[0][s] = (0..2)
                .map(|a| {
                    let cont: f64 = (0..2).map(|n| self.transition(s, a, n) * v[1][n]).sum();
                    p[a] * (self.reward[s][a] + gamma * cont)
                })
                .sum();
        }
        Ok(v)
    }

    pub fn sample_episode<R: Rng + ?Sized>(&self, policy: &PolicyNetwork, id: u64, rng: &mut R) -> Result<Episode> {
        let mut s = usize::from(rng.random::<f64>() >= self.initial[0]);
        let mut steps = Vec::with_capacity(HORIZON);
        for t in 0..HORIZON {
            let p = probs(policy, t, s)?;
            let a = usize::from(rng.random::<f64>() >= p[0]);
            steps.push(Step {
                observation: observation(t, s),
                action: a,
                behavior_prob: p[a],
                reward: self.reward[s][a],
            });
            s = usize::from(rng.random::<f64>() >= self.next_zero[s][a]);
        }
        Episode::new(id, steps, true)
    }
}

/// `E_π[Δw_on]`: the on-policy value update averaged over every episode.
pub fn expected_onpolicy_value_update(
    mdp: &TinyMdp,
    policy: &PolicyNetwork,
    value: &ValueNetwork,
    gamma: f64,
) -> Result<GradientSet> {
    let mut total = GradientSet::zeros_like(value.params());
    for (p, ep) in mdp.enumerate(policy)? {
        total.add_scaled(&update_m1(policy, value, &[&ep], gamma)?.value, p);
    }
    Ok(total)
}

/// `E_μ[Δw_off]`: the importance-corrected value update for target `policy`,
/// averaged over episodes drawn from `behavior`.
pub fn expected_offpolicy_value_update(
    mdp: &TinyMdp,
    policy: &PolicyNetwork,
    behavior: &PolicyNetwork,
    value: &ValueNetwork,
    gamma: f64,
    clamp: &mut RatioClamp,
) -> Result<GradientSet> {
    let mut total = GradientSet::zeros_like(value.params());
    for (p, ep) in mdp.enumerate(behavior)? {
        total.add_scaled(&update_value_offpolicy(value, &ep, policy, gamma, clamp)?, p);
    }
    Ok(total)
}

/// Exact expected policy gradient with constant baseline `b`.
pub fn expected_policy_gradient(mdp: &TinyMdp, policy: &PolicyNetwork, gamma: f64, baseline: f64) -> Result<GradientSet> {
    let mut total = GradientSet::zeros_like(policy.params());
    for (p, ep) in mdp.enumerate(policy)? {
        total.add_scaled(&policy_gradient_with_baseline(policy, &[&ep], gamma, baseline)?, p);
    }
    Ok(total)
}

/// Sum over coordinates of the sample variance of a set of gradients.
pub fn variance_trace(samples: &[GradientSet]) -> f64 {
    let n = samples.len();
    if n < 2 {
        return 0.0;
    }
    let dim = samples[0].num_values();
    let mut total = 0.0;
    for i in 0..dim {
        let mean = samples.iter().map(|g| g.get_flat(i)).sum::<f64>() / n as f64;
        total += samples.iter().map(|g| (g.get_flat(i) - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn episode_probabilities_sum_to_one() {
        let mdp = TinyMdp::default();
        let pi = tabular_policy([[[0.3, -0.2], [1.0, 0.0]], [[0.0, 0.5], [-1.0, 0.2]]]);
        let eps = mdp.enumerate(&pi).unwrap();
        assert_eq!(eps.len(), 16);
        let total: f64 = eps.iter().map(|(p, _)| p).sum();
        assert!((total - 1.0).abs() < 1e-14);
    }

    #[test]
    fn exact_values_match_enumerated_returns() {
        let mdp = TinyMdp::default();
        let pi = tabular_policy([[[0.3, -0.2], [1.0, 0.0]], [[0.0, 0.5], [-1.0, 0.2]]]);
        let gamma = 0.9;
        let v = mdp.exact_values(&pi, gamma).unwrap();
        let mut expected_g0 = 0.0;
        for (p, ep) in mdp.enumerate(&pi).unwrap() {
            let r = ep.rewards();
            expected_g0 += p * (r[0] + gamma * r[1]);
        }
        let start = mdp.initial[0] * v[0][0] + mdp.initial[1] * v[0][1];
        assert!((start - expected_g0).abs() < 1e-14);
        let vn = tabular_value(v);
        let vals = vn.forward(&[observation(0, 1), observation(1, 0)]).unwrap().values;
        assert_eq!(vals, vec![v[0][1], v[1][0]]);
    }

    #[test]
    fn offpolicy_value_update_is_unbiased() {
        let mdp = TinyMdp::default();
        let pi = tabular_policy([[[0.3, -0.2], [1.0, 0.0]], [[0.0, 0.5], [-1.0, 0.2]]]);
        let mu = tabular_policy([[[-0.5, 0.4], [0.0, 0.9]], [[0.7, -0.3], [0.2, 0.2]]]);
        let value = tabular_value([[0.4, -1.0], [2.0, 0.3]]);
        let mut clamp = RatioClamp::new();
        let on = expected_onpolicy_value_update(&mdp, &pi, &value, 0.9).unwrap();
        let off = expected_offpolicy_value_update(&mdp, &pi, &mu, &value, 0.9, &mut clamp).unwrap();
        assert!(!on.is_zero());
        assert!(on.max_abs_diff(&off) <= 1e-12);
    }

    #[test]
    fn constant_baseline_does_not_change_expected_gradient() {
        let mdp = TinyMdp::default();
        let pi = tabular_policy([[[0.3, -0.2], [1.0, 0.0]], [[0.0, 0.5], [-1.0, 0.2]]]);
        let g0 = expected_policy_gradient(&mdp, &pi, 0.9, 0.0).unwrap();
        for b in [-3.0, 0.5, 10.0] {
            assert!(g0.max_abs_diff(&expected_policy_gradient(&mdp, &pi, 0.9, b).unwrap()) <= 1e-12);
        }
    }
}
