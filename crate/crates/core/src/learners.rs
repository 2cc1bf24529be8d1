//! Policy-gradient update rules and the per-batch training step.
//!
//! Every `update_*` function returns an *ascent* direction: the learner hands
//! its negation to the (minimizing) optimizer.
//!
//! | method | policy update                          | value update                      |
//! |--------|----------------------------------------|-----------------------------------|
//! | B1     | Σ ∇log π · G_t                          | none                              |
//! | B2     | Σ ∇log π · (G_t − b), b = weighted mean | none                              |
//! | M1     | Σ ∇log π · (G_t − V̂(h_t))              | Σ (G_t − V̂) ∇V̂                   |
//! | M2     | as M1                                  | M1 step + importance-weighted replay |
//! | M3     | M1 step + TD-advantage replay          | as M2                             |

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use log::warn;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::episodes::{compute_returns, ratios_from_dists, Episode, RatioClamp, ReplayBuffer};
use crate::error::{Error, Result};
use crate::nets::{PolicyNetwork, ValueNetwork};
use crate::nn::optim::OptimizerState;
use crate::nn::params::{GradientSet, ParameterSet};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Method {
    B1,
    B2,
    M1,
    M2,
    M3,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::B1, Method::B2, Method::M1, Method::M2, Method::M3];

    pub fn uses_value_network(self) -> bool {
        matches!(self, Method::M1 | Method::M2 | Method::M3)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Method::B1 => "B1",
            Method::B2 => "B2",
            Method::M1 => "M1",
            Method::M2 => "M2",
            Method::M3 => "M3",
        };
        f.write_str(s)
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "B1" => Ok(Method::B1),
            "B2" => Ok(Method::B2),
            "M1" => Ok(Method::M1),
            "M2" => Ok(Method::M2),
            "M3" => Ok(Method::M3),
            _ => Err(Error::config(format!("unknown method `{s}` (expected B1, B2, M1, M2 or M3)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MethodConfig {
    pub method: Method,
    pub gamma: f64,
    /// Episodes per update.
    pub batch_size: usize,
    /// Off-policy value steps per on-policy step (M2, M3).
    pub value_replay_steps: usize,
    /// Off-policy policy steps per on-policy step (M3).
    pub policy_replay_steps: usize,
    /// Episodes in the B2 baseline window.
    pub baseline_window: usize,
}

impl MethodConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::config(format!("gamma {} outside [0, 1]", self.gamma)));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size must be at least 1"));
        }
        if self.baseline_window == 0 {
            return Err(Error::config("baseline_window must be at least 1"));
        }
        Ok(())
    }
}

fn check_finite(g: &GradientSet, what: &str) -> Result<()> {
    if g.is_finite() {
        Ok(())
    } else {
        Err(Error::numeric(format!("non-finite {what} gradient")))
    }
}

/// `Σ_batch Σ_t ∇_θ log π(a_t|h_t) · (G_t − b)` for a constant baseline `b`.
pub fn policy_gradient_with_baseline(
    policy: &PolicyNetwork,
    episodes: &[&Episode],
    gamma: f64,
    baseline: f64,
) -> Result<GradientSet> {
    let mut total = GradientSet::zeros_like(policy.params());
    for ep in episodes {
        let pt = policy.forward(&ep.observations())?;
        let coefs: Vec<f64> = compute_returns(ep, gamma).iter().map(|g| g - baseline).collect();
        total.add_scaled(&policy.log_prob_gradients(&pt, &ep.actions(), &coefs)?, 1.0);
    }
    Ok(total)
}

/// REINFORCE without baseline.
pub fn update_b1(policy: &PolicyNetwork, episodes: &[&Episode], gamma: f64) -> Result<GradientSet> {
    policy_gradient_with_baseline(policy, episodes, gamma, 0.0)
}

/// `b = Σ_d w(d) G₀ᵈ / Σ_d w(d)` with `w(d) = Π_t ρ_t` (current policy over
/// stored behavior). `None` when the weights sum to zero.
pub fn weighted_baseline<'a>(
    policy: &PolicyNetwork,
    window: impl IntoIterator<Item = &'a Episode>,
    gamma: f64,
    clamp: &mut RatioClamp,
) -> Result<Option<f64>> {
    let (mut num, mut den) = (0.0, 0.0);
    for ep in window {
        let pt = policy.forward(&ep.observations())?;
        let ratios = ratios_from_dists(ep, pt.dists.iter().map(|d| d.probs()))?;
        let w = clamp.product(&ratios);
        num += w * compute_returns(ep, gamma)[0];
        den += w;
    }
    if den > 0.0 && den.is_finite() {
        Ok(Some(num / den))
    } else {
        Ok(None)
    }
}

/// REINFORCE with the importance-weighted average-return baseline over the
/// `window` most recent buffered episodes. Returns the gradient and the `b` used.
pub fn update_b2(
    policy: &PolicyNetwork,
    episodes: &[&Episode],
    buffer: &ReplayBuffer,
    gamma: f64,
    window: usize,
    clamp: &mut RatioClamp,
) -> Result<(GradientSet, f64)> {
    if buffer.is_empty() {
        return Err(Error::Usage("B2 baseline needs at least one buffered episode".into()));
    }
    let b = match weighted_baseline(policy, buffer.recent(window), gamma, clamp)? {
        Some(b) => b,
        None => {
            warn!("importance weights of the baseline window sum to zero; using b = 0");
            0.0
        }
    };
    Ok((policy_gradient_with_baseline(policy, episodes, gamma, b)?, b))
}

#[derive(Clone, Debug)]
pub struct ActorCriticGradients {
    pub policy: GradientSet,
    pub value: GradientSet,
}

/// Per-timestep value baseline for the policy and the matching on-policy
/// regression step for the value network, both from the same (pre-update) V̂.
pub fn update_m1(
    policy: &PolicyNetwork,
    value: &ValueNetwork,
    episodes: &[&Episode],
    gamma: f64,
) -> Result<ActorCriticGradients> {
    let mut gp = GradientSet::zeros_like(policy.params());
    let mut gv = GradientSet::zeros_like(value.params());
    for ep in episodes {
        let obs = ep.observations();
        let pt = policy.forward(&obs)?;
        let vt = value.forward(&obs)?;
        let advantages: Vec<f64> = compute_returns(ep, gamma)
            .iter()
            .zip(&vt.values)
            .map(|(g, v)| g - v)
            .collect();
        gp.add_scaled(&policy.log_prob_gradients(&pt, &ep.actions(), &advantages)?, 1.0);
        gv.add_scaled(&value.value_gradients(&vt, &advantages)?, 1.0);
    }
    Ok(ActorCriticGradients { policy: gp, value: gv })
}

/// Importance-corrected value regression on an episode from an older policy:
///
/// `Σ_t Π_{i<t} ρ_i · (Π_{j≥t} ρ_j · G_t − V̂(h_t)) · ∇V̂(h_t)`
///
/// The return term carries the full-episode ratio product (prefix × suffix),
/// the prediction term only the prefix. Both products are clamped.
pub fn update_value_offpolicy(
    value: &ValueNetwork,
    episode: &Episode,
    policy: &PolicyNetwork,
    gamma: f64,
    clamp: &mut RatioClamp,
) -> Result<GradientSet> {
    let obs = episode.observations();
    let pt = policy.forward(&obs)?;
    let ratios = ratios_from_dists(episode, pt.dists.iter().map(|d| d.probs()))?;
    let full = clamp.product(&ratios);
    let vt = value.forward(&obs)?;
    let returns = compute_returns(episode, gamma);
    let coefs: Vec<f64> = (0..episode.len())
        .map(|t| {
            let prefix = clamp.product(&ratios[..t]);
            full * returns[t] - prefix * vt.values[t]
        })
        .collect();
    value.value_gradients(&vt, &coefs)
}

/// Off-policy actor step with the one-step TD advantage:
///
/// `Σ_t ρ_t ∇log π(a_t|h_t) (r_t + γ V̂(h_{t+1}) − V̂(h_t))`, with `V̂(h_T) = 0`
/// and `r_t` the reward that followed `a_t`.
pub fn update_policy_offpolicy(
    policy: &PolicyNetwork,
    value: &ValueNetwork,
    episode: &Episode,
    gamma: f64,
) -> Result<GradientSet> {
    let obs = episode.observations();
    let pt = policy.forward(&obs)?;
    let ratios = ratios_from_dists(episode, pt.dists.iter().map(|d| d.probs()))?;
    let coefs = td_coefficients(&value.forward(&obs)?.values, &episode.rewards(), &ratios, gamma);
    policy.log_prob_gradients(&pt, &episode.actions(), &coefs)
}

/// `ρ_t · (r_t + γV̂(h_{t+1}) − V̂(h_t))` with `V̂(h_T) = 0`.
pub fn td_coefficients(values: &[f64], rewards: &[f64], ratios: &[f64], gamma: f64) -> Vec<f64> {
    let n = values.len();
    (0..n)
        .map(|t| {
            let next = if t + 1 < n { values[t + 1] } else { 0.0 };
            ratios[t] * (rewards[t] + gamma * next - values[t])
        })
        .collect()
}

/// Everything a training run mutates.
#[derive(Clone, Debug)]
pub struct Learner {
    pub policy: PolicyNetwork,
    pub value: ValueNetwork,
    pub policy_opt: OptimizerState,
    pub value_opt: OptimizerState,
    pub buffer: ReplayBuffer,
    pub clamp: RatioClamp,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct UpdateReport {
    /// Norm of the on-policy policy direction.
    pub policy_grad_norm: f64,
    /// Norm of the on-policy value direction (M1–M3).
    pub value_grad_norm: Option<f64>,
    /// B2 baseline.
    pub baseline: Option<f64>,
    /// Ratio-product clamps during this step.
    pub clamp_events: u64,
    pub policy_steps: usize,
    pub value_steps: usize,
    pub elapsed: Duration,
}

fn ascend(opt: &mut OptimizerState, params: &mut ParameterSet, direction: GradientSet) -> Result<()> {
    opt.step(params, &direction.negated())
}

/// Stores the new on-policy batch and applies the method's updates.
///
/// Order for M2/M3: value on-policy step, value replay, policy on-policy step
/// (advantages from the pre-update V̂, as in M1), then policy replay against
/// the refreshed V̂. With zero replay steps M2 and M3 are exactly M1.
pub fn train_step<R: Rng + ?Sized>(
    cfg: &MethodConfig,
    learner: &mut Learner,
    new_episodes: Vec<Episode>,
    rng: &mut R,
) -> Result<UpdateReport> {
    if new_episodes.len() != cfg.batch_size {
        return Err(Error::Usage(format!(
            "train_step expects {} episodes, got {}",
            cfg.batch_size,
            new_episodes.len()
        )));
    }
    let start = Instant::now();
    let clamps_before = learner.clamp.events();
    let gamma = cfg.gamma;
    let mut report = UpdateReport::default();

    for ep in &new_episodes {
        learner.buffer.store(ep.clone());
    }
    let batch: Vec<&Episode> = new_episodes.iter().collect();

    match cfg.method {
        Method::B1 => {
            let g = update_b1(&learner.policy, &batch, gamma)?;
            check_finite(&g, "policy")?;
            report.policy_grad_norm = g.norm();
            ascend(&mut learner.policy_opt, learner.policy.params_mut(), g)?;
            report.policy_steps = 1;
        }
        Method::B2 => {
            let (g, b) = update_b2(
                &learner.policy,
                &batch,
                &learner.buffer,
                gamma,
                cfg.baseline_window,
                &mut learner.clamp,
            )?;
            check_finite(&g, "policy")?;
            report.policy_grad_norm = g.norm();
            report.baseline = Some(b);
            ascend(&mut learner.policy_opt, learner.policy.params_mut(), g)?;
            report.policy_steps = 1;
        }
        Method::M1 | Method::M2 | Method::M3 => {
            let on = update_m1(&learner.policy, &learner.value, &batch, gamma)?;
            check_finite(&on.policy, "policy")?;
            check_finite(&on.value, "value")?;
            report.policy_grad_norm = on.policy.norm();
            report.value_grad_norm = Some(on.value.norm());

            ascend(&mut learner.value_opt, learner.value.params_mut(), on.value)?;
            report.value_steps = 1;

            if cfg.method != Method::M1 {
                for _ in 0..cfg.value_replay_steps {
                    let sampled = learner.buffer.sample(cfg.batch_size, rng)?;
                    let mut g = GradientSet::zeros_like(learner.value.params());
                    for ep in sampled {
                        g.add_scaled(
                            &update_value_offpolicy(&learner.value, ep, &learner.policy, gamma, &mut learner.clamp)?,
                            1.0,
                        );
                    }
                    check_finite(&g, "replayed value")?;
                    ascend(&mut learner.value_opt, learner.value.params_mut(), g)?;
                    report.value_steps += 1;
                }
            }

            ascend(&mut learner.policy_opt, learner.policy.params_mut(), on.policy)?;
            report.policy_steps = 1;

            if cfg.method == Method::M3 {
                for _ in 0..cfg.policy_replay_steps {
                    let sampled = learner.buffer.sample(cfg.batch_size, rng)?;
                    let mut g = GradientSet::zeros_like(learner.policy.params());
                    for ep in sampled {
                        g.add_scaled(&update_policy_offpolicy(&learner.policy, &learner.value, ep, gamma)?, 1.0);
                    }
                    check_finite(&g, "replayed policy")?;
                    ascend(&mut learner.policy_opt, learner.policy.params_mut(), g)?;
                    report.policy_steps += 1;
                }
            }
        }
    }

    if !learner.policy.params().is_finite() || !learner.value.params().is_finite() {
        return Err(Error::numeric("non-finite parameters after update"));
    }
    report.clamp_events = learner.clamp.events() - clamps_before;
    report.elapsed = start.elapsed();
    Ok(report)
}
