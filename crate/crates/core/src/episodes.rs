//! Trajectories, discounted returns, importance ratios and the replay buffer.

use std::collections::VecDeque;
use std::io::Write;

use rand::Rng;

use crate::error::{Error, Result};
use crate::nets::PolicyNetwork;

/// One decision: what was seen, what was done with which probability, and the
/// reward that followed.
#[derive(Clone, Debug, PartialEq)]
pub struct Step {
    pub observation: Vec<f64>,
    pub action: usize,
    /// μ(a_t | h_t) of the policy that generated the step.
    pub behavior_prob: f64,
    pub reward: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Episode {
    id: u64,
    steps: Vec<Step>,
    terminal: bool,
}

impl Episode {
    pub fn new(id: u64, steps: Vec<Step>, terminal: bool) -> Result<Self> {
        if steps.is_empty() {
            return Err(Error::InvalidEpisode(format!("episode {id} has no steps")));
        }
        for (t, s) in steps.iter().enumerate() {
            if !(s.behavior_prob > 0.0 && s.behavior_prob <= 1.0) {
                return Err(Error::InvalidEpisode(format!(
                    "episode {id} step {t}: behavior probability {} outside (0, 1]",
                    s.behavior_prob
                )));
            }
            if !s.reward.is_finite() {
                return Err(Error::InvalidEpisode(format!("episode {id} step {t}: non-finite reward")));
            }
        }
        Ok(Episode { id, steps, terminal })
    }

    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn steps(&self) -> &[Step] {
        &self.steps
    }

    pub fn is_terminal(&self) -> bool {
        self.terminal
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn observations(&self) -> Vec<&[f64]> {
        self.steps.iter().map(|s| s.observation.as_slice()).collect()
    }

    pub fn actions(&self) -> Vec<usize> {
        self.steps.iter().map(|s| s.action).collect()
    }

    pub fn rewards(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.reward).collect()
    }

    pub fn behavior_probs(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.behavior_prob).collect()
    }

    pub fn total_reward(&self) -> f64 {
        self.steps.iter().map(|s| s.reward).sum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DiscountConfig {
    gamma: f64,
}

impl DiscountConfig {
    pub fn new(gamma: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&gamma) {
            return Err(Error::config(format!("discount {gamma} outside [0, 1]")));
        }
        Ok(DiscountConfig { gamma })
    }

    pub fn gamma(self) -> f64 {
        self.gamma
    }
}

/// `G_t = r_{t+1} + γ G_{t+1}`, with `G_T = 0`.
pub fn compute_returns(episode: &Episode, gamma: f64) -> Vec<f64> {
    let mut returns = vec![0.0; episode.len()];
    let mut g = 0.0;
    for (t, step) in episode.steps.iter().enumerate().rev() {
        g = step.reward + gamma * g;
        returns[t] = g;
    }
    returns
}

/// ρ_t = π(a_t|h_t) / μ(a_t|h_t).
pub fn importance_ratio(target_prob: f64, behavior_prob: f64) -> Result<f64> {
    if behavior_prob <= 0.0 || !behavior_prob.is_finite() {
        return Err(Error::InvalidEpisode(format!(
            "behavior probability {behavior_prob} cannot have generated an action"
        )));
    }
    Ok(target_prob / behavior_prob)
}

pub const RATIO_PRODUCT_MIN: f64 = 1e-6;
pub const RATIO_PRODUCT_MAX: f64 = 1e6;

/// Clamps products of importance ratios to `[1e-6, 1e6]` and counts how often
/// that actually changed a value. An exact zero (the target policy forbids a
/// taken action) stays zero.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RatioClamp {
    events: u64,
}

impl RatioClamp {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn events(&self) -> u64 {
        self.events
    }

    pub fn clamp(&mut self, product: f64) -> f64 {
        if product == 0.0 {
            return 0.0;
        }
        let c = product.clamp(RATIO_PRODUCT_MIN, RATIO_PRODUCT_MAX);
        if c != product {
            self.events += 1;
        }
        c
    }

    /// Clamped product of a ratio slice.
    pub fn product(&mut self, ratios: &[f64]) -> f64 {
        let raw = if ratios.contains(&0.0) {
            0.0
        } else {
            ratios.iter().product()
        };
        self.clamp(raw)
    }
}

/// Per-step ratios of `policy` (target) against the stored behavior probabilities.
pub fn step_ratios(episode: &Episode, policy: &PolicyNetwork) -> Result<Vec<f64>> {
    let pt = policy.forward(&episode.observations())?;
    ratios_from_dists(episode, pt.dists.iter().map(|d| d.probs()))
}

pub(crate) fn ratios_from_dists<'a>(
    episode: &Episode,
    dists: impl Iterator<Item = &'a [f64]>,
) -> Result<Vec<f64>> {
    dists
        .zip(&episode.steps)
        .map(|(p, s)| {
            let target = *p
                .get(s.action)
                .ok_or_else(|| Error::InvalidEpisode(format!("action {} out of range", s.action)))?;
            importance_ratio(target, s.behavior_prob)
        })
        .collect()
}

/// w(d) = Π_t ρ_t under the target policy, clamped.
pub fn episode_weight(episode: &Episode, policy: &PolicyNetwork, clamp: &mut RatioClamp) -> Result<f64> {
    Ok(clamp.product(&step_ratios(episode, policy)?))
}

/// FIFO window of the most recent episodes.
#[derive(Clone, Debug)]
pub struct ReplayBuffer {
    capacity: usize,
    episodes: VecDeque<Episode>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::config("replay buffer capacity must be at least 1"));
        }
        Ok(ReplayBuffer {
            capacity,
            episodes: VecDeque::with_capacity(capacity.min(4096)),
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.episodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.episodes.is_empty()
    }

    /// Appends, evicting the oldest episode when full.
    pub fn store(&mut self, episode: Episode) {
        if self.episodes.len() == self.capacity {
            self.episodes.pop_front();
        }
        self.episodes.push_back(episode);
    }

    /// Oldest first.
    pub fn iter(&self) -> impl DoubleEndedIterator<Item = &Episode> + ExactSizeIterator {
        self.episodes.iter()
    }

    /// Up to `n` most recent episodes, oldest first.
    pub fn recent(&self, n: usize) -> impl Iterator<Item = &Episode> {
        self.episodes.iter().skip(self.episodes.len().saturating_sub(n))
    }

    /// `k` episodes drawn uniformly with replacement.
    pub fn sample<R: Rng + ?Sized>(&self, k: usize, rng: &mut R) -> Result<Vec<&Episode>> {
        if self.episodes.is_empty() {
            return Err(Error::Usage("cannot sample from an empty replay buffer".into()));
        }
        Ok((0..k)
            .map(|_| &self.episodes[rng.random_range(0..self.episodes.len())])
            .collect())
    }
}

/// Debug log: one tab-separated line per episode, `id T total_reward` followed
/// by `a_t μ_t r_t` for every step.
pub fn write_episode_log<'a, W: Write>(mut w: W, episodes: impl IntoIterator<Item = &'a Episode>) -> Result<()> {
    for ep in episodes {
        write!(w, "{}\t{}\t{}", ep.id, ep.len(), ep.total_reward())?;
        for s in &ep.steps {
            write!(w, "\t{}\t{}\t{}", s.action, s.behavior_prob, s.reward)?;
        }
        writeln!(w)?;
    }
    Ok(())
}

#[cfg(test)]
pub(crate) fn episode_from(rewards: &[f64], behavior: &[f64]) -> Episode {
    let steps = rewards
        .iter()
        .zip(behavior)
        .map(|(&reward, &behavior_prob)| Step {
            observation: vec![0.0],
            action: 0,
            behavior_prob,
            reward,
        })
        .collect();
    Episode::new(0, steps, true).unwrap()
}
