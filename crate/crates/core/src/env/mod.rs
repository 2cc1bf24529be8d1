//! Episodic environments with a reset/step interface.

pub mod dialog;
pub mod lander;

use rand::Rng;

use crate::episodes::{Episode, Step};
use crate::error::{Error, Result};
use crate::nets::{sample_action, PolicyNetwork};

#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub observation: Vec<f64>,
    pub reward: f64,
    pub done: bool,
}

pub trait Environment {
    fn observation_dim(&self) -> usize;

    fn num_actions(&self) -> usize;

    /// Starts a new episode and returns its first observation.
    fn reset<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Vec<f64>;

    /// Errors with `Error::Usage` once the episode is done or for an
    /// out-of-range action.
    fn step<R: Rng + ?Sized>(&mut self, action: usize, rng: &mut R) -> Result<Transition>;
}

/// Runs one episode with actions sampled from `policy`, recording the
/// probability of each taken action as its behavior probability.
pub fn rollout<E, R>(env: &mut E, policy: &PolicyNetwork, id: u64, rng: &mut R) -> Result<Episode>
where
    E: Environment,
    R: Rng + ?Sized,
{
    if policy.num_actions() != env.num_actions() {
        return Err(Error::config(format!(
            "policy has {} actions, environment {}",
            policy.num_actions(),
            env.num_actions()
        )));
    }
    let mut memory = policy.initial_memory();
    let mut observation = env.reset(rng);
    let mut steps = Vec::new();
    loop {
        let dist = policy.act(&mut memory, &observation)?;
        let (action, behavior_prob) = sample_action(&dist, rng);
        let tr = env.step(action, rng)?;
        steps.push(Step {
            observation,
            action,
            behavior_prob,
            reward: tr.reward,
        });
        if tr.done {
            return Episode::new(id, steps, true);
        }
        observation = tr.observation;
    }
}

/// Runs one episode under an arbitrary action rule; returns the rewards.
pub fn run_controller<E, R, P>(env: &mut E, rng: &mut R, mut controller: P) -> Result<Vec<f64>>
where
    E: Environment,
    R: Rng + ?Sized,
    P: FnMut(&[f64], &mut R) -> usize,
{
    let mut observation = env.reset(rng);
    let mut rewards = Vec::new();
    loop {
        let action = controller(&observation, rng);
        let tr = env.step(action, rng)?;
        rewards.push(tr.reward);
        if tr.done {
            return Ok(rewards);
        }
        observation = tr.observation;
    }
}

pub(crate) fn parse_toml<T: serde::de::DeserializeOwned>(text: &str) -> Result<T> {
    toml::from_str(text).map_err(|e| Error::config(e.to_string()))
}
