//! Multi-seed training runs with periodic freeze-and-evaluate, and their
//! aggregation into learning curves.

pub mod config;
pub mod curve;
pub mod selftest;

use std::time::Instant;

use log::{info, warn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

pub use config::{EnvConfig, ExperimentConfig, OptimizerConfig, Overrides, Task, TaskEnv};
pub use curve::{CurvePoint, LearningCurve, RawRecord};

use crate::env::{rollout, Environment};
use crate::episodes::{RatioClamp, ReplayBuffer};
use crate::error::{Error, Result};
use crate::learners::{train_step, Learner};
use crate::nets::{PolicyNetwork, ValueNetwork};

/// Everything one run produced.
#[derive(Clone, Debug)]
pub struct RunSeries {
    pub run: usize,
    pub seed: u64,
    /// `(training episodes consumed, metric)`, starting at 0.
    pub points: Vec<(usize, f64)>,
    /// Undiscounted return of every training episode.
    pub train_returns: Vec<f64>,
    /// Set when the run stopped on a numeric failure.
    pub diverged: Option<String>,
    pub clamp_events: u64,
    pub policy: PolicyNetwork,
}

/// Mean undiscounted return of `episodes` rollouts of a frozen policy (for
/// the dialog task this is the success rate).
pub fn evaluate<E: Environment>(
    policy: &PolicyNetwork,
    env: &mut E,
    episodes: usize,
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    let mut total = 0.0;
    for i in 0..episodes {
        total += rollout(env, policy, i as u64, rng)?.total_reward();
    }
    Ok(total / episodes as f64)
}

fn run_seed(cfg: &ExperimentConfig, run: usize) -> u64 {
    cfg.seed.wrapping_add(run as u64)
}

/// Training draws from stream 0 of the run's generator and evaluation from
/// stream 1, so evaluation never perturbs training.
fn run_rngs(seed: u64) -> (ChaCha8Rng, ChaCha8Rng) {
    let train = ChaCha8Rng::seed_from_u64(seed);
    let mut eval = ChaCha8Rng::seed_from_u64(seed);
    eval.set_stream(1);
    (train, eval)
}

pub fn run_training(cfg: &ExperimentConfig, run: usize) -> Result<RunSeries> {
    cfg.validate()?;
    let seed = run_seed(cfg, run);
    let (mut rng, mut eval_rng) = run_rngs(seed);
    let mut env = cfg.make_env()?;
    let mut eval_env = cfg.make_env()?;

    let policy = PolicyNetwork::init(cfg.policy_architecture(), &mut rng);
    let value = ValueNetwork::matching(&policy, &mut rng).with_output_scale(cfg.value_scale)?;
    let mut learner = Learner {
        policy_opt: cfg.optimizer.build(policy.params()),
        value_opt: cfg.optimizer.build(value.params()),
        policy,
        value,
        buffer: ReplayBuffer::new(cfg.buffer_capacity)?,
        clamp: RatioClamp::new(),
    };

    let mut points = vec![(0, evaluate(&learner.policy, &mut eval_env, cfg.eval_episodes, &mut eval_rng)?)];
    let mut train_returns = Vec::with_capacity(cfg.episodes);
    let mut diverged = None;
    let batch_size = cfg.learner.batch_size;
    let mut consumed = 0;

    while consumed < cfg.episodes {
        let batch = (0..batch_size)
            .map(|i| rollout(&mut env, &learner.policy, (consumed + i) as u64, &mut rng))
            .collect::<Result<Vec<_>>>();
        let step = batch.and_then(|batch| {
            train_returns.extend(batch.iter().map(|e| e.total_reward()));
            train_step(&cfg.learner, &mut learner, batch, &mut rng)
        });
        match step {
            Ok(_) => {}
            Err(Error::Numeric(msg)) => {
                warn!("run {run} (seed {seed}) diverged after {consumed} episodes: {msg}");
                diverged = Some(msg);
                break;
            }
            Err(e) => return Err(e),
        }
        consumed += batch_size;
        if consumed % cfg.eval_interval == 0 {
            let m = evaluate(&learner.policy, &mut eval_env, cfg.eval_episodes, &mut eval_rng)?;
            points.push((consumed, m));
        }
    }

    Ok(RunSeries {
        run,
        seed,
        points,
        train_returns,
        diverged,
        clamp_events: learner.clamp.events(),
        policy: learner.policy,
    })
}

#[derive(Clone, Debug)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    /// All runs in run order, diverged ones included.
    pub runs: Vec<RunSeries>,
    /// Aggregate over the runs that did not diverge.
    pub curve: LearningCurve,
    pub diverged: usize,
}

impl ExperimentResult {
    pub fn healthy_runs(&self) -> impl Iterator<Item = &RunSeries> {
        self.runs.iter().filter(|r| r.diverged.is_none())
    }
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    let start = Instant::now();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.parallel)
        .build()
        .map_err(|e| Error::Internal(e.to_string()))?;
    let runs: Vec<RunSeries> = pool.install(|| {
        (0..cfg.runs)
            .into_par_iter()
            .map(|k| {
                let r = run_training(cfg, k);
                if let Ok(s) = &r {
                    info!(
                        "{} {} run {k}: final metric {:.4}",
                        cfg.task,
                        cfg.learner.method,
                        s.points.last().map_or(f64::NAN, |p| p.1)
                    );
                }
                r
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let healthy: Vec<&[(usize, f64)]> = runs
        .iter()
        .filter(|r| r.diverged.is_none())
        .map(|r| r.points.as_slice())
        .collect();
    let diverged = runs.len() - healthy.len();
    if healthy.is_empty() {
        return Err(Error::numeric(format!("all {} runs diverged", runs.len())));
    }
    let curve = LearningCurve::aggregate(&healthy)?;
    info!(
        "{} {}: {} runs in {:.1?}, {diverged} diverged",
        cfg.task,
        cfg.learner.method,
        runs.len(),
        start.elapsed()
    );
    Ok(ExperimentResult {
        config: cfg.clone(),
        runs,
        curve,
        diverged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::Method;

    fn tiny(task: Task, method: Method) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::defaults(task, method);
        cfg.runs = 2;
        cfg.episodes = 4 * cfg.learner.batch_size;
        cfg.eval_interval = 2 * cfg.learner.batch_size;
        cfg.eval_episodes = 3;
        cfg.lstm_hidden = 4;
        cfg.hidden_layers = vec![4, 4];
        cfg.learner.value_replay_steps = 1;
        cfg.learner.policy_replay_steps = 1;
        cfg
    }

    #[test]
    fn zero_episodes_gives_only_the_initial_point() {
        let mut cfg = tiny(Task::Dialog, Method::M1);
        cfg.episodes = 0;
        let s = run_training(&cfg, 0).unwrap();
        assert_eq!(s.points.len(), 1);
        assert_eq!(s.points[0].0, 0);
    }

    #[test]
    fn runs_are_deterministic() {
        for task in [Task::Dialog, Task::Lander] {
            let cfg = tiny(task, Method::M3);
            let a = run_training(&cfg, 1).unwrap();
            let b = run_training(&cfg, 1).unwrap();
            assert_eq!(a.points, b.points);
            assert_eq!(a.policy, b.policy);
            let grid: Vec<usize> = a.points.iter().map(|p| p.0).collect();
            let bs = cfg.learner.batch_size;
            assert_eq!(grid, vec![0, 2 * bs, 4 * bs]);
        }
    }

    #[test]
    fn evaluation_does_not_touch_training() {
        let mut cfg = tiny(Task::Dialog, Method::M2);
        cfg.eval_episodes = 1;
        let a = run_training(&cfg, 0).unwrap();
        cfg.eval_episodes = 50;
        let b = run_training(&cfg, 0).unwrap();
        assert_eq!(a.train_returns, b.train_returns);
        assert_eq!(a.policy, b.policy);
    }

    #[test]
    fn experiment_aggregates_runs() {
        let cfg = tiny(Task::Lander, Method::B2);
        let res = run_experiment(&cfg).unwrap();
        assert_eq!(res.runs.len(), 2);
        assert_eq!(res.diverged, 0);
        assert_eq!(res.curve.points.len(), 3);
        let p = res.curve.points[2];
        let (x, y) = (res.runs[0].points[2].1, res.runs[1].points[2].1);
        assert_eq!(p.mean, (x + y) / 2.0);
        assert!((p.variance - ((x - y) / 2.0).powi(2)).abs() <= 1e-9 * (1.0 + p.variance));
    }
}
