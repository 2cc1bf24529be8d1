//! Experiment configuration: per-task defaults plus flat-key overrides from a
//! config file and the command line.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Deserialize;

use crate::env::dialog::{self, DialogConfig, DialogEnv};
use crate::env::lander::{self, LanderConfig, LanderEnv};
use crate::env::{parse_toml, Environment, Transition};
use crate::error::{Error, Result};
use crate::learners::{Method, MethodConfig};
use crate::nets::Architecture;
use crate::nn::ops::Activation;
use crate::nn::optim::OptimizerState;
use crate::nn::params::ParameterSet;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Dialog,
    Lander,
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Task::Dialog => "dialog",
            Task::Lander => "lander",
        })
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "dialog" => Ok(Task::Dialog),
            "lander" => Ok(Task::Lander),
            _ => Err(Error::config(format!("unknown task `{s}` (expected dialog or lander)"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum OptimizerConfig {
    Adadelta { step_size: f64, rho: f64, epsilon: f64 },
    Adam { step_size: f64, beta1: f64, beta2: f64, epsilon: f64 },
}

impl OptimizerConfig {
    pub fn build(&self, params: &ParameterSet) -> OptimizerState {
        match *self {
            OptimizerConfig::Adadelta { step_size, rho, epsilon } => OptimizerState::adadelta(params, step_size, rho, epsilon),
            OptimizerConfig::Adam {
                step_size,
                beta1,
                beta2,
                epsilon,
            } => OptimizerState::adam_with(params, step_size, beta1, beta2, epsilon),
        }
    }

    fn validate(&self) -> Result<()> {
        let (step, eps, rates) = match *self {
            OptimizerConfig::Adadelta { step_size, rho, epsilon } => (step_size, epsilon, vec![rho]),
            OptimizerConfig::Adam {
                step_size,
                beta1,
                beta2,
                epsilon,
            } => (step_size, epsilon, vec![beta1, beta2]),
        };
        if !(step.is_finite() && step > 0.0) {
            return Err(Error::config(format!("step_size must be positive, got {step}")));
        }
        if !(eps.is_finite() && eps > 0.0) {
            return Err(Error::config(format!("epsilon must be positive, got {eps}")));
        }
        if rates.iter().any(|r| !(0.0..1.0).contains(r)) {
            return Err(Error::config("decay rates must lie in [0, 1)"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum EnvConfig {
    Dialog(DialogConfig),
    Lander(LanderConfig),
}

/// One environment of either task.
#[derive(Clone, Debug)]
pub enum TaskEnv {
    Dialog(DialogEnv),
    Lander(LanderEnv),
}

impl Environment for TaskEnv {
    fn observation_dim(&self) -> usize {
        match self {
            TaskEnv::Dialog(e) => e.observation_dim(),
            TaskEnv::Lander(e) => e.observation_dim(),
        }
    }

    fn num_actions(&self) -> usize {
        match self {
            TaskEnv::Dialog(e) => e.num_actions(),
            TaskEnv::Lander(e) => e.num_actions(),
        }
    }

    fn reset<R: rand::Rng + ?Sized>(&mut self, rng: &mut R) -> Vec<f64> {
        match self {
            TaskEnv::Dialog(e) => e.reset(rng),
            TaskEnv::Lander(e) => e.reset(rng),
        }
    }

    fn step<R: rand::Rng + ?Sized>(&mut self, action: usize, rng: &mut R) -> Result<Transition> {
        match self {
            TaskEnv::Dialog(e) => e.step(action, rng),
            TaskEnv::Lander(e) => e.step(action, rng),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub task: Task,
    pub learner: MethodConfig,
    pub runs: usize,
    /// Training episodes per run.
    pub episodes: usize,
    pub eval_interval: usize,
    pub eval_episodes: usize,
    /// Run `k` uses seed `seed + k`.
    pub seed: u64,
    pub parallel: usize,
    /// LSTM width for the dialog task.
    pub lstm_hidden: usize,
    /// ReLU layer widths for the lander task.
    pub hidden_layers: Vec<usize>,
    pub optimizer: OptimizerConfig,
    pub buffer_capacity: usize,
    /// Fixed multiplier on the value network output, near the return scale.
    pub value_scale: f64,
    pub env: EnvConfig,
}

impl ExperimentConfig {
    pub fn defaults(task: Task, method: Method) -> Self {
        match task {
            Task::Dialog => ExperimentConfig {
                task,
                learner: MethodConfig {
                    method,
                    gamma: 0.95,
                    batch_size: 1,
                    value_replay_steps: 5,
                    policy_replay_steps: 3,
                    baseline_window: 20,
                },
                runs: 20,
                episodes: 2000,
                eval_interval: 10,
                eval_episodes: 300,
                seed: 0,
                parallel: 1,
                lstm_hidden: 32,
                hidden_layers: vec![16, 16],
                optimizer: OptimizerConfig::Adadelta {
                    step_size: 1.0,
                    rho: 0.95,
                    epsilon: 1e-6,
                },
                buffer_capacity: 1000,
                value_scale: 1.0,
                env: EnvConfig::Dialog(DialogConfig::default()),
            },
            Task::Lander => ExperimentConfig {
                task,
                learner: MethodConfig {
                    method,
                    gamma: 0.99,
                    batch_size: 10,
                    value_replay_steps: 5,
                    policy_replay_steps: 3,
                    baseline_window: 50,
                },
                runs: 20,
                episodes: 3000,
                eval_interval: 100,
                eval_episodes: 100,
                seed: 0,
                parallel: 1,
                lstm_hidden: 32,
                hidden_layers: vec![16, 16],
                optimizer: OptimizerConfig::Adam {
                    step_size: 0.005,
                    beta1: 0.9,
                    beta2: 0.999,
                    epsilon: 1e-8,
                },
                buffer_capacity: 200,
                value_scale: 100.0,
                env: EnvConfig::Lander(LanderConfig::default()),
            },
        }
    }

    /// Task defaults, then `file` overrides, then `cli` overrides.
    pub fn resolve(file: &Overrides, cli: &Overrides) -> Result<Self> {
        let merged = file.clone().merged_with(cli.clone());
        let task = merged.task.unwrap_or(Task::Dialog);
        let method = merged.method.unwrap_or(Method::M3);
        let mut cfg = Self::defaults(task, method);
        merged.apply(&mut cfg)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.learner.validate()?;
        self.optimizer.validate()?;
        let bs = self.learner.batch_size;
        if self.runs == 0 {
            return Err(Error::config("runs must be at least 1"));
        }
        if self.eval_interval < bs || !self.eval_interval.is_multiple_of(bs) {
            return Err(Error::config(format!(
                "eval_interval {} must be a positive multiple of batch_size {bs}",
                self.eval_interval
            )));
        }
        if !self.episodes.is_multiple_of(bs) {
            return Err(Error::config(format!("episodes {} must be a multiple of batch_size {bs}", self.episodes)));
        }
        if self.eval_episodes == 0 {
            return Err(Error::config("eval_episodes must be at least 1"));
        }
        if self.parallel == 0 {
            return Err(Error::config("parallel must be at least 1"));
        }
        if self.buffer_capacity == 0 {
            return Err(Error::config("buffer_capacity must be at least 1"));
        }
        if !(self.value_scale.is_finite() && self.value_scale > 0.0) {
            return Err(Error::config(format!("value_scale must be positive, got {}", self.value_scale)));
        }
        match &self.env {
            EnvConfig::Dialog(c) => {
                if self.lstm_hidden == 0 {
                    return Err(Error::config("lstm_hidden must be at least 1"));
                }
                c.validate()
            }
            EnvConfig::Lander(c) => {
                if self.hidden_layers.contains(&0) {
                    return Err(Error::config("hidden layer widths must be positive"));
                }
                c.validate()
            }
        }
    }

    pub fn make_env(&self) -> Result<TaskEnv> {
        Ok(match &self.env {
            EnvConfig::Dialog(c) => TaskEnv::Dialog(DialogEnv::new(c.clone())?),
            EnvConfig::Lander(c) => TaskEnv::Lander(LanderEnv::new(c.clone())?),
        })
    }

    /// Hidden-layer activation of the feed-forward body (also what a
    /// checkpoint of this task is read back with).
    pub fn activation(&self) -> Activation {
        Activation::Relu
    }

    pub fn policy_architecture(&self) -> Architecture {
        match self.task {
            Task::Dialog => Architecture::lstm(dialog::OBS_DIM, self.lstm_hidden, dialog::NUM_ACTIONS),
            Task::Lander => Architecture::feed_forward(
                lander::OBS_DIM,
                self.hidden_layers.clone(),
                self.activation(),
                lander::NUM_ACTIONS,
            ),
        }
    }

    /// Metric name used in reports: dialog success rate or lander return.
    pub fn metric_name(&self) -> &'static str {
        match self.task {
            Task::Dialog => "success_rate",
            Task::Lander => "mean_return",
        }
    }
}

/// Optional settings, as read from a flat TOML file or collected from flags.
#[derive(Clone, Debug, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Overrides {
    pub task: Option<Task>,
    #[serde(default, deserialize_with = "de_method")]
    pub method: Option<Method>,
    pub runs: Option<usize>,
    pub episodes: Option<usize>,
    pub eval_interval: Option<usize>,
    pub eval_episodes: Option<usize>,
    pub seed: Option<u64>,
    pub parallel: Option<usize>,
    /// Dialog evaluation every 10 dialogs over 1000 dialogs.
    pub paper_protocol: Option<bool>,
    pub gamma: Option<f64>,
    pub batch_size: Option<usize>,
    pub value_replay_steps: Option<usize>,
    pub policy_replay_steps: Option<usize>,
    pub baseline_window: Option<usize>,
    pub buffer_capacity: Option<usize>,
    pub value_scale: Option<f64>,
    /// `adadelta` or `adam`.
    pub optimizer: Option<String>,
    pub step_size: Option<f64>,
    pub rho: Option<f64>,
    pub beta1: Option<f64>,
    pub beta2: Option<f64>,
    pub epsilon: Option<f64>,
    pub lstm_hidden: Option<usize>,
    pub hidden_layers: Option<Vec<usize>>,
    /// Environment parameter file for the selected task.
    pub env_config: Option<PathBuf>,
}

fn de_method<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Option<Method>, D::Error> {
    let s: Option<String> = Option::deserialize(d)?;
    s.map(|s| s.parse().map_err(serde::de::Error::custom)).transpose()
}

impl Overrides {
    pub fn from_toml(text: &str) -> Result<Self> {
        parse_toml(text)
    }

    /// Reads a config file; a relative `env_config` resolves against the
    /// file's directory.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read config {}: {e}", path.display())))?;
        let mut o = Self::from_toml(&text).map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
        if let (Some(env), Some(dir)) = (&o.env_config, path.parent()) {
            if env.is_relative() {
                o.env_config = Some(dir.join(env));
            }
        }
        Ok(o)
    }

    /// Fields set in `other` win.
    pub fn merged_with(self, other: Overrides) -> Overrides {
        macro_rules! pick {
            ($($f:ident),*) => { Overrides { $($f: other.$f.or(self.$f)),* } };
        }
        pick!(
            task,
            method,
            runs,
            episodes,
            eval_interval,
            eval_episodes,
            seed,
            parallel,
            paper_protocol,
            gamma,
            batch_size,
            value_replay_steps,
            policy_replay_steps,
            baseline_window,
            buffer_capacity,
            value_scale,
            optimizer,
            step_size,
            rho,
            beta1,
            beta2,
            epsilon,
            lstm_hidden,
            hidden_layers,
            env_config
        )
    }

    fn apply(&self, cfg: &mut ExperimentConfig) -> Result<()> {
        if self.paper_protocol == Some(true) {
            if cfg.task != Task::Dialog {
                return Err(Error::config("paper_protocol applies to the dialog task only"));
            }
            cfg.eval_interval = 10;
            cfg.eval_episodes = 1000;
        }
        macro_rules! set {
            ($($src:ident => $($dst:ident).+),* $(,)?) => {
                $(if let Some(v) = self.$src.clone() { cfg.$($dst).+ = v; })*
            };
        }
        set!(
            runs => runs,
            episodes => episodes,
            eval_interval => eval_interval,
            eval_episodes => eval_episodes,
            seed => seed,
            parallel => parallel,
            gamma => learner.gamma,
            batch_size => learner.batch_size,
            value_replay_steps => learner.value_replay_steps,
            policy_replay_steps => learner.policy_replay_steps,
            baseline_window => learner.baseline_window,
            buffer_capacity => buffer_capacity,
            value_scale => value_scale,
        );
        match (cfg.task, &self.lstm_hidden, &self.hidden_layers) {
            (Task::Lander, Some(_), _) => return Err(Error::config("lstm_hidden applies to the dialog task only")),
            (Task::Dialog, _, Some(_)) => return Err(Error::config("hidden_layers applies to the lander task only")),
            _ => {}
        }
        set!(lstm_hidden => lstm_hidden, hidden_layers => hidden_layers);

        if let Some(name) = &self.optimizer {
            cfg.optimizer = match name.to_ascii_lowercase().as_str() {
                "adadelta" => OptimizerConfig::Adadelta {
                    step_size: 1.0,
                    rho: 0.95,
                    epsilon: 1e-6,
                },
                "adam" => OptimizerConfig::Adam {
                    step_size: 0.001,
                    beta1: 0.9,
                    beta2: 0.999,
                    epsilon: 1e-8,
                },
                _ => return Err(Error::config(format!("unknown optimizer `{name}` (expected adadelta or adam)"))),
            };
        }
        match &mut cfg.optimizer {
            OptimizerConfig::Adadelta { step_size, rho, epsilon } => {
                if self.beta1.is_some() || self.beta2.is_some() {
                    return Err(Error::config("beta1/beta2 apply to adam only"));
                }
                *step_size = self.step_size.unwrap_or(*step_size);
                *rho = self.rho.unwrap_or(*rho);
                *epsilon = self.epsilon.unwrap_or(*epsilon);
            }
            OptimizerConfig::Adam {
                step_size,
                beta1,
                beta2,
                epsilon,
            } => {
                if self.rho.is_some() {
                    return Err(Error::config("rho applies to adadelta only"));
                }
                *step_size = self.step_size.unwrap_or(*step_size);
                *beta1 = self.beta1.unwrap_or(*beta1);
                *beta2 = self.beta2.unwrap_or(*beta2);
                *epsilon = self.epsilon.unwrap_or(*epsilon);
            }
        }

        if let Some(path) = &self.env_config {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::config(format!("cannot read env_config {}: {e}", path.display())))?;
            cfg.env = match cfg.task {
                Task::Dialog => EnvConfig::Dialog(DialogConfig::from_toml(&text)?),
                Task::Lander => EnvConfig::Lander(LanderConfig::from_toml(&text)?),
            };
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn task_defaults() {
        let d = ExperimentConfig::resolve(&Overrides::default(), &Overrides::default()).unwrap();
        assert_eq!(d.task, Task::Dialog);
        assert_eq!((d.learner.batch_size, d.learner.gamma), (1, 0.95));
        assert_eq!((d.eval_interval, d.eval_episodes, d.runs, d.episodes), (10, 300, 20, 2000));
        assert!(matches!(d.optimizer, OptimizerConfig::Adadelta { step_size, rho, epsilon }
            if step_size == 1.0 && rho == 0.95 && epsilon == 1e-6));
        assert!(d.policy_architecture().is_recurrent());

        let l = ExperimentConfig::defaults(Task::Lander, Method::M2);
        assert_eq!((l.learner.batch_size, l.learner.gamma), (10, 0.99));
        assert_eq!((l.learner.value_replay_steps, l.learner.policy_replay_steps), (5, 3));
        assert!(matches!(l.optimizer, OptimizerConfig::Adam { step_size, .. } if step_size == 0.005));
        assert!(!l.policy_architecture().is_recurrent());
        assert!(l.validate().is_ok());
    }

    #[test]
    fn cli_overrides_file() {
        let file = Overrides::from_toml("task = \"lander\"\nmethod = \"b2\"\nruns = 3\nseed = 9").unwrap();
        let cli = Overrides {
            runs: Some(5),
            ..Overrides::default()
        };
        let cfg = ExperimentConfig::resolve(&file, &cli).unwrap();
        assert_eq!((cfg.task, cfg.learner.method, cfg.runs, cfg.seed), (Task::Lander, Method::B2, 5, 9));
    }

    #[test]
    fn paper_protocol() {
        let o = Overrides {
            paper_protocol: Some(true),
            ..Overrides::default()
        };
        let cfg = ExperimentConfig::resolve(&o, &Overrides::default()).unwrap();
        assert_eq!((cfg.eval_interval, cfg.eval_episodes), (10, 1000));
    }

    #[test]
    fn rejects_bad_configs() {
        let none = Overrides::default();
        assert!(matches!(Overrides::from_toml("bogus = 1"), Err(Error::Config(_))));
        assert!(matches!(Overrides::from_toml("task = \"bogus\""), Err(Error::Config(_))));
        assert!(matches!(Overrides::from_toml("method = \"M9\""), Err(Error::Config(_))));
        let bad = |o: Overrides| ExperimentConfig::resolve(&o, &none).is_err();
        assert!(bad(Overrides { runs: Some(0), ..none.clone() }));
        assert!(bad(Overrides {
            task: Some(Task::Lander),
            eval_interval: Some(15),
            ..none.clone()
        }));
        assert!(bad(Overrides {
            task: Some(Task::Lander),
            lstm_hidden: Some(8),
            ..none.clone()
        }));
        assert!(bad(Overrides { rho: Some(0.9), task: Some(Task::Lander), ..none.clone() }));
        assert!(bad(Overrides { optimizer: Some("sgd".into()), ..none.clone() }));
    }

    #[test]
    fn env_config_file() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("lander.toml"), "gravity = 0.04").unwrap();
        std::fs::write(dir.path().join("exp.toml"), "task = \"lander\"\nenv_config = \"lander.toml\"").unwrap();
        let o = Overrides::from_file(&dir.path().join("exp.toml")).unwrap();
        let cfg = ExperimentConfig::resolve(&o, &Overrides::default()).unwrap();
        assert!(matches!(&cfg.env, EnvConfig::Lander(c) if c.gravity == 0.04));
    }
}
