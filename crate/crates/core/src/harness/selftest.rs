//! Quick invariant and oracle checks behind `rpg selftest`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::env::dialog::{DialogAction, DialogConfig, DialogEnv, UserModel};
use crate::env::lander::{LanderConfig, LanderEnv, CRASH_REWARD};
use crate::env::Environment;
use crate::episodes::{Episode, RatioClamp, Step};
use crate::error::Result;
use crate::learners::{td_coefficients, update_m1, update_policy_offpolicy, update_value_offpolicy};
use crate::nets::{sample_action, Architecture, PolicyNetwork, ValueNetwork};
use crate::nn::checkpoint::{load_params, save_params};
use crate::nn::ops::Activation;
use crate::oracle::gradcheck::{check_log_prob, check_network, GradCheckReport};
use crate::oracle::tiny_mdp::{self, TinyMdp};

#[derive(Clone, Debug, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl CheckResult {
    fn new(name: &'static str, passed: bool, detail: impl Into<String>) -> Self {
        CheckResult {
            name,
            passed,
            detail: detail.into(),
        }
    }
}

/// Random observations and a rollout of `policy` over them, with random rewards.
pub fn random_episode<R: Rng + ?Sized>(policy: &PolicyNetwork, obs_dim: usize, len: usize, rng: &mut R) -> Result<Episode> {
    let mut mem = policy.initial_memory();
    let mut steps = Vec::with_capacity(len);
    for _ in 0..len {
        let observation: Vec<f64> = (0..obs_dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let dist = policy.act(&mut mem, &observation)?;
        let (action, behavior_prob) = sample_action(&dist, rng);
        steps.push(Step {
            observation,
            action,
            behavior_prob,
            reward: rng.random_range(-1.0..1.0),
        });
    }
    Episode::new(0, steps, true)
}

/// Finite-difference checks of the policy log-probability gradient and of the
/// value network over `episodes` random episodes of length 1..=`max_len`.
pub fn gradient_check(arch: &Architecture, episodes: usize, max_len: usize, seed: u64) -> Result<(GradCheckReport, GradCheckReport)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut policy_report = GradCheckReport::default();
    let mut value_report = GradCheckReport::default();
    for _ in 0..episodes {
        let policy = PolicyNetwork::init(arch.clone(), &mut rng);
        let value = ValueNetwork::matching(&policy, &mut rng);
        let len = rng.random_range(1..=max_len);
        let ep = random_episode(&policy, arch.input_dim, len, &mut rng)?;
        let coefs: Vec<f64> = (0..len).map(|_| rng.random_range(-2.0..2.0)).collect();
        policy_report.merge(&check_log_prob(&policy, &ep.observations(), &ep.actions(), &coefs)?);
        let upstream: Vec<Vec<f64>> = coefs.iter().map(|&c| vec![c]).collect();
        value_report.merge(&check_network(value.network(), &ep.observations(), &upstream)?);
    }
    Ok((policy_report, value_report))
}

/// Example tabular policies and value used by the tiny-process checks.
pub fn tiny_fixture() -> (TinyMdp, PolicyNetwork, PolicyNetwork, ValueNetwork) {
    let pi = tiny_mdp::tabular_policy([[[0.3, -0.2], [1.0, 0.0]], [[0.0, 0.5], [-1.0, 0.2]]]);
    let mu = tiny_mdp::tabular_policy([[[-0.5, 0.4], [0.0, 0.9]], [[0.7, -0.3], [0.2, 0.2]]]);
    let value = tiny_mdp::tabular_value([[0.4, -1.0], [2.0, 0.3]]);
    (TinyMdp::default(), pi, mu, value)
}

fn gradients(name: &'static str, arch: Architecture) -> CheckResult {
    match gradient_check(&arch, 3, 6, 17) {
        Ok((p, v)) => CheckResult::new(
            name,
            p.passed() && v.passed(),
            format!("max rel err policy {:.2e}, value {:.2e}", p.max_rel_err, v.max_rel_err),
        ),
        Err(e) => CheckResult::new(name, false, e.to_string()),
    }
}

fn offpolicy_expectation() -> Result<CheckResult> {
    let (mdp, pi, mu, value) = tiny_fixture();
    let on = tiny_mdp::expected_onpolicy_value_update(&mdp, &pi, &value, 0.9)?;
    let off = tiny_mdp::expected_offpolicy_value_update(&mdp, &pi, &mu, &value, 0.9, &mut RatioClamp::new())?;
    let diff = on.max_abs_diff(&off);
    Ok(CheckResult::new("offpolicy value expectation", diff <= 1e-10, format!("max diff {diff:.2e}")))
}

fn baseline_invariance() -> Result<CheckResult> {
    let (mdp, pi, _, _) = tiny_fixture();
    let g0 = tiny_mdp::expected_policy_gradient(&mdp, &pi, 0.9, 0.0)?;
    let mut worst: f64 = 0.0;
    for b in [-2.0, 0.7, 5.0] {
        worst = worst.max(g0.max_abs_diff(&tiny_mdp::expected_policy_gradient(&mdp, &pi, 0.9, b)?));
    }
    Ok(CheckResult::new("constant baseline invariance", worst <= 1e-10, format!("max diff {worst:.2e}")))
}

fn onpolicy_reduction() -> Result<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let arch = Architecture::lstm(4, 5, 3);
    let policy = PolicyNetwork::init(arch, &mut rng);
    let value = ValueNetwork::matching(&policy, &mut rng);
    let mut ok = true;
    for len in 1..=6 {
        let ep = random_episode(&policy, 4, len, &mut rng)?;
        let on = update_m1(&policy, &value, &[&ep], 0.9)?;
        ok &= update_value_offpolicy(&value, &ep, &policy, 0.9, &mut RatioClamp::new())? == on.value;
        let obs = ep.observations();
        let pt = policy.forward(&obs)?;
        let td = td_coefficients(&value.forward(&obs)?.values, &ep.rewards(), &vec![1.0; len], 0.9);
        ok &= update_policy_offpolicy(&policy, &value, &ep, 0.9)? == policy.log_prob_gradients(&pt, &ep.actions(), &td)?;
    }
    Ok(CheckResult::new("off-policy updates with mu = pi are on-policy", ok, ""))
}

fn checkpoint_round_trip() -> Result<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let policy = PolicyNetwork::init(Architecture::lstm(12, 8, 5), &mut rng);
    let back = load_params(&save_params(policy.params()))?;
    Ok(CheckResult::new("checkpoint round trip", &back == policy.params(), ""))
}

fn dialog_trace() -> Result<CheckResult> {
    let user = UserModel {
        p_answer: 1.0,
        p_oversupply: 0.0,
        p_ignore: 0.0,
        p_giveup_turn: 0.0,
        p_uncovered_goal: 0.0,
        p_yes_correct: 1.0,
        p_no_wrong: 0.0,
        p_restate_on_no: 0.0,
        p_early_info: 0.0,
        p_synonym: 0.0,
    };
    let mut env = DialogEnv::new(DialogConfig {
        user,
        ..DialogConfig::default()
    })?;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    env.reset(&mut rng);
    let mut rewards = Vec::new();
    for a in [DialogAction::AskName, DialogAction::AskPhoneType, DialogAction::ConfirmBoth, DialogAction::PlaceCall] {
        rewards.push(env.step(a.index(), &mut rng)?.reward);
    }
    Ok(CheckResult::new(
        "dialog compliant-user trace",
        rewards == [0.0, 0.0, 0.0, 1.0] && env.is_done(),
        format!("rewards {rewards:?}"),
    ))
}

fn lander_free_fall() -> Result<CheckResult> {
    let mut env = LanderEnv::new(LanderConfig::default())?;
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    env.reset(&mut rng);
    let mut steps = 0;
    let last = loop {
        let tr = env.step(0, &mut rng)?;
        steps += 1;
        if tr.done {
            break tr.reward;
        }
    };
    Ok(CheckResult::new(
        "lander free fall crashes",
        last == CRASH_REWARD && steps == 20,
        format!("{steps} steps, terminal reward {last}"),
    ))
}

type Check = (&'static str, fn() -> Result<CheckResult>);

pub fn run_all() -> Vec<CheckResult> {
    let fallible: [Check; 6] = [
        ("offpolicy value expectation", offpolicy_expectation),
        ("constant baseline invariance", baseline_invariance),
        ("off-policy updates with mu = pi are on-policy", onpolicy_reduction),
        ("checkpoint round trip", checkpoint_round_trip),
        ("dialog compliant-user trace", dialog_trace),
        ("lander free fall crashes", lander_free_fall),
    ];
    let mut out = vec![
        gradients("gradients lstm-32", Architecture::lstm(12, 32, 5)),
        gradients("gradients feed-forward 16x16 relu", Architecture::feed_forward(5, vec![16, 16], Activation::Relu, 4)),
    ];
    for (name, f) in fallible {
        out.push(f().unwrap_or_else(|e| CheckResult::new(name, false, e.to_string())));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_selftests_pass() {
        for r in run_all() {
            assert!(r.passed, "{}: {}", r.name, r.detail);
        }
    }
}
