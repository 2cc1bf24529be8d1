//! Central finite differences against the analytic backward pass.
//!
//! The scalar probed is always a linear functional of the forward outputs,
//! `L = Σ_t u_t · y_t` (or `Σ_t c_t log π(a_t|h_t)` for policies), evaluated
//! with the forward pass only.

use crate::error::Result;
use crate::nets::{Network, PolicyNetwork};
use crate::nn::params::GradientSet;

pub const FD_STEP: f64 = 1e-5;
pub const REL_ERR_TOLERANCE: f64 = 1e-4;
/// Per unit of `max(1, |L|)`, gradient magnitudes below this are compared
/// absolutely: with a 1e-5 step the difference quotient carries roughly
/// `1e-16·|L|/1e-5` of rounding noise.
pub const REL_ERR_FLOOR: f64 = 1e-5;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub checked: usize,
    /// Coordinates whose ±step straddled a ReLU kink (derivative undefined there).
    pub skipped_kinks: usize,
}

impl GradCheckReport {
    pub fn merge(&mut self, other: &GradCheckReport) {
        self.max_rel_err = self.max_rel_err.max(other.max_rel_err);
        self.checked += other.checked;
        self.skipped_kinks += other.skipped_kinks;
    }

    pub fn passed(&self) -> bool {
        self.max_rel_err < REL_ERR_TOLERANCE
    }
}

/// `|a − n| / max(|a|, |n|, floor)`.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

fn check<F>(net: &Network, analytic: &GradientSet, mut loss: F) -> Result<GradCheckReport>
where
    F: FnMut(&Network) -> Result<(f64, Vec<bool>)>,
{
    let mut report = GradCheckReport::default();
    let floor = REL_ERR_FLOOR * loss(net)?.0.abs().max(1.0);
    let mut probe = net.clone();
    for i in 0..net.params().num_values() {
        let x = net.params().get_flat(i);
        probe.params_mut().set_flat(i, x + FD_STEP);
        let (plus, sig_plus) = loss(&probe)?;
        probe.params_mut().set_flat(i, x - FD_STEP);
        let (minus, sig_minus) = loss(&probe)?;
        probe.params_mut().set_flat(i, x);
        if sig_plus != sig_minus {
            report.skipped_kinks += 1;
            continue;
        }
        let numeric = (plus - minus) / (2.0 * FD_STEP);
        report.max_rel_err = report.max_rel_err.max(relative_error(analytic.get_flat(i), numeric, floor));
        report.checked += 1;
    }
    Ok(report)
}

/// Checks `Network::backward` for `L = Σ_t upstream[t] · outputs[t]`.
pub fn check_network<O: AsRef<[f64]>>(
    net: &Network,
    observations: &[O],
    upstream: &[Vec<f64>],
) -> Result<GradCheckReport> {
    let trace = net.forward_trace(observations)?;
    let analytic = net.backward(&trace, upstream)?;
    check(net, &analytic, |n| {
        let tr = n.forward_trace(observations)?;
        let l = tr
            .outputs()
            .iter()
            .zip(upstream)
            .map(|(y, u)| y.iter().zip(u).map(|(a, b)| a * b).sum::<f64>())
            .sum();
        Ok((l, tr.kink_signature()))
    })
}

/// Checks `PolicyNetwork::log_prob_gradients` for `L = Σ_t c_t log π(a_t|h_t)`.
pub fn check_log_prob<O: AsRef<[f64]>>(
    policy: &PolicyNetwork,
    observations: &[O],
    actions: &[usize],
    coefs: &[f64],
) -> Result<GradCheckReport> {
    let pt = policy.forward(observations)?;
    let analytic = policy.log_prob_gradients(&pt, actions, coefs)?;
    check(policy.network(), &analytic, |n| {
        let tr = n.forward_trace(observations)?;
        let mut l = 0.0;
        for ((logits, &a), &c) in tr.outputs().iter().zip(actions).zip(coefs) {
            // log-softmax, computed directly from the logits
            let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + logits.iter().map(|z| (z - m).exp()).sum::<f64>().ln();
            l += c * (logits[a] - lse);
        }
        Ok((l, tr.kink_signature()))
    })
}
