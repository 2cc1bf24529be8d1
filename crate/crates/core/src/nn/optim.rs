//! Adadelta and Adam, operating on whole [`ParameterSet`]s.
//!
//! Both minimize: parameters move against the supplied gradient. Learners that
//! want ascent pass a negated direction.

use super::params::{GradientSet, ParameterSet};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum OptimizerKind {
    Adadelta { rho: f64 },
    Adam { beta1: f64, beta2: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState {
    kind: OptimizerKind,
    step_size: f64,
    epsilon: f64,
    /// Adadelta: E[g²]. Adam: first moment.
    first: Vec<Vec<f64>>,
    /// Adadelta: E[Δx²]. Adam: second moment.
    second: Vec<Vec<f64>>,
    step_count: u64,
}

impl OptimizerState {
    pub fn adadelta(params: &ParameterSet, step_size: f64, rho: f64, epsilon: f64) -> Self {
        Self::with_kind(params, OptimizerKind::Adadelta { rho }, step_size, epsilon)
    }

    /// Adam with the usual defaults β1 = 0.9, β2 = 0.999, ε = 1e-8.
    pub fn adam(params: &ParameterSet, step_size: f64) -> Self {
        Self::adam_with(params, step_size, 0.9, 0.999, 1e-8)
    }

    pub fn adam_with(
        params: &ParameterSet,
        step_size: f64,
        beta1: f64,
        beta2: f64,
        epsilon: f64,
    ) -> Self {
        Self::with_kind(params, OptimizerKind::Adam { beta1, beta2 }, step_size, epsilon)
    }

    fn with_kind(params: &ParameterSet, kind: OptimizerKind, step_size: f64, epsilon: f64) -> Self {
        let zeros: Vec<Vec<f64>> = params.entries().iter().map(|e| vec![0.0; e.len()]).collect();
        OptimizerState {
            kind,
            step_size,
            epsilon,
            first: zeros.clone(),
            second: zeros,
            step_count: 0,
        }
    }

    pub fn kind(&self) -> OptimizerKind {
        self.kind
    }

    pub fn step_size(&self) -> f64 {
        self.step_size
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn first_moments(&self) -> &[Vec<f64>] {
        &self.first
    }

    pub fn second_moments(&self) -> &[Vec<f64>] {
        &self.second
    }

    /// Applies one update. On a non-finite result neither the parameters nor
    /// the accumulators are touched.
    pub fn step(&mut self, params: &mut ParameterSet, grads: &GradientSet) -> Result<()> {
        if !grads.is_congruent_with(params) || self.first.len() != params.len() {
            return Err(Error::config("gradient / optimizer state not congruent with parameters"));
        }
        let mut first = self.first.clone();
        let mut second = self.second.clone();
        let mut updated: Vec<Vec<f64>> = params.entries().iter().map(|e| e.values().to_vec()).collect();
        let t = self.step_count + 1;
        let (alpha, eps) = (self.step_size, self.epsilon);

        for (k, g) in grads.entries().iter().enumerate() {
            let g = g.values();
            let (m, v, x) = (&mut first[k], &mut second[k], &mut updated[k]);
            match self.kind {
                OptimizerKind::Adadelta { rho } => {
                    for i in 0..g.len() {
                        m[i] = rho * m[i] + (1.0 - rho) * g[i] * g[i];
                        let delta = g[i] * (v[i] + eps).sqrt() / (m[i] + eps).sqrt();
                        v[i] = rho * v[i] + (1.0 - rho) * delta * delta;
                        x[i] -= alpha * delta;
                    }
                }
                OptimizerKind::Adam { beta1, beta2 } => {
                    let c1 = 1.0 - beta1.powf(t as f64);
                    let c2 = 1.0 - beta2.powf(t as f64);
                    for i in 0..g.len() {
                        m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
                        v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
                        let m_hat = m[i] / c1;
                        let v_hat = v[i] / c2;
                        x[i] -= alpha * m_hat / (v_hat.sqrt() + eps);
                    }
                }
            }
        }

        let finite = |sets: &[Vec<f64>]| sets.iter().all(|s| s.iter().all(|v| v.is_finite()));
        if !finite(&updated) || !finite(&first) || !finite(&second) {
            return Err(Error::numeric(format!(
                "optimizer step {t} produced non-finite values; parameters left unchanged"
            )));
        }
        for (k, vals) in updated.into_iter().enumerate() {
            params.entry_mut(k).values_mut().copy_from_slice(&vals);
        }
        self.first = first;
        self.second = second;
        self.step_count = t;
        Ok(())
    }
}
