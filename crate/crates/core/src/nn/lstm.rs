//! Standard LSTM cell without peepholes.
//!
//! Gate pre-activations are stacked as `[input, forget, candidate, output]`, each
//! block `hidden` rows tall, in a `[4H, I]` input matrix, a `[4H, H]` recurrent
//! matrix and a `[4H]` bias.

use super::ops::{matvec_add, matvec_t_add, outer_add, sigmoid};
use crate::error::{Error, Result};

/// Latent state `(h, c)` carried between timesteps.
#[derive(Clone, Debug, PartialEq)]
pub struct RecurrentState {
    pub hidden: Vec<f64>,
    pub cell: Vec<f64>,
}

impl RecurrentState {
    /// The fixed initial state s_0 (all zeros).
    pub fn zeros(hidden: usize) -> Self {
        RecurrentState {
            hidden: vec![0.0; hidden],
            cell: vec![0.0; hidden],
        }
    }

    pub fn size(&self) -> usize {
        self.hidden.len()
    }
}

/// Borrowed view of one LSTM layer's weights.
#[derive(Clone, Copy, Debug)]
pub struct LstmWeights<'a> {
    pub input_dim: usize,
    pub hidden: usize,
    pub w_in: &'a [f64],
    pub w_rec: &'a [f64],
    pub bias: &'a [f64],
}

impl<'a> LstmWeights<'a> {
    pub fn new(
        input_dim: usize,
        hidden: usize,
        w_in: &'a [f64],
        w_rec: &'a [f64],
        bias: &'a [f64],
    ) -> Result<Self> {
        let g = 4 * hidden;
        if w_in.len() != g * input_dim || w_rec.len() != g * hidden || bias.len() != g {
            return Err(Error::config(format!(
                "LSTM weights do not match input {input_dim} / hidden {hidden}: \
                 got {}, {}, {} values",
                w_in.len(),
                w_rec.len(),
                bias.len()
            )));
        }
        Ok(LstmWeights {
            input_dim,
            hidden,
            w_in,
            w_rec,
            bias,
        })
    }
}

/// Everything the backward pass needs from one forward step.
#[derive(Clone, Debug)]
pub struct LstmCache {
    pub(crate) input: Vec<f64>,
    pub(crate) h_prev: Vec<f64>,
    pub(crate) c_prev: Vec<f64>,
    /// Post-nonlinearity gates, `[i, f, g, o]` stacked.
    pub(crate) gates: Vec<f64>,
    pub(crate) tanh_c: Vec<f64>,
}

pub fn lstm_step(
    state: &RecurrentState,
    input: &[f64],
    weights: &LstmWeights<'_>,
) -> Result<RecurrentState> {
    check_dims(state, input, weights)?;
    Ok(step_cached(state, input, weights).0)
}

fn check_dims(state: &RecurrentState, input: &[f64], w: &LstmWeights<'_>) -> Result<()> {
    if input.len() != w.input_dim {
        return Err(Error::config(format!(
            "LSTM input has length {}, expected {}",
            input.len(),
            w.input_dim
        )));
    }
    if state.hidden.len() != w.hidden || state.cell.len() != w.hidden {
        return Err(Error::config(format!(
            "LSTM state has size {}/{}, expected {}",
            state.hidden.len(),
            state.cell.len(),
            w.hidden
        )));
    }
    Ok(())
}

pub(crate) fn step_cached(
    state: &RecurrentState,
    input: &[f64],
    w: &LstmWeights<'_>,
) -> (RecurrentState, LstmCache) {
    let h = w.hidden;
    let mut gates = w.bias.to_vec();
    matvec_add(w.w_in, input, &mut gates);
    matvec_add(w.w_rec, &state.hidden, &mut gates);
    for (k, z) in gates.iter_mut().enumerate() {
        *z = if (2 * h..3 * h).contains(&k) {
            z.tanh()
        } else {
            sigmoid(*z)
        };
    }
    let mut cell = vec![0.0; h];
    let mut hidden = vec![0.0; h];
    let mut tanh_c = vec![0.0; h];
    for j in 0..h {
        let (i, f, g, o) = (gates[j], gates[h + j], gates[2 * h + j], gates[3 * h + j]);
        cell[j] = f * state.cell[j] + i * g;
        tanh_c[j] = cell[j].tanh();
        hidden[j] = o * tanh_c[j];
    }
    let cache = LstmCache {
        input: input.to_vec(),
        h_prev: state.hidden.clone(),
        c_prev: state.cell.clone(),
        gates,
        tanh_c,
    };
    (RecurrentState { hidden, cell }, cache)
}

/// Accumulated gradients for one LSTM layer, laid out like [`LstmWeights`].
pub(crate) struct LstmGrads<'a> {
    pub w_in: &'a mut [f64],
    pub w_rec: &'a mut [f64],
    pub bias: &'a mut [f64],
}

/// Backpropagation through time over a full cached sequence.
///
/// `d_hidden[t]` is the loss gradient w.r.t. the hidden output at step `t` coming
/// from the layer above. Returns the gradient w.r.t. each step's input.
pub(crate) fn backward_sequence(
    caches: &[LstmCache],
    d_hidden: &[Vec<f64>],
    w: &LstmWeights<'_>,
    grads: &mut LstmGrads<'_>,
) -> Vec<Vec<f64>> {
    let h = w.hidden;
    let mut dh_next = vec![0.0; h];
    let mut dc_next = vec![0.0; h];
    let mut dz = vec![0.0; 4 * h];
    let mut d_inputs = vec![Vec::new(); caches.len()];
    for t in (0..caches.len()).rev() {
        let c = &caches[t];
        for j in 0..h {
            let (i, f, g, o) = (c.gates[j], c.gates[h + j], c.gates[2 * h + j], c.gates[3 * h + j]);
            let dh = d_hidden[t][j] + dh_next[j];
            let tc = c.tanh_c[j];
            let dc = dh * o * (1.0 - tc * tc) + dc_next[j];
            dz[j] = dc * g * i * (1.0 - i);
            dz[h + j] = dc * c.c_prev[j] * f * (1.0 - f);
            dz[2 * h + j] = dc * i * (1.0 - g * g);
            dz[3 * h + j] = dh * tc * o * (1.0 - o);
            dc_next[j] = dc * f;
        }
        outer_add(grads.w_in, &dz, &c.input);
        outer_add(grads.w_rec, &dz, &c.h_prev);
        grads.bias.iter_mut().zip(&dz).for_each(|(b, d)| *b += d);

        dh_next.iter_mut().for_each(|v| *v = 0.0);
        matvec_t_add(w.w_rec, &dz, &mut dh_next);
        let mut dx = vec![0.0; w.input_dim];
        matvec_t_add(w.w_in, &dz, &mut dx);
        d_inputs[t] = dx;
    }
    d_inputs
}

#[cfg(test)]
mod tests {
    use super::*;

    fn weights(input: usize, hidden: usize, fill: f64, forget_bias: f64) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let mut bias = vec![fill; 4 * hidden];
        bias[hidden..2 * hidden].iter_mut().for_each(|b| *b = forget_bias);
        (vec![fill; 4 * hidden * input], vec![fill; 4 * hidden * hidden], bias)
    }

    #[test]
    fn zero_params_keep_zero_state() {
        let (wi, wr, b) = weights(3, 4, 0.0, 0.0);
        let w = LstmWeights::new(3, 4, &wi, &wr, &b).unwrap();
        let (s, cache) = step_cached(&RecurrentState::zeros(4), &[1.0, -2.0, 5.0], &w);
        assert_eq!(s, RecurrentState::zeros(4));
        assert!(cache.gates[..4].iter().all(|&g| g == 0.5));
        assert!(cache.gates[8..12].iter().all(|&g| g == 0.0));
    }

    #[test]
    fn large_forget_bias_with_zero_input_keeps_cell_zero() {
        let (wi, wr, b) = weights(2, 3, 0.0, 10.0);
        let w = LstmWeights::new(2, 3, &wi, &wr, &b).unwrap();
        let s = lstm_step(&RecurrentState::zeros(3), &[0.0, 0.0], &w).unwrap();
        assert!(s.cell.iter().all(|c| c.abs() < 1e-12));
    }

    #[test]
    fn deterministic() {
        let wi: Vec<f64> = (0..24).map(|k| (k as f64 * 0.37).sin()).collect();
        let wr: Vec<f64> = (0..36).map(|k| (k as f64 * 0.11).cos() * 0.3).collect();
        let b: Vec<f64> = (0..12).map(|k| k as f64 * 0.01).collect();
        let w = LstmWeights::new(2, 3, &wi, &wr, &b).unwrap();
        let s0 = RecurrentState::zeros(3);
        let a = lstm_step(&s0, &[0.3, -0.7], &w).unwrap();
        let b2 = lstm_step(&s0, &[0.3, -0.7], &w).unwrap();
        assert_eq!(a.hidden.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                   b2.hidden.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
        assert_eq!(a.cell, b2.cell);
    }

    #[test]
    fn dimension_mismatch_is_config_error() {
        let (wi, wr, b) = weights(2, 3, 0.0, 0.0);
        let w = LstmWeights::new(2, 3, &wi, &wr, &b).unwrap();
        assert!(matches!(
            lstm_step(&RecurrentState::zeros(3), &[0.0; 5], &w),
            Err(Error::Config(_))
        ));
        assert!(LstmWeights::new(2, 4, &wi, &wr, &b).is_err());
    }
}
