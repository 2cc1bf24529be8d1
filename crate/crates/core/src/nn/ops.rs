use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Tanh,
    Linear,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
            Activation::Linear => x,
        }
    }

    /// Derivative expressed through the pre-activation `z` and output `y`.
    pub fn derivative(self, z: f64, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
            Activation::Linear => 1.0,
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// `out = W x + b`, where `W` is row-major `[out.len(), x.len()]`.
pub(crate) fn affine_into(weight: &[f64], bias: &[f64], x: &[f64], out: &mut [f64]) {
    let cols = x.len();
    for (r, o) in out.iter_mut().enumerate() {
        let row = &weight[r * cols..(r + 1) * cols];
        *o = bias[r] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
    }
}

/// `out += W x` (no bias).
pub(crate) fn matvec_add(weight: &[f64], x: &[f64], out: &mut [f64]) {
    let cols = x.len();
    for (r, o) in out.iter_mut().enumerate() {
        let row = &weight[r * cols..(r + 1) * cols];
        *o += row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
    }
}

/// `out += Wᵀ d`.
pub(crate) fn matvec_t_add(weight: &[f64], d: &[f64], out: &mut [f64]) {
    let cols = out.len();
    for (r, &dr) in d.iter().enumerate() {
        if dr == 0.0 {
            continue;
        }
        let row = &weight[r * cols..(r + 1) * cols];
        for (o, w) in out.iter_mut().zip(row) {
            *o += w * dr;
        }
    }
}

/// `G += d xᵀ`.
pub(crate) fn outer_add(grad: &mut [f64], d: &[f64], x: &[f64]) {
    let cols = x.len();
    for (r, &dr) in d.iter().enumerate() {
        if dr == 0.0 {
            continue;
        }
        let row = &mut grad[r * cols..(r + 1) * cols];
        for (g, v) in row.iter_mut().zip(x) {
            *g += dr * v;
        }
    }
}

/// One fully connected layer: `activation(W·input + b)`.
pub fn dense_forward(
    input: &[f64],
    weight: &[f64],
    bias: &[f64],
    activation: Activation,
) -> Result<Vec<f64>> {
    let rows = bias.len();
    if rows == 0 || weight.len() != rows * input.len() {
        return Err(Error::config(format!(
            "dense layer expects {} weights for {} outputs and input of length {}, got {}",
            rows * input.len(),
            rows,
            input.len(),
            weight.len()
        )));
    }
    let mut out = vec![0.0; rows];
    affine_into(weight, bias, input, &mut out);
    out.iter_mut().for_each(|v| *v = activation.apply(*v));
    Ok(out)
}

/// Numerically stable softmax (max-subtraction).
pub fn softmax(logits: &[f64]) -> Result<Vec<f64>> {
    if logits.is_empty() {
        return Err(Error::config("softmax of an empty vector"));
    }
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(Error::numeric(format!("non-finite logits {logits:?}")));
    }
    let mut out = vec![0.0; logits.len()];
    softmax_into(logits, &mut out);
    Ok(out)
}

pub(crate) fn softmax_into(logits: &[f64], out: &mut [f64]) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, &l) in out.iter_mut().zip(logits) {
        *o = (l - max).exp();
        sum += *o;
    }
    out.iter_mut().for_each(|o| *o /= sum);
}
