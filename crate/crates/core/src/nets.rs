//! Policy and value networks.
//!
//! Both are a body (LSTM or stack of dense layers) followed by a linear head.
//! The policy head feeds a softmax over actions, the value head is a single
//! linear unit. Learners run one forward pass per episode, keep the [`Trace`],
//! and then ask for weighted sums of per-timestep gradients in a single
//! backward pass.

use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::lstm::{self, LstmCache, LstmGrads, LstmWeights, RecurrentState};
use crate::nn::ops::{affine_into, matvec_t_add, outer_add, softmax_into, Activation};
use crate::nn::params::{Entry, GradientSet, ParameterSet};

#[derive(Clone, Debug, PartialEq)]
pub enum Body {
    Lstm { hidden: usize },
    FeedForward { layers: Vec<usize>, activation: Activation },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Architecture {
    pub input_dim: usize,
    pub body: Body,
    pub outputs: usize,
}

impl Architecture {
    pub fn lstm(input_dim: usize, hidden: usize, outputs: usize) -> Self {
        Architecture {
            input_dim,
            body: Body::Lstm { hidden },
            outputs,
        }
    }

    pub fn feed_forward(input_dim: usize, layers: Vec<usize>, activation: Activation, outputs: usize) -> Self {
        Architecture {
            input_dim,
            body: Body::FeedForward { layers, activation },
            outputs,
        }
    }

    /// Same body, different head width.
    pub fn with_outputs(&self, outputs: usize) -> Self {
        Architecture {
            outputs,
            ..self.clone()
        }
    }

    pub fn is_recurrent(&self) -> bool {
        matches!(self.body, Body::Lstm { .. })
    }

    fn feature_dim(&self) -> usize {
        match &self.body {
            Body::Lstm { hidden } => *hidden,
            Body::FeedForward { layers, .. } => layers.last().copied().unwrap_or(self.input_dim),
        }
    }

    /// Entry names and shapes in parameter order.
    pub fn layout(&self) -> Vec<(String, Vec<usize>)> {
        let mut out = Vec::new();
        match &self.body {
            Body::Lstm { hidden } => {
                let h = *hidden;
                out.push(("lstm.w_in".into(), vec![4 * h, self.input_dim]));
                out.push(("lstm.w_rec".into(), vec![4 * h, h]));
                out.push(("lstm.bias".into(), vec![4 * h]));
            }
            Body::FeedForward { layers, .. } => {
                let mut fan_in = self.input_dim;
                for (k, &width) in layers.iter().enumerate() {
                    out.push((format!("dense{k}.weight"), vec![width, fan_in]));
                    out.push((format!("dense{k}.bias"), vec![width]));
                    fan_in = width;
                }
            }
        }
        out.push(("head.weight".into(), vec![self.outputs, self.feature_dim()]));
        out.push(("head.bias".into(), vec![self.outputs]));
        out
    }

    /// Recovers an architecture from a checkpoint's entry names and shapes.
    /// Feed-forward activation is not stored and must be supplied.
    pub fn infer(params: &ParameterSet, activation: Activation) -> Result<Self> {
        let shape = |name: &str| {
            params
                .get(name)
                .map(|e| e.shape().to_vec())
                .ok_or_else(|| Error::config(format!("checkpoint lacks entry `{name}`")))
        };
        let head = shape("head.weight")?;
        if head.len() != 2 {
            return Err(Error::config("head.weight must be two-dimensional"));
        }
        let arch = if params.get("lstm.w_in").is_some() {
            let w_in = shape("lstm.w_in")?;
            Architecture::lstm(w_in[1], w_in[0] / 4, head[0])
        } else {
            let mut layers = Vec::new();
            let mut input_dim = None;
            while let Some(e) = params.get(&format!("dense{}.weight", layers.len())) {
                input_dim.get_or_insert(e.shape()[1]);
                layers.push(e.shape()[0]);
            }
            Architecture::feed_forward(input_dim.unwrap_or(head[1]), layers, activation, head[0])
        };
        let congruent = arch.layout().len() == params.len()
            && arch
                .layout()
                .iter()
                .zip(params.entries())
                .all(|((n, s), e)| n == e.name() && s.as_slice() == e.shape());
        if !congruent {
            return Err(Error::config("checkpoint entries do not form a known architecture"));
        }
        Ok(arch)
    }
}

/// Per-step network memory while acting online.
#[derive(Clone, Debug, PartialEq)]
pub enum Memory {
    Recurrent(RecurrentState),
    Stateless,
}

#[derive(Clone, Debug)]
struct DenseCache {
    input: Vec<f64>,
    pre: Vec<f64>,
    post: Vec<f64>,
}

#[derive(Clone, Debug)]
enum StepCache {
    Lstm(LstmCache),
    FeedForward(Vec<DenseCache>),
}

/// Recorded forward pass over a whole episode.
#[derive(Clone, Debug)]
pub struct Trace {
    steps: Vec<StepCache>,
    features: Vec<Vec<f64>>,
    outputs: Vec<Vec<f64>>,
}

impl Trace {
    pub fn len(&self) -> usize {
        self.outputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outputs.is_empty()
    }

    /// Raw head outputs (logits or values) per timestep.
    pub fn outputs(&self) -> &[Vec<f64>] {
        &self.outputs
    }

    /// Which dense pre-activations were positive. Two traces with different
    /// signatures sit on different sides of a ReLU kink.
    pub fn kink_signature(&self) -> Vec<bool> {
        self.steps
            .iter()
            .flat_map(|s| match s {
                StepCache::FeedForward(layers) => layers.iter().flat_map(|l| l.pre.iter().map(|&z| z > 0.0)).collect(),
                StepCache::Lstm(_) => Vec::new(),
            })
            .collect()
    }
}

/// A body plus linear head with its parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    arch: Architecture,
    params: ParameterSet,
}

const LSTM_INIT: f64 = 0.08;
const FORGET_BIAS: f64 = 1.0;

impl Network {
    pub fn zeros(arch: Architecture) -> Self {
        let mut params = ParameterSet::new();
        for (name, shape) in arch.layout() {
            params.push(Entry::zeros(name, shape).expect("layout shapes are valid")).expect("unique names");
        }
        Network { arch, params }
    }

    /// Uniform ±0.08 for LSTM weights (forget bias 1.0), He-uniform for ReLU
    /// layers, Glorot-uniform for the head; biases otherwise zero.
    pub fn init<R: Rng + ?Sized>(arch: Architecture, rng: &mut R) -> Self {
        let mut net = Network::zeros(arch);
        let hidden_act = match &net.arch.body {
            Body::FeedForward { activation, .. } => Some(*activation),
            Body::Lstm { .. } => None,
        };
        let recurrent = net.arch.is_recurrent();
        for k in 0..net.params.len() {
            let entry = net.params.entry_mut(k);
            let name = entry.name().to_string();
            let shape = entry.shape().to_vec();
            let vals = entry.values_mut();
            if name == "lstm.bias" {
                let h = shape[0] / 4;
                vals[h..2 * h].iter_mut().for_each(|v| *v = FORGET_BIAS);
                continue;
            }
            if shape.len() != 2 {
                continue;
            }
            let (fan_out, fan_in) = (shape[0] as f64, shape[1] as f64);
            let limit = if recurrent {
                LSTM_INIT
            } else if name.starts_with("head") || hidden_act != Some(Activation::Relu) {
                (6.0 / (fan_in + fan_out)).sqrt()
            } else {
                (6.0 / fan_in).sqrt()
            };
            vals.iter_mut().for_each(|v| *v = rng.random_range(-limit..=limit));
        }
        net
    }

    pub fn from_params(arch: Architecture, params: ParameterSet) -> Result<Self> {
        let layout = arch.layout();
        let ok = layout.len() == params.len()
            && layout
                .iter()
                .zip(params.entries())
                .all(|((n, s), e)| n == e.name() && s.as_slice() == e.shape());
        if !ok {
            return Err(Error::config("parameters do not match architecture layout"));
        }
        Ok(Network { arch, params })
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn params(&self) -> &ParameterSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParameterSet {
        &mut self.params
    }

    pub fn initial_memory(&self) -> Memory {
        match self.arch.body {
            Body::Lstm { hidden } => Memory::Recurrent(RecurrentState::zeros(hidden)),
            Body::FeedForward { .. } => Memory::Stateless,
        }
    }

    fn lstm_weights(&self) -> LstmWeights<'_> {
        let Body::Lstm { hidden } = self.arch.body else {
            unreachable!("lstm_weights on a feed-forward body")
        };
        LstmWeights {
            input_dim: self.arch.input_dim,
            hidden,
            w_in: self.params.entry(0).values(),
            w_rec: self.params.entry(1).values(),
            bias: self.params.entry(2).values(),
        }
    }

    fn head_index(&self) -> usize {
        self.params.len() - 2
    }

    fn check_input(&self, obs: &[f64]) -> Result<()> {
        if obs.len() != self.arch.input_dim {
            return Err(Error::config(format!(
                "observation has length {}, network expects {}",
                obs.len(),
                self.arch.input_dim
            )));
        }
        Ok(())
    }

    fn step_inner(&self, memory: &mut Memory, obs: &[f64]) -> Result<(StepCache, Vec<f64>, Vec<f64>)> {
        self.check_input(obs)?;
        let (cache, feature) = match (&self.arch.body, memory) {
            (Body::Lstm { .. }, Memory::Recurrent(state)) => {
                let (next, cache) = lstm::step_cached(state, obs, &self.lstm_weights());
                let feature = next.hidden.clone();
                *state = next;
                (StepCache::Lstm(cache), feature)
            }
            (Body::FeedForward { layers, activation }, Memory::Stateless) => {
                let mut caches = Vec::with_capacity(layers.len());
                let mut x = obs.to_vec();
                for (k, &width) in layers.iter().enumerate() {
                    let mut pre = vec![0.0; width];
                    affine_into(
                        self.params.entry(2 * k).values(),
                        self.params.entry(2 * k + 1).values(),
                        &x,
                        &mut pre,
                    );
                    let post: Vec<f64> = pre.iter().map(|&z| activation.apply(z)).collect();
                    caches.push(DenseCache {
                        input: std::mem::take(&mut x),
                        pre,
                        post: post.clone(),
                    });
                    x = post;
                }
                (StepCache::FeedForward(caches), x)
            }
            _ => return Err(Error::config("memory kind does not match network body")),
        };
        let h = self.head_index();
        let mut out = vec![0.0; self.arch.outputs];
        affine_into(self.params.entry(h).values(), self.params.entry(h + 1).values(), &feature, &mut out);
        Ok((cache, feature, out))
    }

    /// Advances the memory by one observation and returns the raw head output.
    pub fn step(&self, memory: &mut Memory, obs: &[f64]) -> Result<Vec<f64>> {
        Ok(self.step_inner(memory, obs)?.2)
    }

    pub fn forward_trace<O: AsRef<[f64]>>(&self, observations: &[O]) -> Result<Trace> {
        let mut memory = self.initial_memory();
        let mut trace = Trace {
            steps: Vec::with_capacity(observations.len()),
            features: Vec::with_capacity(observations.len()),
            outputs: Vec::with_capacity(observations.len()),
        };
        for obs in observations {
            let (cache, feature, out) = self.step_inner(&mut memory, obs.as_ref())?;
            trace.steps.push(cache);
            trace.features.push(feature);
            trace.outputs.push(out);
        }
        Ok(trace)
    }

    /// Reverse-mode gradient of `Σ_t upstream[t] · outputs[t]` w.r.t. the
    /// parameters, through the whole trace (no truncation).
    pub fn backward(&self, trace: &Trace, upstream: &[Vec<f64>]) -> Result<GradientSet> {
        if upstream.len() != trace.len() || upstream.iter().any(|u| u.len() != self.arch.outputs) {
            return Err(Error::Internal("upstream gradients do not match trace".into()));
        }
        let mut grads = GradientSet::zeros_like(&self.params);
        let h = self.head_index();
        let head_w = self.params.entry(h).values();
        let mut d_features = Vec::with_capacity(trace.len());
        for (feature, d_out) in trace.features.iter().zip(upstream) {
            outer_add(grads.values_mut(h), d_out, feature);
            grads.values_mut(h + 1).iter_mut().zip(d_out).for_each(|(b, d)| *b += d);
            let mut df = vec![0.0; feature.len()];
            matvec_t_add(head_w, d_out, &mut df);
            d_features.push(df);
        }

        match &self.arch.body {
            Body::Lstm { .. } => {
                let caches: Vec<LstmCache> = trace
                    .steps
                    .iter()
                    .map(|s| match s {
                        StepCache::Lstm(c) => Ok(c.clone()),
                        _ => Err(Error::Internal("trace recorded by a different body".into())),
                    })
                    .collect::<Result<_>>()?;
                let weights = self.lstm_weights();
                let mut gw_in = vec![0.0; weights.w_in.len()];
                let mut gw_rec = vec![0.0; weights.w_rec.len()];
                let mut gbias = vec![0.0; weights.bias.len()];
                lstm::backward_sequence(
                    &caches,
                    &d_features,
                    &weights,
                    &mut LstmGrads {
                        w_in: &mut gw_in,
                        w_rec: &mut gw_rec,
                        bias: &mut gbias,
                    },
                );
                grads.values_mut(0).copy_from_slice(&gw_in);
                grads.values_mut(1).copy_from_slice(&gw_rec);
                grads.values_mut(2).copy_from_slice(&gbias);
            }
            Body::FeedForward { layers, activation } => {
                for (step, d_feature) in trace.steps.iter().zip(d_features) {
                    let StepCache::FeedForward(caches) = step else {
                        return Err(Error::Internal("trace recorded by a different body".into()));
                    };
                    let mut d = d_feature;
                    for k in (0..layers.len()).rev() {
                        let c = &caches[k];
                        let dz: Vec<f64> = d
                            .iter()
                            .zip(c.pre.iter().zip(&c.post))
                            .map(|(g, (&z, &y))| g * activation.derivative(z, y))
                            .collect();
                        outer_add(grads.values_mut(2 * k), &dz, &c.input);
                        grads.values_mut(2 * k + 1).iter_mut().zip(&dz).for_each(|(b, g)| *b += g);
                        if k > 0 {
                            let mut dx = vec![0.0; c.input.len()];
                            matvec_t_add(self.params.entry(2 * k).values(), &dz, &mut dx);
                            d = dx;
                        }
                    }
                }
            }
        }
        Ok(grads)
    }
}

/// Normalized probabilities over the discrete action set.
#[derive(Clone, Debug, PartialEq)]
pub struct ActionDistribution(Vec<f64>);

impl ActionDistribution {
    pub fn from_logits(logits: &[f64]) -> Self {
        let mut p = vec![0.0; logits.len()];
        softmax_into(logits, &mut p);
        ActionDistribution(p)
    }

    /// Wraps an explicit probability vector, checking that it is one.
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        let sum: f64 = probs.iter().sum();
        if probs.is_empty() || probs.iter().any(|p| !(0.0..=1.0).contains(p)) || (sum - 1.0).abs() > 1e-9 {
            return Err(Error::config(format!("not a probability vector: {probs:?}")));
        }
        Ok(ActionDistribution(probs))
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn num_actions(&self) -> usize {
        self.0.len()
    }

    pub fn prob(&self, action: usize) -> f64 {
        self.0[action]
    }
}

/// Draws an action and returns it with the probability it had, μ(a|h).
pub fn sample_action<R: Rng + ?Sized>(dist: &ActionDistribution, rng: &mut R) -> (usize, f64) {
    let u: f64 = rng.random();
    let mut cum = 0.0;
    for (a, &p) in dist.0.iter().enumerate() {
        cum += p;
        if u < cum {
            return (a, p);
        }
    }
    // u landed in the rounding gap above the cumulative sum
    let a = dist.0.iter().rposition(|&p| p > 0.0).expect("distribution has mass");
    (a, dist.0[a])
}

#[derive(Clone, Debug)]
pub struct PolicyTrace {
    pub trace: Trace,
    pub dists: Vec<ActionDistribution>,
}

/// π_θ(a | h): a network whose head is a softmax over actions.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicyNetwork {
    net: Network,
}

impl PolicyNetwork {
    pub fn new(net: Network) -> Self {
        PolicyNetwork { net }
    }

    pub fn init<R: Rng + ?Sized>(arch: Architecture, rng: &mut R) -> Self {
        PolicyNetwork::new(Network::init(arch, rng))
    }

    pub fn network(&self) -> &Network {
        &self.net
    }

    pub fn params(&self) -> &ParameterSet {
        self.net.params()
    }

    pub fn params_mut(&mut self) -> &mut ParameterSet {
        self.net.params_mut()
    }

    pub fn num_actions(&self) -> usize {
        self.net.arch.outputs
    }

    pub fn initial_memory(&self) -> Memory {
        self.net.initial_memory()
    }

    /// Online stepping: feed one observation, get π(·|h_t).
    pub fn act(&self, memory: &mut Memory, obs: &[f64]) -> Result<ActionDistribution> {
        let logits = self.net.step(memory, obs)?;
        Ok(ActionDistribution::from_logits(&logits))
    }

    pub fn forward<O: AsRef<[f64]>>(&self, observations: &[O]) -> Result<PolicyTrace> {
        let trace = self.net.forward_trace(observations)?;
        let dists = trace.outputs.iter().map(|l| ActionDistribution::from_logits(l)).collect();
        Ok(PolicyTrace { trace, dists })
    }

    /// `Σ_t coefs[t] · ∇_θ log π(actions[t] | h_t)` in one backward pass.
    pub fn log_prob_gradients(&self, pt: &PolicyTrace, actions: &[usize], coefs: &[f64]) -> Result<GradientSet> {
        if actions.len() != pt.dists.len() || coefs.len() != pt.dists.len() {
            return Err(Error::Internal("actions/coefficients do not match trace length".into()));
        }
        let upstream: Vec<Vec<f64>> = pt
            .dists
            .iter()
            .zip(actions.iter().zip(coefs))
            .map(|(d, (&a, &c))| {
                d.probs()
                    .iter()
                    .enumerate()
                    .map(|(k, &p)| c * (f64::from(u8::from(k == a)) - p))
                    .collect()
            })
            .collect();
        if actions.iter().any(|&a| a >= self.num_actions()) {
            return Err(Error::InvalidEpisode("action index out of range".into()));
        }
        self.net.backward(&pt.trace, &upstream)
    }
}

#[derive(Clone, Debug)]
pub struct ValueTrace {
    pub trace: Trace,
    pub values: Vec<f64>,
}

/// V̂(h, w): same body as the policy, single linear output, multiplied by a
/// fixed `output_scale` (1 unless the returns are far from unit size).
#[derive(Clone, Debug, PartialEq)]
pub struct ValueNetwork {
    net: Network,
    output_scale: f64,
}

impl ValueNetwork {
    pub fn new(net: Network) -> Result<Self> {
        if net.arch.outputs != 1 {
            return Err(Error::config("value network must have exactly one output"));
        }
        Ok(ValueNetwork { net, output_scale: 1.0 })
    }

    /// A value network with the policy's body and a scalar head.
    pub fn matching<R: Rng + ?Sized>(policy: &PolicyNetwork, rng: &mut R) -> Self {
        ValueNetwork {
            net: Network::init(policy.net.arch.with_outputs(1), rng),
            output_scale: 1.0,
        }
    }

    pub fn with_output_scale(self, output_scale: f64) -> Result<Self> {
        if !(output_scale.is_finite() && output_scale > 0.0) {
            return Err(Error::config(format!("value output scale must be positive, got {output_scale}")));
        }
        Ok(ValueNetwork { output_scale, ..self })
    }

    pub fn output_scale(&self) -> f64 {
        self.output_scale
    }

    pub fn network(&self) -> &Network {
        &self.net
    }

    pub fn params(&self) -> &ParameterSet {
        self.net.params()
    }

    pub fn params_mut(&mut self) -> &mut ParameterSet {
        self.net.params_mut()
    }

    pub fn forward<O: AsRef<[f64]>>(&self, observations: &[O]) -> Result<ValueTrace> {
        let trace = self.net.forward_trace(observations)?;
        let values = trace.outputs.iter().map(|o| self.output_scale * o[0]).collect();
        Ok(ValueTrace { trace, values })
    }

    /// `Σ_t coefs[t] · ∇_w V̂(h_t, w)`.
    pub fn value_gradients(&self, vt: &ValueTrace, coefs: &[f64]) -> Result<GradientSet> {
        if coefs.len() != vt.values.len() {
            return Err(Error::Internal("coefficients do not match trace length".into()));
        }
        let upstream: Vec<Vec<f64>> = coefs.iter().map(|&c| vec![self.output_scale * c]).collect();
        self.net.backward(&vt.trace, &upstream)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::gradcheck::{check_log_prob, check_network};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn random_obs(rng: &mut ChaCha8Rng, t: usize, dim: usize) -> Vec<Vec<f64>> {
        (0..t).map(|_| (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect()).collect()
    }

    /// Random weights on a wider scale than the training init, so the
    /// nonlinearities are exercised away from their linear regime.
    fn scrambled(arch: Architecture, rng: &mut ChaCha8Rng, scale: f64) -> Network {
        let mut net = Network::zeros(arch);
        for i in 0..net.params().num_values() {
            net.params_mut().set_flat(i, rng.random_range(-scale..scale));
        }
        net
    }

    #[test]
    fn zero_lstm_policy_is_uniform() {
        let p = PolicyNetwork::new(Network::zeros(Architecture::lstm(3, 4, 5)));
        let obs = random_obs(&mut rng(0), 6, 3);
        let pt = p.forward(&obs).unwrap();
        for d in &pt.dists {
            assert_eq!(d.probs(), &[0.2; 5]);
        }
    }

    #[test]
    fn online_stepping_matches_trace_bitwise() {
        let mut r = rng(3);
        let p = PolicyNetwork::init(Architecture::lstm(4, 6, 3), &mut r);
        let obs = random_obs(&mut r, 7, 4);
        let pt = p.forward(&obs).unwrap();
        let mut mem = p.initial_memory();
        for (o, d) in obs.iter().zip(&pt.dists) {
            let online = p.act(&mut mem, o).unwrap();
            assert_eq!(online.probs(), d.probs());
        }
    }

    #[test]
    fn feed_forward_is_stateless() {
        let mut r = rng(5);
        let p = PolicyNetwork::init(Architecture::feed_forward(3, vec![8, 8], Activation::Relu, 4), &mut r);
        let mut obs = random_obs(&mut r, 5, 3);
        let before = p.forward(&obs).unwrap().dists[4].clone();
        obs.swap(0, 2);
        obs[1] = vec![9.0, -9.0, 0.5];
        assert_eq!(p.forward(&obs).unwrap().dists[4], before);
    }

    #[test]
    fn recurrent_history_matters_and_no_lookahead() {
        let mut r = rng(11);
        let mut differing = 0;
        for _ in 0..20 {
            let p = PolicyNetwork::new(scrambled(Architecture::lstm(3, 5, 4), &mut r, 0.5));
            let a = random_obs(&mut r, 3, 3);
            let mut b = a.clone();
            b[0] = random_obs(&mut r, 1, 3).remove(0);
            let pa = p.forward(&a).unwrap();
            if pa.dists[2] != p.forward(&b).unwrap().dists[2] {
                differing += 1;
            }
            let mut longer = a.clone();
            longer.extend(random_obs(&mut r, 4, 3));
            let pl = p.forward(&longer).unwrap();
            assert_eq!(&pl.dists[..3], &pa.dists[..]);
        }
        assert!(differing >= 19);
    }

    #[test]
    fn value_forward_cases() {
        let mut v = ValueNetwork::new(Network::zeros(Architecture::lstm(2, 3, 1))).unwrap();
        let obs = random_obs(&mut rng(1), 4, 2);
        assert_eq!(v.forward(&obs).unwrap().values, vec![0.0; 4]);
        let head_bias = v.params().index_of("head.bias").unwrap();
        v.params_mut().entry_mut(head_bias).values_mut()[0] = 3.0;
        assert_eq!(v.forward(&obs).unwrap().values, vec![3.0; 4]);
        assert!(ValueNetwork::new(Network::zeros(Architecture::lstm(2, 3, 2))).is_err());
    }

    #[test]
    fn output_scale_multiplies_values_and_gradients() {
        let mut r = rng(3);
        let arch = Architecture::feed_forward(3, vec![4, 4], Activation::Relu, 1);
        let plain = ValueNetwork::new(scrambled(arch, &mut r, 1.0)).unwrap();
        let scaled = plain.clone().with_output_scale(4.0).unwrap();
        let obs = random_obs(&mut r, 5, 3);
        let (vp, vs) = (plain.forward(&obs).unwrap(), scaled.forward(&obs).unwrap());
        for (a, b) in vp.values.iter().zip(&vs.values) {
            assert_eq!(4.0 * a, *b);
        }
        let coefs = [1.0, -0.5, 0.25, 2.0, 0.0];
        let mut expected = plain.value_gradients(&vp, &coefs).unwrap();
        expected.scale(4.0);
        let got = scaled.value_gradients(&vs, &coefs).unwrap();
        for (e, g) in expected.entries().iter().zip(got.entries()) {
            for (x, y) in e.values().iter().zip(g.values()) {
                assert!((x - y).abs() <= 1e-12 * (1.0 + x.abs()));
            }
        }
        assert!(plain.with_output_scale(0.0).is_err());
    }

    #[test]
    fn value_output_finite_for_random_draws() {
        let mut r = rng(2);
        let obs = random_obs(&mut r, 5, 3);
        for k in 0..10_000 {
            let arch = if k % 2 == 0 {
                Architecture::lstm(3, 4, 1)
            } else {
                Architecture::feed_forward(3, vec![4, 4], Activation::Relu, 1)
            };
            let v = ValueNetwork::new(scrambled(arch, &mut r, 3.0)).unwrap();
            assert!(v.forward(&obs).unwrap().values.iter().all(|x| x.is_finite()));
        }
    }

    #[test]
    fn architectures_congruent_except_head() {
        let mut r = rng(4);
        for arch in [
            Architecture::lstm(12, 32, 5),
            Architecture::feed_forward(5, vec![16, 16], Activation::Relu, 4),
        ] {
            let p = PolicyNetwork::init(arch, &mut r);
            let v = ValueNetwork::matching(&p, &mut r);
            let (pe, ve) = (p.params().entries(), v.params().entries());
            assert_eq!(pe.len(), ve.len());
            let n = pe.len();
            for (a, b) in pe[..n - 2].iter().zip(&ve[..n - 2]) {
                assert_eq!((a.name(), a.shape()), (b.name(), b.shape()));
            }
            assert_eq!(ve[n - 1].shape(), &[1]);
        }
    }

    #[test]
    fn sample_action_cases() {
        let mut r = rng(9);
        let one_hot = ActionDistribution::new(vec![0.0, 0.0, 1.0, 0.0]).unwrap();
        for _ in 0..100 {
            assert_eq!(sample_action(&one_hot, &mut r), (2, 1.0));
        }
        let uniform = ActionDistribution::new(vec![0.25; 4]).unwrap();
        let mut counts = [0usize; 4];
        for _ in 0..100_000 {
            let (a, mu) = sample_action(&uniform, &mut r);
            assert_eq!(mu, uniform.prob(a));
            counts[a] += 1;
        }
        for c in counts {
            assert!((c as f64 / 1e5 - 0.25).abs() < 0.01);
        }
    }

    #[test]
    fn single_step_log_prob_gradient_is_onehot_minus_probs() {
        // No hidden layers: logits = W o + b, so ∂/∂b log π(a) = onehot(a) − p.
        let mut r = rng(6);
        let p = PolicyNetwork::new(scrambled(
            Architecture::feed_forward(3, vec![], Activation::Linear, 4),
            &mut r,
            1.0,
        ));
        let obs = vec![vec![0.2, -0.4, 0.9]];
        let pt = p.forward(&obs).unwrap();
        let g = p.log_prob_gradients(&pt, &[1], &[1.0]).unwrap();
        let probs = pt.dists[0].probs();
        let gb = g.get("head.bias").unwrap().values();
        for k in 0..4 {
            let expected = f64::from(u8::from(k == 1)) - probs[k];
            assert!((gb[k] - expected).abs() < 1e-15);
        }
        let zero = p.log_prob_gradients(&pt, &[1], &[0.0]).unwrap();
        assert!(zero.is_zero());
    }

    #[test]
    fn single_linear_layer_squared_loss() {
        // y = W x, L = |y − target|², dL/dW = 2 (W x − target) xᵀ.
        let mut net = Network::zeros(Architecture::feed_forward(2, vec![], Activation::Linear, 2));
        let w = net.params().index_of("head.weight").unwrap();
        net.params_mut().entry_mut(w).values_mut().copy_from_slice(&[1.0, 2.0, -1.0, 0.5]);
        let x = [3.0, -1.0];
        let target = [0.5, 2.0];
        let trace = net.forward_trace(&[x]).unwrap();
        let y = &trace.outputs()[0];
        let upstream = vec![vec![2.0 * (y[0] - target[0]), 2.0 * (y[1] - target[1])]];
        let g = net.backward(&trace, &upstream).unwrap();
        // W x = [1, -3.5]; residual [0.5, -5.5]
        let expected = [2.0 * 0.5 * 3.0, 2.0 * 0.5 * -1.0, 2.0 * -5.5 * 3.0, 2.0 * -5.5 * -1.0];
        assert_eq!(g.get("head.weight").unwrap().values(), &expected);
    }

    #[test]
    fn zero_upstream_gives_zero_gradient() {
        let mut r = rng(8);
        let net = scrambled(Architecture::lstm(3, 4, 2), &mut r, 0.5);
        let obs = random_obs(&mut r, 4, 3);
        let trace = net.forward_trace(&obs).unwrap();
        assert!(net.backward(&trace, &vec![vec![0.0; 2]; 4]).unwrap().is_zero());
        assert!(net.backward(&trace, &vec![vec![0.0; 2]; 3]).is_err());
    }

    #[test]
    fn lstm_gradient_matches_finite_differences() {
        let mut r = rng(12);
        let net = scrambled(Architecture::lstm(4, 8, 3), &mut r, 0.5);
        let obs = random_obs(&mut r, 5, 4);
        let upstream = random_obs(&mut r, 5, 3);
        let report = check_network(&net, &obs, &upstream).unwrap();
        assert!(report.passed(), "{report:?}");
        assert_eq!(report.checked, net.params().num_values());
    }

    #[test]
    fn feed_forward_gradient_matches_finite_differences() {
        let mut r = rng(13);
        for act in [Activation::Relu, Activation::Tanh] {
            let net = scrambled(Architecture::feed_forward(5, vec![16, 16], act, 4), &mut r, 0.5);
            let obs = random_obs(&mut r, 6, 5);
            let upstream = random_obs(&mut r, 6, 4);
            let report = check_network(&net, &obs, &upstream).unwrap();
            assert!(report.passed(), "{act:?}: {report:?}");
        }
    }

    #[test]
    fn log_prob_gradient_matches_finite_differences() {
        let mut r = rng(14);
        let p = PolicyNetwork::new(scrambled(Architecture::lstm(3, 6, 5), &mut r, 0.5));
        let obs = random_obs(&mut r, 6, 3);
        let actions: Vec<usize> = (0..6).map(|_| r.random_range(0..5)).collect();
        let coefs: Vec<f64> = (0..6).map(|_| r.random_range(-2.0..2.0)).collect();
        let report = check_log_prob(&p, &obs, &actions, &coefs).unwrap();
        assert!(report.passed(), "{report:?}");
    }

    #[test]
    fn single_pass_equals_per_timestep_sum() {
        let mut r = rng(15);
        let p = PolicyNetwork::new(scrambled(Architecture::lstm(3, 5, 4), &mut r, 0.5));
        let obs = random_obs(&mut r, 6, 3);
        let actions: Vec<usize> = (0..6).map(|_| r.random_range(0..4)).collect();
        let coefs: Vec<f64> = (0..6).map(|_| r.random_range(-2.0..2.0)).collect();
        let pt = p.forward(&obs).unwrap();
        let single = p.log_prob_gradients(&pt, &actions, &coefs).unwrap();
        let mut naive = GradientSet::zeros_like(p.params());
        for t in 0..6 {
            let mut c = vec![0.0; 6];
            c[t] = coefs[t];
            naive.add_scaled(&p.log_prob_gradients(&pt, &actions, &c).unwrap(), 1.0);
        }
        assert!(single.max_abs_diff(&naive) <= 1e-10);
    }

    #[test]
    fn infer_architecture_from_params() {
        let mut r = rng(16);
        for arch in [
            Architecture::lstm(12, 32, 5),
            Architecture::feed_forward(5, vec![16, 16], Activation::Relu, 4),
            Architecture::feed_forward(2, vec![], Activation::Relu, 2),
        ] {
            let net = Network::init(arch.clone(), &mut r);
            assert_eq!(Architecture::infer(net.params(), Activation::Relu).unwrap(), arch);
        }
    }

    #[test]
    fn dimension_mismatch() {
        let p = PolicyNetwork::new(Network::zeros(Architecture::lstm(3, 4, 2)));
        assert!(matches!(p.forward(&[vec![1.0; 2]]), Err(Error::Config(_))));
    }
}
