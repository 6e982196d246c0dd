//! Small multilayer perceptrons used as damage-rate coefficient functions.
//!
//! Networks map the two scaled invariants `(J₂, φ)` to a scalar rate. Hidden
//! layers apply the activation, the final layer is affine. Parameters flatten
//! layer by layer, weights (row-major, `out × in`) before biases.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Relu,
    Softplus,
}

impl Activation {
    pub const ALL: [Activation; 3] = [Activation::Tanh, Activation::Relu, Activation::Softplus];

    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.max(0.0),
            Activation::Softplus => x.max(0.0) + (-x.abs()).exp().ln_1p(),
        }
    }

    /// Derivative; ReLU uses 0 at the kink.
    #[inline]
    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => {
                let t = x.tanh();
                1.0 - t * t
            }
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Softplus => {
                if x >= 0.0 {
                    1.0 / (1.0 + (-x).exp())
                } else {
                    let e = x.exp();
                    e / (1.0 + e)
                }
            }
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Tanh => "tanh",
            Activation::Relu => "relu",
            Activation::Softplus => "softplus",
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "tanh" => Ok(Activation::Tanh),
            "relu" => Ok(Activation::Relu),
            "softplus" => Ok(Activation::Softplus),
            other => Err(Error::Config(format!("unknown activation `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub layer_sizes: Vec<usize>,
    pub activation: Activation,
    /// Per layer, row-major `out × in`.
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl MlpParams {
    /// All-zero parameters for the given architecture.
    pub fn zeros(layer_sizes: &[usize], activation: Activation) -> Result<Self> {
        check_sizes(layer_sizes)?;
        let weights = layer_sizes
            .windows(2)
            .map(|w| vec![0.0; w[0] * w[1]])
            .collect();
        let biases = layer_sizes[1..].iter().map(|&n| vec![0.0; n]).collect();
        Ok(MlpParams {
            layer_sizes: layer_sizes.to_vec(),
            activation,
            weights,
            biases,
        })
    }

    /// Standard-normal weights and zero biases from a seeded generator.
    pub fn random_normal(seed: u64, layer_sizes: &[usize], activation: Activation) -> Result<Self> {
        let mut p = Self::zeros(layer_sizes, activation)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for w in &mut p.weights {
            for v in w.iter_mut() {
                *v = StandardNormal.sample(&mut rng);
            }
        }
        Ok(p)
    }

    pub fn input_size(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_size(&self) -> usize {
        *self.layer_sizes.last().expect("at least two layers")
    }

    pub fn param_count(&self) -> usize {
        param_count(&self.layer_sizes)
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend_from_slice(w);
            out.extend_from_slice(b);
        }
        out
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(contract(format!(
                "expected {} parameters, got {}",
                self.param_count(),
                flat.len()
            )));
        }
        let mut off = 0;
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            let (nw, nb) = (w.len(), b.len());
            w.copy_from_slice(&flat[off..off + nw]);
            off += nw;
            b.copy_from_slice(&flat[off..off + nb]);
            off += nb;
        }
        Ok(())
    }

    pub fn with_flat(&self, flat: &[f64]) -> Result<Self> {
        let mut p = self.clone();
        p.set_flat(flat)?;
        Ok(p)
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        let flat: Vec<f64> = self.flatten().iter().map(|v| alpha * v).collect();
        self.with_flat(&flat).expect("same architecture")
    }

    /// Bound on the output of a tanh network: `Σ|W_last| + |b_last|` per output.
    pub fn tanh_output_bound(&self) -> f64 {
        let last_w = self.weights.last().expect("at least one layer");
        let last_b = self.biases.last().expect("at least one layer");
        let fan_in = self.layer_sizes[self.layer_sizes.len() - 2];
        (0..self.output_size())
            .map(|o| {
                last_w[o * fan_in..(o + 1) * fan_in].iter().map(|v| v.abs()).sum::<f64>()
                    + last_b[o].abs()
            })
            .fold(0.0, f64::max)
    }

    /// Runs the network on one already-scaled input, keeping pre-activations.
    fn forward_trace(&self, x: &[f64]) -> Trace {
        let layers = self.weights.len();
        let mut pre = Vec::with_capacity(layers);
        let mut acts: Vec<Vec<f64>> = Vec::with_capacity(layers + 1);
        acts.push(x.to_vec());
        for l in 0..layers {
            let (n_in, n_out) = (self.layer_sizes[l], self.layer_sizes[l + 1]);
            let a = &acts[l];
            let w = &self.weights[l];
            let z: Vec<f64> = (0..n_out)
                .map(|o| {
                    let row = &w[o * n_in..(o + 1) * n_in];
                    row.iter().zip(a).map(|(wi, ai)| wi * ai).sum::<f64>() + self.biases[l][o]
                })
                .collect();
            let next = if l + 1 == layers {
                z.clone()
            } else {
                z.iter().map(|&v| self.activation.apply(v)).collect()
            };
            pre.push(z);
            acts.push(next);
        }
        Trace { pre, acts }
    }

    /// Output for one scaled input.
    pub fn eval_scaled(&self, x: &[f64]) -> Vec<f64> {
        self.forward_trace(x).acts.pop().expect("output layer")
    }

    /// Reverse pass for one input. Accumulates `cot · ∂out/∂θ` into `grad`
    /// (flattened order) and returns `cot · ∂out/∂x`.
    fn backward(&self, trace: &Trace, cot: &[f64], grad: Option<&mut [f64]>) -> Vec<f64> {
        let layers = self.weights.len();
        let mut offsets = Vec::with_capacity(layers);
        let mut off = 0;
        for l in 0..layers {
            offsets.push(off);
            off += self.weights[l].len() + self.biases[l].len();
        }
        let mut grad = grad;
        // delta = ∂L/∂z for the current layer.
        let mut delta: Vec<f64> = cot.to_vec();
        for l in (0..layers).rev() {
            let (n_in, n_out) = (self.layer_sizes[l], self.layer_sizes[l + 1]);
            if l + 1 != layers {
                for (d, z) in delta.iter_mut().zip(&trace.pre[l]) {
                    *d *= self.activation.derivative(*z);
                }
            }
            let a = &trace.acts[l];
            if let Some(g) = grad.as_deref_mut() {
                let base = offsets[l];
                for o in 0..n_out {
                    for i in 0..n_in {
                        g[base + o * n_in + i] += delta[o] * a[i];
                    }
                    g[base + n_in * n_out + o] += delta[o];
                }
            }
            let w = &self.weights[l];
            let mut prev = vec![0.0; n_in];
            for o in 0..n_out {
                for i in 0..n_in {
                    prev[i] += w[o * n_in + i] * delta[o];
                }
            }
            delta = prev;
        }
        delta
    }

    /// Forward-mode derivative of the output along a parameter direction.
    fn param_tangent(&self, x: &[f64], dir: &[f64]) -> Vec<f64> {
        let trace = self.forward_trace(x);
        let layers = self.weights.len();
        let mut off = 0;
        let mut da: Vec<f64> = vec![0.0; x.len()];
        for l in 0..layers {
            let (n_in, n_out) = (self.layer_sizes[l], self.layer_sizes[l + 1]);
            let w = &self.weights[l];
            let dw = &dir[off..off + n_in * n_out];
            let db = &dir[off + n_in * n_out..off + n_in * n_out + n_out];
            off += n_in * n_out + n_out;
            let a = &trace.acts[l];
            let mut dz = vec![0.0; n_out];
            for o in 0..n_out {
                let mut acc = db[o];
                for i in 0..n_in {
                    acc += dw[o * n_in + i] * a[i] + w[o * n_in + i] * da[i];
                }
                dz[o] = acc;
            }
            da = if l + 1 == layers {
                dz
            } else {
                dz.iter()
                    .zip(&trace.pre[l])
                    .map(|(d, z)| d * self.activation.derivative(*z))
                    .collect()
            };
        }
        da
    }
}

struct Trace {
    pre: Vec<Vec<f64>>,
    acts: Vec<Vec<f64>>,
}

fn check_sizes(sizes: &[usize]) -> Result<()> {
    if sizes.len() < 2 || sizes.contains(&0) {
        return Err(contract(format!("invalid layer sizes {sizes:?}")));
    }
    Ok(())
}

pub fn param_count(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

/// Builds the full layer list `2 → hidden… → 1` for a damage-rate network.
pub fn rate_network_sizes(hidden: &[usize]) -> Vec<usize> {
    let mut sizes = Vec::with_capacity(hidden.len() + 2);
    sizes.push(2);
    sizes.extend_from_slice(hidden);
    sizes.push(1);
    sizes
}

/// Initializes a damage-rate network: `N(0, 1)` weights, zero biases.
pub fn mlp_init(seed: u64, layer_sizes: &[usize], activation: Activation) -> Result<MlpParams> {
    if layer_sizes.first() != Some(&2) || layer_sizes.last() != Some(&1) {
        return Err(contract(format!(
            "rate networks map 2 invariants to 1 rate, got sizes {layer_sizes:?}"
        )));
    }
    MlpParams::random_normal(seed, layer_sizes, activation)
}

/// Per-invariant affine normalization fitted on ground-truth data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InputScaler {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl InputScaler {
    pub fn identity(n: usize) -> Self {
        InputScaler {
            mean: vec![0.0; n],
            std: vec![1.0; n],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.mean.len() != self.std.len() || self.std.iter().any(|s| !(*s > 0.0)) {
            return Err(contract("scaler std must be positive and match the mean length"));
        }
        Ok(())
    }

    pub fn scale(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(x, (m, s))| (x - m) / s)
            .collect()
    }
}

/// Mean and population standard deviation of each invariant column.
pub fn fit_scaler(batch: &[Vec<f64>]) -> Result<InputScaler> {
    let first = batch
        .first()
        .ok_or_else(|| Error::DegenerateData("empty invariant batch".into()))?;
    let dim = first.len();
    if batch.iter().any(|r| r.len() != dim) {
        return Err(contract("ragged invariant batch"));
    }
    let n = batch.len() as f64;
    let mut mean = vec![0.0; dim];
    for r in batch {
        for (m, v) in mean.iter_mut().zip(r) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; dim];
    for r in batch {
        for k in 0..dim {
            let d = r[k] - mean[k];
            var[k] += d * d;
        }
    }
    let std: Vec<f64> = var.iter().map(|v| (v / n).sqrt()).collect();
    for (k, (s, m)) in std.iter().zip(&mean).enumerate() {
        if !(*s > 1e-12 * (1.0 + m.abs())) {
            return Err(Error::DegenerateData(format!(
                "invariant {k} has zero variance in the batch"
            )));
        }
    }
    Ok(InputScaler { mean, std })
}

fn check_arity(params: &MlpParams, scaler: &InputScaler, batch: &[Vec<f64>]) -> Result<()> {
    let n_in = params.input_size();
    if scaler.mean.len() != n_in {
        return Err(contract(format!(
            "scaler has {} components, network takes {n_in}",
            scaler.mean.len()
        )));
    }
    if let Some(r) = batch.iter().find(|r| r.len() != n_in) {
        return Err(contract(format!(
            "invariant row of length {} for a network with {n_in} inputs",
            r.len()
        )));
    }
    Ok(())
}

/// First network output for every invariant row.
pub fn mlp_forward(params: &MlpParams, scaler: &InputScaler, batch: &[Vec<f64>]) -> Result<Vec<f64>> {
    check_arity(params, scaler, batch)?;
    Ok(batch
        .iter()
        .map(|r| params.eval_scaled(&scaler.scale(r))[0])
        .collect())
}

/// Gradient of `Σ cotᵢ · outᵢ` with respect to the flattened parameters.
pub fn mlp_gradients(
    params: &MlpParams,
    scaler: &InputScaler,
    batch: &[Vec<f64>],
    cotangents: &[f64],
) -> Result<Vec<f64>> {
    check_arity(params, scaler, batch)?;
    if cotangents.len() != batch.len() {
        return Err(contract("one cotangent per batch row is required"));
    }
    let mut grad = vec![0.0; params.param_count()];
    for (r, &c) in batch.iter().zip(cotangents) {
        if c == 0.0 {
            continue;
        }
        let trace = params.forward_trace(&scaler.scale(r));
        params.backward(&trace, &[c], Some(&mut grad));
    }
    Ok(grad)
}

/// Output and its derivative with respect to the unscaled invariants.
pub fn mlp_value_and_input_grad(params: &MlpParams, scaler: &InputScaler, row: &[f64]) -> (f64, Vec<f64>) {
    let trace = params.forward_trace(&scaler.scale(row));
    let out = trace.acts.last().expect("output")[0];
    let dx = params.backward(&trace, &[1.0], None);
    let grad = dx.iter().zip(&scaler.std).map(|(d, s)| d / s).collect();
    (out, grad)
}

/// Directional derivative of each output along a flattened parameter direction.
pub fn mlp_param_jvp(
    params: &MlpParams,
    scaler: &InputScaler,
    batch: &[Vec<f64>],
    direction: &[f64],
) -> Result<Vec<f64>> {
    check_arity(params, scaler, batch)?;
    if direction.len() != params.param_count() {
        return Err(contract("direction length differs from the parameter count"));
    }
    Ok(batch
        .iter()
        .map(|r| params.param_tangent(&scaler.scale(r), direction)[0])
        .collect())
}

/// Largest `α ∈ {1, ½, …, 2⁻²⁰}` such that `probe(α·candidate)` holds;
/// zero parameters if none does.
pub fn feasible_init<F>(candidate: &MlpParams, mut probe: F) -> (MlpParams, f64)
where
    F: FnMut(&MlpParams) -> bool,
{
    let mut alpha = 1.0;
    for _ in 0..=20 {
        let trial = candidate.scaled(alpha);
        if probe(&trial) {
            return (trial, alpha);
        }
        alpha *= 0.5;
    }
    (candidate.scaled(0.0), 0.0)
}

/// True when the network output is constant over the probe grid.
pub fn detect_constant_collapse(params: &MlpParams, scaler: &InputScaler, grid: &[Vec<f64>]) -> Result<bool> {
    let out = mlp_forward(params, scaler, grid)?;
    if out.is_empty() {
        return Err(contract("empty probe grid"));
    }
    let n = out.len() as f64;
    let mean = out.iter().sum::<f64>() / n;
    let mean_abs = out.iter().map(|v| v.abs()).sum::<f64>() / n;
    let std = (out.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    Ok(std < 1e-8 * (1.0 + mean_abs))
}
