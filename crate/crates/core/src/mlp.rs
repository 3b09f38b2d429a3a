//! Feedforward regressor over lag-flattened inputs with hidden-layer
//! dropout, channel masking of the input, and minibatch Adam training under
//! the three input-dropout regimes.

use ndarray::{Array1, Array2, Axis, Zip};
use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::LaggedDataset;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
    Identity,
}

impl Activation {
    fn apply<T: Scalar>(self, z: T) -> T {
        match self {
            Activation::Relu => z.max(T::zero()),
            Activation::Tanh => z.tanh(),
            Activation::Identity => z,
        }
    }

    /// Derivative expressed through the pre-activation.
    fn derivative<T: Scalar>(self, z: T) -> T {
        match self {
            Activation::Relu => {
                if z > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Activation::Tanh => {
                let t = z.tanh();
                T::one() - t * t
            }
            Activation::Identity => T::one(),
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "relu" => Ok(Self::Relu),
            "tanh" => Ok(Self::Tanh),
            "identity" | "linear" => Ok(Self::Identity),
            other => Err(Error::Config(format!("unknown activation {other:?}"))),
        }
    }
}

/// Which channels' past the network may see. Dropping channel `i` zeroes
/// input columns `i, P + i, 2P + i, ...`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InputMask {
    kept: Vec<bool>,
}

impl InputMask {
    pub fn new(kept: Vec<bool>) -> Result<Self> {
        if !kept.iter().any(|&k| k) {
            return Err(Error::Config("input mask must keep at least one channel".into()));
        }
        Ok(Self { kept })
    }

    pub fn all(channels: usize) -> Self {
        Self {
            kept: vec![true; channels],
        }
    }

    /// Keeps everything except `channel`.
    pub fn dropping(channels: usize, channel: usize) -> Result<Self> {
        let mut kept = vec![true; channels];
        kept[channel] = false;
        Self::new(kept)
    }

    pub fn kept(&self) -> &[bool] {
        &self.kept
    }

    pub fn dropped_count(&self) -> usize {
        self.kept.iter().filter(|&&k| !k).count()
    }

    pub fn is_all(&self) -> bool {
        self.kept.iter().all(|&k| k)
    }

    /// Copy of `inputs` (lag-major, width divisible by the channel count)
    /// with dropped channels zeroed at every lag.
    pub fn apply<T: Scalar>(&self, inputs: &Array2<T>) -> Result<Array2<T>> {
        let p = self.kept.len();
        if p == 0 || inputs.ncols() % p != 0 {
            return Err(Error::Shape(format!(
                "mask over {p} channels cannot cover {} input columns",
                inputs.ncols()
            )));
        }
        let mut out = inputs.clone();
        if !self.is_all() {
            for (col, mut column) in out.axis_iter_mut(Axis(1)).enumerate() {
                if !self.kept[col % p] {
                    column.fill(T::zero());
                }
            }
        }
        Ok(out)
    }
}

/// Draws how many channels to drop uniformly from `1..=P-1`, then which
/// ones uniformly among subsets of that size.
pub fn sample_input_mask<R: Rng>(channels: usize, rng: &mut R) -> Result<InputMask> {
    if channels < 2 {
        return Err(Error::Config("cannot drop channels from a single-channel input".into()));
    }
    let drop = rng.random_range(1..channels);
    let mut kept = vec![true; channels];
    for i in sample(rng, channels, drop) {
        kept[i] = false;
    }
    InputMask::new(kept)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// A reproducible hidden-dropout realization. Whether unit `u` of hidden
/// layer `l` is kept for batch row `r` depends only on `(seed, l, r, u)`,
/// so two passes with the same state over the same rows share their
/// dropout structure.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DropoutState {
    pub seed: u64,
}

impl DropoutState {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    /// Uniform draw in `[0, 1)`.
    pub fn uniform(&self, layer: usize, row: usize, unit: usize) -> f64 {
        let mut h = splitmix64(self.seed);
        h = splitmix64(h ^ layer as u64);
        h = splitmix64(h ^ row as u64);
        h = splitmix64(h ^ unit as u64);
        (h >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn keeps(&self, rate: f64, layer: usize, row: usize, unit: usize) -> bool {
        self.uniform(layer, row, unit) >= rate
    }
}

/// Input configuration of one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct Pass {
    pub mask: Option<InputMask>,
    pub dropout: Option<DropoutState>,
}

impl Pass {
    pub fn deterministic() -> Self {
        Self {
            mask: None,
            dropout: None,
        }
    }
}

/// Fully connected network `K*P -> H_1 -> ... -> H_L -> P`. Dropout follows
/// every hidden activation (inverted scaling); the output layer is linear.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpRegressor<T> {
    layer_sizes: Vec<usize>,
    /// `weights[l]` has shape `(in, out)`.
    weights: Vec<Array2<T>>,
    biases: Vec<Array1<T>>,
    activation: Activation,
    dropout_rate: f64,
    fitted: bool,
}

/// Gradient (or moment) buffers shaped like the network parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T> {
    pub weights: Vec<Array2<T>>,
    pub biases: Vec<Array1<T>>,
}

impl<T: Scalar> Gradients<T> {
    fn zeros_like(model: &MlpRegressor<T>) -> Self {
        Self {
            weights: model.weights.iter().map(|w| Array2::zeros(w.raw_dim())).collect(),
            biases: model.biases.iter().map(|b| Array1::zeros(b.raw_dim())).collect(),
        }
    }

    fn add_assign(&mut self, other: &Self) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            *a += b;
        }
        for (a, b) in self.biases.iter_mut().zip(&other.biases) {
            *a += b;
        }
    }

    pub fn flatten(&self) -> Vec<T> {
        let mut out = Vec::new();
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend(w.iter().copied());
            out.extend(b.iter().copied());
        }
        out
    }
}

struct Trace<T> {
    /// Input to each layer (after masking or dropout).
    inputs: Vec<Array2<T>>,
    /// Pre-activations of the hidden layers.
    pre: Vec<Array2<T>>,
    /// Inverted-dropout multipliers for the hidden layers.
    keep: Vec<Option<Array2<T>>>,
    output: Array2<T>,
}

impl<T: Scalar> MlpRegressor<T> {
    /// Randomly initialized network: He-uniform weights for relu,
    /// Glorot-uniform otherwise, zero biases.
    pub fn new<R: Rng>(
        layer_sizes: &[usize],
        activation: Activation,
        dropout_rate: f64,
        rng: &mut R,
    ) -> Result<Self> {
        Self::check_architecture(layer_sizes, dropout_rate)?;
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for pair in layer_sizes.windows(2) {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let bound = match activation {
                Activation::Relu => (6.0 / fan_in as f64).sqrt(),
                _ => (6.0 / (fan_in + fan_out) as f64).sqrt(),
            };
            weights.push(Array2::from_shape_simple_fn((fan_in, fan_out), || {
                T::of(rng.random_range(-bound..bound))
            }));
            biases.push(Array1::zeros(fan_out));
        }
        Ok(Self {
            layer_sizes: layer_sizes.to_vec(),
            weights,
            biases,
            activation,
            dropout_rate,
            fitted: false,
        })
    }

    /// Builds a network from explicit parameters, laid out layer by layer as
    /// row-major `(in, out)` weights followed by biases. Such a network
    /// counts as fitted.
    pub fn from_parameters(
        layer_sizes: &[usize],
        activation: Activation,
        dropout_rate: f64,
        parameters: &[T],
    ) -> Result<Self> {
        Self::check_architecture(layer_sizes, dropout_rate)?;
        let expected = Self::parameter_count_for(layer_sizes);
        if parameters.len() != expected {
            return Err(Error::Shape(format!(
                "{} parameters given, architecture {:?} needs {}",
                parameters.len(),
                layer_sizes,
                expected
            )));
        }
        if parameters.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite network parameter".into()));
        }
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        let mut offset = 0;
        for pair in layer_sizes.windows(2) {
            let (i, o) = (pair[0], pair[1]);
            let w = Array2::from_shape_vec((i, o), parameters[offset..offset + i * o].to_vec())
                .expect("length checked");
            offset += i * o;
            let b = Array1::from(parameters[offset..offset + o].to_vec());
            offset += o;
            weights.push(w);
            biases.push(b);
        }
        Ok(Self {
            layer_sizes: layer_sizes.to_vec(),
            weights,
            biases,
            activation,
            dropout_rate,
            fitted: true,
        })
    }

    fn check_architecture(layer_sizes: &[usize], dropout_rate: f64) -> Result<()> {
        if layer_sizes.len() < 2 || layer_sizes.iter().any(|&s| s == 0) {
            return Err(Error::Config(format!("invalid layer sizes {layer_sizes:?}")));
        }
        if !(0.0..1.0).contains(&dropout_rate) {
            return Err(Error::Config(format!("dropout rate must lie in [0, 1), got {dropout_rate}")));
        }
        Ok(())
    }

    fn parameter_count_for(layer_sizes: &[usize]) -> usize {
        layer_sizes.windows(2).map(|p| p[0] * p[1] + p[1]).sum()
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn input_width(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_width(&self) -> usize {
        *self.layer_sizes.last().expect("at least two layers")
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn dropout_rate(&self) -> f64 {
        self.dropout_rate
    }

    pub fn set_dropout_rate(&mut self, rate: f64) -> Result<()> {
        Self::check_architecture(&self.layer_sizes, rate)?;
        self.dropout_rate = rate;
        Ok(())
    }

    pub fn is_fitted(&self) -> bool {
        self.fitted
    }

    pub fn parameter_count(&self) -> usize {
        Self::parameter_count_for(&self.layer_sizes)
    }

    pub fn parameters(&self) -> Vec<T> {
        Gradients {
            weights: self.weights.clone(),
            biases: self.biases.clone(),
        }
        .flatten()
    }

    fn parameter_mut(&mut self, mut index: usize) -> &mut T {
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            if index < w.len() {
                let cols = w.ncols();
                return &mut w[[index / cols, index % cols]];
            }
            index -= w.len();
            if index < b.len() {
                return &mut b[index];
            }
            index -= b.len();
        }
        panic!("parameter index out of range");
    }

    fn check_inputs(&self, inputs: &Array2<T>) -> Result<()> {
        if inputs.ncols() != self.input_width() {
            return Err(Error::Shape(format!(
                "network expects {} inputs, got {}",
                self.input_width(),
                inputs.ncols()
            )));
        }
        Ok(())
    }

    fn run(&self, inputs: &Array2<T>, pass: &Pass, keep_trace: bool) -> Result<Trace<T>> {
        self.check_inputs(inputs)?;
        let mut x = match &pass.mask {
            Some(mask) => {
                if mask.kept().len() != self.output_width() {
                    return Err(Error::Shape(format!(
                        "mask over {} channels for a {}-channel network",
                        mask.kept().len(),
                        self.output_width()
                    )));
                }
                mask.apply(inputs)?
            }
            None => inputs.clone(),
        };
        let hidden = self.weights.len() - 1;
        let mut trace = Trace {
            inputs: Vec::new(),
            pre: Vec::new(),
            keep: Vec::new(),
            output: Array2::zeros((0, 0)),
        };
        let rate = self.dropout_rate;
        let scale = T::of(1.0 / (1.0 - rate));
        for (layer, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let z = x.dot(w) + b;
            if layer == hidden {
                if keep_trace {
                    trace.inputs.push(x);
                }
                trace.output = z;
                break;
            }
            let act = self.activation;
            let mut a = z.mapv(|v| act.apply(v));
            let keep = match pass.dropout {
                Some(state) if rate > 0.0 => {
                    let k = Array2::from_shape_fn(a.raw_dim(), |(row, unit)| {
                        if state.keeps(rate, layer, row, unit) {
                            scale
                        } else {
                            T::zero()
                        }
                    });
                    a *= &k;
                    Some(k)
                }
                _ => None,
            };
            if keep_trace {
                trace.inputs.push(x);
                trace.pre.push(z);
                trace.keep.push(keep);
            }
            x = a;
        }
        Ok(trace)
    }

    /// Predictions for each row of `inputs`. `None` for the mask means all
    /// channels; `None` for dropout means the deterministic network.
    pub fn forward(
        &self,
        inputs: &Array2<T>,
        mask: Option<&InputMask>,
        dropout: Option<DropoutState>,
    ) -> Result<Array2<T>> {
        let pass = Pass {
            mask: mask.cloned(),
            dropout,
        };
        Ok(self.run(inputs, &pass, false)?.output)
    }

    fn backward(&self, trace: &Trace<T>, grad_out: Array2<T>) -> Gradients<T> {
        let mut grads = Gradients::zeros_like(self);
        let mut delta = grad_out;
        for layer in (0..self.weights.len()).rev() {
            grads.weights[layer] = trace.inputs[layer].t().dot(&delta);
            grads.biases[layer] = delta.sum_axis(Axis(0));
            if layer == 0 {
                break;
            }
            let mut upstream = delta.dot(&self.weights[layer].t());
            let act = self.activation;
            Zip::from(&mut upstream)
                .and(&trace.pre[layer - 1])
                .for_each(|g, &z| *g = *g * act.derivative(z));
            if let Some(k) = &trace.keep[layer - 1] {
                upstream *= k;
            }
            delta = upstream;
        }
        grads
    }

    /// Sum over `passes` of the mean squared error over all `N x P` targets,
    /// with its gradient.
    pub fn loss_and_grad(
        &self,
        inputs: &Array2<T>,
        targets: &Array2<T>,
        passes: &[Pass],
    ) -> Result<(T, Gradients<T>)> {
        self.check_targets(inputs, targets)?;
        let count = T::of(targets.len() as f64);
        let two = T::of(2.0);
        let mut total = T::zero();
        let mut grads = Gradients::zeros_like(self);
        for pass in passes {
            let trace = self.run(inputs, pass, true)?;
            let diff = &trace.output - targets;
            total = total + diff.mapv(|d| d * d).sum() / count;
            let g = self.backward(&trace, diff.mapv(|d| two * d / count));
            grads.add_assign(&g);
        }
        Ok((total, grads))
    }

    /// Loss only, as in [`Self::loss_and_grad`].
    pub fn loss(&self, inputs: &Array2<T>, targets: &Array2<T>, passes: &[Pass]) -> Result<T> {
        self.check_targets(inputs, targets)?;
        let mut total = T::zero();
        for pass in passes {
            let out = self.run(inputs, pass, false)?.output;
            total = total + mse(&out, targets);
        }
        Ok(total)
    }

    fn check_targets(&self, inputs: &Array2<T>, targets: &Array2<T>) -> Result<()> {
        if targets.nrows() != inputs.nrows() || targets.ncols() != self.output_width() {
            return Err(Error::Shape(format!(
                "targets {:?} do not match inputs with {} rows and {} outputs",
                targets.dim(),
                inputs.nrows(),
                self.output_width()
            )));
        }
        if inputs.nrows() == 0 {
            return Err(Error::Shape("empty batch".into()));
        }
        Ok(())
    }

    /// Signs of every hidden pre-activation over all passes; used to spot
    /// relu kinks during gradient checks.
    fn activation_pattern(&self, inputs: &Array2<T>, passes: &[Pass]) -> Result<Vec<bool>> {
        let mut out = Vec::new();
        for pass in passes {
            let trace = self.run(inputs, pass, true)?;
            for z in &trace.pre {
                out.extend(z.iter().map(|v| *v > T::zero()));
            }
        }
        Ok(out)
    }

    pub fn to_file(&self) -> ModelFile {
        ModelFile {
            format: MODEL_FORMAT.into(),
            layer_sizes: self.layer_sizes.clone(),
            activation: self.activation,
            dropout_rate: self.dropout_rate,
            fitted: self.fitted,
            parameters: self.parameters().into_iter().map(|v| v.as_f64()).collect(),
        }
    }

    pub fn from_file(file: &ModelFile) -> Result<Self> {
        if file.format != MODEL_FORMAT {
            return Err(Error::Config(format!("unknown model format {:?}", file.format)));
        }
        let params: Vec<T> = file.parameters.iter().map(|&v| T::of(v)).collect();
        let mut model = Self::from_parameters(&file.layer_sizes, file.activation, file.dropout_rate, &params)?;
        model.fitted = file.fitted;
        Ok(model)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_file())? + "\n")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_file(&serde_json::from_str(text)?)
    }
}

pub fn mse<T: Scalar>(pred: &Array2<T>, target: &Array2<T>) -> T {
    let n = T::of(target.len() as f64);
    Zip::from(pred)
        .and(target)
        .fold(T::zero(), |acc, &a, &b| acc + (a - b) * (a - b))
        / n
}

pub const MODEL_FORMAT: &str = "mcgc-mlp/1";

/// On-disk model: architecture plus parameters as decimal numbers, in the
/// order of [`MlpRegressor::from_parameters`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format: String,
    pub layer_sizes: Vec<usize>,
    pub activation: Activation,
    pub dropout_rate: f64,
    pub fitted: bool,
    pub parameters: Vec<f64>,
}

/// Input-dropout training regime.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Regime {
    /// Hidden dropout only; one full-input pass.
    #[serde(rename = "NoILD", alias = "noild", alias = "no-ild")]
    NoIld,
    /// A full-input pass plus a randomly channel-masked pass.
    #[serde(rename = "DPILD", alias = "dpild", alias = "dp-ild")]
    DpIld,
    /// A randomly channel-masked pass only.
    #[serde(rename = "ILD", alias = "ild")]
    Ild,
}

impl Regime {
    pub const ALL: [Regime; 3] = [Regime::NoIld, Regime::DpIld, Regime::Ild];

    pub fn name(self) -> &'static str {
        match self {
            Regime::NoIld => "NoILD",
            Regime::DpIld => "DPILD",
            Regime::Ild => "ILD",
        }
    }
}

impl std::fmt::Display for Regime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Regime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace(['-', '_', ' '], "").as_str() {
            "noild" => Ok(Regime::NoIld),
            "dpild" => Ok(Regime::DpIld),
            "ild" => Ok(Regime::Ild),
            _ => Err(Error::Config(format!("unknown regime {s:?}"))),
        }
    }
}

/// The passes one minibatch step uses under `regime`. Each pass gets its
/// own dropout seed; masked passes get a fresh random channel mask.
pub fn regime_passes<R: Rng>(regime: Regime, channels: usize, rng: &mut R) -> Result<Vec<Pass>> {
    let full = |rng: &mut R| Pass {
        mask: None,
        dropout: Some(DropoutState::new(rng.random())),
    };
    let masked = |rng: &mut R| -> Result<Pass> {
        let mask = sample_input_mask(channels, rng)?;
        Ok(Pass {
            mask: Some(mask),
            dropout: Some(DropoutState::new(rng.random())),
        })
    };
    Ok(match regime {
        Regime::NoIld => vec![full(rng)],
        Regime::DpIld => {
            let f = full(rng);
            vec![f, masked(rng)?]
        }
        Regime::Ild => vec![masked(rng)?],
    })
}

/// Regime loss of one minibatch with freshly drawn masks and dropout.
pub fn compute_loss<T: Scalar, R: Rng>(
    model: &MlpRegressor<T>,
    inputs: &Array2<T>,
    targets: &Array2<T>,
    regime: Regime,
    rng: &mut R,
) -> Result<(T, Gradients<T>)> {
    let passes = regime_passes(regime, model.output_width(), rng)?;
    model.loss_and_grad(inputs, targets, &passes)
}

#[derive(Debug, Clone)]
pub struct Adam<T> {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    step: i32,
    m: Gradients<T>,
    v: Gradients<T>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(model: &MlpRegressor<T>, learning_rate: f64, betas: (f64, f64), epsilon: f64) -> Self {
        Self {
            learning_rate,
            beta1: betas.0,
            beta2: betas.1,
            epsilon,
            step: 0,
            m: Gradients::zeros_like(model),
            v: Gradients::zeros_like(model),
        }
    }

    pub fn step(&mut self, model: &mut MlpRegressor<T>, grads: &Gradients<T>) {
        self.step += 1;
        let (b1, b2) = (T::of(self.beta1), T::of(self.beta2));
        let one = T::one();
        let c1 = T::of(1.0 - self.beta1.powi(self.step));
        let c2 = T::of(1.0 - self.beta2.powi(self.step));
        let lr = T::of(self.learning_rate);
        let eps = T::of(self.epsilon);
        let update = |p: &mut T, m: &mut T, v: &mut T, g: T| {
            *m = b1 * *m + (one - b1) * g;
            *v = b2 * *v + (one - b2) * g * g;
            let mh = *m / c1;
            let vh = *v / c2;
            *p = *p - lr * mh / (vh.sqrt() + eps);
        };
        for l in 0..model.weights.len() {
            Zip::from(&mut model.weights[l])
                .and(&mut self.m.weights[l])
                .and(&mut self.v.weights[l])
                .and(&grads.weights[l])
                .for_each(|p, m, v, &g| update(p, m, v, g));
            Zip::from(&mut model.biases[l])
                .and(&mut self.m.biases[l])
                .and(&mut self.v.biases[l])
                .and(&grads.biases[l])
                .for_each(|p, m, v, &g| update(p, m, v, g));
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub regime: Regime,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub adam_betas: (f64, f64),
    pub adam_eps: f64,
    /// Hidden-layer dropout rate.
    pub alpha: f64,
    pub seed: u64,
    /// Epochs without validation improvement before stopping; 0 disables.
    pub early_stop_patience: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            regime: Regime::NoIld,
            epochs: 300,
            batch_size: 64,
            learning_rate: 1e-3,
            adam_betas: (0.9, 0.999),
            adam_eps: 1e-8,
            alpha: 0.1,
            seed: 0,
            early_stop_patience: 25,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning rate must be positive, got {}", self.learning_rate)));
        }
        if !(0.0..1.0).contains(&self.alpha) {
            return Err(Error::Config(format!("alpha must lie in [0, 1), got {}", self.alpha)));
        }
        let (b1, b2) = self.adam_betas;
        if !((0.0..1.0).contains(&b1) && (0.0..1.0).contains(&b2) && self.adam_eps > 0.0) {
            return Err(Error::Config("Adam betas must lie in [0, 1) and eps be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_mse: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose parameters were returned, if any epoch ran.
    pub best_epoch: Option<usize>,
    pub stopped_early: bool,
}

/// Validation MSE of the deterministic network on full inputs.
pub fn validation_mse<T: Scalar>(model: &MlpRegressor<T>, set: &LaggedDataset<T>) -> Result<f64> {
    let pred = model.forward(&set.inputs, None, None)?;
    Ok(mse(&pred, &set.targets).as_f64())
}

/// Minibatch Adam under `config.regime`. Shuffling, dropout seeds and input
/// masks all come from one generator seeded with `config.seed`. Returns the
/// parameters with the lowest validation MSE seen.
pub fn train<T: Scalar>(
    model: &MlpRegressor<T>,
    train_set: &LaggedDataset<T>,
    val_set: &LaggedDataset<T>,
    config: &TrainConfig,
) -> Result<(MlpRegressor<T>, TrainHistory)> {
    config.validate()?;
    for (name, set) in [("training", train_set), ("validation", val_set)] {
        if set.inputs.ncols() != model.input_width() || set.targets.ncols() != model.output_width() {
            return Err(Error::Shape(format!(
                "{name} set is {}->{}, network is {}->{}",
                set.inputs.ncols(),
                set.targets.ncols(),
                model.input_width(),
                model.output_width()
            )));
        }
        if set.is_empty() {
            return Err(Error::Shape(format!("{name} set is empty")));
        }
    }
    let mut history = TrainHistory::default();
    if config.epochs == 0 {
        return Ok((model.clone(), history));
    }

    let mut current = model.clone();
    current.set_dropout_rate(config.alpha)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut adam = Adam::new(&current, config.learning_rate, config.adam_betas, config.adam_eps);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut best: Option<(f64, MlpRegressor<T>)> = None;
    let mut since_best = 0;

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(config.batch_size) {
            let x = train_set.inputs.select(Axis(0), chunk);
            let y = train_set.targets.select(Axis(0), chunk);
            let (loss, grads) = compute_loss(&current, &x, &y, config.regime, &mut rng)?;
            let loss = loss.as_f64();
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch, loss });
            }
            adam.step(&mut current, &grads);
            loss_sum += loss;
            batches += 1;
        }
        let val = validation_mse(&current, val_set)?;
        if !val.is_finite() {
            return Err(Error::Diverged { epoch, loss: val });
        }
        history.epochs.push(EpochRecord {
            epoch,
            train_loss: loss_sum / batches as f64,
            val_mse: val,
        });
        let improved = best.as_ref().is_none_or(|(b, _)| val < *b);
        if improved {
            best = Some((val, current.clone()));
            history.best_epoch = Some(epoch);
            since_best = 0;
        } else {
            since_best += 1;
            if config.early_stop_patience > 0 && since_best >= config.early_stop_patience {
                history.stopped_early = true;
                break;
            }
        }
    }
    let (_, mut out) = best.expect("at least one epoch ran");
    out.fitted = true;
    Ok((out, history))
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub checked: usize,
    /// Parameters skipped because a relu unit changed side within `±h`.
    pub skipped: usize,
}

/// Compares backprop against central finite differences on up to
/// `samples` randomly chosen parameters (all of them if there are fewer).
/// The relative error is `|g_bp - g_fd| / max(1, |g_bp|, |g_fd|)`.
pub fn grad_check<T: Scalar, R: Rng>(
    model: &MlpRegressor<T>,
    inputs: &Array2<T>,
    targets: &Array2<T>,
    passes: &[Pass],
    samples: usize,
    h: f64,
    rng: &mut R,
) -> Result<GradCheckReport> {
    let (_, grads) = model.loss_and_grad(inputs, targets, passes)?;
    let analytic = grads.flatten();
    let total = analytic.len();
    let indices: Vec<usize> = if samples >= total {
        (0..total).collect()
    } else {
        sample(rng, total, samples).into_vec()
    };
    let relu = model.activation == Activation::Relu;
    let base_pattern = if relu {
        model.activation_pattern(inputs, passes)?
    } else {
        Vec::new()
    };
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        checked: 0,
        skipped: 0,
    };
    let step = T::of(h);
    for idx in indices {
        let mut plus = model.clone();
        *plus.parameter_mut(idx) = *plus.parameter_mut(idx) + step;
        let mut minus = model.clone();
        *minus.parameter_mut(idx) = *minus.parameter_mut(idx) - step;
        if relu
            && (plus.activation_pattern(inputs, passes)? != base_pattern
                || minus.activation_pattern(inputs, passes)? != base_pattern)
        {
            report.skipped += 1;
            continue;
        }
        let lp = plus.loss(inputs, targets, passes)?.as_f64();
        let lm = minus.loss(inputs, targets, passes)?.as_f64();
        let fd = (lp - lm) / (2.0 * h);
        let bp = analytic[idx].as_f64();
        let rel = (bp - fd).abs() / 1f64.max(bp.abs()).max(fd.abs());
        report.max_rel_error = report.max_rel_error.max(rel);
        report.checked += 1;
    }
    Ok(report)
}
