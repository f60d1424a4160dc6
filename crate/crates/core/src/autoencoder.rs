//! Fully connected autoencoder `input -> hidden -> embedding -> hidden -> input`
//! with a rectifier after the first layer of each half and linear outputs.
//!
//! Everything runs in `f64` with a fixed iteration order, so a seed fully
//! determines the trained parameters.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum AutoencoderError {
    #[error("expected a vector of length {expected}, got {actual}")]
    ShapeMismatch { expected: usize, actual: usize },
    #[error("loss requires at least one sample")]
    EmptyBatch,
    #[error("training diverged at epoch {epoch}: non-finite {what}")]
    NonFiniteLoss { epoch: usize, what: &'static str },
    #[error("input contains non-finite values")]
    NonFiniteInput,
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("invalid model: {0}")]
    InvalidModel(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub input: usize,
    pub hidden: usize,
    pub embedding: usize,
}

impl Architecture {
    pub const REGION: Architecture = Architecture {
        input: 34,
        hidden: 24,
        embedding: 16,
    };

    /// `(inputs, outputs, rectified)` for each of the four layers.
    fn layers(&self) -> [(usize, usize, bool); 4] {
        [
            (self.input, self.hidden, true),
            (self.hidden, self.embedding, false),
            (self.embedding, self.hidden, true),
            (self.hidden, self.input, false),
        ]
    }
}

impl Default for Architecture {
    fn default() -> Self {
        Architecture::REGION
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Optimizer {
    Sgd,
    /// Adam with beta1 = 0.9, beta2 = 0.999, eps = 1e-8.
    #[default]
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub seed: u64,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: Optimizer,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            seed: 42,
            epochs: 200,
            batch_size: 32,
            learning_rate: 1e-3,
            optimizer: Optimizer::Adam,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), AutoencoderError> {
        let bad = |m: &str| Err(AutoencoderError::InvalidConfig(m.to_owned()));
        if self.epochs == 0 {
            return bad("epochs must be at least 1");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        // Zero is allowed: a frozen run is a useful baseline.
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be a finite non-negative number");
        }
        Ok(())
    }
}

/// Dense layer; `weights` is `outputs x inputs`, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub inputs: usize,
    pub outputs: usize,
    pub relu: bool,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl Layer {
    fn zeros(inputs: usize, outputs: usize, relu: bool) -> Self {
        Layer {
            inputs,
            outputs,
            relu,
            weights: vec![0.0; inputs * outputs],
            biases: vec![0.0; outputs],
        }
    }

    /// Pre-activation `W x + b`.
    fn affine(&self, x: &[f64]) -> Vec<f64> {
        self.weights
            .chunks_exact(self.inputs)
            .zip(&self.biases)
            .map(|(row, b)| row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + b)
            .collect()
    }

    fn activate(&self, pre: &[f64]) -> Vec<f64> {
        if self.relu {
            pre.iter().map(|&v| v.max(0.0)).collect()
        } else {
            pre.to_vec()
        }
    }

    fn is_finite(&self) -> bool {
        self.weights
            .iter()
            .chain(&self.biases)
            .all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Autoencoder {
    pub architecture: Architecture,
    /// Encoder layers 0 and 1, decoder layers 2 and 3.
    pub layers: Vec<Layer>,
}

/// Parameter-shaped gradient of the loss.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Layer>,
}

impl Gradients {
    /// Flat view in the same order as [`Autoencoder::parameter`].
    pub fn flat(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.biases).copied())
            .collect()
    }
}

impl Autoencoder {
    pub fn zeros(architecture: Architecture) -> Self {
        Autoencoder {
            architecture,
            layers: architecture
                .layers()
                .into_iter()
                .map(|(i, o, r)| Layer::zeros(i, o, r))
                .collect(),
        }
    }

    /// Weights uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in))`, biases zero.
    pub fn init(architecture: Architecture, config: &TrainConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut model = Autoencoder::zeros(architecture);
        for layer in &mut model.layers {
            let bound = 1.0 / (layer.inputs as f64).sqrt();
            for w in &mut layer.weights {
                *w = rng.random_range(-bound..bound);
            }
        }
        model
    }

    /// Checks layer shapes against the architecture and that all parameters are finite.
    pub fn check(&self) -> Result<(), AutoencoderError> {
        let expected = self.architecture.layers();
        if self.layers.len() != expected.len() {
            return Err(AutoencoderError::InvalidModel(
                "expected four layers".into(),
            ));
        }
        for (layer, (i, o, r)) in self.layers.iter().zip(expected) {
            if layer.inputs != i
                || layer.outputs != o
                || layer.relu != r
                || layer.weights.len() != i * o
                || layer.biases.len() != o
            {
                return Err(AutoencoderError::InvalidModel(format!(
                    "layer shape {}x{} does not match architecture {o}x{i}",
                    layer.outputs, layer.inputs
                )));
            }
            if !layer.is_finite() {
                return Err(AutoencoderError::InvalidModel(
                    "non-finite parameter".into(),
                ));
            }
        }
        Ok(())
    }

    fn expect_len(x: &[f64], expected: usize) -> Result<(), AutoencoderError> {
        if x.len() == expected {
            Ok(())
        } else {
            Err(AutoencoderError::ShapeMismatch {
                expected,
                actual: x.len(),
            })
        }
    }

    fn run(&self, layers: &[Layer], x: &[f64]) -> Vec<f64> {
        layers
            .iter()
            .fold(x.to_vec(), |a, layer| layer.activate(&layer.affine(&a)))
    }

    pub fn encode(&self, x: &[f64]) -> Result<Vec<f64>, AutoencoderError> {
        Self::expect_len(x, self.architecture.input)?;
        Ok(self.run(&self.layers[..2], x))
    }

    pub fn decode(&self, z: &[f64]) -> Result<Vec<f64>, AutoencoderError> {
        Self::expect_len(z, self.architecture.embedding)?;
        Ok(self.run(&self.layers[2..], z))
    }

    pub fn reconstruct(&self, x: &[f64]) -> Result<Vec<f64>, AutoencoderError> {
        self.decode(&self.encode(x)?)
    }

    fn sample_loss(&self, x: &[f64]) -> Result<f64, AutoencoderError> {
        let rec = self.reconstruct(x)?;
        Ok(x.iter().zip(&rec).map(|(a, b)| (a - b) * (a - b)).sum())
    }

    /// Mean over samples of the squared reconstruction error summed over components.
    pub fn loss<X: AsRef<[f64]>>(&self, batch: &[X]) -> Result<f64, AutoencoderError> {
        if batch.is_empty() {
            return Err(AutoencoderError::EmptyBatch);
        }
        let mut total = 0.0;
        for x in batch {
            total += self.sample_loss(x.as_ref())?;
        }
        Ok(total / batch.len() as f64)
    }

    /// Analytic gradient of [`Autoencoder::loss`]. The rectifier's
    /// derivative at exactly 0 is taken as 0.
    pub fn gradients<X: AsRef<[f64]>>(&self, batch: &[X]) -> Result<Gradients, AutoencoderError> {
        if batch.is_empty() {
            return Err(AutoencoderError::EmptyBatch);
        }
        let scale = 2.0 / batch.len() as f64;
        let mut grads = Gradients {
            layers: self
                .layers
                .iter()
                .map(|l| Layer::zeros(l.inputs, l.outputs, l.relu))
                .collect(),
        };
        for x in batch {
            let x = x.as_ref();
            Self::expect_len(x, self.architecture.input)?;
            // Inputs to each layer and their pre-activations.
            let mut inputs = Vec::with_capacity(self.layers.len());
            let mut pres = Vec::with_capacity(self.layers.len());
            let mut a = x.to_vec();
            for layer in &self.layers {
                let pre = layer.affine(&a);
                let next = layer.activate(&pre);
                inputs.push(a);
                pres.push(pre);
                a = next;
            }
            let mut delta: Vec<f64> = a.iter().zip(x).map(|(r, t)| scale * (r - t)).collect();
            for (idx, layer) in self.layers.iter().enumerate().rev() {
                if layer.relu {
                    for (d, p) in delta.iter_mut().zip(&pres[idx]) {
                        if *p <= 0.0 {
                            *d = 0.0;
                        }
                    }
                }
                let g = &mut grads.layers[idx];
                for (o, &d) in delta.iter().enumerate() {
                    g.biases[o] += d;
                    let row = &mut g.weights[o * layer.inputs..(o + 1) * layer.inputs];
                    for (w, v) in row.iter_mut().zip(&inputs[idx]) {
                        *w += d * v;
                    }
                }
                if idx > 0 {
                    let mut back = vec![0.0; layer.inputs];
                    for (o, &d) in delta.iter().enumerate() {
                        let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                        for (b, w) in back.iter_mut().zip(row) {
                            *b += w * d;
                        }
                    }
                    delta = back;
                }
            }
        }
        Ok(grads)
    }

    pub fn parameter_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.biases.len())
            .sum()
    }

    fn locate(&self, mut index: usize) -> (usize, bool, usize) {
        for (li, l) in self.layers.iter().enumerate() {
            if index < l.weights.len() {
                return (li, true, index);
            }
            index -= l.weights.len();
            if index < l.biases.len() {
                return (li, false, index);
            }
            index -= l.biases.len();
        }
        panic!("parameter index out of range");
    }

    /// Flat parameter access: each layer's weights then its biases, in layer order.
    pub fn parameter(&self, index: usize) -> f64 {
        let (l, w, i) = self.locate(index);
        if w {
            self.layers[l].weights[i]
        } else {
            self.layers[l].biases[i]
        }
    }

    pub fn set_parameter(&mut self, index: usize, value: f64) {
        let (l, w, i) = self.locate(index);
        if w {
            self.layers[l].weights[i] = value;
        } else {
            self.layers[l].biases[i] = value;
        }
    }

    fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weights.iter_mut().chain(l.biases.iter_mut()))
    }

    fn is_finite(&self) -> bool {
        self.layers.iter().all(Layer::is_finite)
    }
}

struct OptimizerState {
    kind: Optimizer,
    lr: f64,
    step: i32,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl OptimizerState {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(kind: Optimizer, lr: f64, n: usize) -> Self {
        OptimizerState {
            kind,
            lr,
            step: 0,
            m: vec![0.0; n],
            v: vec![0.0; n],
        }
    }

    fn apply(&mut self, model: &mut Autoencoder, grads: &Gradients) {
        let g = grads.flat();
        self.step += 1;
        match self.kind {
            Optimizer::Sgd => {
                for (p, g) in model.params_mut().zip(&g) {
                    *p -= self.lr * g;
                }
            }
            Optimizer::Adam => {
                let c1 = 1.0 - Self::BETA1.powi(self.step);
                let c2 = 1.0 - Self::BETA2.powi(self.step);
                for (((p, g), m), v) in model.params_mut().zip(&g).zip(&mut self.m).zip(&mut self.v)
                {
                    *m = Self::BETA1 * *m + (1.0 - Self::BETA1) * g;
                    *v = Self::BETA2 * *v + (1.0 - Self::BETA2) * g * g;
                    let m_hat = *m / c1;
                    let v_hat = *v / c2;
                    *p -= self.lr * m_hat / (v_hat.sqrt() + Self::EPS);
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub model: Autoencoder,
    /// Mean loss over the whole training set after each epoch.
    pub loss_history: Vec<f64>,
}

/// Mini-batch training with a seeded shuffle per epoch.
pub fn train<X: AsRef<[f64]>>(
    model: Autoencoder,
    data: &[X],
    config: &TrainConfig,
) -> Result<TrainOutcome, AutoencoderError> {
    config.validate()?;
    model.check()?;
    if data.is_empty() {
        return Err(AutoencoderError::EmptyBatch);
    }
    for x in data {
        Autoencoder::expect_len(x.as_ref(), model.architecture.input)?;
        if !x.as_ref().iter().all(|v| v.is_finite()) {
            return Err(AutoencoderError::NonFiniteInput);
        }
    }
    let mut model = model;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    // Separate stream from the initializer so shuffles do not replay init draws.
    rng.set_stream(1);
    let mut state = OptimizerState::new(
        config.optimizer,
        config.learning_rate,
        model.parameter_count(),
    );
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut history = Vec::with_capacity(config.epochs);
    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<&[f64]> = chunk.iter().map(|&i| data[i].as_ref()).collect();
            let grads = model.gradients(&batch)?;
            state.apply(&mut model, &grads);
            if !model.is_finite() {
                return Err(AutoencoderError::NonFiniteLoss {
                    epoch,
                    what: "parameter",
                });
            }
        }
        let loss = model.loss(data)?;
        if !loss.is_finite() {
            return Err(AutoencoderError::NonFiniteLoss {
                epoch,
                what: "loss",
            });
        }
        history.push(loss);
    }
    Ok(TrainOutcome {
        model,
        loss_history: history,
    })
}
