//! A small fully connected Q-network written out by hand: input, two hidden
//! layers with a shared nonlinearity, and a linear output layer with one unit
//! per action. Training is plain online SGD on the squared TD error of the
//! selected action only.

mod activation;
mod persist;

pub use activation::Activation;

use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum QNetError {
    #[error("shape mismatch: expected {expected} values, got {got}")]
    Shape { expected: usize, got: usize },
    #[error("action index {index} out of range for {outputs} outputs")]
    ActionIndex { index: usize, outputs: usize },
    #[error("invalid network config: {0}")]
    Config(String),
    #[error("non-finite training state: {0}")]
    NonFinite(String),
    #[error("weights file, {layer}: {message}")]
    Format { layer: String, message: String },
    #[error("weights file i/o: {0}")]
    Io(String),
}

pub const MIN_HIDDEN: usize = 64;
pub const MAX_HIDDEN: usize = 180;
pub const DEFAULT_LEARNING_RATE: f64 = 0.02;
pub const DEFAULT_WEIGHT_INIT_MAX: f64 = 0.1;

/// Hidden layer width for a given state width: `clamp(2 * input_dim, 64, 180)`.
pub fn hidden_width_for(input_dim: usize) -> usize {
    (2 * input_dim).clamp(MIN_HIDDEN, MAX_HIDDEN)
}

/// How the per-action squared error is turned into the SGD objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossReduction {
    /// Step along the gradient of `(target - Q(x, a))^2`.
    Sum,
    /// Step along the gradient of the mean over the whole output vector, where
    /// every non-selected action contributes zero error. Equivalent to `Sum`
    /// with the learning rate divided by the number of actions.
    #[default]
    MeanOverActions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub input_dim: usize,
    pub hidden_dims: [usize; 2],
    pub output_dim: usize,
    #[serde(default)]
    pub activation: Activation,
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    #[serde(default = "default_init_max")]
    pub weight_init_max: f64,
    #[serde(default)]
    pub loss_reduction: LossReduction,
}

fn default_lr() -> f64 {
    DEFAULT_LEARNING_RATE
}

fn default_init_max() -> f64 {
    DEFAULT_WEIGHT_INIT_MAX
}

impl NetworkConfig {
    /// Default Q-net for a state width and action count.
    pub fn for_state(input_dim: usize, output_dim: usize) -> Self {
        let hidden = hidden_width_for(input_dim);
        Self {
            input_dim,
            hidden_dims: [hidden, hidden],
            output_dim,
            activation: Activation::Tanh,
            learning_rate: DEFAULT_LEARNING_RATE,
            weight_init_max: DEFAULT_WEIGHT_INIT_MAX,
            loss_reduction: LossReduction::default(),
        }
    }

    /// Structural checks every network must pass.
    pub fn validate(&self) -> Result<(), QNetError> {
        if self.input_dim == 0 || self.output_dim == 0 || self.hidden_dims.contains(&0) {
            return Err(QNetError::Config("layer sizes must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(QNetError::Config(format!(
                "learning rate {} must be positive",
                self.learning_rate
            )));
        }
        if !(self.weight_init_max >= 0.0 && self.weight_init_max.is_finite()) {
            return Err(QNetError::Config(format!(
                "weight init bound {} must be non-negative",
                self.weight_init_max
            )));
        }
        Ok(())
    }

    /// Additionally requires hidden widths in `[64, 180]`, as used by the
    /// fuzzing loop.
    pub fn validate_for_fuzzing(&self) -> Result<(), QNetError> {
        self.validate()?;
        if self
            .hidden_dims
            .iter()
            .any(|h| !(MIN_HIDDEN..=MAX_HIDDEN).contains(h))
        {
            return Err(QNetError::Config(format!(
                "hidden widths {:?} outside [{MIN_HIDDEN}, {MAX_HIDDEN}]",
                self.hidden_dims
            )));
        }
        Ok(())
    }

    fn dims(&self) -> [usize; 4] {
        [
            self.input_dim,
            self.hidden_dims[0],
            self.hidden_dims[1],
            self.output_dim,
        ]
    }
}

/// One affine map. `weights` is `fan_in x fan_out`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub fan_in: usize,
    pub fan_out: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Layer {
    fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Self {
            fan_in,
            fan_out,
            weights: vec![0.0; fan_in * fan_out],
            bias: vec![0.0; fan_out],
        }
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.weights[i * self.fan_out + j]
    }

    fn affine(&self, x: &[f64]) -> Vec<f64> {
        let mut z = self.bias.clone();
        for (i, &xi) in x.iter().enumerate() {
            let row = &self.weights[i * self.fan_out..(i + 1) * self.fan_out];
            for (zj, &w) in z.iter_mut().zip(row) {
                *zj += xi * w;
            }
        }
        z
    }

    fn all_finite(&self) -> bool {
        self.weights.iter().chain(&self.bias).all(|v| v.is_finite())
    }
}

/// Gradients with the same layout as the network's layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Layer>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    config: NetworkConfig,
    layers: Vec<Layer>,
}

/// Pre- and post-activation values of every layer for one input.
struct Pass {
    /// `acts[0]` is the input, `acts[3]` the Q-values.
    acts: [Vec<f64>; 4],
    /// Pre-activations of layers 1..=3.
    pre: [Vec<f64>; 3],
}

impl Network {
    /// Draws every weight and bias i.i.d. from `U[0, weight_init_max]`.
    pub fn init<R: Rng + ?Sized>(config: NetworkConfig, rng: &mut R) -> Result<Self, QNetError> {
        config.validate()?;
        let dims = config.dims();
        let hi = config.weight_init_max;
        let mut draw = || if hi > 0.0 { rng.gen_range(0.0..=hi) } else { 0.0 };
        let layers = (0..3)
            .map(|l| {
                let mut layer = Layer::zeros(dims[l], dims[l + 1]);
                layer.weights.iter_mut().for_each(|w| *w = draw());
                layer.bias.iter_mut().for_each(|b| *b = draw());
                layer
            })
            .collect();
        Ok(Self { config, layers })
    }

    /// Builds a network from explicit layers, checking shapes against `config`.
    pub fn from_layers(config: NetworkConfig, layers: Vec<Layer>) -> Result<Self, QNetError> {
        config.validate()?;
        let dims = config.dims();
        if layers.len() != 3 {
            return Err(QNetError::Config(format!(
                "expected 3 weight layers, got {}",
                layers.len()
            )));
        }
        for (l, layer) in layers.iter().enumerate() {
            if layer.fan_in != dims[l]
                || layer.fan_out != dims[l + 1]
                || layer.weights.len() != layer.fan_in * layer.fan_out
                || layer.bias.len() != layer.fan_out
            {
                return Err(QNetError::Config(format!("layer {l} has the wrong shape")));
            }
            if !layer.all_finite() {
                return Err(QNetError::NonFinite(format!("layer {l} contains NaN/Inf")));
            }
        }
        Ok(Self { config, layers })
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn output_dim(&self) -> usize {
        self.config.output_dim
    }

    fn pass(&self, state: &[f64]) -> Result<Pass, QNetError> {
        if state.len() != self.config.input_dim {
            return Err(QNetError::Shape {
                expected: self.config.input_dim,
                got: state.len(),
            });
        }
        let act = self.config.activation;
        let z1 = self.layers[0].affine(state);
        let h1: Vec<f64> = z1.iter().map(|&z| act.apply(z)).collect();
        let z2 = self.layers[1].affine(&h1);
        let h2: Vec<f64> = z2.iter().map(|&z| act.apply(z)).collect();
        let q = self.layers[2].affine(&h2);
        Ok(Pass {
            acts: [state.to_vec(), h1, h2, q.clone()],
            pre: [z1, z2, q],
        })
    }

    /// Q-values of every action for `state` in one pass.
    pub fn forward(&self, state: &[f64]) -> Result<Vec<f64>, QNetError> {
        Ok(self.pass(state)?.acts[3].clone())
    }

    /// Loss `(target - Q(state, action))^2` and its exact gradient with
    /// respect to every parameter. Only the selected output receives error.
    pub fn gradients(
        &self,
        state: &[f64],
        action: usize,
        target: f64,
    ) -> Result<(f64, Gradients), QNetError> {
        let outputs = self.config.output_dim;
        if action >= outputs {
            return Err(QNetError::ActionIndex {
                index: action,
                outputs,
            });
        }
        if !target.is_finite() {
            return Err(QNetError::NonFinite(format!("target {target}")));
        }
        let pass = self.pass(state)?;
        let q = pass.acts[3][action];
        let err = q - target;
        let loss = err * err;
        let act = self.config.activation;

        let mut grads: Vec<Layer> = self
            .layers
            .iter()
            .map(|l| Layer::zeros(l.fan_in, l.fan_out))
            .collect();

        // output layer: only column `action` is non-zero
        let mut delta = vec![0.0; outputs];
        delta[action] = 2.0 * err;
        for l in (0..3).rev() {
            let input = &pass.acts[l];
            let g = &mut grads[l];
            for (i, &xi) in input.iter().enumerate() {
                let row = &mut g.weights[i * g.fan_out..(i + 1) * g.fan_out];
                for (gw, &d) in row.iter_mut().zip(&delta) {
                    *gw = xi * d;
                }
            }
            g.bias.copy_from_slice(&delta);
            if l == 0 {
                break;
            }
            let layer = &self.layers[l];
            let below = l - 1;
            delta = (0..layer.fan_in)
                .map(|i| {
                    let row = &layer.weights[i * layer.fan_out..(i + 1) * layer.fan_out];
                    let back: f64 = row.iter().zip(&delta).map(|(w, d)| w * d).sum();
                    back * act.derivative(pass.pre[below][i], pass.acts[l][i])
                })
                .collect();
        }
        Ok((loss, Gradients { layers: grads }))
    }

    /// Effective step size after loss reduction.
    pub fn step_size(&self) -> f64 {
        match self.config.loss_reduction {
            LossReduction::Sum => self.config.learning_rate,
            LossReduction::MeanOverActions => {
                self.config.learning_rate / self.config.output_dim as f64
            }
        }
    }

    /// Applies `params -= step * grads`. Nothing is written if any resulting
    /// parameter would be non-finite.
    pub fn apply_gradients(&mut self, grads: &Gradients, step: f64) -> Result<(), QNetError> {
        for (l, (layer, g)) in self.layers.iter().zip(&grads.layers).enumerate() {
            let bad = layer
                .weights
                .iter()
                .zip(&g.weights)
                .chain(layer.bias.iter().zip(&g.bias))
                .position(|(w, d)| !(w - step * d).is_finite());
            if let Some(idx) = bad {
                return Err(QNetError::NonFinite(format!(
                    "update would make layer {l} parameter {idx} non-finite"
                )));
            }
        }
        for (layer, g) in self.layers.iter_mut().zip(&grads.layers) {
            for (w, d) in layer.weights.iter_mut().zip(&g.weights) {
                *w -= step * d;
            }
            for (b, d) in layer.bias.iter_mut().zip(&g.bias) {
                *b -= step * d;
            }
        }
        Ok(())
    }

    /// One SGD step towards `target` for `action`. Returns the pre-step loss.
    pub fn train_step(&mut self, state: &[f64], action: usize, target: f64) -> Result<f64, QNetError> {
        let (loss, grads) = self.gradients(state, action, target).map_err(|e| match e {
            QNetError::NonFinite(msg) => QNetError::NonFinite(format!(
                "{msg} (action {action}, state len {})",
                state.len()
            )),
            other => other,
        })?;
        if !loss.is_finite() {
            return Err(QNetError::NonFinite(format!(
                "loss {loss} for action {action}, target {target}"
            )));
        }
        let step = self.step_size();
        self.apply_gradients(&grads, step).map_err(|e| {
            QNetError::NonFinite(format!("{e}; loss {loss}, target {target}, action {action}"))
        })?;
        Ok(loss)
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(Layer::all_finite)
    }
}

/// Index of the largest value; the lowest index wins ties.
pub fn argmax(values: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &v) in values.iter().enumerate() {
        match best {
            Some((_, b)) if v <= b => {}
            _ => best = Some((i, v)),
        }
    }
    best.map(|(i, _)| i)
}
