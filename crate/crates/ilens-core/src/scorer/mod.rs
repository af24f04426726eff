//! The differentiable scorer: a small trainable CNN whose intermediate-layer
//! activation is the feature vector f used as the game's utility.
//!
//! Weights are stored as 32-bit floats (the interchange format is bit-exact);
//! all activation arithmetic runs in f64 so gradient checks hold to tight
//! tolerances. Layers implement their own reverse-mode rules, so a forward
//! pass up to the feature tap plus a backward sweep yields the gradient of
//! any feature functional with respect to the input image.

mod grid;
mod train;
mod weights;

pub use grid::{GridError, GridImage};
pub use train::{shapes_dataset, train_toy, Dataset, LabeledImage, TrainConfig, TrainReport};
pub use weights::{load_model, save_model};

use crate::game::CoalitionGame;
use crate::subset::Subset;
use ndarray::Array3;
use rand::{Rng, SeedableRng};
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ScorerError {
    #[error("input shape {got:?} does not match model input {expected:?}")]
    ShapeMismatch {
        expected: (usize, usize, usize),
        got: (usize, usize, usize),
    },
    #[error("cotangent has dimension {got}, feature dimension is {expected}")]
    CotangentMismatch { expected: usize, got: usize },
    #[error("bad model spec: {0}")]
    BadSpec(String),
    #[error("training diverged (non-finite loss) in epoch {epoch}")]
    NonConvergence { epoch: usize },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("need at least 2 classes, got {0}")]
    TooFewClasses(usize),
    #[error("weights file: {0}")]
    BadWeights(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Grid(#[from] GridError),
}

/// Layer blueprint; shapes are inferred from the model input.
#[derive(Debug, Clone, PartialEq)]
pub enum LayerSpec {
    Conv { out_ch: usize, kernel: usize },
    Relu,
    AvgPool { size: usize },
    Flatten,
    Dense { out_dim: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub input: (usize, usize, usize),
    pub layers: Vec<LayerSpec>,
    /// Number of layers to run for `forward_features`; defaults to stopping
    /// right before the final dense layer.
    pub feature_tap: usize,
}

impl ModelSpec {
    /// Three conv blocks (3x3 kernels, stride-2 average pooling) and a dense
    /// classifier head; features are tapped at the dense layer's input.
    pub fn toy(input: (usize, usize, usize), classes: usize) -> Self {
        let layers = vec![
            LayerSpec::Conv { out_ch: 8, kernel: 3 },
            LayerSpec::Relu,
            LayerSpec::AvgPool { size: 2 },
            LayerSpec::Conv { out_ch: 16, kernel: 3 },
            LayerSpec::Relu,
            LayerSpec::AvgPool { size: 2 },
            LayerSpec::Conv { out_ch: 32, kernel: 3 },
            LayerSpec::Relu,
            LayerSpec::AvgPool { size: 2 },
            LayerSpec::Flatten,
            LayerSpec::Dense { out_dim: classes },
        ];
        let feature_tap = layers.len() - 1;
        ModelSpec {
            input,
            layers,
            feature_tap,
        }
    }
}

/// One concrete layer with its (32-bit) parameters.
#[derive(Debug, Clone)]
pub enum Layer {
    /// Stride-1 convolution with zero padding `kernel / 2`.
    /// Weights are row-major (out_ch, in_ch, ky, kx).
    Conv {
        weight: Vec<f32>,
        bias: Vec<f32>,
        out_ch: usize,
        in_ch: usize,
        kernel: usize,
    },
    Relu,
    /// Non-overlapping average pooling; input dims must divide evenly.
    AvgPool { size: usize },
    Flatten,
    /// Weights row-major (out_dim, in_dim).
    Dense {
        weight: Vec<f32>,
        bias: Vec<f32>,
        out_dim: usize,
        in_dim: usize,
    },
}

/// Activation shapes as they flow through the stack.
#[derive(Debug, Clone, PartialEq)]
pub enum ActShape {
    Map(usize, usize, usize),
    Flat(usize),
}

impl ActShape {
    pub fn len(&self) -> usize {
        match *self {
            ActShape::Map(h, w, c) => h * w * c,
            ActShape::Flat(d) => d,
        }
    }
}

/// An activation: either a (H, W, C) map or a flat vector. Map data is
/// row-major (y, x, c), which makes flattening a plain reinterpretation.
#[derive(Debug, Clone)]
pub struct Act {
    pub shape: ActShape,
    pub data: Vec<f64>,
}

impl Act {
    fn zeros(shape: ActShape) -> Self {
        let len = shape.len();
        Act {
            shape,
            data: vec![0.0; len],
        }
    }

    fn from_map(map: &Array3<f64>) -> Self {
        let (h, w, c) = map.dim();
        Act {
            shape: ActShape::Map(h, w, c),
            data: map.iter().copied().collect(),
        }
    }

    fn into_map(self) -> Array3<f64> {
        match self.shape {
            ActShape::Map(h, w, c) => Array3::from_shape_vec((h, w, c), self.data)
                .expect("activation length matches its shape"),
            ActShape::Flat(_) => panic!("expected a map activation"),
        }
    }
}

pub struct WeightGrads {
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Layer {
    fn out_shape(&self, input: &ActShape) -> Result<ActShape, ScorerError> {
        match (self, input) {
            (Layer::Conv { out_ch, in_ch, .. }, ActShape::Map(h, w, c)) => {
                if c != in_ch {
                    return Err(ScorerError::BadSpec(format!(
                        "conv expects {in_ch} input channels, got {c}"
                    )));
                }
                Ok(ActShape::Map(*h, *w, *out_ch))
            }
            (Layer::Relu, shape) => Ok(shape.clone()),
            (Layer::AvgPool { size }, ActShape::Map(h, w, c)) => {
                if *size == 0 || h % size != 0 || w % size != 0 {
                    return Err(ScorerError::BadSpec(format!(
                        "pool size {size} does not divide {h}x{w}"
                    )));
                }
                Ok(ActShape::Map(h / size, w / size, *c))
            }
            (Layer::Flatten, ActShape::Map(h, w, c)) => Ok(ActShape::Flat(h * w * c)),
            (Layer::Dense { out_dim, in_dim, .. }, ActShape::Flat(d)) => {
                if d != in_dim {
                    return Err(ScorerError::BadSpec(format!(
                        "dense expects {in_dim} inputs, got {d}"
                    )));
                }
                Ok(ActShape::Flat(*out_dim))
            }
            (layer, shape) => Err(ScorerError::BadSpec(format!(
                "layer {layer:?} cannot follow activation {shape:?}"
            ))),
        }
    }

    fn forward(&self, input: &Act) -> Act {
        match self {
            Layer::Conv {
                weight,
                bias,
                out_ch,
                in_ch,
                kernel,
            } => {
                let (h, w) = match input.shape {
                    ActShape::Map(h, w, _) => (h, w),
                    _ => unreachable!("shape-checked"),
                };
                let mut out = Act::zeros(ActShape::Map(h, w, *out_ch));
                let pad = kernel / 2;
                let x = &input.data;
                let o = &mut out.data;
                for y in 0..h {
                    for xcol in 0..w {
                        for oc in 0..*out_ch {
                            let mut acc = bias[oc] as f64;
                            let wbase = oc * in_ch * kernel * kernel;
                            for ky in 0..*kernel {
                                let iy = y + ky;
                                if iy < pad || iy - pad >= h {
                                    continue;
                                }
                                let iy = iy - pad;
                                for kx in 0..*kernel {
                                    let ix = xcol + kx;
                                    if ix < pad || ix - pad >= w {
                                        continue;
                                    }
                                    let ix = ix - pad;
                                    let ibase = (iy * w + ix) * in_ch;
                                    let kbase = wbase + ky * kernel + kx;
                                    for ic in 0..*in_ch {
                                        acc += weight[kbase + ic * kernel * kernel] as f64
                                            * x[ibase + ic];
                                    }
                                }
                            }
                            o[(y * w + xcol) * out_ch + oc] = acc;
                        }
                    }
                }
                out
            }
            Layer::Relu => Act {
                shape: input.shape.clone(),
                data: input.data.iter().map(|&v| v.max(0.0)).collect(),
            },
            Layer::AvgPool { size } => {
                let (h, w, c) = match input.shape {
                    ActShape::Map(h, w, c) => (h, w, c),
                    _ => unreachable!("shape-checked"),
                };
                let (oh, ow) = (h / size, w / size);
                let norm = 1.0 / (size * size) as f64;
                let mut out = Act::zeros(ActShape::Map(oh, ow, c));
                for y in 0..oh {
                    for xcol in 0..ow {
                        let obase = (y * ow + xcol) * c;
                        for dy in 0..*size {
                            let iy = y * size + dy;
                            for dx in 0..*size {
                                let ibase = (iy * w + xcol * size + dx) * c;
                                for ch in 0..c {
                                    out.data[obase + ch] += input.data[ibase + ch];
                                }
                            }
                        }
                        for ch in 0..c {
                            out.data[obase + ch] *= norm;
                        }
                    }
                }
                out
            }
            Layer::Flatten => Act {
                shape: ActShape::Flat(input.shape.len()),
                data: input.data.clone(),
            },
            Layer::Dense {
                weight,
                bias,
                out_dim,
                in_dim,
            } => {
                let mut out = Act::zeros(ActShape::Flat(*out_dim));
                for o in 0..*out_dim {
                    let mut acc = bias[o] as f64;
                    let base = o * in_dim;
                    for i in 0..*in_dim {
                        acc += weight[base + i] as f64 * input.data[i];
                    }
                    out.data[o] = acc;
                }
                out
            }
        }
    }

    fn backward(
        &self,
        input: &Act,
        grad_out: &Act,
        want_weight_grads: bool,
    ) -> (Act, Option<WeightGrads>) {
        match self {
            Layer::Conv {
                weight,
                out_ch,
                in_ch,
                kernel,
                ..
            } => {
                let (h, w) = match input.shape {
                    ActShape::Map(h, w, _) => (h, w),
                    _ => unreachable!("shape-checked"),
                };
                let pad = kernel / 2;
                let mut grad_in = Act::zeros(input.shape.clone());
                let mut grads = want_weight_grads.then(|| WeightGrads {
                    weight: vec![0.0; weight.len()],
                    bias: vec![0.0; *out_ch],
                });
                for y in 0..h {
                    for xcol in 0..w {
                        for oc in 0..*out_ch {
                            let g = grad_out.data[(y * w + xcol) * out_ch + oc];
                            if g == 0.0 {
                                continue;
                            }
                            if let Some(gr) = grads.as_mut() {
                                gr.bias[oc] += g;
                            }
                            let wbase = oc * in_ch * kernel * kernel;
                            for ky in 0..*kernel {
                                let iy = y + ky;
                                if iy < pad || iy - pad >= h {
                                    continue;
                                }
                                let iy = iy - pad;
                                for kx in 0..*kernel {
                                    let ix = xcol + kx;
                                    if ix < pad || ix - pad >= w {
                                        continue;
                                    }
                                    let ix = ix - pad;
                                    let ibase = (iy * w + ix) * in_ch;
                                    let kbase = wbase + ky * kernel + kx;
                                    for ic in 0..*in_ch {
                                        let widx = kbase + ic * kernel * kernel;
                                        grad_in.data[ibase + ic] += weight[widx] as f64 * g;
                                        if let Some(gr) = grads.as_mut() {
                                            gr.weight[widx] += input.data[ibase + ic] * g;
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
                (grad_in, grads)
            }
            Layer::Relu => {
                let data = input
                    .data
                    .iter()
                    .zip(&grad_out.data)
                    .map(|(&x, &g)| if x > 0.0 { g } else { 0.0 })
                    .collect();
                (
                    Act {
                        shape: input.shape.clone(),
                        data,
                    },
                    None,
                )
            }
            Layer::AvgPool { size } => {
                let (h, w, c) = match input.shape {
                    ActShape::Map(h, w, c) => (h, w, c),
                    _ => unreachable!("shape-checked"),
                };
                let ow = w / size;
                let norm = 1.0 / (size * size) as f64;
                let mut grad_in = Act::zeros(input.shape.clone());
                for y in 0..h {
                    for xcol in 0..w {
                        let obase = ((y / size) * ow + xcol / size) * c;
                        let ibase = (y * w + xcol) * c;
                        for ch in 0..c {
                            grad_in.data[ibase + ch] = grad_out.data[obase + ch] * norm;
                        }
                    }
                }
                (grad_in, None)
            }
            Layer::Flatten => (
                Act {
                    shape: input.shape.clone(),
                    data: grad_out.data.clone(),
                },
                None,
            ),
            Layer::Dense {
                weight,
                out_dim,
                in_dim,
                ..
            } => {
                let mut grad_in = Act::zeros(input.shape.clone());
                let mut grads = want_weight_grads.then(|| WeightGrads {
                    weight: vec![0.0; weight.len()],
                    bias: vec![0.0; *out_dim],
                });
                for o in 0..*out_dim {
                    let g = grad_out.data[o];
                    if g == 0.0 {
                        continue;
                    }
                    if let Some(gr) = grads.as_mut() {
                        gr.bias[o] += g;
                    }
                    let base = o * in_dim;
                    for i in 0..*in_dim {
                        grad_in.data[i] += weight[base + i] as f64 * g;
                        if let Some(gr) = grads.as_mut() {
                            gr.weight[base + i] += input.data[i] * g;
                        }
                    }
                }
                (grad_in, grads)
            }
        }
    }
}

/// A layer stack with a feature tap. Weights are immutable after
/// construction; forward and gradient evaluation are deterministic and safe
/// to call concurrently.
#[derive(Debug, Clone)]
pub struct ScorerModel {
    input: (usize, usize, usize),
    layers: Vec<Layer>,
    feature_tap: usize,
    feature_dim: usize,
}

impl ScorerModel {
    pub fn from_layers(
        input: (usize, usize, usize),
        layers: Vec<Layer>,
        feature_tap: usize,
    ) -> Result<Self, ScorerError> {
        if feature_tap > layers.len() {
            return Err(ScorerError::BadSpec(format!(
                "feature tap {feature_tap} beyond the {} layers",
                layers.len()
            )));
        }
        let mut shape = ActShape::Map(input.0, input.1, input.2);
        let mut feature_dim = shape.len();
        for (idx, layer) in layers.iter().enumerate() {
            shape = layer.out_shape(&shape)?;
            if idx + 1 == feature_tap {
                feature_dim = shape.len();
            }
        }
        if feature_tap == 0 {
            feature_dim = input.0 * input.1 * input.2;
        }
        Ok(ScorerModel {
            input,
            layers,
            feature_tap,
            feature_dim,
        })
    }

    /// Seeded initialisation: uniform weights scaled by fan-in and fan-out,
    /// zero biases.
    pub fn init(spec: &ModelSpec, seed: u64) -> Result<Self, ScorerError> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        Self::build(spec, |fan_in, fan_out, count, out| {
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for _ in 0..count {
                out.push(rng.gen_range(-limit..=limit) as f32);
            }
        })
    }

    /// All-zero weights and biases.
    pub fn zeros(spec: &ModelSpec) -> Result<Self, ScorerError> {
        Self::build(spec, |_, _, count, out| out.resize(out.len() + count, 0.0))
    }

    fn build(
        spec: &ModelSpec,
        mut fill: impl FnMut(usize, usize, usize, &mut Vec<f32>),
    ) -> Result<Self, ScorerError> {
        let mut shape = ActShape::Map(spec.input.0, spec.input.1, spec.input.2);
        let mut layers = Vec::with_capacity(spec.layers.len());
        for layer_spec in &spec.layers {
            let layer = match *layer_spec {
                LayerSpec::Conv { out_ch, kernel } => {
                    let in_ch = match shape {
                        ActShape::Map(_, _, c) => c,
                        _ => {
                            return Err(ScorerError::BadSpec("conv after flatten".to_string()))
                        }
                    };
                    if kernel % 2 == 0 || kernel == 0 {
                        return Err(ScorerError::BadSpec(format!(
                            "conv kernel must be odd, got {kernel}"
                        )));
                    }
                    let mut weight = Vec::new();
                    fill(
                        in_ch * kernel * kernel,
                        out_ch * kernel * kernel,
                        out_ch * in_ch * kernel * kernel,
                        &mut weight,
                    );
                    Layer::Conv {
                        weight,
                        bias: vec![0.0; out_ch],
                        out_ch,
                        in_ch,
                        kernel,
                    }
                }
                LayerSpec::Relu => Layer::Relu,
                LayerSpec::AvgPool { size } => Layer::AvgPool { size },
                LayerSpec::Flatten => Layer::Flatten,
                LayerSpec::Dense { out_dim } => {
                    let in_dim = shape.len();
                    let mut weight = Vec::new();
                    fill(in_dim, out_dim, out_dim * in_dim, &mut weight);
                    Layer::Dense {
                        weight,
                        bias: vec![0.0; out_dim],
                        out_dim,
                        in_dim,
                    }
                }
            };
            shape = layer.out_shape(&shape)?;
            layers.push(layer);
        }
        Self::from_layers(spec.input, layers, spec.feature_tap)
    }

    pub fn input_shape(&self) -> (usize, usize, usize) {
        self.input
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn feature_tap(&self) -> usize {
        self.feature_tap
    }

    /// Dimension d of the tapped feature vector.
    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    fn check_input(&self, image: &Array3<f64>) -> Result<(), ScorerError> {
        if image.dim() != self.input {
            return Err(ScorerError::ShapeMismatch {
                expected: self.input,
                got: image.dim(),
            });
        }
        Ok(())
    }

    fn forward_acts(&self, image: &Array3<f64>, upto: usize) -> Vec<Act> {
        let mut acts = Vec::with_capacity(upto + 1);
        acts.push(Act::from_map(image));
        for layer in &self.layers[..upto] {
            let next = layer.forward(acts.last().unwrap());
            acts.push(next);
        }
        acts
    }

    /// Feature vector at the tap layer (flattened, row-major).
    pub fn forward_features(&self, image: &Array3<f64>) -> Result<Vec<f64>, ScorerError> {
        self.check_input(image)?;
        let acts = self.forward_acts(image, self.feature_tap);
        Ok(acts.last().unwrap().data.clone())
    }

    /// Full-stack output (the classifier logits for trained toy models).
    pub fn forward_logits(&self, image: &Array3<f64>) -> Result<Vec<f64>, ScorerError> {
        self.check_input(image)?;
        let acts = self.forward_acts(image, self.layers.len());
        Ok(acts.last().unwrap().data.clone())
    }

    /// Gradient of <features, cotangent> with respect to the input image,
    /// by reverse-mode accumulation through the layer stack.
    pub fn input_gradient(
        &self,
        image: &Array3<f64>,
        cotangent: &[f64],
    ) -> Result<Array3<f64>, ScorerError> {
        self.check_input(image)?;
        if cotangent.len() != self.feature_dim {
            return Err(ScorerError::CotangentMismatch {
                expected: self.feature_dim,
                got: cotangent.len(),
            });
        }
        let acts = self.forward_acts(image, self.feature_tap);
        let mut grad = Act {
            shape: acts.last().unwrap().shape.clone(),
            data: cotangent.to_vec(),
        };
        for idx in (0..self.feature_tap).rev() {
            grad = self.layers[idx].backward(&acts[idx], &grad, false).0;
        }
        Ok(grad.into_map())
    }

    /// Full-stack forward plus weight-gradient backward; drives training.
    pub(crate) fn backward_weights(
        &self,
        image: &Array3<f64>,
        grad_logits: &[f64],
    ) -> Vec<Option<WeightGrads>> {
        let acts = self.forward_acts(image, self.layers.len());
        let mut grad = Act {
            shape: acts.last().unwrap().shape.clone(),
            data: grad_logits.to_vec(),
        };
        let mut weight_grads = Vec::with_capacity(self.layers.len());
        for idx in (0..self.layers.len()).rev() {
            let (g, wg) = self.layers[idx].backward(&acts[idx], &grad, true);
            grad = g;
            weight_grads.push(wg);
        }
        weight_grads.reverse();
        weight_grads
    }

    pub(crate) fn apply_weight_grads(&mut self, grads: &[Option<WeightGrads>], learning_rate: f64) {
        for (layer, grad) in self.layers.iter_mut().zip(grads) {
            let Some(grad) = grad else { continue };
            match layer {
                Layer::Conv { weight, bias, .. } | Layer::Dense { weight, bias, .. } => {
                    for (w, g) in weight.iter_mut().zip(&grad.weight) {
                        *w = (*w as f64 - learning_rate * g) as f32;
                    }
                    for (b, g) in bias.iter_mut().zip(&grad.bias) {
                        *b = (*b as f64 - learning_rate * g) as f32;
                    }
                }
                _ => {}
            }
        }
    }
}

/// The coalition game of a (model, image) pair: players are grid cells and
/// the value of a coalition is the feature vector of the image with every
/// other cell masked to the baseline color.
pub fn game_from_image(model: Arc<ScorerModel>, image: Arc<GridImage>) -> CoalitionGame {
    let n = image.cell_count();
    CoalitionGame::new(n, move |s: &Subset| {
        let masked = image.masked_input(s).expect("subset within the grid");
        model
            .forward_features(&masked)
            .expect("grid image matches the model input shape")
    })
    .expect("grid has at least one cell and features at least one dimension")
}

#[cfg(test)]
mod tests;
