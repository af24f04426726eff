//! Seed-deterministic training of the toy scorer on synthetic shape images.

use super::{ModelSpec, ScorerError, ScorerModel, WeightGrads};
use ndarray::Array3;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};

#[derive(Debug, Clone)]
pub struct LabeledImage {
    pub pixels: Array3<f64>,
    pub label: usize,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub images: Vec<LabeledImage>,
    pub classes: usize,
}

/// Filled circles (class 0) versus filled squares (class 1) on dark
/// backgrounds, with randomised positions, sizes and colors.
pub fn shapes_dataset(count: usize, size: usize, seed: u64) -> Dataset {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut images = Vec::with_capacity(count);
    for idx in 0..count {
        let label = idx % 2;
        let bg: [f64; 3] = std::array::from_fn(|_| rng.gen_range(0.0..0.3));
        let fg: [f64; 3] = std::array::from_fn(|_| rng.gen_range(0.6..1.0));
        let radius = rng.gen_range(size as f64 / 8.0..size as f64 / 4.0);
        let margin = radius.ceil() as usize + 2;
        let cy = rng.gen_range(margin..size - margin) as f64;
        let cx = rng.gen_range(margin..size - margin) as f64;
        let mut pixels = Array3::zeros((size, size, 3));
        for y in 0..size {
            for x in 0..size {
                let (dy, dx) = (y as f64 - cy, x as f64 - cx);
                let inside = if label == 0 {
                    (dy * dy + dx * dx).sqrt() <= radius
                } else {
                    dy.abs().max(dx.abs()) <= radius
                };
                let color = if inside { fg } else { bg };
                for ch in 0..3 {
                    pixels[(y, x, ch)] = color[ch];
                }
            }
        }
        images.push(LabeledImage { pixels, label });
    }
    Dataset { images, classes: 2 }
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    /// Per-batch global gradient-norm clip; stabilises the small net against
    /// occasional exploding batches.
    pub clip_norm: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 20,
            learning_rate: 0.05,
            momentum: 0.8,
            clip_norm: 1.0,
            batch_size: 8,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub per_epoch_loss: Vec<f64>,
    pub train_accuracy: f64,
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().fold(f64::NEG_INFINITY, |m, &x| m.max(x));
    let exps: Vec<f64> = logits.iter().map(|&x| (x - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Mini-batch SGD on softmax cross-entropy. Deterministic per seed: the
/// epoch shuffle, the init and the update order all derive from the config.
/// `epochs = 0` returns the seeded initialisation untouched.
pub fn train_toy(
    spec: &ModelSpec,
    dataset: &Dataset,
    config: &TrainConfig,
) -> Result<(ScorerModel, TrainReport), ScorerError> {
    if dataset.images.is_empty() {
        return Err(ScorerError::EmptyDataset);
    }
    if dataset.classes < 2 {
        return Err(ScorerError::TooFewClasses(dataset.classes));
    }
    let mut model = ScorerModel::init(spec, config.seed)?;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(1));
    let batch = config.batch_size.max(1);
    let mut order: Vec<usize> = (0..dataset.images.len()).collect();
    let mut per_epoch_loss = Vec::with_capacity(config.epochs);
    let mut velocity: Option<Vec<Option<WeightGrads>>> = None;

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(batch) {
            let mut accumulated: Option<Vec<Option<WeightGrads>>> = None;
            let scale = 1.0 / chunk.len() as f64;
            for &idx in chunk {
                let sample = &dataset.images[idx];
                let logits = model.forward_logits(&sample.pixels)?;
                let probs = softmax(&logits);
                epoch_loss -= (probs[sample.label].max(1e-300)).ln();
                let mut grad_logits = probs;
                grad_logits[sample.label] -= 1.0;
                for g in &mut grad_logits {
                    *g *= scale;
                }
                let grads = model.backward_weights(&sample.pixels, &grad_logits);
                match accumulated.as_mut() {
                    None => accumulated = Some(grads),
                    Some(acc) => {
                        for (a, g) in acc.iter_mut().zip(grads) {
                            if let (Some(a), Some(g)) = (a.as_mut(), g) {
                                for (x, y) in a.weight.iter_mut().zip(&g.weight) {
                                    *x += y;
                                }
                                for (x, y) in a.bias.iter_mut().zip(&g.bias) {
                                    *x += y;
                                }
                            }
                        }
                    }
                }
            }
            if let Some(mut grads) = accumulated {
                if config.clip_norm > 0.0 {
                    let mut norm_sq = 0.0;
                    for g in grads.iter().flatten() {
                        norm_sq += g.weight.iter().map(|x| x * x).sum::<f64>();
                        norm_sq += g.bias.iter().map(|x| x * x).sum::<f64>();
                    }
                    let norm = norm_sq.sqrt();
                    if norm > config.clip_norm {
                        let scale = config.clip_norm / norm;
                        for g in grads.iter_mut().flatten() {
                            for x in &mut g.weight {
                                *x *= scale;
                            }
                            for x in &mut g.bias {
                                *x *= scale;
                            }
                        }
                    }
                }
                let step = match velocity.take() {
                    None => grads,
                    Some(mut vel) => {
                        for (v, g) in vel.iter_mut().zip(grads) {
                            if let (Some(v), Some(g)) = (v.as_mut(), g) {
                                for (x, y) in v.weight.iter_mut().zip(&g.weight) {
                                    *x = config.momentum * *x + y;
                                }
                                for (x, y) in v.bias.iter_mut().zip(&g.bias) {
                                    *x = config.momentum * *x + y;
                                }
                            }
                        }
                        vel
                    }
                };
                model.apply_weight_grads(&step, config.learning_rate);
                velocity = Some(step);
            }
        }
        let mean_loss = epoch_loss / dataset.images.len() as f64;
        if !mean_loss.is_finite() {
            return Err(ScorerError::NonConvergence { epoch });
        }
        per_epoch_loss.push(mean_loss);
    }

    let mut correct = 0usize;
    for sample in &dataset.images {
        let logits = model.forward_logits(&sample.pixels)?;
        let predicted = logits
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .unwrap_or(0);
        if predicted == sample.label {
            correct += 1;
        }
    }
    let report = TrainReport {
        per_epoch_loss,
        train_accuracy: correct as f64 / dataset.images.len() as f64,
    };
    Ok((model, report))
}
