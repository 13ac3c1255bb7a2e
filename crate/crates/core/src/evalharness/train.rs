//! Deterministic full-batch trainer for the tiny classifier.

use ndarray::{Array1, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

use super::dataset::{EvalSet, NUM_CLASSES};
use super::model::{DenseLayer, TinyModel};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub learning_rate: f32,
    pub momentum: f32,
    /// Halvings of the learning rate allowed after a NaN loss.
    pub max_retries: u32,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            hidden: vec![768, 768],
            epochs: 300,
            learning_rate: 0.1,
            momentum: 0.9,
            max_retries: 3,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: TinyModel<f32>,
    pub final_loss: f32,
    pub learning_rate: f32,
    pub attempts: u32,
}

struct Layer {
    w: Array2<f32>,
    b: Array1<f32>,
    vw: Array2<f32>,
    vb: Array1<f32>,
}

fn init_layers(dims: &[usize], rng: &mut ChaCha8Rng) -> Vec<Layer> {
    dims.windows(2)
        .map(|d| {
            let (inputs, outputs) = (d[0], d[1]);
            let bound = (6.0 / inputs as f32).sqrt();
            let w = Array2::from_shape_fn((outputs, inputs), |_| rng.random_range(-bound..bound));
            Layer {
                w,
                b: Array1::zeros(outputs),
                vw: Array2::zeros((outputs, inputs)),
                vb: Array1::zeros(outputs),
            }
        })
        .collect()
}

fn run(data: &EvalSet, cfg: &TrainConfig, seed: u64, lr: f32) -> Option<(Vec<Layer>, f32)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut dims = vec![data.features];
    dims.extend(&cfg.hidden);
    dims.push(NUM_CLASSES);
    let mut layers = init_layers(&dims, &mut rng);

    let n = data.len();
    let x = Array2::from_shape_vec((n, data.features), data.inputs.clone()).expect("row-major inputs");
    let mut onehot = Array2::<f32>::zeros((n, NUM_CLASSES));
    for (i, &l) in data.labels.iter().enumerate() {
        onehot[[i, l as usize]] = 1.0;
    }

    let mut loss = f32::NAN;
    for _ in 0..cfg.epochs {
        // forward
        let mut acts = vec![x.clone()];
        for (li, layer) in layers.iter().enumerate() {
            let mut z = acts[li].dot(&layer.w.t()) + &layer.b;
            if li + 1 < layers.len() {
                z.mapv_inplace(|v| v.max(0.0));
            }
            acts.push(z);
        }
        let logits = acts.pop().expect("output layer");
        let max = logits.map_axis(Axis(1), |r| r.fold(f32::NEG_INFINITY, |a, &b| a.max(b)));
        let mut probs = &logits - &max.insert_axis(Axis(1));
        probs.mapv_inplace(f32::exp);
        let sums = probs.sum_axis(Axis(1)).insert_axis(Axis(1));
        probs /= &sums;
        loss = -(&probs * &onehot)
            .sum_axis(Axis(1))
            .mapv(|p| if p.is_nan() { p } else { p.max(1e-12).ln() })
            .mean()
            .unwrap_or(f32::NAN);
        if !loss.is_finite() {
            return None;
        }

        // backward
        let mut grad = (probs - &onehot) / n as f32;
        for li in (0..layers.len()).rev() {
            let gw = grad.t().dot(&acts[li]);
            let gb = grad.sum_axis(Axis(0));
            if li > 0 {
                let mut g_in = grad.dot(&layers[li].w);
                g_in.zip_mut_with(&acts[li], |g, &a| {
                    if a <= 0.0 {
                        *g = 0.0;
                    }
                });
                grad = g_in;
            }
            let layer = &mut layers[li];
            layer.vw.zip_mut_with(&gw, |v, &g| *v = cfg.momentum * *v - lr * g);
            layer.vb.zip_mut_with(&gb, |v, &g| *v = cfg.momentum * *v - lr * g);
            layer.w += &layer.vw;
            layer.b += &layer.vb;
        }
    }
    Some((layers, loss))
}

/// Trains on `data` with full-batch gradient descent (heavy-ball momentum).
/// A NaN loss restarts training with half the learning rate, at most
/// `max_retries` times.
pub fn train_model(data: &EvalSet, seed: u64) -> Result<TrainOutcome> {
    train_model_with(data, seed, &TrainConfig::default())
}

pub fn train_model_with(data: &EvalSet, seed: u64, cfg: &TrainConfig) -> Result<TrainOutcome> {
    let mut lr = cfg.learning_rate;
    for attempt in 1..=cfg.max_retries + 1 {
        if let Some((layers, loss)) = run(data, cfg, seed, lr) {
            let model = TinyModel {
                layers: layers
                    .into_iter()
                    .map(|l| DenseLayer {
                        inputs: l.w.ncols(),
                        outputs: l.w.nrows(),
                        weight: l.w.iter().copied().collect(),
                        bias: l.b.to_vec(),
                    })
                    .collect(),
            };
            return Ok(TrainOutcome {
                model,
                final_loss: loss,
                learning_rate: lr,
                attempts: attempt,
            });
        }
        lr *= 0.5;
    }
    Err(Error::TrainingDiverged {
        attempts: cfg.max_retries + 1,
    })
}
