use num_traits::{Float, Zero};
use rayon::prelude::*;

use crate::bitcodec::StorageFloat;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::dataset::EvalSet;

/// Dense layer with a row-major `outputs x inputs` weight matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer<T> {
    pub inputs: usize,
    pub outputs: usize,
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Copy> DenseLayer<T> {
    pub fn parameter_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    fn map<U>(&self, f: impl Fn(T) -> U) -> DenseLayer<U> {
        DenseLayer {
            inputs: self.inputs,
            outputs: self.outputs,
            weight: self.weight.iter().map(|&w| f(w)).collect(),
            bias: self.bias.iter().map(|&b| f(b)).collect(),
        }
    }
}

/// A rectified multilayer perceptron classified by argmax.
#[derive(Debug, Clone, PartialEq)]
pub struct TinyModel<T> {
    pub layers: Vec<DenseLayer<T>>,
}

/// Rectifier that lets NaN through.
#[inline]
pub(crate) fn relu<A: Float>(x: A) -> A {
    if x < A::zero() {
        A::zero()
    } else {
        x
    }
}

/// Index of the largest logit; `None` if any logit is NaN or infinite.
#[inline]
pub(crate) fn argmax<A: Float>(logits: &[A]) -> Option<usize> {
    let mut best = 0;
    for (i, &v) in logits.iter().enumerate() {
        if !v.is_finite() {
            return None;
        }
        if v > logits[best] {
            best = i;
        }
    }
    Some(best)
}

impl<T: StorageFloat> TinyModel<T> {
    pub fn input_dim(&self) -> usize {
        self.layers.first().map_or(0, |l| l.inputs)
    }

    pub fn num_classes(&self) -> usize {
        self.layers.last().map_or(0, |l| l.outputs)
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(DenseLayer::parameter_count).sum()
    }

    /// Parameters in storage order: `layer{i}.weight` then `layer{i}.bias`.
    pub fn tensors(&self) -> Vec<Tensor<T>> {
        self.layers
            .iter()
            .enumerate()
            .flat_map(|(i, l)| {
                [
                    Tensor::new(format!("layer{i}.weight"), vec![l.outputs, l.inputs], l.weight.clone()),
                    Tensor::new(format!("layer{i}.bias"), vec![l.outputs], l.bias.clone()),
                ]
            })
            .collect()
    }

    pub fn from_tensors(tensors: Vec<Tensor<T>>) -> Result<Self> {
        if tensors.is_empty() || !tensors.len().is_multiple_of(2) {
            return Err(Error::DimensionMismatch(format!(
                "expected weight/bias pairs, got {} tensors",
                tensors.len()
            )));
        }
        let mut layers: Vec<DenseLayer<T>> = Vec::with_capacity(tensors.len() / 2);
        let mut it = tensors.into_iter();
        while let (Some(w), Some(b)) = (it.next(), it.next()) {
            let i = layers.len();
            if w.name != format!("layer{i}.weight") || b.name != format!("layer{i}.bias") {
                return Err(Error::DimensionMismatch(format!(
                    "unexpected tensor names `{}`, `{}` for layer {i}",
                    w.name, b.name
                )));
            }
            let &[outputs, inputs] = w.shape.as_slice() else {
                return Err(Error::DimensionMismatch(format!("`{}` is not a matrix", w.name)));
            };
            if b.shape != [outputs] || w.data.len() != outputs * inputs || b.data.len() != outputs {
                return Err(Error::DimensionMismatch(format!(
                    "layer {i} bias/weight shapes disagree"
                )));
            }
            if let Some(prev) = layers.last() {
                if prev.outputs != inputs {
                    return Err(Error::DimensionMismatch(format!(
                        "layer {i} expects {inputs} inputs, previous layer emits {}",
                        prev.outputs
                    )));
                }
            }
            layers.push(DenseLayer {
                inputs,
                outputs,
                weight: w.data,
                bias: b.data,
            });
        }
        Ok(TinyModel { layers })
    }

    /// Converts every parameter through `f32` into another storage type.
    pub fn cast<U: StorageFloat>(&self) -> TinyModel<U> {
        TinyModel {
            layers: self
                .layers
                .iter()
                .map(|l| l.map(|v| U::from_f32(v.to_f32().unwrap_or(f32::NAN))))
                .collect(),
        }
    }

    /// Parameters widened to the accumulator type, ready for inference.
    pub fn widened(&self) -> WideModel<T::Accum> {
        WideModel {
            layers: self.layers.iter().map(|l| l.map(|v| v.to_accum())).collect(),
        }
    }
}

/// Inference-ready copy of a model in accumulator precision.
#[derive(Debug, Clone)]
pub struct WideModel<A> {
    pub layers: Vec<DenseLayer<A>>,
}

impl<A: Float + Send + Sync> WideModel<A> {
    pub fn max_width(&self) -> usize {
        self.layers.iter().map(|l| l.outputs.max(l.inputs)).max().unwrap_or(0)
    }

    /// Runs one input, storing every layer's pre-activations in `pre`.
    pub(crate) fn forward_into(&self, x: &[f32], pre: &mut [Vec<A>]) {
        for (li, layer) in self.layers.iter().enumerate() {
            let (done, rest) = pre.split_at_mut(li);
            let out = &mut rest[0];
            out.clear();
            for o in 0..layer.outputs {
                let row = &layer.weight[o * layer.inputs..(o + 1) * layer.inputs];
                let mut acc = A::zero();
                if li == 0 {
                    for (w, &xi) in row.iter().zip(x) {
                        acc = acc + *w * A::from(xi).unwrap_or_else(A::nan);
                    }
                } else {
                    for (w, &z) in row.iter().zip(&done[li - 1]) {
                        acc = acc + *w * relu(z);
                    }
                }
                out.push(acc + layer.bias[o]);
            }
        }
    }

    pub fn predict(&self, x: &[f32]) -> Option<usize> {
        let mut pre = vec![Vec::with_capacity(self.max_width()); self.layers.len()];
        self.forward_into(x, &mut pre);
        argmax(pre.last().expect("at least one layer"))
    }

    pub fn accuracy(&self, eval: &EvalSet) -> Result<f64> {
        if eval.is_empty() {
            return Err(Error::EmptyEvalSet);
        }
        let dim = self.layers.first().map_or(0, |l| l.inputs);
        if eval.features != dim {
            return Err(Error::DimensionMismatch(format!(
                "model takes {dim} features, eval set has {}",
                eval.features
            )));
        }
        let correct: usize = (0..eval.len())
            .into_par_iter()
            .map_init(
                || vec![Vec::with_capacity(self.max_width()); self.layers.len()],
                |pre, i| {
                    self.forward_into(eval.input(i), pre);
                    usize::from(argmax(pre.last().unwrap()) == Some(eval.labels[i] as usize))
                },
            )
            .sum();
        Ok(correct as f64 / eval.len() as f64)
    }
}

/// Fraction of eval samples whose argmax prediction matches the label.
/// Samples with a NaN or infinite logit count as wrong.
pub fn accuracy<T: StorageFloat>(model: &TinyModel<T>, eval: &EvalSet) -> Result<f64> {
    model.widened().accuracy(eval)
}

impl<T: StorageFloat> TinyModel<T> {
    /// Same architecture with every parameter set to zero.
    pub fn zeroed(&self) -> Self {
        TinyModel {
            layers: self.layers.iter().map(|l| l.map(|_| T::zero())).collect(),
        }
    }
}

impl<A: Zero + Copy> DenseLayer<A> {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        DenseLayer {
            inputs,
            outputs,
            weight: vec![A::zero(); inputs * outputs],
            bias: vec![A::zero(); outputs],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use half::f16;

    fn toy() -> TinyModel<f32> {
        // class = argmax(x0, x1, 0.5)
        TinyModel {
            layers: vec![
                DenseLayer {
                    inputs: 2,
                    outputs: 2,
                    weight: vec![1.0, 0.0, 0.0, 1.0],
                    bias: vec![0.0, 0.0],
                },
                DenseLayer {
                    inputs: 2,
                    outputs: 3,
                    weight: vec![1.0, 0.0, 0.0, 1.0, 0.0, 0.0],
                    bias: vec![0.0, 0.0, 0.5],
                },
            ],
        }
    }

    fn toy_eval() -> EvalSet {
        EvalSet {
            features: 2,
            inputs: vec![1.0, 0.0, 0.0, 1.0, 0.1, 0.2, -1.0, -1.0],
            labels: vec![0, 1, 2, 2],
        }
    }

    #[test]
    fn toy_model_classifies() {
        let m = toy();
        assert_eq!(accuracy(&m, &toy_eval()).unwrap(), 1.0);
        assert_eq!(accuracy(&m.cast::<f16>(), &toy_eval()).unwrap(), 1.0);
    }

    #[test]
    fn tensors_round_trip() {
        let m = toy();
        let t = m.tensors();
        assert_eq!(t[0].name, "layer0.weight");
        assert_eq!(t[3].shape, vec![3]);
        assert_eq!(TinyModel::from_tensors(t).unwrap(), m);
        assert_eq!(m.parameter_count(), 4 + 2 + 6 + 3);
    }

    #[test]
    fn broken_chain_is_rejected() {
        let mut t = toy().tensors();
        t[2] = Tensor::new("layer1.weight", vec![3, 3], vec![0.0; 9]);
        assert!(matches!(TinyModel::from_tensors(t), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn nan_logits_are_wrong() {
        let mut m = toy();
        m.layers[0].weight = vec![f32::NAN; 4];
        assert_eq!(accuracy(&m, &toy_eval()).unwrap(), 0.0);
        assert_eq!(argmax(&[1.0, f64::INFINITY]), None);
        assert!(relu(f64::NAN).is_nan());
    }

    #[test]
    fn empty_or_mismatched_eval_rejected() {
        let empty = EvalSet {
            features: 2,
            inputs: vec![],
            labels: vec![],
        };
        assert!(matches!(accuracy(&toy(), &empty), Err(Error::EmptyEvalSet)));
        let wide = EvalSet {
            features: 3,
            inputs: vec![0.0; 3],
            labels: vec![0],
        };
        assert!(matches!(accuracy(&toy(), &wide), Err(Error::DimensionMismatch(_))));
    }
}
