use serde::{Deserialize, Serialize};

use crate::bitcodec::StorageFloat;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Value-level damage between two parameter sets.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct NumericMetrics {
    pub fraction_changed: f64,
    pub max_abs_rel_error: f64,
    /// Over finite decoded values only.
    pub rmse: f64,
    pub nan_inf_count: u64,
}

/// Compares `decoded` against `original` element by element.
///
/// Relative error is `|d - o| / max(|o|, eps)` with `eps` the smallest
/// positive normal of the storage layout. Non-finite decoded values are
/// counted and left out of both error figures.
pub fn numeric_metrics<T: StorageFloat>(original: &[Tensor<T>], decoded: &[Tensor<T>]) -> Result<NumericMetrics> {
    if original.len() != decoded.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} tensors vs {}",
            original.len(),
            decoded.len()
        )));
    }
    let eps = T::LAYOUT.min_positive_normal();
    let (mut total, mut changed, mut finite, mut nan_inf) = (0u64, 0u64, 0u64, 0u64);
    let (mut sq, mut max_rel) = (0.0f64, 0.0f64);
    for (o, d) in original.iter().zip(decoded) {
        if o.shape != d.shape || o.data.len() != d.data.len() {
            return Err(Error::ShapeMismatch(format!(
                "`{}` {:?} vs `{}` {:?}",
                o.name, o.shape, d.name, d.shape
            )));
        }
        for (&a, &b) in o.data.iter().zip(&d.data) {
            total += 1;
            if a.to_pattern() != b.to_pattern() {
                changed += 1;
            }
            let (a, b) = (a.to_f64().unwrap_or(f64::NAN), b.to_f64().unwrap_or(f64::NAN));
            if !b.is_finite() {
                nan_inf += 1;
                continue;
            }
            finite += 1;
            let diff = (b - a).abs();
            if diff.is_finite() {
                sq += diff * diff;
                max_rel = max_rel.max(diff / a.abs().max(eps));
            }
        }
    }
    Ok(NumericMetrics {
        fraction_changed: if total == 0 { 0.0 } else { changed as f64 / total as f64 },
        max_abs_rel_error: max_rel,
        rmse: if finite == 0 { 0.0 } else { (sq / finite as f64).sqrt() },
        nan_inf_count: nan_inf,
    })
}
