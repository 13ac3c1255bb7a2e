use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bitcodec::StorageFloat;
use crate::error::{Error, Result};
use crate::evalharness::{EvalSet, TinyModel};
use crate::faultinj::derive_stream_seed;
use crate::schemes::{pack_image, SchemeConfig, SchemeKind};

use super::{FaultEvaluator, Metric};

pub const DEFAULT_REPETITIONS: usize = 1000;

/// Whether the flipped word goes through the MSET decoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScanMode {
    Unprotected,
    Mset,
}

impl ScanMode {
    fn scheme(self) -> SchemeConfig {
        let kind = match self {
            ScanMode::Unprotected => SchemeKind::Unprotected,
            ScanMode::Mset => SchemeKind::Mset,
        };
        SchemeConfig::new(kind, 64)
    }
}

/// Accuracy after flipping one bit of one randomly chosen word, repeated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BitscanResult {
    pub bit_index: u32,
    pub mode: ScanMode,
    /// Fault-free accuracy in the same mode.
    pub clean_accuracy: f64,
    pub samples: Vec<f64>,
}

impl BitscanResult {
    pub fn mean(&self) -> f64 {
        self.samples.iter().sum::<f64>() / self.samples.len() as f64
    }

    pub fn min(&self) -> f64 {
        self.samples.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Share of samples strictly below `clean_accuracy - drop`.
    pub fn fraction_below(&self, drop: f64) -> f64 {
        let cut = self.clean_accuracy - drop;
        self.samples.iter().filter(|&&s| s < cut).count() as f64 / self.samples.len() as f64
    }

    /// Share of samples within `delta` of `clean_accuracy`.
    pub fn fraction_within(&self, delta: f64) -> f64 {
        self.samples
            .iter()
            .filter(|&&s| (s - self.clean_accuracy).abs() <= delta)
            .count() as f64
            / self.samples.len() as f64
    }
}

/// Scans each of `bits`. Repetition `r` of bit `b` picks its word with a
/// generator keyed on `(seed, b, r)`, so scans replay individually.
pub fn bitscan<T: StorageFloat>(
    model: &TinyModel<T>,
    eval: &EvalSet,
    bits: &[u32],
    repetitions: usize,
    seed: u64,
    mode: ScanMode,
) -> Result<Vec<BitscanResult>> {
    let n = T::LAYOUT.total_bits();
    if let Some(&bad) = bits.iter().find(|&&b| b >= n) {
        return Err(Error::BitIndexOutOfRange { index: bad, width: n });
    }
    if repetitions == 0 {
        return Err(Error::InvalidConfig("bitscan needs at least one repetition".into()));
    }
    let scheme = mode.scheme();
    let image = pack_image(&model.tensors(), &scheme)?;
    let ev = FaultEvaluator::<T>::new(&image, eval)?;
    let words = ev.word_count();
    if words == 0 {
        return Err(Error::InvalidConfig("model has no parameters".into()));
    }
    let wpl = image.words_per_line();
    let clean = ev.clean_score(Metric::ModelAccuracy);
    Ok(bits
        .iter()
        .map(|&bit| {
            let samples = (0..repetitions)
                .into_par_iter()
                .map(|r| {
                    let mut rng = ChaCha8Rng::seed_from_u64(derive_stream_seed(seed, bit as u64, r as u64));
                    let w = rng.random_range(0..words);
                    let pos = (w / wpl) as u64 * scheme.line_width as u64 + ((w % wpl) as u64 * n as u64) + bit as u64;
                    ev.evaluate(&[pos], Metric::ModelAccuracy).score
                })
                .collect();
            BitscanResult {
                bit_index: bit,
                mode,
                clean_accuracy: clean,
                samples,
            }
        })
        .collect())
}
