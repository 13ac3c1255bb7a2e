//! Uniform, BER-parameterised bit-flip faults over a memory image.
//!
//! Each scenario draws a flip count from `Binomial(N, ber)` over all N
//! stored bits (payload and check bits alike) and then picks that many
//! distinct positions uniformly, which is distributed exactly like flipping
//! every bit independently with probability `ber`.
//!
//! The generator for a scenario is ChaCha8 seeded with
//! `derive_seed(seed, ber, iteration)`, so a scenario can be replayed on
//! its own and results do not depend on how iterations are scheduled.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::schemes::MemoryImage;

/// One fault scenario.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FaultSpec {
    pub ber: f64,
    pub seed: u64,
    pub iteration: u64,
}

impl FaultSpec {
    pub fn new(ber: f64, seed: u64, iteration: u64) -> Result<Self> {
        if !(0.0..=1.0).contains(&ber) {
            return Err(Error::InvalidConfig(format!("bit error rate {ber} outside [0, 1]")));
        }
        Ok(FaultSpec { ber, seed, iteration })
    }

    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(derive_seed(self.seed, self.ber, self.iteration))
    }

    /// Sorted, distinct flip positions in `[0, total_bits)`.
    pub fn positions(&self, total_bits: u64) -> Vec<u64> {
        let mut rng = self.rng();
        let count = sample_flip_count(total_bits, self.ber, &mut rng);
        sample_positions(total_bits, count, &mut rng)
    }
}

/// Audit trail of an injection.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct InjectionReceipt {
    pub flips_total: u64,
    pub flips_in_data: u64,
    pub flips_in_check: u64,
    /// Only kept by [`inject_debug`].
    pub positions: Option<Vec<u64>>,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stable per-scenario seed: splitmix64 folded over seed, BER bits and
/// iteration.
pub fn derive_seed(seed: u64, ber: f64, iteration: u64) -> u64 {
    derive_stream_seed(seed, ber.to_bits(), iteration)
}

/// Same fold with an arbitrary 64-bit tag in place of the BER.
pub fn derive_stream_seed(seed: u64, tag: u64, index: u64) -> u64 {
    let h = splitmix64(seed);
    let h = splitmix64(h ^ tag);
    splitmix64(h ^ index)
}

pub fn sample_flip_count<R: rand::Rng + ?Sized>(total_bits: u64, ber: f64, rng: &mut R) -> u64 {
    if ber <= 0.0 || total_bits == 0 {
        return 0;
    }
    if ber >= 1.0 {
        return total_bits;
    }
    Binomial::new(total_bits, ber)
        .expect("probability checked above")
        .sample(rng)
}

/// `count` distinct positions drawn uniformly from `[0, total_bits)`, sorted.
pub fn sample_positions<R: rand::Rng + ?Sized>(total_bits: u64, count: u64, rng: &mut R) -> Vec<u64> {
    let count = count.min(total_bits) as usize;
    let mut out: Vec<u64> = index::sample(rng, total_bits as usize, count)
        .into_iter()
        .map(|i| i as u64)
        .collect();
    out.sort_unstable();
    out
}

fn inject_impl(image: &MemoryImage, spec: &FaultSpec, keep: bool) -> (MemoryImage, InjectionReceipt) {
    let positions = spec.positions(image.total_bits());
    let mut out = image.clone();
    for &p in &positions {
        out.flip(p);
    }
    let data_bits = image.data_bits();
    let in_data = positions.partition_point(|&p| p < data_bits) as u64;
    let receipt = InjectionReceipt {
        flips_total: positions.len() as u64,
        flips_in_data: in_data,
        flips_in_check: positions.len() as u64 - in_data,
        positions: keep.then_some(positions),
    };
    (out, receipt)
}

/// Returns a faulty copy of `image`; the input is left untouched.
pub fn inject(image: &MemoryImage, spec: &FaultSpec) -> (MemoryImage, InjectionReceipt) {
    inject_impl(image, spec, false)
}

/// Like [`inject`] but the receipt keeps every flipped position.
pub fn inject_debug(image: &MemoryImage, spec: &FaultSpec) -> (MemoryImage, InjectionReceipt) {
    inject_impl(image, spec, true)
}
