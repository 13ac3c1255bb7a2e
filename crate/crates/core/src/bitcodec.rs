//! Bit-level views of stored floating-point parameters.
//!
//! Bit index 0 is the least significant bit of a word; the sign bit sits at
//! `total_bits - 1` and the exponent MSB at `total_bits - 2`.

use std::fmt;

use half::f16;
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Bit-field geometry of a binary interchange floating-point format.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct FloatLayout {
    total_bits: u32,
    exp_bits: u32,
    mantissa_bits: u32,
}

impl FloatLayout {
    pub const FP32: FloatLayout = FloatLayout {
        total_bits: 32,
        exp_bits: 8,
        mantissa_bits: 23,
    };
    pub const FP16: FloatLayout = FloatLayout {
        total_bits: 16,
        exp_bits: 5,
        mantissa_bits: 10,
    };

    pub const fn total_bits(self) -> u32 {
        self.total_bits
    }

    pub const fn sign_bits(self) -> u32 {
        1
    }

    pub const fn exp_bits(self) -> u32 {
        self.exp_bits
    }

    pub const fn mantissa_bits(self) -> u32 {
        self.mantissa_bits
    }

    /// Position of the most significant exponent bit.
    pub const fn exp_msb(self) -> u32 {
        self.total_bits - 2
    }

    pub const fn mask(self) -> u32 {
        if self.total_bits == 32 {
            u32::MAX
        } else {
            (1 << self.total_bits) - 1
        }
    }

    pub const fn exponent_bias(self) -> i32 {
        (1 << (self.exp_bits - 1)) - 1
    }

    /// Smallest positive normal value, `2^(1 - bias)`.
    pub fn min_positive_normal(self) -> f64 {
        2f64.powi(1 - self.exponent_bias())
    }

    /// Short lowercase name used in manifests and on the command line.
    pub const fn name(self) -> &'static str {
        match self.total_bits {
            32 => "fp32",
            _ => "fp16",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name.to_ascii_lowercase().as_str() {
            "fp32" | "f32" => Some(Self::FP32),
            "fp16" | "f16" => Some(Self::FP16),
            _ => None,
        }
    }
}

impl fmt::Display for FloatLayout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl TryFrom<String> for FloatLayout {
    type Error = String;

    fn try_from(value: String) -> std::result::Result<Self, Self::Error> {
        FloatLayout::from_name(&value).ok_or_else(|| format!("unknown dtype `{value}`"))
    }
}

impl From<FloatLayout> for String {
    fn from(layout: FloatLayout) -> Self {
        layout.name().to_string()
    }
}

/// An n-bit pattern tagged with the layout it belongs to.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Word {
    bits: u32,
    layout: FloatLayout,
}

impl Word {
    /// Bits above the layout width are discarded.
    pub const fn new(bits: u32, layout: FloatLayout) -> Self {
        Word {
            bits: bits & layout.mask(),
            layout,
        }
    }

    pub const fn bits(self) -> u32 {
        self.bits
    }

    pub const fn layout(self) -> FloatLayout {
        self.layout
    }

    pub const fn bit(self, i: u32) -> bool {
        (self.bits >> i) & 1 == 1
    }

    pub const fn with_bits(self, bits: u32) -> Self {
        Word::new(bits, self.layout)
    }
}

impl fmt::Debug for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let digits = (self.layout.total_bits / 4) as usize;
        write!(f, "Word({}:0x{:0digits$X})", self.layout, self.bits)
    }
}

/// Sign, biased exponent and mantissa fields of a word.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Fields {
    pub sign: u32,
    pub exponent: u32,
    pub mantissa: u32,
}

/// Encodes `value` in `layout`, rounding to nearest-even. Out-of-range values
/// saturate to infinity.
pub fn to_bits(value: f64, layout: FloatLayout) -> Word {
    let bits = match layout.total_bits {
        32 => (value as f32).to_bits(),
        _ => f16::from_f64(value).to_bits() as u32,
    };
    Word::new(bits, layout)
}

/// Decodes a word. NaN patterns decode to a NaN.
pub fn from_bits(w: Word) -> f64 {
    match w.layout.total_bits {
        32 => f32::from_bits(w.bits) as f64,
        _ => f16::from_bits(w.bits as u16).to_f64(),
    }
}

pub fn flip_bit(w: Word, i: u32) -> Result<Word> {
    let width = w.layout.total_bits;
    if i >= width {
        return Err(Error::BitIndexOutOfRange { index: i, width });
    }
    Ok(w.with_bits(w.bits ^ (1 << i)))
}

pub fn extract_fields(w: Word) -> Fields {
    let l = w.layout;
    Fields {
        sign: w.bits >> (l.total_bits - 1),
        exponent: (w.bits >> l.mantissa_bits) & ((1 << l.exp_bits) - 1),
        mantissa: w.bits & ((1 << l.mantissa_bits) - 1),
    }
}

/// A scalar type that parameters are stored in.
///
/// Inference widens stored values to [`StorageFloat::Accum`] before any
/// arithmetic, so faults are observed at the storage precision only.
pub trait StorageFloat: Float + Copy + Send + Sync + fmt::Debug + 'static {
    type Accum: Float + Send + Sync + fmt::Debug + 'static;

    const LAYOUT: FloatLayout;

    fn to_pattern(self) -> u32;

    fn from_pattern(bits: u32) -> Self;

    fn to_accum(self) -> Self::Accum;

    fn from_f32(v: f32) -> Self;

    fn to_word(self) -> Word {
        Word::new(self.to_pattern(), Self::LAYOUT)
    }

    fn from_word(w: Word) -> Self {
        debug_assert_eq!(w.layout(), Self::LAYOUT);
        Self::from_pattern(w.bits())
    }
}

impl StorageFloat for f32 {
    type Accum = f64;

    const LAYOUT: FloatLayout = FloatLayout::FP32;

    fn to_pattern(self) -> u32 {
        self.to_bits()
    }

    fn from_pattern(bits: u32) -> Self {
        f32::from_bits(bits)
    }

    fn to_accum(self) -> f64 {
        self as f64
    }

    fn from_f32(v: f32) -> Self {
        v
    }
}

impl StorageFloat for f16 {
    type Accum = f32;

    const LAYOUT: FloatLayout = FloatLayout::FP16;

    fn to_pattern(self) -> u32 {
        self.to_bits() as u32
    }

    fn from_pattern(bits: u32) -> Self {
        f16::from_bits(bits as u16)
    }

    fn to_accum(self) -> f32 {
        self.to_f32()
    }

    fn from_f32(v: f32) -> Self {
        f16::from_f32(v)
    }
}
