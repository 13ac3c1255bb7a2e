//! Protection codecs and their compositions.
//!
//! Two word-level codecs embed their redundancy inside the parameter word
//! itself ([`mset`], [`cep`]); the line-level [`secded`] code keeps its check
//! bits in a separate sidecar. Compositions apply the word codec first and
//! the line code last, and decode in the reverse order.

pub mod cep;
mod image;
pub mod mset;
mod overhead;
pub mod secded;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::bitcodec::{FloatLayout, Word};
use crate::error::{Error, Result};

pub use cep::{cep_decode, cep_encode, feasible_chunk_sizes, DEFAULT_CHUNK_SIZE};
pub use image::{
    pack_image, unpack_image, DecodeStatus, LineCodec, LineOutcome, LineStatus, MemoryImage, TensorDescriptor,
};
pub use mset::{mset_decode, mset_encode};
pub use overhead::{overhead_report, OverheadReport};
pub use secded::{secded_decode, secded_encode, SecdedCode};

/// Which protection pipeline is applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SchemeKind {
    #[serde(rename = "none")]
    Unprotected,
    #[serde(rename = "secded")]
    Secded,
    #[serde(rename = "mset")]
    Mset,
    #[serde(rename = "cep")]
    Cep,
    #[serde(rename = "mset+secded")]
    MsetPlusSecded,
    #[serde(rename = "cep+secded")]
    CepPlusSecded,
}

impl SchemeKind {
    pub const ALL: [SchemeKind; 6] = [
        SchemeKind::Unprotected,
        SchemeKind::Secded,
        SchemeKind::Mset,
        SchemeKind::Cep,
        SchemeKind::MsetPlusSecded,
        SchemeKind::CepPlusSecded,
    ];

    pub const fn name(self) -> &'static str {
        match self {
            SchemeKind::Unprotected => "none",
            SchemeKind::Secded => "secded",
            SchemeKind::Mset => "mset",
            SchemeKind::Cep => "cep",
            SchemeKind::MsetPlusSecded => "mset+secded",
            SchemeKind::CepPlusSecded => "cep+secded",
        }
    }

    pub const fn has_secded(self) -> bool {
        matches!(
            self,
            SchemeKind::Secded | SchemeKind::MsetPlusSecded | SchemeKind::CepPlusSecded
        )
    }

    pub const fn uses_cep(self) -> bool {
        matches!(self, SchemeKind::Cep | SchemeKind::CepPlusSecded)
    }

    pub const fn uses_mset(self) -> bool {
        matches!(self, SchemeKind::Mset | SchemeKind::MsetPlusSecded)
    }
}

impl fmt::Display for SchemeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SchemeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        SchemeKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .or(match s.as_str() {
                "unprotected" => Some(SchemeKind::Unprotected),
                "ecc" => Some(SchemeKind::Secded),
                "mset+ecc" => Some(SchemeKind::MsetPlusSecded),
                "cep+ecc" => Some(SchemeKind::CepPlusSecded),
                _ => None,
            })
            .ok_or_else(|| Error::InvalidConfig(format!("unknown scheme `{s}`")))
    }
}

/// A protection pipeline bound to a memory line width.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SchemeConfig {
    pub kind: SchemeKind,
    pub line_width: u32,
    /// Only meaningful for the CEP variants.
    pub chunk_size: u32,
}

impl SchemeConfig {
    pub const fn new(kind: SchemeKind, line_width: u32) -> Self {
        SchemeConfig {
            kind,
            line_width,
            chunk_size: DEFAULT_CHUNK_SIZE,
        }
    }

    pub const fn with_chunk_size(mut self, chunk_size: u32) -> Self {
        self.chunk_size = chunk_size;
        self
    }

    pub fn validate(&self, layout: FloatLayout) -> Result<()> {
        if self.line_width != 64 && self.line_width != 128 {
            return Err(Error::UnsupportedLineWidth(self.line_width));
        }
        if !self.line_width.is_multiple_of(layout.total_bits()) {
            return Err(Error::LayoutMismatch(format!(
                "{}-bit line is not a multiple of {layout}",
                self.line_width
            )));
        }
        if self.kind.uses_cep() {
            cep::check_chunk_size(self.chunk_size, layout.total_bits())?;
        }
        Ok(())
    }

    pub fn words_per_line(&self, layout: FloatLayout) -> usize {
        (self.line_width / layout.total_bits()) as usize
    }

    pub fn word_codec(&self) -> WordCodec {
        match self.kind {
            SchemeKind::Mset | SchemeKind::MsetPlusSecded => WordCodec::Mset,
            SchemeKind::Cep | SchemeKind::CepPlusSecded => WordCodec::Cep(self.chunk_size),
            SchemeKind::Unprotected | SchemeKind::Secded => WordCodec::Identity,
        }
    }

    /// Human-readable label, e.g. `cep(3)+secded/64`.
    pub fn label(&self) -> String {
        let kind = if self.kind.uses_cep() && self.chunk_size != DEFAULT_CHUNK_SIZE {
            self.kind
                .name()
                .replacen("cep", &format!("cep({})", self.chunk_size), 1)
        } else {
            self.kind.name().to_string()
        };
        format!("{kind}/{}", self.line_width)
    }
}

/// The per-word part of a scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WordCodec {
    Identity,
    Mset,
    Cep(u32),
}

/// What a word decoder noticed while decoding.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct WordEvents {
    /// MSET replicas disagreed and the majority overrode at least one copy.
    pub votes_repaired: u32,
    /// CEP groups whose parity failed and whose chunk was zeroed.
    pub chunks_zeroed: u32,
}

impl WordCodec {
    /// Callers validate chunk sizes up front; an infeasible chunk here panics.
    pub fn encode(self, w: Word) -> Word {
        match self {
            WordCodec::Identity => w,
            WordCodec::Mset => mset_encode(w),
            WordCodec::Cep(c) => cep_encode(w, c).expect("chunk size validated"),
        }
    }

    pub fn decode(self, w: Word) -> (Word, WordEvents) {
        match self {
            WordCodec::Identity => (w, WordEvents::default()),
            WordCodec::Mset => {
                let (out, repaired) = mset::mset_decode_counted(w);
                (
                    out,
                    WordEvents {
                        votes_repaired: repaired as u32,
                        chunks_zeroed: 0,
                    },
                )
            }
            WordCodec::Cep(c) => {
                let (out, zeroed) = cep::cep_decode_counted(w, c).expect("chunk size validated");
                (
                    out,
                    WordEvents {
                        votes_repaired: 0,
                        chunks_zeroed: zeroed,
                    },
                )
            }
        }
    }

    /// Bits of an arbitrary word that survive a fault-free encode/decode.
    pub fn preserved_mask(self, layout: FloatLayout) -> u32 {
        match self {
            WordCodec::Identity => layout.mask(),
            WordCodec::Mset => layout.mask() & !0b11,
            WordCodec::Cep(c) => {
                let n = layout.total_bits();
                let kept = (n / (c + 1)) * c;
                layout.mask() & !((1u32 << (n - kept)) - 1)
            }
        }
    }
}
