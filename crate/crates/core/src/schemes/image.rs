use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bitcodec::{FloatLayout, StorageFloat, Word};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::secded::SecdedCode;
use super::{SchemeConfig, WordCodec};

/// Outcome of decoding one memory line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LineStatus {
    Clean,
    /// Codeword position that was flipped back.
    Corrected(u16),
    DetectedUncorrectable,
}

/// Per-line outcomes of an image decode plus aggregate counters.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DecodeStatus {
    pub per_line: Vec<LineStatus>,
    pub corrected_lines: u64,
    pub due_lines: u64,
    pub votes_repaired: u64,
    pub chunks_zeroed: u64,
}

impl DecodeStatus {
    /// Faults the decoders believe they repaired.
    pub fn corrected_events(&self) -> u64 {
        self.corrected_lines + self.votes_repaired
    }

    /// Faults that were detected but could not be repaired.
    pub fn detected_events(&self) -> u64 {
        self.due_lines + self.chunks_zeroed
    }

    pub fn is_all_clean(&self) -> bool {
        self.per_line.iter().all(|s| *s == LineStatus::Clean) && self.votes_repaired == 0 && self.chunks_zeroed == 0
    }

    pub(crate) fn record(&mut self, outcome: &LineOutcome) {
        self.per_line.push(outcome.status);
        self.absorb(outcome);
    }

    pub(crate) fn absorb(&mut self, outcome: &LineOutcome) {
        match outcome.status {
            LineStatus::Clean => {}
            LineStatus::Corrected(_) => self.corrected_lines += 1,
            LineStatus::DetectedUncorrectable => self.due_lines += 1,
        }
        self.votes_repaired += outcome.votes_repaired as u64;
        self.chunks_zeroed += outcome.chunks_zeroed as u64;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LineOutcome {
    pub status: LineStatus,
    pub votes_repaired: u32,
    pub chunks_zeroed: u32,
}

/// Location of one tensor inside the packed word stream.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorDescriptor {
    pub name: String,
    pub shape: Vec<usize>,
    pub word_offset: usize,
    pub word_count: usize,
}

/// Parameter words packed into fixed-width lines.
///
/// Word `i` of a line occupies line bits `[i*n, (i+1)*n)`. The tail of the
/// last line is padded with encoded zero words.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MemoryImage {
    pub layout: FloatLayout,
    pub scheme: SchemeConfig,
    pub lines: Vec<u128>,
    /// One check word per line, present iff the scheme includes SECDED.
    pub check_bits: Option<Vec<u16>>,
    pub manifest: Vec<TensorDescriptor>,
}

impl MemoryImage {
    pub fn word_count(&self) -> usize {
        self.manifest.iter().map(|t| t.word_count).sum()
    }

    pub fn words_per_line(&self) -> usize {
        self.scheme.words_per_line(self.layout)
    }

    pub fn data_bits(&self) -> u64 {
        self.lines.len() as u64 * self.scheme.line_width as u64
    }

    /// Width of each sidecar check word, 0 without SECDED.
    pub fn check_width(&self) -> u32 {
        if self.scheme.kind.has_secded() {
            SecdedCode::for_width(self.scheme.line_width)
                .map(|c| c.check_bits())
                .unwrap_or(0)
        } else {
            0
        }
    }

    pub fn check_bits_total(&self) -> u64 {
        self.check_bits
            .as_ref()
            .map_or(0, |c| c.len() as u64 * self.check_width() as u64)
    }

    /// Every bit a fault can land on: line payload then sidecar.
    pub fn total_bits(&self) -> u64 {
        self.data_bits() + self.check_bits_total()
    }

    /// Flips one bit of the combined address space. Data bits come first
    /// (line-major, LSB first), followed by the sidecar check bits.
    pub fn flip(&mut self, position: u64) {
        let w = self.scheme.line_width as u64;
        if position < self.data_bits() {
            self.lines[(position / w) as usize] ^= 1u128 << (position % w);
        } else {
            let cw = self.check_width() as u64;
            let rel = position - self.data_bits();
            let checks = self.check_bits.as_mut().expect("position beyond data bits");
            checks[(rel / cw) as usize] ^= 1u16 << (rel % cw);
        }
    }

    pub(crate) fn validate(&self) -> Result<()> {
        self.scheme.validate(self.layout)?;
        let words = self.word_count();
        let wpl = self.words_per_line();
        let mut offset = 0;
        for t in &self.manifest {
            if t.word_offset != offset || t.shape.iter().product::<usize>() != t.word_count {
                return Err(Error::ManifestMismatch(format!(
                    "tensor `{}` is not contiguous with its shape",
                    t.name
                )));
            }
            offset += t.word_count;
        }
        if self.lines.len() != words.div_ceil(wpl) {
            return Err(Error::ManifestMismatch(format!(
                "{} words need {} lines, image has {}",
                words,
                words.div_ceil(wpl),
                self.lines.len()
            )));
        }
        match (&self.check_bits, self.scheme.kind.has_secded()) {
            (Some(c), true) if c.len() == self.lines.len() => Ok(()),
            (None, false) => Ok(()),
            (Some(c), true) => Err(Error::ManifestMismatch(format!(
                "{} check words for {} lines",
                c.len(),
                self.lines.len()
            ))),
            (Some(_), false) => Err(Error::ManifestMismatch("check bits present without SECDED".into())),
            (None, true) => Err(Error::ManifestMismatch("SECDED image lacks check bits".into())),
        }
    }
}

/// Encodes and decodes single lines for one scheme and layout.
#[derive(Debug, Clone, Copy)]
pub struct LineCodec {
    layout: FloatLayout,
    words_per_line: usize,
    word_codec: WordCodec,
    secded: Option<&'static SecdedCode>,
}

impl LineCodec {
    pub fn new(scheme: &SchemeConfig, layout: FloatLayout) -> Result<Self> {
        scheme.validate(layout)?;
        let secded = if scheme.kind.has_secded() {
            Some(SecdedCode::for_width(scheme.line_width)?)
        } else {
            None
        };
        Ok(LineCodec {
            layout,
            words_per_line: scheme.words_per_line(layout),
            word_codec: scheme.word_codec(),
            secded,
        })
    }

    pub fn words_per_line(&self) -> usize {
        self.words_per_line
    }

    pub fn word_codec(&self) -> WordCodec {
        self.word_codec
    }

    pub fn secded(&self) -> Option<&'static SecdedCode> {
        self.secded
    }

    /// Packs up to `words_per_line` raw patterns; missing words are zero.
    pub fn encode_line(&self, words: &[u32]) -> (u128, Option<u16>) {
        debug_assert!(words.len() <= self.words_per_line);
        let n = self.layout.total_bits();
        let mut line = 0u128;
        for i in 0..self.words_per_line {
            let raw = words.get(i).copied().unwrap_or(0);
            let enc = self.word_codec.encode(Word::new(raw, self.layout));
            line |= (enc.bits() as u128) << (i as u32 * n);
        }
        (line, self.secded.map(|c| c.encode(line)))
    }

    /// Decodes a received line into `out.len()` words (at most
    /// `words_per_line`).
    pub fn decode_line(&self, data: u128, check: Option<u16>, out: &mut [u32]) -> LineOutcome {
        let (data, status) = match (self.secded, check) {
            (Some(code), Some(check)) => code.decode(data, check),
            _ => (data, LineStatus::Clean),
        };
        let n = self.layout.total_bits();
        let mut outcome = LineOutcome {
            status,
            votes_repaired: 0,
            chunks_zeroed: 0,
        };
        for (i, slot) in out.iter_mut().enumerate() {
            let raw = ((data >> (i as u32 * n)) as u32) & self.layout.mask();
            let (dec, ev) = self.word_codec.decode(Word::new(raw, self.layout));
            *slot = dec.bits();
            outcome.votes_repaired += ev.votes_repaired;
            outcome.chunks_zeroed += ev.chunks_zeroed;
        }
        outcome
    }
}

/// Encodes tensors word by word, then packs lines and computes check bits.
pub fn pack_image<T: StorageFloat>(tensors: &[Tensor<T>], scheme: &SchemeConfig) -> Result<MemoryImage> {
    let codec = LineCodec::new(scheme, T::LAYOUT)?;
    let mut manifest = Vec::with_capacity(tensors.len());
    let mut raw = Vec::new();
    for t in tensors {
        if t.shape.iter().product::<usize>() != t.data.len() {
            return Err(Error::ShapeMismatch(format!(
                "tensor `{}` has shape {:?} but {} elements",
                t.name,
                t.shape,
                t.data.len()
            )));
        }
        manifest.push(TensorDescriptor {
            name: t.name.clone(),
            shape: t.shape.clone(),
            word_offset: raw.len(),
            word_count: t.data.len(),
        });
        raw.extend(t.data.iter().map(|v| v.to_pattern()));
    }
    let (lines, checks): (Vec<u128>, Vec<Option<u16>>) = raw
        .par_chunks(codec.words_per_line())
        .map(|chunk| codec.encode_line(chunk))
        .unzip();
    let check_bits = if scheme.kind.has_secded() {
        Some(checks.into_iter().map(|c| c.expect("secded check word")).collect())
    } else {
        None
    };
    Ok(MemoryImage {
        layout: T::LAYOUT,
        scheme: *scheme,
        lines,
        check_bits,
        manifest,
    })
}

/// Runs the line decoder then the word decoder over every line.
pub fn unpack_image<T: StorageFloat>(
    image: &MemoryImage,
    scheme: &SchemeConfig,
) -> Result<(Vec<Tensor<T>>, DecodeStatus)> {
    if image.layout != T::LAYOUT {
        return Err(Error::LayoutMismatch(format!(
            "image holds {} words, requested {}",
            image.layout,
            T::LAYOUT
        )));
    }
    if image.scheme != *scheme {
        return Err(Error::LayoutMismatch(format!(
            "image was packed with {}, asked to decode with {}",
            image.scheme.label(),
            scheme.label()
        )));
    }
    image.validate()?;
    let codec = LineCodec::new(scheme, T::LAYOUT)?;
    let wpl = codec.words_per_line();
    let mut words = vec![0u32; image.lines.len() * wpl];
    let outcomes: Vec<LineOutcome> = words
        .par_chunks_mut(wpl)
        .enumerate()
        .map(|(i, out)| {
            let check = image.check_bits.as_ref().map(|c| c[i]);
            codec.decode_line(image.lines[i], check, out)
        })
        .collect();
    let mut status = DecodeStatus::default();
    status.per_line.reserve(outcomes.len());
    for o in &outcomes {
        status.record(o);
    }
    let tensors = image
        .manifest
        .iter()
        .map(|d| {
            let data = words[d.word_offset..d.word_offset + d.word_count]
                .iter()
                .map(|&b| T::from_pattern(b))
                .collect();
            Tensor::new(d.name.clone(), d.shape.clone(), data)
        })
        .collect();
    Ok((tensors, status))
}
