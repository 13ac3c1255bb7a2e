//! Extended Hamming SECDED over a 64- or 128-bit memory line.
//!
//! Codeword positions run from 0 to `W + r`. Position 0 holds the overall
//! parity bit, positions `2^j` hold Hamming parity bits and the remaining
//! positions hold data bits in increasing order. Parity bit `2^j` covers
//! every position whose index has bit `j` set.
//!
//! The sidecar check word stores Hamming parity `2^j` in bit `j` (for
//! `j < r`) and the overall parity in bit `r`.

use std::sync::OnceLock;

use crate::error::{Error, Result};

use super::LineStatus;

/// Precomputed tables for one data width.
#[derive(Debug)]
pub struct SecdedCode {
    data_bits: u32,
    parity_bits: u32,
    /// `masks[j]` selects the data bits covered by parity `2^j`.
    masks: Vec<u128>,
    /// Codeword position of each data bit.
    positions: Vec<u16>,
    /// Data bit index at each codeword position, if any.
    data_at: Vec<Option<u16>>,
}

impl SecdedCode {
    fn build(data_bits: u32) -> Self {
        let mut parity_bits = 0;
        while (1u32 << parity_bits) < data_bits + parity_bits + 1 {
            parity_bits += 1;
        }
        let len = (data_bits + parity_bits + 1) as usize;
        let mut positions = Vec::with_capacity(data_bits as usize);
        let mut data_at = vec![None; len];
        let mut pos = 1u16;
        while positions.len() < data_bits as usize {
            if !pos.is_power_of_two() {
                data_at[pos as usize] = Some(positions.len() as u16);
                positions.push(pos);
            }
            pos += 1;
        }
        let masks = (0..parity_bits)
            .map(|j| {
                positions
                    .iter()
                    .enumerate()
                    .filter(|(_, &p)| (p >> j) & 1 == 1)
                    .fold(0u128, |m, (i, _)| m | (1u128 << i))
            })
            .collect();
        SecdedCode {
            data_bits,
            parity_bits,
            masks,
            positions,
            data_at,
        }
    }

    /// Shared tables for a supported line width.
    pub fn for_width(width: u32) -> Result<&'static SecdedCode> {
        static W64: OnceLock<SecdedCode> = OnceLock::new();
        static W128: OnceLock<SecdedCode> = OnceLock::new();
        match width {
            64 => Ok(W64.get_or_init(|| SecdedCode::build(64))),
            128 => Ok(W128.get_or_init(|| SecdedCode::build(128))),
            w => Err(Error::UnsupportedLineWidth(w)),
        }
    }

    pub fn data_bits(&self) -> u32 {
        self.data_bits
    }

    /// Hamming parity bits, excluding the overall parity bit.
    pub fn parity_bits(&self) -> u32 {
        self.parity_bits
    }

    /// Width of the sidecar check word.
    pub fn check_bits(&self) -> u32 {
        self.parity_bits + 1
    }

    pub fn codeword_bits(&self) -> u32 {
        self.data_bits + self.check_bits()
    }

    /// Codeword position of data bit `i`.
    pub fn data_position(&self, i: u32) -> u32 {
        self.positions[i as usize] as u32
    }

    /// Codeword position of sidecar check bit `j`.
    pub fn check_position(&self, j: u32) -> u32 {
        if j == self.parity_bits {
            0
        } else {
            1 << j
        }
    }

    fn data_mask(&self) -> u128 {
        if self.data_bits == 128 {
            u128::MAX
        } else {
            (1u128 << self.data_bits) - 1
        }
    }

    fn hamming(&self, data: u128) -> u16 {
        self.masks
            .iter()
            .enumerate()
            .fold(0u16, |acc, (j, m)| acc | (((data & m).count_ones() & 1) << j) as u16)
    }

    pub fn encode(&self, data: u128) -> u16 {
        let data = data & self.data_mask();
        let p = self.hamming(data);
        let overall = (data.count_ones() + p.count_ones()) & 1;
        p | ((overall as u16) << self.parity_bits)
    }

    /// Decodes a received line, returning the repaired data and check word.
    pub fn decode_codeword(&self, data: u128, check: u16) -> (u128, u16, LineStatus) {
        let data = data & self.data_mask();
        let check = check & ((1u16 << self.check_bits()) - 1);
        let hamming_mask = (1u16 << self.parity_bits) - 1;
        let syndrome = (self.hamming(data) ^ (check & hamming_mask)) as u32;
        let odd = (data.count_ones() + check.count_ones()) & 1 == 1;
        match (syndrome, odd) {
            (0, false) => (data, check, LineStatus::Clean),
            (0, true) => (data, check ^ (1 << self.parity_bits), LineStatus::Corrected(0)),
            (s, true) if (s as usize) < self.data_at.len() => {
                if s.is_power_of_two() {
                    let j = s.trailing_zeros();
                    (data, check ^ (1 << j), LineStatus::Corrected(s as u16))
                } else {
                    let i = self.data_at[s as usize].expect("non-power-of-two position");
                    (data ^ (1u128 << i), check, LineStatus::Corrected(s as u16))
                }
            }
            _ => (data, check, LineStatus::DetectedUncorrectable),
        }
    }

    pub fn decode(&self, data: u128, check: u16) -> (u128, LineStatus) {
        let (data, _, status) = self.decode_codeword(data, check);
        (data, status)
    }
}

/// Computes the check word for a line. Data bits pass through unchanged.
pub fn secded_encode(data: u128, width: u32) -> Result<(u128, u16)> {
    let code = SecdedCode::for_width(width)?;
    Ok((data & code.data_mask(), code.encode(data)))
}

/// On a detected-uncorrectable line the data is returned as received.
pub fn secded_decode(data: u128, check: u16, width: u32) -> Result<(u128, LineStatus)> {
    Ok(SecdedCode::for_width(width)?.decode(data, check))
}
