//! Chunk-wise embedded parity.
//!
//! The top `k * c` bits of an n-bit word (k = n / (c + 1)) are split into k
//! chunks of c bits. Each chunk is stored MSB-aligned next to an even-parity
//! bit, so the encoded word holds k groups of c + 1 bits and the lowest
//! `n - k * c` original bits are dropped. On decode, a group whose parity
//! fails has its chunk zeroed; dropped bits read back as zero.
//!
//! ```text
//!   original  | c0 | c1 | ... | c(k-1) | dropped |
//!   encoded   | c0 p0 | c1 p1 | ... | c(k-1) p(k-1) |
//! ```

use crate::bitcodec::Word;
use crate::error::{Error, Result};

pub const DEFAULT_CHUNK_SIZE: u32 = 3;

pub(crate) fn check_chunk_size(c: u32, total_bits: u32) -> Result<()> {
    if c == 0 || c >= total_bits || !total_bits.is_multiple_of(c + 1) {
        return Err(Error::InfeasibleChunkSize { chunk: c, total_bits });
    }
    Ok(())
}

/// Every chunk size whose groups exactly tile the word.
pub fn feasible_chunk_sizes(total_bits: u32) -> Vec<u32> {
    (1..total_bits).filter(|&c| total_bits.is_multiple_of(c + 1)).collect()
}

pub fn cep_encode(w: Word, c: u32) -> Result<Word> {
    let n = w.layout().total_bits();
    check_chunk_size(c, n)?;
    let k = n / (c + 1);
    let chunk_mask = (1u32 << c) - 1;
    let mut out = 0u32;
    for i in 0..k {
        let chunk = (w.bits() >> (n - (i + 1) * c)) & chunk_mask;
        let group = (chunk << 1) | (chunk.count_ones() & 1);
        out |= group << (n - (i + 1) * (c + 1));
    }
    Ok(w.with_bits(out))
}

pub fn cep_decode(w: Word, c: u32) -> Result<Word> {
    cep_decode_counted(w, c).map(|(out, _)| out)
}

/// Decodes and returns how many chunks failed parity.
pub(crate) fn cep_decode_counted(w: Word, c: u32) -> Result<(Word, u32)> {
    let n = w.layout().total_bits();
    check_chunk_size(c, n)?;
    let k = n / (c + 1);
    let group_mask = ((1u64 << (c + 1)) - 1) as u32;
    let mut out = 0u32;
    let mut zeroed = 0;
    for i in 0..k {
        let group = (w.bits() >> (n - (i + 1) * (c + 1))) & group_mask;
        if group.count_ones() & 1 == 1 {
            zeroed += 1;
            continue;
        }
        out |= (group >> 1) << (n - (i + 1) * c);
    }
    Ok((w.with_bits(out), zeroed))
}
