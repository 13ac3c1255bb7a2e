//! Most-significant-exponent triplication.
//!
//! The exponent MSB is copied into the two mantissa LSBs. Decoding takes a
//! 2-of-3 majority, writes it back to the exponent MSB and clears the copies.

use crate::bitcodec::Word;

pub fn mset_encode(w: Word) -> Word {
    let msb = (w.bits() >> w.layout().exp_msb()) & 1;
    w.with_bits((w.bits() & !0b11) | msb | (msb << 1))
}

pub fn mset_decode(w: Word) -> Word {
    mset_decode_counted(w).0
}

/// Decodes and reports whether the three copies disagreed.
pub(crate) fn mset_decode_counted(w: Word) -> (Word, bool) {
    let pos = w.layout().exp_msb();
    let votes = ((w.bits() >> pos) & 1) + ((w.bits() >> 1) & 1) + (w.bits() & 1);
    let majority = u32::from(votes >= 2);
    let out = (w.bits() & !0b11 & !(1 << pos)) | (majority << pos);
    (w.with_bits(out), votes == 1 || votes == 2)
}
