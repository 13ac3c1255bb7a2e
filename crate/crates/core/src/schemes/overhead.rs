use std::fmt;

use serde::Serialize;

use crate::bitcodec::FloatLayout;

use super::secded::SecdedCode;
use super::SchemeConfig;

/// Commonly quoted SECDED storage overheads for 64- and 128-bit lines.
pub const REFERENCE_OVERHEAD_64: f64 = 0.125;
pub const REFERENCE_OVERHEAD_128: f64 = 0.07;

/// Extra storage a scheme needs beyond the parameter words themselves.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OverheadReport {
    pub scheme: SchemeConfig,
    pub layout: FloatLayout,
    pub parameter_count: u64,
    pub lines: u64,
    /// Hamming parity bits per line, excluding the overall parity bit.
    pub hamming_bits_per_line: u32,
    /// Everything stored in the sidecar per line.
    pub check_bits_per_line: u32,
    pub parity_bits: u64,
    pub parity_bytes: u64,
}

impl OverheadReport {
    /// Sidecar bits relative to line payload bits.
    pub fn fraction(&self) -> f64 {
        self.check_bits_per_line as f64 / self.scheme.line_width as f64
    }

    pub fn hamming_only_fraction(&self) -> f64 {
        self.hamming_bits_per_line as f64 / self.scheme.line_width as f64
    }

    pub fn reference_fraction(&self) -> f64 {
        if self.scheme.line_width == 64 {
            REFERENCE_OVERHEAD_64
        } else {
            REFERENCE_OVERHEAD_128
        }
    }
}

/// Parity storage for `parameter_count` words. Zero-space schemes report 0.
pub fn overhead_report(scheme: &SchemeConfig, parameter_count: u64, layout: FloatLayout) -> OverheadReport {
    let wpl = (scheme.line_width / layout.total_bits()).max(1) as u64;
    let lines = parameter_count.div_ceil(wpl);
    let (hamming, check) = if scheme.kind.has_secded() {
        SecdedCode::for_width(scheme.line_width)
            .map(|c| (c.parity_bits(), c.check_bits()))
            .unwrap_or((0, 0))
    } else {
        (0, 0)
    };
    let parity_bits = lines * check as u64;
    OverheadReport {
        scheme: *scheme,
        layout,
        parameter_count,
        lines,
        hamming_bits_per_line: hamming,
        check_bits_per_line: check,
        parity_bits,
        parity_bytes: parity_bits.div_ceil(8),
    }
}

impl fmt::Display for OverheadReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "scheme {} | {} | {} parameters in {} lines",
            self.scheme.label(),
            self.layout,
            self.parameter_count,
            self.lines
        )?;
        if self.check_bits_per_line == 0 {
            return write!(
                f,
                "parity storage: 0 bytes (redundancy embedded in the parameter words)"
            );
        }
        writeln!(
            f,
            "check bits per line: {} ({} Hamming + 1 overall parity)",
            self.check_bits_per_line, self.hamming_bits_per_line
        )?;
        writeln!(
            f,
            "parity storage: {} bits = {} bytes ({:.2} MB)",
            self.parity_bits,
            self.parity_bytes,
            self.parity_bytes as f64 / 1e6
        )?;
        write!(
            f,
            "overhead: {:.2}% with overall parity, {:.2}% Hamming-only (reference figure {:.1}%)",
            100.0 * self.fraction(),
            100.0 * self.hamming_only_fraction(),
            100.0 * self.reference_fraction()
        )
    }
}
