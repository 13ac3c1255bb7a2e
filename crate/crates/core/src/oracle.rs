//! Brute-force and closed-form references for the codecs and the injector.
//!
//! The SECDED reference here builds codewords straight from the extended
//! Hamming definition (bit positions, XOR of set indices) and shares no code
//! with [`crate::schemes::secded`].

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bitcodec::{FloatLayout, Word};
use crate::error::{Error, Result};
use crate::faultinj::{inject, FaultSpec};
use crate::schemes::{
    feasible_chunk_sizes, pack_image, LineCodec, LineStatus, SchemeConfig, SchemeKind, SecdedCode, WordCodec,
};
use crate::tensor::Tensor;

/// What gets corrupted: one encoded word, or one full line with its sidecar.
#[derive(Debug, Clone, PartialEq)]
pub enum FlipTarget {
    Word {
        word: Word,
        codec: WordCodec,
    },
    Line {
        scheme: SchemeConfig,
        layout: FloatLayout,
        words: Vec<u32>,
    },
}

impl FlipTarget {
    pub fn line(scheme: SchemeConfig, layout: FloatLayout, words: Vec<u32>) -> Self {
        FlipTarget::Line { scheme, layout, words }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlipOutcome {
    /// Flipped codeword positions, ascending. Line targets number the data
    /// bits first and the sidecar check bits after them.
    pub positions: Vec<u32>,
    pub decoded: Vec<u32>,
    /// Decoded words equal the fault-free decode.
    pub exact: bool,
    pub status: LineStatus,
    pub votes_repaired: u32,
    pub chunks_zeroed: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlipOutcomeTable {
    pub codeword_bits: u32,
    pub reference: Vec<u32>,
    pub entries: Vec<FlipOutcome>,
}

impl FlipOutcomeTable {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn exact_count(&self) -> usize {
        self.entries.iter().filter(|e| e.exact).count()
    }

    pub fn status_count(&self, status: LineStatus) -> usize {
        self.entries.iter().filter(|e| e.status == status).count()
    }

    pub fn due_count(&self) -> usize {
        self.status_count(LineStatus::DetectedUncorrectable)
    }

    /// Wrong output that no decoder flagged.
    pub fn silent_count(&self) -> usize {
        self.entries
            .iter()
            .filter(|e| !e.exact && e.status != LineStatus::DetectedUncorrectable && e.chunks_zeroed == 0)
            .count()
    }
}

struct Prepared {
    bits: u32,
    data_bits: u32,
    data: u128,
    check: Option<u16>,
    reference: Vec<u32>,
}

fn prepare(target: &FlipTarget) -> Result<Prepared> {
    match target {
        FlipTarget::Word { word, codec } => {
            let enc = codec.encode(*word);
            let (dec, _) = codec.decode(enc);
            let n = word.layout().total_bits();
            Ok(Prepared {
                bits: n,
                data_bits: n,
                data: enc.bits() as u128,
                check: None,
                reference: vec![dec.bits()],
            })
        }
        FlipTarget::Line { scheme, layout, words } => {
            let codec = LineCodec::new(scheme, *layout)?;
            if words.len() > codec.words_per_line() {
                return Err(Error::InvalidConfig(format!(
                    "{} words do not fit a {}-bit line",
                    words.len(),
                    scheme.line_width
                )));
            }
            let (data, check) = codec.encode_line(words);
            let mut reference = vec![0; codec.words_per_line()];
            codec.decode_line(data, check, &mut reference);
            let check_bits = codec.secded().map_or(0, |c| c.check_bits());
            Ok(Prepared {
                bits: scheme.line_width + check_bits,
                data_bits: scheme.line_width,
                data,
                check,
                reference,
            })
        }
    }
}

fn decode_flipped(target: &FlipTarget, p: &Prepared, positions: &[u32]) -> FlipOutcome {
    let (mut data, mut check) = (p.data, p.check);
    for &pos in positions {
        if pos < p.data_bits {
            data ^= 1 << pos;
        } else {
            check = check.map(|c| c ^ (1 << (pos - p.data_bits)));
        }
    }
    let (decoded, status, votes, zeroed) = match target {
        FlipTarget::Word { word, codec } => {
            let (w, ev) = codec.decode(Word::new(data as u32, word.layout()));
            (vec![w.bits()], LineStatus::Clean, ev.votes_repaired, ev.chunks_zeroed)
        }
        FlipTarget::Line { scheme, layout, .. } => {
            let codec = LineCodec::new(scheme, *layout).expect("validated in prepare");
            let mut out = vec![0; codec.words_per_line()];
            let o = codec.decode_line(data, check, &mut out);
            (out, o.status, o.votes_repaired, o.chunks_zeroed)
        }
    };
    FlipOutcome {
        positions: positions.to_vec(),
        exact: decoded == p.reference,
        decoded,
        status,
        votes_repaired: votes,
        chunks_zeroed: zeroed,
    }
}

/// Flips every codeword position once.
pub fn exhaustive_single_flip(target: &FlipTarget) -> Result<FlipOutcomeTable> {
    let p = prepare(target)?;
    let entries = (0..p.bits).map(|i| decode_flipped(target, &p, &[i])).collect();
    Ok(FlipOutcomeTable {
        codeword_bits: p.bits,
        reference: p.reference.clone(),
        entries,
    })
}

/// Flips every unordered pair of codeword positions.
pub fn exhaustive_double_flip(target: &FlipTarget) -> Result<FlipOutcomeTable> {
    let p = prepare(target)?;
    let entries = (0..p.bits)
        .flat_map(|i| (i + 1..p.bits).map(move |j| [i, j]))
        .map(|pair| decode_flipped(target, &p, &pair))
        .collect();
    Ok(FlipOutcomeTable {
        codeword_bits: p.bits,
        reference: p.reference.clone(),
        entries,
    })
}

/// Probability that a SECDED line with independent bit flips at rate `p`
/// decodes to exactly its original codeword: zero or one flip among the
/// `W + r + 1` codeword bits.
pub fn analytic_line_exact_rate(scheme: &SchemeConfig, p: f64) -> Result<f64> {
    if scheme.kind != SchemeKind::Secded {
        return Err(Error::InvalidConfig(format!(
            "closed-form line recovery only exists for plain secded, not {}",
            scheme.kind
        )));
    }
    let l = SecdedCode::for_width(scheme.line_width)?.codeword_bits() as i32;
    let q = 1.0 - p;
    Ok(q.powi(l) + l as f64 * p * q.powi(l - 1))
}

/// Extended Hamming by definition: codeword position 0 is the overall
/// parity, positions `2^j` hold parity over every position with bit `j`
/// set, the rest hold data in increasing order.
#[derive(Debug, Clone)]
pub struct ReferenceSecded {
    pub data_bits: u32,
    pub parity_bits: u32,
}

impl ReferenceSecded {
    pub fn new(data_bits: u32) -> Self {
        let mut r = 0;
        while (1u32 << r) < data_bits + r + 1 {
            r += 1;
        }
        ReferenceSecded {
            data_bits,
            parity_bits: r,
        }
    }

    pub fn codeword_bits(&self) -> u32 {
        self.data_bits + self.parity_bits + 1
    }

    pub fn encode(&self, data: u128) -> Vec<bool> {
        let n = self.data_bits + self.parity_bits;
        let mut cw = vec![false; n as usize + 1];
        let mut next = 0;
        for pos in 1..=n {
            if !pos.is_power_of_two() {
                cw[pos as usize] = (data >> next) & 1 == 1;
                next += 1;
            }
        }
        for j in 0..self.parity_bits {
            let p = 1u32 << j;
            cw[p as usize] = (1..=n)
                .filter(|&i| i & p != 0 && i != p)
                .fold(false, |acc, i| acc ^ cw[i as usize]);
        }
        cw[0] = cw[1..].iter().fold(false, |a, &b| a ^ b);
        cw
    }

    /// Check word in the sidecar layout: bit `j` is position `2^j`, bit `r`
    /// is the overall parity.
    pub fn check_word(&self, codeword: &[bool]) -> u16 {
        let mut c = 0u16;
        for j in 0..self.parity_bits {
            c |= (codeword[1 << j] as u16) << j;
        }
        c | (codeword[0] as u16) << self.parity_bits
    }

    /// `(syndrome, overall parity odd)` of a received codeword.
    pub fn syndrome(&self, codeword: &[bool]) -> (u32, bool) {
        let s = codeword
            .iter()
            .enumerate()
            .skip(1)
            .filter(|(_, &b)| b)
            .fold(0u32, |acc, (i, _)| acc ^ i as u32);
        (s, codeword.iter().fold(false, |a, &b| a ^ b))
    }
}

/// Frequency over `lines` random SECDED lines, injected at rate `p`, of
/// lines whose data and check word both come back exactly.
pub fn line_exact_frequency(line_width: u32, p: f64, lines: usize, seed: u64) -> Result<(u64, u64)> {
    let scheme = SchemeConfig::new(SchemeKind::Secded, line_width);
    let code = SecdedCode::for_width(line_width)?;
    let layout = FloatLayout::FP16;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let words = lines * scheme.words_per_line(layout);
    let data: Vec<half::f16> = (0..words).map(|_| half::f16::from_bits(rng.random())).collect();
    let image = pack_image(&[Tensor::new("lines", vec![words], data)], &scheme)?;
    let (faulty, _) = inject(&image, &FaultSpec::new(p, seed, 0)?);
    let clean_checks = image.check_bits.as_ref().expect("secded sidecar");
    let faulty_checks = faulty.check_bits.as_ref().expect("secded sidecar");
    let exact = (0..image.lines.len())
        .into_par_iter()
        .filter(|&i| {
            let (d, c, status) = code.decode_codeword(faulty.lines[i], faulty_checks[i]);
            status != LineStatus::DetectedUncorrectable && d == image.lines[i] && c == clean_checks[i]
        })
        .count();
    Ok((exact as u64, image.lines.len() as u64))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyCheck {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

/// Oracle results for one scheme configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub scheme: SchemeConfig,
    pub layout: FloatLayout,
    pub lines_tested: usize,
    pub checks: Vec<VerifyCheck>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

fn check(name: &str, passed: bool, detail: String) -> VerifyCheck {
    VerifyCheck {
        name: name.to_string(),
        passed,
        detail,
    }
}

/// Runs the exhaustive oracles on `lines` random lines of `scheme`.
pub fn verify(scheme: &SchemeConfig, layout: FloatLayout, lines: usize, seed: u64) -> Result<VerifyReport> {
    scheme.validate(layout)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let wpl = scheme.words_per_line(layout);
    let n = layout.total_bits();
    let mut checks = Vec::new();
    let samples: Vec<Vec<u32>> = (0..lines)
        .map(|_| (0..wpl).map(|_| rng.random::<u32>() & layout.mask()).collect())
        .collect();

    if scheme.kind.has_secded() {
        let (mut singles, mut single_total, mut pairs_flagged, mut pair_total, mut silent) = (0, 0, 0, 0, 0);
        for words in &samples {
            let t = FlipTarget::line(*scheme, layout, words.clone());
            let s = exhaustive_single_flip(&t)?;
            singles += s.exact_count();
            single_total += s.len();
            let d = exhaustive_double_flip(&t)?;
            pairs_flagged += d.due_count();
            pair_total += d.len();
            silent += d.silent_count();
        }
        let per = single_total / lines.max(1);
        checks.push(check(
            "secded single flip",
            singles == single_total,
            format!("{singles}/{single_total} corrected ({per} per line)"),
        ));
        checks.push(check(
            "secded double flip",
            pairs_flagged == pair_total && silent == 0,
            format!(
                "{pairs_flagged}/{pair_total} flagged uncorrectable, {silent} silent ({} pairs per line)",
                pair_total / lines.max(1)
            ),
        ));
        let reference = ReferenceSecded::new(scheme.line_width);
        let code = SecdedCode::for_width(scheme.line_width)?;
        let agree = (0..lines.max(1) * 8)
            .filter(|_| {
                let d: u128 = rng.random::<u128>() >> (128 - scheme.line_width);
                code.encode(d) == reference.check_word(&reference.encode(d))
            })
            .count();
        checks.push(check(
            "secded matches definitional encoder",
            agree == lines.max(1) * 8,
            format!("{agree}/{} check words identical", lines.max(1) * 8),
        ));
    }

    if scheme.kind.uses_mset() {
        let msb = layout.exp_msb();
        let (mut repaired, mut total) = (0, 0);
        for words in &samples {
            for &raw in words {
                let word = Word::new(raw, layout);
                let t = FlipTarget::Word {
                    word,
                    codec: WordCodec::Mset,
                };
                let table = exhaustive_single_flip(&t)?;
                for e in table.entries.iter().filter(|e| [msb, 1, 0].contains(&e.positions[0])) {
                    total += 1;
                    if (e.decoded[0] >> msb) & 1 == (raw >> msb) & 1 && e.decoded[0] & 0b11 == 0 {
                        repaired += 1;
                    }
                }
            }
        }
        checks.push(check(
            "mset triple-site majority",
            repaired == total,
            format!("{repaired}/{total} flips at bits {{{msb}, 1, 0}} restore the exponent msb"),
        ));
    }

    if scheme.kind.uses_cep() {
        let c = scheme.chunk_size;
        let groups_per_word = n / (c + 1);
        let (mut contained, mut total) = (0, 0);
        for words in &samples {
            for &raw in words {
                let t = FlipTarget::Word {
                    word: Word::new(raw, layout),
                    codec: WordCodec::Cep(c),
                };
                let table = exhaustive_single_flip(&t)?;
                for e in &table.entries {
                    total += 1;
                    let diff = e.decoded[0] ^ table.reference[0];
                    let touched = (0..groups_per_word)
                        .filter(|g| {
                            let shift = n - (g + 1) * c;
                            (diff >> shift) & ((1u32 << c) - 1) != 0
                        })
                        .count();
                    if e.chunks_zeroed == 1 && touched <= 1 {
                        contained += 1;
                    }
                }
            }
        }
        checks.push(check(
            "cep single-flip containment",
            contained == total,
            format!(
                "{contained}/{total} flips zero exactly one chunk; {} independent groups per {}-bit line",
                groups_per_word as usize * wpl,
                scheme.line_width
            ),
        ));
        checks.push(check(
            "cep chunk size feasible",
            feasible_chunk_sizes(n).contains(&c),
            format!("c={c}, feasible for {layout}: {:?}", feasible_chunk_sizes(n)),
        ));
    }

    if scheme.kind == SchemeKind::Unprotected {
        checks.push(check("unprotected", true, "no redundancy to verify".into()));
    }

    Ok(VerifyReport {
        scheme: *scheme,
        layout,
        lines_tested: lines,
        checks,
    })
}
