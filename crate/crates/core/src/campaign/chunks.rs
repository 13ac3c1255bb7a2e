use serde::{Deserialize, Serialize};

use crate::bitcodec::StorageFloat;
use crate::error::Result;
use crate::evalharness::{EvalSet, TinyModel};
use crate::schemes::{feasible_chunk_sizes, pack_image, SchemeConfig, SchemeKind, DEFAULT_CHUNK_SIZE};

use super::{run_campaign, BerResult, CampaignConfig};

pub const CHUNK_EXPLORE_BER: f64 = 3e-5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChunkRow {
    pub chunk_size: u32,
    pub clean_accuracy: f64,
    pub result: BerResult,
}

/// CEP accuracy for every feasible chunk size at one BER.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChunkReport {
    pub ber: f64,
    pub rows: Vec<ChunkRow>,
    pub best_chunk: u32,
    /// Accuracy never rises with chunk size beyond two pooled standard errors.
    pub monotone: bool,
    /// The default chunk size is within two pooled standard errors of the best.
    pub default_within_noise: bool,
    /// Set when the trend is not monotone or the smallest chunk size falls
    /// outside the noise band of the best.
    pub flagged: bool,
    pub notes: Vec<String>,
}

/// Two pooled standard errors, never narrower than one eval sample: a
/// near-deterministic row otherwise reports a standard error of zero.
fn within_noise(a: &BerResult, b: &BerResult, resolution: f64) -> bool {
    let se = (a.standard_error().powi(2) + b.standard_error().powi(2)).sqrt();
    (a.mean_accuracy - b.mean_accuracy).abs() <= (2.0 * se).max(resolution)
}

/// Runs a CEP campaign per feasible chunk size with the iteration and
/// convergence settings of `base`, at `base.bers[0]`.
pub fn chunk_explore<T: StorageFloat>(
    base: &CampaignConfig,
    model: &TinyModel<T>,
    eval: &EvalSet,
) -> Result<ChunkReport> {
    let ber = base.bers.first().copied().unwrap_or(CHUNK_EXPLORE_BER);
    let mut rows = Vec::new();
    for c in feasible_chunk_sizes(T::LAYOUT.total_bits()) {
        let scheme = SchemeConfig::new(SchemeKind::Cep, base.scheme.line_width).with_chunk_size(c);
        let image = pack_image(&model.tensors(), &scheme)?;
        let cfg = CampaignConfig {
            scheme,
            bers: vec![ber],
            ..base.clone()
        };
        let r = run_campaign(&cfg, model, eval, &image)?;
        rows.push(ChunkRow {
            chunk_size: c,
            clean_accuracy: r.clean_score,
            result: r.rows.into_iter().next().expect("one ber"),
        });
    }

    Ok(summarize(ber, rows, 1.0 / eval.len() as f64))
}

fn summarize(ber: f64, rows: Vec<ChunkRow>, resolution: f64) -> ChunkReport {
    // Ties go to the smaller chunk size.
    let best = rows
        .iter()
        .reduce(|b, r| {
            if r.result.mean_accuracy > b.result.mean_accuracy {
                r
            } else {
                b
            }
        })
        .expect("at least one feasible chunk size");
    let mut notes = Vec::new();
    let monotone = rows.windows(2).all(|w| {
        let ok = w[1].result.mean_accuracy <= w[0].result.mean_accuracy
            || within_noise(&w[0].result, &w[1].result, resolution);
        if !ok {
            notes.push(format!(
                "c={} beats c={} ({:.4} vs {:.4})",
                w[1].chunk_size, w[0].chunk_size, w[1].result.mean_accuracy, w[0].result.mean_accuracy
            ));
        }
        ok
    });
    let smallest = &rows[0];
    let smallest_is_best =
        best.chunk_size == smallest.chunk_size || within_noise(&smallest.result, &best.result, resolution);
    if !smallest_is_best {
        notes.push(format!(
            "best chunk size is c={}, not the smallest c={}",
            best.chunk_size, smallest.chunk_size
        ));
    }
    let default_within_noise = rows
        .iter()
        .find(|r| r.chunk_size == DEFAULT_CHUNK_SIZE)
        .is_some_and(|d| d.chunk_size == best.chunk_size || within_noise(&d.result, &best.result, resolution));
    ChunkReport {
        ber,
        best_chunk: best.chunk_size,
        monotone,
        default_within_noise,
        flagged: !monotone || !smallest_is_best,
        notes,
        rows,
    }
}
