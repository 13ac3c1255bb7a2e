//! Monte-Carlo fault campaigns: per-BER repetition with running-mean
//! stopping, single-bit vulnerability scans, and the CEP chunk-size sweep.

mod bitscan;
mod chunks;
mod evaluator;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bitcodec::{FloatLayout, StorageFloat};
use crate::error::{Error, Result};
use crate::evalharness::{accuracy, EvalSet, TinyModel};
use crate::faultinj::{inject, FaultSpec};
use crate::schemes::{pack_image, unpack_image, MemoryImage, SchemeConfig};

pub use bitscan::{bitscan, BitscanResult, ScanMode, DEFAULT_REPETITIONS};
pub use chunks::{chunk_explore, ChunkReport, ChunkRow, CHUNK_EXPLORE_BER};
pub(crate) use evaluator::FaultEvaluator;
pub use evaluator::IterationRecord;

/// Decade grid from 1e-8 to 1e-4.
pub const DEFAULT_BERS: [f64; 5] = [1e-8, 1e-7, 1e-6, 1e-5, 1e-4];

/// Per-iteration score.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    /// Eval-set accuracy of the decoded model.
    #[default]
    ModelAccuracy,
    /// `1 - fraction_changed` of decoded parameters against the fault-free
    /// decode.
    NumericMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignConfig {
    pub scheme: SchemeConfig,
    pub bers: Vec<f64>,
    pub seed: u64,
    pub min_iterations: usize,
    pub max_iterations: usize,
    /// Absolute bound on the running-mean drift across one window.
    pub convergence_tolerance: f64,
    pub convergence_window: usize,
    pub metric: Metric,
}

impl CampaignConfig {
    pub fn new(scheme: SchemeConfig, bers: Vec<f64>, seed: u64) -> Self {
        CampaignConfig {
            scheme,
            bers,
            seed,
            min_iterations: 100,
            max_iterations: 1500,
            convergence_tolerance: 0.01,
            convergence_window: 50,
            metric: Metric::ModelAccuracy,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.min_iterations == 0 || self.min_iterations > self.max_iterations {
            return Err(Error::InvalidConfig(format!(
                "iteration bounds {}..={} are empty",
                self.min_iterations, self.max_iterations
            )));
        }
        if self.convergence_tolerance.is_nan() || self.convergence_tolerance <= 0.0 {
            return Err(Error::InvalidConfig("convergence tolerance must be positive".into()));
        }
        if self.convergence_window == 0 {
            return Err(Error::InvalidConfig("convergence window must be positive".into()));
        }
        if self.bers.is_empty() {
            return Err(Error::InvalidConfig("no bit error rates given".into()));
        }
        for &b in &self.bers {
            FaultSpec::new(b, 0, 0)?;
        }
        if self.bers.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidConfig(
                "bit error rates must be strictly ascending".into(),
            ));
        }
        Ok(())
    }
}

/// Aggregate over the iterations run at one BER.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BerResult {
    pub ber: f64,
    pub mean_accuracy: f64,
    pub sample_std: f64,
    pub iterations_run: usize,
    /// False when the loop hit `max_iterations`.
    pub converged: bool,
    pub mean_flips: f64,
    /// SECDED-corrected lines plus MSET vote repairs, summed over iterations.
    pub corrected_count: u64,
    /// SECDED uncorrectable lines plus CEP-zeroed chunks, summed over iterations.
    pub due_count: u64,
}

impl BerResult {
    pub fn standard_error(&self) -> f64 {
        self.sample_std / (self.iterations_run as f64).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignResult {
    pub scheme: SchemeConfig,
    pub layout: FloatLayout,
    pub metric: Metric,
    /// Score of the fault-free decoded model under this scheme.
    pub clean_score: f64,
    pub rows: Vec<BerResult>,
}

/// Mean of the full history.
pub fn running_mean(history: &[f64]) -> f64 {
    if history.is_empty() {
        return f64::NAN;
    }
    history.iter().sum::<f64>() / history.len() as f64
}

/// True iff the running mean moved by less than `tolerance` over the last
/// `window` samples. Histories no longer than `window` never converge.
pub fn converged(history: &[f64], window: usize, tolerance: f64) -> bool {
    let n = history.len();
    if window == 0 || n <= window {
        return false;
    }
    (running_mean(history) - running_mean(&history[..n - window])).abs() < tolerance
}

/// BER at which the mean score first falls `drop` below `clean`,
/// interpolated linearly in log10(BER) between the bracketing rows. `None`
/// if no row falls that far; the first row's BER if it already does.
pub fn collapse_point(rows: &[BerResult], clean: f64, drop: f64) -> Option<f64> {
    let k = rows.iter().position(|r| clean - r.mean_accuracy >= drop)?;
    if k == 0 || rows[k - 1].ber <= 0.0 {
        return Some(rows[k].ber);
    }
    let (a, b) = (&rows[k - 1], &rows[k]);
    let (da, db) = (clean - a.mean_accuracy, clean - b.mean_accuracy);
    let t = ((drop - da) / (db - da)).clamp(0.0, 1.0);
    let (la, lb) = (a.ber.log10(), b.ber.log10());
    Some(10f64.powf(la + t * (lb - la)))
}

fn sample_std(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = running_mean(xs);
    (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

fn check_image<T: StorageFloat>(scheme: &SchemeConfig, model: &TinyModel<T>, image: &MemoryImage) -> Result<()> {
    if image.scheme != *scheme {
        return Err(Error::LayoutMismatch(format!(
            "image was packed with {}, campaign uses {}",
            image.scheme.label(),
            scheme.label()
        )));
    }
    if image.layout != T::LAYOUT {
        return Err(Error::LayoutMismatch(format!(
            "image holds {} words, model uses {}",
            image.layout,
            T::LAYOUT
        )));
    }
    if pack_image(&model.tensors(), scheme)? != *image {
        return Err(Error::ManifestMismatch(
            "image content does not match the model's parameters".into(),
        ));
    }
    Ok(())
}

/// Runs iterations `0..` at one BER until convergence or `max_iterations`.
/// Iterations are evaluated in parallel batches but the stopping point and
/// every statistic depend only on the ordered per-iteration records.
pub(crate) fn sweep_ber(
    config: &CampaignConfig,
    ber: f64,
    eval_one: impl Fn(&FaultSpec) -> IterationRecord + Sync,
) -> Result<BerResult> {
    let batch = 32 * rayon::current_num_threads();
    let mut records: Vec<IterationRecord> = Vec::new();
    let mut scores: Vec<f64> = Vec::new();
    let mut stop = None;
    while stop.is_none() && records.len() < config.max_iterations {
        let start = records.len();
        let end = (start + batch).min(config.max_iterations);
        let specs = (start..end)
            .map(|i| FaultSpec::new(ber, config.seed, i as u64))
            .collect::<Result<Vec<_>>>()?;
        let fresh: Vec<IterationRecord> = specs.par_iter().map(&eval_one).collect();
        for r in fresh {
            records.push(r);
            scores.push(r.score);
            let n = scores.len();
            if n >= config.min_iterations && converged(&scores, config.convergence_window, config.convergence_tolerance)
            {
                stop = Some(n);
                break;
            }
        }
    }
    let n = stop.unwrap_or(records.len());
    records.truncate(n);
    scores.truncate(n);
    Ok(BerResult {
        ber,
        mean_accuracy: running_mean(&scores),
        sample_std: sample_std(&scores),
        iterations_run: n,
        converged: stop.is_some(),
        mean_flips: records.iter().map(|r| r.flips as f64).sum::<f64>() / n as f64,
        corrected_count: records.iter().map(|r| r.corrected).sum(),
        due_count: records.iter().map(|r| r.due).sum(),
    })
}

/// For each BER: inject, decode, rebuild the model, score; repeat until the
/// running mean settles. `image` must be `model` packed with
/// `config.scheme`.
pub fn run_campaign<T: StorageFloat>(
    config: &CampaignConfig,
    model: &TinyModel<T>,
    eval: &EvalSet,
    image: &MemoryImage,
) -> Result<CampaignResult> {
    config.validate()?;
    check_image(&config.scheme, model, image)?;
    let ev = FaultEvaluator::<T>::new(image, eval)?;
    let total_bits = image.total_bits();
    let rows = config
        .bers
        .iter()
        .map(|&ber| {
            sweep_ber(config, ber, |spec| {
                ev.evaluate(&spec.positions(total_bits), config.metric)
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CampaignResult {
        scheme: config.scheme,
        layout: T::LAYOUT,
        metric: config.metric,
        clean_score: ev.clean_score(config.metric),
        rows,
    })
}

/// One iteration through the literal pipeline: copy and corrupt the image,
/// decode every line, rebuild the model, run the whole eval set. Orders of
/// magnitude slower than the campaign path; kept as its reference.
pub fn run_iteration_full<T: StorageFloat>(
    image: &MemoryImage,
    eval: &EvalSet,
    spec: &FaultSpec,
) -> Result<IterationRecord> {
    let (faulty, receipt) = inject(image, spec);
    let (tensors, status) = unpack_image::<T>(&faulty, &image.scheme)?;
    let (clean, _) = unpack_image::<T>(image, &image.scheme)?;
    let words_changed = tensors
        .iter()
        .zip(&clean)
        .flat_map(|(a, b)| a.data.iter().zip(&b.data))
        .filter(|(a, b)| a.to_pattern() != b.to_pattern())
        .count() as u64;
    let model = TinyModel::from_tensors(tensors)?;
    Ok(IterationRecord {
        score: accuracy(&model, eval)?,
        flips: receipt.flips_total,
        corrected: status.corrected_events(),
        due: status.detected_events(),
        words_changed,
    })
}
