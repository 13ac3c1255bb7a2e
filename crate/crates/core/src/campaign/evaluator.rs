//! Per-scenario evaluation without re-decoding or re-running the whole model.
//!
//! Only lines hit by a flip are decoded; words that decode differently from
//! the fault-free image become parameter overrides. Inference then starts
//! from cached fault-free pre-activations and pushes deltas forward:
//!
//! ```text
//!   z'_o = z_o + sum_j W'[o,j] (a'_j - a_j) + sum_j (W'[o,j] - W[o,j]) a_j + (b'_o - b_o)
//! ```
//!
//! A layer falls back to a full dot product when more than half of its
//! inputs changed. Because the delta form rounds differently from a full
//! forward pass, logits can differ in the last few ulps; predictions only
//! differ on exact argmax ties.

use std::borrow::Cow;
use std::marker::PhantomData;

use num_traits::{Float, NumCast, Zero};
use rayon::prelude::*;

use crate::bitcodec::StorageFloat;
use crate::error::{Error, Result};
use crate::evalharness::{argmax, relu, DenseLayer, EvalSet, TinyModel, WideModel};
use crate::schemes::{LineCodec, LineStatus, MemoryImage};
use crate::tensor::Tensor;

use super::Metric;

/// What one fault scenario did and how the model fared.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct IterationRecord {
    pub score: f64,
    pub flips: u64,
    pub corrected: u64,
    pub due: u64,
    pub words_changed: u64,
}

#[derive(Debug, Clone, Copy)]
enum Slot {
    Weight { layer: usize, index: usize },
    Bias { layer: usize, index: usize },
}

struct RowChange<A> {
    row: usize,
    dw: Vec<(usize, A)>,
    db: A,
}

pub(crate) struct FaultEvaluator<'a, T: StorageFloat> {
    eval: &'a EvalSet,
    image: &'a MemoryImage,
    codec: LineCodec,
    clean_words: Vec<u32>,
    slots: Vec<Slot>,
    wide: WideModel<T::Accum>,
    /// Fault-free weights per layer, transposed to `inputs x outputs`.
    columns: Vec<Vec<T::Accum>>,
    /// Fault-free pre-activations, per layer, `eval.len() x outputs`.
    pre: Vec<Vec<T::Accum>>,
    clean_correct: usize,
    _storage: PhantomData<T>,
}

impl<'a, T: StorageFloat> FaultEvaluator<'a, T> {
    pub(crate) fn new(image: &'a MemoryImage, eval: &'a EvalSet) -> Result<Self> {
        if image.layout != T::LAYOUT {
            return Err(Error::LayoutMismatch(format!(
                "image holds {} words, model uses {}",
                image.layout,
                T::LAYOUT
            )));
        }
        if eval.is_empty() {
            return Err(Error::EmptyEvalSet);
        }
        let codec = LineCodec::new(&image.scheme, T::LAYOUT)?;
        let wpl = codec.words_per_line();
        let mut clean_words = vec![0u32; image.lines.len() * wpl];
        clean_words.par_chunks_mut(wpl).enumerate().for_each(|(i, out)| {
            let check = image.check_bits.as_ref().map(|c| c[i]);
            codec.decode_line(image.lines[i], check, out);
        });

        let tensors: Vec<Tensor<T>> = image
            .manifest
            .iter()
            .map(|d| {
                let data = clean_words[d.word_offset..d.word_offset + d.word_count]
                    .iter()
                    .map(|&b| T::from_pattern(b))
                    .collect();
                Tensor::new(d.name.clone(), d.shape.clone(), data)
            })
            .collect();
        let model = TinyModel::from_tensors(tensors)?;
        if model.input_dim() != eval.features {
            return Err(Error::DimensionMismatch(format!(
                "model takes {} features, eval set has {}",
                model.input_dim(),
                eval.features
            )));
        }

        let mut slots = Vec::with_capacity(image.word_count());
        for (k, d) in image.manifest.iter().enumerate() {
            let layer = k / 2;
            slots.extend((0..d.word_count).map(|index| {
                if k % 2 == 0 {
                    Slot::Weight { layer, index }
                } else {
                    Slot::Bias { layer, index }
                }
            }));
        }

        let wide = model.widened();
        let columns = wide
            .layers
            .iter()
            .map(|l| {
                (0..l.inputs * l.outputs)
                    .map(|k| l.weight[(k % l.outputs) * l.inputs + k / l.outputs])
                    .collect()
            })
            .collect();
        let per_input: Vec<Vec<Vec<T::Accum>>> = (0..eval.len())
            .into_par_iter()
            .map(|i| {
                let mut pre = vec![Vec::new(); wide.layers.len()];
                wide.forward_into(eval.input(i), &mut pre);
                pre
            })
            .collect();
        let mut pre: Vec<Vec<T::Accum>> = wide
            .layers
            .iter()
            .map(|l| Vec::with_capacity(l.outputs * eval.len()))
            .collect();
        let mut clean_correct = 0;
        for (i, p) in per_input.into_iter().enumerate() {
            if argmax(p.last().expect("at least one layer")) == Some(eval.labels[i] as usize) {
                clean_correct += 1;
            }
            for (dst, src) in pre.iter_mut().zip(p) {
                dst.extend(src);
            }
        }

        Ok(FaultEvaluator {
            eval,
            image,
            codec,
            clean_words,
            slots,
            wide,
            columns,
            pre,
            clean_correct,
            _storage: PhantomData,
        })
    }

    pub(crate) fn clean_score(&self, metric: Metric) -> f64 {
        match metric {
            Metric::ModelAccuracy => self.clean_correct as f64 / self.eval.len() as f64,
            Metric::NumericMetrics => 1.0,
        }
    }

    pub(crate) fn word_count(&self) -> usize {
        self.slots.len()
    }

    /// Applies the flips at `positions` (sorted) to a virtual copy of the
    /// image and scores the decoded model.
    pub(crate) fn evaluate(&self, positions: &[u64], metric: Metric) -> IterationRecord {
        let mut record = IterationRecord {
            flips: positions.len() as u64,
            ..IterationRecord::default()
        };
        let overrides = self.decode_touched(positions, &mut record);
        record.words_changed = overrides.len() as u64;
        record.score = match metric {
            Metric::NumericMetrics => 1.0 - overrides.len() as f64 / self.slots.len() as f64,
            Metric::ModelAccuracy if overrides.is_empty() => self.clean_score(metric),
            Metric::ModelAccuracy => self.correct_with(&overrides) as f64 / self.eval.len() as f64,
        };
        record
    }

    fn decode_touched(&self, positions: &[u64], record: &mut IterationRecord) -> Vec<(usize, u32)> {
        let width = self.image.scheme.line_width as u64;
        let data_bits = self.image.data_bits();
        let split = positions.partition_point(|&p| p < data_bits);
        let check_width = self.image.check_width() as u64;

        let mut data_hits: Vec<(usize, u128)> = Vec::new();
        for &p in &positions[..split] {
            let (line, bit) = ((p / width) as usize, p % width);
            match data_hits.last_mut() {
                Some((l, m)) if *l == line => *m ^= 1 << bit,
                _ => data_hits.push((line, 1 << bit)),
            }
        }
        let mut check_hits: Vec<(usize, u16)> = Vec::new();
        for &p in &positions[split..] {
            let p = p - data_bits;
            let (line, bit) = ((p / check_width) as usize, p % check_width);
            match check_hits.last_mut() {
                Some((l, m)) if *l == line => *m ^= 1 << bit,
                _ => check_hits.push((line, 1 << bit)),
            }
        }

        let wpl = self.codec.words_per_line();
        let mut buf = vec![0u32; wpl];
        let mut overrides = Vec::new();
        let (mut di, mut ci) = (0, 0);
        while di < data_hits.len() || ci < check_hits.len() {
            let dl = data_hits.get(di).map_or(usize::MAX, |h| h.0);
            let cl = check_hits.get(ci).map_or(usize::MAX, |h| h.0);
            let line = dl.min(cl);
            let mut data = self.image.lines[line];
            let mut check = self.image.check_bits.as_ref().map(|c| c[line]);
            if dl == line {
                data ^= data_hits[di].1;
                di += 1;
            }
            if cl == line {
                check = check.map(|c| c ^ check_hits[ci].1);
                ci += 1;
            }
            let outcome = self.codec.decode_line(data, check, &mut buf);
            match outcome.status {
                LineStatus::Clean => {}
                LineStatus::Corrected(_) => record.corrected += 1,
                LineStatus::DetectedUncorrectable => record.due += 1,
            }
            record.corrected += outcome.votes_repaired as u64;
            record.due += outcome.chunks_zeroed as u64;
            for (i, &w) in buf.iter().enumerate() {
                let idx = line * wpl + i;
                if idx < self.slots.len() && w != self.clean_words[idx] {
                    overrides.push((idx, w));
                }
            }
        }
        overrides
    }

    fn correct_with(&self, overrides: &[(usize, u32)]) -> usize {
        let layers = &self.wide.layers;
        let mut faulty: Vec<Cow<'_, DenseLayer<T::Accum>>> = layers.iter().map(Cow::Borrowed).collect();
        let mut changes: Vec<Vec<RowChange<T::Accum>>> = (0..layers.len()).map(|_| Vec::new()).collect();
        let mut pending: Vec<(usize, usize, Option<usize>, T::Accum)> = overrides
            .iter()
            .map(|&(w, bits)| {
                let v = T::from_pattern(bits).to_accum();
                match self.slots[w] {
                    Slot::Weight { layer, index } => {
                        let cols = layers[layer].inputs;
                        (layer, index / cols, Some(index % cols), v)
                    }
                    Slot::Bias { layer, index } => (layer, index, None, v),
                }
            })
            .collect();
        pending.sort_by_key(|&(l, o, j, _)| (l, o, j.map_or(0, |j| j + 1)));
        for (l, o, j, v) in pending {
            let layer = faulty[l].to_mut();
            let list = &mut changes[l];
            if list.last().is_none_or(|rc| rc.row != o) {
                list.push(RowChange {
                    row: o,
                    dw: Vec::new(),
                    db: <T::Accum as Zero>::zero(),
                });
            }
            let rc = list.last_mut().expect("just pushed");
            match j {
                Some(j) => {
                    let w = &mut layer.weight[o * layer.inputs + j];
                    rc.dw.push((j, v - *w));
                    *w = v;
                }
                None => {
                    rc.db = v - layer.bias[o];
                    layer.bias[o] = v;
                }
            }
        }
        let last_touched = changes.iter().rposition(|c| !c.is_empty()).unwrap_or(0);

        (0..self.eval.len())
            .map(|i| {
                let pred = self.predict_delta(i, &faulty, &changes, last_touched);
                (pred == Some(self.eval.labels[i] as usize)) as usize
            })
            .sum()
    }

    fn predict_delta(
        &self,
        input: usize,
        faulty: &[Cow<'_, DenseLayer<T::Accum>>],
        changes: &[Vec<RowChange<T::Accum>>],
        last_touched: usize,
    ) -> Option<usize> {
        let n_layers = faulty.len();
        let x = self.eval.input(input);
        // (index, new activation, new - old activation)
        let mut changed: Vec<(usize, T::Accum, T::Accum)> = Vec::new();
        let mut next: Vec<(usize, T::Accum, T::Accum)> = Vec::new();
        let mut prev_clean: Vec<T::Accum> = x
            .iter()
            .map(|&v| <T::Accum as NumCast>::from(v).unwrap_or_else(<T::Accum as Float>::nan))
            .collect();
        let mut scratch: Vec<T::Accum> = Vec::new();

        for l in 0..n_layers {
            let layer = &*faulty[l];
            let z = &self.pre[l][input * layer.outputs..(input + 1) * layer.outputs];
            let last = l + 1 == n_layers;
            if changed.is_empty() && l > last_touched {
                let k = faulty[n_layers - 1].outputs;
                return argmax(&self.pre[n_layers - 1][input * k..(input + 1) * k]);
            }
            let mut logits = if last { z.to_vec() } else { Vec::new() };
            next.clear();
            let mut emit = |o: usize, zn: T::Accum, logits: &mut Vec<T::Accum>| {
                if last {
                    logits[o] = zn;
                } else {
                    let (a0, a1) = (relu(z[o]), relu(zn));
                    if a1 != a0 {
                        next.push((o, a1, a1 - a0));
                    }
                }
            };

            if changed.len() * 2 > layer.inputs {
                scratch.clear();
                scratch.extend_from_slice(&prev_clean);
                for &(j, a, _) in &changed {
                    scratch[j] = a;
                }
                for o in 0..layer.outputs {
                    let row = &layer.weight[o * layer.inputs..(o + 1) * layer.inputs];
                    let mut acc = <T::Accum as Zero>::zero();
                    for (&w, &a) in row.iter().zip(&scratch) {
                        acc = acc + w * a;
                    }
                    emit(o, acc + layer.bias[o], &mut logits);
                }
            } else {
                let rows = &changes[l];
                let own = |rc: &RowChange<T::Accum>| {
                    let mut d = <T::Accum as Zero>::zero();
                    for &(j, dw) in &rc.dw {
                        d = d + dw * prev_clean[j];
                    }
                    d + rc.db
                };
                if changed.is_empty() {
                    for rc in rows {
                        emit(rc.row, z[rc.row] + own(rc), &mut logits);
                    }
                } else {
                    // Clean columns first, then the faulty entries' share of
                    // the input deltas. `changed` is sorted by input index.
                    let cols = &self.columns[l];
                    let mut zn = z.to_vec();
                    for &(j, _, d) in &changed {
                        for (acc, &w) in zn.iter_mut().zip(&cols[j * layer.outputs..(j + 1) * layer.outputs]) {
                            *acc = *acc + w * d;
                        }
                    }
                    for rc in rows {
                        let mut extra = own(rc);
                        for &(j, dw) in &rc.dw {
                            if let Ok(k) = changed.binary_search_by_key(&j, |c| c.0) {
                                extra = extra + dw * changed[k].2;
                            }
                        }
                        zn[rc.row] = zn[rc.row] + extra;
                    }
                    for (o, v) in zn.into_iter().enumerate() {
                        emit(o, v, &mut logits);
                    }
                }
            }

            if last {
                return argmax(&logits);
            }
            std::mem::swap(&mut changed, &mut next);
            prev_clean.clear();
            prev_clean.extend(z.iter().map(|&v| relu(v)));
        }
        unreachable!("loop returns at the output layer")
    }
}
