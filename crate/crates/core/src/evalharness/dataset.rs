use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub const NUM_CLASSES: usize = 3;
pub const DEFAULT_EVAL_SIZE: usize = 4096;
pub const DEFAULT_TRAIN_SIZE: usize = 1536;

/// Labelled feature vectors stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalSet {
    pub features: usize,
    pub inputs: Vec<f32>,
    pub labels: Vec<u8>,
}

impl EvalSet {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn input(&self, i: usize) -> &[f32] {
        &self.inputs[i * self.features..(i + 1) * self.features]
    }

    pub fn class_counts(&self) -> [usize; NUM_CLASSES] {
        let mut counts = [0; NUM_CLASSES];
        for &l in &self.labels {
            counts[l as usize] += 1;
        }
        counts
    }

    /// Same samples in a different order.
    pub fn permuted(&self, order: &[usize]) -> EvalSet {
        EvalSet {
            features: self.features,
            inputs: order.iter().flat_map(|&i| self.input(i).to_vec()).collect(),
            labels: order.iter().map(|&i| self.labels[i]).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub train: EvalSet,
    pub eval: EvalSet,
}

/// Three interleaved 2-D spiral arms, one per class.
pub fn gen_dataset(seed: u64) -> Dataset {
    gen_dataset_sized(seed, DEFAULT_TRAIN_SIZE, DEFAULT_EVAL_SIZE)
}

pub fn gen_dataset_sized(seed: u64, train: usize, eval: usize) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let train = spiral(&mut rng, train);
    rng.set_stream(1);
    let eval = spiral(&mut rng, eval);
    Dataset { train, eval }
}

fn spiral(rng: &mut ChaCha8Rng, n: usize) -> EvalSet {
    const TURN: f64 = 3.0;
    let noise = Normal::new(0.0, 0.12).expect("valid sigma");
    let mut inputs = Vec::with_capacity(n * 2);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let class = i % NUM_CLASSES;
        let r: f64 = rng.random_range(0.05..1.0);
        let theta = class as f64 * std::f64::consts::TAU / NUM_CLASSES as f64 + r * TURN + noise.sample(rng) * 0.5;
        inputs.push((r * theta.cos()) as f32);
        inputs.push((r * theta.sin()) as f32);
        labels.push(class as u8);
    }
    EvalSet {
        features: 2,
        inputs,
        labels,
    }
}
