//! The pinned classifier shared by the heavier integration tests.
//!
//! Training takes tens of seconds, so the result is cached as a model
//! container under the cargo test scratch directory and reused by later
//! test binaries.

#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::OnceLock;

use bitshield::container::{load_model, save_model, ModelMetadata};
use bitshield::evalharness::{accuracy, gen_dataset, train_model_with, Dataset, TinyModel, TrainConfig};

pub const DATASET_SEED: u64 = 7;
pub const TRAIN_SEED: u64 = 7;

pub struct Pinned {
    pub data: Dataset,
    pub fp32: TinyModel<f32>,
    pub fp16: TinyModel<half::f16>,
}

fn cache_path(cfg: &TrainConfig) -> PathBuf {
    let hidden: Vec<String> = cfg.hidden.iter().map(|h| h.to_string()).collect();
    PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join(format!(
        "pinned-d{DATASET_SEED}-t{TRAIN_SEED}-h{}-e{}.bsm",
        hidden.join("x"),
        cfg.epochs
    ))
}

fn build() -> Pinned {
    let data = gen_dataset(DATASET_SEED);
    let cfg = TrainConfig::default();
    let path = cache_path(&cfg);
    let fp32 = match load_model(&path) {
        Ok((stored, _)) => stored.to_fp32(),
        Err(_) => {
            let model = train_model_with(&data.train, TRAIN_SEED, &cfg)
                .expect("pinned model trains")
                .model;
            let meta = ModelMetadata {
                dataset_seed: Some(DATASET_SEED),
                train_seed: Some(TRAIN_SEED),
                hidden: cfg.hidden.clone(),
                clean_accuracy: accuracy(&model, &data.eval).ok(),
                ..ModelMetadata::default()
            };
            let tmp = path.with_extension(format!("tmp{}", std::process::id()));
            if save_model(&tmp, &model, &meta).is_ok() {
                let _ = std::fs::rename(&tmp, &path);
            }
            model
        }
    };
    let fp16 = fp32.cast();
    Pinned { data, fp32, fp16 }
}

pub fn pinned() -> &'static Pinned {
    static CELL: OnceLock<Pinned> = OnceLock::new();
    CELL.get_or_init(build)
}
