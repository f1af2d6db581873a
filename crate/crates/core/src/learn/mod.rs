//! Binary SVM: SMO training, scoring and chunked parallel prediction.

mod kernel;
mod model;
pub mod smo;

use std::time::{Duration, Instant};

use thiserror::Error;

pub use kernel::KernelSpec;
pub use model::{
    decision_scores, train_svm, ScalingStats, SvmModel, TrainConfig, TrainingMeta, SCHEMA_VERSION,
};

use crate::cloud_io::PointLabel;
use crate::features::FeatureMatrix;

#[derive(Debug, Error)]
pub enum LearnError {
    #[error("training data contains a single class")]
    SingleClass,
    #[error("no labelled rows with valid normals to train on")]
    NoTrainableRows,
    #[error("row {0} contains a non-finite feature")]
    NonFinite(usize),
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("dimension mismatch: expected {expected} values, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("model schema: {0}")]
    Schema(String),
    #[error("model json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{0}: {1}")]
    Io(String, #[source] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub labels: Vec<PointLabel>,
    pub scores: Vec<f64>,
    pub elapsed: Duration,
}

/// Contiguous `(start, end)` ranges for `workers` chunks whose sizes differ
/// by at most one; earlier chunks take the remainder.
pub fn chunk_ranges(len: usize, workers: usize) -> Vec<(usize, usize)> {
    let workers = workers.max(1);
    let base = len / workers;
    let extra = len % workers;
    let mut start = 0;
    (0..workers)
        .map(|w| {
            let size = base + usize::from(w < extra);
            let range = (start, start + size);
            start += size;
            range
        })
        .collect()
}

/// Score rows on `workers` OS threads, one contiguous chunk each. Output is
/// in input order and bit-identical for every worker count.
pub fn predict_parallel(
    model: &SvmModel,
    features: &FeatureMatrix,
    workers: usize,
) -> Result<Prediction, LearnError> {
    model.validate()?;
    let start = Instant::now();
    let ranges = chunk_ranges(features.len(), workers);
    let mut scores = vec![0.0; features.len()];
    std::thread::scope(|scope| {
        let mut rest = scores.as_mut_slice();
        for &(lo, hi) in &ranges {
            let (chunk, tail) = rest.split_at_mut(hi - lo);
            rest = tail;
            let rows = &features.rows[lo..hi];
            scope.spawn(move || {
                for (out, row) in chunk.iter_mut().zip(rows) {
                    *out = model.decision_function(row);
                }
            });
        }
    });
    let elapsed = start.elapsed();
    let labels = scores.iter().map(|&s| SvmModel::predict_label(s)).collect();
    Ok(Prediction {
        labels,
        scores,
        elapsed,
    })
}
