use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::kernel::KernelSpec;
use super::smo::{self, SmoParams};
use super::LearnError;
use crate::cloud_io::PointLabel;
use crate::features::{FeatureMatrix, FeatureSet, FeatureVector, FEATURE_DIMS};

pub const SCHEMA_VERSION: u32 = 1;
const ALPHA_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub kernel: KernelSpec,
    pub c: f64,
    pub tolerance: f64,
    pub max_passes: usize,
    pub seed: u64,
    pub feature_set: FeatureSet,
    /// Class-stratified random subsample of the trainable rows, taken with
    /// `seed`, when the pool is larger than this.
    pub max_rows: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            kernel: KernelSpec::Rbf { gamma: 0.01 },
            c: 100.0,
            tolerance: 1e-3,
            max_passes: 10,
            seed: 0,
            feature_set: FeatureSet::Full,
            max_rows: Some(3000),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), LearnError> {
        if !self.kernel.is_valid() {
            return Err(LearnError::InvalidConfig("gamma must be > 0".into()));
        }
        if !(self.c > 0.0) || !self.c.is_finite() {
            return Err(LearnError::InvalidConfig("c must be > 0".into()));
        }
        if !(self.tolerance > 0.0) {
            return Err(LearnError::InvalidConfig("tolerance must be > 0".into()));
        }
        if self.max_passes == 0 {
            return Err(LearnError::InvalidConfig("max_passes must be > 0".into()));
        }
        if self.max_rows == Some(0) {
            return Err(LearnError::InvalidConfig("max_rows must be > 0".into()));
        }
        Ok(())
    }
}

/// Per-dimension z-score statistics. A zero `std` marks a constant column,
/// which scales to 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl ScalingStats {
    pub fn fit(rows: &[&[f64]]) -> Self {
        let dims = rows.first().map_or(0, |r| r.len());
        let n = rows.len() as f64;
        let mut mean = vec![0.0; dims];
        for r in rows {
            for (m, v) in mean.iter_mut().zip(r.iter()) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; dims];
        for r in rows {
            for ((s, v), m) in var.iter_mut().zip(r.iter()).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let std = var
            .into_iter()
            .map(|s| {
                let sd = (s / n).sqrt();
                if sd > 1e-12 {
                    sd
                } else {
                    0.0
                }
            })
            .collect();
        Self { mean, std }
    }

    pub fn dims(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(v, (m, s))| if *s > 0.0 { (v - m) / s } else { 0.0 })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingMeta {
    pub tolerance: f64,
    pub max_passes: usize,
    pub seed: u64,
    pub dual_objective: f64,
    pub support_count: usize,
    pub training_rows: usize,
    pub iterations: usize,
    pub converged: bool,
}

impl Default for TrainingMeta {
    fn default() -> Self {
        Self {
            tolerance: 1e-3,
            max_passes: 10,
            seed: 0,
            dual_objective: 0.0,
            support_count: 0,
            training_rows: 0,
            iterations: 0,
            converged: true,
        }
    }
}

/// Trained binary classifier. Support vectors live in the standardised space
/// of the model's feature set; `dual_coefs[i] = alpha_i * y_i` with
/// Pepper = -1 and Peduncle = +1.
#[derive(Debug, Clone, PartialEq)]
pub struct SvmModel {
    pub support_vectors: Vec<Vec<f64>>,
    pub dual_coefs: Vec<f64>,
    pub bias: f64,
    pub kernel: KernelSpec,
    pub c: f64,
    pub feature_set: FeatureSet,
    pub scaling: ScalingStats,
    pub meta: TrainingMeta,
}

fn class_sign(label: PointLabel) -> f64 {
    if label.is_positive() {
        1.0
    } else {
        -1.0
    }
}

fn subsample(indices: Vec<usize>, labels: &[PointLabel], limit: usize, seed: u64) -> Vec<usize> {
    if indices.len() <= limit {
        return indices;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut pos, mut neg): (Vec<usize>, Vec<usize>) =
        indices.iter().partition(|&&i| labels[i].is_positive());
    pos.shuffle(&mut rng);
    neg.shuffle(&mut rng);
    let total = indices.len() as f64;
    let keep_pos = ((pos.len() as f64 / total * limit as f64).round() as usize).clamp(1, pos.len());
    let keep_neg = limit.saturating_sub(keep_pos).clamp(1, neg.len());
    let mut kept: Vec<usize> = pos[..keep_pos].iter().chain(&neg[..keep_neg]).copied().collect();
    kept.sort_unstable();
    kept
}

pub fn train_svm(features: &FeatureMatrix, config: &TrainConfig) -> Result<SvmModel, LearnError> {
    config.validate()?;
    let mut indices = features.trainable_indices();
    if indices.is_empty() {
        return Err(LearnError::NoTrainableRows);
    }
    if let Some(&bad) = indices
        .iter()
        .find(|&&i| features.rows[i].iter().any(|v| !v.is_finite()))
    {
        return Err(LearnError::NonFinite(bad));
    }
    let positives = indices.iter().filter(|&&i| features.labels[i].is_positive()).count();
    if positives == 0 || positives == indices.len() {
        return Err(LearnError::SingleClass);
    }
    if let Some(limit) = config.max_rows {
        indices = subsample(indices, &features.labels, limit, config.seed);
    }

    let set = config.feature_set;
    let raw: Vec<&[f64]> = indices.iter().map(|&i| set.project(&features.rows[i])).collect();
    let scaling = ScalingStats::fit(&raw);
    let data: Vec<Vec<f64>> = raw.iter().map(|r| scaling.apply(r)).collect();
    let y: Vec<f64> = indices.iter().map(|&i| class_sign(features.labels[i])).collect();

    let params = SmoParams {
        c: config.c,
        tolerance: config.tolerance,
        max_passes: config.max_passes,
        max_iterations: (200 * data.len()).max(1_000_000),
    };
    let sol = smo::solve(&data, &y, config.kernel, &params);
    if !sol.converged {
        log::warn!(
            "SMO stopped after {} iterations with violation gap {:.3e} (tolerance {:.1e})",
            sol.iterations,
            sol.gap,
            config.tolerance
        );
    }

    let mut support_vectors = Vec::new();
    let mut dual_coefs = Vec::new();
    for (k, (x, a)) in data.into_iter().zip(&sol.alpha).enumerate() {
        if *a > ALPHA_EPS {
            support_vectors.push(x);
            dual_coefs.push(a * y[k]);
        }
    }
    let support_count = support_vectors.len();
    log::debug!(
        "trained {} kernel on {} rows: {} support vectors, {} iterations",
        config.kernel.name(),
        y.len(),
        support_count,
        sol.iterations
    );
    Ok(SvmModel {
        support_vectors,
        dual_coefs,
        bias: sol.bias,
        kernel: config.kernel,
        c: config.c,
        feature_set: set,
        scaling,
        meta: TrainingMeta {
            tolerance: config.tolerance,
            max_passes: config.max_passes,
            seed: config.seed,
            dual_objective: sol.objective,
            support_count,
            training_rows: y.len(),
            iterations: sol.iterations,
            converged: sol.converged,
        },
    })
}

impl SvmModel {
    pub fn dims(&self) -> usize {
        self.feature_set.dims()
    }

    /// Decision value for an already standardised vector.
    pub fn decision_scaled(&self, x: &[f64]) -> f64 {
        let mut sum = 0.0;
        for (sv, coef) in self.support_vectors.iter().zip(&self.dual_coefs) {
            sum += coef * self.kernel.eval(sv, x);
        }
        sum + self.bias
    }

    pub fn decision_function(&self, row: &FeatureVector) -> f64 {
        let x = self.scaling.apply(self.feature_set.project(row));
        self.decision_scaled(&x)
    }

    /// Score a full 36-value row given as a slice.
    pub fn score_slice(&self, row: &[f64]) -> Result<f64, LearnError> {
        let row: &FeatureVector = row.try_into().map_err(|_| LearnError::DimensionMismatch {
            expected: FEATURE_DIMS,
            found: row.len(),
        })?;
        Ok(self.decision_function(row))
    }

    pub fn predict_label(score: f64) -> PointLabel {
        if score > 0.0 {
            PointLabel::Peduncle
        } else {
            PointLabel::Pepper
        }
    }

    pub fn validate(&self) -> Result<(), LearnError> {
        let dims = self.dims();
        let schema = |msg: String| Err(LearnError::Schema(msg));
        if !self.kernel.is_valid() {
            return schema("kernel gamma must be > 0".into());
        }
        if self.scaling.mean.len() != dims || self.scaling.std.len() != dims {
            return schema(format!(
                "scaling must have {dims} entries for feature set `{}`",
                self.feature_set.as_str()
            ));
        }
        if self.support_vectors.len() != self.dual_coefs.len() {
            return schema("support_vectors and dual_coefs differ in length".into());
        }
        if let Some(sv) = self.support_vectors.iter().find(|sv| sv.len() != dims) {
            return Err(LearnError::DimensionMismatch {
                expected: dims,
                found: sv.len(),
            });
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String, LearnError> {
        let file = ModelFile {
            schema_version: SCHEMA_VERSION,
            kernel: self.kernel.name().to_string(),
            gamma: self.kernel.gamma(),
            c: self.c,
            feature_set: self.feature_set,
            scaling: self.scaling.clone(),
            support_vectors: self.support_vectors.clone(),
            dual_coefs: self.dual_coefs.clone(),
            bias: self.bias,
            meta: self.meta.clone(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self, LearnError> {
        let file: ModelFile = serde_json::from_str(text)?;
        if file.schema_version != SCHEMA_VERSION {
            return Err(LearnError::Schema(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                file.schema_version
            )));
        }
        let kernel = match (file.kernel.as_str(), file.gamma) {
            ("linear", None) => KernelSpec::Linear,
            ("rbf", Some(gamma)) => KernelSpec::Rbf { gamma },
            ("linear", Some(_)) => return Err(LearnError::Schema("linear kernel takes no gamma".into())),
            ("rbf", None) => return Err(LearnError::Schema("rbf kernel needs gamma".into())),
            (other, _) => return Err(LearnError::Schema(format!("unknown kernel `{other}`"))),
        };
        let model = SvmModel {
            support_vectors: file.support_vectors,
            dual_coefs: file.dual_coefs,
            bias: file.bias,
            kernel,
            c: file.c,
            feature_set: file.feature_set,
            scaling: file.scaling,
            meta: file.meta,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), LearnError> {
        let path = path.as_ref();
        fs::write(path, self.to_json()?).map_err(|e| LearnError::Io(path.display().to_string(), e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, LearnError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| LearnError::Io(path.display().to_string(), e))?;
        Self::from_json(&text)
    }
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    schema_version: u32,
    kernel: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    gamma: Option<f64>,
    c: f64,
    #[serde(default)]
    feature_set: FeatureSet,
    scaling: ScalingStats,
    support_vectors: Vec<Vec<f64>>,
    dual_coefs: Vec<f64>,
    bias: f64,
    #[serde(default)]
    meta: TrainingMeta,
}

/// Raw signed decision values, one per row. Positive means peduncle.
pub fn decision_scores(model: &SvmModel, features: &FeatureMatrix) -> Result<Vec<f64>, LearnError> {
    model.validate()?;
    Ok(features.rows.iter().map(|r| model.decision_function(r)).collect())
}
