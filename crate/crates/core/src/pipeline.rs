//! The per-scene processing chain: outlier removal, voxel downsampling,
//! normal estimation and feature extraction.

use std::path::PathBuf;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cloud_io::{read_cloud, CloudError, DatasetManifest, ManifestEntry, PointCloud};
use crate::features::{extract_features, FeatureError, FeatureMatrix};
use crate::geometry::{estimate_normals, NormalParams, SpatialIndex};
use crate::learn::{LearnError, TrainConfig};
use crate::preprocess::{
    remove_statistical_outliers, voxel_downsample, OutlierParams, PreprocessError, VoxelParams,
};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Cloud(#[from] CloudError),
    #[error("{path}: {source}")]
    Scene { path: PathBuf, source: CloudError },
    #[error(transparent)]
    Preprocess(#[from] PreprocessError),
    #[error(transparent)]
    Features(#[from] FeatureError),
    #[error(transparent)]
    Learn(#[from] LearnError),
    #[error("invalid pipeline config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NormalConfig {
    pub radius: f64,
    pub viewpoint: [f64; 3],
}

impl Default for NormalConfig {
    fn default() -> Self {
        Self {
            radius: 0.01,
            viewpoint: [0.0; 3],
        }
    }
}

impl NormalConfig {
    pub fn params(&self) -> NormalParams {
        NormalParams {
            radius_rn: self.radius,
            viewpoint: self.viewpoint.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    pub model: PathBuf,
    pub reports: PathBuf,
    pub data_root: PathBuf,
}

impl Default for PathsConfig {
    fn default() -> Self {
        Self {
            model: PathBuf::from("model.json"),
            reports: PathBuf::from("reports"),
            data_root: PathBuf::from("."),
        }
    }
}

/// Declarative form of the whole processing chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// `None` disables the stage.
    pub outlier: Option<OutlierParams>,
    pub voxel: Option<VoxelParams>,
    pub normals: NormalConfig,
    pub radius_ri: f64,
    pub train: TrainConfig,
    pub paths: PathsConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            outlier: Some(OutlierParams::default()),
            voxel: Some(VoxelParams::default()),
            normals: NormalConfig::default(),
            radius_ri: 0.01,
            train: TrainConfig::default(),
            paths: PathsConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        if let Some(o) = &self.outlier {
            o.validate()?;
        }
        if let Some(v) = &self.voxel {
            v.validate()?;
        }
        if !(self.normals.radius > 0.0) {
            return Err(PipelineError::Config("normals.radius must be > 0".into()));
        }
        if !(self.radius_ri > 0.0) {
            return Err(PipelineError::Config("radius_ri must be > 0".into()));
        }
        if self.normals.viewpoint.iter().any(|v| !v.is_finite()) {
            return Err(PipelineError::Config("normals.viewpoint must be finite".into()));
        }
        self.train.validate()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct StageTimings {
    pub outlier: Duration,
    pub voxel: Duration,
    pub normals: Duration,
    pub features: Duration,
}

/// A scene after the full chain: the processed cloud and its feature rows.
#[derive(Debug, Clone)]
pub struct ProcessedScene {
    pub cloud: PointCloud,
    pub features: FeatureMatrix,
    pub input_points: usize,
    pub timings: StageTimings,
}

pub fn process_cloud(cloud: &PointCloud, config: &PipelineConfig) -> Result<ProcessedScene, PipelineError> {
    let input_points = cloud.len();
    let mut timings = StageTimings::default();
    let mut current = cloud.clone();

    if let Some(params) = &config.outlier {
        let t = Instant::now();
        if params.k_neighbours < current.len() {
            current = remove_statistical_outliers(&current, params)?;
        } else {
            log::warn!(
                "skipping outlier removal: {} points is not more than k = {}",
                current.len(),
                params.k_neighbours
            );
        }
        timings.outlier = t.elapsed();
        log::info!("outlier removal: {} -> {} points in {:.3?}", input_points, current.len(), timings.outlier);
    }
    if let Some(params) = &config.voxel {
        let t = Instant::now();
        let before = current.len();
        current = voxel_downsample(&current, params)?;
        timings.voxel = t.elapsed();
        log::info!("voxel grid: {} -> {} points in {:.3?}", before, current.len(), timings.voxel);
    }

    let t = Instant::now();
    let index = SpatialIndex::build(&current);
    let normals = estimate_normals(&current, &index, &config.normals.params());
    timings.normals = t.elapsed();
    log::info!(
        "normals: {}/{} valid in {:.3?}",
        normals.valid_count(),
        current.len(),
        timings.normals
    );

    let t = Instant::now();
    let features = extract_features(&current, &normals, &index, config.radius_ri)?;
    timings.features = t.elapsed();
    log::info!("features: {} rows in {:.3?}", features.len(), timings.features);

    Ok(ProcessedScene {
        cloud: current,
        features,
        input_points,
        timings,
    })
}

pub fn process_entry(
    manifest: &DatasetManifest,
    entry: &ManifestEntry,
    config: &PipelineConfig,
) -> Result<ProcessedScene, PipelineError> {
    let path = manifest.resolve(entry);
    let cloud = read_cloud(&path).map_err(|source| PipelineError::Scene { path: path.clone(), source })?;
    log::info!("scene {} ({})", entry.scene_id, path.display());
    process_cloud(&cloud, config)
}

/// Pool the feature rows of every scene in the manifest, in manifest order.
pub fn pooled_features(manifest: &DatasetManifest, config: &PipelineConfig) -> Result<FeatureMatrix, PipelineError> {
    let mut pooled = FeatureMatrix::default();
    for entry in &manifest.entries {
        pooled.extend(process_entry(manifest, entry, config)?.features);
    }
    Ok(pooled)
}
