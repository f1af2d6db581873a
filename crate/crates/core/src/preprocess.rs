//! Statistical outlier removal and voxel-grid downsampling.

use std::collections::HashMap;

use nalgebra::{Point3, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cloud_io::{CloudPoint, ColourRgb, PointCloud, PointLabel};
use crate::geometry::SpatialIndex;

#[derive(Debug, Error, PartialEq)]
pub enum PreprocessError {
    #[error("cloud is empty")]
    EmptyCloud,
    #[error("k_neighbours = {k} must be smaller than the point count {points}")]
    TooFewPoints { k: usize, points: usize },
    #[error("invalid parameter: {0}")]
    InvalidParams(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutlierParams {
    pub k_neighbours: usize,
    pub stddev_multiplier: f64,
}

impl Default for OutlierParams {
    fn default() -> Self {
        Self {
            k_neighbours: 50,
            stddev_multiplier: 1.0,
        }
    }
}

impl OutlierParams {
    pub fn validate(&self) -> Result<(), PreprocessError> {
        if self.k_neighbours == 0 {
            return Err(PreprocessError::InvalidParams("k_neighbours must be >= 1".into()));
        }
        if !(self.stddev_multiplier > 0.0) {
            return Err(PreprocessError::InvalidParams("stddev_multiplier must be > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VoxelParams {
    pub leaf_size: f64,
}

impl Default for VoxelParams {
    fn default() -> Self {
        Self { leaf_size: 0.002 }
    }
}

impl VoxelParams {
    pub fn validate(&self) -> Result<(), PreprocessError> {
        if !(self.leaf_size > 0.0) || !self.leaf_size.is_finite() {
            return Err(PreprocessError::InvalidParams("leaf_size must be > 0".into()));
        }
        Ok(())
    }
}

/// Mean distance from each point to its `k` nearest neighbours (self excluded).
pub fn mean_knn_distances(cloud: &PointCloud, index: &SpatialIndex, k: usize) -> Vec<f64> {
    (0..cloud.len())
        .into_par_iter()
        .map(|i| {
            let nn = index.knn(&cloud.points[i].position, k, Some(i));
            nn.iter().map(|c| c.1).sum::<f64>() / k as f64
        })
        .collect()
}

/// Keep the points whose mean k-NN distance is at most
/// `mean + stddev_multiplier * stddev` of that statistic over the cloud.
pub fn remove_statistical_outliers(
    cloud: &PointCloud,
    params: &OutlierParams,
) -> Result<PointCloud, PreprocessError> {
    params.validate()?;
    if cloud.is_empty() {
        return Err(PreprocessError::EmptyCloud);
    }
    if params.k_neighbours >= cloud.len() {
        return Err(PreprocessError::TooFewPoints {
            k: params.k_neighbours,
            points: cloud.len(),
        });
    }
    let index = SpatialIndex::build(cloud);
    let stats = mean_knn_distances(cloud, &index, params.k_neighbours);
    let n = stats.len() as f64;
    let mean = stats.iter().sum::<f64>() / n;
    let var = stats.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / n;
    let threshold = mean + params.stddev_multiplier * var.sqrt();
    let points = cloud
        .points
        .iter()
        .zip(&stats)
        .filter(|(_, &s)| s <= threshold)
        .map(|(p, _)| p.clone())
        .collect();
    Ok(PointCloud {
        points,
        frame_id: cloud.frame_id.clone(),
    })
}

#[derive(Default)]
struct VoxelAccumulator {
    sum: Vector3<f64>,
    rgb: [u64; 3],
    count: usize,
    pepper: usize,
    peduncle: usize,
}

/// One point per occupied voxel of a grid anchored at the cloud's minimum
/// corner. Output order follows the first input point of each voxel.
pub fn voxel_downsample(cloud: &PointCloud, params: &VoxelParams) -> Result<PointCloud, PreprocessError> {
    params.validate()?;
    if cloud.is_empty() {
        return Err(PreprocessError::EmptyCloud);
    }
    let mut min = cloud.points[0].position;
    for p in &cloud.points {
        min = min.inf(&p.position);
    }
    let leaf = params.leaf_size;
    let mut slots: HashMap<[i64; 3], usize> = HashMap::new();
    let mut voxels: Vec<VoxelAccumulator> = Vec::new();
    for p in &cloud.points {
        let rel = p.position - min;
        let key = [
            (rel.x / leaf).floor() as i64,
            (rel.y / leaf).floor() as i64,
            (rel.z / leaf).floor() as i64,
        ];
        let slot = *slots.entry(key).or_insert_with(|| {
            voxels.push(VoxelAccumulator::default());
            voxels.len() - 1
        });
        let acc = &mut voxels[slot];
        acc.sum += p.position.coords;
        acc.rgb[0] += u64::from(p.colour.r);
        acc.rgb[1] += u64::from(p.colour.g);
        acc.rgb[2] += u64::from(p.colour.b);
        acc.count += 1;
        match p.label {
            PointLabel::Pepper => acc.pepper += 1,
            PointLabel::Peduncle => acc.peduncle += 1,
            PointLabel::Unlabelled => {}
        }
    }
    let points = voxels
        .into_iter()
        .map(|acc| {
            let n = acc.count as f64;
            let mean = |s: u64| (s as f64 / n).round() as u8;
            let label = if acc.pepper == 0 && acc.peduncle == 0 {
                PointLabel::Unlabelled
            } else if acc.peduncle > acc.pepper {
                PointLabel::Peduncle
            } else {
                PointLabel::Pepper
            };
            CloudPoint::new(
                Point3::from(acc.sum / n),
                ColourRgb::new(mean(acc.rgb[0]), mean(acc.rgb[1]), mean(acc.rgb[2])),
                label,
            )
        })
        .collect();
    Ok(PointCloud {
        points,
        frame_id: cloud.frame_id.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn pt(x: f64, y: f64, z: f64, label: PointLabel) -> CloudPoint {
        CloudPoint::new(Point3::new(x, y, z), ColourRgb::new(10, 20, 30), label)
    }

    fn fibonacci_sphere(n: usize) -> Vec<CloudPoint> {
        let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
        (0..n)
            .map(|i| {
                let z = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
                let r = (1.0 - z * z).sqrt();
                let t = golden * i as f64;
                pt(r * t.cos(), r * t.sin(), z, PointLabel::Pepper)
            })
            .collect()
    }

    /// Brute-force keep mask for the outlier rule.
    fn brute_keep(points: &[CloudPoint], k: usize, mult: f64) -> Vec<bool> {
        let stats: Vec<f64> = points
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let mut d: Vec<f64> = points
                    .iter()
                    .enumerate()
                    .filter(|(j, _)| *j != i)
                    .map(|(_, q)| (q.position - p.position).norm())
                    .collect();
                d.sort_by(f64::total_cmp);
                d[..k].iter().sum::<f64>() / k as f64
            })
            .collect();
        let n = stats.len() as f64;
        let mean = stats.iter().sum::<f64>() / n;
        let sd = (stats.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n).sqrt();
        stats.iter().map(|s| *s <= mean + mult * sd).collect()
    }

    #[test]
    fn distant_point_is_removed() {
        let mut points = fibonacci_sphere(100);
        points.push(pt(10.0, 0.0, 0.0, PointLabel::Peduncle));
        let keep = brute_keep(&points, 10, 1.0);
        assert_eq!(keep.iter().filter(|k| **k).count(), 100);
        assert!(!keep[100]);

        let cloud = PointCloud::new(points);
        let params = OutlierParams {
            k_neighbours: 10,
            stddev_multiplier: 1.0,
        };
        let out = remove_statistical_outliers(&cloud, &params).unwrap();
        assert_eq!(out.len(), 100);
        assert_eq!(out.points[..], cloud.points[..100]);
    }

    #[test]
    fn regular_grid_is_kept_with_wide_threshold() {
        let mut points = Vec::new();
        for i in 0..8 {
            for j in 0..8 {
                for k in 0..8 {
                    points.push(pt(i as f64, j as f64, k as f64, PointLabel::Pepper));
                }
            }
        }
        assert!(brute_keep(&points, 6, 3.0).iter().all(|k| *k));
        let cloud = PointCloud::new(points);
        let params = OutlierParams {
            k_neighbours: 6,
            stddev_multiplier: 3.0,
        };
        assert_eq!(remove_statistical_outliers(&cloud, &params).unwrap(), cloud);
    }

    #[test]
    fn outlier_filter_matches_brute_force_and_shrinks() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10 {
            let points: Vec<CloudPoint> = (0..150)
                .map(|_| {
                    pt(
                        rng.random::<f64>().powi(3),
                        rng.random(),
                        rng.random(),
                        PointLabel::Pepper,
                    )
                })
                .collect();
            let keep = brute_keep(&points, 8, 1.0);
            let cloud = PointCloud::new(points.clone());
            let params = OutlierParams {
                k_neighbours: 8,
                stddev_multiplier: 1.0,
            };
            let once = remove_statistical_outliers(&cloud, &params).unwrap();
            let want: Vec<CloudPoint> = points
                .iter()
                .zip(&keep)
                .filter(|(_, k)| **k)
                .map(|(p, _)| p.clone())
                .collect();
            assert_eq!(once.points, want);
            let twice = remove_statistical_outliers(&once, &params).unwrap();
            assert!(twice.len() <= once.len());
        }
    }

    #[test]
    fn k_must_be_below_point_count() {
        let cloud = PointCloud::new(fibonacci_sphere(10));
        let params = OutlierParams {
            k_neighbours: 10,
            stddev_multiplier: 1.0,
        };
        assert_eq!(
            remove_statistical_outliers(&cloud, &params),
            Err(PreprocessError::TooFewPoints { k: 10, points: 10 })
        );
    }

    #[test]
    fn close_points_merge_to_midpoint() {
        let cloud = PointCloud::new(vec![
            pt(0.0, 0.0, 0.0, PointLabel::Pepper),
            pt(0.001, 0.0, 0.0, PointLabel::Pepper),
        ]);
        let out = voxel_downsample(&cloud, &VoxelParams { leaf_size: 0.01 }).unwrap();
        assert_eq!(out.len(), 1);
        assert!((out.points[0].position - Point3::new(0.0005, 0.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn far_points_are_untouched() {
        let cloud = PointCloud::new(vec![
            pt(0.0, 0.0, 0.0, PointLabel::Pepper),
            pt(1.0, 0.0, 0.0, PointLabel::Peduncle),
        ]);
        let out = voxel_downsample(&cloud, &VoxelParams { leaf_size: 0.01 }).unwrap();
        assert_eq!(out, cloud);
    }

    #[test]
    fn majority_label_and_colour_mean() {
        let mut cloud = PointCloud::new(vec![
            pt(0.0, 0.0, 0.0, PointLabel::Peduncle),
            pt(0.001, 0.0, 0.0, PointLabel::Peduncle),
            pt(0.0, 0.001, 0.0, PointLabel::Pepper),
        ]);
        cloud.points[0].colour = ColourRgb::new(0, 100, 255);
        cloud.points[1].colour = ColourRgb::new(1, 100, 0);
        cloud.points[2].colour = ColourRgb::new(1, 101, 0);
        let out = voxel_downsample(&cloud, &VoxelParams { leaf_size: 0.01 }).unwrap();
        assert_eq!(out.points[0].label, PointLabel::Peduncle);
        // 2/3 -> 1, 301/3 -> 100, 255/3 -> 85
        assert_eq!(out.points[0].colour, ColourRgb::new(1, 100, 85));

        cloud.points.truncate(2);
        cloud.points[1].label = PointLabel::Pepper;
        let out = voxel_downsample(&cloud, &VoxelParams { leaf_size: 0.01 }).unwrap();
        assert_eq!(out.points[0].label, PointLabel::Pepper);
    }

    #[test]
    fn outputs_stay_inside_their_voxels_and_translate() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let leaf = 0.25;
        let points: Vec<CloudPoint> = (0..500)
            .map(|_| {
                let mut c = [0.0; 3];
                for v in &mut c {
                    // keep clear of voxel faces so translation cannot move points across
                    let cell = rng.random_range(0..6) as f64;
                    *v = (cell + rng.random_range(0.01..0.99)) * leaf;
                }
                pt(c[0], c[1], c[2], PointLabel::Pepper)
            })
            .collect();
        let mut cloud = PointCloud::new(points);
        // pin the min corner to the origin
        cloud.points.push(pt(0.0, 0.0, 0.0, PointLabel::Pepper));
        let out = voxel_downsample(&cloud, &VoxelParams { leaf_size: leaf }).unwrap();
        assert!(out.len() <= cloud.len());
        for p in &out.points {
            for a in 0..3 {
                let cell = (p.position[a] / leaf).floor();
                let members = cloud
                    .points
                    .iter()
                    .filter(|q| (0..3).all(|b| (q.position[b] / leaf).floor() == (p.position[b] / leaf).floor()));
                assert!(members.count() > 0, "centroid left its voxel on axis {a} (cell {cell})");
            }
        }

        let shift = Vector3::new(3.0 * leaf, -2.0 * leaf, 7.0 * leaf);
        let mut moved = cloud.clone();
        for p in &mut moved.points {
            p.position += shift;
        }
        let out_moved = voxel_downsample(&moved, &VoxelParams { leaf_size: leaf }).unwrap();
        assert_eq!(out.len(), out_moved.len());
        for (a, b) in out.points.iter().zip(&out_moved.points) {
            assert!((a.position + shift - b.position).norm() < 1e-9);
            assert_eq!(a.colour, b.colour);
        }
    }
}
