//! Per-point descriptors: HSV colour fused with the 33-bin PFH into a
//! 36-value feature vector.

mod colour;
mod pfh;

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use colour::{hsv_to_rgb, rgb_to_hsv, ColourHsv};
pub use pfh::{
    bin_index, compute_pfh, darboux_features, DarbouxQuadruplet, PairError, PfhHistogram,
    BINS_PER_FEATURE, PFH_BINS,
};

use crate::cloud_io::{PointCloud, PointLabel};
use crate::geometry::{NormalSet, SpatialIndex};

pub const HSV_DIMS: usize = 3;
pub const FEATURE_DIMS: usize = HSV_DIMS + PFH_BINS;

/// `[h, s, v, pfh_0 .. pfh_32]`
pub type FeatureVector = [f64; FEATURE_DIMS];

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("normal set has {normals} entries but the cloud has {points} points")]
    SizeMismatch { points: usize, normals: usize },
    #[error("index covers {index} points but the cloud has {points} points")]
    IndexMismatch { points: usize, index: usize },
    #[error("feature rows must have {FEATURE_DIMS} values, found {0}")]
    RowLength(usize),
    #[error("writing features: {0}")]
    Io(#[from] std::io::Error),
}

/// Which slice of the 36-d vector a model consumes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureSet {
    #[default]
    Full,
    Hsv,
    Pfh,
}

impl FeatureSet {
    pub fn dims(self) -> usize {
        self.range().len()
    }

    pub fn range(self) -> std::ops::Range<usize> {
        match self {
            FeatureSet::Full => 0..FEATURE_DIMS,
            FeatureSet::Hsv => 0..HSV_DIMS,
            FeatureSet::Pfh => HSV_DIMS..FEATURE_DIMS,
        }
    }

    pub fn project(self, row: &FeatureVector) -> &[f64] {
        &row[self.range()]
    }

    pub fn as_str(self) -> &'static str {
        match self {
            FeatureSet::Full => "full",
            FeatureSet::Hsv => "hsv",
            FeatureSet::Pfh => "pfh",
        }
    }
}

impl std::str::FromStr for FeatureSet {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "full" => Ok(FeatureSet::Full),
            "hsv" => Ok(FeatureSet::Hsv),
            "pfh" => Ok(FeatureSet::Pfh),
            other => Err(format!("unknown feature set `{other}`")),
        }
    }
}

/// Feature rows aligned with a cloud. `valid[i]` is false when point `i` had
/// no usable normal; such rows carry a zero PFH block and are skipped when
/// assembling training data.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FeatureMatrix {
    pub rows: Vec<FeatureVector>,
    pub labels: Vec<PointLabel>,
    pub valid: Vec<bool>,
}

impl FeatureMatrix {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Build from arbitrary rows; every row is marked valid.
    pub fn from_rows(rows: Vec<FeatureVector>, labels: Vec<PointLabel>) -> Self {
        assert_eq!(rows.len(), labels.len(), "rows and labels must align");
        let valid = vec![true; rows.len()];
        Self { rows, labels, valid }
    }

    /// Convenience for dense data with fewer than 36 columns: values fill the
    /// leading columns, the rest are zero.
    pub fn from_slices(rows: &[Vec<f64>], labels: Vec<PointLabel>) -> Result<Self, FeatureError> {
        let rows = rows
            .iter()
            .map(|r| {
                if r.len() > FEATURE_DIMS {
                    return Err(FeatureError::RowLength(r.len()));
                }
                let mut v = [0.0; FEATURE_DIMS];
                v[..r.len()].copy_from_slice(r);
                Ok(v)
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self::from_rows(rows, labels))
    }

    pub fn extend(&mut self, other: FeatureMatrix) {
        self.rows.extend(other.rows);
        self.labels.extend(other.labels);
        self.valid.extend(other.valid);
    }

    /// Rows usable for training: labelled with a valid normal.
    pub fn trainable_indices(&self) -> Vec<usize> {
        (0..self.len())
            .filter(|&i| self.valid[i] && self.labels[i].is_labelled())
            .collect()
    }

    pub fn write_csv(&self, mut out: impl Write) -> Result<(), FeatureError> {
        let mut header = String::from("h,s,v");
        for i in 0..PFH_BINS {
            header.push_str(&format!(",pfh{i:02}"));
        }
        header.push_str(",label\n");
        out.write_all(header.as_bytes())?;
        for (row, label) in self.rows.iter().zip(&self.labels) {
            let mut line = row.iter().map(f64::to_string).collect::<Vec<_>>().join(",");
            line.push_str(&format!(",{}\n", label.code()));
            out.write_all(line.as_bytes())?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<(), FeatureError> {
        let file = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(file);
        self.write_csv(&mut w)?;
        w.flush()?;
        Ok(())
    }
}

pub fn extract_features(
    cloud: &PointCloud,
    normals: &NormalSet,
    index: &SpatialIndex,
    radius_ri: f64,
) -> Result<FeatureMatrix, FeatureError> {
    if normals.len() != cloud.len() {
        return Err(FeatureError::SizeMismatch {
            points: cloud.len(),
            normals: normals.len(),
        });
    }
    if index.len() != cloud.len() {
        return Err(FeatureError::IndexMismatch {
            points: cloud.len(),
            index: index.len(),
        });
    }
    let rows: Vec<FeatureVector> = (0..cloud.len())
        .into_par_iter()
        .map_init(Vec::new, |buf, i| {
            let hsv = rgb_to_hsv(cloud.points[i].colour);
            let hist = pfh::compute_pfh_with(i, normals, index, radius_ri, buf);
            let mut row = [0.0; FEATURE_DIMS];
            row[0] = hsv.h;
            row[1] = hsv.s;
            row[2] = hsv.v;
            row[HSV_DIMS..].copy_from_slice(&hist.bins);
            row
        })
        .collect();
    Ok(FeatureMatrix {
        rows,
        labels: cloud.labels(),
        valid: normals.valid.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cloud_io::{CloudPoint, ColourRgb};
    use crate::geometry::{estimate_normals, NormalParams};
    use nalgebra::{Point3, Rotation3, Unit, Vector3};

    fn red_patch() -> PointCloud {
        let mut points = Vec::new();
        for i in 0..12 {
            for j in 0..12 {
                points.push(CloudPoint::new(
                    Point3::new(i as f64 * 0.002, j as f64 * 0.002, 0.3),
                    ColourRgb::new(255, 0, 0),
                    PointLabel::Pepper,
                ));
            }
        }
        PointCloud::new(points)
    }

    fn features_of(cloud: &PointCloud, viewpoint: Point3<f64>) -> FeatureMatrix {
        let index = SpatialIndex::build(cloud);
        let params = NormalParams {
            radius_rn: 0.01,
            viewpoint,
        };
        let normals = estimate_normals(cloud, &index, &params);
        extract_features(cloud, &normals, &index, 0.01).unwrap()
    }

    #[test]
    fn red_plane_rows() {
        let cloud = red_patch();
        let fm = features_of(&cloud, Point3::origin());
        assert_eq!(fm.len(), cloud.len());
        for row in &fm.rows {
            assert_eq!(row.len(), 36);
            assert_eq!(&row[..3], &[0.0, 1.0, 1.0]);
            for (i, b) in row[3..].iter().enumerate() {
                let want = if [5, 16, 27].contains(&i) { 1.0 } else { 0.0 };
                assert_eq!(*b, want);
            }
        }
    }

    #[test]
    fn size_mismatch_is_reported() {
        let cloud = red_patch();
        let index = SpatialIndex::build(&cloud);
        let normals = NormalSet::from_normals(vec![Vector3::z(); 3]);
        assert!(matches!(
            extract_features(&cloud, &normals, &index, 0.01),
            Err(FeatureError::SizeMismatch { .. })
        ));
    }

    #[test]
    fn rigid_motion_leaves_curved_features_unchanged() {
        // bumpy surface so that quadruplets are not all on the zero bin edges
        let mut points = Vec::new();
        for i in 0..15 {
            for j in 0..15 {
                let x = i as f64 * 0.0021;
                let y = j as f64 * 0.0019;
                let z = 0.3 + 8.0 * (x - 0.014) * (x - 0.014) - 5.0 * (y - 0.013) * (y - 0.013);
                points.push(CloudPoint::new(
                    Point3::new(x, y, z),
                    ColourRgb::new(30, 200, 40),
                    PointLabel::Peduncle,
                ));
            }
        }
        let cloud = PointCloud::new(points);
        let base = features_of(&cloud, Point3::origin());

        let rot = Rotation3::from_axis_angle(&Unit::new_normalize(Vector3::new(1.0, 2.0, -0.5)), 0.7);
        let shift = Vector3::new(0.05, -0.02, 0.1);
        let mut moved = cloud.clone();
        for p in &mut moved.points {
            p.position = rot * p.position + shift;
        }
        let got = features_of(&moved, rot * Point3::origin() + shift);
        let mut differing = 0;
        for (a, b) in base.rows.iter().zip(&got.rows) {
            if a.iter().zip(b).any(|(x, y)| (x - y).abs() > 1e-6) {
                differing += 1;
            }
        }
        // quadruplets sitting on a bin edge may flip; they must be rare
        assert!(differing * 50 <= base.len(), "{differing} rows changed");
    }

    #[test]
    fn csv_layout() {
        let fm = FeatureMatrix::from_slices(&[vec![0.5, 0.25]], vec![PointLabel::Peduncle]).unwrap();
        let mut buf = Vec::new();
        fm.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        let header: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(header.len(), 37);
        assert_eq!(header[3], "pfh00");
        assert_eq!(header[35], "pfh32");
        assert_eq!(header[36], "label");
        let row: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(row[0], "0.5");
        assert_eq!(row[36], "1");
    }

    #[test]
    fn feature_set_projection() {
        let mut row = [0.0; FEATURE_DIMS];
        for (i, v) in row.iter_mut().enumerate() {
            *v = i as f64;
        }
        assert_eq!(FeatureSet::Hsv.project(&row), &[0.0, 1.0, 2.0]);
        assert_eq!(FeatureSet::Pfh.project(&row).len(), 33);
        assert_eq!(FeatureSet::Pfh.project(&row)[0], 3.0);
        assert_eq!(FeatureSet::Full.dims(), 36);
    }
}
