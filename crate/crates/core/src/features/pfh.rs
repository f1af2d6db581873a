//! Darboux-frame pair features and the 33-bin Point Feature Histogram.
//!
//! The histogram is three 11-bin blocks (alpha, phi, theta) concatenated.
//! The pair distance `d` is computed but not binned.

use std::f64::consts::PI;

use nalgebra::{Point3, Vector3};
use thiserror::Error;

use crate::geometry::{NormalSet, SpatialIndex};

pub const BINS_PER_FEATURE: usize = 11;
pub const PFH_BINS: usize = 3 * BINS_PER_FEATURE;

const DEGENERATE_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum PairError {
    #[error("pair points coincide")]
    Coincident,
    #[error("source normal is parallel to the connecting line")]
    Degenerate,
}

/// `<alpha, phi, theta, d>` for one point pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DarbouxQuadruplet {
    pub alpha: f64,
    pub phi: f64,
    pub theta: f64,
    pub d: f64,
}

fn lex_less(a: &Point3<f64>, b: &Point3<f64>) -> bool {
    (a.x, a.y, a.z) < (b.x, b.y, b.z)
}

/// Angular features of a point pair in the Darboux frame of the source point.
///
/// The source is the point whose normal is closer to the connecting line
/// (larger `|n . u|`); equal angles fall back to the lexicographically
/// smaller position, so the result does not depend on argument order.
pub fn darboux_features(
    p_a: &Point3<f64>,
    n_a: &Vector3<f64>,
    p_b: &Point3<f64>,
    n_b: &Vector3<f64>,
) -> Result<DarbouxQuadruplet, PairError> {
    let delta = p_b - p_a;
    let d = delta.norm();
    if d == 0.0 {
        return Err(PairError::Coincident);
    }
    let u = delta / d;
    let cos_a = n_a.dot(&u).abs();
    let cos_b = n_b.dot(&u).abs();
    let a_is_source = if cos_a != cos_b {
        cos_a > cos_b
    } else {
        !lex_less(p_b, p_a)
    };
    let (p_s, n_s, p_t, n_t) = if a_is_source {
        (p_a, n_a, p_b, n_b)
    } else {
        (p_b, n_b, p_a, n_a)
    };

    let dir = (p_t - p_s) / d;
    let frame_u = *n_s;
    let cross = frame_u.cross(&dir);
    let cross_norm = cross.norm();
    if cross_norm < DEGENERATE_EPS {
        return Err(PairError::Degenerate);
    }
    let frame_v = cross / cross_norm;
    let frame_w = frame_u.cross(&frame_v);

    let mut theta = (frame_w.dot(n_t)).atan2(frame_u.dot(n_t));
    if theta == -PI {
        theta = PI;
    }
    Ok(DarbouxQuadruplet {
        alpha: frame_v.dot(n_t),
        phi: frame_u.dot(&dir),
        theta,
        d,
    })
}

/// Equal-width bin over `[lo, hi]`; edges go to the upper bin except `hi`,
/// which lands in the last bin. Out-of-range values are clamped.
pub fn bin_index(value: f64, lo: f64, hi: f64) -> usize {
    let t = (value - lo) / (hi - lo) * BINS_PER_FEATURE as f64;
    if t <= 0.0 {
        0
    } else {
        (t.floor() as usize).min(BINS_PER_FEATURE - 1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PfhHistogram {
    pub bins: [f64; PFH_BINS],
    pub pair_count: usize,
}

impl PfhHistogram {
    pub fn zero() -> Self {
        Self {
            bins: [0.0; PFH_BINS],
            pair_count: 0,
        }
    }

    fn from_counts(counts: &[u64; PFH_BINS], pairs: usize) -> Self {
        if pairs == 0 {
            return Self::zero();
        }
        let mut bins = [0.0; PFH_BINS];
        for (b, &c) in bins.iter_mut().zip(counts) {
            *b = c as f64 / pairs as f64;
        }
        Self {
            bins,
            pair_count: pairs,
        }
    }
}

/// Histogram over all unordered pairs of valid points within `radius_ri` of
/// the query point (query included). Degenerate pairs are skipped.
pub fn compute_pfh(
    query_index: usize,
    normals: &NormalSet,
    index: &SpatialIndex,
    radius_ri: f64,
) -> PfhHistogram {
    let mut buf = Vec::new();
    compute_pfh_with(query_index, normals, index, radius_ri, &mut buf)
}

pub(crate) fn compute_pfh_with(
    query_index: usize,
    normals: &NormalSet,
    index: &SpatialIndex,
    radius_ri: f64,
    buf: &mut Vec<usize>,
) -> PfhHistogram {
    if !normals.valid.get(query_index).copied().unwrap_or(false) || radius_ri <= 0.0 {
        return PfhHistogram::zero();
    }
    index.radius_query_into(&index.position(query_index), radius_ri, buf);
    buf.retain(|&i| normals.valid[i]);
    if buf.len() < 2 {
        return PfhHistogram::zero();
    }
    let pts: Vec<Point3<f64>> = buf.iter().map(|&i| index.position(i)).collect();
    let mut counts = [0u64; PFH_BINS];
    let mut pairs = 0usize;
    for a in 0..buf.len() {
        for b in (a + 1)..buf.len() {
            let Ok(q) = darboux_features(&pts[a], &normals.normals[buf[a]], &pts[b], &normals.normals[buf[b]])
            else {
                continue;
            };
            counts[bin_index(q.alpha, -1.0, 1.0)] += 1;
            counts[BINS_PER_FEATURE + bin_index(q.phi, -1.0, 1.0)] += 1;
            counts[2 * BINS_PER_FEATURE + bin_index(q.theta, -PI, PI)] += 1;
            pairs += 1;
        }
    }
    PfhHistogram::from_counts(&counts, pairs)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quad(pa: [f64; 3], na: [f64; 3], pb: [f64; 3], nb: [f64; 3]) -> Result<DarbouxQuadruplet, PairError> {
        darboux_features(
            &Point3::from(pa),
            &Vector3::from(na),
            &Point3::from(pb),
            &Vector3::from(nb),
        )
    }

    #[test]
    fn coplanar_parallel_normals() {
        let q = quad([0.0; 3], [0.0, 0.0, 1.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]).unwrap();
        assert_eq!((q.alpha, q.phi, q.theta, q.d), (0.0, 0.0, 0.0, 1.0));
    }

    #[test]
    fn target_normal_along_v() {
        // U = (0,0,1), V = (0,1,0), W = (-1,0,0): alpha = V.n_b = 1,
        // theta = atan2(W.n_b, U.n_b) = atan2(0, 0) = 0
        let q = quad([0.0; 3], [0.0, 0.0, 1.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]).unwrap();
        assert_eq!((q.alpha, q.phi, q.theta, q.d), (1.0, 0.0, 0.0, 1.0));
    }

    #[test]
    fn coincident_and_degenerate_pairs() {
        assert_eq!(
            quad([1.0; 3], [0.0, 0.0, 1.0], [1.0; 3], [0.0, 1.0, 0.0]),
            Err(PairError::Coincident)
        );
        assert_eq!(
            quad([0.0; 3], [1.0, 0.0, 0.0], [1.0, 0.0, 0.0], [1.0, 0.0, 0.0]),
            Err(PairError::Degenerate)
        );
    }

    #[test]
    fn argument_order_does_not_matter() {
        let cases = [
            // tie: both normals orthogonal to the line
            ([0.0, 0.0, 0.0], [0.0, 0.0, 1.0], [1.0, 0.0, 0.0], [0.0, 0.6, 0.8]),
            // tie: equal |cos| with different signs
            ([0.0, 0.0, 0.0], [0.6, 0.0, 0.8], [1.0, 0.0, 0.0], [-0.6, 0.8, 0.0]),
            ([0.1, 0.2, 0.3], [0.0, 0.6, 0.8], [0.4, -0.2, 0.5], [0.48, 0.6, 0.64]),
        ];
        for (pa, na, pb, nb) in cases {
            assert_eq!(quad(pa, na, pb, nb), quad(pb, nb, pa, na));
        }
    }

    #[test]
    fn binning_edges() {
        assert_eq!(bin_index(0.0, -1.0, 1.0), 5);
        assert_eq!(bin_index(-1.0, -1.0, 1.0), 0);
        assert_eq!(bin_index(1.0, -1.0, 1.0), 10);
        assert_eq!(bin_index(1.0 + 1e-15, -1.0, 1.0), 10);
        assert_eq!(bin_index(-1.0 - 1e-15, -1.0, 1.0), 0);
        assert_eq!(bin_index(PI, -PI, PI), 10);
        assert_eq!(bin_index(0.0, -PI, PI), 5);
        // an interior edge goes to the upper bin
        assert_eq!(bin_index(-1.0 + 2.0 * 4.0 / 11.0 + 1e-12, -1.0, 1.0), 4);
        assert_eq!(bin_index(-0.5, -1.0, 1.0), 2);
    }

    #[test]
    fn isolated_point_has_zero_histogram() {
        let index = SpatialIndex::from_positions([Point3::origin(), Point3::new(1.0, 0.0, 0.0)]);
        let normals = NormalSet::from_normals(vec![Vector3::z(), Vector3::z()]);
        let h = compute_pfh(0, &normals, &index, 0.5);
        assert_eq!(h, PfhHistogram::zero());
    }

    #[test]
    fn invalid_query_has_zero_histogram() {
        let index = SpatialIndex::from_positions([Point3::origin(), Point3::new(0.1, 0.0, 0.0)]);
        let mut normals = NormalSet::from_normals(vec![Vector3::z(), Vector3::z()]);
        normals.valid[0] = false;
        assert_eq!(compute_pfh(0, &normals, &index, 1.0).pair_count, 0);
    }

    #[test]
    fn planar_patch_concentrates_in_zero_bins() {
        let mut pts = Vec::new();
        for i in 0..8 {
            for j in 0..8 {
                pts.push(Point3::new(i as f64 * 0.002, j as f64 * 0.002, 0.0));
            }
        }
        let index = SpatialIndex::from_positions(pts.iter().copied());
        let normals = NormalSet::from_normals(vec![Vector3::z(); pts.len()]);
        let h = compute_pfh(27, &normals, &index, 0.01);
        assert!(h.pair_count > 0);
        for (i, b) in h.bins.iter().enumerate() {
            let want = if [5, 16, 27].contains(&i) { 1.0 } else { 0.0 };
            assert_eq!(*b, want, "bin {i}");
        }
    }
}
