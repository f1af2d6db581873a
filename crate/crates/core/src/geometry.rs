//! Neighbourhood search and radius-based surface normal estimation.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use nalgebra::{Matrix3, Point3, SymmetricEigen, Vector3};
use rayon::prelude::*;

use crate::cloud_io::PointCloud;

const LEAF_SIZE: usize = 16;

#[derive(Debug, Clone)]
enum Node {
    Leaf {
        start: usize,
        end: usize,
    },
    Split {
        axis: usize,
        value: f64,
        left: usize,
        right: usize,
    },
}

/// Static kd-tree over a cloud's positions.
///
/// Radius queries use the closed ball, `|p - q|^2 <= r^2`, evaluated in the
/// same arithmetic as a linear scan so results match brute force exactly.
#[derive(Debug, Clone)]
pub struct SpatialIndex {
    points: Vec<[f64; 3]>,
    order: Vec<usize>,
    nodes: Vec<Node>,
}

#[inline]
fn dist2(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    dx * dx + dy * dy + dz * dz
}

impl SpatialIndex {
    pub fn build(cloud: &PointCloud) -> Self {
        Self::from_positions(cloud.points.iter().map(|p| p.position))
    }

    pub fn from_positions(positions: impl IntoIterator<Item = Point3<f64>>) -> Self {
        let points: Vec<[f64; 3]> = positions.into_iter().map(|p| [p.x, p.y, p.z]).collect();
        let mut order: Vec<usize> = (0..points.len()).collect();
        let mut nodes = Vec::new();
        if !points.is_empty() {
            Self::build_node(&points, &mut order, 0, points.len(), &mut nodes);
        }
        Self {
            points,
            order,
            nodes,
        }
    }

    fn build_node(
        points: &[[f64; 3]],
        order: &mut [usize],
        start: usize,
        end: usize,
        nodes: &mut Vec<Node>,
    ) -> usize {
        let id = nodes.len();
        if end - start <= LEAF_SIZE {
            nodes.push(Node::Leaf { start, end });
            return id;
        }
        let slice = &mut order[start..end];
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for &i in slice.iter() {
            for a in 0..3 {
                lo[a] = lo[a].min(points[i][a]);
                hi[a] = hi[a].max(points[i][a]);
            }
        }
        let axis = (0..3)
            .max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b])))
            .unwrap_or(0);
        if hi[axis] <= lo[axis] {
            // all points coincide
            nodes.push(Node::Leaf { start, end });
            return id;
        }
        let mid = slice.len() / 2;
        slice.select_nth_unstable_by(mid, |&a, &b| points[a][axis].total_cmp(&points[b][axis]));
        let value = points[slice[mid]][axis];
        nodes.push(Node::Leaf { start, end });
        let left = Self::build_node(points, order, start, start + mid, nodes);
        let right = Self::build_node(points, order, start + mid, end, nodes);
        nodes[id] = Node::Split {
            axis,
            value,
            left,
            right,
        };
        id
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn position(&self, i: usize) -> Point3<f64> {
        let p = self.points[i];
        Point3::new(p[0], p[1], p[2])
    }

    /// Indices of all points within `radius` of `query`, sorted ascending.
    pub fn radius_query(&self, query: &Point3<f64>, radius: f64) -> Vec<usize> {
        let mut out = Vec::new();
        self.radius_query_into(query, radius, &mut out);
        out
    }

    pub fn radius_query_into(&self, query: &Point3<f64>, radius: f64, out: &mut Vec<usize>) {
        out.clear();
        if self.nodes.is_empty() || radius < 0.0 {
            return;
        }
        let q = [query.x, query.y, query.z];
        let r2 = radius * radius;
        let mut stack = vec![0usize];
        while let Some(id) = stack.pop() {
            match self.nodes[id] {
                Node::Leaf { start, end } => {
                    out.extend(
                        self.order[start..end]
                            .iter()
                            .copied()
                            .filter(|&i| dist2(&self.points[i], &q) <= r2),
                    );
                }
                Node::Split {
                    axis,
                    value,
                    left,
                    right,
                } => {
                    let diff = q[axis] - value;
                    // left holds coords <= value, right holds coords >= value
                    let (near, far) = if diff <= 0.0 { (left, right) } else { (right, left) };
                    stack.push(near);
                    if diff * diff <= r2 {
                        stack.push(far);
                    }
                }
            }
        }
        out.sort_unstable();
    }

    /// The `k` nearest neighbours of `query` as `(index, distance)`, nearest
    /// first. Ties are broken by index.
    pub fn knn(&self, query: &Point3<f64>, k: usize, exclude: Option<usize>) -> Vec<(usize, f64)> {
        #[derive(PartialEq)]
        struct Cand(f64, usize);
        impl Eq for Cand {}
        impl PartialOrd for Cand {
            fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
                Some(self.cmp(other))
            }
        }
        impl Ord for Cand {
            fn cmp(&self, other: &Self) -> Ordering {
                self.0.total_cmp(&other.0).then(self.1.cmp(&other.1))
            }
        }

        if k == 0 || self.nodes.is_empty() {
            return Vec::new();
        }
        let q = [query.x, query.y, query.z];
        let mut heap: BinaryHeap<Cand> = BinaryHeap::with_capacity(k + 1);
        let mut stack = vec![(0usize, 0.0f64)];
        while let Some((id, bound)) = stack.pop() {
            if heap.len() == k && bound > heap.peek().map_or(f64::INFINITY, |c| c.0) {
                continue;
            }
            match self.nodes[id] {
                Node::Leaf { start, end } => {
                    for &i in &self.order[start..end] {
                        if Some(i) == exclude {
                            continue;
                        }
                        let cand = Cand(dist2(&self.points[i], &q), i);
                        if heap.len() < k {
                            heap.push(cand);
                        } else if cand < *heap.peek().unwrap() {
                            heap.pop();
                            heap.push(cand);
                        }
                    }
                }
                Node::Split {
                    axis,
                    value,
                    left,
                    right,
                } => {
                    let diff = q[axis] - value;
                    let (near, far) = if diff <= 0.0 { (left, right) } else { (right, left) };
                    stack.push((far, diff * diff));
                    stack.push((near, bound));
                }
            }
        }
        let mut out: Vec<(usize, f64)> = heap.into_iter().map(|c| (c.1, c.0.sqrt())).collect();
        out.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalParams {
    pub radius_rn: f64,
    pub viewpoint: Point3<f64>,
}

impl Default for NormalParams {
    fn default() -> Self {
        Self {
            radius_rn: 0.01,
            viewpoint: Point3::origin(),
        }
    }
}

/// Per-point normals aligned with the cloud's index space. Points whose
/// neighbourhood is too small or collinear are flagged invalid and carry a
/// zero normal that must not be used.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalSet {
    pub normals: Vec<Vector3<f64>>,
    pub curvature: Vec<f64>,
    pub valid: Vec<bool>,
}

impl NormalSet {
    pub fn len(&self) -> usize {
        self.normals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.normals.is_empty()
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|v| **v).count()
    }

    /// All-valid set from externally supplied normals (normalised here).
    pub fn from_normals(normals: Vec<Vector3<f64>>) -> Self {
        let n = normals.len();
        Self {
            normals: normals.into_iter().map(|v| v.normalize()).collect(),
            curvature: vec![0.0; n],
            valid: vec![true; n],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlaneFit {
    pub normal: Vector3<f64>,
    pub curvature: f64,
}

/// Flip `v` so its first non-zero component among (z, y, x) is positive.
fn canonical_sign(v: Vector3<f64>) -> Vector3<f64> {
    for a in [2, 1, 0] {
        if v[a] > 0.0 {
            return v;
        }
        if v[a] < 0.0 {
            return -v;
        }
    }
    v
}

/// PCA plane fit of a neighbourhood. Returns `None` for fewer than three
/// points or a (numerically) collinear/coincident set.
pub fn fit_plane(points: &[Point3<f64>], viewpoint: &Point3<f64>, anchor: &Point3<f64>) -> Option<PlaneFit> {
    if points.len() < 3 {
        return None;
    }
    let n = points.len() as f64;
    let centroid = points.iter().fold(Vector3::zeros(), |acc, p| acc + p.coords) / n;
    let mut cov = Matrix3::zeros();
    for p in points {
        let d = p.coords - centroid;
        cov += d * d.transpose();
    }
    cov /= n;
    let eig = SymmetricEigen::new(cov);
    let mut idx = [0usize, 1, 2];
    idx.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let l0 = eig.eigenvalues[idx[0]].max(0.0);
    let l1 = eig.eigenvalues[idx[1]].max(0.0);
    let l2 = eig.eigenvalues[idx[2]].max(0.0);
    let trace = l0 + l1 + l2;
    if trace <= 0.0 || l1 <= 1e-12 * trace {
        return None;
    }
    let mut normal = canonical_sign(eig.eigenvectors.column(idx[0]).normalize());
    if normal.dot(&(viewpoint - anchor)) < 0.0 {
        normal = -normal;
    }
    Some(PlaneFit {
        normal,
        curvature: (l0 / trace).clamp(0.0, 1.0 / 3.0),
    })
}

pub fn estimate_normals(cloud: &PointCloud, index: &SpatialIndex, params: &NormalParams) -> NormalSet {
    let fits: Vec<Option<PlaneFit>> = cloud
        .points
        .par_iter()
        .map_init(Vec::new, |buf, p| {
            index.radius_query_into(&p.position, params.radius_rn, buf);
            let nbrs: Vec<Point3<f64>> = buf.iter().map(|&i| index.position(i)).collect();
            fit_plane(&nbrs, &params.viewpoint, &p.position)
        })
        .collect();
    let mut set = NormalSet {
        normals: Vec::with_capacity(fits.len()),
        curvature: Vec::with_capacity(fits.len()),
        valid: Vec::with_capacity(fits.len()),
    };
    for fit in fits {
        match fit {
            Some(f) => {
                set.normals.push(f.normal);
                set.curvature.push(f.curvature);
                set.valid.push(true);
            }
            None => {
                set.normals.push(Vector3::zeros());
                set.curvature.push(0.0);
                set.valid.push(false);
            }
        }
    }
    set
}
