use alloc::vec::Vec;

use super::tensor::Matrix;
use crate::features::{ViewTuple, RAW_2D, RAW_3D};
use crate::math::{Mat3, Vec3};

/// Raw pixel- and space-aligned channels per (point, view) row.
pub const RAW_WIDTH: usize = RAW_2D + RAW_3D;

/// Precomputed per-view inputs for a set of points. Rows are point-major:
/// row `p * views + v`. `scores` are unnormalized fusion scores;
/// `n_gt` is filled for surface samples and `labels` for occupancy samples.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointSet {
    pub views: usize,
    pub raw: Vec<f64>,
    pub d_body: Vec<f64>,
    pub n_cam: Vec<f64>,
    pub z: Vec<f64>,
    pub scores: Vec<f64>,
    pub n_gt: Vec<Vec3>,
    pub labels: Vec<bool>,
}

impl PointSet {
    pub fn new(views: usize) -> Self {
        PointSet { views, ..Default::default() }
    }

    pub fn len(&self) -> usize {
        self.d_body.len()
    }

    pub fn is_empty(&self) -> bool {
        self.d_body.is_empty()
    }

    /// Appends one point's tuples (one per view) with its fusion scores.
    pub fn push(&mut self, tuples: &[ViewTuple], scores: &[f64]) {
        assert_eq!(tuples.len(), self.views, "one tuple per view");
        assert_eq!(scores.len(), self.views, "one score per view");
        self.d_body.push(tuples[0].d);
        for (t, s) in tuples.iter().zip(scores) {
            self.raw.extend_from_slice(&t.f2d);
            self.raw.extend_from_slice(&t.f3d);
            self.n_cam.extend_from_slice(t.n.as_slice());
            self.z.push(t.z);
            self.scores.push(*s);
        }
    }

    /// Gathers `points` restricted to `views` (a subset of view indices, in
    /// order) into a batch. Fusion scores are renormalized over the subset;
    /// all-zero scores become uniform.
    pub fn batch(&self, points: &[usize], views: &[usize], rotations: &[Mat3]) -> Batch {
        let nv = views.len();
        let rows = points.len() * nv;
        let mut raw = Matrix::zeros(rows, RAW_WIDTH);
        let mut n_cam = Matrix::zeros(rows, 3);
        let mut z = Vec::with_capacity(rows);
        let mut weights = Vec::with_capacity(rows);
        let mut d_body = Vec::with_capacity(points.len());
        let mut n_gt = Vec::new();
        let mut labels = Vec::new();
        for (bp, &p) in points.iter().enumerate() {
            d_body.push(self.d_body[p]);
            let sum: f64 = views.iter().map(|&v| self.scores[p * self.views + v]).sum();
            for (bv, &v) in views.iter().enumerate() {
                let src = p * self.views + v;
                let dst = bp * nv + bv;
                raw.row_mut(dst).copy_from_slice(&self.raw[src * RAW_WIDTH..(src + 1) * RAW_WIDTH]);
                n_cam.row_mut(dst).copy_from_slice(&self.n_cam[src * 3..src * 3 + 3]);
                z.push(self.z[src]);
                let s = self.scores[src];
                weights.push(if sum > 0.0 && sum.is_finite() { s / sum } else { 1.0 / nv as f64 });
            }
            if !self.n_gt.is_empty() {
                n_gt.push(self.n_gt[p]);
            }
            if !self.labels.is_empty() {
                labels.push(self.labels[p]);
            }
        }
        Batch {
            points: points.len(),
            views: nv,
            raw,
            d_body,
            n_cam,
            z,
            rotations: views.iter().map(|&v| rotations[v]).collect(),
            weights,
            n_gt,
            labels,
        }
    }
}

/// Network-ready inputs for `points x views` rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub points: usize,
    pub views: usize,
    pub raw: Matrix,
    pub d_body: Vec<f64>,
    /// Body normal in each view's camera frame.
    pub n_cam: Matrix,
    pub z: Vec<f64>,
    /// Model-to-camera rotation per view.
    pub rotations: Vec<Mat3>,
    /// Normalized fusion weights per row.
    pub weights: Vec<f64>,
    pub n_gt: Vec<Vec3>,
    pub labels: Vec<bool>,
}

/// Training points of one scene.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneSamples {
    pub rotations: Vec<Mat3>,
    pub surface: PointSet,
    pub occupancy: PointSet,
}
