//! Point-to-surface and Chamfer distances between meshes.

use alloc::vec::Vec;

#[allow(unused_imports)] // needed for f64 math under no_std
use num_traits::Float as _;
use rand::Rng;

use crate::geometry::{MeshIndex, TriangleMesh};
use crate::sampling::sample_surface;
use crate::Error;

pub const DEFAULT_METRIC_SAMPLES: usize = 10_000;

/// Mean unsigned distance from `n_samples` area-uniform samples of `pred`
/// to the surface of `gt`.
pub fn p2s<R: Rng + ?Sized>(pred: &TriangleMesh, gt: &MeshIndex, n_samples: usize, rng: &mut R) -> Result<f64, Error> {
    if pred.is_empty() || gt.mesh().is_empty() {
        return Err(Error::InvalidArgument("metrics need non-empty meshes".into()));
    }
    let samples = sample_surface(pred, n_samples.max(1), rng)?;
    let sum: f64 = samples.iter().map(|s| gt.closest_point(&s.x).distance_squared.sqrt()).sum();
    Ok(sum / samples.len() as f64)
}

/// Both directions of [`p2s`] and their mean.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChamferReport {
    pub pred_to_gt: f64,
    pub gt_to_pred: f64,
    pub chamfer: f64,
}

/// Symmetric mean of the two point-to-surface directions.
pub fn chamfer<R: Rng + ?Sized>(pred: &MeshIndex, gt: &MeshIndex, n_samples: usize, rng: &mut R) -> Result<ChamferReport, Error> {
    let pred_to_gt = p2s(pred.mesh(), gt, n_samples, rng)?;
    let gt_to_pred = p2s(gt.mesh(), pred, n_samples, rng)?;
    Ok(ChamferReport { pred_to_gt, gt_to_pred, chamfer: 0.5 * (pred_to_gt + gt_to_pred) })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AngleRow {
    pub angle_deg: f64,
    pub chamfer: f64,
    /// Reconstruction-to-ground-truth distance.
    pub p2s: f64,
}

/// Per-angle metrics followed by their mean (angle NaN).
/// `reconstruct(angle)` returns the prediction and the ground truth seen
/// under that input orientation.
pub fn eval_protocol<R, F>(angles_deg: &[f64], n_samples: usize, rng: &mut R, mut reconstruct: F) -> Result<Vec<AngleRow>, Error>
where
    R: Rng + ?Sized,
    F: FnMut(f64) -> Result<(TriangleMesh, TriangleMesh), Error>,
{
    if angles_deg.is_empty() {
        return Err(Error::InvalidArgument("no evaluation angles".into()));
    }
    let mut rows = Vec::with_capacity(angles_deg.len() + 1);
    for &a in angles_deg {
        let (pred, gt) = reconstruct(a)?;
        let pred = MeshIndex::new(pred)?;
        let gt = MeshIndex::new(gt)?;
        let c = chamfer(&pred, &gt, n_samples, rng)?;
        rows.push(AngleRow { angle_deg: a, chamfer: c.chamfer, p2s: c.pred_to_gt });
    }
    let n = rows.len() as f64;
    let mean = AngleRow {
        angle_deg: f64::NAN,
        chamfer: rows.iter().map(|r| r.chamfer).sum::<f64>() / n,
        p2s: rows.iter().map(|r| r.p2s).sum::<f64>() / n,
    };
    rows.push(mean);
    Ok(rows)
}
