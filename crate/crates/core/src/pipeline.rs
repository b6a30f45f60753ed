//! End-to-end glue: scene featurization, training samples and
//! reconstruction.

use alloc::vec::Vec;

use rand::Rng;

use crate::calib::ViewRig;
use crate::features::{assemble_point_feature, padded_bounds, FeatureImage, PointContext, ViewFeatures, DEFAULT_VOLUME_RESOLUTION};
use crate::fusion::{depth_gap, normal_weight, occlusion_epsilon, vertex_visible, Fusion};
use crate::geometry::{MeshIndex, TriangleMesh};
use crate::math::Vec3;
use crate::nn::{PointSet, SceneSamples, SesdfModel};
use crate::recon::{evaluate_grid, extract_largest, Polarity, ReconError, ScalarGrid};
use crate::sampling::{sample_occupancy, sample_surface};
use crate::Error;

/// Points per network call during reconstruction.
const PREDICT_CHUNK: usize = 4096;

#[derive(Debug, Clone, PartialEq)]
pub struct SampleConfig {
    pub surface_samples: usize,
    pub occupancy_samples: usize,
    /// Off-surface perturbation, as a fraction of the ground-truth diagonal.
    pub sigma: f64,
    /// Uniform samples fill the ground-truth box grown by this fraction of
    /// its extent on each side.
    pub bounds_margin: f64,
}

impl Default for SampleConfig {
    fn default() -> Self {
        SampleConfig { surface_samples: 5000, occupancy_samples: 5000, sigma: 0.025, bounds_margin: 0.1 }
    }
}

/// Builds the featurization context of a scene: the observed images (one
/// six-channel render per view) are stacked with renders of the fitted
/// `body` under `rigs`.
pub fn scene_context(body: TriangleMesh, parts: &[usize], observed: &[FeatureImage], rigs: &[ViewRig], volume_resolution: usize) -> Result<PointContext, Error> {
    if observed.len() != rigs.len() || rigs.is_empty() {
        return Err(Error::InvalidArgument("need one observed image per view".into()));
    }
    let body = MeshIndex::new(body)?;
    let views = observed
        .iter()
        .zip(rigs)
        .map(|(img, rig)| {
            let body_img = crate::features::render_feature_image(&body, rig);
            ViewFeatures::from_image(img.stack(&body_img), &body, *rig)
        })
        .collect();
    Ok(PointContext::new(body, parts, views, volume_resolution))
}

/// Renders the observed images of a synthetic scene and builds its context.
pub fn synthetic_context(gt: &MeshIndex, body: TriangleMesh, parts: &[usize], rigs: &[ViewRig]) -> Result<PointContext, Error> {
    let observed: Vec<FeatureImage> = rigs.iter().map(|r| crate::features::render_feature_image(gt, r)).collect();
    scene_context(body, parts, &observed, rigs, DEFAULT_VOLUME_RESOLUTION)
}

/// Unnormalized per-view fusion scores of `strategy` at `x`.
pub fn fusion_scores(ctx: &PointContext, strategy: Fusion, x: &Vec3, eps: f64) -> Vec<f64> {
    match strategy {
        Fusion::Average => alloc::vec![1.0; ctx.views.len()],
        Fusion::Occlusion => ctx.views.iter().map(|v| 1.0 / depth_gap(x, &v.rig, ctx.visibility_mesh()).max(eps)).collect(),
        Fusion::Normal => {
            let n = ctx.body.mesh().vertex_normals()[ctx.body.nearest_vertex(x)];
            ctx.views.iter().map(|v| normal_weight(&n, &v.rig.forward())).collect()
        }
        Fusion::Visibility => {
            let p = ctx.body.mesh().vertices()[ctx.body.nearest_vertex(x)];
            ctx.views.iter().map(|v| if vertex_visible(&p, &v.rig, ctx.visibility_mesh()) { 1.0 } else { 0.0 }).collect()
        }
    }
}

/// Per-view network inputs of `points` with `strategy`'s fusion scores.
pub fn featurize(ctx: &PointContext, points: &[Vec3], strategy: Fusion) -> Result<PointSet, Error> {
    let eps = occlusion_epsilon(&ctx.body);
    let mut set = PointSet::new(ctx.views.len());
    for x in points {
        let tuples = assemble_point_feature(ctx, x)?;
        set.push(&tuples, &fusion_scores(ctx, strategy, x, eps));
    }
    Ok(set)
}

/// Surface and occupancy training points on the clothed ground truth `gt`,
/// featurized with occlusion-aware scores.
pub fn training_samples<R: Rng + ?Sized>(ctx: &PointContext, gt: &MeshIndex, config: &SampleConfig, rng: &mut R) -> Result<SceneSamples, Error> {
    let surface = sample_surface(gt.mesh(), config.surface_samples, rng)?;
    let b = gt.mesh().bounds();
    let sigma = config.sigma * b.diagonal();
    let occ = sample_occupancy(gt, config.occupancy_samples, sigma, &b.inflated(config.bounds_margin), rng)?;
    let pts: Vec<Vec3> = surface.iter().map(|s| s.x).collect();
    let mut s_set = featurize(ctx, &pts, Fusion::Occlusion)?;
    s_set.n_gt = surface.iter().map(|s| s.n_gt).collect();
    let pts: Vec<Vec3> = occ.iter().map(|s| s.x).collect();
    let mut o_set = featurize(ctx, &pts, Fusion::Occlusion)?;
    o_set.labels = occ.iter().map(|s| s.o_gt).collect();
    Ok(SceneSamples { rotations: ctx.views.iter().map(|v| v.rig.rotation).collect(), surface: s_set, occupancy: o_set })
}

/// Field the surface is extracted from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExtractFrom {
    /// Occupancy at level 0.5.
    Occupancy,
    /// Fused refined signed distance at level 0.
    Sdf,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReconConfig {
    pub resolution: usize,
    pub fusion: Fusion,
    pub extract_from: ExtractFrom,
}

impl Default for ReconConfig {
    fn default() -> Self {
        ReconConfig { resolution: 128, fusion: Fusion::Occlusion, extract_from: ExtractFrom::Occupancy }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reconstruction {
    pub mesh: TriangleMesh,
    pub grid: ScalarGrid,
}

/// Lattice over the fitted body's padded bounds, evaluated point by point
/// (featurize, refine, fuse, classify), then marching cubes and the
/// largest-component filter.
pub fn reconstruct(model: &SesdfModel, ctx: &PointContext, config: &ReconConfig) -> Result<Reconstruction, Error> {
    let bounds = padded_bounds(&ctx.body.mesh().bounds());
    let rotations: Vec<_> = ctx.views.iter().map(|v| v.rig.rotation).collect();
    let views: Vec<usize> = (0..ctx.views.len()).collect();
    let grid = evaluate_grid(config.resolution, bounds, |pts, out| {
        for (p, o) in pts.chunks(PREDICT_CHUNK).zip(out.chunks_mut(PREDICT_CHUNK)) {
            let set = featurize(ctx, p, config.fusion).map_err(|e| ReconError::Evaluation(alloc::format!("{e}")))?;
            let idx: Vec<usize> = (0..p.len()).collect();
            let batch = set.batch(&idx, &views, &rotations);
            let pred = model.predict(&batch).map_err(|e| ReconError::Evaluation(alloc::format!("{e}")))?;
            match config.extract_from {
                ExtractFrom::Occupancy => o.copy_from_slice(&pred.occupancy),
                ExtractFrom::Sdf => o.copy_from_slice(&pred.fused_d),
            }
        }
        Ok(())
    })?;
    let (iso, polarity) = match config.extract_from {
        ExtractFrom::Occupancy => (0.5, Polarity::InsideAbove),
        ExtractFrom::Sdf => (0.0, Polarity::InsideBelow),
    };
    let mesh = extract_largest(&grid, iso, polarity)?;
    Ok(Reconstruction { mesh, grid })
}

/// Same lattice and extraction with the ground-truth occupancy in place of
/// the networks.
pub fn reconstruct_oracle(gt: &MeshIndex, bounds_of: &TriangleMesh, resolution: usize) -> Result<Reconstruction, Error> {
    let bounds = padded_bounds(&bounds_of.bounds());
    let grid = evaluate_grid(resolution, bounds, |pts, out| {
        for (p, o) in pts.iter().zip(out) {
            *o = if crate::sampling::occupancy_gt(gt, p) { 1.0 } else { 0.0 };
        }
        Ok(())
    })?;
    let mesh = extract_largest(&grid, 0.5, Polarity::InsideAbove)?;
    Ok(Reconstruction { mesh, grid })
}
