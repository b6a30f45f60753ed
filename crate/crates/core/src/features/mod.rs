//! Pixel-aligned and space-aligned geometric features and per-view point
//! tuples.
//!
//! Each view carries a 12-channel image: the observed (clothed) render
//! stacked with the fitted body render, six channels each (see
//! [`render_feature_image`]). The space-aligned volume pools the fitted body's
//! vertices. Trainable embeddings lifting these raw channels to the network
//! widths live in [`crate::nn`].

mod image;
mod volume;

use alloc::vec::Vec;

use crate::body::BodyModel;
use crate::calib::ViewRig;
use crate::geometry::MeshIndex;
use crate::math::{Aabb, Vec3};
use crate::sampling::distance_encode;
use crate::Error;

pub use image::{
    distance_transform, render_feature_image, signed_distance_transform, FeatureImage, CH_DEPTH, CH_DISTANCE, CH_MASK,
    CH_NORMAL, RENDER_CHANNELS,
};
pub use volume::{splat_volume, volume_channels, FeatureVolume, DEFAULT_VOLUME_RESOLUTION};

/// Raw pixel-aligned channels per view (observed render + body render).
pub const RAW_2D: usize = 2 * RENDER_CHANNELS;
pub const BODY_PARTS: usize = 16;
/// Raw space-aligned channels.
pub const RAW_3D: usize = volume_channels(BODY_PARTS);
/// Embedded widths.
pub const F2D_DIM: usize = 256;
pub const F3D_DIM: usize = 128;

/// Bounds used for the feature volume and the reconstruction lattice: the
/// body box grown by 15% of its extent per side, and by at least 5% of its
/// diagonal so thin axes keep room for clothing.
pub fn padded_bounds(b: &Aabb) -> Aabb {
    let pad = (b.extent() * 0.15).map(|p| p.max(0.05 * b.diagonal()));
    Aabb { min: b.min - pad, max: b.max + pad }
}

/// Index of the largest skin weight of each vertex.
pub fn dominant_parts(model: &BodyModel) -> Vec<usize> {
    model
        .skin_weights()
        .iter()
        .map(|row| row.iter().enumerate().fold((0, f64::NEG_INFINITY), |best, (j, &w)| if w > best.1 { (j, w) } else { best }).0)
        .collect()
}

/// One calibrated view: rig, stacked image and the camera depth of the
/// body-box center, which depths are measured from.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewFeatures {
    pub rig: ViewRig,
    pub image: FeatureImage,
    pub depth_ref: f64,
}

impl ViewFeatures {
    /// Renders `observed` and `body` under `rig` and stacks them.
    pub fn render(observed: &MeshIndex, body: &MeshIndex, rig: ViewRig) -> Self {
        let image = render_feature_image(observed, &rig).stack(&render_feature_image(body, &rig));
        ViewFeatures::from_image(image, body, rig)
    }

    pub fn from_image(image: FeatureImage, body: &MeshIndex, rig: ViewRig) -> Self {
        let depth_ref = rig.to_camera(&body.mesh().bounds().center()).z;
        ViewFeatures { rig, image, depth_ref }
    }
}

/// Everything needed to featurize query points: the fitted body, its pooled
/// volume and the views.
#[derive(Debug, Clone)]
pub struct PointContext {
    pub body: MeshIndex,
    pub volume: FeatureVolume,
    pub views: Vec<ViewFeatures>,
    /// Geometry that blocks the views, body included, when the scene holds
    /// known occluders besides the body. Only visibility tests use it.
    pub occluder: Option<MeshIndex>,
}

impl PointContext {
    /// Splats `body` (posed with part labels `parts`) into a volume over its
    /// padded bounds.
    pub fn new(body: MeshIndex, parts: &[usize], views: Vec<ViewFeatures>, volume_resolution: usize) -> Self {
        let bounds = padded_bounds(&body.mesh().bounds());
        let volume = splat_volume(body.mesh(), parts, BODY_PARTS, volume_resolution, bounds);
        PointContext { body, volume, views, occluder: None }
    }

    /// Mesh that view rays are traced against.
    pub fn visibility_mesh(&self) -> &MeshIndex {
        self.occluder.as_ref().unwrap_or(&self.body)
    }

    pub fn rigs(&self) -> Vec<ViewRig> {
        self.views.iter().map(|v| v.rig).collect()
    }
}

/// Raw per-view inputs for one point. `n` is the nearest body vertex normal
/// in the camera frame; `d` is the body signed distance, shared by all views.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewTuple {
    pub f2d: [f64; RAW_2D],
    pub f3d: [f64; RAW_3D],
    pub d: f64,
    pub n: Vec3,
    pub z: f64,
}

impl ViewTuple {
    pub fn encoded(&self, l: usize) -> Vec<f64> {
        distance_encode(self.d, l)
    }
}

/// Per-view tuples for model-space point `x`, in view order.
pub fn assemble_point_feature(ctx: &PointContext, x: &Vec3) -> Result<Vec<ViewTuple>, Error> {
    if ctx.views.is_empty() {
        return Err(Error::InvalidArgument("no views to featurize".into()));
    }
    let d = ctx.body.signed_distance(x).distance;
    let n_model = ctx.body.mesh().vertex_normals()[ctx.body.nearest_vertex(x)];
    let mut f3d = [0.0; RAW_3D];
    ctx.volume.sample(x, &mut f3d);
    let mut out = Vec::with_capacity(ctx.views.len());
    for view in &ctx.views {
        let (u, v, z) = view.rig.project(x);
        let mut f2d = [0.0; RAW_2D];
        view.image.sample(u, v, &mut f2d);
        // Depth channels are relative to the body center; bilinear weights
        // only reach masked taps, whose total weight is the mask channel.
        for half in 0..2 {
            let o = half * RENDER_CHANNELS;
            f2d[o + CH_DEPTH] -= view.depth_ref * f2d[o + CH_MASK];
        }
        out.push(ViewTuple { f2d, f3d, d, n: view.rig.rotation * n_model, z: z - view.depth_ref });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::icosphere;
    use crate::math::yaw;

    fn context(views: usize) -> PointContext {
        let body = MeshIndex::new(icosphere(0.5, 3)).unwrap();
        let observed = MeshIndex::new(icosphere(0.55, 3)).unwrap();
        let views = (0..views)
            .map(|i| {
                let rig = ViewRig::new(yaw(2.0 * core::f64::consts::PI * i as f64 / views as f64), Vec3::new(0.0, 0.0, 2.0), 64.0, 96, 96);
                ViewFeatures::render(&observed, &body, rig)
            })
            .collect();
        let parts = alloc::vec![0; body.mesh().vertices().len()];
        PointContext::new(body, &parts, views, 16)
    }

    #[test]
    fn occluder_lowers_the_blocked_views_score() {
        use crate::fusion::Fusion;
        use crate::geometry::{make_box, TriangleMesh};
        use crate::pipeline::fusion_scores;
        let mut ctx = context(2);
        let x = Vec3::new(0.0, 0.0, -0.5);
        let open = fusion_scores(&ctx, Fusion::Occlusion, &x, 1e-3);
        let wall = make_box(Vec3::new(-1.0, -1.0, -1.2), Vec3::new(1.0, 1.0, -1.0));
        let n = ctx.body.mesh().vertices().len() as u32;
        let mut v = ctx.body.mesh().vertices().to_vec();
        v.extend_from_slice(wall.vertices());
        let mut f = ctx.body.mesh().faces().to_vec();
        f.extend(wall.faces().iter().map(|t| [t[0] + n, t[1] + n, t[2] + n]));
        ctx.occluder = Some(MeshIndex::new(TriangleMesh::from_parts_unchecked(v, f)).unwrap());
        let blocked = fusion_scores(&ctx, Fusion::Occlusion, &x, 1e-3);
        // The wall sits 0.7 in front of x for view 0 only.
        assert!((blocked[0] - 1.0 / 0.7).abs() < 1e-9, "{blocked:?}");
        assert!(open[0] > 100.0 * blocked[0]);
        assert_eq!(open[1], blocked[1]);
        // The body prior itself is untouched.
        assert_eq!(assemble_point_feature(&ctx, &x).unwrap()[0].d, ctx.body.signed_distance(&x).distance);
    }

    #[test]
    fn tuple_count_and_view_invariance() {
        let ctx = context(3);
        let t = assemble_point_feature(&ctx, &Vec3::new(0.1, 0.05, 0.2)).unwrap();
        assert_eq!(t.len(), 3);
        assert_eq!(t[0].d, t[1].d);
        assert_eq!(t[1].encoded(5), t[2].encoded(5));
        assert!((t[0].n.norm() - t[2].n.norm()).abs() < 1e-12);
        assert!((t[0].z - t[1].z).abs() > 1e-3);
        assert_eq!(assemble_point_feature(&context(1), &Vec3::zeros()).unwrap().len(), 1);
    }

    #[test]
    fn surface_point_has_zero_distance() {
        let ctx = context(1);
        let p = ctx.body.mesh().vertices()[7];
        let t = assemble_point_feature(&ctx, &p).unwrap();
        assert!(t[0].d.abs() < 1e-12 && t[0].encoded(5)[0].abs() < 1e-12);
    }

    #[test]
    fn features_are_finite() {
        let ctx = context(2);
        for k in 0..50 {
            let x = Vec3::new(k as f64 * 0.037 - 0.9, (k % 7) as f64 * 0.2 - 0.6, 0.3 - k as f64 * 0.01);
            for t in assemble_point_feature(&ctx, &x).unwrap() {
                assert!(t.f2d.iter().chain(&t.f3d).all(|v| v.is_finite()) && t.d.is_finite() && t.z.is_finite());
            }
        }
    }
}
