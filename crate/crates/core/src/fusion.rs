//! Multi-view aggregation weights: occlusion-aware depth gaps plus the
//! average, normal-angle and body-visibility baselines.

use alloc::vec::Vec;

#[allow(unused_imports)] // needed for f64 math under no_std
use num_traits::Float as _;

use crate::calib::ViewRig;
use crate::geometry::MeshIndex;
use crate::math::Vec3;
use crate::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Fusion {
    Occlusion,
    Average,
    Normal,
    Visibility,
}

impl Fusion {
    pub const ALL: [Fusion; 4] = [Fusion::Occlusion, Fusion::Average, Fusion::Normal, Fusion::Visibility];

    pub fn name(self) -> &'static str {
        match self {
            Fusion::Occlusion => "occlusion",
            Fusion::Average => "average",
            Fusion::Normal => "normal",
            Fusion::Visibility => "visibility",
        }
    }

    pub fn parse(s: &str) -> Option<Fusion> {
        Fusion::ALL.into_iter().find(|f| f.name() == s)
    }
}

/// Normalized per-view weights. `fallback` marks a strategy that had no
/// usable view and returned the plain average instead.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionWeights {
    pub weights: Vec<f64>,
    pub fallback: bool,
}

impl FusionWeights {
    pub fn uniform(n: usize) -> Self {
        FusionWeights { weights: alloc::vec![1.0 / n as f64; n], fallback: false }
    }

    /// Divides raw non-negative scores by their sum; all-zero (or
    /// non-finite) scores fall back to uniform.
    pub fn normalize(raw: &[f64]) -> Result<Self, Error> {
        if raw.is_empty() {
            return Err(Error::InvalidArgument("fusion needs at least one view".into()));
        }
        let sum: f64 = raw.iter().sum();
        if !(sum > 0.0 && sum.is_finite()) || raw.iter().any(|w| !(*w >= 0.0)) {
            let mut u = FusionWeights::uniform(raw.len());
            u.fallback = true;
            return Ok(u);
        }
        Ok(FusionWeights { weights: raw.iter().map(|w| w / sum).collect(), fallback: false })
    }
}

/// Depth-gap floor: 1e-3 of the body's bounding-box diagonal.
pub fn occlusion_epsilon(body: &MeshIndex) -> f64 {
    1e-3 * body.mesh().bounds().diagonal()
}

/// `1 / max(|Z_i(x) - Z_i(x')|, eps)` where `x'` is the body hit nearest
/// the image along the view ray through `x`; a miss counts as visible.
pub fn occlusion_weight(x: &Vec3, rig: &ViewRig, body: &MeshIndex, eps: f64) -> f64 {
    1.0 / depth_gap(x, rig, body).max(eps)
}

/// `|Z_i(x) - Z_i(x')|`, zero on a miss.
pub fn depth_gap(x: &Vec3, rig: &ViewRig, body: &MeshIndex) -> f64 {
    let fwd = rig.forward();
    let b = body.mesh().bounds();
    let back = (x - b.center()).norm() + b.diagonal() + 1.0;
    let origin = x - fwd * back;
    match body.ray_nearest_hit(&origin, &fwd) {
        Some(hit) => (rig.to_camera(x).z - rig.to_camera(&hit.point).z).abs(),
        None => 0.0,
    }
}

/// `tanh(angle(v_n, v_d))`; zero when either vector vanishes.
pub fn normal_weight(v_n: &Vec3, v_d: &Vec3) -> f64 {
    let den = v_n.norm() * v_d.norm();
    if !(den > 0.0) {
        return 0.0;
    }
    (v_n.dot(v_d) / den).clamp(-1.0, 1.0).acos().tanh()
}

/// True when nothing on the body lies between vertex `p` and view `rig`.
pub fn vertex_visible(p: &Vec3, rig: &ViewRig, body: &MeshIndex) -> bool {
    let toward = -rig.forward();
    let offset = 1e-6 * body.mesh().bounds().diagonal();
    let origin = p + toward * offset;
    body.ray_nearest_hit(&origin, &toward).is_none()
}

/// Weights of `strategy` for point `x` seen by `rigs`.
pub fn fusion_weights(strategy: Fusion, x: &Vec3, rigs: &[ViewRig], body: &MeshIndex) -> Result<FusionWeights, Error> {
    if rigs.is_empty() {
        return Err(Error::InvalidArgument("fusion needs at least one view".into()));
    }
    match strategy {
        Fusion::Average => Ok(FusionWeights::uniform(rigs.len())),
        Fusion::Occlusion => {
            let eps = occlusion_epsilon(body);
            let raw: Vec<f64> = rigs.iter().map(|r| occlusion_weight(x, r, body, eps)).collect();
            FusionWeights::normalize(&raw)
        }
        Fusion::Normal => {
            let v = body.nearest_vertex(x);
            let n = body.mesh().vertex_normals()[v];
            let raw: Vec<f64> = rigs.iter().map(|r| normal_weight(&n, &r.forward())).collect();
            FusionWeights::normalize(&raw)
        }
        Fusion::Visibility => {
            let p = body.mesh().vertices()[body.nearest_vertex(x)];
            let raw: Vec<f64> = rigs.iter().map(|r| if vertex_visible(&p, r, body) { 1.0 } else { 0.0 }).collect();
            FusionWeights::normalize(&raw)
        }
    }
}

/// `Σ w_i t_i` over equally long per-view vectors.
pub fn fuse(tuples: &[&[f64]], weights: &FusionWeights) -> Result<Vec<f64>, Error> {
    let Some(first) = tuples.first() else {
        return Err(Error::InvalidArgument("fusion needs at least one view".into()));
    };
    if tuples.len() != weights.weights.len() || tuples.iter().any(|t| t.len() != first.len()) {
        return Err(Error::InvalidArgument("mismatched fusion inputs".into()));
    }
    if tuples.len() == 1 {
        return Ok(first.to_vec());
    }
    let mut out = alloc::vec![0.0; first.len()];
    for (t, w) in tuples.iter().zip(&weights.weights) {
        for (o, v) in out.iter_mut().zip(t.iter()) {
            *o += w * v;
        }
    }
    Ok(out)
}
