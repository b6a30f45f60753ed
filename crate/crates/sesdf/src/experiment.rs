//! Synthetic train/test experiments shared by the command line and the
//! acceptance suite: dataset generation, training-point extraction, model
//! training, held-out evaluation and the occluded-view fusion ablation.

use std::ops::Range;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use sesdf_core::body::{make_procedural_template, BodyModel};
use sesdf_core::calib::ViewRig;
use sesdf_core::features::{dominant_parts, render_feature_image, FeatureImage, PointContext, DEFAULT_VOLUME_RESOLUTION};
use sesdf_core::fusion::Fusion;
use sesdf_core::geometry::{make_box, MeshIndex, TriangleMesh};
use sesdf_core::metrics::{chamfer, ChamferReport};
use sesdf_core::nn::{train, EpochLoss, ModelConfig, SceneSamples, SesdfModel, TrainConfig, Variant};
use sesdf_core::pipeline::{reconstruct, scene_context, training_samples, ExtractFrom, ReconConfig, Reconstruction, SampleConfig};
use sesdf_core::synth::{generate_scene, Scene, SynthConfig};
use sesdf_core::Vec3;

pub const TEMPLATE_SEED: u64 = 0;
pub const TEMPLATE_RESOLUTION: usize = 8;

/// The procedural body model every synthetic scene uses.
pub fn default_body_model() -> BodyModel {
    make_procedural_template(TEMPLATE_SEED, TEMPLATE_RESOLUTION)
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub synth: SynthConfig,
    pub train_seeds: Range<u64>,
    pub test_seeds: Range<u64>,
    pub samples: SampleConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub recon_resolution: usize,
    pub metric_samples: usize,
    pub volume_resolution: usize,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            synth: SynthConfig::default(),
            train_seeds: 0..24,
            test_seeds: 1000..1008,
            samples: SampleConfig::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            recon_resolution: 128,
            metric_samples: sesdf_core::metrics::DEFAULT_METRIC_SAMPLES,
            volume_resolution: DEFAULT_VOLUME_RESOLUTION,
            seed: 0,
        }
    }
}

pub fn generate_scenes(model: &BodyModel, synth: &SynthConfig, seeds: Range<u64>) -> Result<Vec<Scene>, sesdf_core::Error> {
    seeds.collect::<Vec<_>>().par_iter().map(|s| generate_scene(model, synth, *s)).collect()
}

/// Observed renders of the clothed surface under the scene's rigs.
pub fn observed_features(scene: &Scene) -> Result<Vec<FeatureImage>, sesdf_core::Error> {
    let gt = MeshIndex::new(scene.gt.clone())?;
    Ok(scene.rigs.iter().map(|r| render_feature_image(&gt, r)).collect())
}

/// Featurization context using the scene's body and rigs.
pub fn context(model: &BodyModel, scene: &Scene, observed: &[FeatureImage], volume_resolution: usize) -> Result<PointContext, sesdf_core::Error> {
    scene_context(scene.body.clone(), &dominant_parts(model), observed, &scene.rigs, volume_resolution)
}

/// Training points for every scene; scene `i` samples with seed
/// `seed ^ scene.seed` so results do not depend on scheduling.
pub fn prepare_samples(model: &BodyModel, scenes: &[Scene], cfg: &ExperimentConfig) -> Result<Vec<SceneSamples>, sesdf_core::Error> {
    scenes
        .par_iter()
        .map(|scene| {
            let observed = observed_features(scene)?;
            let ctx = context(model, scene, &observed, cfg.volume_resolution)?;
            let gt = MeshIndex::new(scene.gt.clone())?;
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ scene.seed.wrapping_mul(0x9e37_79b9));
            training_samples(&ctx, &gt, &cfg.samples, &mut rng)
        })
        .collect()
}

pub fn train_variant(variant: Variant, samples: &[SceneSamples], cfg: &ExperimentConfig, on_epoch: impl FnMut(&EpochLoss)) -> Result<(SesdfModel, Vec<EpochLoss>), sesdf_core::Error> {
    let mut net = SesdfModel::new(ModelConfig { variant, ..cfg.model.clone() }, cfg.seed)?;
    let curve = train(&mut net, samples, &TrainConfig { seed: cfg.seed, ..cfg.train.clone() }, on_epoch)?;
    Ok((net, curve))
}

/// Restricts a context to a subset of its views.
pub fn select_views(ctx: &PointContext, views: &[usize]) -> PointContext {
    let mut out = ctx.clone();
    out.views = views.iter().map(|&v| ctx.views[v].clone()).collect();
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SceneScore {
    pub seed: u64,
    pub chamfer: f64,
    pub p2s: f64,
    pub triangles: usize,
    pub seconds: f64,
}

/// Reconstruction of one context and its distances to `gt`.
pub fn score(net: &SesdfModel, ctx: &PointContext, gt: &MeshIndex, recon: &ReconConfig, metric_samples: usize, seed: u64) -> Result<(Reconstruction, SceneScore), sesdf_core::Error> {
    let t = Instant::now();
    let rec = reconstruct(net, ctx, recon)?;
    let seconds = t.elapsed().as_secs_f64();
    let pred = MeshIndex::new(rec.mesh.clone())?;
    let c: ChamferReport = chamfer(&pred, gt, metric_samples, &mut ChaCha8Rng::seed_from_u64(seed))?;
    let triangles = rec.mesh.faces().len();
    Ok((rec, SceneScore { seed, chamfer: c.chamfer, p2s: c.pred_to_gt, triangles, seconds }))
}

pub fn mean_chamfer(scores: &[SceneScore]) -> f64 {
    scores.iter().map(|s| s.chamfer).sum::<f64>() / scores.len().max(1) as f64
}

pub fn mean_p2s(scores: &[SceneScore]) -> f64 {
    scores.iter().map(|s| s.p2s).sum::<f64>() / scores.len().max(1) as f64
}

/// A held-out scene with its ground-truth index and observed renders.
pub struct TestScene {
    pub scene: Scene,
    pub gt: MeshIndex,
    pub observed: Vec<FeatureImage>,
    /// Known scene geometry besides the body that hides parts of the views.
    pub occluders: Vec<TriangleMesh>,
}

impl TestScene {
    pub fn new(scene: Scene) -> Result<Self, sesdf_core::Error> {
        let observed = observed_features(&scene)?;
        TestScene::with_observed(scene, observed)
    }

    pub fn with_observed(scene: Scene, observed: Vec<FeatureImage>) -> Result<Self, sesdf_core::Error> {
        let gt = MeshIndex::new(scene.gt.clone())?;
        Ok(TestScene { scene, gt, observed, occluders: Vec::new() })
    }

    pub fn context(&self, model: &BodyModel, volume_resolution: usize) -> Result<PointContext, sesdf_core::Error> {
        let mut ctx = context(model, &self.scene, &self.observed, volume_resolution)?;
        if !self.occluders.is_empty() {
            let all = self.occluders.iter().fold(self.scene.body.clone(), |acc, o| union(&acc, o));
            ctx.occluder = Some(MeshIndex::new(all)?);
        }
        Ok(ctx)
    }
}

/// Scores `net` on every test scene with the given views, fusion and field.
pub fn evaluate(
    net: &SesdfModel,
    model: &BodyModel,
    tests: &[TestScene],
    views: &[usize],
    fusion: Fusion,
    cfg: &ExperimentConfig,
) -> Result<Vec<SceneScore>, sesdf_core::Error> {
    let recon = ReconConfig { resolution: cfg.recon_resolution, fusion, extract_from: ExtractFrom::Occupancy };
    tests
        .par_iter()
        .map(|t| {
            let ctx = select_views(&t.context(model, cfg.volume_resolution)?, views);
            Ok(score(net, &ctx, &t.gt, &recon, cfg.metric_samples, t.scene.seed)?.1)
        })
        .collect()
}

/// Flat box standing between the subject and `rig`'s camera and covering
/// the image columns that hold `fraction` of the subject's silhouette
/// pixels (starting from the left image edge).
pub fn blocker(observed: &FeatureImage, rig: &ViewRig, subject: &TriangleMesh, fraction: f64) -> Option<TriangleMesh> {
    let mask = observed.mask();
    let total = mask.count();
    if total == 0 {
        return None;
    }
    let target = (fraction.clamp(0.0, 1.0) * total as f64).round() as usize;
    let mut acc = 0;
    let mut split = 0;
    for u in 0..mask.width {
        if acc >= target {
            break;
        }
        acc += (0..mask.height).filter(|&v| mask.get(u, v)).count();
        split = u + 1;
    }
    // Camera-frame box: x over the covered columns, y over the full image,
    // a thin slab in front of the subject's nearest point.
    let s = rig.ortho_scale;
    let x0 = (0.0 - rig.width as f64 / 2.0) / s;
    let x1 = (split as f64 - rig.width as f64 / 2.0) / s;
    let y0 = (0.0 - rig.height as f64 / 2.0) / s;
    let y1 = (rig.height as f64 - rig.height as f64 / 2.0) / s;
    let near = subject.vertices().iter().map(|p| rig.to_camera(p).z).fold(f64::INFINITY, f64::min);
    let slab = make_box(Vec3::new(x0, y0, near - 0.3), Vec3::new(x1, y1, near - 0.2));
    slab.map_vertices(|c| rig.from_camera(c)).ok()
}

fn union(a: &TriangleMesh, b: &TriangleMesh) -> TriangleMesh {
    let n = a.vertices().len() as u32;
    let mut v = a.vertices().to_vec();
    v.extend_from_slice(b.vertices());
    let mut f = a.faces().to_vec();
    f.extend(b.faces().iter().map(|t| [t[0] + n, t[1] + n, t[2] + n]));
    TriangleMesh::from_parts_unchecked(v, f)
}

/// Copy of `test` with a blocker over `fraction` of view `view`'s
/// silhouette: the view is re-rendered with it and it joins the occluders.
pub fn occlude(test: &TestScene, view: usize, fraction: f64) -> Result<TestScene, sesdf_core::Error> {
    let mut out = TestScene { scene: test.scene.clone(), gt: test.gt.clone(), observed: test.observed.clone(), occluders: test.occluders.clone() };
    let rig = &test.scene.rigs[view];
    if let Some(b) = blocker(&test.observed[view], rig, &test.scene.gt, fraction) {
        let both = MeshIndex::new(union(&test.scene.gt, &b))?;
        out.observed[view] = render_feature_image(&both, rig);
        out.occluders.push(b);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusionRow {
    pub fusion: Fusion,
    pub chamfer: f64,
    pub p2s: f64,
}

/// Mean metrics of every fusion strategy over `tests`, each scene with view
/// `occluded_view` half hidden behind a blocker.
pub fn fusion_ablation(net: &SesdfModel, model: &BodyModel, tests: &[TestScene], occluded_view: usize, cfg: &ExperimentConfig) -> Result<Vec<FusionRow>, sesdf_core::Error> {
    let occluded: Vec<TestScene> = tests.iter().map(|t| occlude(t, occluded_view, 0.5)).collect::<Result<_, _>>()?;
    let views: Vec<usize> = (0..cfg.synth.views).collect();
    Fusion::ALL
        .iter()
        .map(|&f| {
            let s = evaluate(net, model, &occluded, &views, f, cfg)?;
            Ok(FusionRow { fusion: f, chamfer: mean_chamfer(&s), p2s: mean_p2s(&s) })
        })
        .collect()
}

pub fn fusion_csv(rows: &[FusionRow]) -> String {
    let mut s = String::from("fusion,chamfer,p2s\n");
    for r in rows {
        s.push_str(&format!("{},{},{}\n", r.fusion.name(), r.chamfer, r.p2s));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blocker_covers_half_the_silhouette() {
        let model = default_body_model();
        let synth = SynthConfig { image_size: 128, ortho_scale: 55.0, ..Default::default() };
        let scene = generate_scene(&model, &synth, 2).unwrap();
        let test = TestScene::new(scene).unwrap();
        let obs = &test.observed;
        let occluded = occlude(&test, 1, 0.5).unwrap();
        let occ = &occluded.observed;
        assert_eq!(occ[0], obs[0]);
        assert_eq!(occluded.occluders.len(), 1);
        let (m0, m1) = (obs[1].mask(), occ[1].mask());
        // Every covered subject pixel now shows the blocker, which is nearer.
        let mut covered = 0;
        for v in 0..m0.height {
            for u in 0..m0.width {
                if m0.get(u, v) && occ[1].get(1, u, v) < obs[1].get(1, u, v) {
                    covered += 1;
                }
            }
        }
        let frac = covered as f64 / m0.count() as f64;
        assert!((frac - 0.5).abs() < 0.1, "{frac}");
        assert!(m1.count() > m0.count());
    }
}
