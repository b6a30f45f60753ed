//! Scene directories:
//!
//! ```text
//! gt.obj  body.json  params.json
//! view_0/{mask.pgm, keypoints.json, features.sesf, rig.json}
//! view_1/...
//! ```
//!
//! `body.json` is the body model, `params.json` its parameters plus the scene
//! seed and format version; `features.sesf` is the six-channel render of the
//! observed (clothed) surface.

use std::path::{Path, PathBuf};

use sesdf_core::body::BodyModel;
use sesdf_core::calib::Observation;
use sesdf_core::features::{render_feature_image, FeatureImage};
use sesdf_core::geometry::MeshIndex;
use sesdf_core::synth::Scene;

use crate::formats::{read_feature_image, read_obj, read_pgm, write_feature_image, write_obj, write_pgm};
use crate::json::{keypoints_from_file, keypoints_to_file, read_body_model, read_json, write_body_model, write_json, KeypointsFile, ParamsFile, RigFile};
use crate::FormatError;

pub const SCENE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct LoadedScene {
    pub model: BodyModel,
    pub scene: Scene,
    /// Observed feature image per view.
    pub features: Vec<FeatureImage>,
}

pub fn view_dir(dir: &Path, k: usize) -> PathBuf {
    dir.join(format!("view_{k}"))
}

/// Writes `scene` and the observed renders of its clothed surface.
pub fn export_scene(model: &BodyModel, scene: &Scene, dir: &Path) -> Result<(), FormatError> {
    let gt = MeshIndex::new(scene.gt.clone())?;
    let features: Vec<FeatureImage> = scene.rigs.iter().map(|r| render_feature_image(&gt, r)).collect();
    export_scene_with(model, scene, &features, dir)
}

pub fn export_scene_with(model: &BodyModel, scene: &Scene, features: &[FeatureImage], dir: &Path) -> Result<(), FormatError> {
    write_obj(&dir.join("gt.obj"), &scene.gt)?;
    write_body_model(&dir.join("body.json"), model)?;
    write_json(&dir.join("params.json"), &ParamsFile::new(SCENE_VERSION, scene.seed, &scene.params))?;
    for (k, ((rig, obs), img)) in scene.rigs.iter().zip(&scene.observations).zip(features).enumerate() {
        let vd = view_dir(dir, k);
        write_pgm(&vd.join("mask.pgm"), &obs.mask)?;
        write_json(&vd.join("keypoints.json"), &keypoints_to_file(model.joint_names(), &obs.keypoints))?;
        write_feature_image(&vd.join("features.sesf"), img)?;
        write_json(&vd.join("rig.json"), &RigFile::from_rig(rig))?;
    }
    Ok(())
}

pub fn load_scene(dir: &Path) -> Result<LoadedScene, FormatError> {
    let params_path = dir.join("params.json");
    let pf: ParamsFile = read_json(&params_path)?;
    if pf.version != SCENE_VERSION {
        return Err(FormatError::Version { path: params_path, found: pf.version, expected: SCENE_VERSION });
    }
    let model = read_body_model(&dir.join("body.json"))?;
    let gt = read_obj(&dir.join("gt.obj"))?;
    let params = pf.params();
    let out = model.lbs(&params).map_err(sesdf_core::Error::from)?;
    let mut rigs = Vec::new();
    let mut observations = Vec::new();
    let mut features = Vec::new();
    for k in 0.. {
        let vd = view_dir(dir, k);
        if !vd.is_dir() {
            break;
        }
        rigs.push(read_json::<RigFile>(&vd.join("rig.json"))?.rig());
        let kp: KeypointsFile = read_json(&vd.join("keypoints.json"))?;
        observations.push(Observation { keypoints: keypoints_from_file(model.joint_names(), &kp), mask: read_pgm(&vd.join("mask.pgm"))? });
        features.push(read_feature_image(&vd.join("features.sesf"))?);
    }
    if rigs.is_empty() {
        return Err(FormatError::parse(dir, "scene has no view_k directories"));
    }
    let scene = Scene { seed: pf.seed, params, body: out.mesh, joints: out.skeleton.joints, gt, rigs, observations };
    Ok(LoadedScene { model, scene, features })
}

#[cfg(test)]
mod tests {
    use super::*;
    use sesdf_core::body::make_procedural_template;
    use sesdf_core::synth::{generate_scene, SynthConfig};

    fn small() -> (BodyModel, Scene) {
        let model = make_procedural_template(0, 6);
        let cfg = SynthConfig { image_size: 64, ortho_scale: 28.0, rotation_jitter_deg: 5.0, ..Default::default() };
        let scene = generate_scene(&model, &cfg, 5).unwrap();
        (model, scene)
    }

    #[test]
    fn round_trip() {
        let (model, scene) = small();
        let dir = tempfile::tempdir().unwrap();
        export_scene(&model, &scene, dir.path()).unwrap();
        let back = load_scene(dir.path()).unwrap();
        assert_eq!(back.model, model);
        assert_eq!(back.scene, scene);
        assert_eq!(back.features.len(), 3);
    }

    #[test]
    fn missing_gt_and_bad_version() {
        let (model, scene) = small();
        let dir = tempfile::tempdir().unwrap();
        export_scene(&model, &scene, dir.path()).unwrap();
        let mut pf: ParamsFile = read_json(&dir.path().join("params.json")).unwrap();
        pf.version = SCENE_VERSION + 1;
        write_json(&dir.path().join("params.json"), &pf).unwrap();
        assert!(matches!(load_scene(dir.path()), Err(FormatError::Version { .. })));
        pf.version = SCENE_VERSION;
        write_json(&dir.path().join("params.json"), &pf).unwrap();
        std::fs::remove_file(dir.path().join("gt.obj")).unwrap();
        assert!(matches!(load_scene(dir.path()), Err(FormatError::Io { .. })));
    }
}
