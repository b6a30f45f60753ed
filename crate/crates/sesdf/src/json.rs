//! JSON documents: body model, body parameters, rigs, keypoints and reports.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{de::DeserializeOwned, Deserialize, Serialize};
use sesdf_core::body::{BodyModel, BodyModelParts, BodyParams};
use sesdf_core::calib::{FitReport, ViewRig};
use sesdf_core::geometry::TriangleMesh;
use sesdf_core::{Mat3, Vec3};

use crate::{read_file, write_file, FormatError};

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, FormatError> {
    serde_json::from_slice(&read_file(path)?).map_err(|source| FormatError::Json { path: path.to_path_buf(), source })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), FormatError> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|source| FormatError::Json { path: path.to_path_buf(), source })?;
    bytes.push(b'\n');
    write_file(path, &bytes)
}

fn v3(v: &Vec3) -> [f64; 3] {
    [v.x, v.y, v.z]
}

fn field(f: &[Vec3]) -> Vec<[f64; 3]> {
    f.iter().map(v3).collect()
}

fn unfield(f: &[[f64; 3]]) -> Vec<Vec3> {
    f.iter().map(|a| Vec3::from(*a)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BodyModelFile {
    pub template_vertices: Vec<[f64; 3]>,
    pub faces: Vec<[u32; 3]>,
    pub shape_basis: Vec<Vec<[f64; 3]>>,
    pub expr_basis: Vec<Vec<[f64; 3]>>,
    pub pose_basis: Vec<Vec<[f64; 3]>>,
    /// `(joint, vertex, weight)` triplets.
    pub joint_regressor: Vec<(usize, usize, f64)>,
    pub skin_weights: Vec<Vec<f64>>,
    /// `-1` marks the root.
    pub parents: Vec<i64>,
    #[serde(default)]
    pub joint_names: Vec<String>,
}

impl BodyModelFile {
    pub fn from_model(m: &BodyModel) -> Self {
        BodyModelFile {
            template_vertices: field(m.template().vertices()),
            faces: m.template().faces().to_vec(),
            shape_basis: m.shape_basis().iter().map(|f| field(f)).collect(),
            expr_basis: m.expr_basis().iter().map(|f| field(f)).collect(),
            pose_basis: m.pose_basis().iter().map(|f| field(f)).collect(),
            joint_regressor: m.joint_regressor().to_vec(),
            skin_weights: m.skin_weights().to_vec(),
            parents: m.parents().iter().map(|p| p.map_or(-1, |p| p as i64)).collect(),
            joint_names: m.joint_names().to_vec(),
        }
    }

    pub fn into_model(self, path: &Path) -> Result<BodyModel, FormatError> {
        let bad = |e: String| FormatError::parse(path, e);
        let template = TriangleMesh::new(unfield(&self.template_vertices), self.faces).map_err(|e| bad(e.to_string()))?;
        let parents = self
            .parents
            .iter()
            .map(|p| match *p {
                -1 => Ok(None),
                p if p >= 0 => Ok(Some(p as usize)),
                p => Err(bad(format!("bad parent index {p}"))),
            })
            .collect::<Result<_, _>>()?;
        BodyModel::new(BodyModelParts {
            template,
            shape_basis: self.shape_basis.iter().map(|f| unfield(f)).collect(),
            expr_basis: self.expr_basis.iter().map(|f| unfield(f)).collect(),
            pose_basis: self.pose_basis.iter().map(|f| unfield(f)).collect(),
            joint_regressor: self.joint_regressor,
            skin_weights: self.skin_weights,
            parents,
            joint_names: self.joint_names,
        })
        .map_err(|e| bad(e.to_string()))
    }
}

pub fn read_body_model(path: &Path) -> Result<BodyModel, FormatError> {
    read_json::<BodyModelFile>(path)?.into_model(path)
}

pub fn write_body_model(path: &Path, m: &BodyModel) -> Result<(), FormatError> {
    write_json(path, &BodyModelFile::from_model(m))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamsFile {
    pub version: u32,
    pub seed: u64,
    pub beta: Vec<f64>,
    pub theta: Vec<[f64; 3]>,
    pub phi: Vec<f64>,
    pub translation: [f64; 3],
}

impl ParamsFile {
    pub fn new(version: u32, seed: u64, p: &BodyParams) -> Self {
        ParamsFile { version, seed, beta: p.beta.clone(), theta: field(&p.theta), phi: p.phi.clone(), translation: v3(&p.translation) }
    }

    pub fn params(&self) -> BodyParams {
        BodyParams { beta: self.beta.clone(), theta: unfield(&self.theta), phi: self.phi.clone(), translation: Vec3::from(self.translation) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RigFile {
    /// Row-major model-to-camera rotation.
    pub rotation: [[f64; 3]; 3],
    pub translation: [f64; 3],
    pub ortho_scale: f64,
    pub width: usize,
    pub height: usize,
}

impl RigFile {
    pub fn from_rig(r: &ViewRig) -> Self {
        let m = &r.rotation;
        RigFile {
            rotation: [[m[(0, 0)], m[(0, 1)], m[(0, 2)]], [m[(1, 0)], m[(1, 1)], m[(1, 2)]], [m[(2, 0)], m[(2, 1)], m[(2, 2)]]],
            translation: v3(&r.translation),
            ortho_scale: r.ortho_scale,
            width: r.width,
            height: r.height,
        }
    }

    pub fn rig(&self) -> ViewRig {
        let r = Mat3::from_fn(|i, j| self.rotation[i][j]);
        ViewRig::new(r, Vec3::from(self.translation), self.ortho_scale, self.width, self.height)
    }
}

/// Joint name to `[u, v, visible]`.
pub type KeypointsFile = BTreeMap<String, [f64; 3]>;

pub fn keypoints_to_file(names: &[String], kps: &[Option<(f64, f64)>]) -> KeypointsFile {
    names
        .iter()
        .zip(kps)
        .map(|(n, k)| (n.clone(), match k {
            Some((u, v)) => [*u, *v, 1.0],
            None => [0.0, 0.0, 0.0],
        }))
        .collect()
}

/// Keypoints in `names` order; joints missing from the file are invisible.
pub fn keypoints_from_file(names: &[String], file: &KeypointsFile) -> Vec<Option<(f64, f64)>> {
    names
        .iter()
        .map(|n| file.get(n).and_then(|k| (k[2] > 0.5).then_some((k[0], k[1]))))
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct ViewReportJson {
    pub keypoint_rmse: f64,
    pub iou: f64,
    pub visible_keypoints: usize,
    pub keypoint_free: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct FitReportJson {
    pub views: Vec<ViewReportJson>,
    pub mean_iou: f64,
    pub iterations: usize,
    pub initial_objective: f64,
    pub final_objective: f64,
    /// Per view: rotation error to the reference rigs in degrees, when known.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rotation_error_deg: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub translation_error: Option<Vec<f64>>,
}

impl FitReportJson {
    pub fn new(r: &FitReport) -> Self {
        FitReportJson {
            views: r
                .views
                .iter()
                .map(|v| ViewReportJson { keypoint_rmse: v.keypoint_rmse, iou: v.iou, visible_keypoints: v.visible_keypoints, keypoint_free: v.keypoint_free })
                .collect(),
            mean_iou: r.mean_iou(),
            iterations: r.iterations,
            initial_objective: r.initial_objective,
            final_objective: r.final_objective,
            rotation_error_deg: None,
            translation_error: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconReport {
    pub grid_res: usize,
    pub eval_seconds: f64,
    pub triangles: usize,
    pub views: usize,
    pub fusion: String,
    pub extract_from: String,
    /// Grid values in ten equal bins over `[0, 1]` (occupancy) or over the
    /// value range (signed distance).
    pub histogram: Vec<usize>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use sesdf_core::body::make_procedural_template;
    use sesdf_core::math::yaw;

    #[test]
    fn body_model_round_trip() {
        let m = make_procedural_template(1, 6);
        let file = BodyModelFile::from_model(&m);
        let text = serde_json::to_string(&file).unwrap();
        let back: BodyModelFile = serde_json::from_str(&text).unwrap();
        assert_eq!(back.into_model(Path::new("b.json")).unwrap(), m);
    }

    #[test]
    fn rig_round_trip() {
        let r = ViewRig::new(yaw(0.7), Vec3::new(0.1, -0.2, 3.0), 200.0, 64, 48);
        let text = serde_json::to_string(&RigFile::from_rig(&r)).unwrap();
        assert_eq!(serde_json::from_str::<RigFile>(&text).unwrap().rig(), r);
    }

    #[test]
    fn keypoints_visibility() {
        let names: Vec<String> = ["a", "b"].iter().map(|s| s.to_string()).collect();
        let kp = vec![Some((1.5, 2.0)), None];
        let f = keypoints_to_file(&names, &kp);
        assert_eq!(keypoints_from_file(&names, &f), kp);
        assert_eq!(keypoints_from_file(&["c".to_string()], &f), vec![None]);
    }
}
