//! Linear-blend-skinned parametric body model.

mod template;

use alloc::string::String;
use alloc::vec::Vec;

use crate::geometry::{GeometryError, TriangleMesh};
use crate::math::{rotation_from_axis_angle, Mat3, Vec3};

pub use template::{make_procedural_template, JOINT_NAMES, MIN_TEMPLATE_RESOLUTION};

/// Tolerance on skin-weight and regressor row sums.
pub const ROW_SUM_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BodyModelError {
    #[error("{what}: expected {expected}, got {got}")]
    DimensionMismatch { what: &'static str, expected: usize, got: usize },
    #[error("skin weight row {row} sums to {sum}")]
    SkinWeightRow { row: usize, sum: f64 },
    #[error("skin weight row {row} has a negative or non-finite entry")]
    BadSkinWeight { row: usize },
    #[error("joint regressor row {joint} sums to {sum}")]
    RegressorRow { joint: usize, sum: f64 },
    #[error("joint regressor entry {entry} references joint {joint}, vertex {vertex}")]
    RegressorIndex { entry: usize, joint: usize, vertex: usize },
    #[error("kinematic tree: {0}")]
    Parents(String),
    #[error("non-finite parameter {0}")]
    NonFiniteParam(&'static str),
    #[error("{0}")]
    Geometry(#[from] GeometryError),
}

/// Template, blendshape bases, joint regressor, skin weights and kinematic
/// tree. Immutable once constructed; [`BodyModel::new`] validates.
#[derive(Debug, Clone, PartialEq)]
pub struct BodyModel {
    template: TriangleMesh,
    shape_basis: Vec<Vec<Vec3>>,
    expr_basis: Vec<Vec<Vec3>>,
    /// One field per pose feature: 9 per non-root joint, row-major `R - I`.
    pose_basis: Vec<Vec<Vec3>>,
    /// `(joint, vertex, weight)` triplets.
    joint_regressor: Vec<(usize, usize, f64)>,
    /// Dense `V x J`.
    skin_weights: Vec<Vec<f64>>,
    /// `None` for the root. Parents precede their children.
    parents: Vec<Option<usize>>,
    joint_names: Vec<String>,
    // Derived: nonzero skin weights per vertex, and the joint regressor
    // applied to the template and to every basis field.
    sparse_weights: Vec<Vec<(usize, f64)>>,
    rest_joints: Vec<Vec3>,
    joint_shape_basis: Vec<Vec<Vec3>>,
    joint_expr_basis: Vec<Vec<Vec3>>,
}

/// Shape `beta`, per-joint axis-angle `theta` (root first), expression `phi`
/// and a global translation applied after skinning.
#[derive(Debug, Clone, PartialEq)]
pub struct BodyParams {
    pub beta: Vec<f64>,
    pub theta: Vec<Vec3>,
    pub phi: Vec<f64>,
    pub translation: Vec3,
}

impl BodyParams {
    pub fn zeros(model: &BodyModel) -> Self {
        BodyParams {
            beta: alloc::vec![0.0; model.num_shape()],
            theta: alloc::vec![Vec3::zeros(); model.num_joints()],
            phi: alloc::vec![0.0; model.num_expr()],
            translation: Vec3::zeros(),
        }
    }
}

/// Rigid per-joint transforms after posing.
#[derive(Debug, Clone, PartialEq)]
pub struct Skeleton {
    /// Unposed joint locations `J(beta, phi)`.
    pub rest_joints: Vec<Vec3>,
    /// Accumulated rotation of each joint.
    pub global_rotations: Vec<Mat3>,
    /// Posed joint locations, translation included.
    pub joints: Vec<Vec3>,
}

impl Skeleton {
    /// Maps a rest-pose point bound rigidly to joint `j`.
    #[inline]
    pub fn transform(&self, j: usize, x: &Vec3) -> Vec3 {
        self.global_rotations[j] * (x - self.rest_joints[j]) + self.joints[j]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LbsOutput {
    pub mesh: TriangleMesh,
    pub skeleton: Skeleton,
}

pub struct BodyModelParts {
    pub template: TriangleMesh,
    pub shape_basis: Vec<Vec<Vec3>>,
    pub expr_basis: Vec<Vec<Vec3>>,
    pub pose_basis: Vec<Vec<Vec3>>,
    pub joint_regressor: Vec<(usize, usize, f64)>,
    pub skin_weights: Vec<Vec<f64>>,
    pub parents: Vec<Option<usize>>,
    /// Empty for generated `joint_k` names.
    pub joint_names: Vec<String>,
}

impl BodyModel {
    pub fn new(parts: BodyModelParts) -> Result<Self, BodyModelError> {
        let BodyModelParts { template, shape_basis, expr_basis, pose_basis, joint_regressor, skin_weights, parents, joint_names } =
            parts;
        let nv = template.vertices().len();
        let nj = parents.len();
        if template.is_empty() {
            return Err(GeometryError::EmptyMesh.into());
        }
        if nj == 0 {
            return Err(BodyModelError::Parents("no joints".into()));
        }
        if parents[0].is_some() {
            return Err(BodyModelError::Parents("joint 0 must be the root".into()));
        }
        for (j, p) in parents.iter().enumerate().skip(1) {
            match p {
                None => return Err(BodyModelError::Parents(alloc::format!("joint {j} is a second root"))),
                Some(p) if *p >= j => {
                    return Err(BodyModelError::Parents(alloc::format!("joint {j} has parent {p}; parents must precede children")))
                }
                _ => {}
            }
        }
        for (what, basis) in [("shape basis", &shape_basis), ("expression basis", &expr_basis), ("pose basis", &pose_basis)] {
            for field in basis.iter() {
                if field.len() != nv {
                    return Err(BodyModelError::DimensionMismatch { what, expected: nv, got: field.len() });
                }
            }
        }
        if pose_basis.len() != 9 * (nj - 1) {
            return Err(BodyModelError::DimensionMismatch { what: "pose basis fields", expected: 9 * (nj - 1), got: pose_basis.len() });
        }
        if skin_weights.len() != nv {
            return Err(BodyModelError::DimensionMismatch { what: "skin weight rows", expected: nv, got: skin_weights.len() });
        }
        let mut sparse_weights = Vec::with_capacity(nv);
        for (row, w) in skin_weights.iter().enumerate() {
            if w.len() != nj {
                return Err(BodyModelError::DimensionMismatch { what: "skin weight columns", expected: nj, got: w.len() });
            }
            if w.iter().any(|x| !x.is_finite() || *x < 0.0) {
                return Err(BodyModelError::BadSkinWeight { row });
            }
            let sum: f64 = w.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(BodyModelError::SkinWeightRow { row, sum });
            }
            sparse_weights.push(w.iter().enumerate().filter(|(_, x)| **x > 0.0).map(|(j, x)| (j, *x)).collect());
        }
        let mut row_sums = alloc::vec![0.0; nj];
        for (entry, &(joint, vertex, w)) in joint_regressor.iter().enumerate() {
            if joint >= nj || vertex >= nv || !w.is_finite() {
                return Err(BodyModelError::RegressorIndex { entry, joint, vertex });
            }
            row_sums[joint] += w;
        }
        if let Some((joint, &sum)) = row_sums.iter().enumerate().find(|(_, s)| (**s - 1.0).abs() > ROW_SUM_TOL) {
            return Err(BodyModelError::RegressorRow { joint, sum });
        }
        if !joint_names.is_empty() && joint_names.len() != nj {
            return Err(BodyModelError::DimensionMismatch { what: "joint names", expected: nj, got: joint_names.len() });
        }
        let joint_names =
            if joint_names.is_empty() { (0..nj).map(|j| alloc::format!("joint_{j}")).collect() } else { joint_names };

        let regress = |field: &[Vec3]| {
            let mut out = alloc::vec![Vec3::zeros(); nj];
            for &(j, v, w) in &joint_regressor {
                out[j] += field[v] * w;
            }
            out
        };
        let rest_joints = regress(template.vertices());
        let joint_shape_basis = shape_basis.iter().map(|f| regress(f)).collect();
        let joint_expr_basis = expr_basis.iter().map(|f| regress(f)).collect();
        Ok(BodyModel {
            template,
            shape_basis,
            expr_basis,
            pose_basis,
            joint_regressor,
            skin_weights,
            parents,
            joint_names,
            sparse_weights,
            rest_joints,
            joint_shape_basis,
            joint_expr_basis,
        })
    }

    pub fn template(&self) -> &TriangleMesh {
        &self.template
    }
    pub fn shape_basis(&self) -> &[Vec<Vec3>] {
        &self.shape_basis
    }
    pub fn expr_basis(&self) -> &[Vec<Vec3>] {
        &self.expr_basis
    }
    pub fn pose_basis(&self) -> &[Vec<Vec3>] {
        &self.pose_basis
    }
    pub fn joint_regressor(&self) -> &[(usize, usize, f64)] {
        &self.joint_regressor
    }
    pub fn skin_weights(&self) -> &[Vec<f64>] {
        &self.skin_weights
    }
    pub fn parents(&self) -> &[Option<usize>] {
        &self.parents
    }
    pub fn joint_names(&self) -> &[String] {
        &self.joint_names
    }
    pub fn num_joints(&self) -> usize {
        self.parents.len()
    }
    pub fn num_shape(&self) -> usize {
        self.shape_basis.len()
    }
    pub fn num_expr(&self) -> usize {
        self.expr_basis.len()
    }
    pub fn num_vertices(&self) -> usize {
        self.template.vertices().len()
    }

    /// Joint regressor applied to each shape field.
    pub fn joint_shape_basis(&self) -> &[Vec<Vec3>] {
        &self.joint_shape_basis
    }

    /// Joint regressor applied to each expression field.
    pub fn joint_expr_basis(&self) -> &[Vec<Vec3>] {
        &self.joint_expr_basis
    }

    pub fn check_params(&self, p: &BodyParams) -> Result<(), BodyModelError> {
        if p.beta.len() != self.num_shape() {
            return Err(BodyModelError::DimensionMismatch { what: "beta", expected: self.num_shape(), got: p.beta.len() });
        }
        if p.phi.len() != self.num_expr() {
            return Err(BodyModelError::DimensionMismatch { what: "phi", expected: self.num_expr(), got: p.phi.len() });
        }
        if p.theta.len() != self.num_joints() {
            return Err(BodyModelError::DimensionMismatch { what: "theta", expected: self.num_joints(), got: p.theta.len() });
        }
        if p.beta.iter().chain(&p.phi).any(|x| !x.is_finite()) {
            return Err(BodyModelError::NonFiniteParam("beta/phi"));
        }
        if p.theta.iter().any(|w| !w.iter().all(|x| x.is_finite())) {
            return Err(BodyModelError::NonFiniteParam("theta"));
        }
        if !p.translation.iter().all(|x| x.is_finite()) {
            return Err(BodyModelError::NonFiniteParam("translation"));
        }
        Ok(())
    }

    /// Unposed joints `J(beta, phi)`.
    pub fn joints_rest(&self, beta: &[f64], phi: &[f64]) -> Vec<Vec3> {
        let mut out = self.rest_joints.clone();
        for (c, field) in beta.iter().zip(&self.joint_shape_basis).chain(phi.iter().zip(&self.joint_expr_basis)) {
            if *c != 0.0 {
                for (o, f) in out.iter_mut().zip(field) {
                    *o += f * *c;
                }
            }
        }
        out
    }

    /// Composes per-joint rotations along the kinematic tree.
    pub fn skeleton(&self, params: &BodyParams) -> Result<Skeleton, BodyModelError> {
        self.check_params(params)?;
        let rest_joints = self.joints_rest(&params.beta, &params.phi);
        Ok(self.pose_skeleton(rest_joints, &params.theta, &params.translation))
    }

    fn pose_skeleton(&self, rest_joints: Vec<Vec3>, theta: &[Vec3], translation: &Vec3) -> Skeleton {
        let nj = self.num_joints();
        let mut global_rotations = Vec::with_capacity(nj);
        let mut joints = Vec::with_capacity(nj);
        for j in 0..nj {
            let r = rotation_from_axis_angle(&theta[j]);
            match self.parents[j] {
                None => {
                    global_rotations.push(r);
                    joints.push(rest_joints[j] + translation);
                }
                Some(p) => {
                    let g = global_rotations[p] * r;
                    let x = global_rotations[p] * (rest_joints[j] - rest_joints[p]) + joints[p];
                    global_rotations.push(g);
                    joints.push(x);
                }
            }
        }
        Skeleton { rest_joints, global_rotations, joints }
    }

    /// Shaped template plus expression and pose correctives, before skinning.
    pub fn blended_template(&self, params: &BodyParams) -> Result<Vec<Vec3>, BodyModelError> {
        self.check_params(params)?;
        let mut v = self.template.vertices().to_vec();
        let mut add = |c: f64, field: &[Vec3]| {
            if c != 0.0 {
                for (o, f) in v.iter_mut().zip(field) {
                    *o += f * c;
                }
            }
        };
        for (c, f) in params.beta.iter().zip(&self.shape_basis) {
            add(*c, f);
        }
        for (c, f) in params.phi.iter().zip(&self.expr_basis) {
            add(*c, f);
        }
        for (c, f) in pose_features(&params.theta).iter().zip(&self.pose_basis) {
            add(*c, f);
        }
        Ok(v)
    }

    pub fn lbs(&self, params: &BodyParams) -> Result<LbsOutput, BodyModelError> {
        let blended = self.blended_template(params)?;
        let skeleton = self.skeleton(params)?;
        let vertices = blended
            .iter()
            .zip(&self.sparse_weights)
            .map(|(v, w)| w.iter().fold(Vec3::zeros(), |acc, &(j, wj)| acc + skeleton.transform(j, v) * wj))
            .collect();
        let mesh = TriangleMesh::from_parts_unchecked(vertices, self.template.faces().to_vec());
        Ok(LbsOutput { mesh, skeleton })
    }
}

/// Posed body mesh.
pub fn lbs_forward(model: &BodyModel, params: &BodyParams) -> Result<TriangleMesh, BodyModelError> {
    Ok(model.lbs(params)?.mesh)
}

/// Pose-corrective features: row-major `R(theta_j) - I` for every non-root
/// joint.
pub fn pose_features(theta: &[Vec3]) -> Vec<f64> {
    let mut out = Vec::with_capacity(9 * theta.len().saturating_sub(1));
    for w in theta.iter().skip(1) {
        let r = rotation_from_axis_angle(w) - Mat3::identity();
        for i in 0..3 {
            for k in 0..3 {
                out.push(r[(i, k)]);
            }
        }
    }
    out
}
