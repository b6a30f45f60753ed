//! Shared-body initialization and joint refinement of body and view rigs.

use alloc::string::String;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector, UnitQuaternion};
#[allow(unused_imports)] // needed for f64 math under no_std
use num_traits::Float as _;

use super::rig::{rasterize_silhouette, silhouette_iou, Mask, ViewRig};
use super::CalibrationError;
use crate::body::{BodyModel, BodyParams, Skeleton};
use crate::geometry::TriangleMesh;
use crate::math::{axis_angle_from_rotation, quaternion_from_axis_angle, rotation_from_axis_angle, skew, yaw, Mat3, Vec3};

/// Keypoints (pixel coordinates, `None` when not visible) and silhouette
/// for one view.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub keypoints: Vec<Option<(f64, f64)>>,
    pub mask: Mask,
}

impl Observation {
    pub fn visible_count(&self) -> usize {
        self.keypoints.iter().filter(|k| k.is_some()).count()
    }
}

#[derive(Debug, Clone)]
pub struct FitConfig {
    /// Weight of `sum_i (1 - IoU_i)` against the keypoint sum of squares
    /// (pixels squared).
    pub iou_weight: f64,
    /// Side of the silhouette rasters used by the finite-difference stage.
    pub iou_resolution: usize,
    pub max_outer: usize,
    /// Stop when the combined objective improves by less than this.
    pub tolerance: f64,
    /// Levenberg-Marquardt iterations per outer iteration.
    pub gn_iterations: usize,
    /// Run the finite-difference silhouette stage.
    pub use_iou: bool,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig { iou_weight: 100.0, iou_resolution: 128, max_outer: 50, tolerance: 1e-6, gn_iterations: 5, use_iou: true }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ViewFitReport {
    pub keypoint_rmse: f64,
    pub iou: f64,
    pub visible_keypoints: usize,
    /// No visible keypoints: the view is constrained by its silhouette only.
    pub keypoint_free: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    pub views: Vec<ViewFitReport>,
    pub iterations: usize,
    pub initial_objective: f64,
    pub final_objective: f64,
}

impl FitReport {
    pub fn mean_iou(&self) -> f64 {
        self.views.iter().map(|v| v.iou).sum::<f64>() / self.views.len().max(1) as f64
    }
}

/// Averages per-view fits into one body. Shape and expression are
/// arithmetic means; each non-root joint rotation is the normalized mean of
/// unit quaternions flipped into the first view's hemisphere. The first
/// view's root orientation and translation become the shared ones; every
/// other view keeps its own by folding the difference into its rig.
pub fn init_shared_model(model: &BodyModel, fits: &[(BodyParams, ViewRig)]) -> Result<(BodyParams, Vec<ViewRig>), CalibrationError> {
    let Some((first, _)) = fits.first() else {
        return Err(CalibrationError::NoViews);
    };
    for (p, _) in fits {
        model.check_params(p)?;
    }
    let n = fits.len() as f64;
    let mean = |get: &dyn Fn(&BodyParams) -> &[f64]| -> Vec<f64> {
        let mut out = alloc::vec![0.0; get(first).len()];
        for (p, _) in fits {
            for (o, x) in out.iter_mut().zip(get(p)) {
                *o += x;
            }
        }
        out.iter().map(|x| x / n).collect()
    };
    let beta = mean(&|p| &p.beta);
    let phi = mean(&|p| &p.phi);
    let mut theta = first.theta.clone();
    for (j, t) in theta.iter_mut().enumerate().skip(1) {
        let q0 = quaternion_from_axis_angle(&first.theta[j]);
        let mut acc = nalgebra::Vector4::zeros();
        for (p, _) in fits {
            let q = quaternion_from_axis_angle(&p.theta[j]).into_inner().coords;
            // Ties (dot exactly 0) keep the sign, i.e. lean to the first view.
            acc += if q.dot(&q0.coords) < 0.0 { -q } else { q };
        }
        let q = UnitQuaternion::from_quaternion(nalgebra::Quaternion::from(acc));
        *t = q.scaled_axis();
    }
    let shared = BodyParams { beta, theta, phi, translation: first.translation };
    let j0 = model.joints_rest(&shared.beta, &shared.phi)[0];
    let r_first = rotation_from_axis_angle(&first.theta[0]);
    let rigs = fits
        .iter()
        .map(|(p, rig)| {
            let r_root = rotation_from_axis_angle(&p.theta[0]);
            let rotation = rig.rotation * r_root * r_first.transpose();
            let translation = rig.rotation * (j0 + p.translation) + rig.translation - rotation * (j0 + shared.translation);
            ViewRig { rotation, translation, ..*rig }
        })
        .collect();
    Ok((shared, rigs))
}

/// Parameter layout of the joint problem.
struct Layout {
    n_beta: usize,
    n_phi: usize,
    n_joints: usize,
    n_views: usize,
}

impl Layout {
    fn beta(&self) -> usize {
        0
    }
    fn phi(&self) -> usize {
        self.n_beta
    }
    fn theta(&self, j: usize) -> usize {
        self.n_beta + self.n_phi + 3 * j
    }
    /// View block: rotation (absent for view 0), translation x/y, scale.
    fn view(&self, i: usize) -> usize {
        let base = self.theta(self.n_joints);
        if i == 0 {
            base
        } else {
            base + 3 + 6 * (i - 1)
        }
    }
    fn view_rotation(&self, i: usize) -> Option<usize> {
        (i > 0).then(|| self.view(i))
    }
    fn view_translation(&self, i: usize) -> usize {
        self.view(i) + if i == 0 { 0 } else { 3 }
    }
    fn view_scale(&self, i: usize) -> usize {
        self.view_translation(i) + 2
    }
    fn len(&self) -> usize {
        self.view(self.n_views - 1) + if self.n_views == 1 { 3 } else { 6 }
    }
}

#[derive(Debug, Clone)]
struct State {
    params: BodyParams,
    rigs: Vec<ViewRig>,
}

impl State {
    fn apply(&self, layout: &Layout, delta: &[f64]) -> State {
        let mut s = self.clone();
        for k in 0..layout.n_beta {
            s.params.beta[k] += delta[layout.beta() + k];
        }
        for k in 0..layout.n_phi {
            s.params.phi[k] += delta[layout.phi() + k];
        }
        for j in 0..layout.n_joints {
            let o = layout.theta(j);
            let d = Vec3::new(delta[o], delta[o + 1], delta[o + 2]);
            if d != Vec3::zeros() {
                let r = rotation_from_axis_angle(&s.params.theta[j]) * rotation_from_axis_angle(&d);
                s.params.theta[j] = axis_angle_from_rotation(&r);
            }
        }
        for (i, rig) in s.rigs.iter_mut().enumerate() {
            if let Some(o) = layout.view_rotation(i) {
                let d = Vec3::new(delta[o], delta[o + 1], delta[o + 2]);
                if d != Vec3::zeros() {
                    rig.rotation = rotation_from_axis_angle(&d) * rig.rotation;
                }
            }
            let o = layout.view_translation(i);
            rig.translation.x += delta[o];
            rig.translation.y += delta[o + 1];
            rig.ortho_scale *= 1.0 + delta[layout.view_scale(i)];
        }
        s
    }
}

struct Problem<'a> {
    model: &'a BodyModel,
    observations: &'a [Observation],
    layout: Layout,
    low_masks: Vec<Mask>,
    factor: usize,
    config: &'a FitConfig,
    /// Proper ancestors of each joint.
    ancestors: Vec<Vec<usize>>,
}

struct Evaluation {
    keypoint_sse: f64,
    ious: Vec<f64>,
}

impl Evaluation {
    fn objective(&self, w: f64, use_iou: bool) -> f64 {
        let iou_term: f64 = if use_iou { self.ious.iter().map(|x| 1.0 - x).sum() } else { 0.0 };
        self.keypoint_sse + w * iou_term
    }
}

impl Problem<'_> {
    fn residuals(&self, skeleton: &Skeleton, rigs: &[ViewRig]) -> (f64, Vec<f64>) {
        let mut sse = 0.0;
        let mut per_view = Vec::with_capacity(rigs.len());
        for (rig, obs) in rigs.iter().zip(self.observations) {
            let mut view = 0.0;
            for (j, kp) in obs.keypoints.iter().enumerate() {
                if let Some((u, v)) = kp {
                    let (pu, pv, _) = rig.project(&skeleton.joints[j]);
                    view += (pu - u) * (pu - u) + (pv - v) * (pv - v);
                }
            }
            sse += view;
            per_view.push(view);
        }
        (sse, per_view)
    }

    fn evaluate(&self, state: &State, mesh: Option<&TriangleMesh>) -> Result<Evaluation, CalibrationError> {
        let skeleton = self.model.skeleton(&state.params)?;
        let (keypoint_sse, _) = self.residuals(&skeleton, &state.rigs);
        let ious = if self.config.use_iou {
            let owned;
            let mesh = match mesh {
                Some(m) => m,
                None => {
                    owned = self.model.lbs(&state.params)?.mesh;
                    &owned
                }
            };
            self.low_ious(mesh, &state.rigs)
        } else {
            alloc::vec![1.0; state.rigs.len()]
        };
        let e = Evaluation { keypoint_sse, ious };
        if !e.objective(self.config.iou_weight, true).is_finite() {
            return Err(CalibrationError::NonFinite(state_dump(state)));
        }
        Ok(e)
    }

    fn low_ious(&self, mesh: &TriangleMesh, rigs: &[ViewRig]) -> Vec<f64> {
        rigs.iter()
            .zip(&self.low_masks)
            .map(|(rig, obs)| silhouette_iou(&rasterize_silhouette(mesh, &rig.subsampled(self.factor)), obs))
            .collect()
    }

    /// Keypoint residual vector and its Jacobian in the layout's local
    /// increments.
    fn jacobian(&self, state: &State) -> Result<(DVector<f64>, DMatrix<f64>), CalibrationError> {
        let l = &self.layout;
        let sk = self.model.skeleton(&state.params)?;
        let parents = self.model.parents();
        let nj = l.n_joints;
        // d p_j / d coefficient, for shape and expression fields.
        let chain = |field: &[Vec3]| -> Vec<Vec3> {
            let mut d = alloc::vec![Vec3::zeros(); nj];
            for j in 0..nj {
                d[j] = match parents[j] {
                    None => field[j],
                    Some(p) => d[p] + sk.global_rotations[p] * (field[j] - field[p]),
                };
            }
            d
        };
        let d_beta: Vec<Vec<Vec3>> = self.model.joint_shape_basis().iter().map(|f| chain(f)).collect();
        let d_phi: Vec<Vec<Vec3>> = self.model.joint_expr_basis().iter().map(|f| chain(f)).collect();

        let rows: usize = self.observations.iter().map(|o| 2 * o.visible_count()).sum();
        let mut r = DVector::zeros(rows);
        let mut jac = DMatrix::zeros(rows, l.len());
        let mut row = 0;
        for (i, (rig, obs)) in state.rigs.iter().zip(self.observations).enumerate() {
            let s = rig.ortho_scale;
            for (j, kp) in obs.keypoints.iter().enumerate() {
                let Some((u, v)) = kp else { continue };
                let p = sk.joints[j];
                let c = rig.to_camera(&p);
                let (pu, pv, _) = rig.project(&p);
                r[row] = pu - u;
                r[row + 1] = pv - v;
                // Camera-frame derivative columns, scaled into pixels.
                let mut put = |col: usize, dc: Vec3| {
                    jac[(row, col)] += s * dc.x;
                    jac[(row + 1, col)] += s * dc.y;
                };
                for (k, d) in d_beta.iter().enumerate() {
                    put(l.beta() + k, rig.rotation * d[j]);
                }
                for (k, d) in d_phi.iter().enumerate() {
                    put(l.phi() + k, rig.rotation * d[j]);
                }
                for &a in &self.ancestors[j] {
                    // Right increment of joint a's local rotation.
                    let m = -(rig.rotation * skew(&(p - sk.joints[a])) * sk.global_rotations[a]);
                    for k in 0..3 {
                        put(l.theta(a) + k, m.column(k).into());
                    }
                }
                if let Some(o) = l.view_rotation(i) {
                    let m = -skew(&(rig.rotation * p));
                    for k in 0..3 {
                        put(o + k, m.column(k).into());
                    }
                }
                let t = l.view_translation(i);
                put(t, Vec3::x());
                put(t + 1, Vec3::y());
                // Scale increment is relative: s <- s (1 + ds).
                jac[(row, l.view_scale(i))] = s * c.x;
                jac[(row + 1, l.view_scale(i))] = s * c.y;
                row += 2;
            }
        }
        if r.iter().any(|x| !x.is_finite()) {
            return Err(CalibrationError::NonFinite(state_dump(state)));
        }
        Ok((r, jac))
    }
}

fn state_dump(state: &State) -> String {
    alloc::format!("params {:?}; rigs {:?}", state.params, state.rigs)
}

fn ancestors(parents: &[Option<usize>]) -> Vec<Vec<usize>> {
    (0..parents.len())
        .map(|j| {
            let mut out = Vec::new();
            let mut cur = parents[j];
            while let Some(p) = cur {
                out.push(p);
                cur = parents[p];
            }
            out
        })
        .collect()
}

/// Jointly refines the shared body and the view rigs: Levenberg-Marquardt
/// steps on the keypoint reprojection error with analytic Jacobians,
/// alternated with finite-difference coordinate steps on the silhouette
/// term. Every accepted step lowers
/// `keypoint SSE + iou_weight * sum_i (1 - IoU_i)`. The first view's
/// rotation and the body translation are held fixed as the gauge; the
/// depth component of each rig translation is unobservable under
/// orthographic projection and is left untouched.
pub fn refine_joint(
    model: &BodyModel,
    shared: &BodyParams,
    rigs: &[ViewRig],
    observations: &[Observation],
    config: &FitConfig,
) -> Result<(BodyParams, Vec<ViewRig>, FitReport), CalibrationError> {
    if rigs.is_empty() {
        return Err(CalibrationError::NoViews);
    }
    if rigs.len() != observations.len() {
        return Err(CalibrationError::ViewCountMismatch { rigs: rigs.len(), observations: observations.len() });
    }
    model.check_params(shared)?;
    for obs in observations {
        if obs.keypoints.len() != model.num_joints() {
            return Err(CalibrationError::KeypointCount { expected: model.num_joints(), got: obs.keypoints.len() });
        }
    }
    if observations.iter().all(|o| o.visible_count() < 4) {
        return Err(CalibrationError::Unsolvable);
    }
    let factor = (rigs[0].width / config.iou_resolution.max(1)).max(1);
    let problem = Problem {
        model,
        observations,
        layout: Layout { n_beta: model.num_shape(), n_phi: model.num_expr(), n_joints: model.num_joints(), n_views: rigs.len() },
        low_masks: observations.iter().map(|o| o.mask.subsampled(factor)).collect(),
        factor,
        config,
        ancestors: ancestors(model.parents()),
    };
    let w = config.iou_weight;
    let use_iou = config.use_iou;
    let mut state = State { params: shared.clone(), rigs: rigs.to_vec() };
    let mut eval = problem.evaluate(&state, None)?;
    let initial_objective = eval.objective(w, use_iou);
    let mut objective = initial_objective;
    let mut lambda = 1e-3;
    let mut steps = fd_steps(&problem.layout, &state);
    let mut iterations = 0;

    for _ in 0..config.max_outer {
        iterations += 1;
        let before = objective;

        // (a) Damped Gauss-Newton on the keypoint residuals.
        for _ in 0..config.gn_iterations {
            let (r, jac) = problem.jacobian(&state)?;
            if r.is_empty() {
                break;
            }
            let jtj = jac.transpose() * &jac;
            let g = jac.transpose() * &r;
            if g.amax() == 0.0 {
                break;
            }
            // Directions the keypoints barely see (bone twists, leaf
            // joints) get a damping floor so they stay put.
            let floor = 1e-4 * (0..jtj.nrows()).map(|k| jtj[(k, k)]).fold(0.0, f64::max);
            let mut accepted = false;
            for _ in 0..10 {
                let mut a = jtj.clone();
                for k in 0..a.nrows() {
                    a[(k, k)] += lambda * jtj[(k, k)].max(floor) + 1e-9;
                }
                let Some(chol) = a.cholesky() else {
                    lambda *= 4.0;
                    continue;
                };
                let delta = -chol.solve(&g);
                let trial = state.apply(&problem.layout, delta.as_slice());
                let e = problem.evaluate(&trial, None)?;
                let obj = e.objective(w, use_iou);
                if obj < objective {
                    state = trial;
                    eval = e;
                    objective = obj;
                    lambda = (lambda / 3.0).max(1e-12);
                    accepted = true;
                    break;
                }
                lambda *= 4.0;
            }
            if !accepted {
                break;
            }
        }

        // (b) Coordinate steps on the combined objective.
        if use_iou {
            let n = problem.layout.len();
            for k in 0..n {
                if steps[k] == 0.0 {
                    continue;
                }
                let mut improved = false;
                for sign in [1.0, -1.0] {
                    let mut delta = alloc::vec![0.0; n];
                    delta[k] = sign * steps[k];
                    let trial = state.apply(&problem.layout, &delta);
                    let e = problem.evaluate(&trial, None)?;
                    let obj = e.objective(w, use_iou);
                    if obj < objective {
                        state = trial;
                        eval = e;
                        objective = obj;
                        improved = true;
                        break;
                    }
                }
                if !improved {
                    steps[k] *= 0.5;
                }
            }
        }
        if before - objective < config.tolerance {
            break;
        }
    }
    let _ = eval;
    let report = report(&problem, &state, iterations, initial_objective, objective)?;
    Ok((state.params, state.rigs, report))
}

fn fd_steps(layout: &Layout, state: &State) -> Vec<f64> {
    let mut steps = alloc::vec![0.0; layout.len()];
    steps[layout.beta()..layout.beta() + layout.n_beta].fill(0.1);
    steps[layout.phi()..layout.phi() + layout.n_phi].fill(0.1);
    steps[layout.theta(0)..layout.theta(layout.n_joints)].fill(0.02);
    for (i, rig) in state.rigs.iter().enumerate() {
        if let Some(o) = layout.view_rotation(i) {
            steps[o..o + 3].fill(0.01);
        }
        let t = layout.view_translation(i);
        steps[t] = 1.0 / rig.ortho_scale;
        steps[t + 1] = 1.0 / rig.ortho_scale;
        steps[layout.view_scale(i)] = 0.005;
    }
    steps
}

fn report(problem: &Problem, state: &State, iterations: usize, initial: f64, fin: f64) -> Result<FitReport, CalibrationError> {
    let out = problem.model.lbs(&state.params)?;
    let (_, per_view) = problem.residuals(&out.skeleton, &state.rigs);
    let views = state
        .rigs
        .iter()
        .zip(problem.observations)
        .zip(per_view)
        .map(|((rig, obs), sse)| {
            let n = obs.visible_count();
            ViewFitReport {
                keypoint_rmse: if n > 0 { (sse / (2 * n) as f64).sqrt() } else { 0.0 },
                iou: silhouette_iou(&rasterize_silhouette(&out.mesh, rig), &obs.mask),
                visible_keypoints: n,
                keypoint_free: n == 0,
            }
        })
        .collect();
    Ok(FitReport { views, iterations, initial_objective: initial, final_objective: fin })
}

/// Per-view starting fit without any prior on the rig: a grid search over
/// root yaw in the rest pose with the closed-form scale and image offset
/// that best match the visible keypoints. Views without keypoints match the
/// silhouette's bounding box instead.
pub fn init_view_from_observation(
    model: &BodyModel,
    observation: &Observation,
    width: usize,
    height: usize,
) -> Result<(BodyParams, ViewRig), CalibrationError> {
    let params = BodyParams::zeros(model);
    let skeleton = model.skeleton(&params)?;
    let mut best: Option<(f64, ViewRig)> = None;
    for step in 0..36 {
        let r = yaw(step as f64 * core::f64::consts::PI / 18.0);
        let rig = if observation.visible_count() >= 2 {
            fit_scale_offset(&skeleton.joints, observation, r, width, height)
        } else {
            fit_bbox(model, &params, &observation.mask, r, width, height)?
        };
        let Some(rig) = rig else { continue };
        let cost = if observation.visible_count() >= 2 {
            observation
                .keypoints
                .iter()
                .zip(&skeleton.joints)
                .filter_map(|(kp, x)| kp.map(|(u, v)| (u, v, rig.project(x))))
                .map(|(u, v, (pu, pv, _))| (pu - u).powi(2) + (pv - v).powi(2))
                .sum::<f64>()
        } else {
            let mesh = model.lbs(&params)?.mesh;
            1.0 - silhouette_iou(&rasterize_silhouette(&mesh, &rig), &observation.mask)
        };
        if best.as_ref().is_none_or(|(c, _)| cost < *c) {
            best = Some((cost, rig));
        }
    }
    let (_, rig) = best.ok_or(CalibrationError::Unsolvable)?;
    Ok((params, rig))
}

fn fit_scale_offset(joints: &[Vec3], obs: &Observation, r: Mat3, width: usize, height: usize) -> Option<ViewRig> {
    // u - W/2 = s (x + tx), v - H/2 = s (y + ty): linear in (s, s tx, s ty).
    let (mut a, mut b) = (DMatrix::<f64>::zeros(0, 3), DVector::<f64>::zeros(0));
    for (kp, x) in obs.keypoints.iter().zip(joints) {
        if let Some((u, v)) = kp {
            let c = r * x;
            let n = a.nrows();
            a = a.insert_rows(n, 2, 0.0);
            b = b.insert_rows(n, 2, 0.0);
            a[(n, 0)] = c.x;
            a[(n, 1)] = 1.0;
            b[n] = u - 0.5 * width as f64;
            a[(n + 1, 0)] = c.y;
            a[(n + 1, 2)] = 1.0;
            b[n + 1] = v - 0.5 * height as f64;
        }
    }
    let sol = (a.transpose() * &a).cholesky()?.solve(&(a.transpose() * b));
    let s = sol[0];
    (s > 0.0).then(|| ViewRig::new(r, Vec3::new(sol[1] / s, sol[2] / s, 0.0), s, width, height))
}

fn fit_bbox(model: &BodyModel, params: &BodyParams, mask: &Mask, r: Mat3, width: usize, height: usize) -> Result<Option<ViewRig>, CalibrationError> {
    let (mut umin, mut umax, mut vmin, mut vmax) = (usize::MAX, 0, usize::MAX, 0);
    for v in 0..mask.height {
        for u in 0..mask.width {
            if mask.get(u, v) {
                umin = umin.min(u);
                umax = umax.max(u);
                vmin = vmin.min(v);
                vmax = vmax.max(v);
            }
        }
    }
    if umin == usize::MAX {
        return Ok(None);
    }
    let mesh = model.lbs(params)?.mesh;
    let b = crate::math::Aabb::from_points(mesh.vertices().iter().map(|x| r * x).collect::<Vec<_>>().iter());
    let s = (vmax - vmin + 1) as f64 / b.extent().y;
    let cu = 0.5 * (umin + umax + 1) as f64 - 0.5 * width as f64;
    let cv = 0.5 * (vmin + vmax + 1) as f64 - 0.5 * height as f64;
    let c = b.center();
    Ok(Some(ViewRig::new(r, Vec3::new(cu / s - c.x, cv / s - c.y, 0.0), s, width, height)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::body::make_procedural_template;
    use crate::math::rotation_angle_between;

    fn scene(model: &BodyModel) -> (BodyParams, Vec<ViewRig>, Vec<Observation>) {
        let mut params = BodyParams::zeros(model);
        params.beta[0] = 0.5;
        params.beta[1] = -0.3;
        params.theta[5] = Vec3::new(0.0, 0.0, 0.4);
        params.theta[11] = Vec3::new(0.3, 0.0, 0.0);
        let out = model.lbs(&params).unwrap();
        let rigs: Vec<ViewRig> = (0..3)
            .map(|i| ViewRig::new(yaw(i as f64 * 2.0 * core::f64::consts::PI / 3.0), Vec3::new(0.02, -0.1, 0.0), 220.0, 512, 512))
            .collect();
        let obs = rigs
            .iter()
            .map(|r| Observation {
                keypoints: out.skeleton.joints.iter().map(|x| Some((r.project(x).0, r.project(x).1))).collect(),
                mask: rasterize_silhouette(&out.mesh, r),
            })
            .collect();
        (params, rigs, obs)
    }

    #[test]
    fn ground_truth_is_a_fixed_point() {
        let model = make_procedural_template(0, 8);
        let (params, rigs, obs) = scene(&model);
        let (p, r, rep) = refine_joint(&model, &params, &rigs, &obs, &FitConfig::default()).unwrap();
        assert_eq!(p, params);
        assert_eq!(r, rigs);
        assert!(rep.views.iter().all(|v| v.keypoint_rmse == 0.0 && v.iou == 1.0));
    }

    fn jitter(rigs: &[ViewRig], degrees: f64) -> Vec<ViewRig> {
        rigs.iter()
            .enumerate()
            .map(|(i, r)| {
                let w = Vec3::new(0.05, -0.06, 0.04 * i as f64).normalize() * degrees.to_radians();
                ViewRig { rotation: rotation_from_axis_angle(&w) * r.rotation, translation: r.translation + Vec3::new(0.1, -0.08, 0.0), ..*r }
            })
            .collect()
    }

    fn max_relative_rotation_error(a: &[ViewRig], b: &[ViewRig]) -> f64 {
        (1..a.len())
            .map(|i| {
                let ra = a[i].rotation * a[0].rotation.transpose();
                let rb = b[i].rotation * b[0].rotation.transpose();
                rotation_angle_between(&ra, &rb).to_degrees()
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn recovers_perturbed_rigs() {
        let model = make_procedural_template(0, 8);
        let (params, rigs, obs) = scene(&model);
        let (_, fit, rep) = refine_joint(&model, &params, &jitter(&rigs, 5.0), &obs, &FitConfig::default()).unwrap();
        assert!(max_relative_rotation_error(&rigs, &fit) < 0.5);
        assert!(rep.mean_iou() > 0.99, "{rep:?}");
        assert!(rep.final_objective <= rep.initial_objective);
    }

    #[test]
    fn keypoint_only_fit_reprojects_exactly() {
        let model = make_procedural_template(0, 8);
        let (params, rigs, obs) = scene(&model);
        let cfg = FitConfig { use_iou: false, ..FitConfig::default() };
        let (_, fit, rep) = refine_joint(&model, &params, &jitter(&rigs, 2.0), &obs, &cfg).unwrap();
        assert!(rep.views.iter().all(|v| v.keypoint_rmse < 1e-6), "{rep:?}");
        let err = max_relative_rotation_error(&rigs, &fit);
        assert!(err < 1e-4, "{err}");
    }
}
