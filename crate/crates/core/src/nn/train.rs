use alloc::format;
use alloc::vec::Vec;

#[allow(unused_imports)] // needed for f64 math under no_std
use num_traits::Float as _;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::data::{Batch, SceneSamples};
use super::loss::{BCE_CLAMP, loss_eikonal, loss_occupancy, loss_surface, scaled, total_loss, LossWeights};
use super::model::{SesdfModel, Variant};
use super::tape::{ParamSet, Tape};
use super::NnError;

/// Adaptive-moment optimizer state.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub m: ParamSet,
    pub v: ParamSet,
    pub t: u64,
}

impl Adam {
    pub fn new(params: &ParamSet) -> Self {
        Adam { beta1: 0.9, beta2: 0.999, eps: 1e-8, m: params.zeros_like(), v: params.zeros_like(), t: 0 }
    }

    pub fn step(&mut self, params: &mut ParamSet, grads: &ParamSet, lr: f64) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        for (k, p) in params.tensors.iter_mut().enumerate() {
            let (m, v, g) = (&mut self.m.tensors[k], &mut self.v.tensors[k], &grads.tensors[k]);
            for i in 0..p.data.len() {
                let gi = g.data[i];
                m.data[i] = self.beta1 * m.data[i] + (1.0 - self.beta1) * gi;
                v.data[i] = self.beta2 * v.data[i] + (1.0 - self.beta2) * gi * gi;
                let mh = m.data[i] / c1;
                let vh = v.data[i] / c2;
                p.data[i] -= lr * mh / (vh.sqrt() + self.eps);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub decay_factor: f64,
    pub decay_every: usize,
    pub weights: LossWeights,
    /// Occupancy points per step (and as many surface points).
    pub batch_size: usize,
    pub seed: u64,
    /// Train each step on a random non-empty subset of the views.
    pub view_subsets: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 12,
            learning_rate: 1e-4,
            decay_factor: 0.1,
            decay_every: 4,
            weights: LossWeights::default(),
            batch_size: 64,
            seed: 0,
            view_subsets: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), NnError> {
        let w = &self.weights;
        let ok = self.learning_rate > 0.0
            && self.decay_factor > 0.0
            && self.decay_every > 0
            && self.batch_size > 0
            && [w.surface, w.occupancy, w.eikonal, w.distance, w.normal].iter().all(|x| *x >= 0.0 && x.is_finite());
        if ok {
            Ok(())
        } else {
            Err(NnError::InvalidConfig("rates and batch size must be positive, loss weights non-negative".into()))
        }
    }

    pub fn learning_rate_at(&self, epoch: usize) -> f64 {
        self.learning_rate * self.decay_factor.powi((epoch / self.decay_every) as i32)
    }
}

/// Loss components of one batch or averaged over an epoch.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Losses {
    pub surface: f64,
    pub occupancy: f64,
    pub eikonal: f64,
    pub total: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLoss {
    pub epoch: usize,
    pub losses: Losses,
}

/// Losses of one step; with `grads`, also accumulates their gradients.
/// The surface term is skipped when `surface` is `None` and, like the
/// eikonal term, in the bypass variant.
pub fn batch_loss(model: &SesdfModel, surface: Option<&Batch>, occupancy: &Batch, w: &LossWeights, grads: Option<&mut ParamSet>) -> Result<Losses, NnError> {
    batch_loss_impl(model, surface, occupancy, w, grads, None)
}

/// [`batch_loss`] that also records which side of every kink (rectifier
/// inputs, `|d|`, the BCE clamp) the evaluation landed on.
fn batch_loss_impl(
    model: &SesdfModel,
    surface: Option<&Batch>,
    occupancy: &Batch,
    w: &LossWeights,
    mut grads: Option<&mut ParamSet>,
    mut pattern: Option<&mut Vec<bool>>,
) -> Result<Losses, NnError> {
    let mut out = Losses::default();
    let refine = model.config.variant != Variant::Bypass;
    if let (true, Some(sb)) = (refine, surface) {
        let mut tape = Tape::new(&model.params);
        let nodes = model.forward(&mut tape, sb, false)?;
        let (l, gd, gn) = loss_surface(tape.value(nodes.d), tape.value(nodes.n), &sb.n_gt, sb.views, w.distance, w.normal);
        out.surface = l;
        if let Some(p) = pattern.as_deref_mut() {
            p.extend(tape.kink_pattern());
            p.extend(tape.value(nodes.d).data.iter().map(|d| *d < 0.0));
        }
        if let Some(g) = grads.as_deref_mut() {
            tape.backward(alloc::vec![(nodes.d, scaled(gd, w.surface)), (nodes.n, scaled(gn, w.surface))], g);
        }
    }
    let mut tape = Tape::new(&model.params);
    let nodes = model.forward(&mut tape, occupancy, true)?;
    let o = nodes.occupancy.expect("occupancy requested");
    let (lo, go) = loss_occupancy(tape.value(o), &occupancy.labels);
    out.occupancy = lo;
    if let Some(p) = pattern {
        p.extend(tape.kink_pattern());
        p.extend(tape.value(o).data.iter().map(|x| *x < BCE_CLAMP || *x > 1.0 - BCE_CLAMP));
    }
    let mut seeds = alloc::vec![(o, scaled(go, w.occupancy))];
    if refine {
        let (lr, gr) = loss_eikonal(tape.value(nodes.n));
        out.eikonal = lr;
        seeds.push((nodes.n, scaled(gr, w.eikonal)));
    }
    out.total = total_loss(out.surface, out.occupancy, out.eikonal, w);
    if let Some(g) = grads {
        tape.backward(seeds, g);
    }
    Ok(out)
}

/// Runs the schedule over `scenes`. Every epoch visits each scene's
/// occupancy points once in shuffled batches, each paired with a batch of
/// that scene's surface points. `on_epoch` sees the mean losses.
pub fn train(model: &mut SesdfModel, scenes: &[SceneSamples], config: &TrainConfig, mut on_epoch: impl FnMut(&EpochLoss)) -> Result<Vec<EpochLoss>, NnError> {
    config.validate()?;
    if scenes.is_empty() || scenes.iter().any(|s| s.occupancy.is_empty()) {
        return Err(NnError::InvalidConfig("training needs scenes with occupancy samples".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut adam = Adam::new(&model.params);
    let mut grads = model.params.zeros_like();
    let mut curve = Vec::with_capacity(config.epochs);
    let bs = config.batch_size;
    for epoch in 0..config.epochs {
        let lr = config.learning_rate_at(epoch);
        let mut jobs: Vec<(usize, Vec<usize>, Vec<usize>)> = Vec::new();
        for (s, scene) in scenes.iter().enumerate() {
            let mut occ: Vec<usize> = (0..scene.occupancy.len()).collect();
            let mut surf: Vec<usize> = (0..scene.surface.len()).collect();
            occ.shuffle(&mut rng);
            surf.shuffle(&mut rng);
            for (k, chunk) in occ.chunks(bs).enumerate() {
                let sc: Vec<usize> = if surf.is_empty() { Vec::new() } else { (0..chunk.len()).map(|i| surf[(k * bs + i) % surf.len()]).collect() };
                jobs.push((s, chunk.to_vec(), sc));
            }
        }
        jobs.shuffle(&mut rng);
        let mut sum = Losses::default();
        for (b, (s, occ, surf)) in jobs.iter().enumerate() {
            let scene = &scenes[*s];
            let nv = scene.occupancy.views;
            let views: Vec<usize> = if config.view_subsets && nv > 1 {
                let k = rng.random_range(1..=nv);
                let mut all: Vec<usize> = (0..nv).collect();
                all.shuffle(&mut rng);
                let mut pick = all[..k].to_vec();
                pick.sort_unstable();
                pick
            } else {
                (0..nv).collect()
            };
            let ob = scene.occupancy.batch(occ, &views, &scene.rotations);
            let sb = (!surf.is_empty()).then(|| scene.surface.batch(surf, &views, &scene.rotations));
            grads.tensors.iter_mut().for_each(|t| t.data.fill(0.0));
            let l = batch_loss(model, sb.as_ref(), &ob, &config.weights, Some(&mut grads))?;
            if !l.total.is_finite() || !grads.all_finite() {
                return Err(NnError::NonFiniteLoss {
                    epoch,
                    batch: b,
                    detail: format!("scene {s}, views {views:?}, losses {l:?}, occupancy points {occ:?}"),
                });
            }
            adam.step(&mut model.params, &grads, lr);
            sum.surface += l.surface;
            sum.occupancy += l.occupancy;
            sum.eikonal += l.eikonal;
            sum.total += l.total;
        }
        let n = jobs.len().max(1) as f64;
        let e = EpochLoss {
            epoch,
            losses: Losses { surface: sum.surface / n, occupancy: sum.occupancy / n, eikonal: sum.eikonal / n, total: sum.total / n },
        };
        log::info!("epoch {epoch}: lr {lr:e}, loss {:.5}", e.losses.total);
        on_epoch(&e);
        curve.push(e);
    }
    Ok(curve)
}

/// Worst disagreement between analytic and central-difference gradients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    /// Flat index of the worst parameter.
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub checked: usize,
    /// Parameters whose difference stencil straddled a kink; central
    /// differences are no oracle there, so they are left out of the maximum.
    pub straddled: usize,
}

/// Relative error `|a - f| / max(|a|, |f|, 1e-8)`.
pub fn relative_error(a: f64, f: f64) -> f64 {
    (a - f).abs() / a.abs().max(f.abs()).max(1e-8)
}

/// Finite-difference estimate of a derivative.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Stencil {
    /// `(f(x+h) - f(x-h)) / 2h`, error O(h^2).
    Central(f64),
    /// Richardson extrapolation of the central difference at `h` and
    /// `h/2`, error O(h^4).
    Richardson(f64),
}

/// Compares `loss_and_grad`'s gradient with central differences of its
/// value at step `eps`, over the flat parameter `indices`. The closure also
/// returns a kink pattern (see [`Tape::kink_pattern`]); a parameter whose
/// `±eps` evaluations change the pattern is counted in `straddled` instead.
pub fn gradient_check<F>(params: &mut ParamSet, indices: &[usize], eps: f64, loss_and_grad: F) -> Result<GradCheckReport, NnError>
where
    F: FnMut(&ParamSet, Option<&mut ParamSet>) -> Result<(f64, Vec<bool>), NnError>,
{
    gradient_check_with(params, indices, Stencil::Central(eps), loss_and_grad)
}

/// [`gradient_check`] with a choice of stencil.
pub fn gradient_check_with<F>(params: &mut ParamSet, indices: &[usize], stencil: Stencil, mut loss_and_grad: F) -> Result<GradCheckReport, NnError>
where
    F: FnMut(&ParamSet, Option<&mut ParamSet>) -> Result<(f64, Vec<bool>), NnError>,
{
    let mut grads = params.zeros_like();
    let (_, base) = loss_and_grad(params, Some(&mut grads))?;
    let mut report = GradCheckReport { max_relative_error: 0.0, worst_index: 0, analytic: 0.0, numeric: 0.0, checked: 0, straddled: 0 };
    let steps: &[f64] = match stencil {
        Stencil::Central(_) => &[1.0],
        Stencil::Richardson(_) => &[1.0, 0.5],
    };
    let h = match stencil {
        Stencil::Central(h) | Stencil::Richardson(h) => h,
    };
    'params: for &k in indices {
        let x = params.flat_get(k);
        let mut diffs = [0.0; 2];
        for (i, s) in steps.iter().enumerate() {
            params.flat_set(k, x + s * h);
            let (up, pu) = loss_and_grad(params, None)?;
            params.flat_set(k, x - s * h);
            let (down, pd) = loss_and_grad(params, None)?;
            params.flat_set(k, x);
            if pu != base || pd != base {
                report.straddled += 1;
                continue 'params;
            }
            diffs[i] = (up - down) / (2.0 * s * h);
        }
        let numeric = match stencil {
            Stencil::Central(_) => diffs[0],
            Stencil::Richardson(_) => (4.0 * diffs[1] - diffs[0]) / 3.0,
        };
        let analytic = grads.flat_get(k);
        let e = relative_error(analytic, numeric);
        if e > report.max_relative_error || report.checked == 0 {
            report = GradCheckReport { max_relative_error: e, worst_index: k, analytic, numeric, ..report };
        }
        report.checked += 1;
    }
    Ok(report)
}

/// Gradient check of the full training loss of `model` on one step.
pub fn model_gradient_check(model: &mut SesdfModel, surface: &Batch, occupancy: &Batch, w: &LossWeights, stencil: Stencil, indices: &[usize]) -> Result<GradCheckReport, NnError> {
    let mut params = core::mem::take(&mut model.params);
    let probe = model.clone();
    let r = gradient_check_with(&mut params, indices, stencil, |p, g| {
        let m = SesdfModel { params: p.clone(), ..probe.clone() };
        let mut pattern = Vec::new();
        let l = batch_loss_impl(&m, Some(surface), occupancy, w, g, Some(&mut pattern))?;
        Ok((l.total, pattern))
    });
    model.params = params;
    r
}
