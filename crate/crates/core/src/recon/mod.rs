//! Closed-loop reconstruction: recovering a latent shape code from six-view
//! silhouette and normal priors.
//!
//! The objective compares the soft projection of the current grid with the
//! prior images: a mask mean-squared error weighted `beta` plus a normal
//! misalignment term (one minus cosine similarity, measured inside the prior
//! silhouette) weighted `1 - beta`, each averaged over the six views.
//!
//! Optimization runs in two stages over annealed schedules. `beta` falls
//! linearly from `beta_hi` to `beta_lo` across the whole run, while the
//! projection softness `tau` decays exponentially during the coarse stage
//! and then holds at its sharp end value:
//!
//! 1. **Coarse**: Adam on the latent code, with gradients pulled back
//!    through the decoder's vector-Jacobian product. Starts from a
//!    space-carved visual hull ([`carve_init`]) or from a zero latent.
//! 2. **Refine**: the decoded base grid is frozen and a clamped per-voxel
//!    residual field is optimized on top of it, capturing detail the codec
//!    cannot express. (The freeze can be lifted to measure how much the
//!    fixed base contributes; see [`ReconConfig::use_fixation`].)
//!
//! Both stages record a per-iteration trace and return their best-loss
//! iterate rather than the last one. Everything is deterministic: rerunning
//! a reconstruction reproduces the trace and the result bit for bit.

mod carve;

pub use carve::{carve_init, carve_occupancy};

use crate::codec::{decode, decode_vjp, CodecConfig, LatentCode};
use crate::error::{Error, Result};
use crate::render::{
    soft_project, soft_project_backward, RenderImage, SoftCotangents, ViewImages, ViewSet,
    MIN_RIG_IMAGE_SIDE, MIN_SAMPLES_PER_RAY,
};
use crate::sdf::SdfGrid;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::Path;

/// Configuration of the two-stage reconstruction optimizer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReconConfig {
    /// Latent codec the coarse stage optimizes through.
    pub codec: CodecConfig,
    /// World size of the reconstruction grid along x; the grid is centered
    /// on the origin.
    pub world_extent: f64,
    /// Iterations of the coarse (latent) stage; at least 1.
    pub coarse_iters: usize,
    /// Iterations of the refinement (residual) stage; zero disables it.
    pub refine_iters: usize,
    /// Mask-term weight at iteration 0; in (0, 1) and above `beta_lo`.
    pub beta_hi: f64,
    /// Mask-term weight at the final iteration; in (0, 1).
    pub beta_lo: f64,
    /// Adam step size of the coarse stage. Non-negative; zero leaves the
    /// latent untouched (a degenerate optimizer, useful for probing).
    pub coarse_step: f64,
    /// Adam step size of the refinement stage; non-negative.
    pub refine_step: f64,
    /// Adam first and second moment decays, each in [0, 1).
    pub moment_decay: (f64, f64),
    /// Adam denominator offset; positive.
    pub adam_epsilon: f64,
    /// Projection softness at iteration 0, in multiples of the grid
    /// spacing. Decays exponentially to `tau_end_voxels` over the coarse
    /// stage; refinement holds the end value.
    pub tau_start_voxels: f64,
    /// Final projection softness, in multiples of the grid spacing; at
    /// most `tau_start_voxels`.
    pub tau_end_voxels: f64,
    /// Ray samples per pixel for the soft projector.
    pub samples_per_ray: usize,
    /// Image side the optimization runs at. Input views are box-averaged
    /// down to it, so it must divide their width.
    pub opt_image_size: usize,
    /// Loss level that counts as converged when reporting
    /// [`ReconResult::iterations_to_threshold`].
    pub loss_threshold: f64,
    /// Residual clamp in multiples of the grid spacing: after every
    /// refinement step the residual satisfies `|r| <= cap * spacing`.
    pub residual_cap_voxels: f64,
    /// Pixel margin of the carving silhouettes; positive erodes. See
    /// [`carve_occupancy`].
    pub carve_margin_px: f64,
    /// Start from the space-carved visual hull instead of a zero latent.
    pub use_init: bool,
    /// Keep the decoded base frozen during refinement. Disabling this
    /// lets the latent drift together with the residual, which is the
    /// ablation arm: it usually hurts.
    pub use_fixation: bool,
}

impl Default for ReconConfig {
    fn default() -> Self {
        Self {
            codec: CodecConfig::default(),
            world_extent: 2.0,
            coarse_iters: 240,
            refine_iters: 80,
            beta_hi: 0.8,
            beta_lo: 0.3,
            coarse_step: 0.05,
            refine_step: 0.01,
            moment_decay: (0.9, 0.999),
            adam_epsilon: 1e-8,
            tau_start_voxels: 2.0,
            tau_end_voxels: 0.5,
            samples_per_ray: 32,
            opt_image_size: 64,
            loss_threshold: 0.01,
            residual_cap_voxels: 0.5,
            carve_margin_px: 1.0,
            use_init: true,
            use_fixation: true,
        }
    }
}

impl ReconConfig {
    /// Checks every numeric precondition listed on the fields.
    pub fn validate(&self) -> Result<()> {
        self.codec.validate()?;
        if !(self.world_extent.is_finite() && self.world_extent > 0.0) {
            return Err(Error::invalid(
                "world_extent",
                format!("got {}", self.world_extent),
            ));
        }
        if self.coarse_iters == 0 {
            return Err(Error::invalid("coarse_iters", "need at least 1"));
        }
        let (hi, lo) = (self.beta_hi, self.beta_lo);
        if !(hi.is_finite() && lo.is_finite() && 0.0 < lo && lo < hi && hi < 1.0) {
            return Err(Error::invalid(
                "beta",
                format!("need 0 < beta_lo < beta_hi < 1, got lo {lo}, hi {hi}"),
            ));
        }
        for (name, step) in [("coarse_step", self.coarse_step), ("refine_step", self.refine_step)]
        {
            if !(step.is_finite() && step >= 0.0) {
                return Err(Error::invalid(name, format!("got {step}")));
            }
        }
        let (b1, b2) = self.moment_decay;
        if !(b1.is_finite() && b2.is_finite() && (0.0..1.0).contains(&b1) && (0.0..1.0).contains(&b2))
        {
            return Err(Error::invalid(
                "moment_decay",
                format!("need decays in [0, 1), got ({b1}, {b2})"),
            ));
        }
        if !(self.adam_epsilon.is_finite() && self.adam_epsilon > 0.0) {
            return Err(Error::invalid(
                "adam_epsilon",
                format!("got {}", self.adam_epsilon),
            ));
        }
        let (ts, te) = (self.tau_start_voxels, self.tau_end_voxels);
        if !(ts.is_finite() && te.is_finite() && 0.0 < te && te <= ts) {
            return Err(Error::invalid(
                "tau schedule",
                format!("need 0 < tau_end <= tau_start, got start {ts}, end {te}"),
            ));
        }
        if self.samples_per_ray < MIN_SAMPLES_PER_RAY {
            return Err(Error::invalid(
                "samples_per_ray",
                format!("need at least {MIN_SAMPLES_PER_RAY}, got {}", self.samples_per_ray),
            ));
        }
        if self.opt_image_size < MIN_RIG_IMAGE_SIDE {
            return Err(Error::invalid(
                "opt_image_size",
                format!("need at least {MIN_RIG_IMAGE_SIDE}, got {}", self.opt_image_size),
            ));
        }
        if !self.loss_threshold.is_finite() {
            return Err(Error::invalid(
                "loss_threshold",
                format!("got {}", self.loss_threshold),
            ));
        }
        if !(self.residual_cap_voxels.is_finite() && self.residual_cap_voxels >= 0.0) {
            return Err(Error::invalid(
                "residual_cap_voxels",
                format!("got {}", self.residual_cap_voxels),
            ));
        }
        if !self.carve_margin_px.is_finite() {
            return Err(Error::invalid(
                "carve_margin_px",
                format!("got {}", self.carve_margin_px),
            ));
        }
        Ok(())
    }

    fn total_iters(&self) -> usize {
        self.coarse_iters + self.refine_iters
    }
}

/// Mask-term weight at the given iteration: linear from `beta_hi` at 0 to
/// `beta_lo` at the last scheduled iteration, clamped beyond.
pub fn beta_schedule(iter: usize, cfg: &ReconConfig) -> f64 {
    let total = cfg.total_iters();
    let t = iter.min(total) as f64 / total as f64;
    cfg.beta_hi + (cfg.beta_lo - cfg.beta_hi) * t
}

/// Projection softness at the given iteration, in world units: exponential
/// decay from `tau_start_voxels * spacing` to `tau_end_voxels * spacing`
/// across the coarse stage, holding the end value from there on.
pub fn tau_schedule(iter: usize, cfg: &ReconConfig, spacing: f64) -> f64 {
    let hi = cfg.tau_start_voxels * spacing;
    let lo = cfg.tau_end_voxels * spacing;
    if iter >= cfg.coarse_iters {
        return lo;
    }
    let t = iter as f64 / cfg.coarse_iters as f64;
    hi * (lo / hi).powf(t)
}

/// Loss contribution of a single view.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ViewLoss {
    /// Mean squared mask error over all pixels.
    pub mask: f64,
    /// Mean `1 - cos` normal misalignment over the prior silhouette
    /// interior; zero when the prior mask covers no pixel.
    pub normal: f64,
}

/// Objective value and its decomposition.
#[derive(Debug, Clone, PartialEq)]
pub struct LossBreakdown {
    /// `beta * mask + (1 - beta) * normal`.
    pub total: f64,
    /// Mask term averaged over views.
    pub mask: f64,
    /// Normal term averaged over views.
    pub normal: f64,
    /// Per-view terms in rig order.
    pub per_view: Vec<ViewLoss>,
}

struct EvalOutput {
    loss: LossBreakdown,
    grad: Option<SdfGrid>,
}

/// Renders `grid` into every view and scores it against the prior images,
/// optionally accumulating the loss gradient with respect to the grid
/// values. Priors need masks and normals; shapes must match the views.
fn eval_views(
    grid: &SdfGrid,
    views: &ViewSet,
    beta: f64,
    tau: f64,
    samples_per_ray: usize,
    want_grad: bool,
) -> Result<EvalOutput> {
    if views.images.len() != views.views.len() {
        return Err(Error::invalid(
            "views",
            "the objective needs one image bundle per view".to_string(),
        ));
    }
    let n_views = views.views.len() as f64;
    let mut per_view = Vec::with_capacity(views.views.len());
    let mut grad = if want_grad {
        let mut g = grid.clone();
        g.values_mut().fill(0.0);
        Some(g)
    } else {
        None
    };

    for (i, (view, prior)) in views.views.iter().zip(&views.images).enumerate() {
        let prior_normal = prior.normal.as_ref().ok_or_else(|| {
            Error::invalid(
                "views",
                format!("view {i} lacks the normal image the objective requires"),
            )
        })?;
        let render = soft_project(grid, view, tau, samples_per_ray)?;
        if !render.mask.same_shape(&prior.mask) {
            return Err(Error::ShapeMismatch {
                what: "prior mask",
                expected: format!("{}x{}", view.width, view.height),
                got: format!("{}x{}", prior.mask.width(), prior.mask.height()),
            });
        }

        let pixels = (view.width * view.height) as f64;
        let mut l_mask = 0.0;
        for (m, m_hat) in render.mask.values().iter().zip(prior.mask.values()) {
            let d = m - m_hat;
            l_mask += d * d;
        }
        l_mask /= pixels;

        let mut interior = 0usize;
        let mut misalign = 0.0;
        for y in 0..view.height {
            for x in 0..view.width {
                if prior.mask.get(x, y, 0) >= 0.5 {
                    interior += 1;
                    misalign += 1.0 - render.normal.get3(x, y).dot(&prior_normal.get3(x, y));
                }
            }
        }
        let l_normal = if interior == 0 {
            0.0
        } else {
            misalign / interior as f64
        };
        per_view.push(ViewLoss {
            mask: l_mask,
            normal: l_normal,
        });

        if let Some(total_grad) = &mut grad {
            let mut cot_mask = RenderImage::new(view.width, view.height, 1, 0.0)?;
            let mask_scale = beta * 2.0 / (pixels * n_views);
            for ((c, m), m_hat) in cot_mask
                .values_mut()
                .iter_mut()
                .zip(render.mask.values())
                .zip(prior.mask.values())
            {
                *c = mask_scale * (m - m_hat);
            }
            let mut cot_normal = RenderImage::new(view.width, view.height, 3, 0.0)?;
            if interior > 0 {
                let normal_scale = -(1.0 - beta) / (interior as f64 * n_views);
                for y in 0..view.height {
                    for x in 0..view.width {
                        if prior.mask.get(x, y, 0) >= 0.5 {
                            cot_normal.set3(x, y, normal_scale * prior_normal.get3(x, y));
                        }
                    }
                }
            }
            let view_grad = soft_project_backward(
                grid,
                view,
                tau,
                samples_per_ray,
                &SoftCotangents {
                    mask: Some(&cot_mask),
                    normal: Some(&cot_normal),
                },
            )?;
            for (acc, g) in total_grad.values_mut().iter_mut().zip(view_grad.values()) {
                *acc += g;
            }
        }
    }

    let mask = per_view.iter().map(|v| v.mask).sum::<f64>() / n_views;
    let normal = per_view.iter().map(|v| v.normal).sum::<f64>() / n_views;
    let total = beta * mask + (1.0 - beta) * normal;
    Ok(EvalOutput {
        loss: LossBreakdown {
            total,
            mask,
            normal,
            per_view,
        },
        grad,
    })
}

/// Scores a grid against prior views without optimizing: the weighted
/// objective `beta * mask_mse + (1 - beta) * normal_misalignment`, both
/// terms averaged over views, plus the per-view breakdown.
pub fn loss_eval(
    grid: &SdfGrid,
    views: &ViewSet,
    beta: f64,
    tau: f64,
    samples_per_ray: usize,
) -> Result<LossBreakdown> {
    if !(beta.is_finite() && (0.0..=1.0).contains(&beta)) {
        return Err(Error::invalid("beta", format!("got {beta}")));
    }
    views.validate()?;
    Ok(eval_views(grid, views, beta, tau, samples_per_ray, false)?.loss)
}

/// One optimizer iteration as recorded in the loss trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    /// Global iteration index (refinement continues the coarse count).
    pub iter: usize,
    /// Mask-term weight used this iteration.
    pub beta: f64,
    /// Projection softness used this iteration, world units.
    pub tau: f64,
    /// Total objective value.
    pub loss: f64,
    /// Mask term (view average).
    pub l_mask: f64,
    /// Normal term (view average).
    pub l_normal: f64,
}

/// Writes a loss trace as CSV with header
/// `iter,beta,tau,loss,L_mask,L_normal`.
pub fn write_trace_csv(rows: &[TraceRow], path: &Path) -> Result<()> {
    let mut out = String::from("iter,beta,tau,loss,L_mask,L_normal\n");
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            r.iter, r.beta, r.tau, r.loss, r.l_mask, r.l_normal
        )
        .expect("writing to a String cannot fail");
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Deterministic Adam over a flat parameter vector.
struct Adam {
    b1: f64,
    b2: f64,
    eps: f64,
    t: i32,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    fn new(len: usize, decay: (f64, f64), eps: f64) -> Self {
        Self {
            b1: decay.0,
            b2: decay.1,
            eps,
            t: 0,
            m: vec![0.0; len],
            v: vec![0.0; len],
        }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        debug_assert_eq!(params.len(), grad.len());
        self.t += 1;
        let bc1 = 1.0 - self.b1.powi(self.t);
        let bc2 = 1.0 - self.b2.powi(self.t);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = self.b1 * self.m[i] + (1.0 - self.b1) * g;
            self.v[i] = self.b2 * self.v[i] + (1.0 - self.b2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

/// Coarse stage: Adam on the latent code through the decoder, following
/// the beta/tau schedules from iteration 0. Returns the best-loss iterate
/// (not the last) and one trace row per iteration, recorded before each
/// update. Fails with [`Error::NonFiniteLoss`] if the objective leaves the
/// finite range.
pub fn optimize_coarse(
    init: &LatentCode,
    views: &ViewSet,
    cfg: &ReconConfig,
) -> Result<(LatentCode, Vec<TraceRow>)> {
    cfg.validate()?;
    views.validate()?;
    let mut phi = init.clone();
    let mut adam = Adam::new(phi.values().len(), cfg.moment_decay, cfg.adam_epsilon);
    let mut trace = Vec::with_capacity(cfg.coarse_iters);
    let mut best: Option<(f64, LatentCode)> = None;

    for iter in 0..cfg.coarse_iters {
        let grid = decode(&phi, &cfg.codec)?;
        let beta = beta_schedule(iter, cfg);
        let tau = tau_schedule(iter, cfg, grid.spacing());
        let out = eval_views(&grid, views, beta, tau, cfg.samples_per_ray, true)?;
        if !out.loss.total.is_finite() {
            return Err(Error::NonFiniteLoss {
                stage: "coarse",
                iteration: iter,
            });
        }
        trace.push(TraceRow {
            iter,
            beta,
            tau,
            loss: out.loss.total,
            l_mask: out.loss.mask,
            l_normal: out.loss.normal,
        });
        if best.as_ref().is_none_or(|(b, _)| out.loss.total < *b) {
            best = Some((out.loss.total, phi.clone()));
        }
        let grad_grid = out.grad.expect("gradient was requested");
        let cot_latent = decode_vjp(&phi, &cfg.codec, grad_grid.values())?;
        adam.step(phi.values_mut(), &cot_latent, cfg.coarse_step);
    }

    let (_, best_phi) = best.expect("coarse_iters >= 1 guarantees an iterate");
    Ok((best_phi, trace))
}

/// Refinement stage: optimizes a per-voxel residual on top of the decoded
/// base, clamping it to `residual_cap_voxels * spacing` after every step.
/// Schedules continue at iteration `coarse_iters`, so `tau` stays at its
/// sharp end value.
///
/// Under fixation (the default) the base is decoded once and the returned
/// latent is the input, bit for bit. With `use_fixation` off, the latent
/// receives Adam updates too and the base is re-decoded every iteration.
/// Returns the (possibly updated) latent, the best-loss residual as a grid,
/// and the trace; zero iterations yield a zero residual.
pub fn optimize_refine(
    latent: &LatentCode,
    views: &ViewSet,
    cfg: &ReconConfig,
) -> Result<(LatentCode, SdfGrid, Vec<TraceRow>)> {
    cfg.validate()?;
    views.validate()?;
    let mut phi = latent.clone();
    let mut base = decode(&phi, &cfg.codec)?;
    let cap = cfg.residual_cap_voxels * base.spacing();
    let mut residual = vec![0.0; base.values().len()];
    let mut adam_r = Adam::new(residual.len(), cfg.moment_decay, cfg.adam_epsilon);
    let mut adam_phi =
        (!cfg.use_fixation).then(|| Adam::new(phi.values().len(), cfg.moment_decay, cfg.adam_epsilon));
    let mut trace = Vec::with_capacity(cfg.refine_iters);
    let mut best: Option<(f64, LatentCode, Vec<f64>)> = None;

    for step in 0..cfg.refine_iters {
        let iter = cfg.coarse_iters + step;
        let mut grid = base.clone();
        for (g, r) in grid.values_mut().iter_mut().zip(&residual) {
            *g += r;
        }
        let beta = beta_schedule(iter, cfg);
        let tau = tau_schedule(iter, cfg, base.spacing());
        let out = eval_views(&grid, views, beta, tau, cfg.samples_per_ray, true)?;
        if !out.loss.total.is_finite() {
            return Err(Error::NonFiniteLoss {
                stage: "refine",
                iteration: iter,
            });
        }
        trace.push(TraceRow {
            iter,
            beta,
            tau,
            loss: out.loss.total,
            l_mask: out.loss.mask,
            l_normal: out.loss.normal,
        });
        if best.as_ref().is_none_or(|(b, _, _)| out.loss.total < *b) {
            best = Some((out.loss.total, phi.clone(), residual.clone()));
        }
        let grad = out.grad.expect("gradient was requested");
        adam_r.step(&mut residual, grad.values(), cfg.refine_step);
        for r in &mut residual {
            *r = r.clamp(-cap, cap);
        }
        if let Some(adam) = &mut adam_phi {
            let cot_latent = decode_vjp(&phi, &cfg.codec, grad.values())?;
            adam.step(phi.values_mut(), &cot_latent, cfg.refine_step);
            base = decode(&phi, &cfg.codec)?;
        }
    }

    let (phi_out, r_out) = match best {
        Some((_, p, r)) => (p, r),
        None => (phi, residual),
    };
    let residual_grid = SdfGrid::new(base.dims(), base.origin(), base.spacing(), r_out)?;
    Ok((phi_out, residual_grid, trace))
}

/// Box-averages a view set down to `target_side` pixels wide (the side
/// must divide the current width; height shrinks by the same factor).
/// Masks are averaged; normals are averaged and renormalized, falling back
/// to zero when a block holds no direction at all. Depth and color are
/// dropped: the objective does not consume them.
pub fn downsample_viewset(views: &ViewSet, target_side: usize) -> Result<ViewSet> {
    views.validate()?;
    if views.images.len() != views.views.len() {
        return Err(Error::invalid(
            "views",
            "downsampling requires one image bundle per view".to_string(),
        ));
    }
    let width = views.views[0].width;
    let height = views.views[0].height;
    if target_side == 0 || width % target_side != 0 {
        return Err(Error::invalid(
            "opt_image_size",
            format!("{target_side} does not divide the view width {width}"),
        ));
    }
    let factor = width / target_side;
    if height % factor != 0 {
        return Err(Error::invalid(
            "opt_image_size",
            format!("downsample factor {factor} does not divide the view height {height}"),
        ));
    }
    if factor == 1 {
        return Ok(views.clone());
    }

    let (out_w, out_h) = (width / factor, height / factor);
    let mut out = ViewSet {
        views: Vec::with_capacity(views.views.len()),
        images: Vec::with_capacity(views.views.len()),
    };
    for (view, images) in views.views.iter().zip(&views.images) {
        let mut small = *view;
        small.width = out_w;
        small.height = out_h;

        let mut mask = RenderImage::new(out_w, out_h, 1, 0.0)?;
        let inv = 1.0 / (factor * factor) as f64;
        for y in 0..out_h {
            for x in 0..out_w {
                let mut sum = 0.0;
                for dy in 0..factor {
                    for dx in 0..factor {
                        sum += images.mask.get(x * factor + dx, y * factor + dy, 0);
                    }
                }
                mask.set(x, y, 0, sum * inv);
            }
        }

        let normal = match &images.normal {
            Some(src) => {
                let mut img = RenderImage::new(out_w, out_h, 3, 0.0)?;
                for y in 0..out_h {
                    for x in 0..out_w {
                        let mut sum = crate::Vec3::zeros();
                        for dy in 0..factor {
                            for dx in 0..factor {
                                sum += src.get3(x * factor + dx, y * factor + dy);
                            }
                        }
                        let norm = sum.norm();
                        if norm > 1e-12 {
                            img.set3(x, y, sum / norm);
                        }
                    }
                }
                Some(img)
            }
            None => None,
        };

        out.views.push(small);
        out.images.push(ViewImages {
            mask,
            depth: None,
            normal,
            color: None,
        });
    }
    out.validate()?;
    Ok(out)
}

/// A finished reconstruction.
#[derive(Debug, Clone)]
pub struct ReconResult {
    /// Latent code after both stages. Under fixation this is the coarse
    /// result unchanged.
    pub latent: LatentCode,
    /// Decoded grid of the coarse-stage latent, before refinement.
    pub coarse_grid: SdfGrid,
    /// Clamped residual field from the refinement stage.
    pub residual: SdfGrid,
    /// `decode(latent) + residual`: the reconstruction the pipeline
    /// reports.
    pub final_grid: SdfGrid,
    /// Per-iteration loss rows across both stages; row index equals the
    /// global iteration.
    pub trace: Vec<TraceRow>,
    /// First trace index whose loss dropped below
    /// [`ReconConfig::loss_threshold`], if any did.
    pub iterations_to_threshold: Option<usize>,
}

/// Runs the full reconstruction: space-carved (or zero) initialization,
/// coarse latent optimization, then clamped residual refinement.
///
/// The views must carry masks and normals; carving runs at their native
/// resolution while the optimizer consumes a box-averaged copy at
/// `opt_image_size`. Fails with [`Error::NoForeground`] when any mask is
/// empty.
pub fn reconstruct(views: &ViewSet, cfg: &ReconConfig) -> Result<ReconResult> {
    cfg.validate()?;
    views.validate()?;
    if views.images.len() != views.views.len() {
        return Err(Error::invalid(
            "views",
            "reconstruction requires one image bundle per view".to_string(),
        ));
    }
    for (i, images) in views.images.iter().enumerate() {
        if images.normal.is_none() {
            return Err(Error::invalid(
                "views",
                format!("view {i} lacks the normal image reconstruction requires"),
            ));
        }
        if !images.mask.values().iter().any(|&m| m >= 0.5) {
            return Err(Error::NoForeground {
                reason: format!("view {i} has an empty mask"),
            });
        }
    }

    let proto = SdfGrid::centered_dims(cfg.codec.fine_dims, cfg.world_extent)?;
    let phi0 = if cfg.use_init {
        carve_init(views, &proto, &cfg.codec, cfg.carve_margin_px)?
    } else {
        let (origin, spacing) = LatentCode::geometry_for(&proto, &cfg.codec)?;
        let (lx, ly, lz) = cfg.codec.latent_dims;
        LatentCode::new(cfg.codec.latent_dims, origin, spacing, vec![0.0; lx * ly * lz])?
    };

    let opt_views = downsample_viewset(views, cfg.opt_image_size)?;
    let (phi_star, mut trace) = optimize_coarse(&phi0, &opt_views, cfg)?;
    let coarse_grid = decode(&phi_star, &cfg.codec)?;
    let (latent, residual, trace_refine) = optimize_refine(&phi_star, &opt_views, cfg)?;
    trace.extend(trace_refine);

    let base = decode(&latent, &cfg.codec)?;
    let mut final_grid = base;
    for (g, r) in final_grid.values_mut().iter_mut().zip(residual.values()) {
        *g += r;
    }
    let iterations_to_threshold = trace.iter().position(|r| r.loss < cfg.loss_threshold);
    Ok(ReconResult {
        latent,
        coarse_grid,
        residual,
        final_grid,
        trace,
        iterations_to_threshold,
    })
}
