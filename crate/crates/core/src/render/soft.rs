//! Differentiable soft projection of an SDF grid to silhouette, expected
//! depth, and surface-normal images, with an exact reverse-mode gradient.
//!
//! Per pixel, the view ray is marched with `samples_per_ray` midpoint
//! samples over its intersection with the grid's sampled box. Writing
//! `a_j = -s(p_j)/tau` for the trilinearly interpolated SDF at sample `j`:
//!
//! - the soft mask is a smoothed min of the SDF along the ray,
//!   `m = logistic(logsumexp_j(a_j) - ln N)`, which tends to the hard
//!   silhouette indicator as `tau -> 0` and is bounded by
//!   `logistic(-min_j s_j / tau)`;
//! - depth is the transmittance-weighted expectation of the ray parameter:
//!   densities `beta_j = (delta/h) * softplus(a_j)` give weights
//!   `w_j = T_j * (1 - exp(-beta_j))` with `T_j = exp(-sum_{l<j} beta_l)`,
//!   and `D = sum w_j t_j / sum w_j`;
//! - the normal is the normalized central-difference gradient of the grid
//!   at the expected surface point `o + D * dir`.
//!
//! Pixels whose ray misses the grid, or whose total weight stays below a
//! tiny floor, are background: mask 0 (miss only), depth `INFINITY`,
//! normal zero, and they carry no gradient. Both passes parallelize over
//! fixed row bands and merge in band order, so results are bit-identical
//! regardless of thread count.

use crate::error::{Error, Result};
use crate::render::{RenderImage, View};
use crate::sdf::SdfGrid;
use crate::Vec3;
use nalgebra::Matrix3;
use rayon::prelude::*;

/// Minimum accepted `samples_per_ray`.
pub(crate) const MIN_SAMPLES_PER_RAY: usize = 16;
/// Total-weight floor below which depth/normal are background.
const WEIGHT_FLOOR: f64 = 1e-9;
/// Transmittance floor past which remaining samples add nothing to the
/// depth weights (their contribution is below f64 noise).
const TRANSMITTANCE_CUTOFF: f64 = 1e-14;
/// Rows per parallel accumulation band in the backward pass.
const BAND_ROWS: usize = 8;

/// Soft projection of one view: mask, expected ray depth, world normals.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftRender {
    /// Soft silhouette in [0, 1], 1 channel.
    pub mask: RenderImage,
    /// Expected distance along the unit pixel ray, `INFINITY` background.
    pub depth: RenderImage,
    /// Unit world-space normal at the expected surface point, zero
    /// background, 3 channels.
    pub normal: RenderImage,
}

/// Per-pixel loss gradients fed into [`soft_project_backward`].
#[derive(Debug, Clone, Copy, Default)]
pub struct SoftCotangents<'a> {
    /// d(loss)/d(mask pixel), 1 channel.
    pub mask: Option<&'a RenderImage>,
    /// d(loss)/d(normal pixel), 3 channels.
    pub normal: Option<&'a RenderImage>,
}

/// Numerically stable logistic function.
#[inline]
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Numerically stable `ln(1 + exp(x))`.
#[inline]
fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

/// Cached camera frame for generating per-pixel rays.
struct RayGen {
    pos: Vec3,
    rot: Matrix3<f64>,
    th_x: f64,
    th_y: f64,
    width: f64,
    height: f64,
}

impl RayGen {
    fn of(view: &View) -> RayGen {
        let (th_x, th_y) = view.tan_half();
        RayGen {
            pos: view.position(),
            rot: view.rotation(),
            th_x,
            th_y,
            width: view.width as f64,
            height: view.height as f64,
        }
    }

    /// Unit-direction world ray through the center of pixel `(x, y)`.
    #[inline]
    fn ray(&self, x: usize, y: usize) -> (Vec3, Vec3) {
        let x_ndc = 2.0 * (x as f64 + 0.5) / self.width - 1.0;
        let y_ndc = 1.0 - 2.0 * (y as f64 + 0.5) / self.height;
        let d_cam = Vec3::new(x_ndc * self.th_x, y_ndc * self.th_y, -1.0);
        ((self.pos), (self.rot * d_cam).normalize())
    }
}

/// Intersects the ray with the grid's sampled box, returning the clamped
/// `(t_enter, t_exit)` with `t_enter >= 0`, or `None` on a miss.
fn ray_box_range(grid: &SdfGrid, o: Vec3, dir: Vec3) -> Option<(f64, f64)> {
    let (lo, hi) = grid.sample_box();
    let mut t0 = 0.0f64;
    let mut t1 = f64::INFINITY;
    for a in 0..3 {
        let d = dir[a];
        if d.abs() < 1e-300 {
            if o[a] < lo[a] || o[a] > hi[a] {
                return None;
            }
        } else {
            let ta = (lo[a] - o[a]) / d;
            let tb = (hi[a] - o[a]) / d;
            let (near, far) = if ta <= tb { (ta, tb) } else { (tb, ta) };
            t0 = t0.max(near);
            t1 = t1.min(far);
        }
    }
    (t0 < t1).then_some((t0, t1))
}

fn validate_soft_params(tau: f64, samples_per_ray: usize) -> Result<()> {
    if !(tau.is_finite() && tau > 0.0) {
        return Err(Error::invalid("tau", format!("must be positive, got {tau}")));
    }
    if samples_per_ray < MIN_SAMPLES_PER_RAY {
        return Err(Error::invalid(
            "samples_per_ray",
            format!("need at least {MIN_SAMPLES_PER_RAY}, got {samples_per_ray}"),
        ));
    }
    Ok(())
}

struct PixelForward {
    mask: f64,
    depth: f64,
    normal: Vec3,
}

const BACKGROUND: PixelForward = PixelForward {
    mask: 0.0,
    depth: f64::INFINITY,
    normal: Vec3::new(0.0, 0.0, 0.0),
};

/// Forward evaluation of one pixel. `s_buf` is caller-provided scratch of
/// length `n`.
fn forward_ray(
    grid: &SdfGrid,
    o: Vec3,
    dir: Vec3,
    tau: f64,
    n: usize,
    s_buf: &mut [f64],
) -> PixelForward {
    let Some((t0, t1)) = ray_box_range(grid, o, dir) else {
        return BACKGROUND;
    };
    let delta = (t1 - t0) / n as f64;
    let inv_tau = 1.0 / tau;

    let mut a_max = f64::NEG_INFINITY;
    for (j, slot) in s_buf.iter_mut().enumerate() {
        let t = t0 + (j as f64 + 0.5) * delta;
        let s = grid.sample_trilinear(o + dir * t);
        *slot = s;
        a_max = a_max.max(-s * inv_tau);
    }
    let mut exp_sum = 0.0;
    for &s in s_buf.iter() {
        exp_sum += (-s * inv_tau - a_max).exp();
    }
    let lse = a_max + exp_sum.ln();
    let mask = sigmoid(lse - (n as f64).ln());

    let density_scale = delta / grid.spacing();
    let mut transmittance = 1.0;
    let mut w_sum = 0.0;
    let mut wt_sum = 0.0;
    for (j, &s) in s_buf.iter().enumerate() {
        if transmittance < TRANSMITTANCE_CUTOFF {
            break;
        }
        let beta = density_scale * softplus(-s * inv_tau);
        let pass = (-beta).exp();
        let alpha = -(-beta).exp_m1();
        let w = transmittance * alpha;
        w_sum += w;
        wt_sum += w * (t0 + (j as f64 + 0.5) * delta);
        transmittance *= pass;
    }
    if w_sum < WEIGHT_FLOOR {
        return PixelForward {
            mask,
            ..BACKGROUND
        };
    }
    let depth = wt_sum / w_sum;
    let g = grid.gradient_central(o + dir * depth);
    let g_norm = g.norm();
    let normal = if g_norm > 1e-12 { g / g_norm } else { Vec3::zeros() };
    PixelForward {
        mask,
        depth,
        normal,
    }
}

/// Renders the grid's soft silhouette, expected depth, and normals under
/// the view. Deterministic across thread counts.
pub fn soft_project(
    grid: &SdfGrid,
    view: &View,
    tau: f64,
    samples_per_ray: usize,
) -> Result<SoftRender> {
    validate_soft_params(tau, samples_per_ray)?;
    view.validate()?;
    let (w, h) = (view.width, view.height);
    let rays = RayGen::of(view);

    let mut mask = RenderImage::new(w, h, 1, 0.0)?;
    let mut depth = RenderImage::new(w, h, 1, f64::INFINITY)?;
    let mut normal = RenderImage::new(w, h, 3, 0.0)?;

    let mask_rows = mask.values_mut().par_chunks_mut(w);
    let depth_rows = depth.values_mut().par_chunks_mut(w);
    let normal_rows = normal.values_mut().par_chunks_mut(3 * w);
    mask_rows
        .zip(depth_rows)
        .zip(normal_rows)
        .enumerate()
        .for_each(|(y, ((mrow, drow), nrow))| {
            let mut s_buf = vec![0.0f64; samples_per_ray];
            for x in 0..w {
                let (o, dir) = rays.ray(x, y);
                let px = forward_ray(grid, o, dir, tau, samples_per_ray, &mut s_buf);
                mrow[x] = px.mask;
                drow[x] = px.depth;
                nrow[3 * x] = px.normal.x;
                nrow[3 * x + 1] = px.normal.y;
                nrow[3 * x + 2] = px.normal.z;
            }
        });

    Ok(SoftRender {
        mask,
        depth,
        normal,
    })
}

/// Exact reverse-mode gradient of [`soft_project`]'s mask and normal
/// outputs with respect to every grid value.
///
/// `cotangents` carries the per-pixel loss gradients; missing images are
/// treated as zero. The returned grid shares the input's geometry and holds
/// `d(loss)/d(value)` per voxel. Deterministic across thread counts.
pub fn soft_project_backward(
    grid: &SdfGrid,
    view: &View,
    tau: f64,
    samples_per_ray: usize,
    cotangents: &SoftCotangents,
) -> Result<SdfGrid> {
    validate_soft_params(tau, samples_per_ray)?;
    view.validate()?;
    let (w, h) = (view.width, view.height);
    if let Some(img) = cotangents.mask {
        if img.width() != w || img.height() != h || img.channels() != 1 {
            return Err(Error::ShapeMismatch {
                what: "mask cotangent",
                expected: format!("{w}x{h}x1"),
                got: format!("{}x{}x{}", img.width(), img.height(), img.channels()),
            });
        }
    }
    if let Some(img) = cotangents.normal {
        if img.width() != w || img.height() != h || img.channels() != 3 {
            return Err(Error::ShapeMismatch {
                what: "normal cotangent",
                expected: format!("{w}x{h}x3"),
                got: format!("{}x{}x{}", img.width(), img.height(), img.channels()),
            });
        }
    }

    let rays = RayGen::of(view);
    let n_values = grid.values().len();
    let bands = h.div_ceil(BAND_ROWS);
    let partials: Vec<Vec<f64>> = (0..bands)
        .into_par_iter()
        .map(|band| {
            let mut acc = vec![0.0f64; n_values];
            let y_end = ((band + 1) * BAND_ROWS).min(h);
            for y in band * BAND_ROWS..y_end {
                for x in 0..w {
                    let cot_mask = cotangents.mask.map_or(0.0, |img| img.get(x, y, 0));
                    let cot_normal = cotangents
                        .normal
                        .map_or_else(Vec3::zeros, |img| img.get3(x, y));
                    if cot_mask == 0.0 && cot_normal == Vec3::zeros() {
                        continue;
                    }
                    let (o, dir) = rays.ray(x, y);
                    backward_ray(
                        grid,
                        o,
                        dir,
                        tau,
                        samples_per_ray,
                        cot_mask,
                        cot_normal,
                        &mut acc,
                    );
                }
            }
            acc
        })
        .collect();

    let mut out = vec![0.0f64; n_values];
    for band in partials {
        for (slot, v) in out.iter_mut().zip(band) {
            *slot += v;
        }
    }
    SdfGrid::new(grid.dims(), grid.origin(), grid.spacing(), out)
}

/// Accumulates one pixel's contribution to the grid cotangent.
#[allow(clippy::too_many_arguments)]
fn backward_ray(
    grid: &SdfGrid,
    o: Vec3,
    dir: Vec3,
    tau: f64,
    n: usize,
    cot_mask: f64,
    cot_normal: Vec3,
    acc: &mut [f64],
) {
    let Some((t0, t1)) = ray_box_range(grid, o, dir) else {
        return;
    };
    let delta = (t1 - t0) / n as f64;
    let inv_tau = 1.0 / tau;
    let t_at = |j: usize| t0 + (j as f64 + 0.5) * delta;

    // Forward replay, keeping the trilinear stencils and weight terms.
    let mut samples = Vec::with_capacity(n);
    let mut a_max = f64::NEG_INFINITY;
    for j in 0..n {
        let s = grid.tri_sample(o + dir * t_at(j));
        a_max = a_max.max(-s.value * inv_tau);
        samples.push(s);
    }
    let mut exp_sum = 0.0;
    for s in &samples {
        exp_sum += (-s.value * inv_tau - a_max).exp();
    }
    let lse = a_max + exp_sum.ln();
    let mask = sigmoid(lse - (n as f64).ln());

    let density_scale = delta / grid.spacing();
    let mut trans = vec![0.0f64; n];
    let mut pass = vec![1.0f64; n];
    let mut weight = vec![0.0f64; n];
    let mut transmittance = 1.0;
    let mut w_sum = 0.0;
    let mut wt_sum = 0.0;
    let mut cut = 0;
    for (j, s) in samples.iter().enumerate() {
        if transmittance < TRANSMITTANCE_CUTOFF {
            break;
        }
        trans[j] = transmittance;
        let beta = density_scale * softplus(-s.value * inv_tau);
        pass[j] = (-beta).exp();
        let alpha = -(-beta).exp_m1();
        weight[j] = transmittance * alpha;
        w_sum += weight[j];
        wt_sum += weight[j] * t_at(j);
        transmittance *= pass[j];
        cut = j + 1;
    }

    // d(loss)/d(a_j) accumulates mask and normal paths; a_j = -s_j / tau.
    let mut cot_a = vec![0.0f64; n];

    // Mask path: m = sigmoid(lse - ln n), d lse / d a_j = softmax_j.
    let dmask = cot_mask * mask * (1.0 - mask);

    // Normal path, active only where the forward pass produced a normal.
    if cot_normal != Vec3::zeros() && w_sum >= WEIGHT_FLOOR {
        let depth = wt_sum / w_sum;
        let probe = grid.gradient_probe(o + dir * depth);
        let g = probe.gradient;
        let g_norm = g.norm();
        if g_norm > 1e-12 {
            let n_vec = g / g_norm;
            // n = g/|g|  =>  cot_g = (I - n n^T) cot_n / |g|.
            let cot_g = (cot_normal - n_vec * n_vec.dot(&cot_normal)) / g_norm;
            // Direct dependence of the probes on grid values.
            probe.scatter(cot_g, |idx, amount| acc[idx] += amount);
            // Dependence through the probe position x = o + D * dir.
            let cot_x = probe.jac.transpose() * cot_g;
            let cot_depth = cot_x.dot(&dir);
            // D = sum w t / sum w  =>  dD/dw_j = (t_j - D) / W; then
            // d w_j / d beta_k is T_k e^{-beta_k} for k = j and -w_j for
            // k < j, handled with a suffix sum.
            let mut suffix = 0.0;
            for j in (0..cut).rev() {
                let cot_w = cot_depth * (t_at(j) - depth) / w_sum;
                let cot_beta = cot_w * trans[j] * pass[j] - suffix;
                suffix += cot_w * weight[j];
                let a_j = -samples[j].value * inv_tau;
                cot_a[j] = cot_beta * density_scale * sigmoid(a_j);
            }
        }
    }

    for (j, s) in samples.iter().enumerate() {
        let mut total = cot_a[j];
        if dmask != 0.0 {
            total += dmask * (-s.value * inv_tau - lse).exp();
        }
        if total == 0.0 {
            continue;
        }
        let cot_s = -total * inv_tau;
        for &(idx, w) in &s.corners {
            acc[idx] += cot_s * w;
        }
    }
}
