//! Dense signed distance grids: storage, interpolation, and smoothing.
//!
//! An [`SdfGrid`] stores one scalar per voxel center, negative inside the
//! surface, with x varying fastest in memory, then y, then z. Positions are
//! world-space; voxel `(0, 0, 0)`'s center sits at `origin` and neighbors are
//! `spacing` apart on every axis. Sampling outside the grid clamps to the
//! border value, so the continuous field is defined everywhere.

mod kernel;
pub mod io;

pub use kernel::{blur, blur_adjoint, make_kernel, GaussianKernel};

use crate::error::{Error, Result};
use crate::Vec3;
use rayon::prelude::*;

/// A dense scalar field sampled at voxel centers.
///
/// Values are stored x-fastest: `index = x + nx * (y + ny * z)`. The disk
/// format quantizes values to f32; a grid that has been through one
/// save/load cycle round-trips bit-exactly thereafter.
#[derive(Debug, Clone, PartialEq)]
pub struct SdfGrid {
    dims: (usize, usize, usize),
    origin: Vec3,
    spacing: f64,
    values: Vec<f64>,
}

impl SdfGrid {
    /// Builds a grid from raw parts, validating shape and geometry.
    pub fn new(
        dims: (usize, usize, usize),
        origin: Vec3,
        spacing: f64,
        values: Vec<f64>,
    ) -> Result<Self> {
        if dims.0 < 2 || dims.1 < 2 || dims.2 < 2 {
            return Err(Error::invalid(
                "dims",
                format!("every axis needs at least 2 voxels, got {dims:?}"),
            ));
        }
        if !(spacing.is_finite() && spacing > 0.0) {
            return Err(Error::invalid(
                "spacing",
                format!("must be finite and positive, got {spacing}"),
            ));
        }
        let expect = dims.0 * dims.1 * dims.2;
        if values.len() != expect {
            return Err(Error::ShapeMismatch {
                what: "grid values",
                expected: format!("{expect}"),
                got: format!("{}", values.len()),
            });
        }
        Ok(Self {
            dims,
            origin,
            spacing,
            values,
        })
    }

    /// A grid filled with a constant value.
    pub fn filled(dims: (usize, usize, usize), origin: Vec3, spacing: f64, v: f64) -> Result<Self> {
        let n = dims.0 * dims.1 * dims.2;
        Self::new(dims, origin, spacing, vec![v; n])
    }

    /// A cube-shaped grid centered on the world origin covering
    /// `[-extent/2, extent/2]` per axis, with `spacing = extent / n`.
    pub fn centered(n: usize, extent: f64) -> Result<Self> {
        Self::centered_dims((n, n, n), extent)
    }

    /// An origin-centered grid with independent axis sizes. The spacing is
    /// `extent / nx`; the other axes cover `spacing * n` around zero.
    pub fn centered_dims(dims: (usize, usize, usize), extent: f64) -> Result<Self> {
        if !(extent.is_finite() && extent > 0.0) {
            return Err(Error::invalid("extent", format!("got {extent}")));
        }
        let spacing = extent / dims.0 as f64;
        let origin = Vec3::new(
            -spacing * (dims.0 as f64 - 1.0) / 2.0,
            -spacing * (dims.1 as f64 - 1.0) / 2.0,
            -spacing * (dims.2 as f64 - 1.0) / 2.0,
        );
        Self::filled(dims, origin, spacing, 0.0)
    }

    /// Evaluates `f` at every voxel center of a grid shaped like `proto`.
    ///
    /// Runs voxel-parallel; each output element is written exactly once, so
    /// the result is identical across thread counts.
    pub fn from_fn(proto: &SdfGrid, f: impl Fn(Vec3) -> f64 + Sync) -> SdfGrid {
        let mut g = proto.clone();
        let (nx, ny, _) = g.dims;
        let origin = g.origin;
        let spacing = g.spacing;
        g.values
            .par_chunks_mut(nx * ny)
            .enumerate()
            .for_each(|(z, slab)| {
                for y in 0..ny {
                    for x in 0..nx {
                        let p = origin
                            + Vec3::new(x as f64, y as f64, z as f64) * spacing;
                        slab[x + nx * y] = f(p);
                    }
                }
            });
        g
    }

    /// Grid dimensions `(nx, ny, nz)`.
    pub fn dims(&self) -> (usize, usize, usize) {
        self.dims
    }

    /// World position of voxel `(0, 0, 0)`'s center.
    pub fn origin(&self) -> Vec3 {
        self.origin
    }

    /// Distance between neighboring voxel centers.
    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    /// All values, x-fastest.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Mutable access to the values.
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// Linear index of voxel `(x, y, z)`.
    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        debug_assert!(x < self.dims.0 && y < self.dims.1 && z < self.dims.2);
        x + self.dims.0 * (y + self.dims.1 * z)
    }

    /// Value at voxel `(x, y, z)`.
    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> f64 {
        self.values[self.index(x, y, z)]
    }

    /// Sets the value at voxel `(x, y, z)`.
    #[inline]
    pub fn set(&mut self, x: usize, y: usize, z: usize, v: f64) {
        let i = self.index(x, y, z);
        self.values[i] = v;
    }

    /// World position of a voxel center.
    #[inline]
    pub fn voxel_center(&self, x: usize, y: usize, z: usize) -> Vec3 {
        self.origin + Vec3::new(x as f64, y as f64, z as f64) * self.spacing
    }

    /// Axis-aligned box spanned by the voxel centers (the region where the
    /// interpolated field varies; beyond it the field clamps to the border).
    pub fn sample_box(&self) -> (Vec3, Vec3) {
        let hi = self.origin
            + Vec3::new(
                (self.dims.0 - 1) as f64,
                (self.dims.1 - 1) as f64,
                (self.dims.2 - 1) as f64,
            ) * self.spacing;
        (self.origin, hi)
    }

    /// Axis-aligned box covering the full voxel extent (half a voxel beyond
    /// the outermost centers on every side).
    pub fn voxel_box(&self) -> (Vec3, Vec3) {
        let (lo, hi) = self.sample_box();
        let h = Vec3::new(1.0, 1.0, 1.0) * (self.spacing / 2.0);
        (lo - h, hi + h)
    }

    /// Smallest value in the grid.
    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Fraction of voxels with value below `level`.
    pub fn occupancy_fraction(&self, level: f64) -> f64 {
        let n = self.values.iter().filter(|v| **v < level).count();
        n as f64 / self.values.len() as f64
    }

    /// Trilinear interpolation at a world position, clamping to border values
    /// outside the grid.
    pub fn sample_trilinear(&self, p: Vec3) -> f64 {
        self.tri_sample(p).value
    }

    /// Central-difference gradient of the interpolated field with step equal
    /// to `spacing`, switching to one-sided differences where a probe would
    /// leave the sampled region.
    pub fn gradient_central(&self, p: Vec3) -> Vec3 {
        self.gradient_probe(p).gradient
    }

    /// Full trilinear sample with the stencil needed for adjoint passes.
    pub(crate) fn tri_sample(&self, p: Vec3) -> TriSample {
        let (nx, ny, nz) = self.dims;
        let g = (p - self.origin) / self.spacing;
        let mut i0 = [0usize; 3];
        let mut f = [0.0f64; 3];
        let mut interior = [true; 3];
        for (a, &n) in [nx, ny, nz].iter().enumerate() {
            let top = (n - 1) as f64;
            let mut c = g[a];
            if c < 0.0 {
                c = 0.0;
                interior[a] = false;
            } else if c > top {
                c = top;
                interior[a] = false;
            }
            let base = (c.floor() as usize).min(n - 2);
            i0[a] = base;
            f[a] = c - base as f64;
        }
        let (x0, y0, z0) = (i0[0], i0[1], i0[2]);
        let idx = |dx: usize, dy: usize, dz: usize| {
            (x0 + dx) + nx * ((y0 + dy) + ny * (z0 + dz))
        };
        let mut c = [0.0f64; 8];
        for dz in 0..2 {
            for dy in 0..2 {
                for dx in 0..2 {
                    c[dx + 2 * dy + 4 * dz] = self.values[idx(dx, dy, dz)];
                }
            }
        }
        let (fx, fy, fz) = (f[0], f[1], f[2]);
        let u = [1.0 - fx, fx];
        let v = [1.0 - fy, fy];
        let w = [1.0 - fz, fz];
        let mut value = 0.0;
        let mut grad_f = [0.0f64; 3];
        let mut weights = [0.0f64; 8];
        for dz in 0..2 {
            for dy in 0..2 {
                for dx in 0..2 {
                    let k = dx + 2 * dy + 4 * dz;
                    let wt = u[dx] * v[dy] * w[dz];
                    weights[k] = wt;
                    value += c[k] * wt;
                    let sx = if dx == 0 { -1.0 } else { 1.0 };
                    let sy = if dy == 0 { -1.0 } else { 1.0 };
                    let sz = if dz == 0 { -1.0 } else { 1.0 };
                    grad_f[0] += c[k] * sx * v[dy] * w[dz];
                    grad_f[1] += c[k] * u[dx] * sy * w[dz];
                    grad_f[2] += c[k] * u[dx] * v[dy] * sz;
                }
            }
        }
        // The field is constant past the border, so clamped axes carry no
        // spatial derivative.
        let mut grad = Vec3::zeros();
        for a in 0..3 {
            grad[a] = if interior[a] {
                grad_f[a] / self.spacing
            } else {
                0.0
            };
        }
        let mut corners = [(0usize, 0.0f64); 8];
        for dz in 0..2 {
            for dy in 0..2 {
                for dx in 0..2 {
                    let k = dx + 2 * dy + 4 * dz;
                    corners[k] = (idx(dx, dy, dz), weights[k]);
                }
            }
        }
        TriSample {
            value,
            corners,
            grad,
        }
    }

    /// Gradient probe carrying everything adjoint passes need: the gradient,
    /// the per-axis probe samples with their combination coefficients, and
    /// the Jacobian of the gradient with respect to the probe position.
    pub(crate) fn gradient_probe(&self, p: Vec3) -> GradProbe {
        let (lo, hi) = self.sample_box();
        let h = self.spacing;
        let mut probes: Vec<(usize, f64, TriSample)> = Vec::with_capacity(6);
        let mut gradient = Vec3::zeros();
        let mut jac = nalgebra::Matrix3::<f64>::zeros();
        for a in 0..3 {
            let mut pp = p;
            let mut pm = p;
            pp[a] += h;
            pm[a] -= h;
            let plus_ok = pp[a] <= hi[a];
            let minus_ok = pm[a] >= lo[a];
            // (coefficient, position) pairs of the difference formula.
            let terms: &[(f64, Vec3)] = match (plus_ok, minus_ok) {
                (true, true) => &[(0.5 / h, pp), (-0.5 / h, pm)],
                (true, false) => &[(1.0 / h, pp), (-1.0 / h, p)],
                (false, true) => &[(1.0 / h, p), (-1.0 / h, pm)],
                (false, false) => &[],
            };
            for &(coef, pos) in terms {
                let s = self.tri_sample(pos);
                gradient[a] += coef * s.value;
                // Probe positions shift 1:1 with p, so the position Jacobian
                // is the weighted sum of interpolant gradients at the probes.
                for b in 0..3 {
                    jac[(a, b)] += coef * s.grad[b];
                }
                probes.push((a, coef, s));
            }
        }
        GradProbe {
            gradient,
            jac,
            probes,
        }
    }
}

/// Result of one trilinear sample, exposing the gather stencil.
pub(crate) struct TriSample {
    /// Interpolated value.
    pub value: f64,
    /// The eight `(linear index, weight)` pairs used.
    pub corners: [(usize, f64); 8],
    /// Spatial gradient of the interpolant at the sample (world units),
    /// zero along clamped axes.
    pub grad: Vec3,
}

/// Result of a central-difference gradient evaluation with adjoint data.
pub(crate) struct GradProbe {
    /// The finite-difference gradient.
    pub gradient: Vec3,
    /// d(gradient)/d(position), row `a` = gradient component `a`.
    pub jac: nalgebra::Matrix3<f64>,
    /// Probe samples as `(axis, coefficient, sample)`: gradient component
    /// `a` is the sum of `coef * sample.value` over entries with that axis.
    pub probes: Vec<(usize, f64, TriSample)>,
}

impl GradProbe {
    /// Scatters a cotangent on the gradient vector back to grid values.
    /// `sink(index, amount)` accumulates the contribution.
    pub fn scatter(&self, cot: Vec3, mut sink: impl FnMut(usize, f64)) {
        for (axis, coef, s) in &self.probes {
            let amount = cot[*axis] * coef;
            for &(idx, w) in &s.corners {
                sink(idx, amount * w);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn linear_grid(n: usize, a: Vec3, b: f64) -> SdfGrid {
        let proto = SdfGrid::centered(n, 2.0).unwrap();
        SdfGrid::from_fn(&proto, |p| a.dot(&p) + b)
    }

    #[test]
    fn new_rejects_bad_shapes() {
        assert!(SdfGrid::new((1, 4, 4), Vec3::zeros(), 0.1, vec![0.0; 16]).is_err());
        assert!(SdfGrid::new((4, 4, 4), Vec3::zeros(), 0.0, vec![0.0; 64]).is_err());
        assert!(SdfGrid::new((4, 4, 4), Vec3::zeros(), 0.1, vec![0.0; 63]).is_err());
        assert!(SdfGrid::new((4, 4, 4), Vec3::zeros(), f64::NAN, vec![0.0; 64]).is_err());
    }

    #[test]
    fn index_order_is_x_fastest() {
        let mut g = SdfGrid::centered(4, 2.0).unwrap();
        g.set(1, 2, 3, 7.0);
        assert_eq!(g.values()[1 + 4 * (2 + 4 * 3)], 7.0);
        assert_eq!(g.index(3, 0, 0), 3);
        assert_eq!(g.index(0, 1, 0), 4);
        assert_eq!(g.index(0, 0, 1), 16);
    }

    #[test]
    fn centered_geometry() {
        let g = SdfGrid::centered(64, 2.0).unwrap();
        assert_relative_eq!(g.spacing(), 2.0 / 64.0);
        // voxel centers span symmetric range
        let c0 = g.voxel_center(0, 0, 0);
        let c1 = g.voxel_center(63, 63, 63);
        assert_relative_eq!(c0.x, -c1.x, epsilon = 1e-12);
        assert_relative_eq!(c1.x, 1.0 - g.spacing() / 2.0, epsilon = 1e-12);
    }

    /// Trilinear interpolation reproduces affine fields exactly (the
    /// interpolant is exact on polynomials of per-axis degree one).
    #[test]
    fn trilinear_exact_on_affine_fields() {
        let a = Vec3::new(0.3, -1.1, 0.7);
        let g = linear_grid(8, a, 0.25);
        for p in [
            Vec3::new(0.1, 0.2, -0.3),
            Vec3::new(-0.61, 0.55, 0.01),
            Vec3::new(0.0, 0.0, 0.0),
        ] {
            assert_relative_eq!(g.sample_trilinear(p), a.dot(&p) + 0.25, epsilon = 1e-12);
        }
    }

    #[test]
    fn sampling_outside_clamps_to_border() {
        let a = Vec3::new(1.0, 0.0, 0.0);
        let g = linear_grid(8, a, 0.0);
        let (lo, hi) = g.sample_box();
        // Far beyond +x the value pins to the x border value.
        let far = g.sample_trilinear(Vec3::new(50.0, 0.0, 0.0));
        let edge = g.sample_trilinear(Vec3::new(hi.x, 0.0, 0.0));
        assert_relative_eq!(far, edge, epsilon = 1e-12);
        let far_lo = g.sample_trilinear(Vec3::new(-50.0, 0.0, 0.0));
        let edge_lo = g.sample_trilinear(Vec3::new(lo.x, 0.0, 0.0));
        assert_relative_eq!(far_lo, edge_lo, epsilon = 1e-12);
    }

    /// Central differences are exact for affine fields, including the
    /// one-sided fallback near boundaries.
    #[test]
    fn gradient_exact_on_affine_fields() {
        let a = Vec3::new(0.4, -0.9, 1.3);
        let g = linear_grid(8, a, -0.1);
        let (lo, hi) = g.sample_box();
        for p in [
            Vec3::new(0.0, 0.1, -0.2),
            Vec3::new(lo.x, lo.y, lo.z),          // corner: one-sided on all axes
            Vec3::new(hi.x, 0.0, hi.z),           // mixed one-sided
            Vec3::new(lo.x + 1e-9, hi.y - 1e-9, 0.0),
        ] {
            let grad = g.gradient_central(p);
            for a_i in 0..3 {
                assert_relative_eq!(grad[a_i], a[a_i], epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn gradient_probe_jacobian_matches_finite_differences() {
        // Smooth nonlinear field: quadratic bowl.
        let proto = SdfGrid::centered(16, 2.0).unwrap();
        let g = SdfGrid::from_fn(&proto, |p| p.norm_squared());
        let p = Vec3::new(0.13, -0.21, 0.08);
        let probe = g.gradient_probe(p);
        let h = 1e-6;
        for b in 0..3 {
            let mut pp = p;
            let mut pm = p;
            pp[b] += h;
            pm[b] -= h;
            let gp = g.gradient_central(pp);
            let gm = g.gradient_central(pm);
            for a in 0..3 {
                let fd = (gp[a] - gm[a]) / (2.0 * h);
                assert_relative_eq!(probe.jac[(a, b)], fd, epsilon = 1e-4, max_relative = 1e-4);
            }
        }
    }

    #[test]
    fn gradient_probe_scatter_matches_gradient_linearity() {
        // gradient is linear in grid values: probing scatter against a basis
        // perturbation must reproduce d(gradient)/d(value).
        let proto = SdfGrid::centered(6, 2.0).unwrap();
        let g = SdfGrid::from_fn(&proto, |p| p.x * 0.3 + (p.y * 1.7).sin());
        let p = Vec3::new(0.05, -0.33, 0.21);
        let probe = g.gradient_probe(p);
        let cot = Vec3::new(0.7, -0.2, 0.4);
        let mut acc = vec![0.0f64; g.values().len()];
        probe.scatter(cot, |i, v| acc[i] += v);
        // finite difference on a few touched indices
        let touched: Vec<usize> = acc
            .iter()
            .enumerate()
            .filter(|(_, v)| v.abs() > 1e-14)
            .map(|(i, _)| i)
            .take(5)
            .collect();
        assert!(!touched.is_empty());
        for idx in touched {
            let mut gp = g.clone();
            gp.values_mut()[idx] += 1e-6;
            let mut gm = g.clone();
            gm.values_mut()[idx] -= 1e-6;
            let d = (gp.gradient_central(p) - gm.gradient_central(p)) / 2e-6;
            let fd = cot.dot(&d);
            assert_relative_eq!(acc[idx], fd, epsilon = 1e-6, max_relative = 1e-6);
        }
    }

    #[test]
    fn from_fn_matches_serial_evaluation() {
        let proto = SdfGrid::centered(10, 2.0).unwrap();
        let f = |p: Vec3| (p.x * 3.0).cos() + p.y - p.z * p.z;
        let g = SdfGrid::from_fn(&proto, f);
        for z in 0..10 {
            for y in 0..10 {
                for x in 0..10 {
                    let expect = f(g.voxel_center(x, y, z));
                    assert_eq!(g.get(x, y, z), expect);
                }
            }
        }
    }
}
