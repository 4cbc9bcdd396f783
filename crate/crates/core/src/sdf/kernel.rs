//! Normalized Gaussian smoothing of voxel grids.
//!
//! The kernel weight at integer offset `o` is proportional to
//! `exp(-|o|^2 / (2 sigma^2))` over the cubic support `|o|_inf <= radius`
//! with `radius = ceil(3 sigma)`, normalized to sum to one. Because the
//! support is a full cube, the normalized 3D kernel factors exactly into
//! three normalized 1D kernels, so [`blur`] runs as three axis passes; with
//! per-axis border clamping this is algebraically identical to the direct
//! 3D convolution (clamping factorizes per axis).

use crate::error::{Error, Result};
use crate::sdf::SdfGrid;
use rayon::prelude::*;

/// A normalized Gaussian convolution kernel on the voxel lattice.
#[derive(Debug, Clone)]
pub struct GaussianKernel {
    sigma: f64,
    radius: usize,
    /// Full 3D weight table, `(2r+1)^3` entries, x-fastest, summing to one.
    weights: Vec<f64>,
    /// Normalized 1D factor, `2r+1` entries.
    line: Vec<f64>,
}

impl GaussianKernel {
    /// Standard deviation in voxel units.
    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// Support half-width: `ceil(3 sigma)`.
    pub fn radius(&self) -> usize {
        self.radius
    }

    /// The normalized 3D weight table (x-fastest over the cubic support).
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Weight at integer offset `(dx, dy, dz)`, each in `[-radius, radius]`.
    pub fn weight_at(&self, dx: i64, dy: i64, dz: i64) -> f64 {
        let r = self.radius as i64;
        debug_assert!(dx.abs() <= r && dy.abs() <= r && dz.abs() <= r);
        let n = 2 * r + 1;
        let i = (dx + r) + n * ((dy + r) + n * (dz + r));
        self.weights[i as usize]
    }

    /// The normalized 1D factor (index `i` holds offset `i - radius`).
    pub fn line(&self) -> &[f64] {
        &self.line
    }
}

/// Builds the normalized Gaussian kernel for `sigma > 0` (voxel units).
pub fn make_kernel(sigma: f64) -> Result<GaussianKernel> {
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(Error::invalid(
            "sigma",
            format!("must be finite and positive, got {sigma}"),
        ));
    }
    if sigma > 32.0 {
        return Err(Error::invalid(
            "sigma",
            format!("{sigma} is unreasonably wide (max 32 voxels)"),
        ));
    }
    let radius = (3.0 * sigma).ceil() as usize;
    let n = 2 * radius + 1;
    let inv2s2 = 1.0 / (2.0 * sigma * sigma);
    let mut line: Vec<f64> = (0..n)
        .map(|i| {
            let o = i as f64 - radius as f64;
            (-o * o * inv2s2).exp()
        })
        .collect();
    let lsum: f64 = line.iter().sum();
    for w in &mut line {
        *w /= lsum;
    }
    let mut weights = Vec::with_capacity(n * n * n);
    for z in 0..n {
        for y in 0..n {
            for x in 0..n {
                weights.push(line[x] * line[y] * line[z]);
            }
        }
    }
    // Renormalize the 3D table so its sum is 1 to the last bit regardless of
    // rounding in the products.
    let wsum: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= wsum;
    }
    Ok(GaussianKernel {
        sigma,
        radius,
        weights,
        line,
    })
}

/// Convolves the grid with the kernel `rounds` times, clamping reads past
/// the border to the border value. `rounds = 0` returns a copy.
///
/// Rounds compose exactly: `blur(g, k, 2)` is bit-identical to
/// `blur(blur(g, k, 1), k, 1)` because each round runs the same three axis
/// passes in the same order.
pub fn blur(grid: &SdfGrid, kernel: &GaussianKernel, rounds: u32) -> SdfGrid {
    let mut out = grid.clone();
    let mut scratch = vec![0.0f64; grid.values().len()];
    for _ in 0..rounds {
        blur_round(&mut out, &mut scratch, kernel);
    }
    out
}

fn blur_round(grid: &mut SdfGrid, scratch: &mut [f64], kernel: &GaussianKernel) {
    let dims = grid.dims();
    for axis in 0..3 {
        pass_axis(grid.values(), scratch, dims, axis, kernel.line(), kernel.radius());
        grid.values_mut().copy_from_slice(scratch);
    }
}

/// One 1D convolution pass along `axis`, reading `input`, writing `output`.
/// Out-of-range taps clamp to the line's end values.
fn pass_axis(
    input: &[f64],
    output: &mut [f64],
    dims: (usize, usize, usize),
    axis: usize,
    line: &[f64],
    radius: usize,
) {
    let (nx, ny, nz) = dims;
    let n_axis = [nx, ny, nz][axis];
    let stride = match axis {
        0 => 1,
        1 => nx,
        _ => nx * ny,
    };
    // Enumerate all 1D lines along `axis`; each produces an independent
    // segment of the output, so the parallel split is deterministic.
    let lines: Vec<usize> = line_starts(dims, axis);
    let chunks: Vec<(usize, Vec<f64>)> = lines
        .par_iter()
        .map(|&start| {
            let mut seg = vec![0.0f64; n_axis];
            for (i, out) in seg.iter_mut().enumerate() {
                let mut acc = 0.0;
                for (k, &w) in line.iter().enumerate() {
                    let off = k as i64 - radius as i64;
                    let j = (i as i64 + off).clamp(0, n_axis as i64 - 1) as usize;
                    acc += w * input[start + j * stride];
                }
                *out = acc;
            }
            (start, seg)
        })
        .collect();
    for (start, seg) in chunks {
        for (i, v) in seg.into_iter().enumerate() {
            output[start + i * stride] = v;
        }
    }
}

/// Adjoint of [`blur`]: propagates a cotangent on the blurred grid back to a
/// cotangent on the input grid. Satisfies `<blur(x), y> == <x, blur_adjoint(y)>`.
pub fn blur_adjoint(cotangent: &SdfGrid, kernel: &GaussianKernel, rounds: u32) -> SdfGrid {
    let mut out = cotangent.clone();
    let mut scratch = vec![0.0f64; cotangent.values().len()];
    for _ in 0..rounds {
        // Adjoint of (Z o Y o X) is (X^T o Y^T o Z^T).
        for axis in [2usize, 1, 0] {
            pass_axis_adjoint(
                out.values(),
                &mut scratch,
                out.dims(),
                axis,
                kernel.line(),
                kernel.radius(),
            );
            out.values_mut().copy_from_slice(&scratch);
        }
    }
    out
}

/// Adjoint of one 1D pass: scatter with clamped taps folding onto the ends.
fn pass_axis_adjoint(
    input: &[f64],
    output: &mut [f64],
    dims: (usize, usize, usize),
    axis: usize,
    line: &[f64],
    radius: usize,
) {
    let (nx, ny, nz) = dims;
    let n_axis = [nx, ny, nz][axis];
    let stride = match axis {
        0 => 1,
        1 => nx,
        _ => nx * ny,
    };
    let lines: Vec<usize> = line_starts(dims, axis);
    let chunks: Vec<(usize, Vec<f64>)> = lines
        .par_iter()
        .map(|&start| {
            let mut seg = vec![0.0f64; n_axis];
            for i in 0..n_axis {
                let v = input[start + i * stride];
                for (k, &w) in line.iter().enumerate() {
                    let off = k as i64 - radius as i64;
                    let j = (i as i64 + off).clamp(0, n_axis as i64 - 1) as usize;
                    seg[j] += w * v;
                }
            }
            (start, seg)
        })
        .collect();
    for (start, seg) in chunks {
        for (i, v) in seg.into_iter().enumerate() {
            output[start + i * stride] = v;
        }
    }
}

/// Linear start index of every 1D line along `axis`.
fn line_starts(dims: (usize, usize, usize), axis: usize) -> Vec<usize> {
    let (nx, ny, nz) = dims;
    let mut starts = Vec::new();
    match axis {
        0 => {
            for z in 0..nz {
                for y in 0..ny {
                    starts.push(nx * (y + ny * z));
                }
            }
        }
        1 => {
            for z in 0..nz {
                for x in 0..nx {
                    starts.push(x + nx * ny * z);
                }
            }
        }
        _ => {
            for y in 0..ny {
                for x in 0..nx {
                    starts.push(x + nx * y);
                }
            }
        }
    }
    starts
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Vec3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_grid(n: usize, seed: u64) -> SdfGrid {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut g = SdfGrid::centered(n, 2.0).unwrap();
        for v in g.values_mut() {
            *v = rng.gen_range(-1.0..1.0);
        }
        g
    }

    /// Direct triple-loop convolution over the full 3D table with per-axis
    /// clamping: the independent oracle for `blur`.
    fn naive_blur(grid: &SdfGrid, kernel: &GaussianKernel) -> SdfGrid {
        let (nx, ny, nz) = grid.dims();
        let r = kernel.radius() as i64;
        let mut out = grid.clone();
        for z in 0..nz as i64 {
            for y in 0..ny as i64 {
                for x in 0..nx as i64 {
                    let mut acc = 0.0;
                    for dz in -r..=r {
                        for dy in -r..=r {
                            for dx in -r..=r {
                                let sx = (x + dx).clamp(0, nx as i64 - 1) as usize;
                                let sy = (y + dy).clamp(0, ny as i64 - 1) as usize;
                                let sz = (z + dz).clamp(0, nz as i64 - 1) as usize;
                                acc += kernel.weight_at(dx, dy, dz) * grid.get(sx, sy, sz);
                            }
                        }
                    }
                    out.set(x as usize, y as usize, z as usize, acc);
                }
            }
        }
        out
    }

    #[test]
    fn kernel_weights_sum_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let sigma = rng.gen_range(0.3..3.0);
            let k = make_kernel(sigma).unwrap();
            let sum: f64 = k.weights().iter().sum();
            assert!((sum - 1.0).abs() <= 1e-12, "sigma {sigma}: sum {sum}");
            assert!(k.weights().iter().all(|w| *w > 0.0));
        }
    }

    #[test]
    fn kernel_radius_rule() {
        assert_eq!(make_kernel(0.5).unwrap().radius(), 2);
        assert_eq!(make_kernel(1.0).unwrap().radius(), 3);
        assert_eq!(make_kernel(2.0).unwrap().radius(), 6);
        assert_eq!(make_kernel(0.34).unwrap().radius(), 2);
    }

    #[test]
    fn kernel_rejects_bad_sigma() {
        assert!(make_kernel(0.0).is_err());
        assert!(make_kernel(-1.0).is_err());
        assert!(make_kernel(f64::NAN).is_err());
        assert!(make_kernel(64.0).is_err());
    }

    #[test]
    fn blur_of_constant_field_is_identity() {
        let g = SdfGrid::filled((12, 12, 12), Vec3::zeros(), 0.1, 0.37).unwrap();
        for sigma in [0.5, 1.0, 2.0] {
            let k = make_kernel(sigma).unwrap();
            let b = blur(&g, &k, 3);
            for v in b.values() {
                assert!((v - 0.37).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn blur_matches_naive_convolution() {
        let g = random_grid(16, 3);
        for sigma in [0.6, 1.3] {
            let k = make_kernel(sigma).unwrap();
            let fast = blur(&g, &k, 1);
            let slow = naive_blur(&g, &k);
            let max_diff = fast
                .values()
                .iter()
                .zip(slow.values())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0f64, f64::max);
            assert!(max_diff <= 1e-9, "sigma {sigma}: max diff {max_diff}");
        }
    }

    #[test]
    fn blur_rounds_compose_bitwise() {
        let g = random_grid(10, 11);
        let k = make_kernel(0.8).unwrap();
        let two = blur(&g, &k, 2);
        let one_one = blur(&blur(&g, &k, 1), &k, 1);
        assert_eq!(two.values(), one_one.values());
    }

    #[test]
    fn blur_zero_rounds_is_copy() {
        let g = random_grid(8, 5);
        let k = make_kernel(1.0).unwrap();
        assert_eq!(blur(&g, &k, 0).values(), g.values());
    }

    #[test]
    fn blur_output_stays_within_input_range() {
        // weights are positive and sum to one, so every output value is a
        // convex combination of inputs.
        let g = random_grid(12, 19);
        let k = make_kernel(1.7).unwrap();
        let b = blur(&g, &k, 2);
        let lo = g.values().iter().copied().fold(f64::INFINITY, f64::min);
        let hi = g.values().iter().copied().fold(f64::NEG_INFINITY, f64::max);
        for v in b.values() {
            assert!(*v >= lo - 1e-12 && *v <= hi + 1e-12);
        }
    }

    #[test]
    fn blur_adjoint_satisfies_inner_product_identity() {
        let x = random_grid(9, 23);
        let y = random_grid(9, 29);
        let k = make_kernel(0.9).unwrap();
        for rounds in [1u32, 2] {
            let bx = blur(&x, &k, rounds);
            let aty = blur_adjoint(&y, &k, rounds);
            let lhs: f64 = bx.values().iter().zip(y.values()).map(|(a, b)| a * b).sum();
            let rhs: f64 = x.values().iter().zip(aty.values()).map(|(a, b)| a * b).sum();
            assert!(
                (lhs - rhs).abs() <= 1e-9 * lhs.abs().max(1.0),
                "rounds {rounds}: {lhs} vs {rhs}"
            );
        }
    }

    #[test]
    fn blur_identical_across_thread_counts() {
        let g = random_grid(14, 31);
        let k = make_kernel(1.1).unwrap();
        let pool1 = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap();
        let pool3 = rayon::ThreadPoolBuilder::new()
            .num_threads(3)
            .build()
            .unwrap();
        let a = pool1.install(|| blur(&g, &k, 2));
        let b = pool3.install(|| blur(&g, &k, 2));
        assert_eq!(a.values(), b.values());
    }
}
