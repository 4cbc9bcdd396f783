//! Random multi-block object generation.
//!
//! An object is the min-union of a few rotated boxes, rasterized as an exact
//! SDF on a dense grid and then smoothed by a normalized Gaussian kernel a
//! random number of rounds. All draws come from one seeded, portable stream
//! per object, so any seed regenerates its object bit for bit.

mod dataset;

pub use dataset::{generate_dataset, Manifest, ManifestEntry, MANIFEST_SCHEMA_VERSION};

use crate::error::{Error, Result};
use crate::sdf::{blur, make_kernel, SdfGrid};
use crate::Vec3;
use nalgebra::Matrix3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// One oriented box primitive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlockSpec {
    /// Full side lengths (world units).
    pub size: [f64; 3],
    /// Center position (world units).
    pub center: [f64; 3],
    /// Euler angles in radians; the block is rotated by `Rz(c) Ry(b) Rx(a)`
    /// for `rotation = [a, b, c]` (matrix applied to column vectors).
    pub rotation: [f64; 3],
}

impl BlockSpec {
    /// The block-frame rotation matrix `Rz * Ry * Rx`.
    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        let [a, b, c] = self.rotation;
        *nalgebra::Rotation3::from_euler_angles(a, b, c).matrix()
    }

    /// Half of the box diagonal: the radius of its bounding sphere.
    pub fn half_diagonal(&self) -> f64 {
        Vec3::from(self.size).norm() / 2.0
    }
}

/// Exact signed distance from `p` to the oriented box.
///
/// The point is rotated into the block frame; with `q = |p_local| - size/2`
/// the distance is `|max(q, 0)| + min(max(qx, qy, qz), 0)` (negative inside).
pub fn block_sdf(p: Vec3, spec: &BlockSpec) -> f64 {
    let rot = spec.rotation_matrix();
    block_sdf_prerotated(p, spec, &rot)
}

/// Same as [`block_sdf`] with the rotation matrix precomputed by the caller.
#[inline]
pub fn block_sdf_prerotated(p: Vec3, spec: &BlockSpec, rot: &Matrix3<f64>) -> f64 {
    let local = rot.transpose() * (p - Vec3::from(spec.center));
    let q = Vec3::new(
        local.x.abs() - spec.size[0] / 2.0,
        local.y.abs() - spec.size[1] / 2.0,
        local.z.abs() - spec.size[2] / 2.0,
    );
    let outside = Vec3::new(q.x.max(0.0), q.y.max(0.0), q.z.max(0.0)).norm();
    let inside = q.x.max(q.y).max(q.z).min(0.0);
    outside + inside
}

/// Generator configuration. Ranges are inclusive on both ends.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenConfig {
    /// Output grid dimensions.
    pub dims: (usize, usize, usize),
    /// World size of the grid cube along x (spacing = extent / nx).
    pub world_extent: f64,
    /// Number of blocks per object.
    pub block_count_range: (u32, u32),
    /// Block side lengths as fractions of `world_extent`.
    pub block_side_range: (f64, f64),
    /// Gaussian sigma in voxel units.
    pub sigma_range: (f64, f64),
    /// Number of smoothing rounds.
    pub blur_rounds_range: (u32, u32),
    /// Additional retry attempts after a degenerate draw (seed is XORed
    /// with the attempt counter 1..=max_retries).
    pub max_retries: u32,
    /// Open interval of acceptable occupied-voxel fractions; outside it an
    /// object counts as degenerate (near-empty or near-full).
    pub occupancy_bounds: (f64, f64),
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            dims: (64, 64, 64),
            world_extent: 2.0,
            block_count_range: (2, 8),
            // Upper bound chosen so that a worst-case block (cube at the top
            // of the range) plus the widest kernel support still fits
            // strictly inside the grid; see `placement_margin`.
            block_side_range: (0.15, 0.45),
            sigma_range: (0.5, 2.0),
            blur_rounds_range: (0, 4),
            max_retries: 8,
            occupancy_bounds: (0.01, 0.5),
        }
    }
}

impl GenConfig {
    /// Validates ranges and the placement geometry.
    pub fn validate(&self) -> Result<()> {
        let (nx, ny, nz) = self.dims;
        if nx < 8 || ny < 8 || nz < 8 {
            return Err(Error::invalid("dims", format!("too small: {:?}", self.dims)));
        }
        if !(self.world_extent.is_finite() && self.world_extent > 0.0) {
            return Err(Error::invalid("world_extent", format!("{}", self.world_extent)));
        }
        let ordered = |lo: f64, hi: f64| lo.is_finite() && hi.is_finite() && lo <= hi && lo > 0.0;
        if self.block_count_range.0 < 1 || self.block_count_range.0 > self.block_count_range.1 {
            return Err(Error::invalid(
                "block_count_range",
                format!("{:?}", self.block_count_range),
            ));
        }
        if !ordered(self.block_side_range.0, self.block_side_range.1) {
            return Err(Error::invalid(
                "block_side_range",
                format!("{:?}", self.block_side_range),
            ));
        }
        if !ordered(self.sigma_range.0, self.sigma_range.1) || self.sigma_range.1 > 32.0 {
            return Err(Error::invalid("sigma_range", format!("{:?}", self.sigma_range)));
        }
        if self.blur_rounds_range.0 > self.blur_rounds_range.1 {
            return Err(Error::invalid(
                "blur_rounds_range",
                format!("{:?}", self.blur_rounds_range),
            ));
        }
        if !(self.occupancy_bounds.0 >= 0.0
            && self.occupancy_bounds.0 < self.occupancy_bounds.1
            && self.occupancy_bounds.1 <= 1.0)
        {
            return Err(Error::invalid(
                "occupancy_bounds",
                format!("{:?}", self.occupancy_bounds),
            ));
        }
        // Worst-case block must still have somewhere to stand.
        let worst = self.placement_margin(self.max_half_diagonal());
        if worst < 0.0 {
            return Err(Error::invalid(
                "block_side_range",
                format!(
                    "largest block plus kernel support cannot fit inside the grid \
                     (margin {worst:.4}); shrink block_side_range or sigma_range"
                ),
            ));
        }
        Ok(())
    }

    /// Grid spacing implied by dims and extent.
    pub fn spacing(&self) -> f64 {
        self.world_extent / self.dims.0 as f64
    }

    /// Half-diagonal of the largest possible block.
    fn max_half_diagonal(&self) -> f64 {
        let s = self.block_side_range.1 * self.world_extent;
        Vec3::new(s, s, s).norm() / 2.0
    }

    /// Largest |center coordinate| that keeps a block with the given
    /// bounding-sphere radius, plus the widest kernel support, strictly
    /// inside the grid.
    fn placement_margin(&self, half_diagonal: f64) -> f64 {
        let kernel_pad = (3.0 * self.sigma_range.1).ceil() * self.spacing();
        self.world_extent / 2.0 - half_diagonal - kernel_pad
    }
}

/// Everything needed to regenerate one object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectParams {
    /// The seed passed to [`generate`] (retries derive from it).
    pub seed: u64,
    /// Number of blocks.
    pub n: u32,
    /// Gaussian sigma (voxel units).
    pub sigma: f64,
    /// Smoothing rounds.
    pub rounds: u32,
    /// The block primitives.
    pub blocks: Vec<BlockSpec>,
}

/// Rasterizes the min-union of `blocks` and applies `rounds` of Gaussian
/// smoothing with the given sigma. This is the deterministic replay path:
/// feeding back recorded parameters reproduces the grid bit for bit.
pub fn rasterize_blocks(
    cfg: &GenConfig,
    blocks: &[BlockSpec],
    sigma: f64,
    rounds: u32,
) -> Result<SdfGrid> {
    if blocks.is_empty() {
        return Err(Error::invalid("blocks", "need at least one block"));
    }
    let template = SdfGrid::centered_dims(cfg.dims, cfg.world_extent)?;
    let rotations: Vec<Matrix3<f64>> = blocks.iter().map(|b| b.rotation_matrix()).collect();
    let raw = SdfGrid::from_fn(&template, |p| {
        let mut d = f64::INFINITY;
        for (b, rot) in blocks.iter().zip(&rotations) {
            d = d.min(block_sdf_prerotated(p, b, rot));
        }
        d
    });
    let kernel = make_kernel(sigma)?;
    Ok(blur(&raw, &kernel, rounds))
}

/// Generates one object. Degenerate draws (occupancy outside the configured
/// open interval) are retried with `seed ^ attempt` for attempts
/// `1..=max_retries`; if all attempts stay degenerate an error reports the
/// last occupancy.
pub fn generate(cfg: &GenConfig, seed: u64) -> Result<(SdfGrid, ObjectParams)> {
    cfg.validate()?;
    let mut last_occ = f64::NAN;
    for attempt in 0..=cfg.max_retries {
        let params = draw_params(cfg, seed ^ attempt as u64, seed);
        let grid = rasterize_blocks(cfg, &params.blocks, params.sigma, params.rounds)?;
        let occ = grid.occupancy_fraction(0.0);
        if occ > cfg.occupancy_bounds.0 && occ < cfg.occupancy_bounds.1 {
            return Ok((grid, params));
        }
        last_occ = occ;
    }
    Err(Error::DegenerateObject {
        seed,
        retries: cfg.max_retries,
        reason: format!(
            "occupancy fraction {last_occ:.4} outside ({}, {})",
            cfg.occupancy_bounds.0, cfg.occupancy_bounds.1
        ),
    })
}

/// Draws object parameters from a single stream seeded with `stream_seed`.
///
/// Draw order (fixed, documented): block count n; then per block size x/y/z,
/// center x/y/z, rotation x/y/z; then sigma; then rounds.
fn draw_params(cfg: &GenConfig, stream_seed: u64, record_seed: u64) -> ObjectParams {
    let mut rng = ChaCha8Rng::seed_from_u64(stream_seed);
    let n = rng.gen_range(cfg.block_count_range.0..=cfg.block_count_range.1);
    let side_lo = cfg.block_side_range.0 * cfg.world_extent;
    let side_hi = cfg.block_side_range.1 * cfg.world_extent;
    let mut blocks = Vec::with_capacity(n as usize);
    for _ in 0..n {
        let size = [
            rng.gen_range(side_lo..=side_hi),
            rng.gen_range(side_lo..=side_hi),
            rng.gen_range(side_lo..=side_hi),
        ];
        let half_diag = Vec3::from(size).norm() / 2.0;
        // Validation guarantees this is non-negative for the largest block.
        let m = cfg.placement_margin(half_diag).max(0.0);
        let center = [
            rng.gen_range(-m..=m),
            rng.gen_range(-m..=m),
            rng.gen_range(-m..=m),
        ];
        let rotation = [
            rng.gen_range(0.0..std::f64::consts::TAU),
            rng.gen_range(0.0..std::f64::consts::TAU),
            rng.gen_range(0.0..std::f64::consts::TAU),
        ];
        blocks.push(BlockSpec {
            size,
            center,
            rotation,
        });
    }
    let sigma = rng.gen_range(cfg.sigma_range.0..=cfg.sigma_range.1);
    let rounds = rng.gen_range(cfg.blur_rounds_range.0..=cfg.blur_rounds_range.1);
    ObjectParams {
        seed: record_seed,
        n,
        sigma,
        rounds,
        blocks,
    }
}
