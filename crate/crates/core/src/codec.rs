//! Analytic latent codec: a dense grid is compressed to a coarse lattice by
//! block averaging and expanded back by trilinear upsampling plus Gaussian
//! smoothing.
//!
//! The decoder is linear in the latent values, which makes its exact
//! vector-Jacobian product (`decode_vjp`) cheap: run the smoothing adjoint,
//! then scatter each fine sample's interpolation weights back onto the
//! lattice. Optimizers differentiate through the decoder with it.

use crate::error::{Error, Result};
use crate::sdf::io::{expect_eof, read_all, read_f32_values, read_f64, read_u16, read_u32};
use crate::sdf::{blur, blur_adjoint, make_kernel, SdfGrid};
use crate::Vec3;
use serde::{Deserialize, Serialize};
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

/// Codec configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CodecConfig {
    /// Coarse lattice dimensions.
    pub latent_dims: (usize, usize, usize),
    /// Dense grid dimensions; each axis must be an identical integer
    /// multiple of the latent axis.
    pub fine_dims: (usize, usize, usize),
    /// Gaussian sigma (fine-voxel units) applied after upsampling.
    pub decode_sigma: f64,
    /// Smoothing rounds applied after upsampling.
    pub decode_rounds: u32,
}

impl Default for CodecConfig {
    fn default() -> Self {
        Self {
            latent_dims: (16, 16, 16),
            fine_dims: (64, 64, 64),
            decode_sigma: 1.0,
            decode_rounds: 1,
        }
    }
}

impl CodecConfig {
    /// Checks dimensions and returns the per-axis block factor.
    pub fn validate(&self) -> Result<usize> {
        let (lx, ly, lz) = self.latent_dims;
        let (fx, fy, fz) = self.fine_dims;
        if lx < 2 || ly < 2 || lz < 2 {
            return Err(Error::invalid(
                "latent_dims",
                "each axis needs at least 2 lattice nodes",
            ));
        }
        if fx % lx != 0 || fy % ly != 0 || fz % lz != 0 {
            return Err(Error::invalid(
                "fine_dims",
                "each axis must be a multiple of the latent axis",
            ));
        }
        let f = fx / lx;
        if fy / ly != f || fz / lz != f {
            return Err(Error::invalid(
                "fine_dims",
                "block factor must be identical on all axes",
            ));
        }
        if f < 2 {
            return Err(Error::invalid("fine_dims", "block factor must be at least 2"));
        }
        if !(self.decode_sigma > 0.0 && self.decode_sigma.is_finite()) {
            return Err(Error::invalid("decode_sigma", "must be positive and finite"));
        }
        Ok(f)
    }

}

/// Coarse lattice of scalar values with its own world geometry. Node `(i,j,k)`
/// sits at `origin + (i,j,k) * spacing`, the mean position of the fine-voxel
/// block it summarizes.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentCode {
    dims: (usize, usize, usize),
    origin: Vec3,
    spacing: f64,
    values: Vec<f64>,
}

impl LatentCode {
    /// Builds a code, validating shape.
    pub fn new(
        dims: (usize, usize, usize),
        origin: Vec3,
        spacing: f64,
        values: Vec<f64>,
    ) -> Result<Self> {
        if dims.0 < 2 || dims.1 < 2 || dims.2 < 2 {
            return Err(Error::invalid("dims", "each axis needs at least 2 nodes"));
        }
        if !(spacing > 0.0 && spacing.is_finite()) {
            return Err(Error::invalid("spacing", "must be positive and finite"));
        }
        let expected = dims.0 * dims.1 * dims.2;
        if values.len() != expected {
            return Err(Error::ShapeMismatch {
                what: "latent values".into(),
                expected: expected.to_string(),
                got: values.len().to_string(),
            });
        }
        Ok(Self {
            dims,
            origin,
            spacing,
            values,
        })
    }

    /// Lattice geometry matching a fine grid under the given block factor.
    ///
    /// A lattice node summarizes an `f^3` block of fine voxels, so it sits at
    /// the block's mean center: `fine_origin + (f-1)/2 * fine_spacing`, with
    /// node pitch `f * fine_spacing`.
    pub fn geometry_for(fine: &SdfGrid, cfg: &CodecConfig) -> Result<(Vec3, f64)> {
        let f = cfg.validate()? as f64;
        let shift = (f - 1.0) / 2.0 * fine.spacing();
        let origin = fine.origin() + Vec3::new(shift, shift, shift);
        Ok((origin, f * fine.spacing()))
    }

    /// Lattice dimensions.
    pub fn dims(&self) -> (usize, usize, usize) {
        self.dims
    }

    /// World position of node (0,0,0).
    pub fn origin(&self) -> Vec3 {
        self.origin
    }

    /// Node pitch in world units.
    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    /// Values, x-fastest.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Mutable values, x-fastest.
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// The lattice as a grid (same memory layout), for interpolation.
    fn as_grid(&self) -> SdfGrid {
        SdfGrid::new(self.dims, self.origin, self.spacing, self.values.clone())
            .expect("lattice shape was validated on construction")
    }
}

/// Compresses a dense grid to its block means.
pub fn encode(grid: &SdfGrid, cfg: &CodecConfig) -> Result<LatentCode> {
    let f = cfg.validate()?;
    if grid.dims() != cfg.fine_dims {
        return Err(Error::ShapeMismatch {
            what: "encode input dims".into(),
            expected: format!("{:?}", cfg.fine_dims),
            got: format!("{:?}", grid.dims()),
        });
    }
    let (lx, ly, lz) = cfg.latent_dims;
    let inv = 1.0 / (f * f * f) as f64;
    let mut values = vec![0.0; lx * ly * lz];
    for bz in 0..lz {
        for by in 0..ly {
            for bx in 0..lx {
                let mut sum = 0.0;
                for dz in 0..f {
                    for dy in 0..f {
                        for dx in 0..f {
                            sum += grid.get(bx * f + dx, by * f + dy, bz * f + dz);
                        }
                    }
                }
                values[bx + lx * (by + ly * bz)] = sum * inv;
            }
        }
    }
    let (origin, spacing) = LatentCode::geometry_for(grid, cfg)?;
    LatentCode::new(cfg.latent_dims, origin, spacing, values)
}

/// Expands a latent code to the dense grid: clamped trilinear upsampling of
/// the lattice at every fine voxel center, then Gaussian smoothing.
pub fn decode(latent: &LatentCode, cfg: &CodecConfig) -> Result<SdfGrid> {
    let f = cfg.validate()?;
    if latent.dims != cfg.latent_dims {
        return Err(Error::ShapeMismatch {
            what: "decode input dims".into(),
            expected: format!("{:?}", cfg.latent_dims),
            got: format!("{:?}", latent.dims),
        });
    }
    let fine_spacing = latent.spacing / f as f64;
    let shift = (f as f64 - 1.0) / 2.0 * fine_spacing;
    let fine_origin = latent.origin - Vec3::new(shift, shift, shift);
    let lattice = latent.as_grid();
    let proto = SdfGrid::filled(cfg.fine_dims, fine_origin, fine_spacing, 0.0)?;
    let upsampled = SdfGrid::from_fn(&proto, |p| lattice.sample_trilinear(p));
    let kernel = make_kernel(cfg.decode_sigma)?;
    Ok(blur(&upsampled, &kernel, cfg.decode_rounds))
}

/// Exact vector-Jacobian product of [`decode`]: maps a cotangent on the fine
/// grid values to the cotangent on the latent values.
///
/// `cot_fine` is laid out like the decoded grid's values (x-fastest).
pub fn decode_vjp(latent: &LatentCode, cfg: &CodecConfig, cot_fine: &[f64]) -> Result<Vec<f64>> {
    let f = cfg.validate()?;
    let (fx, fy, fz) = cfg.fine_dims;
    if cot_fine.len() != fx * fy * fz {
        return Err(Error::ShapeMismatch {
            what: "decode cotangent length".into(),
            expected: (fx * fy * fz).to_string(),
            got: cot_fine.len().to_string(),
        });
    }
    // Adjoint of the smoothing stage.
    let kernel = make_kernel(cfg.decode_sigma)?;
    let fine_spacing = latent.spacing / f as f64;
    let shift = (f as f64 - 1.0) / 2.0 * fine_spacing;
    let fine_origin = latent.origin - Vec3::new(shift, shift, shift);
    let carrier = SdfGrid::new(cfg.fine_dims, fine_origin, fine_spacing, cot_fine.to_vec())?;
    let after_blur = blur_adjoint(&carrier, &kernel, cfg.decode_rounds);

    // Adjoint of the trilinear upsampling: scatter each fine voxel's
    // interpolation weights back to the lattice nodes it read.
    let lattice = latent.as_grid();
    let mut cot_latent = vec![0.0; latent.values.len()];
    for z in 0..fz {
        for y in 0..fy {
            for x in 0..fx {
                let c = after_blur.get(x, y, z);
                if c == 0.0 {
                    continue;
                }
                let p = after_blur.voxel_center(x, y, z);
                let sample = lattice.tri_sample(p);
                for (idx, w) in sample.corners {
                    cot_latent[idx] += c * w;
                }
            }
        }
    }
    Ok(cot_latent)
}

const LATF_MAGIC: &[u8; 4] = b"LATF";
const LATF_VERSION: u16 = 1;

/// Writes a latent code: magic `LATF`, version u16, dims 3x u32, origin
/// 3x f64, spacing f64, then values as f32, little-endian, x-fastest.
pub fn write_latf(latent: &LatentCode, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let mut emit = |bytes: &[u8]| w.write_all(bytes).map_err(|e| Error::io(path, e));
    emit(LATF_MAGIC)?;
    emit(&LATF_VERSION.to_le_bytes())?;
    let (dx, dy, dz) = latent.dims;
    for d in [dx, dy, dz] {
        emit(&(d as u32).to_le_bytes())?;
    }
    for c in [latent.origin.x, latent.origin.y, latent.origin.z] {
        emit(&c.to_le_bytes())?;
    }
    emit(&latent.spacing.to_le_bytes())?;
    for v in &latent.values {
        emit(&(*v as f32).to_le_bytes())?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a latent code written by [`write_latf`].
pub fn read_latf(path: &Path) -> Result<LatentCode> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);
    let mut magic = [0u8; 4];
    read_all(&mut r, &mut magic, path)?;
    if &magic != LATF_MAGIC {
        return Err(Error::format(path, "bad magic (expected LATF)"));
    }
    let version = read_u16(&mut r, path)?;
    if version != LATF_VERSION {
        return Err(Error::format(path, format!("unsupported version {version}")));
    }
    let mut dims = [0usize; 3];
    for d in &mut dims {
        let v = read_u32(&mut r, path)?;
        if v < 2 || v > (1 << 31) {
            return Err(Error::format(path, format!("implausible dimension {v}")));
        }
        *d = v as usize;
    }
    let origin = Vec3::new(
        read_f64(&mut r, path)?,
        read_f64(&mut r, path)?,
        read_f64(&mut r, path)?,
    );
    let spacing = read_f64(&mut r, path)?;
    let count = dims[0]
        .checked_mul(dims[1])
        .and_then(|v| v.checked_mul(dims[2]))
        .ok_or_else(|| Error::format(path, "dimension overflow"))?;
    let values = read_f32_values(&mut r, count, path)?;
    expect_eof(&mut r, path)?;
    LatentCode::new((dims[0], dims[1], dims[2]), origin, spacing, values)
        .map_err(|e| Error::format(path, format!("invalid contents: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn small_cfg() -> CodecConfig {
        CodecConfig {
            latent_dims: (4, 4, 4),
            fine_dims: (16, 16, 16),
            ..CodecConfig::default()
        }
    }

    fn random_grid(cfg: &CodecConfig, seed: u64) -> SdfGrid {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut g = SdfGrid::centered_dims(cfg.fine_dims, 2.0).unwrap();
        for v in g.values_mut() {
            *v = rng.gen_range(-1.0..1.0);
        }
        g
    }

    fn random_latent(cfg: &CodecConfig, seed: u64) -> LatentCode {
        let g = random_grid(cfg, seed);
        encode(&g, cfg).unwrap()
    }

    /// Independent triple-loop block-mean oracle.
    #[test]
    fn encode_matches_naive_block_mean() {
        let cfg = small_cfg();
        let g = random_grid(&cfg, 1);
        let code = encode(&g, &cfg).unwrap();
        let f = 4usize;
        let (lx, ly, lz) = cfg.latent_dims;
        for bz in 0..lz {
            for by in 0..ly {
                for bx in 0..lx {
                    let mut acc = Vec::new();
                    for dz in 0..f {
                        for dy in 0..f {
                            for dx in 0..f {
                                acc.push(g.get(bx * f + dx, by * f + dy, bz * f + dz));
                            }
                        }
                    }
                    let mean: f64 = acc.iter().sum::<f64>() / acc.len() as f64;
                    let got = code.values()[bx + lx * (by + ly * bz)];
                    assert_relative_eq!(got, mean, epsilon = 1e-12);
                }
            }
        }
    }

    #[test]
    fn lattice_nodes_sit_at_block_mean_positions() {
        let cfg = small_cfg();
        let g = SdfGrid::centered_dims(cfg.fine_dims, 2.0).unwrap();
        let code = encode(&g, &cfg).unwrap();
        // Node (0,0,0) must sit at the mean of the first 4^3 fine centers.
        let mut mean = Vec3::zeros();
        for dz in 0..4 {
            for dy in 0..4 {
                for dx in 0..4 {
                    mean += g.voxel_center(dx, dy, dz);
                }
            }
        }
        mean /= 64.0;
        assert_relative_eq!((code.origin() - mean).norm(), 0.0, epsilon = 1e-12);
        assert_relative_eq!(code.spacing(), 4.0 * g.spacing(), epsilon = 1e-12);
    }

    #[test]
    fn constant_field_roundtrips_exactly() {
        let cfg = small_cfg();
        let g = SdfGrid::filled(cfg.fine_dims, Vec3::zeros(), 0.1, 0.37).unwrap();
        let code = encode(&g, &cfg).unwrap();
        for v in code.values() {
            assert_relative_eq!(*v, 0.37, epsilon = 1e-12);
        }
        let back = decode(&code, &cfg).unwrap();
        assert_eq!(back.dims(), cfg.fine_dims);
        assert_relative_eq!(back.spacing(), g.spacing(), epsilon = 1e-12);
        assert_relative_eq!((back.origin() - g.origin()).norm(), 0.0, epsilon = 1e-12);
        for v in back.values() {
            assert_relative_eq!(*v, 0.37, epsilon = 1e-12);
        }
    }

    #[test]
    fn decode_is_linear() {
        let cfg = small_cfg();
        let a = random_latent(&cfg, 2);
        let b = random_latent(&cfg, 3);
        let (alpha, beta) = (0.7, -1.3);
        let mixed_values: Vec<f64> = a
            .values()
            .iter()
            .zip(b.values())
            .map(|(x, y)| alpha * x + beta * y)
            .collect();
        let mixed = LatentCode::new(a.dims(), a.origin(), a.spacing(), mixed_values).unwrap();
        let da = decode(&a, &cfg).unwrap();
        let db = decode(&b, &cfg).unwrap();
        let dm = decode(&mixed, &cfg).unwrap();
        for ((m, x), y) in dm.values().iter().zip(da.values()).zip(db.values()) {
            assert_relative_eq!(*m, alpha * x + beta * y, epsilon = 1e-11);
        }
    }

    /// <decode(x), y> == <x, decode_vjp(y)> for random vectors: the VJP is
    /// the exact adjoint of the linear decoder.
    #[test]
    fn vjp_satisfies_adjoint_identity() {
        let cfg = small_cfg();
        let x = random_latent(&cfg, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n_fine = cfg.fine_dims.0 * cfg.fine_dims.1 * cfg.fine_dims.2;
        let y: Vec<f64> = (0..n_fine).map(|_| rng.gen_range(-1.0..1.0)).collect();

        let dx = decode(&x, &cfg).unwrap();
        let lhs: f64 = dx.values().iter().zip(&y).map(|(a, b)| a * b).sum();
        let vjp = decode_vjp(&x, &cfg, &y).unwrap();
        let rhs: f64 = x.values().iter().zip(&vjp).map(|(a, b)| a * b).sum();
        assert_relative_eq!(lhs, rhs, epsilon = 1e-9, max_relative = 1e-9);
    }

    /// Encoding then decoding a smooth solid keeps the occupied region
    /// mostly intact (sign-level IoU on the voxel grid).
    #[test]
    fn sphere_roundtrip_preserves_occupancy() {
        let cfg = CodecConfig::default();
        let proto = SdfGrid::centered_dims(cfg.fine_dims, 2.0).unwrap();
        let sphere = SdfGrid::from_fn(&proto, |p| p.norm() - 0.6);
        let code = encode(&sphere, &cfg).unwrap();
        let back = decode(&code, &cfg).unwrap();
        let mut inter = 0usize;
        let mut union = 0usize;
        for (a, b) in sphere.values().iter().zip(back.values()) {
            let (ia, ib) = (*a < 0.0, *b < 0.0);
            inter += (ia && ib) as usize;
            union += (ia || ib) as usize;
        }
        let iou = inter as f64 / union as f64;
        assert!(iou >= 0.9, "sign-level IoU {iou:.3} below 0.9");
    }

    #[test]
    fn latf_roundtrips_and_is_deterministic() {
        let cfg = small_cfg();
        let code = random_latent(&cfg, 6);
        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("a.latf");
        let p2 = dir.path().join("b.latf");
        write_latf(&code, &p1).unwrap();
        let back = read_latf(&p1).unwrap();
        assert_eq!(back.dims(), code.dims());
        assert_relative_eq!(back.spacing(), code.spacing(), epsilon = 0.0);
        for (a, b) in back.values().iter().zip(code.values()) {
            assert_eq!(*a, *b as f32 as f64);
        }
        write_latf(&back, &p2).unwrap();
        assert_eq!(
            std::fs::read(&p1).unwrap(),
            std::fs::read(&p2).unwrap(),
            "second write must be byte-identical"
        );
    }

    #[test]
    fn latf_rejects_corruption() {
        let cfg = small_cfg();
        let code = random_latent(&cfg, 7);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.latf");
        write_latf(&code, &path).unwrap();
        let good = std::fs::read(&path).unwrap();

        let mut bad = good.clone();
        bad[0] = b'X';
        std::fs::write(&path, &bad).unwrap();
        assert!(read_latf(&path).is_err(), "bad magic accepted");

        let truncated = &good[..good.len() - 3];
        std::fs::write(&path, truncated).unwrap();
        assert!(read_latf(&path).is_err(), "truncation accepted");

        let mut extended = good.clone();
        extended.push(0);
        std::fs::write(&path, &extended).unwrap();
        assert!(read_latf(&path).is_err(), "trailing bytes accepted");
    }

    #[test]
    fn config_validation_rejects_bad_shapes() {
        let bad_mult = CodecConfig {
            latent_dims: (16, 16, 16),
            fine_dims: (64, 64, 60),
            ..CodecConfig::default()
        };
        assert!(bad_mult.validate().is_err());
        let uneven = CodecConfig {
            latent_dims: (16, 8, 16),
            fine_dims: (64, 64, 64),
            ..CodecConfig::default()
        };
        assert!(uneven.validate().is_err());
        let bad_sigma = CodecConfig {
            decode_sigma: 0.0,
            ..CodecConfig::default()
        };
        assert!(bad_sigma.validate().is_err());
        assert_eq!(CodecConfig::default().validate().unwrap(), 4);
    }
}
