//! Area-weighted random point sampling on mesh surfaces.

use super::TriMesh;
use crate::error::{Error, Result};
use crate::Vec3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Draws `count` points uniformly over the surface (area-weighted triangle
/// choice, uniform barycentric placement). Identical seeds give identical
/// points.
pub fn sample_surface(mesh: &TriMesh, count: usize, seed: u64) -> Result<Vec<Vec3>> {
    mesh.validate()?;
    let mut cumulative = Vec::with_capacity(mesh.triangles.len());
    let mut total = 0.0;
    for t in &mesh.triangles {
        let a = mesh.positions[t[0] as usize];
        let b = mesh.positions[t[1] as usize];
        let c = mesh.positions[t[2] as usize];
        total += (b - a).cross(&(c - a)).norm() / 2.0;
        cumulative.push(total);
    }
    if !(total > 0.0) {
        return Err(Error::invalid(
            "mesh",
            "surface sampling needs at least one triangle with positive area",
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = Vec::with_capacity(count);
    for _ in 0..count {
        let u = rng.gen_range(0.0..total);
        let idx = cumulative.partition_point(|&acc| acc <= u);
        let t = mesh.triangles[idx.min(mesh.triangles.len() - 1)];
        let a = mesh.positions[t[0] as usize];
        let b = mesh.positions[t[1] as usize];
        let c = mesh.positions[t[2] as usize];
        // sqrt reshaping turns two unit draws into uniform barycentric
        // coordinates.
        let r1: f64 = rng.gen();
        let r2: f64 = rng.gen();
        let s = r1.sqrt();
        let (wa, wb, wc) = (1.0 - s, s * (1.0 - r2), s * r2);
        points.push(a * wa + b * wb + c * wc);
    }
    Ok(points)
}
