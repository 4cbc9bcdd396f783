//! Isosurface extraction on dense grids with welded, indexed output.

use super::tables::{CORNER_OFFSETS, EDGE_ENDPOINTS, EDGE_TABLE, TRI_TABLE};
use super::TriMesh;
use crate::error::{Error, Result};
use crate::sdf::SdfGrid;
use crate::Vec3;
use std::collections::HashMap;

/// Extracts the `level` isosurface as a closed triangle mesh.
///
/// Grid points are the cell corners; a corner is inside when its value is
/// strictly below `level`. Each surface vertex lies on a lattice edge and is
/// shared by every adjacent cell (welded), so the output is an indexed mesh
/// with no duplicated edge vertices. Triangles are wound counter-clockwise
/// seen from outside (positive signed volume for a solid), and vertex
/// normals come from the normalized field gradient, which points outward
/// for signed distance fields.
///
/// An entirely inside or outside grid yields an empty mesh.
pub fn marching_cubes(grid: &SdfGrid, level: f64) -> Result<TriMesh> {
    if !level.is_finite() {
        return Err(Error::invalid("level", "must be finite"));
    }
    let (nx, ny, nz) = grid.dims();
    let mut positions: Vec<Vec3> = Vec::new();
    let mut weld: HashMap<(u32, u32, u32, u8), u32> = HashMap::new();
    let mut triangles: Vec<[u32; 3]> = Vec::new();

    for z in 0..nz - 1 {
        for y in 0..ny - 1 {
            for x in 0..nx - 1 {
                let mut vals = [0.0f64; 8];
                let mut cube = 0usize;
                for (i, off) in CORNER_OFFSETS.iter().enumerate() {
                    let v = grid.get(x + off[0], y + off[1], z + off[2]);
                    vals[i] = v;
                    if v < level {
                        cube |= 1 << i;
                    }
                }
                if EDGE_TABLE[cube] == 0 {
                    continue;
                }
                let mut edge_ids = [u32::MAX; 12];
                let row = &TRI_TABLE[cube];
                for chunk in row.chunks(3) {
                    if chunk[0] < 0 {
                        break;
                    }
                    let mut tri = [0u32; 3];
                    for (slot, &e) in tri.iter_mut().zip(chunk) {
                        let e = e as usize;
                        if edge_ids[e] == u32::MAX {
                            edge_ids[e] = edge_vertex(
                                grid,
                                level,
                                (x, y, z),
                                e,
                                &vals,
                                &mut weld,
                                &mut positions,
                            );
                        }
                        *slot = edge_ids[e];
                    }
                    // Exact level hits can collapse two edge vertices onto
                    // the shared lattice point; such slivers carry no area.
                    if tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2] {
                        continue;
                    }
                    // The tables emit triangles clockwise as seen from
                    // outside an inside-below-level solid; reverse so
                    // outward faces are counter-clockwise.
                    triangles.push([tri[0], tri[2], tri[1]]);
                }
            }
        }
    }

    let normals = positions
        .iter()
        .map(|p| {
            let g = grid.gradient_central(*p);
            let n = g.norm();
            if n > 1e-12 {
                g / n
            } else {
                Vec3::zeros()
            }
        })
        .collect();

    let mesh = TriMesh {
        positions,
        normals,
        colors: Vec::new(),
        triangles,
    };
    mesh.validate()?;
    Ok(mesh)
}

/// Returns the welded vertex id for lattice edge `e` of the cell at `cell`,
/// creating the vertex on first use.
fn edge_vertex(
    grid: &SdfGrid,
    level: f64,
    cell: (usize, usize, usize),
    e: usize,
    vals: &[f64; 8],
    weld: &mut HashMap<(u32, u32, u32, u8), u32>,
    positions: &mut Vec<Vec3>,
) -> u32 {
    let [c0, c1] = EDGE_ENDPOINTS[e];
    let g0 = [
        cell.0 + CORNER_OFFSETS[c0][0],
        cell.1 + CORNER_OFFSETS[c0][1],
        cell.2 + CORNER_OFFSETS[c0][2],
    ];
    let g1 = [
        cell.0 + CORNER_OFFSETS[c1][0],
        cell.1 + CORNER_OFFSETS[c1][1],
        cell.2 + CORNER_OFFSETS[c1][2],
    ];
    // The endpoints differ along exactly one axis; canonicalize to the low
    // corner so every adjacent cell computes bit-identical keys and
    // positions.
    let axis = (0..3).find(|&a| g0[a] != g1[a]).expect("lattice edge spans one axis");
    let (ga, gb, va, vb) = if g0[axis] < g1[axis] {
        (g0, g1, vals[c0], vals[c1])
    } else {
        (g1, g0, vals[c1], vals[c0])
    };
    let key = (ga[0] as u32, ga[1] as u32, ga[2] as u32, axis as u8);
    if let Some(&id) = weld.get(&key) {
        return id;
    }
    let t = ((level - va) / (vb - va)).clamp(0.0, 1.0);
    let pa = grid.voxel_center(ga[0], ga[1], ga[2]);
    let pb = grid.voxel_center(gb[0], gb[1], gb[2]);
    let id = positions.len() as u32;
    positions.push(pa + (pb - pa) * t);
    weld.insert(key, id);
    id
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn sphere_grid(n: usize, r: f64) -> SdfGrid {
        let proto = SdfGrid::centered(n, 2.0).unwrap();
        SdfGrid::from_fn(&proto, |p| p.norm() - r)
    }

    #[test]
    fn sphere_mesh_matches_analytic_geometry() {
        let grid = sphere_grid(48, 0.7);
        let mesh = marching_cubes(&grid, 0.0).unwrap();
        assert!(mesh.is_closed());
        assert_eq!(mesh.euler_characteristic(), 2);

        let vol = mesh.signed_volume();
        let expect_vol = 4.0 / 3.0 * PI * 0.7f64.powi(3);
        assert!(
            (vol - expect_vol).abs() / expect_vol < 0.02,
            "volume {vol} vs {expect_vol}"
        );
        let area = mesh.surface_area();
        let expect_area = 4.0 * PI * 0.7f64.powi(2);
        assert!(
            (area - expect_area).abs() / expect_area < 0.02,
            "area {area} vs {expect_area}"
        );
        // Every vertex sits on the isosurface up to interpolation error.
        let h = grid.spacing();
        for p in &mesh.positions {
            assert!((p.norm() - 0.7).abs() < h, "vertex off the surface");
        }
    }

    #[test]
    fn winding_is_outward_and_matches_gradient_normals() {
        let grid = sphere_grid(32, 0.6);
        let mesh = marching_cubes(&grid, 0.0).unwrap();
        assert!(mesh.signed_volume() > 0.0, "winding must be outward");
        // Face normals agree with the stored gradient normals, and for the
        // sphere both align with the radial direction.
        for t in &mesh.triangles {
            let [a, b, c] = [
                mesh.positions[t[0] as usize],
                mesh.positions[t[1] as usize],
                mesh.positions[t[2] as usize],
            ];
            let fnorm = (b - a).cross(&(c - a));
            let centroid = (a + b + c) / 3.0;
            assert!(fnorm.dot(&centroid) > 0.0, "face points inward");
        }
        for (p, n) in mesh.positions.iter().zip(&mesh.normals) {
            assert_relative_eq!(n.norm(), 1.0, epsilon = 1e-9);
            assert!(n.dot(&p.normalize()) > 0.9, "normal not radial");
        }
    }

    #[test]
    fn vertices_are_welded_uniquely() {
        let grid = sphere_grid(24, 0.65);
        let mesh = marching_cubes(&grid, 0.0).unwrap();
        let mut seen = std::collections::HashSet::new();
        for p in &mesh.positions {
            let key = (p.x.to_bits(), p.y.to_bits(), p.z.to_bits());
            assert!(seen.insert(key), "duplicate vertex at {p:?}");
        }
        // Every vertex is referenced.
        let mut used = vec![false; mesh.positions.len()];
        for t in &mesh.triangles {
            for &i in t {
                used[i as usize] = true;
            }
        }
        assert!(used.iter().all(|u| *u));
    }

    #[test]
    fn plane_field_lands_on_the_exact_plane() {
        // f = z - z0 with z0 on a lattice plane: linear interpolation puts
        // every vertex exactly at z0, and the sheet faces +z (toward
        // positive field values).
        let proto = SdfGrid::centered(17, 2.0).unwrap();
        let z0 = proto.voxel_center(0, 0, 10).z;
        let grid = SdfGrid::from_fn(&proto, |p| p.z - z0);
        let mesh = marching_cubes(&grid, 0.0).unwrap();
        assert!(!mesh.triangles.is_empty());
        for p in &mesh.positions {
            assert!((p.z - z0).abs() <= 1e-9, "vertex z {} off the plane", p.z);
        }
        for t in &mesh.triangles {
            let [a, b, c] = [
                mesh.positions[t[0] as usize],
                mesh.positions[t[1] as usize],
                mesh.positions[t[2] as usize],
            ];
            let n = (b - a).cross(&(c - a));
            assert!(n.z > 0.0, "flat sheet must face the positive field side");
        }
    }

    #[test]
    fn uniform_fields_yield_empty_meshes() {
        let pos = SdfGrid::filled((8, 8, 8), Vec3::zeros(), 0.1, 1.0).unwrap();
        assert!(marching_cubes(&pos, 0.0).unwrap().triangles.is_empty());
        let neg = SdfGrid::filled((8, 8, 8), Vec3::zeros(), 0.1, -1.0).unwrap();
        assert!(marching_cubes(&neg, 0.0).unwrap().triangles.is_empty());
    }

    #[test]
    fn translation_moves_mesh_rigidly() {
        let a = sphere_grid(20, 0.6);
        let shift = Vec3::new(0.3, -0.1, 0.25);
        let b = SdfGrid::new(a.dims(), a.origin() + shift, a.spacing(), a.values().to_vec())
            .unwrap();
        let ma = marching_cubes(&a, 0.0).unwrap();
        let mb = marching_cubes(&b, 0.0).unwrap();
        assert_eq!(ma.triangles, mb.triangles);
        for (p, q) in ma.positions.iter().zip(&mb.positions) {
            assert_relative_eq!(((q - shift) - p).norm(), 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn disjoint_solids_add_components() {
        let proto = SdfGrid::centered(40, 2.0).unwrap();
        let grid = SdfGrid::from_fn(&proto, |p| {
            let a = (p - Vec3::new(-0.45, 0.0, 0.0)).norm() - 0.3;
            let b = (p - Vec3::new(0.45, 0.0, 0.0)).norm() - 0.3;
            a.min(b)
        });
        let mesh = marching_cubes(&grid, 0.0).unwrap();
        assert!(mesh.is_closed());
        assert_eq!(mesh.euler_characteristic(), 4, "two sphere components");
    }

    #[test]
    fn level_shift_equals_field_shift() {
        let grid = sphere_grid(20, 0.6);
        let c = 0.0371;
        let shifted = SdfGrid::new(
            grid.dims(),
            grid.origin(),
            grid.spacing(),
            grid.values().iter().map(|v| v - c).collect(),
        )
        .unwrap();
        let at_level = marching_cubes(&grid, c).unwrap();
        let at_zero = marching_cubes(&shifted, 0.0).unwrap();
        assert_eq!(at_level.triangles, at_zero.triangles);
        for (p, q) in at_level.positions.iter().zip(&at_zero.positions) {
            assert_relative_eq!((p - q).norm(), 0.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn rejects_non_finite_level() {
        let grid = sphere_grid(8, 0.5);
        assert!(marching_cubes(&grid, f64::NAN).is_err());
    }
}
