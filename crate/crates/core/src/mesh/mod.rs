//! Triangle meshes: extraction from grids, refinement, sampling,
//! occupancy tests, and file io.

mod marching;
mod occupancy;
mod sample;
mod subdivide;
pub(crate) mod tables;

pub mod io;

pub use marching::marching_cubes;
pub use occupancy::{volume_iou_grid_mesh, volume_iou_grids, volume_iou_meshes};
pub use sample::sample_surface;
pub use subdivide::loop_subdivide;

use crate::error::{Error, Result};
use crate::Vec3;
use std::collections::HashMap;

/// Indexed triangle mesh with optional per-vertex normals and colors.
///
/// `normals` and `colors` are either empty or exactly as long as
/// `positions`; [`TriMesh::validate`] enforces this along with index bounds.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TriMesh {
    /// Vertex positions.
    pub positions: Vec<Vec3>,
    /// Unit vertex normals (empty when absent).
    pub normals: Vec<Vec3>,
    /// Per-vertex RGB in [0,1] (empty when absent).
    pub colors: Vec<Vec3>,
    /// Counter-clockwise vertex index triples.
    pub triangles: Vec<[u32; 3]>,
}

impl TriMesh {
    /// Checks index bounds, attribute lengths, and coordinate finiteness.
    pub fn validate(&self) -> Result<()> {
        let n = self.positions.len();
        if n > u32::MAX as usize {
            return Err(Error::invalid("positions", "too many vertices for u32 indices"));
        }
        for (what, attr) in [("normals", &self.normals), ("colors", &self.colors)] {
            if !attr.is_empty() && attr.len() != n {
                return Err(Error::ShapeMismatch {
                    what: what.into(),
                    expected: format!("0 or {n}"),
                    got: attr.len().to_string(),
                });
            }
        }
        for p in self.positions.iter().chain(&self.normals).chain(&self.colors) {
            if !(p.x.is_finite() && p.y.is_finite() && p.z.is_finite()) {
                return Err(Error::invalid("vertex attribute", "non-finite component"));
            }
        }
        for (t, tri) in self.triangles.iter().enumerate() {
            for &i in tri {
                if i as usize >= n {
                    return Err(Error::invalid(
                        "triangles",
                        format!("triangle {t} references vertex {i} of {n}"),
                    ));
                }
            }
            if tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2] {
                return Err(Error::invalid(
                    "triangles",
                    format!("triangle {t} repeats a vertex index"),
                ));
            }
        }
        Ok(())
    }

    /// Axis-aligned bounding box of the vertices, `None` when empty.
    pub fn bbox(&self) -> Option<(Vec3, Vec3)> {
        let first = *self.positions.first()?;
        let mut lo = first;
        let mut hi = first;
        for p in &self.positions[1..] {
            lo = lo.inf(p);
            hi = hi.sup(p);
        }
        Some((lo, hi))
    }

    /// Signed volume via the divergence theorem; positive for outward,
    /// counter-clockwise oriented closed surfaces.
    pub fn signed_volume(&self) -> f64 {
        self.triangles
            .iter()
            .map(|t| {
                let a = self.positions[t[0] as usize];
                let b = self.positions[t[1] as usize];
                let c = self.positions[t[2] as usize];
                a.dot(&b.cross(&c)) / 6.0
            })
            .sum()
    }

    /// Total surface area.
    pub fn surface_area(&self) -> f64 {
        self.triangles
            .iter()
            .map(|t| {
                let a = self.positions[t[0] as usize];
                let b = self.positions[t[1] as usize];
                let c = self.positions[t[2] as usize];
                (b - a).cross(&(c - a)).norm() / 2.0
            })
            .sum::<f64>()
    }

    /// `V - E + F` with edges counted once per undirected pair.
    pub fn euler_characteristic(&self) -> i64 {
        let edges = undirected_edges(&self.triangles);
        self.positions.len() as i64 - edges.len() as i64 + self.triangles.len() as i64
    }

    /// True when every edge is shared by exactly two triangles with
    /// opposite directions (closed, consistently oriented, manifold edges).
    pub fn is_closed(&self) -> bool {
        !self.triangles.is_empty()
            && undirected_edges(&self.triangles)
                .values()
                .all(|e| e.uses == 2 && e.forward == 1 && e.backward == 1)
    }
}

/// Incidence record for one undirected edge.
#[derive(Debug, Clone, Copy)]
pub(crate) struct EdgeInfo {
    /// Number of incident triangles (saturates at 255).
    pub uses: u8,
    /// Uses in canonical (lo,hi) direction.
    pub forward: u8,
    /// Uses in (hi,lo) direction.
    pub backward: u8,
    /// Opposite vertex of the first two incident triangles.
    pub opposites: [u32; 2],
}

/// Builds the undirected edge map keyed by `(min, max)` vertex index.
pub(crate) fn undirected_edges(triangles: &[[u32; 3]]) -> HashMap<(u32, u32), EdgeInfo> {
    let mut map: HashMap<(u32, u32), EdgeInfo> = HashMap::with_capacity(triangles.len() * 3 / 2);
    for tri in triangles {
        for k in 0..3 {
            let a = tri[k];
            let b = tri[(k + 1) % 3];
            let opposite = tri[(k + 2) % 3];
            let key = (a.min(b), a.max(b));
            let e = map.entry(key).or_insert(EdgeInfo {
                uses: 0,
                forward: 0,
                backward: 0,
                opposites: [u32::MAX; 2],
            });
            if (e.uses as usize) < 2 {
                e.opposites[e.uses as usize] = opposite;
            }
            e.uses = e.uses.saturating_add(1);
            if a < b {
                e.forward = e.forward.saturating_add(1);
            } else {
                e.backward = e.backward.saturating_add(1);
            }
        }
    }
    map
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::TriMesh;
    use crate::Vec3;

    /// Axis-aligned cube `[-h, h]^3` as a closed, outward-oriented mesh.
    pub fn cube(h: f64) -> TriMesh {
        let corner = |i: usize| {
            Vec3::new(
                if i & 1 != 0 { h } else { -h },
                if i & 2 != 0 { h } else { -h },
                if i & 4 != 0 { h } else { -h },
            )
        };
        let positions = (0..8).map(corner).collect();
        // Each face split into two CCW triangles as seen from outside.
        let triangles = vec![
            [0, 2, 3], [0, 3, 1], // -z
            [4, 5, 7], [4, 7, 6], // +z
            [0, 1, 5], [0, 5, 4], // -y
            [2, 6, 7], [2, 7, 3], // +y
            [0, 4, 6], [0, 6, 2], // -x
            [1, 3, 7], [1, 7, 5], // +x
        ];
        TriMesh {
            positions,
            triangles,
            ..TriMesh::default()
        }
    }

    /// Regular tetrahedron, closed and outward-oriented.
    pub fn tetrahedron() -> TriMesh {
        let positions = vec![
            Vec3::new(1.0, 1.0, 1.0),
            Vec3::new(1.0, -1.0, -1.0),
            Vec3::new(-1.0, 1.0, -1.0),
            Vec3::new(-1.0, -1.0, 1.0),
        ];
        let triangles = vec![[0, 1, 2], [0, 3, 1], [0, 2, 3], [1, 3, 2]];
        TriMesh {
            positions,
            triangles,
            ..TriMesh::default()
        }
    }

    /// Regular icosahedron with unit circumradius, closed and
    /// outward-oriented.
    pub fn icosahedron() -> TriMesh {
        let phi = (1.0 + 5f64.sqrt()) / 2.0;
        let raw = [
            (-1.0, phi, 0.0),
            (1.0, phi, 0.0),
            (-1.0, -phi, 0.0),
            (1.0, -phi, 0.0),
            (0.0, -1.0, phi),
            (0.0, 1.0, phi),
            (0.0, -1.0, -phi),
            (0.0, 1.0, -phi),
            (phi, 0.0, -1.0),
            (phi, 0.0, 1.0),
            (-phi, 0.0, -1.0),
            (-phi, 0.0, 1.0),
        ];
        let positions = raw
            .iter()
            .map(|&(x, y, z)| Vec3::new(x, y, z).normalize())
            .collect();
        let triangles = vec![
            [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
            [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
            [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
            [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
        ];
        TriMesh {
            positions,
            triangles,
            ..TriMesh::default()
        }
    }
}
