//! Loop subdivision with attribute re-interpolation.

use super::{undirected_edges, TriMesh};
use crate::error::{Error, Result};
use crate::Vec3;
use std::collections::HashMap;
use std::f64::consts::TAU;

/// Applies `iterations` rounds of Loop subdivision.
///
/// Each round splits every triangle into four. Interior edge vertices use
/// the 3/8-3/8-1/8-1/8 mask, boundary edge vertices are midpoints; interior
/// vertices are repositioned with the valence-dependent Loop mask, boundary
/// vertices with the 3/4-1/8-1/8 curve mask (corners with more than two
/// boundary edges stay pinned). Normals and colors, when present, are
/// blended with the same weights; normals are renormalized.
///
/// Edges shared by more than two triangles are rejected.
pub fn loop_subdivide(mesh: &TriMesh, iterations: u32) -> Result<TriMesh> {
    mesh.validate()?;
    let mut out = mesh.clone();
    for _ in 0..iterations {
        out = subdivide_once(&out)?;
    }
    Ok(out)
}

/// A sparse affine blend of source vertices.
type Mask = Vec<(u32, f64)>;

fn subdivide_once(mesh: &TriMesh) -> Result<TriMesh> {
    let edges = undirected_edges(&mesh.triangles);
    // Deterministic processing order regardless of hash-map iteration.
    let mut edge_list: Vec<((u32, u32), super::EdgeInfo)> =
        edges.iter().map(|(k, v)| (*k, *v)).collect();
    edge_list.sort_unstable_by_key(|(k, _)| *k);

    for ((a, b), e) in &edge_list {
        if e.uses > 2 {
            return Err(Error::NonManifoldEdge {
                v0: *a,
                v1: *b,
                count: e.uses as usize,
            });
        }
    }

    let nv = mesh.positions.len();
    let mut neighbors: Vec<Vec<u32>> = vec![Vec::new(); nv];
    let mut boundary_neighbors: Vec<Vec<u32>> = vec![Vec::new(); nv];
    for ((a, b), e) in &edge_list {
        neighbors[*a as usize].push(*b);
        neighbors[*b as usize].push(*a);
        if e.uses == 1 {
            boundary_neighbors[*a as usize].push(*b);
            boundary_neighbors[*b as usize].push(*a);
        }
    }

    // Masks for repositioned original vertices.
    let mut masks: Vec<Mask> = Vec::with_capacity(nv + edge_list.len());
    for v in 0..nv {
        let ring = &neighbors[v];
        let boundary = &boundary_neighbors[v];
        let mask = if !boundary.is_empty() {
            if boundary.len() == 2 {
                vec![
                    (v as u32, 3.0 / 4.0),
                    (boundary[0], 1.0 / 8.0),
                    (boundary[1], 1.0 / 8.0),
                ]
            } else {
                // Corner or non-manifold boundary fan: keep fixed.
                vec![(v as u32, 1.0)]
            }
        } else if ring.is_empty() {
            vec![(v as u32, 1.0)]
        } else {
            let n = ring.len() as f64;
            let c = 3.0 / 8.0 + (TAU / n).cos() / 4.0;
            let beta = (5.0 / 8.0 - c * c) / n;
            let mut m = vec![(v as u32, 1.0 - n * beta)];
            m.extend(ring.iter().map(|&r| (r, beta)));
            m
        };
        masks.push(mask);
    }

    // Masks for edge vertices, ids assigned in sorted edge order.
    let mut edge_id: HashMap<(u32, u32), u32> = HashMap::with_capacity(edge_list.len());
    for ((a, b), e) in &edge_list {
        let id = (nv + edge_id.len()) as u32;
        edge_id.insert((*a, *b), id);
        let mask = if e.uses == 1 {
            vec![(*a, 0.5), (*b, 0.5)]
        } else {
            vec![
                (*a, 3.0 / 8.0),
                (*b, 3.0 / 8.0),
                (e.opposites[0], 1.0 / 8.0),
                (e.opposites[1], 1.0 / 8.0),
            ]
        };
        masks.push(mask);
    }

    let blend = |attr: &[Vec3]| -> Vec<Vec3> {
        masks
            .iter()
            .map(|m| {
                m.iter()
                    .fold(Vec3::zeros(), |acc, (i, w)| acc + attr[*i as usize] * *w)
            })
            .collect()
    };

    let positions = blend(&mesh.positions);
    let normals = if mesh.normals.is_empty() {
        Vec::new()
    } else {
        blend(&mesh.normals)
            .into_iter()
            .map(|n| {
                let len = n.norm();
                if len > 1e-12 {
                    n / len
                } else {
                    n
                }
            })
            .collect()
    };
    let colors = if mesh.colors.is_empty() {
        Vec::new()
    } else {
        blend(&mesh.colors)
    };

    let mut triangles = Vec::with_capacity(mesh.triangles.len() * 4);
    for t in &mesh.triangles {
        let eid = |a: u32, b: u32| edge_id[&(a.min(b), a.max(b))];
        let (v0, v1, v2) = (t[0], t[1], t[2]);
        let (e01, e12, e20) = (eid(v0, v1), eid(v1, v2), eid(v2, v0));
        triangles.push([v0, e01, e20]);
        triangles.push([v1, e12, e01]);
        triangles.push([v2, e20, e12]);
        triangles.push([e01, e12, e20]);
    }

    Ok(TriMesh {
        positions,
        normals,
        colors,
        triangles,
    })
}
