//! Deterministic z-buffered perspective rasterizer.
//!
//! Triangles are projected through a [`View`], binned by pixel row, and each
//! row is filled independently (rows parallelize; triangle order within a
//! row is fixed), so output images are bit-identical regardless of thread
//! count. There is no near-plane clipping: a triangle with any vertex at or
//! behind the camera plane is dropped whole, which is exact for the
//! origin-centered rig where scene content never straddles the camera.

use crate::error::Result;
use crate::mesh::TriMesh;
use crate::render::{RenderImage, View, ViewImages};
use crate::Vec3;
use nalgebra::Matrix3;
use rayon::prelude::*;

/// Sentinel triangle index for background pixels.
pub const NO_TRIANGLE: u32 = u32::MAX;

/// Which normal the rasterizer writes into the normal image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NormalSource {
    /// Barycentrically interpolated vertex normals, falling back to the
    /// geometric face normal when the mesh has none.
    #[default]
    Vertex,
    /// Geometric face normal.
    Face,
}

/// Per-pixel hit geometry of one rasterized view: nearest-surface depth,
/// winning triangle, and perspective-correct barycentric weights.
#[derive(Debug, Clone)]
pub struct RasterBuffer {
    /// Image width in pixels.
    pub width: usize,
    /// Image height in pixels.
    pub height: usize,
    /// Positive camera-space depth per pixel, `INFINITY` for background.
    pub depth: Vec<f64>,
    /// Winning triangle index per pixel, [`NO_TRIANGLE`] for background.
    pub tri: Vec<u32>,
    /// Perspective-correct barycentric weights of the hit (sum to 1).
    pub bary: Vec<[f64; 3]>,
}

impl RasterBuffer {
    /// True when the pixel is covered by the mesh.
    #[inline]
    pub fn covered(&self, x: usize, y: usize) -> bool {
        self.tri[y * self.width + x] != NO_TRIANGLE
    }

    /// World position of the surface point visible at the pixel.
    pub fn world_position(&self, mesh: &TriMesh, x: usize, y: usize) -> Option<Vec3> {
        let i = y * self.width + x;
        if self.tri[i] == NO_TRIANGLE {
            return None;
        }
        let t = mesh.triangles[self.tri[i] as usize];
        let w = self.bary[i];
        Some(
            mesh.positions[t[0] as usize] * w[0]
                + mesh.positions[t[1] as usize] * w[1]
                + mesh.positions[t[2] as usize] * w[2],
        )
    }
}

/// Cached camera intrinsics/extrinsics for tight projection loops.
struct Frame {
    rot_t: Matrix3<f64>,
    pos: Vec3,
    th_x: f64,
    th_y: f64,
    width: f64,
    height: f64,
}

impl Frame {
    fn of(view: &View) -> Frame {
        let (th_x, th_y) = view.tan_half();
        Frame {
            rot_t: view.rotation().transpose(),
            pos: view.position(),
            th_x,
            th_y,
            width: view.width as f64,
            height: view.height as f64,
        }
    }

    /// Projects to floating pixel coordinates plus positive depth; `None`
    /// at or behind the camera plane.
    fn project(&self, p: Vec3) -> Option<(f64, f64, f64)> {
        let c = self.rot_t * (p - self.pos);
        if c.z >= -1e-12 {
            return None;
        }
        let px = (c.x / (-c.z * self.th_x) + 1.0) / 2.0 * self.width - 0.5;
        let py = (1.0 - c.y / (-c.z * self.th_y)) / 2.0 * self.height - 0.5;
        Some((px, py, -c.z))
    }
}

/// One screen-space triangle prepared for row filling.
struct ProjTri {
    index: u32,
    /// Projected pixel coordinates of the three vertices.
    p: [[f64; 2]; 3],
    /// Reciprocal of the positive camera-space depth per vertex.
    inv_z: [f64; 3],
    /// Reciprocal of the doubled signed screen area.
    inv_area: f64,
    /// Inclusive clamped pixel-column range.
    x0: usize,
    x1: usize,
}

#[inline]
fn cross2(ax: f64, ay: f64, bx: f64, by: f64) -> f64 {
    ax * by - ay * bx
}

/// Rasterizes the mesh's visible geometry into per-pixel depth, triangle
/// index, and barycentric weights. An empty mesh yields an all-background
/// buffer.
pub fn rasterize_geometry(mesh: &TriMesh, view: &View) -> Result<RasterBuffer> {
    mesh.validate()?;
    view.validate()?;
    let frame = Frame::of(view);
    let (w, h) = (view.width, view.height);

    // Project every vertex once; unprojectable vertices poison their
    // triangles below.
    let projected: Vec<Option<(f64, f64, f64)>> =
        mesh.positions.iter().map(|&p| frame.project(p)).collect();

    let mut tris: Vec<ProjTri> = Vec::new();
    let mut bins: Vec<Vec<u32>> = vec![Vec::new(); h];
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let (Some(a), Some(b), Some(c)) = (
            projected[tri[0] as usize],
            projected[tri[1] as usize],
            projected[tri[2] as usize],
        ) else {
            continue;
        };
        let area2 = cross2(b.0 - a.0, b.1 - a.1, c.0 - a.0, c.1 - a.1);
        if area2 == 0.0 {
            continue;
        }
        let min_x = a.0.min(b.0).min(c.0);
        let max_x = a.0.max(b.0).max(c.0);
        let min_y = a.1.min(b.1).min(c.1);
        let max_y = a.1.max(b.1).max(c.1);
        if max_x < 0.0 || min_x > w as f64 - 1.0 || max_y < 0.0 || min_y > h as f64 - 1.0 {
            continue;
        }
        // Pixel centers sit at integer coordinates of the projected frame,
        // so the covered center range is ceil(min)..=floor(max).
        let x0 = min_x.ceil().max(0.0) as usize;
        let x1 = max_x.floor().min(w as f64 - 1.0) as usize;
        let y0 = min_y.ceil().max(0.0) as usize;
        let y1 = max_y.floor().min(h as f64 - 1.0) as usize;
        if x0 > x1 || y0 > y1 {
            continue;
        }
        let slot = tris.len() as u32;
        tris.push(ProjTri {
            index: t as u32,
            p: [[a.0, a.1], [b.0, b.1], [c.0, c.1]],
            inv_z: [1.0 / a.2, 1.0 / b.2, 1.0 / c.2],
            inv_area: 1.0 / area2,
            x0,
            x1,
        });
        for bin in bins.iter_mut().take(y1 + 1).skip(y0) {
            bin.push(slot);
        }
    }

    let mut depth = vec![f64::INFINITY; w * h];
    let mut tri_idx = vec![NO_TRIANGLE; w * h];
    let mut bary = vec![[0.0f64; 3]; w * h];

    depth
        .par_chunks_mut(w)
        .zip(tri_idx.par_chunks_mut(w))
        .zip(bary.par_chunks_mut(w))
        .enumerate()
        .for_each(|(y, ((drow, trow), brow))| {
            let py = y as f64;
            for &slot in &bins[y] {
                let t = &tris[slot as usize];
                let [a, b, c] = t.p;
                for x in t.x0..=t.x1 {
                    let px = x as f64;
                    let la = cross2(c[0] - b[0], c[1] - b[1], px - b[0], py - b[1]) * t.inv_area;
                    let lb = cross2(a[0] - c[0], a[1] - c[1], px - c[0], py - c[1]) * t.inv_area;
                    let lc = cross2(b[0] - a[0], b[1] - a[1], px - a[0], py - a[1]) * t.inv_area;
                    if la < 0.0 || lb < 0.0 || lc < 0.0 {
                        continue;
                    }
                    let wa = la * t.inv_z[0];
                    let wb = lb * t.inv_z[1];
                    let wc = lc * t.inv_z[2];
                    let denom = wa + wb + wc;
                    let z = 1.0 / denom;
                    if z < drow[x] {
                        drow[x] = z;
                        trow[x] = t.index;
                        brow[x] = [wa * z, wb * z, wc * z];
                    }
                }
            }
        });

    Ok(RasterBuffer {
        width: w,
        height: h,
        depth,
        tri: tri_idx,
        bary,
    })
}

/// Renders mask, depth, world-space normal, and (when the mesh has vertex
/// colors) color images of the mesh under the view.
///
/// The mask is hard coverage; depth is positive camera-space z with
/// `INFINITY` background; normals are unit, world-space, sign-fixed to face
/// the camera, zero on background.
pub fn rasterize_mesh(mesh: &TriMesh, view: &View, normals: NormalSource) -> Result<ViewImages> {
    let buf = rasterize_geometry(mesh, view)?;
    let (w, h) = (buf.width, buf.height);
    let cam_pos = view.position();

    let mut mask = RenderImage::new(w, h, 1, 0.0)?;
    let mut depth = RenderImage::new(w, h, 1, f64::INFINITY)?;
    let mut normal = RenderImage::new(w, h, 3, 0.0)?;
    let want_color = !mesh.colors.is_empty();
    let mut color = if want_color {
        Some(RenderImage::new(w, h, 3, 0.0)?)
    } else {
        None
    };

    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if buf.tri[i] == NO_TRIANGLE {
                continue;
            }
            mask.set(x, y, 0, 1.0);
            depth.set(x, y, 0, buf.depth[i]);
            let t = mesh.triangles[buf.tri[i] as usize];
            let (pa, pb, pc) = (
                mesh.positions[t[0] as usize],
                mesh.positions[t[1] as usize],
                mesh.positions[t[2] as usize],
            );
            let wgt = buf.bary[i];
            let surface = pa * wgt[0] + pb * wgt[1] + pc * wgt[2];
            let face_n = (pb - pa).cross(&(pc - pa));
            let mut n = match normals {
                NormalSource::Vertex if !mesh.normals.is_empty() => {
                    let blended = mesh.normals[t[0] as usize] * wgt[0]
                        + mesh.normals[t[1] as usize] * wgt[1]
                        + mesh.normals[t[2] as usize] * wgt[2];
                    if blended.norm() > 1e-12 {
                        blended
                    } else {
                        face_n
                    }
                }
                _ => face_n,
            };
            let len = n.norm();
            if len > 1e-12 {
                n /= len;
                if n.dot(&(cam_pos - surface)) < 0.0 {
                    n = -n;
                }
                normal.set3(x, y, n);
            }
            if let Some(img) = color.as_mut() {
                let blended = mesh.colors[t[0] as usize] * wgt[0]
                    + mesh.colors[t[1] as usize] * wgt[1]
                    + mesh.colors[t[2] as usize] * wgt[2];
                img.set3(
                    x,
                    y,
                    Vec3::new(
                        blended.x.clamp(0.0, 1.0),
                        blended.y.clamp(0.0, 1.0),
                        blended.z.clamp(0.0, 1.0),
                    ),
                );
            }
        }
    }

    Ok(ViewImages {
        mask,
        depth: Some(depth),
        normal: Some(normal),
        color,
    })
}
