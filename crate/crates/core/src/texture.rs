//! View-aware volumetric texture baking.
//!
//! Colors live in a dense RGB grid over world space ([`TextureGrid`])
//! instead of a UV atlas, so any surface point can be colored by one
//! trilinear lookup. [`bake`] fits the grid to prior color images by
//! first-order optimization: each rasterized surface pixel compares its
//! trilinear texture sample against the prior color, weighted by
//! `cos^k` of the angle between the surface normal and the direction to
//! the camera ([`view_aware_weight`]). The weighting is the point: a
//! view sees a surface element it faces head-on far more reliably than
//! one it grazes, so down-weighting oblique observations suppresses
//! ghosting when views disagree.
//!
//! The optimizer preconditions each voxel's gradient by its accumulated
//! observation mass, evaluates the candidate, and halves the step on any
//! loss increase (floor 1e-4, rejecting the step there), which makes the
//! recorded loss trace monotone non-increasing. Voxels no surface pixel
//! observes relax toward the mean of their six neighbors instead, so
//! cavities inherit nearby colors rather than staying initialization
//! gray. Values are clamped to [0, 1] throughout. Everything is
//! sequential and deterministic: the same inputs bake the same texture
//! bit for bit.

use crate::error::{Error, Result};
use crate::mesh::TriMesh;
use crate::render::{rasterize_geometry, RenderImage, View, ViewImages, ViewSet};
use crate::sdf::io::{expect_eof, read_all, read_f32_values, read_f64, read_u16, read_u32};
use crate::Vec3;
use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

/// Smallest permitted texture side: below this the trilinear support
/// spans most of the volume and per-view weighting loses meaning.
pub const MIN_TEXTURE_SIDE: usize = 8;

/// Step-size floor of the halving safeguard in [`bake`].
const STEP_FLOOR: f64 = 1e-4;

/// Dense RGB field over a world-space box, queried by trilinear
/// interpolation. Values are interleaved `[r, g, b]` per voxel, voxels
/// ordered x-fastest, and every channel stays in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct TextureGrid {
    dims: (usize, usize, usize),
    origin: Vec3,
    spacing: f64,
    values: Vec<f64>,
}

impl TextureGrid {
    /// Builds a grid from raw parts, checking the side floor, spacing,
    /// value count (`3 * nx * ny * nz`), and the [0, 1] range.
    pub fn new(
        dims: (usize, usize, usize),
        origin: Vec3,
        spacing: f64,
        values: Vec<f64>,
    ) -> Result<Self> {
        let (nx, ny, nz) = dims;
        if nx < MIN_TEXTURE_SIDE || ny < MIN_TEXTURE_SIDE || nz < MIN_TEXTURE_SIDE {
            return Err(Error::invalid(
                "dims",
                format!("every axis needs at least {MIN_TEXTURE_SIDE} voxels, got {dims:?}"),
            ));
        }
        if !(spacing.is_finite() && spacing > 0.0) {
            return Err(Error::invalid(
                "spacing",
                format!("must be finite and positive, got {spacing}"),
            ));
        }
        if !origin.iter().all(|c| c.is_finite()) {
            return Err(Error::invalid("origin", format!("{origin:?}")));
        }
        let expect = 3 * nx * ny * nz;
        if values.len() != expect {
            return Err(Error::ShapeMismatch {
                what: "texture values",
                expected: format!("{expect}"),
                got: format!("{}", values.len()),
            });
        }
        if !values.iter().all(|v| (0.0..=1.0).contains(v)) {
            return Err(Error::invalid(
                "values",
                "texture colors must lie in [0, 1]".to_string(),
            ));
        }
        Ok(Self {
            dims,
            origin,
            spacing,
            values,
        })
    }

    /// A grid filled with one color.
    pub fn filled(
        dims: (usize, usize, usize),
        origin: Vec3,
        spacing: f64,
        color: Vec3,
    ) -> Result<Self> {
        let n = dims.0 * dims.1 * dims.2;
        let mut values = Vec::with_capacity(3 * n);
        for _ in 0..n {
            values.extend_from_slice(&[color.x, color.y, color.z]);
        }
        Self::new(dims, origin, spacing, values)
    }

    /// A mid-gray grid centered on the world origin whose voxel centers
    /// span `extent` along x (`spacing = extent / nx`), matching the
    /// distance-field grid convention.
    pub fn centered(dims: (usize, usize, usize), extent: f64) -> Result<Self> {
        if !(extent.is_finite() && extent > 0.0) {
            return Err(Error::invalid("extent", format!("{extent}")));
        }
        let spacing = extent / dims.0 as f64;
        let origin = Vec3::new(
            -spacing * (dims.0 as f64 - 1.0) / 2.0,
            -spacing * (dims.1 as f64 - 1.0) / 2.0,
            -spacing * (dims.2 as f64 - 1.0) / 2.0,
        );
        Self::filled(dims, origin, spacing, Vec3::new(0.5, 0.5, 0.5))
    }

    /// Voxel counts per axis.
    pub fn dims(&self) -> (usize, usize, usize) {
        self.dims
    }

    /// World position of voxel (0, 0, 0)'s center.
    pub fn origin(&self) -> Vec3 {
        self.origin
    }

    /// Voxel edge length in world units.
    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    /// Interleaved RGB values, x-fastest.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Mutable access to the interleaved RGB values.
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// Flat voxel index (not value index; multiply by 3 for the red
    /// channel's position in [`Self::values`]).
    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        debug_assert!(x < self.dims.0 && y < self.dims.1 && z < self.dims.2);
        x + self.dims.0 * (y + self.dims.1 * z)
    }

    /// World position of a voxel center.
    pub fn voxel_center(&self, x: usize, y: usize, z: usize) -> Vec3 {
        self.origin + self.spacing * Vec3::new(x as f64, y as f64, z as f64)
    }

    /// True when `p` lies inside the box spanned by the voxel centers,
    /// where trilinear interpolation needs no border clamping.
    pub fn contains(&self, p: Vec3) -> bool {
        let (nx, ny, nz) = self.dims;
        let g = (p - self.origin) / self.spacing;
        g.x >= 0.0
            && g.y >= 0.0
            && g.z >= 0.0
            && g.x <= (nx - 1) as f64
            && g.y <= (ny - 1) as f64
            && g.z <= (nz - 1) as f64
    }

    /// The 8 voxel indices and trilinear weights that interpolate at
    /// `p`; coordinates outside the voxel-center box clamp to the
    /// border.
    fn stencil(&self, p: Vec3) -> ([usize; 8], [f64; 8]) {
        let (nx, ny, nz) = self.dims;
        let g = (p - self.origin) / self.spacing;
        let mut i0 = [0usize; 3];
        let mut f = [0.0f64; 3];
        for (a, &n) in [nx, ny, nz].iter().enumerate() {
            let c = g[a].clamp(0.0, (n - 1) as f64);
            let base = (c.floor() as usize).min(n - 2);
            i0[a] = base;
            f[a] = c - base as f64;
        }
        let u = [1.0 - f[0], f[0]];
        let v = [1.0 - f[1], f[1]];
        let w = [1.0 - f[2], f[2]];
        let mut idx = [0usize; 8];
        let mut wt = [0.0f64; 8];
        for dz in 0..2 {
            for dy in 0..2 {
                for dx in 0..2 {
                    let k = dx + 2 * dy + 4 * dz;
                    idx[k] = self.index(i0[0] + dx, i0[1] + dy, i0[2] + dz);
                    wt[k] = u[dx] * v[dy] * w[dz];
                }
            }
        }
        (idx, wt)
    }

    /// Trilinear RGB sample at a world position; out-of-box positions
    /// clamp to the border voxels.
    pub fn sample(&self, p: Vec3) -> Vec3 {
        let (idx, wt) = self.stencil(p);
        let mut c = Vec3::zeros();
        for k in 0..8 {
            let base = 3 * idx[k];
            c.x += wt[k] * self.values[base];
            c.y += wt[k] * self.values[base + 1];
            c.z += wt[k] * self.values[base + 2];
        }
        c
    }
}

/// Texture baking parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BakeConfig {
    /// Output texture resolution per axis.
    pub texture_dims: (usize, usize, usize),
    /// World size the texture voxel centers span along x; the grid is
    /// centered on the origin.
    pub world_extent: f64,
    /// View-awareness exponent `k`: observation weight is `cos^k` of the
    /// angle between surface normal and direction to the camera, zero
    /// for back-facing pixels. Zero recovers a plain squared loss.
    pub view_exponent: f64,
    /// Optimization iterations; zero returns the mid-gray
    /// initialization untouched (a degenerate probe).
    pub iterations: usize,
    /// Initial step size as a multiple of the per-voxel preconditioned
    /// gradient; halved whenever a step would increase the loss, with a
    /// floor of 1e-4 where increasing steps are rejected outright.
    pub step_size: f64,
    /// Per-iteration pull rate of unobserved voxels toward the mean of
    /// their six neighbors, in [0, 1].
    pub smooth_weight: f64,
}

impl Default for BakeConfig {
    fn default() -> Self {
        Self {
            texture_dims: (64, 64, 64),
            world_extent: 2.0,
            view_exponent: 4.0,
            iterations: 200,
            step_size: 1.0,
            smooth_weight: 1e-3,
        }
    }
}

impl BakeConfig {
    /// Checks every numeric precondition listed on the fields.
    pub fn validate(&self) -> Result<()> {
        let (nx, ny, nz) = self.texture_dims;
        if nx < MIN_TEXTURE_SIDE || ny < MIN_TEXTURE_SIDE || nz < MIN_TEXTURE_SIDE {
            return Err(Error::invalid(
                "texture_dims",
                format!(
                    "every axis needs at least {MIN_TEXTURE_SIDE} voxels, got {:?}",
                    self.texture_dims
                ),
            ));
        }
        if !(self.world_extent.is_finite() && self.world_extent > 0.0) {
            return Err(Error::invalid(
                "world_extent",
                format!("got {}", self.world_extent),
            ));
        }
        if !(self.view_exponent.is_finite() && self.view_exponent >= 0.0) {
            return Err(Error::invalid(
                "view_exponent",
                format!("got {}", self.view_exponent),
            ));
        }
        if !(self.step_size.is_finite() && self.step_size > 0.0) {
            return Err(Error::invalid(
                "step_size",
                format!("got {}", self.step_size),
            ));
        }
        if !(self.smooth_weight.is_finite() && (0.0..=1.0).contains(&self.smooth_weight)) {
            return Err(Error::invalid(
                "smooth_weight",
                format!("need a rate in [0, 1], got {}", self.smooth_weight),
            ));
        }
        Ok(())
    }
}

/// Observation weight of a surface element under a view: for
/// `c = dot(view_vec, normal)` the weight is 0 when `c <= 0`
/// (back-facing) and `c^k` otherwise. `view_vec` points from the
/// surface toward the camera; both inputs should be unit length within
/// about 1e-3.
pub fn view_aware_weight(view_vec: Vec3, normal: Vec3, k: f64) -> f64 {
    let c = view_vec.dot(&normal);
    if c <= 0.0 {
        0.0
    } else {
        c.powf(k)
    }
}

/// One surface pixel's contribution to the bake: where to read the
/// texture, how much to trust the view there, and what color it should
/// have shown.
struct PixelSample {
    stencil_idx: [usize; 8],
    stencil_wt: [f64; 8],
    weight: f64,
    prior: Vec3,
}

/// A baked texture plus the per-iteration loss trace (`trace[0]` is the
/// loss of the mid-gray initialization, then one row per iteration).
#[derive(Debug, Clone)]
pub struct BakeResult {
    /// The fitted texture.
    pub texture: TextureGrid,
    /// View-aware data loss after each accepted iteration.
    pub trace: Vec<f64>,
}

/// Rasterizes the mesh into every view once and collects one
/// [`PixelSample`] per covered, front-facing pixel, in view-then-row
/// scan order.
fn collect_samples(
    mesh: &TriMesh,
    views: &ViewSet,
    tex: &TextureGrid,
    k: f64,
) -> Result<Vec<PixelSample>> {
    let mut samples = Vec::new();
    for (i, (view, images)) in views.views.iter().zip(&views.images).enumerate() {
        let color = images.color.as_ref().ok_or_else(|| {
            Error::invalid("views", format!("view {i} lacks the color image baking fits"))
        })?;
        if color.width() != view.width || color.height() != view.height || color.channels() != 3 {
            return Err(Error::ShapeMismatch {
                what: "prior color image",
                expected: format!("{}x{}x3", view.width, view.height),
                got: format!(
                    "{}x{}x{}",
                    color.width(),
                    color.height(),
                    color.channels()
                ),
            });
        }
        let buf = rasterize_geometry(mesh, view)?;
        let cam = view.position();
        let use_vertex_normals = !mesh.normals.is_empty();
        for y in 0..view.height {
            for x in 0..view.width {
                let Some(p) = buf.world_position(mesh, x, y) else {
                    continue;
                };
                let pix = y * view.width + x;
                let tri = mesh.triangles[buf.tri[pix] as usize];
                let [a, b, c] = [
                    mesh.positions[tri[0] as usize],
                    mesh.positions[tri[1] as usize],
                    mesh.positions[tri[2] as usize],
                ];
                // Smooth vertex normals avoid spuriously back-facing
                // silhouette pixels on faceted meshes; the face normal is
                // the fallback when the mesh carries none.
                let normal = if use_vertex_normals {
                    let w = buf.bary[pix];
                    let n = mesh.normals[tri[0] as usize] * w[0]
                        + mesh.normals[tri[1] as usize] * w[1]
                        + mesh.normals[tri[2] as usize] * w[2];
                    let len = n.norm();
                    if len > 1e-9 {
                        n / len
                    } else {
                        (b - a).cross(&(c - a)).normalize()
                    }
                } else {
                    (b - a).cross(&(c - a)).normalize()
                };
                let to_cam = (cam - p).normalize();
                let weight = view_aware_weight(to_cam, normal, k);
                if weight <= 0.0 {
                    continue;
                }
                let (stencil_idx, stencil_wt) = tex.stencil(p);
                samples.push(PixelSample {
                    stencil_idx,
                    stencil_wt,
                    weight,
                    prior: color.get3(x, y),
                });
            }
        }
    }
    Ok(samples)
}

/// Weighted squared color error of the texture against all samples.
fn data_loss(tex: &TextureGrid, samples: &[PixelSample]) -> f64 {
    let values = tex.values();
    let mut loss = 0.0;
    for s in samples {
        let mut c = Vec3::zeros();
        for k in 0..8 {
            let base = 3 * s.stencil_idx[k];
            c.x += s.stencil_wt[k] * values[base];
            c.y += s.stencil_wt[k] * values[base + 1];
            c.z += s.stencil_wt[k] * values[base + 2];
        }
        let d = c - s.prior;
        loss += s.weight * d.norm_squared();
    }
    loss
}

/// Bakes a texture for the mesh from prior color images.
///
/// The views need not form the standard rig — any cameras work — but
/// every view must carry a color image of matching size, and every mesh
/// vertex must lie inside the texture's voxel-center box. Visibility is
/// hard: a surface point contributes to a view only where it wins that
/// view's depth buffer. Iteration count zero returns the mid-gray
/// initialization with just the initial loss in the trace.
pub fn bake(mesh: &TriMesh, views: &ViewSet, cfg: &BakeConfig) -> Result<BakeResult> {
    cfg.validate()?;
    mesh.validate()?;
    if views.images.len() != views.views.len() {
        return Err(Error::invalid(
            "views",
            "baking requires one image bundle per view".to_string(),
        ));
    }
    for view in &views.views {
        view.validate()?;
    }
    let mut tex = TextureGrid::centered(cfg.texture_dims, cfg.world_extent)?;
    if let Some(p) = mesh.positions.iter().find(|p| !tex.contains(**p)) {
        return Err(Error::invalid(
            "mesh",
            format!(
                "vertex ({:.4}, {:.4}, {:.4}) lies outside the texture box (extent {})",
                p.x, p.y, p.z, cfg.world_extent
            ),
        ));
    }

    let samples = collect_samples(mesh, views, &tex, cfg.view_exponent)?;

    // Per-voxel observation mass: the diagonal of the data term's
    // curvature, used both to precondition steps and to split voxels
    // into observed (data-driven) and unobserved (smoothness-driven).
    let n_vox = tex.values().len() / 3;
    let mut diag = vec![0.0f64; n_vox];
    for s in &samples {
        for k in 0..8 {
            diag[s.stencil_idx[k]] += 2.0 * s.weight * s.stencil_wt[k] * s.stencil_wt[k];
        }
    }

    let mut trace = Vec::with_capacity(cfg.iterations + 1);
    let mut loss = data_loss(&tex, &samples);
    trace.push(loss);
    let mut step = cfg.step_size;
    let mut grad = vec![0.0f64; tex.values().len()];

    for _ in 0..cfg.iterations {
        grad.fill(0.0);
        {
            let values = tex.values();
            for s in &samples {
                let mut c = Vec3::zeros();
                for k in 0..8 {
                    let base = 3 * s.stencil_idx[k];
                    c.x += s.stencil_wt[k] * values[base];
                    c.y += s.stencil_wt[k] * values[base + 1];
                    c.z += s.stencil_wt[k] * values[base + 2];
                }
                let d = 2.0 * s.weight * (c - s.prior);
                for k in 0..8 {
                    let base = 3 * s.stencil_idx[k];
                    grad[base] += s.stencil_wt[k] * d.x;
                    grad[base + 1] += s.stencil_wt[k] * d.y;
                    grad[base + 2] += s.stencil_wt[k] * d.z;
                }
            }
        }

        // Candidate update on observed voxels, halving until the loss
        // stops increasing or the floor rejects the step.
        loop {
            let mut cand = tex.clone();
            {
                let cv = cand.values_mut();
                for (vox, &d) in diag.iter().enumerate() {
                    if d > 0.0 {
                        let scale = step / d;
                        for ch in 0..3 {
                            let i = 3 * vox + ch;
                            cv[i] = (cv[i] - scale * grad[i]).clamp(0.0, 1.0);
                        }
                    }
                }
            }
            let cand_loss = data_loss(&cand, &samples);
            if cand_loss <= loss {
                tex = cand;
                loss = cand_loss;
                break;
            }
            if step <= STEP_FLOOR {
                break; // Reject: keep the current texture and loss.
            }
            step = (step * 0.5).max(STEP_FLOOR);
        }

        // Unobserved voxels relax toward their neighbor mean. They sit
        // in no stencil, so this cannot change the data loss above.
        diffuse_unobserved(&mut tex, &diag, cfg.smooth_weight);
        trace.push(loss);
    }

    Ok(BakeResult { texture: tex, trace })
}

/// One Jacobi-style relaxation sweep pulling every unobserved voxel
/// toward the mean color of its (up to six) face neighbors by `rate`.
fn diffuse_unobserved(tex: &mut TextureGrid, diag: &[f64], rate: f64) {
    if rate == 0.0 {
        return;
    }
    let (nx, ny, nz) = tex.dims();
    let old = tex.values().to_vec();
    let values = tex.values_mut();
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                let vox = x + nx * (y + ny * z);
                if diag[vox] > 0.0 {
                    continue;
                }
                let mut mean = [0.0f64; 3];
                let mut count = 0.0;
                let mut add = |ok: bool, nb: usize| {
                    if ok {
                        for (m, ch) in mean.iter_mut().zip(0..3) {
                            *m += old[3 * nb + ch];
                        }
                        count += 1.0;
                    }
                };
                add(x > 0, vox.wrapping_sub(1));
                add(x + 1 < nx, vox + 1);
                add(y > 0, vox.wrapping_sub(nx));
                add(y + 1 < ny, vox + nx);
                add(z > 0, vox.wrapping_sub(nx * ny));
                add(z + 1 < nz, vox + nx * ny);
                if count == 0.0 {
                    continue;
                }
                for ch in 0..3 {
                    let i = 3 * vox + ch;
                    values[i] += rate * (mean[ch] / count - values[i]);
                }
            }
        }
    }
}

/// Renders the textured mesh into a view: hard-rasterized coverage with
/// per-pixel trilinear texture lookups at the visible surface points.
/// Background pixels are black with mask zero; depth and normals are
/// not produced.
pub fn render_texture(mesh: &TriMesh, tex: &TextureGrid, view: &View) -> Result<ViewImages> {
    let buf = rasterize_geometry(mesh, view)?;
    let (w, h) = (view.width, view.height);
    let mut mask = RenderImage::new(w, h, 1, 0.0)?;
    let mut color = RenderImage::new(w, h, 3, 0.0)?;
    for y in 0..h {
        for x in 0..w {
            if let Some(p) = buf.world_position(mesh, x, y) {
                mask.set(x, y, 0, 1.0);
                color.set3(x, y, tex.sample(p));
            }
        }
    }
    Ok(ViewImages {
        mask,
        depth: None,
        normal: None,
        color: Some(color),
    })
}

/// Returns a copy of the mesh with per-vertex colors sampled from the
/// texture. Vertices outside the texture box clamp to the border color
/// rather than failing, so slightly oversized meshes still export.
pub fn query_vertex_colors(mesh: &TriMesh, tex: &TextureGrid) -> Result<TriMesh> {
    mesh.validate()?;
    let mut out = mesh.clone();
    out.colors = mesh.positions.iter().map(|&p| tex.sample(p)).collect();
    Ok(out)
}

// --- TEXG file format ---
//
// Layout, all little-endian:
//
//   magic   4 bytes  "TEXG"
//   version u16      currently 1
//   dims    3 x u32  nx, ny, nz
//   origin  3 x f64  world position of voxel (0,0,0)'s center
//   spacing f64
//   values  3*nx*ny*nz x f32, RGB interleaved, voxels x-fastest

pub(crate) const TEXG_MAGIC: &[u8; 4] = b"TEXG";
pub(crate) const TEXG_VERSION: u16 = 1;

/// Writes a texture to a TEXG file (colors quantize to f32).
pub fn write_texg(tex: &TextureGrid, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let werr = |e| Error::io(path, e);
    w.write_all(TEXG_MAGIC).map_err(werr)?;
    w.write_all(&TEXG_VERSION.to_le_bytes()).map_err(werr)?;
    let (nx, ny, nz) = tex.dims();
    for n in [nx, ny, nz] {
        w.write_all(&(n as u32).to_le_bytes()).map_err(werr)?;
    }
    for c in 0..3 {
        w.write_all(&tex.origin()[c].to_le_bytes()).map_err(werr)?;
    }
    w.write_all(&tex.spacing().to_le_bytes()).map_err(werr)?;
    for v in tex.values() {
        w.write_all(&(*v as f32).to_le_bytes()).map_err(werr)?;
    }
    w.flush().map_err(werr)
}

/// Reads a texture from a TEXG file.
pub fn read_texg(path: &Path) -> Result<TextureGrid> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);
    let mut magic = [0u8; 4];
    read_all(&mut r, &mut magic, path)?;
    if &magic != TEXG_MAGIC {
        return Err(Error::format(path, format!("bad magic {magic:?}")));
    }
    let version = read_u16(&mut r, path)?;
    if version != TEXG_VERSION {
        return Err(Error::format(path, format!("unsupported version {version}")));
    }
    let nx = read_u32(&mut r, path)? as usize;
    let ny = read_u32(&mut r, path)? as usize;
    let nz = read_u32(&mut r, path)? as usize;
    let count = nx
        .checked_mul(ny)
        .and_then(|v| v.checked_mul(nz))
        .and_then(|v| v.checked_mul(3))
        .filter(|v| *v > 0 && *v <= (1usize << 33))
        .ok_or_else(|| Error::format(path, format!("bad dims {nx}x{ny}x{nz}")))?;
    let origin = Vec3::new(
        read_f64(&mut r, path)?,
        read_f64(&mut r, path)?,
        read_f64(&mut r, path)?,
    );
    let spacing = read_f64(&mut r, path)?;
    let mut values = read_f32_values(&mut r, count, path)?;
    // f32 rounding can nudge a boundary value a hair outside [0, 1].
    for v in &mut values {
        *v = v.clamp(0.0, 1.0);
    }
    let tex = TextureGrid::new((nx, ny, nz), origin, spacing, values)
        .map_err(|e| Error::format(path, format!("invalid texture: {e}")))?;
    expect_eof(&mut r, path)?;
    Ok(tex)
}
