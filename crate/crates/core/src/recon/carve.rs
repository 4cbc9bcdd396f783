//! Space-carving initialization: a signed distance field derived from the
//! visual hull of six binary silhouettes.
//!
//! A voxel belongs to the hull when its center projects inside every view's
//! test silhouette. The test silhouette is the binarized mask shrunk or
//! grown by a whole-pixel margin: positive margins erode (conservative
//! against over-segmented priors, the default), negative margins dilate
//! (conservative the other way: a one-pixel dilation absorbs the rounding
//! of the center's projection to a pixel, so the hull provably contains
//! every voxel whose center lies inside the true silhouette cone).
//!
//! The hull is converted to a signed field by two chamfer distance
//! transforms (3x3x3 neighborhood, weights `spacing * {1, sqrt2, sqrt3}`),
//! offset half a voxel so the zero crossing sits between the innermost
//! outside center and the outermost inside center, and finally compressed
//! with [`encode`] into a latent code.

use crate::codec::{encode, CodecConfig, LatentCode};
use crate::error::{Error, Result};
use crate::render::{RenderImage, View, ViewSet};
use crate::sdf::SdfGrid;
use crate::Vec3;
use nalgebra::Matrix3;

/// A view's projection math with the trigonometry hoisted out of the
/// per-voxel loop. Mirrors [`View::project`] exactly.
struct Projector {
    pos: Vec3,
    rot_t: Matrix3<f64>,
    th_x: f64,
    th_y: f64,
    width: usize,
    height: usize,
}

impl Projector {
    fn new(view: &View) -> Self {
        let (th_x, th_y) = view.tan_half();
        Self {
            pos: view.position(),
            rot_t: view.rotation().transpose(),
            th_x,
            th_y,
            width: view.width,
            height: view.height,
        }
    }

    /// Nearest pixel of the projected point, or `None` when the point is
    /// behind the camera or lands outside the image.
    fn pixel(&self, p: Vec3) -> Option<(usize, usize)> {
        let c = self.rot_t * (p - self.pos);
        if c.z >= -1e-12 {
            return None;
        }
        let px = (c.x / (-c.z * self.th_x) + 1.0) / 2.0 * self.width as f64 - 0.5;
        let py = (1.0 - c.y / (-c.z * self.th_y)) / 2.0 * self.height as f64 - 0.5;
        let ix = px.round();
        let iy = py.round();
        if ix < 0.0 || iy < 0.0 || ix >= self.width as f64 || iy >= self.height as f64 {
            return None;
        }
        Some((ix as usize, iy as usize))
    }
}

/// One eroded/dilated binary silhouette, row-major.
struct TestMask {
    proj: Projector,
    keep: Vec<bool>,
}

fn binarize(mask: &RenderImage) -> Vec<bool> {
    mask.values().iter().map(|&v| v >= 0.5).collect()
}

/// One 3x3 morphology round. `grow` dilates (any neighbor set), otherwise
/// erodes (all neighbors set); pixels beyond the border count as empty.
fn morph_round(mask: &[bool], width: usize, height: usize, grow: bool) -> Vec<bool> {
    let mut out = vec![false; mask.len()];
    for y in 0..height {
        for x in 0..width {
            let mut acc = !grow;
            'scan: for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    let nx = x as i64 + dx;
                    let ny = y as i64 + dy;
                    let bit = nx >= 0
                        && ny >= 0
                        && nx < width as i64
                        && ny < height as i64
                        && mask[ny as usize * width + nx as usize];
                    if grow && bit {
                        acc = true;
                        break 'scan;
                    }
                    if !grow && !bit {
                        acc = false;
                        break 'scan;
                    }
                }
            }
            out[y * width + x] = acc;
        }
    }
    out
}

fn apply_margin(mask: Vec<bool>, width: usize, height: usize, margin_px: f64) -> Vec<bool> {
    let rounds = margin_px.round() as i64;
    let mut out = mask;
    for _ in 0..rounds.unsigned_abs() {
        out = morph_round(&out, width, height, rounds < 0);
    }
    out
}

/// Carves the visual hull of the view set's masks on `proto`'s voxel
/// lattice: `true` where the voxel center projects inside every view's
/// margin-adjusted silhouette.
///
/// `margin_px` is rounded to whole pixels; positive values erode each
/// silhouette by that many pixels before testing, negative values dilate.
/// Voxels behind a camera or projecting outside an image are carved away.
///
/// Errors with [`Error::NoForeground`] when any view's adjusted silhouette
/// is empty or when no voxel survives the intersection.
pub fn carve_occupancy(views: &ViewSet, proto: &SdfGrid, margin_px: f64) -> Result<Vec<bool>> {
    views.validate()?;
    if views.images.len() != views.views.len() {
        return Err(Error::invalid(
            "views",
            "carving requires one mask image per view".to_string(),
        ));
    }
    if !margin_px.is_finite() {
        return Err(Error::invalid("margin_px", format!("got {margin_px}")));
    }

    let mut tests = Vec::with_capacity(views.views.len());
    for (i, (view, images)) in views.views.iter().zip(&views.images).enumerate() {
        let keep = apply_margin(
            binarize(&images.mask),
            view.width,
            view.height,
            margin_px,
        );
        if !keep.iter().any(|&b| b) {
            return Err(Error::NoForeground {
                reason: format!(
                    "view {i} has no silhouette pixels after a {margin_px:+.1} px margin"
                ),
            });
        }
        tests.push(TestMask {
            proj: Projector::new(view),
            keep,
        });
    }

    let (nx, ny, nz) = proto.dims();
    let mut inside = vec![false; nx * ny * nz];
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                let p = proto.voxel_center(x, y, z);
                inside[x + nx * (y + ny * z)] = tests.iter().all(|t| {
                    t.proj
                        .pixel(p)
                        .is_some_and(|(px, py)| t.keep[py * t.proj.width + px])
                });
            }
        }
    }
    if !inside.iter().any(|&b| b) {
        return Err(Error::NoForeground {
            reason: "the silhouette intersection is empty".to_string(),
        });
    }
    Ok(inside)
}

/// Distance from every voxel to the nearest seed voxel under the chamfer
/// path metric: moves to face, edge, and corner neighbors cost
/// `spacing`, `spacing * sqrt2`, and `spacing * sqrt3`. Seeds read zero;
/// with no seeds every entry stays infinite.
///
/// Raster sweeps (forward then backward) repeat until a full double sweep
/// changes nothing, so the result is the exact path-metric distance.
pub(crate) fn chamfer_distance(
    dims: (usize, usize, usize),
    seeds: &[bool],
    spacing: f64,
) -> Vec<f64> {
    let (nx, ny, nz) = dims;
    assert_eq!(seeds.len(), nx * ny * nz, "seed mask must match the grid");
    let mut dist: Vec<f64> = seeds
        .iter()
        .map(|&s| if s { 0.0 } else { f64::INFINITY })
        .collect();

    // Offsets already visited by a forward (x fastest, then y, then z)
    // raster scan, with their chamfer step costs.
    let mut past = Vec::new();
    for dz in -1i64..=1 {
        for dy in -1i64..=1 {
            for dx in -1i64..=1 {
                let earlier = dz < 0 || (dz == 0 && (dy < 0 || (dy == 0 && dx < 0)));
                if earlier {
                    let w = ((dx * dx + dy * dy + dz * dz) as f64).sqrt() * spacing;
                    past.push((dx, dy, dz, w));
                }
            }
        }
    }

    let idx = |x: usize, y: usize, z: usize| x + nx * (y + ny * z);
    let relax = |x: usize,
                     y: usize,
                     z: usize,
                     offs: &[(i64, i64, i64, f64)],
                     dist: &mut [f64]|
     -> bool {
        let i = idx(x, y, z);
        let mut best = dist[i];
        for &(dx, dy, dz, w) in offs {
            let ox = x as i64 + dx;
            let oy = y as i64 + dy;
            let oz = z as i64 + dz;
            if ox < 0 || oy < 0 || oz < 0 || ox >= nx as i64 || oy >= ny as i64 || oz >= nz as i64
            {
                continue;
            }
            let cand = dist[idx(ox as usize, oy as usize, oz as usize)] + w;
            if cand < best {
                best = cand;
            }
        }
        if best < dist[i] {
            dist[i] = best;
            true
        } else {
            false
        }
    };

    let future: Vec<_> = past.iter().map(|&(dx, dy, dz, w)| (-dx, -dy, -dz, w)).collect();
    loop {
        let mut changed = false;
        for z in 0..nz {
            for y in 0..ny {
                for x in 0..nx {
                    changed |= relax(x, y, z, &past, &mut dist);
                }
            }
        }
        for z in (0..nz).rev() {
            for y in (0..ny).rev() {
                for x in (0..nx).rev() {
                    changed |= relax(x, y, z, &future, &mut dist);
                }
            }
        }
        if !changed {
            break;
        }
    }
    dist
}

/// Signed chamfer distance field of a boolean occupancy: negative inside,
/// positive outside, zero crossing half a voxel off the boundary centers.
/// Distances are capped at the grid diagonal so an all-inside (or
/// all-outside) occupancy still yields finite values.
pub(crate) fn signed_from_occupancy(proto: &SdfGrid, inside: &[bool]) -> Result<SdfGrid> {
    let (nx, ny, nz) = proto.dims();
    if inside.len() != nx * ny * nz {
        return Err(Error::ShapeMismatch {
            what: "occupancy length",
            expected: (nx * ny * nz).to_string(),
            got: inside.len().to_string(),
        });
    }
    let h = proto.spacing();
    let cap = h * (((nx * nx + ny * ny + nz * nz) as f64).sqrt());
    let outside: Vec<bool> = inside.iter().map(|&b| !b).collect();
    let d_to_inside = chamfer_distance((nx, ny, nz), inside, h);
    let d_to_outside = chamfer_distance((nx, ny, nz), &outside, h);

    let mut grid = proto.clone();
    for (i, v) in grid.values_mut().iter_mut().enumerate() {
        *v = if inside[i] {
            -(d_to_outside[i].min(cap) - h / 2.0)
        } else {
            d_to_inside[i].min(cap) - h / 2.0
        };
    }
    Ok(grid)
}

/// Space-carving initialization: carves the visual hull of the masks on
/// `proto`'s lattice, signs it with the chamfer distance transform, and
/// encodes the result. `proto` must match the codec's dense dimensions.
///
/// See [`carve_occupancy`] for the margin semantics and failure modes.
pub fn carve_init(
    views: &ViewSet,
    proto: &SdfGrid,
    codec: &CodecConfig,
    margin_px: f64,
) -> Result<LatentCode> {
    let inside = carve_occupancy(views, proto, margin_px)?;
    let signed = signed_from_occupancy(proto, &inside)?;
    encode(&signed, codec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gen::{generate, GenConfig};
    use crate::mesh::marching_cubes;
    use crate::render::{make_rig, rasterize_mesh, NormalSource, ViewImages};

    /// Chamfer path-metric distance between two voxels in closed form:
    /// sort the absolute offsets `a >= b >= c`; the cheapest move sequence
    /// is `c` corner steps, then `b - c` edge steps, then `a - b` face
    /// steps.
    fn chamfer_closed_form(d: (i64, i64, i64), spacing: f64) -> f64 {
        let mut s = [d.0.abs() as f64, d.1.abs() as f64, d.2.abs() as f64];
        s.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let (a, b, c) = (s[0], s[1], s[2]);
        spacing * ((a - b) + (b - c) * 2f64.sqrt() + c * 3f64.sqrt())
    }

    #[test]
    fn chamfer_transform_matches_the_closed_form_path_metric() {
        let dims = (9, 7, 8);
        let h = 0.31;
        let seed_at = (2usize, 3usize, 5usize);
        let mut seeds = vec![false; dims.0 * dims.1 * dims.2];
        seeds[seed_at.0 + dims.0 * (seed_at.1 + dims.1 * seed_at.2)] = true;

        let dist = chamfer_distance(dims, &seeds, h);
        for z in 0..dims.2 {
            for y in 0..dims.1 {
                for x in 0..dims.0 {
                    let want = chamfer_closed_form(
                        (
                            x as i64 - seed_at.0 as i64,
                            y as i64 - seed_at.1 as i64,
                            z as i64 - seed_at.2 as i64,
                        ),
                        h,
                    );
                    let got = dist[x + dims.0 * (y + dims.1 * z)];
                    assert!(
                        (got - want).abs() <= 1e-12 * (1.0 + want),
                        "voxel ({x},{y},{z}): got {got}, want {want}"
                    );
                }
            }
        }
    }

    #[test]
    fn chamfer_transform_takes_the_nearest_of_many_seeds() {
        use rand::{Rng, SeedableRng};
        let dims = (12, 10, 9);
        let h = 1.0;
        let n = dims.0 * dims.1 * dims.2;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(41);
        let mut seeds = vec![false; n];
        let mut seed_pts = Vec::new();
        for _ in 0..25 {
            let p = (
                rng.gen_range(0..dims.0),
                rng.gen_range(0..dims.1),
                rng.gen_range(0..dims.2),
            );
            seeds[p.0 + dims.0 * (p.1 + dims.1 * p.2)] = true;
            seed_pts.push(p);
        }

        let dist = chamfer_distance(dims, &seeds, h);
        for z in 0..dims.2 {
            for y in 0..dims.1 {
                for x in 0..dims.0 {
                    let want = seed_pts
                        .iter()
                        .map(|&(sx, sy, sz)| {
                            chamfer_closed_form(
                                (
                                    x as i64 - sx as i64,
                                    y as i64 - sy as i64,
                                    z as i64 - sz as i64,
                                ),
                                h,
                            )
                        })
                        .fold(f64::INFINITY, f64::min);
                    let got = dist[x + dims.0 * (y + dims.1 * z)];
                    assert!(
                        (got - want).abs() <= 1e-9,
                        "voxel ({x},{y},{z}): got {got}, want {want}"
                    );
                }
            }
        }
    }

    #[test]
    fn chamfer_transform_without_seeds_stays_infinite() {
        let dist = chamfer_distance((4, 4, 4), &vec![false; 64], 1.0);
        assert!(dist.iter().all(|d| d.is_infinite()));
    }

    /// Builds the rig and rasterizes a mesh into mask-only image bundles.
    fn mask_views(mesh: &crate::mesh::TriMesh, distance: f64, size: usize) -> ViewSet {
        let mut set = make_rig(distance, (size, size), 40.0).unwrap();
        for view in set.views.clone() {
            let images = rasterize_mesh(mesh, &view, NormalSource::Face).unwrap();
            set.images.push(images);
        }
        set
    }

    fn sphere_grid(n: usize, r: f64) -> SdfGrid {
        let proto = SdfGrid::centered(n, 2.0).unwrap();
        SdfGrid::from_fn(&proto, |p| p.norm() - r)
    }

    #[test]
    fn dilated_hull_contains_every_interior_sphere_voxel() {
        let grid = sphere_grid(64, 0.5);
        let mesh = marching_cubes(&grid, 0.0).unwrap();
        let views = mask_views(&mesh, 2.7, 256);

        // A one-pixel dilation absorbs both the rounding of a projection
        // to its nearest pixel (Chebyshev distance at most 1 between that
        // pixel and a covered one) and the sliver between the faceted
        // silhouette and the true sphere, so every voxel center inside the
        // sphere must survive in every view.
        let hull = carve_occupancy(&views, &grid, -1.0).unwrap();
        let mut inside_count = 0usize;
        for (i, &v) in grid.values().iter().enumerate() {
            if v < 0.0 {
                inside_count += 1;
                assert!(hull[i], "sphere voxel {i} was carved away");
            }
        }
        let hull_count = hull.iter().filter(|&&b| b).count();
        assert!(inside_count > 10_000, "fixture too small: {inside_count}");
        // The hull must still be a tight cone intersection, not the whole
        // grid: a sphere occupies ~6.5% of the box and its six-view hull
        // only slightly more.
        assert!(
            hull_count < 2 * inside_count,
            "hull has {hull_count} voxels for {inside_count} sphere voxels"
        );

        let again = carve_occupancy(&views, &grid, -1.0).unwrap();
        assert_eq!(hull, again, "carving must be deterministic");
    }

    #[test]
    fn eroded_hull_loses_only_a_thin_boundary_shell() {
        let grid = sphere_grid(64, 0.5);
        let mesh = marching_cubes(&grid, 0.0).unwrap();
        let views = mask_views(&mesh, 2.7, 256);

        let eroded = carve_occupancy(&views, &grid, 1.0).unwrap();
        let dilated = carve_occupancy(&views, &grid, -1.0).unwrap();

        // The default margin erodes each silhouette by one pixel, so the
        // hull shrinks; anything it gives up must sit within the width of
        // a few projected pixels of the sphere surface.
        let px_world = 2.0 * (20f64).to_radians().tan() / 256.0 * (2.7 - 0.5);
        let shell = 3.0 * px_world + grid.spacing();
        let (nx, ny, nz) = grid.dims();
        for z in 0..nz {
            for y in 0..ny {
                for x in 0..nx {
                    let i = x + nx * (y + ny * z);
                    assert!(
                        !eroded[i] || dilated[i],
                        "erosion produced a voxel the dilation lacks at {i}"
                    );
                    let p = grid.voxel_center(x, y, z);
                    if p.norm() < 0.5 - shell {
                        assert!(
                            eroded[i],
                            "deep sphere voxel at |p| = {} was carved",
                            p.norm()
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn full_masks_carve_to_the_whole_frame_volume() {
        // Distance 7 puts the entire grid box inside every view's frustum
        // with margin, so all-ones masks should keep every voxel.
        let mut set = make_rig(7.0, (64, 64), 40.0).unwrap();
        for _ in 0..set.views.len() {
            set.images.push(ViewImages {
                mask: RenderImage::new(64, 64, 1, 1.0).unwrap(),
                depth: None,
                normal: None,
                color: None,
            });
        }
        let proto = SdfGrid::centered(32, 2.0).unwrap();
        let hull = carve_occupancy(&set, &proto, 1.0).unwrap();
        let frac = hull.iter().filter(|&&b| b).count() as f64 / hull.len() as f64;
        assert!(frac > 0.9, "frustum intersection covers {frac} of the grid");

        // The signed field must stay finite even though nothing is carved.
        let signed = signed_from_occupancy(&proto, &hull).unwrap();
        assert!(signed.values().iter().all(|v| v.is_finite()));
        assert!(signed.get(16, 16, 16) < 0.0);
    }

    #[test]
    fn signed_field_crosses_zero_between_boundary_centers() {
        let grid = sphere_grid(32, 0.5);
        let inside: Vec<bool> = grid.values().iter().map(|&v| v < 0.0).collect();
        let signed = signed_from_occupancy(&grid, &inside).unwrap();
        let h = grid.spacing();
        for (i, &v) in signed.values().iter().enumerate() {
            if inside[i] {
                assert!(v <= -h / 2.0 + 1e-12, "inside voxel {i} has sdf {v}");
            } else {
                assert!(v >= h / 2.0 - 1e-12, "outside voxel {i} has sdf {v}");
            }
        }
        // The signed hull must resemble the true sphere distance field
        // near the surface: compare where |true sdf| < 3 voxels.
        for (i, (&s, &t)) in signed.values().iter().zip(grid.values()).enumerate() {
            if t.abs() < 3.0 * h {
                assert!(
                    (s - t).abs() <= 3.0 * h,
                    "voxel {i}: signed hull {s} vs sphere {t}"
                );
            }
        }
    }

    #[test]
    fn random_objects_carve_to_at_least_half_their_volume_iou() {
        let cfg = GenConfig {
            dims: (48, 48, 48),
            block_side_range: (0.15, 0.4),
            ..GenConfig::default()
        };
        let mut ious = Vec::new();
        for seed in 0..20 {
            let (grid, _) = generate(&cfg, seed).unwrap();
            let mesh = marching_cubes(&grid, 0.0).unwrap();
            let views = mask_views(&mesh, 2.7, 128);
            let hull = carve_occupancy(&views, &grid, 1.0).unwrap();

            let mut inter = 0usize;
            let mut union = 0usize;
            for (i, &v) in grid.values().iter().enumerate() {
                let occ = v < 0.0;
                if occ && hull[i] {
                    inter += 1;
                }
                if occ || hull[i] {
                    union += 1;
                }
            }
            assert!(union > 0);
            ious.push(inter as f64 / union as f64);
        }
        ious.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let median = (ious[9] + ious[10]) / 2.0;
        assert!(
            median >= 0.5,
            "median carve IoU {median:.3} over 20 objects (all: {ious:?})"
        );
    }

    #[test]
    fn carve_init_encodes_the_hull() {
        let cfg = GenConfig {
            dims: (48, 48, 48),
            block_side_range: (0.15, 0.4),
            ..GenConfig::default()
        };
        let (grid, _) = generate(&cfg, 7).unwrap();
        let mesh = marching_cubes(&grid, 0.0).unwrap();
        let views = mask_views(&mesh, 2.7, 128);
        let codec = CodecConfig {
            latent_dims: (12, 12, 12),
            fine_dims: (48, 48, 48),
            ..CodecConfig::default()
        };
        let latent = carve_init(&views, &grid, &codec, 1.0).unwrap();
        assert_eq!(latent.dims(), (12, 12, 12));
        // The encoded hull must put negative (inside) values somewhere.
        assert!(latent.values().iter().any(|&v| v < 0.0));
    }

    #[test]
    fn empty_masks_are_rejected() {
        let mut set = make_rig(2.7, (64, 64), 40.0).unwrap();
        for _ in 0..set.views.len() {
            set.images.push(ViewImages {
                mask: RenderImage::new(64, 64, 1, 0.0).unwrap(),
                depth: None,
                normal: None,
                color: None,
            });
        }
        let proto = SdfGrid::centered(16, 2.0).unwrap();
        let err = carve_occupancy(&set, &proto, 1.0).unwrap_err();
        assert!(matches!(err, Error::NoForeground { .. }), "got {err}");

        // A single empty view empties the intersection just as surely.
        let grid = sphere_grid(32, 0.5);
        let mesh = marching_cubes(&grid, 0.0).unwrap();
        let mut one_empty = mask_views(&mesh, 2.7, 64);
        one_empty.images[3].mask = RenderImage::new(64, 64, 1, 0.0).unwrap();
        let err = carve_occupancy(&one_empty, &grid, 1.0).unwrap_err();
        assert!(matches!(err, Error::NoForeground { .. }), "got {err}");
    }

    #[test]
    fn carving_requires_mask_images() {
        let set = make_rig(2.7, (64, 64), 40.0).unwrap();
        let proto = SdfGrid::centered(16, 2.0).unwrap();
        let err = carve_occupancy(&set, &proto, 1.0).unwrap_err();
        assert!(matches!(err, Error::InvalidArgument { .. }), "got {err}");
    }
}
