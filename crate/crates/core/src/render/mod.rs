//! Six-view camera rig, mesh rasterization, and differentiable soft
//! projection of SDF grids.
//!
//! Cameras sit on a sphere around the world origin and look at it. The
//! deterministic rasterizer ([`rasterize_mesh`]) produces the ground-truth
//! mask/depth/normal/color images of the closed loop; the soft projector
//! ([`soft_project`]) renders an [`SdfGrid`](crate::sdf::SdfGrid) into a
//! differentiable silhouette with expected depth and surface normals, and
//! [`soft_project_backward`] provides its exact reverse-mode gradient.

pub mod images;
mod raster;
mod soft;

pub use raster::{rasterize_geometry, rasterize_mesh, NormalSource, RasterBuffer, NO_TRIANGLE};
pub use soft::{soft_project, soft_project_backward, SoftCotangents, SoftRender};
pub(crate) use soft::MIN_SAMPLES_PER_RAY;

use crate::error::{Error, Result};
use crate::Vec3;
use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

/// Number of views in the fixed rig.
pub const RIG_VIEWS: usize = 6;
/// Azimuth of the first rig view, degrees.
pub const RIG_AZIMUTH_START_DEG: f64 = 30.0;
/// Azimuth step between consecutive rig views, degrees.
pub const RIG_AZIMUTH_STEP_DEG: f64 = 60.0;
/// Alternating rig elevations, degrees.
pub const RIG_ELEVATIONS_DEG: [f64; 2] = [20.0, -10.0];
/// Smallest image side accepted for rig views.
pub const MIN_RIG_IMAGE_SIDE: usize = 32;

/// A pinhole camera on the origin-centered viewing sphere.
///
/// The camera always looks at the world origin with +y as the up reference.
/// Pixel (0, 0) is the top-left corner; pixel centers sit at half-integer
/// offsets, so pixel `(i, j)` covers the unit square around
/// `(i + 0.5, j + 0.5)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct View {
    /// Azimuth of the camera position in degrees; 0 places the camera on
    /// the +z axis, increasing toward +x.
    pub azimuth_deg: f64,
    /// Elevation above the y = 0 plane in degrees.
    pub elevation_deg: f64,
    /// Distance from the world origin, world units.
    pub distance: f64,
    /// Vertical field of view in degrees.
    pub fov_y_deg: f64,
    /// Image width in pixels.
    pub width: usize,
    /// Image height in pixels.
    pub height: usize,
}

impl View {
    /// Checks the numeric preconditions of the camera model.
    pub fn validate(&self) -> Result<()> {
        if !self.azimuth_deg.is_finite() {
            return Err(Error::invalid("azimuth_deg", format!("{}", self.azimuth_deg)));
        }
        if !self.elevation_deg.is_finite() || self.elevation_deg.abs() > 89.9 {
            return Err(Error::invalid(
                "elevation_deg",
                format!(
                    "{} (the up direction degenerates near the poles)",
                    self.elevation_deg
                ),
            ));
        }
        if !(self.distance.is_finite() && self.distance > 0.0) {
            return Err(Error::invalid("distance", format!("{}", self.distance)));
        }
        if !(self.fov_y_deg.is_finite() && self.fov_y_deg > 0.0 && self.fov_y_deg < 180.0) {
            return Err(Error::invalid("fov_y_deg", format!("{}", self.fov_y_deg)));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::invalid(
                "image size",
                format!("{}x{}", self.width, self.height),
            ));
        }
        Ok(())
    }

    /// Camera position in world coordinates.
    pub fn position(&self) -> Vec3 {
        let az = self.azimuth_deg.to_radians();
        let el = self.elevation_deg.to_radians();
        self.distance * Vec3::new(el.cos() * az.sin(), el.sin(), el.cos() * az.cos())
    }

    /// Camera-to-world rotation; columns are the camera's right, up, and
    /// backward axes. The camera looks along its local -z toward the origin.
    pub fn rotation(&self) -> Matrix3<f64> {
        let z = self.position().normalize();
        let up = Vec3::new(0.0, 1.0, 0.0);
        let x = up.cross(&z).normalize();
        let y = z.cross(&x);
        Matrix3::from_columns(&[x, y, z])
    }

    /// Transforms a world point into camera coordinates (camera at the
    /// origin, looking along -z).
    pub fn world_to_camera(&self, p: Vec3) -> Vec3 {
        self.rotation().transpose() * (p - self.position())
    }

    /// Tangents of the half field of view along x and y.
    pub fn tan_half(&self) -> (f64, f64) {
        let th_y = (self.fov_y_deg.to_radians() / 2.0).tan();
        let th_x = th_y * self.width as f64 / self.height as f64;
        (th_x, th_y)
    }

    /// Projects a world point to floating pixel coordinates and positive
    /// camera-space depth. Returns `None` for points at or behind the
    /// camera plane. The pixel coordinates may fall outside the image.
    pub fn project(&self, p: Vec3) -> Option<(f64, f64, f64)> {
        let c = self.world_to_camera(p);
        if c.z >= -1e-12 {
            return None;
        }
        let (th_x, th_y) = self.tan_half();
        let x_ndc = c.x / (-c.z * th_x);
        let y_ndc = c.y / (-c.z * th_y);
        let px = (x_ndc + 1.0) / 2.0 * self.width as f64 - 0.5;
        let py = (1.0 - y_ndc) / 2.0 * self.height as f64 - 0.5;
        Some((px, py, -c.z))
    }

    /// World-space ray through the given floating pixel coordinates:
    /// `(origin, unit direction)`. `(px, py) = (0, 0)` is the center of the
    /// top-left pixel.
    pub fn pixel_ray(&self, px: f64, py: f64) -> (Vec3, Vec3) {
        let (th_x, th_y) = self.tan_half();
        let x_ndc = 2.0 * (px + 0.5) / self.width as f64 - 1.0;
        let y_ndc = 1.0 - 2.0 * (py + 0.5) / self.height as f64;
        let d_cam = Vec3::new(x_ndc * th_x, y_ndc * th_y, -1.0);
        let dir = (self.rotation() * d_cam).normalize();
        (self.position(), dir)
    }
}

/// A row-major floating-point image with 1 or 3 channels.
///
/// Channel meanings by producer: masks are coverage in [0, 1]; depth images
/// hold world-unit distances with `f64::INFINITY` for background; normal
/// images hold world-space unit vectors with zero for background; color
/// images hold RGB in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct RenderImage {
    width: usize,
    height: usize,
    channels: usize,
    values: Vec<f64>,
}

impl RenderImage {
    /// Creates a constant-filled image. Channels must be 1 or 3.
    pub fn new(width: usize, height: usize, channels: usize, fill: f64) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid(
                "image size",
                format!("{width}x{height}"),
            ));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::invalid("channels", format!("{channels} (want 1 or 3)")));
        }
        Ok(Self {
            width,
            height,
            channels,
            values: vec![fill; width * height * channels],
        })
    }

    /// Builds an image from raw row-major, channel-interleaved values.
    pub fn from_values(
        width: usize,
        height: usize,
        channels: usize,
        values: Vec<f64>,
    ) -> Result<Self> {
        let mut img = Self::new(width, height, channels, 0.0)?;
        if values.len() != img.values.len() {
            return Err(Error::ShapeMismatch {
                what: "image values",
                expected: format!("{}", img.values.len()),
                got: format!("{}", values.len()),
            });
        }
        img.values = values;
        Ok(img)
    }

    /// Image width in pixels.
    pub fn width(&self) -> usize {
        self.width
    }

    /// Image height in pixels.
    pub fn height(&self) -> usize {
        self.height
    }

    /// Number of channels (1 or 3).
    pub fn channels(&self) -> usize {
        self.channels
    }

    /// Raw values, row-major, channels interleaved.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Mutable raw values.
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// Linear index of `(x, y, channel)`.
    #[inline]
    pub fn index(&self, x: usize, y: usize, c: usize) -> usize {
        debug_assert!(x < self.width && y < self.height && c < self.channels);
        (y * self.width + x) * self.channels + c
    }

    /// Value at `(x, y, channel)`.
    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f64 {
        self.values[self.index(x, y, c)]
    }

    /// Sets the value at `(x, y, channel)`.
    #[inline]
    pub fn set(&mut self, x: usize, y: usize, c: usize, v: f64) {
        let i = self.index(x, y, c);
        self.values[i] = v;
    }

    /// Reads a 3-channel pixel as a vector.
    #[inline]
    pub fn get3(&self, x: usize, y: usize) -> Vec3 {
        debug_assert_eq!(self.channels, 3);
        let i = self.index(x, y, 0);
        Vec3::new(self.values[i], self.values[i + 1], self.values[i + 2])
    }

    /// Writes a 3-channel pixel from a vector.
    #[inline]
    pub fn set3(&mut self, x: usize, y: usize, v: Vec3) {
        debug_assert_eq!(self.channels, 3);
        let i = self.index(x, y, 0);
        self.values[i] = v.x;
        self.values[i + 1] = v.y;
        self.values[i + 2] = v.z;
    }

    /// Mean over all stored values.
    pub fn mean(&self) -> f64 {
        if self.values.is_empty() {
            return 0.0;
        }
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// True when both images have identical width, height, and channels.
    pub fn same_shape(&self, other: &RenderImage) -> bool {
        self.width == other.width && self.height == other.height && self.channels == other.channels
    }
}

/// Per-view image bundle. The mask is always present; depth, normal, and
/// color are filled in by the producers that compute them.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewImages {
    /// Coverage in [0, 1], 1 channel.
    pub mask: RenderImage,
    /// Camera-space depth (positive, world units), background `INFINITY`.
    pub depth: Option<RenderImage>,
    /// World-space unit normals, background zero, 3 channels.
    pub normal: Option<RenderImage>,
    /// RGB in [0, 1], 3 channels.
    pub color: Option<RenderImage>,
}

/// The fixed six-view rig, optionally carrying one image bundle per view.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewSet {
    /// Exactly six views in rig order.
    pub views: Vec<View>,
    /// Either empty (views only) or one bundle per view.
    pub images: Vec<ViewImages>,
}

impl ViewSet {
    /// Checks the rig invariants: six views with azimuths 30° + 60°·i,
    /// elevations alternating 20°/-10°, equal distances and intrinsics,
    /// image side at least 32; when image bundles are present, one per
    /// view with matching dimensions, masks within [0, 1], and unit
    /// normals (within 1e-3) on every pixel whose mask is at least 0.5.
    pub fn validate(&self) -> Result<()> {
        if self.views.len() != RIG_VIEWS {
            return Err(Error::invalid(
                "views",
                format!("expected {RIG_VIEWS} views, got {}", self.views.len()),
            ));
        }
        let first = &self.views[0];
        for (i, v) in self.views.iter().enumerate() {
            v.validate()?;
            let want_az = RIG_AZIMUTH_START_DEG + RIG_AZIMUTH_STEP_DEG * i as f64;
            let want_el = RIG_ELEVATIONS_DEG[i % 2];
            if (v.azimuth_deg - want_az).abs() > 1e-9 {
                return Err(Error::invalid(
                    "views",
                    format!("view {i} azimuth {} != {want_az}", v.azimuth_deg),
                ));
            }
            if (v.elevation_deg - want_el).abs() > 1e-9 {
                return Err(Error::invalid(
                    "views",
                    format!("view {i} elevation {} != {want_el}", v.elevation_deg),
                ));
            }
            if (v.distance - first.distance).abs() > 1e-9
                || (v.fov_y_deg - first.fov_y_deg).abs() > 1e-9
                || v.width != first.width
                || v.height != first.height
            {
                return Err(Error::invalid(
                    "views",
                    format!("view {i} does not share the rig's distance/fov/size"),
                ));
            }
            if v.width < MIN_RIG_IMAGE_SIDE || v.height < MIN_RIG_IMAGE_SIDE {
                return Err(Error::invalid(
                    "image size",
                    format!(
                        "{}x{} (rig views need at least {MIN_RIG_IMAGE_SIDE} pixels per side)",
                        v.width, v.height
                    ),
                ));
            }
        }
        if !self.images.is_empty() {
            if self.images.len() != self.views.len() {
                return Err(Error::ShapeMismatch {
                    what: "view images",
                    expected: format!("{}", self.views.len()),
                    got: format!("{}", self.images.len()),
                });
            }
            for (i, (v, imgs)) in self.views.iter().zip(&self.images).enumerate() {
                check_image(i, "mask", &imgs.mask, v, 1)?;
                for m in imgs.mask.values() {
                    if !(0.0..=1.0).contains(m) {
                        return Err(Error::invalid(
                            "mask",
                            format!("view {i} mask value {m} outside [0, 1]"),
                        ));
                    }
                }
                if let Some(depth) = &imgs.depth {
                    check_image(i, "depth", depth, v, 1)?;
                }
                if let Some(color) = &imgs.color {
                    check_image(i, "color", color, v, 3)?;
                }
                if let Some(normal) = &imgs.normal {
                    check_image(i, "normal", normal, v, 3)?;
                    for y in 0..v.height {
                        for x in 0..v.width {
                            if imgs.mask.get(x, y, 0) >= 0.5 {
                                let len = normal.get3(x, y).norm();
                                if (len - 1.0).abs() > 1e-3 {
                                    return Err(Error::invalid(
                                        "normal",
                                        format!(
                                            "view {i} pixel ({x}, {y}) inside mask has \
                                             normal length {len}"
                                        ),
                                    ));
                                }
                            }
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

fn check_image(
    view_index: usize,
    what: &'static str,
    img: &RenderImage,
    view: &View,
    channels: usize,
) -> Result<()> {
    if img.width() != view.width || img.height() != view.height || img.channels() != channels {
        return Err(Error::ShapeMismatch {
            what,
            expected: format!("{}x{}x{channels} (view {view_index})", view.width, view.height),
            got: format!("{}x{}x{}", img.width(), img.height(), img.channels()),
        });
    }
    for v in img.values() {
        if v.is_nan() {
            return Err(Error::invalid(what, format!("view {view_index} contains NaN")));
        }
    }
    Ok(())
}

/// Builds the fixed six-view rig: azimuths 30° + 60°·i, elevations
/// alternating 20°/-10°, all cameras at the same distance looking at the
/// origin. The returned set carries no images.
pub fn make_rig(distance: f64, image_size: (usize, usize), fov_y_deg: f64) -> Result<ViewSet> {
    let (width, height) = image_size;
    if width < MIN_RIG_IMAGE_SIDE || height < MIN_RIG_IMAGE_SIDE {
        return Err(Error::invalid(
            "image_size",
            format!("{width}x{height} (need at least {MIN_RIG_IMAGE_SIDE} per side)"),
        ));
    }
    let views = (0..RIG_VIEWS)
        .map(|i| View {
            azimuth_deg: RIG_AZIMUTH_START_DEG + RIG_AZIMUTH_STEP_DEG * i as f64,
            elevation_deg: RIG_ELEVATIONS_DEG[i % 2],
            distance,
            fov_y_deg,
            width,
            height,
        })
        .collect::<Vec<_>>();
    let set = ViewSet {
        views,
        images: Vec::new(),
    };
    set.validate()?;
    Ok(set)
}
