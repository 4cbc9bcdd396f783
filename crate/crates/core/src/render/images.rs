//! Image and view-set file I/O.
//!
//! PNG encodings, chosen for viewability:
//! - mask and color: 8-bit gray / RGB, `round(clamp(v, 0, 1) * 255)`;
//! - normal: 8-bit RGB mapped `(n + 1) / 2`; decoding maps back `2c - 1`
//!   and renormalizes vectors with norm ≥ 0.25 to unit length (quantized
//!   unit vectors land near 1, quantized background near 0, so the
//!   threshold cleanly separates them — background decodes to exact zero);
//! - depth: 16-bit gray plus a JSON sidecar (same path, `.json`
//!   extension) holding `{offset, scale}`; code 0 is background
//!   (`INFINITY`), code k ≥ 1 decodes to `offset + scale * (k - 1)`.
//!
//! For tests needing bit-exactness there is a raw f32 dump ("RIMG"),
//! little-endian: magic `RIMG`, version u16, width/height/channels u32,
//! then `w*h*c` f32 values row-major, channels interleaved.
//!
//! A view set occupies a directory: `cameras.json` (schema-versioned view
//! list) plus `mask_{i}.png`, and optionally `normal_{i}.png`,
//! `depth_{i}.png` (+ sidecar), `color_{i}.png` per view index.

use crate::error::{Error, Result};
use crate::render::{RenderImage, View, ViewImages, ViewSet};
use crate::sdf::io::{expect_eof, read_all, read_u16, read_u32};
use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

const RIMG_MAGIC: &[u8; 4] = b"RIMG";
const RIMG_VERSION: u16 = 1;
const CAMERAS_VERSION: u32 = 1;
/// Decoded normals at least this long are renormalized to unit; shorter
/// ones are background and decode to exact zero.
const NORMAL_NORM_THRESHOLD: f64 = 0.25;

/// Quantizes a unit-interval value to one byte.
#[inline]
fn to_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

fn image_error(path: &Path, e: image::ImageError) -> Error {
    match e {
        image::ImageError::IoError(io) => Error::io(path, io),
        other => Error::format(path, other.to_string()),
    }
}

fn check_channels(img: &RenderImage, want: usize, what: &'static str) -> Result<()> {
    if img.channels() != want {
        return Err(Error::ShapeMismatch {
            what,
            expected: format!("{want} channel(s)"),
            got: format!("{} channel(s)", img.channels()),
        });
    }
    Ok(())
}

fn png_dims(w: u32, h: u32, path: &Path) -> Result<(usize, usize)> {
    if w == 0 || h == 0 {
        return Err(Error::format(path, "zero-sized image"));
    }
    Ok((w as usize, h as usize))
}

/// Writes a 1-channel image as 8-bit gray PNG.
pub fn write_mask_png(img: &RenderImage, path: &Path) -> Result<()> {
    check_channels(img, 1, "mask image")?;
    let buf: Vec<u8> = img.values().iter().map(|&v| to_u8(v)).collect();
    let out = image::GrayImage::from_raw(img.width() as u32, img.height() as u32, buf)
        .expect("buffer length matches dimensions");
    out.save(path).map_err(|e| image_error(path, e))
}

/// Reads an 8-bit gray PNG as a 1-channel image with values in [0, 1].
pub fn read_mask_png(path: &Path) -> Result<RenderImage> {
    let img = image::open(path).map_err(|e| image_error(path, e))?.into_luma8();
    let (w, h) = png_dims(img.width(), img.height(), path)?;
    let values = img.into_raw().iter().map(|&b| b as f64 / 255.0).collect();
    RenderImage::from_values(w, h, 1, values)
}

/// Writes a 3-channel image as 8-bit RGB PNG.
pub fn write_color_png(img: &RenderImage, path: &Path) -> Result<()> {
    check_channels(img, 3, "color image")?;
    let buf: Vec<u8> = img.values().iter().map(|&v| to_u8(v)).collect();
    let out = image::RgbImage::from_raw(img.width() as u32, img.height() as u32, buf)
        .expect("buffer length matches dimensions");
    out.save(path).map_err(|e| image_error(path, e))
}

/// Reads an 8-bit RGB PNG as a 3-channel image with values in [0, 1].
pub fn read_color_png(path: &Path) -> Result<RenderImage> {
    let img = image::open(path).map_err(|e| image_error(path, e))?.into_rgb8();
    let (w, h) = png_dims(img.width(), img.height(), path)?;
    let values = img.into_raw().iter().map(|&b| b as f64 / 255.0).collect();
    RenderImage::from_values(w, h, 3, values)
}

/// Writes a world-space normal image as 8-bit RGB, mapped `(n + 1) / 2`.
pub fn write_normal_png(img: &RenderImage, path: &Path) -> Result<()> {
    check_channels(img, 3, "normal image")?;
    let buf: Vec<u8> = img
        .values()
        .iter()
        .map(|&v| to_u8((v + 1.0) / 2.0))
        .collect();
    let out = image::RgbImage::from_raw(img.width() as u32, img.height() as u32, buf)
        .expect("buffer length matches dimensions");
    out.save(path).map_err(|e| image_error(path, e))
}

/// Reads a normal PNG back to unit vectors (background pixels to zero).
pub fn read_normal_png(path: &Path) -> Result<RenderImage> {
    let img = image::open(path).map_err(|e| image_error(path, e))?.into_rgb8();
    let (w, h) = png_dims(img.width(), img.height(), path)?;
    let raw = img.into_raw();
    let mut out = RenderImage::new(w, h, 3, 0.0)?;
    for (i, px) in raw.chunks_exact(3).enumerate() {
        let n = crate::Vec3::new(
            2.0 * (px[0] as f64 / 255.0) - 1.0,
            2.0 * (px[1] as f64 / 255.0) - 1.0,
            2.0 * (px[2] as f64 / 255.0) - 1.0,
        );
        let norm = n.norm();
        if norm >= NORMAL_NORM_THRESHOLD {
            let unit = n / norm;
            let (x, y) = (i % w, i / w);
            out.set3(x, y, unit);
        }
    }
    Ok(out)
}

/// Sidecar metadata for 16-bit depth PNGs.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DepthSidecar {
    offset: f64,
    scale: f64,
}

/// Path of the JSON sidecar belonging to a depth PNG.
fn sidecar_path(png: &Path) -> PathBuf {
    png.with_extension("json")
}

/// Writes a 1-channel depth image as 16-bit gray PNG plus a sidecar JSON
/// with the code-to-depth mapping. Background (non-finite) pixels store
/// code 0 and decode to `INFINITY`.
pub fn write_depth_png(img: &RenderImage, path: &Path) -> Result<()> {
    check_channels(img, 1, "depth image")?;
    let finite: Vec<f64> = img.values().iter().copied().filter(|v| v.is_finite()).collect();
    let lo = finite.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = finite.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (offset, scale) = if finite.is_empty() || hi <= lo {
        (if finite.is_empty() { 0.0 } else { lo }, 0.0)
    } else {
        (lo, (hi - lo) / 65534.0)
    };
    let code = |v: f64| -> u16 {
        if !v.is_finite() {
            return 0;
        }
        if scale == 0.0 {
            return 1;
        }
        1 + (((v - offset) / scale).round() as i64).clamp(0, 65534) as u16
    };
    let buf: Vec<u16> = img.values().iter().map(|&v| code(v)).collect();
    let out = image::ImageBuffer::<image::Luma<u16>, Vec<u16>>::from_raw(
        img.width() as u32,
        img.height() as u32,
        buf,
    )
    .expect("buffer length matches dimensions");
    out.save(path).map_err(|e| image_error(path, e))?;
    let sidecar = sidecar_path(path);
    let json = serde_json::to_string_pretty(&DepthSidecar { offset, scale })?;
    std::fs::write(&sidecar, json).map_err(|e| Error::io(&sidecar, e))
}

/// Reads a 16-bit depth PNG and its sidecar back to world-unit depths.
pub fn read_depth_png(path: &Path) -> Result<RenderImage> {
    let sidecar = sidecar_path(path);
    let text = std::fs::read_to_string(&sidecar).map_err(|e| Error::io(&sidecar, e))?;
    let meta: DepthSidecar = serde_json::from_str(&text)?;
    let img = image::open(path).map_err(|e| image_error(path, e))?.into_luma16();
    let (w, h) = png_dims(img.width(), img.height(), path)?;
    let values = img
        .into_raw()
        .iter()
        .map(|&code| {
            if code == 0 {
                f64::INFINITY
            } else {
                meta.offset + meta.scale * (code - 1) as f64
            }
        })
        .collect();
    RenderImage::from_values(w, h, 1, values)
}

/// Writes the lossless raw f32 dump ("RIMG").
pub fn write_rimg(img: &RenderImage, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let werr = |e| Error::io(path, e);
    w.write_all(RIMG_MAGIC).map_err(werr)?;
    w.write_all(&RIMG_VERSION.to_le_bytes()).map_err(werr)?;
    for n in [img.width(), img.height(), img.channels()] {
        w.write_all(&(n as u32).to_le_bytes()).map_err(werr)?;
    }
    for v in img.values() {
        w.write_all(&(*v as f32).to_le_bytes()).map_err(werr)?;
    }
    w.flush().map_err(werr)
}

/// Reads an RIMG file. Values come back as the stored f32s, exactly.
pub fn read_rimg(path: &Path) -> Result<RenderImage> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);
    let mut magic = [0u8; 4];
    read_all(&mut r, &mut magic, path)?;
    if &magic != RIMG_MAGIC {
        return Err(Error::format(path, format!("bad magic {magic:?}")));
    }
    let version = read_u16(&mut r, path)?;
    if version != RIMG_VERSION {
        return Err(Error::format(path, format!("unsupported version {version}")));
    }
    let w = read_u32(&mut r, path)? as usize;
    let h = read_u32(&mut r, path)? as usize;
    let c = read_u32(&mut r, path)? as usize;
    let count = w
        .checked_mul(h)
        .and_then(|v| v.checked_mul(c))
        .filter(|v| *v > 0 && *v <= (1usize << 31))
        .ok_or_else(|| Error::format(path, format!("bad dims {w}x{h}x{c}")))?;
    let mut bytes = vec![0u8; count * 4];
    read_all(&mut r, &mut bytes, path)?;
    expect_eof(&mut r, path)?;
    let values = bytes
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
        .collect();
    RenderImage::from_values(w, h, c, values).map_err(|e| match e {
        Error::InvalidArgument { reason, .. } => Error::format(path, reason),
        other => other,
    })
}

/// On-disk schema of `cameras.json`.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CameraFile {
    version: u32,
    views: Vec<View>,
}

/// Writes the view list of a set as `cameras.json` in `dir`.
pub fn write_cameras(views: &[View], dir: &Path) -> Result<PathBuf> {
    let path = dir.join("cameras.json");
    let file = CameraFile {
        version: CAMERAS_VERSION,
        views: views.to_vec(),
    };
    let json = serde_json::to_string_pretty(&file)?;
    std::fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

/// Reads the view list from `cameras.json` in `dir`.
pub fn read_cameras(dir: &Path) -> Result<Vec<View>> {
    let path = dir.join("cameras.json");
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let file: CameraFile = serde_json::from_str(&text)?;
    if file.version != CAMERAS_VERSION {
        return Err(Error::format(
            &path,
            format!("unsupported cameras.json version {}", file.version),
        ));
    }
    for v in &file.views {
        v.validate()?;
    }
    Ok(file.views)
}

/// Writes a validated view set into `dir` (created if missing):
/// `cameras.json` plus per-view PNGs for every image present.
pub fn write_viewset(set: &ViewSet, dir: &Path) -> Result<()> {
    set.validate()?;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_cameras(&set.views, dir)?;
    for (i, imgs) in set.images.iter().enumerate() {
        write_mask_png(&imgs.mask, &dir.join(format!("mask_{i}.png")))?;
        if let Some(normal) = &imgs.normal {
            write_normal_png(normal, &dir.join(format!("normal_{i}.png")))?;
        }
        if let Some(depth) = &imgs.depth {
            write_depth_png(depth, &dir.join(format!("depth_{i}.png")))?;
        }
        if let Some(color) = &imgs.color {
            write_color_png(color, &dir.join(format!("color_{i}.png")))?;
        }
    }
    Ok(())
}

/// Reads a view-set directory back. Masks are required per view; normal,
/// depth, and color images load when their files exist. The result passes
/// [`ViewSet::validate`].
pub fn read_viewset(dir: &Path) -> Result<ViewSet> {
    let views = read_cameras(dir)?;
    let mut images = Vec::with_capacity(views.len());
    for i in 0..views.len() {
        let mask_path = dir.join(format!("mask_{i}.png"));
        if !mask_path.exists() {
            return Err(Error::format(&mask_path, "required mask image is missing"));
        }
        let mask = read_mask_png(&mask_path)?;
        let load_opt = |name: &str, reader: fn(&Path) -> Result<RenderImage>| {
            let path = dir.join(format!("{name}_{i}.png"));
            if path.exists() {
                reader(&path).map(Some)
            } else {
                Ok(None)
            }
        };
        images.push(ViewImages {
            mask,
            normal: load_opt("normal", read_normal_png)?,
            depth: load_opt("depth", read_depth_png)?,
            color: load_opt("color", read_color_png)?,
        });
    }
    let set = ViewSet { views, images };
    set.validate()?;
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::render::make_rig;
    use crate::Vec3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(w: usize, h: usize, c: usize, seed: u64, lo: f64, hi: f64) -> RenderImage {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut img = RenderImage::new(w, h, c, 0.0).unwrap();
        for v in img.values_mut() {
            *v = rng.gen_range(lo..hi);
        }
        img
    }

    #[test]
    fn mask_png_roundtrip_is_within_quantization() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.png");
        let img = random_image(17, 9, 1, 1, 0.0, 1.0);
        write_mask_png(&img, &path).unwrap();
        let back = read_mask_png(&path).unwrap();
        assert!(back.same_shape(&RenderImage::new(17, 9, 1, 0.0).unwrap()));
        for (a, b) in img.values().iter().zip(back.values()) {
            assert!((a - b).abs() <= 0.5 / 255.0 + 1e-12);
            assert!((0.0..=1.0).contains(b));
        }
        // Binary masks are lossless.
        let mut hard = RenderImage::new(4, 4, 1, 0.0).unwrap();
        hard.set(1, 2, 0, 1.0);
        let hard_path = dir.path().join("hard.png");
        write_mask_png(&hard, &hard_path).unwrap();
        assert_eq!(read_mask_png(&hard_path).unwrap().values(), hard.values());
    }

    #[test]
    fn normal_png_roundtrip_returns_unit_vectors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("n.png");
        let mut img = RenderImage::new(8, 8, 3, 0.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for y in 0..8 {
            for x in 0..8 {
                if (x + y) % 3 == 0 {
                    continue; // leave background pixels
                }
                let v = Vec3::new(
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                );
                img.set3(x, y, v.normalize());
            }
        }
        write_normal_png(&img, &path).unwrap();
        let back = read_normal_png(&path).unwrap();
        for y in 0..8 {
            for x in 0..8 {
                let orig = img.get3(x, y);
                let got = back.get3(x, y);
                if orig == Vec3::zeros() {
                    assert_eq!(got, Vec3::zeros(), "background must stay exact zero");
                } else {
                    assert!((got.norm() - 1.0).abs() < 1e-12, "decoded normals are unit");
                    assert!((got - orig).norm() < 2.0 * 3f64.sqrt() / 255.0);
                }
            }
        }
    }

    #[test]
    fn depth_png_roundtrip_recovers_range_and_background() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.png");
        let mut img = random_image(12, 7, 1, 5, 2.0, 3.5);
        img.set(0, 0, 0, f64::INFINITY);
        img.set(11, 6, 0, f64::INFINITY);
        write_depth_png(&img, &path).unwrap();
        assert!(path.with_extension("json").exists());
        let back = read_depth_png(&path).unwrap();
        let step = 1.5 / 65534.0;
        for (a, b) in img.values().iter().zip(back.values()) {
            if a.is_finite() {
                assert!((a - b).abs() <= step, "depth {a} came back as {b}");
            } else {
                assert!(b.is_infinite());
            }
        }
        // Constant depth and all-background images survive.
        let flat = RenderImage::new(4, 4, 1, 2.5).unwrap();
        let flat_path = dir.path().join("flat.png");
        write_depth_png(&flat, &flat_path).unwrap();
        assert_eq!(read_depth_png(&flat_path).unwrap().values(), flat.values());
        let empty = RenderImage::new(4, 4, 1, f64::INFINITY).unwrap();
        let empty_path = dir.path().join("empty.png");
        write_depth_png(&empty, &empty_path).unwrap();
        assert!(read_depth_png(&empty_path)
            .unwrap()
            .values()
            .iter()
            .all(|v| v.is_infinite()));
    }

    #[test]
    fn rimg_roundtrip_is_exact_and_byte_stable() {
        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("a.rimg");
        let p2 = dir.path().join("b.rimg");
        let img = random_image(9, 5, 3, 11, -4.0, 4.0);
        write_rimg(&img, &p1).unwrap();
        let once = read_rimg(&p1).unwrap();
        for (a, b) in img.values().iter().zip(once.values()) {
            assert_eq!(*a as f32, *b as f32);
            assert_eq!(*b, *b as f32 as f64, "values come back as exact f32s");
        }
        write_rimg(&once, &p2).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
    }

    #[test]
    fn rimg_rejects_corruption() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.rimg");
        std::fs::write(&path, b"WHAT").unwrap();
        assert!(matches!(read_rimg(&path), Err(Error::Format { .. })));
        let img = random_image(4, 4, 1, 2, 0.0, 1.0);
        write_rimg(&img, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 2]).unwrap();
        assert!(matches!(read_rimg(&path), Err(Error::Format { .. })));
        let mut longer = bytes.clone();
        longer.push(0);
        std::fs::write(&path, &longer).unwrap();
        assert!(matches!(read_rimg(&path), Err(Error::Format { .. })));
    }

    #[test]
    fn cameras_json_roundtrips_and_rejects_unknown_schema() {
        let dir = tempfile::tempdir().unwrap();
        let set = make_rig(2.7, (64, 64), 40.0).unwrap();
        write_cameras(&set.views, dir.path()).unwrap();
        let back = read_cameras(dir.path()).unwrap();
        assert_eq!(back, set.views);
        std::fs::write(
            dir.path().join("cameras.json"),
            r#"{"version": 1, "views": [], "extra": 3}"#,
        )
        .unwrap();
        assert!(read_cameras(dir.path()).is_err());
        std::fs::write(dir.path().join("cameras.json"), r#"{"version": 7, "views": []}"#)
            .unwrap();
        assert!(matches!(
            read_cameras(dir.path()),
            Err(Error::Format { .. })
        ));
    }

    /// A rig-shaped set with plausible images for directory round-trips.
    fn sample_viewset() -> ViewSet {
        let mut set = make_rig(2.7, (32, 32), 40.0).unwrap();
        for i in 0..set.views.len() {
            let mut mask = RenderImage::new(32, 32, 1, 0.0).unwrap();
            let mut normal = RenderImage::new(32, 32, 3, 0.0).unwrap();
            let mut depth = RenderImage::new(32, 32, 1, f64::INFINITY).unwrap();
            for y in 10..22 {
                for x in 10..22 {
                    mask.set(x, y, 0, 1.0);
                    let n = Vec3::new(0.3, -0.5, 0.1 + i as f64 * 0.1).normalize();
                    normal.set3(x, y, n);
                    depth.set(x, y, 0, 2.0 + 0.01 * (x + y) as f64);
                }
            }
            set.images.push(ViewImages {
                mask,
                depth: Some(depth),
                normal: Some(normal),
                color: None,
            });
        }
        set
    }

    #[test]
    fn viewset_directory_roundtrip_preserves_structure() {
        let dir = tempfile::tempdir().unwrap();
        let set = sample_viewset();
        write_viewset(&set, dir.path()).unwrap();
        for i in 0..6 {
            assert!(dir.path().join(format!("mask_{i}.png")).exists());
            assert!(dir.path().join(format!("normal_{i}.png")).exists());
            assert!(dir.path().join(format!("depth_{i}.png")).exists());
            assert!(dir.path().join(format!("depth_{i}.json")).exists());
            assert!(!dir.path().join(format!("color_{i}.png")).exists());
        }
        let back = read_viewset(dir.path()).unwrap();
        assert_eq!(back.views, set.views);
        for (a, b) in back.images.iter().zip(&set.images) {
            // Binary masks survive exactly.
            assert_eq!(a.mask.values(), b.mask.values());
            let (an, bn) = (a.normal.as_ref().unwrap(), b.normal.as_ref().unwrap());
            for (x, y) in (0..32).flat_map(|y| (0..32).map(move |x| (x, y))) {
                let (va, vb) = (an.get3(x, y), bn.get3(x, y));
                assert!((va - vb).norm() < 0.02);
                if vb != Vec3::zeros() {
                    assert!((va.norm() - 1.0).abs() <= 1.0 / 255.0);
                }
            }
            assert!(a.depth.is_some() && a.color.is_none());
        }
    }

    #[test]
    fn viewset_reader_requires_masks_and_valid_rig() {
        let dir = tempfile::tempdir().unwrap();
        let set = sample_viewset();
        write_viewset(&set, dir.path()).unwrap();
        std::fs::remove_file(dir.path().join("mask_3.png")).unwrap();
        let err = read_viewset(dir.path()).unwrap_err();
        assert!(err.to_string().contains("mask_3.png"));

        // A camera file that breaks the rig pattern is rejected.
        let dir2 = tempfile::tempdir().unwrap();
        write_viewset(&set, dir2.path()).unwrap();
        let mut views = set.views.clone();
        views[0].azimuth_deg = 45.0;
        write_cameras(&views, dir2.path()).unwrap();
        assert!(read_viewset(dir2.path()).is_err());
    }
}
