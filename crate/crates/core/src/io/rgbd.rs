//! RGBD image files: 8-bit RGB PNG, 16-bit depth PNG in millimetres, and a
//! pose text file.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use image::codecs::png::{CompressionType, FilterType, PngEncoder};
use image::{ExtendedColorType, ImageEncoder};

use crate::error::{Error, Result};
use crate::geom::{fmt_exact, CameraIntrinsics, Pose};
use crate::io::layout::{validate_id, DEPTH_SUFFIX, POSE_SUFFIX, RGB_SUFFIX};
use crate::raster::{Raster, RgbdImage};

/// Largest depth representable in the 16-bit millimetre raster.
pub const MAX_DEPTH_M: f64 = 65.535;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RgbdWriteReport {
    /// Valid pixels whose depth exceeded 65.535 m and were clamped.
    pub saturated: usize,
}

/// Millimetre code for a depth. Valid pixels never encode to 0.
pub fn depth_to_mm(depth_m: f32, valid: bool) -> (u16, bool) {
    if !valid || depth_m <= 0.0 {
        return (0, false);
    }
    let mm = (depth_m as f64 * 1000.0).round();
    if mm > u16::MAX as f64 {
        (u16::MAX, true)
    } else {
        ((mm as u16).max(1), false)
    }
}

fn file_paths(dir: &Path, image_id: &str) -> (PathBuf, PathBuf, PathBuf) {
    (
        dir.join(format!("{image_id}{RGB_SUFFIX}")),
        dir.join(format!("{image_id}{DEPTH_SUFFIX}")),
        dir.join(format!("{image_id}{POSE_SUFFIX}")),
    )
}

fn encode_png(path: &Path, bytes: &[u8], w: u32, h: u32, color: ExtendedColorType) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let writer = BufWriter::new(file);
    PngEncoder::new_with_quality(writer, CompressionType::Fast, FilterType::Sub)
        .write_image(bytes, w, h, color)
        .map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })
}

/// Pose file contents: the pose block plus a `K <focal> <width> <height>` line.
pub fn pose_file_text(pose: &Pose, k: &CameraIntrinsics) -> String {
    format!(
        "{}K {} {} {}\n",
        pose.to_text(),
        fmt_exact(k.focal_px()),
        k.width(),
        k.height()
    )
}

/// Parses a pose file written by [`pose_file_text`].
pub fn parse_pose_file(text: &str) -> Result<(Pose, Option<CameraIntrinsics>)> {
    let (pose, rest) = Pose::parse_text(text)?;
    let mut k = None;
    for line in rest {
        let toks: Vec<&str> = line.split_whitespace().collect();
        match toks.as_slice() {
            ["K", f, w, h] => {
                let bad = || Error::parse("intrinsics line", format!("malformed `{line}`"));
                let f: f64 = f.parse().map_err(|_| bad())?;
                let w: u32 = w.parse().map_err(|_| bad())?;
                let h: u32 = h.parse().map_err(|_| bad())?;
                k = Some(CameraIntrinsics::new(f, w, h)?);
            }
            _ => return Err(Error::parse("pose file", format!("unexpected line `{line}`"))),
        }
    }
    Ok((pose, k))
}

/// Writes `<dir>/<image_id>.{rgb.png,depth.png,pose.txt}`.
pub fn write_rgbd(image: &RgbdImage, dir: impl AsRef<Path>) -> Result<RgbdWriteReport> {
    let dir = dir.as_ref();
    validate_id(&image.image_id)?;
    let r = &image.raster;
    r.check_invariants()?;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let (rgb_path, depth_path, pose_path) = file_paths(dir, &image.image_id);

    encode_png(&rgb_path, &r.rgb, r.width, r.height, ExtendedColorType::Rgb8)?;

    let mut report = RgbdWriteReport::default();
    let mut depth_bytes = Vec::with_capacity(2 * r.len());
    for (&d, &ok) in r.depth.iter().zip(&r.valid) {
        let (mm, sat) = depth_to_mm(d, ok);
        report.saturated += sat as usize;
        // the encoder takes 16-bit samples in native byte order
        depth_bytes.extend_from_slice(&mm.to_ne_bytes());
    }
    encode_png(&depth_path, &depth_bytes, r.width, r.height, ExtendedColorType::L16)?;

    std::fs::write(&pose_path, pose_file_text(&image.pose, &image.intrinsics))
        .map_err(|e| Error::io(&pose_path, e))?;
    if report.saturated > 0 {
        log::warn!(
            "{}: {} pixels deeper than {MAX_DEPTH_M} m were saturated",
            image.image_id,
            report.saturated
        );
    }
    Ok(report)
}

fn decode(path: &Path) -> Result<image::DynamicImage> {
    image::open(path).map_err(|source| match source {
        image::ImageError::IoError(e) => Error::io(path, e),
        source => Error::Image {
            path: path.to_path_buf(),
            source,
        },
    })
}

/// Reads an image written by [`write_rgbd`]. Depth is restored from
/// millimetres; pixels with code 0 are invalid.
pub fn read_rgbd(dir: impl AsRef<Path>, image_id: &str) -> Result<RgbdImage> {
    let dir = dir.as_ref();
    validate_id(image_id)?;
    let (rgb_path, depth_path, pose_path) = file_paths(dir, image_id);
    let pose_text = std::fs::read_to_string(&pose_path).map_err(|e| Error::io(&pose_path, e))?;
    let (pose, k) = parse_pose_file(&pose_text).map_err(|e| e.with_path(&pose_path))?;

    let rgb = match decode(&rgb_path)? {
        image::DynamicImage::ImageRgb8(img) => img,
        _ => {
            return Err(Error::validation("color image is not 8-bit RGB").with_path(&rgb_path))
        }
    };
    let depth = match decode(&depth_path)? {
        image::DynamicImage::ImageLuma16(img) => img,
        _ => {
            return Err(
                Error::validation("depth image is not 16-bit grayscale").with_path(&depth_path)
            )
        }
    };
    let (w, h) = rgb.dimensions();
    if depth.dimensions() != (w, h) {
        return Err(Error::validation("color and depth sizes differ").with_path(&depth_path));
    }
    let k = match k {
        Some(k) if (k.width(), k.height()) == (w, h) => k,
        Some(_) => {
            return Err(Error::validation("intrinsics disagree with image size").with_path(&pose_path))
        }
        None => {
            return Err(Error::validation("pose file lacks an intrinsics line").with_path(&pose_path))
        }
    };
    let depth_m: Vec<f32> = depth.as_raw().iter().map(|&mm| (mm as f64 / 1000.0) as f32).collect();
    let valid = depth.as_raw().iter().map(|&mm| mm > 0).collect();
    let raster = Raster {
        width: w,
        height: h,
        rgb: rgb.into_raw(),
        depth: depth_m,
        valid,
    };
    RgbdImage::new(image_id, pose, k, raster)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{intrinsics_from_fov, pose_from_euler, EulerAngles};
    use nalgebra::Vector3;
    use rand::{Rng, SeedableRng};

    fn image_with(depth: impl Fn(usize) -> f32, w: u32, h: u32) -> RgbdImage {
        let k = intrinsics_from_fov(60.0, w, h).unwrap();
        let mut r = Raster::empty(w, h);
        for i in 0..r.len() {
            let d = depth(i);
            r.depth[i] = d;
            r.valid[i] = d > 0.0;
            r.set_rgb(i, [(i % 251) as u8, (i % 7) as u8, 200]);
        }
        let pose = pose_from_euler(&Vector3::new(1.0, 2.0, 0.3), &EulerAngles::new(30.0, -5.0, 2.0)).unwrap();
        RgbdImage::new("s_000", pose, k, r).unwrap()
    }

    #[test]
    fn constant_depth_stores_2000() {
        let dir = tempfile::tempdir().unwrap();
        let img = image_with(|_| 2.0, 8, 6);
        write_rgbd(&img, dir.path()).unwrap();
        let raw = image::open(dir.path().join("s_000.depth.png")).unwrap().into_luma16();
        assert!(raw.as_raw().iter().all(|&v| v == 2000));
    }

    #[test]
    fn saturation_rule() {
        assert_eq!(depth_to_mm(65.535, true), (65535, false));
        assert_eq!(depth_to_mm(70.0, true), (65535, true));
        assert_eq!(depth_to_mm(0.0, false), (0, false));
        assert_eq!(depth_to_mm(0.0002, true), (1, false));
        let dir = tempfile::tempdir().unwrap();
        let img = image_with(|i| if i % 2 == 0 { 70.0 } else { 1.0 }, 4, 4);
        let rep = write_rgbd(&img, dir.path()).unwrap();
        assert_eq!(rep.saturated, 8);
    }

    #[test]
    fn random_round_trip() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let dir = tempfile::tempdir().unwrap();
        let depths: Vec<f32> = (0..40 * 30)
            .map(|_| if rng.random_bool(0.2) { 0.0 } else { rng.random_range(0.1..60.0) })
            .collect();
        let mut img = image_with(|i| depths[i], 40, 30);
        for b in img.raster.rgb.iter_mut() {
            *b = rng.random();
        }
        write_rgbd(&img, dir.path()).unwrap();
        let back = read_rgbd(dir.path(), "s_000").unwrap();
        assert_eq!(back.raster.rgb, img.raster.rgb);
        assert_eq!(back.raster.valid, img.raster.valid);
        assert_eq!(back.intrinsics, img.intrinsics);
        assert_eq!(back.pose, img.pose);
        for (a, b) in back.raster.depth.iter().zip(&img.raster.depth) {
            assert!((a - b).abs() <= 0.0005 + 1e-6, "{a} vs {b}");
        }
    }

    #[test]
    fn read_missing_is_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(read_rgbd(dir.path(), "nope_000"), Err(Error::Io { .. })));
    }
}
