//! Color + depth rasters and posed RGBD images.

use crate::error::{Error, Result};
use crate::geom::{CameraIntrinsics, Pose};

/// Row-major color, depth and validity buffers of equal size.
///
/// Depth is in metres; `0` marks a pixel without data, and `valid` is false
/// wherever depth is `0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    pub width: u32,
    pub height: u32,
    pub rgb: Vec<u8>,
    pub depth: Vec<f32>,
    pub valid: Vec<bool>,
}

impl Raster {
    /// All-invalid raster.
    pub fn empty(width: u32, height: u32) -> Self {
        let n = width as usize * height as usize;
        Raster {
            width,
            height,
            rgb: vec![0; 3 * n],
            depth: vec![0.0; n],
            valid: vec![false; n],
        }
    }

    pub fn len(&self) -> usize {
        self.depth.len()
    }

    pub fn is_empty(&self) -> bool {
        self.depth.is_empty()
    }

    #[inline]
    pub fn index(&self, u: u32, v: u32) -> usize {
        v as usize * self.width as usize + u as usize
    }

    pub fn pixel_rgb(&self, i: usize) -> [u8; 3] {
        [self.rgb[3 * i], self.rgb[3 * i + 1], self.rgb[3 * i + 2]]
    }

    pub fn set_rgb(&mut self, i: usize, c: [u8; 3]) {
        self.rgb[3 * i..3 * i + 3].copy_from_slice(&c);
    }

    pub fn invalid_count(&self) -> usize {
        self.valid.iter().filter(|v| !**v).count()
    }

    /// Share of pixels without data.
    pub fn missing_fraction(&self) -> f64 {
        self.invalid_count() as f64 / self.len() as f64
    }

    pub fn check_invariants(&self) -> Result<()> {
        let n = self.width as usize * self.height as usize;
        if self.rgb.len() != 3 * n || self.depth.len() != n || self.valid.len() != n {
            return Err(Error::validation("raster buffer sizes disagree with dimensions"));
        }
        for (i, (&d, &ok)) in self.depth.iter().zip(&self.valid).enumerate() {
            if !(d >= 0.0) {
                return Err(Error::validation(format!("pixel {i} has negative depth")));
            }
            if d == 0.0 && ok {
                return Err(Error::validation(format!("pixel {i} is valid with zero depth")));
            }
        }
        Ok(())
    }
}

/// A rendered perspective image with its pose and camera.
#[derive(Debug, Clone, PartialEq)]
pub struct RgbdImage {
    pub image_id: String,
    pub pose: Pose,
    pub intrinsics: CameraIntrinsics,
    pub raster: Raster,
}

impl RgbdImage {
    pub fn new(image_id: impl Into<String>, pose: Pose, intrinsics: CameraIntrinsics, raster: Raster) -> Result<Self> {
        if raster.width != intrinsics.width() || raster.height != intrinsics.height() {
            return Err(Error::invalid(format!(
                "raster is {}x{} but intrinsics are {}x{}",
                raster.width,
                raster.height,
                intrinsics.width(),
                intrinsics.height()
            )));
        }
        Ok(RgbdImage {
            image_id: image_id.into(),
            pose,
            intrinsics,
            raster,
        })
    }

    pub fn width(&self) -> u32 {
        self.raster.width
    }

    pub fn height(&self) -> u32 {
        self.raster.height
    }
}
