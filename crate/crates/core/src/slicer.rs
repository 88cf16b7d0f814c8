//! Database cutouts: a ring of perspective views per pitch, rendered from
//! the scanner position.

use log::warn;
use rayon::prelude::*;

use crate::cloud::PointCloud;
use crate::error::{Error, Result};
use crate::geom::{intrinsics_from_fov, pose_in_frame, CameraIntrinsics, EulerAngles, Pose};
use crate::io::db_image_id;
use crate::raster::RgbdImage;
use crate::render::{fill_holes, render_culled, RenderParams};

#[derive(Debug, Clone, PartialEq)]
pub struct SliceConfig {
    pub yaw_count: u32,
    /// Degrees between consecutive yaws of a ring.
    pub yaw_stride: f64,
    /// Pitch of each ring in degrees, in output order.
    pub pitch_ring: Vec<f64>,
    pub hfov: f64,
    pub width: u32,
    pub height: u32,
    pub render: RenderParams,
}

impl Default for SliceConfig {
    fn default() -> Self {
        SliceConfig {
            yaw_count: 12,
            yaw_stride: 30.0,
            pitch_ring: vec![-30.0, 0.0, 30.0],
            hfov: 60.0,
            width: 1024,
            height: 768,
            render: RenderParams::default(),
        }
    }
}

impl SliceConfig {
    pub fn images_per_scan(&self) -> usize {
        self.yaw_count as usize * self.pitch_ring.len()
    }

    pub fn intrinsics(&self) -> Result<CameraIntrinsics> {
        intrinsics_from_fov(self.hfov, self.width, self.height)
    }

    pub fn validate(&self) -> Result<()> {
        if self.yaw_count == 0 {
            return Err(Error::invalid("yaw_count must be at least 1"));
        }
        if !self.yaw_stride.is_finite() {
            return Err(Error::invalid("yaw_stride must be finite"));
        }
        if self.pitch_ring.is_empty() {
            return Err(Error::invalid("pitch_ring must list at least one pitch"));
        }
        if let Some(p) = self.pitch_ring.iter().find(|p| !(p.abs() < 90.0)) {
            return Err(Error::invalid(format!("ring pitch {p} is outside (-90, 90)")));
        }
        if self.images_per_scan() > 1000 {
            return Err(Error::invalid("at most 1000 cutouts per scan fit the 3-digit image index"));
        }
        self.intrinsics()?;
        self.render.validate()
    }
}

/// Orientation of one database image relative to its scan.
#[derive(Debug, Clone, PartialEq)]
pub struct CutoutPose {
    /// Zero-padded index, appended to the scan id to form the image id.
    pub suffix: String,
    pub pose: Pose,
}

/// Cutout poses ordered pitch-major: index = pitch_index·yaw_count + yaw_index.
/// Yaw is measured in the scanner's horizontal plane from its heading.
pub fn generate_cutout_poses(scanner_pose: &Pose, config: &SliceConfig) -> Result<Vec<CutoutPose>> {
    config.validate()?;
    let center = scanner_pose.center();
    let mut out = Vec::with_capacity(config.images_per_scan());
    for &pitch in &config.pitch_ring {
        for y in 0..config.yaw_count {
            let yaw = y as f64 * config.yaw_stride;
            let pose = pose_in_frame(scanner_pose, &center, &EulerAngles::new(yaw, pitch, 0.0))?;
            out.push(CutoutPose {
                suffix: format!("{:03}", out.len()),
                pose,
            });
        }
    }
    Ok(out)
}

/// A rendered cutout and its missing fraction before hole filling.
#[derive(Debug, Clone)]
pub struct SlicedImage {
    pub index: usize,
    pub image: RgbdImage,
    pub missing_fraction: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SkippedCutout {
    pub image_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default)]
pub struct SliceSummary {
    pub written: usize,
    pub skipped: Vec<SkippedCutout>,
    /// Pre-fill missing fraction of every written cutout, in index order.
    pub missing_fractions: Vec<f64>,
}

impl SliceSummary {
    pub fn mean_missing(&self) -> Option<f64> {
        if self.missing_fractions.is_empty() {
            None
        } else {
            Some(self.missing_fractions.iter().sum::<f64>() / self.missing_fractions.len() as f64)
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct SliceOutput {
    pub images: Vec<SlicedImage>,
    pub skipped: Vec<SkippedCutout>,
}

/// Renders and hole-fills every cutout of one scan.
pub fn slice_scan(cloud: &PointCloud, scanner_pose: &Pose, config: &SliceConfig) -> Result<SliceOutput> {
    let images = std::sync::Mutex::new(Vec::new());
    let summary = slice_scan_with(cloud, scanner_pose, config, |s| {
        images.lock().expect("poisoned").push(s);
        Ok(())
    })?;
    let mut images = images.into_inner().expect("poisoned");
    images.sort_by_key(|s| s.index);
    Ok(SliceOutput {
        images,
        skipped: summary.skipped,
    })
}

/// Like [`slice_scan`] but hands each finished cutout to `sink` instead of
/// collecting them, so a caller can persist images as they are produced.
/// Cutouts run in parallel; a cutout the renderer cannot produce is
/// skipped and reported, while a `sink` error aborts the scan.
pub fn slice_scan_with<F>(
    cloud: &PointCloud,
    scanner_pose: &Pose,
    config: &SliceConfig,
    sink: F,
) -> Result<SliceSummary>
where
    F: Fn(SlicedImage) -> Result<()> + Sync,
{
    if cloud.is_empty() {
        return Err(Error::invalid(format!("scan `{}` has no points", cloud.scan_id)));
    }
    let intrinsics = config.intrinsics()?;
    let cutouts = generate_cutout_poses(scanner_pose, config)?;
    let outcomes: Vec<Result<std::result::Result<f64, SkippedCutout>>> = cutouts
        .par_iter()
        .enumerate()
        .map(|(index, cutout)| {
            let image_id = db_image_id(&cloud.scan_id, index);
            let rendered = render_culled(cloud, &cutout.pose, &intrinsics, &config.render)
                .and_then(|raw| fill_holes(&raw, &config.render).map(|img| (raw.missing_fraction, img)));
            match rendered {
                Ok((missing_fraction, mut image)) => {
                    image.image_id = image_id;
                    sink(SlicedImage {
                        index,
                        image,
                        missing_fraction,
                    })?;
                    Ok(Ok(missing_fraction))
                }
                Err(e) => {
                    warn!("skipping cutout {image_id}: {e}");
                    Ok(Err(SkippedCutout {
                        image_id,
                        reason: e.to_string(),
                    }))
                }
            }
        })
        .collect();
    let mut summary = SliceSummary::default();
    for outcome in outcomes {
        match outcome? {
            Ok(m) => {
                summary.written += 1;
                summary.missing_fractions.push(m);
            }
            Err(s) => summary.skipped.push(s),
        }
    }
    Ok(summary)
}
