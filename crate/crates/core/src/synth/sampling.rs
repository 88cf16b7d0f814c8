use nalgebra::Vector3;
use rand::Rng;

use crate::error::{Error, Result};
use crate::geom::{pose_in_frame, EulerAngles, Pose};

/// Bounds of the random virtual-camera perturbation around a scanner.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplingLimits {
    /// Largest offset along each horizontal axis (metres).
    pub max_horizontal_offset: f64,
    pub max_vertical_offset: f64,
    /// Half-open yaw interval in degrees.
    pub yaw_range: (f64, f64),
    pub pitch_range: (f64, f64),
    pub roll_range: (f64, f64),
    /// Largest missing-pixel fraction a raw render may have.
    pub max_missing: f64,
    pub max_attempts_per_query: u32,
}

impl Default for SamplingLimits {
    fn default() -> Self {
        SamplingLimits {
            max_horizontal_offset: 2.0,
            max_vertical_offset: 1.0,
            yaw_range: (0.0, 360.0),
            pitch_range: (-25.0, 25.0),
            roll_range: (-15.0, 15.0),
            max_missing: 0.10,
            max_attempts_per_query: 50,
        }
    }
}

impl SamplingLimits {
    /// All-zero perturbation: the query sits at the scanner looking along its heading.
    pub fn zero() -> Self {
        SamplingLimits {
            max_horizontal_offset: 0.0,
            max_vertical_offset: 0.0,
            yaw_range: (0.0, 0.0),
            pitch_range: (0.0, 0.0),
            roll_range: (0.0, 0.0),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let offsets = [self.max_horizontal_offset, self.max_vertical_offset];
        if offsets.iter().any(|o| !(o.is_finite() && *o >= 0.0)) {
            return Err(Error::invalid("offset limits must be finite and non-negative"));
        }
        for (name, (lo, hi)) in [
            ("yaw", self.yaw_range),
            ("pitch", self.pitch_range),
            ("roll", self.roll_range),
        ] {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(Error::invalid(format!("{name} range [{lo}, {hi}] is not an interval")));
            }
        }
        let (lo, hi) = self.pitch_range;
        if !(lo > -90.0 && hi < 90.0) {
            return Err(Error::invalid(format!("pitch range [{lo}, {hi}] must lie inside (-90, 90)")));
        }
        if !(0.0..=1.0).contains(&self.max_missing) {
            return Err(Error::invalid("max_missing must lie in [0, 1]"));
        }
        if self.max_attempts_per_query == 0 {
            return Err(Error::invalid("max_attempts_per_query must be at least 1"));
        }
        Ok(())
    }
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

/// Random virtual camera near the scanner. Offsets are along the world
/// axes; yaw, pitch and roll are taken in the scanner's axes. Draw order
/// is fixed (x, y, z, yaw, pitch, roll), so a seed fully determines the pose.
pub fn sample_query_pose<R: Rng + ?Sized>(
    scanner_pose: &Pose,
    limits: &SamplingLimits,
    rng: &mut R,
) -> Result<Pose> {
    limits.validate()?;
    let h = limits.max_horizontal_offset;
    let v = limits.max_vertical_offset;
    let offset = Vector3::new(uniform(rng, -h, h), uniform(rng, -h, h), uniform(rng, -v, v));
    let angles = EulerAngles::new(
        uniform(rng, limits.yaw_range.0, limits.yaw_range.1),
        uniform(rng, limits.pitch_range.0, limits.pitch_range.1),
        uniform(rng, limits.roll_range.0, limits.roll_range.1),
    );
    pose_in_frame(scanner_pose, &(scanner_pose.center() + offset), &angles)
}
