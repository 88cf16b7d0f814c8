//! Rigid poses, pinhole intrinsics and pose-error metrics.
//!
//! Poses are camera-from-world: `X_cam = R * X_world + t`. The world frame is
//! right-handed with Z up; the camera frame looks along +Z with +X right and
//! +Y down.

use std::fmt;

use nalgebra::{Matrix3, Rotation3, Vector3};

use crate::error::{Error, Result};

/// Tolerance used when validating freshly constructed rotations.
pub const ROTATION_TOLERANCE: f64 = 1e-9;

/// Rigid transform mapping world coordinates into a camera (or scanner) frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

impl Pose {
    pub fn identity() -> Self {
        Pose {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// Builds a pose, rejecting rotations that are not orthonormal with
    /// determinant +1 within `tol` per entry.
    pub fn try_new(rotation: Matrix3<f64>, translation: Vector3<f64>, tol: f64) -> Result<Self> {
        if !rotation.iter().chain(translation.iter()).all(|v| v.is_finite()) {
            return Err(Error::validation("pose contains non-finite values"));
        }
        let dev = orthonormality_deviation(&rotation);
        if dev > tol {
            return Err(Error::validation(format!(
                "rotation is not orthonormal (max |RᵀR - I| = {dev:.3e}, tolerance {tol:.0e})"
            )));
        }
        let det = rotation.determinant();
        if (det - 1.0).abs() > tol.max(1e-12) * 3.0 {
            return Err(Error::validation(format!(
                "rotation determinant is {det:.6}, expected +1"
            )));
        }
        Ok(Pose {
            rotation,
            translation,
        })
    }

    /// Like [`Pose::try_new`] but snaps the rotation to the nearest proper
    /// rotation after validation.
    pub fn try_new_orthonormalized(
        rotation: Matrix3<f64>,
        translation: Vector3<f64>,
        tol: f64,
    ) -> Result<Self> {
        let pose = Pose::try_new(rotation, translation, tol)?;
        Ok(Pose {
            rotation: nearest_rotation(&pose.rotation),
            translation,
        })
    }

    #[cfg(test)]
    fn from_parts_unchecked(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Self {
        Pose {
            rotation,
            translation,
        }
    }

    /// Pose of a camera centred at `center` whose world-from-camera rotation is `world_from_cam`.
    pub fn from_center(world_from_cam: &Matrix3<f64>, center: &Vector3<f64>) -> Self {
        let rotation = world_from_cam.transpose();
        let translation = -(rotation * center);
        Pose {
            rotation,
            translation,
        }
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    /// Camera centre in world coordinates, `-Rᵀt`.
    pub fn center(&self) -> Vector3<f64> {
        -(self.rotation.transpose() * self.translation)
    }

    /// `self ∘ other`: apply `other` first, then `self`.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> Pose {
        let rt = self.rotation.transpose();
        Pose {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    #[inline]
    pub fn transform(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    /// Row-major `[R | t]` as 12 numbers.
    pub fn to_row_major(&self) -> [f64; 12] {
        let r = &self.rotation;
        let t = &self.translation;
        [
            r[(0, 0)],
            r[(0, 1)],
            r[(0, 2)],
            t[0],
            r[(1, 0)],
            r[(1, 1)],
            r[(1, 2)],
            t[1],
            r[(2, 0)],
            r[(2, 1)],
            r[(2, 2)],
            t[2],
        ]
    }

    /// Inverse of [`Pose::to_row_major`], validated with `tol`.
    pub fn from_row_major(v: &[f64; 12], tol: f64) -> Result<Self> {
        let (r, t) = split_row_major(v);
        Pose::try_new(r, t, tol)
    }

    /// Rotation as the 9 row-major entries followed by the translation.
    pub fn to_registry_order(&self) -> [f64; 12] {
        let r = &self.rotation;
        let t = &self.translation;
        [
            r[(0, 0)],
            r[(0, 1)],
            r[(0, 2)],
            r[(1, 0)],
            r[(1, 1)],
            r[(1, 2)],
            r[(2, 0)],
            r[(2, 1)],
            r[(2, 2)],
            t[0],
            t[1],
            t[2],
        ]
    }

    /// Pose text block: the `CFW` marker followed by the three rows of `[R | t]`.
    pub fn to_text(&self) -> String {
        let v = self.to_row_major();
        let mut s = String::from("CFW\n");
        for row in v.chunks(4) {
            let cells: Vec<String> = row.iter().map(|x| fmt_exact(*x)).collect();
            s.push_str(&cells.join(" "));
            s.push('\n');
        }
        s
    }

    /// Parses a pose text block. Extra lines after the fourth are returned
    /// untouched so callers can carry trailing metadata.
    pub fn parse_text(text: &str) -> Result<(Pose, Vec<&str>)> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        match lines.next() {
            Some((_, l)) if l.trim() == "CFW" => {}
            Some((n, l)) => {
                return Err(Error::parse(
                    format!("line {}", n + 1),
                    format!("expected `CFW` marker, found `{}`", l.trim()),
                ))
            }
            None => return Err(Error::parse("line 1", "empty pose file")),
        }
        let mut vals = [0.0f64; 12];
        for row in 0..3 {
            let (n, line) = lines
                .next()
                .ok_or_else(|| Error::parse(format!("row {}", row + 1), "missing pose row"))?;
            let nums = parse_floats(line, n + 1)?;
            if nums.len() != 4 {
                return Err(Error::parse(
                    format!("line {}", n + 1),
                    format!("expected 4 numbers, found {}", nums.len()),
                ));
            }
            vals[row * 4..row * 4 + 4].copy_from_slice(&nums);
        }
        let pose = Pose::from_row_major(&vals, 1e-6)?;
        Ok((pose, lines.map(|(_, l)| l).collect()))
    }
}

impl fmt::Display for Pose {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}

pub(crate) fn split_row_major(v: &[f64; 12]) -> (Matrix3<f64>, Vector3<f64>) {
    let r = Matrix3::new(v[0], v[1], v[2], v[4], v[5], v[6], v[8], v[9], v[10]);
    let t = Vector3::new(v[3], v[7], v[11]);
    (r, t)
}

pub(crate) fn parse_floats(line: &str, line_no: usize) -> Result<Vec<f64>> {
    line.split_whitespace()
        .map(|tok| {
            tok.parse::<f64>().map_err(|_| {
                Error::parse(format!("line {line_no}"), format!("`{tok}` is not a number"))
            })
        })
        .collect()
}

/// Formats a float with 17 significant digits, which round-trips every f64.
pub fn fmt_exact(x: f64) -> String {
    format!("{x:.16e}")
}

/// Largest entry of `|RᵀR - I|`.
pub fn orthonormality_deviation(r: &Matrix3<f64>) -> f64 {
    (r.transpose() * r - Matrix3::identity()).amax()
}

/// Closest proper rotation in the Frobenius sense.
pub fn nearest_rotation(m: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = m.svd(true, true);
    let u = svd.u.expect("svd u");
    let v_t = svd.v_t.expect("svd v_t");
    let mut r = u * v_t;
    if r.determinant() < 0.0 {
        let mut u2 = u;
        u2.column_mut(2).neg_mut();
        r = u2 * v_t;
    }
    r
}

/// Pinhole camera with the principal point at the image centre.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraIntrinsics {
    focal_px: f64,
    width: u32,
    height: u32,
}

impl CameraIntrinsics {
    pub fn new(focal_px: f64, width: u32, height: u32) -> Result<Self> {
        if !(focal_px.is_finite() && focal_px > 0.0) {
            return Err(Error::invalid(format!(
                "focal length must be positive, got {focal_px}"
            )));
        }
        if width < 2 || height < 2 {
            return Err(Error::invalid(format!(
                "resolution must be at least 2x2, got {width}x{height}"
            )));
        }
        Ok(CameraIntrinsics {
            focal_px,
            width,
            height,
        })
    }

    pub fn focal_px(&self) -> f64 {
        self.focal_px
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }

    pub fn cx(&self) -> f64 {
        self.width as f64 / 2.0
    }

    pub fn cy(&self) -> f64 {
        self.height as f64 / 2.0
    }

    /// Horizontal field of view in degrees.
    pub fn hfov_deg(&self) -> f64 {
        2.0 * (self.cx() / self.focal_px).atan().to_degrees()
    }

    /// Continuous pixel coordinates of a camera-frame point (no rounding).
    #[inline]
    pub fn project(&self, p_cam: &Vector3<f64>) -> (f64, f64) {
        (
            self.focal_px * p_cam.x / p_cam.z + self.cx(),
            self.focal_px * p_cam.y / p_cam.z + self.cy(),
        )
    }

    /// Camera-frame point at depth `z` seen through pixel `(u, v)`.
    pub fn backproject(&self, u: f64, v: f64, z: f64) -> Vector3<f64> {
        Vector3::new(
            z * (u - self.cx()) / self.focal_px,
            z * (v - self.cy()) / self.focal_px,
            z,
        )
    }
}

/// Focal length for a given horizontal field of view: `(width/2) / tan(hfov/2)`.
pub fn intrinsics_from_fov(hfov_deg: f64, width: u32, height: u32) -> Result<CameraIntrinsics> {
    if !(hfov_deg.is_finite() && hfov_deg > 0.0 && hfov_deg < 180.0) {
        return Err(Error::invalid(format!(
            "horizontal fov must be in (0, 180) degrees, got {hfov_deg}"
        )));
    }
    if width < 2 || height < 2 {
        return Err(Error::invalid(format!(
            "resolution must be at least 2x2, got {width}x{height}"
        )));
    }
    let focal = (width as f64 / 2.0) / (hfov_deg.to_radians() / 2.0).tan();
    CameraIntrinsics::new(focal, width, height)
}

/// Distance between camera centres in metres.
pub fn translation_error(gt: &Pose, est: &Pose) -> f64 {
    (gt.center() - est.center()).norm()
}

/// Angle of the relative rotation `R_gt R_estᵀ` in degrees.
///
/// Below 90° the angle comes from the chord `‖R_gt − R_est‖_F = 2√2·sin(θ/2)`,
/// which is exactly 0 for equal rotations; above it from the clamped trace.
pub fn rotation_error(gt: &Pose, est: &Pose) -> f64 {
    let rel = gt.rotation * est.rotation.transpose();
    let c = ((rel.trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
    if c > 0.0 {
        let chord = (gt.rotation - est.rotation).norm();
        (2.0 * (chord / 8f64.sqrt()).min(1.0).asin()).to_degrees()
    } else {
        c.acos().to_degrees()
    }
}

/// Yaw, pitch and roll in degrees.
///
/// Yaw turns about world Z (counter-clockwise seen from above), pitch about
/// the camera X axis (positive looks up), roll about the optical axis. All
/// zero looks along world +X with world +Z up in the image.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EulerAngles {
    pub yaw: f64,
    pub pitch: f64,
    pub roll: f64,
}

impl EulerAngles {
    pub fn new(yaw: f64, pitch: f64, roll: f64) -> Self {
        EulerAngles { yaw, pitch, roll }
    }
}

/// World-from-camera rotation of the reference orientation: optical axis
/// along world +X, camera +X along world -Y, camera +Y (down) along world -Z.
fn reference_world_from_cam() -> Matrix3<f64> {
    Matrix3::new(0.0, 0.0, 1.0, -1.0, 0.0, 0.0, 0.0, -1.0, 0.0)
}

fn rot(axis: &Vector3<f64>, deg: f64) -> Matrix3<f64> {
    *Rotation3::from_axis_angle(&nalgebra::Unit::new_unchecked(*axis), deg.to_radians()).matrix()
}

/// World-from-camera rotation for the given angles.
pub fn world_from_cam(angles: &EulerAngles) -> Result<Matrix3<f64>> {
    if !(angles.yaw.is_finite() && angles.pitch.is_finite() && angles.roll.is_finite()) {
        return Err(Error::invalid("euler angles must be finite"));
    }
    if angles.pitch.abs() >= 90.0 {
        return Err(Error::invalid(format!(
            "pitch must lie in (-90, 90) degrees, got {}",
            angles.pitch
        )));
    }
    Ok(rot(&Vector3::z(), angles.yaw)
        * reference_world_from_cam()
        * rot(&Vector3::x(), angles.pitch)
        * rot(&Vector3::z(), angles.roll))
}

/// Camera pose centred at `position` with the given orientation.
pub fn pose_from_euler(position: &Vector3<f64>, angles: &EulerAngles) -> Result<Pose> {
    Ok(Pose::from_center(&world_from_cam(angles)?, position))
}

/// Like [`pose_from_euler`], with the angles taken in the axes of `frame`
/// (typically a scanner pose) instead of the world axes.
pub fn pose_in_frame(frame: &Pose, position: &Vector3<f64>, angles: &EulerAngles) -> Result<Pose> {
    let world_from_frame = frame.rotation().transpose();
    Ok(Pose::from_center(&(world_from_frame * world_from_cam(angles)?), position))
}

/// Recovers yaw/pitch/roll from a pose. Yaw and roll come back in (-180, 180].
pub fn euler_from_pose(pose: &Pose) -> EulerAngles {
    let wc = pose.rotation().transpose();
    let axis = wc.column(2);
    let pitch = axis.z.clamp(-1.0, 1.0).asin().to_degrees();
    let yaw = axis.y.atan2(axis.x).to_degrees();
    let rest = rot(&Vector3::x(), pitch).transpose()
        * reference_world_from_cam().transpose()
        * rot(&Vector3::z(), yaw).transpose()
        * wc;
    let roll = rest[(1, 0)].atan2(rest[(0, 0)]).to_degrees();
    EulerAngles { yaw, pitch, roll }
}

/// Smallest signed difference between two angles in degrees.
pub fn angle_diff_deg(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(360.0);
    if d > 180.0 {
        d - 360.0
    } else {
        d
    }
}
