use std::path::{Path, PathBuf};

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::geom::{fmt_exact, Pose};
use crate::io::layout::validate_id;

/// Rotation rows must be orthonormal within this before re-orthonormalization.
pub const REGISTRY_POSE_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct ScanEntry {
    pub scan_id: String,
    /// Cloud path, resolved against the registry file's directory when relative.
    pub cloud_path: PathBuf,
    /// Registered pose of the scan origin (camera-from-world of the scanner).
    pub scanner_pose: Pose,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ScanRegistry {
    pub entries: Vec<ScanEntry>,
}

impl ScanRegistry {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, scan_id: &str) -> Option<&ScanEntry> {
        self.entries.iter().find(|e| e.scan_id == scan_id)
    }

    /// Registry text: one `scan_id<TAB>cloud_path<TAB>r11 .. r33 tx ty tz` line per scan.
    pub fn to_text(&self) -> String {
        let mut s = String::from("# scan_id\tcloud_path\tr11 r12 r13 r21 r22 r23 r31 r32 r33 tx ty tz\n");
        for e in &self.entries {
            let nums: Vec<String> = e
                .scanner_pose
                .to_registry_order()
                .iter()
                .map(|v| fmt_exact(*v))
                .collect();
            s.push_str(&format!(
                "{}\t{}\t{}\n",
                e.scan_id,
                e.cloud_path.display(),
                nums.join(" ")
            ));
        }
        s
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }
}

/// Parses registry text without touching the filesystem. Relative cloud
/// paths are joined onto `base_dir`.
pub fn parse_scan_registry(text: &str, base_dir: &Path) -> Result<ScanRegistry> {
    let mut entries: Vec<ScanEntry> = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line_no = n + 1;
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() || line.trim_start().starts_with('#') {
            continue;
        }
        let loc = || format!("line {line_no}");
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(Error::parse(
                loc(),
                format!("expected 3 tab-separated fields, found {}", fields.len()),
            ));
        }
        let scan_id = fields[0].trim();
        validate_id(scan_id).map_err(|_| Error::parse(loc(), format!("invalid scan id `{scan_id}`")))?;
        if entries.iter().any(|e| e.scan_id == scan_id) {
            return Err(Error::validation(format!("line {line_no}: duplicate scan id `{scan_id}`")));
        }
        let cloud = fields[1].trim();
        if cloud.is_empty() {
            return Err(Error::parse(loc(), "empty cloud path"));
        }
        let nums = crate::geom::parse_floats(fields[2], line_no)?;
        if nums.len() != 12 {
            return Err(Error::parse(
                loc(),
                format!("expected 12 pose numbers, found {}", nums.len()),
            ));
        }
        let r = Matrix3::from_row_slice(&nums[..9]);
        let t = Vector3::new(nums[9], nums[10], nums[11]);
        let scanner_pose = Pose::try_new_orthonormalized(r, t, REGISTRY_POSE_TOLERANCE)
            .map_err(|e| Error::validation(format!("line {line_no}: scan `{scan_id}`: {e}")))?;
        let cloud_path = Path::new(cloud);
        let cloud_path = if cloud_path.is_absolute() {
            cloud_path.to_path_buf()
        } else {
            base_dir.join(cloud_path)
        };
        entries.push(ScanEntry {
            scan_id: scan_id.to_string(),
            cloud_path,
            scanner_pose,
        });
    }
    Ok(ScanRegistry { entries })
}

/// Loads and validates a registry; every referenced cloud file must exist.
pub fn load_scan_registry(path: impl AsRef<Path>) -> Result<ScanRegistry> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let reg = parse_scan_registry(&text, base).map_err(|e| e.with_path(path))?;
    for e in &reg.entries {
        if !e.cloud_path.is_file() {
            return Err(Error::validation(format!(
                "scan `{}`: cloud file {} does not exist",
                e.scan_id,
                e.cloud_path.display()
            ))
            .with_path(path));
        }
    }
    Ok(reg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{orthonormality_deviation, pose_from_euler, EulerAngles};

    const IDENT: &str = "1 0 0 0 1 0 0 0 1 0 0 0";

    #[test]
    fn two_identity_scans() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("a.ply"), b"x").unwrap();
        std::fs::write(dir.path().join("b.ply"), b"x").unwrap();
        let text = format!("# comment\nscanA\ta.ply\t{IDENT}\n\nscanB\tb.ply\t{IDENT}\n");
        let reg_path = dir.path().join("registry.txt");
        std::fs::write(&reg_path, text).unwrap();
        let reg = load_scan_registry(&reg_path).unwrap();
        assert_eq!(reg.len(), 2);
        assert_eq!(reg.entries[0].scan_id, "scanA");
        assert_eq!(reg.entries[1].cloud_path, dir.path().join("b.ply"));
        assert_eq!(reg.entries[0].scanner_pose, Pose::identity());
    }

    #[test]
    fn missing_cloud_named() {
        let dir = tempfile::tempdir().unwrap();
        let reg_path = dir.path().join("registry.txt");
        std::fs::write(&reg_path, format!("s1\tnowhere.ply\t{IDENT}\n")).unwrap();
        let err = load_scan_registry(&reg_path).unwrap_err();
        assert!(err.to_string().contains("nowhere.ply"), "{err}");
    }

    #[test]
    fn scaled_rotation_rejected() {
        // valid rotation scaled so every row has norm 1.1
        let pose = pose_from_euler(&Vector3::new(1.0, 2.0, 0.5), &EulerAngles::new(20.0, 5.0, 1.0)).unwrap();
        let mut nums = pose.to_registry_order();
        for v in &mut nums[..9] {
            *v *= 1.1;
        }
        let line: Vec<String> = nums.iter().map(|v| v.to_string()).collect();
        let err = parse_scan_registry(&format!("s\tc.ply\t{}\n", line.join(" ")), Path::new(".")).unwrap_err();
        assert!(err.to_string().contains("orthonormal"), "{err}");
    }

    #[test]
    fn reorthonormalizes_small_drift() {
        let pose = pose_from_euler(&Vector3::zeros(), &EulerAngles::new(33.0, 5.0, 1.0)).unwrap();
        let mut nums = pose.to_registry_order();
        nums[0] += 4e-7;
        let line: Vec<String> = nums.iter().map(|v| v.to_string()).collect();
        let reg = parse_scan_registry(&format!("s\tc.ply\t{}\n", line.join(" ")), Path::new(".")).unwrap();
        assert!(orthonormality_deviation(reg.entries[0].scanner_pose.rotation()) < 1e-12);
    }

    #[test]
    fn malformed_lines() {
        let base = Path::new(".");
        assert!(parse_scan_registry(&format!("a\tb.ply\t{IDENT}\na\tc.ply\t{IDENT}\n"), base)
            .unwrap_err()
            .to_string()
            .contains("duplicate"));
        assert!(parse_scan_registry("a\tb.ply\t1 0 0\n", base).is_err());
        assert!(parse_scan_registry("a b.ply 1 0 0 0 1 0 0 0 1 0 0 0\n", base).is_err());
        assert!(parse_scan_registry(&format!("a/b\tb.ply\t{IDENT}\n"), base).is_err());
        assert!(parse_scan_registry("a\tb.ply\t1 0 0 0 1 0 0 0 1 0 0 x\n", base).is_err());
    }

    #[test]
    fn text_round_trip() {
        let pose = pose_from_euler(&Vector3::new(-3.0, 2.5, 1.0), &EulerAngles::new(-40.0, 2.0, 0.5)).unwrap();
        let reg = ScanRegistry {
            entries: vec![ScanEntry {
                scan_id: "s0".into(),
                cloud_path: PathBuf::from("/abs/s0.ply"),
                scanner_pose: pose,
            }],
        };
        let back = parse_scan_registry(&reg.to_text(), Path::new("/")).unwrap();
        let d = back.entries[0].scanner_pose.rotation() - pose.rotation();
        assert!(d.amax() < 1e-12);
        assert_eq!(back.entries[0].cloud_path, PathBuf::from("/abs/s0.ply"));
    }
}
