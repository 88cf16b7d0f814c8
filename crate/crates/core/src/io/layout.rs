use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

/// Directory layout of a benchmark:
///
/// ```text
/// <root>/database/<scan_id>/<image_id>.{rgb.png,depth.png,pose.txt}
/// <root>/queries/<query_id>.{rgb.png,depth.png,pose.txt}
/// <root>/manifest.txt
/// ```
#[derive(Debug, Clone)]
pub struct DatasetLayout {
    root: PathBuf,
}

impl DatasetLayout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        DatasetLayout { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn database_dir(&self) -> PathBuf {
        self.root.join("database")
    }

    pub fn scan_dir(&self, scan_id: &str) -> PathBuf {
        self.database_dir().join(scan_id)
    }

    pub fn queries_dir(&self) -> PathBuf {
        self.root.join("queries")
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.root.join("manifest.txt")
    }
}

pub const RGB_SUFFIX: &str = ".rgb.png";
pub const DEPTH_SUFFIX: &str = ".depth.png";
pub const POSE_SUFFIX: &str = ".pose.txt";

/// Identifiers (scan, image and query ids) are non-empty and use only
/// ASCII letters, digits, `_`, `-` and `.`.
pub fn validate_id(id: &str) -> Result<()> {
    let ok = !id.is_empty()
        && id != "."
        && id != ".."
        && id
            .bytes()
            .all(|b| b.is_ascii_alphanumeric() || matches!(b, b'_' | b'-' | b'.'));
    if ok {
        Ok(())
    } else {
        Err(Error::validation(format!("invalid identifier `{id}`")))
    }
}

/// Database image id `<scan_id>_<index:03>`.
pub fn db_image_id(scan_id: &str, index: usize) -> String {
    format!("{scan_id}_{index:03}")
}

/// Query id `q<index:03>`.
pub fn query_id(index: usize) -> String {
    format!("q{index:03}")
}

/// Recovers the scan id from a database image id.
pub fn scan_id_of(image_id: &str) -> Result<&str> {
    let bad = || {
        Error::validation(format!(
            "`{image_id}` is not a database image id of the form <scan_id>_<index>"
        ))
    };
    validate_id(image_id).map_err(|_| bad())?;
    let (scan, index) = image_id.rsplit_once('_').ok_or_else(bad)?;
    if scan.is_empty() || index.len() < 3 || !index.bytes().all(|b| b.is_ascii_digit()) {
        return Err(bad());
    }
    Ok(scan)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn image_ids() {
        assert_eq!(db_image_id("scan003", 12), "scan003_012");
        assert_eq!(scan_id_of("scan003_012").unwrap(), "scan003");
        assert_eq!(scan_id_of("room_a_035").unwrap(), "room_a");
        assert_eq!(scan_id_of("s_1234").unwrap(), "s");
        for bad in ["foo", "_012", "scan_12", "scan_01a", "scan 1_000", ""] {
            assert!(scan_id_of(bad).is_err(), "{bad}");
        }
        assert_eq!(query_id(7), "q007");
        assert_eq!(query_id(337), "q337");
    }

    #[test]
    fn id_charset() {
        assert!(validate_id("scan-01.a_b").is_ok());
        assert!(validate_id("a/b").is_err());
        assert!(validate_id("..").is_err());
        assert!(validate_id("").is_err());
    }
}
