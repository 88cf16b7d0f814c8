use nalgebra::Vector3;

use crate::error::{Error, Result};

/// Colored points in a common world frame, stored as parallel arrays.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointCloud {
    pub scan_id: String,
    pub positions: Vec<[f64; 3]>,
    pub colors: Vec<[u8; 3]>,
}

impl PointCloud {
    pub fn new(scan_id: impl Into<String>) -> Self {
        PointCloud {
            scan_id: scan_id.into(),
            ..Default::default()
        }
    }

    pub fn with_capacity(scan_id: impl Into<String>, n: usize) -> Self {
        PointCloud {
            scan_id: scan_id.into(),
            positions: Vec::with_capacity(n),
            colors: Vec::with_capacity(n),
        }
    }

    pub fn push(&mut self, position: [f64; 3], color: [u8; 3]) {
        self.positions.push(position);
        self.colors.push(color);
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    #[inline]
    pub fn position(&self, i: usize) -> Vector3<f64> {
        let p = self.positions[i];
        Vector3::new(p[0], p[1], p[2])
    }

    /// Checks the structural invariants: matching array lengths and finite coordinates.
    pub fn validate(&self) -> Result<()> {
        if self.positions.len() != self.colors.len() {
            return Err(Error::validation(format!(
                "cloud `{}` has {} positions but {} colors",
                self.scan_id,
                self.positions.len(),
                self.colors.len()
            )));
        }
        if let Some(i) = self
            .positions
            .iter()
            .position(|p| !p.iter().all(|v| v.is_finite()))
        {
            return Err(Error::validation(format!(
                "cloud `{}` point {i} has a non-finite coordinate",
                self.scan_id
            )));
        }
        Ok(())
    }

    /// True when every coordinate survives a cast to f32 unchanged.
    pub fn is_f32_exact(&self) -> bool {
        self.positions
            .iter()
            .flatten()
            .all(|&v| (v as f32) as f64 == v)
    }
}
