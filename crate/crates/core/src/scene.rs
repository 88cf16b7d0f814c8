//! Procedural colored point clouds used as fixtures and mock scans.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cloud::PointCloud;

/// Base color of each room surface.
pub const WALL_POS_X: [u8; 3] = [200, 40, 40];
pub const WALL_NEG_X: [u8; 3] = [40, 200, 200];
pub const WALL_POS_Y: [u8; 3] = [40, 200, 40];
pub const WALL_NEG_Y: [u8; 3] = [40, 40, 200];
pub const FLOOR: [u8; 3] = [120, 110, 100];
pub const CEILING: [u8; 3] = [230, 230, 220];

/// Axis-aligned box room with differently colored walls, sampled uniformly
/// over its surfaces.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Room {
    pub center: [f64; 3],
    /// Extent along X, Y, Z in metres.
    pub size: [f64; 3],
    /// Side of the checker texture modulating the wall colors (metres); 0 disables it.
    pub checker: f64,
}

impl Default for Room {
    fn default() -> Self {
        Room {
            center: [0.0, 0.0, 1.25],
            size: [6.0, 5.0, 2.5],
            checker: 0.25,
        }
    }
}

impl Room {
    /// `n` points spread over the six faces in proportion to their area.
    pub fn sample(&self, scan_id: &str, n: usize, seed: u64) -> PointCloud {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let [sx, sy, sz] = self.size;
        let [cx, cy, cz] = self.center;
        let (hx, hy, hz) = (sx / 2.0, sy / 2.0, sz / 2.0);
        // face: (area, fixed axis, sign, color)
        let faces = [
            (sy * sz, 0usize, 1.0, WALL_POS_X),
            (sy * sz, 0, -1.0, WALL_NEG_X),
            (sx * sz, 1, 1.0, WALL_POS_Y),
            (sx * sz, 1, -1.0, WALL_NEG_Y),
            (sx * sy, 2, -1.0, FLOOR),
            (sx * sy, 2, 1.0, CEILING),
        ];
        let total: f64 = faces.iter().map(|f| f.0).sum();
        let half = [hx, hy, hz];
        let mut cloud = PointCloud::with_capacity(scan_id, n);
        for _ in 0..n {
            let mut pick = rng.random_range(0.0..total);
            let face = faces
                .iter()
                .find(|f| {
                    if pick < f.0 {
                        true
                    } else {
                        pick -= f.0;
                        false
                    }
                })
                .unwrap_or(&faces[5]);
            let mut local = [0.0; 3];
            for (a, l) in local.iter_mut().enumerate() {
                *l = if a == face.1 {
                    face.2 * half[a]
                } else {
                    rng.random_range(-half[a]..half[a])
                };
            }
            let mut color = face.3;
            if self.checker > 0.0 {
                let cell: i64 = local
                    .iter()
                    .enumerate()
                    .filter(|(a, _)| *a != face.1)
                    .map(|(_, v)| (v / self.checker).floor() as i64)
                    .sum();
                if cell.rem_euclid(2) == 1 {
                    color = color.map(|c| (c as u16 * 3 / 4) as u8);
                }
            }
            cloud.push([local[0] + cx, local[1] + cy, local[2] + cz], color);
        }
        cloud
    }
}

/// Points on a sphere around `center`, colored by direction. Every viewing
/// direction from the centre sees part of the shell.
pub fn sphere_shell(scan_id: &str, center: [f64; 3], radius: f64, n: usize, seed: u64) -> PointCloud {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cloud = PointCloud::with_capacity(scan_id, n);
    for _ in 0..n {
        let z: f64 = rng.random_range(-1.0..1.0);
        let phi: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        let s = (1.0 - z * z).sqrt();
        let d = [s * phi.cos(), s * phi.sin(), z];
        let color = d.map(|c| (127.5 + 127.0 * c) as u8);
        cloud.push(
            [
                center[0] + radius * d[0],
                center[1] + radius * d[1],
                center[2] + radius * d[2],
            ],
            color,
        );
    }
    cloud
}
