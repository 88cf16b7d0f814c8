//! Building blocks for visual-localization benchmarks generated from
//! registered, colored laser scans.
//!
//! Database images are perspective cutouts rendered from each scan; query
//! images are rendered at randomly perturbed poses and optionally degraded,
//! so their ground-truth poses are exact by construction. The [`eval`]
//! module scores localizer output against those poses.

pub mod cloud;
pub mod error;
pub mod eval;
pub mod geom;
pub mod io;
pub mod raster;
pub mod render;
pub mod scene;
pub mod slicer;
pub mod synth;

pub use cloud::PointCloud;
pub use error::{Error, Result};
pub use geom::{
    intrinsics_from_fov, pose_from_euler, rotation_error, translation_error, CameraIntrinsics,
    EulerAngles, Pose,
};
pub use raster::{Raster, RgbdImage};
pub use render::{
    fill_holes, frustum_subset, quality_gate, render, render_culled, unproject, RawRender, RenderParams,
};
