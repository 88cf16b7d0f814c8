//! Persistence: point clouds, scan registries, RGBD images, manifests,
//! estimate and retrieval-candidate files.

pub mod candidates;
pub mod estimates;
pub mod layout;
pub mod manifest;
pub mod ply;
pub mod registry;
pub mod rgbd;

pub use candidates::{parse_candidates, read_candidates, Candidates};
pub use estimates::{estimates_to_text, parse_estimates, read_estimates, Estimate};
pub use layout::{
    db_image_id, query_id, scan_id_of, validate_id, DatasetLayout, DEPTH_SUFFIX, POSE_SUFFIX, RGB_SUFFIX,
};
pub use manifest::{
    FlashlightRecord, ManifestRecord, OcclusionRecord, QueryManifest, QueryStatus, MANIFEST_HEADER,
    OCCLUSION_FRACTION_RANGE,
};
pub use ply::{load_ply, read_ply, save_ply};
pub use registry::{load_scan_registry, ScanEntry, ScanRegistry};
pub use rgbd::{read_rgbd, write_rgbd, RgbdWriteReport};
