//! Query synthesis: perturbed virtual cameras rendered from the scans,
//! gated on missing pixels, hole-filled, then optionally degraded by
//! lighting, an occluder, and noise.

mod distort;
mod sampling;

pub use distort::{
    apply_flashlight, apply_noise, apply_occlusion, sample_occlusion, scanline_fill, FlashlightParams,
    OcclusionRejected, OcclusionSpec,
};
pub use sampling::{sample_query_pose, SamplingLimits};

use log::{info, warn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::cloud::PointCloud;
use crate::error::{Error, Result};
use crate::geom::{intrinsics_from_fov, CameraIntrinsics, Pose};
use crate::io::{
    load_ply, query_id, write_rgbd, DatasetLayout, FlashlightRecord, ManifestRecord, QueryManifest,
    QueryStatus, ScanRegistry,
};
use crate::raster::RgbdImage;
use crate::render::{fill_holes, quality_gate, render_culled, render_recolored, RawRender, RenderParams};

/// Occluder draws per query before the query is left unoccluded.
pub const MAX_OCCLUSION_TRIES: u32 = 20;

// Independent random streams of one query.
const POSE_STREAM: u64 = 0;
const OCCLUSION_STREAM: u64 = 1;
const NOISE_STREAM: u64 = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub hfov: f64,
    pub width: u32,
    pub height: u32,
    pub render: RenderParams,
    pub limits: SamplingLimits,
    pub flashlight: FlashlightParams,
    /// Chance that a query receives an occluder.
    pub occlusion_probability: f64,
    /// Standard deviation of the color noise in gray levels; 0 disables it.
    pub noise_sigma: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            hfov: 60.0,
            width: 1024,
            height: 768,
            render: RenderParams::default(),
            limits: SamplingLimits::default(),
            flashlight: FlashlightParams::default(),
            occlusion_probability: 0.9,
            noise_sigma: 0.0,
        }
    }
}

impl SynthConfig {
    /// Rendering and gating only: no lighting, occluders or noise.
    pub fn undistorted() -> Self {
        SynthConfig {
            flashlight: FlashlightParams {
                enabled: false,
                ..FlashlightParams::default()
            },
            occlusion_probability: 0.0,
            noise_sigma: 0.0,
            ..Self::default()
        }
    }

    pub fn intrinsics(&self) -> Result<CameraIntrinsics> {
        intrinsics_from_fov(self.hfov, self.width, self.height)
    }

    pub fn validate(&self) -> Result<()> {
        self.intrinsics()?;
        self.render.validate()?;
        self.limits.validate()?;
        self.flashlight.validate()?;
        if !(0.0..=1.0).contains(&self.occlusion_probability) {
            return Err(Error::invalid("occlusion probability must lie in [0, 1]"));
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return Err(Error::invalid("noise sigma must be non-negative"));
        }
        Ok(())
    }
}

fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of query `index`, a splitmix64 hash of the master seed and the index.
pub fn query_seed(master_seed: u64, index: usize) -> u64 {
    mix64(mix64(master_seed) ^ index as u64)
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Renders the scene from `pose`, lit by the flashlight when enabled.
pub fn render_query_view(
    cloud: &PointCloud,
    pose: &Pose,
    intrinsics: &CameraIntrinsics,
    config: &SynthConfig,
) -> Result<RawRender> {
    if !config.flashlight.enabled {
        return render_culled(cloud, pose, intrinsics, &config.render);
    }
    let center = pose.center();
    let lamp = config.flashlight;
    render_recolored(
        cloud,
        pose,
        intrinsics,
        &config.render,
        Some(move |p: &[f64; 3], c: [u8; 3]| {
            let d = ((p[0] - center.x).powi(2) + (p[1] - center.y).powi(2) + (p[2] - center.z).powi(2)).sqrt();
            lamp.shade(c, d)
        }),
    )
}

/// One synthesized query: its manifest record and, unless skipped, the image.
#[derive(Debug, Clone)]
pub struct SynthesizedQuery {
    pub record: ManifestRecord,
    pub image: Option<RgbdImage>,
}

/// Runs the whole per-query procedure for query `index` on one scan.
pub fn synthesize_query(
    cloud: &PointCloud,
    scanner_pose: &Pose,
    index: usize,
    master_seed: u64,
    config: &SynthConfig,
) -> Result<SynthesizedQuery> {
    config.validate()?;
    if cloud.is_empty() {
        return Err(Error::invalid(format!("scan `{}` has no points", cloud.scan_id)));
    }
    let intrinsics = config.intrinsics()?;
    let seed = query_seed(master_seed, index);
    let id = query_id(index);
    let mut record = ManifestRecord {
        query_id: id.clone(),
        scan_id: cloud.scan_id.clone(),
        status: QueryStatus::Skipped,
        seed,
        attempts: 0,
        pose: None,
        intrinsics: None,
        missing_fraction: None,
        flashlight: FlashlightRecord {
            enabled: config.flashlight.enabled,
            gain: config.flashlight.gain,
            half_distance: config.flashlight.half_distance,
        },
        occlusion: None,
        noise_sigma: config.noise_sigma,
    };

    let mut pose_rng = stream(seed, POSE_STREAM);
    let mut accepted = None;
    for attempt in 1..=config.limits.max_attempts_per_query {
        record.attempts = attempt;
        let pose = sample_query_pose(scanner_pose, &config.limits, &mut pose_rng)?;
        let raw = render_query_view(cloud, &pose, &intrinsics, config)?;
        if quality_gate(&raw, config.limits.max_missing) {
            accepted = Some(raw);
            break;
        }
    }
    let Some(raw) = accepted else {
        warn!(
            "query {id}: no pose passed the quality gate in {} attempts",
            record.attempts
        );
        return Ok(SynthesizedQuery { record, image: None });
    };

    let mut image = fill_holes(&raw, &config.render)?;
    image.image_id = id.clone();
    let mut occ_rng = stream(seed, OCCLUSION_STREAM);
    if occ_rng.random_bool(config.occlusion_probability) {
        match sample_occlusion(&image, &mut occ_rng, MAX_OCCLUSION_TRIES) {
            Some((occluded, rec)) => {
                image = occluded;
                record.occlusion = Some(rec);
            }
            None => warn!("query {id}: no occluder within {MAX_OCCLUSION_TRIES} tries; left unoccluded"),
        }
    }
    if config.noise_sigma > 0.0 {
        image = apply_noise(&image, config.noise_sigma, &mut stream(seed, NOISE_STREAM))?;
    }
    record.status = QueryStatus::Ok;
    record.pose = Some(raw.pose);
    record.intrinsics = Some(intrinsics);
    record.missing_fraction = Some(raw.missing_fraction);
    Ok(SynthesizedQuery {
        record,
        image: Some(image),
    })
}

/// Index of the scan that query `index` is drawn from.
pub fn scan_for_query(index: usize, n_scans: usize) -> usize {
    index % n_scans
}

/// Outcome of a full synthesis run.
#[derive(Debug, Clone)]
pub struct SynthSummary {
    pub manifest: QueryManifest,
    pub written: usize,
    pub skipped: usize,
    pub occluded: usize,
    /// Depth pixels clipped to the 16-bit range across all written images.
    pub saturated_depth: usize,
}

/// Synthesizes `n` queries, assigning them to scans round-robin, and writes
/// the images under `layout`'s query directory and the manifest at its root.
/// Scans are loaded one at a time; the manifest lists queries in index order.
pub fn synthesize_queries(
    registry: &ScanRegistry,
    n: usize,
    config: &SynthConfig,
    master_seed: u64,
    layout: &DatasetLayout,
) -> Result<SynthSummary> {
    if registry.is_empty() {
        return Err(Error::invalid("the scan registry is empty"));
    }
    if n == 0 {
        return Err(Error::invalid("the number of queries must be at least 1"));
    }
    config.validate()?;
    let qdir = layout.queries_dir();
    std::fs::create_dir_all(&qdir).map_err(|e| Error::io(&qdir, e))?;

    let n_scans = registry.len();
    let mut slots: Vec<Option<(ManifestRecord, usize)>> = vec![None; n];
    for (s, entry) in registry.entries.iter().enumerate() {
        let indices: Vec<usize> = (0..n).filter(|&i| scan_for_query(i, n_scans) == s).collect();
        if indices.is_empty() {
            continue;
        }
        let mut cloud = load_ply(&entry.cloud_path)?;
        cloud.scan_id = entry.scan_id.clone();
        info!("scan {}: {} points, {} queries", entry.scan_id, cloud.len(), indices.len());
        let done: Vec<Result<(usize, ManifestRecord, usize)>> = indices
            .par_iter()
            .map(|&i| {
                let q = synthesize_query(&cloud, &entry.scanner_pose, i, master_seed, config)?;
                let saturated = match &q.image {
                    Some(img) => write_rgbd(img, &qdir)?.saturated,
                    None => 0,
                };
                Ok((i, q.record, saturated))
            })
            .collect();
        for r in done {
            let (i, record, saturated) = r?;
            slots[i] = Some((record, saturated));
        }
    }

    let mut manifest = QueryManifest::default();
    let mut saturated_depth = 0;
    for slot in slots {
        let (record, saturated) = slot.expect("every query index belongs to a scan");
        saturated_depth += saturated;
        manifest.records.push(record);
    }
    manifest.save(layout.manifest_path())?;
    let written = manifest.ok_records().count();
    let occluded = manifest.records.iter().filter(|r| r.occlusion.is_some()).count();
    Ok(SynthSummary {
        written,
        skipped: manifest.len() - written,
        occluded,
        saturated_depth,
        manifest,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{rotation_error, translation_error};
    use crate::io::{read_rgbd, save_ply, ScanEntry};
    use crate::render::render;
    use crate::scene::{sphere_shell, Room};
    use crate::slicer::{slice_scan, SliceConfig};
    use nalgebra::Vector3;

    fn small(mut c: SynthConfig) -> SynthConfig {
        c.width = 96;
        c.height = 72;
        c
    }

    fn room_cloud() -> PointCloud {
        Room::default().sample("room", 60_000, 3)
    }

    fn scanner() -> Pose {
        Pose::from_center(&nalgebra::Matrix3::identity(), &Vector3::new(0.0, 0.0, 1.25))
    }

    #[test]
    fn seeds_are_distinct_and_stable() {
        let seeds: std::collections::HashSet<u64> = (0..1000).map(|i| query_seed(42, i)).collect();
        assert_eq!(seeds.len(), 1000);
        assert_eq!(query_seed(42, 7), query_seed(42, 7));
        assert_ne!(query_seed(42, 7), query_seed(43, 7));
    }

    #[test]
    fn query_matches_cutout_when_undistorted() {
        let cloud = room_cloud();
        let mut cfg = small(SynthConfig::undistorted());
        cfg.limits = SamplingLimits::zero();
        cfg.limits.max_missing = 1.0;
        let q = synthesize_query(&cloud, &scanner(), 0, 1, &cfg).unwrap();
        let slice_cfg = SliceConfig {
            width: 96,
            height: 72,
            ..SliceConfig::default()
        };
        let db = slice_scan(&cloud, &scanner(), &slice_cfg).unwrap();
        // zero limits: yaw 0, pitch 0 is cutout 012
        let cutout = &db.images[12].image;
        assert_eq!(q.record.pose.unwrap(), cutout.pose);
        assert_eq!(q.image.unwrap().raster, cutout.raster);
    }

    #[test]
    fn exact_ground_truth_rerender() {
        let cloud = room_cloud();
        let mut cfg = small(SynthConfig::undistorted());
        cfg.limits.max_missing = 0.5;
        cfg.limits.max_horizontal_offset = 1.0;
        cfg.limits.max_vertical_offset = 0.5;
        for i in 0..5 {
            let q = synthesize_query(&cloud, &scanner(), i, 9, &cfg).unwrap();
            assert_eq!(q.record.status, QueryStatus::Ok);
            let pose = q.record.pose.unwrap();
            let raw = render(&cloud, &pose, &cfg.intrinsics().unwrap(), &cfg.render).unwrap();
            assert_eq!(raw.missing_fraction, q.record.missing_fraction.unwrap());
            assert!(raw.missing_fraction <= 0.5);
            let again = fill_holes(&raw, &cfg.render).unwrap();
            assert_eq!(again.raster, q.image.unwrap().raster);
            assert_eq!(translation_error(&pose, &again.pose), 0.0);
            assert_eq!(rotation_error(&pose, &again.pose), 0.0);
        }
    }

    #[test]
    fn gate_failure_records_skip() {
        // a lone point can never fill the frame
        let mut cloud = PointCloud::new("lone");
        cloud.push([3.0, 0.0, 0.0], [1, 2, 3]);
        let mut cfg = small(SynthConfig::default());
        cfg.limits.max_attempts_per_query = 4;
        let q = synthesize_query(&cloud, &Pose::identity(), 3, 5, &cfg).unwrap();
        assert_eq!(q.record.status, QueryStatus::Skipped);
        assert_eq!(q.record.attempts, 4);
        assert_eq!(q.record.seed, query_seed(5, 3));
        assert!(q.image.is_none() && q.record.pose.is_none());
    }

    #[test]
    fn distortions_are_recorded() {
        let cloud = sphere_shell("ball", [0.0, 0.0, 1.0], 6.0, 40_000, 1);
        let mut cfg = small(SynthConfig::default());
        cfg.occlusion_probability = 1.0;
        cfg.noise_sigma = 3.0;
        let q = synthesize_query(&cloud, &Pose::identity(), 0, 77, &cfg).unwrap();
        let occ = q.record.occlusion.expect("occluded");
        assert!((0.01..=0.5).contains(&occ.fraction));
        assert!(q.record.flashlight.enabled);
        assert_eq!(q.record.noise_sigma, 3.0);
        let again = synthesize_query(&cloud, &Pose::identity(), 0, 77, &cfg).unwrap();
        assert_eq!(again.record, q.record);
        assert_eq!(again.image.unwrap().raster, q.image.unwrap().raster);
    }

    #[test]
    fn flashlight_darkens_distant_views() {
        let cloud = sphere_shell("ball", [0.0; 3], 9.0, 40_000, 4);
        let mut cfg = small(SynthConfig::undistorted());
        cfg.limits = SamplingLimits::zero();
        cfg.limits.max_missing = 1.0;
        let plain = synthesize_query(&cloud, &Pose::identity(), 0, 0, &cfg).unwrap().image.unwrap();
        cfg.flashlight.enabled = true;
        let lit = synthesize_query(&cloud, &Pose::identity(), 0, 0, &cfg).unwrap().image.unwrap();
        // every point is 9 m away: factor 4 / (1 + 9) = 0.4
        for (a, b) in plain.raster.rgb.iter().zip(&lit.raster.rgb) {
            let expected = (*a as f64 * 0.4).round() as u8;
            assert!(b.abs_diff(expected) <= 1, "{a} -> {b}");
        }
    }

    #[test]
    fn run_over_registry() {
        let dir = tempfile::tempdir().unwrap();
        let mut entries = Vec::new();
        for (k, c) in [[0.0, 0.0, 1.0], [30.0, 0.0, 1.0]].iter().enumerate() {
            let id = format!("s{k}");
            let cloud = sphere_shell(&id, *c, 6.0, 30_000, k as u64);
            let path = dir.path().join(format!("{id}.ply"));
            save_ply(&cloud, &path).unwrap();
            entries.push(ScanEntry {
                scan_id: id,
                cloud_path: path,
                scanner_pose: Pose::from_center(&nalgebra::Matrix3::identity(), &Vector3::from(*c)),
            });
        }
        let registry = ScanRegistry { entries };
        let layout = DatasetLayout::new(dir.path().join("out"));
        let cfg = small(SynthConfig::default());
        let summary = synthesize_queries(&registry, 5, &cfg, 123, &layout).unwrap();
        assert_eq!(summary.manifest.len(), 5);
        assert_eq!(summary.written + summary.skipped, 5);
        let ids: Vec<_> = summary.manifest.records.iter().map(|r| r.query_id.as_str()).collect();
        assert_eq!(ids, ["q000", "q001", "q002", "q003", "q004"]);
        let scans: Vec<_> = summary.manifest.records.iter().map(|r| r.scan_id.as_str()).collect();
        assert_eq!(scans, ["s0", "s1", "s0", "s1", "s0"]);
        let loaded = QueryManifest::load(layout.manifest_path()).unwrap();
        assert_eq!(loaded, summary.manifest);
        loaded.validate_against(&registry).unwrap();
        for r in loaded.ok_records() {
            let img = read_rgbd(layout.queries_dir(), &r.query_id).unwrap();
            assert_eq!(img.pose, r.pose.unwrap());
        }
        assert!(synthesize_queries(&registry, 0, &cfg, 1, &layout).is_err());
        let empty = ScanRegistry { entries: vec![] };
        assert!(synthesize_queries(&empty, 3, &cfg, 1, &layout).is_err());
    }
}
