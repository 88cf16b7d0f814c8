use nalgebra::{Rotation3, UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use scanloc_core::eval::{evaluate_poses, EvalThresholds};
use scanloc_core::geom::pose_in_frame;
use scanloc_core::io::{
    load_ply, read_rgbd, save_ply, DatasetLayout, Estimate, FlashlightRecord, ManifestRecord,
    QueryManifest, QueryStatus, ScanEntry, ScanRegistry,
};
use scanloc_core::io::rgbd::depth_to_mm;
use scanloc_core::scene::Room;
use scanloc_core::slicer::{slice_scan, SliceConfig};
use scanloc_core::synth::{synthesize_queries, SynthConfig};
use scanloc_core::{
    fill_holes, intrinsics_from_fov, render, rotation_error, translation_error, unproject, EulerAngles, Pose,
};

fn scanner() -> Pose {
    Pose::from_center(&nalgebra::Matrix3::identity(), &Vector3::new(0.0, 0.0, 1.25))
}

fn room_registry(dir: &std::path::Path, points: usize) -> ScanRegistry {
    let cloud = Room::default().sample("s0", points, 11);
    let path = dir.join("room.ply");
    save_ply(&cloud, &path).unwrap();
    ScanRegistry {
        entries: vec![ScanEntry {
            scan_id: "s0".into(),
            cloud_path: path,
            scanner_pose: scanner(),
        }],
    }
}

#[test]
fn written_queries_rerender_exactly_from_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let registry = room_registry(dir.path(), 200_000);
    let mut cfg = SynthConfig::undistorted();
    cfg.width = 256;
    cfg.height = 192;
    let layout = DatasetLayout::new(dir.path().join("ds"));
    let summary = synthesize_queries(&registry, 4, &cfg, 2024, &layout).unwrap();
    assert_eq!(summary.written, 4);

    let manifest = QueryManifest::load(layout.manifest_path()).unwrap();
    let cloud = load_ply(&registry.entries[0].cloud_path).unwrap();
    for rec in manifest.ok_records() {
        let pose = rec.pose.unwrap();
        let raw = render(&cloud, &pose, &rec.intrinsics.unwrap(), &cfg.render).unwrap();
        let again = fill_holes(&raw, &cfg.render).unwrap().raster;
        let stored = read_rgbd(layout.queries_dir(), &rec.query_id).unwrap();
        assert_eq!(stored.raster.rgb, again.rgb, "{}", rec.query_id);
        for i in 0..again.len() {
            let (mm, _) = depth_to_mm(again.depth[i], again.valid[i]);
            assert_eq!((mm as f64 / 1000.0) as f32, stored.raster.depth[i]);
            assert_eq!(mm > 0, stored.raster.valid[i]);
        }
        assert_eq!(translation_error(&pose, &stored.pose), 0.0);
        assert_eq!(rotation_error(&pose, &stored.pose), 0.0);
    }
}

#[test]
fn unprojected_pixels_reproject_onto_themselves() {
    let cloud = Room::default().sample("s0", 150_000, 3);
    let cfg = SliceConfig {
        width: 200,
        height: 150,
        ..SliceConfig::default()
    };
    let out = slice_scan(&cloud, &scanner(), &cfg).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut checked = 0;
    while checked < 300 {
        let img = &out.images[rng.random_range(0..out.images.len())].image;
        let (u, v) = (rng.random_range(0..img.width()), rng.random_range(0..img.height()));
        let Ok(world) = unproject(img, u, v) else { continue };
        let cam = img.pose.transform(&world);
        let (pu, pv) = img.intrinsics.project(&cam);
        assert!((pu - u as f64).abs() < 0.5 && (pv - v as f64).abs() < 0.5);
        let d = img.raster.depth[img.raster.index(u, v)] as f64;
        assert!((cam.z - d).abs() < 1e-3);
        checked += 1;
    }
}

#[test]
fn ply_round_trip_slices_identically() {
    let dir = tempfile::tempdir().unwrap();
    let cloud = Room::default().sample("s0", 40_000, 8);
    let path = dir.path().join("c.ply");
    save_ply(&cloud, &path).unwrap();
    let mut back = load_ply(&path).unwrap();
    back.scan_id = "s0".into();
    let cfg = SliceConfig {
        width: 64,
        height: 48,
        ..SliceConfig::default()
    };
    let a = slice_scan(&cloud, &scanner(), &cfg).unwrap();
    let b = slice_scan(&back, &scanner(), &cfg).unwrap();
    assert_eq!(a.images.len(), 36);
    for (x, y) in a.images.iter().zip(&b.images) {
        assert_eq!(x.image.raster, y.image.raster);
    }
}

fn random_pose(rng: &mut ChaCha8Rng) -> Pose {
    let pos = Vector3::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0), rng.random_range(0.0..3.0));
    let angles = EulerAngles::new(
        rng.random_range(0.0..360.0),
        rng.random_range(-40.0..40.0),
        rng.random_range(-20.0..20.0),
    );
    pose_in_frame(&Pose::identity(), &pos, &angles).unwrap()
}

fn ok_record(id: String, pose: Pose) -> ManifestRecord {
    ManifestRecord {
        query_id: id,
        scan_id: "s0".into(),
        status: QueryStatus::Ok,
        seed: 0,
        attempts: 1,
        pose: Some(pose),
        intrinsics: Some(intrinsics_from_fov(60.0, 64, 48).unwrap()),
        missing_fraction: Some(0.0),
        flashlight: FlashlightRecord {
            enabled: false,
            gain: 4.0,
            half_distance: 3.0,
        },
        occlusion: None,
        noise_sigma: 0.0,
    }
}

/// Camera center and orientation error recomputed from raw matrix entries.
fn oracle_errors(gt: &Pose, est: &Pose) -> (f64, f64) {
    let center = |p: &Pose| -> [f64; 3] {
        let (r, t) = (p.rotation(), p.translation());
        [0, 1, 2].map(|c| -(r[(0, c)] * t[0] + r[(1, c)] * t[1] + r[(2, c)] * t[2]))
    };
    let (a, b) = (center(gt), center(est));
    let dt = ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt();
    let qa = UnitQuaternion::from_matrix(gt.rotation());
    let qb = UnitQuaternion::from_matrix(est.rotation());
    (dt, qa.angle_to(&qb).to_degrees())
}

#[test]
fn evaluator_agrees_with_independent_recount() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let th = EvalThresholds::default();
    for _ in 0..20 {
        let n = 20;
        let gts: Vec<Pose> = (0..n).map(|_| random_pose(&mut rng)).collect();
        let manifest = QueryManifest {
            records: gts.iter().enumerate().map(|(i, p)| ok_record(format!("q{i:03}"), *p)).collect(),
        };
        let estimates: Vec<Estimate> = gts
            .iter()
            .enumerate()
            .map(|(i, gt)| {
                let c = gt.center() + Vector3::new(rng.random_range(-0.8..0.8), rng.random_range(-0.8..0.8), 0.0);
                let axis = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
                let tilt = Rotation3::from_scaled_axis(axis.normalize() * rng.random_range(0.0..20f64).to_radians());
                let r = (tilt.matrix() * gt.rotation()).transpose();
                let est = if rng.random_bool(0.1) { None } else { Some(Pose::from_center(&r, &c)) };
                Estimate {
                    query_id: format!("q{i:03}"),
                    pose: est,
                }
            })
            .collect();
        let report = evaluate_poses(&manifest, &estimates, &th).unwrap();
        let mut counts = vec![0usize; th.translation.len()];
        for (gt, est) in gts.iter().zip(&estimates) {
            let Some(p) = &est.pose else { continue };
            let (dt, dr) = oracle_errors(gt, p);
            for (k, t) in th.translation.iter().enumerate() {
                if dt <= *t && dr <= th.rotation_deg {
                    counts[k] += 1;
                }
            }
        }
        assert_eq!(report.success_counts, counts);
        assert!(counts[2] > 0 && counts[0] < n);
        for (row, (gt, est)) in report.rows.iter().zip(gts.iter().zip(&estimates)) {
            match &est.pose {
                Some(p) => {
                    let (dt, dr) = oracle_errors(gt, p);
                    assert!((row.translation_error.unwrap() - dt).abs() < 1e-9);
                    assert!((row.rotation_error.unwrap() - dr).abs() < 1e-6);
                }
                None => assert!(row.translation_error.is_none()),
            }
        }
        assert!(report.success_counts.windows(2).all(|w| w[0] <= w[1]));
    }
}
