#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use nalgebra::{Matrix3, Vector3};
use sha2::{Digest, Sha256};

use scanloc_core::io::{save_ply, ScanEntry, ScanRegistry};
use scanloc_core::scene::sphere_shell;
use scanloc_core::Pose;

/// Runs the `scanloc` binary.
pub fn scanloc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_scanloc"))
        .args(args)
        .env("TBPOS_LOG", "error")
        .output()
        .expect("cannot start scanloc")
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

pub fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Writes one sphere cloud and a registry whose scans all share it,
/// scanners spread a few centimetres apart around the sphere center.
pub fn sphere_registry(dir: &Path, scans: usize, points: usize, radius: f64) -> PathBuf {
    let cloud = sphere_shell("shared", [0.0, 0.0, 0.0], radius, points, 7);
    let ply = dir.join("sphere.ply");
    save_ply(&cloud, &ply).unwrap();
    let entries = (0..scans)
        .map(|i| {
            let offset = Vector3::new((i % 14) as f64 * 0.05, (i / 14) as f64 * 0.05, 0.0);
            ScanEntry {
                scan_id: format!("s{i}"),
                cloud_path: ply.clone(),
                scanner_pose: Pose::from_center(&Matrix3::identity(), &offset),
            }
        })
        .collect();
    let path = dir.join("registry.tsv");
    ScanRegistry { entries }.save(&path).unwrap();
    path
}

/// SHA-256 over every file below `root`, keyed by relative path.
pub fn tree_digest(root: &Path) -> String {
    let mut files = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                files.push(p);
            }
        }
    }
    files.sort();
    let mut h = Sha256::new();
    for f in files {
        h.update(f.strip_prefix(root).unwrap().to_string_lossy().as_bytes());
        h.update([0]);
        h.update(std::fs::read(&f).unwrap());
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

pub fn count_files(dir: &Path, suffix: &str) -> usize {
    std::fs::read_dir(dir)
        .map(|d| {
            d.filter(|e| e.as_ref().unwrap().file_name().to_string_lossy().ends_with(suffix))
                .count()
        })
        .unwrap_or(0)
}
