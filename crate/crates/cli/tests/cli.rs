mod common;

use common::*;
use scanloc_core::io::{estimates_to_text, Estimate, QueryManifest};

const SMALL: [&str; 4] = ["--set", "slice.width=64", "--set", "slice.height=48"];
const SMALL_QUERIES: [&str; 4] = ["--set", "query.width=64", "--set", "query.height=48"];

fn slice(reg: &str, out: &str, extra: &[&str]) -> std::process::Output {
    let mut args = vec!["slice-db", "--registry", reg, "--out", out];
    args.extend(SMALL);
    args.extend(extra);
    scanloc(&args)
}

fn synth(reg: &str, out: &str, n: &str, extra: &[&str]) -> std::process::Output {
    let mut args = vec!["synth-queries", "--registry", reg, "--out", out, "-n", n];
    if !extra.contains(&"--seed") {
        args.extend(["--seed", "42"]);
    }
    args.extend(SMALL_QUERIES);
    args.extend(extra);
    scanloc(&args)
}

#[test]
fn slice_db_writes_every_cutout_and_guards_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let reg = sphere_registry(dir.path(), 2, 20_000, 5.0);
    let out = dir.path().join("ds");
    let o = slice(path_str(&reg), path_str(&out), &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("72 database images from 2 scans"), "{}", stdout(&o));
    for s in ["s0", "s1"] {
        let d = out.join("database").join(s);
        assert_eq!(count_files(&d, ".rgb.png"), 36);
        assert_eq!(count_files(&d, ".depth.png"), 36);
        assert_eq!(count_files(&d, ".pose.txt"), 36);
    }
    let echo = std::fs::read_to_string(out.join("slice-db.config.txt")).unwrap();
    assert!(echo.contains("slice.width = 64"));

    let again = slice(path_str(&reg), path_str(&out), &[]);
    assert_eq!(again.status.code(), Some(3), "{}", stderr(&again));
    let forced = slice(path_str(&reg), path_str(&out), &["--force"]);
    assert!(forced.status.success(), "{}", stderr(&forced));

    let stats = scanloc(&["stats", path_str(&out)]);
    let text = stdout(&stats);
    let row: Vec<&str> = text.lines().nth(1).unwrap().split_whitespace().collect();
    assert_eq!(row[1..], ["2", "72", "n/a"]);
}

#[test]
fn empty_registry_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let reg = dir.path().join("registry.tsv");
    std::fs::write(&reg, "# nothing\n").unwrap();
    let o = slice(path_str(&reg), path_str(&dir.path().join("ds")), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("no scans"), "{}", stderr(&o));
    let missing = slice(path_str(&dir.path().join("absent.tsv")), path_str(dir.path()), &[]);
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn synth_queries_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let reg = sphere_registry(dir.path(), 2, 20_000, 5.0);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let o = synth(path_str(&reg), path_str(&a), "10", &["--workers", "1"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("10 queries: 10 written"), "{}", stdout(&o));
    assert_eq!(count_files(&a.join("queries"), ".rgb.png"), 10);
    let manifest = QueryManifest::load(a.join("manifest.txt")).unwrap();
    assert_eq!(manifest.len(), 10);
    assert_eq!(manifest.records[3].scan_id, "s1");

    let o = synth(path_str(&reg), path_str(&b), "10", &["--workers", "3"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(tree_digest(&a.join("queries")), tree_digest(&b.join("queries")));
    assert_eq!(
        std::fs::read(a.join("manifest.txt")).unwrap(),
        std::fs::read(b.join("manifest.txt")).unwrap()
    );

    let c = dir.path().join("c");
    let o = synth(path_str(&reg), path_str(&c), "10", &["--seed", "43"]);
    assert!(o.status.success());
    assert_ne!(tree_digest(&a.join("queries")), tree_digest(&c.join("queries")));

    let zero = synth(path_str(&reg), path_str(&dir.path().join("d")), "0", &[]);
    assert_eq!(zero.status.code(), Some(2));
}

#[test]
fn evaluate_scores_ground_truth_and_retrieval() {
    let dir = tempfile::tempdir().unwrap();
    let reg = sphere_registry(dir.path(), 2, 20_000, 5.0);
    let ds = dir.path().join("ds");
    assert!(synth(path_str(&reg), path_str(&ds), "6", &[]).status.success());
    let manifest_path = ds.join("manifest.txt");
    let manifest = QueryManifest::load(&manifest_path).unwrap();
    let estimates: Vec<Estimate> = manifest
        .ok_records()
        .map(|r| Estimate {
            query_id: r.query_id.clone(),
            pose: r.pose,
        })
        .collect();
    let est_path = dir.path().join("est.txt");
    std::fs::write(&est_path, estimates_to_text(&estimates)).unwrap();
    let cand_path = dir.path().join("cand.txt");
    let cands: String = manifest
        .ok_records()
        .map(|r| format!("{} {}_000 s9_001\n", r.query_id, r.scan_id))
        .collect();
    std::fs::write(&cand_path, cands).unwrap();

    let run = |extra: &[&str]| {
        let mut args = vec![
            "evaluate",
            "--manifest",
            path_str(&manifest_path),
            "--estimates",
            path_str(&est_path),
            "--candidates",
            path_str(&cand_path),
        ];
        args.extend(extra);
        scanloc(&args)
    };
    let o = run(&[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let table = stdout(&o);
    assert!(table.contains("Top10"), "{table}");
    assert_eq!(table.lines().nth(1).unwrap().matches("100.0%").count(), 4, "{table}");
    for f in ["eval_report.txt", "eval_summary.txt", "eval_queries.csv", "evaluate.config.txt"] {
        assert!(dir.path().join(f).is_file(), "{f}");
    }
    let csv = std::fs::read_to_string(dir.path().join("eval_queries.csv")).unwrap();
    assert!(csv.starts_with("query_id,t_err_m,r_err_deg,pass_0.25,pass_0.5,pass_1.0\n"));
    assert_eq!(run(&[]).status.code(), Some(3));
    assert!(run(&["--force", "--set", "eval.top_k=1"]).status.success());

    std::fs::write(&est_path, "q000 FAILED\nq001 1 0 0\n").unwrap();
    let bad = run(&["--force"]);
    assert_eq!(bad.status.code(), Some(2));
    assert!(stderr(&bad).contains("line 2"), "{}", stderr(&bad));
}

#[test]
fn stats_on_empty_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let o = scanloc(&["stats", path_str(dir.path())]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.starts_with("dataset"));
    let row: Vec<&str> = text.lines().nth(1).unwrap().split_whitespace().collect();
    assert_eq!(row[1..], ["0", "0", "n/a"]);
}

#[test]
fn help_and_bad_configuration() {
    for cmd in ["slice-db", "synth-queries", "evaluate", "stats"] {
        let o = scanloc(&[cmd, "--help"]);
        assert!(o.status.success(), "{cmd}");
        assert!(stdout(&o).contains("Usage"), "{cmd}");
    }
    let dir = tempfile::tempdir().unwrap();
    let o = scanloc(&["stats", path_str(dir.path()), "--set", "colour=red"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("colour"));
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "seed = x\n").unwrap();
    let o = scanloc(&["stats", path_str(dir.path()), "--config", path_str(&cfg)]);
    assert_eq!(o.status.code(), Some(2));
}
