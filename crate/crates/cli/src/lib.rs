//! The `scanloc` command line: slice scans into database cutouts,
//! synthesize queries, score estimates, and count dataset contents.

pub mod config;

use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::warn;

use scanloc_core::eval::{evaluate_poses, retrieval_success};
use scanloc_core::io::{
    load_ply, load_scan_registry, read_candidates, read_estimates, write_rgbd, DatasetLayout, QueryManifest,
    RGB_SUFFIX,
};
use scanloc_core::slicer::slice_scan_with;
use scanloc_core::synth::synthesize_queries;

pub use config::RunConfig;

#[derive(Debug, Parser)]
#[command(name = "scanloc", version, about = "Build and score visual-localization benchmarks from colored laser scans")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Configuration file of `key = value` lines
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Master seed for query synthesis
    #[arg(long, global = true, value_name = "U64")]
    pub seed: Option<u64>,
    /// Worker threads (default: available parallelism); never changes outputs
    #[arg(long, global = true, value_name = "N")]
    pub workers: Option<usize>,
    /// Replace existing outputs instead of refusing
    #[arg(long, global = true)]
    pub force: bool,
    /// Override one configuration key, e.g. `--set noise.sigma=2`
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render the database cutouts of every scan in a registry
    SliceDb {
        /// Scan registry (tab-separated: scan_id, cloud path, pose)
        #[arg(long, value_name = "PATH")]
        registry: Option<PathBuf>,
        /// Dataset root; images go to `<out>/database/<scan_id>/`
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
    },
    /// Synthesize query images with exact ground-truth poses
    SynthQueries {
        #[arg(long, value_name = "PATH")]
        registry: Option<PathBuf>,
        /// Dataset root; images go to `<out>/queries/`, the manifest to `<out>/manifest.txt`
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
        /// Number of queries
        #[arg(short = 'n', long, value_name = "N")]
        count: Option<usize>,
    },
    /// Score pose estimates (and optionally retrieval candidates) against a manifest
    Evaluate {
        #[arg(long, value_name = "PATH")]
        manifest: Option<PathBuf>,
        /// One line per query: id and 12 numbers of [R|t], or `FAILED`
        #[arg(long, value_name = "PATH")]
        estimates: Option<PathBuf>,
        /// One line per query: id and ranked database image ids
        #[arg(long, value_name = "PATH")]
        candidates: Option<PathBuf>,
        /// Directory for the report files (default: next to the estimates)
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
    },
    /// Count locations, database images and queries of a dataset
    Stats {
        /// Dataset root
        #[arg(value_name = "DIR")]
        dataset: Option<PathBuf>,
    },
}

/// Failure of a command, carrying its exit status.
#[derive(Debug)]
pub enum CliError {
    /// Bad arguments or unreadable, malformed inputs (status 2).
    Input(String),
    /// Outputs exist and `--force` was not given (status 3).
    Refused(String),
    /// Everything else (status 4).
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(match self {
            CliError::Input(_) => 2,
            CliError::Refused(_) => 3,
            CliError::Internal(_) => 4,
        })
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Input(m) => write!(f, "input error: {m}"),
            CliError::Refused(m) => write!(f, "refusing to overwrite: {m}"),
            CliError::Internal(m) => write!(f, "error: {m}"),
        }
    }
}

impl From<scanloc_core::Error> for CliError {
    fn from(e: scanloc_core::Error) -> Self {
        if e.is_input_error() {
            CliError::Input(e.to_string())
        } else {
            CliError::Internal(e.to_string())
        }
    }
}

/// Errors while reading inputs are the user's to fix, whatever their kind.
fn input(e: scanloc_core::Error) -> CliError {
    CliError::Input(e.to_string())
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Internal(format!("{}: {e}", path.display()))
}

/// File-config, then `--seed`/`--workers`, then `--set` overrides.
pub fn resolve_config(global: &GlobalArgs) -> Result<RunConfig, CliError> {
    let mut cfg = match &global.config {
        Some(p) => RunConfig::load(p).map_err(CliError::Input)?,
        None => RunConfig::default(),
    };
    if let Some(s) = global.seed {
        cfg.seed = s;
    }
    if let Some(w) = global.workers {
        cfg.workers = Some(w);
    }
    for kv in &global.overrides {
        cfg.apply_override(kv).map_err(CliError::Input)?;
    }
    if cfg.workers == Some(0) {
        return Err(CliError::Input("--workers must be at least 1".into()));
    }
    Ok(cfg)
}

fn required(v: Option<PathBuf>, from_cfg: &Option<PathBuf>, name: &str) -> Result<PathBuf, CliError> {
    v.or_else(|| from_cfg.clone())
        .ok_or_else(|| CliError::Input(format!("missing --{name} (or `{name}` in the config)")))
}

fn non_empty_dir(p: &Path) -> bool {
    std::fs::read_dir(p).map(|mut d| d.next().is_some()).unwrap_or(false)
}

/// Refuses when any of `paths` exists, unless forced, in which case they are removed.
fn claim_outputs(paths: &[PathBuf], force: bool) -> Result<(), CliError> {
    let existing: Vec<&PathBuf> = paths
        .iter()
        .filter(|p| p.is_file() || non_empty_dir(p))
        .collect();
    if existing.is_empty() {
        return Ok(());
    }
    if !force {
        let list: Vec<String> = existing.iter().map(|p| p.display().to_string()).collect();
        return Err(CliError::Refused(format!("{} exists (use --force)", list.join(", "))));
    }
    for p in existing {
        let r = if p.is_dir() {
            std::fs::remove_dir_all(p)
        } else {
            std::fs::remove_file(p)
        };
        r.map_err(|e| io_err(p, e))?;
    }
    Ok(())
}

fn echo_config(cfg: &RunConfig, dir: &Path, command: &str) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let path = dir.join(format!("{command}.config.txt"));
    std::fs::write(&path, cfg.to_text()).map_err(|e| io_err(&path, e))
}

/// Runs a parsed command line on a pool of the configured size.
pub fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = resolve_config(&cli.global)?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(w) = cfg.workers {
        pool = pool.num_threads(w);
    }
    let pool = pool
        .build()
        .map_err(|e| CliError::Internal(format!("cannot start worker pool: {e}")))?;
    let force = cli.global.force;
    pool.install(|| match cli.command {
        Command::SliceDb { registry, out } => cmd_slice_db(cfg, registry, out, force),
        Command::SynthQueries { registry, out, count } => cmd_synth_queries(cfg, registry, out, count, force),
        Command::Evaluate {
            manifest,
            estimates,
            candidates,
            out,
        } => cmd_evaluate(cfg, manifest, estimates, candidates, out, force),
        Command::Stats { dataset } => cmd_stats(cfg, dataset),
    })
}

pub fn cmd_slice_db(
    mut cfg: RunConfig,
    registry: Option<PathBuf>,
    out: Option<PathBuf>,
    force: bool,
) -> Result<(), CliError> {
    let registry_path = required(registry, &cfg.registry, "registry")?;
    let out = required(out, &cfg.out, "out")?;
    cfg.registry = Some(registry_path.clone());
    cfg.out = Some(out.clone());
    cfg.slice.validate().map_err(input)?;
    let registry = load_scan_registry(&registry_path).map_err(input)?;
    if registry.is_empty() {
        return Err(CliError::Input(format!("{}: registry lists no scans", registry_path.display())));
    }
    let layout = DatasetLayout::new(&out);
    claim_outputs(&[layout.database_dir()], force)?;
    echo_config(&cfg, &out, "slice-db")?;

    let mut total = 0;
    for entry in &registry.entries {
        let mut cloud = load_ply(&entry.cloud_path).map_err(input)?;
        cloud.scan_id = entry.scan_id.clone();
        let dir = layout.scan_dir(&entry.scan_id);
        std::fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
        let saturated = std::sync::atomic::AtomicUsize::new(0);
        let summary = slice_scan_with(&cloud, &entry.scanner_pose, &cfg.slice, |s| {
            let report = write_rgbd(&s.image, &dir)?;
            saturated.fetch_add(report.saturated, std::sync::atomic::Ordering::Relaxed);
            Ok(())
        })?;
        let saturated = saturated.into_inner();
        if saturated > 0 {
            warn!("scan {}: {saturated} depth pixels saturated at 65.535 m", entry.scan_id);
        }
        let mean = summary
            .mean_missing()
            .map_or_else(|| "n/a".to_string(), |m| format!("{m:.4}"));
        println!(
            "{}: {} cutouts written, {} skipped, mean missing fraction {mean}",
            entry.scan_id,
            summary.written,
            summary.skipped.len()
        );
        total += summary.written;
    }
    println!("{} database images from {} scans", total, registry.len());
    Ok(())
}

pub fn cmd_synth_queries(
    mut cfg: RunConfig,
    registry: Option<PathBuf>,
    out: Option<PathBuf>,
    count: Option<usize>,
    force: bool,
) -> Result<(), CliError> {
    let registry_path = required(registry, &cfg.registry, "registry")?;
    let out = required(out, &cfg.out, "out")?;
    let n = count
        .or(cfg.count)
        .ok_or_else(|| CliError::Input("missing --count (or `count` in the config)".into()))?;
    if n == 0 {
        return Err(CliError::Input("--count must be at least 1".into()));
    }
    cfg.registry = Some(registry_path.clone());
    cfg.out = Some(out.clone());
    cfg.count = Some(n);
    cfg.synth.validate().map_err(input)?;
    let registry = load_scan_registry(&registry_path).map_err(input)?;
    if registry.is_empty() {
        return Err(CliError::Input(format!("{}: registry lists no scans", registry_path.display())));
    }
    let layout = DatasetLayout::new(&out);
    claim_outputs(&[layout.queries_dir(), layout.manifest_path()], force)?;
    echo_config(&cfg, &out, "synth-queries")?;

    let summary = synthesize_queries(&registry, n, &cfg.synth, cfg.seed, &layout)?;
    if summary.saturated_depth > 0 {
        warn!("{} depth pixels saturated at 65.535 m", summary.saturated_depth);
    }
    let fl = &cfg.synth.flashlight;
    let flashlight = if fl.enabled {
        format!("on (gain {}, half distance {} m)", fl.gain, fl.half_distance)
    } else {
        "off".to_string()
    };
    println!(
        "{n} queries: {} written, {} skipped (quality gate)",
        summary.written, summary.skipped
    );
    println!(
        "distortions: flashlight {flashlight}; occluders on {} queries; noise sigma {}",
        summary.occluded, cfg.synth.noise_sigma
    );
    println!("manifest: {}", layout.manifest_path().display());
    Ok(())
}

pub const REPORT_TABLE: &str = "eval_report.txt";
pub const REPORT_VALUES: &str = "eval_summary.txt";
pub const REPORT_CSV: &str = "eval_queries.csv";

pub fn cmd_evaluate(
    mut cfg: RunConfig,
    manifest: Option<PathBuf>,
    estimates: Option<PathBuf>,
    candidates: Option<PathBuf>,
    out: Option<PathBuf>,
    force: bool,
) -> Result<(), CliError> {
    let manifest_path = required(manifest, &cfg.manifest, "manifest")?;
    let estimates_path = required(estimates, &cfg.estimates, "estimates")?;
    let candidates_path = candidates.or_else(|| cfg.candidates.clone());
    let out = out.or_else(|| cfg.out.clone()).unwrap_or_else(|| {
        estimates_path
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_default()
    });
    cfg.manifest = Some(manifest_path.clone());
    cfg.estimates = Some(estimates_path.clone());
    cfg.candidates = candidates_path.clone();
    cfg.out = Some(out.clone());

    let manifest = QueryManifest::load(&manifest_path).map_err(input)?;
    let estimates = read_estimates(&estimates_path).map_err(input)?;
    let mut report = evaluate_poses(&manifest, &estimates, &cfg.thresholds).map_err(input)?;
    if let Some(p) = &candidates_path {
        let cands = read_candidates(p).map_err(input)?;
        report.retrieval = Some(retrieval_success(&manifest, &cands, cfg.top_k).map_err(input)?);
    }

    let files = [REPORT_TABLE, REPORT_VALUES, REPORT_CSV].map(|f| out.join(f));
    claim_outputs(&files, force)?;
    echo_config(&cfg, &out, "evaluate")?;
    let table = report.to_table();
    for (path, text) in files.iter().zip([table.clone(), report.to_key_values(), report.to_csv()]) {
        std::fs::write(path, text).map_err(|e| io_err(path, e))?;
    }
    print!("{table}");
    Ok(())
}

/// Dataset contents as counted by `stats`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetStats {
    pub locations: usize,
    pub database_images: usize,
    /// `None` when the dataset has no manifest.
    pub queries: Option<usize>,
}

impl DatasetStats {
    pub fn to_row(&self, name: &str) -> String {
        let q = self.queries.map_or_else(|| "n/a".to_string(), |q| q.to_string());
        format!(
            "{:<16}{:>12}{:>12}{:>10}\n{:<16}{:>12}{:>12}{:>10}\n",
            "dataset", "#locations", "#database", "#query", name, self.locations, self.database_images, q
        )
    }
}

pub fn dataset_stats(root: &Path) -> Result<DatasetStats, CliError> {
    let layout = DatasetLayout::new(root);
    let mut locations = 0;
    let mut database_images = 0;
    let db = layout.database_dir();
    if db.is_dir() {
        for entry in std::fs::read_dir(&db).map_err(|e| io_err(&db, e))? {
            let entry = entry.map_err(|e| io_err(&db, e))?;
            if !entry.path().is_dir() {
                continue;
            }
            locations += 1;
            let dir = entry.path();
            for f in std::fs::read_dir(&dir).map_err(|e| io_err(&dir, e))? {
                let f = f.map_err(|e| io_err(&dir, e))?;
                if f.file_name().to_string_lossy().ends_with(RGB_SUFFIX) {
                    database_images += 1;
                }
            }
        }
    }
    let manifest_path = layout.manifest_path();
    let queries = if manifest_path.is_file() {
        Some(QueryManifest::load(&manifest_path).map_err(input)?.ok_records().count())
    } else {
        None
    };
    Ok(DatasetStats {
        locations,
        database_images,
        queries,
    })
}

pub fn cmd_stats(cfg: RunConfig, dataset: Option<PathBuf>) -> Result<(), CliError> {
    let root = required(dataset, &cfg.dataset, "dataset")?;
    if !root.is_dir() {
        return Err(CliError::Input(format!("{} is not a directory", root.display())));
    }
    let stats = dataset_stats(&root)?;
    let name = root
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| root.display().to_string());
    print!("{}", stats.to_row(&name));
    Ok(())
}
