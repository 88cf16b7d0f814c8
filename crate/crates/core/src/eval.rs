//! Scoring of localizer output against query ground truth.

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::geom::{rotation_error, translation_error};
use crate::io::{Candidates, Estimate, QueryManifest};

#[derive(Debug, Clone, PartialEq)]
pub struct EvalThresholds {
    /// Position thresholds in metres, strictly increasing.
    pub translation: Vec<f64>,
    /// Orientation threshold in degrees, shared by every position threshold.
    pub rotation_deg: f64,
}

impl Default for EvalThresholds {
    fn default() -> Self {
        EvalThresholds {
            translation: vec![0.25, 0.5, 1.0],
            rotation_deg: 10.0,
        }
    }
}

impl EvalThresholds {
    pub fn validate(&self) -> Result<()> {
        if self.translation.is_empty() {
            return Err(Error::invalid("at least one translation threshold is required"));
        }
        if !self.translation.iter().all(|t| t.is_finite() && *t > 0.0) {
            return Err(Error::invalid("translation thresholds must be positive"));
        }
        if self.translation.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("translation thresholds must be strictly increasing"));
        }
        if !(self.rotation_deg.is_finite() && self.rotation_deg > 0.0) {
            return Err(Error::invalid("rotation threshold must be positive"));
        }
        Ok(())
    }
}

/// Threshold rendered for labels: `0.25`, `0.5`, `1.0`.
pub fn threshold_label(t: f64) -> String {
    if t.fract() == 0.0 {
        format!("{t:.1}")
    } else {
        format!("{t}")
    }
}

/// `count / total` as a percentage rounded half-up to one decimal, computed
/// in integers so ties round the same way on every platform.
pub fn percent_1dp(count: usize, total: usize) -> String {
    if total == 0 {
        return "n/a".to_string();
    }
    let (c, n) = (count as u128, total as u128);
    let tenths = (2000 * c + n) / (2 * n);
    format!("{}.{}%", tenths / 10, tenths % 10)
}

/// Errors and pass flags of one query; errors are `None` when the
/// localizer failed or gave no estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryRow {
    pub query_id: String,
    pub translation_error: Option<f64>,
    pub rotation_error: Option<f64>,
    pub passes: Vec<bool>,
}

/// Means and medians of the errors among successes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrecisionStats {
    pub count: usize,
    pub mean_translation: f64,
    pub mean_rotation: f64,
    pub median_translation: f64,
    pub median_rotation: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetrievalStats {
    pub k: usize,
    pub hits: usize,
    pub total: usize,
}

impl RetrievalStats {
    pub fn rate(&self) -> f64 {
        self.hits as f64 / self.total as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub n_queries: usize,
    pub thresholds: EvalThresholds,
    /// Successes per translation threshold.
    pub success_counts: Vec<usize>,
    /// Queries with a `FAILED` line or no line at all.
    pub failed_or_missing: usize,
    /// Statistics over successes at the tightest threshold; `None` when there are none.
    pub precision: Option<PrecisionStats>,
    pub retrieval: Option<RetrievalStats>,
    pub rows: Vec<QueryRow>,
}

impl EvalReport {
    pub fn success_rate(&self, i: usize) -> f64 {
        self.success_counts[i] as f64 / self.n_queries as f64
    }

    pub fn to_table(&self) -> String {
        let rot = self.thresholds.rotation_deg;
        let mut headers: Vec<String> = self
            .thresholds
            .translation
            .iter()
            .map(|t| format!("{}m/{}°", threshold_label(*t), rot))
            .collect();
        let mut rates: Vec<String> = self
            .success_counts
            .iter()
            .map(|c| percent_1dp(*c, self.n_queries))
            .collect();
        let mut counts: Vec<String> = self
            .success_counts
            .iter()
            .map(|c| format!("{c}/{}", self.n_queries))
            .collect();
        if let Some(r) = &self.retrieval {
            headers.push(format!("Top{}", r.k));
            rates.push(percent_1dp(r.hits, r.total));
            counts.push(format!("{}/{}", r.hits, r.total));
        }
        let width = headers
            .iter()
            .chain(&rates)
            .chain(&counts)
            .map(|s| s.chars().count())
            .max()
            .unwrap_or(0)
            + 2;
        let mut s = String::new();
        let mut row = |label: &str, cells: &[String]| {
            let _ = write!(s, "{label:<10}");
            for c in cells {
                let pad = width - c.chars().count();
                let _ = write!(s, "{}{c}", " ".repeat(pad));
            }
            s.push('\n');
        };
        row("", &headers);
        row("success", &rates);
        row("count", &counts);
        let _ = writeln!(s, "queries: {}, failed or missing: {}", self.n_queries, self.failed_or_missing);
        let tight = threshold_label(self.thresholds.translation[0]);
        match &self.precision {
            Some(p) => {
                let _ = writeln!(
                    s,
                    "successes at {tight} m / {rot}°: mean deviation {:.3} m, {:.2}°; median {:.3} m, {:.2}°",
                    p.mean_translation, p.mean_rotation, p.median_translation, p.median_rotation
                );
            }
            None => {
                let _ = writeln!(s, "successes at {tight} m / {rot}°: none");
            }
        }
        s
    }

    /// `key = value` lines with full-precision numbers.
    pub fn to_key_values(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "n_queries = {}", self.n_queries);
        let _ = writeln!(s, "rotation_threshold_deg = {}", self.thresholds.rotation_deg);
        for (i, t) in self.thresholds.translation.iter().enumerate() {
            let l = threshold_label(*t);
            let _ = writeln!(s, "success_count_{l} = {}", self.success_counts[i]);
            let _ = writeln!(s, "success_rate_{l} = {:?}", self.success_rate(i));
        }
        let _ = writeln!(s, "failed_or_missing = {}", self.failed_or_missing);
        match &self.precision {
            Some(p) => {
                let _ = writeln!(s, "precision_count = {}", p.count);
                let _ = writeln!(s, "mean_translation_error_m = {:?}", p.mean_translation);
                let _ = writeln!(s, "mean_rotation_error_deg = {:?}", p.mean_rotation);
                let _ = writeln!(s, "median_translation_error_m = {:?}", p.median_translation);
                let _ = writeln!(s, "median_rotation_error_deg = {:?}", p.median_rotation);
            }
            None => {
                let _ = writeln!(s, "precision_count = 0");
            }
        }
        if let Some(r) = &self.retrieval {
            let _ = writeln!(s, "retrieval_k = {}", r.k);
            let _ = writeln!(s, "retrieval_hits = {}", r.hits);
            let _ = writeln!(s, "retrieval_rate = {:?}", r.rate());
        }
        s
    }

    /// Per-query CSV; errors are empty for failed or missing estimates.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("query_id,t_err_m,r_err_deg");
        for t in &self.thresholds.translation {
            let _ = write!(s, ",pass_{}", threshold_label(*t));
        }
        s.push('\n');
        let opt = |v: Option<f64>| v.map(|x| format!("{x:?}")).unwrap_or_default();
        for r in &self.rows {
            let _ = write!(s, "{},{},{}", r.query_id, opt(r.translation_error), opt(r.rotation_error));
            for p in &r.passes {
                s.push_str(if *p { ",1" } else { ",0" });
            }
            s.push('\n');
        }
        s
    }
}

/// Scores estimates against the manifest. A query passes a position
/// threshold when both its translation and rotation errors are within the
/// limits (inclusive). Queries without an estimate count as failures.
pub fn evaluate_poses(
    manifest: &QueryManifest,
    estimates: &[Estimate],
    thresholds: &EvalThresholds,
) -> Result<EvalReport> {
    thresholds.validate()?;
    let gt: Vec<_> = manifest.ok_records().collect();
    if gt.is_empty() {
        return Err(Error::invalid("the manifest has no synthesized queries to score"));
    }
    let known: HashSet<&str> = gt.iter().map(|r| r.query_id.as_str()).collect();
    let mut by_id = HashMap::new();
    for e in estimates {
        if !known.contains(e.query_id.as_str()) {
            return Err(Error::validation(format!(
                "estimate for unknown query `{}`",
                e.query_id
            )));
        }
        if by_id.insert(e.query_id.as_str(), e).is_some() {
            return Err(Error::validation(format!("duplicate estimate for `{}`", e.query_id)));
        }
    }

    let n_thr = thresholds.translation.len();
    let mut report = EvalReport {
        n_queries: gt.len(),
        thresholds: thresholds.clone(),
        success_counts: vec![0; n_thr],
        failed_or_missing: 0,
        precision: None,
        retrieval: None,
        rows: Vec::with_capacity(gt.len()),
    };
    for rec in gt {
        let gt_pose = rec.pose.as_ref().expect("ok records carry a pose");
        let est = by_id.get(rec.query_id.as_str()).and_then(|e| e.pose.as_ref());
        let row = match est {
            None => {
                report.failed_or_missing += 1;
                QueryRow {
                    query_id: rec.query_id.clone(),
                    translation_error: None,
                    rotation_error: None,
                    passes: vec![false; n_thr],
                }
            }
            Some(p) => {
                let t = translation_error(gt_pose, p);
                let r = rotation_error(gt_pose, p);
                let rot_ok = r <= thresholds.rotation_deg;
                QueryRow {
                    query_id: rec.query_id.clone(),
                    translation_error: Some(t),
                    rotation_error: Some(r),
                    passes: thresholds.translation.iter().map(|&tau| rot_ok && t <= tau).collect(),
                }
            }
        };
        for (c, p) in report.success_counts.iter_mut().zip(&row.passes) {
            *c += *p as usize;
        }
        report.rows.push(row);
    }
    report.precision = precision_stats(&report.rows, thresholds.translation[0], thresholds.rotation_deg);
    Ok(report)
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Error statistics over the rows within both thresholds, or `None` when
/// no row qualifies.
pub fn precision_stats(rows: &[QueryRow], max_translation: f64, max_rotation_deg: f64) -> Option<PrecisionStats> {
    let (mut ts, mut rs): (Vec<f64>, Vec<f64>) = rows
        .iter()
        .filter_map(|r| Some((r.translation_error?, r.rotation_error?)))
        .filter(|(t, r)| *t <= max_translation && *r <= max_rotation_deg)
        .unzip();
    if ts.is_empty() {
        return None;
    }
    let n = ts.len() as f64;
    Some(PrecisionStats {
        count: ts.len(),
        mean_translation: ts.iter().sum::<f64>() / n,
        mean_rotation: rs.iter().sum::<f64>() / n,
        median_translation: median(&mut ts),
        median_rotation: median(&mut rs),
    })
}

/// Share of manifest queries whose first `k` candidates include an image
/// from the query's own scan. Queries without candidates are misses.
pub fn retrieval_success(manifest: &QueryManifest, candidates: &[Candidates], k: usize) -> Result<RetrievalStats> {
    if k == 0 {
        return Err(Error::invalid("k must be at least 1"));
    }
    let by_id: HashMap<&str, &Candidates> = candidates.iter().map(|c| (c.query_id.as_str(), c)).collect();
    let mut total = 0;
    let mut hits = 0;
    for rec in manifest.ok_records() {
        total += 1;
        if let Some(c) = by_id.get(rec.query_id.as_str()) {
            if c.top_scans(k).any(|s| s == rec.scan_id) {
                hits += 1;
            }
        }
    }
    if total == 0 {
        return Err(Error::invalid("the manifest has no synthesized queries to score"));
    }
    if let Some(c) = candidates.iter().find(|c| manifest.get(&c.query_id).is_none_or(|r| !r.is_ok())) {
        return Err(Error::validation(format!("candidates for unknown query `{}`", c.query_id)));
    }
    Ok(RetrievalStats { k, hits, total })
}
