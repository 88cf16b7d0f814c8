//! Run configuration: `key = value` text, overridable from the command line.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use scanloc_core::eval::EvalThresholds;
use scanloc_core::slicer::SliceConfig;
use scanloc_core::synth::SynthConfig;

/// Every tunable of the toolkit. Keys are listed by [`RunConfig::to_text`].
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    /// Worker threads; `None` uses the available parallelism.
    pub workers: Option<usize>,
    pub count: Option<usize>,
    pub registry: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub manifest: Option<PathBuf>,
    pub estimates: Option<PathBuf>,
    pub candidates: Option<PathBuf>,
    pub dataset: Option<PathBuf>,
    pub slice: SliceConfig,
    /// Render parameters live in `slice.render` and are shared with queries.
    pub synth: SynthConfig,
    pub thresholds: EvalThresholds,
    pub top_k: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            workers: None,
            count: None,
            registry: None,
            out: None,
            manifest: None,
            estimates: None,
            candidates: None,
            dataset: None,
            slice: SliceConfig::default(),
            synth: SynthConfig::default(),
            thresholds: EvalThresholds::default(),
            top_k: 10,
        }
    }
}

fn num<T: FromStr>(key: &str, v: &str) -> Result<T, String> {
    v.parse()
        .map_err(|_| format!("`{key}`: cannot parse `{v}` as a number"))
}

fn list(key: &str, v: &str) -> Result<Vec<f64>, String> {
    v.split(',').map(|x| num(key, x.trim())).collect()
}

fn pair(key: &str, v: &str) -> Result<(f64, f64), String> {
    match list(key, v)?.as_slice() {
        [a, b] => Ok((*a, *b)),
        _ => Err(format!("`{key}` expects two comma-separated numbers")),
    }
}

fn flag(key: &str, v: &str) -> Result<bool, String> {
    match v {
        "true" | "on" | "1" => Ok(true),
        "false" | "off" | "0" => Ok(false),
        _ => Err(format!("`{key}` expects true or false, got `{v}`")),
    }
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(",")
}

impl RunConfig {
    /// Sets one key. Unknown keys are an error.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        let v = value.trim();
        let path = || Some(PathBuf::from(v));
        let s = &mut self.synth;
        match key {
            "seed" => self.seed = num(key, v)?,
            "workers" => self.workers = Some(num(key, v)?),
            "count" => self.count = Some(num(key, v)?),
            "registry" => self.registry = path(),
            "out" => self.out = path(),
            "manifest" => self.manifest = path(),
            "estimates" => self.estimates = path(),
            "candidates" => self.candidates = path(),
            "dataset" => self.dataset = path(),
            "render.z_near" => self.slice.render.z_near = num(key, v)?,
            "render.splat_radius" => self.slice.render.splat_radius = num(key, v)?,
            "render.depth_tie_epsilon" => self.slice.render.depth_tie_epsilon = num(key, v)?,
            "render.max_fill_iterations" => self.slice.render.max_fill_iterations = num(key, v)?,
            "slice.yaw_count" => self.slice.yaw_count = num(key, v)?,
            "slice.yaw_stride" => self.slice.yaw_stride = num(key, v)?,
            "slice.pitch_ring" => self.slice.pitch_ring = list(key, v)?,
            "slice.hfov" => self.slice.hfov = num(key, v)?,
            "slice.width" => self.slice.width = num(key, v)?,
            "slice.height" => self.slice.height = num(key, v)?,
            "query.hfov" => s.hfov = num(key, v)?,
            "query.width" => s.width = num(key, v)?,
            "query.height" => s.height = num(key, v)?,
            "sampling.max_horizontal_offset" => s.limits.max_horizontal_offset = num(key, v)?,
            "sampling.max_vertical_offset" => s.limits.max_vertical_offset = num(key, v)?,
            "sampling.yaw_range" => s.limits.yaw_range = pair(key, v)?,
            "sampling.pitch_range" => s.limits.pitch_range = pair(key, v)?,
            "sampling.roll_range" => s.limits.roll_range = pair(key, v)?,
            "sampling.max_missing" => s.limits.max_missing = num(key, v)?,
            "sampling.max_attempts" => s.limits.max_attempts_per_query = num(key, v)?,
            "flashlight.enabled" => s.flashlight.enabled = flag(key, v)?,
            "flashlight.gain" => s.flashlight.gain = num(key, v)?,
            "flashlight.half_distance" => s.flashlight.half_distance = num(key, v)?,
            "occlusion.probability" => s.occlusion_probability = num(key, v)?,
            "noise.sigma" => s.noise_sigma = num(key, v)?,
            "eval.translation_thresholds" => self.thresholds.translation = list(key, v)?,
            "eval.rotation_threshold" => self.thresholds.rotation_deg = num(key, v)?,
            "eval.top_k" => self.top_k = num(key, v)?,
            _ => return Err(format!("unknown configuration key `{key}`")),
        }
        self.synth.render = self.slice.render;
        Ok(())
    }

    /// Applies `key = value` lines; `#` starts a comment line.
    pub fn apply_text(&mut self, text: &str) -> Result<(), String> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| format!("line {}: expected `key = value`", n + 1))?;
            self.set(k.trim(), v).map_err(|e| format!("line {}: {e}", n + 1))?;
        }
        Ok(())
    }

    /// Applies a `key=value` override from the command line.
    pub fn apply_override(&mut self, kv: &str) -> Result<(), String> {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| format!("override `{kv}` is not of the form key=value"))?;
        self.set(k.trim(), v)
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        let mut cfg = RunConfig::default();
        cfg.apply_text(&text)
            .map_err(|e| format!("{}: {e}", path.display()))?;
        Ok(cfg)
    }

    /// The effective configuration as loadable text. The worker count is
    /// left out because it never changes the outputs.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        let p = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string());
        kv("seed", self.seed.to_string());
        if let Some(c) = self.count {
            kv("count", c.to_string());
        }
        for (k, v) in [
            ("registry", &self.registry),
            ("out", &self.out),
            ("manifest", &self.manifest),
            ("estimates", &self.estimates),
            ("candidates", &self.candidates),
            ("dataset", &self.dataset),
        ] {
            if let Some(v) = p(v) {
                kv(k, v);
            }
        }
        let r = &self.slice.render;
        kv("render.z_near", format!("{:?}", r.z_near));
        kv("render.splat_radius", r.splat_radius.to_string());
        kv("render.depth_tie_epsilon", format!("{:?}", r.depth_tie_epsilon));
        kv("render.max_fill_iterations", r.max_fill_iterations.to_string());
        let c = &self.slice;
        kv("slice.yaw_count", c.yaw_count.to_string());
        kv("slice.yaw_stride", format!("{:?}", c.yaw_stride));
        kv("slice.pitch_ring", join(&c.pitch_ring));
        kv("slice.hfov", format!("{:?}", c.hfov));
        kv("slice.width", c.width.to_string());
        kv("slice.height", c.height.to_string());
        let q = &self.synth;
        kv("query.hfov", format!("{:?}", q.hfov));
        kv("query.width", q.width.to_string());
        kv("query.height", q.height.to_string());
        let l = &q.limits;
        kv("sampling.max_horizontal_offset", format!("{:?}", l.max_horizontal_offset));
        kv("sampling.max_vertical_offset", format!("{:?}", l.max_vertical_offset));
        kv("sampling.yaw_range", join(&[l.yaw_range.0, l.yaw_range.1]));
        kv("sampling.pitch_range", join(&[l.pitch_range.0, l.pitch_range.1]));
        kv("sampling.roll_range", join(&[l.roll_range.0, l.roll_range.1]));
        kv("sampling.max_missing", format!("{:?}", l.max_missing));
        kv("sampling.max_attempts", l.max_attempts_per_query.to_string());
        kv("flashlight.enabled", q.flashlight.enabled.to_string());
        kv("flashlight.gain", format!("{:?}", q.flashlight.gain));
        kv("flashlight.half_distance", format!("{:?}", q.flashlight.half_distance));
        kv("occlusion.probability", format!("{:?}", q.occlusion_probability));
        kv("noise.sigma", format!("{:?}", q.noise_sigma));
        kv("eval.translation_thresholds", join(&self.thresholds.translation));
        kv("eval.rotation_threshold", format!("{:?}", self.thresholds.rotation_deg));
        kv("eval.top_k", self.top_k.to_string());
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn echo_round_trips() {
        let mut c = RunConfig::default();
        c.apply_text(
            "# demo\nseed = 99\nslice.pitch_ring = -20, 0, 20\nsampling.pitch_range = -10,10\nflashlight.enabled = off\nrender.splat_radius = 2\nregistry = /tmp/reg.tsv\n",
        )
        .unwrap();
        assert_eq!(c.seed, 99);
        assert_eq!(c.slice.pitch_ring, vec![-20.0, 0.0, 20.0]);
        assert_eq!(c.synth.render.splat_radius, 2);
        assert!(!c.synth.flashlight.enabled);
        let mut back = RunConfig::default();
        back.apply_text(&c.to_text()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn rejects_unknown_and_malformed() {
        let mut c = RunConfig::default();
        let e = c.apply_text("seed = 1\ncolour = red\n").unwrap_err();
        assert!(e.contains("line 2") && e.contains("colour"), "{e}");
        assert!(c.apply_text("seed 1\n").is_err());
        assert!(c.apply_override("slice.width=abc").is_err());
        assert!(c.apply_override("sampling.yaw_range=1").is_err());
        c.apply_override("noise.sigma=2.5").unwrap();
        assert_eq!(c.synth.noise_sigma, 2.5);
    }

    #[test]
    fn workers_are_not_echoed() {
        let mut c = RunConfig::default();
        c.set("workers", "8").unwrap();
        assert!(!c.to_text().contains("workers"));
    }
}
