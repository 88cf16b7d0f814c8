//! Query manifest: the per-query ground-truth record.
//!
//! Header line `TBPOS-MANIFEST v1`, then one line per query of
//! whitespace-separated `key=value` pairs. Lists (pose, polygon, colors) are
//! comma-separated. Lines starting with `#` are comments.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geom::{fmt_exact, split_row_major, CameraIntrinsics, Pose};
use crate::io::layout::validate_id;
use crate::io::registry::ScanRegistry;

pub const MANIFEST_HEADER: &str = "TBPOS-MANIFEST v1";

/// Realized occluder area must fall inside this range.
pub const OCCLUSION_FRACTION_RANGE: (f64, f64) = (0.01, 0.50);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QueryStatus {
    Ok,
    /// Every pose attempt failed the quality gate; no image was written.
    Skipped,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlashlightRecord {
    pub enabled: bool,
    pub gain: f64,
    pub half_distance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OcclusionRecord {
    /// Quadrangle corners in pixel coordinates.
    pub vertices: [[f64; 2]; 4],
    pub fill_rgb: [u8; 3],
    /// Share of image pixels covered after clipping to the image.
    pub fraction: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestRecord {
    pub query_id: String,
    pub scan_id: String,
    pub status: QueryStatus,
    pub seed: u64,
    pub attempts: u32,
    /// Ground-truth camera-from-world pose; present when `status` is `Ok`.
    pub pose: Option<Pose>,
    pub intrinsics: Option<CameraIntrinsics>,
    /// Missing-pixel fraction of the raw render, before hole filling.
    pub missing_fraction: Option<f64>,
    pub flashlight: FlashlightRecord,
    pub occlusion: Option<OcclusionRecord>,
    pub noise_sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct QueryManifest {
    pub records: Vec<ManifestRecord>,
}

fn join<T: ToString>(v: impl IntoIterator<Item = T>) -> String {
    v.into_iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

impl ManifestRecord {
    pub fn is_ok(&self) -> bool {
        self.status == QueryStatus::Ok
    }

    fn to_line(&self) -> String {
        let mut s = String::new();
        let status = match self.status {
            QueryStatus::Ok => "ok",
            QueryStatus::Skipped => "skipped",
        };
        write!(
            s,
            "query_id={} scan_id={} status={status} seed={} attempts={}",
            self.query_id, self.scan_id, self.seed, self.attempts
        )
        .unwrap();
        if let Some(p) = &self.pose {
            write!(s, " pose={}", join(p.to_row_major().iter().map(|v| fmt_exact(*v)))).unwrap();
        }
        if let Some(k) = &self.intrinsics {
            write!(
                s,
                " focal={} width={} height={}",
                fmt_exact(k.focal_px()),
                k.width(),
                k.height()
            )
            .unwrap();
        }
        if let Some(m) = self.missing_fraction {
            write!(s, " missing={}", fmt_exact(m)).unwrap();
        }
        let fl = &self.flashlight;
        write!(
            s,
            " flashlight={} fl_gain={} fl_d0={}",
            if fl.enabled { "on" } else { "off" },
            fl.gain,
            fl.half_distance
        )
        .unwrap();
        match &self.occlusion {
            Some(o) => write!(
                s,
                " occlusion=on occ_poly={} occ_rgb={} occ_fraction={}",
                join(o.vertices.iter().flatten().map(|v| fmt_exact(*v))),
                join(o.fill_rgb),
                fmt_exact(o.fraction)
            )
            .unwrap(),
            None => s.push_str(" occlusion=off"),
        }
        write!(s, " noise_sigma={}", self.noise_sigma).unwrap();
        s
    }
}

struct Fields<'a> {
    map: BTreeMap<&'a str, &'a str>,
    line_no: usize,
}

impl<'a> Fields<'a> {
    fn loc(&self) -> String {
        format!("line {}", self.line_no)
    }

    fn take(&mut self, key: &str) -> Option<&'a str> {
        self.map.remove(key)
    }

    fn req(&mut self, key: &str) -> Result<&'a str> {
        self.take(key)
            .ok_or_else(|| Error::parse(self.loc(), format!("missing key `{key}`")))
    }

    fn num<T: std::str::FromStr>(&self, key: &str, v: &str) -> Result<T> {
        v.parse()
            .map_err(|_| Error::parse(self.loc(), format!("bad value `{v}` for `{key}`")))
    }

    fn list<T: std::str::FromStr>(&self, key: &str, v: &str, n: usize) -> Result<Vec<T>> {
        let items: Vec<T> = v
            .split(',')
            .map(|x| self.num(key, x))
            .collect::<Result<_>>()?;
        if items.len() != n {
            return Err(Error::parse(
                self.loc(),
                format!("`{key}` needs {n} values, found {}", items.len()),
            ));
        }
        Ok(items)
    }

    fn on_off(&self, key: &str, v: &str) -> Result<bool> {
        match v {
            "on" => Ok(true),
            "off" => Ok(false),
            _ => Err(Error::parse(self.loc(), format!("`{key}` must be on or off"))),
        }
    }
}

fn parse_record(line: &str, line_no: usize) -> Result<ManifestRecord> {
    let mut map = BTreeMap::new();
    for tok in line.split_whitespace() {
        let (k, v) = tok.split_once('=').ok_or_else(|| {
            Error::parse(format!("line {line_no}"), format!("`{tok}` is not key=value"))
        })?;
        if map.insert(k, v).is_some() {
            return Err(Error::parse(format!("line {line_no}"), format!("duplicate key `{k}`")));
        }
    }
    let mut f = Fields { map, line_no };
    let query_id = f.req("query_id")?.to_string();
    let scan_id = f.req("scan_id")?.to_string();
    for id in [&query_id, &scan_id] {
        validate_id(id).map_err(|_| Error::parse(f.loc(), format!("invalid identifier `{id}`")))?;
    }
    let status = match f.req("status")? {
        "ok" => QueryStatus::Ok,
        "skipped" => QueryStatus::Skipped,
        other => return Err(Error::parse(f.loc(), format!("unknown status `{other}`"))),
    };
    let v = f.req("seed")?;
    let seed = f.num("seed", v)?;
    let attempts = match f.take("attempts") {
        Some(v) => f.num("attempts", v)?,
        None => 0,
    };
    let pose = match f.take("pose") {
        Some(v) => {
            let vals: Vec<f64> = f.list("pose", v, 12)?;
            let (r, t) = split_row_major(&vals.try_into().unwrap());
            // kept bit-exact: ground truth is never re-orthonormalized
            Some(Pose::try_new(r, t, 1e-6).map_err(|e| Error::parse(f.loc(), e.to_string()))?)
        }
        None => None,
    };
    let intrinsics = match f.take("focal") {
        Some(fv) => {
            let focal = f.num("focal", fv)?;
            let w = f.req("width")?;
            let w = f.num("width", w)?;
            let h = f.req("height")?;
            let h = f.num("height", h)?;
            Some(CameraIntrinsics::new(focal, w, h).map_err(|e| Error::parse(f.loc(), e.to_string()))?)
        }
        None => None,
    };
    let missing_fraction = match f.take("missing") {
        Some(v) => Some(f.num("missing", v)?),
        None => None,
    };
    if status == QueryStatus::Ok && (pose.is_none() || intrinsics.is_none()) {
        return Err(Error::parse(f.loc(), "ok record needs pose, focal, width and height"));
    }
    let flashlight = match f.take("flashlight") {
        Some(v) => {
            let enabled = f.on_off("flashlight", v)?;
            let g = f.req("fl_gain")?;
            let d = f.req("fl_d0")?;
            FlashlightRecord {
                enabled,
                gain: f.num("fl_gain", g)?,
                half_distance: f.num("fl_d0", d)?,
            }
        }
        None => FlashlightRecord {
            enabled: false,
            gain: 0.0,
            half_distance: 0.0,
        },
    };
    let occlusion = match f.take("occlusion") {
        Some(v) if f.on_off("occlusion", v)? => {
            let poly = f.req("occ_poly")?;
            let poly: Vec<f64> = f.list("occ_poly", poly, 8)?;
            let rgb = f.req("occ_rgb")?;
            let rgb: Vec<u8> = f.list("occ_rgb", rgb, 3)?;
            let frac = f.req("occ_fraction")?;
            let fraction: f64 = f.num("occ_fraction", frac)?;
            Some(OcclusionRecord {
                vertices: [
                    [poly[0], poly[1]],
                    [poly[2], poly[3]],
                    [poly[4], poly[5]],
                    [poly[6], poly[7]],
                ],
                fill_rgb: [rgb[0], rgb[1], rgb[2]],
                fraction,
            })
        }
        _ => None,
    };
    let noise_sigma = match f.take("noise_sigma") {
        Some(v) => f.num("noise_sigma", v)?,
        None => 0.0,
    };
    if let Some(k) = f.map.keys().next() {
        return Err(Error::parse(f.loc(), format!("unknown key `{k}`")));
    }
    Ok(ManifestRecord {
        query_id,
        scan_id,
        status,
        seed,
        attempts,
        pose,
        intrinsics,
        missing_fraction,
        flashlight,
        occlusion,
        noise_sigma,
    })
}

impl QueryManifest {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Records that produced a query image.
    pub fn ok_records(&self) -> impl Iterator<Item = &ManifestRecord> {
        self.records.iter().filter(|r| r.is_ok())
    }

    pub fn get(&self, query_id: &str) -> Option<&ManifestRecord> {
        self.records.iter().find(|r| r.query_id == query_id)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::from(MANIFEST_HEADER);
        s.push('\n');
        for r in &self.records {
            s.push_str(&r.to_line());
            s.push('\n');
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, l)) if l.trim() == MANIFEST_HEADER => {}
            _ => {
                return Err(Error::parse(
                    "line 1",
                    format!("expected header `{MANIFEST_HEADER}`"),
                ))
            }
        }
        let mut records = Vec::new();
        for (n, line) in lines {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            records.push(parse_record(line, n + 1)?);
        }
        let m = QueryManifest { records };
        m.validate()?;
        Ok(m)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|e| e.with_path(path))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    /// Unique query ids and occlusion fractions inside the allowed range.
    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for r in &self.records {
            if !seen.insert(r.query_id.as_str()) {
                return Err(Error::validation(format!("duplicate query id `{}`", r.query_id)));
            }
            if let Some(o) = &r.occlusion {
                let (lo, hi) = OCCLUSION_FRACTION_RANGE;
                if !(lo..=hi).contains(&o.fraction) {
                    return Err(Error::validation(format!(
                        "query `{}`: occlusion fraction {} outside [{lo}, {hi}]",
                        r.query_id, o.fraction
                    )));
                }
            }
        }
        Ok(())
    }

    /// Every record's scan id must exist in the registry.
    pub fn validate_against(&self, registry: &ScanRegistry) -> Result<()> {
        for r in &self.records {
            if registry.get(&r.scan_id).is_none() {
                return Err(Error::validation(format!(
                    "query `{}` references unknown scan `{}`",
                    r.query_id, r.scan_id
                )));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{intrinsics_from_fov, pose_from_euler, EulerAngles};
    use nalgebra::Vector3;

    fn record(i: usize, occluded: bool) -> ManifestRecord {
        let pose = pose_from_euler(
            &Vector3::new(0.1 * i as f64, -1.0 / 3.0, 1.7),
            &EulerAngles::new(123.456, -7.0, 3.3),
        )
        .unwrap();
        ManifestRecord {
            query_id: format!("q{i:03}"),
            scan_id: "scan_a".into(),
            status: QueryStatus::Ok,
            seed: 0xdead_beef_0000 + i as u64,
            attempts: 2,
            pose: Some(pose),
            intrinsics: Some(intrinsics_from_fov(60.0, 1024, 768).unwrap()),
            missing_fraction: Some(0.0123),
            flashlight: FlashlightRecord {
                enabled: true,
                gain: 4.0,
                half_distance: 3.0,
            },
            occlusion: occluded.then_some(OcclusionRecord {
                vertices: [[1.5, 2.0], [100.0, 3.0], [90.0, 80.25], [0.0, 70.0]],
                fill_rgb: [10, 20, 60],
                fraction: 0.1,
            }),
            noise_sigma: 2.5,
        }
    }

    #[test]
    fn round_trip_is_exact() {
        let mut m = QueryManifest {
            records: vec![record(0, true), record(1, false)],
        };
        m.records.push(ManifestRecord {
            status: QueryStatus::Skipped,
            pose: None,
            intrinsics: None,
            missing_fraction: None,
            ..record(2, false)
        });
        let text = m.to_text();
        assert!(text.starts_with("TBPOS-MANIFEST v1\n"));
        let back = QueryManifest::parse(&text).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.ok_records().count(), 2);
    }

    #[test]
    fn rejects_bad_manifests() {
        let good = QueryManifest {
            records: vec![record(0, true)],
        }
        .to_text();
        assert!(QueryManifest::parse(&good.replace("TBPOS-MANIFEST v1", "MANIFEST")).is_err());
        let mut big = record(0, true);
        big.occlusion.as_mut().unwrap().fraction = 0.6;
        let text = QueryManifest { records: vec![big] }.to_text();
        assert!(QueryManifest::parse(&text).unwrap_err().to_string().contains("occlusion"));
        let dup = format!("{good}{}", good.lines().nth(1).unwrap());
        assert!(QueryManifest::parse(&dup).unwrap_err().to_string().contains("duplicate"));
        assert!(QueryManifest::parse(&good.replace("noise_sigma", "bogus")).is_err());
        assert!(QueryManifest::parse(&good.replace("status=ok", "status=maybe")).is_err());
        assert!(QueryManifest::parse(&format!("{MANIFEST_HEADER}\nquery_id=q0 scan_id=s status=ok seed=1\n")).is_err());
    }

    #[test]
    fn registry_cross_check() {
        let m = QueryManifest {
            records: vec![record(0, false)],
        };
        let reg = ScanRegistry::default();
        assert!(m.validate_against(&reg).is_err());
    }
}
