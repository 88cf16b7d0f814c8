use std::f64::consts::TAU;

use nalgebra::Vector3;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::cloud::PointCloud;
use crate::error::{Error, Result};
use crate::io::manifest::{OcclusionRecord, OCCLUSION_FRACTION_RANGE};
use crate::raster::RgbdImage;

/// Distance-dependent lighting: a lamp at the camera brightens nearby
/// points by up to `gain` and darkens distant ones.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlashlightParams {
    pub enabled: bool,
    pub gain: f64,
    /// Distance (metres) at which the brightness factor is `gain / 2`.
    pub half_distance: f64,
}

impl Default for FlashlightParams {
    fn default() -> Self {
        FlashlightParams {
            enabled: true,
            gain: 4.0,
            half_distance: 3.0,
        }
    }
}

impl FlashlightParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.gain.is_finite() && self.gain > 0.0) {
            return Err(Error::invalid("flashlight gain must be positive"));
        }
        if !(self.half_distance.is_finite() && self.half_distance > 0.0) {
            return Err(Error::invalid("flashlight half distance must be positive"));
        }
        Ok(())
    }

    /// Brightness factor `g / (1 + (d/d0)²)` at distance `d`.
    pub fn factor(&self, distance: f64) -> f64 {
        let r = distance / self.half_distance;
        self.gain / (1.0 + r * r)
    }

    /// Color of a point at `distance` from the lamp.
    pub fn shade(&self, color: [u8; 3], distance: f64) -> [u8; 3] {
        let f = self.factor(distance);
        color.map(|b| (b as f64 * f).round().clamp(0.0, 255.0) as u8)
    }
}

/// Recolors every point as lit by a flashlight at `camera_center`.
pub fn apply_flashlight(
    cloud: &PointCloud,
    camera_center: &Vector3<f64>,
    params: &FlashlightParams,
) -> Result<PointCloud> {
    params.validate()?;
    let mut out = cloud.clone();
    for (p, c) in out.positions.iter().zip(out.colors.iter_mut()) {
        let d = (Vector3::from(*p) - camera_center).norm();
        *c = params.shade(*c, d);
    }
    Ok(out)
}

/// A convex quadrangle painted over the image.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OcclusionSpec {
    vertices: [[f64; 2]; 4],
    fill_rgb: [u8; 3],
    target_fraction: f64,
}

impl OcclusionSpec {
    /// Vertices in pixel coordinates (pixel centres at integers), in
    /// either winding order. Rejects non-convex and degenerate quadrangles.
    pub fn new(vertices: [[f64; 2]; 4], fill_rgb: [u8; 3], target_fraction: f64) -> Result<Self> {
        if vertices.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::invalid("occluder vertices must be finite"));
        }
        let (lo, hi) = OCCLUSION_FRACTION_RANGE;
        if !(lo..=hi).contains(&target_fraction) {
            return Err(Error::invalid(format!(
                "occluder target fraction {target_fraction} outside [{lo}, {hi}]"
            )));
        }
        let turns: Vec<f64> = (0..4)
            .map(|i| {
                let [a, b, c] = [vertices[i], vertices[(i + 1) % 4], vertices[(i + 2) % 4]];
                (b[0] - a[0]) * (c[1] - b[1]) - (b[1] - a[1]) * (c[0] - b[0])
            })
            .collect();
        let convex = turns.iter().all(|t| *t > 0.0) || turns.iter().all(|t| *t < 0.0);
        if !convex {
            return Err(Error::invalid("occluder quadrangle must be convex with non-zero area"));
        }
        Ok(OcclusionSpec {
            vertices,
            fill_rgb,
            target_fraction,
        })
    }

    pub fn vertices(&self) -> &[[f64; 2]; 4] {
        &self.vertices
    }

    pub fn fill_rgb(&self) -> [u8; 3] {
        self.fill_rgb
    }

    pub fn target_fraction(&self) -> f64 {
        self.target_fraction
    }

    /// Random occluder: centre uniform over the image, corners at four
    /// sorted uniform angles on a circle whose radius gives the quadrangle
    /// a uniformly drawn target share of the image area.
    pub fn sample<R: Rng + ?Sized>(width: u32, height: u32, rng: &mut R) -> Self {
        let (w, h) = (width as f64, height as f64);
        let (lo, hi) = OCCLUSION_FRACTION_RANGE;
        loop {
            let cx = rng.random_range(-0.5..w - 0.5);
            let cy = rng.random_range(-0.5..h - 0.5);
            let target = rng.random_range(lo..=hi);
            let mut angles: [f64; 4] = std::array::from_fn(|_| rng.random_range(0.0..TAU));
            angles.sort_by(f64::total_cmp);
            // area of a cyclic polygon with unit radius
            let unit_area: f64 = (0..4)
                .map(|i| {
                    let next = if i == 3 { angles[0] + TAU } else { angles[i + 1] };
                    (next - angles[i]).sin()
                })
                .sum::<f64>()
                / 2.0;
            let fill_rgb: [u8; 3] = std::array::from_fn(|_| rng.random_range(10..=60));
            if unit_area < 1e-3 {
                continue;
            }
            let radius = (target * w * h / unit_area).sqrt();
            let vertices = angles.map(|a| [cx + radius * a.cos(), cy + radius * a.sin()]);
            if let Ok(spec) = OcclusionSpec::new(vertices, fill_rgb, target) {
                return spec;
            }
        }
    }

    pub fn record(&self, fraction: f64) -> OcclusionRecord {
        OcclusionRecord {
            vertices: self.vertices,
            fill_rgb: self.fill_rgb,
            fraction,
        }
    }
}

/// Calls `f` with the raster index of every pixel whose centre lies inside
/// the polygon. A row at height `y` crosses an edge when `y` lies in the
/// half-open span of the edge's end heights; covered pixels are those with
/// `x_left <= u < x_right`.
pub fn scanline_fill(polygon: &[[f64; 2]], width: u32, height: u32, mut f: impl FnMut(usize)) {
    let n = polygon.len();
    let mut xs = Vec::with_capacity(n);
    let ymin = polygon.iter().map(|p| p[1]).fold(f64::INFINITY, f64::min);
    let ymax = polygon.iter().map(|p| p[1]).fold(f64::NEG_INFINITY, f64::max);
    let v0 = ymin.ceil().max(0.0) as i64;
    let v1 = ymax.floor().min(height as f64 - 1.0) as i64;
    for v in v0..=v1 {
        let y = v as f64;
        xs.clear();
        for i in 0..n {
            let [a, b] = [polygon[i], polygon[(i + 1) % n]];
            if (a[1] <= y && y < b[1]) || (b[1] <= y && y < a[1]) {
                xs.push(a[0] + (y - a[1]) * (b[0] - a[0]) / (b[1] - a[1]));
            }
        }
        xs.sort_by(f64::total_cmp);
        for pair in xs.chunks_exact(2) {
            let u0 = pair[0].ceil().max(0.0) as i64;
            let u1 = (pair[1].ceil() as i64).min(width as i64);
            let row = v as usize * width as usize;
            for u in u0..u1 {
                f(row + u as usize);
            }
        }
    }
}

/// The realized occluder area fell outside the allowed range; the caller
/// should draw another occluder.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OcclusionRejected {
    pub fraction: f64,
}

/// Paints the occluder: covered pixels take the fill color and lose their
/// depth. Returns the covered share of the image.
pub fn apply_occlusion(
    image: &RgbdImage,
    spec: &OcclusionSpec,
) -> std::result::Result<(RgbdImage, f64), OcclusionRejected> {
    let (w, h) = (image.width(), image.height());
    let mut out = image.clone();
    let mut covered = 0usize;
    scanline_fill(&spec.vertices, w, h, |i| {
        covered += 1;
        out.raster.set_rgb(i, spec.fill_rgb);
        out.raster.depth[i] = 0.0;
        out.raster.valid[i] = false;
    });
    let fraction = covered as f64 / (w as f64 * h as f64);
    let (lo, hi) = OCCLUSION_FRACTION_RANGE;
    if (lo..=hi).contains(&fraction) {
        Ok((out, fraction))
    } else {
        Err(OcclusionRejected { fraction })
    }
}

/// Draws occluders until one lands in the allowed area range, giving up
/// after `max_tries`.
pub fn sample_occlusion<R: Rng + ?Sized>(
    image: &RgbdImage,
    rng: &mut R,
    max_tries: u32,
) -> Option<(RgbdImage, OcclusionRecord)> {
    for _ in 0..max_tries {
        let spec = OcclusionSpec::sample(image.width(), image.height(), rng);
        if let Ok((img, fraction)) = apply_occlusion(image, &spec) {
            return Some((img, spec.record(fraction)));
        }
    }
    None
}

/// Adds zero-mean Gaussian noise with standard deviation `sigma` (gray
/// levels) to every color channel. Depth is left alone.
pub fn apply_noise<R: Rng + ?Sized>(image: &RgbdImage, sigma: f64, rng: &mut R) -> Result<RgbdImage> {
    if !(sigma.is_finite() && sigma >= 0.0) {
        return Err(Error::invalid(format!("noise sigma must be non-negative, got {sigma}")));
    }
    let mut out = image.clone();
    if sigma == 0.0 {
        return Ok(out);
    }
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::invalid(e.to_string()))?;
    for b in out.raster.rgb.iter_mut() {
        *b = (*b as f64 + normal.sample(rng)).round().clamp(0.0, 255.0) as u8;
    }
    Ok(out)
}
