//! Point splatting with a z-buffer, hole filling and unprojection.
//!
//! Points are transformed into the camera, rounded to the nearest pixel and
//! written into a `(2r+1)²` square. The nearest depth wins each pixel; among
//! candidates within `depth_tie_epsilon` of the nearest, the lowest point
//! index wins, so the result does not depend on how points are partitioned
//! across threads.

use std::sync::atomic::{AtomicU32, AtomicU64, Ordering};

use nalgebra::Vector3;
use rayon::prelude::*;

use crate::cloud::PointCloud;
use crate::error::{Error, Result};
use crate::geom::{CameraIntrinsics, Pose};
use crate::raster::{Raster, RgbdImage};

/// Marks pixels no point landed on in [`RawRender::point_index`].
pub const NO_POINT: u32 = u32::MAX;

const CHUNK: usize = 1 << 14;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RenderParams {
    /// Points closer than this along the optical axis are dropped (metres).
    pub z_near: f64,
    /// Half-width of the square splat in pixels; 0 writes a single pixel.
    pub splat_radius: u32,
    pub depth_tie_epsilon: f64,
    pub max_fill_iterations: u32,
}

impl Default for RenderParams {
    fn default() -> Self {
        RenderParams {
            z_near: 0.1,
            splat_radius: 1,
            depth_tie_epsilon: 1e-6,
            max_fill_iterations: 100,
        }
    }
}

impl RenderParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.z_near.is_finite() && self.z_near > 0.0) {
            return Err(Error::invalid(format!("z_near must be positive, got {}", self.z_near)));
        }
        if self.splat_radius > 3 {
            return Err(Error::invalid(format!(
                "splat_radius must be at most 3, got {}",
                self.splat_radius
            )));
        }
        if !(self.depth_tie_epsilon >= 0.0) {
            return Err(Error::invalid("depth_tie_epsilon must be non-negative"));
        }
        Ok(())
    }
}

/// Output of [`render`] before hole filling.
#[derive(Debug, Clone, PartialEq)]
pub struct RawRender {
    pub pose: Pose,
    pub intrinsics: CameraIntrinsics,
    pub raster: Raster,
    /// Invalid pixels divided by the pixel count.
    pub missing_fraction: f64,
    /// Index of the point shown at each pixel, or [`NO_POINT`].
    pub point_index: Vec<u32>,
}

/// Where a point lands: rounded pixel centre and camera depth.
#[derive(Debug, Clone, Copy)]
struct Hit {
    u: i64,
    v: i64,
    z: f64,
}

#[derive(Clone, Copy)]
struct Projector {
    pose: Pose,
    k: CameraIntrinsics,
    z_near: f64,
    r: i64,
}

impl Projector {
    fn new(pose: &Pose, k: &CameraIntrinsics, params: &RenderParams) -> Self {
        Projector {
            pose: *pose,
            k: *k,
            z_near: params.z_near,
            r: params.splat_radius as i64,
        }
    }

    /// `None` when the point is behind `z_near` or its splat misses the image.
    #[inline]
    fn hit(&self, p: &[f64; 3]) -> Option<Hit> {
        let pc = self.pose.transform(&Vector3::new(p[0], p[1], p[2]));
        if !(pc.z >= self.z_near) {
            return None;
        }
        let (uf, vf) = self.k.project(&pc);
        let u = uf.round() as i64;
        let v = vf.round() as i64;
        let (w, h) = (self.k.width() as i64, self.k.height() as i64);
        if u + self.r < 0 || v + self.r < 0 || u - self.r >= w || v - self.r >= h {
            return None;
        }
        Some(Hit { u, v, z: pc.z })
    }

    #[inline]
    fn for_each_pixel(&self, hit: &Hit, mut f: impl FnMut(usize)) {
        let (w, h) = (self.k.width() as i64, self.k.height() as i64);
        let v0 = (hit.v - self.r).max(0);
        let v1 = (hit.v + self.r).min(h - 1);
        let u0 = (hit.u - self.r).max(0);
        let u1 = (hit.u + self.r).min(w - 1);
        for v in v0..=v1 {
            let row = (v * w) as usize;
            for u in u0..=u1 {
                f(row + u as usize);
            }
        }
    }
}

fn check_inputs(cloud: &PointCloud, params: &RenderParams) -> Result<()> {
    params.validate()?;
    if cloud.is_empty() {
        return Err(Error::invalid(format!("cloud `{}` is empty", cloud.scan_id)));
    }
    if cloud.len() >= NO_POINT as usize {
        return Err(Error::invalid("clouds are limited to 2^32 - 1 points"));
    }
    Ok(())
}

/// Renders the cloud from `pose`. See the module docs for the visibility rule.
pub fn render(
    cloud: &PointCloud,
    pose: &Pose,
    intrinsics: &CameraIntrinsics,
    params: &RenderParams,
) -> Result<RawRender> {
    check_inputs(cloud, params)?;
    Ok(render_points(cloud, None, None, pose, intrinsics, params))
}

/// Indices (ascending) of the points whose splat can touch the image.
/// Rendering only these gives the same output as rendering the whole cloud.
pub fn frustum_subset(
    cloud: &PointCloud,
    pose: &Pose,
    intrinsics: &CameraIntrinsics,
    params: &RenderParams,
) -> Vec<u32> {
    let proj = Projector::new(pose, intrinsics, params);
    cloud
        .positions
        .par_chunks(CHUNK)
        .enumerate()
        .flat_map_iter(|(c, chunk)| {
            let base = c * CHUNK;
            chunk
                .iter()
                .enumerate()
                .filter(move |(_, p)| proj.hit(p).is_some())
                .map(move |(i, _)| (base + i) as u32)
        })
        .collect()
}

/// Same output as [`render`], but only the points inside the view frustum
/// are rasterized.
pub fn render_culled(
    cloud: &PointCloud,
    pose: &Pose,
    intrinsics: &CameraIntrinsics,
    params: &RenderParams,
) -> Result<RawRender> {
    render_recolored(cloud, pose, intrinsics, params, None::<fn(&[f64; 3], [u8; 3]) -> [u8; 3]>)
}

/// Frustum-culled render where `recolor` maps each visible point's
/// position and color to the color drawn.
pub(crate) fn render_recolored<F>(
    cloud: &PointCloud,
    pose: &Pose,
    intrinsics: &CameraIntrinsics,
    params: &RenderParams,
    recolor: Option<F>,
) -> Result<RawRender>
where
    F: Fn(&[f64; 3], [u8; 3]) -> [u8; 3] + Sync,
{
    check_inputs(cloud, params)?;
    let subset = frustum_subset(cloud, pose, intrinsics, params);
    let colors: Option<Vec<[u8; 3]>> = recolor.map(|f| {
        subset
            .par_iter()
            .map(|&i| f(&cloud.positions[i as usize], cloud.colors[i as usize]))
            .collect()
    });
    Ok(render_points(
        cloud,
        Some(&subset),
        colors.as_deref(),
        pose,
        intrinsics,
        params,
    ))
}

/// Renders the points listed in `subset` (ascending indices into `cloud`),
/// or all points when `None`. `colors`, when given, replaces the cloud's
/// colors and is aligned with `subset`.
pub(crate) fn render_points(
    cloud: &PointCloud,
    subset: Option<&[u32]>,
    colors: Option<&[[u8; 3]]>,
    pose: &Pose,
    intrinsics: &CameraIntrinsics,
    params: &RenderParams,
) -> RawRender {
    let proj = Projector::new(pose, intrinsics, params);
    let n_px = intrinsics.pixel_count();
    let count = subset.map_or(cloud.len(), |s| s.len());
    let global = |k: usize| subset.map_or(k, |s| s[k] as usize);

    // pass 1: nearest depth per pixel; positive doubles order like their bits
    let zmin: Vec<AtomicU64> = (0..n_px).map(|_| AtomicU64::new(f64::INFINITY.to_bits())).collect();
    (0..count).into_par_iter().with_min_len(CHUNK).for_each(|k| {
        if let Some(hit) = proj.hit(&cloud.positions[global(k)]) {
            let bits = hit.z.to_bits();
            proj.for_each_pixel(&hit, |px| {
                zmin[px].fetch_min(bits, Ordering::Relaxed);
            });
        }
    });

    // pass 2: lowest index among candidates within the tie tolerance
    let eps = params.depth_tie_epsilon;
    let winner: Vec<AtomicU32> = (0..n_px).map(|_| AtomicU32::new(NO_POINT)).collect();
    (0..count).into_par_iter().with_min_len(CHUNK).for_each(|k| {
        if let Some(hit) = proj.hit(&cloud.positions[global(k)]) {
            proj.for_each_pixel(&hit, |px| {
                let best = f64::from_bits(zmin[px].load(Ordering::Relaxed));
                if hit.z <= best + eps {
                    winner[px].fetch_min(k as u32, Ordering::Relaxed);
                }
            });
        }
    });

    let (w, h) = (intrinsics.width(), intrinsics.height());
    let mut raster = Raster::empty(w, h);
    let mut point_index = vec![NO_POINT; n_px];
    let mut invalid = 0usize;
    for px in 0..n_px {
        let k = winner[px].load(Ordering::Relaxed);
        if k == NO_POINT {
            invalid += 1;
            continue;
        }
        let k = k as usize;
        let gi = global(k);
        let color = match colors {
            Some(c) => c[k],
            None => cloud.colors[gi],
        };
        let z = pose.transform(&cloud.position(gi)).z;
        raster.set_rgb(px, color);
        raster.depth[px] = z as f32;
        raster.valid[px] = true;
        point_index[px] = gi as u32;
    }
    RawRender {
        pose: *pose,
        intrinsics: *intrinsics,
        raster,
        missing_fraction: invalid as f64 / n_px as f64,
        point_index,
    }
}

/// True iff the raw render's missing fraction does not exceed `max_missing`.
pub fn quality_gate(raw: &RawRender, max_missing: f64) -> bool {
    debug_assert!((0.0..=1.0).contains(&max_missing));
    raw.missing_fraction <= max_missing
}

/// One pixel written by a fill iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilledPixel {
    pub index: usize,
    pub rgb: [u8; 3],
    pub depth: f32,
}

const NEIGHBORS: [(i64, i64); 8] = [
    (-1, -1),
    (0, -1),
    (1, -1),
    (-1, 0),
    (1, 0),
    (-1, 1),
    (0, 1),
    (1, 1),
];

/// Column and row of pixel `i`.
#[inline(always)]
fn coords(i: usize, w: usize) -> (usize, usize) {
    let (i, w) = (i as u32, w as u32);
    ((i % w) as usize, (i / w) as usize)
}

/// Calls `f` with the index of every in-bounds 8-neighbour of pixel `(x, y)`.
#[inline(always)]
fn for_each_neighbor(w: usize, h: usize, x: usize, y: usize, mut f: impl FnMut(usize)) {
    let i = y * w + x;
    if x > 0 && y > 0 && x + 1 < w && y + 1 < h {
        let up = i - w;
        let down = i + w;
        for j in [up - 1, up, up + 1, i - 1, i + 1, down - 1, down, down + 1] {
            f(j);
        }
        return;
    }
    for (dx, dy) in NEIGHBORS {
        let (nx, ny) = (x as i64 + dx, y as i64 + dy);
        if nx >= 0 && ny >= 0 && nx < w as i64 && ny < h as i64 {
            f(ny as usize * w + nx as usize);
        }
    }
}

/// Color, depth and validity of one pixel packed in one word.
#[derive(Clone, Copy, Default)]
struct Cell(u64);

const VALID_BIT: u64 = 1 << 56;

impl Cell {
    fn pack(rgb: [u8; 3], depth: f32) -> Self {
        let c = (rgb[0] as u64) << 32 | (rgb[1] as u64) << 40 | (rgb[2] as u64) << 48;
        Cell(VALID_BIT | c | depth.to_bits() as u64)
    }

    #[inline(always)]
    fn valid(self) -> bool {
        self.0 & VALID_BIT != 0
    }

    #[inline(always)]
    fn channel(self, ch: usize) -> u8 {
        (self.0 >> (32 + 8 * ch)) as u8
    }

    #[inline(always)]
    fn depth(self) -> f32 {
        f32::from_bits(self.0 as u32)
    }
}

struct CellGrid {
    width: usize,
    height: usize,
    cells: Vec<Cell>,
}

impl CellGrid {
    fn from_raster(r: &Raster) -> Self {
        let cells = (0..r.len())
            .map(|i| {
                if r.valid[i] {
                    let c = &r.rgb[3 * i..3 * i + 3];
                    Cell::pack([c[0], c[1], c[2]], r.depth[i])
                } else {
                    Cell::default()
                }
            })
            .collect();
        CellGrid {
            width: r.width as usize,
            height: r.height as usize,
            cells,
        }
    }

    /// Mean of the valid 8-neighbours of a pixel, clamped per channel to
    /// the neighbours' range. `None` when no neighbour is valid.
    fn fill_value(&self, x: usize, y: usize) -> Option<FilledPixel> {
        let mut n = 0u32;
        let mut sum = [0u32; 3];
        let mut lo = [u8::MAX; 3];
        let mut hi = [0u8; 3];
        let mut dsum = 0.0f64;
        let mut dlo = f32::INFINITY;
        let mut dhi = 0.0f32;
        for_each_neighbor(self.width, self.height, x, y, |j| {
            let c = self.cells[j];
            if !c.valid() {
                return;
            }
            n += 1;
            for ch in 0..3 {
                let v = c.channel(ch);
                sum[ch] += v as u32;
                lo[ch] = lo[ch].min(v);
                hi[ch] = hi[ch].max(v);
            }
            let d = c.depth();
            dsum += d as f64;
            dlo = dlo.min(d);
            dhi = dhi.max(d);
        });
        if n == 0 {
            return None;
        }
        let mut rgb = [0u8; 3];
        for ch in 0..3 {
            let mean = (sum[ch] + n / 2) / n;
            rgb[ch] = (mean as u8).clamp(lo[ch], hi[ch]);
        }
        let depth = ((dsum / n as f64) as f32).clamp(dlo, dhi);
        Some(FilledPixel {
            index: y * self.width + x,
            rgb,
            depth,
        })
    }

    /// Unpacks the grid; invalid pixels are black with depth 0.
    fn into_raster(self) -> Raster {
        let mut r = Raster::empty(self.width as u32, self.height as u32);
        for (i, c) in self.cells.into_iter().enumerate() {
            if c.valid() {
                r.set_rgb(i, [0, 1, 2].map(|ch| c.channel(ch)));
                r.depth[i] = c.depth();
                r.valid[i] = true;
            }
        }
        r
    }

    fn fill_at(&self, i: usize) -> Option<FilledPixel> {
        let (x, y) = coords(i, self.width);
        self.fill_value(x, y)
    }

    /// Fills of one sweep over every invalid pixel, in raster order.
    fn sweep(&self) -> Vec<FilledPixel> {
        let w = self.width;
        (0..self.height)
            .into_par_iter()
            .flat_map_iter(|y| {
                (0..w).filter_map(move |x| {
                    if self.cells[y * w + x].valid() {
                        None
                    } else {
                        self.fill_value(x, y)
                    }
                })
            })
            .collect()
    }
}

/// One synchronous fill sweep over the whole raster: every invalid pixel
/// with a valid neighbour, computed from the current buffer. Exposed for
/// replaying [`fill_holes`] step by step.
pub fn fill_iteration(r: &Raster) -> Vec<FilledPixel> {
    CellGrid::from_raster(r).sweep()
}

/// Writes one sweep's fills into a raster, marking them valid.
pub fn apply_fills(r: &mut Raster, fills: &[FilledPixel]) {
    for f in fills {
        r.set_rgb(f.index, f.rgb);
        r.depth[f.index] = f.depth;
        r.valid[f.index] = true;
    }
}

/// Iterative clamped-mean hole filling.
///
/// Each sweep fills every invalid pixel that has at least one valid
/// 8-neighbour with the per-channel mean of those neighbours, clamped to
/// their range; depth is filled the same way. Sweeps read the previous
/// buffer only. Pixels still empty after `max_fill_iterations` sweeps are
/// black, depth 0, invalid.
pub fn fill_holes(raw: &RawRender, params: &RenderParams) -> Result<RgbdImage> {
    if !raw.raster.valid.iter().any(|v| *v) {
        return Err(Error::invalid("cannot fill a render without any valid pixel"));
    }
    let mut grid = CellGrid::from_raster(&raw.raster);
    let (w, h) = (grid.width, grid.height);
    let mut queued = vec![false; grid.cells.len()];
    let mut frontier: Vec<usize> = Vec::new();
    for iteration in 0..params.max_fill_iterations {
        // the first sweep scans the raster, later ones the last fills' neighbours
        let fills: Vec<FilledPixel> = if iteration == 0 {
            grid.sweep()
        } else {
            frontier.par_iter().filter_map(|&i| grid.fill_at(i)).collect()
        };
        for f in &fills {
            grid.cells[f.index] = Cell::pack(f.rgb, f.depth);
        }
        frontier.clear();
        for f in &fills {
            let (x, y) = coords(f.index, w);
            for_each_neighbor(w, h, x, y, |j| {
                if !grid.cells[j].valid() && !queued[j] {
                    queued[j] = true;
                    frontier.push(j);
                }
            });
        }
        for &j in &frontier {
            queued[j] = false;
        }
        if frontier.is_empty() {
            break;
        }
    }
    RgbdImage::new(String::new(), raw.pose, raw.intrinsics, grid.into_raster())
}

/// World point seen at pixel `(u, v)` of an RGBD image.
pub fn unproject(image: &RgbdImage, u: u32, v: u32) -> Result<Vector3<f64>> {
    if u >= image.width() || v >= image.height() {
        return Err(Error::invalid(format!("pixel ({u}, {v}) is outside the image")));
    }
    let i = image.raster.index(u, v);
    let d = image.raster.depth[i];
    if !image.raster.valid[i] || !(d > 0.0) {
        return Err(Error::invalid(format!("pixel ({u}, {v}) has no depth")));
    }
    let pc = image.intrinsics.backproject(u as f64, v as f64, d as f64);
    Ok(image.pose.inverse().transform(&pc))
}
