//! Local vessel radius along the centerline.
//!
//! The primary estimator grows a circle around a centerline pixel one pixel
//! at a time and stops at the first radius whose circumference touches
//! background. An exact Euclidean distance transform is provided alongside it
//! for validation and as an alternative real-valued backend.

use std::fmt::Write as _;
use std::sync::OnceLock;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::raster::{BinaryMask, PixelPoint};
use crate::skeleton::VesselGraph;

pub const DEFAULT_MAX_RADIUS: u32 = 50;

const CACHED_RADII: u32 = 128;

/// Integer offsets visited on the circle of radius `r`: `8r` equally spaced
/// angles (arc spacing below one pixel), rounded to the nearest pixel, with
/// repeats removed.
fn circle_offsets(r: u32) -> Vec<(i64, i64)> {
    let n = 8 * r as usize;
    let rf = r as f64;
    let mut out: Vec<(i64, i64)> = (0..n)
        .map(|k| {
            let theta = std::f64::consts::TAU * k as f64 / n as f64;
            ((rf * theta.cos()).round() as i64, (rf * theta.sin()).round() as i64)
        })
        .collect();
    out.sort_unstable();
    out.dedup();
    out
}

fn cached_offsets() -> &'static [Vec<(i64, i64)>] {
    static TABLE: OnceLock<Vec<Vec<(i64, i64)>>> = OnceLock::new();
    TABLE.get_or_init(|| (0..=CACHED_RADII).map(circle_offsets).collect())
}

fn circle_hits_background(mask: &BinaryMask, cx: i64, cy: i64, offsets: &[(i64, i64)]) -> bool {
    offsets
        .iter()
        .any(|(dx, dy)| !mask.get_signed(cx + dx, cy + dy))
}

/// Smallest `r` in `1..=max_radius` whose sampled circle around `center`
/// contains a background or out-of-bounds pixel; `max_radius` if none does.
pub fn inscribed_radius(mask: &BinaryMask, center: PixelPoint, max_radius: u32) -> Result<u32> {
    if max_radius == 0 {
        return Err(Error::Config("max_radius must be at least 1".into()));
    }
    if !mask.contains(center) {
        return Err(Error::OutOfBounds {
            x: center.x as i64,
            y: center.y as i64,
            width: mask.width(),
            height: mask.height(),
        });
    }
    if !mask.get(center.x, center.y) {
        return Err(Error::BackgroundCenter { x: center.x, y: center.y });
    }
    let (cx, cy) = (center.x as i64, center.y as i64);
    let table = cached_offsets();
    for r in 1..=max_radius {
        let hit = if r <= CACHED_RADII {
            circle_hits_background(mask, cx, cy, &table[r as usize])
        } else {
            circle_hits_background(mask, cx, cy, &circle_offsets(r))
        };
        if hit {
            return Ok(r);
        }
    }
    Ok(max_radius)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RadiusEntry {
    pub point: PixelPoint,
    pub radius: f64,
}

/// Radii along one branch, in the branch's point order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RadiusProfile {
    pub branch_id: usize,
    pub entries: Vec<RadiusEntry>,
}

impl RadiusProfile {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn radii(&self) -> impl Iterator<Item = f64> + '_ {
        self.entries.iter().map(|e| e.radius)
    }

    pub fn mean_radius(&self) -> f64 {
        if self.entries.is_empty() {
            return 0.0;
        }
        self.radii().sum::<f64>() / self.entries.len() as f64
    }

    /// Builds a profile from bare radii, laying points out along a row.
    /// Handy for exercising the detector without a mask.
    pub fn from_radii(branch_id: usize, radii: &[f64]) -> Self {
        RadiusProfile {
            branch_id,
            entries: radii
                .iter()
                .enumerate()
                .map(|(i, &radius)| RadiusEntry { point: PixelPoint::new(i as u32, 0), radius })
                .collect(),
        }
    }
}

fn branch(graph: &VesselGraph, branch_id: usize) -> Result<&crate::skeleton::Branch> {
    graph.branches.get(branch_id).ok_or(Error::BranchIndex {
        index: branch_id,
        count: graph.branches.len(),
    })
}

/// Circle-search radius at every point of one branch.
pub fn profile_branch(
    mask: &BinaryMask,
    graph: &VesselGraph,
    branch_id: usize,
    max_radius: u32,
) -> Result<RadiusProfile> {
    let entries = branch(graph, branch_id)?
        .points
        .iter()
        .map(|&point| {
            inscribed_radius(mask, point, max_radius).map(|r| RadiusEntry { point, radius: r as f64 })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RadiusProfile { branch_id, entries })
}

/// Distance-transform radius at every point of one branch, capped at `max_radius`.
pub fn profile_branch_exact(
    field: &DistanceField,
    graph: &VesselGraph,
    branch_id: usize,
    max_radius: u32,
) -> Result<RadiusProfile> {
    let entries = branch(graph, branch_id)?
        .points
        .iter()
        .map(|&point| {
            let d = field.get(point.x, point.y);
            if d <= 0.0 {
                return Err(Error::BackgroundCenter { x: point.x, y: point.y });
            }
            Ok(RadiusEntry { point, radius: d.min(max_radius as f64) })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RadiusProfile { branch_id, entries })
}

/// CSV dump with header `branch_id,index,x,y,radius`.
pub fn profiles_to_csv(profiles: &[RadiusProfile]) -> String {
    let mut out = String::from("branch_id,index,x,y,radius\n");
    for p in profiles {
        for (i, e) in p.entries.iter().enumerate() {
            let _ = writeln!(out, "{},{},{},{},{}", p.branch_id, i, e.point.x, e.point.y, e.radius);
        }
    }
    out
}

/// Per-pixel Euclidean distance to the nearest background pixel; zero on
/// background. Pixels outside the image count as background.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceField {
    width: u32,
    height: u32,
    values: Vec<f64>,
}

impl DistanceField {
    pub fn get(&self, x: u32, y: u32) -> f64 {
        self.values[y as usize * self.width as usize + x as usize]
    }

    pub fn dims(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// One-dimensional squared distance transform of a sampled function
/// (lower envelope of parabolas rooted at each sample).
fn envelope_1d(f: &[f64], out: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    if n == 0 {
        return;
    }
    let mut k = 0usize;
    v[0] = 0;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for q in 1..n {
        if f[q].is_infinite() {
            continue;
        }
        loop {
            let p = v[k];
            if f[p].is_infinite() {
                // the envelope so far is empty; replace it
                v[k] = q;
                z[k] = f64::NEG_INFINITY;
                z[k + 1] = f64::INFINITY;
                break;
            }
            let s = ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64)) / (2.0 * (q as f64 - p as f64));
            if s <= z[k] {
                if k == 0 {
                    v[0] = q;
                    z[0] = f64::NEG_INFINITY;
                    z[1] = f64::INFINITY;
                    break;
                }
                k -= 1;
                continue;
            }
            k += 1;
            v[k] = q;
            z[k] = s;
            z[k + 1] = f64::INFINITY;
            break;
        }
    }
    let mut k = 0usize;
    for (q, slot) in out.iter_mut().enumerate() {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let p = v[k];
        let d = q as f64 - p as f64;
        *slot = if f[p].is_infinite() { f64::INFINITY } else { d * d + f[p] };
    }
}

/// Exact Euclidean distance transform by two separable lower-envelope passes.
pub fn exact_distance_transform(mask: &BinaryMask) -> DistanceField {
    // one-pixel background frame stands in for everything outside the image
    let (w, h) = (mask.width() as usize + 2, mask.height() as usize + 2);
    let mut grid = vec![0.0f64; w * h];
    for y in 0..mask.height() as usize {
        for x in 0..mask.width() as usize {
            if mask.get(x as u32, y as u32) {
                grid[(y + 1) * w + x + 1] = f64::INFINITY;
            }
        }
    }

    let longest = w.max(h);
    let mut f = vec![0.0; longest];
    let mut out = vec![0.0; longest];
    let mut v = vec![0usize; longest];
    let mut z = vec![0.0; longest + 1];

    for x in 0..w {
        for y in 0..h {
            f[y] = grid[y * w + x];
        }
        envelope_1d(&f[..h], &mut out[..h], &mut v, &mut z);
        for y in 0..h {
            grid[y * w + x] = out[y];
        }
    }
    for y in 0..h {
        f[..w].copy_from_slice(&grid[y * w..(y + 1) * w]);
        envelope_1d(&f[..w], &mut out[..w], &mut v, &mut z);
        grid[y * w..(y + 1) * w].copy_from_slice(&out[..w]);
    }

    let (mw, mh) = (mask.width() as usize, mask.height() as usize);
    let mut values = Vec::with_capacity(mw * mh);
    for y in 0..mh {
        for x in 0..mw {
            values.push(grid[(y + 1) * w + x + 1].sqrt());
        }
    }
    DistanceField { width: mask.width(), height: mask.height(), values }
}
