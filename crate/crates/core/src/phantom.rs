//! Synthetic vessel masks with known geometry.
//!
//! A tube is a polyline with a radius function of arclength `s`:
//! `r(s) = (base_radius - taper * s) * prod_k (1 - severity_k * bump((s - s_k) / width_k))`
//! where `bump(u) = (1 + cos(pi u)) / 2` on `|u| <= 1` and zero elsewhere.
//! The mask is the union of disks of radius `r(s)` centred along the path.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{BinaryMask, PixelPoint};
use crate::stenosis::{grade, Grade};

/// Arclength step between stamped disks.
const STAMP_STEP: f64 = 0.25;
/// Smallest radius any tube may reach, so every centreline pixel is foreground.
pub const MIN_TUBE_RADIUS: f64 = 1.0;
/// Severities used by the random generators.
/// Stenosis width as a multiple of the tube radius. Below roughly 1.2 the
/// neighbouring disks overhang the neck and the drawn lumen is wider than the
/// radius function says.
pub const WIDTH_RATIO: std::ops::Range<f64> = 1.5..2.0;

pub const SEVERITY_LEVELS: [f64; 4] = [0.3, 0.5, 0.6, 0.8];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StenosisSpec {
    /// Arclength of the narrowest point, measured from the first path vertex.
    pub position: f64,
    pub severity: f64,
    /// Half-width of the narrowing along the path.
    pub width: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TubeSpec {
    pub path: Vec<[f64; 2]>,
    pub base_radius: f64,
    /// Radius lost per unit of arclength.
    #[serde(default)]
    pub taper: f64,
    #[serde(default)]
    pub stenoses: Vec<StenosisSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhantomSpec {
    pub width: u32,
    pub height: u32,
    #[serde(default)]
    pub seed: u64,
    pub tubes: Vec<TubeSpec>,
}

fn bump(u: f64) -> f64 {
    if u.abs() <= 1.0 {
        (1.0 + (PI * u).cos()) / 2.0
    } else {
        0.0
    }
}

impl TubeSpec {
    pub fn length(&self) -> f64 {
        self.path
            .windows(2)
            .map(|w| (w[1][0] - w[0][0]).hypot(w[1][1] - w[0][1]))
            .sum()
    }

    pub fn nominal_radius(&self, s: f64) -> f64 {
        self.base_radius - self.taper * s
    }

    pub fn radius_at(&self, s: f64) -> f64 {
        let s = s.clamp(0.0, self.length());
        self.stenoses.iter().fold(self.nominal_radius(s), |r, st| {
            r * (1.0 - st.severity * bump((s - st.position) / st.width))
        })
    }

    /// Point on the path at arclength `s` (clamped to the path).
    pub fn point_at(&self, s: f64) -> [f64; 2] {
        let mut remaining = s.max(0.0);
        for w in self.path.windows(2) {
            let seg = (w[1][0] - w[0][0]).hypot(w[1][1] - w[0][1]);
            if remaining <= seg && seg > 0.0 {
                let t = remaining / seg;
                return [w[0][0] + t * (w[1][0] - w[0][0]), w[0][1] + t * (w[1][1] - w[0][1])];
            }
            remaining -= seg;
        }
        *self.path.last().expect("validated path has points")
    }

    /// Severity a perfect measurement would report: narrowest radius against
    /// the mean of the radii where the narrowing begins and ends.
    pub fn expected_eta(&self, stenosis: &StenosisSpec) -> f64 {
        let r_c = self.radius_at(stenosis.position);
        let r_s = self.radius_at(stenosis.position - stenosis.width);
        let r_e = self.radius_at(stenosis.position + stenosis.width);
        1.0 - r_c / ((r_s + r_e) / 2.0)
    }

    fn validate(&self, index: usize, width: u32, height: u32) -> Result<()> {
        let fail = |msg: String| Err(Error::PhantomSpec(format!("tube {index}: {msg}")));
        if self.path.len() < 2 {
            return fail("path needs at least two points".into());
        }
        if !(self.base_radius.is_finite() && self.base_radius >= MIN_TUBE_RADIUS) {
            return fail(format!("base_radius must be at least {MIN_TUBE_RADIUS}"));
        }
        if !(self.taper.is_finite() && self.taper >= 0.0) {
            return fail("taper must be non-negative".into());
        }
        let margin = self.base_radius;
        for p in &self.path {
            let inside = p[0].is_finite()
                && p[1].is_finite()
                && p[0] >= margin
                && p[1] >= margin
                && p[0] <= width as f64 - 1.0 - margin
                && p[1] <= height as f64 - 1.0 - margin;
            if !inside {
                return fail(format!("path point ({}, {}) is closer than {margin} px to the border", p[0], p[1]));
            }
        }
        let length = self.length();
        if length <= 0.0 {
            return fail("path has zero length".into());
        }
        if self.nominal_radius(length) < MIN_TUBE_RADIUS {
            return fail(format!("taper shrinks the radius below {MIN_TUBE_RADIUS} px"));
        }
        for (k, st) in self.stenoses.iter().enumerate() {
            if !(st.severity > 0.0 && st.severity < 1.0) {
                return fail(format!("stenosis {k}: severity must lie in (0, 1)"));
            }
            if !(st.width >= 3.0 && st.width.is_finite()) {
                return fail(format!("stenosis {k}: width must be at least 3 px"));
            }
            if !(st.position >= 0.0 && st.position <= length) {
                return fail(format!("stenosis {k}: position outside [0, {length}]"));
            }
            if self.radius_at(st.position) < MIN_TUBE_RADIUS {
                return fail(format!("stenosis {k}: narrowest radius below {MIN_TUBE_RADIUS} px"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StenosisTruth {
    pub tube: usize,
    /// Arclength along the tube.
    pub position: f64,
    pub x: u32,
    pub y: u32,
    pub severity: f64,
    pub expected_eta: f64,
    pub grade: Option<Grade>,
}

impl StenosisTruth {
    pub fn point(&self) -> PixelPoint {
        PixelPoint::new(self.x, self.y)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TubeTruth {
    pub path: Vec<[f64; 2]>,
    pub length: f64,
    /// `(arclength, radius)` samples at unit spacing, ending exactly at `length`.
    pub radius: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhantomTruth {
    pub spec: PhantomSpec,
    pub mask: BinaryMask,
    pub tubes: Vec<TubeTruth>,
    pub stenoses: Vec<StenosisTruth>,
}

/// One labeled stenosis point, as stored in annotation files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationPoint {
    pub x: u32,
    pub y: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grade: Option<Grade>,
}

/// Image name to labeled stenosis points.
pub type Annotations = BTreeMap<String, Vec<AnnotationPoint>>;

#[derive(Serialize)]
struct TruthDocument<'a> {
    schema_version: u32,
    width: u32,
    height: u32,
    seed: u64,
    spec: &'a PhantomSpec,
    tubes: &'a [TubeTruth],
    stenoses: &'a [StenosisTruth],
}

impl PhantomTruth {
    pub fn annotation_points(&self) -> Vec<AnnotationPoint> {
        self.stenoses
            .iter()
            .map(|s| AnnotationPoint { x: s.x, y: s.y, grade: s.grade })
            .collect()
    }

    /// Full truth (spec, sampled radius functions, stenoses) as pretty JSON.
    pub fn to_json(&self) -> String {
        let doc = TruthDocument {
            schema_version: 1,
            width: self.spec.width,
            height: self.spec.height,
            seed: self.spec.seed,
            spec: &self.spec,
            tubes: &self.tubes,
            stenoses: &self.stenoses,
        };
        serde_json::to_string_pretty(&doc).expect("truth serializes")
    }
}

impl PhantomSpec {
    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::PhantomSpec("dimensions must be positive".into()));
        }
        for (i, t) in self.tubes.iter().enumerate() {
            t.validate(i, self.width, self.height)?;
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::PhantomSpec(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("spec serializes")
    }

    /// Horizontal tube through the middle of the image, radius 8.5, with one
    /// 0.6-severity narrowing at its midpoint.
    pub fn straight_tube(width: u32, height: u32) -> Self {
        let y = (height as f64 - 1.0) / 2.0;
        let margin = 0.1 * width as f64;
        let start = margin.max(9.0);
        let end = width as f64 - 1.0 - start;
        let length = end - start;
        PhantomSpec {
            width,
            height,
            seed: 0,
            tubes: vec![TubeSpec {
                path: vec![[start, y], [end, y]],
                base_radius: 8.5,
                taper: 0.0,
                stenoses: vec![StenosisSpec { position: length / 2.0, severity: 0.6, width: 12.0 }],
            }],
        }
    }

    /// A single gently curved tube crossing the image at a random angle with
    /// one or two narrowings drawn from [`SEVERITY_LEVELS`].
    pub fn random_tube(width: u32, height: u32, seed: u64) -> Self {
        crossing_tube(width, height, seed, false)
    }

    /// Like [`random_tube`](Self::random_tube) but straight, slightly wider,
    /// and running along one of the four lattice directions (0°, 45°, 90°,
    /// 135°), so the centerline carries no staircase jitter.
    pub fn lattice_tube(width: u32, height: u32, seed: u64) -> Self {
        crossing_tube(width, height, seed, true)
    }
}

fn crossing_tube(width: u32, height: u32, seed: u64, lattice: bool) -> PhantomSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (w, h) = (width as f64, height as f64);
    // lattice tubes are drawn a little wider so one pixel of radius error
    // moves severity by less than a tenth
    let base_radius = if lattice { rng.gen_range(9.5..12.5) } else { rng.gen_range(6.5..9.5) };
    let angle = if lattice {
        rng.gen_range(0..4) as f64 * PI / 4.0
    } else {
        rng.gen_range(0.0..PI)
    };
    let (dx, dy) = (angle.cos(), angle.sin());
    let (cx, cy) = ((w - 1.0) / 2.0, (h - 1.0) / 2.0);

    // longest chord through the centre that keeps the margin
    let margin = base_radius + 2.0;
    let reach = |d: f64, limit: f64| {
        if d.abs() < 1e-12 {
            f64::INFINITY
        } else {
            (limit / 2.0 - margin - 1.0) / d.abs()
        }
    };
    let half = reach(dx, w).min(reach(dy, h)) * 0.8;
    let amplitude = if lattice { 0.0 } else { rng.gen_range(-0.08..0.08) * 2.0 * half };
    let (nx, ny) = (-dy, dx);
    let segments = if lattice { 1 } else { 48 };
    let path: Vec<[f64; 2]> = (0..=segments)
        .map(|k| {
            let t = k as f64 / segments as f64;
            let along = -half + 2.0 * half * t;
            let off = amplitude * (PI * t).sin();
            [cx + along * dx + off * nx, cy + along * dy + off * ny]
        })
        .collect();

    let mut tube = TubeSpec { path, base_radius, taper: 0.0, stenoses: Vec::new() };
    let length = tube.length();
    let count = if length > 300.0 { rng.gen_range(1..=2) } else { 1 };
    let width_px = base_radius * rng.gen_range(WIDTH_RATIO.clone());
    for k in 0..count {
        let slot = length / count as f64;
        let lo = slot * k as f64 + 2.5 * width_px;
        let hi = slot * (k + 1) as f64 - 2.5 * width_px;
        let position = if hi > lo { rng.gen_range(lo..hi) } else { slot * (k as f64 + 0.5) };
        let severity = SEVERITY_LEVELS[rng.gen_range(0..SEVERITY_LEVELS.len())];
        tube.stenoses.push(StenosisSpec { position, severity, width: width_px });
    }
    PhantomSpec { width, height, seed, tubes: vec![tube] }
}

fn stamp_disk(mask: &mut BinaryMask, c: [f64; 2], r: f64) {
    // pixels on the rim count as inside even when rounding lands them a few
    // ulps out, so mirrored specs give mirrored masks
    let r2 = r * r * (1.0 + 1e-12) + 1e-12;
    let x0 = (c[0] - r).floor().max(0.0) as i64;
    let x1 = (c[0] + r).ceil().min(mask.width() as f64 - 1.0) as i64;
    let y0 = (c[1] - r).floor().max(0.0) as i64;
    let y1 = (c[1] + r).ceil().min(mask.height() as f64 - 1.0) as i64;
    for y in y0..=y1 {
        let dy = y as f64 - c[1];
        for x in x0..=x1 {
            let dx = x as f64 - c[0];
            if dx * dx + dy * dy <= r2 {
                mask.set(x as u32, y as u32, true);
            }
        }
    }
}

fn sample_positions(length: f64, step: f64) -> Vec<f64> {
    let n = (length / step).ceil().max(1.0) as usize;
    (0..=n).map(|k| length * k as f64 / n as f64).collect()
}

/// Rasterizes `spec` and records its analytic truth.
pub fn generate(spec: &PhantomSpec) -> Result<PhantomTruth> {
    spec.validate()?;
    let mut mask = BinaryMask::new(spec.width, spec.height)?;
    let mut tubes = Vec::with_capacity(spec.tubes.len());
    let mut stenoses = Vec::new();

    for (index, tube) in spec.tubes.iter().enumerate() {
        let length = tube.length();
        for s in sample_positions(length, STAMP_STEP) {
            stamp_disk(&mut mask, tube.point_at(s), tube.radius_at(s));
        }
        let radius = sample_positions(length, 1.0)
            .into_iter()
            .map(|s| [s, tube.radius_at(s)])
            .collect();
        tubes.push(TubeTruth { path: tube.path.clone(), length, radius });

        for st in &tube.stenoses {
            let c = tube.point_at(st.position);
            let (x, y) = (c[0].round() as u32, c[1].round() as u32);
            let expected_eta = tube.expected_eta(st);
            stenoses.push(StenosisTruth {
                tube: index,
                position: st.position,
                x,
                y,
                severity: st.severity,
                expected_eta,
                grade: grade(expected_eta).ok().flatten(),
            });
        }
    }
    Ok(PhantomTruth { spec: spec.clone(), mask, tubes, stenoses })
}

/// Random binary tree of straight tubes, `2^depth - 1` in total. Children
/// start at their parent's end, are no wider than the parent, and leave at
/// 20 to 70 degrees from the parent direction. About half the tubes carry one
/// narrowing placed at least two narrowing-widths away from either end.
pub fn generate_tree(width: u32, height: u32, seed: u64, depth: u32) -> Result<PhantomTruth> {
    if depth == 0 {
        return Err(Error::PhantomSpec("tree depth must be at least 1".into()));
    }
    if depth > 10 {
        return Err(Error::PhantomSpec("tree depth above 10 is not supported".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (w, h) = (width as f64, height as f64);
    let extent = w.min(h);
    let root_radius = rng.gen_range(5.5..8.5);
    if extent < 8.0 * root_radius {
        return Err(Error::PhantomSpec(format!("image {width}x{height} is too small for a tree")));
    }

    let heading = rng.gen_range(0.0..2.0 * PI);
    let (cx, cy) = ((w - 1.0) / 2.0, (h - 1.0) / 2.0);
    let root_len = 0.38 * extent;
    let root_start = [cx - 0.3 * extent * heading.cos(), cy - 0.3 * extent * heading.sin()];

    struct Pending {
        start: [f64; 2],
        heading: f64,
        length: f64,
        radius: f64,
        level: u32,
    }

    let mut tubes = Vec::new();
    let mut queue = std::collections::VecDeque::from([Pending {
        start: root_start,
        heading,
        length: root_len,
        radius: root_radius,
        level: 1,
    }]);

    while let Some(p) = queue.pop_front() {
        let margin = p.radius + 1.0;
        let (dx, dy) = (p.heading.cos(), p.heading.sin());
        // shorten so the tube stays inside the margin
        let mut length = p.length;
        for (c, d, limit) in [(p.start[0], dx, w), (p.start[1], dy, h)] {
            if d > 1e-12 {
                length = length.min((limit - 1.0 - margin - c) / d);
            } else if d < -1e-12 {
                length = length.min((c - margin) / -d);
            }
        }
        let length = length.max(1.0);
        let end = [p.start[0] + length * dx, p.start[1] + length * dy];
        let end_radius = p.radius;

        let mut tube = TubeSpec {
            path: vec![p.start, end],
            base_radius: p.radius,
            taper: 0.0,
            stenoses: Vec::new(),
        };
        let st_width = (WIDTH_RATIO.start * p.radius).max(4.0);
        if rng.gen_bool(0.5) && length >= 4.0 * st_width + 2.0 {
            let position = rng.gen_range(2.0 * st_width..=length - 2.0 * st_width);
            let severity = SEVERITY_LEVELS[rng.gen_range(0..SEVERITY_LEVELS.len())];
            if p.radius * (1.0 - severity) >= MIN_TUBE_RADIUS {
                tube.stenoses.push(StenosisSpec { position, severity, width: st_width });
            }
        }
        tubes.push(tube);

        if p.level < depth {
            for side in [1.0, -1.0] {
                let turn = rng.gen_range(20.0f64..=70.0).to_radians();
                let shrink = rng.gen_range(0.7..0.95);
                queue.push_back(Pending {
                    start: end,
                    heading: p.heading + side * turn,
                    length: p.length * 0.65,
                    radius: (end_radius * shrink).max(MIN_TUBE_RADIUS + 1.0).min(end_radius),
                    level: p.level + 1,
                });
            }
        }
    }

    generate(&PhantomSpec { width, height, seed, tubes })
}
