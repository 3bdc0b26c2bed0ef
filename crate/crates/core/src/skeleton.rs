//! Centerline extraction by Guo–Hall parallel thinning, and decomposition of
//! the resulting skeleton into branches between junctions and endpoints.

use std::collections::{BTreeSet, VecDeque};
use std::sync::OnceLock;

use serde::Serialize;

use crate::raster::{BinaryMask, PixelPoint, NEIGHBORS8};

/// A one-pixel-wide centerline image produced by [`thin`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Skeleton {
    mask: BinaryMask,
}

impl Skeleton {
    /// Wraps a mask that is already a thinning fixpoint.
    pub fn from_thinned(mask: BinaryMask) -> Self {
        Skeleton { mask }
    }

    pub fn mask(&self) -> &BinaryMask {
        &self.mask
    }

    pub fn into_mask(self) -> BinaryMask {
        self.mask
    }

    pub fn source_dims(&self) -> (u32, u32) {
        self.mask.dims()
    }

    pub fn pixel_count(&self) -> usize {
        self.mask.count_foreground()
    }
}

/// Deletion tables for the two Guo–Hall subiterations, indexed by the
/// 8-neighborhood bit pattern (bit `k` set when `NEIGHBORS8[k]` is foreground).
fn deletion_tables() -> &'static [[bool; 256]; 2] {
    static TABLES: OnceLock<[[bool; 256]; 2]> = OnceLock::new();
    TABLES.get_or_init(|| {
        let mut tables = [[false; 256]; 2];
        for (pass, table) in tables.iter_mut().enumerate() {
            for (pattern, entry) in table.iter_mut().enumerate() {
                *entry = guo_hall_deletable(pattern as u8, pass);
            }
        }
        tables
    })
}

fn guo_hall_deletable(pattern: u8, pass: usize) -> bool {
    let bit = |k: usize| (pattern >> k) & 1 == 1;
    // p2..p9 clockwise from north
    let (p2, p3, p4, p5, p6, p7, p8, p9) =
        (bit(0), bit(1), bit(2), bit(3), bit(4), bit(5), bit(6), bit(7));

    let crossing = (!p2 && (p3 || p4)) as u8
        + (!p4 && (p5 || p6)) as u8
        + (!p6 && (p7 || p8)) as u8
        + (!p8 && (p9 || p2)) as u8;
    let n1 = (p9 || p2) as u8 + (p3 || p4) as u8 + (p5 || p6) as u8 + (p7 || p8) as u8;
    let n2 = (p2 || p3) as u8 + (p4 || p5) as u8 + (p6 || p7) as u8 + (p8 || p9) as u8;
    let n = n1.min(n2);
    let m = if pass == 0 {
        (p6 || p7 || !p9) && p8
    } else {
        (p2 || p3 || !p5) && p4
    };
    crossing == 1 && (2..=3).contains(&n) && !m
}

fn neighborhood(mask: &BinaryMask, x: u32, y: u32) -> u8 {
    let mut pattern = 0u8;
    for (k, (dx, dy)) in NEIGHBORS8.iter().enumerate() {
        if mask.get_signed(x as i64 + dx, y as i64 + dy) {
            pattern |= 1 << k;
        }
    }
    pattern
}

/// Thins `mask` to its Guo–Hall fixpoint: both subiterations are repeated
/// until a full pass removes nothing.
pub fn thin(mask: &BinaryMask) -> Skeleton {
    let tables = deletion_tables();
    let mut current = mask.clone();
    let mut live: Vec<PixelPoint> = mask.foreground().collect();
    let mut doomed = Vec::new();

    loop {
        let mut removed_any = false;
        for table in tables.iter() {
            doomed.clear();
            doomed.extend(
                live.iter()
                    .copied()
                    .filter(|p| table[neighborhood(&current, p.x, p.y) as usize]),
            );
            if doomed.is_empty() {
                continue;
            }
            removed_any = true;
            for p in &doomed {
                current.set(p.x, p.y, false);
            }
            live.retain(|p| current.get(p.x, p.y));
        }
        if !removed_any {
            break;
        }
    }
    Skeleton { mask: current }
}

/// Number of 8-connected foreground components.
pub fn count_components8(mask: &BinaryMask) -> usize {
    component_sizes8(mask).len()
}

/// Sizes of the 8-connected foreground components, in row-major discovery order.
pub fn component_sizes8(mask: &BinaryMask) -> Vec<usize> {
    let mut seen = vec![false; mask.len()];
    let mut sizes = Vec::new();
    let mut queue = VecDeque::new();
    for start in mask.foreground() {
        if seen[mask.index(start.x, start.y)] {
            continue;
        }
        seen[mask.index(start.x, start.y)] = true;
        queue.push_back(start);
        let mut size = 0;
        while let Some(p) = queue.pop_front() {
            size += 1;
            for q in neighbors(mask, p) {
                let i = mask.index(q.x, q.y);
                if !seen[i] {
                    seen[i] = true;
                    queue.push_back(q);
                }
            }
        }
        sizes.push(size);
    }
    sizes
}

/// Foreground 8-neighbors of `p`, clockwise from north.
fn neighbors(mask: &BinaryMask, p: PixelPoint) -> impl Iterator<Item = PixelPoint> + '_ {
    NEIGHBORS8.iter().filter_map(move |(dx, dy)| {
        let (x, y) = (p.x as i64 + dx, p.y as i64 + dy);
        mask.get_signed(x, y).then(|| PixelPoint::new(x as u32, y as u32))
    })
}

/// Splits skeleton pixels into branch points (three or more skeleton
/// neighbors) and endpoints (exactly one).
pub fn classify_points(skel: &Skeleton) -> (BTreeSet<PixelPoint>, BTreeSet<PixelPoint>) {
    let mask = &skel.mask;
    let mut branch_points = BTreeSet::new();
    let mut endpoints = BTreeSet::new();
    for p in mask.foreground() {
        match mask.neighbor_count(p.x, p.y) {
            1 => {
                endpoints.insert(p);
            }
            n if n >= 3 => {
                branch_points.insert(p);
            }
            _ => {}
        }
    }
    (branch_points, endpoints)
}

/// What a branch is attached to at one of its ends.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", content = "junction", rename_all = "snake_case")]
pub enum Terminal {
    Endpoint,
    /// Index into [`VesselGraph::junctions`].
    Junction(usize),
    /// The branch is a closed loop with no junction.
    Loop,
    /// A lone skeleton pixel.
    Isolated,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Branch {
    pub points: Vec<PixelPoint>,
    pub start: Terminal,
    pub end: Terminal,
}

impl Branch {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn is_closed(&self) -> bool {
        self.start == Terminal::Loop
    }

    /// Short dangling piece left by thinning: fewer than `min_len` pixels with
    /// a free endpoint, or a stub hanging off a single junction at both ends.
    pub fn is_spur(&self, min_len: usize) -> bool {
        if self.len() >= min_len {
            return false;
        }
        match (self.start, self.end) {
            (Terminal::Endpoint, _) | (_, Terminal::Endpoint) => true,
            (Terminal::Junction(a), Terminal::Junction(b)) => a == b,
            _ => false,
        }
    }
}

/// Skeleton decomposed into branches joined at junctions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct VesselGraph {
    pub width: u32,
    pub height: u32,
    pub branches: Vec<Branch>,
    pub branch_points: BTreeSet<PixelPoint>,
    pub endpoints: BTreeSet<PixelPoint>,
    /// 8-connected clusters of branch points, each acting as one node.
    pub junctions: Vec<Vec<PixelPoint>>,
}

/// Branches shorter than this with a free end are discarded before profiling.
pub const MIN_SPUR_LENGTH: usize = 3;

impl VesselGraph {
    /// Indices of branches kept for profiling (spurs removed).
    pub fn retained_branches(&self) -> Vec<usize> {
        (0..self.branches.len())
            .filter(|&i| !self.branches[i].is_spur(MIN_SPUR_LENGTH))
            .collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("graph serializes")
    }
}

/// Partitions the skeleton into maximal paths between branch points and
/// endpoints. Each open branch runs from its row-major-smaller terminal to the
/// other; a closed loop starts at its row-major-first pixel.
pub fn trace_branches(skel: &Skeleton) -> VesselGraph {
    let mask = &skel.mask;
    let (branch_points, endpoints) = classify_points(skel);
    let (width, height) = mask.dims();

    // junction clusters
    let mut junction_of = vec![usize::MAX; mask.len()];
    let mut junctions: Vec<Vec<PixelPoint>> = Vec::new();
    for &seed in &branch_points {
        if junction_of[mask.index(seed.x, seed.y)] != usize::MAX {
            continue;
        }
        let id = junctions.len();
        let mut cluster = vec![seed];
        junction_of[mask.index(seed.x, seed.y)] = id;
        let mut k = 0;
        while k < cluster.len() {
            let p = cluster[k];
            k += 1;
            for q in neighbors(mask, p) {
                let i = mask.index(q.x, q.y);
                if branch_points.contains(&q) && junction_of[i] == usize::MAX {
                    junction_of[i] = id;
                    cluster.push(q);
                }
            }
        }
        cluster.sort();
        junctions.push(cluster);
    }

    let is_branch_point = |p: PixelPoint| junction_of[mask.index(p.x, p.y)] != usize::MAX;
    let mut visited = vec![false; mask.len()];
    let mut branches = Vec::new();

    let attached_junction = |p: PixelPoint| {
        neighbors(mask, p)
            .filter_map(|q| {
                let j = junction_of[mask.index(q.x, q.y)];
                (j != usize::MAX).then_some(j)
            })
            .min()
    };

    let terminal_kind = |p: PixelPoint, path_len: usize| {
        if let Some(j) = attached_junction(p) {
            Terminal::Junction(j)
        } else if path_len == 1 && mask.neighbor_count(p.x, p.y) == 0 {
            Terminal::Isolated
        } else {
            Terminal::Endpoint
        }
    };

    let walk = |start: PixelPoint, visited: &mut Vec<bool>| -> Vec<PixelPoint> {
        let mut path = vec![start];
        visited[mask.index(start.x, start.y)] = true;
        let mut current = start;
        loop {
            let next = neighbors(mask, current)
                .filter(|&q| !is_branch_point(q) && !visited[mask.index(q.x, q.y)])
                .min();
            match next {
                Some(q) => {
                    visited[mask.index(q.x, q.y)] = true;
                    path.push(q);
                    current = q;
                }
                None => break,
            }
        }
        path
    };

    // open paths: from endpoints first, then from pixels touching a junction
    let mut starts: Vec<PixelPoint> = endpoints.iter().copied().collect();
    starts.extend(
        mask.foreground()
            .filter(|&p| !is_branch_point(p) && attached_junction(p).is_some()),
    );
    for start in starts {
        if visited[mask.index(start.x, start.y)] {
            continue;
        }
        let mut points = walk(start, &mut visited);
        let mut first = *points.first().unwrap();
        let mut last = *points.last().unwrap();
        if last < first {
            points.reverse();
            std::mem::swap(&mut first, &mut last);
        }
        let n = points.len();
        branches.push(Branch {
            start: terminal_kind(first, n),
            end: terminal_kind(last, n),
            points,
        });
    }

    // isolated pixels and junction-free loops
    for p in mask.foreground().collect::<Vec<_>>() {
        if visited[mask.index(p.x, p.y)] || is_branch_point(p) {
            continue;
        }
        let points = walk(p, &mut visited);
        let n = points.len();
        let closed = n >= 3 && points[0].is_adjacent8(points[n - 1]);
        let (start, end) = if closed {
            (Terminal::Loop, Terminal::Loop)
        } else {
            (terminal_kind(points[0], n), terminal_kind(points[n - 1], n))
        };
        branches.push(Branch { points, start, end });
    }

    branches.sort_by(|a, b| {
        (a.points[0], a.points[a.len() - 1], a.len()).cmp(&(b.points[0], b.points[b.len() - 1], b.len()))
    });

    VesselGraph {
        width,
        height,
        branches,
        branch_points,
        endpoints,
        junctions,
    }
}
