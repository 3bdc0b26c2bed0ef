//! Independent reference implementations used as test oracles.

#![allow(dead_code)]

use vessel_qca::metrics::ConfusionCounts;
use vessel_qca::{BinaryMask, PixelPoint};

/// Nearest-background distance by scanning every background pixel, with the
/// one-pixel frame outside the image counted as background.
pub fn brute_edt(mask: &BinaryMask) -> Vec<f64> {
    let (w, h) = (mask.width() as i64, mask.height() as i64);
    let mut background = Vec::new();
    for y in -1..=h {
        for x in -1..=w {
            if !mask.get_signed(x, y) {
                background.push((x, y));
            }
        }
    }
    let mut out = vec![0.0; (w * h) as usize];
    for y in 0..h {
        for x in 0..w {
            if !mask.get(x as u32, y as u32) {
                continue;
            }
            let best = background
                .iter()
                .map(|&(bx, by)| ((bx - x) * (bx - x) + (by - y) * (by - y)) as f64)
                .fold(f64::INFINITY, f64::min);
            out[(y * w + x) as usize] = best.sqrt();
        }
    }
    out
}

/// Confusion counts by direct tally over the raw pixel buffers.
pub fn brute_confusion(pred: &[bool], truth: &[bool]) -> ConfusionCounts {
    let count = |p: bool, t: bool| pred.iter().zip(truth).filter(|&(&a, &b)| a == p && b == t).count() as u64;
    ConfusionCounts { tp: count(true, true), fp: count(true, false), fn_: count(false, true), tn: count(false, false) }
}

/// Best one-to-one matching by exhaustive search: most pairs first, then the
/// smallest summed distance. Returns `(pairs, total distance)`.
pub fn brute_match(pred: &[PixelPoint], labels: &[PixelPoint], gamma: f64) -> (usize, f64) {
    fn go(i: usize, pred: &[PixelPoint], labels: &[PixelPoint], used: &mut Vec<bool>, gamma: f64) -> (usize, f64) {
        if i == pred.len() {
            return (0, 0.0);
        }
        let mut best = go(i + 1, pred, labels, used, gamma);
        for j in 0..labels.len() {
            let d = pred[i].distance(labels[j]);
            if used[j] || d >= gamma {
                continue;
            }
            used[j] = true;
            let (n, t) = go(i + 1, pred, labels, used, gamma);
            used[j] = false;
            let cand = (n + 1, t + d);
            if cand.0 > best.0 || (cand.0 == best.0 && cand.1 < best.1 - 1e-12) {
                best = cand;
            }
        }
        best
    }
    go(0, pred, labels, &mut vec![false; labels.len()], gamma)
}

/// One narrowing found by [`extrema_findings`]: `(index, r_c, r_s, r_e)`.
pub type OracleFinding = (usize, f64, f64, f64);

/// Narrowings read off the extrema of a profile. Equal neighbours are merged
/// first (keeping the earliest index); every interior strict local minimum of
/// the merged sequence is a narrowing whose shoulders are the nearest local
/// maxima on either side (the last value if the rise runs to the end). Only
/// narrowings of severity at least `floor` are returned.
pub fn extrema_findings(radii: &[f64], floor: f64) -> Vec<OracleFinding> {
    let mut merged: Vec<(usize, f64)> = Vec::new();
    for (i, &r) in radii.iter().enumerate() {
        if merged.last().is_none_or(|&(_, last)| last != r) {
            merged.push((i, r));
        }
    }
    let mut out = Vec::new();
    for k in 1..merged.len().saturating_sub(1) {
        let (idx, c) = merged[k];
        if !(merged[k - 1].1 > c && merged[k + 1].1 > c) {
            continue;
        }
        let mut s = k - 1;
        while s > 0 && merged[s - 1].1 > merged[s].1 {
            s -= 1;
        }
        let mut e = k + 1;
        while e + 1 < merged.len() && merged[e + 1].1 > merged[e].1 {
            e += 1;
        }
        let (rs, re) = (merged[s].1, merged[e].1);
        let eta = 1.0 - c / ((rs + re) / 2.0);
        if eta >= floor {
            out.push((idx, c, rs, re));
        }
    }
    out
}
