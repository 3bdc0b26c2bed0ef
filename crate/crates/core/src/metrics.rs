//! Segmentation and stenosis-detection scoring.
//!
//! Ratios whose denominator is zero are reported as `None` (undefined),
//! which is kept distinct from a genuine zero.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{BinaryMask, PixelPoint, ProbMask};

pub const DEFAULT_GAMMA: f64 = 10.0;
/// Probabilities are clamped to `[BCE_EPSILON, 1 - BCE_EPSILON]` before taking logs.
pub const BCE_EPSILON: f64 = 1e-7;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

impl std::ops::Add for ConfusionCounts {
    type Output = ConfusionCounts;

    fn add(self, o: ConfusionCounts) -> ConfusionCounts {
        ConfusionCounts {
            tp: self.tp + o.tp,
            fp: self.fp + o.fp,
            fn_: self.fn_ + o.fn_,
            tn: self.tn + o.tn,
        }
    }
}

fn same_dims(a: (u32, u32), b: (u32, u32)) -> Result<()> {
    if a != b {
        return Err(Error::DimensionMismatch { left: a, right: b });
    }
    Ok(())
}

/// Pixel-wise confusion counts with foreground as the positive class.
pub fn confusion(pred: &BinaryMask, truth: &BinaryMask) -> Result<ConfusionCounts> {
    same_dims(pred.dims(), truth.dims())?;
    let mut c = ConfusionCounts::default();
    for (&p, &t) in pred.pixels().iter().zip(truth.pixels()) {
        match (p, t) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    Ok(c)
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegMetrics {
    pub iou: Option<f64>,
    pub acc: Option<f64>,
    pub spe: Option<f64>,
    pub sen: Option<f64>,
    pub f1: Option<f64>,
}

impl SegMetrics {
    /// Names of the metrics that are undefined.
    pub fn undefined(&self) -> Vec<&'static str> {
        [
            ("iou", self.iou),
            ("acc", self.acc),
            ("spe", self.spe),
            ("sen", self.sen),
            ("f1", self.f1),
        ]
        .into_iter()
        .filter(|(_, v)| v.is_none())
        .map(|(k, _)| k)
        .collect()
    }
}

/// IoU, accuracy, specificity, sensitivity and F1 from confusion counts.
pub fn seg_metrics(c: &ConfusionCounts) -> SegMetrics {
    SegMetrics {
        iou: ratio(c.tp, c.tp + c.fp + c.fn_),
        acc: ratio(c.tp + c.tn, c.total()),
        spe: ratio(c.tn, c.tn + c.fp),
        sen: ratio(c.tp, c.tp + c.fn_),
        f1: ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn_),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BceDice {
    pub bce: f64,
    pub dice: f64,
    pub total: f64,
}

/// Weighted sum of mean binary cross-entropy and set Dice loss.
///
/// Cross-entropy uses the clamped probabilities; Dice compares the truth
/// foreground with the prediction binarized at 0.5 (ties go to foreground).
/// Two empty sets have Dice loss 0.
pub fn bce_dice(pred: &ProbMask, truth: &BinaryMask, lambda1: f64, lambda2: f64) -> Result<BceDice> {
    same_dims(pred.dims(), truth.dims())?;
    let n = truth.len() as f64;
    let mut log_sum = 0.0;
    let (mut inter, mut pred_fg, mut truth_fg) = (0u64, 0u64, 0u64);
    for (&p, &t) in pred.values().iter().zip(truth.pixels()) {
        let q = p.clamp(BCE_EPSILON, 1.0 - BCE_EPSILON);
        log_sum += if t { q.ln() } else { (1.0 - q).ln() };
        let hit = p >= 0.5;
        pred_fg += hit as u64;
        truth_fg += t as u64;
        inter += (hit && t) as u64;
    }
    let bce = -log_sum / n;
    let dice = if pred_fg + truth_fg == 0 {
        0.0
    } else {
        // one division of integers, so simple ratios come out correctly rounded
        let sum = pred_fg + truth_fg;
        (sum - 2 * inter) as f64 / sum as f64
    };
    Ok(BceDice { bce, dice, total: lambda1 * bce + lambda2 * dice })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchedPair {
    pub prediction: usize,
    pub label: usize,
    pub distance: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    pub pairs: Vec<MatchedPair>,
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl MatchResult {
    /// Pools counts from several images; pairs are not carried over.
    pub fn pooled<'a>(results: impl IntoIterator<Item = &'a MatchResult>) -> MatchResult {
        results.into_iter().fold(MatchResult::default(), |acc, r| MatchResult {
            pairs: Vec::new(),
            tp: acc.tp + r.tp,
            fp: acc.fp + r.fp,
            fn_: acc.fn_ + r.fn_,
        })
    }
}

/// Minimum-cost assignment on a square cost matrix (Kuhn–Munkres with
/// potentials). Returns the column assigned to each row.
fn assignment(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    // p[j]: row matched to column j (1-based, 0 = none)
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut row_to_col = vec![0; n];
    for j in 1..=n {
        if p[j] > 0 {
            row_to_col[p[j] - 1] = j - 1;
        }
    }
    row_to_col
}

/// One-to-one matching of predicted to labeled stenosis points. A pair may
/// match only if its distance is `< gamma`. Among all valid matchings the
/// one with the most pairs is chosen, and among those the smallest total
/// distance.
pub fn match_stenoses(predicted: &[PixelPoint], labeled: &[PixelPoint], gamma: f64) -> MatchResult {
    let (np, nl) = (predicted.len(), labeled.len());
    let n = np.max(nl);
    let mut pairs = Vec::new();
    if n > 0 && np > 0 && nl > 0 {
        // an unmatched slot costs more than any set of admissible pairs
        let blocked = gamma * (n as f64 + 1.0);
        let cost: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| {
                        if i < np && j < nl {
                            let d = predicted[i].distance(labeled[j]);
                            if d < gamma {
                                return d;
                            }
                        }
                        blocked
                    })
                    .collect()
            })
            .collect();
        for (i, j) in assignment(&cost).into_iter().enumerate() {
            if i < np && j < nl {
                let d = predicted[i].distance(labeled[j]);
                if d < gamma {
                    pairs.push(MatchedPair { prediction: i, label: j, distance: d });
                }
            }
        }
    }
    let tp = pairs.len() as u64;
    MatchResult {
        pairs,
        tp,
        fp: np as u64 - tp,
        fn_: nl as u64 - tp,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionRates {
    pub tpr: Option<f64>,
    pub ppv: Option<f64>,
}

pub fn detection_rates(m: &MatchResult) -> DetectionRates {
    DetectionRates {
        tpr: ratio(m.tp, m.tp + m.fn_),
        ppv: ratio(m.tp, m.tp + m.fp),
    }
}

/// Per-image `(predicted, labeled)` stenosis counts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountSeries {
    pairs: Vec<(u64, u64)>,
}

impl CountSeries {
    pub fn new(pairs: Vec<(u64, u64)>) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::Config("count series needs at least one image".into()));
        }
        Ok(CountSeries { pairs })
    }

    pub fn pairs(&self) -> &[(u64, u64)] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CountErrors {
    pub armse: f64,
    /// Undefined when every image has zero labeled stenoses.
    pub rrmse: Option<f64>,
    /// Images left out of the relative error because they have no labels.
    pub rrmse_excluded: usize,
}

/// Absolute and relative root-mean-square error of stenosis counts.
pub fn count_errors(series: &CountSeries) -> CountErrors {
    let m = series.len() as f64;
    let sq: f64 = series
        .pairs
        .iter()
        .map(|&(nf, nl)| {
            let d = nf as f64 - nl as f64;
            d * d
        })
        .sum();
    let relative: Vec<f64> = series
        .pairs
        .iter()
        .filter(|&&(_, nl)| nl > 0)
        .map(|&(nf, nl)| {
            let r = (nf as f64 - nl as f64) / nl as f64;
            r * r
        })
        .collect();
    let rrmse = (!relative.is_empty())
        .then(|| (relative.iter().sum::<f64>() / relative.len() as f64).sqrt());
    CountErrors {
        armse: (sq / m).sqrt(),
        rrmse,
        rrmse_excluded: series.len() - relative.len(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mask(bits: &[u8]) -> BinaryMask {
        BinaryMask::from_pixels(bits.len() as u32, 1, bits.iter().map(|&b| b == 1).collect()).unwrap()
    }

    fn pt(x: u32, y: u32) -> PixelPoint {
        PixelPoint::new(x, y)
    }

    #[test]
    fn confusion_examples() {
        let c = confusion(&mask(&[1, 1, 0, 0]), &mask(&[1, 0, 1, 0])).unwrap();
        assert_eq!(c, ConfusionCounts { tp: 1, fp: 1, fn_: 1, tn: 1 });
        let all = BinaryMask::from_pixels(2, 2, vec![true; 4]).unwrap();
        let none = BinaryMask::new(2, 2).unwrap();
        assert_eq!(confusion(&all, &none).unwrap(), ConfusionCounts { tp: 0, fp: 4, fn_: 0, tn: 0 });
        let c = confusion(&all, &all).unwrap();
        assert_eq!((c.fp, c.fn_), (0, 0));
    }

    #[test]
    fn confusion_dimension_mismatch() {
        assert!(matches!(
            confusion(&mask(&[1, 0]), &mask(&[1, 0, 1])),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn seg_metric_arithmetic() {
        let m = seg_metrics(&ConfusionCounts { tp: 50, fp: 25, fn_: 25, tn: 900 });
        assert_eq!(m.iou, Some(0.5));
        assert!((m.f1.unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(m.acc, Some(0.95));
        let m = seg_metrics(&ConfusionCounts { tp: 10, fp: 0, fn_: 0, tn: 5 });
        assert_eq!([m.iou, m.acc, m.spe, m.sen, m.f1], [Some(1.0); 5]);
    }

    #[test]
    fn undefined_is_not_zero() {
        // all-foreground truth, perfect prediction: no negatives at all
        let m = seg_metrics(&ConfusionCounts { tp: 4, fp: 0, fn_: 0, tn: 0 });
        assert_eq!(m.spe, None);
        assert_eq!(m.undefined(), vec!["spe"]);
        let m = seg_metrics(&ConfusionCounts { tp: 0, fp: 3, fn_: 0, tn: 1 });
        assert_eq!(m.iou, Some(0.0));
        assert_eq!(m.sen, None);
    }

    #[test]
    fn bce_dice_half_probabilities() {
        let pred = ProbMask::new(2, 1, vec![0.5, 0.5]).unwrap();
        let l = bce_dice(&pred, &mask(&[1, 0]), 1.0, 1.0).unwrap();
        assert!((l.bce - std::f64::consts::LN_2).abs() < 1e-9);
        assert_eq!(l.dice, 1.0 / 3.0);
        assert_eq!(l.total, l.bce + l.dice);
    }

    #[test]
    fn bce_dice_perfect() {
        let truth = mask(&[1, 0, 0, 1, 1]);
        let l = bce_dice(&ProbMask::from_mask(&truth), &truth, 1.0, 1.0).unwrap();
        assert_eq!(l.dice, 0.0);
        assert!(l.bce <= 1e-6 && l.bce > 0.0);
        assert!(l.total <= 1e-6);
    }

    #[test]
    fn bce_dice_weights_and_empty_sets() {
        let truth = mask(&[0, 0]);
        let pred = ProbMask::new(2, 1, vec![0.2, 0.1]).unwrap();
        let l = bce_dice(&pred, &truth, 2.0, 0.5).unwrap();
        assert_eq!(l.dice, 0.0);
        assert!((l.total - 2.0 * l.bce).abs() < 1e-15);
    }

    #[test]
    fn match_examples() {
        let m = match_stenoses(&[pt(5, 5)], &[pt(5, 5)], 10.0);
        assert_eq!((m.tp, m.fp, m.fn_), (1, 0, 0));
        let m = match_stenoses(&[pt(0, 0)], &[pt(20, 0)], 10.0);
        assert_eq!((m.tp, m.fp, m.fn_), (0, 1, 1));
        let m = match_stenoses(&[pt(13, 10), pt(10, 14)], &[pt(10, 10)], 10.0);
        assert_eq!((m.tp, m.fp, m.fn_), (1, 1, 0));
        assert_eq!(m.pairs[0].prediction, 0);
        assert_eq!(m.pairs[0].distance, 3.0);
    }

    #[test]
    fn gamma_is_strict() {
        let m = match_stenoses(&[pt(0, 0)], &[pt(10, 0)], 10.0);
        assert_eq!(m.tp, 0);
    }

    #[test]
    fn matching_prefers_more_pairs_over_shorter_ones() {
        // closest-first pairing would take (p0, l0) and strand p1
        let preds = [pt(10, 10), pt(10, 18)];
        let labels = [pt(10, 11), pt(10, 1)];
        let m = match_stenoses(&preds, &labels, 10.0);
        assert_eq!(m.tp, 2);
    }

    #[test]
    fn empty_sides() {
        let m = match_stenoses(&[], &[pt(1, 1), pt(2, 2)], 10.0);
        assert_eq!((m.tp, m.fp, m.fn_), (0, 0, 2));
        let r = detection_rates(&m);
        assert_eq!(r.tpr, Some(0.0));
        assert_eq!(r.ppv, None);
    }

    #[test]
    fn rates_arithmetic() {
        let r = detection_rates(&MatchResult { pairs: vec![], tp: 3, fp: 2, fn_: 1 });
        assert_eq!(r.tpr, Some(0.75));
        assert_eq!(r.ppv, Some(0.6));
    }

    #[test]
    fn count_error_examples() {
        let e = count_errors(&CountSeries::new(vec![(3, 4), (5, 5)]).unwrap());
        assert!((e.armse - 0.5f64.sqrt()).abs() < 1e-12);
        assert!((e.rrmse.unwrap() - (1.0f64 / 32.0).sqrt()).abs() < 1e-12);
        let e = count_errors(&CountSeries::new(vec![(6, 4)]).unwrap());
        assert_eq!((e.armse, e.rrmse), (2.0, Some(0.5)));
        let e = count_errors(&CountSeries::new(vec![(2, 2), (7, 7)]).unwrap());
        assert_eq!((e.armse, e.rrmse), (0.0, Some(0.0)));
    }

    #[test]
    fn rrmse_skips_unlabeled_images() {
        let e = count_errors(&CountSeries::new(vec![(1, 0), (3, 2)]).unwrap());
        assert_eq!(e.rrmse_excluded, 1);
        assert_eq!(e.rrmse, Some(0.5));
        let e = count_errors(&CountSeries::new(vec![(1, 0)]).unwrap());
        assert_eq!(e.rrmse, None);
        assert_eq!(e.armse, 1.0);
        assert!(CountSeries::new(vec![]).is_err());
    }
}
