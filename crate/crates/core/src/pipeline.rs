//! End-to-end detection on one mask, batch evaluation against annotations,
//! and the JSON report documents written by the CLI.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{self, CountSeries, DetectionRates, MatchResult};
use crate::phantom::{AnnotationPoint, Annotations};
use crate::radius::{self, RadiusProfile, DEFAULT_MAX_RADIUS};
use crate::raster::{BinaryMask, PixelPoint};
use crate::skeleton::{self, Skeleton, VesselGraph};
use crate::stenosis::{self, DetectorConfig, FindingRecord, StenosisFinding};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub detector: DetectorConfig,
    pub max_radius: u32,
    /// Use distance-transform radii instead of the circle search.
    pub exact: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            detector: DetectorConfig::default(),
            max_radius: DEFAULT_MAX_RADIUS,
            exact: false,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_radius == 0 {
            return Err(Error::Config("max_radius must be at least 1".into()));
        }
        self.detector.validate()
    }
}

#[derive(Debug, Clone)]
pub struct Analysis {
    pub skeleton: Skeleton,
    pub graph: VesselGraph,
    /// Profiles of the branches kept after spur pruning, in branch order.
    pub profiles: Vec<RadiusProfile>,
    pub findings: Vec<StenosisFinding>,
}

/// Thins, traces, profiles and detects on one mask.
///
/// With `threads > 1` branch profiling runs on a dedicated pool of that size;
/// the result is identical to the sequential one.
pub fn analyze(mask: &BinaryMask, config: &PipelineConfig, threads: usize) -> Result<Analysis> {
    config.validate()?;
    let skeleton = skeleton::thin(mask);
    let graph = skeleton::trace_branches(&skeleton);
    let retained = graph.retained_branches();
    let field = config.exact.then(|| radius::exact_distance_transform(mask));

    let profile_one = |id: usize| match &field {
        Some(f) => radius::profile_branch_exact(f, &graph, id, config.max_radius),
        None => radius::profile_branch(mask, &graph, id, config.max_radius),
    };

    let profiles: Vec<RadiusProfile> = if threads > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
        pool.install(|| retained.par_iter().map(|&id| profile_one(id)).collect::<Result<Vec<_>>>())?
    } else {
        retained.iter().map(|&id| profile_one(id)).collect::<Result<Vec<_>>>()?
    };

    let findings = stenosis::detect_all(&profiles, &config.detector);
    Ok(Analysis { skeleton, graph, profiles, findings })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectReport {
    pub schema_version: u32,
    pub image: String,
    pub width: u32,
    pub height: u32,
    pub config: PipelineConfig,
    pub branch_count: usize,
    pub profiled_branches: usize,
    pub findings: Vec<FindingRecord>,
}

impl DetectReport {
    pub fn new(image: impl Into<String>, mask: &BinaryMask, config: &PipelineConfig, analysis: &Analysis) -> Self {
        DetectReport {
            schema_version: SCHEMA_VERSION,
            image: image.into(),
            width: mask.width(),
            height: mask.height(),
            config: *config,
            branch_count: analysis.graph.branches.len(),
            profiled_branches: analysis.profiles.len(),
            findings: analysis.findings.iter().map(FindingRecord::from).collect(),
        }
    }
}

pub fn load_annotations(path: impl AsRef<Path>) -> Result<Annotations> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|source| Error::Json { path: path.to_path_buf(), source })
}

pub fn annotations_to_json(annotations: &Annotations) -> String {
    serde_json::to_string_pretty(annotations).expect("annotations serialize")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageEval {
    pub image: String,
    pub n_predicted: u64,
    pub n_labeled: u64,
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub matches: Vec<metrics::MatchedPair>,
}

impl ImageEval {
    pub fn new(image: impl Into<String>, predicted: &[PixelPoint], labels: &[AnnotationPoint], gamma: f64) -> Self {
        let labeled: Vec<PixelPoint> = labels.iter().map(|a| PixelPoint::new(a.x, a.y)).collect();
        let m = metrics::match_stenoses(predicted, &labeled, gamma);
        ImageEval {
            image: image.into(),
            n_predicted: predicted.len() as u64,
            n_labeled: labeled.len() as u64,
            tp: m.tp,
            fp: m.fp,
            fn_: m.fn_,
            matches: m.pairs,
        }
    }

    fn as_match(&self) -> MatchResult {
        MatchResult { pairs: Vec::new(), tp: self.tp, fp: self.fp, fn_: self.fn_ }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub m: usize,
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tpr: Option<f64>,
    pub ppv: Option<f64>,
    pub armse: Option<f64>,
    pub rrmse: Option<f64>,
    pub rrmse_excluded: usize,
    /// Names of aggregate metrics that are undefined.
    pub undefined: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema_version: u32,
    pub gamma: f64,
    pub images: Vec<ImageEval>,
    /// Annotated images for which no mask was found.
    pub missing: Vec<String>,
    pub aggregate: Aggregate,
}

/// Pools per-image results: rates from summed TP/FP/FN, count errors over
/// the per-image `(predicted, labeled)` series.
pub fn aggregate(images: Vec<ImageEval>, missing: Vec<String>, gamma: f64) -> EvalReport {
    let pooled = MatchResult::pooled(images.iter().map(ImageEval::as_match).collect::<Vec<_>>().iter());
    let DetectionRates { tpr, ppv } = metrics::detection_rates(&pooled);
    let counts = CountSeries::new(images.iter().map(|e| (e.n_predicted, e.n_labeled)).collect())
        .ok()
        .map(|s| metrics::count_errors(&s));
    let (armse, rrmse, rrmse_excluded) = match counts {
        Some(c) => (Some(c.armse), c.rrmse, c.rrmse_excluded),
        None => (None, None, 0),
    };
    let undefined = [("tpr", tpr), ("ppv", ppv), ("armse", armse), ("rrmse", rrmse)]
        .into_iter()
        .filter(|(_, v)| v.is_none())
        .map(|(k, _)| k.to_string())
        .collect();
    EvalReport {
        schema_version: SCHEMA_VERSION,
        gamma,
        aggregate: Aggregate {
            m: images.len(),
            tp: pooled.tp,
            fp: pooled.fp,
            fn_: pooled.fn_,
            tpr,
            ppv,
            armse,
            rrmse,
            rrmse_excluded,
            undefined,
        },
        images,
        missing,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phantom::{generate, PhantomSpec};

    fn labels(points: &[(u32, u32)]) -> Vec<AnnotationPoint> {
        points.iter().map(|&(x, y)| AnnotationPoint { x, y, grade: None }).collect()
    }

    #[test]
    fn empty_mask_has_no_findings() {
        let m = BinaryMask::new(64, 64).unwrap();
        let a = analyze(&m, &PipelineConfig::default(), 1).unwrap();
        assert!(a.findings.is_empty());
        assert!(a.graph.branches.is_empty());
    }

    #[test]
    fn straight_phantom_single_finding() {
        let truth = generate(&PhantomSpec::straight_tube(240, 120)).unwrap();
        let a = analyze(&truth.mask, &PipelineConfig::default(), 1).unwrap();
        assert_eq!(a.findings.len(), 1, "{:?}", a.findings);
        let f = &a.findings[0];
        assert!(f.location.distance(truth.stenoses[0].point()) < 10.0);
        assert!((f.eta - truth.stenoses[0].expected_eta).abs() <= 0.1);
    }

    #[test]
    fn threads_do_not_change_results() {
        let truth = generate(&PhantomSpec::random_tube(300, 300, 4)).unwrap();
        let one = analyze(&truth.mask, &PipelineConfig::default(), 1).unwrap();
        let four = analyze(&truth.mask, &PipelineConfig::default(), 4).unwrap();
        assert_eq!(one.findings, four.findings);
        assert_eq!(one.profiles, four.profiles);
    }

    #[test]
    fn exact_backend_runs() {
        let truth = generate(&PhantomSpec::straight_tube(240, 120)).unwrap();
        let cfg = PipelineConfig { exact: true, ..Default::default() };
        let a = analyze(&truth.mask, &cfg, 1).unwrap();
        assert!(!a.profiles.is_empty());
        assert!(a.profiles.iter().flat_map(|p| p.radii()).all(|r| r >= 1.0));
    }

    #[test]
    fn invalid_config_rejected() {
        let m = BinaryMask::new(8, 8).unwrap();
        let cfg = PipelineConfig { max_radius: 0, ..Default::default() };
        assert!(analyze(&m, &cfg, 1).is_err());
    }

    #[test]
    fn aggregate_identity() {
        let pts = [PixelPoint::new(10, 10), PixelPoint::new(50, 50)];
        let img = ImageEval::new("a.png", &pts, &labels(&[(10, 10), (50, 50)]), 10.0);
        let r = aggregate(vec![img], vec![], 10.0);
        assert_eq!(r.aggregate.tpr, Some(1.0));
        assert_eq!(r.aggregate.ppv, Some(1.0));
        assert_eq!(r.aggregate.armse, Some(0.0));
        assert!(r.aggregate.undefined.is_empty());
    }

    #[test]
    fn aggregate_count_series() {
        let p3: Vec<PixelPoint> = (0..3).map(|i| PixelPoint::new(100 * i, 0)).collect();
        let p5: Vec<PixelPoint> = (0..5).map(|i| PixelPoint::new(100 * i, 0)).collect();
        let a = ImageEval::new("a", &p3, &labels(&[(0, 0), (100, 0), (200, 0), (300, 0)]), 10.0);
        let b = ImageEval::new("b", &p5, &labels(&[(0, 0), (100, 0), (200, 0), (300, 0), (400, 0)]), 10.0);
        let r = aggregate(vec![a, b], vec![], 10.0);
        assert!((r.aggregate.armse.unwrap() - 0.5f64.sqrt()).abs() < 1e-12);
        assert_eq!(r.aggregate.m, 2);
        assert_eq!((r.aggregate.tp, r.aggregate.fp, r.aggregate.fn_), (8, 0, 1));
    }

    #[test]
    fn aggregate_with_no_images() {
        let r = aggregate(vec![], vec!["x.png".into()], 10.0);
        assert_eq!(r.aggregate.armse, None);
        assert_eq!(r.aggregate.undefined, vec!["tpr", "ppv", "armse", "rrmse"]);
    }
}
