//! Stenosis detection on radius profiles.
//!
//! Each profile is walked once while tracking a narrowing run (radius falling)
//! followed by a recovery run (radius rising). The point where the narrowing
//! bottoms out is a stenosis candidate, bracketed by the radius at the top of
//! the narrowing (`r_s`) and at the top of the recovery (`r_e`). Severity is
//! `1 - r_c / ((r_s + r_e) / 2)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::radius::RadiusProfile;
use crate::raster::PixelPoint;

/// Lower severity bound of each grade.
pub const MILD_LOWER: f64 = 0.25;
pub const MODERATE_LOWER: f64 = 0.50;
pub const SEVERE_LOWER: f64 = 0.75;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Grade {
    Mild,
    Moderate,
    Severe,
}

impl Grade {
    pub fn as_str(self) -> &'static str {
        match self {
            Grade::Mild => "mild",
            Grade::Moderate => "moderate",
            Grade::Severe => "severe",
        }
    }
}

impl std::fmt::Display for Grade {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Grades a severity fraction on half-open intervals: `[0.25, 0.5)` mild,
/// `[0.5, 0.75)` moderate, `[0.75, 1)` severe. Below 0.25 has no grade.
pub fn grade(eta: f64) -> Result<Option<Grade>> {
    if !(0.0..1.0).contains(&eta) {
        return Err(Error::Severity(eta));
    }
    Ok(if eta >= SEVERE_LOWER {
        Some(Grade::Severe)
    } else if eta >= MODERATE_LOWER {
        Some(Grade::Moderate)
    } else if eta >= MILD_LOWER {
        Some(Grade::Mild)
    } else {
        None
    })
}

/// `1 - r_c / ((r_s + r_e) / 2)`.
pub fn severity(r_c: f64, r_s: f64, r_e: f64) -> f64 {
    1.0 - r_c / ((r_s + r_e) / 2.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StenosisFinding {
    pub location: PixelPoint,
    pub r_c: f64,
    pub r_s: f64,
    pub r_e: f64,
    pub eta: f64,
    pub grade: Grade,
    pub branch_id: usize,
}

/// Serialized form of a finding; severity is rounded to four decimals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FindingRecord {
    pub branch_id: usize,
    pub x: u32,
    pub y: u32,
    pub r_c: f64,
    pub r_s: f64,
    pub r_e: f64,
    pub eta: f64,
    pub grade: Grade,
}

impl From<&StenosisFinding> for FindingRecord {
    fn from(f: &StenosisFinding) -> Self {
        FindingRecord {
            branch_id: f.branch_id,
            x: f.location.x,
            y: f.location.y,
            r_c: f.r_c,
            r_s: f.r_s,
            r_e: f.r_e,
            eta: (f.eta * 1e4).round() / 1e4,
            grade: f.grade,
        }
    }
}

/// Findings as a JSON array of [`FindingRecord`]s.
pub fn findings_to_json(findings: &[StenosisFinding]) -> String {
    let records: Vec<FindingRecord> = findings.iter().map(FindingRecord::from).collect();
    serde_json::to_string(&records).expect("findings serialize")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    /// Branches whose mean diameter (twice the mean radius) is below this are skipped.
    pub min_mean_diameter: f64,
    /// Findings closer than this are merged, keeping the most severe. Zero disables merging.
    pub cluster_threshold_tau: f64,
    /// Findings with severity below this are dropped.
    pub report_floor: f64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig {
            min_mean_diameter: 4.0,
            cluster_threshold_tau: 8.0,
            report_floor: MILD_LOWER,
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.min_mean_diameter.is_finite() && self.min_mean_diameter > 0.0) {
            return Err(Error::Config(format!(
                "min_mean_diameter must be positive, got {}",
                self.min_mean_diameter
            )));
        }
        if !(self.cluster_threshold_tau.is_finite() && self.cluster_threshold_tau >= 0.0) {
            return Err(Error::Config(format!(
                "cluster threshold must be non-negative, got {}",
                self.cluster_threshold_tau
            )));
        }
        if !(0.0..1.0).contains(&self.report_floor) {
            return Err(Error::Config(format!(
                "report_floor must lie in [0, 1), got {}",
                self.report_floor
            )));
        }
        Ok(())
    }

    /// Ungraded severities are never reported, so the floor is at least the mild bound.
    fn effective_floor(&self) -> f64 {
        self.report_floor.max(MILD_LOWER)
    }
}

#[derive(Debug, Clone, Copy)]
enum Run {
    Idle,
    Narrowing { shoulder: usize, min: usize },
    Recovering { shoulder: usize, min: usize },
}

/// Candidate regions along one profile, before grading: `(shoulder, min, peak)` indices.
fn regions(radii: &[f64]) -> Vec<(usize, usize, usize)> {
    let mut out = Vec::new();
    let mut state = Run::Idle;
    for i in 0..radii.len().saturating_sub(1) {
        let (cur, next) = (radii[i], radii[i + 1]);
        state = if cur > next {
            match state {
                Run::Idle => Run::Narrowing { shoulder: i, min: i + 1 },
                Run::Narrowing { shoulder, min } => Run::Narrowing {
                    shoulder,
                    min: if next < radii[min] { i + 1 } else { min },
                },
                Run::Recovering { shoulder, min } => {
                    out.push((shoulder, min, i));
                    Run::Narrowing { shoulder: i, min: i + 1 }
                }
            }
        } else if cur < next {
            match state {
                Run::Narrowing { shoulder, min } | Run::Recovering { shoulder, min } => {
                    Run::Recovering { shoulder, min }
                }
                Run::Idle => Run::Idle,
            }
        } else {
            // equal radii extend whichever run is in progress
            state
        };
    }
    if let Run::Recovering { shoulder, min } = state {
        out.push((shoulder, min, radii.len() - 1));
    }
    out
}

/// Stenosis candidates along one branch profile, graded and filtered by the
/// report floor. A narrowing that never recovers before the branch ends
/// yields nothing.
pub fn detect_branch(profile: &RadiusProfile, config: &DetectorConfig) -> Vec<StenosisFinding> {
    let radii: Vec<f64> = profile.radii().collect();
    let floor = config.effective_floor();
    regions(&radii)
        .into_iter()
        .filter_map(|(shoulder, min, peak)| {
            let (r_s, r_c, r_e) = (radii[shoulder], radii[min], radii[peak]);
            let eta = severity(r_c, r_s, r_e);
            if eta.is_nan() || eta < floor {
                return None;
            }
            let grade = grade(eta).ok().flatten()?;
            Some(StenosisFinding {
                location: profile.entries[min].point,
                r_c,
                r_s,
                r_e,
                eta,
                grade,
                branch_id: profile.branch_id,
            })
        })
        .collect()
}

/// Total order used before clustering: most severe first, then row-major
/// location, then branch.
fn severity_order(a: &StenosisFinding, b: &StenosisFinding) -> std::cmp::Ordering {
    b.eta
        .total_cmp(&a.eta)
        .then_with(|| a.location.cmp(&b.location))
        .then_with(|| a.branch_id.cmp(&b.branch_id))
}

/// Keeps a finding only if no more severe finding was already kept within
/// distance `< tau`. Output is sorted by descending severity.
pub fn cluster(mut findings: Vec<StenosisFinding>, tau: f64) -> Vec<StenosisFinding> {
    findings.sort_by(severity_order);
    let mut kept: Vec<StenosisFinding> = Vec::with_capacity(findings.len());
    for f in findings {
        if kept.iter().all(|k| k.location.distance(f.location) >= tau) {
            kept.push(f);
        }
    }
    kept
}

/// `true` when the branch is too thin to assess.
pub fn is_excluded(profile: &RadiusProfile, config: &DetectorConfig) -> bool {
    2.0 * profile.mean_radius() < config.min_mean_diameter
}

/// Runs [`detect_branch`] on every profile that passes the mean-diameter
/// exclusion, then clusters the pooled findings.
pub fn detect_all(profiles: &[RadiusProfile], config: &DetectorConfig) -> Vec<StenosisFinding> {
    let pooled = profiles
        .iter()
        .filter(|p| !p.is_empty() && !is_excluded(p, config))
        .flat_map(|p| detect_branch(p, config))
        .collect();
    cluster(pooled, config.cluster_threshold_tau)
}
