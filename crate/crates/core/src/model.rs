//! Core domain types: trajectories, sub-trajectories, labels, metric
//! parameters and dataset validation.
//!
//! Times are always expressed in years relative to a dataset-wide epoch
//! (t = 0). Feature vectors are dense `f64` rows of a fixed per-dataset
//! dimension.

use std::collections::BTreeMap;
use std::fmt;

use crate::error::{Error, Result};

/// Days per year used whenever day-denominated times are converted.
pub const DAYS_PER_YEAR: f64 = 365.25;

/// One observation of one series: a feature vector at a point in time.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureObservation {
    /// Series identifier (one eye, device, sensor, ...).
    pub series_id: String,
    /// Identifier of the subject the series belongs to.
    pub patient_id: String,
    /// Observation time in years since the dataset epoch.
    pub t: f64,
    /// Dense feature vector.
    pub features: Vec<f64>,
}

/// All observations of one series, ordered by time.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesTrajectory {
    pub series_id: String,
    pub patient_id: String,
    pub observations: Vec<FeatureObservation>,
}

impl SeriesTrajectory {
    /// Builds a trajectory, sorting observations by time (stable, so equal
    /// timestamps keep their input order and are later caught by
    /// [`validate_dataset`]).
    pub fn new(
        series_id: impl Into<String>,
        patient_id: impl Into<String>,
        mut observations: Vec<FeatureObservation>,
    ) -> Self {
        observations.sort_by(|a, b| a.t.partial_cmp(&b.t).unwrap_or(std::cmp::Ordering::Equal));
        SeriesTrajectory {
            series_id: series_id.into(),
            patient_id: patient_id.into(),
            observations,
        }
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    /// Feature dimension, or `None` for an empty series.
    pub fn dim(&self) -> Option<usize> {
        self.observations.first().map(|o| o.features.len())
    }

    /// Elapsed time between first and last observation (0 for length < 2).
    pub fn duration(&self) -> f64 {
        match (self.observations.first(), self.observations.last()) {
            (Some(a), Some(b)) => b.t - a.t,
            _ => 0.0,
        }
    }
}

/// Issue category reported by [`validate_dataset`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IssueKind {
    DimensionMismatch,
    NonFiniteFeature,
    NonMonotoneTimestamp,
    DuplicateTimestamp,
    NegativeTimestamp,
    InconsistentIdentity,
    EmptySeries,
}

impl fmt::Display for IssueKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            IssueKind::DimensionMismatch => "dimension mismatch",
            IssueKind::NonFiniteFeature => "non-finite feature",
            IssueKind::NonMonotoneTimestamp => "non-monotone timestamps",
            IssueKind::DuplicateTimestamp => "duplicate timestamp",
            IssueKind::NegativeTimestamp => "negative timestamp",
            IssueKind::InconsistentIdentity => "inconsistent identity",
            IssueKind::EmptySeries => "empty series",
        };
        f.write_str(s)
    }
}

/// One offending series and what is wrong with it.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationIssue {
    pub series_id: String,
    pub kind: IssueKind,
    pub detail: String,
}

impl fmt::Display for ValidationIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}: {}", self.series_id, self.kind, self.detail)
    }
}

/// Outcome of dataset validation; empty means the dataset is usable.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub issues: Vec<ValidationIssue>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.issues.is_empty()
    }

    pub fn len(&self) -> usize {
        self.issues.len()
    }

    /// Converts a non-empty report into an error, passing a clean one through.
    pub fn into_result(self) -> Result<()> {
        if self.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(self))
        }
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.issues.is_empty() {
            return f.write_str("no issues");
        }
        for (i, issue) in self.issues.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{issue}")?;
        }
        Ok(())
    }
}

/// Checks every series for structural problems: inconsistent feature
/// dimensions (against the first non-empty series), non-finite features,
/// negative / non-increasing / duplicate timestamps, observations whose
/// embedded identifiers disagree with their parent series, and empty series.
pub fn validate_dataset(trajectories: &[SeriesTrajectory]) -> ValidationReport {
    let mut issues = Vec::new();
    let expected_dim = trajectories
        .iter()
        .find_map(|t| t.dim().filter(|&d| d > 0));

    for traj in trajectories {
        let sid = &traj.series_id;
        if traj.is_empty() {
            issues.push(ValidationIssue {
                series_id: sid.clone(),
                kind: IssueKind::EmptySeries,
                detail: "series has no observations".into(),
            });
            continue;
        }
        for (i, obs) in traj.observations.iter().enumerate() {
            if obs.series_id != *sid || obs.patient_id != traj.patient_id {
                issues.push(ValidationIssue {
                    series_id: sid.clone(),
                    kind: IssueKind::InconsistentIdentity,
                    detail: format!(
                        "observation {i} carries ids {}/{} under series {}/{}",
                        obs.series_id, obs.patient_id, sid, traj.patient_id
                    ),
                });
            }
            if let Some(d) = expected_dim {
                if obs.features.len() != d {
                    issues.push(ValidationIssue {
                        series_id: sid.clone(),
                        kind: IssueKind::DimensionMismatch,
                        detail: format!(
                            "observation {i} has {} features, dataset dimension is {d}",
                            obs.features.len()
                        ),
                    });
                }
            }
            if let Some(c) = obs.features.iter().position(|v| !v.is_finite()) {
                issues.push(ValidationIssue {
                    series_id: sid.clone(),
                    kind: IssueKind::NonFiniteFeature,
                    detail: format!("observation {i} feature {c} is not finite"),
                });
            }
            if !obs.t.is_finite() || obs.t < 0.0 {
                issues.push(ValidationIssue {
                    series_id: sid.clone(),
                    kind: IssueKind::NegativeTimestamp,
                    detail: format!("observation {i} has time {:?}", obs.t),
                });
            }
            if i > 0 {
                let prev = traj.observations[i - 1].t;
                if obs.t == prev {
                    issues.push(ValidationIssue {
                        series_id: sid.clone(),
                        kind: IssueKind::DuplicateTimestamp,
                        detail: format!("observations {} and {i} share time {:?}", i - 1, obs.t),
                    });
                } else if obs.t < prev {
                    issues.push(ValidationIssue {
                        series_id: sid.clone(),
                        kind: IssueKind::NonMonotoneTimestamp,
                        detail: format!(
                            "observation {i} at {:?} precedes observation {} at {:?}",
                            obs.t,
                            i - 1,
                            prev
                        ),
                    });
                }
            }
        }
    }
    ValidationReport { issues }
}

/// Inclusive elapsed-time bounds a sub-trajectory must satisfy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpanBounds {
    pub min: f64,
    pub max: f64,
}

impl SpanBounds {
    pub fn new(min: f64, max: f64) -> Result<Self> {
        if !min.is_finite() || !max.is_finite() || min < 0.0 || max < min {
            return Err(Error::InvalidParam(format!(
                "span bounds must satisfy 0 <= min <= max, got [{min}, {max}]"
            )));
        }
        Ok(SpanBounds { min, max })
    }

    /// Whether an elapsed time falls inside the bounds (both ends inclusive).
    pub fn contains(&self, elapsed: f64) -> bool {
        elapsed >= self.min && elapsed <= self.max
    }
}

impl Default for SpanBounds {
    /// One year, plus or minus half a year.
    fn default() -> Self {
        SpanBounds { min: 0.5, max: 1.5 }
    }
}

/// One timestamped point of a sub-trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajPoint {
    pub t: f64,
    pub features: Vec<f64>,
}

/// A contiguous window of one series whose elapsed time lies inside the
/// configured span bounds.
///
/// Invariants (enforced by [`SubTrajectory::new`]): at least two points,
/// strictly increasing times, uniform feature dimension, elapsed time within
/// bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct SubTrajectory {
    pub series_id: String,
    pub patient_id: String,
    /// Index of the first point within the source series.
    pub start_index: usize,
    pub points: Vec<TrajPoint>,
}

impl SubTrajectory {
    pub fn new(
        series_id: impl Into<String>,
        patient_id: impl Into<String>,
        start_index: usize,
        points: Vec<TrajPoint>,
        span: &SpanBounds,
    ) -> Result<Self> {
        let series_id = series_id.into();
        if points.len() < 2 {
            return Err(Error::InvalidTrajectory(format!(
                "sub-trajectory of {series_id} has {} points, need at least 2",
                points.len()
            )));
        }
        let dim = points[0].features.len();
        for (i, p) in points.iter().enumerate() {
            if p.features.len() != dim {
                return Err(Error::InvalidTrajectory(format!(
                    "sub-trajectory of {series_id} mixes dimensions {dim} and {} at point {i}",
                    p.features.len()
                )));
            }
            if !p.t.is_finite() || p.features.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidTrajectory(format!(
                    "sub-trajectory of {series_id} has a non-finite value at point {i}"
                )));
            }
            if i > 0 && p.t <= points[i - 1].t {
                return Err(Error::InvalidTrajectory(format!(
                    "sub-trajectory of {series_id} has non-increasing times at point {i}"
                )));
            }
        }
        let elapsed = points[points.len() - 1].t - points[0].t;
        if !span.contains(elapsed) {
            return Err(Error::InvalidTrajectory(format!(
                "sub-trajectory of {series_id} spans {elapsed:?} years, outside [{}, {}]",
                span.min, span.max
            )));
        }
        Ok(SubTrajectory {
            series_id,
            patient_id: patient_id.into(),
            start_index,
            points,
        })
    }

    /// Extracts the window `[start, end]` (inclusive indices) of a series.
    pub fn from_window(
        traj: &SeriesTrajectory,
        start: usize,
        end: usize,
        span: &SpanBounds,
    ) -> Result<Self> {
        if start >= end || end >= traj.len() {
            return Err(Error::InvalidTrajectory(format!(
                "window [{start}, {end}] is not a valid index range for series {} of length {}",
                traj.series_id,
                traj.len()
            )));
        }
        let points = traj.observations[start..=end]
            .iter()
            .map(|o| TrajPoint {
                t: o.t,
                features: o.features.clone(),
            })
            .collect();
        SubTrajectory::new(
            traj.series_id.clone(),
            traj.patient_id.clone(),
            start,
            points,
            span,
        )
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points[0].features.len()
    }

    /// First feature vector.
    pub fn start(&self) -> &[f64] {
        &self.points[0].features
    }

    /// Last feature vector.
    pub fn end(&self) -> &[f64] {
        &self.points[self.points.len() - 1].features
    }

    pub fn t_start(&self) -> f64 {
        self.points[0].t
    }

    pub fn t_end(&self) -> f64 {
        self.points[self.points.len() - 1].t
    }

    /// Elapsed time covered by the window.
    pub fn elapsed(&self) -> f64 {
        self.t_end() - self.t_start()
    }

    /// Index of the last point within the source series.
    pub fn end_index(&self) -> usize {
        self.start_index + self.points.len() - 1
    }

    /// Stable identifier: `series:first_index-last_index`.
    pub fn id(&self) -> String {
        format!("{}:{}-{}", self.series_id, self.start_index, self.end_index())
    }

    /// The same window translated by a constant feature-space offset.
    pub fn translate(&self, offset: &[f64]) -> Result<Self> {
        if offset.len() != self.dim() {
            return Err(Error::DimensionMismatch(format!(
                "offset has {} components, sub-trajectory dimension is {}",
                offset.len(),
                self.dim()
            )));
        }
        let points = self
            .points
            .iter()
            .map(|p| TrajPoint {
                t: p.t,
                features: p
                    .features
                    .iter()
                    .zip(offset)
                    .map(|(v, o)| v + o)
                    .collect(),
            })
            .collect();
        Ok(SubTrajectory {
            series_id: self.series_id.clone(),
            patient_id: self.patient_id.clone(),
            start_index: self.start_index,
            points,
        })
    }
}

/// Mixing weights of the composite distance.
///
/// `lambda` weighs the endpoint (transition) term against warped shape within
/// a path distance; `phi` weighs the start-aligned (relative) path distance
/// against the absolute one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricParams {
    pub lambda: f64,
    pub phi: f64,
}

impl MetricParams {
    pub fn new(lambda: f64, phi: f64) -> Result<Self> {
        for (name, v) in [("lambda", lambda), ("phi", phi)] {
            if !v.is_finite() || !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidParam(format!(
                    "{name} must lie in [0, 1], got {v:?}"
                )));
            }
        }
        Ok(MetricParams { lambda, phi })
    }
}

impl Default for MetricParams {
    fn default() -> Self {
        MetricParams {
            lambda: 0.75,
            phi: 0.75,
        }
    }
}

/// What a label value measures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TargetKind {
    TimeToLateAmd,
    TimeToCnv,
    TimeToCrora,
    VisualAcuity,
}

impl TargetKind {
    pub const ALL: [TargetKind; 4] = [
        TargetKind::TimeToLateAmd,
        TargetKind::TimeToCnv,
        TargetKind::TimeToCrora,
        TargetKind::VisualAcuity,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            TargetKind::TimeToLateAmd => "time_to_late_amd",
            TargetKind::TimeToCnv => "time_to_cnv",
            TargetKind::TimeToCrora => "time_to_crora",
            TargetKind::VisualAcuity => "visual_acuity",
        }
    }

    /// Whether the value is a non-negative time-to-event in years.
    pub fn is_time_to_event(&self) -> bool {
        !matches!(self, TargetKind::VisualAcuity)
    }
}

impl fmt::Display for TargetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for TargetKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "time_to_late_amd" => Ok(TargetKind::TimeToLateAmd),
            "time_to_cnv" => Ok(TargetKind::TimeToCnv),
            "time_to_crora" => Ok(TargetKind::TimeToCrora),
            "visual_acuity" => Ok(TargetKind::VisualAcuity),
            other => Err(Error::InvalidParam(format!("unknown target kind {other:?}"))),
        }
    }
}

/// One ground-truth value attached to a series at a point in time.
#[derive(Debug, Clone, PartialEq)]
pub struct Label {
    pub series_id: String,
    /// Time the label refers to, in years since the dataset epoch.
    pub t: f64,
    pub kind: TargetKind,
    pub value: f64,
}

impl Label {
    pub fn new(series_id: impl Into<String>, t: f64, kind: TargetKind, value: f64) -> Result<Self> {
        let series_id = series_id.into();
        if !t.is_finite() || t < 0.0 {
            return Err(Error::InvalidParam(format!(
                "label time must be finite and >= 0, got {t:?} for {series_id}"
            )));
        }
        if !value.is_finite() {
            return Err(Error::InvalidParam(format!(
                "label value must be finite, got {value:?} for {series_id}"
            )));
        }
        if kind.is_time_to_event() && value < 0.0 {
            return Err(Error::InvalidParam(format!(
                "{kind} must be >= 0, got {value:?} for {series_id}"
            )));
        }
        Ok(Label {
            series_id,
            t,
            kind,
            value,
        })
    }
}

/// Disease grade assigned to a visit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum GradeClass {
    Healthy,
    EarlyAmd,
    Cnv,
    Crora250To1000,
    CroraGe1000,
}

impl GradeClass {
    pub const ALL: [GradeClass; 5] = [
        GradeClass::Healthy,
        GradeClass::EarlyAmd,
        GradeClass::Cnv,
        GradeClass::Crora250To1000,
        GradeClass::CroraGe1000,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            GradeClass::Healthy => "healthy",
            GradeClass::EarlyAmd => "early_amd",
            GradeClass::Cnv => "cnv",
            GradeClass::Crora250To1000 => "crora_250_1000",
            GradeClass::CroraGe1000 => "crora_ge1000",
        }
    }

    /// Position in [`GradeClass::ALL`], used for one-hot encodings.
    pub fn index(&self) -> usize {
        GradeClass::ALL.iter().position(|g| g == self).unwrap()
    }
}

impl fmt::Display for GradeClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for GradeClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        GradeClass::ALL
            .iter()
            .copied()
            .find(|g| g.as_str() == s)
            .ok_or_else(|| Error::InvalidParam(format!("unknown grade class {s:?}")))
    }
}

/// Demographics of one series (sex is encoded 0/1).
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesMeta {
    pub patient_id: String,
    /// Age in years at the dataset epoch (t = 0 of this series' times).
    pub age_at_epoch: f64,
    pub sex: u8,
}

/// Side information used by the baseline feature encodings: per-series
/// demographics and per-visit grades.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CohortMetadata {
    pub series: BTreeMap<String, SeriesMeta>,
    /// Per series: `(t, grade)` pairs sorted by time.
    pub grades: BTreeMap<String, Vec<(f64, GradeClass)>>,
}

impl CohortMetadata {
    /// Age of the series' patient at time `t` (years since epoch).
    pub fn age_at(&self, series_id: &str, t: f64) -> Option<f64> {
        self.series.get(series_id).map(|m| m.age_at_epoch + t)
    }

    pub fn sex(&self, series_id: &str) -> Option<u8> {
        self.series.get(series_id).map(|m| m.sex)
    }

    /// Grade recorded nearest to `t`, if one lies within `tol` years.
    pub fn grade_at(&self, series_id: &str, t: f64, tol: f64) -> Option<GradeClass> {
        let grades = self.grades.get(series_id)?;
        grades
            .iter()
            .map(|&(gt, g)| ((gt - t).abs(), g))
            .filter(|&(dt, _)| dt <= tol)
            .min_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal))
            .map(|(_, g)| g)
    }

    pub fn insert_grade(&mut self, series_id: impl Into<String>, t: f64, grade: GradeClass) {
        let v = self.grades.entry(series_id.into()).or_default();
        v.push((t, grade));
        v.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn obs(sid: &str, pid: &str, t: f64, features: Vec<f64>) -> FeatureObservation {
        FeatureObservation {
            series_id: sid.into(),
            patient_id: pid.into(),
            t,
            features,
        }
    }

    #[test]
    fn trajectory_constructor_sorts_by_time() {
        let tr = SeriesTrajectory::new(
            "s",
            "p",
            vec![
                obs("s", "p", 1.0, vec![1.0]),
                obs("s", "p", 0.25, vec![0.0]),
                obs("s", "p", 0.5, vec![0.5]),
            ],
        );
        let times: Vec<f64> = tr.observations.iter().map(|o| o.t).collect();
        assert_eq!(times, vec![0.25, 0.5, 1.0]);
        assert_eq!(tr.dim(), Some(1));
        assert!((tr.duration() - 0.75).abs() < 1e-15);
    }

    #[test]
    fn validate_flags_nan_feature() {
        let tr = SeriesTrajectory::new(
            "s1",
            "p1",
            vec![
                obs("s1", "p1", 0.0, vec![0.0, 1.0]),
                obs("s1", "p1", 0.5, vec![f64::NAN, 1.0]),
            ],
        );
        let report = validate_dataset(&[tr]);
        assert_eq!(report.len(), 1);
        assert_eq!(report.issues[0].kind, IssueKind::NonFiniteFeature);
        assert_eq!(report.issues[0].series_id, "s1");
        assert!(report.into_result().is_err());
    }

    #[test]
    fn validate_flags_dimension_mismatch_and_duplicates() {
        let clean = SeriesTrajectory::new(
            "a",
            "p",
            vec![
                obs("a", "p", 0.0, vec![0.0, 0.0]),
                obs("a", "p", 1.0, vec![1.0, 1.0]),
            ],
        );
        let bad = SeriesTrajectory::new(
            "b",
            "p",
            vec![
                obs("b", "p", 0.0, vec![0.0, 0.0]),
                obs("b", "p", 0.0, vec![0.0]),
            ],
        );
        let report = validate_dataset(&[clean, bad]);
        let kinds: Vec<IssueKind> = report.issues.iter().map(|i| i.kind).collect();
        assert!(kinds.contains(&IssueKind::DimensionMismatch));
        assert!(kinds.contains(&IssueKind::DuplicateTimestamp));
        assert!(report.issues.iter().all(|i| i.series_id == "b"));
    }

    #[test]
    fn validate_flags_unsorted_hand_built_series() {
        // Bypasses the sorting constructor on purpose.
        let tr = SeriesTrajectory {
            series_id: "s".into(),
            patient_id: "p".into(),
            observations: vec![obs("s", "p", 1.0, vec![0.0]), obs("s", "p", 0.5, vec![0.0])],
        };
        let report = validate_dataset(&[tr]);
        assert!(report
            .issues
            .iter()
            .any(|i| i.kind == IssueKind::NonMonotoneTimestamp));
    }

    #[test]
    fn validate_accepts_clean_dataset() {
        let tr = SeriesTrajectory::new(
            "s",
            "p",
            vec![
                obs("s", "p", 0.0, vec![0.0, 1.0]),
                obs("s", "p", 0.7, vec![0.1, 0.9]),
            ],
        );
        assert!(validate_dataset(&[tr]).is_empty());
    }

    #[test]
    fn span_bounds_contains_is_inclusive() {
        let span = SpanBounds::default();
        assert!(span.contains(0.5));
        assert!(span.contains(1.5));
        assert!(span.contains(1.0));
        assert!(!span.contains(0.4999999));
        assert!(!span.contains(1.5000001));
        assert!(SpanBounds::new(1.0, 0.5).is_err());
        assert!(SpanBounds::new(-0.1, 0.5).is_err());
    }

    #[test]
    fn subtrajectory_enforces_span_and_order() {
        let span = SpanBounds::default();
        let mk = |times: &[f64]| {
            let points: Vec<TrajPoint> = times
                .iter()
                .map(|&t| TrajPoint {
                    t,
                    features: vec![t, 2.0 * t],
                })
                .collect();
            SubTrajectory::new("s", "p", 0, points, &span)
        };
        assert!(mk(&[0.0, 0.5, 1.0]).is_ok());
        // Too short a span.
        assert!(mk(&[0.0, 0.2]).is_err());
        // Too long.
        assert!(mk(&[0.0, 2.0]).is_err());
        // Single point.
        assert!(mk(&[1.0]).is_err());
        // Exactly at the inclusive bounds.
        assert!(mk(&[0.0, 0.5]).is_ok());
        assert!(mk(&[0.0, 1.5]).is_ok());
    }

    #[test]
    fn subtrajectory_window_extraction() {
        let tr = SeriesTrajectory::new(
            "s9",
            "p9",
            (0..5)
                .map(|i| obs("s9", "p9", 0.4 * i as f64, vec![i as f64]))
                .collect(),
        );
        let span = SpanBounds::default();
        let sub = SubTrajectory::from_window(&tr, 1, 3, &span).unwrap();
        assert_eq!(sub.len(), 3);
        assert_eq!(sub.start_index, 1);
        assert_eq!(sub.end_index(), 3);
        assert_eq!(sub.id(), "s9:1-3");
        assert_eq!(sub.start(), &[1.0]);
        assert_eq!(sub.end(), &[3.0]);
        assert!((sub.elapsed() - 0.8).abs() < 1e-12);
        // Span too wide for this series.
        assert!(SubTrajectory::from_window(&tr, 0, 4, &span).is_err());
        // Degenerate or out-of-range windows.
        assert!(SubTrajectory::from_window(&tr, 2, 2, &span).is_err());
        assert!(SubTrajectory::from_window(&tr, 3, 9, &span).is_err());
    }

    #[test]
    fn translate_shifts_features_only() {
        let span = SpanBounds::default();
        let sub = SubTrajectory::new(
            "s",
            "p",
            0,
            vec![
                TrajPoint {
                    t: 0.0,
                    features: vec![1.0, 2.0],
                },
                TrajPoint {
                    t: 1.0,
                    features: vec![3.0, 4.0],
                },
            ],
            &span,
        )
        .unwrap();
        let moved = sub.translate(&[10.0, -1.0]).unwrap();
        assert_eq!(moved.points[0].features, vec![11.0, 1.0]);
        assert_eq!(moved.points[1].features, vec![13.0, 3.0]);
        assert_eq!(moved.points[0].t, 0.0);
        assert!(sub.translate(&[1.0]).is_err());
    }

    #[test]
    fn metric_params_domain() {
        assert!(MetricParams::new(0.0, 1.0).is_ok());
        assert!(MetricParams::new(1.01, 0.5).is_err());
        assert!(MetricParams::new(0.5, -0.01).is_err());
        assert!(MetricParams::new(f64::NAN, 0.5).is_err());
        let d = MetricParams::default();
        assert_eq!((d.lambda, d.phi), (0.75, 0.75));
    }

    #[test]
    fn label_invariants() {
        assert!(Label::new("s", 0.5, TargetKind::TimeToLateAmd, 0.0).is_ok());
        assert!(Label::new("s", 0.5, TargetKind::TimeToLateAmd, -0.1).is_err());
        // Visual acuity may be any finite value.
        assert!(Label::new("s", 0.5, TargetKind::VisualAcuity, -0.1).is_ok());
        assert!(Label::new("s", -0.5, TargetKind::VisualAcuity, 0.1).is_err());
        assert!(Label::new("s", 0.5, TargetKind::VisualAcuity, f64::INFINITY).is_err());
    }

    #[test]
    fn target_kind_round_trips_through_strings() {
        for kind in TargetKind::ALL {
            assert_eq!(kind.as_str().parse::<TargetKind>().unwrap(), kind);
        }
        assert!("banana".parse::<TargetKind>().is_err());
    }

    #[test]
    fn grade_class_round_trips_and_indexes() {
        for (i, g) in GradeClass::ALL.iter().enumerate() {
            assert_eq!(g.index(), i);
            assert_eq!(g.as_str().parse::<GradeClass>().unwrap(), *g);
        }
    }

    #[test]
    fn metadata_grade_lookup_uses_tolerance() {
        let mut meta = CohortMetadata::default();
        meta.series.insert(
            "s".into(),
            SeriesMeta {
                patient_id: "p".into(),
                age_at_epoch: 60.0,
                sex: 1,
            },
        );
        meta.insert_grade("s", 1.0, GradeClass::EarlyAmd);
        meta.insert_grade("s", 2.0, GradeClass::Cnv);
        let tol = 30.0 / DAYS_PER_YEAR;
        assert_eq!(meta.grade_at("s", 1.02, tol), Some(GradeClass::EarlyAmd));
        assert_eq!(meta.grade_at("s", 1.5, tol), None);
        assert_eq!(meta.grade_at("s", 1.98, tol), Some(GradeClass::Cnv));
        assert_eq!(meta.grade_at("missing", 1.0, tol), None);
        assert_eq!(meta.age_at("s", 2.5), Some(62.5));
        assert_eq!(meta.sex("s"), Some(1));
    }
}
