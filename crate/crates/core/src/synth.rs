//! Synthetic longitudinal cohorts with known latent dynamics.
//!
//! Each archetype is a 1-D piecewise-linear disease-state path `s(t)`
//! embedded linearly into feature space (`base + s * direction`) plus
//! isotropic Gaussian noise. Eyes draw an archetype, an entry-phase offset
//! and irregular visit times, so different eyes observe different stretches
//! of the same path at different sampling grids. Conversion times, grades
//! and visual-acuity values all derive from the noiseless latent state,
//! giving every generated label a known ground truth.
//!
//! The module also hosts [`oracle_dtw`], a brute-force reference for the
//! dynamic-programming DTW, feasible for short sequences and used only by
//! tests.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::hash::stream_seed;
use crate::metric::euclidean;
use crate::model::{
    validate_dataset, CohortMetadata, FeatureObservation, GradeClass, Label, SeriesMeta,
    SeriesTrajectory, SubTrajectory, TargetKind,
};

/// Latent-state cutoffs mapping the 1-D disease state to a grade.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradeThresholds {
    /// Below this the eye is healthy.
    pub early: f64,
    /// Below this (and at or above `early`) the grade is early disease.
    pub intermediate: f64,
    /// At or above `intermediate` but below this: small-lesion late grade;
    /// at or above: large-lesion late grade. Wet archetypes map both late
    /// ranges to the neovascular grade.
    pub large: f64,
}

impl Default for GradeThresholds {
    fn default() -> Self {
        GradeThresholds {
            early: 0.75,
            intermediate: 1.5,
            large: 2.5,
        }
    }
}

impl GradeThresholds {
    fn validate(&self) -> Result<()> {
        if !(self.early.is_finite() && self.intermediate.is_finite() && self.large.is_finite())
            || !(self.early < self.intermediate && self.intermediate < self.large)
        {
            return Err(Error::InvalidParam(format!(
                "grade thresholds must be finite and strictly increasing, got {self:?}"
            )));
        }
        Ok(())
    }

    /// Grade of a noiseless latent state.
    pub fn grade(&self, s: f64, wet: bool) -> GradeClass {
        if s < self.early {
            GradeClass::Healthy
        } else if s < self.intermediate {
            GradeClass::EarlyAmd
        } else if wet {
            GradeClass::Cnv
        } else if s < self.large {
            GradeClass::Crora250To1000
        } else {
            GradeClass::CroraGe1000
        }
    }
}

/// Conversion rule: the eye converts when the latent state first reaches
/// the threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Conversion {
    pub threshold: f64,
}

/// One latent trajectory family.
#[derive(Debug, Clone, PartialEq)]
pub struct Archetype {
    pub name: String,
    /// Piecewise-linear knots `(t, s)`; `t` strictly increasing starting at
    /// 0; the state is held constant beyond the last knot.
    pub path: Vec<(f64, f64)>,
    /// Embedding offset; dimension d.
    pub base: Vec<f64>,
    /// Embedding direction; dimension d, nonzero.
    pub direction: Vec<f64>,
    /// When present, crossing `threshold` converts the eye to late disease.
    pub conversion: Option<Conversion>,
    /// Entry-phase offsets are drawn uniformly from `[0, entry_window]`,
    /// shifting where along the path an eye is first observed.
    pub entry_window: f64,
    /// Whether late disease is neovascular (affects grades only).
    pub wet: bool,
}

impl Archetype {
    fn validate(&self, dim: usize) -> Result<()> {
        if self.path.is_empty() {
            return Err(Error::InvalidParam(format!(
                "archetype {} has an empty path",
                self.name
            )));
        }
        if self.path[0].0 != 0.0 {
            return Err(Error::InvalidParam(format!(
                "archetype {} path must start at t = 0, got {:?}",
                self.name, self.path[0].0
            )));
        }
        for w in self.path.windows(2) {
            if !(w[1].0 > w[0].0) {
                return Err(Error::InvalidParam(format!(
                    "archetype {} path times must be strictly increasing",
                    self.name
                )));
            }
        }
        if self
            .path
            .iter()
            .any(|&(t, s)| !t.is_finite() || !s.is_finite())
        {
            return Err(Error::InvalidParam(format!(
                "archetype {} path contains non-finite knots",
                self.name
            )));
        }
        if self.base.len() != dim || self.direction.len() != dim {
            return Err(Error::InvalidParam(format!(
                "archetype {} embeds into dimension {}/{}, cohort dimension is {dim}",
                self.name,
                self.base.len(),
                self.direction.len()
            )));
        }
        if self.direction.iter().map(|v| v * v).sum::<f64>() <= 0.0 {
            return Err(Error::InvalidParam(format!(
                "archetype {} direction vector is zero",
                self.name
            )));
        }
        if !self.entry_window.is_finite() || self.entry_window < 0.0 {
            return Err(Error::InvalidParam(format!(
                "archetype {} entry_window must be >= 0",
                self.name
            )));
        }
        Ok(())
    }

    /// Latent state at path time `t`, holding the boundary values outside
    /// the knot range.
    pub fn state_at(&self, t: f64) -> f64 {
        let first = self.path[0];
        let last = self.path[self.path.len() - 1];
        if t <= first.0 {
            return first.1;
        }
        if t >= last.0 {
            return last.1;
        }
        for w in self.path.windows(2) {
            let ((t0, s0), (t1, s1)) = (w[0], w[1]);
            if t <= t1 {
                return s0 + (s1 - s0) * (t - t0) / (t1 - t0);
            }
        }
        last.1
    }

    /// Earliest path time at which the state reaches `threshold`, or `None`
    /// if it never does.
    pub fn crossing_time(&self, threshold: f64) -> Option<f64> {
        if self.path[0].1 >= threshold {
            return Some(self.path[0].0);
        }
        for w in self.path.windows(2) {
            let ((t0, s0), (t1, s1)) = (w[0], w[1]);
            if s0 < threshold && s1 >= threshold {
                return Some(t0 + (threshold - s0) * (t1 - t0) / (s1 - s0));
            }
        }
        None
    }

    /// Embedding of a latent state.
    pub fn embed(&self, s: f64) -> Vec<f64> {
        self.base
            .iter()
            .zip(&self.direction)
            .map(|(b, d)| b + s * d)
            .collect()
    }
}

/// Full description of a synthetic cohort.
#[derive(Debug, Clone, PartialEq)]
pub struct CohortSpec {
    pub n_patients: usize,
    pub eyes_per_patient: usize,
    /// Mean visit count per eye.
    pub mean_visits: f64,
    /// Visit counts are drawn uniformly from `mean ± jitter` (rounded).
    pub visit_jitter: f64,
    /// Expected elapsed time between first and last visit, per eye.
    pub follow_up_years: f64,
    pub feature_dim: usize,
    pub archetypes: Vec<Archetype>,
    /// Standard deviation of the isotropic per-component Gaussian noise.
    pub noise_sigma: f64,
    pub seed: u64,
    pub grade_thresholds: GradeThresholds,
}

impl CohortSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_patients < 1 || self.eyes_per_patient < 1 || self.feature_dim < 1 {
            return Err(Error::InvalidParam(
                "n_patients, eyes_per_patient and feature_dim must be >= 1".into(),
            ));
        }
        if !(self.mean_visits >= 1.0) || !self.mean_visits.is_finite() {
            return Err(Error::InvalidParam(format!(
                "mean_visits must be >= 1, got {:?}",
                self.mean_visits
            )));
        }
        if !self.visit_jitter.is_finite() || self.visit_jitter < 0.0 {
            return Err(Error::InvalidParam(format!(
                "visit_jitter must be >= 0, got {:?}",
                self.visit_jitter
            )));
        }
        if !(self.follow_up_years > 0.0) || !self.follow_up_years.is_finite() {
            return Err(Error::InvalidParam(format!(
                "follow_up_years must be > 0, got {:?}",
                self.follow_up_years
            )));
        }
        if !self.noise_sigma.is_finite() || self.noise_sigma < 0.0 {
            return Err(Error::InvalidParam(format!(
                "noise_sigma must be >= 0, got {:?}",
                self.noise_sigma
            )));
        }
        if self.archetypes.is_empty() {
            return Err(Error::InvalidParam("archetype set is empty".into()));
        }
        self.grade_thresholds.validate()?;
        for a in &self.archetypes {
            a.validate(self.feature_dim)?;
        }
        Ok(())
    }
}

/// Everything [`generate`] produces.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedCohort {
    pub trajectories: Vec<SeriesTrajectory>,
    pub labels: Vec<Label>,
    pub metadata: CohortMetadata,
    /// `(series_id, archetype index)` sorted by series id.
    pub truth: Vec<(String, usize)>,
}

impl GeneratedCohort {
    /// Archetype index per series id.
    pub fn truth_map(&self) -> BTreeMap<&str, usize> {
        self.truth.iter().map(|(s, a)| (s.as_str(), *a)).collect()
    }

    /// Ground-truth archetype per sub-trajectory, via its parent series.
    pub fn truth_for_subs(&self, subs: &[SubTrajectory]) -> Vec<usize> {
        let map = self.truth_map();
        subs.iter()
            .map(|s| *map.get(s.series_id.as_str()).expect("unknown series"))
            .collect()
    }
}

/// Visual acuity as a deterministic function of the latent state.
fn visual_acuity(s: f64) -> f64 {
    1.0 - 0.25 * s
}

/// Generates a cohort. Deterministic: every random draw flows from a
/// ChaCha8 stream derived from `(spec.seed, series or patient id)`, so the
/// output is a pure function of the spec and unaffected by evaluation order.
pub fn generate(spec: &CohortSpec) -> Result<GeneratedCohort> {
    spec.validate()?;
    let mut trajectories = Vec::new();
    let mut labels = Vec::new();
    let mut metadata = CohortMetadata::default();
    let mut truth = Vec::new();
    let noise = if spec.noise_sigma > 0.0 {
        Some(Normal::new(0.0, spec.noise_sigma).map_err(|e| {
            Error::InvalidParam(format!("noise distribution: {e}"))
        })?)
    } else {
        None
    };

    for p in 0..spec.n_patients {
        let patient_id = format!("P{p:04}");
        let mut prng =
            ChaCha8Rng::seed_from_u64(stream_seed(spec.seed, &format!("patient:{patient_id}")));
        let age_at_epoch = prng.random_range(55.0..85.0);
        let sex: u8 = prng.random_range(0..2u8);

        for e in 0..spec.eyes_per_patient {
            let suffix = (b'a' + (e % 26) as u8) as char;
            let series_id = format!("{patient_id}{suffix}");
            let mut rng =
                ChaCha8Rng::seed_from_u64(stream_seed(spec.seed, &format!("eye:{series_id}")));

            let arch_idx = rng.random_range(0..spec.archetypes.len());
            let arch = &spec.archetypes[arch_idx];
            let tau = if arch.entry_window > 0.0 {
                rng.random_range(0.0..arch.entry_window)
            } else {
                0.0
            };
            let visits = if spec.visit_jitter > 0.0 {
                let lo = spec.mean_visits - spec.visit_jitter;
                let hi = spec.mean_visits + spec.visit_jitter;
                rng.random_range(lo..=hi).round().max(1.0) as usize
            } else {
                spec.mean_visits.round().max(1.0) as usize
            };

            let mut times = vec![0.0_f64];
            if visits > 1 {
                let delta = spec.follow_up_years / (visits - 1) as f64;
                for _ in 1..visits {
                    let gap = rng.random_range(0.3 * delta..1.7 * delta);
                    times.push(times.last().unwrap() + gap);
                }
            }

            let mut observations = Vec::with_capacity(visits);
            for &t in &times {
                let s = arch.state_at(tau + t);
                let mut features = arch.embed(s);
                if let Some(n) = &noise {
                    for f in &mut features {
                        *f += n.sample(&mut rng);
                    }
                }
                observations.push(FeatureObservation {
                    series_id: series_id.clone(),
                    patient_id: patient_id.clone(),
                    t,
                    features,
                });
                metadata.insert_grade(&series_id, t, spec.grade_thresholds.grade(s, arch.wet));
                labels.push(Label::new(&series_id, t, TargetKind::VisualAcuity, visual_acuity(s))?);
            }

            if let Some(conv) = &arch.conversion {
                if let Some(t_path) = arch.crossing_time(conv.threshold) {
                    let t_eye = t_path - tau;
                    let kind = if arch.wet {
                        TargetKind::TimeToCnv
                    } else {
                        TargetKind::TimeToCrora
                    };
                    for &t in &times {
                        if t <= t_eye {
                            labels.push(Label::new(
                                &series_id,
                                t,
                                TargetKind::TimeToLateAmd,
                                t_eye - t,
                            )?);
                            labels.push(Label::new(&series_id, t, kind, t_eye - t)?);
                        }
                    }
                }
            }

            metadata.series.insert(
                series_id.clone(),
                SeriesMeta {
                    patient_id: patient_id.clone(),
                    age_at_epoch,
                    sex,
                },
            );
            truth.push((series_id.clone(), arch_idx));
            trajectories.push(SeriesTrajectory::new(series_id, patient_id.clone(), observations));
        }
    }

    truth.sort();
    let cohort = GeneratedCohort {
        trajectories,
        labels,
        metadata,
        truth,
    };
    let report = validate_dataset(&cohort.trajectories);
    debug_assert!(report.is_empty(), "generator produced invalid data: {report}");
    Ok(cohort)
}

/// Three archetypes with mutually orthogonal bases and directions, well
/// separated relative to the noise floor. Downstream clustering with K = 3
/// should recover the archetype partition almost exactly.
pub fn archetypes_three_orthogonal(dim: usize) -> Vec<Archetype> {
    assert!(dim >= 6, "need at least 6 dimensions for orthogonal axes");
    let axis = |i: usize, scale: f64| {
        let mut v = vec![0.0; dim];
        v[i] = scale;
        v
    };
    let spec = [
        ("stable", 0.3_f64, None),
        ("slow_progressor", 1.2, None),
        ("fast_progressor", 3.0, Some(Conversion { threshold: 2.0 })),
    ];
    spec.iter()
        .enumerate()
        .map(|(ax, (name, s_end, conversion))| Archetype {
            name: (*name).to_string(),
            path: vec![(0.0, 0.0), (6.0, *s_end)],
            base: axis(dim / 2 + ax, 10.0),
            direction: axis(ax, 2.0),
            conversion: *conversion,
            entry_window: 1.0,
            wet: false,
        })
        .collect()
}

/// Two archetypes sharing base and direction but progressing at very
/// different rates, with wide entry windows. An eye's current state (and
/// hence its grade) says little about its time to conversion; the rate
/// does. Built for testing that trajectory clusters beat static grades.
pub fn archetypes_rate_contrast(dim: usize) -> Vec<Archetype> {
    assert!(dim >= 1);
    let direction = {
        let mut v = vec![0.0; dim];
        v[0] = 2.0;
        v
    };
    let conversion = Some(Conversion { threshold: 2.0 });
    vec![
        Archetype {
            name: "fast_converter".into(),
            // Rate 0.6 per year; converts at path time 3.33.
            path: vec![(0.0, 0.0), (5.0, 3.0)],
            base: vec![0.0; dim],
            direction: direction.clone(),
            conversion,
            entry_window: 2.5,
            wet: false,
        },
        Archetype {
            name: "slow_converter".into(),
            // Rate 0.15 per year; converts at path time 13.33.
            path: vec![(0.0, 0.0), (20.0, 3.0)],
            base: vec![0.0; dim],
            direction,
            conversion,
            entry_window: 10.0,
            wet: false,
        },
    ]
}

/// Five qualitatively distinct archetypes for demonstration cohorts:
/// stable, slow and fast progressors, a regressor whose state partially
/// recovers, and a wet converter.
pub fn archetypes_five(dim: usize) -> Vec<Archetype> {
    assert!(dim >= 10, "need at least 10 dimensions for distinct axes");
    let axis = |i: usize, scale: f64| {
        let mut v = vec![0.0; dim];
        v[i] = scale;
        v
    };
    vec![
        Archetype {
            name: "stable".into(),
            path: vec![(0.0, 0.1), (8.0, 0.3)],
            base: axis(5, 6.0),
            direction: axis(0, 2.0),
            conversion: None,
            entry_window: 1.0,
            wet: false,
        },
        Archetype {
            name: "slow_progressor".into(),
            path: vec![(0.0, 0.0), (8.0, 1.6)],
            base: axis(6, 6.0),
            direction: axis(1, 2.0),
            conversion: Some(Conversion { threshold: 2.0 }),
            entry_window: 2.0,
            wet: false,
        },
        Archetype {
            name: "fast_progressor".into(),
            path: vec![(0.0, 0.0), (4.0, 3.0), (8.0, 3.2)],
            base: axis(7, 6.0),
            direction: axis(2, 2.0),
            conversion: Some(Conversion { threshold: 2.0 }),
            entry_window: 2.0,
            wet: false,
        },
        Archetype {
            name: "regressor".into(),
            path: vec![(0.0, 0.2), (3.0, 1.8), (6.0, 0.6)],
            base: axis(8, 6.0),
            direction: axis(3, 2.0),
            conversion: None,
            entry_window: 2.0,
            wet: false,
        },
        Archetype {
            name: "converter".into(),
            path: vec![(0.0, 0.5), (3.0, 2.8), (8.0, 3.0)],
            base: axis(9, 6.0),
            direction: axis(4, 2.0),
            conversion: Some(Conversion { threshold: 2.0 }),
            entry_window: 1.5,
            wet: true,
        },
    ]
}

/// A measurement-artifact archetype: a short-lived jump along its own axis,
/// mimicking acquisition shifts. Not included in any default set.
pub fn archetype_distractor(dim: usize) -> Archetype {
    assert!(dim >= 1);
    let mut direction = vec![0.0; dim];
    direction[dim - 1] = 3.0;
    Archetype {
        name: "artifact_shift".into(),
        path: vec![(0.0, 0.0), (2.0, 0.0), (2.2, 2.0), (2.8, 2.0), (3.0, 0.0), (8.0, 0.0)],
        base: vec![0.0; dim],
        direction,
        conversion: None,
        entry_window: 1.0,
        wet: false,
    }
}

impl CohortSpec {
    /// Cohort used by the clustering quality checks: three orthogonal
    /// archetypes, noise at 10% of the direction norm.
    pub fn three_orthogonal(n_patients: usize, seed: u64) -> CohortSpec {
        let dim = 32;
        let archetypes = archetypes_three_orthogonal(dim);
        CohortSpec {
            n_patients,
            eyes_per_patient: 2,
            mean_visits: 8.0,
            visit_jitter: 2.0,
            follow_up_years: 4.0,
            feature_dim: dim,
            archetypes,
            // 0.1 times the direction norm (2.0).
            noise_sigma: 0.2,
            seed,
            grade_thresholds: GradeThresholds::default(),
        }
    }

    /// Cohort where conversion time depends on progression rate rather
    /// than current state; used by the risk-stratification checks.
    pub fn rate_contrast(n_patients: usize, seed: u64) -> CohortSpec {
        let dim = 32;
        CohortSpec {
            n_patients,
            eyes_per_patient: 2,
            mean_visits: 9.0,
            visit_jitter: 2.0,
            follow_up_years: 5.0,
            feature_dim: dim,
            archetypes: archetypes_rate_contrast(dim),
            noise_sigma: 0.1,
            seed,
            grade_thresholds: GradeThresholds::default(),
        }
    }

    /// Demonstration cohort with the five-archetype set.
    pub fn five_archetypes(n_patients: usize, seed: u64) -> CohortSpec {
        let dim = 32;
        CohortSpec {
            n_patients,
            eyes_per_patient: 2,
            mean_visits: 8.0,
            visit_jitter: 3.0,
            follow_up_years: 5.0,
            feature_dim: dim,
            archetypes: archetypes_five(dim),
            noise_sigma: 0.2,
            seed,
            grade_thresholds: GradeThresholds::default(),
        }
    }
}

/// Brute-force DTW: the minimum, over all monotone boundary-anchored
/// warping paths, of the sum of Euclidean local costs accumulated from the
/// start of the path. Exponential in sequence length; use only for short
/// sequences in tests.
pub fn oracle_dtw(u: &SubTrajectory, v: &SubTrajectory) -> Result<f64> {
    if u.dim() != v.dim() {
        return Err(Error::DimensionMismatch(format!(
            "{} has dimension {}, {} has dimension {}",
            u.id(),
            u.dim(),
            v.id(),
            v.dim()
        )));
    }
    let a: Vec<&[f64]> = u.points.iter().map(|p| p.features.as_slice()).collect();
    let b: Vec<&[f64]> = v.points.iter().map(|p| p.features.as_slice()).collect();

    fn walk(a: &[&[f64]], b: &[&[f64]], i: usize, j: usize, acc: f64, best: &mut f64) {
        // Costs accumulate in path order so partial sums round exactly as
        // the dynamic program does.
        let acc = acc + euclidean(a[i], b[j]);
        if i == a.len() - 1 && j == b.len() - 1 {
            *best = best.min(acc);
            return;
        }
        if i + 1 < a.len() {
            walk(a, b, i + 1, j, acc, best);
        }
        if j + 1 < b.len() {
            walk(a, b, i, j + 1, acc, best);
        }
        if i + 1 < a.len() && j + 1 < b.len() {
            walk(a, b, i + 1, j + 1, acc, best);
        }
    }

    let mut best = f64::INFINITY;
    walk(&a, &b, 0, 0, 0.0, &mut best);
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metric;
    use crate::model::SpanBounds;
    use crate::model::TrajPoint;

    fn small_spec() -> CohortSpec {
        CohortSpec {
            n_patients: 4,
            eyes_per_patient: 2,
            mean_visits: 7.0,
            visit_jitter: 2.0,
            follow_up_years: 4.0,
            feature_dim: 8,
            archetypes: archetypes_rate_contrast(8),
            noise_sigma: 0.1,
            seed: 11,
            grade_thresholds: GradeThresholds::default(),
        }
    }

    #[test]
    fn state_interpolation_and_clamping() {
        let arch = Archetype {
            name: "a".into(),
            path: vec![(0.0, 0.0), (2.0, 1.0), (4.0, 0.5)],
            base: vec![0.0],
            direction: vec![1.0],
            conversion: None,
            entry_window: 0.0,
            wet: false,
        };
        assert_eq!(arch.state_at(-1.0), 0.0);
        assert_eq!(arch.state_at(0.0), 0.0);
        assert_eq!(arch.state_at(1.0), 0.5);
        assert_eq!(arch.state_at(2.0), 1.0);
        assert_eq!(arch.state_at(3.0), 0.75);
        assert_eq!(arch.state_at(9.0), 0.5);
    }

    #[test]
    fn crossing_time_finds_first_upward_crossing() {
        let arch = Archetype {
            name: "a".into(),
            path: vec![(0.0, 0.0), (2.0, 2.0), (3.0, 1.0), (5.0, 3.0)],
            base: vec![0.0],
            direction: vec![1.0],
            conversion: None,
            entry_window: 0.0,
            wet: false,
        };
        assert_eq!(arch.crossing_time(1.0), Some(1.0));
        assert_eq!(arch.crossing_time(2.0), Some(2.0));
        // Reached again on the second rise, but the first crossing counts.
        assert_eq!(arch.crossing_time(2.5), Some(4.5));
        assert_eq!(arch.crossing_time(5.0), None);
        // Already at threshold at t = 0.
        assert_eq!(arch.crossing_time(0.0), Some(0.0));
    }

    #[test]
    fn generate_is_deterministic() {
        let spec = small_spec();
        let a = generate(&spec).unwrap();
        let b = generate(&spec).unwrap();
        assert_eq!(a, b);
        let mut other = spec.clone();
        other.seed = 12;
        let c = generate(&other).unwrap();
        assert_ne!(a.trajectories, c.trajectories);
    }

    #[test]
    fn generate_passes_validation_and_labels_are_consistent() {
        let cohort = generate(&small_spec()).unwrap();
        assert!(validate_dataset(&cohort.trajectories).is_empty());
        assert_eq!(cohort.trajectories.len(), 8);
        assert_eq!(cohort.truth.len(), 8);
        // Time-to-event labels decrease one-for-one with visit time.
        let mut by_series: BTreeMap<&str, Vec<(f64, f64)>> = BTreeMap::new();
        for l in &cohort.labels {
            if l.kind == TargetKind::TimeToLateAmd {
                by_series
                    .entry(l.series_id.as_str())
                    .or_default()
                    .push((l.t, l.value));
            }
        }
        assert!(!by_series.is_empty());
        for (_, pairs) in by_series {
            for w in pairs.windows(2) {
                let ((t0, v0), (t1, v1)) = (w[0], w[1]);
                assert!((v0 - v1) - (t1 - t0) < 1e-9, "ttc must fall at visit rate");
                assert!(v0 >= 0.0 && v1 >= 0.0);
            }
        }
        // Visual acuity exists for every observation.
        let va = cohort
            .labels
            .iter()
            .filter(|l| l.kind == TargetKind::VisualAcuity)
            .count();
        let obs: usize = cohort.trajectories.iter().map(|t| t.len()).sum();
        assert_eq!(va, obs);
        // Metadata covers every series.
        for tr in &cohort.trajectories {
            assert!(cohort.metadata.series.contains_key(&tr.series_id));
            assert!(cohort.metadata.grades.contains_key(&tr.series_id));
        }
    }

    #[test]
    fn noiseless_eyes_sample_the_exact_path() {
        let mut spec = small_spec();
        spec.noise_sigma = 0.0;
        spec.archetypes = vec![Archetype {
            name: "only".into(),
            path: vec![(0.0, 0.0), (10.0, 2.0)],
            base: vec![1.0; 8],
            direction: {
                let mut d = vec![0.0; 8];
                d[0] = 3.0;
                d
            },
            conversion: None,
            entry_window: 0.5,
            wet: false,
        }];
        let cohort = generate(&spec).unwrap();
        for tr in &cohort.trajectories {
            for o in &tr.observations {
                // Feature 1..7 must equal base exactly; feature 0 encodes s.
                for c in 1..8 {
                    assert_eq!(o.features[c], 1.0);
                }
                let s = (o.features[0] - 1.0) / 3.0;
                assert!(s >= 0.0 && s <= 2.0 + 1e-12);
                // The state lies on the path for SOME admissible tau.
                let t_path = s / 0.2;
                assert!(t_path >= o.t - 1e-9 && t_path <= o.t + 0.5 + 1e-9,
                    "state {s} at visit {} implies path time {t_path} outside entry window",
                    o.t);
            }
        }
    }

    #[test]
    fn cohort_statistics_track_the_requested_shape() {
        let spec = CohortSpec::three_orthogonal(120, 5);
        let cohort = generate(&spec).unwrap();
        let eyes = cohort.trajectories.len();
        assert_eq!(eyes, 240);
        let mean_visits: f64 =
            cohort.trajectories.iter().map(|t| t.len() as f64).sum::<f64>() / eyes as f64;
        let mean_follow: f64 =
            cohort.trajectories.iter().map(|t| t.duration()).sum::<f64>() / eyes as f64;
        assert!(
            (mean_visits - spec.mean_visits).abs() <= 0.1 * spec.mean_visits,
            "mean visits {mean_visits}, requested {}",
            spec.mean_visits
        );
        assert!(
            (mean_follow - spec.follow_up_years).abs() <= 0.1 * spec.follow_up_years,
            "mean follow-up {mean_follow}, requested {}",
            spec.follow_up_years
        );
    }

    #[test]
    fn archetype_sets_validate() {
        for spec in [
            CohortSpec::three_orthogonal(2, 0),
            CohortSpec::rate_contrast(2, 0),
            CohortSpec::five_archetypes(2, 0),
        ] {
            spec.validate().unwrap();
        }
        let mut with_distractor = CohortSpec::five_archetypes(2, 0);
        with_distractor.archetypes.push(archetype_distractor(32));
        with_distractor.validate().unwrap();
    }

    #[test]
    fn cohort_spec_rejects_bad_inputs() {
        let mut spec = small_spec();
        spec.noise_sigma = -1.0;
        assert!(spec.validate().is_err());
        let mut spec = small_spec();
        spec.archetypes[0].direction = vec![0.0; 8];
        assert!(spec.validate().is_err());
        let mut spec = small_spec();
        spec.archetypes[0].path = vec![(1.0, 0.0), (2.0, 1.0)];
        assert!(spec.validate().is_err());
        let mut spec = small_spec();
        spec.archetypes[0].base = vec![0.0; 4];
        assert!(spec.validate().is_err());
    }

    #[test]
    fn oracle_matches_dp_on_random_short_pairs() {
        let span = SpanBounds::default();
        let mut x = 0.61_f64;
        let mut next = move || {
            x = (x * 877.77).fract();
            8.0 * x - 4.0
        };
        for case in 0..300 {
            let (lu, lv) = (2 + case % 5, 2 + (case / 5) % 5);
            let mk = |len: usize, next: &mut dyn FnMut() -> f64| {
                let points = (0..len)
                    .map(|i| TrajPoint {
                        t: i as f64 / (len - 1) as f64,
                        features: (0..4).map(|_| next()).collect(),
                    })
                    .collect();
                SubTrajectory::new("o", "p", 0, points, &span).unwrap()
            };
            let u = mk(lu, &mut next);
            let v = mk(lv, &mut next);
            let dp = metric::dtw(&u, &v).unwrap();
            let oracle = oracle_dtw(&u, &v).unwrap();
            assert_eq!(dp, oracle, "case {case}: dp {dp} != oracle {oracle}");
        }
    }

    #[test]
    fn oracle_checks_dimensions() {
        let span = SpanBounds::default();
        let u = SubTrajectory::new(
            "u",
            "p",
            0,
            vec![
                TrajPoint { t: 0.0, features: vec![0.0] },
                TrajPoint { t: 1.0, features: vec![1.0] },
            ],
            &span,
        )
        .unwrap();
        let v = SubTrajectory::new(
            "v",
            "p",
            0,
            vec![
                TrajPoint { t: 0.0, features: vec![0.0, 0.0] },
                TrajPoint { t: 1.0, features: vec![1.0, 1.0] },
            ],
            &span,
        )
        .unwrap();
        assert!(oracle_dtw(&u, &v).is_err());
    }
}
