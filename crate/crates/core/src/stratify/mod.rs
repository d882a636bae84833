//! Membership probabilities and risk-prediction evaluation.
//!
//! A fitted [`ClusterModel`](crate::cluster::ClusterModel) induces, for any
//! sub-trajectory, a probability vector over the clusters: average the
//! affinity to each cluster's members, turn the averages into
//! pseudo-distances from the best cluster, and pass those through a
//! Gaussian kernel of bandwidth sigma. Linear models on these membership
//! vectors predict clinical targets, and [`evaluate`] scores them against
//! demographic and static-grade baselines under patient-wise
//! cross-validation: folds split patient ids, never sub-trajectories, so
//! no patient contributes to both sides of any split.

mod folds;
mod ols;

pub use folds::{holdout_split, patient_folds};
pub use ols::{fit_linear, LinearFit, RiskModel};

use std::collections::{BTreeMap, BTreeSet};
use std::str::FromStr;

use rayon::prelude::*;

use crate::cluster::{build_affinity, spectral_cluster_with, AffinityMatrix, ClusterModel, Kernel, SpectralOptions};
use crate::error::{Error, Result};
use crate::hash::stream_seed;
use crate::metric::{pairwise_matrix_with, DtwConfig};
use crate::model::{
    validate_dataset, CohortMetadata, GradeClass, Label, MetricParams, SeriesTrajectory,
    SubTrajectory, TargetKind, DAYS_PER_YEAR,
};
use crate::partition::{partition_dataset, PartitionConfig};

/// How far a label's timestamp may sit from a sub-trajectory's final
/// observation and still count as that sub-trajectory's target (30 days).
pub const LABEL_MATCH_TOLERANCE_YEARS: f64 = 30.0 / DAYS_PER_YEAR;

/// Probability distribution over the clusters of a model.
#[derive(Debug, Clone, PartialEq)]
pub struct MembershipVector {
    values: Vec<f64>,
}

impl MembershipVector {
    /// Normalize nonnegative weights into a probability vector.
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidParam("membership needs at least one cluster".into()));
        }
        let mut sum = 0.0;
        for (i, w) in weights.iter().enumerate() {
            if !w.is_finite() || *w < 0.0 {
                return Err(Error::InvalidParam(format!(
                    "membership weight {i} = {w} is not a finite nonnegative value"
                )));
            }
            sum += w;
        }
        if sum <= 0.0 {
            return Err(Error::InvalidParam("membership weights sum to zero".into()));
        }
        let values = weights.into_iter().map(|w| w / sum).collect();
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Index of the most probable cluster, ties to the lowest index.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, v) in self.values.iter().enumerate() {
            if *v > self.values[best] {
                best = i;
            }
        }
        best
    }

    /// Check the probability invariants: entries in [0, 1], sum within
    /// 1e-9 of one.
    pub fn validate(&self) -> Result<()> {
        let sum: f64 = self.values.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParam(format!(
                "membership sums to {sum}, expected 1"
            )));
        }
        if self.values.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::InvalidParam("membership entry outside [0, 1]".into()));
        }
        Ok(())
    }
}

/// Membership of training sub-trajectory `sub_index` under `model`, from
/// the affinity matrix the model was fitted on.
pub fn membership(
    sub_index: usize,
    a: &AffinityMatrix,
    model: &ClusterModel,
    sigma: f64,
) -> Result<MembershipVector> {
    if a.n() != model.n() {
        return Err(Error::DimensionMismatch(format!(
            "affinity over {} sub-trajectories for a model of {}",
            a.n(),
            model.n()
        )));
    }
    if sub_index >= a.n() {
        return Err(Error::InvalidParam(format!(
            "sub-trajectory index {sub_index} outside the {} fitted rows",
            a.n()
        )));
    }
    membership_from_affinities(a.row(sub_index), Some(sub_index), model, sigma)
}

/// Membership from a raw affinity vector to every training sub-trajectory,
/// in model index order. `self_index` excludes that training row from its
/// own cluster average (pass `None` for a new sub-trajectory); a training
/// row whose cluster contains only itself falls back to its self-affinity.
pub fn membership_from_affinities(
    affinities: &[f64],
    self_index: Option<usize>,
    model: &ClusterModel,
    sigma: f64,
) -> Result<MembershipVector> {
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(Error::InvalidParam(format!(
            "membership bandwidth sigma must be positive and finite, got {sigma}"
        )));
    }
    if affinities.len() != model.n() {
        return Err(Error::DimensionMismatch(format!(
            "{} affinities for a model of {} sub-trajectories",
            affinities.len(),
            model.n()
        )));
    }
    if affinities.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::InvalidParam(
            "affinities must be finite and nonnegative".into(),
        ));
    }
    let mut averages = Vec::with_capacity(model.k());
    for members in model.members() {
        let (sum, count) = members
            .iter()
            .filter(|&&m| Some(m) != self_index)
            .fold((0.0, 0usize), |(s, c), &m| (s + affinities[m], c + 1));
        let avg = if count > 0 {
            sum / count as f64
        } else {
            // The row is its cluster's only member; its self-affinity is
            // the only evidence left.
            affinities[self_index.expect("empty average implies a self row")]
        };
        averages.push(avg);
    }
    let best = averages.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights = averages
        .iter()
        .map(|a| {
            let g = best - a;
            (-g * g / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    MembershipVector::new(weights)
}

/// Prediction methods compared by [`evaluate`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Method {
    /// Age at the sub-trajectory's final observation, plus sex.
    Demographic,
    /// One-hot disease grade at the sub-trajectory's final observation.
    StaticGrade,
    /// Cluster-membership probability vector.
    ClusterMembership,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Demographic, Method::StaticGrade, Method::ClusterMembership];

    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Demographic => "demographic",
            Method::StaticGrade => "static_grade",
            Method::ClusterMembership => "cluster_membership",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "demographic" => Ok(Method::Demographic),
            "static_grade" => Ok(Method::StaticGrade),
            "cluster_membership" => Ok(Method::ClusterMembership),
            other => Err(Error::InvalidParam(format!("unknown method '{other}'"))),
        }
    }
}

/// Baseline feature families.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineKind {
    Demographic,
    StaticGrade,
}

fn demographic_row(metadata: &CohortMetadata, sub: &SubTrajectory) -> Option<Vec<f64>> {
    let age = metadata.age_at(&sub.series_id, sub.t_end())?;
    let sex = metadata.sex(&sub.series_id)?;
    Some(vec![age, sex as f64])
}

fn grade_row(metadata: &CohortMetadata, sub: &SubTrajectory) -> Option<Vec<f64>> {
    let grade = metadata.grade_at(&sub.series_id, sub.t_end(), LABEL_MATCH_TOLERANCE_YEARS)?;
    let mut row = vec![0.0; GradeClass::ALL.len()];
    row[grade.index()] = 1.0;
    Some(row)
}

/// Baseline feature vector per sub-trajectory. Errors if the metadata
/// lacks the series or, for `StaticGrade`, a grade within
/// [`LABEL_MATCH_TOLERANCE_YEARS`] of the final observation.
pub fn baseline_features(
    kind: BaselineKind,
    subs: &[SubTrajectory],
    metadata: &CohortMetadata,
) -> Result<Vec<Vec<f64>>> {
    subs.iter()
        .map(|sub| {
            let row = match kind {
                BaselineKind::Demographic => demographic_row(metadata, sub),
                BaselineKind::StaticGrade => grade_row(metadata, sub),
            };
            row.ok_or_else(|| {
                Error::InvalidParam(format!(
                    "series '{}' lacks the metadata for the {} baseline at t = {}",
                    sub.series_id,
                    match kind {
                        BaselineKind::Demographic => "demographic",
                        BaselineKind::StaticGrade => "static grade",
                    },
                    sub.t_end()
                ))
            })
        })
        .collect()
}

/// Everything [`evaluate`] needs beyond the dataset itself.
#[derive(Debug, Clone)]
pub struct EvalConfig {
    /// Sub-trajectory extraction; its `rng_seed` is overridden per seed.
    pub partition: PartitionConfig,
    pub params: MetricParams,
    pub dtw: DtwConfig,
    pub kernel: Kernel,
    /// Gaussian kernel bandwidth; `None` selects the median heuristic.
    pub kernel_scale: Option<f64>,
    /// Cluster count.
    pub k: usize,
    /// Membership bandwidth.
    pub sigma: f64,
    pub n_folds: usize,
    pub seeds: Vec<u64>,
    pub targets: Vec<TargetKind>,
    /// Replace cross-validation with a single holdout split per seed.
    pub holdout: bool,
    pub holdout_test_fraction: f64,
    pub spectral: SpectralOptions,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            partition: PartitionConfig::default(),
            params: MetricParams::default(),
            dtw: DtwConfig::default(),
            kernel: Kernel::default(),
            kernel_scale: None,
            k: 30,
            sigma: 0.5,
            n_folds: 10,
            seeds: (0..7).collect(),
            targets: TargetKind::ALL.to_vec(),
            holdout: false,
            holdout_test_fraction: 0.2,
            spectral: SpectralOptions::default(),
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        self.partition.validate()?;
        MetricParams::new(self.params.lambda, self.params.phi)?;
        if self.k < 2 {
            return Err(Error::InvalidParam(format!("cluster count must be at least 2, got {}", self.k)));
        }
        if !(self.sigma.is_finite() && self.sigma > 0.0) {
            return Err(Error::InvalidParam(format!(
                "membership bandwidth sigma must be positive and finite, got {}",
                self.sigma
            )));
        }
        if !self.holdout && self.n_folds < 2 {
            return Err(Error::InvalidParam(format!(
                "cross-validation needs at least 2 folds, got {}",
                self.n_folds
            )));
        }
        if self.holdout && !(self.holdout_test_fraction > 0.0 && self.holdout_test_fraction < 1.0) {
            return Err(Error::InvalidParam(format!(
                "holdout test fraction must lie in (0, 1), got {}",
                self.holdout_test_fraction
            )));
        }
        if self.seeds.is_empty() {
            return Err(Error::InvalidParam("at least one evaluation seed is required".into()));
        }
        if self.targets.is_empty() {
            return Err(Error::InvalidParam("at least one target kind is required".into()));
        }
        Ok(())
    }
}

/// One train/test split, with the patients on each side and any reasons
/// parts of it were skipped.
#[derive(Debug, Clone, PartialEq)]
pub struct FoldRecord {
    pub seed: u64,
    pub fold: usize,
    pub train_patients: Vec<String>,
    pub test_patients: Vec<String>,
    pub n_train_subs: usize,
    pub n_test_subs: usize,
    pub notes: Vec<String>,
}

/// One (seed, fold, target, method) test-set score.
#[derive(Debug, Clone, PartialEq)]
pub struct Measurement {
    pub seed: u64,
    pub fold: usize,
    pub target: TargetKind,
    pub method: Method,
    pub n_train_rows: usize,
    pub n_test_rows: usize,
    pub mae: f64,
}

/// Across-fold, across-seed aggregate of one (target, method) cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaeSummary {
    pub mean: f64,
    /// Sample standard deviation across fold scores; 0 for a single fold.
    pub std: f64,
    pub folds: usize,
}

/// Full evaluation output: the splits, every individual score, and the
/// configuration needed to reproduce them.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub k: usize,
    pub sigma: f64,
    pub params: MetricParams,
    pub kernel: Kernel,
    pub n_folds: usize,
    pub seeds: Vec<u64>,
    pub holdout: bool,
    pub folds: Vec<FoldRecord>,
    pub measurements: Vec<Measurement>,
}

impl EvalReport {
    /// Mean and sample standard deviation of the MAE across every scored
    /// fold of every seed, or `None` if the cell was never scored.
    pub fn summary(&self, target: TargetKind, method: Method) -> Option<MaeSummary> {
        let maes: Vec<f64> = self
            .measurements
            .iter()
            .filter(|m| m.target == target && m.method == method)
            .map(|m| m.mae)
            .collect();
        if maes.is_empty() {
            return None;
        }
        let n = maes.len() as f64;
        let mean = maes.iter().sum::<f64>() / n;
        let std = if maes.len() > 1 {
            (maes.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Some(MaeSummary { mean, std, folds: maes.len() })
    }

    /// Per-seed mean MAE across that seed's scored folds, in seed order.
    /// Seeds where the cell was never scored are omitted.
    pub fn per_seed_mean(&self, target: TargetKind, method: Method) -> Vec<(u64, f64)> {
        self.seeds
            .iter()
            .filter_map(|&seed| {
                let maes: Vec<f64> = self
                    .measurements
                    .iter()
                    .filter(|m| m.seed == seed && m.target == target && m.method == method)
                    .map(|m| m.mae)
                    .collect();
                if maes.is_empty() {
                    None
                } else {
                    Some((seed, maes.iter().sum::<f64>() / maes.len() as f64))
                }
            })
            .collect()
    }

    /// Target kinds with at least one scored measurement, ascending.
    pub fn scored_targets(&self) -> Vec<TargetKind> {
        let set: BTreeSet<TargetKind> = self.measurements.iter().map(|m| m.target).collect();
        set.into_iter().collect()
    }
}

type LabelIndex = BTreeMap<(String, TargetKind), Vec<(f64, f64)>>;

fn label_index(labels: &[Label]) -> LabelIndex {
    let mut index: LabelIndex = BTreeMap::new();
    for label in labels {
        index
            .entry((label.series_id.clone(), label.kind))
            .or_default()
            .push((label.t, label.value));
    }
    for entries in index.values_mut() {
        entries.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal));
    }
    index
}

/// Value of the label nearest to `t` within `tol`, ties to the earlier
/// timestamp.
fn label_near(index: &LabelIndex, series_id: &str, kind: TargetKind, t: f64, tol: f64) -> Option<f64> {
    let entries = index.get(&(series_id.to_string(), kind))?;
    let pos = entries.partition_point(|(lt, _)| *lt < t);
    let mut best: Option<(f64, f64)> = None;
    for candidate in [pos.checked_sub(1).map(|p| entries[p]), entries.get(pos).copied()]
        .into_iter()
        .flatten()
    {
        let dist = (candidate.0 - t).abs();
        if dist <= tol && best.is_none_or(|(bd, _)| dist < bd) {
            best = Some((dist, candidate.1));
        }
    }
    best.map(|(_, v)| v)
}

/// Cross-validated comparison of cluster-membership regression against the
/// demographic and static-grade baselines.
///
/// Per seed: sub-trajectories are re-extracted with that seed, the full
/// pairwise distance matrix is computed once, and each fold clusters its
/// training rows, derives memberships for both sides (test rows through
/// the training kernel), and fits one linear model per target and method.
/// A row enters a fold's regression only if it has an aligned label and
/// both baseline feature sets, so all three methods score identical rows.
/// Folds without labeled test rows, or with too few training rows for a
/// method, are skipped and noted in the fold record.
pub fn evaluate(
    trajectories: &[SeriesTrajectory],
    labels: &[Label],
    metadata: &CohortMetadata,
    config: &EvalConfig,
) -> Result<EvalReport> {
    config.validate()?;
    validate_dataset(trajectories).into_result()?;
    if trajectories.is_empty() {
        return Err(Error::InvalidParam("no trajectories to evaluate".into()));
    }
    let index = label_index(labels);
    let patients: Vec<String> = trajectories
        .iter()
        .map(|t| t.patient_id.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();

    let per_seed: Vec<(Vec<FoldRecord>, Vec<Measurement>)> = config
        .seeds
        .par_iter()
        .map(|&seed| eval_seed(trajectories, &index, metadata, config, &patients, seed))
        .collect::<Result<Vec<_>>>()?;

    let mut folds = Vec::new();
    let mut measurements = Vec::new();
    for (f, m) in per_seed {
        folds.extend(f);
        measurements.extend(m);
    }
    Ok(EvalReport {
        k: config.k,
        sigma: config.sigma,
        params: config.params,
        kernel: config.kernel,
        n_folds: if config.holdout { 1 } else { config.n_folds },
        seeds: config.seeds.clone(),
        holdout: config.holdout,
        folds,
        measurements,
    })
}

fn eval_seed(
    trajectories: &[SeriesTrajectory],
    index: &LabelIndex,
    metadata: &CohortMetadata,
    config: &EvalConfig,
    patients: &[String],
    seed: u64,
) -> Result<(Vec<FoldRecord>, Vec<Measurement>)> {
    let subs = partition_dataset(trajectories, &config.partition.clone().with_seed(seed))?;
    if subs.len() < 2 {
        return Err(Error::InvalidParam(format!(
            "seed {seed}: partition produced {} sub-trajectories; need at least 2 to evaluate",
            subs.len()
        )));
    }
    let d = pairwise_matrix_with(&subs, config.params, &config.dtw)?;

    let demographic: Vec<Option<Vec<f64>>> =
        subs.iter().map(|s| demographic_row(metadata, s)).collect();
    let grade: Vec<Option<Vec<f64>>> = subs.iter().map(|s| grade_row(metadata, s)).collect();
    let target_values: BTreeMap<TargetKind, Vec<Option<f64>>> = config
        .targets
        .iter()
        .map(|&kind| {
            let values = subs
                .iter()
                .map(|s| {
                    label_near(index, &s.series_id, kind, s.t_end(), LABEL_MATCH_TOLERANCE_YEARS)
                })
                .collect();
            (kind, values)
        })
        .collect();

    let splits: Vec<(Vec<String>, Vec<String>)> = if config.holdout {
        vec![holdout_split(patients, seed, config.holdout_test_fraction)?]
    } else {
        let folds = patient_folds(patients, config.n_folds, seed)?;
        (0..folds.len())
            .map(|f| {
                let mut train: Vec<String> = folds
                    .iter()
                    .enumerate()
                    .filter(|(g, _)| *g != f)
                    .flat_map(|(_, fold)| fold.iter().cloned())
                    .collect();
                train.sort_unstable();
                (train, folds[f].clone())
            })
            .collect()
    };

    let mut fold_records = Vec::new();
    let mut measurements = Vec::new();
    for (fold_id, (train_patients, test_patients)) in splits.into_iter().enumerate() {
        let train_set: BTreeSet<&str> = train_patients.iter().map(String::as_str).collect();
        let test_set: BTreeSet<&str> = test_patients.iter().map(String::as_str).collect();
        assert!(
            train_set.intersection(&test_set).next().is_none(),
            "patient-wise split violated in seed {seed} fold {fold_id}"
        );
        let train_idx: Vec<usize> = (0..subs.len())
            .filter(|&i| train_set.contains(subs[i].patient_id.as_str()))
            .collect();
        let test_idx: Vec<usize> = (0..subs.len())
            .filter(|&i| test_set.contains(subs[i].patient_id.as_str()))
            .collect();
        let mut record = FoldRecord {
            seed,
            fold: fold_id,
            train_patients,
            test_patients,
            n_train_subs: train_idx.len(),
            n_test_subs: test_idx.len(),
            notes: Vec::new(),
        };

        if test_idx.is_empty() {
            record.notes.push("skipped: no test sub-trajectories".into());
            fold_records.push(record);
            continue;
        }
        if train_idx.len() < config.k.max(2) {
            record.notes.push(format!(
                "skipped: {} training sub-trajectories cannot form {} clusters",
                train_idx.len(),
                config.k
            ));
            fold_records.push(record);
            continue;
        }

        let d_train = d.submatrix(&train_idx)?;
        let affinity = build_affinity(&d_train, config.kernel, config.kernel_scale)?;
        let model = spectral_cluster_with(
            &affinity,
            config.k,
            stream_seed(seed, &format!("fold:{fold_id}")),
            &config.spectral,
        )?;
        let train_memberships: Vec<Vec<f64>> = (0..train_idx.len())
            .map(|li| membership(li, &affinity, &model, config.sigma).map(|m| m.values().to_vec()))
            .collect::<Result<_>>()?;
        let test_memberships: Vec<Vec<f64>> = test_idx
            .iter()
            .map(|&ti| {
                let affinities: Vec<f64> = train_idx
                    .iter()
                    .map(|&tj| model.kernel().affinity(model.kernel_scale(), d.get(ti, tj)))
                    .collect();
                membership_from_affinities(&affinities, None, &model, config.sigma)
                    .map(|m| m.values().to_vec())
            })
            .collect::<Result<_>>()?;

        for &target in &config.targets {
            let values = &target_values[&target];
            let eligible = |i: usize| {
                values[i].is_some() && demographic[i].is_some() && grade[i].is_some()
            };
            let train_rows: Vec<usize> = (0..train_idx.len())
                .filter(|&li| eligible(train_idx[li]))
                .collect();
            let test_rows: Vec<usize> = (0..test_idx.len())
                .filter(|&ti| eligible(test_idx[ti]))
                .collect();
            if test_rows.is_empty() {
                record.notes.push(format!("{target}: skipped, no labeled test rows"));
                continue;
            }
            let y_train: Vec<f64> = train_rows.iter().map(|&li| values[train_idx[li]].unwrap()).collect();
            let y_test: Vec<f64> = test_rows.iter().map(|&ti| values[test_idx[ti]].unwrap()).collect();

            for method in Method::ALL {
                let features_of = |global: usize, membership_row: &Vec<f64>| -> Vec<f64> {
                    match method {
                        Method::Demographic => demographic[global].clone().unwrap(),
                        Method::StaticGrade => grade[global].clone().unwrap(),
                        Method::ClusterMembership => membership_row.clone(),
                    }
                };
                let x_train: Vec<Vec<f64>> = train_rows
                    .iter()
                    .map(|&li| features_of(train_idx[li], &train_memberships[li]))
                    .collect();
                let width = x_train.first().map_or(0, Vec::len);
                if x_train.len() < width + 2 {
                    record.notes.push(format!(
                        "{target}/{method}: skipped, {} labeled training rows for {width} features",
                        x_train.len()
                    ));
                    continue;
                }
                let fit = fit_linear(&x_train, &y_train)?;
                let mae = test_rows
                    .iter()
                    .zip(&y_test)
                    .map(|(&ti, y)| {
                        let x = features_of(test_idx[ti], &test_memberships[ti]);
                        (fit.predict(&x) - y).abs()
                    })
                    .sum::<f64>()
                    / y_test.len() as f64;
                measurements.push(Measurement {
                    seed,
                    fold: fold_id,
                    target,
                    method,
                    n_train_rows: train_rows.len(),
                    n_test_rows: test_rows.len(),
                    mae,
                });
            }
        }
        fold_records.push(record);
    }
    Ok((fold_records, measurements))
}
