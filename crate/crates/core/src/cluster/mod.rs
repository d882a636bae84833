//! Spectral clustering of sub-trajectories.
//!
//! A [`DistanceMatrix`] is converted into a nonnegative [`AffinityMatrix`]
//! by one of two kernels, then grouped with normalized spectral clustering:
//! symmetric normalized Laplacian, the K eigenvectors of the smallest
//! eigenvalues, row normalization, and seeded k-means on the embedded rows.
//!
//! The default `shifted_negative` kernel takes affinity as the distance
//! subtracted from the largest observed distance, which keeps entries
//! nonnegative without choosing a bandwidth. The `gaussian` kernel is the
//! standard heat-kernel alternative with an explicit or median-derived
//! scale. Rows left with zero off-diagonal affinity (possible under a tiny
//! gaussian scale) carry no spectral information; they are flagged in the
//! model and reassigned to the cluster of their nearest neighbour by
//! distance when that move leaves no cluster empty.

mod eigen;
mod kmeans;

use kmeans::kmeans;

use std::str::FromStr;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::metric::DistanceMatrix;
use crate::model::MetricParams;

/// Affinity kernel choice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Kernel {
    /// `A_ij = max(0, shift - d_ij)` with the shift equal to the largest
    /// training distance. Default.
    #[default]
    ShiftedNegative,
    /// `A_ij = exp(-d_ij^2 / (2 scale^2))`.
    Gaussian,
}

impl Kernel {
    pub fn as_str(&self) -> &'static str {
        match self {
            Kernel::ShiftedNegative => "shifted_negative",
            Kernel::Gaussian => "gaussian",
        }
    }

    /// Affinity of a single distance under this kernel with the given
    /// scale (the shift for `ShiftedNegative`, the bandwidth for
    /// `Gaussian`). Nonnegative for any input; distances beyond the shift
    /// clamp to zero so that unseen test distances stay valid.
    pub fn affinity(&self, scale: f64, d: f64) -> f64 {
        match self {
            Kernel::ShiftedNegative => (scale - d).max(0.0),
            Kernel::Gaussian => (-d * d / (2.0 * scale * scale)).exp(),
        }
    }
}

impl std::fmt::Display for Kernel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Kernel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "shifted_negative" => Ok(Kernel::ShiftedNegative),
            "gaussian" => Ok(Kernel::Gaussian),
            other => Err(Error::InvalidParam(format!(
                "unknown kernel '{other}' (expected shifted_negative or gaussian)"
            ))),
        }
    }
}

/// Symmetric nonnegative affinity matrix over sub-trajectories, with the
/// kernel that produced it and each row's nearest neighbour by distance.
#[derive(Debug, Clone)]
pub struct AffinityMatrix {
    n: usize,
    values: Vec<f64>,
    kernel: Kernel,
    scale: f64,
    params: MetricParams,
    ids: Vec<String>,
    nearest: Vec<usize>,
}

impl AffinityMatrix {
    /// Build from explicit affinity rows, for tests and synthetic setups
    /// where no distance matrix exists. Nearest neighbours fall back to
    /// the off-diagonal affinity argmax of each row.
    pub fn from_full(
        values: Vec<Vec<f64>>,
        kernel: Kernel,
        scale: f64,
        params: MetricParams,
        ids: Vec<String>,
    ) -> Result<Self> {
        let n = values.len();
        if n < 2 {
            return Err(Error::DegenerateAffinity(format!(
                "affinity needs at least 2 rows, got {n}"
            )));
        }
        if ids.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "{} ids for {n} affinity rows",
                ids.len()
            )));
        }
        let mut flat = Vec::with_capacity(n * n);
        for (i, row) in values.iter().enumerate() {
            if row.len() != n {
                return Err(Error::DimensionMismatch(format!(
                    "affinity row {i} has {} entries, expected {n}",
                    row.len()
                )));
            }
            flat.extend_from_slice(row);
        }
        for i in 0..n {
            for j in 0..n {
                let v = flat[i * n + j];
                if !v.is_finite() || v < 0.0 {
                    return Err(Error::InvalidParam(format!(
                        "affinity ({i},{j}) = {v} is not a finite nonnegative value"
                    )));
                }
                if (v - flat[j * n + i]).abs() > 1e-9 {
                    return Err(Error::InvalidParam(format!(
                        "affinity is asymmetric at ({i},{j}): {v} vs {}",
                        flat[j * n + i]
                    )));
                }
            }
        }
        let nearest = (0..n)
            .map(|i| {
                let mut best = usize::from(i == 0);
                for j in 0..n {
                    if j != i && flat[i * n + j] > flat[i * n + best] {
                        best = j;
                    }
                }
                best
            })
            .collect();
        Ok(Self { n, values: flat, kernel, scale, params, ids, nearest })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n..(i + 1) * self.n]
    }

    pub fn kernel(&self) -> Kernel {
        self.kernel
    }

    /// Shift (for `ShiftedNegative`) or bandwidth (for `Gaussian`).
    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn params(&self) -> MetricParams {
        self.params
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    /// Index of row `i`'s nearest neighbour (smallest distance, ties to
    /// the lowest index).
    pub fn nearest_neighbor(&self, i: usize) -> usize {
        self.nearest[i]
    }
}

/// Convert distances to affinities. `scale` must be `None` for
/// `ShiftedNegative` (the shift is always the largest distance); for
/// `Gaussian` it is the bandwidth, defaulting to the median off-diagonal
/// distance.
pub fn build_affinity(
    d: &DistanceMatrix,
    kernel: Kernel,
    scale: Option<f64>,
) -> Result<AffinityMatrix> {
    let n = d.n();
    if n < 2 {
        return Err(Error::DegenerateAffinity(format!(
            "affinity needs at least 2 sub-trajectories, got {n}"
        )));
    }
    let scale = match (kernel, scale) {
        (Kernel::ShiftedNegative, None) => d.max(),
        (Kernel::ShiftedNegative, Some(_)) => {
            return Err(Error::InvalidParam(
                "shifted_negative derives its shift from the distances; scale must not be set"
                    .into(),
            ))
        }
        (Kernel::Gaussian, Some(s)) => {
            if !s.is_finite() || s <= 0.0 {
                return Err(Error::InvalidParam(format!(
                    "gaussian kernel scale must be positive and finite, got {s}"
                )));
            }
            s
        }
        (Kernel::Gaussian, None) => {
            let median = d.median_off_diagonal().unwrap_or(0.0);
            if median <= 0.0 {
                return Err(Error::DegenerateAffinity(format!(
                    "median off-diagonal distance {median} cannot serve as a gaussian scale"
                )));
            }
            median
        }
    };

    let mut values = vec![0.0; n * n];
    values
        .par_chunks_mut(n)
        .enumerate()
        .for_each(|(i, row)| {
            for (j, slot) in row.iter_mut().enumerate() {
                if j != i {
                    *slot = kernel.affinity(scale, d.get(i, j));
                }
            }
            // Self-affinity is the row maximum, so no point is less
            // similar to itself than to any neighbour.
            row[i] = row
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, v)| *v)
                .fold(0.0, f64::max);
        });

    let degenerate = (0..n).all(|i| (0..n).all(|j| j == i || values[i * n + j] == 0.0));
    if degenerate {
        return Err(Error::DegenerateAffinity(
            "all off-diagonal affinities are zero; the kernel erased every distinction".into(),
        ));
    }

    let nearest = (0..n)
        .map(|i| {
            let mut best = usize::from(i == 0);
            for j in 0..n {
                if j != i && d.get(i, j) < d.get(i, best) {
                    best = j;
                }
            }
            best
        })
        .collect();

    Ok(AffinityMatrix {
        n,
        values,
        kernel,
        scale,
        params: d.params(),
        ids: d.ids().to_vec(),
        nearest,
    })
}

/// Eigensolver backend selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EigenSolver {
    /// Dense below [`SpectralOptions::dense_cutoff`], Lanczos above.
    #[default]
    Auto,
    Dense,
    Lanczos,
}

/// Tuning knobs for [`spectral_cluster_with`].
#[derive(Debug, Clone)]
pub struct SpectralOptions {
    /// Independent k-means restarts; the lowest-inertia run wins.
    pub restarts: usize,
    /// Centroid-shift convergence tolerance for k-means.
    pub kmeans_tol: f64,
    /// Iteration cap per k-means restart.
    pub kmeans_max_iter: usize,
    pub solver: EigenSolver,
    /// Largest n solved by full eigendecomposition under `Auto`.
    pub dense_cutoff: usize,
    /// Residual tolerance for the iterative eigensolver.
    pub lanczos_tol: f64,
}

impl Default for SpectralOptions {
    fn default() -> Self {
        Self {
            restarts: 50,
            kmeans_tol: 1e-8,
            kmeans_max_iter: 200,
            solver: EigenSolver::Auto,
            dense_cutoff: 2000,
            lanczos_tol: 1e-10,
        }
    }
}

/// Fitted clustering: the partition of sub-trajectories plus everything
/// needed to reproduce it and to embed new points consistently.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterModel {
    k: usize,
    assignment: Vec<usize>,
    members: Vec<Vec<usize>>,
    params: MetricParams,
    kernel: Kernel,
    kernel_scale: f64,
    kmeans_seed: u64,
    embedding: Vec<Vec<f64>>,
    eigenvalues: Vec<f64>,
    isolated: Vec<usize>,
    ids: Vec<String>,
}

impl ClusterModel {
    /// Reassemble a model from stored parts. Member lists are derived
    /// from the assignment.
    pub fn from_parts(
        k: usize,
        assignment: Vec<usize>,
        params: MetricParams,
        kernel: Kernel,
        kernel_scale: f64,
        kmeans_seed: u64,
        embedding: Vec<Vec<f64>>,
        eigenvalues: Vec<f64>,
        isolated: Vec<usize>,
        ids: Vec<String>,
    ) -> Result<Self> {
        let n = assignment.len();
        if k == 0 || n == 0 {
            return Err(Error::InvalidParam(format!(
                "cluster model needs k >= 1 and n >= 1, got k = {k}, n = {n}"
            )));
        }
        if ids.len() != n || embedding.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "assignment has {n} entries but {} ids and {} embedding rows",
                ids.len(),
                embedding.len()
            )));
        }
        if eigenvalues.len() != k {
            return Err(Error::DimensionMismatch(format!(
                "{} eigenvalues for k = {k}",
                eigenvalues.len()
            )));
        }
        let mut members = vec![Vec::new(); k];
        for (i, &c) in assignment.iter().enumerate() {
            if c >= k {
                return Err(Error::InvalidParam(format!(
                    "assignment[{i}] = {c} is outside [0, {k})"
                )));
            }
            members[c].push(i);
        }
        if members.iter().any(|m| m.is_empty()) {
            return Err(Error::InvalidParam("a cluster has no members".into()));
        }
        if isolated.iter().any(|&i| i >= n) {
            return Err(Error::InvalidParam("isolated index outside the dataset".into()));
        }
        Ok(Self {
            k,
            assignment,
            members,
            params,
            kernel,
            kernel_scale,
            kmeans_seed,
            embedding,
            eigenvalues,
            isolated,
            ids,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n(&self) -> usize {
        self.assignment.len()
    }

    /// Cluster id per sub-trajectory index.
    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    pub fn cluster_of(&self, i: usize) -> usize {
        self.assignment[i]
    }

    /// Member indices per cluster, each list ascending.
    pub fn members(&self) -> &[Vec<usize>] {
        &self.members
    }

    pub fn params(&self) -> MetricParams {
        self.params
    }

    pub fn kernel(&self) -> Kernel {
        self.kernel
    }

    pub fn kernel_scale(&self) -> f64 {
        self.kernel_scale
    }

    pub fn kmeans_seed(&self) -> u64 {
        self.kmeans_seed
    }

    /// Row-normalized spectral embedding the partition was computed on.
    pub fn embedding(&self) -> &[Vec<f64>] {
        &self.embedding
    }

    /// The k smallest Laplacian eigenvalues, ascending.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Rows that had zero off-diagonal affinity, ascending.
    pub fn isolated(&self) -> &[usize] {
        &self.isolated
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }
}

/// Normalized spectral clustering with default options.
pub fn spectral_cluster(a: &AffinityMatrix, k: usize, seed: u64) -> Result<ClusterModel> {
    spectral_cluster_with(a, k, seed, &SpectralOptions::default())
}

pub fn spectral_cluster_with(
    a: &AffinityMatrix,
    k: usize,
    seed: u64,
    options: &SpectralOptions,
) -> Result<ClusterModel> {
    let n = a.n();
    if k < 2 {
        return Err(Error::InvalidParam(format!("cluster count must be at least 2, got {k}")));
    }
    if n < k {
        return Err(Error::InvalidParam(format!(
            "cannot form {k} clusters from {n} sub-trajectories"
        )));
    }

    // Degrees include the self-affinity; zero-degree rows normalize to an
    // identity row of the Laplacian rather than dividing by zero.
    let degrees: Vec<f64> = (0..n).map(|i| a.row(i).iter().sum()).collect();
    let inv_sqrt: Vec<f64> = degrees
        .iter()
        .map(|&d| if d > 0.0 { 1.0 / d.sqrt() } else { 0.0 })
        .collect();
    let mut laplacian = vec![0.0; n * n];
    laplacian
        .par_chunks_mut(n)
        .enumerate()
        .for_each(|(i, row)| {
            for (j, slot) in row.iter_mut().enumerate() {
                let norm = inv_sqrt[i] * inv_sqrt[j] * a.get(i, j);
                *slot = if i == j { 1.0 - norm } else { -norm };
            }
        });

    let use_dense = match options.solver {
        EigenSolver::Dense => true,
        EigenSolver::Lanczos => false,
        EigenSolver::Auto => n <= options.dense_cutoff,
    };
    let (eigenvalues, mut embedding) = if use_dense {
        eigen::smallest_eigenpairs_dense(&laplacian, n, k)?
    } else {
        eigen::smallest_eigenpairs_lanczos(&laplacian, n, k, options.lanczos_tol, seed)?
    };

    for row in embedding.iter_mut() {
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            for v in row.iter_mut() {
                *v /= norm;
            }
        }
    }

    let outcome = kmeans(
        &embedding,
        k,
        seed,
        options.restarts,
        options.kmeans_tol,
        options.kmeans_max_iter,
    )?;
    let mut assignment = outcome.assignment;
    let mut members = vec![Vec::new(); k];
    for (i, &c) in assignment.iter().enumerate() {
        members[c].push(i);
    }

    // Isolated rows landed in k-means by the arbitrary position of their
    // zero embedding row; adopt the nearest neighbour's cluster instead,
    // unless that would empty the cluster they were holding up.
    let isolated: Vec<usize> = (0..n)
        .filter(|&i| a.row(i).iter().enumerate().all(|(j, &v)| j == i || v == 0.0))
        .collect();
    for &i in &isolated {
        let from = assignment[i];
        let to = assignment[a.nearest_neighbor(i)];
        if to != from && members[from].len() > 1 {
            members[from].retain(|&m| m != i);
            members[to].push(i);
            members[to].sort_unstable();
            assignment[i] = to;
        }
    }
    debug_assert!(members.iter().all(|m| !m.is_empty()));

    Ok(ClusterModel {
        k,
        assignment,
        members,
        params: a.params(),
        kernel: a.kernel(),
        kernel_scale: a.scale(),
        kmeans_seed: seed,
        embedding,
        eigenvalues,
        isolated,
        ids: a.ids().to_vec(),
    })
}

/// Cluster for a new sub-trajectory given its distances to every training
/// sub-trajectory, in model index order: the cluster with the smallest
/// mean distance to its members, ties to the lower cluster id.
pub fn assign_new(model: &ClusterModel, distances: &[f64]) -> Result<usize> {
    if distances.len() != model.n() {
        return Err(Error::DimensionMismatch(format!(
            "{} distances for a model of {} sub-trajectories",
            distances.len(),
            model.n()
        )));
    }
    if distances.iter().any(|d| !d.is_finite() || *d < 0.0) {
        return Err(Error::InvalidParam(
            "distances to training sub-trajectories must be finite and nonnegative".into(),
        ));
    }
    let mut best = 0;
    let mut best_mean = f64::INFINITY;
    for (c, members) in model.members().iter().enumerate() {
        let mean = members.iter().map(|&m| distances[m]).sum::<f64>() / members.len() as f64;
        if mean < best_mean {
            best = c;
            best_mean = mean;
        }
    }
    Ok(best)
}

/// Medoid of each cluster: the member minimizing the summed distance to
/// its fellow members, ties to the lowest index. Indexes into `d`.
pub fn medoids(model: &ClusterModel, d: &DistanceMatrix) -> Result<Vec<usize>> {
    if d.n() != model.n() {
        return Err(Error::DimensionMismatch(format!(
            "distance matrix over {} sub-trajectories for a model of {}",
            d.n(),
            model.n()
        )));
    }
    Ok(model
        .members()
        .iter()
        .map(|members| {
            let mut best = members[0];
            let mut best_sum = f64::INFINITY;
            for &i in members {
                let sum: f64 = members.iter().map(|&j| d.get(i, j)).sum();
                if sum < best_sum {
                    best = i;
                    best_sum = sum;
                }
            }
            best
        })
        .collect())
}

/// Adjusted Rand index between two labelings of the same items. 1 is
/// perfect agreement, 0 is chance level; the index is invariant to label
/// permutation. Both labelings identical up to permutation gives exactly
/// 1, including the degenerate single-cluster and all-singleton cases.
///
/// Panics if the slices differ in length.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> f64 {
    assert_eq!(a.len(), b.len(), "labelings must cover the same items");
    let n = a.len();
    if n == 0 {
        return 1.0;
    }
    let ka = a.iter().max().unwrap() + 1;
    let kb = b.iter().max().unwrap() + 1;
    let mut table = vec![0u64; ka * kb];
    let mut rows = vec![0u64; ka];
    let mut cols = vec![0u64; kb];
    for (&x, &y) in a.iter().zip(b) {
        table[x * kb + y] += 1;
        rows[x] += 1;
        cols[y] += 1;
    }
    let choose2 = |c: u64| {
        let c = c as f64;
        c * (c - 1.0) * 0.5
    };
    let index: f64 = table.iter().map(|&c| choose2(c)).sum();
    let sum_rows: f64 = rows.iter().map(|&c| choose2(c)).sum();
    let sum_cols: f64 = cols.iter().map(|&c| choose2(c)).sum();
    let expected = sum_rows * sum_cols / choose2(n as u64);
    let max_index = 0.5 * (sum_rows + sum_cols);
    if (max_index - expected).abs() == 0.0 {
        return 1.0;
    }
    (index - expected) / (max_index - expected)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metric::DistanceMatrix;
    use crate::model::MetricParams;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("s{i}")).collect()
    }

    fn dmat(rows: Vec<Vec<f64>>) -> DistanceMatrix {
        let n = rows.len();
        let flat: Vec<f64> = rows.into_iter().flatten().collect();
        DistanceMatrix::from_full(flat, ids(n), MetricParams::default(), Default::default())
            .unwrap()
    }

    /// Distances between 2-D points, as a matrix.
    fn euclidean_dmat(points: &[[f64; 2]]) -> DistanceMatrix {
        let rows = points
            .iter()
            .map(|p| {
                points
                    .iter()
                    .map(|q| ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt())
                    .collect()
            })
            .collect();
        dmat(rows)
    }

    fn block_affinity(blocks: &[usize]) -> AffinityMatrix {
        let n: usize = blocks.iter().sum();
        let labels: Vec<usize> = blocks
            .iter()
            .enumerate()
            .flat_map(|(b, &c)| std::iter::repeat_n(b, c))
            .collect();
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| if labels[i] == labels[j] { 1.0 } else { 0.0 })
                    .collect()
            })
            .collect();
        AffinityMatrix::from_full(rows, Kernel::ShiftedNegative, 1.0, MetricParams::default(), ids(n))
            .unwrap()
    }

    #[test]
    fn kernel_parses_and_prints() {
        for k in [Kernel::ShiftedNegative, Kernel::Gaussian] {
            assert_eq!(k.as_str().parse::<Kernel>().unwrap(), k);
        }
        assert!("cosine".parse::<Kernel>().is_err());
    }

    #[test]
    fn kernel_affinity_values() {
        // Shift 5: distance 2 gives 3, distances past the shift clamp to 0.
        assert_eq!(Kernel::ShiftedNegative.affinity(5.0, 2.0), 3.0);
        assert_eq!(Kernel::ShiftedNegative.affinity(5.0, 7.0), 0.0);
        // Gaussian at d = scale is exp(-1/2).
        let g = Kernel::Gaussian.affinity(1.5, 1.5);
        assert!((g - 0.6065306597126334).abs() < 1e-15);
        assert_eq!(Kernel::Gaussian.affinity(1.0, 0.0), 1.0);
    }

    #[test]
    fn shifted_affinity_matches_formula_with_row_max_diagonal() {
        let d = dmat(vec![
            vec![0.0, 1.0, 4.0],
            vec![1.0, 0.0, 2.0],
            vec![4.0, 2.0, 0.0],
        ]);
        let a = build_affinity(&d, Kernel::ShiftedNegative, None).unwrap();
        assert_eq!(a.scale(), 4.0);
        assert_eq!(a.get(0, 1), 3.0);
        assert_eq!(a.get(0, 2), 0.0);
        assert_eq!(a.get(1, 2), 2.0);
        // Diagonal entries are each row's off-diagonal maximum.
        assert_eq!(a.get(0, 0), 3.0);
        assert_eq!(a.get(1, 1), 3.0);
        assert_eq!(a.get(2, 2), 2.0);
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(a.get(i, j), a.get(j, i));
            }
        }
        // Nearest neighbours come from distances.
        assert_eq!(a.nearest_neighbor(0), 1);
        assert_eq!(a.nearest_neighbor(1), 0);
        assert_eq!(a.nearest_neighbor(2), 1);
    }

    #[test]
    fn uniform_distances_degenerate_under_shifted_but_not_gaussian() {
        let c = 3.0;
        let d = dmat(vec![
            vec![0.0, c, c],
            vec![c, 0.0, c],
            vec![c, c, 0.0],
        ]);
        let err = build_affinity(&d, Kernel::ShiftedNegative, None).unwrap_err();
        assert!(matches!(err, Error::DegenerateAffinity(_)), "got {err}");

        let a = build_affinity(&d, Kernel::Gaussian, None).unwrap();
        let expected = (-0.5_f64).exp();
        for i in 0..3 {
            for j in 0..3 {
                if i != j {
                    assert!((a.get(i, j) - expected).abs() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn duplicated_pair_attains_maximal_affinity() {
        let d = dmat(vec![
            vec![0.0, 0.0, 2.0],
            vec![0.0, 0.0, 2.0],
            vec![2.0, 2.0, 0.0],
        ]);
        for kernel in [Kernel::ShiftedNegative, Kernel::Gaussian] {
            let a = build_affinity(&d, kernel, None).unwrap();
            let max = (0..3)
                .flat_map(|i| (0..3).map(move |j| (i, j)))
                .filter(|(i, j)| i != j)
                .map(|(i, j)| a.get(i, j))
                .fold(0.0, f64::max);
            assert_eq!(a.get(0, 1), max);
        }
    }

    #[test]
    fn gaussian_median_scale_is_the_default() {
        let d = dmat(vec![
            vec![0.0, 1.0, 2.0],
            vec![1.0, 0.0, 3.0],
            vec![2.0, 3.0, 0.0],
        ]);
        let a = build_affinity(&d, Kernel::Gaussian, None).unwrap();
        assert_eq!(a.scale(), 2.0);
        // At the median distance the affinity is exp(-1/2).
        assert!((a.get(0, 2) - (-0.5_f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn affinity_scale_misuse_is_rejected() {
        let d = dmat(vec![vec![0.0, 1.0], vec![1.0, 0.0]]);
        assert!(build_affinity(&d, Kernel::ShiftedNegative, Some(2.0)).is_err());
        assert!(build_affinity(&d, Kernel::Gaussian, Some(0.0)).is_err());
        assert!(build_affinity(&d, Kernel::Gaussian, Some(f64::NAN)).is_err());
    }

    #[test]
    fn all_duplicates_cannot_derive_a_gaussian_scale() {
        let d = dmat(vec![
            vec![0.0, 0.0, 0.0],
            vec![0.0, 0.0, 0.0],
            vec![0.0, 0.0, 0.0],
        ]);
        let err = build_affinity(&d, Kernel::Gaussian, None).unwrap_err();
        assert!(matches!(err, Error::DegenerateAffinity(_)));
    }

    #[test]
    fn two_blocks_recover_exactly() {
        let a = block_affinity(&[4, 3]);
        let model = spectral_cluster(&a, 2, 7).unwrap();
        let truth: Vec<usize> = (0..7).map(|i| usize::from(i >= 4)).collect();
        assert_eq!(adjusted_rand_index(model.assignment(), &truth), 1.0);
        assert!(model.isolated().is_empty());
        assert_eq!(model.members().iter().map(Vec::len).sum::<usize>(), 7);
    }

    #[test]
    fn component_count_shows_as_zero_eigenvalue_multiplicity() {
        let a = block_affinity(&[3, 4, 5]);
        let model = spectral_cluster(&a, 3, 11).unwrap();
        for (i, ev) in model.eigenvalues().iter().enumerate() {
            assert!(ev.abs() < 1e-8, "eigenvalue {i} = {ev} should be 0");
        }
        let truth: Vec<usize> = (0..12).map(|i| usize::from(i >= 3) + usize::from(i >= 7)).collect();
        assert_eq!(adjusted_rand_index(model.assignment(), &truth), 1.0);
    }

    #[test]
    fn four_points_four_clusters_are_singletons() {
        let d = euclidean_dmat(&[[0.0, 0.0], [5.0, 0.0], [0.0, 5.0], [5.0, 5.0]]);
        let a = build_affinity(&d, Kernel::ShiftedNegative, None).unwrap();
        let model = spectral_cluster(&a, 4, 3).unwrap();
        let mut sorted = model.assignment().to_vec();
        sorted.sort_unstable();
        assert_eq!(sorted, vec![0, 1, 2, 3]);
        assert!(model.members().iter().all(|m| m.len() == 1));
    }

    #[test]
    fn eigenvalues_stay_in_the_normalized_laplacian_range() {
        let d = euclidean_dmat(&[
            [0.0, 0.0],
            [0.3, 0.1],
            [4.0, 4.0],
            [4.2, 3.9],
            [8.0, 0.0],
            [8.1, 0.2],
        ]);
        let a = build_affinity(&d, Kernel::Gaussian, None).unwrap();
        let model = spectral_cluster(&a, 6, 1).unwrap();
        let evs = model.eigenvalues();
        assert!(evs[0].abs() < 1e-8, "smallest eigenvalue {} should be 0", evs[0]);
        for w in evs.windows(2) {
            assert!(w[0] <= w[1] + 1e-12);
        }
        for ev in evs {
            assert!(*ev >= -1e-6 && *ev <= 2.0 + 1e-6, "eigenvalue {ev} outside [0, 2]");
        }
    }

    #[test]
    fn three_blobs_cluster_perfectly() {
        let mut points = Vec::new();
        let mut labels = Vec::new();
        let centers = [[0.0, 0.0], [10.0, 0.0], [0.0, 10.0]];
        for (c, center) in centers.iter().enumerate() {
            for i in 0..8 {
                let angle = i as f64 * 0.7854;
                let r = 0.3 + 0.05 * i as f64;
                points.push([center[0] + r * angle.cos(), center[1] + r * angle.sin()]);
                labels.push(c);
            }
        }
        let d = euclidean_dmat(&points);
        for kernel in [Kernel::ShiftedNegative, Kernel::Gaussian] {
            let a = build_affinity(&d, kernel, None).unwrap();
            let model = spectral_cluster(&a, 3, 42).unwrap();
            assert_eq!(
                adjusted_rand_index(model.assignment(), &labels),
                1.0,
                "kernel {kernel} failed to separate the blobs"
            );
        }
    }

    #[test]
    fn clustering_is_deterministic_in_the_seed() {
        let a = block_affinity(&[5, 5, 4]);
        let m1 = spectral_cluster(&a, 3, 99).unwrap();
        let m2 = spectral_cluster(&a, 3, 99).unwrap();
        assert_eq!(m1.assignment(), m2.assignment());
        assert_eq!(m1.eigenvalues(), m2.eigenvalues());
        assert_eq!(m1.isolated(), m2.isolated());
    }

    #[test]
    fn isolated_row_is_flagged_and_adopts_its_neighbors_cluster() {
        // Two tight groups plus one point so remote that a tiny gaussian
        // scale zeroes all of its off-diagonal affinities.
        let points = [
            [0.0, 0.0],
            [0.1, 0.0],
            [0.0, 0.1],
            [5.0, 5.0],
            [5.1, 5.0],
            [5.0, 5.1],
            [90.0, 0.0],
        ];
        let d = euclidean_dmat(&points);
        let a = build_affinity(&d, Kernel::Gaussian, Some(0.5)).unwrap();
        assert!(a.row(6).iter().take(6).all(|&v| v == 0.0));
        let model = spectral_cluster(&a, 2, 5).unwrap();
        assert_eq!(model.isolated(), &[6]);
        // The outlier's nearest neighbour by distance is in the second
        // group, so it inherits that group's cluster.
        assert_eq!(model.cluster_of(6), model.cluster_of(a.nearest_neighbor(6)));
        let truth = [0, 0, 0, 1, 1, 1, 1];
        assert_eq!(adjusted_rand_index(&model.assignment()[..6], &truth[..6]), 1.0);
        assert_eq!(model.cluster_of(6), model.cluster_of(3));
    }

    #[test]
    fn preconditions_are_enforced() {
        let a = block_affinity(&[3, 3]);
        assert!(matches!(spectral_cluster(&a, 1, 0), Err(Error::InvalidParam(_))));
        assert!(matches!(spectral_cluster(&a, 7, 0), Err(Error::InvalidParam(_))));
        // n = k is allowed.
        assert!(spectral_cluster(&a, 6, 0).is_ok());
    }

    #[test]
    fn from_parts_validates_and_rebuilds_members() {
        let model = ClusterModel::from_parts(
            2,
            vec![0, 1, 0],
            MetricParams::default(),
            Kernel::Gaussian,
            1.0,
            9,
            vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.0]],
            vec![0.0, 0.1],
            vec![],
            ids(3),
        )
        .unwrap();
        assert_eq!(model.members(), &[vec![0, 2], vec![1]]);
        assert!(ClusterModel::from_parts(
            2,
            vec![0, 0, 0],
            MetricParams::default(),
            Kernel::Gaussian,
            1.0,
            9,
            vec![vec![0.0; 2]; 3],
            vec![0.0, 0.1],
            vec![],
            ids(3),
        )
        .is_err(), "empty cluster 1 must be rejected");
    }

    #[test]
    fn assign_new_takes_the_lowest_mean_distance_cluster() {
        let a = block_affinity(&[2, 2]);
        let model = spectral_cluster(&a, 2, 0).unwrap();
        let c01 = model.cluster_of(0);
        let c23 = model.cluster_of(2);
        // Closer to members 2 and 3.
        let near_back = vec![5.0, 5.0, 1.0, 2.0];
        assert_eq!(assign_new(&model, &near_back).unwrap(), c23);
        let near_front = vec![0.5, 1.5, 9.0, 9.0];
        assert_eq!(assign_new(&model, &near_front).unwrap(), c01);
        // Exact tie goes to the lower cluster id.
        let tie = vec![1.0, 1.0, 1.0, 1.0];
        assert_eq!(assign_new(&model, &tie).unwrap(), 0);
        assert!(assign_new(&model, &[1.0, 2.0]).is_err());
        assert!(assign_new(&model, &[1.0, 2.0, f64::NAN, 0.0]).is_err());
    }

    #[test]
    fn medoid_minimizes_summed_intra_cluster_distance() {
        // Group {0,1,2} on a line: the middle point 1 is the medoid.
        let points = [[0.0, 0.0], [1.0, 0.0], [2.0, 0.0], [20.0, 0.0], [21.0, 0.0]];
        let d = euclidean_dmat(&points);
        let a = build_affinity(&d, Kernel::ShiftedNegative, None).unwrap();
        let model = spectral_cluster(&a, 2, 0).unwrap();
        let meds = medoids(&model, &d).unwrap();
        let group_a = model.cluster_of(0);
        assert_eq!(meds[group_a], 1);
        assert_eq!(meds[1 - group_a], 3);
    }

    #[test]
    fn ari_known_values() {
        assert_eq!(adjusted_rand_index(&[0, 0, 1, 1], &[0, 0, 1, 1]), 1.0);
        assert_eq!(adjusted_rand_index(&[0, 0, 1, 1], &[1, 1, 0, 0]), 1.0);
        // Maximally crossed 2x2 partition.
        assert!((adjusted_rand_index(&[0, 0, 1, 1], &[0, 1, 0, 1]) + 0.5).abs() < 1e-12);
        // Degenerate cases where the correction denominator vanishes.
        assert_eq!(adjusted_rand_index(&[0, 0, 0], &[0, 0, 0]), 1.0);
        assert_eq!(adjusted_rand_index(&[0, 1, 2], &[2, 0, 1]), 1.0);
    }

    #[test]
    fn ari_is_invariant_to_relabeling() {
        let a = [0, 0, 1, 1, 2, 2, 0, 1];
        let b = [0, 1, 1, 1, 2, 2, 0, 0];
        let relabeled: Vec<usize> = a.iter().map(|&x| [2, 0, 1][x]).collect();
        let lhs = adjusted_rand_index(&a, &b);
        let rhs = adjusted_rand_index(&relabeled, &b);
        assert!((lhs - rhs).abs() < 1e-12);
        assert!(lhs < 1.0);
    }
}
