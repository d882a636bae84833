//! Smallest eigenpairs of a symmetric matrix (the normalized Laplacian).
//!
//! Two backends: a dense full eigendecomposition for desk-scale problems,
//! and a Lanczos iteration with full reorthogonalization and deflation for
//! large ones. The Lanczos path operates on `B = 2I - L`, whose largest
//! eigenvalues are the Laplacian's smallest, because Krylov methods converge
//! to extremal eigenvalues first. Deflation (restarting orthogonally to
//! everything already converged) recovers eigenvalue multiplicities that a
//! single Krylov chain cannot see.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::hash::stream_seed;

/// Smallest `k` eigenpairs of the symmetric `n x n` matrix `l` (row-major),
/// by full decomposition. Returns eigenvalues ascending and the embedding as
/// `n` rows of `k` components.
pub(crate) fn smallest_eigenpairs_dense(
    l: &[f64],
    n: usize,
    k: usize,
) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    debug_assert_eq!(l.len(), n * n);
    debug_assert!(k <= n);
    let se = DMatrix::from_row_slice(n, n, l).symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        se.eigenvalues[a]
            .partial_cmp(&se.eigenvalues[b])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    if se.eigenvalues.iter().any(|v| !v.is_finite()) {
        return Err(Error::Eigen("dense eigendecomposition produced non-finite eigenvalues".into()));
    }
    let values: Vec<f64> = order.iter().take(k).map(|&i| se.eigenvalues[i]).collect();
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|r| order.iter().take(k).map(|&c| se.eigenvectors[(r, c)]).collect())
        .collect();
    Ok((values, rows))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn axpy(y: &mut [f64], alpha: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// `w = (2I - L) q`.
fn matvec_b(l: &[f64], n: usize, q: &[f64], w: &mut [f64]) {
    w.par_iter_mut().enumerate().for_each(|(i, wi)| {
        let row = &l[i * n..(i + 1) * n];
        *wi = 2.0 * q[i] - dot(row, q);
    });
}

/// Smallest `k` eigenpairs via Lanczos with deflation. `l` must be
/// symmetric with spectrum inside `[0, 2]` (a normalized Laplacian).
/// Converges `min(n, k + 5)` pairs internally and returns the best `k`.
pub(crate) fn smallest_eigenpairs_lanczos(
    l: &[f64],
    n: usize,
    k: usize,
    tol: f64,
    seed: u64,
) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    debug_assert_eq!(l.len(), n * n);
    debug_assert!(k <= n);
    let target = (k + 5).min(n);
    let chain_max = (2 * target + 30).min(n);

    // Converged eigenpairs of B = 2I - L, kept mutually orthonormal.
    let mut conv_vals: Vec<f64> = Vec::new();
    let mut conv_vecs: Vec<Vec<f64>> = Vec::new();

    let orthogonalize = |v: &mut Vec<f64>, basis: &[Vec<f64>]| {
        for _ in 0..2 {
            for b in basis {
                let c = dot(v, b);
                axpy(v, -c, b);
            }
        }
    };

    let mut attempt: u64 = 0;
    while conv_vals.len() < target {
        if attempt >= 64 {
            return Err(Error::Eigen(format!(
                "Lanczos did not converge {target} eigenpairs within 64 restarts (got {})",
                conv_vals.len()
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(seed, &format!("lanczos:{attempt}")));
        attempt += 1;

        let mut q: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
        orthogonalize(&mut q, &conv_vecs);
        let qn = norm(&q);
        if qn < 1e-10 {
            continue;
        }
        for v in q.iter_mut() {
            *v /= qn;
        }

        let mut qs: Vec<Vec<f64>> = vec![q];
        let mut alphas: Vec<f64> = Vec::new();
        let mut betas: Vec<f64> = Vec::new();
        let mut w = vec![0.0; n];
        let mut ended_in_breakdown = false;
        while alphas.len() < chain_max {
            let j = qs.len() - 1;
            matvec_b(l, n, &qs[j], &mut w);
            let alpha = dot(&w, &qs[j]);
            alphas.push(alpha);
            axpy(&mut w, -alpha, &qs[j]);
            if j > 0 {
                axpy(&mut w, -betas[j - 1], &qs[j - 1]);
            }
            // Full reorthogonalization against converged and chain vectors.
            for _ in 0..2 {
                for b in conv_vecs.iter().chain(qs.iter()) {
                    let c = dot(&w, b);
                    axpy(&mut w, -c, b);
                }
            }
            let beta = norm(&w);
            if beta <= 1e-13 {
                ended_in_breakdown = true;
                break;
            }
            if alphas.len() == chain_max {
                betas.push(beta);
                break;
            }
            betas.push(beta);
            qs.push(w.iter().map(|v| v / beta).collect());
        }

        let m = alphas.len();
        if m == 0 {
            continue;
        }
        let mut t = DMatrix::zeros(m, m);
        for i in 0..m {
            t[(i, i)] = alphas[i];
            if i + 1 < m {
                t[(i, i + 1)] = betas[i];
                t[(i + 1, i)] = betas[i];
            }
        }
        let te = t.symmetric_eigen();
        let mut ritz_order: Vec<usize> = (0..m).collect();
        // Largest eigenvalues of B first: they are the Laplacian's smallest.
        ritz_order.sort_by(|&a, &b| {
            te.eigenvalues[b]
                .partial_cmp(&te.eigenvalues[a])
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        let beta_last = if ended_in_breakdown {
            0.0
        } else {
            *betas.last().unwrap_or(&0.0)
        };

        for &ri in &ritz_order {
            if conv_vals.len() >= target {
                break;
            }
            let residual = (beta_last * te.eigenvectors[(m - 1, ri)]).abs();
            if residual > tol {
                continue;
            }
            let mut y = vec![0.0; n];
            for (j, qj) in qs.iter().enumerate() {
                axpy(&mut y, te.eigenvectors[(j, ri)], qj);
            }
            orthogonalize(&mut y, &conv_vecs);
            let yn = norm(&y);
            // A vector swallowed by the converged subspace is a duplicate.
            if yn < 0.5 {
                continue;
            }
            for v in y.iter_mut() {
                *v /= yn;
            }
            conv_vals.push(te.eigenvalues[ri]);
            conv_vecs.push(y);
        }
    }

    // Keep the k largest B-eigenvalues, mapped back to L = 2I - B ascending.
    let mut order: Vec<usize> = (0..conv_vals.len()).collect();
    order.sort_by(|&a, &b| {
        conv_vals[b]
            .partial_cmp(&conv_vals[a])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let chosen: Vec<usize> = order.into_iter().take(k).collect();
    let values: Vec<f64> = chosen.iter().map(|&i| 2.0 - conv_vals[i]).collect();
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|r| chosen.iter().map(|&i| conv_vecs[i][r]).collect())
        .collect();
    Ok((values, rows))
}
