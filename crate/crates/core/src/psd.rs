//! Positive-semidefinite factorization with escalating diagonal jitter.

use nalgebra::{Cholesky, DMatrix, SymmetricEigen};
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Diagonal jitter schedule, relative to the largest diagonal entry.
///
/// Factorization is attempted with `initial · max_diag` added to the
/// diagonal, multiplying by 10 after each failure until `max · max_diag`
/// has been tried.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JitterPolicy {
    pub initial: f64,
    pub max: f64,
}

impl Default for JitterPolicy {
    fn default() -> Self {
        Self {
            initial: 1e-10,
            max: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PsdFactor {
    pub lower: DMatrix<f64>,
    pub jitter_used: f64,
}

impl PsdFactor {
    pub fn reconstruct(&self) -> DMatrix<f64> {
        &self.lower * self.lower.transpose()
    }
}

pub fn psd_factorize(m: &DMatrix<f64>, policy: JitterPolicy) -> Result<PsdFactor> {
    let n = m.nrows();
    if n == 0 || m.ncols() != n {
        return Err(Error::arg(format!(
            "expected a non-empty square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::arg("matrix has non-finite entries"));
    }
    if !(policy.initial > 0.0 && policy.max >= policy.initial) {
        return Err(Error::arg("jitter policy needs 0 < initial <= max"));
    }
    let scale = (0..n).map(|i| m[(i, i)].abs()).fold(0.0, f64::max);
    let scale = if scale > 0.0 { scale } else { 1.0 };
    let ceiling = policy.max * scale * (1.0 + 1e-12);
    let mut jitter = policy.initial * scale;
    while jitter <= ceiling {
        let mut shifted = m.clone();
        for i in 0..n {
            shifted[(i, i)] += jitter;
        }
        if let Some(chol) = Cholesky::new(shifted) {
            return Ok(PsdFactor {
                lower: chol.unpack(),
                jitter_used: jitter,
            });
        }
        jitter *= 10.0;
    }
    let min_eig = SymmetricEigen::new(m.clone())
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    Err(Error::numerical(
        "kernel-core",
        format!(
            "Cholesky failed up to jitter {:.3e}; smallest eigenvalue estimate {min_eig:.3e}",
            policy.max * scale
        ),
    ))
}

const ROW_BLOCK: usize = 512;

/// Low-rank factor `F` (N×r) from greedy diagonal-pivoted Cholesky, with
/// `F Fᵀ` matching the matrix up to a PSD residual whose largest diagonal
/// entry is below `tol · max_diag`.
///
/// Entries are requested lazily through `entry(i, j)`, so only `N·r` of
/// them are ever evaluated. Used for point sets too large for a dense
/// factorization.
pub fn pivoted_cholesky<F>(n: usize, entry: F, tol: f64) -> Result<DMatrix<f64>>
where
    F: Fn(usize, usize) -> f64 + Sync,
{
    if n == 0 {
        return Err(Error::arg("empty matrix"));
    }
    let mut residual: Vec<f64> = (0..n).map(|i| entry(i, i)).collect();
    let scale = residual.iter().copied().fold(0.0, f64::max);
    if !scale.is_finite() {
        return Err(Error::arg("matrix has non-finite diagonal"));
    }
    let threshold = tol * scale.max(f64::MIN_POSITIVE);
    let mut columns: Vec<Vec<f64>> = Vec::new();
    let mut pivots = vec![false; n];
    while columns.len() < n {
        let (pivot, &dmax) = residual
            .iter()
            .enumerate()
            .filter(|(i, _)| !pivots[*i])
            .max_by(|a, b| a.1.total_cmp(b.1))
            .expect("unpivoted index exists");
        if dmax <= threshold {
            break;
        }
        pivots[pivot] = true;
        let root = dmax.sqrt();
        let prev = &columns;
        let weights: Vec<f64> = prev.iter().map(|c| c[pivot]).collect();
        // col = (K[:, pivot] - L Lᵀ[:, pivot]) / root, streaming over the
        // previous columns one contiguous block of rows at a time
        let mut col = vec![0.0; n];
        col.par_chunks_mut(ROW_BLOCK).enumerate().for_each(|(b, out)| {
            let start = b * ROW_BLOCK;
            let end = start + out.len();
            for (c, &w) in prev.iter().zip(&weights) {
                for (o, v) in out.iter_mut().zip(&c[start..end]) {
                    *o += w * v;
                }
            }
            for (k, o) in out.iter_mut().enumerate() {
                let i = start + k;
                *o = if pivots[i] && i != pivot { 0.0 } else { (entry(i, pivot) - *o) / root };
            }
        });
        for (r, c) in residual.iter_mut().zip(&col) {
            *r -= c * c;
        }
        residual[pivot] = 0.0;
        columns.push(col);
    }
    if columns.is_empty() {
        // zero matrix
        return Ok(DMatrix::zeros(n, 1));
    }
    Ok(DMatrix::from_fn(n, columns.len(), |i, j| columns[j][i]))
}
