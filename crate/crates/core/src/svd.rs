//! One-sided (Hestenes) Jacobi singular values.
//!
//! Unlike bidiagonalization-based SVD, one-sided Jacobi computes every
//! singular value to high relative accuracy when the matrix is a
//! well-conditioned matrix times a column scaling. Products of random
//! matrices are graded this way, and their smallest singular values sit
//! many orders of magnitude below the largest.

use nalgebra::DMatrix;

const MAX_SWEEPS: usize = 80;

/// Singular values in descending order.
pub fn singular_values_jacobi(m: &DMatrix<f64>) -> Vec<f64> {
    // Work on the orientation with at least as many rows as columns.
    let mut g = if m.nrows() >= m.ncols() {
        m.clone()
    } else {
        m.transpose()
    };
    let n = g.ncols();
    let tol = f64::EPSILON * (g.nrows() as f64).sqrt();
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let (mut alpha, mut beta, mut gamma) = (0.0, 0.0, 0.0);
                for i in 0..g.nrows() {
                    let (a, b) = (g[(i, p)], g[(i, q)]);
                    alpha += a * a;
                    beta += b * b;
                    gamma += a * b;
                }
                if gamma == 0.0 || gamma.abs() <= tol * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for i in 0..g.nrows() {
                    let (a, b) = (g[(i, p)], g[(i, q)]);
                    g[(i, p)] = c * a - s * b;
                    g[(i, q)] = s * a + c * b;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let mut sv: Vec<f64> = (0..n).map(|j| g.column(j).norm()).collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    sv
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;

    #[test]
    fn agrees_with_nalgebra_on_well_conditioned() {
        let m = DMatrix::from_fn(6, 4, |i, j| ((i * 7 + j * 3) % 5) as f64 - 1.7 + 0.1 * (i as f64));
        let ours = singular_values_jacobi(&m);
        let mut theirs: Vec<f64> = m.clone().svd(false, false).singular_values.iter().copied().collect();
        theirs.sort_by(|a, b| b.total_cmp(a));
        for (a, b) in ours.iter().zip(&theirs) {
            assert!((a - b).abs() <= 1e-12 * theirs[0], "{a} vs {b}");
        }
        let wide = singular_values_jacobi(&m.transpose());
        for (a, b) in wide.iter().zip(&ours) {
            assert!((a - b).abs() <= 1e-12 * ours[0]);
        }
    }

    #[test]
    fn relative_accuracy_on_graded_matrix() {
        // B · diag(1, 1e-20, 1e-40) with orthonormal B: singular values are the scales.
        let (c, s) = (0.6f64, 0.8f64);
        let b = DMatrix::from_row_slice(3, 3, &[c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0]);
        let scales = [1.0, 1e-20, 1e-40];
        let m = b * DMatrix::from_diagonal(&DVector::from_row_slice(&scales));
        let sv = singular_values_jacobi(&m);
        for (got, want) in sv.iter().zip(scales) {
            assert!(((got - want) / want).abs() < 1e-13, "{got} vs {want}");
        }
    }
}
