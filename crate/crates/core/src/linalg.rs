//! Small dense linear-algebra helpers shared by the gain model, the solver and
//! the samplers.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{dim, Error, Result};

/// Reciprocal condition number below which a matrix is treated as singular.
pub const SINGULAR_RCOND: f64 = 1e-10;

pub fn matrix_from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let n = rows.len();
    let m = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != m) {
        return Err(dim("ragged matrix rows"));
    }
    Ok(DMatrix::from_fn(n, m, |i, j| rows[i][j]))
}

pub fn rows_from_matrix(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

pub fn is_symmetric(m: &DMatrix<f64>, tol: f64) -> bool {
    m.is_square()
        && (0..m.nrows()).all(|i| (0..i).all(|j| (m[(i, j)] - m[(j, i)]).abs() <= tol))
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return f64::INFINITY;
    }
    SymmetricEigen::new(symmetrize(m))
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Inverts a symmetric matrix after checking its reciprocal condition number
/// (ratio of extreme absolute eigenvalues).
pub fn symmetric_inverse(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !m.is_square() {
        return Err(dim("inverse of a non-square matrix"));
    }
    let eig = SymmetricEigen::new(symmetrize(m));
    let (lo, hi) = eig
        .eigenvalues
        .iter()
        .fold((f64::INFINITY, 0.0_f64), |(lo, hi), l| (lo.min(l.abs()), hi.max(l.abs())));
    let rcond = if hi > 0.0 { lo / hi } else { 0.0 };
    if !(rcond > SINGULAR_RCOND) {
        return Err(Error::Singular { rcond, threshold: SINGULAR_RCOND });
    }
    let inv_vals = eig.eigenvalues.map(|l| 1.0 / l);
    let v = &eig.eigenvectors;
    Ok(symmetrize(&(v * DMatrix::from_diagonal(&inv_vals) * v.transpose())))
}

/// Pairwise (cascade) summation; order-deterministic for a given slice.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    const LEAF: usize = 32;
    if xs.len() <= LEAF {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// Non-negative least squares `min ‖A u − b‖, u ≥ 0` by the Lawson–Hanson
/// active-set method. Returns `None` if the iteration cap is hit.
pub fn nnls(a: &DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    let (m, n) = a.shape();
    let scale = a.iter().fold(0.0_f64, |s, v| s.max(v.abs())).max(1e-300);
    let tol = 10.0 * f64::EPSILON * scale * (m.max(n) as f64) * b.amax().max(1.0);
    let mut u = DVector::zeros(n);
    let mut passive = vec![false; n];
    let max_outer = 3 * n + 10;
    for _ in 0..max_outer {
        let w = a.transpose() * (b - a * &u);
        let pick = (0..n).filter(|&j| !passive[j]).max_by(|&i, &j| w[i].total_cmp(&w[j]));
        match pick {
            Some(j) if w[j] > tol => passive[j] = true,
            _ => return Some(u),
        }
        for _ in 0..=3 * n {
            let cols: Vec<usize> = (0..n).filter(|&j| passive[j]).collect();
            let sub = DMatrix::from_fn(m, cols.len(), |i, c| a[(i, cols[c])]);
            let sol = sub.svd(true, true).solve(b, 1e-14 * scale).ok()?;
            if sol.iter().all(|&v| v > 0.0) {
                u.fill(0.0);
                for (c, &j) in cols.iter().enumerate() {
                    u[j] = sol[c];
                }
                break;
            }
            // step back toward the previous iterate until a component hits zero
            let alpha = cols
                .iter()
                .enumerate()
                .filter(|&(c, _)| sol[c] <= 0.0)
                .map(|(c, &j)| u[j] / (u[j] - sol[c]))
                .fold(1.0_f64, f64::min);
            for (c, &j) in cols.iter().enumerate() {
                u[j] += alpha * (sol[c] - u[j]);
                if u[j] <= 1e-300 || (sol[c] <= 0.0 && u[j] <= tol) {
                    u[j] = 0.0;
                    passive[j] = false;
                }
            }
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nnls_matches_unconstrained_when_interior() {
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        let b = DVector::from_row_slice(&[1.0, 2.0, 3.0]);
        let u = nnls(&a, &b).unwrap();
        assert!((u[0] - 1.0).abs() < 1e-12 && (u[1] - 2.0).abs() < 1e-12);
        // negative target on the first coordinate is clipped
        let b = DVector::from_row_slice(&[-1.0, 2.0, 1.0]);
        let u = nnls(&a, &b).unwrap();
        assert_eq!(u[0], 0.0);
        assert!((u[1] - 1.5).abs() < 1e-12);
    }

    #[test]
    fn inverse_roundtrip_and_singular_detection() {
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let inv = symmetric_inverse(&m).unwrap();
        let id = &m * &inv;
        assert!((id - DMatrix::identity(2, 2)).norm() < 1e-12);

        let s = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(matches!(symmetric_inverse(&s), Err(Error::Singular { .. })));
    }

    #[test]
    fn pairwise_sum_matches_naive() {
        let xs: Vec<f64> = (0..1000).map(|i| (i as f64).sin()).collect();
        let naive: f64 = xs.iter().sum();
        assert!((pairwise_sum(&xs) - naive).abs() < 1e-10);
    }
}
