//! Small dense helpers shared by the solvers.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::tensorops::symmetrize_checked;

const JACOBI_TOL: f64 = 1e-13;
const JACOBI_MAX_SWEEPS: usize = 100;

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Returns eigenvalues in ascending order and the matching orthonormal
/// eigenvectors as columns.
pub fn jacobi_eigen(sym: &DMatrix<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let mut a = symmetrize_checked(sym)?;
    let n = a.nrows();
    let mut v = DMatrix::<f64>::identity(n, n);
    let scale = a.norm().max(f64::MIN_POSITIVE);

    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut off = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                off += a[(i, j)] * a[(i, j)];
            }
        }
        if off.sqrt() <= JACOBI_TOL * scale {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq.abs() <= f64::MIN_POSITIVE {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(i, i)].total_cmp(&a[(j, j)]));
    let values = DVector::from_iterator(n, order.iter().map(|&i| a[(i, i)]));
    let vectors = DMatrix::from_fn(n, n, |r, c| v[(r, order[c])]);
    Ok((values, vectors))
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(sym: &DMatrix<f64>) -> Result<f64> {
    let (vals, _) = jacobi_eigen(sym)?;
    Ok(vals.iter().copied().fold(f64::INFINITY, f64::min))
}

/// Induced 2-norm (largest singular value).
pub fn op_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.singular_values().max()
}

/// Largest eigenvalue modulus of a square matrix.
pub fn spectral_radius(m: &DMatrix<f64>) -> Result<f64> {
    if !m.is_square() {
        return Err(Error::Dimension(format!(
            "spectral radius of a {}x{} matrix",
            m.nrows(),
            m.ncols()
        )));
    }
    if m.is_empty() {
        return Ok(0.0);
    }
    Ok(m.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max))
}

/// Factor `L` with `L L' = cov`.
///
/// Cholesky first; positive semidefinite but singular covariances fall back to
/// the symmetric square root from the eigen-decomposition.
pub fn covariance_factor(cov: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let cov = symmetrize_checked(cov)?;
    if let Some(ch) = cov.clone().cholesky() {
        return Ok(ch.l());
    }
    let (vals, vecs) = jacobi_eigen(&cov)?;
    let tol = 1e-12 * vals.amax().max(1.0);
    if vals.iter().any(|&l| l < -tol) {
        return Err(Error::Domain(format!(
            "covariance is indefinite (smallest eigenvalue {:.3e})",
            vals.min()
        )));
    }
    let sqrt_vals = DMatrix::from_diagonal(&vals.map(|l| l.max(0.0).sqrt()));
    Ok(&vecs * sqrt_vals * vecs.transpose())
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    #[test]
    fn jacobi_reconstructs() {
        let s = dmatrix![4.0, 1.0, 0.5; 1.0, 3.0, -0.2; 0.5, -0.2, 1.0];
        let (vals, vecs) = jacobi_eigen(&s).unwrap();
        let rebuilt = &vecs * DMatrix::from_diagonal(&vals) * vecs.transpose();
        assert!((rebuilt - &s).amax() < 1e-12);
        assert!(vals[0] <= vals[1] && vals[1] <= vals[2]);
        let orth = vecs.transpose() * &vecs - DMatrix::identity(3, 3);
        assert!(orth.amax() < 1e-12);
    }

    #[test]
    fn jacobi_two_by_two() {
        let (vals, _) = jacobi_eigen(&dmatrix![2.0, 1.0; 1.0, 2.0]).unwrap();
        assert!((vals[0] - 1.0).abs() < 1e-14 && (vals[1] - 3.0).abs() < 1e-14);
    }

    #[test]
    fn spectral_radius_examples() {
        assert!((spectral_radius(&dmatrix![0.5, 0.0; 0.0, -0.9]).unwrap() - 0.9).abs() < 1e-12);
        assert!((spectral_radius(&DMatrix::identity(3, 3)).unwrap() - 1.0).abs() < 1e-12);
        // rotation: complex pair on the unit circle scaled by 0.8
        let r = dmatrix![0.0, -0.8; 0.8, 0.0];
        assert!((spectral_radius(&r).unwrap() - 0.8).abs() < 1e-12);
        assert!(spectral_radius(&DMatrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn covariance_factor_handles_singular() {
        let l = covariance_factor(&DMatrix::zeros(2, 2)).unwrap();
        assert_eq!(l, DMatrix::zeros(2, 2));
        let c = dmatrix![1.0, 1.0; 1.0, 1.0];
        let l = covariance_factor(&c).unwrap();
        assert!((&l * l.transpose() - &c).amax() < 1e-12);
        assert!(matches!(
            covariance_factor(&dmatrix![1.0, 0.0; 0.0, -1.0]),
            Err(Error::Domain(_))
        ));
    }
}
