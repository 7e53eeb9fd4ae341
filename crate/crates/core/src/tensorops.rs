//! Vectorization algebra linking matrices and quadratic forms to flat
//! regression coordinates.
//!
//! Three half-vectorizations appear throughout the crate and all of them must
//! agree on ordering:
//!
//! * [`vec`] stacks columns (column-major, the nalgebra storage order).
//! * [`vecv`] lists the quadratic monomials `v_i v_j`, `i <= j`, row by row of
//!   the upper triangle.
//! * [`vecs`] lists the upper triangle of a symmetric matrix in the same order
//!   with off-diagonal entries doubled.
//!
//! With these conventions `vecs(P) . vecv(v) = v' P v` and
//! `kron(x, e) . vec(M) = e' M x`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative tolerance used to accept a matrix as symmetric.
pub const SYMMETRY_TOL: f64 = 1e-12;

/// Length of the half-vectorization of an `n x n` symmetric matrix.
pub fn tri_len(n: usize) -> usize {
    n * (n + 1) / 2
}

/// Inverse of [`tri_len`]; `None` when `len` is not a triangular number.
pub fn tri_dim(len: usize) -> Option<usize> {
    // n(n+1)/2 = len  =>  n = (sqrt(8 len + 1) - 1) / 2
    let n = (((8 * len + 1) as f64).sqrt() as usize).saturating_sub(1) / 2;
    (n.saturating_sub(1)..=n + 1).find(|&m| tri_len(m) == len)
}

/// Column-stacking vectorization.
pub fn vec(m: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_column_slice(m.as_slice())
}

/// Inverse of [`vec`].
pub fn unvec(v: &DVector<f64>, rows: usize, cols: usize) -> Result<DMatrix<f64>> {
    if v.len() != rows * cols {
        return Err(Error::Dimension(format!(
            "unvec: vector of length {} cannot fill a {rows}x{cols} matrix",
            v.len()
        )));
    }
    Ok(DMatrix::from_column_slice(rows, cols, v.as_slice()))
}

/// Quadratic monomials `[v1^2, v1 v2, .., v1 vn, v2^2, .., vn^2]`.
pub fn vecv(v: &DVector<f64>) -> DVector<f64> {
    let n = v.len();
    let mut out = Vec::with_capacity(tri_len(n));
    for i in 0..n {
        for j in i..n {
            out.push(v[i] * v[j]);
        }
    }
    DVector::from_vec(out)
}

/// Largest absolute asymmetry `|P_ij - P_ji|`, or an error for non-square input.
pub fn asymmetry(p: &DMatrix<f64>) -> Result<f64> {
    if !p.is_square() {
        return Err(Error::Dimension(format!(
            "expected a square matrix, got {}x{}",
            p.nrows(),
            p.ncols()
        )));
    }
    let n = p.nrows();
    let mut worst = 0.0_f64;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((p[(i, j)] - p[(j, i)]).abs());
        }
    }
    Ok(worst)
}

/// Checks symmetry to [`SYMMETRY_TOL`] relative to the largest entry and
/// returns the symmetrized matrix `(P + P') / 2`.
pub fn symmetrize_checked(p: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let asym = asymmetry(p)?;
    let scale = p.amax();
    if asym > SYMMETRY_TOL * scale {
        return Err(Error::Symmetry { asymmetry: asym });
    }
    Ok((p + p.transpose()) * 0.5)
}

/// Upper-triangular stacking with doubled off-diagonals.
pub fn vecs(p: &DMatrix<f64>) -> Result<DVector<f64>> {
    let p = symmetrize_checked(p)?;
    let n = p.nrows();
    let mut out = Vec::with_capacity(tri_len(n));
    for i in 0..n {
        out.push(p[(i, i)]);
        for j in (i + 1)..n {
            out.push(2.0 * p[(i, j)]);
        }
    }
    Ok(DVector::from_vec(out))
}

/// Inverse of [`vecs`]: off-diagonal entries receive half the stored coefficient.
pub fn unvecs(v: &DVector<f64>) -> Result<DMatrix<f64>> {
    let n = tri_dim(v.len())
        .ok_or_else(|| Error::Dimension(format!("unvecs: length {} is not a triangular number", v.len())))?;
    let mut p = DMatrix::zeros(n, n);
    let mut idx = 0;
    for i in 0..n {
        p[(i, i)] = v[idx];
        idx += 1;
        for j in (i + 1)..n {
            let half = 0.5 * v[idx];
            p[(i, j)] = half;
            p[(j, i)] = half;
            idx += 1;
        }
    }
    Ok(p)
}

/// Kronecker product of two vectors; block `i` equals `x_i * y`.
pub fn kron(x: &DVector<f64>, y: &DVector<f64>) -> DVector<f64> {
    let mut out = Vec::with_capacity(x.len() * y.len());
    for &xi in x.iter() {
        out.extend(y.iter().map(|&yj| xi * yj));
    }
    DVector::from_vec(out)
}

/// Length of the stacked parameter `[vec(B'PA); vecs(B'PB); vecs(P)]`.
pub fn xi_len(n_x: usize, n_u: usize) -> usize {
    n_u * n_x + tri_len(n_u) + tri_len(n_x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{dmatrix, dvector};
    use proptest::prelude::*;

    #[test]
    fn vec_examples() {
        assert_eq!(vec(&dmatrix![1.0, 3.0; 2.0, 4.0]), dvector![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(vec(&DMatrix::identity(2, 2)), dvector![1.0, 0.0, 0.0, 1.0]);
        assert_eq!(vec(&DMatrix::zeros(2, 3)), DVector::zeros(6));
    }

    #[test]
    fn unvec_examples() {
        let m = unvec(&dvector![1.0, 2.0, 3.0, 4.0], 2, 2).unwrap();
        assert_eq!(m, dmatrix![1.0, 3.0; 2.0, 4.0]);
        assert_eq!(unvec(&DVector::zeros(6), 2, 3).unwrap(), DMatrix::zeros(2, 3));
        assert_eq!(unvec(&dvector![5.0], 1, 1).unwrap(), dmatrix![5.0]);
        assert!(matches!(unvec(&dvector![1.0, 2.0], 2, 2), Err(Error::Dimension(_))));
    }

    #[test]
    fn vecv_examples() {
        assert_eq!(vecv(&dvector![1.0, 2.0]), dvector![1.0, 2.0, 4.0]);
        assert_eq!(vecv(&dvector![1.0, 1.0, 1.0]), DVector::from_element(6, 1.0));
        assert_eq!(vecv(&dvector![0.0, 3.0]), dvector![0.0, 0.0, 9.0]);
    }

    #[test]
    fn vecs_examples() {
        assert_eq!(vecs(&DMatrix::identity(2, 2)).unwrap(), dvector![1.0, 0.0, 1.0]);
        assert_eq!(vecs(&dmatrix![2.0, 1.0; 1.0, 3.0]).unwrap(), dvector![2.0, 2.0, 3.0]);
        let d = DMatrix::from_diagonal_element(3, 3, 0.1);
        assert_eq!(vecs(&d).unwrap(), dvector![0.1, 0.0, 0.0, 0.1, 0.0, 0.1]);
        assert!(matches!(
            vecs(&dmatrix![1.0, 2.0; 0.0, 1.0]),
            Err(Error::Symmetry { .. })
        ));
    }

    #[test]
    fn unvecs_examples() {
        assert_eq!(unvecs(&dvector![2.0, 2.0, 3.0]).unwrap(), dmatrix![2.0, 1.0; 1.0, 3.0]);
        assert_eq!(unvecs(&dvector![1.0, 0.0, 1.0]).unwrap(), DMatrix::identity(2, 2));
        assert_eq!(unvecs(&dvector![4.0]).unwrap(), dmatrix![4.0]);
        assert!(matches!(unvecs(&dvector![1.0, 2.0]), Err(Error::Dimension(_))));
    }

    #[test]
    fn kron_examples() {
        assert_eq!(
            kron(&dvector![1.0, 2.0], &dvector![3.0, 4.0]),
            dvector![3.0, 4.0, 6.0, 8.0]
        );
        let y = dvector![7.0, -1.0];
        assert_eq!(
            kron(&dvector![1.0, 0.0, 0.0], &y),
            dvector![7.0, -1.0, 0.0, 0.0, 0.0, 0.0]
        );
        assert_eq!(kron(&dvector![1.0, 2.0], &DVector::zeros(3)), DVector::zeros(6));
    }

    #[test]
    fn triangular_lengths() {
        for n in 0..40 {
            assert_eq!(tri_dim(tri_len(n)), Some(n));
        }
        assert_eq!(tri_dim(2), None);
        assert_eq!(tri_dim(5), None);
        assert_eq!(xi_len(3, 3), 21);
    }

    fn sym_and_vec(max_n: usize) -> impl Strategy<Value = (DMatrix<f64>, DVector<f64>)> {
        (1..=max_n).prop_flat_map(|n| {
            (
                proptest::collection::vec(-5.0..5.0f64, n * n),
                proptest::collection::vec(-5.0..5.0f64, n),
            )
                .prop_map(move |(m, v)| {
                    let m = DMatrix::from_vec(n, n, m);
                    ((&m + m.transpose()) * 0.5, DVector::from_vec(v))
                })
        })
    }

    proptest! {
        #[test]
        fn quadratic_form_pairing((p, v) in sym_and_vec(6)) {
            let lhs = vecs(&p).unwrap().dot(&vecv(&v));
            let rhs = (v.transpose() * &p * &v)[(0, 0)];
            prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs.abs().max(1.0));
        }

        #[test]
        fn round_trips((p, v) in sym_and_vec(6), rows in 1usize..5, cols in 1usize..5) {
            prop_assert_eq!(unvecs(&vecs(&p).unwrap()).unwrap(), p.clone());
            let m = DMatrix::from_fn(rows, cols, |i, j| v[(i + j) % v.len()] + i as f64);
            prop_assert_eq!(unvec(&vec(&m), rows, cols).unwrap(), m);
        }
    }
}
