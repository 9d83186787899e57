//! Dense linear-algebra helpers on top of nalgebra.

use nalgebra::{Cholesky, DMatrix, DVector, Schur, SymmetricEigen, SVD};
use num_complex::Complex;

use crate::error::{Error, Result};
use crate::scalar::Real;

const MAX_SWEEPS: usize = 10_000;

/// Largest singular value; zero for an empty matrix.
pub fn spectral_norm<T: Real>(m: &DMatrix<T>) -> Result<T> {
    if m.is_empty() {
        return Ok(T::zero());
    }
    let svd = SVD::try_new(m.clone(), false, false, T::epsilon(), MAX_SWEEPS)
        .ok_or_else(|| Error::Eigensolver("SVD did not converge".into()))?;
    Ok(svd.singular_values.iter().copied().fold(T::zero(), T::max))
}

/// All eigenvalues of a general square matrix, via the real Schur form.
pub fn eigenvalues<T: Real>(m: &DMatrix<T>) -> Result<Vec<Complex<T>>> {
    if !m.is_square() {
        return Err(Error::Shape(format!(
            "eigenvalues need a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    if m.is_empty() {
        return Ok(Vec::new());
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::Eigensolver("matrix has non-finite entries".into()));
    }
    let schur = Schur::try_new(m.clone(), T::epsilon(), MAX_SWEEPS)
        .ok_or_else(|| Error::Eigensolver("Schur iteration did not converge".into()))?;
    Ok(schur.complex_eigenvalues().iter().copied().collect())
}

pub fn spectral_radius<T: Real>(m: &DMatrix<T>) -> Result<T> {
    Ok(eigenvalues(m)?.iter().map(modulus).fold(T::zero(), T::max))
}

/// `|z|` for a complex number over any [`Real`].
pub fn modulus<T: Real>(z: &Complex<T>) -> T {
    z.re.hypot(z.im)
}

/// Eigenvalues of a symmetric matrix, ascending.
pub fn symmetric_eigenvalues<T: Real>(m: &DMatrix<T>) -> Result<Vec<T>> {
    if m.is_empty() {
        return Ok(Vec::new());
    }
    let eig = SymmetricEigen::try_new(m.clone(), T::epsilon(), MAX_SWEEPS)
        .ok_or_else(|| Error::Eigensolver("symmetric eigensolver did not converge".into()))?;
    let mut values: Vec<T> = eig.eigenvalues.iter().copied().collect();
    values.sort_by(|a, b| a.partial_cmp(b).expect("finite eigenvalues"));
    Ok(values)
}

/// Moore-Penrose pseudoinverse. Singular values below
/// `max(rows, cols) * eps * sigma_max` are treated as zero.
pub fn pseudo_inverse<T: Real>(m: &DMatrix<T>) -> Result<DMatrix<T>> {
    let (rows, cols) = m.shape();
    if m.is_empty() {
        return Ok(DMatrix::zeros(cols, rows));
    }
    let svd = SVD::try_new(m.clone(), true, true, T::epsilon(), MAX_SWEEPS)
        .ok_or_else(|| Error::Eigensolver("SVD did not converge".into()))?;
    let sigma_max = svd.singular_values.iter().copied().fold(T::zero(), T::max);
    let tol = T::lit(rows.max(cols) as f64) * T::epsilon() * sigma_max;
    let u = svd.u.as_ref().expect("requested U");
    let v_t = svd.v_t.as_ref().expect("requested V^T");

    let mut pinv = DMatrix::zeros(cols, rows);
    for (i, &s) in svd.singular_values.iter().enumerate() {
        if s > tol && s > T::zero() {
            let vi = v_t.row(i).transpose();
            let ui = u.column(i).transpose();
            pinv += (vi * ui) / s;
        }
    }
    Ok(pinv)
}

/// Solves `m * x = rhs` for symmetric positive-definite `m`. Falls back to
/// the pseudoinverse if the Cholesky factorisation breaks down.
pub fn solve_spd<T: Real>(m: &DMatrix<T>, rhs: &DMatrix<T>) -> Result<DMatrix<T>> {
    match Cholesky::new(m.clone()) {
        Some(chol) => Ok(chol.solve(rhs)),
        None => Ok(pseudo_inverse(m)? * rhs),
    }
}

pub fn all_finite<T: Real>(m: &DMatrix<T>) -> bool {
    m.iter().all(|v| v.is_finite())
}

pub fn vector_norm<T: Real>(v: &DVector<T>) -> T {
    v.norm()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn spectral_norm_of_diagonal() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![0.5, -3.0, 0.3]));
        assert_relative_eq!(spectral_norm(&m).unwrap(), 3.0, epsilon = 1e-12);
    }

    #[test]
    fn radius_below_norm_for_nonnormal() {
        let m = DMatrix::from_row_slice(2, 2, &[0.5, 10.0, 0.0, 0.5]);
        let rho = spectral_radius(&m).unwrap();
        let norm = spectral_norm(&m).unwrap();
        assert_relative_eq!(rho, 0.5, epsilon = 1e-12);
        assert!(norm > 10.0);
    }

    #[test]
    fn rotation_has_complex_pair() {
        let (s, c) = 0.3_f64.sin_cos();
        let m = DMatrix::from_row_slice(2, 2, &[c, -s, s, c]);
        let mut ev = eigenvalues(&m).unwrap();
        ev.sort_by(|a, b| a.im.partial_cmp(&b.im).unwrap());
        assert_relative_eq!(ev[0].re, c, epsilon = 1e-12);
        assert_relative_eq!(ev[0].im, -s, epsilon = 1e-12);
        assert_relative_eq!(ev[1].im, s, epsilon = 1e-12);
    }

    #[test]
    fn pinv_of_rank_deficient() {
        // rank one: [1 2; 2 4]
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        let p = pseudo_inverse(&m).unwrap();
        // M P M = M
        let back = &m * &p * &m;
        assert_relative_eq!(back, m, epsilon = 1e-12);
        assert_relative_eq!(p[(0, 0)], 1.0 / 25.0, epsilon = 1e-14);
    }

    #[test]
    fn pinv_of_wide_matrix_is_right_inverse() {
        let m = DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 2.0, 0.0, 1.0, -1.0]);
        let p = pseudo_inverse(&m).unwrap();
        assert_relative_eq!(&m * p, DMatrix::identity(2, 2), epsilon = 1e-12);
    }

    #[test]
    fn symmetric_eigenvalues_sorted() {
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        let ev = symmetric_eigenvalues(&m).unwrap();
        assert_relative_eq!(ev[0], 1.0, epsilon = 1e-12);
        assert_relative_eq!(ev[1], 3.0, epsilon = 1e-12);
    }

    #[test]
    fn works_in_single_precision() {
        let m = DMatrix::from_row_slice(2, 2, &[0.0_f32, 1.0, -1.0, 0.0]);
        let r = spectral_radius(&m).unwrap();
        assert!((r - 1.0).abs() < 1e-5);
    }
}
