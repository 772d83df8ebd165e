//! Small dense linear-algebra helpers shared by the filter and estimators.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Absolute slack on eigenvalues when testing positive semidefiniteness.
pub const PSD_SLACK: f64 = 1e-10;

/// `<A, B> = tr(A^T B)`.
pub fn inner(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

/// `x^T Q x`.
pub fn quad_form(x: &DVector<f64>, q: &DMatrix<f64>) -> f64 {
    (x.transpose() * q * x)[(0, 0)]
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    symmetrize(m).symmetric_eigen().eigenvalues.min()
}

pub fn max_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    symmetrize(m).symmetric_eigen().eigenvalues.max()
}

pub fn is_psd(m: &DMatrix<f64>) -> bool {
    min_eigenvalue(m) >= -PSD_SLACK
}

/// Symmetric PSD square root through the eigendecomposition. Eigenvalues in
/// `[-PSD_SLACK, 0)` are clamped to zero; anything more negative is an error.
pub fn psd_sqrt(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = symmetrize(m).symmetric_eigen();
    let lo = eig.eigenvalues.min();
    if lo < -PSD_SLACK {
        return Err(Error::Indefinite(lo));
    }
    let roots = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    let v = &eig.eigenvectors;
    Ok(v * DMatrix::from_diagonal(&roots) * v.transpose())
}

/// Frobenius norm of `a - b` relative to the norm of `b` (absolute when `b`
/// is zero).
pub fn rel_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let diff = (a - b).norm();
    let scale = b.norm();
    if scale > 0.0 {
        diff / scale
    } else {
        diff
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sqrt_of_semidefinite() {
        let m = DMatrix::from_row_slice(2, 2, &[4.0, 0.0, 0.0, 0.0]);
        let r = psd_sqrt(&m).unwrap();
        assert!((r[(0, 0)] - 2.0).abs() < 1e-12);
        assert!(r[(1, 1)].abs() < 1e-12);
        assert!(((&r * &r) - &m).norm() < 1e-12);
    }

    #[test]
    fn sqrt_rejects_indefinite() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(matches!(psd_sqrt(&m), Err(Error::Indefinite(_))));
    }

    #[test]
    fn inner_is_trace_of_product() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let b = DMatrix::from_row_slice(2, 2, &[5.0, 6.0, 7.0, 8.0]);
        assert_eq!(inner(&a, &b), (a.transpose() * &b).trace());
    }
}
