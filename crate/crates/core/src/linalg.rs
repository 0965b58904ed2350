//! Small numeric helpers shared across modules.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ordinary least-squares line `y = slope * x + intercept`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    /// Root-mean-square residual.
    pub rms_residual: f64,
}

pub fn ols(x: &[f64], y: &[f64]) -> Result<LineFit> {
    if x.len() != y.len() {
        return Err(Error::shape(format!("ols: {} x values vs {} y values", x.len(), y.len())));
    }
    let n = x.len() as f64;
    if x.len() < 2 {
        return Err(Error::Degenerate("ols needs at least 2 points".into()));
    }
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    if sxx <= f64::EPSILON * mx.abs().max(1.0) {
        return Err(Error::Degenerate("ols needs at least 2 distinct x values".into()));
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| {
            let r = b - (slope * a + intercept);
            r * r
        })
        .sum();
    Ok(LineFit { slope, intercept, rms_residual: (sse / n).sqrt() })
}

/// Eigenpairs of a symmetric matrix, sorted by descending eigenvalue.
///
/// Each eigenvector is sign-normalized so its largest-magnitude component
/// (first one on ties) is positive, which makes downstream coordinates
/// reproducible.
pub struct SortedEigen {
    pub values: DVector<f64>,
    /// Columns are eigenvectors, aligned with `values`.
    pub vectors: DMatrix<f64>,
}

pub fn symmetric_eigen(a: &DMatrix<f64>) -> Result<SortedEigen> {
    if !a.is_square() {
        return Err(Error::shape(format!("eigen: {}x{} is not square", a.nrows(), a.ncols())));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("eigen input".into()));
    }
    let n = a.nrows();
    let eig = SymmetricEigen::try_new(a.clone(), f64::EPSILON, 0)
        .ok_or_else(|| Error::Degenerate("symmetric eigensolver did not converge".into()))?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let mut col = eig.eigenvectors.column(src).clone_owned();
        let pivot =
            col.iter().enumerate().fold(0usize, |best, (k, v)| if v.abs() > col[best].abs() { k } else { best });
        if col[pivot] < 0.0 {
            col.neg_mut();
        }
        vectors.set_column(dst, &col);
    }
    Ok(SortedEigen { values, vectors })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ols_exact_line() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let y: Vec<f64> = x.iter().map(|v| -2.0 * v + 1.0).collect();
        let fit = ols(&x, &y).unwrap();
        assert!((fit.slope + 2.0).abs() < 1e-12);
        assert!((fit.intercept - 1.0).abs() < 1e-12);
        assert!(fit.rms_residual < 1e-12);
    }

    #[test]
    fn ols_rejects_single_x() {
        assert!(ols(&[1.0, 1.0], &[0.0, 2.0]).is_err());
        assert!(ols(&[1.0], &[0.0]).is_err());
    }

    #[test]
    fn eigen_sorted_with_small_residual() {
        let a = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.5, 1.0, 3.0, 0.2, 0.5, 0.2, 1.0]);
        let e = symmetric_eigen(&a).unwrap();
        assert!(e.values[0] >= e.values[1] && e.values[1] >= e.values[2]);
        let norm = a.norm();
        for k in 0..3 {
            let v = e.vectors.column(k);
            let r = &a * v - v * e.values[k];
            assert!(r.norm() <= 1e-8 * norm);
        }
        assert!((e.values.sum() - a.trace()).abs() < 1e-12);
    }
}
