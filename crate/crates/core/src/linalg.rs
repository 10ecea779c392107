//! Dense linear-algebra helpers on top of `nalgebra`.

use nalgebra::{DMatrix, DVector, SVD};

use crate::error::{MvrrError, Result};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;
/// Observation mask; `true` marks an observed cell.
pub type Mask = DMatrix<bool>;

/// Thin SVD with singular values sorted in non-increasing order.
pub(crate) fn thin_svd(m: &Matrix) -> Result<SVD<f64, nalgebra::Dyn, nalgebra::Dyn>> {
    SVD::try_new(m.clone(), true, true, f64::EPSILON, 0)
        .ok_or_else(|| MvrrError::Numerical("SVD did not converge".into()))
}

/// Singular values in non-increasing order. Empty matrices have none.
pub fn singular_values(m: &Matrix) -> Result<Vector> {
    if m.is_empty() {
        return Ok(Vector::zeros(0));
    }
    if !all_finite(m) {
        return Err(MvrrError::NonFinite("matrix passed to SVD".into()));
    }
    SVD::try_new(m.clone(), false, false, f64::EPSILON, 0)
        .map(|svd| svd.singular_values)
        .ok_or_else(|| MvrrError::Numerical("SVD did not converge".into()))
}

pub fn spectral_norm(m: &Matrix) -> Result<f64> {
    Ok(singular_values(m)?.iter().copied().fold(0.0, f64::max))
}

pub fn nuclear_norm(m: &Matrix) -> Result<f64> {
    Ok(singular_values(m)?.iter().sum())
}

/// Default relative tolerance for numerical rank: `max(rows, cols) * eps`.
pub fn default_rank_tol(rows: usize, cols: usize) -> f64 {
    rows.max(cols) as f64 * f64::EPSILON
}

/// Number of singular values strictly above `rank_tol * sigma_1`.
pub fn numerical_rank(m: &Matrix, rank_tol: f64) -> Result<usize> {
    let sv = singular_values(m)?;
    Ok(rank_from_singular_values(&sv, rank_tol))
}

pub(crate) fn rank_from_singular_values(sv: &Vector, rank_tol: f64) -> usize {
    let top = sv.iter().copied().fold(0.0, f64::max);
    if top == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > rank_tol * top).count()
}

const SVT_ROUNDING: f64 = 1e-12;

/// Singular value soft-thresholding: `U (D - tau)_+ V^T`.
///
/// Returns the thresholded matrix together with its (sorted) singular values.
pub fn svt(m: &Matrix, tau: f64) -> Result<(Matrix, Vector)> {
    if !(tau >= 0.0) {
        return Err(MvrrError::InvalidArgument(format!(
            "threshold must be non-negative, got {tau}"
        )));
    }
    if !all_finite(m) {
        return Err(MvrrError::NonFinite("matrix passed to svt".into()));
    }
    let (rows, cols) = m.shape();
    let k = rows.min(cols);
    if k == 0 {
        return Ok((m.clone(), Vector::zeros(0)));
    }
    if tau.is_infinite() {
        return Ok((Matrix::zeros(rows, cols), Vector::zeros(k)));
    }
    let svd = thin_svd(m)?;
    // values within rounding of the threshold count as fully shrunk
    let slack = SVT_ROUNDING * svd.singular_values.max();
    let shrunk = svd.singular_values.map(|s| if s - tau > slack { s - tau } else { 0.0 });
    let keep = shrunk.iter().take_while(|&&s| s > 0.0).count();
    if keep == 0 {
        return Ok((Matrix::zeros(rows, cols), shrunk));
    }
    let u = svd.u.as_ref().expect("u requested");
    let v_t = svd.v_t.as_ref().expect("v_t requested");
    let mut left = u.columns(0, keep).into_owned();
    for (j, mut col) in left.column_iter_mut().enumerate() {
        col *= shrunk[j];
    }
    Ok((&left * v_t.rows(0, keep), shrunk))
}

pub fn all_finite(m: &Matrix) -> bool {
    m.iter().all(|v| v.is_finite())
}

pub(crate) fn frobenius_sq(m: &Matrix) -> f64 {
    m.iter().map(|v| v * v).sum()
}

pub(crate) fn column_means(m: &Matrix) -> Vector {
    let n = m.nrows().max(1) as f64;
    Vector::from_iterator(m.ncols(), m.column_iter().map(|c| c.sum() / n))
}

/// `1 mu^T` added to every row.
pub(crate) fn add_row_vector(m: &mut Matrix, mu: &Vector) {
    for (j, mut col) in m.column_iter_mut().enumerate() {
        col.add_scalar_mut(mu[j]);
    }
}
