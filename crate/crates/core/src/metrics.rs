//! Evaluation metrics and the least-squares baseline.

use nalgebra::DMatrix;

use crate::error::{MvrrError, Result};
use crate::glm::logistic;
use crate::linalg::{self, Matrix, Vector};
use crate::model::{BlockCoefficients, MultiViewDesign};

/// Probabilities are clipped to `[PROB_CLIP, 1 - PROB_CLIP]` inside logs.
pub const PROB_CLIP: f64 = 1e-12;

fn clip(p: f64) -> f64 {
    p.clamp(PROB_CLIP, 1.0 - PROB_CLIP)
}

/// `tr{(B0 - B)^T Sigma (B0 - B)}`.
pub fn mspe(b0: &Matrix, b_hat: &Matrix, sigma_x: &Matrix) -> Result<f64> {
    let p = b0.nrows();
    if b_hat.shape() != b0.shape() || sigma_x.shape() != (p, p) {
        return Err(MvrrError::Dimension("mspe inputs are not conformable".into()));
    }
    let scale = sigma_x.amax().max(1.0);
    for i in 0..p {
        for j in 0..i {
            if (sigma_x[(i, j)] - sigma_x[(j, i)]).abs() > 1e-12 * scale {
                return Err(MvrrError::InvalidData("covariance matrix is not symmetric".into()));
            }
        }
    }
    let d = b0 - b_hat;
    Ok((sigma_x * &d).dot(&d))
}

/// Average (over rows) cross entropy between true and estimated Bernoulli
/// probabilities on the validation design `x_val`.
pub fn cross_entropy(
    mu0: &Vector,
    b0: &Matrix,
    mu_hat: &Vector,
    b_hat: &Matrix,
    x_val: &Matrix,
) -> Result<f64> {
    if b0.shape() != b_hat.shape() || x_val.ncols() != b0.nrows() || mu0.len() != b0.ncols() || mu_hat.len() != b0.ncols() {
        return Err(MvrrError::Dimension("cross-entropy inputs are not conformable".into()));
    }
    let mut theta = x_val * b0;
    linalg::add_row_vector(&mut theta, mu0);
    let mut theta_hat = x_val * b_hat;
    linalg::add_row_vector(&mut theta_hat, mu_hat);
    let terms: Vec<f64> = theta
        .iter()
        .zip(theta_hat.iter())
        .map(|(&t, &th)| {
            let p = logistic(t);
            let ph = clip(logistic(th));
            -(p * ph.ln() + (1.0 - p) * (1.0 - ph).ln())
        })
        .collect();
    Ok(pairwise_sum(&terms) / x_val.nrows() as f64)
}

/// `-2 sum_O [y log p + (1 - y) log(1 - p)] / |O|`.
pub fn avg_deviance(y: &Matrix, p_hat: &Matrix, mask: &DMatrix<bool>) -> Result<f64> {
    if y.shape() != p_hat.shape() || mask.shape() != y.shape() {
        return Err(MvrrError::Dimension("deviance inputs differ in shape".into()));
    }
    let terms: Vec<f64> = y
        .iter()
        .zip(p_hat.iter())
        .zip(mask.iter())
        .filter(|(_, &m)| m)
        .map(|((&yv, &p), _)| {
            let p = clip(p);
            yv * p.ln() + (1.0 - yv) * (1.0 - p).ln()
        })
        .collect();
    if terms.is_empty() {
        return Err(MvrrError::InvalidData("no observed cells".into()));
    }
    Ok(-2.0 * pairwise_sum(&terms) / terms.len() as f64)
}

/// Area under the ROC curve in Mann-Whitney form, ties counted half.
pub fn auc(labels: &[bool], scores: &[f64]) -> Result<f64> {
    if labels.len() != scores.len() {
        return Err(MvrrError::Dimension("labels and scores differ in length".into()));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(MvrrError::NonFinite("scores".into()));
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(MvrrError::InvalidData("AUC needs both classes".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // midranks over tie groups
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let mid = (i + j) as f64 / 2.0 + 1.0;
        rank_sum_pos += mid * order[i..=j].iter().filter(|&&o| labels[o]).count() as f64;
        i = j + 1;
    }
    let np = n_pos as f64;
    Ok((rank_sum_pos - np * (np + 1.0) / 2.0) / (np * n_neg as f64))
}

/// Least squares `(X^T X)^{-1} X^T Y` via QR, partitioned into views. The
/// intercept is the response mean when the design is centered.
pub fn ols_baseline(design: &MultiViewDesign, y: &Matrix) -> Result<BlockCoefficients> {
    let x = design.x();
    let (n, p) = x.shape();
    if y.nrows() != n {
        return Err(MvrrError::Dimension(format!("response has {} rows, design {n}", y.nrows())));
    }
    if n <= p {
        return Err(MvrrError::InvalidData(format!("least squares needs n > p, got n = {n}, p = {p}")));
    }
    let q = y.ncols();
    let mu = if design.is_centered() { linalg::column_means(y) } else { Vector::zeros(q) };
    let mut yc = y.clone();
    linalg::add_row_vector(&mut yc, &(-&mu));
    let qr = x.clone().qr();
    let r = qr.r();
    let rmax = r.diagonal().amax();
    let tol = n.max(p) as f64 * f64::EPSILON * rmax;
    if rmax == 0.0 || r.diagonal().iter().any(|d| d.abs() <= tol) {
        return Err(MvrrError::InvalidData("design is rank deficient".into()));
    }
    let qty = qr.q().transpose() * &yc;
    let b = r
        .solve_upper_triangular(&qty)
        .ok_or_else(|| MvrrError::Numerical("triangular solve failed".into()))?;
    BlockCoefficients::new(mu, b, design.view_sizes().to_vec())
}

/// Recursive pairwise summation; order-independent up to the split pattern.
pub fn pairwise_sum(v: &[f64]) -> f64 {
    if v.len() <= 16 {
        return v.iter().sum();
    }
    let mid = v.len() / 2;
    pairwise_sum(&v[..mid]) + pairwise_sum(&v[mid..])
}

/// Mean and sample standard deviation.
pub fn mean_sd(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = v.len() as f64;
    let mean = pairwise_sum(v) / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let dev: Vec<f64> = v.iter().map(|x| (x - mean) * (x - mean)).collect();
    (mean, (pairwise_sum(&dev) / (n - 1.0)).sqrt())
}
