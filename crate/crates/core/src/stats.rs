//! Second-order statistics: covariance, within/between-class decomposition,
//! correlation normalization and Frobenius distances.
//!
//! Every covariance here uses the biased `1/N` estimator.

use alloc::format;
use alloc::vec::Vec;
use core::ops::Deref;

use crate::error::{Error, Result};
use crate::matrix::{mean_of, Mat};

/// Variances at or below this are treated as degenerate by [`to_correlation`].
pub const EPSILON_DIAG: f64 = 1e-12;

/// A symmetric `d x d` covariance (or correlation) matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CovMatrix(Mat);

impl CovMatrix {
    /// Wraps a square matrix. Symmetry is checked in debug builds.
    pub fn new(m: Mat) -> Self {
        assert!(m.is_square(), "covariance must be square");
        debug_assert!(m.max_abs_diff(&m.transpose()) <= 1e-12, "covariance not symmetric");
        debug_assert!(m.is_finite(), "covariance not finite");
        Self(m)
    }

    pub fn zeros(d: usize) -> Self {
        Self(Mat::zeros(d, d))
    }

    pub fn dim(&self) -> usize {
        self.0.rows()
    }

    pub fn into_inner(self) -> Mat {
        self.0
    }
}

impl Deref for CovMatrix {
    type Target = Mat;

    fn deref(&self) -> &Mat {
        &self.0
    }
}

fn check_dims<V: AsRef<[f64]>>(xs: &[V]) -> Result<usize> {
    let d = xs[0].as_ref().len();
    if let Some(i) = xs.iter().position(|x| x.as_ref().len() != d) {
        return Err(Error::arg(format!(
            "vector {i} has dimension {}, expected {d}",
            xs[i].as_ref().len()
        )));
    }
    Ok(d)
}

/// Biased covariance `(1/N) sum (x - mean)(x - mean)ᵀ`.
pub fn covariance<V: AsRef<[f64]>>(xs: &[V]) -> Result<CovMatrix> {
    if xs.is_empty() {
        return Err(Error::arg("covariance of an empty set"));
    }
    let d = check_dims(xs)?;
    let mu = mean_of(xs);
    let mut c = Mat::zeros(d, d);
    let inv_n = 1.0 / xs.len() as f64;
    let mut centered = alloc::vec![0.0; d];
    for x in xs {
        for ((c, a), m) in centered.iter_mut().zip(x.as_ref()).zip(&mu) {
            *c = a - m;
        }
        c.add_outer(&centered, &centered, inv_n);
    }
    Ok(CovMatrix::new(c))
}

/// Within-class and between-class covariance of speaker-grouped vectors.
///
/// `W = (1/N) sum_s sum_i (x_s^i - mu_s)(x_s^i - mu_s)ᵀ` and
/// `B = (1/N) sum_s n_s (mu_s - mu)(mu_s - mu)ᵀ`, where `N` is the total
/// vector count (equal to `S*M` for balanced batches) and `mu` the mean of
/// all vectors. `W + B` is the pooled covariance.
pub fn within_between<V: AsRef<[f64]>>(groups: &[Vec<V>]) -> Result<(CovMatrix, CovMatrix)> {
    if groups.is_empty() {
        return Err(Error::arg("within/between covariance needs at least one speaker"));
    }
    if let Some(s) = groups.iter().position(Vec::is_empty) {
        return Err(Error::arg(format!("speaker group {s} is empty")));
    }
    let d = groups[0][0].as_ref().len();
    for g in groups {
        if check_dims(g)? != d {
            return Err(Error::arg("speaker groups have different dimensions"));
        }
    }
    let total: usize = groups.iter().map(Vec::len).sum();
    let inv_n = 1.0 / total as f64;
    let means: Vec<Vec<f64>> = groups.iter().map(|g| mean_of(g)).collect();
    let mut mu = alloc::vec![0.0; d];
    for g in groups {
        for x in g {
            for (m, a) in mu.iter_mut().zip(x.as_ref()) {
                *m += a;
            }
        }
    }
    for m in &mut mu {
        *m *= inv_n;
    }

    let mut w = Mat::zeros(d, d);
    let mut b = Mat::zeros(d, d);
    let mut diff = alloc::vec![0.0; d];
    for (g, mu_s) in groups.iter().zip(&means) {
        for x in g {
            for ((c, a), m) in diff.iter_mut().zip(x.as_ref()).zip(mu_s) {
                *c = a - m;
            }
            w.add_outer(&diff, &diff, inv_n);
        }
        for ((c, a), m) in diff.iter_mut().zip(mu_s).zip(&mu) {
            *c = a - m;
        }
        b.add_outer(&diff, &diff, g.len() as f64 * inv_n);
    }
    Ok((CovMatrix::new(w), CovMatrix::new(b)))
}

/// Correlation normalization: entry `(p, q)` becomes `c_pq / sqrt(c_pp c_qq)`.
pub fn to_correlation(c: &CovMatrix) -> Result<CovMatrix> {
    let d = c.dim();
    let scale = inv_sqrt_diag(c)?;
    let mut r = Mat::zeros(d, d);
    for p in 0..d {
        for q in 0..d {
            r[(p, q)] = if p == q { 1.0 } else { c[(p, q)] * scale[p] * scale[q] };
        }
    }
    Ok(CovMatrix(r))
}

fn inv_sqrt_diag(c: &CovMatrix) -> Result<Vec<f64>> {
    (0..c.dim())
        .map(|p| {
            let v = c[(p, p)];
            if v.is_nan() || v <= EPSILON_DIAG {
                Err(Error::DegenerateCovariance { index: p, variance: v })
            } else {
                Ok(1.0 / libm::sqrt(v))
            }
        })
        .collect()
}

/// Pulls a gradient with respect to `to_correlation(c)` back to `c`.
///
/// Entries of `c` are treated as independent variables, so the result is
/// the full (not symmetrized) partial-derivative matrix.
pub fn correlation_backward(c: &CovMatrix, grad_r: &Mat) -> Result<Mat> {
    let d = c.dim();
    let s = inv_sqrt_diag(c)?;
    let mut g = Mat::zeros(d, d);
    // direct term: d r_pq / d c_pq = s_p s_q
    for p in 0..d {
        for q in 0..d {
            g[(p, q)] = grad_r[(p, q)] * s[p] * s[q];
        }
    }
    // every r_ab with a == p or b == p also depends on c_pp through s_p
    for p in 0..d {
        let mut acc = 0.0;
        for k in 0..d {
            let r_pk = c[(p, k)] * s[p] * s[k];
            let r_kp = c[(k, p)] * s[k] * s[p];
            acc += grad_r[(p, k)] * r_pk + grad_r[(k, p)] * r_kp;
        }
        g[(p, p)] -= 0.5 * s[p] * s[p] * acc;
    }
    Ok(g)
}

/// Squared Frobenius norm of `a - b`.
pub fn frob_sq_diff(a: &Mat, b: &Mat) -> Result<f64> {
    if a.rows() != b.rows() || a.cols() != b.cols() {
        return Err(Error::arg(format!(
            "dimension mismatch: {}x{} vs {}x{}",
            a.rows(),
            a.cols(),
            b.rows(),
            b.cols()
        )));
    }
    Ok(a.as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| (x - y) * (x - y))
        .sum())
}
