use nalgebra::{DMatrix, DVector};

use crate::embedding::EmbeddingMatrix;
use crate::error::{Error, Result};

const EIGEN_EPS: f64 = 1e-14;
const EIGEN_MAX_ITER: usize = 10_000;
/// Relative tolerance below which negative eigenvalues are treated as round-off.
const NEG_EIG_TOL: f64 = 1e-8;

/// Gaussian summary of an embedding set.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianStats {
    pub mean: DVector<f64>,
    /// Unbiased (N - 1) covariance, exactly symmetric.
    pub cov: DMatrix<f64>,
    pub n: usize,
}

impl GaussianStats {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

pub fn gaussian_stats(x: &EmbeddingMatrix) -> Result<GaussianStats> {
    let n = x.rows();
    if n < 2 {
        return Err(Error::TooFew { needed: 2, actual: n });
    }
    let d = x.cols();
    let mut mean = DVector::<f64>::zeros(d);
    for row in x.iter_rows() {
        for (m, &v) in mean.iter_mut().zip(row) {
            *m += v as f64;
        }
    }
    mean /= n as f64;
    let mut centered = x.to_dmatrix();
    for mut row in centered.row_iter_mut() {
        for (v, m) in row.iter_mut().zip(mean.iter()) {
            *v -= m;
        }
    }
    let mut cov = centered.tr_mul(&centered);
    cov /= (n - 1) as f64;
    symmetrize(&mut cov);
    Ok(GaussianStats { mean, cov, n })
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let d = m.nrows();
    for i in 0..d {
        for j in i + 1..d {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

fn eigen(m: &DMatrix<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let e = m
        .clone()
        .try_symmetric_eigen(EIGEN_EPS, EIGEN_MAX_ITER)
        .ok_or(Error::SqrtFailed)?;
    Ok((e.eigenvalues, e.eigenvectors))
}

/// Principal square root of a symmetric positive semidefinite matrix, with
/// eigenvalues clamped at zero.
pub fn sqrtm_psd(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (vals, vecs) = eigen(m)?;
    Ok(sqrt_from_eigen(&vals, &vecs))
}

fn sqrt_from_eigen(vals: &DVector<f64>, vecs: &DMatrix<f64>) -> DMatrix<f64> {
    let roots = vals.map(|v| v.max(0.0).sqrt());
    let mut scaled = vecs.clone();
    for (mut col, r) in scaled.column_iter_mut().zip(roots.iter()) {
        col *= *r;
    }
    let mut out = &scaled * vecs.transpose();
    symmetrize(&mut out);
    out
}

fn min_eig_violates(vals: &DVector<f64>) -> bool {
    let scale = vals.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
    vals.iter().any(|&v| v < -NEG_EIG_TOL * scale)
}

fn regularized(c: &DMatrix<f64>) -> DMatrix<f64> {
    let d = c.nrows();
    let eps = 1e-10 * c.trace().abs().max(f64::MIN_POSITIVE) / d as f64;
    c + DMatrix::<f64>::identity(d, d) * eps
}

/// Square root of a reference covariance, kept for reuse across candidates.
#[derive(Debug, Clone)]
pub(crate) struct CovRoot {
    sqrt: DMatrix<f64>,
    /// Both covariances get a small ridge when the reference is indefinite
    /// beyond round-off.
    regularized: bool,
}

pub(crate) fn cov_root(a: &DMatrix<f64>) -> Result<CovRoot> {
    let (vals, vecs) = eigen(a)?;
    if min_eig_violates(&vals) {
        Ok(CovRoot {
            sqrt: sqrtm_psd(&regularized(a))?,
            regularized: true,
        })
    } else {
        Ok(CovRoot {
            sqrt: sqrt_from_eigen(&vals, &vecs),
            regularized: false,
        })
    }
}

/// tr((A B)^{1/2}) computed as tr(sqrt(sqrt(A) B sqrt(A))).
fn trace_sqrt_product(root: &CovRoot, b: &DMatrix<f64>) -> Result<f64> {
    let mut inner = if root.regularized {
        &root.sqrt * regularized(b) * &root.sqrt
    } else {
        &root.sqrt * b * &root.sqrt
    };
    symmetrize(&mut inner);
    let vals = match inner.clone().try_symmetric_eigen(EIGEN_EPS, EIGEN_MAX_ITER) {
        Some(e) => e.eigenvalues,
        None => {
            let reg = regularized(&inner);
            reg.try_symmetric_eigen(EIGEN_EPS, EIGEN_MAX_ITER)
                .ok_or(Error::SqrtFailed)?
                .eigenvalues
        }
    };
    Ok(vals.iter().map(|v| v.max(0.0).sqrt()).sum())
}

/// Fréchet distance between two Gaussians:
/// `|mu_a - mu_b|^2 + tr(C_a + C_b - 2 (C_a C_b)^{1/2})`, clamped at zero.
pub fn frechet_distance(a: &GaussianStats, b: &GaussianStats) -> Result<f64> {
    check_dims(a, b)?;
    frechet_with_root(a, &cov_root(&a.cov)?, b)
}

fn check_dims(a: &GaussianStats, b: &GaussianStats) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            actual: b.dim(),
        });
    }
    Ok(())
}

pub(crate) fn frechet_with_root(a: &GaussianStats, root: &CovRoot, b: &GaussianStats) -> Result<f64> {
    check_dims(a, b)?;
    let mean_term = (&a.mean - &b.mean).norm_squared();
    let tr_sqrt = trace_sqrt_product(root, &b.cov)?;
    let d = mean_term + a.cov.trace() + b.cov.trace() - 2.0 * tr_sqrt;
    if !d.is_finite() {
        return Err(Error::SqrtFailed);
    }
    Ok(d.max(0.0))
}
