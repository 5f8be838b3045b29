use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::embedding::EmbeddingMatrix;
use crate::error::{Error, Result};

/// Row tile for kernel sums. Partial sums are reduced in tile order, so the
/// result does not depend on the number of worker threads.
const TILE_ROWS: usize = 128;

/// Polynomial kernel `(gamma * <x, y> + coef0)^degree`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelParams {
    pub degree: i32,
    pub gamma: f64,
    pub coef0: f64,
}

impl KernelParams {
    /// Cubic kernel with `gamma = 1/d` and `coef0 = 1`.
    pub fn for_dim(d: usize) -> Self {
        assert!(d > 0, "kernel dimensionality must be positive");
        Self {
            degree: 3,
            gamma: 1.0 / d as f64,
            coef0: 1.0,
        }
    }

    #[inline]
    pub fn eval_dot(&self, dot: f64) -> f64 {
        (self.gamma * dot + self.coef0).powi(self.degree)
    }
}

/// Mean of `k(x_i, y_j)` over all pairs.
pub(crate) fn kernel_mean(x: &DMatrix<f64>, y: &DMatrix<f64>, k: &KernelParams) -> f64 {
    let n = x.nrows();
    let y_t = y.transpose();
    let partials: Vec<f64> = (0..n)
        .step_by(TILE_ROWS)
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|start| {
            let rows = TILE_ROWS.min(n - start);
            let gram = x.rows(start, rows) * &y_t;
            gram.iter().map(|&g| k.eval_dot(g)).sum::<f64>()
        })
        .collect();
    partials.iter().sum::<f64>() / (n as f64 * y.nrows() as f64)
}

/// Biased (V-statistic) squared MMD, clamped at zero.
pub fn mmd2(x: &EmbeddingMatrix, y: &EmbeddingMatrix, k: &KernelParams) -> Result<f64> {
    if x.cols() != y.cols() {
        return Err(Error::DimensionMismatch {
            expected: x.cols(),
            actual: y.cols(),
        });
    }
    let xm = x.to_dmatrix();
    let ym = y.to_dmatrix();
    let kxx = kernel_mean(&xm, &xm, k);
    let kyy = kernel_mean(&ym, &ym, k);
    let kxy = kernel_mean(&xm, &ym, k);
    Ok((kxx + kyy - 2.0 * kxy).max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn singleton_origin() {
        let x = EmbeddingMatrix::from_rows(&[[0.0f32]], "t").unwrap();
        let v = mmd2(&x, &x, &KernelParams::for_dim(1)).unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn singletons_closed_form() {
        let x = EmbeddingMatrix::from_rows(&[[1.0f32, 0.0]], "t").unwrap();
        let y = EmbeddingMatrix::from_rows(&[[0.0f32, 2.0]], "t").unwrap();
        let k = KernelParams::for_dim(2);
        // k(x,x) = 1.5^3, k(y,y) = 3^3, k(x,y) = 1
        let expected = 1.5f64.powi(3) + 27.0 - 2.0;
        assert!((mmd2(&x, &y, &k).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn identical_sets_exactly_zero() {
        let rows: Vec<[f32; 3]> = (0..300)
            .map(|i| {
                let t = i as f32 * 0.37;
                [t.sin(), t.cos() * 2.0, (t * 0.5).sin() - 0.2]
            })
            .collect();
        let x = EmbeddingMatrix::from_rows(&rows, "t").unwrap();
        let y = x.clone();
        assert_eq!(mmd2(&x, &y, &KernelParams::for_dim(3)).unwrap(), 0.0);
    }
}
