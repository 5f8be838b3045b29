//! Distribution distances between embedding sets.

mod frechet;
mod mmd;

use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use nalgebra::DMatrix;

use serde::{Deserialize, Serialize};

pub use frechet::{frechet_distance, gaussian_stats, sqrtm_psd, GaussianStats};
pub use mmd::{mmd2, KernelParams};

use crate::embedding::EmbeddingMatrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Fad,
    Mmd,
}

impl Metric {
    pub const ALL: [Metric; 2] = [Metric::Fad, Metric::Mmd];

    pub fn as_str(self) -> &'static str {
        match self {
            Metric::Fad => "fad",
            Metric::Mmd => "mmd",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "fad" => Ok(Metric::Fad),
            "mmd" => Ok(Metric::Mmd),
            other => Err(Error::Config(format!("unknown metric `{other}` (expected fad|mmd)"))),
        }
    }
}

/// Distance of `candidate` to `reference` under `metric`.
pub fn distance(metric: Metric, reference: &EmbeddingMatrix, candidate: &EmbeddingMatrix) -> Result<f64> {
    if reference.cols() != candidate.cols() {
        return Err(Error::DimensionMismatch {
            expected: reference.cols(),
            actual: candidate.cols(),
        });
    }
    match metric {
        Metric::Fad => frechet_distance(&gaussian_stats(reference)?, &gaussian_stats(candidate)?),
        Metric::Mmd => mmd2(reference, candidate, &KernelParams::for_dim(reference.cols())),
    }
}

/// An embedding set with lazily cached per-set quantities (Gaussian
/// statistics, covariance root, kernel self-similarity), for comparing one
/// set against many.
#[derive(Debug)]
pub struct PreparedSet {
    matrix: EmbeddingMatrix,
    dense: DMatrix<f64>,
    stats: OnceLock<GaussianStats>,
    root: OnceLock<frechet::CovRoot>,
    self_kernel: OnceLock<f64>,
}

fn cached<'a, T>(cell: &'a OnceLock<T>, f: impl FnOnce() -> Result<T>) -> Result<&'a T> {
    if let Some(v) = cell.get() {
        return Ok(v);
    }
    let v = f()?;
    let _ = cell.set(v);
    Ok(cell.get().expect("just set"))
}

impl PreparedSet {
    pub fn new(matrix: EmbeddingMatrix) -> Self {
        let dense = matrix.to_dmatrix();
        Self {
            matrix,
            dense,
            stats: OnceLock::new(),
            root: OnceLock::new(),
            self_kernel: OnceLock::new(),
        }
    }

    pub fn matrix(&self) -> &EmbeddingMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> EmbeddingMatrix {
        self.matrix
    }

    pub fn gaussian(&self) -> Result<&GaussianStats> {
        cached(&self.stats, || gaussian_stats(&self.matrix))
    }

    fn root(&self) -> Result<&frechet::CovRoot> {
        let stats = self.gaussian()?;
        cached(&self.root, || frechet::cov_root(&stats.cov))
    }

    fn self_kernel(&self, k: &KernelParams) -> f64 {
        *self
            .self_kernel
            .get_or_init(|| mmd::kernel_mean(&self.dense, &self.dense, k))
    }

    /// Distance of `candidate` to this set.
    pub fn distance_to(&self, metric: Metric, candidate: &PreparedSet) -> Result<f64> {
        if self.matrix.cols() != candidate.matrix.cols() {
            return Err(Error::DimensionMismatch {
                expected: self.matrix.cols(),
                actual: candidate.matrix.cols(),
            });
        }
        // Identical sets are at distance zero; skip round-off.
        if self.matrix.data() == candidate.matrix.data() && self.matrix.rows() > 1 {
            return Ok(0.0);
        }
        match metric {
            Metric::Fad => frechet::frechet_with_root(self.gaussian()?, self.root()?, candidate.gaussian()?),
            Metric::Mmd => {
                let k = KernelParams::for_dim(self.matrix.cols());
                let kxx = self.self_kernel(&k);
                let kyy = candidate.self_kernel(&k);
                let kxy = mmd::kernel_mean(&self.dense, &candidate.dense, &k);
                Ok((kxx + kyy - 2.0 * kxy).max(0.0))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn metric_names_roundtrip() {
        for m in Metric::ALL {
            assert_eq!(m.as_str().parse::<Metric>().unwrap(), m);
            assert_eq!(serde_json::to_string(&m).unwrap(), format!("\"{m}\""));
        }
        assert!("kid".parse::<Metric>().is_err());
    }

    #[test]
    fn self_distance_is_zero() {
        let x = EmbeddingMatrix::from_rows(
            &[[0.1f32, 2.0], [1.5, -0.3], [0.7, 0.9], [-1.0, 0.4]],
            "t",
        )
        .unwrap();
        for m in Metric::ALL {
            assert!(distance(m, &x, &x).unwrap().abs() < 1e-9);
        }
    }

    #[test]
    fn prepared_matches_direct() {
        let a = EmbeddingMatrix::from_rows(&[[0.1f32, 2.0], [1.5, -0.3], [0.7, 0.9], [-1.0, 0.4]], "t").unwrap();
        let b = EmbeddingMatrix::from_rows(&[[0.3f32, 1.0], [1.0, 0.3], [0.2, -0.9]], "t").unwrap();
        let pa = PreparedSet::new(a.clone());
        let pb = PreparedSet::new(b.clone());
        for m in Metric::ALL {
            let direct = distance(m, &a, &b).unwrap();
            let prepared = pa.distance_to(m, &pb).unwrap();
            assert!((direct - prepared).abs() <= 1e-12 * direct.abs().max(1.0));
            assert_eq!(pa.distance_to(m, &pa).unwrap(), 0.0);
        }
    }

    #[test]
    fn dimension_mismatch() {
        let a = EmbeddingMatrix::from_rows(&[[0.0f32, 1.0], [1.0, 0.0]], "t").unwrap();
        let b = EmbeddingMatrix::from_rows(&[[0.0f32], [1.0]], "t").unwrap();
        assert!(matches!(
            distance(Metric::Mmd, &a, &b),
            Err(Error::DimensionMismatch { .. })
        ));
    }
}
