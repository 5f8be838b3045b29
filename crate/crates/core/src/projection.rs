//! Whitening PCA projections.
//!
//! A projection is fitted on a reference embedding set and then applied,
//! unchanged, to every set compared against that reference.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::embedding::{read_embeddings, write_embeddings, EmbeddingMatrix};
use crate::error::{Error, Result};

/// Reserved backend id for serialized projections.
pub const PROJECTION_BACKEND_ID: &str = "projection-v1";

/// Singular values below this fraction of the largest are treated as zero.
const RANK_TOL: f64 = 1e-10;

/// Which projection to fit: identity or a k-component whitening PCA.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ProjectionKind {
    Identity,
    Pca(usize),
}

impl ProjectionKind {
    pub const PCA10: ProjectionKind = ProjectionKind::Pca(10);
    pub const PCA100: ProjectionKind = ProjectionKind::Pca(100);
}

impl fmt::Display for ProjectionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProjectionKind::Identity => f.write_str("np"),
            ProjectionKind::Pca(k) => write!(f, "pca{k}"),
        }
    }
}

impl FromStr for ProjectionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        if lower == "np" {
            return Ok(ProjectionKind::Identity);
        }
        let k = lower
            .strip_prefix("pca")
            .map(|rest| rest.trim_start_matches(':'))
            .and_then(|rest| rest.parse::<usize>().ok())
            .filter(|&k| k > 0)
            .ok_or_else(|| Error::Config(format!("unknown projection `{s}` (expected np|pca<k>)")))?;
        Ok(ProjectionKind::Pca(k))
    }
}

impl Serialize for ProjectionKind {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ProjectionKind {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// A fitted projection.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    kind: ProjectionKind,
    input_dim: usize,
    mean: DVector<f64>,
    /// k x D, orthonormal rows.
    basis: DMatrix<f64>,
    /// Per-component whitening scale, `sqrt(N - 1) / sigma_i`.
    scale: DVector<f64>,
    explained_variance_ratio: f64,
}

impl Projection {
    pub fn identity(dim: usize) -> Self {
        Self {
            kind: ProjectionKind::Identity,
            input_dim: dim,
            mean: DVector::zeros(dim),
            basis: DMatrix::zeros(0, dim),
            scale: DVector::zeros(0),
            explained_variance_ratio: 1.0,
        }
    }

    /// Fits `kind` on the rows of `x`.
    pub fn fit(x: &EmbeddingMatrix, kind: ProjectionKind) -> Result<Self> {
        match kind {
            ProjectionKind::Identity => Ok(Self::identity(x.cols())),
            ProjectionKind::Pca(k) => fit_projection(x, k),
        }
    }

    pub fn kind(&self) -> ProjectionKind {
        self.kind
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        match self.kind {
            ProjectionKind::Identity => self.input_dim,
            ProjectionKind::Pca(k) => k,
        }
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn scale(&self) -> &DVector<f64> {
        &self.scale
    }

    pub fn explained_variance_ratio(&self) -> f64 {
        self.explained_variance_ratio
    }

    pub fn is_identity(&self) -> bool {
        self.kind == ProjectionKind::Identity
    }

    fn check_dim(&self, cols: usize) -> Result<()> {
        if cols != self.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim,
                actual: cols,
            });
        }
        Ok(())
    }

    pub fn apply(&self, x: &EmbeddingMatrix) -> Result<EmbeddingMatrix> {
        self.check_dim(x.cols())?;
        if self.is_identity() {
            return Ok(x.clone());
        }
        let mut centered = x.to_dmatrix();
        for mut row in centered.row_iter_mut() {
            row -= self.mean.transpose();
        }
        let mut out = centered * self.basis.transpose();
        for (mut col, s) in out.column_iter_mut().zip(self.scale.iter()) {
            col *= *s;
        }
        EmbeddingMatrix::from_dmatrix(&out, x.backend_id())
    }

    pub fn apply_vector(&self, v: &[f32]) -> Result<Vec<f32>> {
        self.check_dim(v.len())?;
        if self.is_identity() {
            return Ok(v.to_vec());
        }
        let centered = DVector::from_iterator(v.len(), v.iter().map(|&x| x as f64)) - &self.mean;
        let projected = &self.basis * centered;
        Ok(projected
            .iter()
            .zip(self.scale.iter())
            .map(|(p, s)| (p * s) as f32)
            .collect())
    }

    /// Stacks the projection into an AEMB-compatible matrix.
    ///
    /// Rows: mean, then (for PCA) the k scales padded to D, the k basis rows,
    /// and finally a metadata row whose first entry is the explained-variance
    /// ratio. Identity projections are two rows: zero mean and metadata.
    pub fn to_matrix(&self) -> Result<EmbeddingMatrix> {
        let d = self.input_dim;
        let mut rows: Vec<Vec<f32>> = vec![self.mean.iter().map(|&v| v as f32).collect()];
        if !self.is_identity() {
            let mut scale = vec![0.0f32; d];
            for (s, v) in scale.iter_mut().zip(self.scale.iter()) {
                *s = *v as f32;
            }
            rows.push(scale);
            for r in self.basis.row_iter() {
                rows.push(r.iter().map(|&v| v as f32).collect());
            }
        }
        let mut meta = vec![0.0f32; d];
        meta[0] = self.explained_variance_ratio as f32;
        rows.push(meta);
        EmbeddingMatrix::from_rows(&rows, PROJECTION_BACKEND_ID)
    }

    pub fn from_matrix(m: &EmbeddingMatrix) -> Result<Self> {
        if m.backend_id() != PROJECTION_BACKEND_ID {
            return Err(Error::BadBackendId(format!(
                "expected `{PROJECTION_BACKEND_ID}`, found `{}`",
                m.backend_id()
            )));
        }
        let d = m.cols();
        let to_vec = |r: &[f32]| DVector::from_iterator(r.len(), r.iter().map(|&v| v as f64));
        let evr = m.row(m.rows() - 1)[0] as f64;
        match m.rows() {
            2 => {
                let mut p = Self::identity(d);
                p.explained_variance_ratio = evr;
                Ok(p)
            }
            r if r >= 4 => {
                let k = r - 3;
                if k > d {
                    return Err(Error::InvalidArgument(format!(
                        "projection sidecar has {k} components for dimension {d}"
                    )));
                }
                let basis = DMatrix::from_row_iterator(
                    k,
                    d,
                    (0..k).flat_map(|i| m.row(2 + i).iter().map(|&v| v as f64)),
                );
                Ok(Self {
                    kind: ProjectionKind::Pca(k),
                    input_dim: d,
                    mean: to_vec(m.row(0)),
                    basis,
                    scale: to_vec(&m.row(1)[..k]),
                    explained_variance_ratio: evr,
                })
            }
            r => Err(Error::InvalidArgument(format!(
                "projection sidecar with {r} rows"
            ))),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_embeddings(&self.to_matrix()?, path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_matrix(&read_embeddings(path)?)
    }
}

/// Fits a k-component whitening PCA via SVD of the mean-centered data.
pub fn fit_projection(x: &EmbeddingMatrix, k: usize) -> Result<Projection> {
    let (n, d) = (x.rows(), x.cols());
    let max_k = d.min(n.saturating_sub(1));
    if k == 0 || k > max_k {
        return Err(Error::InvalidArgument(format!(
            "cannot fit {k} components on {n} x {d} data (max {max_k})"
        )));
    }
    let mut centered = x.to_dmatrix();
    let mean = DVector::from_iterator(
        d,
        centered.column_iter().map(|c| c.sum() / n as f64),
    );
    for mut row in centered.row_iter_mut() {
        row -= mean.transpose();
    }
    let svd = centered.svd(false, true);
    let v_t = svd.v_t.expect("requested right singular vectors");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let sigma: Vec<f64> = order.iter().map(|&i| svd.singular_values[i]).collect();

    let sigma_max = sigma[0];
    if sigma_max <= 0.0 {
        return Err(Error::ZeroVariance);
    }
    let rank = sigma.iter().filter(|&&s| s >= RANK_TOL * sigma_max).count();
    if k > rank {
        return Err(Error::RankDeficient { requested: k, rank });
    }

    let mut basis = DMatrix::<f64>::zeros(k, d);
    for (i, &src) in order.iter().take(k).enumerate() {
        let mut row = v_t.row(src).into_owned();
        // Fix the sign so the largest-magnitude entry is positive.
        let pivot = row.iter().copied().fold(0.0f64, |m, v| if v.abs() > m.abs() { v } else { m });
        if pivot < 0.0 {
            row *= -1.0;
        }
        basis.set_row(i, &row);
    }
    let norm = ((n - 1) as f64).sqrt();
    let scale = DVector::from_iterator(k, sigma[..k].iter().map(|s| norm / s));
    let total: f64 = sigma.iter().map(|s| s * s).sum();
    let kept: f64 = sigma[..k].iter().map(|s| s * s).sum();

    Ok(Projection {
        kind: ProjectionKind::Pca(k),
        input_dim: d,
        mean,
        basis,
        scale,
        explained_variance_ratio: kept / total,
    })
}

/// Applies a fitted projection to a matrix.
pub fn apply_projection(p: &Projection, x: &EmbeddingMatrix) -> Result<EmbeddingMatrix> {
    p.apply(x)
}
