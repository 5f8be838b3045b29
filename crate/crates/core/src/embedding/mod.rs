//! Embedding functions and the embedding matrix that flows between stages.

mod aemb;
mod builtin;
mod cache;

use nalgebra::DMatrix;
use rayon::prelude::*;

pub use aemb::{read_embeddings, read_embeddings_from, write_embeddings, write_embeddings_to, AEMB_MAGIC, AEMB_VERSION};
pub use builtin::{BuiltinEmbedder, MelFilterbank, EMBEDDING_DIM, LOG_FLOOR_EPS};
pub use cache::CachedEmbedder;

use crate::audio::AudioWindow;
use crate::error::{Error, Result};

pub const BUILTIN_BACKEND: &str = "builtin-logmel";

/// Backends whose embeddings the library knows how to interpret.
pub const KNOWN_BACKENDS: &[(&str, usize)] = &[
    (BUILTIN_BACKEND, builtin::EMBEDDING_DIM),
    ("vggish", 128),
    ("openl3", 6144),
    ("clap0", 512),
    ("clap1", 512),
    ("clap2", 128),
];

/// Static description of an embedding function.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbedderSpec {
    pub backend_id: String,
    pub dim: usize,
    pub window_seconds: f64,
    /// Required input rate, if the backend is tied to one.
    pub sample_rate: Option<u32>,
}

impl EmbedderSpec {
    /// Spec for a known backend id; pretrained layers carry their published
    /// dimensionality.
    pub fn for_backend(backend_id: &str) -> Result<Self> {
        let dim = KNOWN_BACKENDS
            .iter()
            .find(|(id, _)| *id == backend_id)
            .map(|(_, d)| *d)
            .ok_or_else(|| Error::BadBackendId(backend_id.to_string()))?;
        let sample_rate = (backend_id == BUILTIN_BACKEND).then_some(crate::audio::PIPELINE_SAMPLE_RATE);
        Ok(Self {
            backend_id: backend_id.to_string(),
            dim,
            window_seconds: 5.0,
            sample_rate,
        })
    }
}

/// An embedding function mapping a mono window to a fixed-length vector.
///
/// Implementations must be deterministic: identical input yields bit-identical
/// output.
pub trait Embedder: Send + Sync {
    fn spec(&self) -> &EmbedderSpec;

    /// Embeds a window that has already passed [`embed_window`]'s checks.
    fn embed_unchecked(&self, window: &AudioWindow) -> Vec<f32>;
}

/// Embeds one window after validating rate and finiteness.
pub fn embed_window(embedder: &dyn Embedder, window: &AudioWindow) -> Result<Vec<f32>> {
    let spec = embedder.spec();
    if let Some(sr) = spec.sample_rate {
        if window.sample_rate() != sr {
            return Err(Error::SampleRateMismatch {
                expected: sr,
                actual: window.sample_rate(),
            });
        }
    }
    if !window.is_finite() {
        return Err(Error::NonFinite("audio window"));
    }
    let v = embedder.embed_unchecked(window);
    if v.len() != spec.dim {
        return Err(Error::DimensionMismatch {
            expected: spec.dim,
            actual: v.len(),
        });
    }
    Ok(v)
}

/// Embeds windows in parallel; row `i` of the result is window `i`.
pub fn embed_batch(embedder: &dyn Embedder, windows: &[AudioWindow]) -> Result<EmbeddingMatrix> {
    let rows: Vec<Vec<f32>> = windows
        .par_iter()
        .map(|w| embed_window(embedder, w))
        .collect::<Result<_>>()?;
    EmbeddingMatrix::from_rows(&rows, &embedder.spec().backend_id)
}

/// N x D row-major matrix of finite embedding values.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f32>,
    backend_id: String,
}

impl EmbeddingMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f32>, backend_id: impl Into<String>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidArgument(format!(
                "embedding matrix must be non-empty, got {rows} x {cols}"
            )));
        }
        let expected = rows
            .checked_mul(cols)
            .ok_or(Error::DimensionOverflow {
                rows: rows as u64,
                cols: cols as u64,
            })?;
        if data.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                actual: data.len(),
            });
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("embedding matrix"));
        }
        Ok(Self {
            rows,
            cols,
            data,
            backend_id: backend_id.into(),
        })
    }

    pub fn from_rows<R: AsRef<[f32]>>(rows: &[R], backend_id: &str) -> Result<Self> {
        let cols = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::DimensionMismatch {
                    expected: cols,
                    actual: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Self::new(rows.len(), cols, data, backend_id)
    }

    pub(crate) fn from_dmatrix(m: &DMatrix<f64>, backend_id: impl Into<String>) -> Result<Self> {
        let (rows, cols) = m.shape();
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(m[(i, j)] as f32);
            }
        }
        Self::new(rows, cols, data, backend_id)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn backend_id(&self) -> &str {
        &self.backend_id
    }

    pub fn with_backend_id(mut self, id: impl Into<String>) -> Self {
        self.backend_id = id.into();
        self
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn iter_rows(&self) -> impl ExactSizeIterator<Item = &[f32]> + '_ {
        self.data.chunks_exact(self.cols)
    }

    pub fn to_dmatrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_iterator(self.rows, self.cols, self.data.iter().map(|&x| x as f64))
    }

    /// Rows reordered so that output row `i` is input row `order[i]`.
    pub fn select_rows(&self, order: &[usize]) -> Result<Self> {
        let rows: Vec<&[f32]> = order
            .iter()
            .map(|&i| {
                if i < self.rows {
                    Ok(self.row(i))
                } else {
                    Err(Error::InvalidArgument(format!("row index {i} out of range")))
                }
            })
            .collect::<Result<_>>()?;
        Self::from_rows(&rows, &self.backend_id)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pretrained_dimensions() {
        let dims: Vec<usize> = ["vggish", "openl3", "clap0", "clap1", "clap2"]
            .iter()
            .map(|id| EmbedderSpec::for_backend(id).unwrap().dim)
            .collect();
        assert_eq!(dims, vec![128, 6144, 512, 512, 128]);
        assert_eq!(EmbedderSpec::for_backend(BUILTIN_BACKEND).unwrap().dim, 192);
        assert!(EmbedderSpec::for_backend("mulan").is_err());
    }

    #[test]
    fn matrix_rejects_non_finite_and_empty() {
        assert!(EmbeddingMatrix::new(1, 1, vec![f32::NAN], "x").is_err());
        assert!(EmbeddingMatrix::new(0, 3, vec![], "x").is_err());
        assert!(EmbeddingMatrix::new(2, 2, vec![0.0; 3], "x").is_err());
    }

    #[test]
    fn select_rows_reorders() {
        let m = EmbeddingMatrix::from_rows(&[[1.0f32, 2.0], [3.0, 4.0]], "x").unwrap();
        let s = m.select_rows(&[1, 0]).unwrap();
        assert_eq!(s.row(0), &[3.0, 4.0]);
        assert_eq!(s.row(1), &[1.0, 2.0]);
    }
}
