//! Prompt/stem fusion: one vector per pair.
//!
//! MIX embeds the summed waveform; SUM adds the two embeddings; CONC
//! concatenates them, prompt first. A projection, when given, is applied last.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::audio::{mix, AudioWindow, MixPolicy};
use crate::dataset::PairSet;
use crate::embedding::{embed_window, Embedder, EmbeddingMatrix};
use crate::error::{Error, Result};
use crate::projection::Projection;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FusionMethod {
    Mix,
    Sum,
    Conc,
}

impl FusionMethod {
    pub const ALL: [FusionMethod; 3] = [FusionMethod::Mix, FusionMethod::Sum, FusionMethod::Conc];

    pub fn as_str(self) -> &'static str {
        match self {
            FusionMethod::Mix => "mix",
            FusionMethod::Sum => "sum",
            FusionMethod::Conc => "conc",
        }
    }

    /// Fused dimensionality for embedder dimensionality `d`, before projection.
    pub fn output_dim(self, d: usize) -> usize {
        match self {
            FusionMethod::Conc => 2 * d,
            _ => d,
        }
    }
}

impl fmt::Display for FusionMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FusionMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mix" => Ok(FusionMethod::Mix),
            "sum" => Ok(FusionMethod::Sum),
            "conc" | "concat" => Ok(FusionMethod::Conc),
            other => Err(Error::Config(format!("unknown fusion `{other}` (expected mix|sum|conc)"))),
        }
    }
}

fn check_pair(prompt: &AudioWindow, stem: &AudioWindow) -> Result<()> {
    if prompt.sample_rate() != stem.sample_rate() {
        return Err(Error::SampleRateMismatch {
            expected: prompt.sample_rate(),
            actual: stem.sample_rate(),
        });
    }
    if prompt.len() != stem.len() {
        return Err(Error::LengthMismatch(prompt.len(), stem.len()));
    }
    Ok(())
}

/// Fused vector without projection.
pub fn fuse_unprojected(
    method: FusionMethod,
    prompt: &AudioWindow,
    stem: &AudioWindow,
    embedder: &dyn Embedder,
    policy: MixPolicy,
) -> Result<Vec<f32>> {
    check_pair(prompt, stem)?;
    match method {
        FusionMethod::Mix => embed_window(embedder, &mix(&[prompt, stem], policy)?),
        FusionMethod::Sum => {
            let mut p = embed_window(embedder, prompt)?;
            let s = embed_window(embedder, stem)?;
            p.iter_mut().zip(&s).for_each(|(a, b)| *a += b);
            Ok(p)
        }
        FusionMethod::Conc => {
            let mut p = embed_window(embedder, prompt)?;
            p.extend(embed_window(embedder, stem)?);
            Ok(p)
        }
    }
}

pub fn fuse(
    method: FusionMethod,
    prompt: &AudioWindow,
    stem: &AudioWindow,
    embedder: &dyn Embedder,
    projection: &Projection,
    policy: MixPolicy,
) -> Result<Vec<f32>> {
    projection.apply_vector(&fuse_unprojected(method, prompt, stem, embedder, policy)?)
}

/// `projection(embed(prompt + stem))`.
pub fn fuse_mix(
    prompt: &AudioWindow,
    stem: &AudioWindow,
    embedder: &dyn Embedder,
    projection: &Projection,
    policy: MixPolicy,
) -> Result<Vec<f32>> {
    fuse(FusionMethod::Mix, prompt, stem, embedder, projection, policy)
}

/// `projection(embed(prompt) + embed(stem))`.
pub fn fuse_sum(
    prompt: &AudioWindow,
    stem: &AudioWindow,
    embedder: &dyn Embedder,
    projection: &Projection,
) -> Result<Vec<f32>> {
    fuse(FusionMethod::Sum, prompt, stem, embedder, projection, MixPolicy::default())
}

/// `projection([embed(prompt), embed(stem)])`.
pub fn fuse_concat(
    prompt: &AudioWindow,
    stem: &AudioWindow,
    embedder: &dyn Embedder,
    projection: &Projection,
) -> Result<Vec<f32>> {
    fuse(FusionMethod::Conc, prompt, stem, embedder, projection, MixPolicy::default())
}

/// Fuses every pair in parallel; row `i` is pair `i`. No projection.
pub fn fuse_pairs(
    method: FusionMethod,
    pairs: &PairSet,
    embedder: &dyn Embedder,
    policy: MixPolicy,
) -> Result<EmbeddingMatrix> {
    let rows: Vec<Vec<f32>> = pairs
        .pairs
        .par_iter()
        .map(|p| fuse_unprojected(method, &p.prompt, &p.stem, embedder, policy))
        .collect::<Result<_>>()?;
    if rows.is_empty() {
        return Err(Error::TooFew { needed: 1, actual: 0 });
    }
    EmbeddingMatrix::from_rows(&rows, &embedder.spec().backend_id)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio::PIPELINE_SAMPLE_RATE;
    use crate::embedding::BuiltinEmbedder;

    fn sine(freq: f64, amp: f64) -> AudioWindow {
        AudioWindow::new(
            (0..8000)
                .map(|i| (amp * (2.0 * std::f64::consts::PI * freq * i as f64 / 16_000.0).sin()) as f32)
                .collect::<Vec<_>>(),
            PIPELINE_SAMPLE_RATE,
        )
    }

    #[test]
    fn names() {
        for m in FusionMethod::ALL {
            assert_eq!(m.as_str().parse::<FusionMethod>().unwrap(), m);
        }
        assert_eq!(FusionMethod::Conc.output_dim(192), 384);
    }

    #[test]
    fn mix_with_silence_is_prompt_embedding() {
        let e = BuiltinEmbedder::new();
        let id = Projection::identity(192);
        let p = sine(440.0, 0.4);
        let z = AudioWindow::silence(p.len(), PIPELINE_SAMPLE_RATE);
        let fused = fuse_mix(&p, &z, &e, &id, MixPolicy::default()).unwrap();
        assert_eq!(fused, embed_window(&e, &p).unwrap());
    }

    #[test]
    fn symmetry() {
        let e = BuiltinEmbedder::new();
        let id = Projection::identity(192);
        let p = sine(440.0, 0.4);
        let s = sine(660.0, 0.3);
        let m = MixPolicy::default();
        assert_eq!(fuse_mix(&p, &s, &e, &id, m).unwrap(), fuse_mix(&s, &p, &e, &id, m).unwrap());
        assert_eq!(fuse_sum(&p, &s, &e, &id).unwrap(), fuse_sum(&s, &p, &e, &id).unwrap());
        let id2 = Projection::identity(384);
        assert_ne!(fuse_concat(&p, &s, &e, &id2).unwrap(), fuse_concat(&s, &p, &e, &id2).unwrap());
    }

    #[test]
    fn mismatched_lengths() {
        let e = BuiltinEmbedder::new();
        let p = sine(440.0, 0.4);
        let s = AudioWindow::silence(10, PIPELINE_SAMPLE_RATE);
        assert!(fuse_unprojected(FusionMethod::Mix, &p, &s, &e, MixPolicy::default()).is_err());
    }
}
