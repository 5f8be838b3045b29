//! Log-mel statistics embedder.
//!
//! 64 HTK-mel bands over 25 ms Hann frames with a 10 ms hop at 16 kHz. The
//! embedding is the per-band mean, standard deviation and mean absolute
//! first difference of the log energies, concatenated in that order.

use std::sync::Arc;

use realfft::{RealFftPlanner, RealToComplex};

use super::{Embedder, EmbedderSpec, BUILTIN_BACKEND};
use crate::audio::{AudioWindow, PIPELINE_SAMPLE_RATE};

pub const N_MELS: usize = 64;
pub const FRAME_LEN: usize = 400;
pub const HOP_LEN: usize = 160;
pub const N_FFT: usize = 512;
pub const EMBEDDING_DIM: usize = 3 * N_MELS;
/// Added to mel energies before the log.
pub const LOG_FLOOR_EPS: f64 = 1e-8;

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular mel filters stored sparsely over FFT bins.
#[derive(Debug, Clone)]
pub struct MelFilterbank {
    filters: Vec<(usize, Vec<f32>)>,
    /// Band edges in Hz: band `m` spans `edges[m]..edges[m + 2]`, peaking at `edges[m + 1]`.
    edges: Vec<f64>,
}

impl MelFilterbank {
    pub fn new(n_mels: usize, n_fft: usize, sample_rate: u32, fmin: f64, fmax: f64) -> Self {
        let mel_lo = hz_to_mel(fmin);
        let mel_hi = hz_to_mel(fmax);
        let edges: Vec<f64> = (0..n_mels + 2)
            .map(|i| mel_to_hz(mel_lo + (mel_hi - mel_lo) * i as f64 / (n_mels + 1) as f64))
            .collect();
        let n_bins = n_fft / 2 + 1;
        let bin_hz = sample_rate as f64 / n_fft as f64;
        let filters = (0..n_mels)
            .map(|m| {
                let (lo, center, hi) = (edges[m], edges[m + 1], edges[m + 2]);
                let weights: Vec<(usize, f32)> = (0..n_bins)
                    .filter_map(|k| {
                        let f = k as f64 * bin_hz;
                        let w = if f > lo && f <= center {
                            (f - lo) / (center - lo)
                        } else if f > center && f < hi {
                            (hi - f) / (hi - center)
                        } else {
                            0.0
                        };
                        (w > 0.0).then_some((k, w as f32))
                    })
                    .collect();
                let start = weights.first().map(|(k, _)| *k).unwrap_or(0);
                (start, weights.into_iter().map(|(_, w)| w).collect())
            })
            .collect();
        Self { filters, edges }
    }

    pub fn n_mels(&self) -> usize {
        self.filters.len()
    }

    pub fn center_hz(&self, band: usize) -> f64 {
        self.edges[band + 1]
    }

    fn apply(&self, power: &[f32], out: &mut [f64]) {
        for (o, (start, weights)) in out.iter_mut().zip(&self.filters) {
            let bins = &power[*start..*start + weights.len()];
            *o = weights.iter().zip(bins).map(|(w, p)| w * p).sum::<f32>() as f64;
        }
    }
}

pub struct BuiltinEmbedder {
    spec: EmbedderSpec,
    fft: Arc<dyn RealToComplex<f32>>,
    window: Vec<f32>,
    filterbank: MelFilterbank,
}

impl std::fmt::Debug for BuiltinEmbedder {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BuiltinEmbedder").field("spec", &self.spec).finish()
    }
}

impl Default for BuiltinEmbedder {
    fn default() -> Self {
        Self::new()
    }
}

impl BuiltinEmbedder {
    pub fn new() -> Self {
        let fft = RealFftPlanner::<f32>::new().plan_fft_forward(N_FFT);
        // Periodic Hann.
        let window = (0..FRAME_LEN)
            .map(|i| {
                (0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / FRAME_LEN as f64).cos()) as f32
            })
            .collect();
        let filterbank = MelFilterbank::new(
            N_MELS,
            N_FFT,
            PIPELINE_SAMPLE_RATE,
            0.0,
            PIPELINE_SAMPLE_RATE as f64 / 2.0,
        );
        Self {
            spec: EmbedderSpec {
                backend_id: BUILTIN_BACKEND.to_string(),
                dim: EMBEDDING_DIM,
                window_seconds: 5.0,
                sample_rate: Some(PIPELINE_SAMPLE_RATE),
            },
            fft,
            window,
            filterbank,
        }
    }

    pub fn filterbank(&self) -> &MelFilterbank {
        &self.filterbank
    }

    /// Log-mel energies, one row of `N_MELS` values per frame.
    ///
    /// Windows shorter than one frame are zero-padded to a single frame.
    pub fn log_mel_frames(&self, samples: &[f32]) -> Vec<[f64; N_MELS]> {
        let n_frames = if samples.len() <= FRAME_LEN {
            1
        } else {
            1 + (samples.len() - FRAME_LEN) / HOP_LEN
        };
        let mut input = self.fft.make_input_vec();
        let mut spectrum = self.fft.make_output_vec();
        let mut scratch = self.fft.make_scratch_vec();
        let mut power = vec![0.0f32; spectrum.len()];
        let mut frames = Vec::with_capacity(n_frames);
        for f in 0..n_frames {
            let start = f * HOP_LEN;
            input.iter_mut().for_each(|x| *x = 0.0);
            let end = (start + FRAME_LEN).min(samples.len());
            for (i, (&s, &w)) in samples[start..end].iter().zip(&self.window).enumerate() {
                input[i] = s * w;
            }
            self.fft
                .process_with_scratch(&mut input, &mut spectrum, &mut scratch)
                .expect("buffers come from the plan");
            for (p, c) in power.iter_mut().zip(&spectrum) {
                *p = c.norm_sqr();
            }
            let mut mel = [0.0f64; N_MELS];
            self.filterbank.apply(&power, &mut mel);
            for v in mel.iter_mut() {
                *v = (*v + LOG_FLOOR_EPS).ln();
            }
            frames.push(mel);
        }
        frames
    }

    /// Collapses frame-level log-mel rows into [means, stds, mean |diff|].
    pub fn summarize(frames: &[[f64; N_MELS]]) -> Vec<f32> {
        let n = frames.len().max(1) as f64;
        // Accumulate relative to the first frame so constant bands are exact.
        let origin = frames.first().copied().unwrap_or([0.0; N_MELS]);
        let mut shift = [0.0f64; N_MELS];
        for fr in frames {
            for ((m, v), o) in shift.iter_mut().zip(fr).zip(&origin) {
                *m += v - o;
            }
        }
        shift.iter_mut().for_each(|m| *m /= n);
        let mut var = [0.0f64; N_MELS];
        for fr in frames {
            for (((s, v), o), m) in var.iter_mut().zip(fr).zip(&origin).zip(&shift) {
                let dev = v - o - m;
                *s += dev * dev;
            }
        }
        let mut mean = origin;
        for (m, s) in mean.iter_mut().zip(&shift) {
            *m += s;
        }
        let mut diff = [0.0f64; N_MELS];
        for pair in frames.windows(2) {
            for ((d, a), b) in diff.iter_mut().zip(&pair[0]).zip(&pair[1]) {
                *d += (b - a).abs();
            }
        }
        let n_diff = frames.len().saturating_sub(1);
        let mut out = Vec::with_capacity(EMBEDDING_DIM);
        out.extend(mean.iter().map(|&m| m as f32));
        out.extend(var.iter().map(|&v| (v / n).sqrt() as f32));
        out.extend(diff.iter().map(|&d| {
            if n_diff == 0 {
                0.0
            } else {
                (d / n_diff as f64) as f32
            }
        }));
        out
    }
}

impl Embedder for BuiltinEmbedder {
    fn spec(&self) -> &EmbedderSpec {
        &self.spec
    }

    fn embed_unchecked(&self, window: &AudioWindow) -> Vec<f32> {
        Self::summarize(&self.log_mel_frames(window.samples()))
    }
}
