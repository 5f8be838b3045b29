//! Mono audio windows, mixing, resampling and WAV I/O.

use std::path::Path;
use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Internal pipeline rate (Hz).
pub const PIPELINE_SAMPLE_RATE: u32 = 16_000;

/// A mono block of samples. Cloning shares the sample buffer; a window may be
/// a view into a longer buffer.
#[derive(Debug, Clone)]
pub struct AudioWindow {
    buffer: Arc<[f32]>,
    start: usize,
    len: usize,
    sample_rate: u32,
}

impl PartialEq for AudioWindow {
    fn eq(&self, other: &Self) -> bool {
        self.sample_rate == other.sample_rate && self.samples() == other.samples()
    }
}

impl AudioWindow {
    pub fn new(samples: impl Into<Arc<[f32]>>, sample_rate: u32) -> Self {
        let buffer: Arc<[f32]> = samples.into();
        Self {
            len: buffer.len(),
            buffer,
            start: 0,
            sample_rate,
        }
    }

    /// A view of `len` samples of `buffer` starting at `start`.
    pub fn view(buffer: Arc<[f32]>, start: usize, len: usize, sample_rate: u32) -> Self {
        assert!(start + len <= buffer.len(), "window view out of range");
        Self {
            buffer,
            start,
            len,
            sample_rate,
        }
    }

    pub fn silence(len: usize, sample_rate: u32) -> Self {
        Self::new(vec![0.0f32; len], sample_rate)
    }

    pub fn samples(&self) -> &[f32] {
        &self.buffer[self.start..self.start + self.len]
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn duration_seconds(&self) -> f64 {
        self.len as f64 / self.sample_rate as f64
    }

    pub fn is_finite(&self) -> bool {
        self.samples().iter().all(|x| x.is_finite())
    }

    pub fn peak(&self) -> f32 {
        peak(self.samples())
    }

    /// True if both windows view the same samples of the same buffer.
    pub fn shares_buffer(&self, other: &AudioWindow) -> bool {
        Arc::ptr_eq(&self.buffer, &other.buffer) && self.start == other.start && self.len == other.len
    }
}

/// Number of samples in a window of `seconds` at `sample_rate`.
pub fn window_len(seconds: f64, sample_rate: u32) -> usize {
    (seconds * sample_rate as f64).round() as usize
}

pub fn peak(samples: &[f32]) -> f32 {
    samples.iter().fold(0.0f32, |m, x| m.max(x.abs()))
}

pub fn rms(samples: &[f32]) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    let energy: f64 = samples.iter().map(|&x| (x as f64) * (x as f64)).sum();
    (energy / samples.len() as f64).sqrt()
}

/// Gain applied when summing waveforms, with optional peak normalization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MixPolicy {
    pub gain: f32,
    /// Scale the mix by 1/peak when its peak magnitude exceeds 1.
    pub peak_normalize: bool,
}

impl Default for MixPolicy {
    fn default() -> Self {
        Self {
            gain: 1.0,
            peak_normalize: true,
        }
    }
}

impl MixPolicy {
    fn finish(&self, buf: &mut [f32]) {
        if self.gain != 1.0 {
            buf.iter_mut().for_each(|x| *x *= self.gain);
        }
        if self.peak_normalize {
            let p = peak(buf);
            if p > 1.0 {
                let scale = 1.0 / p;
                buf.iter_mut().for_each(|x| *x *= scale);
            }
        }
    }
}

/// Samplewise sum of equal-length windows.
pub fn mix(windows: &[&AudioWindow], policy: MixPolicy) -> Result<AudioWindow> {
    let first = windows
        .first()
        .ok_or_else(|| Error::InvalidArgument("mix of zero windows".into()))?;
    let len = first.len();
    let sr = first.sample_rate();
    for w in &windows[1..] {
        if w.len() != len {
            return Err(Error::LengthMismatch(len, w.len()));
        }
        if w.sample_rate() != sr {
            return Err(Error::SampleRateMismatch {
                expected: sr,
                actual: w.sample_rate(),
            });
        }
    }
    let mut buf = first.samples().to_vec();
    for w in &windows[1..] {
        for (acc, x) in buf.iter_mut().zip(w.samples()) {
            *acc += x;
        }
    }
    policy.finish(&mut buf);
    Ok(AudioWindow::new(buf, sr))
}

// Windowed-sinc kernels, tabulated over zero crossings, one per half-width.
const SINC_HALF_TAPS: usize = 16;
const SINC_OVERSAMPLE: usize = 256;

fn sinc_table(half_taps: usize) -> &'static [f32] {
    static TABLES: [OnceLock<Vec<f32>>; SINC_HALF_TAPS] = [const { OnceLock::new() }; SINC_HALF_TAPS];
    TABLES[half_taps - 1].get_or_init(|| {
        let n = half_taps * SINC_OVERSAMPLE + 2;
        (0..n)
            .map(|i| {
                let u = i as f64 / SINC_OVERSAMPLE as f64;
                if u >= half_taps as f64 {
                    return 0.0;
                }
                let sinc = if u == 0.0 {
                    1.0
                } else {
                    let x = std::f64::consts::PI * u;
                    x.sin() / x
                };
                // Blackman window over [-half, half].
                let t = 0.5 + 0.5 * u / half_taps as f64;
                let w = 0.42 - 0.5 * (2.0 * std::f64::consts::PI * t).cos()
                    + 0.08 * (4.0 * std::f64::consts::PI * t).cos();
                (sinc * w) as f32
            })
            .collect()
    })
}

#[inline]
fn sinc_lookup(table: &[f32], u: f64) -> f32 {
    let pos = u * SINC_OVERSAMPLE as f64;
    let i = pos as usize;
    if i + 1 >= table.len() {
        return 0.0;
    }
    let frac = (pos - i as f64) as f32;
    table[i] + (table[i + 1] - table[i]) * frac
}

/// Band-limited resampling by `ratio` = output rate / input rate.
///
/// Output length is `round(len * ratio)`. Ratio 1 returns the input unchanged.
pub fn resample(samples: &[f32], ratio: f64) -> Vec<f32> {
    assert!(ratio > 0.0 && ratio.is_finite(), "resample ratio must be positive");
    if ratio == 1.0 {
        return samples.to_vec();
    }
    let out_len = (samples.len() as f64 * ratio).round() as usize;
    resample_to(samples, ratio, out_len)
}

/// Resamples reading the input at `1 / ratio` samples per output sample and
/// produces exactly `out_len` samples.
pub fn resample_to(samples: &[f32], ratio: f64, out_len: usize) -> Vec<f32> {
    resample_with_taps(samples, ratio, out_len, SINC_HALF_TAPS)
}

/// Fractional positions are quantized to this many phases per sample.
const RESAMPLE_PHASES: usize = 512;

/// As [`resample_to`] with a shorter kernel of `half_taps` zero crossings
/// per side (at most 16).
pub fn resample_with_taps(samples: &[f32], ratio: f64, out_len: usize, half_taps: usize) -> Vec<f32> {
    assert!((1..=SINC_HALF_TAPS).contains(&half_taps), "half_taps out of range");
    assert!(ratio > 0.0 && ratio.is_finite(), "resample ratio must be positive");
    if out_len == 0 {
        return Vec::new();
    }
    let table = sinc_table(half_taps);
    let cutoff = ratio.min(1.0);
    let reach = (half_taps as f64 / cutoff).ceil() as usize;
    let n_taps = 2 * reach;

    // bank[ph * n_taps + i] weights input sample base - reach + 1 + i when the
    // output position is base + ph / PHASES. Rows sum to one.
    let mut bank = vec![0.0f32; RESAMPLE_PHASES * n_taps];
    for (ph, row) in bank.chunks_exact_mut(n_taps).enumerate() {
        let frac = ph as f64 / RESAMPLE_PHASES as f64;
        let mut sum = 0.0f64;
        for (i, w) in row.iter_mut().enumerate() {
            let d = frac + reach as f64 - 1.0 - i as f64;
            *w = sinc_lookup(table, d.abs() * cutoff);
            sum += *w as f64;
        }
        if sum.abs() > 1e-12 {
            row.iter_mut().for_each(|w| *w = (*w as f64 / sum) as f32);
        }
    }

    let step = 1.0 / ratio;
    let last_base = ((out_len - 1) as f64 * step).floor() as usize + 1;
    let pad = reach + 1;
    let padded_len = pad + samples.len().max(last_base + 1) + pad;
    let mut padded = vec![0.0f32; padded_len];
    padded[pad..pad + samples.len()].copy_from_slice(samples);

    let mut out = Vec::with_capacity(out_len);
    for j in 0..out_len {
        let t = j as f64 * step;
        let mut base = t.floor() as usize;
        let mut ph = ((t - base as f64) * RESAMPLE_PHASES as f64).round() as usize;
        if ph == RESAMPLE_PHASES {
            base += 1;
            ph = 0;
        }
        let start = base + pad + 1 - reach;
        out.push(dot(&padded[start..start + n_taps], &bank[ph * n_taps..(ph + 1) * n_taps]));
    }
    out
}

/// Dot product with independent partial sums so it vectorizes.
pub(crate) fn dot(a: &[f32], b: &[f32]) -> f32 {
    let mut acc = [0.0f32; 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let tail: f32 = ca
        .remainder()
        .iter()
        .zip(cb.remainder())
        .map(|(x, y)| x * y)
        .sum();
    for (x, y) in ca.zip(cb) {
        for l in 0..8 {
            acc[l] += x[l] * y[l];
        }
    }
    acc.iter().sum::<f32>() + tail
}

/// Reads a WAV file as mono (mean over channels).
///
/// Accepts 16/24-bit integer PCM and 32-bit float; anything else is rejected.
pub fn read_wav_mono(path: &Path) -> Result<(Vec<f32>, u32)> {
    let reader = hound::WavReader::open(path).map_err(|e| match e {
        hound::Error::IoError(io) => Error::io(format!("reading {}", path.display()), io),
        other => Error::UnsupportedAudio {
            path: path.to_path_buf(),
            reason: other.to_string(),
        },
    })?;
    let spec = reader.spec();
    let channels = spec.channels.max(1) as usize;
    let interleaved: Vec<f32> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Float, 32) => reader
            .into_samples::<f32>()
            .collect::<std::result::Result<_, _>>()?,
        (hound::SampleFormat::Int, bits @ (16 | 24)) => {
            let scale = 1.0 / (1u32 << (bits - 1)) as f32;
            reader
                .into_samples::<i32>()
                .map(|s| s.map(|v| v as f32 * scale))
                .collect::<std::result::Result<_, _>>()?
        }
        (fmt, bits) => {
            return Err(Error::UnsupportedAudio {
                path: path.to_path_buf(),
                reason: format!("{bits}-bit {fmt:?} samples"),
            })
        }
    };
    if interleaved.is_empty() {
        return Err(Error::EmptyAudio(path.to_path_buf()));
    }
    let mono = if channels == 1 {
        interleaved
    } else {
        interleaved
            .chunks_exact(channels)
            .map(|frame| frame.iter().sum::<f32>() / channels as f32)
            .collect()
    };
    Ok((mono, spec.sample_rate))
}

/// Writes a mono 32-bit float WAV file.
pub fn write_wav_mono(path: &Path, window: &AudioWindow) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: window.sample_rate(),
        bits_per_sample: 32,
        sample_format: hound::SampleFormat::Float,
    };
    let mut writer = hound::WavWriter::create(path, spec)?;
    for &s in window.samples() {
        writer.write_sample(s)?;
    }
    writer.finalize()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sine(freq: f64, amp: f32, len: usize, sr: u32) -> AudioWindow {
        let s: Vec<f32> = (0..len)
            .map(|i| amp * (2.0 * std::f64::consts::PI * freq * i as f64 / sr as f64).sin() as f32)
            .collect();
        AudioWindow::new(s, sr)
    }

    #[test]
    fn mix_single_is_identity() {
        let w = sine(440.0, 0.5, 1000, 16_000);
        let m = mix(&[&w], MixPolicy::default()).unwrap();
        assert_eq!(m.samples(), w.samples());
    }

    #[test]
    fn mix_with_negation_cancels() {
        let w = sine(440.0, 0.8, 1000, 16_000);
        let neg = AudioWindow::new(w.samples().iter().map(|x| -x).collect::<Vec<_>>(), 16_000);
        let m = mix(&[&w, &neg], MixPolicy::default()).unwrap();
        assert!(m.samples().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn half_scale_sines_sum_without_normalization() {
        let half = sine(440.0, 0.5, 4000, 16_000);
        let full = sine(440.0, 1.0, 4000, 16_000);
        let m = mix(&[&half, &half], MixPolicy::default()).unwrap();
        for (a, b) in m.samples().iter().zip(full.samples()) {
            assert!((a - b).abs() < 1e-6);
        }
        assert!(m.peak() <= 1.0 + 1e-6);
    }

    #[test]
    fn loud_mix_is_peak_normalized() {
        let w = sine(100.0, 0.9, 1600, 16_000);
        let m = mix(&[&w, &w], MixPolicy::default()).unwrap();
        assert!((m.peak() - 1.0).abs() < 1e-6);
        let raw = mix(
            &[&w, &w],
            MixPolicy {
                peak_normalize: false,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(raw.peak() > 1.7);
    }

    #[test]
    fn mix_rejects_length_mismatch() {
        let a = AudioWindow::silence(10, 16_000);
        let b = AudioWindow::silence(11, 16_000);
        assert!(matches!(
            mix(&[&a, &b], MixPolicy::default()),
            Err(Error::LengthMismatch(10, 11))
        ));
    }

    #[test]
    fn resample_preserves_dc() {
        let x = vec![0.25f32; 2000];
        let y = resample(&x, 16_000.0 / 44_100.0);
        assert_eq!(y.len(), (2000.0f64 * 16_000.0 / 44_100.0).round() as usize);
        for v in &y[40..y.len() - 40] {
            assert!((v - 0.25).abs() < 1e-4, "{v}");
        }
    }

    #[test]
    fn wav_roundtrip_float() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.wav");
        let w = sine(220.0, 0.3, 500, 8000);
        write_wav_mono(&path, &w).unwrap();
        let (back, sr) = read_wav_mono(&path).unwrap();
        assert_eq!(sr, 8000);
        assert_eq!(back.as_slice(), w.samples());
    }

    #[test]
    fn wav_rejects_8bit() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.wav");
        let spec = hound::WavSpec {
            channels: 1,
            sample_rate: 8000,
            bits_per_sample: 8,
            sample_format: hound::SampleFormat::Int,
        };
        let mut w = hound::WavWriter::create(&path, spec).unwrap();
        w.write_sample(3i8).unwrap();
        w.finalize().unwrap();
        assert!(matches!(
            read_wav_mono(&path),
            Err(Error::UnsupportedAudio { .. })
        ));
    }
}
