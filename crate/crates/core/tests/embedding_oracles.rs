//! Builtin embedder against a naive re-implementation, plus AEMB file checks.

use std::f64::consts::PI;

use prompt_adherence::audio::AudioWindow;
use prompt_adherence::embedding::{
    embed_window, read_embeddings, read_embeddings_from, write_embeddings, write_embeddings_to, BuiltinEmbedder,
    EmbeddingMatrix, Embedder, LOG_FLOOR_EPS,
};
use prompt_adherence::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SR: f64 = 16_000.0;
const BANDS: usize = 64;

// Oracle mel scale in its natural-log form.
fn mel(hz: f64) -> f64 {
    1127.0 * (1.0 + hz / 700.0).ln()
}

fn inv_mel(m: f64) -> f64 {
    700.0 * ((m / 1127.0).exp() - 1.0)
}

/// Triangle weight of band `b` at frequency `f`, bands spread evenly in mel
/// from 0 Hz to Nyquist.
fn tri(b: usize, f: f64) -> f64 {
    let top = mel(SR / 2.0);
    let edge = |i: usize| inv_mel(top * i as f64 / (BANDS + 1) as f64);
    let (lo, c, hi) = (edge(b), edge(b + 1), edge(b + 2));
    if f > lo && f <= c {
        (f - lo) / (c - lo)
    } else if f > c && f < hi {
        (hi - f) / (hi - c)
    } else {
        0.0
    }
}

/// Log-mel energies of the frame starting at `start`: 400-sample periodic
/// Hann, zero-padded 512-point DFT by direct summation.
fn oracle_frame(x: &[f32], start: usize) -> Vec<f64> {
    let n_fft = 512;
    let frame: Vec<f64> = (0..400)
        .map(|i| x[start + i] as f64 * (0.5 - 0.5 * (2.0 * PI * i as f64 / 400.0).cos()))
        .collect();
    let power: Vec<f64> = (0..=n_fft / 2)
        .map(|k| {
            let (mut re, mut im) = (0.0, 0.0);
            for (i, v) in frame.iter().enumerate() {
                let ph = -2.0 * PI * (k * i) as f64 / n_fft as f64;
                re += v * ph.cos();
                im += v * ph.sin();
            }
            re * re + im * im
        })
        .collect();
    (0..BANDS)
        .map(|b| {
            let e: f64 = power
                .iter()
                .enumerate()
                .map(|(k, p)| tri(b, k as f64 * SR / n_fft as f64) * p)
                .sum();
            (e + 1e-8).ln()
        })
        .collect()
}

fn noise(seed: u64, len: usize) -> Vec<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..len).map(|_| rng.random_range(-0.5f32..0.5)).collect()
}

fn sine(freq: f64, amp: f64, len: usize) -> Vec<f32> {
    (0..len).map(|i| (amp * (2.0 * PI * freq * i as f64 / SR).sin()) as f32).collect()
}

#[test]
fn frames_match_direct_dft() {
    let e = BuiltinEmbedder::new();
    let mut x = noise(1, 4000);
    // A quiet stretch makes some bands sit near the floor.
    x[2000..].iter_mut().for_each(|v| *v *= 1e-3);
    let frames = e.log_mel_frames(&x);
    assert_eq!(frames.len(), 1 + (4000 - 400) / 160);
    for f in [0usize, 7, 12, 20] {
        let want = oracle_frame(&x, f * 160);
        for (b, (&got, want)) in frames[f].iter().zip(&want).enumerate() {
            // f32 FFT against f64 direct sums.
            assert!((got - want).abs() < 1e-3 * want.abs().max(1.0), "frame {f} band {b}: {got} vs {want}");
        }
    }
}

#[test]
fn sine_peaks_in_the_band_containing_it() {
    let e = BuiltinEmbedder::new();
    let v = embed_window(&e, &AudioWindow::new(sine(440.0, 1.0, 80_000), 16_000)).unwrap();
    let argmax = |xs: &[f64]| xs.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
    let means: Vec<f64> = v[..BANDS].iter().map(|&m| m as f64).collect();
    let oracle: Vec<f64> = (0..BANDS).map(|b| tri(b, 440.0)).collect();
    assert_eq!(argmax(&means), argmax(&oracle));
}

#[test]
fn statistics_recomputed_from_frames() {
    let e = BuiltinEmbedder::new();
    let x = noise(2, 16_000);
    let frames = e.log_mel_frames(&x);
    let v = embed_window(&e, &AudioWindow::new(x, 16_000)).unwrap();
    let n = frames.len() as f64;
    for b in 0..BANDS {
        let col: Vec<f64> = frames.iter().map(|f| f[b]).collect();
        let mean = col.iter().sum::<f64>() / n;
        let std = (col.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / n).sqrt();
        let diff = col.windows(2).map(|w| (w[1] - w[0]).abs()).sum::<f64>() / (n - 1.0);
        assert!((v[b] as f64 - mean).abs() < 1e-4);
        assert!((v[BANDS + b] as f64 - std).abs() < 1e-4);
        assert!((v[2 * BANDS + b] as f64 - diff).abs() < 1e-4);
    }

    // Permuting frames keeps means and stds but changes the differences.
    let mut shuffled = frames.clone();
    shuffled.reverse();
    shuffled.swap(3, 40);
    let p = BuiltinEmbedder::summarize(&shuffled);
    let s = BuiltinEmbedder::summarize(&frames);
    for b in 0..BANDS {
        assert!((p[b] - s[b]).abs() < 1e-4);
        assert!((p[BANDS + b] - s[BANDS + b]).abs() < 1e-4);
    }
    assert_ne!(&p[2 * BANDS..], &s[2 * BANDS..]);
}

#[test]
fn silence_noise_and_tone() {
    let e = BuiltinEmbedder::new();
    let z = embed_window(&e, &AudioWindow::silence(80_000, 16_000)).unwrap();
    let floor = LOG_FLOOR_EPS.ln() as f32;
    assert!(z[..BANDS].iter().all(|&m| m == floor));
    assert!(z[BANDS..].iter().all(|&m| m == 0.0));
    assert_eq!(z, embed_window(&e, &AudioWindow::silence(80_000, 16_000)).unwrap());

    let a = embed_window(&e, &AudioWindow::new(noise(3, 80_000), 16_000)).unwrap();
    let b = embed_window(&e, &AudioWindow::new(sine(440.0, 0.5, 80_000), 16_000)).unwrap();
    let d: f32 = a.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum();
    assert!(d > 0.0);
    assert_eq!(a.len(), e.spec().dim);
    assert_eq!(b, embed_window(&e, &AudioWindow::new(sine(440.0, 0.5, 80_000), 16_000)).unwrap());
}

#[test]
fn aemb_layout_is_bit_exact() {
    let m = EmbeddingMatrix::new(1, 1, vec![0.0], "builtin-logmel").unwrap();
    let mut bytes = Vec::new();
    write_embeddings_to(&m, &mut bytes).unwrap();
    let mut want = b"AEMB".to_vec();
    for v in [1u32, 1, 1] {
        want.extend(v.to_le_bytes());
    }
    want.extend(0f32.to_le_bytes());
    want.extend((14u32).to_le_bytes());
    want.extend(b"builtin-logmel");
    assert_eq!(bytes, want);
    assert_eq!(read_embeddings_from(&bytes[..]).unwrap(), m);
}

#[test]
fn aemb_random_roundtrip() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let data: Vec<f32> = (0..100 * 512).map(|_| f32::from_bits(rng.random::<u32>() & 0xBF7F_FFFF)).collect();
    let m = EmbeddingMatrix::new(100, 512, data, "clap0").unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.aemb");
    write_embeddings(&m, &path).unwrap();
    let back = read_embeddings(&path).unwrap();
    assert_eq!(back.backend_id(), "clap0");
    assert!(back.data().iter().zip(m.data()).all(|(a, b)| a.to_bits() == b.to_bits()));
}

#[test]
fn aemb_errors_are_distinct() {
    let m = EmbeddingMatrix::new(2, 3, vec![1.0; 6], "vggish").unwrap();
    let mut good = Vec::new();
    write_embeddings_to(&m, &mut good).unwrap();

    let mut bad = good.clone();
    bad[0] = b'X';
    assert!(matches!(read_embeddings_from(&bad[..]), Err(Error::BadMagic)));

    let mut bad = good.clone();
    bad[4..8].copy_from_slice(&2u32.to_le_bytes());
    assert!(matches!(read_embeddings_from(&bad[..]), Err(Error::VersionMismatch(2))));

    assert!(matches!(read_embeddings_from(&good[..good.len() - 9]), Err(Error::Truncated(_))));

    let mut bad = good.clone();
    bad[8..12].copy_from_slice(&u32::MAX.to_le_bytes());
    bad[12..16].copy_from_slice(&u32::MAX.to_le_bytes());
    assert!(matches!(read_embeddings_from(&bad[..]), Err(Error::DimensionOverflow { .. })));
}
