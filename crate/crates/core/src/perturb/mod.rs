//! Stem perturbations for the non-matching conditions: pitch shift, circular
//! time shift, both, or random re-pairing. Prompts are never modified.

mod wsola;

use rand::Rng;
use rayon::prelude::*;

pub use wsola::time_stretch;

use crate::adherence::make_nonmatching;
use crate::audio::{resample_with_taps, AudioWindow};
use crate::dataset::{Condition, Pair, PairSet, Perturbation};
use crate::error::{Error, Result};
use crate::rng::rng_from_seed;
use crate::seed;

/// Default bound on |semitones|.
pub const MAX_SEMITONES: f64 = 12.0;
pub const PITCH_RANGE: std::ops::RangeInclusive<i32> = 1..=7;
pub const TIME_RANGE_SECONDS: (f64, f64) = (0.2, 2.5);

// Zero crossings per side of the pitch-shift resampling kernel.
const PITCH_RESAMPLE_TAPS: usize = 8;

/// Shifts pitch by `semitones` while keeping the length: resample by
/// `2^(-semitones/12)`, then time-stretch back to the original length.
pub fn pitch_shift(stem: &AudioWindow, semitones: f64) -> Result<AudioWindow> {
    pitch_shift_capped(stem, semitones, MAX_SEMITONES)
}

pub fn pitch_shift_capped(stem: &AudioWindow, semitones: f64, cap: f64) -> Result<AudioWindow> {
    if !semitones.is_finite() || semitones.abs() > cap {
        return Err(Error::InvalidArgument(format!(
            "pitch shift of {semitones} semitones exceeds the cap of {cap}"
        )));
    }
    if !stem.is_finite() {
        return Err(Error::NonFinite("stem"));
    }
    if semitones == 0.0 || stem.is_empty() {
        return Ok(stem.clone());
    }
    let ratio = (-semitones / 12.0).exp2();
    let n = stem.len();
    let squeezed_len = ((n as f64 * ratio).round() as usize).max(1);
    let squeezed = resample_with_taps(stem.samples(), ratio, squeezed_len, PITCH_RESAMPLE_TAPS);
    let restored = time_stretch(&squeezed, n, stem.sample_rate());
    Ok(AudioWindow::new(restored, stem.sample_rate()))
}

/// Circular shift by `round(shift_seconds * sample_rate)` samples; positive
/// values move content later.
pub fn time_shift(stem: &AudioWindow, shift_seconds: f64) -> Result<AudioWindow> {
    let n = stem.len();
    if !shift_seconds.is_finite() || shift_seconds.abs() >= stem.duration_seconds() {
        return Err(Error::InvalidArgument(format!(
            "time shift of {shift_seconds} s is not shorter than the {} s window",
            stem.duration_seconds()
        )));
    }
    let shift = (shift_seconds * stem.sample_rate() as f64).round() as i64;
    if shift == 0 {
        return Ok(stem.clone());
    }
    let k = shift.rem_euclid(n as i64) as usize;
    let mut out = Vec::with_capacity(n);
    let s = stem.samples();
    out.extend_from_slice(&s[n - k..]);
    out.extend_from_slice(&s[..n - k]);
    Ok(AudioWindow::new(out, stem.sample_rate()))
}

fn draw_semitones(rng: &mut impl Rng) -> i32 {
    let sign = if rng.random::<bool>() { 1 } else { -1 };
    sign * rng.random_range(PITCH_RANGE)
}

fn draw_shift(rng: &mut impl Rng) -> f64 {
    let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
    sign * rng.random_range(TIME_RANGE_SECONDS.0..=TIME_RANGE_SECONDS.1)
}

/// Applies a non-matching condition to every stem of `x`.
///
/// Each pair draws its parameters from its own stream derived from `seed`,
/// so results do not depend on thread scheduling. `None` returns `x`
/// unchanged and `Random` delegates to [`make_nonmatching`].
pub fn apply_condition(x: &PairSet, condition: Condition, seed: u64) -> Result<PairSet> {
    if x.is_empty() {
        return Err(Error::TooFew { needed: 1, actual: 0 });
    }
    match condition {
        Condition::None => return Ok(x.clone()),
        Condition::Random => return make_nonmatching(x, seed),
        _ => {}
    }
    let pairs = x
        .pairs
        .par_iter()
        .enumerate()
        .map(|(i, pair)| {
            let pair_seed = seed!(seed, condition.as_str(), i);
            let mut rng = rng_from_seed(pair_seed);
            let semitones = matches!(condition, Condition::Pitch | Condition::PitchTime)
                .then(|| draw_semitones(&mut rng));
            let shift = matches!(condition, Condition::Time | Condition::PitchTime).then(|| draw_shift(&mut rng));
            let mut stem = pair.stem.clone();
            if let Some(st) = semitones {
                stem = pitch_shift(&stem, st as f64)?;
            }
            if let Some(sh) = shift {
                stem = time_shift(&stem, sh)?;
            }
            let mut provenance = pair.provenance.clone();
            provenance.perturbation = Some(Perturbation {
                condition,
                stem_source: None,
                semitones,
                shift_seconds: shift,
                seed: pair_seed,
            });
            Ok(Pair {
                prompt: pair.prompt.clone(),
                stem,
                provenance,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PairSet {
        pairs,
        window_seconds: x.window_seconds,
        sample_rate: x.sample_rate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_semitones_is_identity() {
        let w = AudioWindow::new((0..1000).map(|i| (i as f32 * 0.1).sin()).collect::<Vec<_>>(), 16_000);
        assert_eq!(pitch_shift(&w, 0.0).unwrap(), w);
        assert!(pitch_shift(&w, 12.5).is_err());
    }

    #[test]
    fn impulse_moves() {
        let mut s = vec![0.0f32; 80_000];
        s[0] = 1.0;
        let w = AudioWindow::new(s, 16_000);
        let shifted = time_shift(&w, 0.5).unwrap();
        assert_eq!(shifted.samples()[8000], 1.0);
        let back = time_shift(&time_shift(&w, 2.5).unwrap(), -2.5).unwrap();
        assert_eq!(back, w);
        assert!(time_shift(&w, 5.0).is_err());
    }

    #[test]
    fn pitch_keeps_length() {
        let w = AudioWindow::new((0..16_000).map(|i| (i as f32 * 0.2).sin() * 0.3).collect::<Vec<_>>(), 16_000);
        for st in [-7.0, -1.0, 3.0, 12.0] {
            assert_eq!(pitch_shift(&w, st).unwrap().len(), 16_000);
        }
    }
}
