//! Waveform-similarity overlap-add time stretching.

/// Analysis frame length in seconds.
pub const FRAME_SECONDS: f64 = 0.03;
/// Maximum offset from the nominal analysis position, in seconds.
pub const TOLERANCE_SECONDS: f64 = 0.01;

const COARSE_STEP: usize = 3;

/// Stretches `x` to exactly `out_len` samples without changing pitch.
pub fn time_stretch(x: &[f32], out_len: usize, sample_rate: u32) -> Vec<f32> {
    let frame = ((FRAME_SECONDS * sample_rate as f64).round() as usize).max(4) & !1;
    let hop = frame / 2;
    let tol = (TOLERANCE_SECONDS * sample_rate as f64).round() as usize;
    if x.is_empty() || out_len == 0 {
        return vec![0.0; out_len];
    }
    if x.len() == out_len {
        return x.to_vec();
    }
    if x.len() < frame + 2 * tol {
        return crate::audio::resample_to(x, out_len as f64 / x.len() as f64, out_len);
    }

    let window: Vec<f32> = (0..frame)
        .map(|i| (0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / frame as f64).cos()) as f32)
        .collect();
    let analysis_hop = hop as f64 * x.len() as f64 / out_len as f64;
    let max_start = x.len() - frame;
    let n_frames = out_len.div_ceil(hop) + 1;

    // Zero tail so the natural continuation can run past the end.
    let mut padded = x.to_vec();
    padded.resize(x.len() + frame + hop, 0.0);
    let mut prefix = Vec::with_capacity(padded.len() + 1);
    prefix.push(0.0f64);
    let mut run = 0.0f64;
    for &v in &padded {
        run += v as f64 * v as f64;
        prefix.push(run);
    }
    let search = Search {
        x: &padded,
        prefix: &prefix,
        overlap: hop,
        tol,
        max_start,
    };

    let mut out = vec![0.0f32; n_frames * hop + frame];
    let mut norm = vec![0.0f32; out.len()];
    let mut prev = 0usize;
    for k in 0..n_frames {
        let start = if k == 0 {
            0
        } else {
            let nominal = (k as f64 * analysis_hop).round() as usize;
            // The continuation of the previous frame is the target shape.
            search.best(prev + hop, nominal)
        };
        let dst = k * hop;
        for i in 0..frame {
            let w = window[i];
            out[dst + i] += w * x[start + i];
            norm[dst + i] += w;
        }
        prev = start;
    }
    out.truncate(out_len);
    for (o, n) in out.iter_mut().zip(&norm) {
        if *n > 1e-3 {
            *o /= n;
        }
    }
    out
}

struct Search<'a> {
    x: &'a [f32],
    /// Running sums of squares, `prefix[i] = sum(x[..i]^2)`.
    prefix: &'a [f64],
    overlap: usize,
    tol: usize,
    max_start: usize,
}

impl Search<'_> {
    /// Normalized correlation of the overlap region at `cand` with the one at `natural`.
    fn similarity(&self, natural: usize, cand: usize) -> f32 {
        let l = self.overlap;
        let energy = self.prefix[cand + l] - self.prefix[cand];
        if energy <= 0.0 {
            return 0.0;
        }
        crate::audio::dot(&self.x[cand..cand + l], &self.x[natural..natural + l]) / (energy as f32).sqrt()
    }

    /// Start within `nominal +- tol` best matching the natural continuation.
    /// Coarse grid first, then a local refinement.
    fn best(&self, natural: usize, nominal: usize) -> usize {
        let lo = nominal.saturating_sub(self.tol).min(self.max_start);
        let hi = (nominal + self.tol).min(self.max_start);
        let mut best = lo;
        let mut best_score = f32::NEG_INFINITY;
        for c in (lo..=hi).step_by(COARSE_STEP) {
            let s = self.similarity(natural, c);
            if s > best_score {
                best_score = s;
                best = c;
            }
        }
        let fine_lo = best.saturating_sub(COARSE_STEP - 1).max(lo);
        let fine_hi = (best + COARSE_STEP - 1).min(hi);
        for c in fine_lo..=fine_hi {
            let s = self.similarity(natural, c);
            if s > best_score {
                best_score = s;
                best = c;
            }
        }
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_length() {
        let x: Vec<f32> = (0..16_000).map(|i| (i as f32 * 0.05).sin()).collect();
        for out in [8_000, 12_345, 16_000, 32_000] {
            assert_eq!(time_stretch(&x, out, 16_000).len(), out);
        }
    }

    #[test]
    fn constant_stays_constant() {
        let x = vec![0.5f32; 8_000];
        let y = time_stretch(&x, 12_000, 16_000);
        for v in &y[10..y.len() - 10] {
            assert!((v - 0.5).abs() < 1e-4, "{v}");
        }
    }
}
