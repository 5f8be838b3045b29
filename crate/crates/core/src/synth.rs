//! Seeded synthetic multitrack collections.
//!
//! Each project has a key, a tempo and a looping four-chord progression
//! rendered as four harmonic stems (bass, pad, arpeggio, lead). Collections
//! differ in tempo range and timbre, so that within- and between-collection
//! comparisons behave differently.

use std::fs;
use std::path::Path;

use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::audio::{write_wav_mono, AudioWindow, PIPELINE_SAMPLE_RATE};
use crate::dataset::Project;
use crate::error::{Error, Result};
use crate::rng::rng_from_seed;
use crate::seed;

pub const STEM_NAMES: [&str; 4] = ["bass", "pad", "arp", "lead"];

const TABLE_LEN: usize = 2048;

/// Timbre and tempo palette shared by a collection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Style {
    pub name: String,
    pub tempo_bpm: (f64, f64),
    /// Relative amplitude of harmonics 1, 2, ... of every voice.
    pub harmonics: Vec<f64>,
    /// Decay time constant of plucked notes, seconds.
    pub decay_seconds: f64,
    /// Semitone offset applied to all registers.
    pub transpose: i32,
}

impl Style {
    /// Bright sawtooth-like voices at moderate tempo.
    pub fn bright() -> Self {
        Self {
            name: "bright".into(),
            tempo_bpm: (84.0, 112.0),
            harmonics: (1..=8).map(|k| 1.0 / k as f64).collect(),
            decay_seconds: 0.35,
            transpose: 0,
        }
    }

    /// Hollow odd-harmonic voices at a faster tempo, slightly higher.
    pub fn hollow() -> Self {
        Self {
            name: "hollow".into(),
            tempo_bpm: (118.0, 148.0),
            harmonics: (1..=9)
                .map(|k| if k % 2 == 1 { 1.0 / (k * k) as f64 } else { 0.0 })
                .collect(),
            decay_seconds: 0.18,
            transpose: 3,
        }
    }

    /// Preset by index, cycling through the available palettes.
    pub fn preset(index: usize) -> Self {
        match index % 2 {
            0 => Self::bright(),
            _ => Self::hollow(),
        }
    }

    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "bright" => Ok(Self::bright()),
            "hollow" => Ok(Self::hollow()),
            other => Err(Error::Config(format!("unknown synth style `{other}` (expected bright|hollow)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_projects: usize,
    pub seconds: f64,
    pub sample_rate: u32,
    pub style: Style,
}

impl SynthConfig {
    pub fn new(style: Style) -> Self {
        Self {
            n_projects: 20,
            seconds: 30.0,
            sample_rate: PIPELINE_SAMPLE_RATE,
            style,
        }
    }
}

fn wavetable(harmonics: &[f64]) -> Vec<f32> {
    let norm: f64 = harmonics.iter().map(|a| a.abs()).sum::<f64>().max(1e-9);
    (0..TABLE_LEN + 1)
        .map(|i| {
            let ph = 2.0 * std::f64::consts::PI * i as f64 / TABLE_LEN as f64;
            let v: f64 = harmonics
                .iter()
                .enumerate()
                .map(|(k, a)| a * ((k + 1) as f64 * ph).sin())
                .sum();
            (v / norm) as f32
        })
        .collect()
}

fn midi_hz(note: i32) -> f64 {
    440.0 * ((note - 69) as f64 / 12.0).exp2()
}

struct Renderer<'a> {
    table: &'a [f32],
    sr: f64,
    buf: Vec<f32>,
}

impl Renderer<'_> {
    /// Adds a note with a short attack, exponential decay (`decay` of None
    /// sustains) and a short release at `start + dur`.
    fn note(&mut self, midi: i32, start: f64, dur: f64, amp: f32, decay: Option<f64>) {
        let freq = midi_hz(midi);
        let attack = 0.005;
        let release = 0.02;
        let s0 = (start * self.sr) as usize;
        let s1 = (((start + dur + release) * self.sr) as usize).min(self.buf.len());
        let inc = freq * TABLE_LEN as f64 / self.sr;
        let mut phase = 0.0f64;
        for (i, out) in self.buf[s0.min(s1)..s1].iter_mut().enumerate() {
            let t = i as f64 / self.sr;
            let mut env = if t < attack { t / attack } else { 1.0 };
            if let Some(tau) = decay {
                env *= (-(t - attack).max(0.0) / tau).exp();
            }
            if t > dur {
                env *= (1.0 - (t - dur) / release).max(0.0);
            }
            let idx = phase as usize;
            let frac = (phase - idx as f64) as f32;
            let v = self.table[idx] + (self.table[idx + 1] - self.table[idx]) * frac;
            *out += amp * env as f32 * v;
            phase += inc;
            if phase >= TABLE_LEN as f64 {
                phase -= TABLE_LEN as f64;
            }
        }
    }
}

const MAJOR: [i32; 7] = [0, 2, 4, 5, 7, 9, 11];
const MINOR: [i32; 7] = [0, 2, 3, 5, 7, 8, 10];

/// Renders one project.
pub fn synth_project(id: &str, cfg: &SynthConfig, seed: u64) -> Result<Project> {
    let mut rng = rng_from_seed(seed);
    let style = &cfg.style;
    let sr = cfg.sample_rate as f64;
    let len = (cfg.seconds * sr).round() as usize;
    let table = wavetable(&style.harmonics);

    let root = 40 + rng.random_range(0..12) + style.transpose;
    let scale = if rng.random::<bool>() { MAJOR } else { MINOR };
    let bpm = rng.random_range(style.tempo_bpm.0..=style.tempo_bpm.1);
    let beat = 60.0 / bpm;
    let bar = 4.0 * beat;
    let degrees: Vec<usize> = {
        let mut prog = vec![0usize];
        for _ in 0..3 {
            prog.push(*[1usize, 2, 3, 4, 5].choose(&mut rng).expect("non-empty"));
        }
        prog
    };
    let chord = |degree: usize| -> [i32; 3] {
        let tone = |step: usize| {
            let octave = ((degree + step) / 7) as i32;
            scale[(degree + step) % 7] + 12 * octave
        };
        [tone(0), tone(2), tone(4)]
    };
    let n_bars = (cfg.seconds / bar).ceil() as usize + 1;
    let decay = style.decay_seconds;

    let mut stems = Vec::with_capacity(4);
    for name in STEM_NAMES {
        let mut r = Renderer {
            table: &table,
            sr,
            buf: vec![0.0; len],
        };
        for b in 0..n_bars {
            let t0 = b as f64 * bar;
            let c = chord(degrees[b % degrees.len()]);
            match name {
                "bass" => {
                    for k in 0..4 {
                        let note = root - 12 + c[0] + if k == 2 { c[2] - c[0] } else { 0 };
                        r.note(note, t0 + k as f64 * beat, beat * 0.9, 0.22, Some(decay * 1.5));
                    }
                }
                "pad" => {
                    for &n in &c {
                        r.note(root + 12 + n, t0, bar, 0.07, None);
                    }
                }
                "arp" => {
                    for k in 0..8 {
                        let n = c[k % 3] + if k >= 4 { 12 } else { 0 };
                        r.note(root + 24 + n, t0 + k as f64 * beat / 2.0, beat / 2.0, 0.12, Some(decay));
                    }
                }
                _ => {
                    // Lead sits out some bars.
                    if rng.random::<f64>() < 0.25 {
                        continue;
                    }
                    let mut t = t0;
                    while t < t0 + bar - 1e-9 {
                        let dur = if rng.random::<bool>() { beat } else { beat / 2.0 };
                        let degree = degrees[b % degrees.len()] + [0usize, 2, 4, 1, 3].choose(&mut rng).copied().unwrap_or(0);
                        let n = scale[degree % 7] + 12 * (degree / 7) as i32;
                        r.note(root + 24 + n, t, dur * 0.95, 0.15, Some(decay * 2.0));
                        t += dur;
                    }
                }
            }
        }
        stems.push((name.to_string(), r.buf));
    }
    Project::new(id, cfg.sample_rate, stems)
}

/// Renders `cfg.n_projects` projects named `<style>_<index>`.
pub fn synth_collection(cfg: &SynthConfig, seed: u64) -> Result<Vec<Project>> {
    use rayon::prelude::*;
    (0..cfg.n_projects)
        .into_par_iter()
        .map(|i| {
            let id = format!("{}_{i:03}", cfg.style.name);
            synth_project(&id, cfg, seed!(seed, cfg.style.name.as_str(), i))
        })
        .collect()
}

/// Writes projects as `dir/<project>/<stem>.wav` (32-bit float).
pub fn write_collection(dir: &Path, projects: &[Project]) -> Result<()> {
    for p in projects {
        let pdir = dir.join(&p.id);
        fs::create_dir_all(&pdir).map_err(|e| Error::io(format!("creating {}", pdir.display()), e))?;
        for s in &p.stems {
            let w = AudioWindow::new(s.samples.clone(), p.sample_rate);
            write_wav_mono(&pdir.join(format!("{}.wav", s.name)), &w)?;
        }
    }
    Ok(())
}
