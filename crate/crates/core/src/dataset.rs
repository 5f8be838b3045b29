//! Multitrack projects, window sampling and pair sets.
//!
//! A collection is a directory of projects, each a directory of stem WAV
//! files. Pairs are drawn from a grid of fixed-length windows at integer hops;
//! a window is eligible when at least two stems are non-silent at its center.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use log::{info, warn};
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::audio::{self, AudioWindow, MixPolicy, PIPELINE_SAMPLE_RATE};
use crate::error::{Error, Result};
use crate::rng::rng_from_seed;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone)]
pub struct Stem {
    pub name: String,
    pub samples: Arc<[f32]>,
}

/// Named stems of equal length at one sample rate.
#[derive(Debug, Clone)]
pub struct Project {
    pub id: String,
    pub sample_rate: u32,
    pub stems: Vec<Stem>,
}

impl Project {
    /// Builds a project, zero-padding stems at the tail to a common length.
    pub fn new(id: impl Into<String>, sample_rate: u32, stems: Vec<(String, Vec<f32>)>) -> Result<Self> {
        let id = id.into();
        if stems.is_empty() {
            return Err(Error::InvalidArgument(format!("project `{id}` has no stems")));
        }
        let len = stems.iter().map(|(_, s)| s.len()).max().unwrap_or(0);
        let stems = stems
            .into_iter()
            .map(|(name, mut samples)| {
                samples.resize(len, 0.0);
                Stem {
                    name,
                    samples: samples.into(),
                }
            })
            .collect();
        Ok(Self {
            id,
            sample_rate,
            stems,
        })
    }

    pub fn len(&self) -> usize {
        self.stems.first().map_or(0, |s| s.samples.len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn stem_index(&self, name: &str) -> Option<usize> {
        self.stems.iter().position(|s| s.name == name)
    }

    /// Window of stem `stem` starting at sample `start`, sharing the stem buffer.
    pub fn window(&self, stem: usize, start: usize, len: usize) -> AudioWindow {
        AudioWindow::view(self.stems[stem].samples.clone(), start, len, self.sample_rate)
    }
}

/// Loads stem files into one project at the pipeline rate.
pub fn load_project(id: impl Into<String>, paths: &[PathBuf]) -> Result<Project> {
    let id = id.into();
    if paths.is_empty() {
        return Err(Error::InvalidArgument(format!("project `{id}` has no audio files")));
    }
    let stems = paths
        .par_iter()
        .map(|path| {
            let (samples, sr) = audio::read_wav_mono(path)?;
            let samples = if sr == PIPELINE_SAMPLE_RATE {
                samples
            } else {
                audio::resample(&samples, PIPELINE_SAMPLE_RATE as f64 / sr as f64)
            };
            let name = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| path.display().to_string());
            Ok((name, samples))
        })
        .collect::<Result<Vec<_>>>()?;
    Project::new(id, PIPELINE_SAMPLE_RATE, stems)
}

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(format!("reading {}", dir.display()), e))?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()
        .map_err(|e| Error::io(format!("reading {}", dir.display()), e))?;
    entries.sort();
    Ok(entries)
}

/// Loads every project under `dir` (`dir/<project>/*.wav`), sorted by name.
pub fn load_collection(dir: &Path) -> Result<Vec<Project>> {
    let mut projects = Vec::new();
    for entry in sorted_entries(dir)? {
        if !entry.is_dir() {
            continue;
        }
        let wavs: Vec<PathBuf> = sorted_entries(&entry)?
            .into_iter()
            .filter(|p| {
                p.extension()
                    .is_some_and(|e| e.eq_ignore_ascii_case("wav"))
            })
            .collect();
        if wavs.is_empty() {
            continue;
        }
        let id = entry
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        projects.push(load_project(id, &wavs)?);
    }
    if projects.is_empty() {
        return Err(Error::Config(format!("no projects with WAV stems under {}", dir.display())));
    }
    info!("loaded {} projects from {}", projects.len(), dir.display());
    Ok(projects)
}

/// Frame-RMS silence rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SilenceConfig {
    pub threshold_db: f64,
    pub frame_seconds: f64,
}

impl Default for SilenceConfig {
    fn default() -> Self {
        Self {
            threshold_db: -60.0,
            frame_seconds: 0.1,
        }
    }
}

impl SilenceConfig {
    pub fn threshold_amplitude(&self) -> f64 {
        10f64.powf(self.threshold_db / 20.0)
    }
}

/// True iff the RMS of the frame centered at `center_time` is below the
/// threshold. Samples outside the signal count as zeros.
pub fn is_silent(samples: &[f32], sample_rate: u32, center_time: f64, cfg: &SilenceConfig) -> bool {
    let frame = ((cfg.frame_seconds * sample_rate as f64).round() as i64).max(1);
    let center = (center_time * sample_rate as f64).round() as i64;
    let start = center - frame / 2;
    let mut energy = 0.0f64;
    for i in start..start + frame {
        if i >= 0 && (i as usize) < samples.len() {
            let x = samples[i as usize] as f64;
            energy += x * x;
        }
    }
    (energy / frame as f64).sqrt() < cfg.threshold_amplitude()
}

/// Window length, hop and silence rule for pair sampling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WindowConfig {
    pub window_seconds: f64,
    pub hop_seconds: f64,
    pub silence: SilenceConfig,
    pub mix: MixPolicy,
}

impl Default for WindowConfig {
    fn default() -> Self {
        Self {
            window_seconds: 5.0,
            hop_seconds: 1.0,
            silence: SilenceConfig::default(),
            mix: MixPolicy::default(),
        }
    }
}

/// One grid position with at least two non-silent stems.
#[derive(Debug, Clone, PartialEq)]
pub struct EligibleWindow {
    pub project: usize,
    pub offset_seconds: f64,
    pub start: usize,
    /// Indices of stems that are non-silent at the window center.
    pub active: Vec<usize>,
}

/// All eligible grid positions, in project then offset order.
pub fn eligible_windows(projects: &[Project], cfg: &WindowConfig) -> Vec<EligibleWindow> {
    let mut out = Vec::new();
    for (pi, project) in projects.iter().enumerate() {
        let sr = project.sample_rate;
        let win = audio::window_len(cfg.window_seconds, sr);
        let mut k = 0usize;
        loop {
            let offset = k as f64 * cfg.hop_seconds;
            let start = (offset * sr as f64).round() as usize;
            if start + win > project.len() {
                break;
            }
            let center = offset + cfg.window_seconds / 2.0;
            let active: Vec<usize> = project
                .stems
                .iter()
                .enumerate()
                .filter(|(_, s)| !is_silent(&s.samples, sr, center, &cfg.silence))
                .map(|(i, _)| i)
                .collect();
            if active.len() >= 2 {
                out.push(EligibleWindow {
                    project: pi,
                    offset_seconds: offset,
                    start,
                    active,
                });
            }
            k += 1;
        }
    }
    out
}

/// What to do when more windows are requested than the grid holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingPolicy {
    /// Fail with the shortfall.
    #[default]
    Strict,
    /// Exhaust the grid, then draw the rest with replacement.
    AllowReplacement,
}

/// Non-matching conditions and the identity control.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    None,
    Random,
    Pitch,
    Time,
    PitchTime,
}

impl Condition {
    pub const ALL: [Condition; 5] = [
        Condition::None,
        Condition::Random,
        Condition::Pitch,
        Condition::Time,
        Condition::PitchTime,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Condition::None => "none",
            Condition::Random => "random",
            Condition::Pitch => "pitch",
            Condition::Time => "time",
            Condition::PitchTime => "pitch_time",
        }
    }
}

impl std::fmt::Display for Condition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Condition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Condition::ALL
            .into_iter()
            .find(|c| c.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown condition `{s}` (expected random|pitch|time|pitch_time|none)"
                ))
            })
    }
}

/// Record of a perturbation applied to a pair's stem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Perturbation {
    pub condition: Condition,
    /// Pair whose stem was substituted (random pairing).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stem_source: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub semitones: Option<i32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shift_seconds: Option<f64>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub project: String,
    pub offset_seconds: f64,
    pub target_stem: String,
    pub prompt_stems: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub perturbation: Option<Perturbation>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Pair {
    pub prompt: AudioWindow,
    pub stem: AudioWindow,
    pub provenance: Provenance,
}

/// An ordered list of prompt/stem window pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct PairSet {
    pub pairs: Vec<Pair>,
    pub window_seconds: f64,
    pub sample_rate: u32,
}

impl PairSet {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn window_len(&self) -> usize {
        audio::window_len(self.window_seconds, self.sample_rate)
    }

    pub fn prompts(&self) -> impl Iterator<Item = &AudioWindow> {
        self.pairs.iter().map(|p| &p.prompt)
    }

    pub fn stems(&self) -> impl Iterator<Item = &AudioWindow> {
        self.pairs.iter().map(|p| &p.stem)
    }

    pub fn manifest(&self) -> Manifest {
        Manifest {
            window_seconds: self.window_seconds,
            sample_rate: self.sample_rate,
            pairs: self
                .pairs
                .iter()
                .enumerate()
                .map(|(i, p)| ManifestEntry {
                    index: i,
                    prompt_file: format!("windows/{i:06}_prompt.wav"),
                    stem_file: format!("windows/{i:06}_stem.wav"),
                    mix_file: format!("windows/{i:06}_mix.wav"),
                    provenance: p.provenance.clone(),
                })
                .collect(),
        }
    }

    /// Writes `manifest.json` and the window audio under `dir`. Besides the
    /// prompt and stem, each pair's mix is written so that external extractors
    /// can embed exactly what MIX fusion sees.
    pub fn save(&self, dir: &Path) -> Result<()> {
        let windows = dir.join("windows");
        fs::create_dir_all(&windows).map_err(|e| Error::io(format!("creating {}", windows.display()), e))?;
        let manifest = self.manifest();
        self.pairs
            .par_iter()
            .zip(manifest.pairs.par_iter())
            .try_for_each(|(pair, entry)| {
                audio::write_wav_mono(&dir.join(&entry.prompt_file), &pair.prompt)?;
                audio::write_wav_mono(&dir.join(&entry.stem_file), &pair.stem)?;
                let mix = audio::mix(&[&pair.prompt, &pair.stem], MixPolicy::default())?;
                audio::write_wav_mono(&dir.join(&entry.mix_file), &mix)
            })?;
        manifest.save(&dir.join(MANIFEST_FILE))
    }

    /// Reads a pair set written by [`PairSet::save`].
    pub fn load(dir: &Path) -> Result<Self> {
        let manifest = Manifest::load(&dir.join(MANIFEST_FILE))?;
        let expected = audio::window_len(manifest.window_seconds, manifest.sample_rate);
        let read = |rel: &str| -> Result<AudioWindow> {
            let path = dir.join(rel);
            let (samples, sr) = audio::read_wav_mono(&path)?;
            if sr != manifest.sample_rate {
                return Err(Error::SampleRateMismatch {
                    expected: manifest.sample_rate,
                    actual: sr,
                });
            }
            if samples.len() != expected {
                return Err(Error::LengthMismatch(expected, samples.len()));
            }
            Ok(AudioWindow::new(samples, sr))
        };
        let pairs = manifest
            .pairs
            .par_iter()
            .map(|e| {
                Ok(Pair {
                    prompt: read(&e.prompt_file)?,
                    stem: read(&e.stem_file)?,
                    provenance: e.provenance.clone(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            pairs,
            window_seconds: manifest.window_seconds,
            sample_rate: manifest.sample_rate,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub index: usize,
    pub prompt_file: String,
    pub stem_file: String,
    pub mix_file: String,
    pub provenance: Provenance,
}

/// JSON description of a saved pair set. Row `i` of any embedding matrix
/// derived from the set corresponds to entry `i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub window_seconds: f64,
    pub sample_rate: u32,
    pub pairs: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(path, text).map_err(|e| Error::io(format!("writing {}", path.display()), e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Draws `n_windows` prompt/stem pairs.
///
/// Windows are drawn uniformly without replacement from the eligible grid.
/// For each, the target stem is uniform over the non-silent stems and the
/// prompt mixes a uniform non-empty subset of the other non-silent stems.
pub fn sample_pairs(
    projects: &[Project],
    n_windows: usize,
    seed: u64,
    policy: SamplingPolicy,
    cfg: &WindowConfig,
) -> Result<PairSet> {
    if n_windows == 0 {
        return Err(Error::InvalidArgument("n_windows must be at least 1".into()));
    }
    let sample_rate = match projects.first() {
        Some(p) => p.sample_rate,
        None => return Err(Error::NoEligibleWindows),
    };
    if let Some(p) = projects.iter().find(|p| p.sample_rate != sample_rate) {
        return Err(Error::SampleRateMismatch {
            expected: sample_rate,
            actual: p.sample_rate,
        });
    }
    let grid = eligible_windows(projects, cfg);
    if grid.is_empty() {
        return Err(Error::NoEligibleWindows);
    }
    if n_windows > grid.len() && policy == SamplingPolicy::Strict {
        return Err(Error::InsufficientWindows {
            requested: n_windows,
            eligible: grid.len(),
        });
    }

    let mut rng = rng_from_seed(seed);
    let mut order: Vec<usize> = (0..grid.len()).collect();
    order.shuffle(&mut rng);
    order.truncate(n_windows);
    if n_windows > grid.len() {
        warn!(
            "{} windows requested but only {} eligible; drawing {} with replacement",
            n_windows,
            grid.len(),
            n_windows - grid.len()
        );
        while order.len() < n_windows {
            order.push(rng.random_range(0..grid.len()));
        }
    }

    let win = audio::window_len(cfg.window_seconds, sample_rate);
    let mut pairs = Vec::with_capacity(n_windows);
    for gi in order {
        let cell = &grid[gi];
        let project = &projects[cell.project];
        let target = cell.active[rng.random_range(0..cell.active.len())];
        let others: Vec<usize> = cell.active.iter().copied().filter(|&s| s != target).collect();
        // Uniform non-empty subset as a bitmask over `others`.
        let mask = rng.random_range(1u64..(1u64 << others.len()));
        let members: Vec<usize> = others
            .iter()
            .enumerate()
            .filter(|(bit, _)| mask >> bit & 1 == 1)
            .map(|(_, &s)| s)
            .collect();
        let windows: Vec<AudioWindow> = members.iter().map(|&s| project.window(s, cell.start, win)).collect();
        let prompt = audio::mix(&windows.iter().collect::<Vec<_>>(), cfg.mix)?;
        pairs.push(Pair {
            prompt,
            stem: project.window(target, cell.start, win),
            provenance: Provenance {
                project: project.id.clone(),
                offset_seconds: cell.offset_seconds,
                target_stem: project.stems[target].name.clone(),
                prompt_stems: members.iter().map(|&s| project.stems[s].name.clone()).collect(),
                perturbation: None,
            },
        });
    }
    Ok(PairSet {
        pairs,
        window_seconds: cfg.window_seconds,
        sample_rate,
    })
}

/// Samplewise sum of stem windows, peak-normalized only above full scale.
pub fn mix_stems(stems: &[&AudioWindow]) -> Result<AudioWindow> {
    audio::mix(stems, MixPolicy::default())
}

/// Partitions projects into reference and candidate sides.
///
/// Projects are shuffled under `seed`; the first `round(n * reference_fraction)`
/// (at least one, at most n - 1) become the reference side.
pub fn split_projects(
    projects: Vec<Project>,
    reference_fraction: f64,
    seed: u64,
) -> Result<(Vec<Project>, Vec<Project>)> {
    if projects.len() < 2 {
        return Err(Error::TooFew {
            needed: 2,
            actual: projects.len(),
        });
    }
    if !(reference_fraction > 0.0 && reference_fraction < 1.0) {
        return Err(Error::Config(format!(
            "reference fraction must be in (0, 1), got {reference_fraction}"
        )));
    }
    let n = projects.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng_from_seed(seed));
    let n_ref = ((n as f64 * reference_fraction).round() as usize).clamp(1, n - 1);
    let reference: BTreeSet<usize> = order[..n_ref].iter().copied().collect();
    let (mut r, mut c) = (Vec::new(), Vec::new());
    for (i, p) in projects.into_iter().enumerate() {
        if reference.contains(&i) {
            r.push(p);
        } else {
            c.push(p);
        }
    }
    Ok((r, c))
}

/// Partitions projects by explicit id lists.
pub fn split_by_ids(
    projects: Vec<Project>,
    reference: &[String],
    candidate: &[String],
) -> Result<(Vec<Project>, Vec<Project>)> {
    if let Some(id) = reference.iter().find(|id| candidate.contains(id)) {
        return Err(Error::Config(format!("project `{id}` is on both sides of the split")));
    }
    let (mut r, mut c) = (Vec::new(), Vec::new());
    for p in projects {
        if reference.contains(&p.id) {
            r.push(p);
        } else if candidate.contains(&p.id) {
            c.push(p);
        }
    }
    for (side, ids, got) in [("reference", reference, &r), ("candidate", candidate, &c)] {
        if got.len() != ids.len() {
            return Err(Error::Config(format!(
                "{side} split names {} projects but {} were found",
                ids.len(),
                got.len()
            )));
        }
    }
    Ok((r, c))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tone(freq: f64, secs: f64) -> Vec<f32> {
        let n = (secs * 16_000.0) as usize;
        (0..n)
            .map(|i| (0.3 * (2.0 * std::f64::consts::PI * freq * i as f64 / 16_000.0).sin()) as f32)
            .collect()
    }

    fn two_stem_project() -> Project {
        Project::new(
            "p",
            16_000,
            vec![("a".into(), tone(220.0, 10.0)), ("b".into(), tone(330.0, 10.0))],
        )
        .unwrap()
    }

    #[test]
    fn pads_to_longest() {
        let p = Project::new("p", 16_000, vec![("a".into(), vec![1.0; 10]), ("b".into(), vec![1.0; 8])]).unwrap();
        assert_eq!(p.len(), 10);
        assert_eq!(&p.stems[1].samples[8..], &[0.0, 0.0]);
    }

    #[test]
    fn silence_rule() {
        let cfg = SilenceConfig::default();
        assert!(is_silent(&vec![0.0; 16_000], 16_000, 0.5, &cfg));
        assert!(!is_silent(&tone(440.0, 1.0), 16_000, 0.5, &cfg));
        // Frame partly outside the signal is padded with zeros.
        assert!(is_silent(&[], 16_000, 0.0, &cfg));
    }

    #[test]
    fn grid_size() {
        let p = two_stem_project();
        let g = eligible_windows(&[p], &WindowConfig::default());
        // 10 s, 5 s windows, 1 s hop: offsets 0..=5.
        assert_eq!(g.len(), 6);
        assert_eq!(g[5].offset_seconds, 5.0);
    }

    #[test]
    fn two_stems_force_pairing() {
        let p = two_stem_project();
        let set = sample_pairs(&[p], 6, 3, SamplingPolicy::Strict, &WindowConfig::default()).unwrap();
        for pair in &set.pairs {
            let prov = &pair.provenance;
            assert_eq!(prov.prompt_stems.len(), 1);
            assert_ne!(prov.prompt_stems[0], prov.target_stem);
        }
    }

    #[test]
    fn strict_policy_reports_shortfall() {
        let p = two_stem_project();
        let err = sample_pairs(&[p], 9, 3, SamplingPolicy::Strict, &WindowConfig::default()).unwrap_err();
        assert!(matches!(err, Error::InsufficientWindows { requested: 9, eligible: 6 }));
        assert!(err.to_string().contains("shortfall 3"));
    }

    #[test]
    fn replacement_policy_fills_request() {
        let p = two_stem_project();
        let set = sample_pairs(&[p], 9, 3, SamplingPolicy::AllowReplacement, &WindowConfig::default()).unwrap();
        assert_eq!(set.len(), 9);
    }

    #[test]
    fn split_is_disjoint() {
        let projects: Vec<Project> = (0..7)
            .map(|i| Project::new(format!("p{i}"), 16_000, vec![("a".into(), vec![0.0; 4])]).unwrap())
            .collect();
        let (r, c) = split_projects(projects, 0.5, 1).unwrap();
        assert_eq!(r.len() + c.len(), 7);
        assert!(r.iter().all(|p| c.iter().all(|q| q.id != p.id)));
    }
}
