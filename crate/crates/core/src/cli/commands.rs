use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::json;
use sha2::{Digest, Sha256};

use super::{EmbedArgs, ExpArgs, Output, PairsArgs, ScoreArgs, SynthArgs, CACHE_DIR_ENV};
use crate::adherence::{adherence_score, derangement};
use crate::audio::MixPolicy;
use crate::dataset::{
    eligible_windows, load_collection, sample_pairs, Manifest, PairSet, SamplingPolicy, WindowConfig, MANIFEST_FILE,
};
use crate::embedding::{
    read_embeddings, write_embeddings, BuiltinEmbedder, CachedEmbedder, EmbeddingMatrix, BUILTIN_BACKEND,
    KNOWN_BACKENDS,
};
use crate::error::{Error, Result};
use crate::fusion::{fuse_pairs, FusionMethod};
use crate::harness::{self, EvalReport, RunConfig};
use crate::metrics::Metric;
use crate::projection::{Projection, ProjectionKind};
use crate::rng::rng_from_seed;
use crate::seed;
use crate::synth::{synth_collection, write_collection, Style, SynthConfig};

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(value)?)
}

pub(super) fn pairs(a: &PairsArgs) -> Result<Output> {
    let cfg = WindowConfig {
        window_seconds: a.window_seconds,
        hop_seconds: a.hop_seconds,
        ..WindowConfig::default()
    };
    let mut projects = Vec::new();
    let mut counts = Vec::new();
    for dir in &a.collections {
        if !dir.is_dir() {
            return Err(Error::io(
                format!("collection {}", dir.display()),
                std::io::Error::new(std::io::ErrorKind::NotFound, "no such directory"),
            ));
        }
        let loaded = load_collection(dir)?;
        counts.push(json!({
            "collection": dir.display().to_string(),
            "projects": loaded.len(),
            "eligible_windows": eligible_windows(&loaded, &cfg).len(),
        }));
        projects.extend(loaded);
    }
    let policy = if a.allow_replacement {
        SamplingPolicy::AllowReplacement
    } else {
        SamplingPolicy::Strict
    };
    let set = sample_pairs(&projects, a.n_windows, a.seed, policy, &cfg)?;
    set.save(&a.out)?;

    let mut text = String::new();
    for c in &counts {
        let _ = writeln!(
            text,
            "{}: {} projects, {} eligible windows",
            c["collection"].as_str().unwrap_or_default(),
            c["projects"],
            c["eligible_windows"]
        );
    }
    let _ = writeln!(text, "wrote {} pairs to {}", set.len(), a.out.display());
    let body = json!({
        "collections": counts,
        "pairs": set.len(),
        "manifest": a.out.join(MANIFEST_FILE).display().to_string(),
    });
    Ok(Output {
        text,
        json: to_json(&body)?,
    })
}

enum Backend {
    Builtin,
    External(PathBuf),
}

fn parse_backend(s: &str) -> Result<Backend> {
    if s == "builtin" || s == BUILTIN_BACKEND {
        return Ok(Backend::Builtin);
    }
    if let Some(path) = s.strip_prefix("external:") {
        if path.is_empty() {
            return Err(Error::Config("external backend needs a path: external:<file>".into()));
        }
        return Ok(Backend::External(PathBuf::from(path)));
    }
    if KNOWN_BACKENDS.iter().any(|(id, _)| *id == s) {
        return Err(Error::Config(format!(
            "backend `{s}` is computed by the external extractor; pass --backend external:<file>"
        )));
    }
    Err(Error::Config(format!("unknown backend `{s}` (expected builtin or external:<file>)")))
}

/// Backend id stored in fused embedding files, e.g. `builtin-logmel+conc`.
pub(crate) fn fused_id(backend: &str, fusion: FusionMethod) -> String {
    format!("{backend}+{fusion}")
}

fn cache_dir(pairs: &Path) -> PathBuf {
    match std::env::var_os(CACHE_DIR_ENV) {
        Some(dir) if !dir.is_empty() => PathBuf::from(dir),
        _ => pairs.join("cache"),
    }
}

/// Content hash of a pair set directory together with what is computed on it.
fn cache_key(pairs: &Path, manifest: &Manifest, backend: &str, fusion: FusionMethod) -> Result<String> {
    let mut h = Sha256::new();
    h.update(backend.as_bytes());
    h.update([0]);
    h.update(fusion.as_str().as_bytes());
    h.update([0]);
    let read = |rel: &Path| fs::read(rel).map_err(|e| Error::io(format!("reading {}", rel.display()), e));
    h.update(read(&pairs.join(MANIFEST_FILE))?);
    for e in &manifest.pairs {
        h.update(read(&pairs.join(&e.prompt_file))?);
        h.update(read(&pairs.join(&e.stem_file))?);
    }
    Ok(h.finalize().iter().map(|b| format!("{b:02x}")).collect())
}

/// Writes via a temporary file and rename so readers never see a partial file.
fn write_atomic(m: &EmbeddingMatrix, path: &Path) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(format!("creating {}", parent.display()), e))?;
    }
    let tmp = path.with_extension("aemb.tmp");
    write_embeddings(m, &tmp)?;
    fs::rename(&tmp, path).map_err(|e| Error::io(format!("renaming {}", tmp.display()), e))
}

pub(super) fn embed(a: &EmbedArgs) -> Result<Output> {
    let fusion: FusionMethod = a.fusion.parse()?;
    let manifest = Manifest::load(&a.pairs.join(MANIFEST_FILE))?;
    let (matrix, source) = match parse_backend(&a.backend)? {
        Backend::External(path) => {
            if fusion != FusionMethod::Mix {
                return Err(Error::Config(
                    "external embeddings hold one row per mixed window; only --fusion mix applies".into(),
                ));
            }
            let m = read_embeddings(&path)?;
            if m.rows() != manifest.pairs.len() {
                return Err(Error::RowManifestMismatch {
                    rows: m.rows(),
                    pairs: manifest.pairs.len(),
                });
            }
            let backend = m.backend_id().split('+').next().unwrap_or_default().to_string();
            if let Some((_, dim)) = KNOWN_BACKENDS.iter().find(|(id, _)| *id == backend) {
                if *dim != m.cols() {
                    return Err(Error::Truncated(format!(
                        "backend `{backend}` has {dim} columns, file has {}",
                        m.cols()
                    )));
                }
            }
            let id = fused_id(&backend, fusion);
            (m.with_backend_id(id), format!("external {}", path.display()))
        }
        Backend::Builtin => {
            let key = cache_key(&a.pairs, &manifest, BUILTIN_BACKEND, fusion)?;
            let cached = cache_dir(&a.pairs).join(format!("{key}.aemb"));
            if cached.is_file() {
                (read_embeddings(&cached)?, format!("cache {}", cached.display()))
            } else {
                let set = PairSet::load(&a.pairs)?;
                let builtin = BuiltinEmbedder::new();
                let embedder = CachedEmbedder::new(&builtin);
                let m = fuse_pairs(fusion, &set, &embedder, MixPolicy::default())?
                    .with_backend_id(fused_id(BUILTIN_BACKEND, fusion));
                write_atomic(&m, &cached)?;
                (m, "computed".to_string())
            }
        }
    };
    write_atomic(&matrix, &a.out)?;
    let body = json!({
        "out": a.out.display().to_string(),
        "rows": matrix.rows(),
        "cols": matrix.cols(),
        "backend_id": matrix.backend_id(),
        "source": source,
    });
    Ok(Output {
        text: format!(
            "wrote {} x {} embeddings ({}) to {} [{}]",
            matrix.rows(),
            matrix.cols(),
            matrix.backend_id(),
            a.out.display(),
            source
        ),
        json: to_json(&body)?,
    })
}

/// Non-matching copy of a CONC matrix: row i keeps its prompt half and takes
/// the stem half of row `perm[i]`.
fn derange_concat(m: &EmbeddingMatrix, seed: u64) -> Result<EmbeddingMatrix> {
    let half = m.cols() / 2;
    let perm = derangement(m.rows(), &mut rng_from_seed(seed))?;
    let mut data = Vec::with_capacity(m.data().len());
    for (i, &src) in perm.iter().enumerate() {
        data.extend_from_slice(&m.row(i)[..half]);
        data.extend_from_slice(&m.row(src)[half..]);
    }
    EmbeddingMatrix::new(m.rows(), m.cols(), data, m.backend_id())
}

pub(super) fn score(a: &ScoreArgs) -> Result<Output> {
    let metric: Metric = a.metric.parse()?;
    let kind: ProjectionKind = a.projection.parse()?;
    let reference = read_embeddings(&a.reference_emb)?;
    let candidate = read_embeddings(&a.candidate_emb)?;
    let (nonmatching, derangement_seed) = match &a.nonmatching_emb {
        Some(path) => (read_embeddings(path)?, None),
        None => {
            let conc = reference.backend_id().ends_with("+conc") && reference.cols() % 2 == 0;
            if !conc {
                return Err(Error::Config(
                    "--nonmatching-emb is required unless the reference embeddings are CONC-fused".into(),
                ));
            }
            let s = seed!(a.seed, "derangement");
            (derange_concat(&reference, s)?, Some(s))
        }
    };
    let projection = Projection::fit(&reference, kind)?;
    let result = adherence_score(
        metric,
        &projection.apply(&reference)?,
        &projection.apply(&nonmatching)?,
        &projection.apply(&candidate)?,
    )?;
    let body = json!({
        "score": result.value,
        "d_matching": result.d_matching,
        "d_nonmatching": result.d_nonmatching,
        "metric": metric,
        "projection": kind,
        "seeds": { "master": a.seed, "derangement": derangement_seed },
    });
    let json = to_json(&body)?;
    // The score record is machine-readable either way.
    Ok(Output { text: json.clone(), json })
}

fn summarize(report: &EvalReport, out: Option<&Path>) -> String {
    let mut text = String::new();
    let _ = writeln!(
        text,
        "experiment {}: {} records in {:.1} s",
        report.experiment,
        report.records.len(),
        report.meta.wall_seconds
    );
    for t in &report.sign_tests {
        let p = t.test.map(|t| format!("{:.3e}", t.p_value)).unwrap_or_else(|| "n/a".into());
        let _ = writeln!(
            text,
            "  {} {} {} {} {:?} {}: n={} p={} {}",
            t.config.embedder,
            t.config.fusion,
            t.config.projection,
            t.config.metric,
            t.grouping,
            t.comparison,
            t.n_pairs,
            p,
            "*".repeat(t.stars as usize)
        );
    }
    for (k, v) in harness::median_cles(report) {
        let _ = writeln!(
            text,
            "  CLES {} {} {} {} {:?} {}: {:.3}",
            k.0.embedder, k.0.fusion, k.0.projection, k.0.metric, k.1, k.2, v
        );
    }
    if let Some(dir) = out {
        let _ = writeln!(text, "wrote {}", dir.display());
    }
    text
}

pub(super) fn experiment(n: u8, a: &ExpArgs) -> Result<Output> {
    let mut cfg = RunConfig::load(&a.config)?;
    if let Some(out) = &a.out {
        cfg.output_dir = Some(out.clone());
    }
    let report = match n {
        1 => harness::run_experiment1(&cfg)?,
        2 => harness::run_experiment2(&cfg)?,
        _ => harness::run_experiment3(&cfg)?,
    };
    let body = json!({
        "experiment": report.experiment,
        "records": report.records.len(),
        "output_dir": cfg.output_dir.as_ref().map(|p| p.display().to_string()),
        "sign_tests": report.sign_tests,
        "cles": report.cles,
        "notes": report.notes,
    });
    Ok(Output {
        text: summarize(&report, cfg.output_dir.as_deref()),
        json: to_json(&body)?,
    })
}

pub(super) fn synth(a: &SynthArgs) -> Result<Output> {
    let mut cfg = SynthConfig::new(Style::by_name(&a.style)?);
    cfg.n_projects = a.n_projects;
    cfg.seconds = a.seconds;
    if cfg.n_projects == 0 || !(cfg.seconds > 0.0) {
        return Err(Error::Config("--n-projects and --seconds must be positive".into()));
    }
    let projects = synth_collection(&cfg, a.seed)?;
    write_collection(&a.out, &projects)?;
    let body = json!({
        "out": a.out.display().to_string(),
        "style": cfg.style.name,
        "projects": projects.len(),
        "seconds": cfg.seconds,
    });
    Ok(Output {
        text: format!("wrote {} {} projects to {}", projects.len(), cfg.style.name, a.out.display()),
        json: to_json(&body)?,
    })
}
