//! Experiment orchestration.
//!
//! Every collection is split by project into a reference and a candidate
//! side. Per run, the reference sets A_i, their non-matching copies A'_i and
//! the projections fitted on them are computed once. Each repeat then draws
//! fresh candidate sets B_j (and their perturbed variants) and evaluates them
//! against every reference for every configuration.

mod config;
mod report;

use std::collections::BTreeMap;
use std::time::Instant;

use log::{info, warn};

pub use config::{CollectionSpec, RunConfig, SplitSpec};
pub use report::{
    median, ClesEntry, ConfigKey, EvalReport, ExplainedVariance, Grouping, Record, RunMeta, SignTestSummary,
    CSV_HEADER,
};

use crate::adherence::{make_nonmatching, score_from_distances};
use crate::dataset::{load_collection, sample_pairs, split_by_ids, split_projects, Condition, PairSet, Project};
use crate::embedding::{BuiltinEmbedder, CachedEmbedder, Embedder, EmbeddingMatrix, BUILTIN_BACKEND};
use crate::error::{Error, Result};
use crate::fusion::{fuse_pairs, FusionMethod};
use crate::metrics::PreparedSet;
use crate::perturb::apply_condition;
use crate::projection::{Projection, ProjectionKind};
use crate::seed;

/// A named set of projects with an optional fixed split.
#[derive(Debug, Clone)]
pub struct Collection {
    pub name: String,
    pub projects: Vec<Project>,
    pub split: Option<SplitSpec>,
}

impl Collection {
    pub fn new(name: impl Into<String>, projects: Vec<Project>) -> Self {
        Self {
            name: name.into(),
            projects,
            split: None,
        }
    }
}

/// Loads every collection listed in `cfg`.
pub fn load_collections(cfg: &RunConfig) -> Result<Vec<Collection>> {
    cfg.collections
        .iter()
        .map(|spec| {
            if !spec.path.is_dir() {
                return Err(Error::Config(format!(
                    "collection `{}`: {} is not a directory",
                    spec.name,
                    spec.path.display()
                )));
            }
            Ok(Collection {
                name: spec.name.clone(),
                projects: load_collection(&spec.path)?,
                split: spec.split.clone(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    /// Distances of matching and non-matching candidates to the references.
    Distances,
    /// Adherence scores of matching and non-matching candidates.
    Scores,
    /// Adherence scores under each non-matching condition.
    Conditions,
}

impl Experiment {
    pub fn number(self) -> u8 {
        match self {
            Experiment::Distances => 1,
            Experiment::Scores => 2,
            Experiment::Conditions => 3,
        }
    }

    fn uses_nonmatching_reference(self) -> bool {
        self != Experiment::Distances
    }

    fn conditions(self, cfg: &RunConfig) -> Vec<Condition> {
        match self {
            Experiment::Conditions => {
                let mut c: Vec<Condition> = cfg.conditions.iter().copied().filter(|&c| c != Condition::None).collect();
                c.sort();
                c.dedup();
                c
            }
            _ => vec![Condition::Random],
        }
    }
}

pub fn run_experiment1(cfg: &RunConfig) -> Result<EvalReport> {
    run_from_disk(Experiment::Distances, cfg)
}

pub fn run_experiment2(cfg: &RunConfig) -> Result<EvalReport> {
    run_from_disk(Experiment::Scores, cfg)
}

pub fn run_experiment3(cfg: &RunConfig) -> Result<EvalReport> {
    run_from_disk(Experiment::Conditions, cfg)
}

pub fn run_experiment1_with(cfg: &RunConfig, collections: &[Collection]) -> Result<EvalReport> {
    run(Experiment::Distances, cfg, collections)
}

pub fn run_experiment2_with(cfg: &RunConfig, collections: &[Collection]) -> Result<EvalReport> {
    run(Experiment::Scores, cfg, collections)
}

pub fn run_experiment3_with(cfg: &RunConfig, collections: &[Collection]) -> Result<EvalReport> {
    run(Experiment::Conditions, cfg, collections)
}

fn run_from_disk(exp: Experiment, cfg: &RunConfig) -> Result<EvalReport> {
    cfg.validate(true)?;
    let collections = load_collections(cfg)?;
    let report = run(exp, cfg, &collections)?;
    if let Some(dir) = &cfg.output_dir {
        report.write(dir)?;
    }
    Ok(report)
}

struct Side {
    name: String,
    reference: Vec<Project>,
    candidate: Vec<Project>,
}

fn split_sides(cfg: &RunConfig, collections: &[Collection]) -> Result<Vec<Side>> {
    collections
        .iter()
        .map(|c| {
            let (reference, candidate) = match &c.split {
                Some(s) => split_by_ids(c.projects.clone(), &s.reference, &s.candidate)?,
                None => split_projects(
                    c.projects.clone(),
                    cfg.reference_fraction,
                    seed!(cfg.seed, "split", c.name.as_str()),
                )?,
            };
            Ok(Side {
                name: c.name.clone(),
                reference,
                candidate,
            })
        })
        .collect()
}

/// A fitted reference for one (collection, fusion, projection).
struct Reference {
    collection: usize,
    fusion: FusionMethod,
    projection: Projection,
    matching: PreparedSet,
    nonmatching: Vec<PreparedSet>,
    derangement_seed: Option<u64>,
}

fn embedder_for<'a>(fusion: FusionMethod, base: &'a BuiltinEmbedder, cached: &'a CachedEmbedder<'a>) -> &'a dyn Embedder {
    // Late fusion embeds prompts and stems separately, and those recur
    // across sets; the mix of early fusion rarely does.
    match fusion {
        FusionMethod::Mix => base,
        _ => cached,
    }
}

fn build_references(
    exp: Experiment,
    cfg: &RunConfig,
    sides: &[Side],
    base: &BuiltinEmbedder,
    cached: &CachedEmbedder<'_>,
    evr: &mut Vec<ExplainedVariance>,
) -> Result<Vec<Reference>> {
    let wcfg = cfg.window_config();
    let mut refs = Vec::new();
    for (ci, side) in sides.iter().enumerate() {
        let name = side.name.as_str();
        let a = sample_pairs(
            &side.reference,
            cfg.n_windows,
            seed!(cfg.seed, "reference", name),
            cfg.sampling_policy(),
            &wcfg,
        )?;
        let nm_sets: Vec<(u64, PairSet)> = if exp.uses_nonmatching_reference() {
            (0..cfg.n_derangements)
                .map(|k| {
                    let s = seed!(cfg.seed, "derangement", name, k);
                    Ok((s, make_nonmatching(&a, s)?))
                })
                .collect::<Result<_>>()?
        } else {
            Vec::new()
        };
        for &fusion in &cfg.fusions {
            let emb = embedder_for(fusion, base, cached);
            let a_emb = fuse_pairs(fusion, &a, emb, cfg.mix)?;
            let nm_embs: Vec<EmbeddingMatrix> = nm_sets
                .iter()
                .map(|(_, s)| fuse_pairs(fusion, s, emb, cfg.mix))
                .collect::<Result<_>>()?;
            for &kind in &cfg.projections {
                let projection = Projection::fit(&a_emb, kind)?;
                evr.push(ExplainedVariance {
                    collection: side.name.clone(),
                    embedder: BUILTIN_BACKEND.to_string(),
                    fusion,
                    projection: kind,
                    ratio: projection.explained_variance_ratio(),
                });
                let matching = PreparedSet::new(projection.apply(&a_emb)?);
                let nonmatching = nm_embs
                    .iter()
                    .map(|m| Ok(PreparedSet::new(projection.apply(m)?)))
                    .collect::<Result<_>>()?;
                refs.push(Reference {
                    collection: ci,
                    fusion,
                    projection,
                    matching,
                    nonmatching,
                    derangement_seed: nm_sets.first().map(|(s, _)| *s),
                });
            }
        }
        info!("reference set for `{name}` ready");
    }
    Ok(refs)
}

fn notes(exp: Experiment, cfg: &RunConfig) -> Vec<String> {
    let mut n = vec![
        format!(
            "mixes are summed at gain {} and scaled by 1/peak only when the peak exceeds 1 (peak_normalize = {})",
            cfg.mix.gain, cfg.mix.peak_normalize
        ),
        "MMD is the biased V-statistic with a cubic polynomial kernel, gamma = 1/d after projection".into(),
        "projections are fitted on each reference set and reused for every candidate set".into(),
        format!(
            "silence: RMS of a {} s frame below {} dBFS",
            cfg.silence.frame_seconds, cfg.silence.threshold_db
        ),
    ];
    if cfg.allow_replacement {
        n.push("windows are drawn with replacement once a grid is exhausted".into());
    }
    if exp == Experiment::Conditions {
        n.push(
            "pitch shifts use integer semitones (resample, then overlap-add time stretch); time shifts are circular"
                .into(),
        );
        n.push("CLES compares each condition's scores with the matching-set scores of the same cell across repeats".into());
    }
    if cfg.n_derangements > 1 {
        n.push(format!("scores average {} non-matching reference draws", cfg.n_derangements));
    }
    n
}

/// Runs an experiment on in-memory collections.
pub fn run(exp: Experiment, cfg: &RunConfig, collections: &[Collection]) -> Result<EvalReport> {
    let started = Instant::now();
    cfg.validate(false)?;
    if collections.is_empty() {
        return Err(Error::Config("no collections listed".into()));
    }
    let sides = split_sides(cfg, collections)?;
    let base = BuiltinEmbedder::new();
    let cached = CachedEmbedder::new(&base);
    let mut explained_variance = Vec::new();
    let refs = build_references(exp, cfg, &sides, &base, &cached, &mut explained_variance)?;
    let conditions = exp.conditions(cfg);
    let wcfg = cfg.window_config();

    let mut records = Vec::new();
    for repeat in 0..cfg.n_repeats {
        for (cj, side) in sides.iter().enumerate() {
            let name = side.name.as_str();
            let candidate_seed = seed!(cfg.seed, "candidate", name, repeat);
            let b = sample_pairs(&side.candidate, cfg.n_windows, candidate_seed, cfg.sampling_policy(), &wcfg)?;

            // Unprojected fused embeddings per (condition, fusion).
            let mut embedded: BTreeMap<(Condition, FusionMethod), EmbeddingMatrix> = BTreeMap::new();
            let mut condition_seeds: BTreeMap<Condition, u64> = BTreeMap::new();
            for &condition in std::iter::once(&Condition::None).chain(&conditions) {
                let set = if condition == Condition::None {
                    b.clone()
                } else {
                    let s = seed!(cfg.seed, "condition", condition.as_str(), name, repeat);
                    condition_seeds.insert(condition, s);
                    apply_condition(&b, condition, s)?
                };
                for &fusion in &cfg.fusions {
                    let emb = embedder_for(fusion, &base, &cached);
                    embedded.insert((condition, fusion), fuse_pairs(fusion, &set, emb, cfg.mix)?);
                }
            }

            for reference in &refs {
                let ref_name = &sides[reference.collection].name;
                for &condition in std::iter::once(&Condition::None).chain(&conditions) {
                    let y = PreparedSet::new(reference.projection.apply(&embedded[&(condition, reference.fusion)])?);
                    for &metric in &cfg.metrics {
                        let d_matching = reference.matching.distance_to(metric, &y)?;
                        let (d_nonmatching, score) = if reference.nonmatching.is_empty() {
                            (None, None)
                        } else {
                            let mut d_sum = 0.0;
                            let mut s_sum = Some(0.0);
                            for nm in &reference.nonmatching {
                                let d = nm.distance_to(metric, &y)?;
                                d_sum += d;
                                s_sum = match (s_sum, score_from_distances(d_matching, d)) {
                                    (Some(acc), Ok(s)) => Some(acc + s),
                                    (_, Err(Error::UndefinedScore)) => {
                                        warn!("undefined score for {ref_name} vs {name} ({condition}, {metric})");
                                        None
                                    }
                                    (_, Err(e)) => return Err(e),
                                    (None, _) => None,
                                };
                            }
                            let k = reference.nonmatching.len() as f64;
                            (Some(d_sum / k), s_sum.map(|s| s / k))
                        };
                        records.push(Record {
                            experiment: exp.number(),
                            repeat,
                            reference: ref_name.clone(),
                            candidate: side.name.clone(),
                            grouping: if reference.collection == cj {
                                Grouping::Within
                            } else {
                                Grouping::Between
                            },
                            embedder: BUILTIN_BACKEND.to_string(),
                            fusion: reference.fusion,
                            projection: reference.projection.kind(),
                            metric,
                            condition,
                            d_matching,
                            d_nonmatching,
                            score,
                            candidate_seed,
                            condition_seed: condition_seeds.get(&condition).copied(),
                            derangement_seed: reference.derangement_seed,
                        });
                    }
                }
            }
            info!("repeat {repeat}: candidate set `{name}` evaluated");
        }
    }

    let mut report = EvalReport {
        experiment: exp.number(),
        config: cfg.clone(),
        records,
        explained_variance,
        sign_tests: Vec::new(),
        cles: Vec::new(),
        notes: notes(exp, cfg),
        meta: RunMeta {
            version: env!("CARGO_PKG_VERSION").to_string(),
            wall_seconds: 0.0,
        },
    };
    report.sign_tests = match exp {
        Experiment::Distances => report::paired_sign_tests(&report, Condition::Random, "M_A(B') - M_A(B)", |m, o| {
            Some(o.d_matching - m.d_matching)
        }),
        Experiment::Scores => report::paired_sign_tests(&report, Condition::Random, "S(B) - S(B')", |m, o| {
            Some(m.score? - o.score?)
        }),
        Experiment::Conditions => conditions
            .iter()
            .flat_map(|&c| {
                report::paired_sign_tests(&report, c, &format!("S(B) - S(B^{c})"), |m, o| Some(m.score? - o.score?))
            })
            .collect(),
    };
    if exp == Experiment::Conditions {
        report.cles = report::cles_entries(&report, &conditions);
    }
    report.meta.wall_seconds = started.elapsed().as_secs_f64();
    Ok(report)
}

/// Median CLES per (config, grouping, condition) over the report's cells.
pub fn median_cles(report: &EvalReport) -> BTreeMap<(ConfigKey, Grouping, Condition), f64> {
    let mut groups: BTreeMap<(ConfigKey, Grouping, Condition), Vec<f64>> = BTreeMap::new();
    for e in &report.cles {
        groups
            .entry((e.config.clone(), e.grouping, e.condition))
            .or_default()
            .push(e.cles);
    }
    groups
        .into_iter()
        .filter_map(|(k, v)| median(&v).map(|m| (k, m)))
        .collect()
}

/// Projection kinds whose fit needs more rows than `n_windows` provides.
pub fn infeasible_projections(cfg: &RunConfig, embedding_dim: usize) -> Vec<ProjectionKind> {
    cfg.projections
        .iter()
        .copied()
        .filter(|p| match p {
            ProjectionKind::Identity => false,
            ProjectionKind::Pca(k) => *k > embedding_dim || *k >= cfg.n_windows,
        })
        .collect()
}
