use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use crate::dataset::Condition;
use crate::error::{Error, Result};
use crate::fusion::FusionMethod;
use crate::metrics::Metric;
use crate::projection::ProjectionKind;
use crate::stats::{cles, sign_test, significance_stars, Alternative, SignTest};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Grouping {
    Within,
    Between,
}

impl Grouping {
    pub fn of(reference: &str, candidate: &str) -> Self {
        if reference == candidate {
            Grouping::Within
        } else {
            Grouping::Between
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Grouping::Within => "within",
            Grouping::Between => "between",
        }
    }
}

/// One candidate set evaluated against one reference set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub experiment: u8,
    pub repeat: usize,
    pub reference: String,
    pub candidate: String,
    pub grouping: Grouping,
    pub embedder: String,
    pub fusion: FusionMethod,
    pub projection: ProjectionKind,
    pub metric: Metric,
    /// `none` for the matching candidate set B.
    pub condition: Condition,
    /// Distance of the candidate set to the matching reference set.
    pub d_matching: f64,
    /// Distance to the non-matching reference set (experiments 2 and 3).
    pub d_nonmatching: Option<f64>,
    pub score: Option<f64>,
    pub candidate_seed: u64,
    pub condition_seed: Option<u64>,
    pub derangement_seed: Option<u64>,
}

/// Cell of the factorial grid a record belongs to, without repeat and condition.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ConfigKey {
    pub embedder: String,
    pub fusion: FusionMethod,
    pub projection: ProjectionKind,
    pub metric: Metric,
}

impl Record {
    pub fn config_key(&self) -> ConfigKey {
        ConfigKey {
            embedder: self.embedder.clone(),
            fusion: self.fusion,
            projection: self.projection,
            metric: self.metric,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignTestSummary {
    #[serde(flatten)]
    pub config: ConfigKey,
    pub grouping: Grouping,
    pub condition: Condition,
    /// Which paired difference was tested for being positive.
    pub comparison: String,
    pub n_pairs: usize,
    pub test: Option<SignTest>,
    pub stars: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClesEntry {
    #[serde(flatten)]
    pub config: ConfigKey,
    pub reference: String,
    pub candidate: String,
    pub grouping: Grouping,
    pub condition: Condition,
    pub cles: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplainedVariance {
    pub collection: String,
    pub embedder: String,
    pub fusion: FusionMethod,
    pub projection: ProjectionKind,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub version: String,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub experiment: u8,
    pub config: RunConfig,
    pub records: Vec<Record>,
    pub explained_variance: Vec<ExplainedVariance>,
    pub sign_tests: Vec<SignTestSummary>,
    pub cles: Vec<ClesEntry>,
    /// Choices the scores depend on that a reader should know about.
    pub notes: Vec<String>,
    pub meta: RunMeta,
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn opt_u(v: Option<u64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub const CSV_HEADER: [&str; 16] = [
    "experiment",
    "repeat",
    "reference",
    "candidate",
    "grouping",
    "embedder",
    "fusion",
    "projection",
    "metric",
    "condition",
    "d_matching",
    "d_nonmatching",
    "score",
    "candidate_seed",
    "condition_seed",
    "derangement_seed",
];

impl EvalReport {
    /// Records as CSV. Floats use the shortest representation that reads
    /// back to the same value.
    pub fn records_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(CSV_HEADER)?;
        for r in &self.records {
            w.write_record([
                r.experiment.to_string(),
                r.repeat.to_string(),
                r.reference.clone(),
                r.candidate.clone(),
                r.grouping.as_str().to_string(),
                r.embedder.clone(),
                r.fusion.to_string(),
                r.projection.to_string(),
                r.metric.to_string(),
                r.condition.to_string(),
                r.d_matching.to_string(),
                opt(r.d_nonmatching),
                opt(r.score),
                r.candidate_seed.to_string(),
                opt_u(r.condition_seed),
                opt_u(r.derangement_seed),
            ])?;
        }
        w.into_inner()
            .map_err(|e| Error::io("flushing records", e.into_error()))
    }

    /// Writes `report.json` and `records.csv` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
        let csv_path = dir.join("records.csv");
        fs::write(&csv_path, self.records_csv()?).map_err(|e| Error::io(format!("writing {}", csv_path.display()), e))?;
        let json_path = dir.join("report.json");
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(&json_path, text).map_err(|e| Error::io(format!("writing {}", json_path.display()), e))
    }

    /// Records of one condition, keyed by everything but the condition.
    fn by_condition(&self, condition: Condition) -> BTreeMap<(ConfigKey, Grouping, String, String, usize), &Record> {
        self.records
            .iter()
            .filter(|r| r.condition == condition)
            .map(|r| {
                (
                    (r.config_key(), r.grouping, r.reference.clone(), r.candidate.clone(), r.repeat),
                    r,
                )
            })
            .collect()
    }
}

/// Sign tests on `value(matching) - value(other)` paired by
/// (config, reference, candidate, repeat), one test per config and grouping.
pub(crate) fn paired_sign_tests(
    report: &EvalReport,
    other: Condition,
    comparison: &str,
    diff: impl Fn(&Record, &Record) -> Option<f64>,
) -> Vec<SignTestSummary> {
    let matching = report.by_condition(Condition::None);
    let others = report.by_condition(other);
    let mut groups: BTreeMap<(ConfigKey, Grouping), Vec<f64>> = BTreeMap::new();
    for (key, m) in &matching {
        if let Some(o) = others.get(key) {
            if let Some(d) = diff(m, o) {
                groups.entry((key.0.clone(), key.1)).or_default().push(d);
            }
        }
    }
    groups
        .into_iter()
        .map(|((config, grouping), diffs)| {
            let test = sign_test(&diffs, Alternative::Greater).ok();
            SignTestSummary {
                config,
                grouping,
                condition: other,
                comparison: comparison.to_string(),
                n_pairs: diffs.len(),
                stars: test.map_or(0, |t| significance_stars(t.p_value)),
                test,
            }
        })
        .collect()
}

/// CLES of each condition against the matching scores of the same
/// (config, reference, candidate) cell, across repeats.
pub(crate) fn cles_entries(report: &EvalReport, conditions: &[Condition]) -> Vec<ClesEntry> {
    type Cell = (ConfigKey, String, String, Grouping);
    let mut scores: BTreeMap<(Cell, Condition), Vec<f64>> = BTreeMap::new();
    for r in &report.records {
        if let Some(s) = r.score {
            let cell = (r.config_key(), r.reference.clone(), r.candidate.clone(), r.grouping);
            scores.entry((cell, r.condition)).or_default().push(s);
        }
    }
    let mut out = Vec::new();
    for ((cell, condition), perturbed) in &scores {
        if !conditions.contains(condition) {
            continue;
        }
        if let Some(matching) = scores.get(&(cell.clone(), Condition::None)) {
            if let Ok(v) = cles(perturbed, matching) {
                out.push(ClesEntry {
                    config: cell.0.clone(),
                    reference: cell.1.clone(),
                    candidate: cell.2.clone(),
                    grouping: cell.3,
                    condition: *condition,
                    cles: v,
                });
            }
        }
    }
    out
}

/// Median of a non-empty list.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_cases() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), Some(2.5));
        assert_eq!(median(&[]), None);
    }
}
