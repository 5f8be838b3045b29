//! Non-matching sets and the prompt adherence score.
//!
//! For a metric M, a matching reference set X, its deranged copy X' and a
//! candidate set Y, the score is
//! `(M_{X'}(Y) - M_X(Y)) / (M_{X'}(Y) + M_X(Y))`, in [-1, 1]. Positive values
//! mean Y sits closer to the matching references than to the non-matching ones.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::dataset::{Condition, Pair, PairSet, Perturbation};
use crate::embedding::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::metrics::{Metric, PreparedSet};
use crate::rng::{rng_from_seed, StreamRng};

/// A uniform random derangement of `0..n` (rejection sampling over shuffles).
pub fn derangement(n: usize, rng: &mut StreamRng) -> Result<Vec<usize>> {
    if n < 2 {
        return Err(Error::TooFew { needed: 2, actual: n });
    }
    let mut perm: Vec<usize> = (0..n).collect();
    loop {
        perm.shuffle(rng);
        if perm.iter().enumerate().all(|(i, &p)| i != p) {
            return Ok(perm);
        }
    }
}

/// Re-pairs each prompt with another pair's stem: pair i becomes
/// `(p_i, s_{pi(i)})` for a uniform derangement `pi`.
pub fn make_nonmatching(x: &PairSet, seed: u64) -> Result<PairSet> {
    let perm = derangement(x.len(), &mut rng_from_seed(seed))?;
    Ok(rearrange(x, &perm, seed))
}

/// Applies a stem permutation, tagging provenance with the source pair.
fn rearrange(x: &PairSet, perm: &[usize], seed: u64) -> PairSet {
    let pairs = x
        .pairs
        .iter()
        .zip(perm)
        .map(|(pair, &src)| {
            let mut provenance = pair.provenance.clone();
            provenance.perturbation = Some(Perturbation {
                condition: Condition::Random,
                stem_source: Some(src),
                semitones: None,
                shift_seconds: None,
                seed,
            });
            Pair {
                prompt: pair.prompt.clone(),
                stem: x.pairs[src].stem.clone(),
                provenance,
            }
        })
        .collect();
    PairSet {
        pairs,
        window_seconds: x.window_seconds,
        sample_rate: x.sample_rate,
    }
}

/// The permutation recorded in a deranged set's provenance, if any.
pub fn recorded_permutation(x: &PairSet) -> Option<Vec<usize>> {
    x.pairs
        .iter()
        .map(|p| p.provenance.perturbation.as_ref().and_then(|t| t.stem_source))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdherenceScore {
    pub value: f64,
    pub metric: Metric,
    /// Distance of the candidates to the matching references.
    pub d_matching: f64,
    /// Distance of the candidates to the non-matching references.
    pub d_nonmatching: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub derangement_seed: Option<u64>,
}

/// The score from its two distances. Fails when both are zero.
pub fn score_from_distances(d_matching: f64, d_nonmatching: f64) -> Result<f64> {
    if !(d_matching.is_finite() && d_nonmatching.is_finite()) {
        return Err(Error::NonFinite("distance"));
    }
    if d_matching < 0.0 || d_nonmatching < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "distances must be non-negative, got {d_matching} and {d_nonmatching}"
        )));
    }
    let denom = d_nonmatching + d_matching;
    if denom == 0.0 {
        return Err(Error::UndefinedScore);
    }
    Ok(((d_nonmatching - d_matching) / denom).clamp(-1.0, 1.0))
}

/// Scores candidate embeddings `y` against matching (`x_ref`) and
/// non-matching (`x_ref_nm`) reference embeddings.
pub fn adherence_score(
    metric: Metric,
    x_ref: &EmbeddingMatrix,
    x_ref_nm: &EmbeddingMatrix,
    y: &EmbeddingMatrix,
) -> Result<AdherenceScore> {
    let reference = PreparedSet::new(x_ref.clone());
    let nonmatching = PreparedSet::new(x_ref_nm.clone());
    let candidate = PreparedSet::new(y.clone());
    ReferencePair::new(reference, vec![nonmatching])?.score(metric, &candidate)
}

/// A matching reference set with one or more non-matching draws, prepared
/// for scoring many candidate sets.
#[derive(Debug)]
pub struct ReferencePair {
    matching: PreparedSet,
    nonmatching: Vec<PreparedSet>,
    derangement_seed: Option<u64>,
}

impl ReferencePair {
    pub fn new(matching: PreparedSet, nonmatching: Vec<PreparedSet>) -> Result<Self> {
        if nonmatching.is_empty() {
            return Err(Error::TooFew { needed: 1, actual: 0 });
        }
        let d = matching.matrix().cols();
        if let Some(bad) = nonmatching.iter().find(|m| m.matrix().cols() != d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                actual: bad.matrix().cols(),
            });
        }
        Ok(Self {
            matching,
            nonmatching,
            derangement_seed: None,
        })
    }

    pub fn with_derangement_seed(mut self, seed: u64) -> Self {
        self.derangement_seed = Some(seed);
        self
    }

    pub fn matching(&self) -> &PreparedSet {
        &self.matching
    }

    pub fn nonmatching(&self) -> &[PreparedSet] {
        &self.nonmatching
    }

    /// Scores `y`. With several non-matching draws, the reported score and
    /// non-matching distance are means over draws.
    pub fn score(&self, metric: Metric, y: &PreparedSet) -> Result<AdherenceScore> {
        let d_matching = self.matching.distance_to(metric, y)?;
        let mut value = 0.0;
        let mut d_nonmatching = 0.0;
        for nm in &self.nonmatching {
            let d = nm.distance_to(metric, y)?;
            value += score_from_distances(d_matching, d)?;
            d_nonmatching += d;
        }
        let k = self.nonmatching.len() as f64;
        Ok(AdherenceScore {
            value: value / k,
            metric,
            d_matching,
            d_nonmatching: d_nonmatching / k,
            derangement_seed: self.derangement_seed,
        })
    }
}
