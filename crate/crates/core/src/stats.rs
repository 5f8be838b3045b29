//! Sign test and common language effect size.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Alternative {
    /// Differences tend to be positive.
    Greater,
    Less,
    TwoSided,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignTest {
    pub p_value: f64,
    pub n_effective: usize,
    pub n_positive: usize,
    pub alternative: Alternative,
}

/// Exact sign test on paired differences. Zero differences are dropped.
pub fn sign_test(diffs: &[f64], alternative: Alternative) -> Result<SignTest> {
    if diffs.is_empty() {
        return Err(Error::TooFew { needed: 1, actual: 0 });
    }
    if diffs.iter().any(|d| d.is_nan()) {
        return Err(Error::NonFinite("paired differences"));
    }
    let n_positive = diffs.iter().filter(|&&d| d > 0.0).count();
    let n_negative = diffs.iter().filter(|&&d| d < 0.0).count();
    let n = n_positive + n_negative;
    if n == 0 {
        return Err(Error::AllTies);
    }
    let upper = binomial_upper_tail(n, n_positive);
    let lower = binomial_upper_tail(n, n - n_positive);
    let p_value = match alternative {
        Alternative::Greater => upper,
        Alternative::Less => lower,
        Alternative::TwoSided => (2.0 * upper.min(lower)).min(1.0),
    };
    Ok(SignTest {
        p_value,
        n_effective: n,
        n_positive,
        alternative,
    })
}

/// P(X >= k) for X ~ Binomial(n, 1/2).
pub fn binomial_upper_tail(n: usize, k: usize) -> f64 {
    if k == 0 {
        return 1.0;
    }
    if k > n {
        return 0.0;
    }
    if n <= 120 {
        // Exact integer arithmetic: the tail is (sum of C(n, i)) / 2^n.
        let mut c: u128 = 1;
        let mut total: u128 = 0;
        for i in 0..=n {
            if i >= k {
                total += c;
            }
            if i < n {
                c = c * (n - i) as u128 / (i + 1) as u128;
            }
        }
        return total as f64 / 2f64.powi(n as i32);
    }
    // log-space for large n
    let ln_half_n = -(n as f64) * std::f64::consts::LN_2;
    let mut ln_c = 0.0f64;
    let mut terms = Vec::with_capacity(n + 1 - k);
    for i in 0..=n {
        if i >= k {
            terms.push(ln_c + ln_half_n);
        }
        if i < n {
            ln_c += ((n - i) as f64).ln() - ((i + 1) as f64).ln();
        }
    }
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln()).exp().min(1.0)
}

/// Probability that a perturbed score is lower than a matching score, over
/// all cross pairs, with ties counting one half.
pub fn cles(scores_perturbed: &[f64], scores_matching: &[f64]) -> Result<f64> {
    if scores_perturbed.is_empty() || scores_matching.is_empty() {
        return Err(Error::TooFew { needed: 1, actual: 0 });
    }
    let mut wins = 0.0f64;
    for &b in scores_perturbed {
        for &c in scores_matching {
            if b < c {
                wins += 1.0;
            } else if b == c {
                wins += 0.5;
            }
        }
    }
    Ok(wins / (scores_perturbed.len() * scores_matching.len()) as f64)
}

/// Significance levels 0.05, 0.01, 0.001 mapped to 1..=3 stars.
pub fn significance_stars(p_value: f64) -> u8 {
    match p_value {
        p if p <= 0.001 => 3,
        p if p <= 0.01 => 2,
        p if p <= 0.05 => 1,
        _ => 0,
    }
}
