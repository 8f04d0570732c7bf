//! Rank-sum testing of features against the subset accuracy ranking.
//!
//! Rank 1 is the most accurate subset. A feature whose subsets have a small
//! average rank is evidence of relevance, so the one-sided p-value is
//! `Phi((avg_rank - mu) / sigma)` with `mu = (n+1)/2` and
//! `sigma = sqrt((n - n_i)(n + 1) / (12 n_i))`. No continuity correction.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum RankError {
    #[error("need at least 2 accuracies to rank, got {0}")]
    TooFew(usize),
    #[error("accuracy of subset {index} is not finite ({value})")]
    NonFinite { index: usize, value: f64 },
    #[error("exact enumeration supports n <= {max}, got n={n}")]
    TooLarge { n: usize, max: usize },
    #[error("invalid group size n_i={n_i} for n={n}")]
    BadGroup { n: usize, n_i: usize },
    #[error("subset position {pos} out of range for {n} subsets")]
    BadPosition { pos: usize, n: usize },
}

/// Accuracies in subset order and their descending midranks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankTable {
    accuracies: Vec<f64>,
    ranks: Vec<f64>,
}

impl RankTable {
    pub fn accuracies(&self) -> &[f64] {
        &self.accuracies
    }

    pub fn ranks(&self) -> &[f64] {
        &self.ranks
    }

    pub fn len(&self) -> usize {
        self.ranks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ranks.is_empty()
    }
}

/// Ranks accuracies from 1 (highest) to n (lowest); tied values share the
/// mean of the positions they occupy.
pub fn rank_subsets(accuracies: &[f64]) -> Result<RankTable, RankError> {
    if accuracies.len() < 2 {
        return Err(RankError::TooFew(accuracies.len()));
    }
    if let Some((index, &value)) = accuracies.iter().enumerate().find(|(_, v)| !v.is_finite()) {
        return Err(RankError::NonFinite { index, value });
    }
    let n = accuracies.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| accuracies[b].total_cmp(&accuracies[a]).then(a.cmp(&b)));
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i + 1;
        while j < n && accuracies[order[j]] == accuracies[order[i]] {
            j += 1;
        }
        let r = (i + 1 + j) as f64 / 2.0;
        for &idx in &order[i..j] {
            ranks[idx] = r;
        }
        i = j;
    }
    Ok(RankTable {
        accuracies: accuracies.to_vec(),
        ranks,
    })
}

/// Why a feature could not be tested normally.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestFlag {
    NeverSampled,
    InEverySubset,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureTestResult {
    pub feature: usize,
    pub n_i: usize,
    pub avg_rank: f64,
    pub mu: f64,
    pub sigma: f64,
    pub z: f64,
    pub p_value: f64,
    pub p_adjusted: f64,
    pub selected: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flag: Option<TestFlag>,
}

/// Mean and standard deviation of the null average rank.
pub fn null_moments(n: usize, n_i: usize) -> (f64, f64) {
    let nf = n as f64;
    let mu = (nf + 1.0) / 2.0;
    let sigma = ((nf - n_i as f64) * (nf + 1.0) / (12.0 * n_i as f64)).sqrt();
    (mu, sigma)
}

pub fn standard_normal_cdf(z: f64) -> f64 {
    Normal::standard().cdf(z)
}

/// Average rank of the member subsets and its one-sided normal-approximation
/// p-value. `p_adjusted` is set equal to `p_value`; see [`adjust`].
pub fn feature_p_value(
    table: &RankTable,
    feature: usize,
    member_positions: &[usize],
) -> Result<FeatureTestResult, RankError> {
    let n = table.len();
    let n_i = member_positions.len();
    if let Some(&pos) = member_positions.iter().find(|&&p| p >= n) {
        return Err(RankError::BadPosition { pos, n });
    }
    let mu = (n as f64 + 1.0) / 2.0;
    let flag = if n_i == 0 {
        Some(TestFlag::NeverSampled)
    } else if n_i >= n {
        Some(TestFlag::InEverySubset)
    } else {
        None
    };
    if let Some(flag) = flag {
        return Ok(FeatureTestResult {
            feature,
            n_i,
            avg_rank: mu,
            mu,
            sigma: 0.0,
            z: 0.0,
            p_value: 1.0,
            p_adjusted: 1.0,
            selected: false,
            flag: Some(flag),
        });
    }
    let rank_sum: f64 = member_positions.iter().map(|&p| table.ranks[p]).sum();
    let avg_rank = rank_sum / n_i as f64;
    let (mu, sigma) = null_moments(n, n_i);
    let z = (avg_rank - mu) / sigma;
    let p = standard_normal_cdf(z);
    Ok(FeatureTestResult {
        feature,
        n_i,
        avg_rank,
        mu,
        sigma,
        z,
        p_value: p,
        p_adjusted: p,
        selected: false,
        flag: None,
    })
}

pub const EXACT_MAX_N: usize = 14;

/// Exact `P(mean of n_i ranks drawn without replacement from 1..=n <= avg_rank)`,
/// by enumerating every n_i-subset of ranks. Intended as a reference for
/// small n only.
pub fn exact_null_p(n: usize, n_i: usize, avg_rank: f64) -> Result<f64, RankError> {
    if n > EXACT_MAX_N {
        return Err(RankError::TooLarge {
            n,
            max: EXACT_MAX_N,
        });
    }
    if n_i == 0 || n_i > n {
        return Err(RankError::BadGroup { n, n_i });
    }
    let threshold = avg_rank * n_i as f64 + 1e-9;
    let mut below = 0u64;
    let mut total = 0u64;
    // Walk all combinations in lexicographic order.
    let mut combo: Vec<usize> = (1..=n_i).collect();
    loop {
        total += 1;
        if (combo.iter().sum::<usize>() as f64) <= threshold {
            below += 1;
        }
        let mut i = n_i;
        loop {
            if i == 0 {
                return Ok(below as f64 / total as f64);
            }
            i -= 1;
            if combo[i] < n - (n_i - 1 - i) {
                break;
            }
        }
        combo[i] += 1;
        for j in i + 1..n_i {
            combo[j] = combo[j - 1] + 1;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Adjustment {
    #[default]
    None,
    Bonferroni,
    #[serde(alias = "bh")]
    BenjaminiHochberg,
}

impl std::str::FromStr for Adjustment {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "none" => Ok(Adjustment::None),
            "bonferroni" => Ok(Adjustment::Bonferroni),
            "bh" | "fdr" | "benjamini_hochberg" | "benjamini-hochberg" => {
                Ok(Adjustment::BenjaminiHochberg)
            }
            other => Err(format!("unknown adjustment {other:?} (expected none, bonferroni or bh)")),
        }
    }
}

impl std::fmt::Display for Adjustment {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Adjustment::None => "none",
            Adjustment::Bonferroni => "bonferroni",
            Adjustment::BenjaminiHochberg => "bh",
        })
    }
}

/// Multiple-testing adjustment over the whole vector (m = its length).
pub fn adjust(p_values: &[f64], method: Adjustment) -> Vec<f64> {
    let m = p_values.len() as f64;
    match method {
        Adjustment::None => p_values.to_vec(),
        Adjustment::Bonferroni => p_values.iter().map(|p| (p * m).min(1.0)).collect(),
        Adjustment::BenjaminiHochberg => {
            let mut order: Vec<usize> = (0..p_values.len()).collect();
            order.sort_by(|&a, &b| p_values[a].total_cmp(&p_values[b]));
            let mut out = vec![0.0; p_values.len()];
            let mut running = 1.0f64;
            for (rank, &idx) in order.iter().enumerate().rev() {
                let scaled = p_values[idx] * m / (rank + 1) as f64;
                running = running.min(scaled);
                out[idx] = running.min(1.0).max(p_values[idx]);
            }
            out
        }
    }
}

/// Tests every feature listed in `features` (with matching membership lists),
/// applies the adjustment across them, and marks `selected` where the
/// adjusted p-value is at most `alpha`. Flagged features are never selected,
/// and `alpha = 0` selects nothing.
pub fn test_features(
    table: &RankTable,
    features: &[usize],
    membership: &[Vec<usize>],
    alpha: f64,
    method: Adjustment,
) -> Result<Vec<FeatureTestResult>, RankError> {
    let mut results = features
        .iter()
        .zip(membership)
        .map(|(&f, m)| feature_p_value(table, f, m))
        .collect::<Result<Vec<_>, _>>()?;
    let raw: Vec<f64> = results.iter().map(|r| r.p_value).collect();
    for (r, p_adj) in results.iter_mut().zip(adjust(&raw, method)) {
        r.p_adjusted = p_adj.max(r.p_value);
        r.selected = r.flag.is_none() && alpha > 0.0 && r.p_adjusted <= alpha;
    }
    Ok(results)
}
