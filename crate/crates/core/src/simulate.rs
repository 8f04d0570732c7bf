//! Replicated screening studies on a sparse linear model with correlated
//! blocks of relevant features.
//!
//! The default model has 40 standard-normal features. Features 0-2 and 3-5
//! form two blocks with pairwise correlation 0.9; all other pairs are
//! independent. The outcome is `y = X beta + e`, `beta = (3, 3, -2, 3, 3, -2, 0, ...)`,
//! `e ~ N(0, 36)`, with no intercept.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{Dataset, OutcomeKind};
use crate::harvest::{self, HarvestConfig, HarvestError};
use crate::learners::LearnerSpec;
use crate::ranktest::Adjustment;
use crate::sampler::derive_seed;

const DATA_TAG: u64 = 0x4441_5441;
const SCREEN_TAG: u64 = 0x5343_5245_454e;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid simulation spec: {0}")]
    Spec(String),
    #[error("replication {rep}: {source}")]
    Harvest {
        rep: usize,
        #[source]
        source: HarvestError,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimSpec {
    pub p: usize,
    pub beta: Vec<f64>,
    /// Groups of features sharing `block_correlation`; other pairs are independent.
    pub blocks: Vec<Vec<usize>>,
    pub block_correlation: f64,
    pub error_variance: f64,
    pub n_obs: usize,
    pub replications: usize,
    pub harvest: HarvestConfig,
    pub seed: u64,
}

impl SimSpec {
    /// The reference setting with `n_obs` rows per replication: 100
    /// replications, one unadjusted round at alpha 0.05 with OLS/R²,
    /// k = 15 and n = 4000.
    pub fn reference(n_obs: usize, seed: u64) -> Self {
        let mut beta = vec![0.0; 40];
        beta[..6].copy_from_slice(&[3.0, 3.0, -2.0, 3.0, 3.0, -2.0]);
        Self {
            p: 40,
            beta,
            blocks: vec![vec![0, 1, 2], vec![3, 4, 5]],
            block_correlation: 0.9,
            error_variance: 36.0,
            n_obs,
            replications: 100,
            harvest: HarvestConfig {
                alpha: 0.05,
                subset_size: 15,
                n_subsets: Some(4000),
                target_coverage: None,
                learner: LearnerSpec::ols(),
                adjustment: Adjustment::None,
                rounds: 1,
                seed,
            },
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let fail = |m: String| Err(SimError::Spec(m));
        if self.beta.len() != self.p {
            return fail(format!("beta has {} entries for p={}", self.beta.len(), self.p));
        }
        if !(0.0..1.0).contains(&self.block_correlation) {
            return fail(format!(
                "block_correlation must lie in [0, 1), got {}",
                self.block_correlation
            ));
        }
        if !(self.error_variance >= 0.0 && self.error_variance.is_finite()) {
            return fail(format!("error_variance must be non-negative, got {}", self.error_variance));
        }
        if self.n_obs < 2 {
            return fail(format!("n_obs must be at least 2, got {}", self.n_obs));
        }
        if self.replications == 0 {
            return fail("replications must be positive".into());
        }
        let mut seen = vec![false; self.p];
        for &f in self.blocks.iter().flatten() {
            if f >= self.p || seen[f] {
                return fail(format!("block member {f} is out of range or repeated"));
            }
            seen[f] = true;
        }
        self.harvest
            .validate()
            .map_err(|e| SimError::Spec(e.to_string()))
    }

    /// Features with a non-zero coefficient.
    pub fn relevant(&self) -> Vec<usize> {
        (0..self.p).filter(|&j| self.beta[j] != 0.0).collect()
    }

    pub fn covariance(&self) -> DMatrix<f64> {
        let mut cov = DMatrix::identity(self.p, self.p);
        for block in &self.blocks {
            for &a in block {
                for &b in block {
                    if a != b {
                        cov[(a, b)] = self.block_correlation;
                    }
                }
            }
        }
        cov
    }

    /// Lower-triangular factor L with L L' equal to the covariance.
    pub fn covariance_root(&self) -> Result<DMatrix<f64>, SimError> {
        self.covariance()
            .cholesky()
            .map(|c| c.l())
            .ok_or_else(|| SimError::Spec("covariance is not positive definite".into()))
    }

    /// beta' Sigma beta / (beta' Sigma beta + error variance).
    pub fn population_r_squared(&self) -> f64 {
        let b = nalgebra::DVector::from_column_slice(&self.beta);
        let signal = (b.transpose() * self.covariance() * &b)[(0, 0)];
        signal / (signal + self.error_variance)
    }
}

/// Draws replication `rep_index`; deterministic in `(spec.seed, rep_index)`.
pub fn gen_replication(spec: &SimSpec, rep_index: usize) -> Result<Dataset, SimError> {
    let root = spec.covariance_root()?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, DATA_TAG, rep_index as u64));
    Ok(gen_with_root(spec, &root, spec.n_obs, &mut rng))
}

fn gen_with_root(spec: &SimSpec, root: &DMatrix<f64>, n: usize, rng: &mut ChaCha8Rng) -> Dataset {
    let p = spec.p;
    let sd = spec.error_variance.sqrt();
    let mut columns = vec![0.0; n * p];
    let mut outcome = Vec::with_capacity(n);
    let mut z = vec![0.0; p];
    for r in 0..n {
        for v in z.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        let mut y = 0.0;
        for j in 0..p {
            // Row j of L only has entries up to the diagonal.
            let x: f64 = (0..=j).map(|c| root[(j, c)] * z[c]).sum();
            columns[j * n + r] = x;
            y += spec.beta[j] * x;
        }
        let e: f64 = rng.sample(StandardNormal);
        outcome.push(y + sd * e);
    }
    Dataset::from_columns(columns, n, outcome, OutcomeKind::Continuous, None)
        .expect("generated data is finite and well-shaped")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MinMedMax {
    pub min: f64,
    pub median: f64,
    pub max: f64,
}

impl MinMedMax {
    /// Order statistics; the median of an even-length input is the mean of
    /// the middle pair. `None` for an empty input.
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let m = v.len();
        let median = if m % 2 == 1 {
            v[m / 2]
        } else {
            (v[m / 2 - 1] + v[m / 2]) / 2.0
        };
        Some(Self {
            min: v[0],
            median,
            max: v[m - 1],
        })
    }
}

/// Selection frequencies expressed as percentages of replications.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimSummary {
    pub replications: usize,
    pub per_feature_selection_counts: Vec<usize>,
    pub relevant: Vec<usize>,
    /// Percent of replications selecting each relevant feature; `None` when
    /// no feature is relevant.
    pub sensitivity: Option<MinMedMax>,
    /// Percent of replications not selecting each irrelevant feature.
    pub specificity: Option<MinMedMax>,
    pub failed_fits: usize,
}

impl SimSummary {
    /// Fraction of (replication, irrelevant feature) pairs that were selected.
    pub fn false_positive_rate(&self) -> f64 {
        let irrelevant: Vec<usize> = (0..self.per_feature_selection_counts.len())
            .filter(|j| !self.relevant.contains(j))
            .collect();
        let selected: usize = irrelevant
            .iter()
            .map(|&j| self.per_feature_selection_counts[j])
            .sum();
        selected as f64 / (irrelevant.len() * self.replications) as f64
    }
}

pub fn summarize(counts: &[usize], replications: usize, relevant: &[usize]) -> SimSummary {
    let pct = |c: usize| 100.0 * c as f64 / replications as f64;
    let sens: Vec<f64> = relevant.iter().map(|&j| pct(counts[j])).collect();
    let spec: Vec<f64> = (0..counts.len())
        .filter(|j| !relevant.contains(j))
        .map(|j| 100.0 - pct(counts[j]))
        .collect();
    SimSummary {
        replications,
        per_feature_selection_counts: counts.to_vec(),
        relevant: relevant.to_vec(),
        sensitivity: MinMedMax::of(&sens),
        specificity: MinMedMax::of(&spec),
        failed_fits: 0,
    }
}

/// Screening seed for one replication.
pub fn replication_seed(spec: &SimSpec, rep_index: usize) -> u64 {
    derive_seed(spec.seed, SCREEN_TAG, rep_index as u64)
}

/// Generates every replication, screens it, and aggregates selection counts.
/// `spec.harvest.seed` is replaced per replication by [`replication_seed`].
pub fn run_study(spec: &SimSpec) -> Result<SimSummary, SimError> {
    spec.validate()?;
    let root = spec.covariance_root()?;
    let per_rep: Vec<(Vec<usize>, usize)> = (0..spec.replications)
        .into_par_iter()
        .map(|rep| {
            let mut rng =
                ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, DATA_TAG, rep as u64));
            let ds = gen_with_root(spec, &root, spec.n_obs, &mut rng);
            let cfg = HarvestConfig {
                seed: replication_seed(spec, rep),
                ..spec.harvest.clone()
            };
            let report =
                harvest::run(&ds, &cfg).map_err(|source| SimError::Harvest { rep, source })?;
            let failed = report.rounds.iter().map(|r| r.failed_fits).sum();
            let selected = report.final_features.iter().map(|f| f.index).collect();
            Ok((selected, failed))
        })
        .collect::<Result<_, SimError>>()?;

    let mut counts = vec![0usize; spec.p];
    let mut failed_fits = 0;
    for (selected, failed) in &per_rep {
        for &j in selected {
            counts[j] += 1;
        }
        failed_fits += failed;
    }
    let mut summary = summarize(&counts, spec.replications, &spec.relevant());
    summary.failed_fits = failed_fits;
    Ok(summary)
}

/// One method's row of a published comparison table (percent).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PublishedRow {
    pub method: &'static str,
    pub sensitivity: [f64; 3],
    pub specificity: [f64; 3],
}

const fn row(method: &'static str, s: [f64; 3], c: [f64; 3]) -> PublishedRow {
    PublishedRow {
        method,
        sensitivity: s,
        specificity: c,
    }
}

/// Published min/median/max rows for 50 observations per replication.
pub const TABLE1: [PublishedRow; 7] = [
    row("Lasso", [11.0, 70.0, 77.0], [75.0, 83.0, 88.0]),
    row("Adaptive Lasso", [16.0, 49.0, 59.0], [86.0, 92.0, 96.0]),
    row("Elastic Net", [63.0, 92.0, 96.0], [77.0, 83.0, 91.0]),
    row("Relaxed Lasso", [4.0, 63.0, 70.0], [91.0, 96.0, 100.0]),
    row("VISA", [4.0, 62.0, 73.0], [92.0, 97.0, 99.0]),
    row("Random Lasso", [84.0, 96.0, 97.0], [70.0, 79.0, 89.0]),
    row("HARVEST", [93.0, 95.0, 98.0], [84.0, 91.0, 96.0]),
];

/// Published min/median/max rows for 100 observations per replication.
pub const TABLE2: [PublishedRow; 7] = [
    row("Lasso", [8.0, 84.0, 88.0], [69.0, 78.0, 88.0]),
    row("Adaptive Lasso", [17.0, 62.0, 72.0], [86.0, 90.0, 96.0]),
    row("Elastic Net", [70.0, 98.0, 99.0], [79.0, 86.0, 93.0]),
    row("Relaxed Lasso", [3.0, 75.0, 84.0], [92.0, 97.0, 99.0]),
    row("VISA", [3.0, 76.0, 85.0], [91.0, 96.0, 99.0]),
    row("Random Lasso", [89.0, 99.0, 99.0], [79.0, 86.0, 92.0]),
    row("HARVEST", [94.0, 99.0, 100.0], [90.0, 96.0, 99.0]),
];

/// The screening row of a published table.
pub fn published_screening_row(table: &[PublishedRow; 7]) -> PublishedRow {
    table[6]
}

/// Computed vs published min/median/max with absolute differences. Computed
/// values are absent when the summary has no features of that kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub computed_sensitivity: Option<[f64; 3]>,
    pub published_sensitivity: [f64; 3],
    pub sensitivity_abs_diff: Option<[f64; 3]>,
    pub computed_specificity: Option<[f64; 3]>,
    pub published_specificity: [f64; 3],
    pub specificity_abs_diff: Option<[f64; 3]>,
}

impl Comparison {
    pub fn new(summary: &SimSummary, published: &PublishedRow) -> Self {
        let triple = |m: Option<MinMedMax>| m.map(|m| [m.min, m.median, m.max]);
        let diff = |a: Option<[f64; 3]>, b: [f64; 3]| a.map(|a| [0, 1, 2].map(|i| (a[i] - b[i]).abs()));
        let cs = triple(summary.sensitivity);
        let cc = triple(summary.specificity);
        Self {
            computed_sensitivity: cs,
            published_sensitivity: published.sensitivity,
            sensitivity_abs_diff: diff(cs, published.sensitivity),
            computed_specificity: cc,
            published_specificity: published.specificity,
            specificity_abs_diff: diff(cc, published.specificity),
        }
    }

    /// Largest absolute difference over the cells that could be computed.
    pub fn max_abs_diff(&self) -> f64 {
        self.sensitivity_abs_diff
            .iter()
            .chain(&self.specificity_abs_diff)
            .flatten()
            .fold(0.0, |a: f64, &b| a.max(b))
    }
}
