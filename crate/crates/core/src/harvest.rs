//! One screening round and the multi-round driver.
//!
//! A round draws subsets over the current candidate pool, fits one model per
//! subset, ranks the subsets by accuracy and tests every candidate. The
//! survivors of round r are the candidates of round r + 1.

use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::Dataset;
use crate::learners::{self, LearnerError, LearnerSpec};
use crate::ranktest::{self, Adjustment, FeatureTestResult, RankError};
use crate::sampler::{self, FeatureSubset, SamplerError, SamplingPlan};

/// Seed-derivation tag for per-round subset streams.
const ROUND_TAG: u64 = 0x0052_4f55_4e44;

/// Default expected number of subsets per feature when n is not pinned.
pub const DEFAULT_COVERAGE: f64 = 100.0;

#[derive(Debug, Error)]
pub enum HarvestError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("candidate pool too small for k: {candidates} candidates, k={k}")]
    PoolTooSmall { candidates: usize, k: usize },
    #[error("candidate feature {index} out of range for {p} features")]
    BadCandidate { index: usize, p: usize },
    #[error(transparent)]
    Learner(#[from] LearnerError),
    #[error(transparent)]
    Sampler(#[from] SamplerError),
    #[error(transparent)]
    Rank(#[from] RankError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarvestConfig {
    pub alpha: f64,
    pub subset_size: usize,
    /// Fixed number of subsets per round; excludes `target_coverage`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_subsets: Option<usize>,
    /// Expected subsets per candidate, n*k/p; n is re-planned every round.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_coverage: Option<f64>,
    pub learner: LearnerSpec,
    pub adjustment: Adjustment,
    pub rounds: usize,
    pub seed: u64,
}

impl Default for HarvestConfig {
    fn default() -> Self {
        Self {
            alpha: 0.05,
            subset_size: 15,
            n_subsets: None,
            target_coverage: Some(DEFAULT_COVERAGE),
            learner: LearnerSpec::default(),
            adjustment: Adjustment::None,
            rounds: 1,
            seed: 0,
        }
    }
}

impl HarvestConfig {
    pub fn validate(&self) -> Result<(), HarvestError> {
        let fail = |m: String| Err(HarvestError::Config(m));
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return fail(format!("alpha must lie in (0, 1), got {}", self.alpha));
        }
        if self.subset_size < 2 {
            return fail(format!("k must be at least 2, got {}", self.subset_size));
        }
        match (self.n_subsets, self.target_coverage) {
            (Some(_), Some(_)) => {
                return fail("set exactly one of n_subsets and target_coverage, not both".into())
            }
            (None, None) => return fail("set one of n_subsets and target_coverage".into()),
            (Some(n), None) if n < 2 => return fail(format!("n_subsets must be at least 2, got {n}")),
            (None, Some(c)) if !(c > 0.0 && c.is_finite()) => {
                return fail(format!("target_coverage must be positive, got {c}"))
            }
            _ => {}
        }
        if self.rounds == 0 {
            return fail("rounds must be at least 1".into());
        }
        self.learner.validate().map_err(HarvestError::Config)
    }

    /// Subsets to draw for a pool of `p` candidates.
    pub fn subsets_for(&self, p: usize) -> Result<usize, HarvestError> {
        match (self.n_subsets, self.target_coverage) {
            (Some(n), _) => Ok(n),
            (None, Some(c)) => Ok(sampler::plan_n_for_coverage(p, self.subset_size, c)?.max(2)),
            (None, None) => Err(HarvestError::Config("no subset count configured".into())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundReport {
    pub round_index: usize,
    pub subset_size: usize,
    pub n_subsets: usize,
    pub seed: u64,
    pub candidate_features: Vec<usize>,
    /// One entry per candidate, in candidate order.
    pub results: Vec<FeatureTestResult>,
    pub survivors: Vec<usize>,
    pub subsets_trained: usize,
    /// Fits that errored and were scored at the criterion's independence value.
    pub failed_fits: usize,
    /// Fits that succeeded but were rank-deficient or hit the iteration cap.
    pub unconverged_fits: usize,
    /// Not serialized: reports must be byte-identical across runs.
    #[serde(skip)]
    pub wall_time: Duration,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    RoundsExhausted,
    /// A round kept every candidate.
    Stable,
    /// Fewer than four survivors remain.
    TooFewSurvivors,
}

impl std::fmt::Display for StopReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            StopReason::RoundsExhausted => "all rounds run",
            StopReason::Stable => "no candidate dropped",
            StopReason::TooFewSurvivors => "fewer than four survivors",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedFeature {
    pub index: usize,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarvestReport {
    pub config: HarvestConfig,
    pub rounds: Vec<RoundReport>,
    pub stop_reason: StopReason,
    pub final_features: Vec<NamedFeature>,
}

/// Seed used for the subset draw of a given round.
pub fn round_seed(seed: u64, round_index: usize) -> u64 {
    sampler::derive_seed(seed, ROUND_TAG, round_index as u64)
}

/// Runs one round over `candidates` (original feature ids) with `cfg.subset_size`.
pub fn run_round(
    ds: &Dataset,
    candidates: &[usize],
    cfg: &HarvestConfig,
    round_seed: u64,
) -> Result<RoundReport, HarvestError> {
    run_round_indexed(ds, candidates, cfg, round_seed, 0)
}

fn run_round_indexed(
    ds: &Dataset,
    candidates: &[usize],
    cfg: &HarvestConfig,
    round_seed: u64,
    round_index: usize,
) -> Result<RoundReport, HarvestError> {
    let started = Instant::now();
    cfg.validate()?;
    cfg.learner.check_outcome(ds.outcome_kind())?;
    let mut pool = candidates.to_vec();
    pool.sort_unstable();
    pool.dedup();
    if let Some(&index) = pool.iter().find(|&&f| f >= ds.n_features()) {
        return Err(HarvestError::BadCandidate {
            index,
            p: ds.n_features(),
        });
    }
    let k = cfg.subset_size;
    if pool.len() <= k {
        return Err(HarvestError::PoolTooSmall {
            candidates: pool.len(),
            k,
        });
    }
    if cfg.learner.kind == learners::LearnerKind::OlsRSquared {
        let y = ds.outcome();
        if y.iter().all(|&v| v == y[0]) {
            return Err(LearnerError::DegenerateOutcome.into());
        }
    }

    let n = cfg.subsets_for(pool.len())?;
    let plan = SamplingPlan::new(n, k, pool.len(), round_seed)?;
    let local = sampler::draw_subsets(&plan)?;

    // Indexed collect keeps accuracies in subset order for any thread count.
    let fits: Vec<(f64, FitOutcome)> = local
        .par_iter()
        .map(|s| {
            let ids = s.indices().iter().map(|&i| pool[i]).collect();
            let subset = FeatureSubset::new(ids).expect("pool entries are distinct");
            match learners::fit(ds, &subset, &cfg.learner) {
                Ok(r) if r.accuracy.is_finite() => (
                    r.accuracy,
                    if r.converged {
                        FitOutcome::Ok
                    } else {
                        FitOutcome::Unconverged
                    },
                ),
                _ => (cfg.learner.kind.independence_value(), FitOutcome::Failed),
            }
        })
        .collect();
    let accuracies: Vec<f64> = fits.iter().map(|f| f.0).collect();
    let failed_fits = fits.iter().filter(|f| f.1 == FitOutcome::Failed).count();
    let unconverged_fits = fits.iter().filter(|f| f.1 == FitOutcome::Unconverged).count();

    let table = ranktest::rank_subsets(&accuracies)?;
    let membership = sampler::membership_index(&local, pool.len());
    let results = ranktest::test_features(&table, &pool, &membership, cfg.alpha, cfg.adjustment)?;
    let survivors = results.iter().filter(|r| r.selected).map(|r| r.feature).collect();

    Ok(RoundReport {
        round_index,
        subset_size: k,
        n_subsets: n,
        seed: round_seed,
        candidate_features: pool,
        results,
        survivors,
        subsets_trained: local.len(),
        failed_fits,
        unconverged_fits,
        wall_time: started.elapsed(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum FitOutcome {
    Ok,
    Unconverged,
    Failed,
}

/// Subset size for the next round: if the survivors do not exceed k, halve
/// the pool (at least 2).
pub fn next_subset_size(k: usize, survivors: usize) -> usize {
    if survivors <= k {
        (survivors / 2).max(2)
    } else {
        k
    }
}

/// Whether to stop after a round that kept `survivors` out of `candidates`.
pub fn stop_decision(
    candidates: &[usize],
    survivors: &[usize],
    rounds_done: usize,
    max_rounds: usize,
) -> Option<StopReason> {
    if rounds_done >= max_rounds {
        Some(StopReason::RoundsExhausted)
    } else if survivors == candidates {
        Some(StopReason::Stable)
    } else if survivors.len() < 4 {
        Some(StopReason::TooFewSurvivors)
    } else {
        None
    }
}

/// Runs up to `cfg.rounds` rounds, each over the previous round's survivors.
pub fn run(ds: &Dataset, cfg: &HarvestConfig) -> Result<HarvestReport, HarvestError> {
    cfg.validate()?;
    let mut candidates: Vec<usize> = (0..ds.n_features()).collect();
    let mut round_cfg = cfg.clone();
    let mut rounds = Vec::new();
    let stop_reason = loop {
        let r = rounds.len();
        let report = run_round_indexed(ds, &candidates, &round_cfg, round_seed(cfg.seed, r), r)?;
        let survivors = report.survivors.clone();
        let stop = stop_decision(&report.candidate_features, &survivors, r + 1, cfg.rounds);
        rounds.push(report);
        if let Some(reason) = stop {
            break reason;
        }
        round_cfg.subset_size = next_subset_size(round_cfg.subset_size, survivors.len());
        candidates = survivors;
    };
    let last = rounds.last().expect("at least one round runs");
    let final_features = last
        .survivors
        .iter()
        .map(|&index| NamedFeature {
            index,
            name: ds.feature_names()[index].clone(),
        })
        .collect();
    Ok(HarvestReport {
        config: cfg.clone(),
        rounds,
        stop_reason,
        final_features,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::OutcomeKind;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    /// Features 0 and 1 drive y strongly; the rest are noise.
    fn signal_data(seed: u64, n: usize, p: usize) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cols: Vec<f64> = (0..n * p).map(|_| rng.sample(StandardNormal)).collect();
        let y = (0..n)
            .map(|r| 3.0 * cols[r] + 3.0 * cols[n + r] + rng.sample::<f64, _>(StandardNormal))
            .collect();
        Dataset::from_columns(cols, n, y, OutcomeKind::Continuous, None).unwrap()
    }

    fn cfg(k: usize, n: usize) -> HarvestConfig {
        HarvestConfig {
            subset_size: k,
            n_subsets: Some(n),
            target_coverage: None,
            seed: 11,
            ..HarvestConfig::default()
        }
    }

    #[test]
    fn config_validation() {
        assert!(cfg(5, 100).validate().is_ok());
        assert!(HarvestConfig { alpha: 1.0, ..cfg(5, 100) }.validate().is_err());
        assert!(HarvestConfig { subset_size: 1, ..cfg(5, 100) }.validate().is_err());
        assert!(HarvestConfig { target_coverage: Some(10.0), ..cfg(5, 100) }.validate().is_err());
        assert!(HarvestConfig { n_subsets: None, ..cfg(5, 100) }.validate().is_err());
        assert!(HarvestConfig { rounds: 0, ..cfg(5, 100) }.validate().is_err());
    }

    #[test]
    fn round_counts_and_determinism() {
        let ds = signal_data(1, 60, 40);
        let all: Vec<usize> = (0..40).collect();
        let c = cfg(15, 4000);
        let a = run_round(&ds, &all, &c, 99).unwrap();
        assert_eq!(a.subsets_trained, 4000);
        assert_eq!(a.results.len(), 40);
        let total: usize = a.results.iter().map(|r| r.n_i).sum();
        assert_eq!(total, 4000 * 15);
        assert!(a.survivors.contains(&0) && a.survivors.contains(&1));
        let b = run_round(&ds, &all, &c, 99).unwrap();
        assert_eq!(a.results, b.results);
        assert_eq!(a.survivors, b.survivors);
    }

    #[test]
    fn survivors_map_back_to_original_ids() {
        let ds = signal_data(2, 60, 30);
        let candidates = vec![1, 4, 7, 10, 13, 16, 19, 22];
        let r = run_round(&ds, &candidates, &cfg(3, 600), 5).unwrap();
        assert_eq!(r.candidate_features, candidates);
        assert!(r.results.iter().zip(&candidates).all(|(res, &c)| res.feature == c));
        assert!(r.survivors.contains(&1));
        assert!(r.survivors.iter().all(|s| candidates.contains(s)));
    }

    #[test]
    fn pool_must_exceed_k() {
        let ds = signal_data(3, 30, 10);
        let err = run_round(&ds, &[0, 1, 2], &cfg(3, 100), 1).unwrap_err();
        assert!(matches!(err, HarvestError::PoolTooSmall { candidates: 3, k: 3 }));
        assert!(err.to_string().contains("candidate pool too small for k"));
    }

    #[test]
    fn learner_outcome_mismatch() {
        let ds = signal_data(3, 30, 10);
        let c = HarvestConfig {
            learner: LearnerSpec::logistic(),
            ..cfg(3, 100)
        };
        assert!(matches!(
            run_round(&ds, &(0..10).collect::<Vec<_>>(), &c, 1),
            Err(HarvestError::Learner(LearnerError::OutcomeMismatch { .. }))
        ));
    }

    #[test]
    fn single_round_run_equals_run_round() {
        let ds = signal_data(4, 50, 20);
        let c = cfg(5, 500);
        let rep = run(&ds, &c).unwrap();
        let direct = run_round(&ds, &(0..20).collect::<Vec<_>>(), &c, round_seed(c.seed, 0)).unwrap();
        assert_eq!(rep.rounds.len(), 1);
        assert_eq!(rep.rounds[0].results, direct.results);
        assert_eq!(rep.stop_reason, StopReason::RoundsExhausted);
        let finals: Vec<usize> = rep.final_features.iter().map(|f| f.index).collect();
        assert_eq!(finals, direct.survivors);
    }

    #[test]
    fn later_rounds_shrink_and_are_nested() {
        let ds = signal_data(5, 80, 40);
        let c = HarvestConfig {
            rounds: 3,
            alpha: 0.2,
            ..cfg(15, 2000)
        };
        let rep = run(&ds, &c).unwrap();
        for w in rep.rounds.windows(2) {
            assert_eq!(w[1].candidate_features, w[0].survivors);
            assert!(w[1].survivors.len() <= w[0].survivors.len());
            assert!(w[1].subset_size < w[1].candidate_features.len());
        }
        let last = rep.rounds.last().unwrap();
        let finals: Vec<usize> = rep.final_features.iter().map(|f| f.index).collect();
        assert_eq!(finals, last.survivors);
        assert_eq!(rep.final_features[0].name, "f0");
    }

    #[test]
    fn stopping_rules() {
        let all: Vec<usize> = (0..10).collect();
        assert_eq!(stop_decision(&all, &all, 1, 3), Some(StopReason::Stable));
        assert_eq!(stop_decision(&all, &all, 1, 1), Some(StopReason::RoundsExhausted));
        assert_eq!(stop_decision(&all, &[1, 2, 3], 1, 3), Some(StopReason::TooFewSurvivors));
        assert_eq!(stop_decision(&all, &[1, 2, 3, 4], 1, 3), None);
        assert_eq!(stop_decision(&all, &[1, 2, 3, 4], 3, 3), Some(StopReason::RoundsExhausted));
    }

    #[test]
    fn k_policy() {
        assert_eq!(next_subset_size(15, 40), 15);
        assert_eq!(next_subset_size(15, 15), 7);
        assert_eq!(next_subset_size(15, 9), 4);
        assert_eq!(next_subset_size(15, 4), 2);
    }

    #[test]
    fn coverage_replans_n() {
        let ds = signal_data(6, 40, 40);
        let c = HarvestConfig {
            subset_size: 15,
            n_subsets: None,
            target_coverage: Some(100.0),
            ..cfg(15, 2)
        };
        let r = run_round(&ds, &(0..40).collect::<Vec<_>>(), &c, 3).unwrap();
        assert_eq!(r.n_subsets, 267);
    }

    #[test]
    fn logistic_round_runs() {
        let n = 120;
        let p = 12;
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let cols: Vec<f64> = (0..n * p).map(|_| rng.sample(StandardNormal)).collect();
        let y = (0..n)
            .map(|r| {
                let eta = 2.5 * cols[r];
                (rng.random::<f64>() < 1.0 / (1.0 + (-eta).exp())) as u8 as f64
            })
            .collect();
        let ds = Dataset::from_columns(cols, n, y, OutcomeKind::Binary, None).unwrap();
        let c = HarvestConfig {
            learner: LearnerSpec::logistic(),
            ..cfg(4, 600)
        };
        let r = run_round(&ds, &(0..p).collect::<Vec<_>>(), &c, 2).unwrap();
        assert!(r.survivors.contains(&0));
        assert_eq!(r.failed_fits, 0);
    }
}
