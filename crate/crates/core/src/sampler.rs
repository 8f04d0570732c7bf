//! Random size-k feature subsets and per-feature membership lists.
//!
//! Subset `j` of a plan is drawn from its own ChaCha stream keyed by
//! `(seed, j)`, so the list does not depend on generation order or on the
//! number of worker threads.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SamplerError {
    #[error("subset size k={k} exceeds the number of features p={p}")]
    SubsetTooLarge { k: usize, p: usize },
    #[error("subset size must be positive")]
    ZeroSubsetSize,
    #[error("coverage target must be positive and finite, got {0}")]
    BadCoverage(f64),
    #[error("need at least 2 subsets, got {0}")]
    TooFewSubsets(usize),
}

/// Sorted, distinct feature indices.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FeatureSubset(Vec<usize>);

impl FeatureSubset {
    /// Sorts and checks distinctness; returns `None` on duplicates.
    pub fn new(mut indices: Vec<usize>) -> Option<Self> {
        indices.sort_unstable();
        if indices.windows(2).any(|w| w[0] == w[1]) {
            return None;
        }
        Some(Self(indices))
    }

    pub fn indices(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, feature: usize) -> bool {
        self.0.binary_search(&feature).is_ok()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplingPlan {
    pub n_subsets: usize,
    pub subset_size: usize,
    pub p: usize,
    pub seed: u64,
}

impl SamplingPlan {
    pub fn new(n_subsets: usize, subset_size: usize, p: usize, seed: u64) -> Result<Self, SamplerError> {
        let plan = Self {
            n_subsets,
            subset_size,
            p,
            seed,
        };
        plan.validate()?;
        Ok(plan)
    }

    pub fn validate(&self) -> Result<(), SamplerError> {
        if self.subset_size == 0 {
            return Err(SamplerError::ZeroSubsetSize);
        }
        if self.subset_size > self.p {
            return Err(SamplerError::SubsetTooLarge {
                k: self.subset_size,
                p: self.p,
            });
        }
        if self.n_subsets < 2 {
            return Err(SamplerError::TooFewSubsets(self.n_subsets));
        }
        Ok(())
    }
}

/// Smallest n whose expected per-feature coverage n*k/p reaches `target`.
pub fn plan_n_for_coverage(p: usize, k: usize, target: f64) -> Result<usize, SamplerError> {
    if k == 0 {
        return Err(SamplerError::ZeroSubsetSize);
    }
    if k > p {
        return Err(SamplerError::SubsetTooLarge { k, p });
    }
    if !(target > 0.0 && target.is_finite()) {
        return Err(SamplerError::BadCoverage(target));
    }
    let coverage = |n: usize| n as f64 * k as f64 / p as f64;
    let mut n = (target * p as f64 / k as f64).ceil().max(1.0) as usize;
    // Correct for rounding in the product above.
    while n > 1 && coverage(n - 1) >= target {
        n -= 1;
    }
    while coverage(n) < target {
        n += 1;
    }
    Ok(n)
}

/// Expected number of subsets containing a given feature, n*k/p.
pub fn expected_coverage(n: usize, k: usize, p: usize) -> f64 {
    n as f64 * k as f64 / p as f64
}

/// Random stream for subset `index` of a plan seeded with `seed`.
pub fn subset_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Uniform k-combination of `0..p` by a partial Fisher-Yates shuffle over a
/// virtual identity permutation; only displaced slots are stored.
pub fn draw_combination<R: Rng + ?Sized>(rng: &mut R, p: usize, k: usize) -> FeatureSubset {
    let mut displaced: HashMap<usize, usize> = HashMap::with_capacity(2 * k);
    let mut picked = Vec::with_capacity(k);
    for i in 0..k {
        let j = rng.random_range(i..p);
        let at_j = *displaced.get(&j).unwrap_or(&j);
        let at_i = *displaced.get(&i).unwrap_or(&i);
        displaced.insert(j, at_i);
        picked.push(at_j);
    }
    picked.sort_unstable();
    FeatureSubset(picked)
}

/// Draws `plan.n_subsets` independent uniform k-combinations. Repeated
/// subsets are kept.
pub fn draw_subsets(plan: &SamplingPlan) -> Result<Vec<FeatureSubset>, SamplerError> {
    plan.validate()?;
    Ok((0..plan.n_subsets)
        .into_par_iter()
        .map(|j| {
            let mut rng = subset_rng(plan.seed, j as u64);
            draw_combination(&mut rng, plan.p, plan.subset_size)
        })
        .collect())
}

/// For each feature in `0..p`, the ascending positions of the subsets that contain it.
pub fn membership_index(subsets: &[FeatureSubset], p: usize) -> Vec<Vec<usize>> {
    let mut members = vec![Vec::new(); p];
    for (pos, s) in subsets.iter().enumerate() {
        for &f in s.indices() {
            members[f].push(pos);
        }
    }
    members
}

/// Mixes a base seed with a domain tag and an index (SplitMix64 finalizer),
/// giving independent seeds for rounds, replications and the like.
pub fn derive_seed(base: u64, tag: u64, index: u64) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    mix(mix(mix(base) ^ tag) ^ index)
}
