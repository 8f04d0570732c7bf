//! Base learners: fit a model on one feature subset and report its in-sample
//! accuracy (R² for least squares, AUC for logistic regression).
//!
//! Both learners center the selected columns before solving. The intercept is
//! recovered afterwards, so reported coefficients are on the original scale
//! with the intercept first.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{Dataset, OutcomeKind};
use crate::sampler::FeatureSubset;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LearnerError {
    #[error("degenerate outcome: all outcome values are equal")]
    DegenerateOutcome,
    #[error("single-class outcome: AUC and logistic fits need both classes")]
    SingleClass,
    #[error("IRLS diverged: non-finite intermediate values")]
    Diverged,
    #[error("singular design: IRLS system cannot be factored (set ridge > 0)")]
    Singular,
    #[error("learner {learner} cannot be used with a {outcome} outcome")]
    OutcomeMismatch {
        learner: LearnerKind,
        outcome: OutcomeKind,
    },
    #[error("feature index {index} out of range for {p} features")]
    BadFeature { index: usize, p: usize },
    #[error("{0}")]
    Input(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LearnerKind {
    #[serde(alias = "ols")]
    OlsRSquared,
    #[serde(alias = "logistic")]
    LogisticAuc,
}

impl LearnerKind {
    pub fn outcome_kind(self) -> OutcomeKind {
        match self {
            LearnerKind::OlsRSquared => OutcomeKind::Continuous,
            LearnerKind::LogisticAuc => OutcomeKind::Binary,
        }
    }

    /// Criterion value that signals no association (used for failed fits).
    pub fn independence_value(self) -> f64 {
        match self {
            LearnerKind::OlsRSquared => 0.0,
            LearnerKind::LogisticAuc => 0.5,
        }
    }
}

impl std::fmt::Display for LearnerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LearnerKind::OlsRSquared => f.write_str("ols"),
            LearnerKind::LogisticAuc => f.write_str("logistic"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LearnerSpec {
    pub kind: LearnerKind,
    /// Penalty on the non-intercept curvature in IRLS.
    pub ridge: f64,
    pub max_iterations: usize,
    /// Convergence threshold on the largest coefficient change.
    pub tolerance: f64,
}

impl Default for LearnerSpec {
    fn default() -> Self {
        Self {
            kind: LearnerKind::OlsRSquared,
            ridge: 1e-8,
            max_iterations: 50,
            tolerance: 1e-8,
        }
    }
}

impl LearnerSpec {
    pub fn ols() -> Self {
        Self::default()
    }

    pub fn logistic() -> Self {
        Self {
            kind: LearnerKind::LogisticAuc,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.ridge >= 0.0 && self.ridge.is_finite()) {
            return Err(format!("ridge must be a non-negative number, got {}", self.ridge));
        }
        if self.max_iterations == 0 {
            return Err("max_iterations must be positive".into());
        }
        if !(self.tolerance > 0.0 && self.tolerance.is_finite()) {
            return Err(format!("tolerance must be positive, got {}", self.tolerance));
        }
        Ok(())
    }

    pub fn check_outcome(&self, outcome: OutcomeKind) -> Result<(), LearnerError> {
        if self.kind.outcome_kind() != outcome {
            return Err(LearnerError::OutcomeMismatch {
                learner: self.kind,
                outcome,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    /// Intercept first, then one coefficient per subset feature.
    pub coefficients: Vec<f64>,
    pub accuracy: f64,
    /// False for rank-deficient least squares or IRLS stopped at its cap.
    pub converged: bool,
}

impl FitResult {
    /// Linear predictor for every row of `ds` using the subset's columns.
    pub fn linear_predictor(&self, ds: &Dataset, subset: &FeatureSubset) -> Vec<f64> {
        let mut eta = vec![self.coefficients[0]; ds.n_rows()];
        for (c, &f) in subset.indices().iter().enumerate() {
            let b = self.coefficients[c + 1];
            for (e, &x) in eta.iter_mut().zip(ds.column(f)) {
                *e += b * x;
            }
        }
        eta
    }
}

/// Centered copy of the subset's columns (column-major, N x k) and their means.
struct CenteredDesign {
    cols: Vec<f64>,
    means: Vec<f64>,
    n: usize,
    k: usize,
}

impl CenteredDesign {
    fn build(ds: &Dataset, subset: &FeatureSubset) -> Result<Self, LearnerError> {
        let n = ds.n_rows();
        let k = subset.len();
        let mut cols = Vec::with_capacity(n * k);
        let mut means = Vec::with_capacity(k);
        for &f in subset.indices() {
            if f >= ds.n_features() {
                return Err(LearnerError::BadFeature {
                    index: f,
                    p: ds.n_features(),
                });
            }
            let col = ds.column(f);
            let m = mean(col);
            means.push(m);
            cols.extend(col.iter().map(|&x| x - m));
        }
        Ok(Self { cols, means, n, k })
    }

    fn col(&self, j: usize) -> &[f64] {
        &self.cols[j * self.n..(j + 1) * self.n]
    }

    /// Converts centered-scale slopes to (intercept, slopes...) on the raw scale.
    fn raw_coefficients(&self, center_intercept: f64, slopes: &[f64]) -> Vec<f64> {
        let shift: f64 = slopes.iter().zip(&self.means).map(|(b, m)| b * m).sum();
        let mut out = Vec::with_capacity(self.k + 1);
        out.push(center_intercept - shift);
        out.extend_from_slice(slopes);
        out
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Least-squares solution of `a * x = b` for a column-major `n x k` matrix by
/// Householder QR with column pivoting. `a` and `b` are overwritten. Returns
/// `None` when the numerical rank is below `k`.
fn pivoted_qr_solve(a: &mut [f64], b: &mut [f64], n: usize, k: usize) -> Option<Vec<f64>> {
    let steps = n.min(k);
    let mut perm: Vec<usize> = (0..k).collect();
    let mut diag = vec![0.0; steps];
    let mut tol = 0.0;
    for j in 0..steps {
        // Pivot on the largest remaining column norm.
        let (piv, _) = (j..k)
            .map(|c| (c, a[c * n + j..(c + 1) * n].iter().map(|x| x * x).sum::<f64>()))
            .fold((j, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        if piv != j {
            for r in 0..n {
                a.swap(j * n + r, piv * n + r);
            }
            perm.swap(j, piv);
        }
        let col = &a[j * n + j..(j + 1) * n];
        let norm = col.iter().map(|x| x * x).sum::<f64>().sqrt();
        if j == 0 {
            tol = n as f64 * f64::EPSILON * norm;
        }
        if norm <= tol || norm == 0.0 {
            return None;
        }
        let alpha = if col[0] > 0.0 { -norm } else { norm };
        let mut v: Vec<f64> = col.to_vec();
        v[0] -= alpha;
        let vtv: f64 = v.iter().map(|x| x * x).sum();
        diag[j] = alpha;
        a[j * n + j] = alpha;
        for r in j + 1..n {
            a[j * n + r] = 0.0;
        }
        if vtv == 0.0 {
            continue;
        }
        let scale = 2.0 / vtv;
        for c in j + 1..k {
            let cs = &mut a[c * n + j..(c + 1) * n];
            let d: f64 = cs.iter().zip(&v).map(|(x, y)| x * y).sum::<f64>() * scale;
            for (x, y) in cs.iter_mut().zip(&v) {
                *x -= d * y;
            }
        }
        let bs = &mut b[j..n];
        let d: f64 = bs.iter().zip(&v).map(|(x, y)| x * y).sum::<f64>() * scale;
        for (x, y) in bs.iter_mut().zip(&v) {
            *x -= d * y;
        }
    }
    if steps < k {
        return None;
    }
    // Back substitution on the upper triangle.
    let mut z = vec![0.0; k];
    for j in (0..k).rev() {
        let mut s = b[j];
        for c in j + 1..k {
            s -= a[c * n + j] * z[c];
        }
        z[j] = s / diag[j];
    }
    let mut x = vec![0.0; k];
    for (j, &p) in perm.iter().enumerate() {
        x[p] = z[j];
    }
    Some(x)
}

/// Minimum-norm least-squares slopes via SVD, for rank-deficient designs.
fn min_norm_solve(design: &CenteredDesign, y: &[f64]) -> Vec<f64> {
    let a = DMatrix::from_column_slice(design.n, design.k, &design.cols);
    let svd = a.svd(true, true);
    let smax = svd.singular_values.max();
    let eps = design.n.max(design.k) as f64 * f64::EPSILON * smax;
    let rhs = DVector::from_column_slice(y);
    match svd.solve(&rhs, eps) {
        Ok(sol) => sol.iter().copied().collect(),
        Err(_) => vec![0.0; design.k],
    }
}

/// Ordinary least squares with intercept; accuracy is R² = 1 - SSE/SST.
pub fn fit_ols(ds: &Dataset, subset: &FeatureSubset) -> Result<FitResult, LearnerError> {
    let y = ds.outcome();
    if y.iter().all(|&v| v == y[0]) {
        return Err(LearnerError::DegenerateOutcome);
    }
    let design = CenteredDesign::build(ds, subset)?;
    let y_mean = mean(y);
    let yc: Vec<f64> = y.iter().map(|&v| v - y_mean).collect();
    let sst: f64 = yc.iter().map(|v| v * v).sum();

    let (slopes, full_rank) = if design.k == 0 {
        (Vec::new(), true)
    } else {
        let mut a = design.cols.clone();
        let mut b = yc.clone();
        match pivoted_qr_solve(&mut a, &mut b, design.n, design.k) {
            Some(x) => (x, true),
            None => (min_norm_solve(&design, &yc), false),
        }
    };

    let mut resid = yc;
    for (j, &b) in slopes.iter().enumerate() {
        for (r, &x) in resid.iter_mut().zip(design.col(j)) {
            *r -= b * x;
        }
    }
    let sse: f64 = resid.iter().map(|r| r * r).sum();
    let r2 = (1.0 - sse / sst).clamp(0.0, 1.0);
    Ok(FitResult {
        coefficients: design.raw_coefficients(y_mean, &slopes),
        accuracy: r2,
        converged: full_rank,
    })
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Logistic regression by ridge-stabilized IRLS (Newton-Raphson on the
/// penalized log-likelihood, with step halving). Accuracy is the in-sample
/// AUC of the linear predictor, which orders rows exactly as the fitted
/// probabilities do but does not saturate into ties.
pub fn fit_logistic(
    ds: &Dataset,
    subset: &FeatureSubset,
    spec: &LearnerSpec,
) -> Result<FitResult, LearnerError> {
    let y = ds.outcome();
    let ones = y.iter().filter(|&&v| v == 1.0).count();
    if ones == 0 || ones == y.len() {
        return Err(LearnerError::SingleClass);
    }
    let design = CenteredDesign::build(ds, subset)?;
    let (n, k) = (design.n, design.k);
    let dim = k + 1;

    // theta[0] is the intercept on the centered scale.
    let mut theta = vec![0.0; dim];
    let p_bar = ones as f64 / n as f64;
    theta[0] = (p_bar / (1.0 - p_bar)).ln();

    let eta_of = |theta: &[f64]| -> Vec<f64> {
        let mut eta = vec![theta[0]; n];
        for j in 0..k {
            let b = theta[j + 1];
            for (e, &x) in eta.iter_mut().zip(design.col(j)) {
                *e += b * x;
            }
        }
        eta
    };
    let objective = |theta: &[f64], eta: &[f64]| -> f64 {
        let ll: f64 = eta.iter().zip(y).map(|(&e, &t)| t * e - softplus(e)).sum();
        let pen: f64 = theta[1..].iter().map(|b| b * b).sum::<f64>() * 0.5 * spec.ridge;
        ll - pen
    };

    let mut eta = eta_of(&theta);
    let mut obj = objective(&theta, &eta);
    let mut converged = false;

    for iter in 0..spec.max_iterations {
        let mu: Vec<f64> = eta.iter().map(|&e| sigmoid(e)).collect();
        let w: Vec<f64> = mu.iter().map(|&m| m * (1.0 - m)).collect();
        let resid: Vec<f64> = y.iter().zip(&mu).map(|(t, m)| t - m).collect();

        let mut grad = DVector::zeros(dim);
        let mut hess = DMatrix::zeros(dim, dim);
        grad[0] = resid.iter().sum();
        hess[(0, 0)] = w.iter().sum();
        for a in 0..k {
            let xa = design.col(a);
            grad[a + 1] = xa.iter().zip(&resid).map(|(x, r)| x * r).sum::<f64>()
                - spec.ridge * theta[a + 1];
            let h0: f64 = xa.iter().zip(&w).map(|(x, w)| x * w).sum();
            hess[(0, a + 1)] = h0;
            hess[(a + 1, 0)] = h0;
            for b in 0..=a {
                let xb = design.col(b);
                let h: f64 = xa
                    .iter()
                    .zip(xb)
                    .zip(&w)
                    .map(|((x1, x2), w)| x1 * x2 * w)
                    .sum();
                hess[(a + 1, b + 1)] = h;
                hess[(b + 1, a + 1)] = h;
            }
            hess[(a + 1, a + 1)] += spec.ridge;
        }
        if grad.iter().chain(hess.iter()).any(|v| !v.is_finite()) {
            return Err(LearnerError::Diverged);
        }
        let step = match hess.cholesky() {
            Some(ch) => ch.solve(&grad),
            // Singular at the start means a singular design; later it means
            // the weights have collapsed under separation.
            None if iter == 0 => return Err(LearnerError::Singular),
            None => break,
        };
        if step.iter().any(|v| !v.is_finite()) {
            return Err(LearnerError::Diverged);
        }

        if step.amax() < spec.tolerance {
            for (t, s) in theta.iter_mut().zip(step.iter()) {
                *t += s;
            }
            eta = eta_of(&theta);
            converged = true;
            break;
        }

        let mut accepted = false;
        let mut scale = 1.0;
        for _ in 0..30 {
            let cand: Vec<f64> = theta
                .iter()
                .zip(step.iter())
                .map(|(t, s)| t + scale * s)
                .collect();
            let cand_eta = eta_of(&cand);
            let cand_obj = objective(&cand, &cand_eta);
            if cand_obj.is_finite() && cand_obj >= obj {
                theta = cand;
                eta = cand_eta;
                obj = cand_obj;
                accepted = true;
                break;
            }
            scale *= 0.5;
        }
        if !accepted {
            break;
        }
    }

    if theta.iter().chain(&eta).any(|v| !v.is_finite()) {
        return Err(LearnerError::Diverged);
    }
    let labels: Vec<u8> = y.iter().map(|&t| t as u8).collect();
    let accuracy = auc(&eta, &labels)?;
    Ok(FitResult {
        coefficients: design.raw_coefficients(theta[0], &theta[1..]),
        accuracy,
        converged,
    })
}

/// Area under the ROC curve in Mann-Whitney form: the fraction of
/// (positive, negative) pairs ordered correctly, ties counting one half.
/// Computed from midranks in O(N log N).
pub fn auc(scores: &[f64], labels: &[u8]) -> Result<f64, LearnerError> {
    if scores.len() != labels.len() {
        return Err(LearnerError::Input(format!(
            "{} scores for {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if let Some(&l) = labels.iter().find(|&&l| l > 1) {
        return Err(LearnerError::Input(format!("label {l} is not 0 or 1")));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(LearnerError::Input("non-finite score".into()));
    }
    let n_pos = labels.iter().filter(|&&l| l == 1).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(LearnerError::SingleClass);
    }
    let ranks = midranks_ascending(scores);
    let pos_rank_sum: f64 = ranks
        .iter()
        .zip(labels)
        .filter(|(_, &l)| l == 1)
        .map(|(r, _)| r)
        .sum();
    let np = n_pos as f64;
    let u = pos_rank_sum - np * (np + 1.0) / 2.0;
    Ok(u / (np * n_neg as f64))
}

/// 1-based ascending ranks with ties sharing the average of their positions.
pub(crate) fn midranks_ascending(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && values[order[j]] == values[order[i]] {
            j += 1;
        }
        let r = (i + 1 + j) as f64 / 2.0;
        for &idx in &order[i..j] {
            ranks[idx] = r;
        }
        i = j;
    }
    ranks
}

/// Fits the configured learner and returns its full result.
pub fn fit(ds: &Dataset, subset: &FeatureSubset, spec: &LearnerSpec) -> Result<FitResult, LearnerError> {
    spec.check_outcome(ds.outcome_kind())?;
    match spec.kind {
        LearnerKind::OlsRSquared => fit_ols(ds, subset),
        LearnerKind::LogisticAuc => fit_logistic(ds, subset, spec),
    }
}

/// In-sample accuracy of the configured learner on one subset.
pub fn accuracy_of(ds: &Dataset, subset: &FeatureSubset, spec: &LearnerSpec) -> Result<f64, LearnerError> {
    fit(ds, subset, spec).map(|r| r.accuracy)
}

/// Fits on `train` and scores `holdout` with the same criterion. Holdout R²
/// uses the holdout mean and may be negative. Returns `None` when the holdout
/// cannot be scored (constant outcome or a single class).
pub fn holdout_accuracy(
    train: &Dataset,
    holdout: &Dataset,
    subset: &FeatureSubset,
    spec: &LearnerSpec,
) -> Result<(FitResult, Option<f64>), LearnerError> {
    let fitted = fit(train, subset, spec)?;
    let eta = fitted.linear_predictor(holdout, subset);
    let y = holdout.outcome();
    let score = match spec.kind {
        LearnerKind::OlsRSquared => {
            let m = mean(y);
            let sst: f64 = y.iter().map(|v| (v - m).powi(2)).sum();
            let sse: f64 = y.iter().zip(&eta).map(|(v, e)| (v - e).powi(2)).sum();
            (sst > 0.0).then(|| 1.0 - sse / sst)
        }
        LearnerKind::LogisticAuc => {
            let labels: Vec<u8> = y.iter().map(|&t| t as u8).collect();
            auc(&eta, &labels).ok()
        }
    };
    Ok((fitted, score))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn cont(cols: &[&[f64]], y: &[f64]) -> Dataset {
        let n = y.len();
        let flat: Vec<f64> = cols.iter().flat_map(|c| c.iter().copied()).collect();
        assert_eq!(flat.len(), n * cols.len());
        Dataset::from_columns(flat, n, y.to_vec(), OutcomeKind::Continuous, None).unwrap()
    }

    fn bin(cols: &[&[f64]], y: &[f64]) -> Dataset {
        let flat: Vec<f64> = cols.iter().flat_map(|c| c.iter().copied()).collect();
        Dataset::from_columns(flat, y.len(), y.to_vec(), OutcomeKind::Binary, None).unwrap()
    }

    fn all(k: usize) -> FeatureSubset {
        FeatureSubset::new((0..k).collect()).unwrap()
    }

    /// Brute-force pair count: the definition AUC must reproduce.
    fn auc_pairs(scores: &[f64], labels: &[u8]) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for (i, &li) in labels.iter().enumerate() {
            if li != 1 {
                continue;
            }
            for (j, &lj) in labels.iter().enumerate() {
                if lj != 0 {
                    continue;
                }
                den += 1.0;
                if scores[i] > scores[j] {
                    num += 1.0;
                } else if scores[i] == scores[j] {
                    num += 0.5;
                }
            }
        }
        num / den
    }

    #[test]
    fn ols_exact_line() {
        let ds = cont(&[&[0.0, 1.0, 2.0]], &[0.0, 2.0, 4.0]);
        let r = fit_ols(&ds, &all(1)).unwrap();
        assert!(r.coefficients[0].abs() < 1e-12);
        assert!((r.coefficients[1] - 2.0).abs() < 1e-12);
        assert_eq!(r.accuracy, 1.0);
        assert!(r.converged);
    }

    #[test]
    fn ols_simple_regression_by_hand() {
        // slope = cov/var = (1/2), intercept = 2/3 - 1/2 = 1/6, R² = 1 - (1/6)/(2/3)
        let ds = cont(&[&[0.0, 1.0, 2.0]], &[0.0, 1.0, 1.0]);
        let r = fit_ols(&ds, &all(1)).unwrap();
        assert!((r.coefficients[0] - 1.0 / 6.0).abs() < 1e-10);
        assert!((r.coefficients[1] - 0.5).abs() < 1e-10);
        assert!((r.accuracy - 0.75).abs() < 1e-10);
    }

    #[test]
    fn ols_constant_outcome_is_degenerate() {
        let ds = cont(&[&[0.0, 1.0, 2.0]], &[3.0, 3.0, 3.0]);
        assert_eq!(fit_ols(&ds, &all(1)), Err(LearnerError::DegenerateOutcome));
    }

    #[test]
    fn ols_rank_deficient_gives_min_norm() {
        // Duplicate column: min-norm splits the slope evenly.
        let x = [0.0, 1.0, 2.0, 3.0];
        let ds = cont(&[&x, &x], &[1.0, 3.0, 5.0, 7.0]);
        let r = fit_ols(&ds, &all(2)).unwrap();
        assert!(!r.converged);
        assert!((r.coefficients[1] - 1.0).abs() < 1e-10);
        assert!((r.coefficients[2] - 1.0).abs() < 1e-10);
        assert!((r.coefficients[0] - 1.0).abs() < 1e-10);
        assert!((r.accuracy - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ols_more_features_than_rows() {
        let ds = cont(
            &[&[1.0, 2.0, 4.0], &[0.0, 1.0, 0.0], &[5.0, 1.0, 2.0], &[3.0, 3.0, 1.0]],
            &[1.0, 0.0, 2.0],
        );
        let r = fit_ols(&ds, &all(4)).unwrap();
        assert!(!r.converged);
        assert!(r.accuracy.is_finite() && (0.0..=1.0).contains(&r.accuracy));
    }

    fn random_dataset(seed: u64, n: usize, p: usize) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cols: Vec<f64> = (0..n * p).map(|_| rng.sample(StandardNormal)).collect();
        let y: Vec<f64> = (0..n)
            .map(|r| cols[r] - 0.5 * cols[n + r] + rng.sample::<f64, _>(StandardNormal))
            .collect();
        Dataset::from_columns(cols, n, y, OutcomeKind::Continuous, None).unwrap()
    }

    #[test]
    fn ols_residuals_orthogonal_to_design() {
        for seed in 0..20 {
            let ds = random_dataset(seed, 60, 6);
            let subset = all(6);
            let r = fit_ols(&ds, &subset).unwrap();
            let eta = r.linear_predictor(&ds, &subset);
            let resid: Vec<f64> = ds.outcome().iter().zip(&eta).map(|(y, e)| y - e).collect();
            assert!(resid.iter().sum::<f64>().abs() < 1e-8);
            for j in 0..6 {
                let d: f64 = resid.iter().zip(ds.column(j)).map(|(a, b)| a * b).sum();
                assert!(d.abs() < 1e-8, "column {j}: {d}");
            }
        }
    }

    #[test]
    fn ols_r2_invariant_under_affine_feature_maps() {
        let ds = random_dataset(3, 40, 4);
        let base = fit_ols(&ds, &all(4)).unwrap().accuracy;
        for (a, b) in [(2.5, -7.0), (-0.01, 1e3), (1e4, 0.5)] {
            let mut cols = Vec::new();
            for j in 0..4 {
                let c = ds.column(j);
                if j == 1 {
                    cols.extend(c.iter().map(|x| a * x + b));
                } else {
                    cols.extend_from_slice(c);
                }
            }
            let t = Dataset::from_columns(cols, 40, ds.outcome().to_vec(), OutcomeKind::Continuous, None)
                .unwrap();
            let r2 = fit_ols(&t, &all(4)).unwrap().accuracy;
            assert!((r2 - base).abs() < 1e-10, "{r2} vs {base}");
        }
    }

    #[test]
    fn auc_examples() {
        assert_eq!(auc(&[0.1, 0.2, 0.8, 0.9], &[0, 0, 1, 1]).unwrap(), 1.0);
        assert_eq!(auc(&[0.3; 4], &[0, 1, 0, 1]).unwrap(), 0.5);
        assert_eq!(auc(&[0.9, 0.2, 0.8, 0.1], &[0, 0, 1, 1]).unwrap(), 0.25);
        assert_eq!(auc(&[0.9, 0.2], &[1, 1]), Err(LearnerError::SingleClass));
    }

    #[test]
    fn auc_midranks_equal_pair_count_with_ties() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let n = rng.random_range(2..=50);
            let mut labels: Vec<u8> = (0..n).map(|_| rng.random_range(0..2)).collect();
            labels[0] = 0;
            labels[1] = 1;
            let scores: Vec<f64> = (0..n).map(|_| rng.random_range(0..8) as f64 / 4.0).collect();
            assert_eq!(auc(&scores, &labels).unwrap(), auc_pairs(&scores, &labels));
        }
    }

    proptest! {
        #[test]
        fn auc_of_negated_scores_is_complement(
            mut scores in proptest::collection::hash_set(-1_000_000i64..1_000_000, 2..40),
            bits in proptest::collection::vec(0u8..2, 40),
        ) {
            let scores: Vec<f64> = scores.drain().map(|s| s as f64 / 7.0).collect();
            let mut labels: Vec<u8> = bits[..scores.len()].to_vec();
            labels[0] = 0;
            labels[1] = 1;
            let neg: Vec<f64> = scores.iter().map(|s| -s).collect();
            let a = auc(&scores, &labels).unwrap();
            let b = auc(&neg, &labels).unwrap();
            prop_assert!((a + b - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn logistic_separable_pair() {
        let ds = bin(&[&[0.0, 1.0]], &[0.0, 1.0]);
        let r = fit_logistic(&ds, &all(1), &LearnerSpec::logistic()).unwrap();
        assert_eq!(r.accuracy, 1.0);
        assert!(r.coefficients.iter().all(|c| c.is_finite()));
    }

    #[test]
    fn logistic_on_noise_is_near_half() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let n = 1000;
        let x: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let y: Vec<f64> = (0..n).map(|i| (i % 2) as f64).collect();
        let ds = bin(&[&x], &y);
        let r = fit_logistic(&ds, &all(1), &LearnerSpec::logistic()).unwrap();
        assert!(r.converged);
        assert!((r.accuracy - 0.5).abs() < 0.05, "{}", r.accuracy);
    }

    #[test]
    fn logistic_collinear_without_ridge_is_an_error_not_nan() {
        let x = [0.0, 1.0, 2.0, 3.0, 4.0, 5.0];
        let ds = bin(&[&x, &x], &[0.0, 1.0, 0.0, 1.0, 1.0, 0.0]);
        let spec = LearnerSpec {
            ridge: 0.0,
            ..LearnerSpec::logistic()
        };
        match fit_logistic(&ds, &all(2), &spec) {
            Err(LearnerError::Singular) => {}
            Ok(r) => {
                assert!(!r.converged);
                assert!(r.accuracy.is_finite());
            }
            Err(e) => panic!("unexpected error {e}"),
        }
        // The default ridge resolves it.
        let r = fit_logistic(&ds, &all(2), &LearnerSpec::logistic()).unwrap();
        assert!(r.accuracy.is_finite());
    }

    #[test]
    fn logistic_matches_gradient_ascent_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let n = 600;
        let truth = [0.3, 1.2, -0.8];
        let x1: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let x2: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let y: Vec<f64> = (0..n)
            .map(|i| {
                let p = sigmoid(truth[0] + truth[1] * x1[i] + truth[2] * x2[i]);
                (rng.random::<f64>() < p) as u8 as f64
            })
            .collect();
        let ds = bin(&[&x1, &x2], &y);
        let r = fit_logistic(&ds, &all(2), &LearnerSpec::logistic()).unwrap();
        assert!(r.converged);

        // Plain gradient ascent on the mean log-likelihood, run long.
        let mut b = [0.0f64; 3];
        for _ in 0..20_000 {
            let mut g = [0.0; 3];
            for i in 0..n {
                let e = y[i] - sigmoid(b[0] + b[1] * x1[i] + b[2] * x2[i]);
                g[0] += e;
                g[1] += e * x1[i];
                g[2] += e * x2[i];
            }
            for j in 0..3 {
                b[j] += 0.5 * g[j] / n as f64;
            }
        }
        for j in 0..3 {
            let rel = (r.coefficients[j] - b[j]).abs() / b[j].abs();
            assert!(rel < 0.10, "coef {j}: irls {} vs oracle {}", r.coefficients[j], b[j]);
        }
    }

    #[test]
    fn accuracy_dispatch_and_purity() {
        let ds = cont(&[&[0.0, 1.0, 2.0]], &[0.0, 2.0, 4.0]);
        assert_eq!(accuracy_of(&ds, &all(1), &LearnerSpec::ols()).unwrap(), 1.0);
        let ds = random_dataset(9, 30, 3);
        let a = accuracy_of(&ds, &all(3), &LearnerSpec::ols()).unwrap();
        let b = accuracy_of(&ds, &all(3), &LearnerSpec::ols()).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
        assert!(matches!(
            accuracy_of(&ds, &all(3), &LearnerSpec::logistic()),
            Err(LearnerError::OutcomeMismatch { .. })
        ));
        let sep = bin(&[&[0.0, 1.0, 2.0, 3.0]], &[0.0, 0.0, 1.0, 1.0]);
        assert_eq!(accuracy_of(&sep, &all(1), &LearnerSpec::logistic()).unwrap(), 1.0);
    }

    #[test]
    fn holdout_scoring() {
        let train = cont(&[&[0.0, 1.0, 2.0, 3.0]], &[1.0, 3.0, 5.0, 7.0]);
        let hold = cont(&[&[4.0, 5.0]], &[9.0, 11.0]);
        let (fit, score) = holdout_accuracy(&train, &hold, &all(1), &LearnerSpec::ols()).unwrap();
        assert!((fit.coefficients[1] - 2.0).abs() < 1e-12);
        assert!((score.unwrap() - 1.0).abs() < 1e-12);
    }
}
