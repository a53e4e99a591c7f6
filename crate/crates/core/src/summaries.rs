//! Summary statistics, discrepancy measures and approximate likelihoods.
//!
//! All operations here are pure and reentrant; worker lanes call them
//! concurrently without coordination.

use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::DataSet;

/// Fixed-length real vector extracted from a data array.
pub type SummaryVector = Vec<f64>;

#[derive(Debug, Error, PartialEq)]
pub enum SummaryError {
    #[error("summary vectors have different lengths ({left} vs {right})")]
    LengthMismatch { left: usize, right: usize },
    #[error("data shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("covariance of simulated statistics is singular; increase the number of simulations")]
    SingularCovariance,
    #[error("dataset has {got} arrays, expected {expected}")]
    RootCountMismatch { expected: usize, got: usize },
    #[error("{values} distance values but {weights} weights")]
    WeightCountMismatch { values: usize, weights: usize },
    #[error("combination weights must be nonnegative")]
    NegativeWeight,
    #[error("non-finite value in input")]
    NonFinite,
}

/// Extracts a fixed-length summary from one data array.
pub trait Statistics: Send + Sync {
    /// Name used in config echoes.
    fn name(&self) -> &str;

    /// The summary vector of a whole array.
    fn summary(&self, array: &[f64]) -> Result<SummaryVector, SummaryError>;

    /// Per-sample rows consumed by classifier distances. The default treats
    /// each scalar entry as one sample.
    fn sample_rows(&self, array: &[f64]) -> Result<Vec<Vec<f64>>, SummaryError> {
        Ok(array.iter().map(|&v| vec![v]).collect())
    }
}

/// Passes the flattened data through unchanged.
pub struct Identity;

impl Statistics for Identity {
    fn name(&self) -> &str {
        "identity"
    }

    fn summary(&self, array: &[f64]) -> Result<SummaryVector, SummaryError> {
        Ok(array.to_vec())
    }
}

/// Six time-series moments of a cyclic 40-site trajectory, each averaged
/// over the sites: mean, variance, lag-1 auto-covariance, covariance with
/// the right neighbor, and lag-1 cross-covariances with the left and right
/// neighbors.
///
/// Inputs are row-major with one row per time step and 40 columns. Variance
/// and covariances divide by the number of summed terms (`T` for lag 0,
/// `T - 1` for lag 1), with deviations taken from the per-site mean.
pub struct HakkarainenLorenz;

impl HakkarainenLorenz {
    pub const N_SITES: usize = 40;
    pub const DIM: usize = 6;
}

impl Statistics for HakkarainenLorenz {
    fn name(&self) -> &str {
        "hakkarainen-lorenz"
    }

    fn summary(&self, array: &[f64]) -> Result<SummaryVector, SummaryError> {
        let n = Self::N_SITES;
        if array.len() % n != 0 {
            return Err(SummaryError::ShapeMismatch(format!(
                "array length {} is not a multiple of {n} sites",
                array.len()
            )));
        }
        let t_len = array.len() / n;
        if t_len < 2 {
            return Err(SummaryError::ShapeMismatch(format!(
                "need at least 2 time steps, got {t_len}"
            )));
        }
        let at = |t: usize, k: usize| array[t * n + k];

        let mut means = vec![0.0; n];
        for k in 0..n {
            means[k] = (0..t_len).map(|t| at(t, k)).sum::<f64>() / t_len as f64;
        }

        let mut variance = 0.0;
        let mut auto_cov = 0.0;
        let mut neighbor_cov = 0.0;
        let mut cross_left = 0.0;
        let mut cross_right = 0.0;
        for k in 0..n {
            let left = (k + n - 1) % n;
            let right = (k + 1) % n;
            let mut var_k = 0.0;
            let mut auto_k = 0.0;
            let mut nb_k = 0.0;
            let mut cl_k = 0.0;
            let mut cr_k = 0.0;
            for t in 0..t_len {
                let dev = at(t, k) - means[k];
                var_k += dev * dev;
                nb_k += dev * (at(t, right) - means[right]);
                if t + 1 < t_len {
                    auto_k += dev * (at(t + 1, k) - means[k]);
                    cl_k += dev * (at(t + 1, left) - means[left]);
                    cr_k += dev * (at(t + 1, right) - means[right]);
                }
            }
            variance += var_k / t_len as f64;
            neighbor_cov += nb_k / t_len as f64;
            auto_cov += auto_k / (t_len - 1) as f64;
            cross_left += cl_k / (t_len - 1) as f64;
            cross_right += cr_k / (t_len - 1) as f64;
        }
        let scale = 1.0 / n as f64;
        Ok(vec![
            means.iter().sum::<f64>() * scale,
            variance * scale,
            auto_cov * scale,
            neighbor_cov * scale,
            cross_left * scale,
            cross_right * scale,
        ])
    }

    /// A whole trajectory is one sample.
    fn sample_rows(&self, array: &[f64]) -> Result<Vec<Vec<f64>>, SummaryError> {
        Ok(vec![self.summary(array)?])
    }
}

/// L2 norm of the difference of two equal-length summary vectors.
pub fn euclidean_distance(s1: &[f64], s2: &[f64]) -> Result<f64, SummaryError> {
    if s1.len() != s2.len() {
        return Err(SummaryError::LengthMismatch {
            left: s1.len(),
            right: s2.len(),
        });
    }
    Ok(s1
        .iter()
        .zip(s2)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt())
}

/// Weighted sum of per-root distances.
pub fn combine_distances(values: &[f64], weights: &[f64]) -> Result<f64, SummaryError> {
    if values.len() != weights.len() {
        return Err(SummaryError::WeightCountMismatch {
            values: values.len(),
            weights: weights.len(),
        });
    }
    if weights.iter().any(|&w| w < 0.0) {
        return Err(SummaryError::NegativeWeight);
    }
    Ok(values.iter().zip(weights).map(|(v, w)| v * w).sum())
}

/// Discrepancy between two data arrays.
pub trait Distance: Send + Sync {
    fn name(&self) -> &str;

    fn distance(&self, observed: &[f64], simulated: &[f64]) -> Result<f64, SummaryError>;
}

/// Euclidean distance between the summary vectors of two arrays.
pub struct Euclidean {
    pub statistics: Arc<dyn Statistics>,
}

impl Euclidean {
    pub fn new(statistics: Arc<dyn Statistics>) -> Self {
        Self { statistics }
    }
}

impl Distance for Euclidean {
    fn name(&self) -> &str {
        "euclidean"
    }

    fn distance(&self, observed: &[f64], simulated: &[f64]) -> Result<f64, SummaryError> {
        euclidean_distance(
            &self.statistics.summary(observed)?,
            &self.statistics.summary(simulated)?,
        )
    }
}

/// Training accuracy of a logistic-regression classifier told to separate
/// the two datasets; 0.5 means indistinguishable, 1.0 cleanly separable.
pub struct LogReg {
    pub statistics: Arc<dyn Statistics>,
}

impl LogReg {
    pub fn new(statistics: Arc<dyn Statistics>) -> Self {
        Self { statistics }
    }
}

impl Distance for LogReg {
    fn name(&self) -> &str {
        "logreg"
    }

    fn distance(&self, observed: &[f64], simulated: &[f64]) -> Result<f64, SummaryError> {
        logreg_distance(
            &self.statistics.sample_rows(observed)?,
            &self.statistics.sample_rows(simulated)?,
        )
    }
}

const LOGREG_PENALTY: f64 = 1e-3;
const LOGREG_MAX_ITER: usize = 500;

/// Classification accuracy of an L2-penalized logistic regression trained
/// to distinguish the rows of `a` from the rows of `b`, evaluated on the
/// training data. Deterministic: full-batch gradient descent from zero
/// weights with backtracking line search. Degenerate inputs (all rows
/// identical) return 0.5.
pub fn logreg_distance(a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<f64, SummaryError> {
    if a.len() < 2 || b.len() < 2 {
        return Err(SummaryError::TooFewSamples {
            needed: 2,
            got: a.len().min(b.len()),
        });
    }
    let dim = a[0].len();
    for row in a.iter().chain(b) {
        if row.len() != dim {
            return Err(SummaryError::LengthMismatch {
                left: dim,
                right: row.len(),
            });
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(SummaryError::NonFinite);
        }
    }
    let first = &a[0];
    if a.iter().chain(b).all(|row| row == first) {
        return Ok(0.5);
    }

    let n = a.len() + b.len();
    let rows: Vec<&Vec<f64>> = a.iter().chain(b).collect();
    let labels: Vec<f64> = (0..n).map(|i| if i < a.len() { 0.0 } else { 1.0 }).collect();

    // w holds the feature weights, the last slot the intercept.
    let mut w = vec![0.0; dim + 1];
    let mut loss = logreg_loss(&rows, &labels, &w);
    for _ in 0..LOGREG_MAX_ITER {
        let grad = logreg_gradient(&rows, &labels, &w);
        let grad_norm2: f64 = grad.iter().map(|g| g * g).sum();
        if grad_norm2 < 1e-20 {
            break;
        }
        let mut step = 1.0;
        loop {
            let trial: Vec<f64> = w.iter().zip(&grad).map(|(wi, gi)| wi - step * gi).collect();
            let trial_loss = logreg_loss(&rows, &labels, &trial);
            if trial_loss <= loss - 1e-4 * step * grad_norm2 {
                w = trial;
                loss = trial_loss;
                break;
            }
            step *= 0.5;
            if step < 1e-12 {
                break;
            }
        }
        if step < 1e-12 {
            break;
        }
    }

    let correct = rows
        .iter()
        .zip(&labels)
        .filter(|(row, &label)| {
            let p = sigmoid(linear_score(row, &w));
            let predicted = if p >= 0.5 { 1.0 } else { 0.0 };
            predicted == label
        })
        .count();
    Ok(correct as f64 / n as f64)
}

fn linear_score(row: &[f64], w: &[f64]) -> f64 {
    let dim = w.len() - 1;
    row.iter().zip(&w[..dim]).map(|(x, wi)| x * wi).sum::<f64>() + w[dim]
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

fn logreg_loss(rows: &[&Vec<f64>], labels: &[f64], w: &[f64]) -> f64 {
    let n = rows.len() as f64;
    let dim = w.len() - 1;
    let data: f64 = rows
        .iter()
        .zip(labels)
        .map(|(row, &y)| {
            let z = linear_score(row, w);
            // ln(1 + e^z) - y z, computed stably.
            z.max(0.0) + (-z.abs()).exp().ln_1p() - y * z
        })
        .sum();
    let penalty: f64 = w[..dim].iter().map(|wi| wi * wi).sum();
    data / n + 0.5 * LOGREG_PENALTY * penalty
}

fn logreg_gradient(rows: &[&Vec<f64>], labels: &[f64], w: &[f64]) -> Vec<f64> {
    let n = rows.len() as f64;
    let dim = w.len() - 1;
    let mut grad = vec![0.0; dim + 1];
    for (row, &y) in rows.iter().zip(labels) {
        let residual = sigmoid(linear_score(row, w)) - y;
        for (gi, xi) in grad[..dim].iter_mut().zip(row.iter()) {
            *gi += residual * xi;
        }
        grad[dim] += residual;
    }
    for g in grad.iter_mut() {
        *g /= n;
    }
    for (gi, wi) in grad[..dim].iter_mut().zip(w) {
        *gi += LOGREG_PENALTY * wi;
    }
    grad
}

const SYNLIK_JITTER: f64 = 1e-6;

/// Multivariate normal density fitted to simulated summary rows and
/// evaluated at the observed summary.
///
/// The fit uses the unbiased sample covariance with a ridge of
/// `1e-6 * trace / dim` added to the diagonal before factorization. Two
/// rows are the bare minimum for a covariance estimate; samplers that rely
/// on a stable fit enforce the stronger `dim + 2` floor on their simulation
/// budget.
pub fn synthetic_likelihood(
    observed: &[f64],
    simulated: &[Vec<f64>],
) -> Result<f64, SummaryError> {
    let dim = observed.len();
    let n = simulated.len();
    if n < 2 {
        return Err(SummaryError::TooFewSamples { needed: 2, got: n });
    }
    for row in simulated {
        if row.len() != dim {
            return Err(SummaryError::LengthMismatch {
                left: dim,
                right: row.len(),
            });
        }
    }

    let mut mean = DVector::zeros(dim);
    for row in simulated {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    mean /= n as f64;

    let mut cov = DMatrix::zeros(dim, dim);
    for row in simulated {
        let dev = DVector::from_iterator(dim, row.iter().copied()) - &mean;
        cov += &dev * dev.transpose();
    }
    cov /= (n - 1) as f64;

    let ridge = SYNLIK_JITTER * cov.trace() / dim as f64;
    for i in 0..dim {
        cov[(i, i)] += ridge;
    }

    let chol = Cholesky::new(cov).ok_or(SummaryError::SingularCovariance)?;
    let dev = DVector::from_iterator(dim, observed.iter().copied()) - mean;
    let solved = chol.l().solve_lower_triangular(&dev).unwrap();
    let quad: f64 = solved.norm_squared();
    let log_det: f64 = chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>() * 2.0;
    let log_density =
        -0.5 * (dim as f64 * (2.0 * std::f64::consts::PI).ln() + log_det + quad);
    Ok(log_density.exp())
}

/// Evaluates an approximate likelihood at the observed summary from
/// simulated summary rows.
pub trait ApproxLikelihood: Send + Sync {
    fn name(&self) -> &str;

    fn evaluate(&self, observed: &[f64], simulated: &[Vec<f64>]) -> Result<f64, SummaryError>;
}

/// The synthetic-likelihood approximation.
pub struct SyntheticLikelihood;

impl ApproxLikelihood for SyntheticLikelihood {
    fn name(&self) -> &str {
        "synthetic-likelihood"
    }

    fn evaluate(&self, observed: &[f64], simulated: &[Vec<f64>]) -> Result<f64, SummaryError> {
        synthetic_likelihood(observed, simulated)
    }
}

/// Dataset-level discrepancy: one distance per root, combined linearly.
#[derive(Clone, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DistanceWeights(pub Vec<f64>);

pub struct DatasetDistance {
    per_root: Vec<Arc<dyn Distance>>,
    weights: Vec<f64>,
}

impl DatasetDistance {
    pub fn new(per_root: Vec<Arc<dyn Distance>>, weights: Vec<f64>) -> Result<Self, SummaryError> {
        if per_root.len() != weights.len() {
            return Err(SummaryError::WeightCountMismatch {
                values: per_root.len(),
                weights: weights.len(),
            });
        }
        if weights.iter().any(|&w| w < 0.0) {
            return Err(SummaryError::NegativeWeight);
        }
        Ok(Self { per_root, weights })
    }

    /// The same distance on every root with unit weights.
    pub fn uniform(distance: Arc<dyn Distance>, n_roots: usize) -> Self {
        Self {
            per_root: vec![distance; n_roots],
            weights: vec![1.0; n_roots],
        }
    }

    pub fn n_roots(&self) -> usize {
        self.per_root.len()
    }

    pub fn evaluate(&self, observed: &DataSet, simulated: &DataSet) -> Result<f64, SummaryError> {
        if observed.arrays.len() != self.per_root.len() {
            return Err(SummaryError::RootCountMismatch {
                expected: self.per_root.len(),
                got: observed.arrays.len(),
            });
        }
        if simulated.arrays.len() != self.per_root.len() {
            return Err(SummaryError::RootCountMismatch {
                expected: self.per_root.len(),
                got: simulated.arrays.len(),
            });
        }
        let values = self
            .per_root
            .iter()
            .zip(&observed.arrays)
            .zip(&simulated.arrays)
            .map(|((d, obs), sim)| d.distance(obs, sim))
            .collect::<Result<Vec<f64>, _>>()?;
        combine_distances(&values, &self.weights)
    }
}

/// Summary of a whole dataset: per-root summaries concatenated in root
/// order. This is the vector approximate likelihoods are evaluated at.
pub fn dataset_summary(
    statistics: &Arc<dyn Statistics>,
    dataset: &DataSet,
) -> Result<SummaryVector, SummaryError> {
    let mut out = Vec::new();
    for array in &dataset.arrays {
        out.extend(statistics.summary(array)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::task_rng;
    use approx::assert_relative_eq;
    use rand::Rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn identity_returns_input_unchanged() {
        let s = Identity.summary(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(s, vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn euclidean_basics() {
        assert_eq!(euclidean_distance(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(euclidean_distance(&[0.0, 0.0], &[3.0, 4.0]).unwrap(), 5.0);
        assert!(euclidean_distance(&[0.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn euclidean_metric_axioms_on_random_triples() {
        let mut rng = task_rng(11, &[]);
        for _ in 0..200 {
            let a: Vec<f64> = (0..4).map(|_| rng.random_range(-5.0..5.0)).collect();
            let b: Vec<f64> = (0..4).map(|_| rng.random_range(-5.0..5.0)).collect();
            let c: Vec<f64> = (0..4).map(|_| rng.random_range(-5.0..5.0)).collect();
            let dab = euclidean_distance(&a, &b).unwrap();
            let dba = euclidean_distance(&b, &a).unwrap();
            let dac = euclidean_distance(&a, &c).unwrap();
            let dcb = euclidean_distance(&c, &b).unwrap();
            assert!(dab >= 0.0);
            assert_relative_eq!(dab, dba, max_relative = 1e-12);
            assert!(dab <= dac + dcb + 1e-12);
        }
    }

    #[test]
    fn combine_distances_cases() {
        assert_eq!(combine_distances(&[2.0], &[1.0]).unwrap(), 2.0);
        assert_eq!(combine_distances(&[1.0, 3.0], &[1.0, 1.0]).unwrap(), 4.0);
        assert_eq!(combine_distances(&[1.0, 3.0], &[0.5, 0.5]).unwrap(), 2.0);
        assert!(combine_distances(&[1.0], &[1.0, 2.0]).is_err());
        assert!(combine_distances(&[1.0], &[-0.1]).is_err());
    }

    #[test]
    fn hakkarainen_constant_series_is_mean_and_zeros() {
        let c = 7.25;
        let t_len = 16;
        let array = vec![c; t_len * 40];
        let s = HakkarainenLorenz.summary(&array).unwrap();
        assert_eq!(s.len(), 6);
        assert_eq!(s[0], c);
        for v in &s[1..] {
            assert_eq!(*v, 0.0);
        }
    }

    #[test]
    fn hakkarainen_rejects_bad_shapes() {
        assert!(HakkarainenLorenz.summary(&vec![0.0; 41]).is_err());
        assert!(HakkarainenLorenz.summary(&vec![0.0; 40]).is_err());
    }

    /// Direct-definition oracle: each statistic written out literally with
    /// explicit modulo arithmetic, no shared code with the implementation.
    fn hakkarainen_oracle(series: &[Vec<f64>]) -> Vec<f64> {
        let n = 40usize;
        let t_len = series.len();
        let mean_of = |k: usize| series.iter().map(|row| row[k]).sum::<f64>() / t_len as f64;
        let mut out = vec![0.0; 6];
        for k in 0..n {
            let km1 = (k + n - 1) % n;
            let kp1 = (k + 1) % n;
            let (mk, ml, mr) = (mean_of(k), mean_of(km1), mean_of(kp1));
            out[0] += mk;
            out[1] += (0..t_len)
                .map(|t| (series[t][k] - mk).powi(2))
                .sum::<f64>()
                / t_len as f64;
            out[2] += (0..t_len - 1)
                .map(|t| (series[t][k] - mk) * (series[t + 1][k] - mk))
                .sum::<f64>()
                / (t_len - 1) as f64;
            out[3] += (0..t_len)
                .map(|t| (series[t][k] - mk) * (series[t][kp1] - mr))
                .sum::<f64>()
                / t_len as f64;
            out[4] += (0..t_len - 1)
                .map(|t| (series[t][k] - mk) * (series[t + 1][km1] - ml))
                .sum::<f64>()
                / (t_len - 1) as f64;
            out[5] += (0..t_len - 1)
                .map(|t| (series[t][k] - mk) * (series[t + 1][kp1] - mr))
                .sum::<f64>()
                / (t_len - 1) as f64;
        }
        out.iter().map(|v| v / n as f64).collect()
    }

    #[test]
    fn hakkarainen_matches_direct_formula_oracle() {
        let mut rng = task_rng(12, &[]);
        let t_len = 128;
        let series: Vec<Vec<f64>> = (0..t_len)
            .map(|_| (0..40).map(|_| rng.random_range(-3.0..9.0)).collect())
            .collect();
        let flat: Vec<f64> = series.iter().flatten().copied().collect();
        let got = HakkarainenLorenz.summary(&flat).unwrap();
        let expected = hakkarainen_oracle(&series);
        for (g, e) in got.iter().zip(&expected) {
            assert_relative_eq!(g, e, max_relative = 1e-12);
        }
    }

    #[test]
    fn logreg_identical_datasets_sit_at_chance() {
        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64, (i * i) as f64]).collect();
        assert_eq!(logreg_distance(&rows, &rows).unwrap(), 0.5);
    }

    #[test]
    fn logreg_separable_datasets_are_classified() {
        let a: Vec<Vec<f64>> = (0..20).map(|i| vec![-10.0 + 0.01 * i as f64]).collect();
        let b: Vec<Vec<f64>> = (0..20).map(|i| vec![10.0 + 0.01 * i as f64]).collect();
        // Oracle: a hand-constructed threshold at zero classifies these
        // perfectly, so a trained classifier must reach at least 0.99.
        let threshold_acc = (a.iter().filter(|r| r[0] < 0.0).count()
            + b.iter().filter(|r| r[0] >= 0.0).count()) as f64
            / (a.len() + b.len()) as f64;
        assert_eq!(threshold_acc, 1.0);
        let acc = logreg_distance(&a, &b).unwrap();
        assert!(acc >= 0.99, "accuracy {acc}");
    }

    #[test]
    fn logreg_same_distribution_stays_near_chance() {
        let mut rng = task_rng(13, &[]);
        let mut draw = |shift: f64| -> Vec<Vec<f64>> {
            (0..100)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    vec![z + shift]
                })
                .collect()
        };
        let a = draw(0.0);
        let b = draw(0.0);
        let acc = logreg_distance(&a, &b).unwrap();
        assert!((0.35..=0.65).contains(&acc), "accuracy {acc}");

        // Permutation baseline: mixing the rows across labels must also sit
        // at chance level.
        let mut mixed_a = a.clone();
        let mut mixed_b = b.clone();
        for i in (0..mixed_a.len()).step_by(2) {
            std::mem::swap(&mut mixed_a[i], &mut mixed_b[i]);
        }
        let base = logreg_distance(&mixed_a, &mixed_b).unwrap();
        assert!((0.35..=0.65).contains(&base), "baseline {base}");
    }

    #[test]
    fn logreg_is_label_symmetric() {
        let mut rng = task_rng(14, &[]);
        let a: Vec<Vec<f64>> = (0..30)
            .map(|_| vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)])
            .collect();
        let b: Vec<Vec<f64>> = (0..30)
            .map(|_| vec![rng.random_range(-0.5..1.5), rng.random_range(-1.0..1.0)])
            .collect();
        let ab = logreg_distance(&a, &b).unwrap();
        let ba = logreg_distance(&b, &a).unwrap();
        assert!((0.0..=1.0).contains(&ab));
        assert_relative_eq!(ab, ba, max_relative = 1e-12);
    }

    #[test]
    fn synthetic_likelihood_matches_closed_form_in_one_dimension() {
        // Simulated stats {-1, +1}: mean 0, unbiased variance 2 (+ ridge).
        let sim = vec![vec![-1.0], vec![1.0]];
        let got = synthetic_likelihood(&[0.0], &sim).unwrap();
        let var = 2.0 + SYNLIK_JITTER * 2.0;
        let expected = 1.0 / (2.0 * std::f64::consts::PI * var).sqrt();
        assert_relative_eq!(got, expected, max_relative = 1e-12);
    }

    #[test]
    fn synthetic_likelihood_peaks_at_the_simulated_mean() {
        let mut rng = task_rng(15, &[]);
        let sim: Vec<Vec<f64>> = (0..50)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                let w: f64 = StandardNormal.sample(&mut rng);
                vec![2.0 + z, -1.0 + 0.5 * w]
            })
            .collect();
        let dim = 2;
        let mean: Vec<f64> = (0..dim)
            .map(|j| sim.iter().map(|r| r[j]).sum::<f64>() / sim.len() as f64)
            .collect();
        let at_mean = synthetic_likelihood(&mean, &sim).unwrap();
        for delta in [[0.5, 0.0], [0.0, -0.3], [1.0, 1.0]] {
            let shifted: Vec<f64> = mean.iter().zip(delta).map(|(m, d)| m + d).collect();
            assert!(at_mean >= synthetic_likelihood(&shifted, &sim).unwrap());
        }
    }

    #[test]
    fn synthetic_likelihood_rejects_degenerate_rows() {
        let sim = vec![vec![1.0, 2.0]; 10];
        assert_eq!(
            synthetic_likelihood(&[1.0, 2.0], &sim),
            Err(SummaryError::SingularCovariance)
        );
    }

    #[test]
    fn synthetic_likelihood_requires_two_rows() {
        let sim = vec![vec![0.0, 0.0]];
        assert_eq!(
            synthetic_likelihood(&[0.0, 0.0], &sim),
            Err(SummaryError::TooFewSamples { needed: 2, got: 1 })
        );
    }

    #[test]
    fn synthetic_likelihood_is_row_order_invariant() {
        let mut rng = task_rng(16, &[]);
        let mut sim: Vec<Vec<f64>> = (0..30)
            .map(|_| {
                (0..3)
                    .map(|_| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        z
                    })
                    .collect()
            })
            .collect();
        let obs = vec![0.1, -0.2, 0.3];
        let forward = synthetic_likelihood(&obs, &sim).unwrap();
        sim.reverse();
        let reversed = synthetic_likelihood(&obs, &sim).unwrap();
        assert!(forward > 0.0);
        assert_relative_eq!(forward, reversed, max_relative = 1e-9);
    }

    #[test]
    fn dataset_distance_validates_root_count() {
        let euclid: Arc<dyn Distance> = Arc::new(Euclidean::new(Arc::new(Identity)));
        let d = DatasetDistance::uniform(euclid, 2);
        let one = DataSet::from_single(vec![1.0]);
        let two = DataSet::new(vec![vec![1.0], vec![2.0]]);
        assert!(d.evaluate(&one, &two).is_err());
        assert_eq!(d.evaluate(&two, &two).unwrap(), 0.0);
    }
}
