//! Perturbation kernels and the weighted-covariance adaptation.
//!
//! A joint kernel partitions the free parameters into components, each
//! perturbed by its own density: multivariate Gaussian or Student-t on the
//! continuous coordinates, a plus/minus-one random walk on integer ones.
//! The proposal covariance is computed globally over all free parameters
//! and sliced per component. Kernel objects are immutable and safe for
//! concurrent use.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;
use thiserror::Error;

use crate::graph::{ModelGraph, ParameterVector};

/// Symmetric positive-semidefinite matrix, the adaptive scale of a kernel.
pub type CovarianceMatrix = DMatrix<f64>;

#[derive(Debug, Error, PartialEq)]
pub enum KernelError {
    #[error("need at least one particle")]
    EmptyParticles,
    #[error("{particles} particles but {weights} weights")]
    WeightCountMismatch { particles: usize, weights: usize },
    #[error("weights must be nonnegative")]
    NegativeWeight,
    #[error("weights sum to zero")]
    ZeroWeightSum,
    #[error("particles have inconsistent dimensions")]
    DimensionMismatch,
    #[error("kernel components target coordinate {0} more than once")]
    OverlappingTargets(usize),
    #[error("kernel components leave coordinate {0} uncovered")]
    UncoveredTarget(usize),
    #[error("kernel component targets coordinate {target} but the space has {dim} dimensions")]
    TargetOutOfRange { target: usize, dim: usize },
    #[error("student-t degrees of freedom must be positive, got {0}")]
    InvalidDegreesOfFreedom(f64),
    #[error("covariance slice is not factorizable even after jitter")]
    SingularCovariance,
    #[error("covariance is {got}x{got}, expected {expected}x{expected}")]
    CovarianceDimension { expected: usize, got: usize },
}

/// Weighted covariance of a particle population:
/// `sum_i w~_i (x_i - xbar)(x_i - xbar)^T` with normalized weights and the
/// weighted mean `xbar`.
pub fn weighted_covariance(
    particles: &[ParameterVector],
    weights: &[f64],
) -> Result<CovarianceMatrix, KernelError> {
    if particles.is_empty() {
        return Err(KernelError::EmptyParticles);
    }
    if particles.len() != weights.len() {
        return Err(KernelError::WeightCountMismatch {
            particles: particles.len(),
            weights: weights.len(),
        });
    }
    if weights.iter().any(|&w| w < 0.0) {
        return Err(KernelError::NegativeWeight);
    }
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Err(KernelError::ZeroWeightSum);
    }
    let dim = particles[0].dim();
    if particles.iter().any(|p| p.dim() != dim) {
        return Err(KernelError::DimensionMismatch);
    }

    let mut mean = DVector::zeros(dim);
    for (p, &w) in particles.iter().zip(weights) {
        mean += DVector::from_row_slice(p.as_slice()) * (w / total);
    }
    let mut cov = DMatrix::zeros(dim, dim);
    for (p, &w) in particles.iter().zip(weights) {
        let dev = DVector::from_row_slice(p.as_slice()) - &mean;
        cov += &dev * dev.transpose() * (w / total);
    }
    Ok(cov)
}

/// Weighted mean of a particle population with normalized weights.
pub fn weighted_mean(particles: &[ParameterVector], weights: &[f64]) -> Vec<f64> {
    let total: f64 = weights.iter().sum();
    let dim = particles.first().map_or(0, |p| p.dim());
    let mut mean = vec![0.0; dim];
    for (p, &w) in particles.iter().zip(weights) {
        for (m, v) in mean.iter_mut().zip(p.as_slice()) {
            *m += v * w / total;
        }
    }
    mean
}

/// The density family a kernel component perturbs with.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum KernelKind {
    Gaussian,
    StudentT { df: f64 },
    DiscreteWalk,
}

/// One kernel over a subset of the parameter coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelComponent {
    pub kind: KernelKind,
    /// Indices into the parameter vector this component perturbs.
    pub targets: Vec<usize>,
}

impl KernelComponent {
    pub fn gaussian(targets: Vec<usize>) -> Self {
        Self {
            kind: KernelKind::Gaussian,
            targets,
        }
    }

    pub fn student_t(df: f64, targets: Vec<usize>) -> Self {
        Self {
            kind: KernelKind::StudentT { df },
            targets,
        }
    }

    pub fn discrete_walk(targets: Vec<usize>) -> Self {
        Self {
            kind: KernelKind::DiscreteWalk,
            targets,
        }
    }
}

/// Default Student-t degrees of freedom when a config asks for a t kernel
/// without specifying them.
pub const DEFAULT_STUDENT_T_DF: f64 = 3.0;

/// A disjoint, complete grouping of kernel components over the parameter
/// space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointKernel {
    components: Vec<KernelComponent>,
    dim: usize,
}

impl JointKernel {
    /// Validates that component targets are in range, disjoint and jointly
    /// cover every coordinate.
    pub fn new(components: Vec<KernelComponent>, dim: usize) -> Result<Self, KernelError> {
        let mut covered = vec![false; dim];
        for component in &components {
            if let KernelKind::StudentT { df } = component.kind {
                if !(df > 0.0) {
                    return Err(KernelError::InvalidDegreesOfFreedom(df));
                }
            }
            for &target in &component.targets {
                if target >= dim {
                    return Err(KernelError::TargetOutOfRange { target, dim });
                }
                if covered[target] {
                    return Err(KernelError::OverlappingTargets(target));
                }
                covered[target] = true;
            }
        }
        if let Some(missing) = covered.iter().position(|c| !c) {
            return Err(KernelError::UncoveredTarget(missing));
        }
        Ok(Self { components, dim })
    }

    /// The default assignment for a graph: one Gaussian component over the
    /// continuous parameters and one random-walk component over the integer
    /// ones.
    pub fn default_for(graph: &ModelGraph) -> Self {
        let integer = graph.integer_parameters();
        let continuous: Vec<usize> = (0..graph.dim()).filter(|&i| !integer[i]).collect();
        let discrete: Vec<usize> = (0..graph.dim()).filter(|&i| integer[i]).collect();
        let mut components = Vec::new();
        if !continuous.is_empty() {
            components.push(KernelComponent::gaussian(continuous));
        }
        if !discrete.is_empty() {
            components.push(KernelComponent::discrete_walk(discrete));
        }
        Self::new(components, graph.dim()).expect("default kernel covers all parameters")
    }

    pub fn components(&self) -> &[KernelComponent] {
        &self.components
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn check_cov(&self, sigma: &CovarianceMatrix) -> Result<(), KernelError> {
        if sigma.nrows() != self.dim || sigma.ncols() != self.dim {
            return Err(KernelError::CovarianceDimension {
                expected: self.dim,
                got: sigma.nrows(),
            });
        }
        Ok(())
    }

    /// Factorizes the covariance slices once, for repeated sampling and
    /// density evaluation against the same adaptive covariance. Samplers
    /// prepare once per generation; the kernel mixture in the weight
    /// formula then costs one triangular solve per term.
    pub fn prepare(&self, sigma: &CovarianceMatrix) -> Result<PreparedKernel<'_>, KernelError> {
        self.check_cov(sigma)?;
        let factors = self
            .components
            .iter()
            .map(|component| match component.kind {
                KernelKind::DiscreteWalk => Ok(None),
                KernelKind::Gaussian | KernelKind::StudentT { .. } => {
                    factorize_slice(sigma, &component.targets)
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(PreparedKernel {
            kernel: self,
            factors,
        })
    }

    /// Draws a perturbed parameter vector centered at `center` with the
    /// (globally computed) covariance `sigma` sliced per component.
    pub fn sample(
        &self,
        center: &ParameterVector,
        sigma: &CovarianceMatrix,
        rng: &mut ChaCha8Rng,
    ) -> Result<ParameterVector, KernelError> {
        Ok(self.prepare(sigma)?.sample(center, rng))
    }

    /// Density (or probability mass, for random-walk components) of moving
    /// from `center` to `theta`; the product over components.
    pub fn density(
        &self,
        theta: &ParameterVector,
        center: &ParameterVector,
        sigma: &CovarianceMatrix,
    ) -> Result<f64, KernelError> {
        Ok(self.prepare(sigma)?.density(theta, center))
    }
}

/// A joint kernel bound to one factorized covariance.
pub struct PreparedKernel<'k> {
    kernel: &'k JointKernel,
    /// One factor per component; `None` marks a degenerate (zero-spread or
    /// walk) component.
    factors: Vec<Option<Cholesky<f64, Dyn>>>,
}

impl PreparedKernel<'_> {
    pub fn sample(&self, center: &ParameterVector, rng: &mut ChaCha8Rng) -> ParameterVector {
        let mut values = center.values.clone();
        for (component, factor) in self.kernel.components.iter().zip(&self.factors) {
            match component.kind {
                KernelKind::Gaussian => {
                    if let Some(chol) = factor {
                        let offset = correlated_normals(chol, component.targets.len(), rng);
                        for (slot, delta) in component.targets.iter().zip(offset.iter()) {
                            values[*slot] += delta;
                        }
                    }
                }
                KernelKind::StudentT { df } => {
                    if let Some(chol) = factor {
                        let offset = correlated_normals(chol, component.targets.len(), rng);
                        let chi2 = ChiSquared::new(df).expect("df validated at construction");
                        let scale = (df / chi2.sample(rng)).sqrt();
                        for (slot, delta) in component.targets.iter().zip(offset.iter()) {
                            values[*slot] += delta * scale;
                        }
                    }
                }
                KernelKind::DiscreteWalk => {
                    for &slot in &component.targets {
                        values[slot] += if rng.random::<bool>() { 1.0 } else { -1.0 };
                    }
                }
            }
        }
        ParameterVector::new(values)
    }

    pub fn density(&self, theta: &ParameterVector, center: &ParameterVector) -> f64 {
        let mut density = 1.0;
        for (component, factor) in self.kernel.components.iter().zip(&self.factors) {
            let dev: Vec<f64> = component
                .targets
                .iter()
                .map(|&slot| theta.values[slot] - center.values[slot])
                .collect();
            let factor_density = match component.kind {
                KernelKind::Gaussian => match factor {
                    Some(chol) => gaussian_density(chol, &dev),
                    None => point_mass(&dev),
                },
                KernelKind::StudentT { df } => match factor {
                    Some(chol) => student_t_density(chol, &dev, df),
                    None => point_mass(&dev),
                },
                KernelKind::DiscreteWalk => dev
                    .iter()
                    .map(|d| if d.abs() == 1.0 { 0.5 } else { 0.0 })
                    .product(),
            };
            density *= factor_density;
            if density == 0.0 {
                return 0.0;
            }
        }
        density
    }
}

const COVARIANCE_JITTER: f64 = 1e-10;

/// Cholesky factor of the covariance restricted to `targets`.
///
/// An exactly zero slice is a legitimate degenerate kernel (all particles
/// identical): `None` signals "no spread", letting samples return the
/// center exactly. A nonzero slice gets `1e-10 * max(1, trace)` added to
/// its diagonal before factorization; if that still fails, the covariance
/// is reported as singular rather than silently repaired further.
fn factorize_slice(
    sigma: &CovarianceMatrix,
    targets: &[usize],
) -> Result<Option<Cholesky<f64, Dyn>>, KernelError> {
    let k = targets.len();
    let mut slice = DMatrix::zeros(k, k);
    for (i, &ti) in targets.iter().enumerate() {
        for (j, &tj) in targets.iter().enumerate() {
            slice[(i, j)] = sigma[(ti, tj)];
        }
    }
    if slice.iter().all(|v| *v == 0.0) {
        return Ok(None);
    }
    let jitter = COVARIANCE_JITTER * slice.trace().max(1.0);
    for i in 0..k {
        slice[(i, i)] += jitter;
    }
    Cholesky::new(slice)
        .map(Some)
        .ok_or(KernelError::SingularCovariance)
}

fn correlated_normals(chol: &Cholesky<f64, Dyn>, k: usize, rng: &mut ChaCha8Rng) -> DVector<f64> {
    let z = DVector::from_iterator(k, (0..k).map(|_| StandardNormal.sample(rng)));
    chol.l() * z
}

fn point_mass(dev: &[f64]) -> f64 {
    if dev.iter().all(|d| *d == 0.0) {
        1.0
    } else {
        0.0
    }
}

fn quad_and_logdet(chol: &Cholesky<f64, Dyn>, dev: &[f64]) -> (f64, f64) {
    let dev = DVector::from_row_slice(dev);
    let solved = chol
        .l()
        .solve_lower_triangular(&dev)
        .expect("cholesky factor is nonsingular");
    let log_det = 2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    (solved.norm_squared(), log_det)
}

fn gaussian_density(chol: &Cholesky<f64, Dyn>, dev: &[f64]) -> f64 {
    let k = dev.len() as f64;
    let (quad, log_det) = quad_and_logdet(chol, dev);
    (-0.5 * (k * (2.0 * std::f64::consts::PI).ln() + log_det + quad)).exp()
}

fn student_t_density(chol: &Cholesky<f64, Dyn>, dev: &[f64], df: f64) -> f64 {
    let k = dev.len() as f64;
    let (quad, log_det) = quad_and_logdet(chol, dev);
    let log_norm = ln_gamma(0.5 * (df + k))
        - ln_gamma(0.5 * df)
        - 0.5 * k * (df * std::f64::consts::PI).ln()
        - 0.5 * log_det;
    (log_norm - 0.5 * (df + k) * (1.0 + quad / df).ln()).exp()
}
