//! Offline baseline: the leading eigenvector of `Σ̂ = (1/n) Σᵢ XᵢXᵢᵀ`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use thiserror::Error;

use crate::linalg::{sin2, sin_distance};
use crate::seed::rng_from_seed;
use crate::statedist::EnsembleCovariance;
use crate::streaming::{Algorithm, StreamConsumer, StreamingError};

/// Successive power iterates closer than this (sine of the angle) stop the
/// iteration.
pub const POWER_TOL: f64 = 1e-10;
pub const POWER_MAX_ITER: usize = 100_000;
/// Two starts that converge further apart than this (in `sin²`) indicate a
/// tied top eigenvalue.
const AGREEMENT_SIN2: f64 = 1e-8;
const START_SEEDS: [u64; 2] = [0x0FF1_1E5E_ED00_0001, 0x0FF1_1E5E_ED00_0002];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OfflineError {
    #[error("no samples accumulated")]
    Empty,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("empirical covariance is identically zero")]
    ZeroCovariance,
}

/// Running `Σ XᵢXᵢᵀ` and `n`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalCovariance {
    sum: DMatrix<f64>,
    n: usize,
}

impl EmpiricalCovariance {
    pub fn new(dim: usize) -> Self {
        Self { sum: DMatrix::zeros(dim, dim), n: 0 }
    }

    /// Single pass over `samples`.
    pub fn accumulate<'a, I>(samples: I) -> Result<Self, OfflineError>
    where
        I: IntoIterator<Item = &'a DVector<f64>>,
    {
        let mut iter = samples.into_iter();
        let first = iter.next().ok_or(OfflineError::Empty)?;
        let mut acc = Self::new(first.len());
        acc.push(first)?;
        for x in iter {
            acc.push(x)?;
        }
        Ok(acc)
    }

    pub fn push(&mut self, x: &DVector<f64>) -> Result<(), OfflineError> {
        if x.len() != self.dim() {
            return Err(OfflineError::DimensionMismatch { expected: self.dim(), got: x.len() });
        }
        self.sum.ger(1.0, x, x, 1.0);
        self.n += 1;
        Ok(())
    }

    /// Pools two accumulators (sample-weighted).
    pub fn merge(&mut self, other: &Self) -> Result<(), OfflineError> {
        if other.dim() != self.dim() {
            return Err(OfflineError::DimensionMismatch { expected: self.dim(), got: other.dim() });
        }
        self.sum += &other.sum;
        self.n += other.n;
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.sum.nrows()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// `Σ̂`.
    pub fn sigma_hat(&self) -> Result<DMatrix<f64>, OfflineError> {
        if self.n == 0 {
            return Err(OfflineError::Empty);
        }
        Ok(&self.sum / self.n as f64)
    }

    pub fn leading_eigenvector(&self) -> Result<LeadingEigen, OfflineError> {
        leading_eigenvector(&self.sigma_hat()?)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LeadingEigen {
    pub vector: DVector<f64>,
    pub eigenvalue: f64,
    /// False when the iteration hit its cap or the top eigenspace looks
    /// degenerate (two fixed starts settled on different directions).
    pub converged: bool,
    pub iterations: usize,
}

/// Power iteration from two fixed pseudo-random starts.
pub fn leading_eigenvector(a: &DMatrix<f64>) -> Result<LeadingEigen, OfflineError> {
    if a.iter().all(|&v| v == 0.0) {
        return Err(OfflineError::ZeroCovariance);
    }
    let first = power_iterate(a, START_SEEDS[0]);
    let second = power_iterate(a, START_SEEDS[1]);
    let agree = sin2(&first.vector, &second.vector) <= AGREEMENT_SIN2;
    Ok(LeadingEigen {
        converged: first.converged && second.converged && agree,
        iterations: first.iterations.max(second.iterations),
        ..first
    })
}

fn power_iterate(a: &DMatrix<f64>, seed: u64) -> LeadingEigen {
    let d = a.nrows();
    let mut rng = rng_from_seed(seed);
    let mut v = DVector::from_fn(d, |_, _| rng.random::<f64>() - 0.5);
    v /= v.norm();
    let mut converged = false;
    let mut iterations = 0;
    while iterations < POWER_MAX_ITER {
        iterations += 1;
        let next = a * &v;
        let norm = next.norm();
        if norm == 0.0 {
            // Start fell in the null space; Σ̂ ≠ 0 so a new direction exists.
            v = DVector::from_fn(d, |_, _| rng.random::<f64>() - 0.5).normalize();
            continue;
        }
        let next = next / norm;
        let moved = sin_distance(&v, &next);
        v = next;
        if moved < POWER_TOL {
            converged = true;
            break;
        }
    }
    let eigenvalue = v.dot(&(a * &v));
    LeadingEigen { vector: v, eigenvalue, converged, iterations }
}

/// Offline estimator as a stream consumer: accumulates every sample and
/// solves for `v̂` whenever an error is requested.
#[derive(Debug, Clone)]
pub struct OfflineConsumer {
    acc: EmpiricalCovariance,
}

impl OfflineConsumer {
    pub fn new(dim: usize) -> Self {
        Self { acc: EmpiricalCovariance::new(dim) }
    }

    pub fn covariance(&self) -> &EmpiricalCovariance {
        &self.acc
    }
}

impl StreamConsumer for OfflineConsumer {
    fn algorithm(&self) -> Algorithm {
        Algorithm::Offline
    }

    fn observe(&mut self, _position: usize, x: &DVector<f64>) -> Result<(), StreamingError> {
        self.acc
            .push(x)
            .map_err(|_| StreamingError::DimensionMismatch { expected: self.acc.dim(), got: x.len() })
    }

    fn error(&mut self, truth: &EnsembleCovariance) -> f64 {
        match self.acc.leading_eigenvector() {
            Ok(lead) => sin2(&lead.vector, &truth.v1),
            // Σ̂ = 0 carries no directional information.
            Err(_) => 1.0,
        }
    }

    fn updates(&self) -> usize {
        self.acc.n()
    }
}
