//! Per-state data distributions and the ensemble covariance.
//!
//! State `s` emits `X = L_s Z` where `L_s = Σ_s^{1/2}` and `Z` has i.i.d.
//! standardised coordinates drawn from a [`BaseNoise`]. All state means are
//! zero, so `E[XXᵀ | s] = Σ_s` and the stream covariance under the
//! stationary law is `Σ = Σ_s π(s) Σ_s`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use thiserror::Error;

use crate::linalg::{asymmetry, sym_eigen_desc, sym_spectral_norm};
use crate::seed::rng_from_seed;

/// Minimum eigengap `λ₁ − λ₂` accepted by [`total_covariance`].
pub const MIN_GAP: f64 = 1e-10;
/// Multiplicative safety margin applied to estimated `𝒱` and `ℳ`.
pub const BOUND_MARGIN: f64 = 1.2;
/// Quantile used as the surrogate for `ℳ` under Bernoulli noise.
pub const BERNOULLI_M_QUANTILE: f64 = 1.0 - 1e-6;
/// Upper end of the `U(0, 0.05)` law the Bernoulli parameter is drawn from.
pub const BERNOULLI_P_MAX: f64 = 0.05;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StateDistError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("covariance of state {state} is not symmetric PSD: {reason}")]
    NotPsd { state: usize, reason: String },
    #[error("eigengap λ₁ − λ₂ = {gap:e} is degenerate")]
    DegenerateGap { gap: f64 },
    #[error("stationary vector has {got} entries, expected {expected}")]
    LengthMismatch { expected: usize, got: usize },
}

/// Law of one standardised noise coordinate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BaseNoise {
    /// `(B − p)/√(p(1−p))` with `B ~ Bernoulli(p)`.
    BernoulliNormalized { p: f64 },
    /// `U(−√3, √3)`.
    UniformSym,
}

impl BaseNoise {
    pub fn bernoulli(p: f64) -> Result<Self, StateDistError> {
        if !(p > 0.0 && p < 1.0) {
            return Err(StateDistError::InvalidParameter(format!("Bernoulli p must lie in (0, 1), got {p}")));
        }
        Ok(BaseNoise::BernoulliNormalized { p })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            BaseNoise::BernoulliNormalized { p } => {
                let (hi, lo) = self.bernoulli_values(p);
                if rng.random::<f64>() < p {
                    hi
                } else {
                    lo
                }
            }
            BaseNoise::UniformSym => {
                let r = 3f64.sqrt();
                rng.random_range(-r..r)
            }
        }
    }

    fn bernoulli_values(&self, p: f64) -> (f64, f64) {
        let s = (p * (1.0 - p)).sqrt();
        ((1.0 - p) / s, -p / s)
    }

    /// `E[Z⁴]` (mean 0 and variance 1 hold by construction).
    pub fn fourth_moment(&self) -> f64 {
        match *self {
            BaseNoise::BernoulliNormalized { p } => {
                let q = 1.0 - p;
                (q * q * q + p * p * p) / (p * q)
            }
            BaseNoise::UniformSym => 9.0 / 5.0,
        }
    }

    /// Extreme points of the coordinate support: the two atoms for
    /// Bernoulli, `±√3` for the uniform law.
    pub fn support_extremes(&self) -> [f64; 2] {
        match *self {
            BaseNoise::BernoulliNormalized { p } => {
                let (hi, lo) = self.bernoulli_values(p);
                [hi, lo]
            }
            BaseNoise::UniformSym => [3f64.sqrt(), -3f64.sqrt()],
        }
    }

    /// Probability of each entry of [`support_extremes`](Self::support_extremes)
    /// when the support is discrete.
    pub fn atom_probabilities(&self) -> Option<[f64; 2]> {
        match *self {
            BaseNoise::BernoulliNormalized { p } => Some([p, 1.0 - p]),
            BaseNoise::UniformSym => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            BaseNoise::BernoulliNormalized { .. } => "bernoulli",
            BaseNoise::UniformSym => "uniform",
        }
    }
}

/// Requested base-noise family; Bernoulli's `p` is drawn from the seed when
/// not given.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseSpec {
    Bernoulli { p: Option<f64> },
    Uniform,
}

impl NoiseSpec {
    /// Resolves the family into a concrete law, drawing `p ~ U(0, 0.05)` once
    /// from `seed` if needed. The same `p` is shared by every coordinate and
    /// every state.
    pub fn resolve(&self, seed: u64) -> Result<BaseNoise, StateDistError> {
        match *self {
            NoiseSpec::Bernoulli { p: Some(p) } => BaseNoise::bernoulli(p),
            NoiseSpec::Bernoulli { p: None } => {
                let mut rng = rng_from_seed(seed);
                loop {
                    let p = rng.random::<f64>() * BERNOULLI_P_MAX;
                    if p > 0.0 {
                        return BaseNoise::bernoulli(p);
                    }
                }
            }
            NoiseSpec::Uniform => Ok(BaseNoise::UniformSym),
        }
    }
}

/// Per-state covariances `Σ_s`, their square roots, and the base noise.
#[derive(Debug, Clone)]
pub struct StateDistributionSet {
    dim: usize,
    covariances: Vec<DMatrix<f64>>,
    factors: Vec<DMatrix<f64>>,
    /// `L_s 𝟙`, used by the sparse Bernoulli sampler.
    factor_row_sums: Vec<DVector<f64>>,
    base_noise: BaseNoise,
}

impl StateDistributionSet {
    /// Validates each `Σ_s` (square, symmetric, PSD) and factors it.
    pub fn from_covariances(covariances: Vec<DMatrix<f64>>, base_noise: BaseNoise) -> Result<Self, StateDistError> {
        let dim = match covariances.first() {
            Some(c) => c.nrows(),
            None => return Err(StateDistError::InvalidParameter("need at least one state".into())),
        };
        if dim == 0 {
            return Err(StateDistError::InvalidParameter("dimension must be positive".into()));
        }
        let mut factors = Vec::with_capacity(covariances.len());
        for (state, cov) in covariances.iter().enumerate() {
            if cov.shape() != (dim, dim) {
                return Err(StateDistError::NotPsd { state, reason: format!("shape {:?}", cov.shape()) });
            }
            let scale = cov.amax().max(f64::MIN_POSITIVE);
            if asymmetry(cov) > 1e-12 * scale {
                return Err(StateDistError::NotPsd { state, reason: "not symmetric".into() });
            }
            let eig = sym_eigen_desc(cov);
            let lmin = eig.values.min();
            if lmin < -1e-10 * scale {
                return Err(StateDistError::NotPsd { state, reason: format!("eigenvalue {lmin:e}") });
            }
            factors.push(eig.psd_sqrt());
        }
        let factor_row_sums = factors.iter().map(|l| l.column_sum()).collect();
        Ok(Self { dim, covariances, factors, factor_row_sums, base_noise })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_states(&self) -> usize {
        self.covariances.len()
    }

    pub fn base_noise(&self) -> BaseNoise {
        self.base_noise
    }

    pub fn covariance(&self, state: usize) -> &DMatrix<f64> {
        &self.covariances[state]
    }

    pub fn covariances(&self) -> &[DMatrix<f64>] {
        &self.covariances
    }

    /// `L_s` with `L_s L_sᵀ = Σ_s`.
    pub fn factor(&self, state: usize) -> &DMatrix<f64> {
        &self.factors[state]
    }

    /// Draws `X = L_s Z` into `out`.
    pub fn draw_sample_into<R: Rng + ?Sized>(&self, state: usize, rng: &mut R, out: &mut DVector<f64>) {
        let l = &self.factors[state];
        match self.base_noise {
            BaseNoise::BernoulliNormalized { p } => {
                // Z = (B − p)/s, so L Z = (Σ_{i: Bᵢ=1} L[:,i] − p·L𝟙)/s: only the
                // (rare) unit coordinates touch a column of L.
                let s = (p * (1.0 - p)).sqrt();
                out.copy_from(&self.factor_row_sums[state]);
                *out *= -p;
                for i in 0..self.dim {
                    if rng.random::<f64>() < p {
                        *out += l.column(i);
                    }
                }
                *out /= s;
            }
            BaseNoise::UniformSym => {
                let z = DVector::from_fn(self.dim, |_, _| self.base_noise.sample(rng));
                l.mul_to(&z, out);
            }
        }
    }

    pub fn draw_sample<R: Rng + ?Sized>(&self, state: usize, rng: &mut R) -> DVector<f64> {
        let mut out = DVector::zeros(self.dim);
        self.draw_sample_into(state, rng, &mut out);
        out
    }
}

/// `c_s = 1 + 9 (s−1)/(|Ω|−1)` for 1-based `s`.
pub fn state_decay_rate(state_one_based: usize, n_states: usize) -> f64 {
    1.0 + 9.0 * (state_one_based as f64 - 1.0) / (n_states as f64 - 1.0)
}

/// `Σ_s(i,j) = exp(−|i−j| c_s) σ_i σ_j` with `σ_i = 5 i^{−sigma_beta}`
/// (indices 1-based). `state` is 0-based.
pub fn decaying_state_covariance(state: usize, n_states: usize, dim: usize, sigma_beta: f64) -> DMatrix<f64> {
    let c = state_decay_rate(state + 1, n_states);
    let sigma: Vec<f64> = (1..=dim).map(|i| 5.0 * (i as f64).powf(-sigma_beta)).collect();
    DMatrix::from_fn(dim, dim, |i, j| (-(i.abs_diff(j) as f64) * c).exp() * sigma[i] * sigma[j])
}

/// The experimental state family: `|Ω|` states whose covariances decay
/// along the diagonal at rates `c_1 = 1, …, c_|Ω| = 10`.
pub fn make_decaying_states(
    n_states: usize,
    dim: usize,
    sigma_beta: f64,
    noise: NoiseSpec,
    seed: u64,
) -> Result<StateDistributionSet, StateDistError> {
    if n_states < 2 {
        return Err(StateDistError::InvalidParameter(format!("need at least 2 states, got {n_states}")));
    }
    if dim < 2 {
        return Err(StateDistError::InvalidParameter(format!("need dimension at least 2, got {dim}")));
    }
    if !(sigma_beta > 0.0 && sigma_beta.is_finite()) {
        return Err(StateDistError::InvalidParameter(format!("sigma_beta must be positive, got {sigma_beta}")));
    }
    let base_noise = noise.resolve(seed)?;
    let covs = (0..n_states).map(|s| decaying_state_covariance(s, n_states, dim, sigma_beta)).collect();
    StateDistributionSet::from_covariances(covs, base_noise)
}

/// `Σ` with its leading spectral data.
#[derive(Debug, Clone)]
pub struct EnsembleCovariance {
    pub sigma: DMatrix<f64>,
    /// All eigenvalues, descending.
    pub eigenvalues: DVector<f64>,
    pub lambda1: f64,
    pub lambda2: f64,
    pub gap: f64,
    pub v1: DVector<f64>,
    /// Orthonormal basis of `v₁`'s complement (`d × (d−1)`).
    pub v_perp: DMatrix<f64>,
}

impl EnsembleCovariance {
    /// Eigen-decomposes a symmetric matrix; fails if the top eigenvalue is
    /// not separated.
    pub fn from_matrix(sigma: DMatrix<f64>) -> Result<Self, StateDistError> {
        let eig = sym_eigen_desc(&sigma);
        let d = sigma.nrows();
        let lambda1 = eig.values[0];
        let lambda2 = if d > 1 { eig.values[1] } else { 0.0 };
        let gap = lambda1 - lambda2;
        if !(gap >= MIN_GAP) {
            return Err(StateDistError::DegenerateGap { gap });
        }
        let v1 = eig.vectors.column(0).into_owned();
        let v_perp = eig.vectors.columns(1, d - 1).into_owned();
        Ok(Self { sigma, eigenvalues: eig.values, lambda1, lambda2, gap, v1, v_perp })
    }

    pub fn dim(&self) -> usize {
        self.sigma.nrows()
    }
}

/// `Σ_s π(s) Σ_s`.
pub fn mixture_covariance(dist: &StateDistributionSet, pi: &DVector<f64>) -> Result<DMatrix<f64>, StateDistError> {
    if pi.len() != dist.n_states() {
        return Err(StateDistError::LengthMismatch { expected: dist.n_states(), got: pi.len() });
    }
    let mut sigma = DMatrix::zeros(dist.dim(), dist.dim());
    for (w, cov) in pi.iter().zip(dist.covariances()) {
        sigma += cov * *w;
    }
    Ok(sigma)
}

/// Ensemble covariance of the stationary stream.
pub fn total_covariance(dist: &StateDistributionSet, pi: &DVector<f64>) -> Result<EnsembleCovariance, StateDistError> {
    EnsembleCovariance::from_matrix(mixture_covariance(dist, pi)?)
}

/// Variance and almost-sure bounds `𝒱 ≥ ‖E[(XXᵀ−Σ)²]‖₂`,
/// `ℳ ≥ ‖XXᵀ − Σ‖₂`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AssumptionBounds {
    pub v_bound: f64,
    pub m_bound: f64,
}

impl AssumptionBounds {
    /// Enforces `𝒱 ≤ ℳ²` and `ℳ + λ₁ ≥ 1` by raising `ℳ` (an upper bound
    /// stays an upper bound).
    pub fn normalized(v_bound: f64, m_bound: f64, lambda1: f64) -> Self {
        let m_bound = m_bound.max(v_bound.sqrt()).max(1.0 - lambda1);
        Self { v_bound, m_bound }
    }
}

/// Monte-Carlo estimates of `𝒱` and `ℳ` from `n_probe` stationary draws,
/// each inflated by [`BOUND_MARGIN`] and then [normalized](AssumptionBounds::normalized).
pub fn estimate_assumption_bounds(
    dist: &StateDistributionSet,
    pi: &DVector<f64>,
    n_probe: usize,
    seed: u64,
) -> Result<AssumptionBounds, StateDistError> {
    let (v, m) = probe_assumption_constants(dist, pi, n_probe, seed)?;
    let lambda1 = sym_eigen_desc(&mixture_covariance(dist, pi)?).values[0];
    Ok(AssumptionBounds::normalized(BOUND_MARGIN * v, BOUND_MARGIN * m, lambda1))
}

/// Raw probe statistics `(𝒱̂, ℳ̂)` without margin.
///
/// `𝒱̂ = ‖(1/n) Σᵢ (XᵢXᵢᵀ−Σ)²‖₂`. Under uniform noise `ℳ̂` is the maximum of
/// `‖XᵢXᵢᵀ−Σ‖₂`. Under Bernoulli noise the exact almost-sure bound hinges on
/// configurations of probability `~pᵈ`, so the `1 − 10⁻⁶` empirical quantile
/// is used as a surrogate (it is the maximum unless `n_probe > 10⁶`).
pub fn probe_assumption_constants(
    dist: &StateDistributionSet,
    pi: &DVector<f64>,
    n_probe: usize,
    seed: u64,
) -> Result<(f64, f64), StateDistError> {
    if n_probe < 1000 {
        return Err(StateDistError::InvalidParameter(format!("need at least 1000 probes, got {n_probe}")));
    }
    let sigma = mixture_covariance(dist, pi)?;
    let d = dist.dim();
    let mut rng = rng_from_seed(seed);
    let pi_cdf: Vec<f64> = pi
        .iter()
        .scan(0.0, |acc, &p| {
            *acc += p;
            Some(*acc)
        })
        .collect();
    // (XXᵀ−Σ)² = ‖X‖² XXᵀ − X(ΣX)ᵀ − (ΣX)Xᵀ + Σ²
    let mut quartic = DMatrix::zeros(d, d);
    let mut cross = DMatrix::zeros(d, d);
    let mut norms = Vec::with_capacity(n_probe);
    let mut x = DVector::zeros(d);
    for _ in 0..n_probe {
        let u = rng.random::<f64>() * pi_cdf[pi_cdf.len() - 1];
        let state = pi_cdf.partition_point(|&c| c <= u).min(pi_cdf.len() - 1);
        dist.draw_sample_into(state, &mut rng, &mut x);
        let sx = &sigma * &x;
        quartic.ger(x.norm_squared(), &x, &x, 1.0);
        cross.ger(1.0, &x, &sx, 1.0);
        norms.push(sym_spectral_norm(&(&x * x.transpose() - &sigma)));
    }
    let n = n_probe as f64;
    let second = quartic / n - (&cross + cross.transpose()) / n + &sigma * &sigma;
    let v = sym_spectral_norm(&second);
    norms.sort_by(f64::total_cmp);
    let m = match dist.base_noise() {
        BaseNoise::UniformSym => norms[norms.len() - 1],
        BaseNoise::BernoulliNormalized { .. } => {
            let idx = ((BERNOULLI_M_QUANTILE * n).ceil() as usize).clamp(1, norms.len()) - 1;
            norms[idx]
        }
    };
    Ok((v, m))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bernoulli_p_validation() {
        assert!(BaseNoise::bernoulli(0.0).is_err());
        assert!(BaseNoise::bernoulli(1.0).is_err());
        assert!(BaseNoise::bernoulli(0.3).is_ok());
    }

    #[test]
    fn drawn_p_is_in_range_and_reproducible() {
        for seed in 0..200 {
            let a = NoiseSpec::Bernoulli { p: None }.resolve(seed).unwrap();
            let b = NoiseSpec::Bernoulli { p: None }.resolve(seed).unwrap();
            assert_eq!(a, b);
            match a {
                BaseNoise::BernoulliNormalized { p } => assert!(p > 0.0 && p < BERNOULLI_P_MAX),
                _ => unreachable!(),
            }
        }
    }

    #[test]
    fn fourth_moment_matches_atoms() {
        let noise = BaseNoise::bernoulli(0.2).unwrap();
        let [hi, lo] = noise.support_extremes();
        let [ph, pl] = noise.atom_probabilities().unwrap();
        assert!((ph * hi + pl * lo).abs() < 1e-15);
        assert!((ph * hi * hi + pl * lo * lo - 1.0).abs() < 1e-14);
        let m4 = ph * hi.powi(4) + pl * lo.powi(4);
        assert!((m4 - noise.fourth_moment()).abs() < 1e-12);
    }

    #[test]
    fn rejects_invalid_construction() {
        assert!(make_decaying_states(10, 5, 0.0, NoiseSpec::Uniform, 0).is_err());
        assert!(make_decaying_states(10, 5, -1.0, NoiseSpec::Uniform, 0).is_err());
        assert!(make_decaying_states(1, 5, 1.0, NoiseSpec::Uniform, 0).is_err());
        assert!(make_decaying_states(10, 1, 1.0, NoiseSpec::Uniform, 0).is_err());
        let not_psd = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(matches!(
            StateDistributionSet::from_covariances(vec![not_psd], BaseNoise::UniformSym),
            Err(StateDistError::NotPsd { .. })
        ));
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(StateDistributionSet::from_covariances(vec![asym], BaseNoise::UniformSym).is_err());
    }

    #[test]
    fn zero_factor_gives_zero_sample() {
        for noise in [BaseNoise::UniformSym, BaseNoise::bernoulli(0.3).unwrap()] {
            let dist = StateDistributionSet::from_covariances(vec![DMatrix::zeros(3, 3)], noise).unwrap();
            let mut rng = rng_from_seed(1);
            for _ in 0..100 {
                assert_eq!(dist.draw_sample(0, &mut rng), DVector::zeros(3));
            }
        }
    }

    #[test]
    fn pi_length_checked() {
        let dist = make_decaying_states(3, 4, 1.0, NoiseSpec::Uniform, 0).unwrap();
        assert!(matches!(
            total_covariance(&dist, &DVector::from_element(2, 0.5)),
            Err(StateDistError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn bounds_need_enough_probes() {
        let dist = make_decaying_states(3, 4, 1.0, NoiseSpec::Uniform, 0).unwrap();
        let pi = DVector::from_element(3, 1.0 / 3.0);
        assert!(estimate_assumption_bounds(&dist, &pi, 999, 0).is_err());
    }
}
