//! Exact checks of the mixing and matrix-product bounds behind the
//! convergence analysis, on instances small enough to enumerate.
//!
//! Every quantity here is computed from matrix powers, Bayes' rule and
//! closed-form noise moments, so the checks are deterministic inequalities
//! rather than statistical tests. Four suites:
//!
//! - `qnorm`: `‖Π^{1/2}(Pᵗ − 𝟙πᵀ)Π^{−1/2}‖₂ ≤ |λ₂(P)|ᵗ`;
//! - `revmix`: the backward kernel `ℙ(Z_i = · | Z_{i+k} = x)` is exactly as
//!   far from `π` as the forward one;
//! - `covdecay`: for `i < j ≤ i + k` with `d_mix(k) ≤ η²`,
//!   `‖E[(XᵢXᵢᵀ−Σ) S XⱼXⱼᵀ | s_{i+k}]‖₂ ≤ (|λ₂|^{j−i} 𝒱 + 8η²ℳ(ℳ+λ₁)) ‖S‖₂`;
//! - `prodapprox`: for windows with `η k (ℳ+λ₁) ≤ ε`,
//!   `‖∏(I+η_tX_tX_tᵀ) − I‖₂ ≤ (1+ε) k η (ℳ+λ₁)` and
//!   `‖∏(I+η_tX_tX_tᵀ) − I − Σ η_tX_tX_tᵀ‖₂ ≤ k²η²(ℳ+λ₁)²`.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::linalg::{spectral_norm, sym_eigen_desc, sym_spectral_norm};
use crate::markov::{
    analyze_spectrum, d_mix, detailed_balance_defect, random_reversible_chain, reversed_conditional, sample_path, sup_tv_to_stationary,
    tau_mix, ChainSpectrum, MarkovError, TransitionMatrix,
};
use crate::seed::{derive_seed, rng_from_seed};
use crate::statedist::{mixture_covariance, BaseNoise, StateDistError, StateDistributionSet};
use crate::streaming::{ScheduleMode, StepSchedule, StreamingError};

pub const MAX_STATES: usize = 8;
pub const MAX_DIM: usize = 6;
/// Slack on `‖Q‖₂ ≤ |λ₂|ᵗ`.
pub const QNORM_TOL: f64 = 1e-10;
/// Tolerance on the reverse-mixing equality.
pub const REVMIX_TOL: f64 = 1e-12;
/// Relative round-off slack on the covariance-decay and product bounds.
pub const BOUND_RTOL: f64 = 1e-10;
/// `ε` of the matrix-product bound.
pub const PRODUCT_EPS: f64 = 0.01;
/// Corpus size used by the suites.
pub const CORPUS_SIZE: usize = 100;
pub const QNORM_T_MAX: u64 = 20;
pub const REVMIX_K_MAX: u64 = 10;
/// Step sizes at which the covariance-decay bound is checked; `k = τ_mix(η²)`.
pub const COVDECAY_ETAS: [f64; 2] = [0.1, 0.03];
pub const PRODUCT_WINDOW: usize = 8;
pub const PRODUCT_WINDOWS_PER_INSTANCE: usize = 10;
/// `η k (ℳ+λ₁)` used for product windows.
pub const PRODUCT_TARGET: f64 = 0.009;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error(transparent)]
    Markov(#[from] MarkovError),
    #[error(transparent)]
    StateDist(#[from] StateDistError),
    #[error(transparent)]
    Streaming(#[from] StreamingError),
    #[error("instance too large for exact enumeration: {0}")]
    TooLarge(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Suite {
    QNorm,
    CovDecay,
    ProdApprox,
    RevMix,
}

impl Suite {
    pub const ALL: [Suite; 4] = [Suite::QNorm, Suite::CovDecay, Suite::ProdApprox, Suite::RevMix];

    pub fn as_str(&self) -> &'static str {
        match self {
            Suite::QNorm => "qnorm",
            Suite::CovDecay => "covdecay",
            Suite::ProdApprox => "prodapprox",
            Suite::RevMix => "revmix",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|x| x.as_str() == s)
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One failed inequality. `Display` renders one tab-separated line:
/// `suite  instance  location  observed  bound`.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub suite: Suite,
    pub instance: Option<usize>,
    pub location: String,
    pub observed: f64,
    pub bound: f64,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let instance = self.instance.map_or_else(|| "-".to_string(), |i| i.to_string());
        write!(f, "{}\t{}\t{}\t{:e}\t{:e}", self.suite, instance, self.location, self.observed, self.bound)
    }
}

/// Outcome of a batch of checks.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckReport {
    pub suite: Suite,
    pub checks: usize,
    pub violations: Vec<Violation>,
    /// Largest `observed / bound` (or absolute mismatch for equalities).
    pub worst: f64,
}

impl CheckReport {
    fn new(suite: Suite) -> Self {
        Self { suite, checks: 0, violations: Vec::new(), worst: 0.0 }
    }

    fn record(&mut self, location: impl FnOnce() -> String, observed: f64, bound: f64, ok: bool, score: f64) {
        self.checks += 1;
        self.worst = self.worst.max(score);
        if !ok {
            self.violations.push(Violation { suite: self.suite, instance: None, location: location(), observed, bound });
        }
    }

    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    fn absorb(&mut self, other: CheckReport, instance: usize) {
        self.checks += other.checks;
        self.worst = self.worst.max(other.worst);
        self.violations.extend(other.violations.into_iter().map(|mut v| {
            v.instance = Some(instance);
            v
        }));
    }
}

/// A chain with `≤ 8` states and a state family with `d ≤ 6`, together with
/// the exact quantities the bounds are stated in.
#[derive(Debug, Clone)]
pub struct SmallInstance {
    pub chain: TransitionMatrix,
    pub spectrum: ChainSpectrum,
    pub dist: StateDistributionSet,
    /// `Σ = Σ_s π(s) Σ_s`.
    pub sigma: DMatrix<f64>,
    /// `G(s) = Σ_s − Σ` (state means are zero).
    pub g: Vec<DMatrix<f64>>,
    pub lambda1: f64,
    /// Exact `‖E[(XXᵀ−Σ)²]‖₂`.
    pub v_exact: f64,
    /// An almost-sure bound on `‖XXᵀ−Σ‖₂`: exact (enumerated) for Bernoulli
    /// noise, `max(sup ‖x‖², λ₁)` over the support box for uniform noise.
    pub m_exact: f64,
}

impl SmallInstance {
    pub fn new(chain: TransitionMatrix, dist: StateDistributionSet) -> Result<Self, OracleError> {
        if chain.n_states() > MAX_STATES || dist.dim() > MAX_DIM {
            return Err(OracleError::TooLarge(format!("{} states, dimension {}", chain.n_states(), dist.dim())));
        }
        if chain.n_states() != dist.n_states() {
            return Err(OracleError::Precondition(format!(
                "chain has {} states, distribution set has {}",
                chain.n_states(),
                dist.n_states()
            )));
        }
        let spectrum = analyze_spectrum(&chain)?;
        let sigma = mixture_covariance(&dist, &spectrum.stationary)?;
        let g = dist.covariances().iter().map(|c| c - &sigma).collect();
        let lambda1 = sym_eigen_desc(&sigma).values[0];
        let v_exact = exact_variance(&dist, &spectrum.stationary, &sigma);
        let m_exact = exact_norm_bound(&dist, &sigma, lambda1);
        Ok(Self { chain, spectrum, dist, sigma, g, lambda1, v_exact, m_exact })
    }

    /// `max |Σ_s π(s) G(s)|`, zero up to round-off.
    pub fn stationarity_defect(&self) -> f64 {
        let d = self.dist.dim();
        let mut total = DMatrix::zeros(d, d);
        for (w, g) in self.spectrum.stationary.iter().zip(&self.g) {
            total += g * *w;
        }
        total.amax()
    }

    /// `ℳ + λ₁`, the almost-sure bound on `‖XXᵀ‖₂`.
    pub fn m_plus_lambda1(&self) -> f64 {
        self.m_exact + self.lambda1
    }
}

/// `E[XXᵀ S XXᵀ | s]` for `X = L Z`, `Z` i.i.d. standardised with fourth
/// moment `κ`: with `M = Lᵀ S L`,
/// `E[Z Zᵀ M Z Zᵀ] = M + Mᵀ + tr(M) I + (κ − 3) diag(M)`.
pub fn conditional_fourth_moment(l: &DMatrix<f64>, s: &DMatrix<f64>, kappa: f64) -> DMatrix<f64> {
    let m = l.transpose() * s * l;
    let d = m.nrows();
    let trace = m.trace();
    let inner = DMatrix::from_fn(d, d, |i, j| {
        let mut v = m[(i, j)] + m[(j, i)];
        if i == j {
            v += trace + (kappa - 3.0) * m[(i, i)];
        }
        v
    });
    l * inner * l.transpose()
}

/// Exact `‖E[(XXᵀ−Σ)²]‖₂ = ‖Σ_s π(s) E[(XXᵀ)² | s] − Σ²‖₂`.
pub fn exact_variance(dist: &StateDistributionSet, pi: &DVector<f64>, sigma: &DMatrix<f64>) -> f64 {
    let d = dist.dim();
    let kappa = dist.base_noise().fourth_moment();
    let identity = DMatrix::identity(d, d);
    let mut second = -(sigma * sigma);
    for (s, w) in pi.iter().enumerate() {
        second += conditional_fourth_moment(dist.factor(s), &identity, kappa) * *w;
    }
    sym_spectral_norm(&second)
}

/// Almost-sure bound on `‖XXᵀ−Σ‖₂` over the noise support.
fn exact_norm_bound(dist: &StateDistributionSet, sigma: &DMatrix<f64>, lambda1: f64) -> f64 {
    let d = dist.dim();
    let extremes = dist.base_noise().support_extremes();
    let mut best = 0.0_f64;
    for s in 0..dist.n_states() {
        let l = dist.factor(s);
        for mask in 0..(1u32 << d) {
            let z = DVector::from_fn(d, |i, _| extremes[((mask >> i) & 1) as usize]);
            let x = l * z;
            let value = match dist.base_noise() {
                BaseNoise::BernoulliNormalized { .. } => sym_spectral_norm(&(&x * x.transpose() - sigma)),
                // ‖xxᵀ−Σ‖ ≤ max(‖x‖², λ₁) and ‖Lz‖² is convex, so its sup
                // over the box is attained at a vertex.
                BaseNoise::UniformSym => x.norm_squared().max(lambda1),
            };
            best = best.max(value);
        }
    }
    best
}

/// `Q_t = Π^{1/2}(Pᵗ − 𝟙πᵀ)Π^{−1/2}`.
pub fn q_matrix(chain: &TransitionMatrix, spectrum: &ChainSpectrum, t: u64) -> DMatrix<f64> {
    let pt = chain.power(t);
    let pi = &spectrum.stationary;
    let n = chain.n_states();
    DMatrix::from_fn(n, n, |x, y| pi[x].sqrt() * (pt[(x, y)] - pi[y]) / pi[y].sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct QNormRow {
    pub t: u64,
    pub norm: f64,
    pub bound: f64,
}

/// `‖Q_t‖₂` against `|λ₂(P)|ᵗ` for `t = 1..=t_max`.
pub fn check_q_norm(
    chain: &TransitionMatrix,
    spectrum: &ChainSpectrum,
    t_max: u64,
) -> Result<(Vec<QNormRow>, CheckReport), OracleError> {
    require_reversible(chain, spectrum)?;
    let mut report = CheckReport::new(Suite::QNorm);
    let mut rows = Vec::with_capacity(t_max as usize);
    for t in 1..=t_max {
        let norm = spectral_norm(&q_matrix(chain, spectrum, t));
        let bound = spectrum.lambda2_abs.powi(t as i32);
        report.record(|| format!("t={t}"), norm, bound, norm <= bound + QNORM_TOL, norm - bound);
        rows.push(QNormRow { t, norm, bound });
    }
    Ok((rows, report))
}

/// `sup_x TV(ℙ(Z_i = · | Z_{i+k} = x), π)` against `d_mix(k)`.
pub fn check_reverse_mixing(
    chain: &TransitionMatrix,
    spectrum: &ChainSpectrum,
    k: u64,
) -> Result<CheckReport, OracleError> {
    let backward = sup_tv_to_stationary(&reversed_conditional(chain, spectrum, k)?, &spectrum.stationary);
    let forward = d_mix(chain, spectrum, k)?;
    let mut report = CheckReport::new(Suite::RevMix);
    let mismatch = (backward - forward).abs();
    report.record(|| format!("k={k}"), backward, forward, mismatch <= REVMIX_TOL, mismatch);
    Ok(report)
}

/// Window length `k = τ_mix(η²)` at which the covariance-decay bound is
/// claimed.
pub fn covariance_decay_window(instance: &SmallInstance, eta: f64) -> Result<u64, OracleError> {
    Ok(tau_mix(&instance.chain, &instance.spectrum, eta * eta)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CovDecayRow {
    /// `j − i`.
    pub lag: u64,
    /// Conditioning state `s_{i+k} = x₀`.
    pub x0: usize,
    pub norm: f64,
    pub bound: f64,
}

/// Exact `E[(XᵢXᵢᵀ−Σ) S XⱼXⱼᵀ | s_{i+k} = x₀]` for `j − i = lag ∈ [1, k]`,
/// with `ℙ(sᵢ=a, sⱼ=b | s_{i+k}=x₀) = π(a)P^{lag}(a,b)P^{k−lag}(b,x₀)/π(x₀)`
/// and `E[(XᵢXᵢᵀ−Σ) S XⱼXⱼᵀ | a, b] = G(a) S Σ_b`.
pub fn conditional_cross_moment(instance: &SmallInstance, k: u64, lag: u64, x0: usize, s: &DMatrix<f64>) -> DMatrix<f64> {
    let n = instance.chain.n_states();
    let d = instance.dist.dim();
    let pi = &instance.spectrum.stationary;
    let p_lag = instance.chain.power(lag);
    let p_rest = instance.chain.power(k - lag);
    let mut total = DMatrix::zeros(d, d);
    for b in 0..n {
        let to_x0 = p_rest[(b, x0)] / pi[x0];
        if to_x0 == 0.0 {
            continue;
        }
        let mut left = DMatrix::zeros(d, d);
        for a in 0..n {
            left += &instance.g[a] * (pi[a] * p_lag[(a, b)]);
        }
        total += left * s * instance.dist.covariance(b) * to_x0;
    }
    total
}

/// Covariance-decay bound for every lag `1..=k` and conditioning state.
/// Requires `d_mix(k) ≤ η²`, the window on which the bound is claimed.
pub fn check_covariance_decay(
    instance: &SmallInstance,
    k: u64,
    s: &DMatrix<f64>,
    eta: f64,
) -> Result<(Vec<CovDecayRow>, CheckReport), OracleError> {
    if k == 0 {
        return Err(OracleError::Precondition("window k must be at least 1".into()));
    }
    let dk = d_mix(&instance.chain, &instance.spectrum, k)?;
    if dk > eta * eta {
        return Err(OracleError::Precondition(format!("d_mix({k}) = {dk:e} exceeds η² = {:e}", eta * eta)));
    }
    let s_norm = sym_spectral_norm(s);
    let m = instance.m_exact;
    let slack = 8.0 * eta * eta * m * (m + instance.lambda1);
    let mut report = CheckReport::new(Suite::CovDecay);
    let mut rows = Vec::new();
    for lag in 1..=k {
        let bound = (instance.spectrum.lambda2_abs.powi(lag as i32) * instance.v_exact + slack) * s_norm;
        for x0 in 0..instance.chain.n_states() {
            let norm = spectral_norm(&conditional_cross_moment(instance, k, lag, x0, s));
            let ratio = if bound > 0.0 { norm / bound } else if norm > 0.0 { f64::INFINITY } else { 0.0 };
            report.record(
                || format!("i=0,j={lag},k={k},x0={x0},eta={eta}"),
                norm,
                bound,
                norm <= bound * (1.0 + BOUND_RTOL) + 1e-14,
                ratio,
            );
            rows.push(CovDecayRow { lag, x0, norm, bound });
        }
    }
    Ok((rows, report))
}

/// `‖E_π[(XXᵀ−Σ) S XXᵀ]‖₂`, the `i = j` term. With `S = I` this is
/// `‖E[(XXᵀ−Σ)²]‖₂ = 𝒱` exactly.
pub fn same_index_moment(instance: &SmallInstance, s: &DMatrix<f64>) -> f64 {
    let kappa = instance.dist.base_noise().fourth_moment();
    let d = instance.dist.dim();
    let mut total = DMatrix::zeros(d, d);
    for (a, w) in instance.spectrum.stationary.iter().enumerate() {
        let fourth = conditional_fourth_moment(instance.dist.factor(a), s, kappa);
        total += (fourth - &instance.sigma * s * instance.dist.covariance(a)) * *w;
    }
    spectral_norm(&total)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProductDeviation {
    /// `‖∏ − I‖₂`.
    pub first_order: f64,
    /// `‖∏ − I − Σ η_t X_tX_tᵀ‖₂`.
    pub second_order: f64,
}

/// `∏_{t} (I + η_t x_t x_tᵀ)` with later factors on the left.
pub fn window_product(samples: &[DVector<f64>], etas: &[f64]) -> DMatrix<f64> {
    let d = samples.first().map_or(0, |x| x.len());
    let mut prod = DMatrix::identity(d, d);
    for (x, &eta) in samples.iter().zip(etas) {
        let mut factor = DMatrix::identity(d, d);
        factor.ger(eta, x, x, 1.0);
        prod = factor * prod;
    }
    prod
}

pub fn product_deviation(samples: &[DVector<f64>], etas: &[f64]) -> ProductDeviation {
    let d = samples.first().map_or(0, |x| x.len());
    let prod = window_product(samples, etas);
    let identity = DMatrix::<f64>::identity(d, d);
    let mut linear = identity.clone();
    for (x, &eta) in samples.iter().zip(etas) {
        linear.ger(eta, x, x, 1.0);
    }
    ProductDeviation {
        first_order: spectral_norm(&(&prod - &identity)),
        second_order: spectral_norm(&(prod - linear)),
    }
}

/// Schedule with `η₁ k (ℳ+λ₁) = target`: `α = 3`, `β = α k (ℳ+λ₁)/(gap·target) − 1`.
pub fn product_schedule(instance: &SmallInstance, k: usize, target: f64) -> Result<StepSchedule, OracleError> {
    let eig = sym_eigen_desc(&instance.sigma);
    let gap = if eig.values.len() > 1 { eig.values[0] - eig.values[1] } else { eig.values[0] };
    let gap = if gap > 1e-8 { gap } else { 1.0 };
    let alpha = 3.0;
    let beta = alpha * k as f64 * instance.m_plus_lambda1() / (gap * target) - 1.0;
    Ok(StepSchedule::new(alpha, beta, gap, ScheduleMode::Practical)?)
}

/// Both matrix-product bounds on `windows` random length-`k` windows of a
/// stationary stream, started at random offsets `m ∈ [1, 1000]`.
pub fn check_matrix_product_approx(
    instance: &SmallInstance,
    schedule: &StepSchedule,
    k: usize,
    windows: usize,
    seed: u64,
) -> Result<CheckReport, OracleError> {
    if k == 0 {
        return Err(OracleError::Precondition("window length must be positive".into()));
    }
    let scale = instance.m_plus_lambda1();
    // η is non-increasing, so the first step bounds the whole stream.
    let lead = schedule.eta(1) * k as f64 * scale;
    if lead > PRODUCT_EPS {
        return Err(OracleError::Precondition(format!("η₁ k (ℳ+λ₁) = {lead} exceeds ε = {PRODUCT_EPS}")));
    }
    let mut report = CheckReport::new(Suite::ProdApprox);
    let mut rng = rng_from_seed(seed);
    for w in 0..windows {
        let m: usize = rng.random_range(1..=1000);
        let path = sample_path(&instance.chain, &instance.spectrum, k, derive_seed(seed, w as u64))?;
        let samples: Vec<DVector<f64>> = path.iter().map(|&s| instance.dist.draw_sample(s, &mut rng)).collect();
        let etas: Vec<f64> = (m..m + k).map(|t| schedule.eta(t)).collect();
        let dev = product_deviation(&samples, &etas);
        let eta_m = etas[0];
        let kf = k as f64;
        let bound1 = (1.0 + PRODUCT_EPS) * kf * eta_m * scale;
        let bound2 = (kf * eta_m * scale).powi(2);
        report.record(
            || format!("window={w},m={m},order=1"),
            dev.first_order,
            bound1,
            dev.first_order <= bound1 * (1.0 + BOUND_RTOL),
            dev.first_order / bound1,
        );
        report.record(
            || format!("window={w},m={m},order=2"),
            dev.second_order,
            bound2,
            dev.second_order <= bound2 * (1.0 + BOUND_RTOL),
            dev.second_order / bound2,
        );
    }
    Ok(report)
}

/// Eigengap sandwich on `τ_mix(ε)` for each `ε` in `eps`.
pub fn check_mixing_sandwich(
    chain: &TransitionMatrix,
    spectrum: &ChainSpectrum,
    eps: &[f64],
) -> Result<Vec<(f64, u64, f64, f64)>, OracleError> {
    require_reversible(chain, spectrum)?;
    eps.iter()
        .map(|&e| {
            let t = tau_mix(chain, spectrum, e)?;
            let (lo, hi) = spectrum.tau_mix_bounds(e);
            Ok((e, t, lo, hi))
        })
        .collect()
}

fn require_reversible(chain: &TransitionMatrix, spectrum: &ChainSpectrum) -> Result<(), OracleError> {
    if !spectrum.reversible {
        let defect = detailed_balance_defect(chain, &spectrum.stationary);
        return Err(OracleError::Markov(MarkovError::NotReversible { defect }));
    }
    Ok(())
}

/// Random PSD matrix `BBᵀ/d` with standard-normal-ish entries.
pub fn random_psd<R: Rng + ?Sized>(d: usize, rng: &mut R) -> DMatrix<f64> {
    let b = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
    let m = &b * b.transpose() / d as f64;
    (&m + m.transpose()) * 0.5
}

/// A random reversible chain on 2–8 states with per-state covariances in
/// dimension 2–6 and alternating Bernoulli / uniform noise.
pub fn random_instance(seed: u64) -> Result<SmallInstance, OracleError> {
    let mut rng = rng_from_seed(seed);
    let n = rng.random_range(2..=MAX_STATES);
    let d = rng.random_range(2..=MAX_DIM);
    let chain = random_reversible_chain(n, &mut rng)?;
    let covs = (0..n)
        .map(|_| {
            let scale = rng.random_range(0.2..3.0);
            random_psd(d, &mut rng) * scale
        })
        .collect();
    let noise = if rng.random::<bool>() {
        BaseNoise::bernoulli(rng.random_range(0.1..0.5))?
    } else {
        BaseNoise::UniformSym
    };
    SmallInstance::new(chain, StateDistributionSet::from_covariances(covs, noise)?)
}

/// Reproducible corpus: instance `i` is built from `derive_seed(master, i)`.
pub fn corpus(master_seed: u64, count: usize) -> Result<Vec<SmallInstance>, OracleError> {
    (0..count).into_par_iter().map(|i| random_instance(derive_seed(master_seed, i as u64))).collect()
}

/// All checks of one suite over one instance.
pub fn check_instance(instance: &SmallInstance, suite: Suite, seed: u64) -> Result<CheckReport, OracleError> {
    let mut report = CheckReport::new(suite);
    match suite {
        Suite::QNorm => {
            let (_, r) = check_q_norm(&instance.chain, &instance.spectrum, QNORM_T_MAX)?;
            report.absorb(r, 0);
        }
        Suite::RevMix => {
            for k in 0..=REVMIX_K_MAX {
                report.absorb(check_reverse_mixing(&instance.chain, &instance.spectrum, k)?, 0);
            }
        }
        Suite::CovDecay => {
            let d = instance.dist.dim();
            let mut rng = rng_from_seed(seed);
            let tests = [DMatrix::identity(d, d), random_psd(d, &mut rng)];
            for eta in COVDECAY_ETAS {
                let k = covariance_decay_window(instance, eta)?;
                for s in &tests {
                    report.absorb(check_covariance_decay(instance, k, s, eta)?.1, 0);
                }
            }
        }
        Suite::ProdApprox => {
            let schedule = product_schedule(instance, PRODUCT_WINDOW, PRODUCT_TARGET)?;
            report.absorb(
                check_matrix_product_approx(instance, &schedule, PRODUCT_WINDOW, PRODUCT_WINDOWS_PER_INSTANCE, seed)?,
                0,
            );
        }
    }
    report.violations.iter_mut().for_each(|v| v.instance = None);
    Ok(report)
}

/// Runs `suite` over the standard corpus of [`CORPUS_SIZE`] instances.
pub fn run_suite(suite: Suite, master_seed: u64) -> Result<CheckReport, OracleError> {
    let instances = corpus(master_seed, CORPUS_SIZE)?;
    run_suite_on(&instances, suite, master_seed)
}

pub fn run_suite_on(instances: &[SmallInstance], suite: Suite, master_seed: u64) -> Result<CheckReport, OracleError> {
    let parts: Vec<CheckReport> = instances
        .par_iter()
        .enumerate()
        .map(|(i, inst)| check_instance(inst, suite, derive_seed(derive_seed(master_seed, 0xC0DE), i as u64)))
        .collect::<Result<_, _>>()?;
    let mut report = CheckReport::new(suite);
    for (i, part) in parts.into_iter().enumerate() {
        report.absorb(part, i);
    }
    Ok(report)
}
