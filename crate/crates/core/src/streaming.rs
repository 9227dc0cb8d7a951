//! Oja's algorithm on a Markovian stream.
//!
//! One update with step size `η` and sample `x` is
//!
//! ```text
//! w ← (w + η x (xᵀw)) / ‖w + η x (xᵀw)‖
//! ```
//!
//! and the `t`-th sample uses `η_t = α / ((λ₁ − λ₂)(β + t))`. Error is
//! `sin²(w, v₁) = 1 − ⟨w, v₁⟩²`.
//!
//! Runs are driven by [`drive_stream`]: a single pass over a
//! [`SampleStream`] that fans each sample out to any number of
//! [`StreamConsumer`]s, so several estimators can be fed the identical data.

use nalgebra::DVector;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::linalg::sin2;
use crate::seed::{derive_seed, rng_from_seed, stream};
use crate::statedist::{EnsembleCovariance, StateDistributionSet};

/// Below this the updated iterate is considered collapsed.
pub const COLLAPSE_NORM: f64 = 1e-300;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StreamingError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("eigengap must be positive, got {gap}")]
    DegenerateGap { gap: f64 },
    #[error("iterate collapsed to norm {norm:e}")]
    NumericalCollapse { norm: f64 },
    #[error("checkpoint {checkpoint} is outside [1, {len}]")]
    CheckpointOutOfRange { checkpoint: usize, len: usize },
    #[error("skip factor {k} exceeds stream length {len}; no sample would be used")]
    EmptyTrace { k: usize, len: usize },
    #[error("schedule violates η₀ ≤ 1/e (η₀ = {eta0})")]
    StepTooLarge { eta0: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

/// How `(α, β)` were chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScheduleMode {
    /// `α = 5`, `β = 5/(1 − |λ₂(P)|)` unless overridden.
    Practical,
    /// `β` from the convergence theorem's formula, `η₀ ≤ 1/e` enforced.
    TheoremFaithful,
}

/// `η_i = α / (gap · (β + i))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepSchedule {
    pub alpha: f64,
    pub beta: f64,
    pub gap: f64,
    pub mode: ScheduleMode,
}

impl StepSchedule {
    pub fn new(alpha: f64, beta: f64, gap: f64, mode: ScheduleMode) -> Result<Self, StreamingError> {
        if !(gap > 0.0) {
            return Err(StreamingError::DegenerateGap { gap });
        }
        if !(alpha > 2.0 && alpha.is_finite()) {
            return Err(StreamingError::InvalidParameter(format!("alpha must exceed 2, got {alpha}")));
        }
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(StreamingError::InvalidParameter(format!("beta must be positive, got {beta}")));
        }
        let schedule = Self { alpha, beta, gap, mode };
        if mode == ScheduleMode::TheoremFaithful && schedule.eta0() > (-1f64).exp() {
            return Err(StreamingError::StepTooLarge { eta0: schedule.eta0() });
        }
        Ok(schedule)
    }

    /// The default experimental schedule: `α = 5`, `β = 5/(1 − |λ₂(P)|)`.
    pub fn practical(gap: f64, lambda2_abs: f64) -> Result<Self, StreamingError> {
        Self::new(5.0, 5.0 / (1.0 - lambda2_abs), gap, ScheduleMode::Practical)
    }

    /// Theorem schedule: `β` is the fixed point of `β = theorem_beta(…, η₀(β))`
    /// with `η₀ = α/(gap·β)`, starting from `η₀ = 1/e`. Since `β` grows as
    /// `η₀` shrinks, the iteration is monotone.
    #[allow(clippy::too_many_arguments)]
    pub fn theorem_faithful(
        alpha: f64,
        delta: f64,
        gap: f64,
        tau_mix: f64,
        v_bound: f64,
        m_bound: f64,
        lambda1: f64,
        lambda2_abs: f64,
    ) -> Result<Self, StreamingError> {
        let mut eta0 = (-1f64).exp();
        let mut beta = theorem_beta(alpha, gap, delta, tau_mix, eta0, v_bound, m_bound, lambda1, lambda2_abs)?;
        for _ in 0..200 {
            eta0 = (alpha / (gap * beta)).min((-1f64).exp());
            let next = theorem_beta(alpha, gap, delta, tau_mix, eta0, v_bound, m_bound, lambda1, lambda2_abs)?;
            let done = (next - beta).abs() <= 1e-12 * next;
            beta = next;
            if done {
                break;
            }
        }
        Self::new(alpha, beta, gap, ScheduleMode::TheoremFaithful)
    }

    /// Step size for the `i`-th sample (`i = 0` gives `η₀`).
    pub fn eta(&self, i: usize) -> f64 {
        self.alpha / (self.gap * (self.beta + i as f64))
    }

    pub fn eta0(&self) -> f64 {
        self.eta(0)
    }

    /// Practical schedules may start above one; flagged in run metadata.
    pub fn eta0_exceeds_one(&self) -> bool {
        self.eta0() > 1.0
    }

    /// Same `α`, `β / k`: the downsampled stream takes every `k`-th sample.
    pub fn with_beta_divided(&self, k: usize) -> Result<Self, StreamingError> {
        Self::new(self.alpha, self.beta / k as f64, self.gap, self.mode)
    }
}

/// The theorem's burn-in constant
///
/// ```text
///       1000 α² max{ τ_mix ln(1/η₀) (ℳ+λ₁)²,  (𝒱/(1−|λ₂(P)|) + λ₁²)/100 }
/// β  =  ───────────────────────────────────────────────────────────────
///                    (λ₁−λ₂)² ln(1 + δ/200)
/// ```
#[allow(clippy::too_many_arguments)]
pub fn theorem_beta(
    alpha: f64,
    gap: f64,
    delta: f64,
    tau_mix: f64,
    eta0: f64,
    v_bound: f64,
    m_bound: f64,
    lambda1: f64,
    lambda2_abs: f64,
) -> Result<f64, StreamingError> {
    if !(gap > 0.0) {
        return Err(StreamingError::DegenerateGap { gap });
    }
    if !(alpha > 2.0) {
        return Err(StreamingError::InvalidParameter(format!("alpha must exceed 2, got {alpha}")));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(StreamingError::InvalidParameter(format!("delta must lie in (0, 1), got {delta}")));
    }
    if !(eta0 > 0.0 && eta0 < 1.0) || !(0.0..1.0).contains(&lambda2_abs) {
        return Err(StreamingError::InvalidParameter("need 0 < η₀ < 1 and 0 ≤ |λ₂| < 1".into()));
    }
    let mixing_term = tau_mix * (1.0 / eta0).ln() * (m_bound + lambda1).powi(2);
    let variance_term = (v_bound / (1.0 - lambda2_abs) + lambda1 * lambda1) / 100.0;
    let numerator = 1000.0 * alpha * alpha * mixing_term.max(variance_term);
    Ok(numerator / (gap * gap * (1.0 + delta / 200.0).ln()))
}

/// Unit-norm iterate and step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct OjaEstimator {
    w: DVector<f64>,
    t: usize,
}

impl OjaEstimator {
    /// Starts from `w0 / ‖w0‖`.
    pub fn new(w0: DVector<f64>) -> Result<Self, StreamingError> {
        let norm = w0.norm();
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(StreamingError::InvalidParameter("initial vector must be non-zero".into()));
        }
        Ok(Self { w: w0 / norm, t: 0 })
    }

    /// Uniform draw from the unit sphere (normalised standard Gaussian).
    pub fn random_init<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Self {
        loop {
            let g = DVector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal));
            if let Ok(est) = Self::new(g) {
                return est;
            }
        }
    }

    pub fn w(&self) -> &DVector<f64> {
        &self.w
    }

    /// Number of updates applied.
    pub fn t(&self) -> usize {
        self.t
    }

    /// One rank-one Oja update, `O(d)`.
    pub fn step(&mut self, x: &DVector<f64>, eta: f64) -> Result<(), StreamingError> {
        if x.len() != self.w.len() {
            return Err(StreamingError::DimensionMismatch { expected: self.w.len(), got: x.len() });
        }
        let proj = x.dot(&self.w);
        self.w.axpy(eta * proj, x, 1.0);
        let norm = self.w.norm();
        if !(norm >= COLLAPSE_NORM) || !norm.is_finite() {
            return Err(StreamingError::NumericalCollapse { norm });
        }
        self.w /= norm;
        self.t += 1;
        Ok(())
    }

    pub fn sin2(&self, v1: &DVector<f64>) -> f64 {
        sin2(&self.w, v1)
    }
}

/// Estimator tag used in traces and result tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Algorithm {
    Oja,
    OjaDownsampled,
    Offline,
}

impl Algorithm {
    pub const ALL: [Algorithm; 3] = [Algorithm::Oja, Algorithm::OjaDownsampled, Algorithm::Offline];

    pub fn as_str(&self) -> &'static str {
        match self {
            Algorithm::Oja => "oja",
            Algorithm::OjaDownsampled => "oja_downsampled",
            Algorithm::Offline => "offline",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|a| a.as_str() == s)
    }
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// `sin²` error of one estimator at each checkpoint of one stream.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorTrace {
    pub algorithm: Algorithm,
    pub seed: u64,
    /// Total stream positions (1-based), increasing.
    pub checkpoints: Vec<usize>,
    pub errors: Vec<f64>,
    /// Samples actually consumed by the estimator.
    pub updates: usize,
    /// FNV-1a digest of every sample generated for the stream.
    pub stream_checksum: u64,
}

/// Generates `X_1, X_2, …` along a state path from a dedicated RNG.
#[derive(Debug)]
pub struct SampleStream<'a> {
    path: &'a [usize],
    dist: &'a StateDistributionSet,
    rng: ChaCha8Rng,
    pos: usize,
    buf: DVector<f64>,
    checksum: u64,
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

impl<'a> SampleStream<'a> {
    pub fn new(path: &'a [usize], dist: &'a StateDistributionSet, sample_seed: u64) -> Self {
        Self {
            path,
            dist,
            rng: rng_from_seed(sample_seed),
            pos: 0,
            buf: DVector::zeros(dist.dim()),
            checksum: FNV_OFFSET,
        }
    }

    pub fn len(&self) -> usize {
        self.path.len()
    }

    pub fn is_empty(&self) -> bool {
        self.path.is_empty()
    }

    /// Next `(position, sample)`, positions starting at 1.
    pub fn next_sample(&mut self) -> Option<(usize, &DVector<f64>)> {
        let state = *self.path.get(self.pos)?;
        self.dist.draw_sample_into(state, &mut self.rng, &mut self.buf);
        for v in self.buf.iter() {
            for byte in v.to_bits().to_le_bytes() {
                self.checksum = (self.checksum ^ byte as u64).wrapping_mul(FNV_PRIME);
            }
        }
        self.pos += 1;
        Some((self.pos, &self.buf))
    }

    pub fn checksum(&self) -> u64 {
        self.checksum
    }
}

/// Something that eats stream samples and can report its current error.
pub trait StreamConsumer {
    fn algorithm(&self) -> Algorithm;
    /// Offered every sample, with its 1-based stream position.
    fn observe(&mut self, position: usize, x: &DVector<f64>) -> Result<(), StreamingError>;
    /// Current `sin²` error against the truth.
    fn error(&mut self, truth: &EnsembleCovariance) -> f64;
    fn updates(&self) -> usize;
}

/// Oja's algorithm on every `skip`-th sample (`skip = 1` is the full stream).
/// The step index is the number of samples consumed so far.
#[derive(Debug, Clone)]
pub struct OjaConsumer {
    estimator: OjaEstimator,
    schedule: StepSchedule,
    skip: usize,
}

impl OjaConsumer {
    pub fn new(estimator: OjaEstimator, schedule: StepSchedule, skip: usize) -> Result<Self, StreamingError> {
        if skip == 0 {
            return Err(StreamingError::InvalidParameter("skip factor must be at least 1".into()));
        }
        Ok(Self { estimator, schedule, skip })
    }

    pub fn estimator(&self) -> &OjaEstimator {
        &self.estimator
    }
}

impl StreamConsumer for OjaConsumer {
    fn algorithm(&self) -> Algorithm {
        if self.skip == 1 {
            Algorithm::Oja
        } else {
            Algorithm::OjaDownsampled
        }
    }

    fn observe(&mut self, position: usize, x: &DVector<f64>) -> Result<(), StreamingError> {
        if !position.is_multiple_of(self.skip) {
            return Ok(());
        }
        let eta = self.schedule.eta(self.estimator.t() + 1);
        self.estimator.step(x, eta)
    }

    fn error(&mut self, truth: &EnsembleCovariance) -> f64 {
        self.estimator.sin2(&truth.v1)
    }

    fn updates(&self) -> usize {
        self.estimator.t()
    }
}

/// Validates a checkpoint list against a stream length.
pub fn validate_checkpoints(checkpoints: &[usize], len: usize) -> Result<(), StreamingError> {
    for (i, &c) in checkpoints.iter().enumerate() {
        if c == 0 || c > len {
            return Err(StreamingError::CheckpointOutOfRange { checkpoint: c, len });
        }
        if i > 0 && checkpoints[i - 1] >= c {
            return Err(StreamingError::InvalidParameter("checkpoints must be strictly increasing".into()));
        }
    }
    Ok(())
}

/// One pass over the stream feeding every consumer; errors are recorded at
/// each checkpoint. Returns one trace per consumer, in order.
pub fn drive_stream(
    stream: &mut SampleStream<'_>,
    consumers: &mut [&mut dyn StreamConsumer],
    checkpoints: &[usize],
    truth: &EnsembleCovariance,
    seed: u64,
) -> Result<Vec<ErrorTrace>, StreamingError> {
    validate_checkpoints(checkpoints, stream.len())?;
    if truth.dim() != stream.dist.dim() {
        return Err(StreamingError::DimensionMismatch { expected: stream.dist.dim(), got: truth.dim() });
    }
    let mut errors = vec![Vec::with_capacity(checkpoints.len()); consumers.len()];
    let mut next_checkpoint = 0;
    while let Some((pos, x)) = stream.next_sample() {
        for c in consumers.iter_mut() {
            c.observe(pos, x)?;
        }
        if next_checkpoint < checkpoints.len() && checkpoints[next_checkpoint] == pos {
            for (c, errs) in consumers.iter_mut().zip(errors.iter_mut()) {
                errs.push(c.error(truth));
            }
            next_checkpoint += 1;
        }
    }
    let checksum = stream.checksum();
    Ok(consumers
        .iter()
        .zip(errors)
        .map(|(c, errors)| ErrorTrace {
            algorithm: c.algorithm(),
            seed,
            checkpoints: checkpoints.to_vec(),
            errors,
            updates: c.updates(),
            stream_checksum: checksum,
        })
        .collect())
}

/// Seed of the base-noise stream for a trial seed.
pub fn sample_seed(seed: u64) -> u64 {
    derive_seed(seed, stream::SAMPLES)
}

/// `w₀` for a trial seed.
pub fn initial_estimator(dim: usize, seed: u64) -> OjaEstimator {
    OjaEstimator::random_init(dim, &mut rng_from_seed(derive_seed(seed, stream::INIT)))
}

/// Oja's algorithm over the whole path. `seed` fixes both `w₀` and the data.
pub fn run_oja(
    path: &[usize],
    dist: &StateDistributionSet,
    schedule: &StepSchedule,
    checkpoints: &[usize],
    truth: &EnsembleCovariance,
    seed: u64,
) -> Result<ErrorTrace, StreamingError> {
    run_downsampled_oja(path, dist, schedule, 1, checkpoints, truth, seed)
}

/// Oja's algorithm on samples `k, 2k, 3k, …`; checkpoints refer to the
/// total stream position. With the same `seed` the data (including the
/// skipped samples) is identical to [`run_oja`]'s.
pub fn run_downsampled_oja(
    path: &[usize],
    dist: &StateDistributionSet,
    schedule: &StepSchedule,
    k: usize,
    checkpoints: &[usize],
    truth: &EnsembleCovariance,
    seed: u64,
) -> Result<ErrorTrace, StreamingError> {
    if k == 0 {
        return Err(StreamingError::InvalidParameter("skip factor must be at least 1".into()));
    }
    if k > path.len() {
        return Err(StreamingError::EmptyTrace { k, len: path.len() });
    }
    let mut consumer = OjaConsumer::new(initial_estimator(dist.dim(), seed), *schedule, k)?;
    let mut stream = SampleStream::new(path, dist, sample_seed(seed));
    let mut traces = drive_stream(&mut stream, &mut [&mut consumer], checkpoints, truth, seed)?;
    Ok(traces.remove(0))
}
