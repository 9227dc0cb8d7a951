//! Finite-state Markov chains: stationary law, second eigenvalue magnitude,
//! total-variation mixing and the time-reversed kernel.
//!
//! For an ergodic chain with transition matrix `P` and stationary law `π`:
//!
//! ```text
//! d_mix(t)   = max_x ½ Σ_y |Pᵗ(x,y) − π(y)|
//! τ_mix(ε)   = min { t ≥ 1 : d_mix(t) ≤ ε },     τ_mix := τ_mix(1/4)
//! ```
//!
//! For reversible chains `Π^{1/2} P Π^{-1/2}` is symmetric, which is how
//! `|λ₂(P)|` is obtained without a complex eigensolver.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use thiserror::Error;

use crate::linalg::{matrix_power, sym_eigen_desc};
use crate::seed::rng_from_seed;

/// Row sums must be within this of one.
pub const ROW_SUM_TOL: f64 = 1e-12;
/// Detailed-balance tolerance for declaring a chain reversible.
pub const DETAILED_BALANCE_TOL: f64 = 1e-10;
/// Chains with `|λ₂|` this close to one are rejected as non-ergodic.
pub const ERGODIC_GAP_TOL: f64 = 1e-10;

const STATIONARY_TOL: f64 = 1e-13;
const STATIONARY_MAX_ITER: usize = 1_000_000;
/// Doubling stops here; `d_mix` cannot be resolved below round-off anyway.
const MAX_DOUBLINGS: u32 = 62;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MarkovError {
    #[error("transition matrix must be square and non-empty, got {rows}x{cols}")]
    Shape { rows: usize, cols: usize },
    #[error("entry P({row},{col}) = {value} is outside [0, 1]")]
    EntryOutOfRange { row: usize, col: usize, value: f64 },
    #[error("row {row} sums to {sum}, expected 1")]
    RowSum { row: usize, sum: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("chain is not ergodic: {0}")]
    NotErgodic(String),
    #[error("chain is not reversible (detailed-balance defect {defect:e})")]
    NotReversible { defect: f64 },
    #[error("d_mix did not fall below {eps:e} within 2^62 steps")]
    MixingUnresolved { eps: f64 },
    #[error("spectrum has {spectrum} states but chain has {chain}")]
    SpectrumMismatch { chain: usize, spectrum: usize },
}

/// Row-stochastic matrix over a finite state space.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    probs: DMatrix<f64>,
    /// Row-wise cumulative sums used for inverse-CDF sampling.
    cdf: Vec<Vec<f64>>,
}

impl TransitionMatrix {
    pub fn new(probs: DMatrix<f64>) -> Result<Self, MarkovError> {
        let (rows, cols) = probs.shape();
        if rows == 0 || rows != cols {
            return Err(MarkovError::Shape { rows, cols });
        }
        for row in 0..rows {
            let mut sum = 0.0;
            for col in 0..cols {
                let value = probs[(row, col)];
                if !(0.0..=1.0).contains(&value) {
                    return Err(MarkovError::EntryOutOfRange { row, col, value });
                }
                sum += value;
            }
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(MarkovError::RowSum { row, sum });
            }
        }
        let cdf = probs
            .row_iter()
            .map(|row| {
                row.iter()
                    .scan(0.0, |acc, &p| {
                        *acc += p;
                        Some(*acc)
                    })
                    .collect()
            })
            .collect();
        Ok(Self { probs, cdf })
    }

    /// Builds a chain from row-major data.
    pub fn from_rows(n: usize, data: &[f64]) -> Result<Self, MarkovError> {
        if data.len() != n * n {
            return Err(MarkovError::Shape { rows: n, cols: data.len() / n.max(1) });
        }
        Self::new(DMatrix::from_row_slice(n, n, data))
    }

    pub fn n_states(&self) -> usize {
        self.probs.nrows()
    }

    pub fn probs(&self) -> &DMatrix<f64> {
        &self.probs
    }

    /// `Pᵗ`, by repeated squaring.
    pub fn power(&self, t: u64) -> DMatrix<f64> {
        matrix_power(&self.probs, t)
    }

    /// Draws the successor of `state`.
    pub fn step<R: Rng + ?Sized>(&self, state: usize, rng: &mut R) -> usize {
        sample_categorical(&self.cdf[state], rng)
    }
}

/// Inverse-CDF draw from cumulative weights (the last entry is the total).
fn sample_categorical<R: Rng + ?Sized>(cdf: &[f64], rng: &mut R) -> usize {
    let total = *cdf.last().expect("non-empty distribution");
    let u = rng.random::<f64>() * total;
    // First index whose cumulative weight exceeds u; zero-probability states
    // share their predecessor's cumulative value and are never selected.
    cdf.partition_point(|&c| c <= u).min(cdf.len() - 1)
}

/// The `ρ`-chain: stay with probability `1 − ρ`, otherwise jump uniformly
/// to one of the other `n − 1` states.
pub fn make_rho_chain(n_states: usize, rho: f64) -> Result<TransitionMatrix, MarkovError> {
    if n_states < 2 {
        return Err(MarkovError::InvalidParameter(format!(
            "rho-chain needs at least 2 states, got {n_states}"
        )));
    }
    if !(rho > 0.0 && rho < 1.0) {
        return Err(MarkovError::InvalidParameter(format!("rho must lie in (0, 1), got {rho}")));
    }
    let off = rho / (n_states - 1) as f64;
    let probs = DMatrix::from_fn(n_states, n_states, |i, j| if i == j { 1.0 - rho } else { off });
    TransitionMatrix::new(probs)
}

/// Builds the reversible chain `P(x,y) = W(x,y) / Σ_z W(x,z)` from a symmetric
/// non-negative weight matrix. Its stationary law is proportional to the row
/// sums of `W`.
pub fn chain_from_weights(weights: &DMatrix<f64>) -> Result<TransitionMatrix, MarkovError> {
    let n = weights.nrows();
    if n == 0 || weights.ncols() != n {
        return Err(MarkovError::Shape { rows: n, cols: weights.ncols() });
    }
    let mut probs = weights.clone();
    for mut row in probs.row_iter_mut() {
        let s: f64 = row.sum();
        if s <= 0.0 {
            return Err(MarkovError::InvalidParameter("weight row sums to zero".into()));
        }
        row /= s;
    }
    // Re-normalise once more so the rows sum to one to the last ulp.
    for mut row in probs.row_iter_mut() {
        let s: f64 = row.sum();
        row /= s;
    }
    TransitionMatrix::new(probs)
}

/// Random reversible chain on `n_states` states with strictly positive
/// symmetric weights. A random extra weight on the diagonal varies laziness,
/// and squaring the off-diagonal weights varies how clustered the chain is.
pub fn random_reversible_chain<R: Rng + ?Sized>(
    n_states: usize,
    rng: &mut R,
) -> Result<TransitionMatrix, MarkovError> {
    let mut w = DMatrix::zeros(n_states, n_states);
    let laziness: f64 = rng.random_range(0.0..3.0);
    let exponent: f64 = rng.random_range(1.0..4.0);
    for i in 0..n_states {
        for j in i..n_states {
            let u: f64 = rng.random_range(0.01..1.0);
            let mut v = u.powf(exponent);
            if i == j {
                v += laziness * rng.random::<f64>();
            }
            w[(i, j)] = v;
            w[(j, i)] = v;
        }
    }
    chain_from_weights(&w)
}

/// Stationary law and spectral metadata of an ergodic chain.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainSpectrum {
    pub stationary: DVector<f64>,
    /// Second-largest eigenvalue magnitude of `P`.
    pub lambda2_abs: f64,
    pub reversible: bool,
    pub pi_min: f64,
}

impl ChainSpectrum {
    pub fn n_states(&self) -> usize {
        self.stationary.len()
    }

    /// Spectral gap `1 − |λ₂(P)|`.
    pub fn gap(&self) -> f64 {
        1.0 - self.lambda2_abs
    }

    /// The eigengap sandwich on `τ_mix(ε)` for reversible chains:
    /// `(|λ₂|/(1−|λ₂|))·ln(1/(2ε)) ≤ τ_mix(ε) ≤ (1/(1−|λ₂|))·ln(1/(ε·π_min))`.
    pub fn tau_mix_bounds(&self, eps: f64) -> (f64, f64) {
        let l = self.lambda2_abs;
        let lower = l / (1.0 - l) * (1.0 / (2.0 * eps)).ln();
        let upper = 1.0 / (1.0 - l) * (1.0 / (eps * self.pi_min)).ln();
        (lower, upper)
    }
}

/// Ergodicity check, stationary law, reversibility and `|λ₂(P)|`.
pub fn analyze_spectrum(chain: &TransitionMatrix) -> Result<ChainSpectrum, MarkovError> {
    if !is_primitive(chain) {
        return Err(MarkovError::NotErgodic("no power of P is entrywise positive".into()));
    }
    let stationary = stationary_distribution(chain);
    let pi_min = stationary.min();
    let defect = detailed_balance_defect(chain, &stationary);
    let reversible = defect <= DETAILED_BALANCE_TOL;
    let lambda2_abs = if reversible {
        lambda2_reversible(chain, &stationary)
    } else {
        lambda2_power_iteration(chain, &stationary)
    };
    if lambda2_abs >= 1.0 - ERGODIC_GAP_TOL {
        return Err(MarkovError::NotErgodic(format!("|lambda_2| = {lambda2_abs} is within tolerance of 1")));
    }
    Ok(ChainSpectrum { stationary, lambda2_abs, reversible, pi_min })
}

/// Primitivity: `P^m` is entrywise positive for some `m ≥ n²`, evaluated on
/// the zero pattern so tiny probabilities cannot underflow.
fn is_primitive(chain: &TransitionMatrix) -> bool {
    let n = chain.n_states();
    let mut pattern: Vec<bool> = chain.probs().iter().map(|&p| p > 0.0).collect();
    // column-major index helper
    let at = |m: &[bool], i: usize, j: usize| m[i + j * n];
    let target = (n * n) as u64;
    let mut exponent = 1u64;
    while exponent < target {
        let mut next = vec![false; n * n];
        for i in 0..n {
            for j in 0..n {
                next[i + j * n] = (0..n).any(|k| at(&pattern, i, k) && at(&pattern, k, j));
            }
        }
        pattern = next;
        exponent *= 2;
    }
    pattern.into_iter().all(|b| b)
}

/// Power iteration on `Pᵀ` from the uniform vector.
fn stationary_distribution(chain: &TransitionMatrix) -> DVector<f64> {
    let n = chain.n_states();
    let pt = chain.probs().transpose();
    let mut pi = DVector::from_element(n, 1.0 / n as f64);
    for _ in 0..STATIONARY_MAX_ITER {
        let mut next = &pt * &pi;
        next /= next.sum();
        let change = (&next - &pi).lp_norm(1);
        pi = next;
        if change < STATIONARY_TOL {
            break;
        }
    }
    polish_stationary(chain, pi)
}

/// Refines `π` by solving `(Pᵀ − I)π = 0, 𝟙ᵀπ = 1` directly: power
/// iteration stalls at an error of about `tol/(1−|λ₂|)`. Keeps the input
/// if the solve does not reduce the residual.
fn polish_stationary(chain: &TransitionMatrix, pi: DVector<f64>) -> DVector<f64> {
    let n = chain.n_states();
    let residual = |v: &DVector<f64>| (chain.probs().transpose() * v - v).amax();
    let mut a = chain.probs().transpose() - DMatrix::identity(n, n);
    a.row_mut(n - 1).fill(1.0);
    let mut b = DVector::zeros(n);
    b[n - 1] = 1.0;
    let lu = a.clone().lu();
    let Some(mut solved) = lu.solve(&b) else {
        return pi;
    };
    // One step of iterative refinement.
    if let Some(correction) = lu.solve(&(&b - &a * &solved)) {
        solved += correction;
    }
    if solved.iter().all(|&x| x > 0.0) && residual(&solved) <= residual(&pi) {
        let total = solved.sum();
        solved / total
    } else {
        pi
    }
}

pub fn detailed_balance_defect(chain: &TransitionMatrix, pi: &DVector<f64>) -> f64 {
    let p = chain.probs();
    let n = chain.n_states();
    let mut worst = 0.0_f64;
    for x in 0..n {
        for y in (x + 1)..n {
            worst = worst.max((pi[x] * p[(x, y)] - pi[y] * p[(y, x)]).abs());
        }
    }
    worst
}

/// `Π^{1/2} P Π^{-1/2}`; symmetric exactly when the chain is reversible.
pub fn symmetrized_kernel(p: &DMatrix<f64>, pi: &DVector<f64>) -> DMatrix<f64> {
    let n = p.nrows();
    DMatrix::from_fn(n, n, |i, j| pi[i].sqrt() * p[(i, j)] / pi[j].sqrt())
}

fn lambda2_reversible(chain: &TransitionMatrix, pi: &DVector<f64>) -> f64 {
    let eig = sym_eigen_desc(&symmetrized_kernel(chain.probs(), pi));
    // The top eigenvalue is the Perron root 1; everything else is |λ| ≤ |λ₂|.
    eig.values.iter().skip(1).map(|v| v.abs()).fold(0.0, f64::max)
}

/// Spectral radius of `P − 𝟙πᵀ` by power iteration with per-step
/// normalisation; the growth rate is averaged over a long window so complex
/// conjugate pairs (which make the iterate rotate) still give the modulus.
fn lambda2_power_iteration(chain: &TransitionMatrix, pi: &DVector<f64>) -> f64 {
    let n = chain.n_states();
    let deflated = chain.probs() - DMatrix::from_fn(n, n, |_, j| pi[j]);
    let mut rng = rng_from_seed(0x5EED_1A2B);
    let mut x = DVector::from_fn(n, |_, _| rng.random::<f64>() - 0.5);
    x /= x.norm();
    const BURN_IN: usize = 2_000;
    const WINDOW: usize = 20_000;
    let mut log_growth = 0.0;
    for it in 0..(BURN_IN + WINDOW) {
        let y = &deflated * &x;
        let norm = y.norm();
        if norm == 0.0 || !norm.is_finite() {
            return 0.0;
        }
        if it >= BURN_IN {
            log_growth += norm.ln();
        }
        x = y / norm;
    }
    (log_growth / WINDOW as f64).exp().min(1.0)
}

fn check_spectrum(chain: &TransitionMatrix, spectrum: &ChainSpectrum) -> Result<(), MarkovError> {
    if chain.n_states() != spectrum.n_states() {
        return Err(MarkovError::SpectrumMismatch {
            chain: chain.n_states(),
            spectrum: spectrum.n_states(),
        });
    }
    Ok(())
}

/// `max_x ½ Σ_y |M(x,y) − π(y)|` over the rows of `m`.
pub fn sup_tv_to_stationary(m: &DMatrix<f64>, pi: &DVector<f64>) -> f64 {
    m.row_iter()
        .map(|row| 0.5 * row.iter().zip(pi.iter()).map(|(a, b)| (a - b).abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Distance from stationarity after `t` steps.
pub fn d_mix(chain: &TransitionMatrix, spectrum: &ChainSpectrum, t: u64) -> Result<f64, MarkovError> {
    check_spectrum(chain, spectrum)?;
    Ok(sup_tv_to_stationary(&chain.power(t), &spectrum.stationary))
}

/// Smallest `t ≥ 1` with `d_mix(t) ≤ eps`.
///
/// Squares `P` until the threshold is met, then descends through the cached
/// dyadic powers (binary lifting), so the cost is `O(log τ)` products.
pub fn tau_mix(chain: &TransitionMatrix, spectrum: &ChainSpectrum, eps: f64) -> Result<u64, MarkovError> {
    check_spectrum(chain, spectrum)?;
    if !(eps > 0.0 && eps < 1.0) {
        return Err(MarkovError::InvalidParameter(format!("eps must lie in (0, 1), got {eps}")));
    }
    let pi = &spectrum.stationary;
    let mut dyadic = vec![chain.probs().clone()];
    while sup_tv_to_stationary(dyadic.last().expect("non-empty"), pi) > eps {
        if dyadic.len() as u32 > MAX_DOUBLINGS {
            return Err(MarkovError::MixingUnresolved { eps });
        }
        let last = dyadic.last().expect("non-empty");
        dyadic.push(last * last);
    }
    // Largest `lo` with d_mix(lo) > eps lies below 2^(len-1).
    let n = chain.n_states();
    let mut lo = 0u64;
    let mut acc = DMatrix::<f64>::identity(n, n);
    for j in (0..dyadic.len() - 1).rev() {
        let candidate = &acc * &dyadic[j];
        if sup_tv_to_stationary(&candidate, pi) > eps {
            acc = candidate;
            lo += 1 << j;
        }
    }
    Ok(lo + 1)
}

/// Mixing summary: `τ_mix(1/4)` plus on-demand `d_mix(t)`.
#[derive(Debug, Clone)]
pub struct MixingProfile<'a> {
    chain: &'a TransitionMatrix,
    spectrum: &'a ChainSpectrum,
    pub tau_mix_quarter: u64,
}

impl<'a> MixingProfile<'a> {
    pub fn new(chain: &'a TransitionMatrix, spectrum: &'a ChainSpectrum) -> Result<Self, MarkovError> {
        let tau_mix_quarter = tau_mix(chain, spectrum, 0.25)?;
        Ok(Self { chain, spectrum, tau_mix_quarter })
    }

    pub fn d_mix(&self, t: u64) -> f64 {
        sup_tv_to_stationary(&self.chain.power(t), &self.spectrum.stationary)
    }

    pub fn tau_mix(&self, eps: f64) -> Result<u64, MarkovError> {
        tau_mix(self.chain, self.spectrum, eps)
    }
}

/// Stationary random walk `s₁, …, s_length`: `s₁ ~ π`, then rows of `P`.
pub fn sample_path(
    chain: &TransitionMatrix,
    spectrum: &ChainSpectrum,
    length: usize,
    seed: u64,
) -> Result<Vec<usize>, MarkovError> {
    check_spectrum(chain, spectrum)?;
    if length == 0 {
        return Err(MarkovError::InvalidParameter("path length must be positive".into()));
    }
    let mut rng = rng_from_seed(seed);
    let pi_cdf: Vec<f64> = spectrum
        .stationary
        .iter()
        .scan(0.0, |acc, &p| {
            *acc += p;
            Some(*acc)
        })
        .collect();
    let mut path = Vec::with_capacity(length);
    let mut state = sample_categorical(&pi_cdf, &mut rng);
    path.push(state);
    for _ in 1..length {
        state = chain.step(state, &mut rng);
        path.push(state);
    }
    Ok(path)
}

/// Backward kernel `R(t, s) = ℙ(Z_i = s | Z_{i+k} = t)` of the stationary
/// chain, from Bayes' rule `π(s)·Pᵏ(s,t) / π(t)`.
pub fn reversed_conditional(
    chain: &TransitionMatrix,
    spectrum: &ChainSpectrum,
    k: u64,
) -> Result<DMatrix<f64>, MarkovError> {
    check_spectrum(chain, spectrum)?;
    if !spectrum.reversible {
        let defect = detailed_balance_defect(chain, &spectrum.stationary);
        return Err(MarkovError::NotReversible { defect });
    }
    let pk = chain.power(k);
    let pi = &spectrum.stationary;
    let n = chain.n_states();
    Ok(DMatrix::from_fn(n, n, |t, s| pi[s] * pk[(s, t)] / pi[t]))
}
