//! Monte-Carlo experiments comparing full-stream Oja, downsampled Oja and
//! the offline estimator on a Markov-modulated stream.
//!
//! Each trial draws one stationary state path and one sample stream and
//! feeds that same stream to every algorithm, so comparisons are paired.
//! The trial seed is `derive_seed(master_seed, trial)` with
//! `derive_seed(p, i) = splitmix64(p + (i+1)·0x9E3779B97F4A7C15)` (wrapping)
//! and `splitmix64` the standard finaliser (`0xBF58476D1CE4E5B9`,
//! `0x94D049BB133111EB`). Within a trial, the path, `w₀` and the sample
//! noise use child seeds 0, 1 and 2. Experiment-wide randomness (the
//! Bernoulli `p`, constant probes) hangs off `master_seed ^ EXPERIMENT_SALT`.

pub mod config;
pub mod svg;
pub mod table;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use thiserror::Error;

pub use config::{CheckpointSpec, Downsample, ExperimentConfig, NoiseKind, ScheduleKind, SweepField};
pub use table::{ResultRow, ResultTable};

use crate::markov::{analyze_spectrum, make_rho_chain, sample_path, tau_mix, ChainSpectrum, MarkovError, TransitionMatrix};
use crate::offline::OfflineConsumer;
use crate::oracle::OracleError;
use crate::seed::{derive_seed, stream};
use crate::statedist::{
    estimate_assumption_bounds, make_decaying_states, total_covariance, AssumptionBounds, BaseNoise, EnsembleCovariance,
    StateDistError, StateDistributionSet,
};
use crate::streaming::{
    initial_estimator, sample_seed, Algorithm, OjaConsumer, SampleStream, ScheduleMode, StepSchedule, StreamConsumer,
    StreamingError,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_VIOLATION: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

pub const EXPERIMENT_SALT: u64 = 0x5EED_0FE4_9E81_u64;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Config(String),
    #[error("more than one list-valued field; sweep one field at a time")]
    AmbiguousSweep,
    #[error("parse error: {0}")]
    Parse(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Markov(#[from] MarkovError),
    #[error(transparent)]
    StateDist(#[from] StateDistError),
    #[error(transparent)]
    Streaming(#[from] StreamingError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
}

impl HarnessError {
    /// 1 for bad input, 3 for numerical or degenerate conditions.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) | HarnessError::AmbiguousSweep | HarnessError::Parse(_) | HarnessError::Io { .. } => {
                EXIT_USAGE
            }
            HarnessError::Markov(MarkovError::InvalidParameter(_))
            | HarnessError::StateDist(StateDistError::InvalidParameter(_))
            | HarnessError::Streaming(
                StreamingError::InvalidParameter(_)
                | StreamingError::CheckpointOutOfRange { .. }
                | StreamingError::EmptyTrace { .. }
                | StreamingError::StepTooLarge { .. },
            )
            | HarnessError::Oracle(OracleError::Precondition(_) | OracleError::TooLarge(_)) => EXIT_USAGE,
            _ => EXIT_NUMERICAL,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io { path: path.to_path_buf(), source }
}

/// Everything shared by the trials of one experiment.
#[derive(Debug, Clone)]
pub struct ExperimentSetup {
    pub chain: TransitionMatrix,
    pub spectrum: ChainSpectrum,
    pub tau_mix_quarter: u64,
    pub dist: StateDistributionSet,
    pub truth: EnsembleCovariance,
    pub schedule: StepSchedule,
    /// Skip factor and schedule of the downsampled run, when requested.
    pub downsampled: Option<(usize, StepSchedule)>,
    /// Constants used by the theorem schedule.
    pub bounds: Option<AssumptionBounds>,
    pub checkpoints: Vec<usize>,
}

fn scalar(values: &[f64], name: &str) -> Result<f64, HarnessError> {
    match values {
        [v] => Ok(*v),
        _ => Err(HarnessError::Config(format!("{name} is list-valued; use sweep"))),
    }
}

/// Below this `d_mix` is dominated by round-off and cannot be resolved.
const RESOLVABLE_EPS: f64 = 1e-12;

/// `τ_mix(ε)`, or for unresolvably small `ε` on a reversible chain the
/// eigengap upper bound `ln(1/(ε π_min))/(1−|λ₂|)`, which also guarantees
/// `d_mix(k) ≤ ε`.
fn corollary_window(chain: &TransitionMatrix, spectrum: &ChainSpectrum, eps: f64) -> Result<usize, HarnessError> {
    if eps >= RESOLVABLE_EPS || !spectrum.reversible {
        return Ok(tau_mix(chain, spectrum, eps)? as usize);
    }
    let (_, upper) = spectrum.tau_mix_bounds(eps);
    Ok(upper.ceil().max(1.0) as usize)
}

/// Builds the chain, state family, truth and schedules for a config with
/// no list-valued field.
pub fn prepare(config: &ExperimentConfig) -> Result<ExperimentSetup, HarnessError> {
    config.validate()?;
    let rho = scalar(&config.rho, "rho")?;
    let sigma_beta = scalar(&config.sigma_beta, "sigma_beta")?;
    let experiment_seed = derive_seed(config.master_seed ^ EXPERIMENT_SALT, 0);
    let chain = make_rho_chain(config.n_states, rho)?;
    let spectrum = analyze_spectrum(&chain)?;
    let tau_mix_quarter = tau_mix(&chain, &spectrum, 0.25)?;
    let dist = make_decaying_states(
        config.n_states,
        config.dim,
        sigma_beta,
        config.noise_spec(),
        derive_seed(experiment_seed, 0),
    )?;
    let truth = total_covariance(&dist, &spectrum.stationary)?;
    let gap = truth.gap;
    let l2 = spectrum.lambda2_abs;
    let wants_downsampled = config.algorithms.contains(&Algorithm::OjaDownsampled);

    let (schedule, bounds) = match config.schedule {
        ScheduleKind::Practical => {
            let alpha = config.alpha.unwrap_or(5.0);
            let beta = config.beta.unwrap_or(5.0 / (1.0 - l2));
            (StepSchedule::new(alpha, beta, gap, ScheduleMode::Practical)?, None)
        }
        ScheduleKind::Theorem => {
            let bounds =
                estimate_assumption_bounds(&dist, &spectrum.stationary, config.n_probe, derive_seed(experiment_seed, 1))?;
            let alpha = config.alpha.unwrap_or(5.0);
            let schedule = match config.beta {
                Some(beta) => StepSchedule::new(alpha, beta, gap, ScheduleMode::TheoremFaithful)?,
                None => StepSchedule::theorem_faithful(
                    alpha,
                    config.delta,
                    gap,
                    tau_mix_quarter as f64,
                    bounds.v_bound,
                    bounds.m_bound,
                    truth.lambda1,
                    l2,
                )?,
            };
            (schedule, Some(bounds))
        }
    };

    let downsampled = if wants_downsampled {
        let k = match config.downsample {
            Downsample::Fixed(k) => k,
            Downsample::Corollary => {
                let eta_n = schedule.eta(config.n_samples);
                corollary_window(&chain, &spectrum, eta_n * eta_n)?
            }
        };
        if k > config.n_samples {
            return Err(StreamingError::EmptyTrace { k, len: config.n_samples }.into());
        }
        let ds = match (config.schedule, bounds, config.beta) {
            (ScheduleKind::Theorem, Some(b), None) => {
                // The subsampled walk is the chain Pᵏ.
                let chain_k = TransitionMatrix::new(chain.power(k as u64))?;
                let spec_k = analyze_spectrum(&chain_k)?;
                let tau_k = tau_mix(&chain_k, &spec_k, 0.25)?;
                StepSchedule::theorem_faithful(
                    schedule.alpha,
                    config.delta,
                    gap,
                    tau_k as f64,
                    b.v_bound,
                    b.m_bound,
                    truth.lambda1,
                    spec_k.lambda2_abs,
                )?
            }
            _ => schedule.with_beta_divided(k)?,
        };
        Some((k, ds))
    } else {
        None
    };

    Ok(ExperimentSetup {
        chain,
        spectrum,
        tau_mix_quarter,
        dist,
        truth,
        schedule,
        downsampled,
        bounds,
        checkpoints: config.checkpoint_list()?,
    })
}

/// Per-trial record of the shared stream.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub trial_id: usize,
    pub seed: u64,
    /// Digest of the samples every algorithm consumed.
    pub stream_checksum: u64,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub table: ResultTable,
    pub setup: ExperimentSetup,
    pub trials: Vec<TrialRecord>,
}

/// Runs one trial: one path, one stream, every configured algorithm.
pub fn run_trial(
    config: &ExperimentConfig,
    setup: &ExperimentSetup,
    trial_id: usize,
) -> Result<(Vec<ResultRow>, TrialRecord), HarnessError> {
    let seed = derive_seed(config.master_seed, trial_id as u64);
    let path = sample_path(&setup.chain, &setup.spectrum, config.n_samples, derive_seed(seed, stream::PATH))?;
    let w0 = initial_estimator(config.dim, seed);
    let mut consumers: Vec<Box<dyn StreamConsumer>> = Vec::with_capacity(config.algorithms.len());
    for alg in &config.algorithms {
        consumers.push(match alg {
            Algorithm::Oja => Box::new(OjaConsumer::new(w0.clone(), setup.schedule, 1)?),
            Algorithm::OjaDownsampled => {
                let (k, schedule) = setup.downsampled.expect("prepared when requested");
                Box::new(OjaConsumer::new(w0.clone(), schedule, k)?)
            }
            Algorithm::Offline => Box::new(OfflineConsumer::new(config.dim)),
        });
    }
    let mut refs: Vec<&mut dyn StreamConsumer> = consumers.iter_mut().map(|c| &mut **c as &mut dyn StreamConsumer).collect();
    let mut samples = SampleStream::new(&path, &setup.dist, sample_seed(seed));
    let traces = crate::streaming::drive_stream(&mut samples, &mut refs, &setup.checkpoints, &setup.truth, seed)?;
    let checksum = traces[0].stream_checksum;
    debug_assert!(traces.iter().all(|t| t.stream_checksum == checksum));
    let mut rows = Vec::with_capacity(traces.len() * setup.checkpoints.len());
    for trace in traces {
        for (&checkpoint_n, &sin2_error) in trace.checkpoints.iter().zip(&trace.errors) {
            rows.push(ResultRow { trial_id, algorithm: trace.algorithm, checkpoint_n, sin2_error, seed });
        }
    }
    Ok((rows, TrialRecord { trial_id, seed, stream_checksum: checksum }))
}

/// All trials in parallel; the output does not depend on scheduling.
pub fn run_experiment_detailed(config: &ExperimentConfig) -> Result<ExperimentOutput, HarnessError> {
    let setup = prepare(config)?;
    let results: Vec<(Vec<ResultRow>, TrialRecord)> =
        (0..config.n_trials).into_par_iter().map(|t| run_trial(config, &setup, t)).collect::<Result<_, _>>()?;
    let mut rows = Vec::with_capacity(results.iter().map(|r| r.0.len()).sum());
    let mut trials = Vec::with_capacity(results.len());
    for (r, rec) in results {
        rows.extend(r);
        trials.push(rec);
    }
    Ok(ExperimentOutput { table: ResultTable::new(rows), setup, trials })
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<ResultTable, HarnessError> {
    Ok(run_experiment_detailed(config)?.table)
}

/// One run per value of the single list-valued field (or one run if there
/// is none), all under the same master seed.
/// A sweep point (`None` without a sweep) and its run.
pub type SweepPoint = (Option<(SweepField, f64)>, ExperimentOutput);

pub fn sweep_detailed(config: &ExperimentConfig) -> Result<Vec<SweepPoint>, HarnessError> {
    config.validate()?;
    match config.sweep_field()? {
        None => Ok(vec![(None, run_experiment_detailed(config)?)]),
        Some(field) => {
            let values = match field {
                SweepField::Rho => &config.rho,
                SweepField::SigmaBeta => &config.sigma_beta,
            };
            values
                .iter()
                .enumerate()
                .map(|(i, &v)| Ok((Some((field, v)), run_experiment_detailed(&config.at_sweep_point(field, i))?)))
                .collect()
        }
    }
}

pub fn sweep(config: &ExperimentConfig) -> Result<Vec<ResultTable>, HarnessError> {
    Ok(sweep_detailed(config)?.into_iter().map(|(_, o)| o.table).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmitFormat {
    Csv,
    SvgLines,
}

/// Writes `table` as CSV or as an SVG of mean-error curves.
pub fn emit(table: &ResultTable, format: EmitFormat, path: &Path) -> Result<(), HarnessError> {
    if table.is_empty() {
        return Err(HarnessError::Config("refusing to emit an empty table".into()));
    }
    let body = match format {
        EmitFormat::Csv => table.to_csv(),
        EmitFormat::SvgLines => svg::render_svg(table)?,
    };
    std::fs::write(path, body).map_err(io_err(path))
}

/// `key = value` description of the run: config echo plus derived quantities.
pub fn metadata_text(config: &ExperimentConfig, output: &ExperimentOutput) -> String {
    let s = &output.setup;
    let mut m = String::from("# config\n");
    m.push_str(&config.to_config_text());
    m.push_str("# derived\n");
    let mut kv = |k: &str, v: String| {
        writeln!(m, "{k} = {v}").expect("writing to a String");
    };
    match s.dist.base_noise() {
        BaseNoise::BernoulliNormalized { p } => kv("bernoulli_p_resolved", p.to_string()),
        BaseNoise::UniformSym => kv("base_noise", "uniform".into()),
    }
    kv("lambda2_abs_chain", s.spectrum.lambda2_abs.to_string());
    kv("tau_mix_quarter", s.tau_mix_quarter.to_string());
    kv("lambda1", s.truth.lambda1.to_string());
    kv("lambda2", s.truth.lambda2.to_string());
    kv("eigengap", s.truth.gap.to_string());
    kv("schedule_alpha", s.schedule.alpha.to_string());
    kv("schedule_beta", s.schedule.beta.to_string());
    kv("eta0", s.schedule.eta0().to_string());
    kv("eta0_exceeds_one", s.schedule.eta0_exceeds_one().to_string());
    if let Some((k, ds)) = &s.downsampled {
        kv("downsample_k_resolved", k.to_string());
        kv("downsampled_beta", ds.beta.to_string());
    }
    if let Some(b) = &s.bounds {
        kv("v_bound", b.v_bound.to_string());
        kv("m_bound", b.m_bound.to_string());
    }
    kv("checkpoints_resolved", s.checkpoints.iter().map(usize::to_string).collect::<Vec<_>>().join(", "));
    for t in &output.trials {
        kv(&format!("trial_{}", t.trial_id), format!("seed={} stream_checksum={:016x}", t.seed, t.stream_checksum));
    }
    m
}

/// Writes `results.csv`, `curves.svg`, `summary.tsv` and `metadata.txt`.
pub fn write_outputs(dir: &Path, config: &ExperimentConfig, output: &ExperimentOutput) -> Result<(), HarnessError> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    emit(&output.table, EmitFormat::Csv, &dir.join("results.csv"))?;
    emit(&output.table, EmitFormat::SvgLines, &dir.join("curves.svg"))?;
    let summary = dir.join("summary.tsv");
    std::fs::write(&summary, output.table.summary_tsv()).map_err(io_err(&summary))?;
    let meta = dir.join("metadata.txt");
    std::fs::write(&meta, metadata_text(config, output)).map_err(io_err(&meta))?;
    Ok(())
}

/// Runs a config (sweeping if it has a list-valued field) and writes each
/// run's outputs; sweep points go to `<out>/<field>_<value>/`. Returns the
/// directories written.
pub fn simulate(config: &ExperimentConfig, out: &Path) -> Result<Vec<PathBuf>, HarnessError> {
    let mut dirs = Vec::new();
    for (point, output) in sweep_detailed(config)? {
        let (dir, cfg) = match point {
            None => (out.to_path_buf(), config.clone()),
            Some((field, v)) => {
                let i = match field {
                    SweepField::Rho => config.rho.iter().position(|&x| x == v),
                    SweepField::SigmaBeta => config.sigma_beta.iter().position(|&x| x == v),
                }
                .expect("value comes from the list");
                (out.join(format!("{}_{v}", field.as_str())), config.at_sweep_point(field, i))
            }
        };
        write_outputs(&dir, &cfg, &output)?;
        dirs.push(dir);
    }
    Ok(dirs)
}
