//! Flat `key = value` experiment configuration.
//!
//! ```text
//! # desk-scale Bernoulli run
//! n_states = 10
//! dim = 50
//! rho = 0.2            # or a list: 0.8, 0.4, 0.2, 0.1
//! sigma_beta = 1.0     # or a list
//! noise = bernoulli    # bernoulli | uniform
//! bernoulli_p = 0.02   # optional; drawn from U(0, 0.05) when absent
//! n_samples = 100000
//! n_trials = 20
//! schedule = practical # practical | theorem
//! alpha = 5            # optional override
//! beta = 12.5          # optional override
//! delta = 0.1          # theorem schedule only
//! downsample_k = 10    # integer or `corollary`
//! master_seed = 42
//! checkpoints = geometric   # or an explicit list: 100, 1000, 10000
//! checkpoint_min = 100
//! checkpoint_ratio = 1.25
//! algorithms = oja, oja_downsampled, offline
//! n_probe = 20000      # draws used to estimate 𝒱, ℳ for the theorem schedule
//! ```
//!
//! Unknown and repeated keys are rejected.

use std::collections::HashSet;
use std::str::FromStr;

use super::HarnessError;
use crate::statedist::NoiseSpec;
use crate::streaming::Algorithm;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseKind {
    Bernoulli,
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScheduleKind {
    Practical,
    Theorem,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Downsample {
    Fixed(usize),
    /// `k = τ_mix(η_n²)` with `η_n` the full-stream step at `n_samples`.
    Corollary,
}

#[derive(Debug, Clone, PartialEq)]
pub enum CheckpointSpec {
    /// `min, min·r, min·r², …` rounded, plus `n_samples`.
    Geometric { min: usize, ratio: f64 },
    List(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub n_states: usize,
    pub dim: usize,
    pub rho: Vec<f64>,
    pub sigma_beta: Vec<f64>,
    pub noise: NoiseKind,
    pub bernoulli_p: Option<f64>,
    pub n_samples: usize,
    pub n_trials: usize,
    pub schedule: ScheduleKind,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub delta: f64,
    pub downsample: Downsample,
    pub master_seed: u64,
    pub checkpoints: CheckpointSpec,
    pub algorithms: Vec<Algorithm>,
    pub n_probe: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            n_states: 10,
            dim: 50,
            rho: vec![0.2],
            sigma_beta: vec![1.0],
            noise: NoiseKind::Bernoulli,
            bernoulli_p: None,
            n_samples: 100_000,
            n_trials: 20,
            schedule: ScheduleKind::Practical,
            alpha: None,
            beta: None,
            delta: 0.1,
            downsample: Downsample::Fixed(10),
            master_seed: 0,
            checkpoints: CheckpointSpec::Geometric { min: 100, ratio: 1.25 },
            algorithms: Algorithm::ALL.to_vec(),
            n_probe: 20_000,
        }
    }
}

/// Field a sweep varies over.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepField {
    Rho,
    SigmaBeta,
}

impl SweepField {
    pub fn as_str(&self) -> &'static str {
        match self {
            SweepField::Rho => "rho",
            SweepField::SigmaBeta => "sigma_beta",
        }
    }
}

const KEYS: [&str; 19] = [
    "n_states",
    "dim",
    "rho",
    "sigma_beta",
    "noise",
    "bernoulli_p",
    "n_samples",
    "n_trials",
    "schedule",
    "alpha",
    "beta",
    "delta",
    "downsample_k",
    "master_seed",
    "checkpoints",
    "checkpoint_min",
    "checkpoint_ratio",
    "algorithms",
    "n_probe",
];

fn parse_scalar<T: FromStr>(key: &str, value: &str) -> Result<T, HarnessError> {
    value.parse().map_err(|_| HarnessError::Config(format!("{key}: cannot parse `{value}`")))
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>, HarnessError> {
    let items: Vec<T> = value.split(',').map(|v| parse_scalar(key, v.trim())).collect::<Result<_, _>>()?;
    if items.is_empty() {
        return Err(HarnessError::Config(format!("{key}: empty list")));
    }
    Ok(items)
}

impl ExperimentConfig {
    /// Parses a config file body on top of the defaults, then validates.
    pub fn parse(text: &str) -> Result<Self, HarnessError> {
        let mut cfg = Self::default();
        let mut seen = HashSet::new();
        let mut checkpoint_mode = None;
        let mut checkpoint_min = None;
        let mut checkpoint_ratio = None;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| HarnessError::Config(format!("line {}: expected key = value", lineno + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            if !KEYS.contains(&key) {
                return Err(HarnessError::Config(format!("line {}: unknown key `{key}`", lineno + 1)));
            }
            if !seen.insert(key.to_string()) {
                return Err(HarnessError::Config(format!("line {}: duplicate key `{key}`", lineno + 1)));
            }
            match key {
                "n_states" => cfg.n_states = parse_scalar(key, value)?,
                "dim" => cfg.dim = parse_scalar(key, value)?,
                "rho" => cfg.rho = parse_list(key, value)?,
                "sigma_beta" => cfg.sigma_beta = parse_list(key, value)?,
                "noise" => {
                    cfg.noise = match value {
                        "bernoulli" => NoiseKind::Bernoulli,
                        "uniform" => NoiseKind::Uniform,
                        _ => return Err(HarnessError::Config(format!("noise: expected bernoulli|uniform, got `{value}`"))),
                    }
                }
                "bernoulli_p" => cfg.bernoulli_p = Some(parse_scalar(key, value)?),
                "n_samples" => cfg.n_samples = parse_count(key, value)?,
                "n_trials" => cfg.n_trials = parse_scalar(key, value)?,
                "schedule" => {
                    cfg.schedule = match value {
                        "practical" => ScheduleKind::Practical,
                        "theorem" => ScheduleKind::Theorem,
                        _ => {
                            return Err(HarnessError::Config(format!("schedule: expected practical|theorem, got `{value}`")))
                        }
                    }
                }
                "alpha" => cfg.alpha = Some(parse_scalar(key, value)?),
                "beta" => cfg.beta = Some(parse_scalar(key, value)?),
                "delta" => cfg.delta = parse_scalar(key, value)?,
                "downsample_k" => {
                    cfg.downsample = if value == "corollary" {
                        Downsample::Corollary
                    } else {
                        Downsample::Fixed(parse_scalar(key, value)?)
                    }
                }
                "master_seed" => cfg.master_seed = parse_scalar(key, value)?,
                "checkpoints" => checkpoint_mode = Some(value.to_string()),
                "checkpoint_min" => checkpoint_min = Some(parse_count(key, value)?),
                "checkpoint_ratio" => checkpoint_ratio = Some(parse_scalar(key, value)?),
                "algorithms" => {
                    cfg.algorithms = value
                        .split(',')
                        .map(|a| {
                            Algorithm::parse(a.trim())
                                .ok_or_else(|| HarnessError::Config(format!("algorithms: unknown algorithm `{}`", a.trim())))
                        })
                        .collect::<Result<_, _>>()?
                }
                "n_probe" => cfg.n_probe = parse_scalar(key, value)?,
                _ => unreachable!("key list and match arms out of sync"),
            }
        }
        match checkpoint_mode.as_deref() {
            None | Some("geometric") => {
                cfg.checkpoints = CheckpointSpec::Geometric {
                    min: checkpoint_min.unwrap_or(100),
                    ratio: checkpoint_ratio.unwrap_or(1.25),
                };
            }
            Some(list) => {
                if checkpoint_min.is_some() || checkpoint_ratio.is_some() {
                    return Err(HarnessError::Config(
                        "checkpoint_min / checkpoint_ratio only apply to geometric checkpoints".into(),
                    ));
                }
                cfg.checkpoints =
                    CheckpointSpec::List(list.split(',').map(|c| parse_count("checkpoints", c.trim())).collect::<Result<_, _>>()?);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn noise_spec(&self) -> NoiseSpec {
        match self.noise {
            NoiseKind::Bernoulli => NoiseSpec::Bernoulli { p: self.bernoulli_p },
            NoiseKind::Uniform => NoiseSpec::Uniform,
        }
    }

    /// The list-valued field, if any. Two list-valued fields are ambiguous.
    pub fn sweep_field(&self) -> Result<Option<SweepField>, HarnessError> {
        match (self.rho.len() > 1, self.sigma_beta.len() > 1) {
            (true, true) => Err(HarnessError::AmbiguousSweep),
            (true, false) => Ok(Some(SweepField::Rho)),
            (false, true) => Ok(Some(SweepField::SigmaBeta)),
            (false, false) => Ok(None),
        }
    }

    /// Resolved checkpoint list, strictly increasing, ending at `n_samples`
    /// for geometric spacing.
    pub fn checkpoint_list(&self) -> Result<Vec<usize>, HarnessError> {
        let list = match &self.checkpoints {
            CheckpointSpec::List(list) => list.clone(),
            CheckpointSpec::Geometric { min, ratio } => {
                if *min == 0 || *min > self.n_samples {
                    return Err(HarnessError::Config(format!(
                        "checkpoint_min must lie in [1, n_samples = {}], got {min}",
                        self.n_samples
                    )));
                }
                if !(*ratio > 1.0 && ratio.is_finite()) {
                    return Err(HarnessError::Config(format!("checkpoint_ratio must exceed 1, got {ratio}")));
                }
                let mut out = Vec::new();
                let mut c = *min as f64;
                while c < self.n_samples as f64 {
                    let n = c.round() as usize;
                    if out.last() != Some(&n) {
                        out.push(n);
                    }
                    c *= ratio;
                }
                if out.last() != Some(&self.n_samples) {
                    out.push(self.n_samples);
                }
                out
            }
        };
        if list.is_empty() {
            return Err(HarnessError::Config("no checkpoints".into()));
        }
        for w in list.windows(2) {
            if w[0] >= w[1] {
                return Err(HarnessError::Config("checkpoints must be strictly increasing".into()));
            }
        }
        if list[0] == 0 {
            return Err(HarnessError::Config("checkpoints are 1-based stream positions".into()));
        }
        let max = *list.last().expect("non-empty");
        if max > self.n_samples {
            return Err(HarnessError::Config(format!("checkpoint {max} exceeds n_samples = {}", self.n_samples)));
        }
        Ok(list)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |msg: String| Err(HarnessError::Config(msg));
        if self.n_trials < 1 {
            return bad("n_trials must be at least 1".into());
        }
        if self.n_samples < 1 {
            return bad("n_samples must be at least 1".into());
        }
        if self.algorithms.is_empty() {
            return bad("at least one algorithm is required".into());
        }
        let mut uniq = self.algorithms.clone();
        uniq.sort_by_key(|a| a.as_str());
        uniq.dedup();
        if uniq.len() != self.algorithms.len() {
            return bad("algorithms listed twice".into());
        }
        if let Downsample::Fixed(0) = self.downsample {
            return bad("downsample_k must be at least 1".into());
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return bad(format!("delta must lie in (0, 1), got {}", self.delta));
        }
        if self.schedule == ScheduleKind::Theorem && self.n_probe < 1000 {
            return bad(format!("n_probe must be at least 1000, got {}", self.n_probe));
        }
        self.sweep_field()?;
        self.checkpoint_list()?;
        Ok(())
    }

    /// Copy with the swept field fixed to its `i`-th value.
    pub fn at_sweep_point(&self, field: SweepField, i: usize) -> Self {
        let mut c = self.clone();
        match field {
            SweepField::Rho => c.rho = vec![self.rho[i]],
            SweepField::SigmaBeta => c.sigma_beta = vec![self.sigma_beta[i]],
        }
        c
    }

    /// `key = value` rendering that [`parse`](Self::parse) reads back.
    pub fn to_config_text(&self) -> String {
        let join = |v: &[f64]| v.iter().map(f64::to_string).collect::<Vec<_>>().join(", ");
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            s.push_str(k);
            s.push_str(" = ");
            s.push_str(&v);
            s.push('\n');
        };
        kv("n_states", self.n_states.to_string());
        kv("dim", self.dim.to_string());
        kv("rho", join(&self.rho));
        kv("sigma_beta", join(&self.sigma_beta));
        kv("noise", match self.noise {
            NoiseKind::Bernoulli => "bernoulli".into(),
            NoiseKind::Uniform => "uniform".into(),
        });
        if let Some(p) = self.bernoulli_p {
            kv("bernoulli_p", p.to_string());
        }
        kv("n_samples", self.n_samples.to_string());
        kv("n_trials", self.n_trials.to_string());
        kv("schedule", match self.schedule {
            ScheduleKind::Practical => "practical".into(),
            ScheduleKind::Theorem => "theorem".into(),
        });
        if let Some(a) = self.alpha {
            kv("alpha", a.to_string());
        }
        if let Some(b) = self.beta {
            kv("beta", b.to_string());
        }
        kv("delta", self.delta.to_string());
        kv("downsample_k", match self.downsample {
            Downsample::Fixed(k) => k.to_string(),
            Downsample::Corollary => "corollary".into(),
        });
        kv("master_seed", self.master_seed.to_string());
        match &self.checkpoints {
            CheckpointSpec::Geometric { min, ratio } => {
                kv("checkpoints", "geometric".into());
                kv("checkpoint_min", min.to_string());
                kv("checkpoint_ratio", ratio.to_string());
            }
            CheckpointSpec::List(list) => {
                kv("checkpoints", list.iter().map(usize::to_string).collect::<Vec<_>>().join(", "))
            }
        }
        kv("algorithms", self.algorithms.iter().map(|a| a.as_str()).collect::<Vec<_>>().join(", "));
        kv("n_probe", self.n_probe.to_string());
        s
    }
}

/// Counts accept plain integers and scientific notation such as `1e5`.
fn parse_count(key: &str, value: &str) -> Result<usize, HarnessError> {
    if let Ok(n) = value.parse::<usize>() {
        return Ok(n);
    }
    let f: f64 = parse_scalar(key, value)?;
    if f >= 0.0 && f.fract() == 0.0 && f <= 1e15 {
        Ok(f as usize)
    } else {
        Err(HarnessError::Config(format!("{key}: `{value}` is not a non-negative integer")))
    }
}
