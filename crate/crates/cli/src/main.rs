// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use markov_pca::harness::{self, ExperimentConfig, HarnessError, ResultTable, EXIT_NUMERICAL, EXIT_USAGE, EXIT_VIOLATION};
use markov_pca::linalg::sym_eigen_desc;
use markov_pca::markov::{analyze_spectrum, d_mix, make_rho_chain, tau_mix};
use markov_pca::oracle::{run_suite, Suite};
use markov_pca::statedist::{mixture_covariance, decaying_state_covariance, BaseNoise, StateDistributionSet};

#[derive(Parser)]
#[command(name = "markov-pca", version, about = "Streaming PCA on Markovian data: experiments and bound checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Stationary law, |λ₂|, τ_mix(1/4) and d_mix(1..20) of the ρ-chain.
    Spectrum {
        #[arg(long)]
        rho: f64,
        #[arg(long)]
        states: usize,
        /// Also print the eigenvalues of the stationary covariance.
        #[arg(long)]
        covariance: bool,
        #[arg(long, default_value_t = 50)]
        dim: usize,
        #[arg(long, default_value_t = 1.0)]
        sigma_beta: f64,
    },
    /// Exact bound checks on a corpus of small random instances.
    Verify {
        /// qnorm, covdecay, prodapprox, revmix or all.
        #[arg(long)]
        suite: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Runs the experiment described by a key=value config file.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Renders mean error curves from a results CSV.
    Plot {
        #[arg(long)]
        csv: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn spectrum(rho: f64, states: usize, covariance: bool, dim: usize, sigma_beta: f64) -> Result<String, HarnessError> {
    let chain = make_rho_chain(states, rho)?;
    let spec = analyze_spectrum(&chain)?;
    let join = |v: &mut dyn Iterator<Item = f64>| v.map(|x| x.to_string()).collect::<Vec<_>>().join("\t");
    let mut out = String::new();
    let mut line = |s: String| writeln!(out, "{s}").expect("writing to a String");
    line(format!("pi\t{}", join(&mut spec.stationary.iter().copied())));
    line(format!("lambda2_abs\t{}", spec.lambda2_abs));
    line(format!("tau_mix_quarter\t{}", tau_mix(&chain, &spec, 0.25)?));
    for t in 1..=20u64 {
        line(format!("d_mix\t{t}\t{}", d_mix(&chain, &spec, t)?));
    }
    if covariance {
        if dim < 1 || !(sigma_beta > 0.0) {
            return Err(HarnessError::Config("--dim must be positive and --sigma-beta > 0".into()));
        }
        let covs = (0..states).map(|s| decaying_state_covariance(s, states, dim, sigma_beta)).collect();
        let dist = StateDistributionSet::from_covariances(covs, BaseNoise::UniformSym)?;
        let sigma = mixture_covariance(&dist, &spec.stationary)?;
        line(format!("sigma_eigenvalues\t{}", join(&mut sym_eigen_desc(&sigma).values.iter().copied())));
    }
    Ok(out)
}

/// Violation lines and whether every check passed.
fn verify(suite: &str, seed: u64) -> Result<(String, bool), HarnessError> {
    let suites: Vec<Suite> = if suite == "all" {
        Suite::ALL.to_vec()
    } else {
        vec![Suite::parse(suite).ok_or_else(|| {
            HarnessError::Config(format!("unknown suite `{suite}`; expected qnorm|covdecay|prodapprox|revmix|all"))
        })?]
    };
    let mut out = String::new();
    let mut ok = true;
    for s in suites {
        let report = run_suite(s, seed)?;
        for v in &report.violations {
            writeln!(out, "{v}").expect("writing to a String");
        }
        eprintln!("{s}: {} checks, {} violations, worst {:e}", report.checks, report.violations.len(), report.worst);
        ok &= report.passed();
    }
    Ok((out, ok))
}

/// Writes to stdout; a closed pipe (e.g. `| head`) is not an error.
fn print(text: &str) {
    let _ = std::io::stdout().lock().write_all(text.as_bytes());
}

fn simulate(config: PathBuf, out: PathBuf) -> Result<(), HarnessError> {
    let text = std::fs::read_to_string(&config).map_err(|source| HarnessError::Io { path: config.clone(), source })?;
    let cfg = ExperimentConfig::parse(&text)?;
    for dir in harness::simulate(&cfg, &out)? {
        eprintln!("wrote {}", dir.display());
    }
    Ok(())
}

fn plot(csv: PathBuf, out: PathBuf) -> Result<(), HarnessError> {
    let text = std::fs::read_to_string(&csv).map_err(|source| HarnessError::Io { path: csv.clone(), source })?;
    let table = ResultTable::from_csv(&text)?;
    harness::emit(&table, harness::EmitFormat::SvgLines, &out)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap's own exit code for usage errors is 2, which is reserved
            // here for oracle violations.
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE as u8 } else { 0 });
        }
    };
    let result = match cli.command {
        Command::Spectrum { rho, states, covariance, dim, sigma_beta } => {
            spectrum(rho, states, covariance, dim, sigma_beta).map(|text| print(&text))
        }
        Command::Verify { suite, seed } => match verify(&suite, seed) {
            Ok((text, ok)) => {
                print(&text);
                if !ok {
                    return ExitCode::from(EXIT_VIOLATION as u8);
                }
                Ok(())
            }
            Err(e) => Err(e),
        },
        Command::Simulate { config, out } => simulate(config, out),
        Command::Plot { csv, out } => plot(csv, out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let code = e.exit_code();
            debug_assert!(code == EXIT_USAGE || code == EXIT_NUMERICAL);
            ExitCode::from(code as u8)
        }
    }
}
