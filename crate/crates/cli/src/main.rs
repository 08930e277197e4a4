//! `qds`: verify, analyze and evolve quantum dynamical semigroups given as
//! channel JSON files.
//!
//! Exit codes: 0 success, 1 verification failure, 2 input error,
//! 3 structural inconsistency.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use qds_core::channels::{Dynamics, System};
use qds_core::error::Error;
use qds_core::io;
use qds_core::report::{self, AnalysisOptions};
use qds_core::structure::{self, DEFAULT_SEED};
use qds_core::tolerance::Tolerances;
use qds_core::zoo::{self, ZooSpec};
use serde_json::json;

#[derive(Parser)]
#[command(name = "qds", version, about = "State-space structure of quantum dynamical semigroups")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Text,
}

#[derive(clap::Args)]
struct TolFlags {
    /// Relative rank threshold.
    #[arg(long)]
    tol_rank: Option<f64>,
    /// Eigenpair and enclosure residual threshold.
    #[arg(long)]
    tol_eig: Option<f64>,
}

impl TolFlags {
    fn resolve(&self) -> Tolerances {
        let mut tol = Tolerances::from_env();
        if let Some(x) = self.tol_rank {
            tol.rank = x;
        }
        if let Some(x) = self.tol_eig {
            tol.eig = x;
        }
        tol
    }
}

#[derive(Subcommand)]
enum Command {
    /// Check complete positivity and trace preservation.
    Verify { path: PathBuf },
    /// Decompose the Hilbert space and classify the peripheral spectrum.
    Analyze {
        #[arg(required = true)]
        paths: Vec<PathBuf>,
        #[command(flatten)]
        tol: TolFlags,
        #[arg(long, value_enum, default_value = "json")]
        format: Format,
        /// Cross-check central blocks against the sampling oracle (N ≤ 6).
        #[arg(long)]
        oracle: bool,
        #[arg(long, default_value_t = report::DEFAULT_ORACLE_SAMPLES)]
        oracle_samples: usize,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
    },
    /// Evolve a state and report decay and block coherences per step.
    Evolve {
        path: PathBuf,
        #[arg(long)]
        state: PathBuf,
        #[arg(long)]
        steps: usize,
        /// Time step, required for generators.
        #[arg(long)]
        dt: Option<f64>,
        #[command(flatten)]
        tol: TolFlags,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
    },
    /// Print a channel from the built-in collection, e.g. `zoo cascade --n 5 --m 3`.
    Zoo {
        name: String,
        /// Parameters as `--key value` pairs; `--seed` seeds random constructors.
        #[arg(trailing_var_arg = true, allow_hyphen_values = true)]
        params: Vec<String>,
    },
    /// Find the central blocks by sampling long-time limits.
    Oracle {
        path: PathBuf,
        #[arg(long, default_value_t = report::DEFAULT_ORACLE_SAMPLES)]
        samples: usize,
        #[command(flatten)]
        tol: TolFlags,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
    },
}

/// Output of one command: what to print and the exit code.
struct Outcome {
    stdout: String,
    code: u8,
}

impl Outcome {
    fn ok(stdout: String) -> Self {
        Outcome { stdout, code: 0 }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::NotCompletelyPositive(_) | Error::Verification(_) => 1,
        Error::Dimension(_) | Error::InvalidInput(_) | Error::Parse(_) => 2,
        Error::Structure(_) | Error::Numerical(_) => 3,
    }
}

fn error_kind(e: &Error) -> &'static str {
    match e {
        Error::Dimension(_) => "dimension",
        Error::InvalidInput(_) => "invalid_input",
        Error::Parse(_) => "parse",
        Error::NotCompletelyPositive(_) | Error::Verification(_) => "verification",
        Error::Structure(_) => "structural_inconsistency",
        Error::Numerical(_) => "numerical",
    }
}

/// Input errors go to stderr only; verification and structural failures
/// also emit a JSON payload on stdout for scripts.
fn failure(e: Error, source: &Path) -> Outcome {
    let code = exit_code(&e);
    let stdout = if code == 2 {
        String::new()
    } else {
        let payload = json!({
            "error": error_kind(&e),
            "message": e.to_string(),
            "input": source.display().to_string(),
        });
        serde_json::to_string_pretty(&payload).expect("payload serializes") + "\n"
    };
    eprintln!("qds: {}: {e}", source.display());
    Outcome { stdout, code }
}

fn read(path: &Path) -> Result<String, Error> {
    std::fs::read_to_string(path)
        .map_err(|e| Error::InvalidInput(format!("cannot read {}: {e}", path.display())))
}

fn load(path: &Path, tol: &Tolerances) -> Result<(System, String), Error> {
    let text = read(path)?;
    let system = io::parse_channel(&text, tol)?;
    Ok((system, report::digest(text.as_bytes())))
}

fn verify(path: &Path) -> Outcome {
    let tol = Tolerances::from_env();
    let (system, digest) = match load(path, &tol) {
        Ok(x) => x,
        Err(e) => return failure(e, path),
    };
    let rep = system.verify(tol.psd.max(tol.trace));
    let payload = json!({
        "input_digest": digest,
        "dim": system.dim(),
        "time_kind": system.time_kind(),
        "verification": rep,
    });
    Outcome {
        stdout: serde_json::to_string_pretty(&payload).expect("report serializes") + "\n",
        code: if rep.passed() { 0 } else { 1 },
    }
}

fn analyze_one(path: &Path, opts: &AnalysisOptions, format: Format) -> Outcome {
    let (system, digest) = match load(path, &opts.tol) {
        Ok(x) => x,
        Err(e) => return failure(e, path),
    };
    match report::analyze(&system, digest, opts) {
        Ok(r) => Outcome::ok(match format {
            Format::Json => r.to_json() + "\n",
            Format::Text => report::render_text(&r),
        }),
        Err(e) => failure(e, path),
    }
}

/// Files are analyzed concurrently; reports are printed whole, in input
/// order, and the exit code is the most severe one.
fn analyze(paths: &[PathBuf], opts: &AnalysisOptions, format: Format) -> Outcome {
    let outcomes: Vec<Outcome> = std::thread::scope(|s| {
        let handles: Vec<_> = paths
            .iter()
            .map(|p| s.spawn(move || analyze_one(p, opts, format)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("analysis thread panicked"))
            .collect()
    });
    Outcome {
        code: outcomes.iter().map(|o| o.code).max().unwrap_or(0),
        stdout: outcomes.into_iter().map(|o| o.stdout).collect(),
    }
}

fn evolve(path: &Path, state: &Path, steps: usize, dt: Option<f64>, tol: &Tolerances, seed: u64) -> Outcome {
    let run = || -> Result<String, Error> {
        let (system, _) = load(path, tol)?;
        let rho = io::parse_state(&read(state)?, tol)?;
        let traj = report::evolve(&system, &rho, steps, dt, tol, seed)?;
        Ok(serde_json::to_string_pretty(&traj).expect("trajectory serializes") + "\n")
    };
    match run() {
        Ok(s) => Outcome::ok(s),
        Err(e) => failure(e, path),
    }
}

fn parse_zoo_params(name: &str, raw: &[String]) -> Result<ZooSpec, Error> {
    let mut spec = ZooSpec::new(name);
    let mut it = raw.iter();
    while let Some(flag) = it.next() {
        let key = flag
            .strip_prefix("--")
            .ok_or_else(|| Error::InvalidInput(format!("expected --key, got '{flag}'")))?;
        let value = it
            .next()
            .ok_or_else(|| Error::InvalidInput(format!("--{key} needs a value")))?;
        if key == "seed" {
            let seed = value
                .parse::<u64>()
                .map_err(|_| Error::InvalidInput(format!("--seed: '{value}' is not an integer")))?;
            spec.seed = Some(seed);
            continue;
        }
        let v = value
            .parse::<f64>()
            .map_err(|_| Error::InvalidInput(format!("--{key}: '{value}' is not a number")))?;
        spec = spec.with(key, v);
    }
    Ok(spec)
}

fn zoo_cmd(name: &str, params: &[String]) -> Outcome {
    let run = || -> Result<String, Error> {
        let spec = parse_zoo_params(name, params)?;
        let system = zoo::build(&spec)?;
        let j = io::channel_to_json(&system);
        Ok(serde_json::to_string_pretty(&j).expect("channel serializes") + "\n")
    };
    match run() {
        Ok(s) => Outcome::ok(s),
        Err(e) => failure(e, Path::new(name)),
    }
}

fn oracle_cmd(path: &Path, samples: usize, tol: &Tolerances, seed: u64) -> Outcome {
    let run = || -> Result<(String, bool), Error> {
        let (system, _) = load(path, tol)?;
        let sd = structure::decompose_structure(&system, tol, seed)?;
        let diag = report::oracle_diagnostics(&system, &sd, samples, seed)?;
        let s = serde_json::to_string_pretty(&diag).expect("diagnostics serialize") + "\n";
        Ok((s, diag.agrees))
    };
    match run() {
        Ok((stdout, agrees)) => {
            if !agrees {
                eprintln!("qds: {}: oracle disagrees with the decomposition", path.display());
            }
            Outcome {
                stdout,
                code: if agrees { 0 } else { 3 },
            }
        }
        Err(e) => failure(e, path),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            let code = if e.use_stderr() { 2 } else { 0 };
            return ExitCode::from(code);
        }
    };
    let outcome = match cli.command {
        Command::Verify { path } => verify(&path),
        Command::Analyze {
            paths,
            tol,
            format,
            oracle,
            oracle_samples,
            seed,
        } => {
            let opts = AnalysisOptions {
                tol: tol.resolve(),
                seed,
                oracle,
                oracle_samples,
            };
            analyze(&paths, &opts, format)
        }
        Command::Evolve {
            path,
            state,
            steps,
            dt,
            tol,
            seed,
        } => evolve(&path, &state, steps, dt, &tol.resolve(), seed),
        Command::Zoo { name, params } => zoo_cmd(&name, &params),
        Command::Oracle {
            path,
            samples,
            tol,
            seed,
        } => oracle_cmd(&path, samples, &tol.resolve(), seed),
    };
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(outcome.stdout.as_bytes());
    let _ = out.flush();
    ExitCode::from(outcome.code)
}
