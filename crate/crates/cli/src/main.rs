//! `recession-lab <command> --config <path> [--seed N] [--out DIR]`
//!
//! Exit status: 0 success, 1 failed verification, 2 bad config or arguments, 3 numerical
//! non-convergence (artifacts so far are kept), 4 I/O.

// `!(x > 0.0)` is the idiom here for rejecting NaN along with out-of-range values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod artifacts;
mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use recession_lab::LabError;

use artifacts::Artifacts;
use commands::{Failure, Job, Outcome, COMMANDS};
use config::{ConfigError, Resolver};

const THREADS_ENV: &str = "RECESSION_LAB_THREADS";

#[derive(Parser, Debug)]
#[command(name = "recession-lab", version, about = "Reproducible experiments on fully nonlinear elliptic operators")]
struct Cli {
    /// One of audit, recession, omega, density, solve, mms-convergence, approx, diagnose, bmo.
    #[arg(value_parser = clap::builder::PossibleValuesParser::new(COMMANDS))]
    command: String,
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config's top-level `seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the config's top-level `output_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[repr(u8)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Status {
    Ok = 0,
    Verification = 1,
    Config = 2,
    NonConvergence = 3,
    Io = 4,
}

fn lab_status(e: &LabError) -> Status {
    match e {
        LabError::SolveDiverged { .. } | LabError::SolveNotConverged { .. } | LabError::NoConvergence(_) => {
            Status::NonConvergence
        }
        LabError::Precondition(_) => Status::Verification,
        _ => Status::Config,
    }
}

fn failure_status(f: &Failure) -> Status {
    match f {
        Failure::Config(_) => Status::Config,
        Failure::Io(_) => Status::Io,
        Failure::Lab(e) => lab_status(e),
    }
}

fn configure_threads() -> Result<(), ConfigError> {
    let Ok(v) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| ConfigError::new(format!("{THREADS_ENV} must be a positive integer, got `{v}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| ConfigError::new(format!("cannot size the thread pool: {e}")))
}

fn run(cli: &Cli) -> Status {
    if let Err(e) = configure_threads() {
        eprintln!("error: {e}");
        return Status::Config;
    }
    let text = match std::fs::read_to_string(&cli.config) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", cli.config.display());
            return Status::Io;
        }
    };
    let raw = match config::parse(&text) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return Status::Config;
        }
    };
    let r = Resolver::new(&raw);
    let prepared = (|| -> Result<(Job, u64, PathBuf), ConfigError> {
        let command = r.choice("", "command", Some(&cli.command), COMMANDS)?;
        if command != cli.command {
            return Err(ConfigError::new(format!("config is for `{command}`, not `{}`", cli.command)));
        }
        let seed = match cli.seed {
            Some(s) => {
                r.set("", "seed", s.to_string());
                s
            }
            None => r.u64("", "seed", 0)?,
        };
        let out = match &cli.out {
            Some(p) => {
                r.set("", "output_dir", p.display().to_string());
                p.clone()
            }
            None => PathBuf::from(r.string("", "output_dir", Some("out"))?),
        };
        let job = Job::resolve(&command, &r)?;
        r.finish(&command)?;
        Ok((job, seed, out))
    })();
    let (job, seed, out_dir) = match prepared {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return Status::Config;
        }
    };

    let mut artifacts = match Artifacts::create(&out_dir) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: cannot create {}: {e}", out_dir.display());
            return Status::Io;
        }
    };
    let result = job.run(seed, &mut artifacts);
    if let Err(e) = artifacts.finish(&r.render()) {
        eprintln!("error: cannot write the manifest: {e}");
        return Status::Io;
    }
    match result {
        Ok(Outcome::Success) => Status::Ok,
        Ok(Outcome::VerificationFailed(msg)) => {
            eprintln!("verification failed: {msg}");
            Status::Verification
        }
        Ok(Outcome::NotConverged(msg)) => {
            eprintln!("not converged: {msg}");
            Status::NonConvergence
        }
        Err(f) => {
            eprintln!("error: {f}");
            failure_status(&f)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    ExitCode::from(run(&cli) as u8)
}
