//! Batch runner behind the `riskdp` binary.
//!
//! A run reads one JSON config, sweeps the risk tolerance, and writes for
//! each tolerance `δ` a directory `delta_<δ>/` holding `value_t{t}.csv`,
//! `safe_sets.csv` and `inclusions.json`, plus a top-level `sim.csv` with one
//! row per tolerance.

pub mod config;
pub mod output;

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use riskdp_core::{backward_solve, check_inclusions, evaluate};
use thiserror::Error;

pub use config::{Overrides, ResolvedRun, RunConfig};
pub use output::{SimRow, ValueRow};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("solver failure: {0}")]
    Solver(#[from] riskdp_core::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("malformed output: {0}")]
    Parse(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 1,
            _ => 2,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "riskdp", version, about = "CVaR safety-constrained dynamic programming")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve, check safe-set inclusions, and simulate for each tolerance.
    Solve(SolveArgs),
}

#[derive(Debug, Clone, Args)]
pub struct SolveArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory; overrides `outputs` in the config.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Comma-separated tolerances, strictly increasing.
    #[arg(long, value_delimiter = ',')]
    pub delta_sweep: Option<Vec<f64>>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub n_traj: Option<usize>,
    /// Keep raw stage values instead of their lower convex envelope.
    #[arg(long)]
    pub no_envelope: bool,
    /// Exit with status 3 when any inclusion check fails.
    #[arg(long)]
    pub strict: bool,
    /// Validate and print the resolved instance without solving.
    #[arg(long)]
    pub dry_run: bool,
}

impl SolveArgs {
    pub fn new(config: impl Into<PathBuf>) -> Self {
        SolveArgs {
            config: config.into(),
            out: None,
            delta_sweep: None,
            seed: None,
            n_traj: None,
            no_envelope: false,
            strict: false,
            dry_run: false,
        }
    }

    fn overrides(&self) -> Overrides {
        Overrides {
            out: self.out.clone(),
            sweep: self.delta_sweep.clone(),
            seed: self.seed,
            n_traj: self.n_traj,
            no_envelope: self.no_envelope,
        }
    }
}

/// What a completed run produced.
#[derive(Debug, Clone)]
pub enum Outcome {
    DryRun(String),
    Solved { out: PathBuf, sim: Vec<SimRow>, violations: Vec<f64> },
}

impl Outcome {
    /// 0 on success, 3 when `strict` and some inclusion check failed.
    pub fn exit_code(&self, strict: bool) -> u8 {
        match self {
            Outcome::Solved { violations, .. } if strict && !violations.is_empty() => 3,
            _ => 0,
        }
    }
}

pub fn delta_dir(out: &Path, delta: f64) -> PathBuf {
    out.join(format!("delta_{delta}"))
}

pub fn run(args: &SolveArgs) -> Result<Outcome, CliError> {
    let run = RunConfig::from_path(&args.config)?.resolve(&args.overrides())?;
    if args.dry_run {
        let text = serde_json::to_string_pretty(&run.summary()).map_err(|e| CliError::Io(e.into()))?;
        return Ok(Outcome::DryRun(text));
    }
    execute(&run)
}

pub fn execute(run: &ResolvedRun) -> Result<Outcome, CliError> {
    fs::create_dir_all(&run.out)?;
    let horizon = run.problem.horizon;
    let mut sim = Vec::with_capacity(run.sweep.len());
    let mut violations = Vec::new();
    for &delta in &run.sweep {
        let problem = run.problem.with_delta(delta)?;
        let result = backward_solve(&problem)?;
        let dir = delta_dir(&run.out, delta);
        fs::create_dir_all(&dir)?;
        for t in 0..=horizon {
            output::write_value_table(&dir.join(format!("value_t{t}.csv")), &output::value_rows(&result, t))?;
        }
        output::write_safe_sets(&dir.join("safe_sets.csv"), &result.safe_sets)?;
        let report = check_inclusions(&result)?;
        output::write_inclusions(&dir.join("inclusions.json"), &report)?;
        if !report.all_hold {
            violations.push(delta);
        }
        let rep = evaluate(&result, run.x0, run.n_traj, run.seed)?;
        sim.push(SimRow::new(delta, &rep));
    }
    output::write_sim(&run.out.join("sim.csv"), horizon, &sim)?;
    Ok(Outcome::Solved { out: run.out.clone(), sim, violations })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strict_turns_violations_into_status_three() {
        let solved = |violations| Outcome::Solved { out: PathBuf::new(), sim: Vec::new(), violations };
        assert_eq!(solved(vec![]).exit_code(true), 0);
        assert_eq!(solved(vec![0.0]).exit_code(false), 0);
        assert_eq!(solved(vec![0.0]).exit_code(true), 3);
        assert_eq!(Outcome::DryRun(String::new()).exit_code(true), 0);
        assert_eq!(CliError::Config(String::new()).exit_code(), 1);
        assert_eq!(CliError::Solver(riskdp_core::Error::NoTrajectories).exit_code(), 2);
    }
}
