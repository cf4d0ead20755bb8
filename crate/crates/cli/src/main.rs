use std::process::ExitCode;

use clap::Parser;
use riskdp_cli::{run, Cli, Command};

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let Command::Solve(args) = cli.command;
    match run(&args) {
        Ok(outcome) => {
            if let riskdp_cli::Outcome::DryRun(text) = &outcome {
                println!("{text}");
            }
            if let riskdp_cli::Outcome::Solved { violations, .. } = &outcome {
                for d in violations {
                    eprintln!("inclusion check failed at delta = {d}");
                }
            }
            ExitCode::from(outcome.exit_code(args.strict))
        }
        Err(e) => {
            eprintln!("riskdp: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
