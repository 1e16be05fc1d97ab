use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use seqedit::experiment::{cmd_analyze, cmd_bound_check, cmd_run, BoundCheckArgs};
use seqedit::Error;

/// Sequential editing of linear associative memories.
#[derive(Parser)]
#[command(name = "seqedit", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment from a JSON config.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check the perturbation bounds on random acute perturbations.
    BoundCheck {
        #[arg(long)]
        trials: usize,
        #[arg(long)]
        p: usize,
        #[arg(long)]
        q: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Multiplier on every sampled perturbation; 0 disables it.
        #[arg(long, default_value_t = 1.0)]
        scale: f64,
    },
    /// Recompute metrics and value drift from a run directory.
    Analyze {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn exit_code(e: &Error) -> u8 {
    if e.is_numerical() {
        3
    } else {
        2
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match &cli.command {
        Command::Run { config, out } => cmd_run(config, out).map(|s| {
            println!(
                "edits: {}  cond: {:.4} -> {:.4}  efficacy: {:.3}  locality: {:.3}",
                s.final_record.edit_index,
                s.initial.cond,
                s.final_record.cond,
                s.final_record.efficacy,
                s.final_record.locality
            );
        }),
        Command::BoundCheck {
            trials,
            p,
            q,
            seed,
            out,
            scale,
        } => {
            let args = BoundCheckArgs {
                trials: *trials,
                p: *p,
                q: *q,
                seed: *seed,
                scale: *scale,
            };
            cmd_bound_check(&args, out).map(|rows| {
                let checked: Vec<_> = rows.iter().filter(|r| !r.flagged).collect();
                let held = checked
                    .iter()
                    .filter(|r| r.bound_holds == Some(true))
                    .count();
                println!(
                    "trials: {}  gamma > 0: {}  bound holds: {held}",
                    rows.len(),
                    checked.len()
                );
            })
        }
        Command::Analyze { trace, out } => cmd_analyze(trace, out).map(|a| {
            for s in &a.drift.series {
                println!(
                    "{:<8} mean discrepancy {:.6}",
                    s.label.as_str(),
                    s.mean_discrepancy
                );
            }
        }),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("seqedit: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
