mod commands;
mod input;
mod serve;

use std::io::Write;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

/// Kinematic optimization from the command line.
///
/// Exit status: 0 on success, 2 when a solve finished without meeting its
/// tolerances, 1 on any error.
#[derive(Parser, Debug)]
#[command(name = "kinoptik", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Multi-seed IK for one target pose; prints the result JSON.
    SolveIk(commands::SolveIkArgs),
    /// Collision-aware trajectory between two end-effector poses.
    PlanTraj(commands::PlanTrajArgs),
    /// Runs a benchmark spec; JSON on stdout, table on stderr.
    Benchmark(commands::BenchmarkArgs),
    /// Hosts the viewer WebSocket at /ws.
    Serve(serve::ServeArgs),
}

fn print_json(v: &serde_json::Value) -> anyhow::Result<()> {
    let mut out = std::io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, v)?;
    writeln!(out)?;
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    let solved = |(doc, success): (serde_json::Value, bool)| {
        print_json(&doc)?;
        Ok(if success { ExitCode::SUCCESS } else { ExitCode::from(2) })
    };
    match cli.command {
        Command::SolveIk(args) => solved(commands::solve_ik(args)?),
        Command::PlanTraj(args) => solved(commands::plan_traj(args)?),
        Command::Benchmark(args) => {
            let (doc, table) = commands::benchmark(&args)?;
            if args.text {
                print!("{table}");
            } else {
                print_json(&doc)?;
                eprint!("{table}");
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Serve(args) => {
            serve::serve(args)?;
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::FAILURE } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
