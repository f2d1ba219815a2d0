//! Command-line front end: parse and check machines, render them as DOT,
//! generate random ones and run the timing suite.
//!
//! Exit codes for `check`: 0 well-formed, 1 not well-formed, 2 inconclusive,
//! 3 usage, parse or solver errors.

use clap::{Args, Parser, Subcommand};
use dafsm_core::bench::{self, GenParams};
use dafsm_core::solver::{check_machine, SolverConfig, SolverMode};
use dafsm_core::{dsl, viz, CheckOutcome, Dafsm, Overall};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Parser)]
#[command(name = "dafsm", version, about = "Data-aware FSM toolkit: check, visualize, generate, benchmark")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check well-formedness of a machine
    Check {
        /// Input `.daf` file
        file: PathBuf,

        /// Halt at the first violation
        #[arg(long, conflicts_with = "non_stop")]
        stop: bool,

        /// Evaluate every check (default)
        #[arg(long = "non-stop")]
        non_stop: bool,

        #[command(flatten)]
        solver: SolverArgs,

        /// Print the verdict as JSON
        #[arg(long)]
        json: bool,
    },

    /// Render a machine as a DOT graph
    Viz {
        /// Input `.daf` file
        file: PathBuf,

        /// Output path (stdout when omitted)
        #[arg(short)]
        out: Option<PathBuf>,
    },

    /// Generate a random machine
    Generate {
        /// Number of states
        #[arg(long, default_value_t = 10)]
        states: usize,

        /// Number of transitions
        #[arg(long, default_value_t = 15)]
        transitions: usize,

        /// Maximum participants
        #[arg(long, default_value_t = 5)]
        max_participants: u32,

        /// Maximum functions
        #[arg(long, default_value_t = 12)]
        max_functions: u32,

        /// Maximum data variables
        #[arg(long, default_value_t = 8)]
        max_vars: u32,

        /// Generator seed
        #[arg(long, default_value_t = 1)]
        seed: u64,

        /// Output path (stdout when omitted)
        #[arg(short)]
        out: Option<PathBuf>,
    },

    /// Run the randomized timing suite and write a CSV
    Bench {
        /// Output CSV path
        #[arg(short)]
        out: PathBuf,

        /// Suite seed
        #[arg(long, env = "DAFSM_BENCH_SEED", default_value_t = 0xDAF5)]
        seed: u64,

        #[command(flatten)]
        solver: SolverArgs,
    },
}

#[derive(Args)]
struct SolverArgs {
    /// SMT-LIB 2 solver executable (default: z3 on PATH, else the bundled
    /// minilia next to this binary)
    #[arg(long, env = "DAFSM_SOLVER")]
    solver: Option<PathBuf>,

    /// Per-query solver timeout in milliseconds
    #[arg(long, default_value_t = 10_000)]
    timeout: u64,
}

#[derive(Debug, Error)]
enum CliError {
    #[error("cannot read `{path}`: {source}")]
    Read {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot write `{path}`: {source}")]
    Write {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("input has {0} error(s)")]
    Parse(usize),
    #[error("no SMT solver found: install z3, pass --solver or set DAFSM_SOLVER")]
    NoSolver,
    #[error(transparent)]
    Solver(#[from] dafsm_core::solver::SolverError),
    #[error(transparent)]
    Bench(#[from] dafsm_core::bench::BenchError),
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 3,
            };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    std::process::exit(run(cli));
}

fn run(cli: Cli) -> i32 {
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            3
        }
    }
}

fn dispatch(cli: Cli) -> Result<i32, CliError> {
    match cli.command {
        Command::Check { file, stop, non_stop: _, solver, json } => {
            let machine = load(&file)?;
            let mode = if stop { SolverMode::Stop } else { SolverMode::NonStop };
            let config = resolve_solver(&solver)?
                .with_mode(mode)
                .with_timeout_ms(solver.timeout);
            let verdict = check_machine(&machine, &config)?;
            if json {
                println!("{}", verdict.to_json());
            } else {
                print_verdict(&verdict);
            }
            Ok(match verdict.overall {
                Overall::WellFormed => 0,
                Overall::NotWellFormed => 1,
                Overall::Inconclusive => 2,
            })
        }
        Command::Viz { file, out } => {
            let machine = load(&file)?;
            let dot = viz::to_dot(&machine);
            emit(out.as_deref(), &dot)?;
            Ok(0)
        }
        Command::Generate { states, transitions, max_participants, max_functions, max_vars, seed, out } => {
            let params = GenParams {
                seed,
                max_participants,
                max_functions,
                max_data_vars: max_vars,
                states,
                transitions,
            };
            let machine = bench::generate(&params)?;
            emit(out.as_deref(), &dsl::print(&machine))?;
            Ok(0)
        }
        Command::Bench { out, seed, solver } => {
            let config = resolve_solver(&solver)?.with_timeout_ms(solver.timeout);
            let rows = bench::run_suite(&out, seed, &config)?;
            println!("wrote {} rows to {}", rows.len(), out.display());
            Ok(0)
        }
    }
}

fn load(path: &Path) -> Result<Dafsm, CliError> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Read {
        path: path.display().to_string(),
        source,
    })?;
    match dsl::parse(&text) {
        Ok(machine) => Ok(machine),
        Err(errors) => {
            for e in &errors {
                eprintln!("{}: {e}", path.display());
            }
            Err(CliError::Parse(errors.len()))
        }
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), CliError> {
    match out {
        Some(path) => std::fs::write(path, text).map_err(|source| CliError::Write {
            path: path.display().to_string(),
            source,
        }),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn print_verdict(verdict: &dafsm_core::Verdict) {
    for check in &verdict.checks {
        let mark = match check.outcome {
            CheckOutcome::Pass => "pass",
            CheckOutcome::Fail => "FAIL",
            CheckOutcome::Unknown => "????",
        };
        println!("[{mark}] {:<16} {:?} ({:.2} ms)", check.site, check.kind, check.ms);
        if let Some(witness) = &check.witness {
            for line in witness.lines().filter(|l| !l.trim().is_empty()) {
                println!("         {line}");
            }
        }
    }
    for warning in &verdict.warnings {
        println!("warning: {warning}");
    }
    println!("{:?}", verdict.overall);
}

/// Solver resolution order: explicit flag or environment, then `z3` on the
/// PATH, then the bundled `minilia` sitting next to this binary.
fn resolve_solver(args: &SolverArgs) -> Result<SolverConfig, CliError> {
    if let Some(path) = &args.solver {
        return Ok(SolverConfig::new(path.clone()));
    }
    if let Some(z3) = find_on_path("z3") {
        return Ok(SolverConfig::new(z3));
    }
    if let Ok(exe) = std::env::current_exe() {
        let sibling = exe.with_file_name("minilia");
        if sibling.is_file() {
            return Ok(SolverConfig::new(sibling));
        }
    }
    Err(CliError::NoSolver)
}

fn find_on_path(name: &str) -> Option<PathBuf> {
    let path = std::env::var_os("PATH")?;
    for dir in std::env::split_paths(&path) {
        let candidate = dir.join(name);
        if candidate.is_file() {
            return Some(candidate);
        }
    }
    None
}
