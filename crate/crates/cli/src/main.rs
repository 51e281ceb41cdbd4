use std::fs::File;
use std::io::{BufWriter, ErrorKind, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use landwork_core::coordination::CStrategy;
use landwork_core::work_os::MultiplexScheme;
use landwork_core::{compute_metrics, emit_report, load_scenario, run, ReportFormat, Scenario};

#[derive(Parser)]
#[command(
    name = "landwork",
    version,
    about = "Plan and simulate drone teams deploying landscape-scale structures"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Plan and simulate a scenario, then report.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum)]
        strategy: Option<Strategy>,
        #[arg(long, value_enum)]
        scheme: Option<Scheme>,
        /// Write the phase trace as NDJSON.
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "json")]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the planning pipeline only and print the plan as JSON.
    Plan {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a scenario file and print scale warnings.
    Validate {
        #[arg(long)]
        scenario: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Strategy {
    Broker,
    Leader,
}

#[derive(Clone, Copy, ValueEnum)]
enum Scheme {
    Rr,
    Weighted,
    Priority,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
    Text,
}

const EXIT_BUDGET: u8 = 2;
const EXIT_STALL: u8 = 3;

fn load(path: &Path) -> Result<Scenario> {
    let scenario = load_scenario(path)?;
    scenario
        .validate()
        .with_context(|| format!("invalid scenario {}", path.display()))?;
    Ok(scenario)
}

fn write_out(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, text).with_context(|| format!("cannot write {}", p.display())),
        None => {
            std::io::stdout().lock().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn execute(cli: Cli) -> Result<u8> {
    match cli.command {
        Command::Run {
            scenario,
            seed,
            strategy,
            scheme,
            trace,
            format,
            out,
        } => {
            let mut s = load(&scenario)?;
            if let Some(seed) = seed {
                s.seed = seed;
            }
            if let Some(st) = strategy {
                s.policies.coordination = match st {
                    Strategy::Broker => CStrategy::Broker,
                    Strategy::Leader => CStrategy::LeaderElection,
                };
            }
            if let Some(sc) = scheme {
                s.policies.multiplex = match sc {
                    Scheme::Rr => MultiplexScheme::RoundRobin,
                    Scheme::Weighted => MultiplexScheme::WeightedByRemainingWork,
                    Scheme::Priority => MultiplexScheme::PriorityByGoalDepth,
                };
            }
            let output = run(&s)?;
            if let Some(path) = trace {
                let f = File::create(&path).with_context(|| format!("cannot write {}", path.display()))?;
                output.trace.write_ndjson(BufWriter::new(f))?;
            }
            let report = compute_metrics(&output, &s);
            let format = match format {
                Format::Json => ReportFormat::Json,
                Format::Csv => ReportFormat::Csv,
                Format::Text => ReportFormat::Text,
            };
            emit_report(&report, format, out.as_deref())?;
            Ok(if report.stall.is_some() {
                EXIT_STALL
            } else if !report.budget.pass {
                EXIT_BUDGET
            } else {
                0
            })
        }
        Command::Plan { scenario, out } => {
            let s = load(&scenario)?;
            let plan = landwork_core::plan::plan(&s)?;
            write_out(out.as_deref(), &plan.to_json())?;
            Ok(0)
        }
        Command::Validate { scenario } => {
            let s = load(&scenario)?;
            for w in s.warnings() {
                eprintln!("warning: {}", w.name());
            }
            let line = format!(
                "ok: {} segments, {} sites, {} drones\n",
                s.structure.segments.len(),
                s.sites.len(),
                s.fleet.len()
            );
            write_out(None, &line)?;
            Ok(0)
        }
    }
}

fn is_broken_pipe(e: &anyhow::Error) -> bool {
    e.chain().any(|c| {
        c.downcast_ref::<std::io::Error>()
            .is_some_and(|io| io.kind() == ErrorKind::BrokenPipe)
    })
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err(e) if is_broken_pipe(&e) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
