use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use shiresim::experiment::{comparison_table, report, run_matrix};
use shiresim::metrics::downtime_oracle;
use shiresim::scenario::parse_scenario;
use shiresim::{Protocol, Scenario};

#[derive(Parser)]
#[command(
    name = "shiresim",
    version,
    about = "Handover downtime simulator for multihomed mobile nodes"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate every (protocol, seed) pair and write logs, CSVs and summaries.
    Run {
        /// Scenario file; the bundled scenario when omitted.
        #[arg(long)]
        scenario: Option<PathBuf>,
        /// abps, mipv6, lisp, all, or a comma-separated list.
        #[arg(long, default_value = "all")]
        protocol: String,
        /// A count n (seeds 1..=n) or a comma-separated list such as `3,7,11`.
        /// Defaults to the scenario's seed list.
        #[arg(long)]
        seeds: Option<String>,
        #[arg(long, env = "SHIRESIM_OUT", default_value = "shiresim-out")]
        out: PathBuf,
    },
    /// Parse and check a scenario file.
    Validate {
        #[arg(long)]
        scenario: PathBuf,
    },
    /// Recompute downtime records from an event log.
    Oracle {
        #[arg(long)]
        log: PathBuf,
    },
    /// Print the comparison table for a finished run directory.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
    },
}

fn parse_protocols(s: &str) -> Result<Vec<Protocol>> {
    let s = s.trim();
    if s.eq_ignore_ascii_case("all") {
        return Ok(Protocol::ALL.to_vec());
    }
    if s.is_empty() {
        return Ok(Vec::new());
    }
    let mut out: Vec<Protocol> = Vec::new();
    for part in s.split(',') {
        let p: Protocol = part.trim().parse().map_err(anyhow::Error::msg)?;
        if !out.contains(&p) {
            out.push(p);
        }
    }
    Ok(out)
}

fn parse_seeds(s: &str) -> Result<Vec<u64>> {
    let s = s.trim();
    if !s.contains(',') {
        let n: u64 = s.parse().with_context(|| format!("bad seed count `{s}`"))?;
        return Ok((1..=n).collect());
    }
    s.split(',')
        .map(|p| p.trim().parse::<u64>().with_context(|| format!("bad seed `{p}`")))
        .collect()
}

fn load(path: Option<&PathBuf>) -> Result<Scenario> {
    let Some(path) = path else {
        return Ok(Scenario::bundled());
    };
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_scenario(&text).map_err(|d| anyhow::anyhow!("{}:\n{d}", path.display()))
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Run {
            scenario,
            protocol,
            seeds,
            out,
        } => {
            let sc = load(scenario.as_ref())?;
            let protocols = parse_protocols(&protocol)?;
            let seeds = match seeds {
                Some(s) => parse_seeds(&s)?,
                None => sc.run.seeds.clone(),
            };
            let result = run_matrix(&sc, &protocols, &seeds, Some(&out))?;
            for w in &result.warnings {
                eprintln!("warning: {w}");
            }
            if result.runs.is_empty() {
                return Ok(ExitCode::SUCCESS);
            }
            print!("{}", comparison_table(&result.summaries));
            println!("{} runs, outputs in {}", result.runs.len(), out.display());
            let mut failed = false;
            for r in result.failures() {
                failed = true;
                eprintln!(
                    "error: {} seed {}: {}",
                    r.protocol,
                    r.seed,
                    r.failure.as_deref().unwrap_or_default()
                );
            }
            Ok(if failed { ExitCode::FAILURE } else { ExitCode::SUCCESS })
        }
        Command::Validate { scenario } => {
            let sc = load(Some(&scenario))?;
            let map = sc.coverage_map();
            println!(
                "{}: ok ({} access points, {} obstacles, {} paths, {} coverage changes)",
                sc.name,
                sc.access_points.len(),
                sc.obstacles.len(),
                sc.paths.len(),
                map.transitions.len()
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Oracle { log } => {
            let text = fs::read_to_string(&log).with_context(|| format!("reading {}", log.display()))?;
            let records = downtime_oracle(&text).with_context(|| format!("parsing {}", log.display()))?;
            println!("{}", shiresim::metrics::DOWNTIME_CSV_HEADER);
            for r in &records {
                println!("{}", r.csv_row());
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Report { input } => {
            let (summaries, table) = report(&input)?;
            if summaries.is_empty() {
                bail!("no downtime CSVs under {}", input.display());
            }
            print!("{table}");
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
