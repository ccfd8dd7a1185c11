//! Run matrix: one simulation per (protocol, seed), written out as per-run
//! event logs and downtime CSVs plus per-protocol summaries and a columnar
//! comparison file for plotting.
//!
//! Output layout under the chosen directory:
//!
//! ```text
//! <out>/<protocol>/seed-<n>/events.log
//! <out>/<protocol>/seed-<n>/downtime.csv
//! <out>/<protocol>_summary.csv
//! <out>/comparison.dat
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use thiserror::Error;

use crate::handover::{simulate_with, RunStats};
use crate::metrics::{aggregate, downtime_oracle, DowntimeCause, DowntimeRecord, RunSummary, DOWNTIME_CSV_HEADER};
use crate::scenario::Scenario;
use crate::time::SimTime;
use crate::Protocol;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("{path}: {message}")]
    Malformed { path: PathBuf, message: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ExperimentError + '_ {
    move |source| ExperimentError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> ExperimentError + '_ {
    move |source| ExperimentError::Csv {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub protocol: Protocol,
    pub seed: u64,
    pub records: Vec<DowntimeRecord>,
    pub stats: RunStats,
    /// Set when the run broke an invariant or disagreed with the log oracle.
    pub failure: Option<String>,
}

#[derive(Debug, Clone, Default)]
pub struct MatrixOutput {
    pub runs: Vec<RunResult>,
    pub summaries: Vec<RunSummary>,
    pub warnings: Vec<String>,
    pub files: Vec<PathBuf>,
}

impl MatrixOutput {
    pub fn failures(&self) -> impl Iterator<Item = &RunResult> {
        self.runs.iter().filter(|r| r.failure.is_some())
    }

    pub fn summary(&self, protocol: Protocol) -> Option<&RunSummary> {
        self.summaries.iter().find(|s| s.protocol == Some(protocol))
    }
}

/// Runs every (protocol, seed) pair, in parallel, and writes outputs when
/// `out` is given. Results come back in input order.
pub fn run_matrix(
    sc: &Scenario,
    protocols: &[Protocol],
    seeds: &[u64],
    out: Option<&Path>,
) -> Result<MatrixOutput, ExperimentError> {
    let mut output = MatrixOutput::default();
    if protocols.is_empty() || seeds.is_empty() {
        output
            .warnings
            .push("empty protocol or seed list; nothing to run".into());
        return Ok(output);
    }
    let map = sc.coverage_map();
    let pairs: Vec<(Protocol, u64)> = protocols
        .iter()
        .flat_map(|&p| seeds.iter().map(move |&s| (p, s)))
        .collect();

    let results: Vec<Result<(RunResult, Vec<PathBuf>), ExperimentError>> = pairs
        .par_iter()
        .map(|&(protocol, seed)| {
            let run = match simulate_with(sc, &map, protocol, seed) {
                Ok(run) => run,
                Err(e) => {
                    let r = RunResult {
                        protocol,
                        seed,
                        records: Vec::new(),
                        stats: RunStats::default(),
                        failure: Some(e.to_string()),
                    };
                    return Ok((r, Vec::new()));
                }
            };
            let text = run.log.to_text();
            let failure = match (run.check_invariants(), downtime_oracle(&text)) {
                (Err(e), _) => Some(e.to_string()),
                (Ok(()), Err(e)) => Some(format!("log oracle could not parse the run log: {e}")),
                (Ok(()), Ok(oracle)) if oracle != run.downtimes => Some(format!(
                    "online downtime ({} records) disagrees with the log oracle ({} records)",
                    run.downtimes.len(),
                    oracle.len()
                )),
                _ => None,
            };
            let mut files = Vec::new();
            if let Some(dir) = out {
                let run_dir = dir.join(protocol.name()).join(format!("seed-{seed}"));
                fs::create_dir_all(&run_dir).map_err(io_err(&run_dir))?;
                let log_path = run_dir.join("events.log");
                fs::write(&log_path, text.as_bytes()).map_err(io_err(&log_path))?;
                let csv_path = run_dir.join("downtime.csv");
                write_downtime_csv(&csv_path, &run.downtimes)?;
                files.push(log_path);
                files.push(csv_path);
            }
            let r = RunResult {
                protocol,
                seed,
                records: run.downtimes,
                stats: run.stats,
                failure,
            };
            Ok((r, files))
        })
        .collect();

    for res in results {
        let (run, files) = res?;
        output.runs.push(run);
        output.files.extend(files);
    }
    for &p in protocols {
        let mut mine: Vec<&RunResult> = output.runs.iter().filter(|r| r.protocol == p).collect();
        mine.sort_by_key(|r| r.seed);
        let per_run: Vec<Vec<DowntimeRecord>> = mine.iter().map(|r| r.records.clone()).collect();
        let mut s = aggregate(&per_run);
        s.protocol = Some(p);
        output.summaries.push(s);
    }
    if let Some(dir) = out {
        for s in &output.summaries {
            let p = s.protocol.expect("set above");
            let path = dir.join(format!("{}_summary.csv", p.name()));
            write_summary_csv(&path, s)?;
            output.files.push(path);
        }
        let path = dir.join("comparison.dat");
        fs::write(&path, comparison_dat(&output.summaries)).map_err(io_err(&path))?;
        output.files.push(path);
    }
    Ok(output)
}

pub fn write_downtime_csv(path: &Path, records: &[DowntimeRecord]) -> Result<(), ExperimentError> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    w.write_record(DOWNTIME_CSV_HEADER.split(',')).map_err(csv_err(path))?;
    for r in records {
        w.write_record(r.csv_row().split(',')).map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NaN".into(), |v| format!("{v:.6}"))
}

fn write_summary_csv(path: &Path, s: &RunSummary) -> Result<(), ExperimentError> {
    let name = s.protocol.map_or("-", Protocol::name);
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    w.write_record(["protocol", "handover_index", "cause", "samples", "mean_s", "ci95_s"])
        .map_err(csv_err(path))?;
    for h in &s.per_handover {
        w.write_record([
            name.to_string(),
            h.handover_index.to_string(),
            h.cause.to_string(),
            h.samples.len().to_string(),
            format!("{:.6}", h.mean),
            fmt_opt(h.ci95),
        ])
        .map_err(csv_err(path))?;
    }
    w.write_record([
        name.to_string(),
        "all".into(),
        "-".into(),
        s.samples.to_string(),
        format!("{:.6}", s.mean),
        fmt_opt(s.ci95),
    ])
    .map_err(csv_err(path))?;
    w.flush().map_err(io_err(path))
}

/// Whitespace-separated columns, one row per handover index, mean and CI per
/// protocol. Suitable for a clustered bar chart with error bars.
pub fn comparison_dat(summaries: &[RunSummary]) -> String {
    let rows = summaries.iter().map(|s| s.per_handover.len()).max().unwrap_or(0);
    let mut out = String::from("# handover");
    for s in summaries {
        let n = s.protocol.map_or("-", Protocol::name);
        out.push_str(&format!(" {n}_mean {n}_ci95"));
    }
    out.push('\n');
    for i in 0..rows {
        out.push_str(&(i + 1).to_string());
        for s in summaries {
            match s.per_handover.get(i) {
                Some(h) => out.push_str(&format!(" {:.6} {}", h.mean, fmt_opt(h.ci95))),
                None => out.push_str(" NaN NaN"),
            }
        }
        out.push('\n');
    }
    out
}

/// Human-readable comparison table, one row per handover index.
pub fn comparison_table(summaries: &[RunSummary]) -> String {
    let rows = summaries.iter().map(|s| s.per_handover.len()).max().unwrap_or(0);
    let mut out = format!("{:<10}", "handover");
    for s in summaries {
        out.push_str(&format!("{:>22}", s.protocol.map_or("-", Protocol::name)));
    }
    out.push('\n');
    let cell = |mean: f64, ci: Option<f64>| match ci {
        Some(ci) => format!("{mean:.3} ± {ci:.3} s"),
        None => format!("{mean:.3} s"),
    };
    for i in 0..rows {
        let gap = summaries
            .iter()
            .filter_map(|s| s.per_handover.get(i))
            .any(|h| h.cause == DowntimeCause::CoverageGap);
        let label = format!("{}{}", i + 1, if gap { " (gap)" } else { "" });
        out.push_str(&format!("{label:<10}"));
        for s in summaries {
            let c = s.per_handover.get(i).map_or("-".into(), |h| cell(h.mean, h.ci95));
            out.push_str(&format!("{c:>22}"));
        }
        out.push('\n');
    }
    out.push_str(&format!("{:<10}", "mean"));
    for s in summaries {
        out.push_str(&format!("{:>22}", cell(s.mean, s.ci95)));
    }
    out.push('\n');
    out
}

pub fn read_downtime_csv(path: &Path) -> Result<Vec<DowntimeRecord>, ExperimentError> {
    let mut rdr = csv::Reader::from_path(path).map_err(csv_err(path))?;
    let bad = |message: String| ExperimentError::Malformed {
        path: path.to_path_buf(),
        message,
    };
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(csv_err(path))?;
        if row.len() != 8 {
            return Err(bad(format!("expected 8 columns, found {}", row.len())));
        }
        let num = |i: usize| row[i].parse::<u64>().map_err(|e| bad(format!("column {}: {e}", i + 1)));
        out.push(DowntimeRecord {
            flow_id: 0,
            protocol: row[0].parse().map_err(bad)?,
            run_seed: num(1)?,
            handover_index: num(2)? as usize,
            cause: row[3].parse().map_err(bad)?,
            start: SimTime::from_micros(num(4)?),
            end: SimTime::from_micros(num(5)?),
            truncated: row[7].parse().map_err(|e| bad(format!("column 8: {e}")))?,
        });
    }
    Ok(out)
}

/// Reads every `<protocol>/seed-*/downtime.csv` under `dir` and builds the
/// comparison table.
pub fn report(dir: &Path) -> Result<(Vec<RunSummary>, String), ExperimentError> {
    let mut summaries = Vec::new();
    for p in Protocol::ALL {
        let pdir = dir.join(p.name());
        if !pdir.is_dir() {
            continue;
        }
        let mut runs: BTreeMap<u64, Vec<DowntimeRecord>> = BTreeMap::new();
        for entry in fs::read_dir(&pdir).map_err(io_err(&pdir))? {
            let entry = entry.map_err(io_err(&pdir))?;
            let name = entry.file_name();
            let Some(seed) = name
                .to_str()
                .and_then(|n| n.strip_prefix("seed-"))
                .and_then(|s| s.parse().ok())
            else {
                continue;
            };
            let csv_path = entry.path().join("downtime.csv");
            runs.insert(seed, read_downtime_csv(&csv_path)?);
        }
        if runs.is_empty() {
            continue;
        }
        let per_run: Vec<_> = runs.into_values().collect();
        let mut s = aggregate(&per_run);
        s.protocol = Some(p);
        summaries.push(s);
    }
    let table = comparison_table(&summaries);
    Ok((summaries, table))
}
