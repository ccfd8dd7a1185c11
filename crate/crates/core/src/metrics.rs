//! Downtime measurement.
//!
//! A downtime record opens when a data datagram's transmission fails (its
//! link-layer ACK times out) after a period of successful delivery, and
//! closes when the correspondent receives that datagram or any later one.
//! The record's start is the failed frame's transmit instant. Further failures
//! while a record is open merge into it. Failures of datagrams that have
//! already reached the correspondent (lost ACK), or that were sent before
//! the previous record closed, do not open a record. Keepalive probes never
//! count.
//!
//! A record's cause is `coverage_gap` when the node was out of every AP's
//! coverage at some point between the failed transmission and the delivery.
//!
//! Two independent implementations exist: [`DowntimeTracker`] consumes typed
//! events while the simulation runs, and [`downtime_oracle`] rescans the
//! serialised event log. They must agree exactly.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::time::SimTime;
use crate::Protocol;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DowntimeCause {
    Handover,
    CoverageGap,
}

impl DowntimeCause {
    pub fn name(self) -> &'static str {
        match self {
            DowntimeCause::Handover => "handover",
            DowntimeCause::CoverageGap => "coverage_gap",
        }
    }
}

impl fmt::Display for DowntimeCause {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DowntimeCause {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "handover" => Ok(DowntimeCause::Handover),
            "coverage_gap" => Ok(DowntimeCause::CoverageGap),
            other => Err(format!("unknown downtime cause `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DowntimeRecord {
    pub flow_id: u32,
    pub protocol: Protocol,
    pub run_seed: u64,
    /// 1-based position of the record within its run.
    pub handover_index: usize,
    pub cause: DowntimeCause,
    pub start: SimTime,
    pub end: SimTime,
    pub truncated: bool,
}

impl DowntimeRecord {
    pub fn duration_s(&self) -> f64 {
        (self.end - self.start).as_secs_f64()
    }

    /// `protocol,run_seed,handover_index,cause,start_us,end_us,duration_s,truncated`
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{:.6},{}",
            self.protocol,
            self.run_seed,
            self.handover_index,
            self.cause,
            self.start.as_micros(),
            self.end.as_micros(),
            self.duration_s(),
            self.truncated
        )
    }
}

pub const DOWNTIME_CSV_HEADER: &str = "protocol,run_seed,handover_index,cause,start_us,end_us,duration_s,truncated";

/// Typed trace events consumed by [`DowntimeTracker`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceEvent {
    /// ACK timeout of a data frame transmitted at `tx`.
    DataTimeout { seq: u64, tx: SimTime },
    /// Datagram `seq` reached the correspondent.
    Deliver { seq: u64 },
    /// The coverage set changed; `empty` tells whether any AP still covers.
    Coverage { empty: bool },
}

#[derive(Debug, Clone, Copy)]
struct OpenRecord {
    seq: u64,
    start: SimTime,
    gap: bool,
}

/// Online downtime computation.
#[derive(Debug, Clone)]
pub struct DowntimeTracker {
    protocol: Protocol,
    run_seed: u64,
    flow_id: u32,
    delivered: HashSet<u64>,
    open: Option<OpenRecord>,
    last_end: SimTime,
    empty_now: bool,
    last_empty_end: Option<SimTime>,
    records: Vec<DowntimeRecord>,
}

impl DowntimeTracker {
    pub fn new(protocol: Protocol, run_seed: u64, flow_id: u32) -> Self {
        DowntimeTracker {
            protocol,
            run_seed,
            flow_id,
            delivered: HashSet::new(),
            open: None,
            last_end: SimTime::ZERO,
            empty_now: false,
            last_empty_end: None,
            records: Vec::new(),
        }
    }

    pub fn is_open(&self) -> bool {
        self.open.is_some()
    }

    pub fn observe(&mut self, now: SimTime, ev: TraceEvent) {
        match ev {
            TraceEvent::DataTimeout { seq, tx } => {
                if self.open.is_some() || self.delivered.contains(&seq) || tx < self.last_end {
                    return;
                }
                let gap = self.empty_now || self.last_empty_end.is_some_and(|e| e > tx);
                self.open = Some(OpenRecord { seq, start: tx, gap });
            }
            TraceEvent::Deliver { seq } => {
                self.delivered.insert(seq);
                if self.open.is_some_and(|o| seq >= o.seq) {
                    self.close(now, false);
                }
            }
            TraceEvent::Coverage { empty } => {
                if empty && !self.empty_now {
                    if let Some(o) = &mut self.open {
                        o.gap = true;
                    }
                }
                if !empty && self.empty_now {
                    self.last_empty_end = Some(now);
                }
                self.empty_now = empty;
            }
        }
    }

    fn close(&mut self, end: SimTime, truncated: bool) {
        let o = self.open.take().expect("record is open");
        self.records.push(DowntimeRecord {
            flow_id: self.flow_id,
            protocol: self.protocol,
            run_seed: self.run_seed,
            handover_index: self.records.len() + 1,
            cause: if o.gap {
                DowntimeCause::CoverageGap
            } else {
                DowntimeCause::Handover
            },
            start: o.start,
            end,
            truncated,
        });
        self.last_end = end;
    }

    /// Closes any open record at `trace_end` (flagged truncated).
    pub fn finish(mut self, trace_end: SimTime) -> Vec<DowntimeRecord> {
        if self.open.is_some() {
            self.close(trace_end, true);
        }
        self.records
    }
}

/// Convenience: run the tracker over a finished trace.
pub fn downtime_online(
    protocol: Protocol,
    run_seed: u64,
    flow_id: u32,
    trace: &[(SimTime, TraceEvent)],
    trace_end: SimTime,
) -> Vec<DowntimeRecord> {
    let mut t = DowntimeTracker::new(protocol, run_seed, flow_id);
    for &(now, ev) in trace {
        t.observe(now, ev);
    }
    t.finish(trace_end)
}

// ---- log oracle ----------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("line {line}: {message}")]
pub struct LogParseError {
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone)]
enum LogLine {
    Run {
        protocol: Protocol,
        seed: u64,
        flow: u32,
        end: SimTime,
    },
    Timeout {
        seq: u64,
        tx: SimTime,
        data: bool,
    },
    Deliver {
        seq: u64,
    },
    Coverage {
        empty: bool,
    },
    Other,
}

fn field<'a>(detail: &'a str, key: &str, line: usize) -> Result<&'a str, LogParseError> {
    detail
        .split(' ')
        .find_map(|kv| kv.strip_prefix(key).and_then(|r| r.strip_prefix('=')))
        .ok_or_else(|| LogParseError {
            line,
            message: format!("missing `{key}=` in detail `{detail}`"),
        })
}

fn num<T: FromStr>(s: &str, what: &str, line: usize) -> Result<T, LogParseError> {
    s.parse().map_err(|_| LogParseError {
        line,
        message: format!("bad {what} `{s}`"),
    })
}

fn parse_log(text: &str) -> Result<Vec<(SimTime, LogLine)>, LogParseError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.is_empty() {
            continue;
        }
        let mut parts = raw.splitn(4, ',');
        let (Some(t), Some(entity), Some(kind), Some(detail)) =
            (parts.next(), parts.next(), parts.next(), parts.next())
        else {
            return Err(LogParseError {
                line,
                message: "expected `time_us,entity,kind,detail`".into(),
            });
        };
        let time = SimTime::from_micros(num(t, "time", line)?);
        let parsed = match (entity, kind) {
            ("world", "run") => LogLine::Run {
                protocol: field(detail, "protocol", line)?
                    .parse()
                    .map_err(|m: String| LogParseError { line, message: m })?,
                seed: num(field(detail, "seed", line)?, "seed", line)?,
                flow: num(field(detail, "flow", line)?, "flow", line)?,
                end: SimTime::from_micros(num(field(detail, "end_us", line)?, "end_us", line)?),
            },
            (_, "timeout") => LogLine::Timeout {
                seq: num(field(detail, "seq", line)?, "seq", line)?,
                tx: SimTime::from_micros(num(field(detail, "tx_us", line)?, "tx_us", line)?),
                data: field(detail, "kind", line)? == "data",
            },
            ("cn", "deliver") => LogLine::Deliver {
                seq: num(field(detail, "seq", line)?, "seq", line)?,
            },
            ("world", "coverage") => LogLine::Coverage {
                empty: field(detail, "set", line)? == "-",
            },
            _ => LogLine::Other,
        };
        out.push((time, parsed));
    }
    Ok(out)
}

/// Recomputes downtime records from a serialised event log.
///
/// Written as a direct scan over the whole log rather than an incremental
/// state machine. An empty log yields no records.
pub fn downtime_oracle(text: &str) -> Result<Vec<DowntimeRecord>, LogParseError> {
    let lines = parse_log(text)?;
    let Some((protocol, seed, flow, trace_end)) = lines.iter().find_map(|(_, l)| match *l {
        LogLine::Run {
            protocol,
            seed,
            flow,
            end,
        } => Some((protocol, seed, flow, end)),
        _ => None,
    }) else {
        return Ok(Vec::new());
    };

    // Empty-coverage intervals as (start_pos, end_pos, end_time); open-ended
    // intervals have no end.
    let mut intervals: Vec<(usize, Option<(usize, SimTime)>)> = Vec::new();
    let mut empty = false;
    for (pos, (t, l)) in lines.iter().enumerate() {
        if let LogLine::Coverage { empty: e } = *l {
            if e && !empty {
                intervals.push((pos, None));
            } else if !e && empty {
                intervals.last_mut().expect("interval was opened").1 = Some((pos, *t));
            }
            empty = e;
        }
    }

    let mut records = Vec::new();
    let mut last_end = SimTime::ZERO;
    let mut resume_at = 0usize;
    for (pos, (_, l)) in lines.iter().enumerate() {
        let LogLine::Timeout { seq, tx, data: true } = *l else {
            continue;
        };
        if pos < resume_at || tx < last_end {
            continue;
        }
        let already = lines[..pos]
            .iter()
            .any(|(_, l)| matches!(*l, LogLine::Deliver { seq: s } if s == seq));
        if already {
            continue;
        }
        let close = lines
            .iter()
            .enumerate()
            .skip(pos + 1)
            .find(|(_, (_, l))| matches!(*l, LogLine::Deliver { seq: s } if s >= seq));
        let (close_pos, end, truncated) = match close {
            Some((p, (t, _))) => (p, *t, false),
            None => (lines.len(), trace_end, true),
        };
        let gap = intervals.iter().any(|&(s_pos, e)| {
            s_pos < close_pos
                && match e {
                    None => true,
                    Some((e_pos, e_t)) => e_pos > pos || e_t > tx,
                }
        });
        records.push(DowntimeRecord {
            flow_id: flow,
            protocol,
            run_seed: seed,
            handover_index: records.len() + 1,
            cause: if gap {
                DowntimeCause::CoverageGap
            } else {
                DowntimeCause::Handover
            },
            start: tx,
            end,
            truncated,
        });
        last_end = end;
        resume_at = close_pos;
    }
    Ok(records)
}

// ---- aggregation ---------------------------------------------------------

/// Mean and Student-t 95% half-width (`None` below two samples).
pub fn mean_ci95(samples: &[f64]) -> (f64, Option<f64>) {
    let n = samples.len();
    if n == 0 {
        return (f64::NAN, None);
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, None);
    }
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let t = StudentsT::new(0.0, 1.0, (n - 1) as f64)
        .expect("degrees of freedom are positive")
        .inverse_cdf(0.975);
    (mean, Some(t * var.sqrt() / (n as f64).sqrt()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct HandoverStat {
    pub handover_index: usize,
    pub cause: DowntimeCause,
    pub samples: Vec<f64>,
    pub mean: f64,
    pub ci95: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub protocol: Option<Protocol>,
    pub runs: usize,
    pub per_handover: Vec<HandoverStat>,
    /// Over every record of every run.
    pub mean: f64,
    pub samples: usize,
    pub ci95: Option<f64>,
}

/// Per-handover-index statistics across runs. Each inner slice holds one
/// run's records.
pub fn aggregate(runs: &[Vec<DowntimeRecord>]) -> RunSummary {
    let max_idx = runs
        .iter()
        .flat_map(|r| r.iter().map(|d| d.handover_index))
        .max()
        .unwrap_or(0);
    let per_handover = (1..=max_idx)
        .map(|idx| {
            let recs: Vec<&DowntimeRecord> = runs
                .iter()
                .filter_map(|r| r.iter().find(|d| d.handover_index == idx))
                .collect();
            let samples: Vec<f64> = recs.iter().map(|d| d.duration_s()).collect();
            let gaps = recs.iter().filter(|d| d.cause == DowntimeCause::CoverageGap).count();
            let (mean, ci95) = mean_ci95(&samples);
            HandoverStat {
                handover_index: idx,
                cause: if 2 * gaps > recs.len() {
                    DowntimeCause::CoverageGap
                } else {
                    DowntimeCause::Handover
                },
                samples,
                mean,
                ci95,
            }
        })
        .collect();
    let all: Vec<f64> = runs.iter().flatten().map(DowntimeRecord::duration_s).collect();
    let (mean, ci95) = mean_ci95(&all);
    let protocol = runs.iter().flatten().next().map(|d| d.protocol);
    RunSummary {
        protocol,
        runs: runs.len(),
        per_handover,
        mean,
        samples: all.len(),
        ci95,
    }
}
