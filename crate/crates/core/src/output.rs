//! Run summaries and on-disk output files.

use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::engine::{EndReason, MetricsRecord, RunCounts, RunOutput, TraceRecord};
use crate::model::{CriticalMoments, Moment};

pub const METRICS_CSV: &str = "metrics.csv";
pub const TASKS_CSV: &str = "tasks.csv";
pub const LINK_SAMPLES_CSV: &str = "link_samples.csv";
pub const SUMMARY_JSON: &str = "summary.json";
pub const TRACE_JSONL: &str = "trace.jsonl";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Csv,
    Summary,
    Both,
}

impl std::str::FromStr for OutputFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(Self::Csv),
            "summary" => Ok(Self::Summary),
            "both" => Ok(Self::Both),
            other => Err(format!("unknown format `{other}` (expected csv, summary or both)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub scenario: String,
    pub seed: u64,
    pub tasks_total: usize,
    pub tasks_completed: usize,
    pub program_runs: usize,
    pub mean_t_e2e: Option<f64>,
    pub mean_t_comm: Option<f64>,
    pub reported_to_virtual_awareness: Option<f64>,
    pub moments: CriticalMoments,
    pub counts: RunCounts,
    pub final_t_pos: usize,
    pub end_time: f64,
    pub end_reason: EndReason,
}

fn mean(xs: impl Iterator<Item = f64>) -> Option<f64> {
    let (n, sum) = xs.fold((0usize, 0.0), |(n, s), x| (n + 1, s + x));
    (n > 0).then(|| sum / n as f64)
}

impl Summary {
    pub fn from_metrics(scenario: &str, seed: u64, m: &MetricsRecord) -> Self {
        Self {
            scenario: scenario.to_owned(),
            seed,
            tasks_total: m.tasks.len(),
            tasks_completed: m.tasks.iter().filter(|t| t.completion_time.is_some()).count(),
            program_runs: m.runs.len(),
            mean_t_e2e: mean(m.runs.iter().map(|r| r.breakdown.t_e2e)),
            mean_t_comm: mean(m.runs.iter().map(|r| r.breakdown.t_comm)),
            reported_to_virtual_awareness: m.moments.duration(Moment::Reported, Moment::VirtualAwareness),
            moments: m.moments,
            counts: m.counts,
            final_t_pos: m.final_t_pos,
            end_time: m.end_time,
            end_reason: m.end_reason.clone(),
        }
    }
}

#[derive(Serialize)]
struct RunRow<'a> {
    tick: u64,
    program_id: &'a str,
    server: usize,
    consumer: usize,
    issued_at: f64,
    completed_at: f64,
    t_enc: f64,
    t_comm: f64,
    t_dec: f64,
    t_proc: f64,
    t_e2e: f64,
    tasks: String,
}

#[derive(Serialize)]
struct TaskRow<'a> {
    task_id: &'a str,
    origin: &'static str,
    issue_time: f64,
    completion_time: Option<f64>,
    latency: Option<f64>,
    servers: String,
}

fn csv_err(e: csv::Error) -> io::Error {
    io::Error::other(e)
}

pub fn write_metrics_csv<W: Write>(m: &MetricsRecord, w: W) -> io::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in &m.runs {
        out.serialize(RunRow {
            tick: r.tick,
            program_id: r.program_id.as_str(),
            server: r.server,
            consumer: r.consumer,
            issued_at: r.issued_at,
            completed_at: r.completed_at,
            t_enc: r.breakdown.t_enc,
            t_comm: r.breakdown.t_comm,
            t_dec: r.breakdown.t_dec,
            t_proc: r.breakdown.t_proc,
            t_e2e: r.breakdown.t_e2e,
            tasks: r.task_ids.join(";"),
        })
        .map_err(csv_err)?;
    }
    out.flush()
}

pub fn write_tasks_csv<W: Write>(m: &MetricsRecord, w: W) -> io::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for t in &m.tasks {
        let servers: Vec<String> = t.servers.iter().map(|(p, s)| format!("{p}={s}")).collect();
        out.serialize(TaskRow {
            task_id: &t.task_id,
            origin: match t.origin {
                crate::model::TaskOrigin::CommanderOrder => "commander_order",
                crate::model::TaskOrigin::TimelineImplied => "timeline_implied",
            },
            issue_time: t.issue_time,
            completion_time: t.completion_time,
            latency: t.completion_time.map(|c| c - t.issue_time),
            servers: servers.join(";"),
        })
        .map_err(csv_err)?;
    }
    out.flush()
}

pub fn write_link_samples_csv<W: Write>(m: &MetricsRecord, w: W) -> io::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for s in &m.link_samples {
        out.serialize(s).map_err(csv_err)?;
    }
    out.flush()
}

pub fn write_trace<W: Write>(trace: &[TraceRecord], w: W) -> io::Result<()> {
    let mut w = BufWriter::new(w);
    for r in trace {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

pub fn summary_json(summary: &Summary) -> String {
    let mut s = serde_json::to_string_pretty(summary).expect("summary serializes");
    s.push('\n');
    s
}

/// Writes the requested outputs into `dir`, creating it if needed. The trace
/// is always written.
pub fn write_run(dir: &Path, summary: &Summary, out: &RunOutput, format: OutputFormat) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    if matches!(format, OutputFormat::Csv | OutputFormat::Both) {
        write_metrics_csv(&out.metrics, fs::File::create(dir.join(METRICS_CSV))?)?;
        write_tasks_csv(&out.metrics, fs::File::create(dir.join(TASKS_CSV))?)?;
        write_link_samples_csv(&out.metrics, fs::File::create(dir.join(LINK_SAMPLES_CSV))?)?;
    }
    if matches!(format, OutputFormat::Summary | OutputFormat::Both) {
        fs::write(dir.join(SUMMARY_JSON), summary_json(summary))?;
    }
    write_trace(&out.trace, fs::File::create(dir.join(TRACE_JSONL))?)
}
