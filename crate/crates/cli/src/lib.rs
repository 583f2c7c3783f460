//! Command implementations behind the `birdsim` binary.

pub mod sweep;

use std::fmt;
use std::path::Path;

use birdsim_core::channel::{uplink_feasibility, Band, Feasibility, LinkModel};
use birdsim_core::output::{write_run, OutputFormat, Summary};
use birdsim_core::scenario::Scenario;

/// A failed command, classified by exit status.
#[derive(Debug)]
pub enum Failure {
    /// Unreadable or invalid input. Exit status 1.
    Input(anyhow::Error),
    /// The run aborted or outputs could not be written. Exit status 2.
    Runtime(anyhow::Error),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Input(_) => 1,
            Failure::Runtime(_) => 2,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Input(e) | Failure::Runtime(e) => write!(f, "{e:#}"),
        }
    }
}

pub fn load_scenario(path: &Path) -> Result<Scenario, Failure> {
    Scenario::from_path(path).map_err(|e| Failure::Input(anyhow::anyhow!("{e}")))
}

/// Runs `scenario` with an optional seed override.
pub fn execute(mut scenario: Scenario, seed: Option<u64>) -> Result<(Summary, birdsim_core::RunOutput), Failure> {
    if let Some(seed) = seed {
        scenario.set_seed(seed);
    }
    let out = birdsim_core::run(&scenario).map_err(|e| {
        let mut msg = e.to_string();
        if !e.trace_suffix.is_empty() {
            msg.push_str("\nlast trace records:");
            for line in &e.trace_suffix {
                msg.push_str("\n  ");
                msg.push_str(line);
            }
        }
        Failure::Runtime(anyhow::anyhow!(msg))
    })?;
    Ok((Summary::from_metrics(&scenario.name, scenario.seed, &out.metrics), out))
}

pub fn summary_line(s: &Summary) -> String {
    let opt = |v: Option<f64>, prec: usize| v.map_or_else(|| "n/a".to_owned(), |x| format!("{x:.prec$} s"));
    format!(
        "{}: tasks completed {}/{}, mean t_e2e {}, reported->virtual_awareness {}",
        s.scenario,
        s.tasks_completed,
        s.tasks_total,
        opt(s.mean_t_e2e, 4),
        opt(s.reported_to_virtual_awareness, 3),
    )
}

pub fn cmd_run(scenario: &Path, seed: Option<u64>, out: &Path, format: OutputFormat) -> Result<Summary, Failure> {
    let sc = load_scenario(scenario)?;
    let (summary, output) = execute(sc, seed)?;
    write_run(out, &summary, &output, format).map_err(|e| {
        Failure::Runtime(anyhow::Error::new(e).context(format!("writing outputs to {}", out.display())))
    })?;
    Ok(summary)
}

/// Parses `"BITRATE,BAND"`, e.g. `"25,high"`.
pub fn parse_feasibility(arg: &str) -> Result<(f64, Band), Failure> {
    let bad = |why: String| Failure::Input(anyhow::anyhow!("invalid --feasibility {arg:?}: {why}"));
    let (rate, band) = arg.split_once(',').ok_or_else(|| bad("expected BITRATE,BAND".into()))?;
    let rate: f64 = rate.trim().parse().map_err(|e| bad(format!("{e}")))?;
    if !(rate.is_finite() && rate > 0.0) {
        return Err(bad("bitrate must be positive".into()));
    }
    let band: Band = band.parse().map_err(bad)?;
    Ok((rate, band))
}

pub fn cmd_feasibility(bitrate: f64, band: Band, margin: f64) -> Feasibility {
    uplink_feasibility(&LinkModel::default(), bitrate, band, margin)
}

pub fn feasibility_report(f: &Feasibility) -> String {
    format!(
        "{} Mbps uplink in {} band: {} (mean uplink {} Mbps, headroom {:.2} Mbps)",
        f.bitrate,
        f.band,
        if f.sustainable { "sustainable" } else { "unsustainable" },
        f.mean_uplink,
        f.headroom,
    )
}
