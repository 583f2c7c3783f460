//! Parameter sweeps: one run per (value, replicate), then per-value aggregates.

use std::fs;
use std::path::Path;

use anyhow::{anyhow, Context};
use birdsim_core::scenario::{FlightPlan, Scenario};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::{execute, Failure};

pub const RUNS_CSV: &str = "sweep_runs.csv";
pub const AGGREGATE_CSV: &str = "sweep_aggregate.csv";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    /// Protocol tick interval t_int, seconds.
    UpdateInterval,
    /// Multiplier on every program's input and output payload.
    PayloadScale,
    /// Constant hover altitude in metres, replacing the flight plan.
    AltitudeProfile,
    /// Multiplier on the link throughput standard deviation.
    LinkVarianceScale,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub parameter: SweepParameter,
    pub values: Vec<f64>,
    #[serde(default = "one")]
    pub replicates: u64,
    #[serde(default)]
    pub base_seed: u64,
}

fn one() -> u64 {
    1
}

impl SweepSpec {
    pub fn from_toml(text: &str) -> Result<Self, Failure> {
        let spec: SweepSpec = toml::from_str(text).map_err(|e| Failure::Input(anyhow!("sweep spec: {e}")))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn from_path(path: &Path) -> Result<Self, Failure> {
        let text = fs::read_to_string(path)
            .with_context(|| format!("reading sweep spec {}", path.display()))
            .map_err(Failure::Input)?;
        Self::from_toml(&text).map_err(|f| match f {
            Failure::Input(e) => Failure::Input(e.context(path.display().to_string())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<(), Failure> {
        if self.values.is_empty() {
            return Err(Failure::Input(anyhow!("sweep spec: values must not be empty")));
        }
        if self.replicates == 0 {
            return Err(Failure::Input(anyhow!("sweep spec: replicates must be at least 1")));
        }
        Ok(())
    }

    pub fn seed(&self, replicate: u64) -> u64 {
        self.base_seed.wrapping_add(replicate)
    }
}

/// Returns a copy of `base` with the swept parameter set to `value`.
pub fn apply(base: &Scenario, parameter: SweepParameter, value: f64) -> Result<Scenario, Failure> {
    let mut sc = base.clone();
    let invalid = |why: &str| Failure::Input(anyhow!("{parameter:?} = {value}: {why}"));
    if !value.is_finite() {
        return Err(invalid("value must be finite"));
    }
    match parameter {
        SweepParameter::UpdateInterval => {
            if value <= 0.0 {
                return Err(invalid("interval must be positive"));
            }
            sc.t_int = value;
        }
        SweepParameter::PayloadScale => {
            if value < 0.0 {
                return Err(invalid("scale must be non-negative"));
            }
            for p in sc.programs.values_mut() {
                p.input_payload *= value;
                p.output_payload *= value;
            }
        }
        SweepParameter::AltitudeProfile => {
            sc.flight = FlightPlan::hover(value).map_err(|e| Failure::Input(e.into()))?;
        }
        SweepParameter::LinkVarianceScale => {
            if value < 0.0 {
                return Err(invalid("scale must be non-negative"));
            }
            sc.network.radio.variance_scale = value;
        }
    }
    sc.check().map_err(|e| Failure::Input(e.into()))?;
    Ok(sc)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub parameter: SweepParameter,
    pub value: f64,
    pub replicate: u64,
    pub seed: u64,
    pub tasks_total: usize,
    pub tasks_completed: usize,
    pub program_runs: usize,
    pub mean_t_e2e: Option<f64>,
    pub mean_t_comm: Option<f64>,
    pub reported_to_virtual_awareness: Option<f64>,
    pub requests: u64,
    pub responses: u64,
    pub timeouts: u64,
    pub dropped: u64,
    pub end_time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub parameter: SweepParameter,
    pub value: f64,
    pub replicates: usize,
    pub tasks_completed_mean: Option<f64>,
    pub tasks_completed_std: Option<f64>,
    pub mean_t_e2e_mean: Option<f64>,
    pub mean_t_e2e_std: Option<f64>,
    pub mean_t_comm_mean: Option<f64>,
    pub mean_t_comm_std: Option<f64>,
    pub reported_to_virtual_awareness_mean: Option<f64>,
    pub reported_to_virtual_awareness_std: Option<f64>,
}

/// Sample mean and standard deviation (n - 1 denominator, 0 for one value)
/// by Welford's update. Missing values are skipped.
pub fn mean_std(values: impl IntoIterator<Item = Option<f64>>) -> (Option<f64>, Option<f64>) {
    let (mut n, mut mean, mut m2) = (0u64, 0.0f64, 0.0f64);
    for x in values.into_iter().flatten() {
        n += 1;
        let delta = x - mean;
        mean += delta / n as f64;
        m2 += delta * (x - mean);
    }
    match n {
        0 => (None, None),
        1 => (Some(mean), Some(0.0)),
        _ => (Some(mean), Some((m2 / (n - 1) as f64).sqrt())),
    }
}

pub fn aggregate(rows: &[SweepRow]) -> Vec<AggregateRow> {
    let mut out: Vec<AggregateRow> = Vec::new();
    let mut start = 0;
    while start < rows.len() {
        let key = (rows[start].parameter, rows[start].value.to_bits());
        let end = start + rows[start..].iter().take_while(|r| (r.parameter, r.value.to_bits()) == key).count();
        let group = &rows[start..end];
        let (tc_m, tc_s) = mean_std(group.iter().map(|r| Some(r.tasks_completed as f64)));
        let (e2e_m, e2e_s) = mean_std(group.iter().map(|r| r.mean_t_e2e));
        let (comm_m, comm_s) = mean_std(group.iter().map(|r| r.mean_t_comm));
        let (rva_m, rva_s) = mean_std(group.iter().map(|r| r.reported_to_virtual_awareness));
        out.push(AggregateRow {
            parameter: group[0].parameter,
            value: group[0].value,
            replicates: group.len(),
            tasks_completed_mean: tc_m,
            tasks_completed_std: tc_s,
            mean_t_e2e_mean: e2e_m,
            mean_t_e2e_std: e2e_s,
            mean_t_comm_mean: comm_m,
            mean_t_comm_std: comm_s,
            reported_to_virtual_awareness_mean: rva_m,
            reported_to_virtual_awareness_std: rva_s,
        });
        start = end;
    }
    out
}

/// Runs every (value, replicate) pair in parallel. Rows come back ordered by
/// value index then replicate.
pub fn run_sweep(base: &Scenario, spec: &SweepSpec) -> Result<Vec<SweepRow>, Failure> {
    spec.validate()?;
    let scenarios =
        spec.values.iter().map(|&v| apply(base, spec.parameter, v).map(|s| (v, s))).collect::<Result<Vec<_>, _>>()?;
    let jobs: Vec<(usize, u64)> =
        (0..scenarios.len()).flat_map(|i| (0..spec.replicates).map(move |r| (i, r))).collect();
    jobs.par_iter()
        .map(|&(i, replicate)| {
            let (value, sc) = &scenarios[i];
            let seed = spec.seed(replicate);
            let (s, _) = execute(sc.clone(), Some(seed))?;
            Ok(SweepRow {
                parameter: spec.parameter,
                value: *value,
                replicate,
                seed,
                tasks_total: s.tasks_total,
                tasks_completed: s.tasks_completed,
                program_runs: s.program_runs,
                mean_t_e2e: s.mean_t_e2e,
                mean_t_comm: s.mean_t_comm,
                reported_to_virtual_awareness: s.reported_to_virtual_awareness,
                requests: s.counts.requests,
                responses: s.counts.responses,
                timeouts: s.counts.timeouts,
                dropped: s.counts.dropped,
                end_time: s.end_time,
            })
        })
        .collect()
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn cmd_sweep(scenario: &Path, spec: &Path, out: &Path) -> Result<(Vec<SweepRow>, Vec<AggregateRow>), Failure> {
    let base = crate::load_scenario(scenario)?;
    let spec = SweepSpec::from_path(spec)?;
    let rows = run_sweep(&base, &spec)?;
    let agg = aggregate(&rows);
    (|| {
        fs::create_dir_all(out)?;
        write_csv(&out.join(RUNS_CSV), &rows)?;
        write_csv(&out.join(AGGREGATE_CSV), &agg)
    })()
    .map_err(|e: anyhow::Error| Failure::Runtime(e.context(format!("writing sweep outputs to {}", out.display()))))?;
    Ok((rows, agg))
}
