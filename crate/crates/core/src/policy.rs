//! Offloading policy: match a task's programs against the servers' program
//! tables, then place each program on the server with the smallest predicted
//! end-to-end latency.
//!
//! Candidate sets are small (a handful of servers), so selection is exact
//! enumeration. Predictions use the mean channel so that the same inputs
//! always yield the same decision.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::{FlightState, Network};
use crate::model::{NodeId, NodeSet, ProgramId, ProgramSpec, Task, UAV_NODE};
use crate::pipeline::{e2e_latency, LatencyBreakdown, PipelineError, PipelinePlacement};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PolicyError {
    #[error("no capable server for program {0}")]
    NoCapableServer(ProgramId),
    #[error("empty candidate list for program {0}")]
    NoCandidates(ProgramId),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
}

/// One row of a server's program table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProgramTableEntry {
    pub server_id: NodeId,
    pub program_id: ProgramId,
    #[serde(default = "default_true")]
    pub capable: bool,
    /// The server's own estimate of decode plus processing time, seconds.
    #[serde(default)]
    pub advertised_latency: f64,
}

fn default_true() -> bool {
    true
}

/// All servers' program tables, keyed by program then server.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ProgramTables {
    by_program: BTreeMap<ProgramId, BTreeMap<NodeId, ProgramTableEntry>>,
}

impl ProgramTables {
    pub fn new<I: IntoIterator<Item = ProgramTableEntry>>(entries: I) -> Result<Self, String> {
        let mut tables = Self::default();
        for e in entries {
            tables.insert(e)?;
        }
        Ok(tables)
    }

    pub fn insert(&mut self, entry: ProgramTableEntry) -> Result<(), String> {
        if !(entry.advertised_latency.is_finite() && entry.advertised_latency >= 0.0) {
            return Err(format!(
                "table entry ({}, {}): advertised_latency must be >= 0",
                entry.server_id, entry.program_id
            ));
        }
        let slot = self.by_program.entry(entry.program_id.clone()).or_default();
        if slot.contains_key(&entry.server_id) {
            return Err(format!("duplicate table entry ({}, {})", entry.server_id, entry.program_id));
        }
        slot.insert(entry.server_id, entry);
        Ok(())
    }

    pub fn entries(&self) -> impl Iterator<Item = &ProgramTableEntry> {
        self.by_program.values().flat_map(|m| m.values())
    }

    pub fn get(&self, program: &ProgramId, server: NodeId) -> Option<&ProgramTableEntry> {
        self.by_program.get(program)?.get(&server)
    }
}

/// A server able to run a program.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub server: NodeId,
    /// Table-advertised decode plus processing time; `None` for the UAV's
    /// own cache.
    pub advertised_latency: Option<f64>,
}

/// Capable servers for one program, ordered by server index. The UAV is a
/// candidate exactly when the program is in its cache; table rows for index 0
/// are ignored.
pub fn candidates_for(program: &ProgramId, tables: &ProgramTables, nodes: &NodeSet) -> Vec<Candidate> {
    let mut out = Vec::new();
    if nodes.uav().cached_programs.contains(program) {
        out.push(Candidate { server: UAV_NODE, advertised_latency: None });
    }
    if let Some(rows) = tables.by_program.get(program) {
        out.extend(
            rows.values()
                .filter(|e| e.capable && e.server_id != UAV_NODE)
                .map(|e| Candidate { server: e.server_id, advertised_latency: Some(e.advertised_latency) }),
        );
    }
    out
}

/// Candidate lists for each of a task's required programs, in task order.
pub fn match_programs(
    task: &Task,
    tables: &ProgramTables,
    nodes: &NodeSet,
) -> Result<Vec<(ProgramId, Vec<Candidate>)>, PolicyError> {
    task.required_programs
        .iter()
        .map(|p| {
            let c = candidates_for(p, tables, nodes);
            if c.is_empty() {
                Err(PolicyError::NoCapableServer(p.clone()))
            } else {
                Ok((p.clone(), c))
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OffloadDecision {
    pub program_id: ProgramId,
    pub chosen_server: NodeId,
    pub predicted: LatencyBreakdown,
    pub candidates_considered: usize,
}

/// Predicted breakdown for running `program` on `candidate`. A server without
/// a known compute profile falls back to its advertised latency for the
/// decode and processing stages.
pub fn predict(
    program: &ProgramSpec,
    candidate: &Candidate,
    nodes: &NodeSet,
    net: &Network,
    t: f64,
    flight: FlightState,
) -> Result<LatencyBreakdown, PolicyError> {
    let placement = PipelinePlacement::offload(candidate.server, program.consumer());
    match (nodes.contains(candidate.server), candidate.advertised_latency) {
        (true, _) => Ok(e2e_latency(program, placement, nodes, net, t, flight)?),
        (false, Some(advertised)) => {
            let t_enc = crate::pipeline::stage_time(program.encode_cost, nodes.uav());
            let mut t_comm = 0.0;
            for (from, to, bits) in [
                (placement.source, placement.executor, program.input_payload),
                (placement.executor, placement.consumer, program.output_payload),
            ] {
                if let Some((secs, _)) = net.hop(from, to, bits, t, flight).map_err(PipelineError::from)? {
                    t_comm += secs;
                }
            }
            Ok(LatencyBreakdown::new(t_enc, t_comm, 0.0, advertised))
        }
        (false, None) => Err(PipelineError::UnknownNode(candidate.server).into()),
    }
}

/// Total order used to pick the winner: predicted end-to-end latency, then
/// communication time, then server index.
fn rank(a: &(NodeId, LatencyBreakdown), b: &(NodeId, LatencyBreakdown)) -> Ordering {
    a.1.t_e2e.total_cmp(&b.1.t_e2e).then(a.1.t_comm.total_cmp(&b.1.t_comm)).then(a.0.cmp(&b.0))
}

/// Picks the candidate with minimal predicted latency.
pub fn select_server(
    program: &ProgramSpec,
    candidates: &[Candidate],
    nodes: &NodeSet,
    net: &Network,
    t: f64,
    flight: FlightState,
) -> Result<OffloadDecision, PolicyError> {
    let mean = net.mean_only();
    let mut scored = Vec::with_capacity(candidates.len());
    for c in candidates {
        scored.push((c.server, predict(program, c, nodes, &mean, t, flight)?));
    }
    let (chosen_server, predicted) = scored
        .iter()
        .min_by(|a, b| rank(a, b))
        .copied()
        .ok_or_else(|| PolicyError::NoCandidates(program.id.clone()))?;
    Ok(OffloadDecision {
        program_id: program.id.clone(),
        chosen_server,
        predicted,
        candidates_considered: candidates.len(),
    })
}

/// Drops `excluded` servers from a candidate list.
pub fn exclude(candidates: Vec<Candidate>, excluded: &BTreeSet<NodeId>) -> Vec<Candidate> {
    candidates.into_iter().filter(|c| !excluded.contains(&c.server)).collect()
}
