//! End-to-end latency of the capture/compute pipeline as the sum of encode,
//! communication, decode and processing time for a given placement.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::{ChannelError, FlightState, HopSample, Network};
use crate::model::{NodeId, NodeProfile, NodeSet, ProgramSpec, UAV_NODE};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
}

/// Where data originates, where it is processed, and who uses the result.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PipelinePlacement {
    pub source: NodeId,
    pub executor: NodeId,
    pub consumer: NodeId,
}

impl PipelinePlacement {
    pub const fn new(source: NodeId, executor: NodeId, consumer: NodeId) -> Self {
        Self { source, executor, consumer }
    }

    /// Offload from the UAV to `executor`, results returned to `consumer`.
    pub const fn offload(executor: NodeId, consumer: NodeId) -> Self {
        Self::new(UAV_NODE, executor, consumer)
    }

    pub fn is_local(&self) -> bool {
        self.source == self.executor && self.executor == self.consumer
    }
}

/// Seconds spent in each pipeline stage. `t_e2e` is always the sum of the
/// four terms, computed left to right.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LatencyBreakdown {
    pub t_enc: f64,
    pub t_comm: f64,
    pub t_dec: f64,
    pub t_proc: f64,
    pub t_e2e: f64,
}

impl LatencyBreakdown {
    pub fn new(t_enc: f64, t_comm: f64, t_dec: f64, t_proc: f64) -> Self {
        Self { t_enc, t_comm, t_dec, t_proc, t_e2e: t_enc + t_comm + t_dec + t_proc }
    }

    pub fn local(t_proc: f64) -> Self {
        Self::new(0.0, 0.0, 0.0, t_proc)
    }
}

/// Linear service time of `cost` work-units on `node`.
pub fn stage_time(cost: f64, node: &NodeProfile) -> f64 {
    cost / node.compute_capacity
}

/// A breakdown together with the link samples that produced its `t_comm`.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluated {
    pub breakdown: LatencyBreakdown,
    pub hops: Vec<HopSample>,
}

fn node(nodes: &NodeSet, id: NodeId) -> Result<&NodeProfile, PipelineError> {
    nodes.get(id).ok_or(PipelineError::UnknownNode(id))
}

/// Latency of running `program` under `placement`, with transfers starting at
/// `t` and the UAV in `flight`.
pub fn e2e_latency(
    program: &ProgramSpec,
    placement: PipelinePlacement,
    nodes: &NodeSet,
    net: &Network,
    t: f64,
    flight: FlightState,
) -> Result<LatencyBreakdown, PipelineError> {
    Ok(evaluate(program, placement, nodes, net, t, flight)?.breakdown)
}

/// As [`e2e_latency`], also reporting each sampled hop.
pub fn evaluate(
    program: &ProgramSpec,
    placement: PipelinePlacement,
    nodes: &NodeSet,
    net: &Network,
    t: f64,
    flight: FlightState,
) -> Result<Evaluated, PipelineError> {
    let source = node(nodes, placement.source)?;
    let executor = node(nodes, placement.executor)?;
    node(nodes, placement.consumer)?;

    let t_proc = stage_time(program.compute_cost, executor);
    if placement.is_local() {
        return Ok(Evaluated { breakdown: LatencyBreakdown::local(t_proc), hops: Vec::new() });
    }

    let t_enc = stage_time(program.encode_cost, source);
    let t_dec = stage_time(program.decode_cost, executor);
    let mut t_comm = 0.0;
    let mut hops = Vec::with_capacity(2);
    let legs = [
        (placement.source, placement.executor, program.input_payload),
        (placement.executor, placement.consumer, program.output_payload),
    ];
    for (from, to, payload) in legs {
        if let Some((secs, hop)) = net.hop(from, to, payload, t, flight)? {
            t_comm += secs;
            hops.push(hop);
        }
    }
    Ok(Evaluated { breakdown: LatencyBreakdown::new(t_enc, t_comm, t_dec, t_proc), hops })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum StreamLatencyClass {
    /// Under one second.
    UltraLow,
    /// Under five seconds.
    Low,
    NotLow,
}

pub fn classify_stream_latency(t_e2e: f64) -> StreamLatencyClass {
    if t_e2e < 1.0 {
        StreamLatencyClass::UltraLow
    } else if t_e2e < 5.0 {
        StreamLatencyClass::Low
    } else {
        StreamLatencyClass::NotLow
    }
}
