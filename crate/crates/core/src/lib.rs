//! Discrete-event simulation of UAV computation offloading over an aerial 5G link.

pub mod channel;
pub mod engine;
pub mod model;
pub mod output;
pub mod pipeline;
pub mod policy;
pub mod protocol;
pub mod scenario;

pub use channel::{Band, Direction, FlightState, LinkModel, Network};
pub use engine::{run, MetricsRecord, RunOutput, TraceRecord};
pub use model::{NodeId, NodeKind, NodeProfile, NodeSet, ProgramId, ProgramSpec, Task, UAV_NODE};
pub use pipeline::{e2e_latency, LatencyBreakdown, PipelinePlacement};
pub use policy::{select_server, OffloadDecision, ProgramTables};
pub use protocol::ProtocolState;
pub use scenario::Scenario;
