//! Domain types shared across the simulator: mission participants, programs,
//! tasks, the mission timeline and the incident's critical moments.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Server index. Index 0 is always the UAV platform.
pub type NodeId = usize;

/// The UAV platform's server index.
pub const UAV_NODE: NodeId = 0;

/// Upper bound on UAV flight time before the fire engine arrives (20 min).
pub const MAX_BATTERY_BUDGET_S: f64 = 1200.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    /// Aerial platform: drone, 5G device, onboard computer and 360 camera.
    Uav5gp,
    /// Edge computing station riding on the fire engine.
    Ecs,
    /// Ground control station, wired and static.
    Gcs,
}

impl NodeKind {
    /// Default compute capacity in work-units per second.
    ///
    /// Only the ordering GCS > ECS > UAV is meaningful; the magnitudes are
    /// placeholders chosen to keep the reference mission inside one update
    /// interval per program.
    pub fn default_capacity(self) -> f64 {
        match self {
            NodeKind::Uav5gp => 10.0,
            NodeKind::Ecs => 40.0,
            NodeKind::Gcs => 130.0,
        }
    }
}

impl fmt::Display for NodeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NodeKind::Uav5gp => "UAV5GP",
            NodeKind::Ecs => "ECS",
            NodeKind::Gcs => "GCS",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Position {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Position {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn distance(&self, other: &Position) -> f64 {
        ((self.x - other.x).powi(2) + (self.y - other.y).powi(2) + (self.z - other.z).powi(2)).sqrt()
    }

    pub fn offset(&self, v: &Position, dt: f64) -> Position {
        Position::new(self.x + v.x * dt, self.y + v.y * dt, self.z + v.z * dt)
    }
}

/// Identifier of an offloadable program.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ProgramId(pub String);

impl ProgramId {
    pub fn new(id: impl Into<String>) -> Self {
        Self(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ProgramId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for ProgramId {
    fn from(s: &str) -> Self {
        Self(s.to_owned())
    }
}

/// A mission participant and its capabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeProfile {
    pub id: NodeId,
    pub kind: NodeKind,
    /// Work-units per second.
    pub compute_capacity: f64,
    #[serde(default)]
    pub location: Position,
    #[serde(default)]
    pub mobile: bool,
    /// Meters per second; only meaningful for mobile nodes.
    #[serde(default)]
    pub velocity: Position,
    #[serde(default)]
    pub cached_programs: BTreeSet<ProgramId>,
    /// Seconds of remaining flight. Present only for the UAV.
    #[serde(default)]
    pub battery_budget: Option<f64>,
}

impl NodeProfile {
    /// Default profile for a node kind at the origin with no cached programs.
    pub fn default_for(id: NodeId, kind: NodeKind) -> Self {
        let (mobile, battery_budget) = match kind {
            NodeKind::Uav5gp => (true, Some(MAX_BATTERY_BUDGET_S)),
            NodeKind::Ecs => (true, None),
            NodeKind::Gcs => (false, None),
        };
        Self {
            id,
            kind,
            compute_capacity: kind.default_capacity(),
            location: Position::default(),
            mobile,
            velocity: Position::default(),
            cached_programs: BTreeSet::new(),
            battery_budget,
        }
    }

    pub fn with_programs<I, P>(mut self, programs: I) -> Self
    where
        I: IntoIterator<Item = P>,
        P: Into<ProgramId>,
    {
        self.cached_programs = programs.into_iter().map(Into::into).collect();
        self
    }

    /// Location at simulated time `t`, extrapolated from the velocity of a
    /// mobile node.
    pub fn location_at(&self, t: f64) -> Position {
        if self.mobile {
            self.location.offset(&self.velocity, t)
        } else {
            self.location
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NodeViolation {
    #[error("node {0}: server index 0 is reserved for the UAV platform, found {1}")]
    ReservedIndex(NodeId, NodeKind),
    #[error("node {0}: the UAV platform must use server index 0")]
    UavNotAtZero(NodeId),
    #[error("node {0}: compute capacity must be finite and > 0, got {1}")]
    NonPositiveCapacity(NodeId, f64),
    #[error("node {0}: UAV platform requires a battery budget")]
    MissingBattery(NodeId),
    #[error("node {0}: battery budget {1} s exceeds pre-arrival budget of {MAX_BATTERY_BUDGET_S} s")]
    BatteryExceedsBudget(NodeId, f64),
    #[error("node {0}: battery budget must be > 0, got {1}")]
    NonPositiveBattery(NodeId, f64),
    #[error("node {0}: only the UAV platform carries a battery budget")]
    UnexpectedBattery(NodeId),
    #[error("node {0}: duplicate server index")]
    DuplicateId(NodeId),
    #[error("no UAV platform at server index 0")]
    MissingUav,
}

/// Checks a single node against the profile invariants, returning the first
/// violation found.
pub fn validate_node(profile: &NodeProfile) -> Result<(), NodeViolation> {
    let id = profile.id;
    if id == UAV_NODE && profile.kind != NodeKind::Uav5gp {
        return Err(NodeViolation::ReservedIndex(id, profile.kind));
    }
    if id != UAV_NODE && profile.kind == NodeKind::Uav5gp {
        return Err(NodeViolation::UavNotAtZero(id));
    }
    if !(profile.compute_capacity.is_finite() && profile.compute_capacity > 0.0) {
        return Err(NodeViolation::NonPositiveCapacity(id, profile.compute_capacity));
    }
    match (profile.kind, profile.battery_budget) {
        (NodeKind::Uav5gp, None) => Err(NodeViolation::MissingBattery(id)),
        (NodeKind::Uav5gp, Some(b)) if b.is_nan() || b <= 0.0 => Err(NodeViolation::NonPositiveBattery(id, b)),
        (NodeKind::Uav5gp, Some(b)) if b > MAX_BATTERY_BUDGET_S => Err(NodeViolation::BatteryExceedsBudget(id, b)),
        (NodeKind::Ecs | NodeKind::Gcs, Some(_)) => Err(NodeViolation::UnexpectedBattery(id)),
        _ => Ok(()),
    }
}

/// The set of mission participants, indexed by server index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeSet(Vec<NodeProfile>);

impl NodeSet {
    /// Builds a node set, validating every node and the set-level invariant
    /// that exactly one UAV sits at index 0.
    pub fn new(mut nodes: Vec<NodeProfile>) -> Result<Self, NodeViolation> {
        nodes.sort_by_key(|n| n.id);
        for pair in nodes.windows(2) {
            if pair[0].id == pair[1].id {
                return Err(NodeViolation::DuplicateId(pair[0].id));
            }
        }
        for n in &nodes {
            validate_node(n)?;
        }
        if nodes.first().map(|n| n.id) != Some(UAV_NODE) {
            return Err(NodeViolation::MissingUav);
        }
        Ok(Self(nodes))
    }

    /// A UAV, an ECS and a GCS with default profiles at indices 0, 1, 2.
    pub fn default_trio() -> Self {
        Self(vec![
            NodeProfile::default_for(0, NodeKind::Uav5gp),
            NodeProfile::default_for(1, NodeKind::Ecs),
            NodeProfile::default_for(2, NodeKind::Gcs),
        ])
    }

    pub fn get(&self, id: NodeId) -> Option<&NodeProfile> {
        self.0.binary_search_by_key(&id, |n| n.id).ok().map(|i| &self.0[i])
    }

    pub fn uav(&self) -> &NodeProfile {
        &self.0[0]
    }

    pub fn contains(&self, id: NodeId) -> bool {
        self.get(id).is_some()
    }

    pub fn iter(&self) -> impl Iterator<Item = &NodeProfile> {
        self.0.iter()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.0.iter().map(|n| n.id)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    ObjectDetection,
    VrStitching,
    TrajectoryOptimization,
    Other(String),
}

/// Cost model of an offloadable program. Costs are work-units, payloads bits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProgramSpec {
    pub id: ProgramId,
    pub task_kind: TaskKind,
    pub compute_cost: f64,
    pub input_payload: f64,
    pub output_payload: f64,
    #[serde(default)]
    pub encode_cost: f64,
    #[serde(default)]
    pub decode_cost: f64,
    /// Node that consumes the result. Defaults to the UAV.
    #[serde(default)]
    pub consumer: Option<NodeId>,
}

impl ProgramSpec {
    pub fn consumer(&self) -> NodeId {
        self.consumer.unwrap_or(UAV_NODE)
    }

    /// A result delivered to a remote consumer gives the agency first-hand
    /// awareness of the site.
    pub fn is_monitoring(&self) -> bool {
        self.consumer() != UAV_NODE
    }

    pub fn check(&self) -> Result<(), String> {
        let fields = [
            ("compute_cost", self.compute_cost),
            ("input_payload", self.input_payload),
            ("output_payload", self.output_payload),
            ("encode_cost", self.encode_cost),
            ("decode_cost", self.decode_cost),
        ];
        for (name, v) in fields {
            if !(v.is_finite() && v >= 0.0) {
                return Err(format!("program {}: {name} must be finite and >= 0, got {v}", self.id));
            }
        }
        Ok(())
    }
}

pub type TaskId = String;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskOrigin {
    CommanderOrder,
    TimelineImplied,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Task {
    pub id: TaskId,
    pub required_programs: Vec<ProgramId>,
    pub origin: TaskOrigin,
    pub issue_time: f64,
}

impl Task {
    pub fn new(
        id: impl Into<TaskId>,
        required_programs: Vec<ProgramId>,
        origin: TaskOrigin,
        issue_time: f64,
    ) -> Result<Self, String> {
        let id = id.into();
        if required_programs.is_empty() {
            return Err(format!("task {id}: required_programs must be non-empty"));
        }
        Ok(Self { id, required_programs, origin, issue_time })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Moment {
    Start,
    Observed,
    Reported,
    VirtualAwareness,
    PhysicalAwareness,
    Termination,
}

impl Moment {
    pub const ALL: [Moment; 6] = [
        Moment::Start,
        Moment::Observed,
        Moment::Reported,
        Moment::VirtualAwareness,
        Moment::PhysicalAwareness,
        Moment::Termination,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Moment::Start => "start",
            Moment::Observed => "observed",
            Moment::Reported => "reported",
            Moment::VirtualAwareness => "virtual_awareness",
            Moment::PhysicalAwareness => "physical_awareness",
            Moment::Termination => "termination",
        }
    }
}

impl fmt::Display for Moment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MomentError {
    #[error("{0} is already set")]
    AlreadySet(Moment),
    #[error("{moment} at {t} s violates ordering against {other} at {other_t} s")]
    OrderingViolation { moment: Moment, t: f64, other: Moment, other_t: f64 },
    #[error("{0} timestamp must be finite and >= 0, got {1}")]
    InvalidTime(Moment, f64),
}

/// Pairs (earlier, later) that must hold whenever both are set. This is the
/// transitive closure of start <= observed <= reported, reported <= each
/// awareness moment, and everything <= termination.
const ORDERING: [(Moment, Moment); 14] = [
    (Moment::Start, Moment::Observed),
    (Moment::Start, Moment::Reported),
    (Moment::Observed, Moment::Reported),
    (Moment::Start, Moment::VirtualAwareness),
    (Moment::Observed, Moment::VirtualAwareness),
    (Moment::Reported, Moment::VirtualAwareness),
    (Moment::Start, Moment::PhysicalAwareness),
    (Moment::Observed, Moment::PhysicalAwareness),
    (Moment::Reported, Moment::PhysicalAwareness),
    (Moment::Start, Moment::Termination),
    (Moment::Observed, Moment::Termination),
    (Moment::Reported, Moment::Termination),
    (Moment::VirtualAwareness, Moment::Termination),
    (Moment::PhysicalAwareness, Moment::Termination),
];

/// Critical moments of an incident, each an optional timestamp in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CriticalMoments {
    pub start: Option<f64>,
    pub observed: Option<f64>,
    pub reported: Option<f64>,
    pub virtual_awareness: Option<f64>,
    pub physical_awareness: Option<f64>,
    pub termination: Option<f64>,
}

impl CriticalMoments {
    pub fn get(&self, which: Moment) -> Option<f64> {
        match which {
            Moment::Start => self.start,
            Moment::Observed => self.observed,
            Moment::Reported => self.reported,
            Moment::VirtualAwareness => self.virtual_awareness,
            Moment::PhysicalAwareness => self.physical_awareness,
            Moment::Termination => self.termination,
        }
    }

    fn slot(&mut self, which: Moment) -> &mut Option<f64> {
        match which {
            Moment::Start => &mut self.start,
            Moment::Observed => &mut self.observed,
            Moment::Reported => &mut self.reported,
            Moment::VirtualAwareness => &mut self.virtual_awareness,
            Moment::PhysicalAwareness => &mut self.physical_awareness,
            Moment::Termination => &mut self.termination,
        }
    }

    /// Sets `which` to `t`, refusing anything that would break the ordering
    /// invariants. On error `self` is left untouched.
    pub fn record(&mut self, which: Moment, t: f64) -> Result<(), MomentError> {
        if !(t.is_finite() && t >= 0.0) {
            return Err(MomentError::InvalidTime(which, t));
        }
        if self.get(which).is_some() {
            return Err(MomentError::AlreadySet(which));
        }
        for (earlier, later) in ORDERING {
            let violation = if earlier == which {
                self.get(later).filter(|&l| t > l).map(|l| (later, l))
            } else if later == which {
                self.get(earlier).filter(|&e| e > t).map(|e| (earlier, e))
            } else {
                None
            };
            if let Some((other, other_t)) = violation {
                return Err(MomentError::OrderingViolation { moment: which, t, other, other_t });
            }
        }
        *self.slot(which) = Some(t);
        Ok(())
    }

    /// Seconds between two moments, when both are set.
    pub fn duration(&self, from: Moment, to: Moment) -> Option<f64> {
        Some(self.get(to)? - self.get(from)?)
    }

    pub fn is_consistent(&self) -> bool {
        ORDERING.iter().all(|&(e, l)| match (self.get(e), self.get(l)) {
            (Some(a), Some(b)) => a <= b,
            _ => true,
        })
    }

    pub fn all_set(&self) -> bool {
        Moment::ALL.iter().all(|&m| self.get(m).is_some())
    }
}

/// Functional form of [`CriticalMoments::record`].
pub fn record_moment(moments: CriticalMoments, which: Moment, t: f64) -> Result<CriticalMoments, MomentError> {
    let mut next = moments;
    next.record(which, t)?;
    Ok(next)
}

/// A mission phase and the task kinds it implies each update tick.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Phase {
    pub id: String,
    #[serde(default)]
    pub implied: Vec<TaskKind>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissionTimeline {
    phases: Vec<Phase>,
    t_pos: usize,
    pub moments: CriticalMoments,
}

impl MissionTimeline {
    pub fn new(phases: Vec<Phase>) -> Result<Self, String> {
        if phases.is_empty() {
            return Err("timeline needs at least one phase".into());
        }
        Ok(Self { phases, t_pos: 0, moments: CriticalMoments::default() })
    }

    pub fn t_pos(&self) -> usize {
        self.t_pos
    }

    pub fn phases(&self) -> &[Phase] {
        &self.phases
    }

    pub fn current(&self) -> &Phase {
        &self.phases[self.t_pos]
    }

    pub fn is_last_phase(&self) -> bool {
        self.t_pos + 1 == self.phases.len()
    }

    /// Moves to the next phase. Returns false when already at the last phase.
    pub fn advance(&mut self) -> bool {
        if self.is_last_phase() {
            false
        } else {
            self.t_pos += 1;
            true
        }
    }
}
