//! Scenario documents: TOML in, validated [`Scenario`] out.
//!
//! The schema is documented in `docs/scenario.md`. Every cross reference
//! (program ids, server indices, predicate programs) is resolved at load time
//! so a loaded scenario can be run without further checks.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::{default_link_params, Backhaul, Band, FlightState, LinkModel, Network, MAX_MEASURED_ALTITUDE_M};
use crate::model::{
    CriticalMoments, Moment, NodeId, NodeProfile, NodeSet, Phase, Position, ProgramId, ProgramSpec, Task, TaskOrigin,
    UAV_NODE,
};
use crate::policy::{ProgramTableEntry, ProgramTables};
use crate::protocol::{CompletionPredicate, DEFAULT_UPDATE_INTERVAL_S};

/// The bundled urban fire reference mission.
pub const URBAN_FIRE: &str = include_str!("../scenarios/urban-fire.toml");

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("schema error at `{path}`: {message}")]
    Schema { path: String, message: String },
    #[error("dangling reference: {0}")]
    DanglingReference(String),
    #[error("invariant violation: {0}")]
    InvariantViolation(String),
}

fn invariant(msg: impl Into<String>) -> ScenarioError {
    ScenarioError::InvariantViolation(msg.into())
}

fn dangling(msg: impl Into<String>) -> ScenarioError {
    ScenarioError::DanglingReference(msg.into())
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioMetadata {
    /// Ground distance between the UAV site and the gNB, meters.
    pub gnb_ground_distance_m: Option<f64>,
    /// gNB antenna height above ground, meters.
    pub gnb_height_m: Option<f64>,
    /// Incident origin.
    pub origin: Option<Position>,
    /// Radius of the affected volume, meters. Descriptive only.
    pub problem_range_m: Option<f64>,
    pub notes: Option<String>,
}

/// Incident moments known before the mission starts, plus the scripted fire
/// engine arrival.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Incident {
    pub start: f64,
    pub observed: f64,
    pub reported: f64,
    pub truck_arrival: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Waypoint {
    pub t: f64,
    pub altitude: f64,
    #[serde(default)]
    pub rotating: bool,
}

/// Piecewise flight profile: altitude interpolates linearly between
/// waypoints, rotation is a step flag taken from the latest waypoint.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FlightPlan(Vec<Waypoint>);

impl FlightPlan {
    pub fn new(waypoints: Vec<Waypoint>) -> Result<Self, ScenarioError> {
        for w in &waypoints {
            if !(w.t.is_finite() && w.t >= 0.0) {
                return Err(invariant(format!("waypoint time {} must be >= 0", w.t)));
            }
            if !(0.0..=MAX_MEASURED_ALTITUDE_M).contains(&w.altitude) {
                return Err(invariant(format!(
                    "waypoint altitude {} m at t={} s outside measured range [0, {MAX_MEASURED_ALTITUDE_M}] m",
                    w.altitude, w.t
                )));
            }
        }
        if waypoints.windows(2).any(|p| p[1].t < p[0].t) {
            return Err(invariant("waypoint times must be non-decreasing"));
        }
        Ok(Self(waypoints))
    }

    /// Constant hover at one altitude.
    pub fn hover(altitude: f64) -> Result<Self, ScenarioError> {
        Self::new(vec![Waypoint { t: 0.0, altitude, rotating: false }])
    }

    pub fn waypoints(&self) -> &[Waypoint] {
        &self.0
    }

    pub fn state_at(&self, t: f64) -> FlightState {
        let w = &self.0;
        let Some(first) = w.first() else {
            return FlightState::hover(0.0);
        };
        // Index of the last waypoint at or before t.
        let idx = w.partition_point(|p| p.t <= t);
        if idx == 0 {
            return FlightState { altitude: first.altitude, rotating: first.rotating };
        }
        let a = &w[idx - 1];
        match w.get(idx) {
            Some(b) if b.t > a.t => {
                let frac = (t - a.t) / (b.t - a.t);
                FlightState { altitude: a.altitude + (b.altitude - a.altitude) * frac, rotating: a.rotating }
            }
            _ => FlightState { altitude: a.altitude, rotating: a.rotating },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Fault {
    #[serde(default)]
    pub loss_probability: f64,
    #[serde(default)]
    pub unreachable: bool,
}

/// A fully validated scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub seed: u64,
    /// Run length from incident start, seconds.
    pub duration: f64,
    pub t_int: f64,
    /// Time of the first update tick (UAV on site).
    pub epoch: f64,
    pub metadata: ScenarioMetadata,
    pub incident: Incident,
    pub nodes: NodeSet,
    pub network: Network,
    pub programs: BTreeMap<ProgramId, ProgramSpec>,
    pub tables: ProgramTables,
    pub tasks: Vec<Task>,
    pub flight: FlightPlan,
    pub phases: Vec<Phase>,
    /// `predicates[i]` completes `phases[i]`.
    pub predicates: Vec<CompletionPredicate>,
    pub faults: BTreeMap<NodeId, Fault>,
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Self, ScenarioError> {
        let de = toml::Deserializer::parse(text)
            .map_err(|e| ScenarioError::Schema { path: "<document>".into(), message: e.to_string() })?;
        let doc: ScenarioDoc = serde_path_to_error::deserialize(de)
            .map_err(|e| ScenarioError::Schema { path: e.path().to_string(), message: e.inner().to_string() })?;
        doc.validate()
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, ScenarioError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|source| ScenarioError::Io { path: path.display().to_string(), source })?;
        Self::from_toml(&text)
    }

    pub fn reference() -> Self {
        Self::from_toml(URBAN_FIRE).expect("bundled reference scenario is valid")
    }

    /// Replaces the run seed, including the link noise seed.
    pub fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.network.radio.noise_seed = seed;
    }

    /// Flight state at `t`, holding the last waypoint after the plan ends.
    pub fn flight_state_at(&self, t: f64) -> FlightState {
        self.flight.state_at(t)
    }

    /// Re-checks the scenario-level invariants after programmatic edits.
    pub fn check(&self) -> Result<(), ScenarioError> {
        check_scalars(self.duration, self.t_int, self.epoch)?;
        let battery = self.nodes.uav().battery_budget.unwrap_or(0.0);
        if self.duration > battery {
            return Err(invariant(format!("duration {} s exceeds UAV battery budget {battery} s", self.duration)));
        }
        if self.phases.len() != self.predicates.len() || self.phases.is_empty() {
            return Err(invariant("each phase needs exactly one completion predicate"));
        }
        self.network.radio.validate().map_err(|e| invariant(e.to_string()))?;
        Ok(())
    }
}

fn check_scalars(duration: f64, t_int: f64, epoch: f64) -> Result<(), ScenarioError> {
    if !(duration.is_finite() && duration > 0.0) {
        return Err(invariant(format!("duration must be > 0, got {duration}")));
    }
    if !(t_int.is_finite() && t_int > 0.0) {
        return Err(invariant(format!("t_int must be > 0, got {t_int}")));
    }
    if !(epoch.is_finite() && epoch >= 0.0 && epoch <= duration) {
        return Err(invariant(format!("epoch must lie in [0, duration], got {epoch}")));
    }
    Ok(())
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioDoc {
    name: String,
    #[serde(default)]
    seed: u64,
    duration: f64,
    t_int: Option<f64>,
    #[serde(default)]
    epoch: f64,
    #[serde(default)]
    metadata: ScenarioMetadata,
    incident: Incident,
    nodes: Vec<NodeProfile>,
    #[serde(default)]
    link: LinkDoc,
    #[serde(default)]
    backhaul: Option<Backhaul>,
    #[serde(default)]
    programs: Vec<ProgramSpec>,
    #[serde(default)]
    tables: Vec<ProgramTableEntry>,
    #[serde(default)]
    tasks: Vec<TaskDoc>,
    #[serde(default)]
    flight: Vec<Waypoint>,
    #[serde(default)]
    phases: Vec<PhaseDoc>,
    #[serde(default)]
    faults: Vec<FaultDoc>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct LinkDoc {
    floor_mbps: Option<f64>,
    variance_scale: Option<f64>,
    one_way_delay_ms: Option<f64>,
    low: Option<BandDoc>,
    high: Option<BandDoc>,
    rotation: Option<BandDoc>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct BandDoc {
    dl_mean: Option<f64>,
    ul_mean: Option<f64>,
    rtt_mean: Option<f64>,
    dl_std: Option<f64>,
    ul_std: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TaskDoc {
    id: String,
    programs: Vec<ProgramId>,
    issue_time: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PhaseDoc {
    id: String,
    #[serde(default)]
    implied: Vec<crate::model::TaskKind>,
    complete_when: CompletionPredicate,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct FaultDoc {
    server: NodeId,
    #[serde(default)]
    loss_probability: f64,
    #[serde(default)]
    unreachable: bool,
}

impl LinkDoc {
    fn build(&self, seed: u64) -> Result<LinkModel, ScenarioError> {
        let mut link = LinkModel::new(default_link_params(), seed);
        for (band, doc) in
            [(Band::LowAltitude, &self.low), (Band::HighAltitude, &self.high), (Band::Rotation, &self.rotation)]
        {
            let Some(doc) = doc else { continue };
            let p = link.params_mut(band);
            let fields = [
                (&mut p.dl_mean, doc.dl_mean),
                (&mut p.ul_mean, doc.ul_mean),
                (&mut p.rtt_mean, doc.rtt_mean),
                (&mut p.dl_std, doc.dl_std),
                (&mut p.ul_std, doc.ul_std),
            ];
            for (slot, v) in fields {
                if let Some(v) = v {
                    *slot = v;
                }
            }
        }
        if let Some(f) = self.floor_mbps {
            link.floor_mbps = f;
        }
        if let Some(v) = self.variance_scale {
            link.variance_scale = v;
        }
        link.one_way_delay_override = self.one_way_delay_ms;
        link.validate().map_err(|e| invariant(e.to_string()))?;
        Ok(link)
    }
}

impl ScenarioDoc {
    fn validate(self) -> Result<Scenario, ScenarioError> {
        let t_int = self.t_int.unwrap_or(DEFAULT_UPDATE_INTERVAL_S);
        check_scalars(self.duration, t_int, self.epoch)?;

        let mut moments = CriticalMoments::default();
        for (m, t) in [
            (Moment::Start, self.incident.start),
            (Moment::Observed, self.incident.observed),
            (Moment::Reported, self.incident.reported),
        ] {
            moments.record(m, t).map_err(|e| invariant(format!("incident: {e}")))?;
        }
        if self.epoch < self.incident.reported {
            return Err(invariant("epoch must not precede the reported moment"));
        }
        if let Some(arrival) = self.incident.truck_arrival {
            if !(arrival >= self.incident.reported && arrival.is_finite()) {
                return Err(invariant(format!("truck arrival {arrival} s precedes the report")));
            }
        }

        let nodes = NodeSet::new(self.nodes).map_err(|e| invariant(e.to_string()))?;
        let battery = nodes.uav().battery_budget.unwrap_or(0.0);
        if self.duration > battery {
            return Err(invariant(format!("duration {} s exceeds UAV battery budget {battery} s", self.duration)));
        }

        let mut programs = BTreeMap::new();
        for p in self.programs {
            p.check().map_err(invariant)?;
            if let Some(c) = p.consumer {
                if !nodes.contains(c) {
                    return Err(dangling(format!("program {} consumer {c}", p.id)));
                }
            }
            if programs.contains_key(&p.id) {
                return Err(invariant(format!("duplicate program id {}", p.id)));
            }
            programs.insert(p.id.clone(), p);
        }
        let known = |p: &ProgramId, ctx: &str| {
            if programs.contains_key(p) {
                Ok(())
            } else {
                Err(dangling(format!("{ctx} references unknown program {p}")))
            }
        };
        for n in nodes.iter() {
            for p in &n.cached_programs {
                known(p, &format!("node {} cache", n.id))?;
            }
        }
        for e in &self.tables {
            known(&e.program_id, "program table")?;
            if !nodes.contains(e.server_id) {
                return Err(dangling(format!("program table server {}", e.server_id)));
            }
        }
        let tables = ProgramTables::new(self.tables).map_err(invariant)?;

        let mut tasks = Vec::with_capacity(self.tasks.len());
        let mut task_ids = BTreeSet::new();
        for t in self.tasks {
            for p in &t.programs {
                known(p, &format!("task {}", t.id))?;
            }
            if !(t.issue_time.is_finite() && (0.0..=self.duration).contains(&t.issue_time)) {
                return Err(invariant(format!("task {} issue time {} outside run", t.id, t.issue_time)));
            }
            if !task_ids.insert(t.id.clone()) {
                return Err(invariant(format!("duplicate task id {}", t.id)));
            }
            tasks.push(Task::new(t.id, t.programs, TaskOrigin::CommanderOrder, t.issue_time).map_err(invariant)?);
        }
        tasks.sort_by(|a, b| a.issue_time.total_cmp(&b.issue_time));

        let flight = FlightPlan::new(self.flight)?;

        let (phases, predicates) = if self.phases.is_empty() {
            (vec![Phase { id: "mission".into(), implied: vec![] }], vec![CompletionPredicate::Never])
        } else {
            let mut phases = Vec::new();
            let mut preds = Vec::new();
            for ph in self.phases {
                for p in ph.complete_when.programs() {
                    known(p, &format!("phase {} predicate", ph.id))?;
                }
                phases.push(Phase { id: ph.id, implied: ph.implied });
                preds.push(ph.complete_when);
            }
            (phases, preds)
        };

        let mut faults = BTreeMap::new();
        for f in self.faults {
            if f.server == UAV_NODE || !nodes.contains(f.server) {
                return Err(dangling(format!("fault server {}", f.server)));
            }
            if !(0.0..=1.0).contains(&f.loss_probability) {
                return Err(invariant(format!("loss probability {} outside [0, 1]", f.loss_probability)));
            }
            faults.insert(f.server, Fault { loss_probability: f.loss_probability, unreachable: f.unreachable });
        }

        let mut network = Network::new(self.link.build(self.seed)?);
        if let Some(b) = self.backhaul {
            if !(b.rate_mbps > 0.0 && b.delay_ms >= 0.0 && b.rate_mbps.is_finite() && b.delay_ms.is_finite()) {
                return Err(invariant("backhaul needs rate > 0 and delay >= 0"));
            }
            network.backhaul = b;
        }

        Ok(Scenario {
            name: self.name,
            seed: self.seed,
            duration: self.duration,
            t_int,
            epoch: self.epoch,
            metadata: self.metadata,
            incident: self.incident,
            nodes,
            network,
            programs,
            tables,
            tasks,
            flight,
            phases,
            predicates,
            faults,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
name = "minimal"
duration = 10.0
[incident]
start = 0.0
observed = 0.0
reported = 0.0
[[nodes]]
id = 0
kind = "uav5gp"
compute_capacity = 10.0
battery_budget = 600.0
"#;

    #[test]
    fn reference_scenario_loads() {
        let s = Scenario::reference();
        assert_eq!(s.name, "urban-fire");
        assert_eq!(s.nodes.len(), 3);
        assert_eq!(s.metadata.gnb_ground_distance_m, Some(58.9));
        assert_eq!(s.metadata.gnb_height_m, Some(26.5));
        assert!(s.duration <= 1200.0);
    }

    #[test]
    fn minimal_scenario_defaults() {
        let s = Scenario::from_toml(MINIMAL).unwrap();
        assert_eq!(s.t_int, 1.0);
        assert!(s.tasks.is_empty());
        assert_eq!(s.phases.len(), 1);
        assert_eq!(s.network.radio.bands, default_link_params());
    }

    #[test]
    fn altitude_above_measured_range_rejected() {
        let doc = format!("{MINIMAL}\n[[flight]]\nt = 0.0\naltitude = 120.0\n");
        let err = Scenario::from_toml(&doc).unwrap_err();
        assert!(matches!(err, ScenarioError::InvariantViolation(ref m) if m.contains("120")), "{err}");
    }

    #[test]
    fn schema_error_reports_path() {
        let doc = MINIMAL.replace("compute_capacity = 10.0", "compute_capacity = \"fast\"");
        match Scenario::from_toml(&doc).unwrap_err() {
            ScenarioError::Schema { path, .. } => assert_eq!(path, "nodes[0].compute_capacity"),
            other => panic!("unexpected {other}"),
        }
        let doc = format!("{MINIMAL}\nbogus = 1\n");
        assert!(matches!(Scenario::from_toml(&doc), Err(ScenarioError::Schema { .. })));
    }

    #[test]
    fn dangling_program_reference() {
        let doc = format!("{MINIMAL}\n[[tasks]]\nid = \"t\"\nprograms = [\"ghost\"]\nissue_time = 1.0\n");
        assert!(matches!(Scenario::from_toml(&doc), Err(ScenarioError::DanglingReference(_))));
    }

    #[test]
    fn dangling_table_server() {
        let doc = format!(
            "{MINIMAL}\n[[programs]]\nid = \"p\"\ntask_kind = \"object_detection\"\ncompute_cost = 1.0\ninput_payload = 1.0\noutput_payload = 1.0\n[[tables]]\nserver_id = 4\nprogram_id = \"p\"\n"
        );
        assert!(matches!(Scenario::from_toml(&doc), Err(ScenarioError::DanglingReference(_))));
    }

    #[test]
    fn duration_beyond_battery_rejected() {
        let doc = MINIMAL.replace("duration = 10.0", "duration = 700.0");
        assert!(matches!(Scenario::from_toml(&doc), Err(ScenarioError::InvariantViolation(_))));
    }

    #[test]
    fn link_overrides_apply() {
        let doc = format!("{MINIMAL}\n[link]\nvariance_scale = 0.0\n[link.high]\nul_mean = 20.0\n");
        let s = Scenario::from_toml(&doc).unwrap();
        assert_eq!(s.network.radio.params(Band::HighAltitude).ul_mean, 20.0);
        assert_eq!(s.network.radio.params(Band::HighAltitude).dl_mean, 264.62);
        assert_eq!(s.network.radio.variance_scale, 0.0);
    }

    #[test]
    fn flight_interpolation() {
        let plan = FlightPlan::new(vec![
            Waypoint { t: 0.0, altitude: 0.0, rotating: false },
            Waypoint { t: 60.0, altitude: 30.0, rotating: false },
            Waypoint { t: 100.0, altitude: 10.0, rotating: true },
        ])
        .unwrap();
        assert_eq!(plan.state_at(30.0), FlightState { altitude: 15.0, rotating: false });
        assert_eq!(plan.state_at(100.0), FlightState { altitude: 10.0, rotating: true });
        assert_eq!(plan.state_at(500.0), FlightState { altitude: 10.0, rotating: true });
        assert_eq!(plan.state_at(100.0).band(), Ok(Band::Rotation));
        assert_eq!(FlightPlan::default().state_at(3.0), FlightState::hover(0.0));
    }

    #[test]
    fn flight_plan_rejects_backwards_time() {
        let w = |t| Waypoint { t, altitude: 1.0, rotating: false };
        assert!(FlightPlan::new(vec![w(5.0), w(1.0)]).is_err());
    }

    #[test]
    fn missing_file_names_path() {
        let err = Scenario::from_path("/definitely/not/here.toml").unwrap_err();
        assert!(err.to_string().contains("/definitely/not/here.toml"));
    }
}
