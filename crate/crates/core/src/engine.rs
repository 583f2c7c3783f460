//! Single-threaded discrete-event kernel driving one scenario run.
//!
//! Events execute in `(t, seq)` order, where `seq` is the insertion sequence
//! number, so simultaneous events run in the order they were scheduled. A tick
//! schedules its responses first, then its timeout, then the next tick; a
//! response landing exactly on the deadline is therefore accepted, and a
//! timeout always resolves its tick before the next one starts.

use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeMap, BinaryHeap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::{Band, Direction, FlightState, HopSample};
use crate::model::{Moment, MomentError, NodeId, ProgramId, Task, TaskId, TaskOrigin, UAV_NODE};
use crate::pipeline::{evaluate, LatencyBreakdown, PipelineError, PipelinePlacement};
use crate::protocol::{
    Advance, OffloadContext, Placement, ProtocolCounters, ProtocolError, ProtocolState, UpdateRequest, UpdateResponse,
};
use crate::scenario::Scenario;

/// Trace lines kept in an abort diagnostic.
const DIAGNOSTIC_SUFFIX_LINES: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum EventKind {
    Tick {
        tick: u64,
    },
    /// A remote server's response reaches the UAV.
    TransferComplete {
        response: UpdateResponse,
        breakdown: LatencyBreakdown,
        task_ids: Vec<TaskId>,
    },
    /// A program placed on the UAV finishes.
    ComputeComplete {
        tick: u64,
        program_id: ProgramId,
        breakdown: LatencyBreakdown,
        task_ids: Vec<TaskId>,
    },
    Timeout {
        tick: u64,
    },
    FlightWaypoint {
        index: usize,
    },
    TaskIssued {
        index: usize,
    },
    TruckArrival,
    /// A scripted incident moment (start, observed, reported).
    Incident {
        moment: Moment,
    },
}

impl EventKind {
    pub fn name(&self) -> &'static str {
        match self {
            EventKind::Tick { .. } => "tick",
            EventKind::TransferComplete { .. } => "transfer_complete",
            EventKind::ComputeComplete { .. } => "compute_complete",
            EventKind::Timeout { .. } => "timeout",
            EventKind::FlightWaypoint { .. } => "flight_waypoint",
            EventKind::TaskIssued { .. } => "task_issued",
            EventKind::TruckArrival => "truck_arrival",
            EventKind::Incident { .. } => "incident",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Event {
    pub t: f64,
    pub seq: u64,
    pub kind: EventKind,
}

impl Eq for Event {}

impl Ord for Event {
    fn cmp(&self, other: &Self) -> Ordering {
        self.t.total_cmp(&other.t).then(self.seq.cmp(&other.seq))
    }
}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Pending events ordered by `(t, seq)`.
#[derive(Debug, Default)]
pub struct EventQueue {
    heap: BinaryHeap<Reverse<Event>>,
    next_seq: u64,
}

impl EventQueue {
    pub fn push(&mut self, t: f64, kind: EventKind) -> u64 {
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(Reverse(Event { t, seq, kind }));
        seq
    }

    pub fn pop(&mut self) -> Option<Event> {
        self.heap.pop().map(|Reverse(e)| e)
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }
}

/// One line of the event trace. Field order is fixed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub t: f64,
    pub seq: u64,
    pub t_pos: usize,
    /// Current-tick entries still outstanding after this record.
    pub outstanding: usize,
    #[serde(flatten)]
    pub entry: TraceEntry,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TraceEntry {
    Moment {
        moment: Moment,
        note: String,
    },
    TaskIssued {
        task_id: TaskId,
    },
    Tick {
        tick: u64,
        altitude: f64,
        rotating: bool,
        due_tasks: usize,
    },
    Request {
        request: UpdateRequest,
    },
    LocalExecution {
        tick: u64,
        program_id: ProgramId,
        task_ids: Vec<TaskId>,
        completes_at: f64,
    },
    Unservable {
        tick: u64,
        task_id: TaskId,
        program_id: ProgramId,
    },
    /// A response that will never arrive, by injected loss or past the deadline.
    Dropped {
        tick: u64,
        server: NodeId,
        program_id: ProgramId,
        reason: String,
    },
    Response {
        response: UpdateResponse,
        t_e2e: f64,
    },
    LocalResult {
        tick: u64,
        program_id: ProgramId,
        t_e2e: f64,
    },
    Timeout {
        tick: u64,
        server: NodeId,
        program_id: ProgramId,
    },
    Waypoint {
        index: usize,
        altitude: f64,
        rotating: bool,
    },
    TruckArrival,
    Advance {
        from: usize,
        to: usize,
    },
    Cancelled {
        event: String,
        at: f64,
    },
    Flush {
        timed_out: usize,
    },
    End {
        reason: String,
    },
}

/// One completed program execution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProgramRun {
    pub tick: u64,
    pub program_id: ProgramId,
    pub server: NodeId,
    pub consumer: NodeId,
    pub task_ids: Vec<TaskId>,
    pub issued_at: f64,
    pub completed_at: f64,
    pub breakdown: LatencyBreakdown,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskRecord {
    pub task_id: TaskId,
    pub origin: TaskOrigin,
    pub issue_time: f64,
    pub completion_time: Option<f64>,
    pub servers: BTreeMap<ProgramId, NodeId>,
    pub breakdowns: BTreeMap<ProgramId, LatencyBreakdown>,
    #[serde(skip)]
    required: Vec<ProgramId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkLogEntry {
    pub t: f64,
    pub tick: u64,
    pub server: NodeId,
    pub direction: Direction,
    pub band: Band,
    pub throughput: f64,
    pub one_way_delay: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct RunCounts {
    pub ticks: u64,
    pub requests: u64,
    pub messages: u64,
    pub responses: u64,
    pub timeouts: u64,
    pub local_executions: u64,
    pub unservable: u64,
    /// Responses dropped by injected loss or lateness.
    pub dropped: u64,
    /// Events not executed because they fell after the end of the run.
    pub cancelled_events: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EndReason {
    /// The final phase completed.
    Terminated,
    /// The run reached its configured duration.
    Duration,
    /// The UAV battery ran out before the configured duration.
    Battery,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub tasks: Vec<TaskRecord>,
    pub runs: Vec<ProgramRun>,
    pub moments: crate::model::CriticalMoments,
    pub counts: RunCounts,
    pub link_samples: Vec<LinkLogEntry>,
    pub final_t_pos: usize,
    pub end_time: f64,
    pub end_reason: EndReason,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub metrics: MetricsRecord,
    pub trace: Vec<TraceRecord>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EngineFault {
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Moment(#[from] MomentError),
}

/// A run aborted on a module error. Carries the last trace lines.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("run aborted at t={t} s: {fault}")]
pub struct EngineError {
    pub t: f64,
    pub fault: EngineFault,
    pub trace_suffix: Vec<String>,
}

/// Flight state at `t` under the scenario's flight plan.
pub fn flight_state_at(scenario: &Scenario, t: f64) -> FlightState {
    scenario.flight_state_at(t)
}

/// Executes a scenario to completion.
pub fn run(scenario: &Scenario) -> Result<RunOutput, EngineError> {
    Engine::new(scenario)?.run()
}

struct Engine<'s> {
    sc: &'s Scenario,
    queue: EventQueue,
    protocol: ProtocolState,
    cutoff: f64,
    loss_rng: ChaCha8Rng,
    due: Vec<Task>,
    tasks: BTreeMap<TaskId, TaskRecord>,
    task_order: Vec<TaskId>,
    /// Latest implied task per `phase/kind` slot.
    open_implied: BTreeMap<String, TaskId>,
    runs: Vec<ProgramRun>,
    link_samples: Vec<LinkLogEntry>,
    counts: RunCounts,
    trace: Vec<TraceRecord>,
    now: f64,
    seq: u64,
}

fn loss_seed(seed: u64) -> u64 {
    seed ^ 0x6c6f_7373_5f72_6e67
}

impl<'s> Engine<'s> {
    fn new(sc: &'s Scenario) -> Result<Self, EngineError> {
        let timeline =
            crate::model::MissionTimeline::new(sc.phases.clone()).expect("validated scenarios have at least one phase");
        let protocol = ProtocolState::new(sc.t_int, sc.epoch, timeline, sc.predicates.clone(), &sc.nodes)
            .map_err(|e| EngineError { t: 0.0, fault: e.into(), trace_suffix: Vec::new() })?;
        let battery = sc.nodes.uav().battery_budget.unwrap_or(f64::INFINITY);
        Ok(Self {
            sc,
            queue: EventQueue::default(),
            protocol,
            cutoff: sc.duration.min(battery),
            loss_rng: ChaCha8Rng::seed_from_u64(loss_seed(sc.seed)),
            due: Vec::new(),
            tasks: BTreeMap::new(),
            task_order: Vec::new(),
            open_implied: BTreeMap::new(),
            runs: Vec::new(),
            link_samples: Vec::new(),
            counts: RunCounts::default(),
            trace: Vec::new(),
            now: 0.0,
            seq: 0,
        })
    }

    fn record(&mut self, entry: TraceEntry) {
        log::trace!("t={} {:?}", self.now, entry);
        self.trace.push(TraceRecord {
            t: self.now,
            seq: self.seq,
            t_pos: self.protocol.t_pos(),
            outstanding: self.protocol.outstanding_current(),
            entry,
        });
    }

    fn schedule(&mut self, t: f64, kind: EventKind) {
        if t > self.cutoff {
            self.counts.cancelled_events += 1;
            self.record(TraceEntry::Cancelled { event: kind.name().into(), at: t });
        } else {
            self.queue.push(t, kind);
        }
    }

    fn fail(&self, fault: impl Into<EngineFault>) -> EngineError {
        let start = self.trace.len().saturating_sub(DIAGNOSTIC_SUFFIX_LINES);
        EngineError {
            t: self.now,
            fault: fault.into(),
            trace_suffix: self.trace[start..]
                .iter()
                .map(|r| serde_json::to_string(r).expect("trace records serialize"))
                .collect(),
        }
    }

    fn set_moment(&mut self, moment: Moment, t: f64, note: &str) -> Result<(), EngineError> {
        self.protocol.timeline.moments.record(moment, t).map_err(|e| self.fail(e))?;
        self.record(TraceEntry::Moment { moment, note: note.into() });
        Ok(())
    }

    fn run(mut self) -> Result<RunOutput, EngineError> {
        let inc = self.sc.incident;
        self.schedule(inc.start, EventKind::Incident { moment: Moment::Start });
        self.schedule(inc.observed, EventKind::Incident { moment: Moment::Observed });
        self.schedule(inc.reported, EventKind::Incident { moment: Moment::Reported });

        for index in 0..self.sc.tasks.len() {
            self.schedule(self.sc.tasks[index].issue_time, EventKind::TaskIssued { index });
        }
        for (index, w) in self.sc.flight.waypoints().iter().enumerate() {
            self.schedule(w.t, EventKind::FlightWaypoint { index });
        }
        if let Some(t) = inc.truck_arrival {
            self.schedule(t, EventKind::TruckArrival);
        }
        self.schedule(self.protocol.tick_time(0), EventKind::Tick { tick: 0 });

        let mut reason = if self.cutoff < self.sc.duration { EndReason::Battery } else { EndReason::Duration };
        let mut last_t = f64::NEG_INFINITY;
        while let Some(ev) = self.queue.pop() {
            debug_assert!(ev.t >= last_t, "causality");
            last_t = ev.t;
            self.now = ev.t;
            self.seq = ev.seq;
            self.handle(ev.kind)?;
            let adv = self.protocol.try_advance(self.now);
            if self.after_advance(adv)? {
                reason = EndReason::Terminated;
                break;
            }
        }

        // Terminal flush.
        while let Some(ev) = self.queue.pop() {
            self.counts.cancelled_events += 1;
            self.record(TraceEntry::Cancelled { event: ev.kind.name().into(), at: ev.t });
        }
        if reason != EndReason::Terminated {
            self.now = self.cutoff;
        }
        let flushed = self.protocol.flush();
        for f in &flushed {
            self.record(TraceEntry::Timeout {
                tick: f.key.tick,
                server: f.key.server,
                program_id: f.key.program.clone(),
            });
        }
        self.record(TraceEntry::Flush { timed_out: flushed.len() });
        let end = match reason {
            EndReason::Terminated => "terminated",
            EndReason::Duration => "duration",
            EndReason::Battery => "battery",
        };
        self.record(TraceEntry::End { reason: end.into() });
        log::info!("{}: run ended at t={} s ({end})", self.sc.name, self.now);

        let ProtocolCounters { requests, messages, responses, timeouts, local_executions, unservable } =
            self.protocol.counters();
        self.counts.requests = requests;
        self.counts.messages = messages;
        self.counts.responses = responses;
        self.counts.timeouts = timeouts;
        self.counts.local_executions = local_executions;
        self.counts.unservable = unservable;

        let mut tasks = self.tasks;
        let metrics = MetricsRecord {
            tasks: self.task_order.iter().filter_map(|id| tasks.remove(id)).collect(),
            runs: self.runs,
            moments: self.protocol.timeline.moments,
            counts: self.counts,
            link_samples: self.link_samples,
            final_t_pos: self.protocol.t_pos(),
            end_time: self.now,
            end_reason: reason,
        };
        Ok(RunOutput { metrics, trace: self.trace })
    }

    /// Returns true when the mission has terminated.
    fn after_advance(&mut self, adv: Advance) -> Result<bool, EngineError> {
        if adv.phases_advanced > 0 {
            let to = self.protocol.t_pos();
            self.record(TraceEntry::Advance { from: to - adv.phases_advanced, to });
        }
        if adv.mission_complete {
            self.set_moment(Moment::Termination, self.now, "final phase complete")?;
            return Ok(true);
        }
        Ok(false)
    }

    fn register_task(&mut self, task: &Task) {
        if self.tasks.contains_key(&task.id) {
            return;
        }
        self.task_order.push(task.id.clone());
        self.tasks.insert(
            task.id.clone(),
            TaskRecord {
                task_id: task.id.clone(),
                origin: task.origin,
                issue_time: task.issue_time,
                completion_time: None,
                servers: BTreeMap::new(),
                breakdowns: BTreeMap::new(),
                required: task.required_programs.clone(),
            },
        );
    }

    fn handle(&mut self, kind: EventKind) -> Result<(), EngineError> {
        match kind {
            EventKind::TaskIssued { index } => {
                let task = self.sc.tasks[index].clone();
                self.register_task(&task);
                self.record(TraceEntry::TaskIssued { task_id: task.id.clone() });
                self.due.push(task);
            }
            EventKind::Tick { tick } => self.on_tick(tick)?,
            EventKind::TransferComplete { response, breakdown, task_ids } => {
                self.protocol.on_response(&response).map_err(|e| self.fail(e))?;
                self.record(TraceEntry::Response { response: response.clone(), t_e2e: breakdown.t_e2e });
                let issued_at = self.protocol.tick_time(response.tick_index);
                self.deliver(ProgramRun {
                    tick: response.tick_index,
                    program_id: response.program_id,
                    server: response.server_id,
                    consumer: UAV_NODE,
                    task_ids,
                    issued_at,
                    completed_at: self.now,
                    breakdown,
                })?;
            }
            EventKind::ComputeComplete { tick, program_id, breakdown, task_ids } => {
                self.protocol.on_local_result(&program_id);
                self.record(TraceEntry::LocalResult { tick, program_id: program_id.clone(), t_e2e: breakdown.t_e2e });
                let issued_at = self.protocol.tick_time(tick);
                self.deliver(ProgramRun {
                    tick,
                    program_id,
                    server: UAV_NODE,
                    consumer: UAV_NODE,
                    task_ids,
                    issued_at,
                    completed_at: self.now,
                    breakdown,
                })?;
            }
            EventKind::Timeout { tick } => {
                let timed = self.protocol.on_timeout(tick, self.now).map_err(|e| self.fail(e))?;
                for t in timed {
                    self.record(TraceEntry::Timeout { tick, server: t.key.server, program_id: t.key.program });
                }
            }
            EventKind::FlightWaypoint { index } => {
                let w = self.sc.flight.waypoints()[index];
                self.record(TraceEntry::Waypoint { index, altitude: w.altitude, rotating: w.rotating });
            }
            EventKind::Incident { moment } => self.set_moment(moment, self.now, "scenario")?,
            EventKind::TruckArrival => {
                self.record(TraceEntry::TruckArrival);
                self.set_moment(Moment::PhysicalAwareness, self.now, "scripted truck arrival")?;
            }
        }
        Ok(())
    }

    /// Tasks implied by the current phase at this tick. A phase issues at
    /// most one open task per task kind: the next one is issued only after
    /// the previous one completed, so work cannot pile up while a program is
    /// failing.
    fn implied_tasks(&mut self, tick: u64, t: f64) -> Vec<Task> {
        let phase = self.protocol.timeline.current().clone();
        let mut out = Vec::new();
        for kind in &phase.implied {
            let label = match kind {
                crate::model::TaskKind::Other(s) => s.clone(),
                k => serde_json::to_value(k).ok().and_then(|v| v.as_str().map(str::to_owned)).unwrap_or_default(),
            };
            let slot = format!("{}/{label}", phase.id);
            let busy = self.open_implied.get(&slot).is_some_and(|id| self.tasks[id].completion_time.is_none());
            if busy {
                continue;
            }
            let programs: Vec<ProgramId> =
                self.sc.programs.values().filter(|p| &p.task_kind == kind).map(|p| p.id.clone()).collect();
            if let Ok(task) = Task::new(format!("{slot}@{tick}"), programs, TaskOrigin::TimelineImplied, t) {
                self.open_implied.insert(slot, task.id.clone());
                self.register_task(&task);
                out.push(task);
            }
        }
        out
    }

    fn on_tick(&mut self, tick: u64) -> Result<(), EngineError> {
        let t = self.now;
        let flight = self.sc.flight_state_at(t);
        let mut due = std::mem::take(&mut self.due);
        due.extend(self.implied_tasks(tick, t));
        for task in &due {
            self.register_task(task);
        }
        self.counts.ticks += 1;
        self.record(TraceEntry::Tick {
            tick,
            altitude: flight.altitude,
            rotating: flight.rotating,
            due_tasks: due.len(),
        });

        let ctx = OffloadContext {
            nodes: &self.sc.nodes,
            tables: &self.sc.tables,
            programs: &self.sc.programs,
            net: &self.sc.network,
            flight,
        };
        let outcome = self.protocol.on_tick(t, &due, &ctx).map_err(|e| self.fail(e))?;

        for request in &outcome.requests {
            self.record(TraceEntry::Request { request: request.clone() });
        }
        for (task_id, program_id) in &outcome.unservable {
            self.record(TraceEntry::Unservable { tick, task_id: task_id.clone(), program_id: program_id.clone() });
        }
        for placement in &outcome.remote {
            self.execute_remote(tick, t, flight, placement)?;
        }
        for placement in &outcome.local {
            self.execute_local(tick, t, flight, placement)?;
        }
        if !outcome.remote.is_empty() {
            self.schedule(self.protocol.deadline(tick), EventKind::Timeout { tick });
        }
        self.schedule(self.protocol.tick_time(tick + 1), EventKind::Tick { tick: tick + 1 });
        Ok(())
    }

    fn log_hops(&mut self, tick: u64, server: NodeId, t: f64, hops: &[HopSample]) {
        for hop in hops {
            if let HopSample::Radio(s) = hop {
                self.link_samples.push(LinkLogEntry {
                    t,
                    tick,
                    server,
                    direction: s.direction,
                    band: s.band,
                    throughput: s.throughput,
                    one_way_delay: s.one_way_delay,
                });
            }
        }
    }

    fn execute_remote(
        &mut self,
        tick: u64,
        t: f64,
        flight: FlightState,
        placement: &Placement,
    ) -> Result<(), EngineError> {
        let program = &self.sc.programs[&placement.decision.program_id];
        let server = placement.decision.chosen_server;
        let placed = PipelinePlacement::offload(server, program.consumer());
        let actual =
            evaluate(program, placed, &self.sc.nodes, &self.sc.network, t, flight).map_err(|e| self.fail(e))?;
        self.log_hops(tick, server, t, &actual.hops);

        let fault = self.sc.faults.get(&server).copied();
        let lost = match fault {
            Some(f) if f.unreachable => Some("unreachable"),
            Some(f) if f.loss_probability > 0.0 && self.loss_rng.random::<f64>() < f.loss_probability => Some("loss"),
            _ => None,
        };
        let completed_at = t + actual.breakdown.t_e2e;
        let reason = lost.or((completed_at > self.protocol.deadline(tick)).then_some("late"));
        if let Some(reason) = reason {
            self.counts.dropped += 1;
            self.record(TraceEntry::Dropped { tick, server, program_id: program.id.clone(), reason: reason.into() });
            return Ok(());
        }
        let server_location = self.sc.nodes.get(server).map(|n| n.location_at(completed_at)).unwrap_or_default();
        let response = UpdateResponse {
            tick_index: tick,
            server_id: server,
            program_id: program.id.clone(),
            result_payload: program.output_payload,
            server_location,
            completed_at,
        };
        self.schedule(
            completed_at,
            EventKind::TransferComplete { response, breakdown: actual.breakdown, task_ids: placement.task_ids.clone() },
        );
        Ok(())
    }

    fn execute_local(
        &mut self,
        tick: u64,
        t: f64,
        flight: FlightState,
        placement: &Placement,
    ) -> Result<(), EngineError> {
        let program = &self.sc.programs[&placement.decision.program_id];
        let placed = PipelinePlacement::new(UAV_NODE, UAV_NODE, program.consumer());
        let actual =
            evaluate(program, placed, &self.sc.nodes, &self.sc.network, t, flight).map_err(|e| self.fail(e))?;
        self.log_hops(tick, UAV_NODE, t, &actual.hops);
        let completes_at = t + actual.breakdown.t_e2e;
        self.record(TraceEntry::LocalExecution {
            tick,
            program_id: program.id.clone(),
            task_ids: placement.task_ids.clone(),
            completes_at,
        });
        self.schedule(
            completes_at,
            EventKind::ComputeComplete {
                tick,
                program_id: program.id.clone(),
                breakdown: actual.breakdown,
                task_ids: placement.task_ids.clone(),
            },
        );
        Ok(())
    }

    fn deliver(&mut self, mut run: ProgramRun) -> Result<(), EngineError> {
        let program = &self.sc.programs[&run.program_id];
        run.consumer = program.consumer();
        if program.is_monitoring() && self.protocol.timeline.moments.virtual_awareness.is_none() {
            let note = format!("first {} result delivered to node {}", run.program_id, run.consumer);
            self.set_moment(Moment::VirtualAwareness, self.now, &note)?;
        }
        for task_id in &run.task_ids {
            let Some(rec) = self.tasks.get_mut(task_id) else { continue };
            if rec.completion_time.is_some() {
                continue;
            }
            rec.servers.insert(run.program_id.clone(), run.server);
            rec.breakdowns.insert(run.program_id.clone(), run.breakdown);
            if rec.required.iter().all(|p| rec.breakdowns.contains_key(p)) {
                rec.completion_time = Some(self.now);
            }
        }
        self.runs.push(run);
        Ok(())
    }
}
