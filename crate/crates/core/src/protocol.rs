//! Periodic update loop between the UAV and its servers.
//!
//! Every `t_int` seconds the UAV gathers due work, places each program with
//! the offloading policy and sends one bundled update request per target
//! server. Servers answer per program with the result and their current
//! location. Entries that are not answered within one interval time out and
//! are placed again at the next tick with the failed server excluded once.
//! Once nothing from the current tick is outstanding, the UAV is fully aware
//! and the timeline may advance.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::{FlightState, Network};
use crate::model::{
    MissionTimeline, Moment, NodeId, NodeSet, Position, ProgramId, ProgramSpec, Task, TaskId, UAV_NODE,
};
use crate::policy::{candidates_for, select_server, OffloadDecision, PolicyError, ProgramTables};

pub const DEFAULT_UPDATE_INTERVAL_S: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProtocolError {
    #[error("no outstanding entry for response (tick {tick}, server {server}, program {program})")]
    UnknownResponse { tick: u64, server: NodeId, program: ProgramId },
    #[error("response for tick {tick} completed at {completed_at} s before issue at {issued_at} s")]
    ResponseBeforeRequest { tick: u64, completed_at: f64, issued_at: f64 },
    #[error("tick at {got} s is off schedule, expected {expected} s")]
    OffSchedule { expected: f64, got: f64 },
    #[error("timeout for tick {tick} at {got} s, expected {expected} s")]
    OffScheduleTimeout { tick: u64, expected: f64, got: f64 },
    #[error("tick {0} still has outstanding entries")]
    UnresolvedTick(u64),
    #[error("unknown program {0}")]
    UnknownProgram(ProgramId),
    #[error("update interval must be finite and > 0, got {0}")]
    InvalidInterval(f64),
    #[error(transparent)]
    Policy(#[from] PolicyError),
}

/// Condition under which the current phase is complete.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CompletionPredicate {
    Never,
    /// Every listed program has delivered a result since the phase began.
    ResultsFor {
        programs: Vec<ProgramId>,
    },
    MomentRecorded {
        moment: Moment,
    },
    AtOrAfter {
        t: f64,
    },
    All {
        of: Vec<CompletionPredicate>,
    },
    Any {
        of: Vec<CompletionPredicate>,
    },
}

impl CompletionPredicate {
    fn holds(&self, ctx: &PredicateContext<'_>) -> bool {
        match self {
            CompletionPredicate::Never => false,
            CompletionPredicate::ResultsFor { programs } => programs.iter().all(|p| ctx.results.contains(p)),
            CompletionPredicate::MomentRecorded { moment } => ctx.timeline.moments.get(*moment).is_some(),
            CompletionPredicate::AtOrAfter { t } => ctx.t >= *t,
            CompletionPredicate::All { of } => of.iter().all(|p| p.holds(ctx)),
            CompletionPredicate::Any { of } => of.iter().any(|p| p.holds(ctx)),
        }
    }

    /// Programs referenced anywhere in the predicate.
    pub fn programs(&self) -> Vec<&ProgramId> {
        match self {
            CompletionPredicate::ResultsFor { programs } => programs.iter().collect(),
            CompletionPredicate::All { of } | CompletionPredicate::Any { of } => {
                of.iter().flat_map(|p| p.programs()).collect()
            }
            _ => Vec::new(),
        }
    }
}

struct PredicateContext<'a> {
    t: f64,
    results: &'a BTreeSet<ProgramId>,
    timeline: &'a MissionTimeline,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RequestedProgram {
    pub program_id: ProgramId,
    pub target: NodeId,
    pub input_payload: f64,
}

/// One bundled message from the UAV to a server.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpdateRequest {
    pub tick_index: u64,
    pub issued_at: f64,
    pub t_pos: usize,
    pub server_id: NodeId,
    pub programs: Vec<RequestedProgram>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpdateResponse {
    pub tick_index: u64,
    pub server_id: NodeId,
    pub program_id: ProgramId,
    pub result_payload: f64,
    pub server_location: Position,
    pub completed_at: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct EntryKey {
    pub tick: u64,
    pub server: NodeId,
    pub program: ProgramId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Outstanding {
    pub issued_at: f64,
    pub task_ids: Vec<TaskId>,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
struct PendingWork {
    task_id: TaskId,
    program: ProgramId,
    exclude: Option<NodeId>,
}

/// A placed program and the tasks waiting on it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Placement {
    pub decision: OffloadDecision,
    pub task_ids: Vec<TaskId>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TickOutcome {
    pub tick: u64,
    pub issued_at: f64,
    /// One per distinct remote target server.
    pub requests: Vec<UpdateRequest>,
    /// Placements on remote servers, in entry-key order.
    pub remote: Vec<Placement>,
    /// Placements on the UAV itself; no wire message.
    pub local: Vec<Placement>,
    /// Work with no capable server this tick, retried next tick.
    pub unservable: Vec<(TaskId, ProgramId)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimedOut {
    pub key: EntryKey,
    pub task_ids: Vec<TaskId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ProtocolCounters {
    /// Program-level request entries sent on the wire.
    pub requests: u64,
    /// Bundled messages carrying those entries.
    pub messages: u64,
    pub responses: u64,
    pub timeouts: u64,
    pub local_executions: u64,
    pub unservable: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Advance {
    /// Current-tick entries are still outstanding; nothing changed.
    pub gated: bool,
    pub phases_advanced: usize,
    /// The last phase's predicate holds.
    pub mission_complete: bool,
}

/// Borrowed inputs the policy needs at each tick.
#[derive(Debug, Clone, Copy)]
pub struct OffloadContext<'a> {
    pub nodes: &'a NodeSet,
    pub tables: &'a ProgramTables,
    pub programs: &'a BTreeMap<ProgramId, ProgramSpec>,
    pub net: &'a Network,
    pub flight: FlightState,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolState {
    t_int: f64,
    epoch: f64,
    next_tick: u64,
    current_tick: Option<u64>,
    outstanding: BTreeMap<EntryKey, Outstanding>,
    pending: Vec<PendingWork>,
    pub timeline: MissionTimeline,
    predicates: Vec<CompletionPredicate>,
    phase_results: BTreeSet<ProgramId>,
    server_locations: BTreeMap<NodeId, Position>,
    mobile: BTreeSet<NodeId>,
    last_awareness: Option<f64>,
    mission_complete: bool,
    counters: ProtocolCounters,
}

impl ProtocolState {
    /// `predicates[i]` completes phase `i`; missing entries never complete.
    pub fn new(
        t_int: f64,
        epoch: f64,
        timeline: MissionTimeline,
        predicates: Vec<CompletionPredicate>,
        nodes: &NodeSet,
    ) -> Result<Self, ProtocolError> {
        if !(t_int.is_finite() && t_int > 0.0) {
            return Err(ProtocolError::InvalidInterval(t_int));
        }
        Ok(Self {
            t_int,
            epoch,
            next_tick: 0,
            current_tick: None,
            outstanding: BTreeMap::new(),
            pending: Vec::new(),
            timeline,
            predicates,
            phase_results: BTreeSet::new(),
            server_locations: nodes.iter().map(|n| (n.id, n.location)).collect(),
            mobile: nodes.iter().filter(|n| n.mobile).map(|n| n.id).collect(),
            last_awareness: None,
            mission_complete: false,
            counters: ProtocolCounters::default(),
        })
    }

    pub fn t_int(&self) -> f64 {
        self.t_int
    }

    pub fn t_pos(&self) -> usize {
        self.timeline.t_pos()
    }

    /// Issue time of tick `k`.
    pub fn tick_time(&self, k: u64) -> f64 {
        self.epoch + k as f64 * self.t_int
    }

    /// Timeout instant for entries of tick `k`: one interval after issue,
    /// computed as the next tick's issue time so the two coincide exactly.
    pub fn deadline(&self, k: u64) -> f64 {
        self.tick_time(k + 1)
    }

    pub fn next_tick(&self) -> u64 {
        self.next_tick
    }

    pub fn current_tick(&self) -> Option<u64> {
        self.current_tick
    }

    pub fn outstanding(&self) -> &BTreeMap<EntryKey, Outstanding> {
        &self.outstanding
    }

    /// Entries of the current tick still awaiting a response or timeout.
    pub fn outstanding_current(&self) -> usize {
        match self.current_tick {
            Some(k) => self.outstanding.keys().filter(|e| e.tick == k).count(),
            None => 0,
        }
    }

    pub fn pending_len(&self) -> usize {
        self.pending.len()
    }

    pub fn server_location(&self, id: NodeId) -> Option<Position> {
        self.server_locations.get(&id).copied()
    }

    pub fn last_awareness(&self) -> Option<f64> {
        self.last_awareness
    }

    pub fn mission_complete(&self) -> bool {
        self.mission_complete
    }

    pub fn counters(&self) -> ProtocolCounters {
        self.counters
    }

    /// Runs one update tick: places all due and retried work and emits one
    /// request per remote target server.
    pub fn on_tick(&mut self, t_i: f64, due: &[Task], ctx: &OffloadContext<'_>) -> Result<TickOutcome, ProtocolError> {
        let expected = self.tick_time(self.next_tick);
        if t_i != expected {
            return Err(ProtocolError::OffSchedule { expected, got: t_i });
        }
        if let Some(prev) = self.outstanding.keys().next() {
            return Err(ProtocolError::UnresolvedTick(prev.tick));
        }
        let tick = self.next_tick;
        self.next_tick += 1;
        self.current_tick = Some(tick);

        for task in due {
            for p in &task.required_programs {
                self.pending.push(PendingWork { task_id: task.id.clone(), program: p.clone(), exclude: None });
            }
        }

        // Work sharing a program and exclusion gets one decision.
        let mut groups: BTreeMap<(ProgramId, Option<NodeId>), Vec<TaskId>> = BTreeMap::new();
        for w in std::mem::take(&mut self.pending) {
            let tasks = groups.entry((w.program, w.exclude)).or_default();
            if !tasks.contains(&w.task_id) {
                tasks.push(w.task_id);
            }
        }

        let mut outcome = TickOutcome { tick, issued_at: t_i, ..TickOutcome::default() };
        let mut remote: BTreeMap<EntryKey, Placement> = BTreeMap::new();
        let mut local: BTreeMap<ProgramId, Placement> = BTreeMap::new();
        for ((program, exclude), task_ids) in groups {
            let spec = ctx.programs.get(&program).ok_or_else(|| ProtocolError::UnknownProgram(program.clone()))?;
            let mut candidates = candidates_for(&program, ctx.tables, ctx.nodes);
            if let Some(x) = exclude {
                candidates.retain(|c| c.server != x);
            }
            if candidates.is_empty() {
                for task_id in task_ids {
                    outcome.unservable.push((task_id.clone(), program.clone()));
                    self.pending.push(PendingWork { task_id, program: program.clone(), exclude: None });
                }
                continue;
            }
            let decision = select_server(spec, &candidates, ctx.nodes, ctx.net, t_i, ctx.flight)?;
            let placed = if decision.chosen_server == UAV_NODE {
                local.entry(program.clone()).or_insert_with(|| Placement { decision, task_ids: Vec::new() })
            } else {
                let key = EntryKey { tick, server: decision.chosen_server, program: program.clone() };
                remote.entry(key).or_insert_with(|| Placement { decision, task_ids: Vec::new() })
            };
            merge(&mut placed.task_ids, task_ids);
        }
        self.counters.unservable += outcome.unservable.len() as u64;

        let mut by_server: BTreeMap<NodeId, Vec<RequestedProgram>> = BTreeMap::new();
        for (key, placement) in &remote {
            let spec = &ctx.programs[&key.program];
            by_server.entry(key.server).or_default().push(RequestedProgram {
                program_id: key.program.clone(),
                target: key.server,
                input_payload: spec.input_payload,
            });
            self.outstanding.insert(key.clone(), Outstanding { issued_at: t_i, task_ids: placement.task_ids.clone() });
        }
        let t_pos = self.t_pos();
        outcome.requests = by_server
            .into_iter()
            .map(|(server_id, programs)| UpdateRequest { tick_index: tick, issued_at: t_i, t_pos, server_id, programs })
            .collect();
        outcome.remote = remote.into_values().collect();
        outcome.local = local.into_values().collect();

        self.counters.messages += outcome.requests.len() as u64;
        self.counters.requests += outcome.remote.len() as u64;
        self.counters.local_executions += outcome.local.len() as u64;
        Ok(outcome)
    }

    /// Resolves an outstanding entry with its response. Returns the tasks the
    /// result serves.
    pub fn on_response(&mut self, resp: &UpdateResponse) -> Result<Vec<TaskId>, ProtocolError> {
        let key = EntryKey { tick: resp.tick_index, server: resp.server_id, program: resp.program_id.clone() };
        let Some(entry) = self.outstanding.get(&key) else {
            return Err(ProtocolError::UnknownResponse { tick: key.tick, server: key.server, program: key.program });
        };
        if resp.completed_at < entry.issued_at {
            return Err(ProtocolError::ResponseBeforeRequest {
                tick: key.tick,
                completed_at: resp.completed_at,
                issued_at: entry.issued_at,
            });
        }
        let entry = self.outstanding.remove(&key).expect("checked above");
        if self.mobile.contains(&resp.server_id) {
            self.server_locations.insert(resp.server_id, resp.server_location);
        }
        self.phase_results.insert(resp.program_id.clone());
        self.counters.responses += 1;
        Ok(entry.task_ids)
    }

    /// Records the result of a program executed on the UAV itself.
    pub fn on_local_result(&mut self, program: &ProgramId) {
        self.phase_results.insert(program.clone());
    }

    /// Times out every unresolved entry of `tick`. Their work re-enters the
    /// next tick with the failed server excluded once.
    pub fn on_timeout(&mut self, tick: u64, t: f64) -> Result<Vec<TimedOut>, ProtocolError> {
        let expected = self.deadline(tick);
        if t != expected {
            return Err(ProtocolError::OffScheduleTimeout { tick, expected, got: t });
        }
        Ok(self.expire(|k| k.tick == tick))
    }

    /// Times out everything still outstanding, regardless of tick. Used when
    /// the run ends.
    pub fn flush(&mut self) -> Vec<TimedOut> {
        self.expire(|_| true)
    }

    fn expire(&mut self, pred: impl Fn(&EntryKey) -> bool) -> Vec<TimedOut> {
        let keys: Vec<EntryKey> = self.outstanding.keys().filter(|k| pred(k)).cloned().collect();
        let mut out = Vec::with_capacity(keys.len());
        for key in keys {
            let entry = self.outstanding.remove(&key).expect("key taken from map");
            for task_id in &entry.task_ids {
                self.pending.push(PendingWork {
                    task_id: task_id.clone(),
                    program: key.program.clone(),
                    exclude: Some(key.server),
                });
            }
            self.counters.timeouts += 1;
            out.push(TimedOut { key, task_ids: entry.task_ids });
        }
        out
    }

    /// Advances the timeline when the current tick is fully resolved and the
    /// current phase's completion predicate holds. May skip several phases.
    pub fn try_advance(&mut self, t: f64) -> Advance {
        if self.outstanding_current() > 0 {
            return Advance { gated: true, ..Advance::default() };
        }
        self.last_awareness = Some(t);
        let mut adv = Advance::default();
        while !self.mission_complete {
            let pred = self.predicates.get(self.timeline.t_pos()).unwrap_or(&CompletionPredicate::Never);
            let ctx = PredicateContext { t, results: &self.phase_results, timeline: &self.timeline };
            if !pred.holds(&ctx) {
                break;
            }
            if self.timeline.advance() {
                adv.phases_advanced += 1;
                self.phase_results.clear();
            } else {
                self.mission_complete = true;
            }
        }
        adv.mission_complete = self.mission_complete;
        adv
    }
}

fn merge(into: &mut Vec<TaskId>, from: Vec<TaskId>) {
    for id in from {
        if !into.contains(&id) {
            into.push(id);
        }
    }
}
