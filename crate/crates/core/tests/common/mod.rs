//! Independent reference implementations used by the integration tests.
//!
//! Nothing here calls the latency or selection code under test. Link
//! constants are restated from the measurement table so that a regression in
//! the library defaults cannot hide in both sides of a comparison.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use birdsim_core::channel::{FlightState, LinkModel, Network};
use birdsim_core::engine::{TraceEntry, TraceRecord};
use birdsim_core::model::{NodeKind, NodeProfile, NodeSet, ProgramId, ProgramSpec, TaskKind};
use birdsim_core::policy::{ProgramTableEntry, ProgramTables};
use rand::seq::IndexedRandom;
use rand::Rng;

/// (DL Mbps, UL Mbps, RTT ms) for low altitude, high altitude, rotation.
pub const MEASURED_BANDS: [(f64, f64, f64); 3] = [(356.77, 48.13, 20.06), (264.62, 37.12, 22.28), (339.97, 57.99, 19.8)];
pub const UL_STD: f64 = 11.83;
pub const DL_STD: f64 = 72.09;
pub const BACKHAUL_MBPS: f64 = 1000.0;
pub const BACKHAUL_MS: f64 = 2.0;

pub fn band_index(flight: FlightState) -> usize {
    if flight.rotating {
        2
    } else if flight.altitude < 50.0 {
        0
    } else {
        1
    }
}

/// Raw description of a placement problem, independent of library types.
#[derive(Debug, Clone)]
pub struct Instance {
    /// Compute capacity per known node; index 0 is the UAV.
    pub caps: BTreeMap<usize, f64>,
    pub uav_cache: BTreeSet<String>,
    /// (server, program, capable, advertised latency)
    pub rows: Vec<(usize, String, bool, f64)>,
    pub programs: Vec<ProgramSpec>,
    pub flight: FlightState,
}

/// Mean-channel breakdown `(t_enc, t_comm, t_dec, t_proc, t_e2e)`.
pub type Terms = (f64, f64, f64, f64, f64);

impl Instance {
    fn hop(&self, from: usize, to: usize, bits: f64) -> Option<f64> {
        let (dl, ul, rtt) = MEASURED_BANDS[band_index(self.flight)];
        if from == to {
            None
        } else if from == 0 {
            Some(rtt / 2.0 / 1e3 + bits / (ul * 1e6))
        } else if to == 0 {
            Some(rtt / 2.0 / 1e3 + bits / (dl * 1e6))
        } else {
            Some(BACKHAUL_MS / 1e3 + bits / (BACKHAUL_MBPS * 1e6))
        }
    }

    fn comm(&self, exec: usize, consumer: usize, p: &ProgramSpec) -> f64 {
        let mut t = 0.0;
        for (from, to, bits) in [(0, exec, p.input_payload), (exec, consumer, p.output_payload)] {
            if let Some(s) = self.hop(from, to, bits) {
                t += s;
            }
        }
        t
    }

    /// Closed-form latency of running `p` on `exec`, sourced at the UAV.
    pub fn latency(&self, p: &ProgramSpec, exec: usize, advertised: Option<f64>) -> Terms {
        let consumer = p.consumer.unwrap_or(0);
        let cap0 = self.caps[&0];
        match self.caps.get(&exec) {
            Some(&cap) => {
                let t_proc = p.compute_cost / cap;
                if exec == 0 && consumer == 0 {
                    return (0.0, 0.0, 0.0, t_proc, t_proc);
                }
                let t_enc = p.encode_cost / cap0;
                let t_comm = self.comm(exec, consumer, p);
                let t_dec = p.decode_cost / cap;
                (t_enc, t_comm, t_dec, t_proc, t_enc + t_comm + t_dec + t_proc)
            }
            None => {
                let adv = advertised.expect("unknown servers come from table rows");
                let t_enc = p.encode_cost / cap0;
                let t_comm = self.comm(exec, consumer, p);
                (t_enc, t_comm, 0.0, adv, t_enc + t_comm + 0.0 + adv)
            }
        }
    }

    /// Every capable (server, advertised) pair for a program.
    pub fn candidates(&self, program: &str) -> Vec<(usize, Option<f64>)> {
        let mut out = Vec::new();
        if self.uav_cache.contains(program) {
            out.push((0, None));
        }
        for (s, p, capable, adv) in &self.rows {
            if p == program && *capable && *s != 0 {
                out.push((*s, Some(*adv)));
            }
        }
        out
    }

    /// Brute-force argmin by (t_e2e, t_comm, server id).
    pub fn best(&self, p: &ProgramSpec) -> Option<(usize, Terms)> {
        let mut best: Option<(usize, Terms)> = None;
        for (s, adv) in self.candidates(p.id.as_str()) {
            let terms = self.latency(p, s, adv);
            let better = match best {
                None => true,
                Some((bs, bt)) => {
                    terms.4 < bt.4 || (terms.4 == bt.4 && (terms.1 < bt.1 || (terms.1 == bt.1 && s < bs)))
                }
            };
            if better {
                best = Some((s, terms));
            }
        }
        best
    }

    pub fn nodes(&self) -> NodeSet {
        let nodes = self
            .caps
            .iter()
            .map(|(&id, &cap)| {
                let kind = match id {
                    0 => NodeKind::Uav5gp,
                    1 => NodeKind::Ecs,
                    _ => NodeKind::Gcs,
                };
                let mut n = NodeProfile::default_for(id, kind);
                n.compute_capacity = cap;
                if id == 0 {
                    n = n.with_programs(self.uav_cache.iter().map(String::as_str));
                }
                n
            })
            .collect();
        NodeSet::new(nodes).expect("valid random nodes")
    }

    pub fn tables(&self) -> ProgramTables {
        ProgramTables::new(self.rows.iter().map(|(s, p, capable, adv)| ProgramTableEntry {
            server_id: *s,
            program_id: ProgramId::new(p.clone()),
            capable: *capable,
            advertised_latency: *adv,
        }))
        .expect("unique random rows")
    }

    pub fn network(&self, seed: u64) -> Network {
        Network::new(LinkModel { noise_seed: seed, ..LinkModel::default() })
    }
}

/// A random instance with at most `max_servers` servers including the UAV and
/// at most `max_programs` programs. Values come from small grids so that exact
/// ties are common.
pub fn random_instance(rng: &mut impl Rng, max_servers: usize, max_programs: usize) -> Instance {
    const CAPS: [f64; 5] = [5.0, 10.0, 20.0, 40.0, 130.0];
    const COSTS: [f64; 6] = [0.0, 0.5, 1.0, 2.0, 4.0, 8.0];
    const PAYLOADS: [f64; 5] = [0.0, 1e5, 1e6, 4e6, 1.25e7];
    const ENC: [f64; 3] = [0.0, 0.2, 0.5];
    const ADV: [f64; 4] = [0.0, 0.02, 0.05, 0.1];

    let n_servers = rng.random_range(1..=max_servers);
    let mut caps = BTreeMap::new();
    for id in 0..n_servers {
        caps.insert(id, *CAPS.choose(rng).unwrap());
    }
    let n_programs = rng.random_range(1..=max_programs);
    let programs: Vec<ProgramSpec> = (0..n_programs)
        .map(|i| ProgramSpec {
            id: ProgramId::new(format!("p{i}")),
            task_kind: TaskKind::Other(format!("k{i}")),
            compute_cost: *COSTS.choose(rng).unwrap(),
            input_payload: *PAYLOADS.choose(rng).unwrap(),
            output_payload: *PAYLOADS.choose(rng).unwrap(),
            encode_cost: *ENC.choose(rng).unwrap(),
            decode_cost: *ENC.choose(rng).unwrap(),
            consumer: if rng.random_bool(0.2) { Some(rng.random_range(0..n_servers)) } else { None },
        })
        .collect();
    let mut uav_cache = BTreeSet::new();
    let mut rows = Vec::new();
    // Server ids past the node set have no known profile.
    let ghost = n_servers + 3;
    for p in &programs {
        if rng.random_bool(0.4) {
            uav_cache.insert(p.id.as_str().to_owned());
        }
        for s in (0..n_servers).chain([ghost]) {
            let odds = if s == ghost { 0.15 } else { 0.6 };
            if rng.random_bool(odds) {
                rows.push((s, p.id.as_str().to_owned(), rng.random_bool(0.85), *ADV.choose(rng).unwrap()));
            }
        }
    }
    let flight =
        FlightState { altitude: *[10.0, 30.0, 50.0, 70.0, 100.0].choose(rng).unwrap(), rotating: rng.random_bool(0.2) };
    Instance { caps, uav_cache, rows, programs, flight }
}

/// Checks the protocol invariants on a finished trace by replaying its
/// request, response and timeout records. Returns the number of request
/// entries seen.
pub fn check_trace(trace: &[TraceRecord]) -> Result<u64, String> {
    let mut open: BTreeSet<(u64, usize, String)> = BTreeSet::new();
    let mut latest_tick: Option<u64> = None;
    let (mut issued, mut resolved) = (0u64, 0u64);
    let mut prev: Option<&TraceRecord> = None;
    for r in trace {
        if let Some(p) = prev {
            if r.t < p.t {
                return Err(format!("time went backwards: {} after {}", r.t, p.t));
            }
            if r.t_pos < p.t_pos {
                return Err(format!("t_pos decreased at t={}", r.t));
            }
        }
        prev = Some(r);
        match &r.entry {
            TraceEntry::Tick { tick, .. } => latest_tick = Some(*tick),
            TraceEntry::Request { request } => {
                for p in &request.programs {
                    if !open.insert((request.tick_index, request.server_id, p.program_id.as_str().to_owned())) {
                        return Err(format!("duplicate entry at t={}", r.t));
                    }
                    issued += 1;
                }
            }
            TraceEntry::Response { response, .. } => {
                let key = (response.tick_index, response.server_id, response.program_id.as_str().to_owned());
                if !open.remove(&key) {
                    return Err(format!("response without entry {key:?}"));
                }
                resolved += 1;
            }
            TraceEntry::Timeout { tick, server, program_id } => {
                let key = (*tick, *server, program_id.as_str().to_owned());
                if !open.remove(&key) {
                    return Err(format!("timeout without entry {key:?}"));
                }
                resolved += 1;
            }
            TraceEntry::Advance { from, to } => {
                if let Some(k) = latest_tick {
                    if open.iter().any(|e| e.0 == k) {
                        return Err(format!("advanced {from}->{to} at t={} with tick {k} outstanding", r.t));
                    }
                }
            }
            _ => {}
        }
    }
    if !open.is_empty() {
        return Err(format!("{} entries never resolved", open.len()));
    }
    if issued != resolved {
        return Err(format!("{issued} entries issued, {resolved} resolved"));
    }
    Ok(issued)
}
