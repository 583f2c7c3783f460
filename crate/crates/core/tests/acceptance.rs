//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each,
//! and exits non-zero if any fails.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use birdsim_core::channel::{
    default_link_params, uplink_feasibility, Band, Direction, FlightState, LinkModel, Network,
};
use birdsim_core::engine::run;
use birdsim_core::model::{NodeKind, NodeProfile, NodeSet, ProgramId, ProgramSpec, TaskKind, UAV_NODE};
use birdsim_core::output::{
    summary_json, write_link_samples_csv, write_metrics_csv, write_tasks_csv, write_trace, Summary,
};
use birdsim_core::pipeline::{e2e_latency, PipelinePlacement};
use birdsim_core::policy::{candidates_for, select_server, ProgramTableEntry, ProgramTables};
use birdsim_core::scenario::{Fault, Scenario};
use common::{check_trace, random_instance, DL_STD, MEASURED_BANDS, UL_STD};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const GOLDEN_SUMMARY: &str = include_str!("golden/urban_fire_summary.json");

type Outcome = Result<String, String>;
type Criterion = (&'static str, Duration, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn flight_for(band: Band) -> FlightState {
    match band {
        Band::LowAltitude => FlightState { altitude: 30.0, rotating: false },
        Band::HighAltitude => FlightState { altitude: 70.0, rotating: false },
        Band::Rotation => FlightState { altitude: 30.0, rotating: true },
    }
}

const BANDS: [Band; 3] = [Band::LowAltitude, Band::HighAltitude, Band::Rotation];

fn table1_defaults() -> Outcome {
    let p = default_link_params();
    for (i, band) in BANDS.iter().enumerate() {
        let (dl, ul, rtt) = MEASURED_BANDS[i];
        let got = &p[i];
        ensure(got.band == *band, || format!("slot {i} holds {}", got.band))?;
        ensure(got.dl_mean == dl && got.ul_mean == ul && got.rtt_mean == rtt, || {
            format!("{band}: got {}/{}/{}, want {dl}/{ul}/{rtt}", got.dl_mean, got.ul_mean, got.rtt_mean)
        })?;
        ensure(got.ul_std == UL_STD && got.dl_std == DL_STD, || format!("{band}: std {}/{}", got.ul_std, got.dl_std))?;
    }
    Ok("3 bands exact".into())
}

fn monte_carlo_fidelity() -> Outcome {
    const N: usize = 10_000;
    let link = LinkModel { noise_seed: 2024, ..LinkModel::default() };
    let mut worst = (0.0f64, 0.0f64);
    for (i, band) in BANDS.iter().enumerate() {
        for dir in [Direction::Ul, Direction::Dl] {
            let (dl, ul, _) = MEASURED_BANDS[i];
            let (mean, std) = match dir {
                Direction::Ul => (ul, UL_STD),
                Direction::Dl => (dl, DL_STD),
            };
            let xs: Vec<f64> = (0..N)
                .map(|k| link.sample_throughput(k as f64 * 0.25, flight_for(*band), dir).unwrap().throughput)
                .collect();
            let m = xs.iter().sum::<f64>() / N as f64;
            let s = (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (N - 1) as f64).sqrt();
            let (em, es) = ((m - mean).abs() / mean, (s - std).abs() / std);
            worst = (worst.0.max(em), worst.1.max(es));
            ensure(em <= 0.02, || format!("{band} {dir:?}: mean {m:.3} vs {mean} ({:.2}%)", em * 100.0))?;
            ensure(es <= 0.10, || format!("{band} {dir:?}: std {s:.3} vs {std} ({:.2}%)", es * 100.0))?;
        }
    }
    Ok(format!("worst mean error {:.2}%, worst std error {:.2}%", worst.0 * 100.0, worst.1 * 100.0))
}

fn streaming_feasibility() -> Outcome {
    let link = LinkModel::default();
    for band in BANDS {
        let f25 = uplink_feasibility(&link, 25.0, band, 0.0);
        let f150 = uplink_feasibility(&link, 150.0, band, 0.0);
        ensure(f25.sustainable, || format!("25 Mbps unsustainable in {band}"))?;
        ensure(!f150.sustainable, || format!("150 Mbps sustainable in {band}"))?;
    }
    Ok("25 Mbps sustainable in 3/3 bands, 150 Mbps in 0/3".into())
}

fn additivity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut local = 0;
    for case in 0..10_000u64 {
        let nodes = NodeSet::new(
            [NodeKind::Uav5gp, NodeKind::Ecs, NodeKind::Gcs]
                .into_iter()
                .enumerate()
                .map(|(id, kind)| {
                    let mut n = NodeProfile::default_for(id, kind);
                    n.compute_capacity = rng.random_range(0.5..200.0);
                    n
                })
                .collect(),
        )
        .unwrap();
        let program = ProgramSpec {
            id: ProgramId::new("p"),
            task_kind: TaskKind::ObjectDetection,
            compute_cost: rng.random_range(0.0..50.0),
            input_payload: rng.random_range(0.0..1e8),
            output_payload: rng.random_range(0.0..1e8),
            encode_cost: rng.random_range(0.0..5.0),
            decode_cost: rng.random_range(0.0..5.0),
            consumer: None,
        };
        let placement = PipelinePlacement::new(rng.random_range(0..3), rng.random_range(0..3), rng.random_range(0..3));
        let net = Network::new(LinkModel {
            noise_seed: case,
            variance_scale: rng.random_range(0.0..2.0),
            ..LinkModel::default()
        });
        let flight = FlightState { altitude: rng.random_range(0.0..=100.0), rotating: rng.random_bool(0.3) };
        let b = e2e_latency(&program, placement, &nodes, &net, rng.random_range(0.0..1000.0), flight)
            .map_err(|e| format!("case {case}: {e}"))?;
        ensure(b.t_e2e == b.t_enc + b.t_comm + b.t_dec + b.t_proc, || format!("case {case}: {b:?} not additive"))?;
        if placement.is_local() {
            local += 1;
            ensure(b.t_enc == 0.0 && b.t_comm == 0.0 && b.t_dec == 0.0, || format!("case {case}: local {b:?}"))?;
        }
    }
    Ok(format!("10000 cases exact, {local} local"))
}

fn policy_optimality() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut decisions, mut ties) = (0, 0);
    for trial in 0..1000u64 {
        let inst = random_instance(&mut rng, 5, 10);
        let (nodes, tables, net) = (inst.nodes(), inst.tables(), inst.network(trial));
        for p in &inst.programs {
            let cands = candidates_for(&p.id, &tables, &nodes);
            let got = select_server(p, &cands, &nodes, &net, trial as f64, inst.flight);
            match (inst.best(p), got) {
                (None, Err(_)) => {}
                (Some((server, terms)), Ok(d)) => {
                    decisions += 1;
                    let tied = inst
                        .candidates(p.id.as_str())
                        .iter()
                        .filter(|(s, adv)| *s != server && inst.latency(p, *s, *adv).4 == terms.4)
                        .count();
                    ties += usize::from(tied > 0);
                    ensure(d.chosen_server == server && d.predicted.t_e2e == terms.4, || {
                        format!(
                            "trial {trial} {}: chose {} ({}), oracle {server} ({})",
                            p.id, d.chosen_server, d.predicted.t_e2e, terms.4
                        )
                    })?;
                }
                (want, got) => return Err(format!("trial {trial} {}: oracle {want:?}, policy {got:?}", p.id)),
            }
        }
    }
    Ok(format!("1000/1000 instances, {decisions} decisions, {ties} with exact t_e2e ties"))
}

fn offload_crossover() -> Outcome {
    let nodes = NodeSet::new(vec![
        NodeProfile::default_for(0, NodeKind::Uav5gp).with_programs(["p"]),
        NodeProfile::default_for(1, NodeKind::Ecs),
        NodeProfile::default_for(2, NodeKind::Gcs),
    ])
    .unwrap();
    let tables = ProgramTables::new([ProgramTableEntry {
        server_id: 2,
        program_id: ProgramId::new("p"),
        capable: true,
        advertised_latency: 0.0,
    }])
    .unwrap();
    let net = Network::new(LinkModel::default());
    let costs: Vec<f64> = (0..=8).map(|i| 10f64.powf(-2.0 + 0.5 * i as f64)).collect();
    let payloads: Vec<f64> = (0..=6).map(|i| 10f64.powi(3 + i)).collect();
    let choose = |cost: f64, payload: f64, band: Band| {
        let p = ProgramSpec {
            id: ProgramId::new("p"),
            task_kind: TaskKind::ObjectDetection,
            compute_cost: cost,
            input_payload: payload,
            output_payload: payload / 100.0,
            encode_cost: 0.0,
            decode_cost: 0.0,
            consumer: None,
        };
        let c = candidates_for(&p.id, &tables, &nodes);
        select_server(&p, &c, &nodes, &net, 0.0, flight_for(band)).unwrap().chosen_server
    };
    let (mut local, mut gcs) = (0, 0);
    for band in [Band::LowAltitude, Band::HighAltitude] {
        for &c in &costs {
            for &b in &payloads {
                match choose(c, b, band) {
                    UAV_NODE => local += 1,
                    2 => gcs += 1,
                    other => return Err(format!("unexpected server {other}")),
                }
            }
        }
    }
    let degraded_light = choose(costs[0], *payloads.last().unwrap(), Band::HighAltitude);
    let good_heavy = choose(*costs.last().unwrap(), payloads[0], Band::LowAltitude);
    ensure(degraded_light == UAV_NODE, || format!("light job on degraded link went to {degraded_light}"))?;
    ensure(good_heavy == 2, || format!("heavy job on good link went to {good_heavy}"))?;
    Ok(format!("{local} grid points local, {gcs} on GCS"))
}

fn random_mission(rng: &mut impl Rng) -> Scenario {
    let mut sc = Scenario::reference();
    sc.set_seed(rng.random());
    sc.t_int = *[0.5, 1.0, 2.0, 5.0][..].get(rng.random_range(0..4)).unwrap();
    let scale = rng.random_range(0.5..3.0);
    for p in sc.programs.values_mut() {
        p.input_payload *= scale;
        p.output_payload *= scale;
    }
    for server in [1, 2] {
        sc.faults
            .insert(server, Fault { loss_probability: rng.random_range(0.0..0.6), unreachable: rng.random_bool(0.05) });
    }
    sc.check().expect("randomized mission stays valid");
    sc
}

fn protocol_conservation() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (mut entries, mut timeouts) = (0, 0);
    for i in 0..100 {
        let sc = random_mission(&mut rng);
        let out = run(&sc).map_err(|e| format!("run {i}: {e}"))?;
        let c = out.metrics.counts;
        ensure(c.requests == c.responses + c.timeouts, || format!("run {i}: {c:?}"))?;
        let seen = check_trace(&out.trace).map_err(|e| format!("run {i}: {e}"))?;
        ensure(seen == c.requests, || format!("run {i}: trace has {seen} entries, counters {}", c.requests))?;
        entries += c.requests;
        timeouts += c.timeouts;
    }
    Ok(format!("100 runs, {entries} entries, {timeouts} timeouts"))
}

fn artifact_bytes(sc: &Scenario) -> Vec<Vec<u8>> {
    let out = run(sc).unwrap();
    let mut files = vec![Vec::new(); 5];
    write_trace(&out.trace, &mut files[0]).unwrap();
    write_metrics_csv(&out.metrics, &mut files[1]).unwrap();
    write_tasks_csv(&out.metrics, &mut files[2]).unwrap();
    write_link_samples_csv(&out.metrics, &mut files[3]).unwrap();
    files[4] = summary_json(&Summary::from_metrics(&sc.name, sc.seed, &out.metrics)).into_bytes();
    files
}

fn determinism() -> Outcome {
    let mut sc = Scenario::reference();
    sc.set_seed(42);
    let a = artifact_bytes(&sc);
    let b = artifact_bytes(&sc);
    ensure(a == b, || "artifacts differ between runs".into())?;
    Ok(format!("{} trace bytes identical", a[0].len()))
}

fn reference_mission() -> Outcome {
    let sc = Scenario::reference();
    let out = run(&sc).map_err(|e| e.to_string())?;
    let m = &out.metrics;
    let battery = sc.nodes.uav().battery_budget.unwrap();
    ensure(m.end_time <= battery, || format!("ended at {} s, battery {battery} s", m.end_time))?;
    ensure(m.moments.all_set(), || format!("moments incomplete: {:?}", m.moments))?;
    ensure(m.moments.is_consistent(), || format!("moments out of order: {:?}", m.moments))?;
    let summary = Summary::from_metrics(&sc.name, sc.seed, m);
    let golden: Summary = serde_json::from_str(GOLDEN_SUMMARY).map_err(|e| e.to_string())?;
    let got = summary.reported_to_virtual_awareness.ok_or("no reported->virtual_awareness duration")?;
    let want = golden.reported_to_virtual_awareness.unwrap();
    ensure((got - want).abs() <= 1e-9 * want, || format!("reported->virtual_awareness {got} s, golden {want} s"))?;
    ensure(summary.counts == golden.counts && summary.moments.all_set(), || {
        format!("counts {:?}, golden {:?}", summary.counts, golden.counts)
    })?;
    Ok(format!("reported->virtual_awareness {got:.3} s, ended {:?} at {} s", m.end_reason, m.end_time))
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("channel defaults equal the measurement table", Duration::from_secs(1), table1_defaults),
        ("Monte Carlo link fidelity", Duration::from_secs(5), monte_carlo_fidelity),
        ("uplink streaming feasibility", Duration::from_secs(1), streaming_feasibility),
        ("end-to-end latency additivity", Duration::from_secs(5), additivity),
        ("policy matches brute-force argmin", Duration::from_secs(10), policy_optimality),
        ("local/GCS offload crossover", Duration::from_secs(5), offload_crossover),
        ("protocol conservation and gating", Duration::from_secs(30), protocol_conservation),
        ("bit-exact determinism", Duration::from_secs(5), determinism),
        ("urban-fire reference mission", Duration::from_secs(10), reference_mission),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, limit, check)) in criteria.iter().enumerate() {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or(p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default())
        });
        let elapsed = start.elapsed();
        let result = result.and_then(|d| {
            if elapsed <= *limit {
                Ok(d)
            } else {
                Err(format!("{d}; took {elapsed:.2?}, limit {limit:?}"))
            }
        });
        let (tag, detail) = match &result {
            Ok(d) => ("PASS", d),
            Err(e) => {
                failed += 1;
                ("FAIL", e)
            }
        };
        println!("criterion {} [{tag}] {name}: {detail} ({:.0?})", i + 1, elapsed);
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
