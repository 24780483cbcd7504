//! Acceptance checks for the simulator. Prints one PASS/FAIL line per
//! criterion and exits non-zero if any criterion fails.

use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet};
use std::io::{self, Write};
use std::rc::Rc;
use std::thread;

use sha2::{Digest, Sha256};

use lspsim::ids::{GeneratorId, NodeId};
use lspsim::kernel::rng::{Exponential, RngStream};
use lspsim::kernel::{EventKind, FacilityId, Kernel, RequestOutcome, TokenId};
use lspsim::netshell::{DeliveryRecord, GeneratorKind, GeneratorSpec, MsgKind, TrafficGenerator};
use lspsim::scenario::{self, RunReport, ScenarioConfig, Simulation};

const CASE_STUDY: &str = include_str!("../scenarios/case_study.scn");

const LINK_DELAY: f64 = 0.010;
const TX_TIME: f64 = 512.0 * 8.0 / 1e7;
const PRE_FAILURE_DELAY: f64 = 5.0 * (LINK_DELAY + TX_TIME);
const POST_FAILURE_DELAY: f64 = 7.0 * (LINK_DELAY + TX_TIME);
const INTERVAL: f64 = 512.0 * 8.0 / 64000.0;
const EXACT: f64 = 1e-9;
const VOIP: GeneratorId = GeneratorId(1);

struct Outcome {
    name: &'static str,
    pass: bool,
    detail: String,
}

fn outcome(name: &'static str, pass: bool, detail: String) -> Outcome {
    Outcome { name, pass, detail }
}

fn case_study(seed: Option<u64>) -> ScenarioConfig {
    let mut config = scenario::parse(CASE_STUDY).expect("bundled scenario parses");
    if let Some(seed) = seed {
        config.seed = seed;
    }
    config
}

struct CaseRun {
    config: ScenarioConfig,
    report: RunReport,
    voip: Vec<DeliveryRecord>,
    sim: Simulation,
}

fn run_case(seed: Option<u64>) -> CaseRun {
    let config = case_study(seed);
    let mut sim = Simulation::new(config.clone()).expect("valid scenario");
    let report = sim.run().expect("run completes");
    let voip = sim
        .deliveries()
        .iter()
        .filter(|d| d.flow == VOIP)
        .cloned()
        .collect();
    CaseRun {
        config,
        report,
        voip,
        sim,
    }
}

fn near(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

// 1. Delay before the failure is five hops of propagation plus transmission.
fn pre_failure_delay(run: &CaseRun) -> Outcome {
    let fail_at = run.config.failures[0].fail_at;
    let before: Vec<_> = run.voip.iter().filter(|d| d.arrived_at < fail_at).collect();
    let bad = before
        .iter()
        .filter(|d| !near(d.delay, PRE_FAILURE_DELAY, EXACT))
        .count();
    outcome(
        "pre-failure delay",
        !before.is_empty() && bad == 0,
        format!(
            "{} packets, expected {PRE_FAILURE_DELAY:.7} s, {bad} off",
            before.len()
        ),
    )
}

// 2. After the splice the path is seven hops long.
fn post_failure_delay(run: &CaseRun) -> Outcome {
    let Some(splice) = run.report.splices.first() else {
        return outcome("post-recovery delay", false, "no splice happened".into());
    };
    let after: Vec<_> = run
        .voip
        .iter()
        .filter(|d| d.created_at >= splice.time)
        .collect();
    let bad = after
        .iter()
        .filter(|d| !near(d.delay, POST_FAILURE_DELAY, EXACT))
        .count();
    outcome(
        "post-recovery delay",
        !after.is_empty() && bad == 0,
        format!(
            "{} packets after splice at {:.6} s, expected {POST_FAILURE_DELAY:.7} s, {bad} off",
            after.len(),
            splice.time
        ),
    )
}

// 3. The path change shows up as exactly one jitter sample.
fn jitter_transient(run: &CaseRun) -> Outcome {
    let nonzero: Vec<f64> = run
        .voip
        .iter()
        .map(|d| d.jitter)
        .filter(|j| *j > EXACT)
        .collect();
    let expected = POST_FAILURE_DELAY - PRE_FAILURE_DELAY;
    let pass = nonzero.len() == 1 && near(nonzero[0], expected, EXACT);
    outcome(
        "jitter transient",
        pass,
        format!("nonzero samples {nonzero:?}, expected one of {expected:.7} s"),
    )
}

// Consecutive deliveries of packets emitted back to back within one burst.
fn same_burst(a: &DeliveryRecord, b: &DeliveryRecord) -> bool {
    near(b.created_at - a.created_at, INTERVAL, EXACT)
}

// 4. Within a burst packets arrive one emission interval apart.
fn intra_burst_spacing(run: &CaseRun) -> Outcome {
    let pairs: Vec<_> = run
        .voip
        .windows(2)
        .filter(|w| same_burst(&w[0], &w[1]) && near(w[0].delay, w[1].delay, EXACT))
        .collect();
    let bad = pairs
        .iter()
        .filter(|w| !near(w[1].arrived_at - w[0].arrived_at, INTERVAL, EXACT))
        .count();
    outcome(
        "intra-burst interarrival",
        pairs.len() >= 100 && bad == 0,
        format!("{} pairs, expected {INTERVAL} s, {bad} off", pairs.len()),
    )
}

// 5. The first packet sent after the failure arrives late by a bounded
// amount, and the burst then resumes its regular spacing.
fn recovery_gap(run: &CaseRun) -> Outcome {
    let fail_at = run.config.failures[0].fail_at;
    let Some(first) = run.voip.iter().position(|d| d.created_at > fail_at) else {
        return outcome("recovery gap", false, "nothing delivered after failure".into());
    };
    if first == 0 {
        return outcome("recovery gap", false, "no delivery before failure".into());
    }
    let prev = &run.voip[first - 1];
    let cur = &run.voip[first];
    let emitted_gap = (cur.created_at - prev.created_at) / INTERVAL;
    if (emitted_gap - emitted_gap.round()).abs() > 1e-6 {
        return outcome(
            "recovery gap",
            false,
            format!("source was OFF across the failure (seed {})", run.config.seed),
        );
    }
    let delta = cur.arrived_at - prev.arrived_at - INTERVAL;
    let rest: Vec<_> = run.voip[first..]
        .windows(2)
        .take_while(|w| same_burst(&w[0], &w[1]))
        .collect();
    let bad = rest
        .iter()
        .filter(|w| !near(w[1].arrived_at - w[0].arrived_at, INTERVAL, EXACT))
        .count();
    let pass = (0.010..=0.100).contains(&delta) && !rest.is_empty() && bad == 0;
    outcome(
        "recovery gap",
        pass,
        format!(
            "delta {delta:.6} s in [0.010, 0.100], {} following gaps, {bad} off",
            rest.len()
        ),
    )
}

// Drops on either direction of the failed pair inside [fail_at, detection].
fn window_drops(run: &CaseRun) -> Option<u64> {
    let failure = &run.config.failures[0];
    let detected = run
        .report
        .detections
        .iter()
        .filter(|d| {
            (d.node, d.neighbor) == (failure.a, failure.b)
                || (d.node, d.neighbor) == (failure.b, failure.a)
        })
        .map(|d| d.time)
        .fold(None, |m: Option<f64>, t| Some(m.map_or(t, |m| m.min(t))))?;
    let net = run.sim.network();
    let pair: BTreeSet<_> = [failure.a, failure.b].into();
    let count = net
        .drops
        .iter()
        .filter(|d| d.time >= failure.fail_at && d.time <= detected)
        .filter(|d| {
            d.link.is_some_and(|l| {
                let link = net.link(l);
                pair.contains(&link.from) && pair.contains(&link.to)
            })
        })
        .count();
    Some(count as u64)
}

// 6. Loss at the failure stays small across seeds.
fn failure_drops() -> Outcome {
    let seeds: Vec<u64> = (1..=20).collect();
    let counts: Vec<(u64, Option<u64>, u64)> = thread::scope(|s| {
        let handles: Vec<_> = seeds
            .chunks(5)
            .map(|chunk| {
                s.spawn(move || {
                    chunk
                        .iter()
                        .map(|&seed| {
                            let run = run_case(Some(seed));
                            (seed, window_drops(&run), run.report.failures[0].window_drops)
                        })
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("worker"))
            .collect()
    });
    let mut pass = true;
    let mut per_seed = Vec::new();
    for (seed, count, reported) in &counts {
        match count {
            Some(c) => {
                pass &= (1..=15).contains(c) && c == reported;
                per_seed.push(format!("{seed}:{c}"));
            }
            None => {
                pass = false;
                per_seed.push(format!("{seed}:undetected"));
            }
        }
    }
    outcome(
        "drops at failure",
        pass,
        format!("per-seed counts in [1, 15]: {}", per_seed.join(" ")),
    )
}

// 7. The splice itself triggers no path signaling.
fn local_repair_silence(run: &CaseRun) -> Outcome {
    let Some(detected) = run.report.detections.iter().map(|d| d.time).reduce(f64::min) else {
        return outcome("local repair silence", false, "no detection".into());
    };
    let setup_kinds = [
        MsgKind::PathLabelRequest,
        MsgKind::ResvLabelMapping,
        MsgKind::PathDetour,
        MsgKind::Resv,
    ];
    let noisy: Vec<_> = run
        .sim
        .network()
        .signals
        .iter()
        .filter(|s| s.time >= detected && s.time <= 15.0 && setup_kinds.contains(&s.kind))
        .map(|s| format!("{}@{:.6}", s.kind, s.time))
        .collect();
    outcome(
        "local repair silence",
        noisy.is_empty() && !run.report.splices.is_empty(),
        format!("{} setup messages in [{detected:.6}, 15]", noisy.len()),
    )
}

#[derive(Debug, Clone, Copy)]
enum QueueEvent {
    Arrival,
}

// 8. An M/M/1 queue built from one kernel facility against the closed forms.
fn mm1(rho: f64, completions: u64) -> (f64, f64, f64) {
    let mu = 1.0;
    let lambda = rho * mu;
    let mut kernel: Kernel<QueueEvent, ()> = Kernel::new();
    let server = kernel.define_facility("server", 1).unwrap();
    let interarrival = Exponential::new(1.0 / lambda).unwrap();
    let service = Exponential::new(1.0 / mu).unwrap();
    let mut arrivals = RngStream::new(7, 1);
    let mut services = RngStream::new(7, 2);
    kernel
        .schedule(QueueEvent::Arrival, interarrival.sample(&mut arrivals), None)
        .unwrap();
    let mut done = 0;
    while done < completions {
        let event = kernel.cause().expect("arrivals keep the chain alive");
        match event.kind {
            EventKind::User(QueueEvent::Arrival) => {
                let token = kernel.create_token(0, ());
                kernel
                    .request(server, token, 0, service.sample(&mut services))
                    .unwrap();
                kernel
                    .schedule(QueueEvent::Arrival, interarrival.sample(&mut arrivals), None)
                    .unwrap();
            }
            EventKind::Release { facility, server } => {
                let token = kernel.facility(facility).unwrap().in_service(server).unwrap().token;
                kernel.release(facility, server).unwrap();
                kernel.remove_token(token);
                done += 1;
            }
        }
    }
    let report = kernel.facility_stats(server, kernel.now()).unwrap();
    let wq = rho / (mu - lambda);
    (report.utilization, report.mean_wait, wq)
}

fn queueing_validation() -> Outcome {
    let results: Vec<_> = thread::scope(|s| {
        let handles: Vec<_> = [0.3, 0.5, 0.8]
            .into_iter()
            .map(|rho| s.spawn(move || (rho, mm1(rho, 1_000_000))))
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });
    let mut pass = true;
    let mut detail = Vec::new();
    for (rho, (util, wait, wq)) in results {
        pass &= near(util, rho, 0.01) && (wait - wq).abs() <= 0.05 * wq;
        detail.push(format!("rho {rho}: util {util:.4}, Wq {wait:.4} vs {wq:.4}"));
    }
    outcome("M/M/1 validation", pass, detail.join("; "))
}

// 9. Preempted tokens eventually receive exactly their requested service.
fn preemption_conservation() -> Outcome {
    const TOKENS: usize = 10_000;
    let mut kernel: Kernel<QueueEvent, ()> = Kernel::new();
    let facility = kernel.define_facility("stress", 2).unwrap();
    let gap = Exponential::new(1.0).unwrap();
    let work = Exponential::new(1.6).unwrap();
    let mut rng = RngStream::new(11, 1);
    let mut requested: BTreeMap<TokenId, f64> = BTreeMap::new();
    let mut served: BTreeMap<TokenId, f64> = BTreeMap::new();
    let mut running: BTreeMap<TokenId, f64> = BTreeMap::new();
    let mut created = 0;
    let mut preemptions = 0u64;

    // Credits the slice of every token that left service since the last look.
    let settle = |kernel: &Kernel<QueueEvent, ()>,
                      facility: FacilityId,
                      running: &mut BTreeMap<TokenId, f64>,
                      served: &mut BTreeMap<TokenId, f64>| {
        let now: BTreeMap<TokenId, f64> = kernel
            .facility(facility)
            .unwrap()
            .servers_in_use()
            .map(|(_, s)| (s.token, s.started_at))
            .collect();
        for (token, started) in running.iter() {
            if now.get(token) != Some(started) {
                *served.entry(*token).or_default() += kernel.now() - started;
            }
        }
        *running = now;
    };

    kernel
        .schedule(QueueEvent::Arrival, gap.sample(&mut rng), None)
        .unwrap();
    while let Some(event) = kernel.cause() {
        match event.kind {
            EventKind::User(QueueEvent::Arrival) => {
                let priority = (rng.next_f64() * 5.0) as i32;
                let service = work.sample(&mut rng);
                let token = kernel.create_token(priority, ());
                requested.insert(token, service);
                let result = kernel.preempt(facility, token, priority, service).unwrap();
                if let RequestOutcome::Served {
                    preempted: Some(_), ..
                } = result
                {
                    preemptions += 1;
                }
                created += 1;
                if created < TOKENS {
                    kernel
                        .schedule(QueueEvent::Arrival, gap.sample(&mut rng), None)
                        .unwrap();
                }
            }
            EventKind::Release { facility, server } => {
                kernel.release(facility, server).unwrap();
            }
        }
        settle(&kernel, facility, &mut running, &mut served);
    }
    let mut worst: f64 = 0.0;
    let mut missing = 0;
    for (token, want) in &requested {
        match served.get(token) {
            Some(got) => worst = worst.max((got - want).abs()),
            None => missing += 1,
        }
    }
    outcome(
        "preemption conservation",
        requested.len() == TOKENS && missing == 0 && worst <= EXACT && preemptions > 0,
        format!("{TOKENS} tokens, {preemptions} preemptions, max error {worst:.3e} s, {missing} unserved"),
    )
}

#[derive(Clone, Default)]
struct HashSink {
    hasher: Rc<RefCell<Sha256>>,
    bytes: Rc<RefCell<u64>>,
}

impl Write for HashSink {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        self.hasher.borrow_mut().update(buf);
        *self.bytes.borrow_mut() += buf.len() as u64;
        Ok(buf.len())
    }

    fn flush(&mut self) -> io::Result<()> {
        Ok(())
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

// Hashes of packets.csv, summary.txt and the trace, plus the trace length.
fn fingerprint() -> [String; 4] {
    let sink = HashSink::default();
    let mut sim = Simulation::new(case_study(None))
        .unwrap()
        .with_trace(sink.clone());
    let report = sim.run().unwrap();
    let mut csv = Vec::new();
    scenario::write_packets_csv(&mut csv, sim.deliveries()).unwrap();
    let summary = scenario::summary_text(&report);
    drop(sim);
    let trace = hex(&sink.hasher.borrow().clone().finalize());
    let len = sink.bytes.borrow().to_string();
    [
        hex(&Sha256::digest(&csv)),
        hex(&Sha256::digest(summary.as_bytes())),
        trace,
        len,
    ]
}

// 10. Same seed, same bytes.
fn determinism() -> Outcome {
    let (a, b) = thread::scope(|s| {
        let a = s.spawn(fingerprint);
        let b = s.spawn(fingerprint);
        (a.join().unwrap(), b.join().unwrap())
    });
    outcome(
        "determinism",
        a == b && a[3] != "0",
        format!(
            "csv {} summary {} trace {} ({} bytes)",
            &a[0][..12],
            &a[1][..12],
            &a[2][..12],
            a[3]
        ),
    )
}

// 11. The on/off source spends the expected share of time ON.
fn duty_cycle() -> Outcome {
    let spec = GeneratorSpec {
        id: VOIP,
        kind: GeneratorKind::ExpOnOff,
        node: NodeId(1),
        dst: NodeId(2),
        packet_size: 512,
        rate: 64000.0,
        on_mean: Some(1.2),
        off_mean: Some(0.8),
        pareto_shape: None,
        pareto_scale: None,
        start: 0.0,
        policer: None,
    };
    let mut generator = TrafficGenerator::new(spec, RngStream::new(5, 1000)).unwrap();
    let mut now = 0.0;
    generator.start(now);
    while generator.cycles < 20_000 {
        now += generator.emit(now).expect("running source");
    }
    let on = generator.on_time / (generator.on_time + generator.off_time);
    outcome(
        "on/off duty cycle",
        near(on, 0.6, 0.02),
        format!("{} cycles, ON fraction {on:.4}", generator.cycles),
    )
}

fn main() {
    let run = run_case(None);
    let outcomes = vec![
        pre_failure_delay(&run),
        post_failure_delay(&run),
        jitter_transient(&run),
        intra_burst_spacing(&run),
        recovery_gap(&run),
        failure_drops(),
        local_repair_silence(&run),
        queueing_validation(),
        preemption_conservation(),
        determinism(),
        duty_cycle(),
    ];
    let mut failed = 0;
    for (i, o) in outcomes.iter().enumerate() {
        let verdict = if o.pass { "PASS" } else { "FAIL" };
        println!("{verdict} {:>2} {}: {}", i + 1, o.name, o.detail);
        failed += usize::from(!o.pass);
    }
    println!("{} of {} criteria passed", outcomes.len() - failed, outcomes.len());
    io::stdout().flush().ok();
    if failed > 0 {
        std::process::exit(1);
    }
}
