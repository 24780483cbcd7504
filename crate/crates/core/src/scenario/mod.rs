//! Scenario loading and the simulation main loop.
//!
//! A [`Simulation`] builds the topology, LSPs and timers from a
//! [`ScenarioConfig`], then repeatedly takes the head of the event chain and
//! hands it to the network shell or the MPLS control plane until the end
//! event fires.

mod config;
mod output;

use std::collections::BTreeMap;
use std::io::{self, Write};
use std::time::{Duration, Instant};

use thiserror::Error;

pub use config::{parse, FailureSpec, LinkSpec, ParseError, RouteSpec, ScenarioConfig, ScenarioError};
pub use output::{summary_text, write_packets_csv, write_summary, PACKETS_CSV_HEADER};

use crate::events::SimEvent;
use crate::ids::{GeneratorId, LinkId, NodeId};
use crate::kernel::{Event, EventKind};
use crate::mplsctl::{Detection, LspKind, LspState, MplsControl, MplsError, SetupFailure, Splice};
use crate::netshell::{
    ArrivalOutcome, DeliveryRecord, DropRecord, MsgKind, NetError, Network, SimKernel,
};

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ScenarioError),
    #[error("signaling failed: {}", describe_failures(.0))]
    Signaling(Vec<SetupFailure>),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Mpls(#[from] MplsError),
    #[error("{path}: {source}")]
    Io { path: String, source: io::Error },
}

fn describe_failures(failures: &[SetupFailure]) -> String {
    failures
        .iter()
        .map(|f| format!("lsp {} at node {} (t={:.9}): {}", f.lsp, f.node, f.time, f.reason))
        .collect::<Vec<_>>()
        .join("; ")
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowReport {
    pub flow: GeneratorId,
    pub sent: u64,
    pub received: u64,
    pub dropped: u64,
    pub in_flight: u64,
    pub mean_delay: f64,
    pub max_delay: f64,
    pub mean_jitter: f64,
    pub max_jitter: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinkReport {
    pub link: LinkId,
    pub from: NodeId,
    pub to: NodeId,
    pub drops: u64,
    pub utilization: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LspReport {
    pub id: crate::ids::LspId,
    pub kind: LspKind,
    pub state: LspState,
    pub up_at: Option<f64>,
    pub error: Option<String>,
}

/// What happened around one scripted failure.
#[derive(Debug, Clone, PartialEq)]
pub struct FailureReport {
    pub spec: FailureSpec,
    /// First HELLO timeout on either direction of the failed pair.
    pub detected_at: Option<f64>,
    pub detected_by: Option<NodeId>,
    /// Packets lost on the failed pair between failure and detection.
    pub window_drops: u64,
    pub spliced: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub seed: u64,
    pub end: f64,
    pub events: u64,
    pub event_counts: BTreeMap<&'static str, u64>,
    pub flows: Vec<FlowReport>,
    pub links: Vec<LinkReport>,
    pub control_created: BTreeMap<MsgKind, u64>,
    pub control_sent: u64,
    pub control_delivered: u64,
    pub control_dropped: u64,
    pub stale_messages: u64,
    pub lib_misses: u64,
    pub lsps: Vec<LspReport>,
    pub failures: Vec<FailureReport>,
    pub detections: Vec<Detection>,
    pub splices: Vec<Splice>,
    pub recoveries: Vec<(f64, LinkId)>,
    /// Not part of any output file.
    pub runtime: Duration,
}

impl RunReport {
    pub fn flow(&self, id: GeneratorId) -> Option<&FlowReport> {
        self.flows.iter().find(|f| f.flow == id)
    }
}

pub struct Simulation {
    config: ScenarioConfig,
    kernel: SimKernel,
    net: Network,
    mpls: MplsControl,
    deliveries: Vec<DeliveryRecord>,
    trace: Option<Box<dyn Write>>,
    event_counts: BTreeMap<&'static str, u64>,
    events: u64,
    fatal_seen: usize,
}

impl Simulation {
    /// Builds the network and schedules everything that happens at fixed
    /// times: LSP setup at t = 0, generator starts, HELLO and sweep timers,
    /// failures, and the end of the run.
    pub fn new(config: ScenarioConfig) -> Result<Self, SimError> {
        config.validate()?;
        let mut kernel = SimKernel::new();
        let mut net = Network::new();
        // Ends first among events due at the same instant.
        kernel
            .schedule(SimEvent::EndSimulation, config.end, None)
            .map_err(NetError::from)?;
        for _ in 0..config.nodes {
            net.create_node();
        }
        for l in &config.links {
            net.create_duplex_link(&mut kernel, l.a, l.b, l.bandwidth, l.prop_delay)?;
        }
        for r in &config.routes {
            net.add_static_route(r.node, r.dst, r.next_hop)?;
        }
        for g in &config.generators {
            let id = net.add_generator(g.clone(), config.seed)?;
            kernel
                .schedule(SimEvent::StartGenerator { generator: id }, g.start, None)
                .map_err(NetError::from)?;
        }
        for f in &config.failures {
            let (a, b) = (f.a, f.b);
            kernel
                .schedule(SimEvent::LinkStateChange { a, b, up: false }, f.fail_at, None)
                .map_err(NetError::from)?;
            if let Some(at) = f.restore_at {
                kernel
                    .schedule(SimEvent::LinkStateChange { a, b, up: true }, at, None)
                    .map_err(NetError::from)?;
            }
        }
        let mut mpls = MplsControl::new(config.timers, config.seed, &net)?;
        for l in &config.lsps {
            mpls.set_lsp(&mut kernel, &mut net, l.clone())?;
        }
        for b in &config.backups {
            mpls.set_backup_lsp(&mut kernel, &mut net, b.clone())?;
        }
        mpls.start(&mut kernel, &net)?;
        Ok(Self {
            config,
            kernel,
            net,
            mpls,
            deliveries: Vec::new(),
            trace: None,
            event_counts: BTreeMap::new(),
            events: 0,
            fatal_seen: 0,
        })
    }

    /// Writes one line per dispatched event to `sink`.
    pub fn with_trace(mut self, sink: impl Write + 'static) -> Self {
        self.trace = Some(Box::new(sink));
        self
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.config
    }

    pub fn network(&self) -> &Network {
        &self.net
    }

    pub fn mpls(&self) -> &MplsControl {
        &self.mpls
    }

    pub fn kernel(&self) -> &SimKernel {
        &self.kernel
    }

    /// Delivered data packets in arrival order.
    pub fn deliveries(&self) -> &[DeliveryRecord] {
        &self.deliveries
    }

    pub fn drops(&self) -> &[DropRecord] {
        &self.net.drops
    }

    pub fn run(&mut self) -> Result<RunReport, SimError> {
        let started = Instant::now();
        while let Some(event) = self.kernel.cause() {
            self.events += 1;
            let name = match &event.kind {
                EventKind::Release { .. } => "release",
                EventKind::User(e) => e.name(),
            };
            *self.event_counts.entry(name).or_default() += 1;
            if self.trace.is_some() {
                self.trace_event(&event, name)?;
            }
            if self.dispatch(event)? {
                break;
            }
            self.check_signaling()?;
        }
        if let Some(t) = self.trace.as_mut() {
            t.flush().map_err(|source| SimError::Io {
                path: "trace".into(),
                source,
            })?;
        }
        Ok(self.report(started.elapsed()))
    }

    /// Returns true once the end event has fired.
    fn dispatch(&mut self, event: Event<EventKind<SimEvent>>) -> Result<bool, SimError> {
        let (k, net, mpls) = (&mut self.kernel, &mut self.net, &mut self.mpls);
        let token = event.token;
        let need = || token.ok_or(NetError::UnknownToken(crate::kernel::TokenId(0)));
        match event.kind {
            EventKind::Release { facility, server } => {
                net.handle_release(k, facility, server, need()?)?;
            }
            EventKind::User(e) => match e {
                SimEvent::SourceArrival { generator } => {
                    net.next_emission(k, generator)?;
                }
                SimEvent::LinkTransmitRequest { node } => {
                    net.transmit_request(k, &*mpls, need()?, node)?;
                }
                SimEvent::PropagateThroughLink { link } => net.propagate(k, link, need()?)?,
                SimEvent::NodeArrival { node, .. } => {
                    let token = need()?;
                    match net.node_arrival(k, token, node)? {
                        ArrivalOutcome::Delivered(record) => self.deliveries.push(record),
                        ArrivalOutcome::Control => mpls.process_control(k, net, token, node)?,
                        ArrivalOutcome::Forwarded => {}
                    }
                }
                SimEvent::ControlArrival { node } => {
                    mpls.process_control(k, net, need()?, node)?;
                }
                SimEvent::RefreshLspState { lsp } => mpls.on_refresh_timer(k, net, lsp)?,
                SimEvent::GenerateHello { link } => mpls.generate_hello(k, net, link)?,
                SimEvent::TimeoutTrigger => {
                    mpls.timeout_sweep(k)?;
                }
                SimEvent::StartGenerator { generator } => net.start_generator(k, generator)?,
                SimEvent::LinkStateChange { a, b, up } => {
                    if up {
                        net.restore_link(k, a, b)?;
                    } else {
                        net.fail_link(k, a, b)?;
                    }
                }
                SimEvent::EndSimulation => {
                    net.stop_generators();
                    return Ok(true);
                }
            },
        }
        Ok(false)
    }

    fn check_signaling(&mut self) -> Result<(), SimError> {
        let failures = &self.mpls.setup_failures;
        if failures.len() == self.fatal_seen {
            return Ok(());
        }
        let fatal: Vec<SetupFailure> = failures[self.fatal_seen..]
            .iter()
            .filter(|f| f.fatal)
            .cloned()
            .collect();
        self.fatal_seen = failures.len();
        if fatal.is_empty() {
            Ok(())
        } else {
            Err(SimError::Signaling(fatal))
        }
    }

    fn trace_event(
        &mut self,
        event: &Event<EventKind<SimEvent>>,
        name: &str,
    ) -> Result<(), SimError> {
        let mut line = format!("{:.9} {name}", event.fire_time);
        match &event.kind {
            EventKind::Release { facility, server } => {
                let f = self.kernel.facility(*facility).map_err(NetError::from)?;
                line.push_str(&format!(" facility={} server={server}", f.name()));
            }
            EventKind::User(e) => match *e {
                SimEvent::SourceArrival { generator } | SimEvent::StartGenerator { generator } => {
                    line.push_str(&format!(" generator={generator}"));
                }
                SimEvent::LinkTransmitRequest { node } | SimEvent::ControlArrival { node } => {
                    line.push_str(&format!(" node={node}"));
                }
                SimEvent::PropagateThroughLink { link } | SimEvent::GenerateHello { link } => {
                    let l = self.net.link(link);
                    line.push_str(&format!(" link={}-{}", l.from, l.to));
                }
                SimEvent::NodeArrival { node, link } => {
                    let l = self.net.link(link);
                    line.push_str(&format!(" node={node} link={}-{}", l.from, l.to));
                }
                SimEvent::RefreshLspState { lsp } => line.push_str(&format!(" lsp={lsp}")),
                SimEvent::LinkStateChange { a, b, up } => {
                    line.push_str(&format!(" link={a}-{b} up={up}"));
                }
                SimEvent::TimeoutTrigger | SimEvent::EndSimulation => {}
            },
        }
        if let Some(p) = event.token.and_then(|t| self.kernel.token(t)) {
            let p = &p.payload;
            line.push_str(&format!(" packet={} kind={}", p.id, p.kind.as_str()));
            if let Some(l) = p.label {
                line.push_str(&format!(" label={l}"));
            }
        }
        line.push('\n');
        let sink = self.trace.as_mut().expect("checked by caller");
        sink.write_all(line.as_bytes())
            .map_err(|source| SimError::Io {
                path: "trace".into(),
                source,
            })
    }

    fn report(&self, runtime: Duration) -> RunReport {
        let now = self.kernel.now();
        let flows = self
            .net
            .flows()
            .map(|f| FlowReport {
                flow: f.flow,
                sent: f.sent,
                received: f.received,
                dropped: f.dropped,
                in_flight: f.in_flight(),
                mean_delay: f.mean_delay(),
                max_delay: f.max_delay(),
                mean_jitter: f.mean_jitter(),
                max_jitter: f.max_jitter(),
            })
            .collect();
        let links = self
            .net
            .links()
            .iter()
            .map(|l| LinkReport {
                link: l.id,
                from: l.from,
                to: l.to,
                drops: l.drops,
                utilization: self
                    .kernel
                    .facility_stats(l.tx, now)
                    .map(|r| r.utilization)
                    .unwrap_or(0.0),
            })
            .collect();
        let lsps = self
            .mpls
            .lsps()
            .map(|l| LspReport {
                id: l.id,
                kind: l.kind,
                state: l.state,
                up_at: l.up_at,
                error: l.error.clone(),
            })
            .collect();
        let failures = self
            .config
            .failures
            .iter()
            .map(|f| self.failure_report(*f))
            .collect();
        RunReport {
            seed: self.config.seed,
            end: self.config.end,
            events: self.events,
            event_counts: self.event_counts.clone(),
            flows,
            links,
            control_created: self.net.control.created.clone(),
            control_sent: self.net.control.sent,
            control_delivered: self.net.control.delivered,
            control_dropped: self.net.control.dropped,
            stale_messages: self.mpls.stale_messages,
            lib_misses: self.net.lib_misses,
            lsps,
            failures,
            detections: self.mpls.detections.clone(),
            splices: self.mpls.splices.clone(),
            recoveries: self.mpls.recoveries.clone(),
            runtime,
        }
    }

    fn failure_report(&self, spec: FailureSpec) -> FailureReport {
        let pair: Vec<LinkId> = [
            self.net.link_between(spec.a, spec.b),
            self.net.link_between(spec.b, spec.a),
        ]
        .into_iter()
        .flatten()
        .collect();
        let until = spec.restore_at.unwrap_or(f64::INFINITY);
        let first = self
            .mpls
            .detections
            .iter()
            .filter(|d| pair.contains(&d.link) && d.time >= spec.fail_at && d.time <= until)
            .min_by(|a, b| a.time.total_cmp(&b.time));
        let window_end = first.map_or(until.min(self.kernel.now()), |d| d.time);
        let window_drops = self
            .net
            .drops
            .iter()
            .filter(|r| r.link.is_some_and(|l| pair.contains(&l)))
            .filter(|r| r.time >= spec.fail_at && r.time <= window_end)
            .count() as u64;
        let spliced = self
            .mpls
            .detections
            .iter()
            .filter(|d| pair.contains(&d.link) && d.time >= spec.fail_at && d.time <= until)
            .map(|d| d.spliced)
            .sum();
        FailureReport {
            spec,
            detected_at: first.map(|d| d.time),
            detected_by: first.map(|d| d.node),
            window_drops,
            spliced,
        }
    }
}
