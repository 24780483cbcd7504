//! Network elements built on the kernel: nodes, simplex links, packets,
//! traffic sources, the policer, static routing, link failures and
//! per-flow delay/jitter measurement.
//!
//! A simplex link is a one-server transmitter facility feeding an
//! infinite-server medium facility; the first models serialization at the
//! link bandwidth, the second the fixed propagation delay.

mod generator;
mod metrics;
mod packet;
mod policer;

use std::collections::{BTreeMap, HashMap};

use thiserror::Error;

pub use generator::{GeneratorKind, GeneratorSpec, GeneratorState, PolicerSpec, TrafficGenerator};
pub use metrics::{DeliveryRecord, FlowMetrics};
pub use packet::{FlowId, MsgKind, Packet, CONTROL_PRIORITY, DATA_PRIORITY};
pub use policer::{Policer, Verdict};

use crate::events::SimEvent;
use crate::ids::{GeneratorId, Label, LinkId, LspId, NodeId};
use crate::kernel::rng::RngStream;
use crate::kernel::{FacilityId, Kernel, KernelError, RequestOutcome, TokenId, MAX_MEDIUM_SERVERS};

pub type SimKernel = Kernel<SimEvent, Packet>;

/// Random stream ids handed to traffic generators start here.
pub const GENERATOR_STREAM_BASE: u64 = 1_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NetError {
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("link endpoints must differ (node {0})")]
    SelfLoop(NodeId),
    #[error("link {from}->{to} already exists")]
    DuplicateLink { from: NodeId, to: NodeId },
    #[error("bandwidth must be positive, got {0}")]
    InvalidBandwidth(f64),
    #[error("propagation delay must be non-negative, got {0}")]
    InvalidDelay(f64),
    #[error("no link {from}->{to}")]
    NoLink { from: NodeId, to: NodeId },
    #[error("unknown generator {0}")]
    UnknownGenerator(GeneratorId),
    #[error("generator {0} defined twice")]
    DuplicateGenerator(GeneratorId),
    #[error("token {0:?} carries no packet")]
    UnknownToken(TokenId),
    #[error("medium of link {0} ran out of servers")]
    MediumSaturated(LinkId),
    #[error(transparent)]
    Kernel(#[from] KernelError),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct NodeCounters {
    /// Packets that arrived over a link.
    pub received: u64,
    /// Packets created at this node.
    pub originated: u64,
    /// Packets consumed here: delivered data or terminated control messages.
    pub delivered: u64,
    pub forwarded: u64,
    pub dropped: u64,
}

#[derive(Debug, Clone)]
pub struct Node {
    pub id: NodeId,
    pub static_routes: BTreeMap<NodeId, LinkId>,
    pub out_links: Vec<LinkId>,
    pub generators: Vec<GeneratorId>,
    pub counters: NodeCounters,
}

#[derive(Debug, Clone)]
pub struct Link {
    pub id: LinkId,
    pub from: NodeId,
    pub to: NodeId,
    /// bit/s
    pub bandwidth: f64,
    /// seconds
    pub prop_delay: f64,
    pub tx: FacilityId,
    pub medium: FacilityId,
    pub up: bool,
    pub drops: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LinkStage {
    Transmit,
    Medium,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum DropCause {
    /// Sent towards a link that is down.
    LinkDown,
    /// On the wire or being serialized when the link failed.
    LinkFailure,
    NoRoute,
    Policer,
    /// Control message for state that no longer exists.
    Stale,
    /// Signaling refused by admission control.
    Rejected,
}

impl DropCause {
    pub fn as_str(self) -> &'static str {
        match self {
            DropCause::LinkDown => "link_down",
            DropCause::LinkFailure => "link_failure",
            DropCause::NoRoute => "no_route",
            DropCause::Policer => "policer",
            DropCause::Stale => "stale",
            DropCause::Rejected => "rejected",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DropRecord {
    pub time: f64,
    pub packet_id: u64,
    pub kind: MsgKind,
    pub flow: FlowId,
    pub node: Option<NodeId>,
    pub link: Option<LinkId>,
    pub cause: DropCause,
}

/// Signaling message creation, for auditing what the control plane sent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignalRecord {
    pub time: f64,
    pub kind: MsgKind,
    pub node: NodeId,
    pub lsp: Option<LspId>,
    pub packet_id: u64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ControlCounters {
    pub sent: u64,
    pub delivered: u64,
    pub dropped: u64,
    pub created: BTreeMap<MsgKind, u64>,
}

impl ControlCounters {
    pub fn in_flight(&self) -> u64 {
        self.sent - self.delivered - self.dropped
    }
}

/// Label-switching decision for a data packet at a node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelDecision {
    /// Send to `next_hop` carrying `out_label` (swap, or push at an ingress).
    Forward { next_hop: NodeId, out_label: Label },
    /// Label removed here; continue by static routing.
    Pop,
    /// The packet carries a label this node does not know.
    Miss,
    /// No label binding applies.
    Unlabeled,
}

/// Forwarding-plane lookup provided by the MPLS layer.
pub trait LabelSwitch {
    fn label_forward(&self, node: NodeId, packet: &Packet) -> LabelDecision;
}

/// Plain IP forwarding: no labels anywhere.
pub struct NoLabels;

impl LabelSwitch for NoLabels {
    fn label_forward(&self, _node: NodeId, _packet: &Packet) -> LabelDecision {
        LabelDecision::Unlabeled
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TransmitOutcome {
    Transmitting(LinkId),
    Queued(LinkId),
    Dropped(DropCause),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ArrivalOutcome {
    Delivered(DeliveryRecord),
    /// A control message; the MPLS layer decides what happens next.
    Control,
    Forwarded,
}

#[derive(Debug, Default)]
pub struct Network {
    nodes: Vec<Node>,
    links: Vec<Link>,
    link_index: HashMap<(NodeId, NodeId), LinkId>,
    facility_owner: HashMap<FacilityId, (LinkId, LinkStage)>,
    generators: BTreeMap<GeneratorId, TrafficGenerator>,
    policers: BTreeMap<GeneratorId, Policer>,
    flows: BTreeMap<GeneratorId, FlowMetrics>,
    pub control: ControlCounters,
    pub drops: Vec<DropRecord>,
    pub signals: Vec<SignalRecord>,
    pub lib_misses: u64,
    next_packet_id: u64,
}

impl Network {
    pub fn new() -> Self {
        Self {
            next_packet_id: 1,
            ..Self::default()
        }
    }

    pub fn create_node(&mut self) -> NodeId {
        let id = NodeId(self.nodes.len() as u32 + 1);
        self.nodes.push(Node {
            id,
            static_routes: BTreeMap::new(),
            out_links: Vec::new(),
            generators: Vec::new(),
            counters: NodeCounters::default(),
        });
        id
    }

    pub fn node(&self, id: NodeId) -> Option<&Node> {
        id.0.checked_sub(1)
            .and_then(|i| self.nodes.get(i as usize))
    }

    fn node_mut(&mut self, id: NodeId) -> Option<&mut Node> {
        id.0.checked_sub(1)
            .and_then(|i| self.nodes.get_mut(i as usize))
    }

    fn check_node(&self, id: NodeId) -> Result<(), NetError> {
        self.node(id).map(|_| ()).ok_or(NetError::UnknownNode(id))
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn link(&self, id: LinkId) -> &Link {
        &self.links[id.0]
    }

    pub fn link_between(&self, from: NodeId, to: NodeId) -> Option<LinkId> {
        self.link_index.get(&(from, to)).copied()
    }

    pub fn facility_owner(&self, facility: FacilityId) -> Option<(LinkId, LinkStage)> {
        self.facility_owner.get(&facility).copied()
    }

    pub fn create_simplex_link(
        &mut self,
        kernel: &mut SimKernel,
        from: NodeId,
        to: NodeId,
        bandwidth: f64,
        prop_delay: f64,
    ) -> Result<LinkId, NetError> {
        self.check_node(from)?;
        self.check_node(to)?;
        if from == to {
            return Err(NetError::SelfLoop(from));
        }
        if !(bandwidth.is_finite() && bandwidth > 0.0) {
            return Err(NetError::InvalidBandwidth(bandwidth));
        }
        if !(prop_delay.is_finite() && prop_delay >= 0.0) {
            return Err(NetError::InvalidDelay(prop_delay));
        }
        if self.link_index.contains_key(&(from, to)) {
            return Err(NetError::DuplicateLink { from, to });
        }
        let id = LinkId(self.links.len());
        let tx = kernel.define_facility(format!("link-{from}-{to}"), 1)?;
        let medium = kernel.define_facility(format!("medium-{from}-{to}"), MAX_MEDIUM_SERVERS)?;
        self.facility_owner.insert(tx, (id, LinkStage::Transmit));
        self.facility_owner.insert(medium, (id, LinkStage::Medium));
        self.links.push(Link {
            id,
            from,
            to,
            bandwidth,
            prop_delay,
            tx,
            medium,
            up: true,
            drops: 0,
        });
        self.link_index.insert((from, to), id);
        self.node_mut(from).expect("checked").out_links.push(id);
        Ok(id)
    }

    /// Two independent simplex links, `a -> b` first.
    pub fn create_duplex_link(
        &mut self,
        kernel: &mut SimKernel,
        a: NodeId,
        b: NodeId,
        bandwidth: f64,
        prop_delay: f64,
    ) -> Result<(LinkId, LinkId), NetError> {
        if self.link_index.contains_key(&(b, a)) {
            return Err(NetError::DuplicateLink { from: b, to: a });
        }
        let ab = self.create_simplex_link(kernel, a, b, bandwidth, prop_delay)?;
        let ba = self.create_simplex_link(kernel, b, a, bandwidth, prop_delay)?;
        Ok((ab, ba))
    }

    pub fn add_static_route(
        &mut self,
        node: NodeId,
        dst: NodeId,
        next_hop: NodeId,
    ) -> Result<(), NetError> {
        self.check_node(dst)?;
        let link = self
            .link_between(node, next_hop)
            .ok_or(NetError::NoLink {
                from: node,
                to: next_hop,
            })?;
        self.node_mut(node)
            .ok_or(NetError::UnknownNode(node))?
            .static_routes
            .insert(dst, link);
        Ok(())
    }

    pub fn add_generator(&mut self, spec: GeneratorSpec, seed: u64) -> Result<GeneratorId, NetError> {
        self.check_node(spec.node)?;
        self.check_node(spec.dst)?;
        let id = spec.id;
        if self.generators.contains_key(&id) {
            return Err(NetError::DuplicateGenerator(id));
        }
        let rng = RngStream::new(seed, GENERATOR_STREAM_BASE + u64::from(id.0));
        if let Some(p) = spec.policer {
            self.policers
                .insert(id, Policer::new(p.rate, p.bucket_size, 0.0));
        }
        let node = spec.node;
        self.generators.insert(id, TrafficGenerator::new(spec, rng)?);
        self.flows.insert(id, FlowMetrics::new(id));
        self.node_mut(node).expect("checked").generators.push(id);
        Ok(id)
    }

    pub fn generator(&self, id: GeneratorId) -> Option<&TrafficGenerator> {
        self.generators.get(&id)
    }

    pub fn generators(&self) -> impl Iterator<Item = &TrafficGenerator> {
        self.generators.values()
    }

    pub fn policer(&self, id: GeneratorId) -> Option<&Policer> {
        self.policers.get(&id)
    }

    pub fn flow(&self, id: GeneratorId) -> Option<&FlowMetrics> {
        self.flows.get(&id)
    }

    pub fn flows(&self) -> impl Iterator<Item = &FlowMetrics> {
        self.flows.values()
    }

    pub fn next_packet_id(&mut self) -> u64 {
        let id = self.next_packet_id;
        self.next_packet_id += 1;
        id
    }

    fn packet(kernel: &SimKernel, token: TokenId) -> Result<&Packet, NetError> {
        kernel
            .token(token)
            .map(|t| &t.payload)
            .ok_or(NetError::UnknownToken(token))
    }

    /// Turns the source on and schedules its first emission now.
    pub fn start_generator(
        &mut self,
        kernel: &mut SimKernel,
        id: GeneratorId,
    ) -> Result<(), NetError> {
        let generator = self
            .generators
            .get_mut(&id)
            .ok_or(NetError::UnknownGenerator(id))?;
        generator.start(kernel.now());
        kernel.schedule(SimEvent::SourceArrival { generator: id }, 0.0, None)?;
        Ok(())
    }

    pub fn stop_generators(&mut self) {
        for g in self.generators.values_mut() {
            g.stop();
        }
    }

    /// Emits one packet from the source and schedules its next emission.
    /// Returns the packet's token unless the policer discarded it.
    pub fn next_emission(
        &mut self,
        kernel: &mut SimKernel,
        id: GeneratorId,
    ) -> Result<Option<TokenId>, NetError> {
        let now = kernel.now();
        let generator = self
            .generators
            .get_mut(&id)
            .ok_or(NetError::UnknownGenerator(id))?;
        let Some(gap) = generator.emit(now) else {
            return Ok(None);
        };
        let (node, dst, size) = (generator.spec.node, generator.spec.dst, generator.spec.packet_size);
        kernel.schedule(SimEvent::SourceArrival { generator: id }, gap, None)?;

        let packet = Packet::data(self.next_packet_id(), id, size, node, dst, now);
        let token = kernel.create_token(packet.priority, packet);
        self.flows.get_mut(&id).expect("flow per generator").sent += 1;
        self.node_mut(node).expect("generator node").counters.originated += 1;

        if let Some(policer) = self.policers.get_mut(&id) {
            if policer.police(size, now) == Verdict::Drop {
                self.drop_packet(kernel, token, Some(node), None, DropCause::Policer)?;
                return Ok(None);
            }
        }
        kernel.schedule(SimEvent::LinkTransmitRequest { node }, 0.0, Some(token))?;
        Ok(Some(token))
    }

    /// Creates a control message and schedules its entry at its first node.
    pub fn inject_control(
        &mut self,
        kernel: &mut SimKernel,
        mut packet: Packet,
    ) -> Result<TokenId, NetError> {
        let now = kernel.now();
        packet.id = self.next_packet_id();
        packet.created_at = now;
        let node = packet.src;
        self.control.sent += 1;
        *self.control.created.entry(packet.kind).or_default() += 1;
        if !matches!(packet.kind, MsgKind::Hello | MsgKind::HelloAck) {
            self.signals.push(SignalRecord {
                time: now,
                kind: packet.kind,
                node,
                lsp: packet.lsp,
                packet_id: packet.id,
            });
        }
        self.node_mut(node)
            .ok_or(NetError::UnknownNode(node))?
            .counters
            .originated += 1;
        let token = kernel.create_token(packet.priority, packet);
        kernel.schedule(SimEvent::ControlArrival { node }, 0.0, Some(token))?;
        Ok(token)
    }

    /// Picks the outgoing link (explicit route, then label switching, then
    /// static routing) and hands the packet to that link's transmitter.
    pub fn transmit_request(
        &mut self,
        kernel: &mut SimKernel,
        labels: &dyn LabelSwitch,
        token: TokenId,
        node: NodeId,
    ) -> Result<TransmitOutcome, NetError> {
        let packet = Self::packet(kernel, token)?;
        let mut new_label = packet.label;
        let next_link = if packet.explicit_route.is_some() {
            packet
                .explicit_next_hop(node)
                .and_then(|next| self.link_between(node, next))
        } else {
            let via_label = if packet.kind == MsgKind::Data {
                match labels.label_forward(node, packet) {
                    LabelDecision::Forward {
                        next_hop,
                        out_label,
                    } => {
                        new_label = Some(out_label);
                        self.link_between(node, next_hop)
                    }
                    LabelDecision::Pop => {
                        new_label = None;
                        None
                    }
                    LabelDecision::Miss => {
                        self.lib_misses += 1;
                        new_label = None;
                        None
                    }
                    LabelDecision::Unlabeled => None,
                }
            } else {
                None
            };
            via_label.or_else(|| {
                self.node(node)
                    .and_then(|n| n.static_routes.get(&packet.dst).copied())
            })
        };

        let Some(link_id) = next_link else {
            self.drop_packet(kernel, token, Some(node), None, DropCause::NoRoute)?;
            return Ok(TransmitOutcome::Dropped(DropCause::NoRoute));
        };
        let link = &self.links[link_id.0];
        debug_assert_eq!(link.from, node);
        if !link.up {
            self.drop_packet(kernel, token, Some(node), Some(link_id), DropCause::LinkDown)?;
            return Ok(TransmitOutcome::Dropped(DropCause::LinkDown));
        }
        let (tx, bandwidth) = (link.tx, link.bandwidth);

        let t = kernel.token_mut(token).ok_or(NetError::UnknownToken(token))?;
        t.payload.label = new_label;
        let priority = t.payload.priority;
        let is_data = t.payload.kind == MsgKind::Data;
        let service = t.payload.transmission_time(bandwidth);
        // Application packets never wait behind signaling in service.
        let outcome = if is_data {
            kernel.preempt(tx, token, priority, service)?
        } else {
            kernel.request(tx, token, priority, service)?
        };
        self.node_mut(node).expect("link source").counters.forwarded += 1;
        Ok(match outcome {
            RequestOutcome::Served { .. } => TransmitOutcome::Transmitting(link_id),
            RequestOutcome::Enqueued => TransmitOutcome::Queued(link_id),
        })
    }

    /// Handles a kernel service completion on one of the link facilities.
    pub fn handle_release(
        &mut self,
        kernel: &mut SimKernel,
        facility: FacilityId,
        server: usize,
        token: TokenId,
    ) -> Result<(), NetError> {
        let (link, stage) = self
            .facility_owner(facility)
            .ok_or(KernelError::UnknownFacility(facility))?;
        kernel.release(facility, server)?;
        match stage {
            LinkStage::Transmit => {
                kernel.schedule(SimEvent::PropagateThroughLink { link }, 0.0, Some(token))?;
            }
            LinkStage::Medium => {
                let node = self.links[link.0].to;
                kernel.schedule(SimEvent::NodeArrival { node, link }, 0.0, Some(token))?;
            }
        }
        Ok(())
    }

    /// Puts a fully transmitted packet on the wire for the link's
    /// propagation delay.
    pub fn propagate(
        &mut self,
        kernel: &mut SimKernel,
        link_id: LinkId,
        token: TokenId,
    ) -> Result<(), NetError> {
        let link = &self.links[link_id.0];
        if !link.up {
            let from = link.from;
            self.drop_packet(kernel, token, Some(from), Some(link_id), DropCause::LinkFailure)?;
            return Ok(());
        }
        let (medium, delay) = (link.medium, link.prop_delay);
        let priority = Self::packet(kernel, token)?.priority;
        match kernel.request(medium, token, priority, delay)? {
            RequestOutcome::Served { .. } => Ok(()),
            RequestOutcome::Enqueued => Err(NetError::MediumSaturated(link_id)),
        }
    }

    /// A packet reached `node`. Data for this node is delivered and
    /// measured, control messages go to the caller, anything else is sent
    /// on.
    pub fn node_arrival(
        &mut self,
        kernel: &mut SimKernel,
        token: TokenId,
        node: NodeId,
    ) -> Result<ArrivalOutcome, NetError> {
        let now = kernel.now();
        let n = self.node_mut(node).ok_or(NetError::UnknownNode(node))?;
        n.counters.received += 1;
        let packet = Self::packet(kernel, token)?;
        if packet.kind.is_control() {
            return Ok(ArrivalOutcome::Control);
        }
        if packet.dst == node {
            let FlowId::Generator(flow) = packet.flow else {
                unreachable!("data packets belong to a generator flow");
            };
            let (id, created) = (packet.id, packet.created_at);
            kernel.remove_token(token);
            let metrics = self.flows.get_mut(&flow).expect("flow per generator");
            let record = metrics.record_delivery(id, created, now);
            self.node_mut(node).expect("checked").counters.delivered += 1;
            return Ok(ArrivalOutcome::Delivered(record));
        }
        kernel.schedule(SimEvent::LinkTransmitRequest { node }, 0.0, Some(token))?;
        Ok(ArrivalOutcome::Forwarded)
    }

    /// A control message ends its journey at `node`.
    pub fn consume_control(
        &mut self,
        kernel: &mut SimKernel,
        token: TokenId,
        node: NodeId,
    ) -> Result<Packet, NetError> {
        let packet = kernel
            .remove_token(token)
            .ok_or(NetError::UnknownToken(token))?
            .payload;
        self.control.delivered += 1;
        if let Some(n) = self.node_mut(node) {
            n.counters.delivered += 1;
        }
        Ok(packet)
    }

    pub fn drop_packet(
        &mut self,
        kernel: &mut SimKernel,
        token: TokenId,
        node: Option<NodeId>,
        link: Option<LinkId>,
        cause: DropCause,
    ) -> Result<Packet, NetError> {
        let packet = kernel
            .remove_token(token)
            .ok_or(NetError::UnknownToken(token))?
            .payload;
        match packet.flow {
            FlowId::Generator(g) => {
                if let Some(f) = self.flows.get_mut(&g) {
                    f.dropped += 1;
                }
            }
            FlowId::Control => self.control.dropped += 1,
        }
        if let Some(n) = node.and_then(|n| self.node_mut(n)) {
            n.counters.dropped += 1;
        }
        if let Some(l) = link {
            self.links[l.0].drops += 1;
        }
        self.drops.push(DropRecord {
            time: kernel.now(),
            packet_id: packet.id,
            kind: packet.kind,
            flow: packet.flow,
            node,
            link,
            cause,
        });
        Ok(packet)
    }

    /// Takes both directions of the duplex pair `a`-`b` down. Packets being
    /// serialized or on the wire are lost; packets already waiting in a
    /// transmitter queue stay there. Returns the number of packets lost.
    pub fn fail_link(
        &mut self,
        kernel: &mut SimKernel,
        a: NodeId,
        b: NodeId,
    ) -> Result<usize, NetError> {
        let mut lost = 0;
        for link_id in self.duplex_pair(a, b)? {
            let link = &mut self.links[link_id.0];
            if !link.up {
                continue;
            }
            link.up = false;
            let (from, tx, medium) = (link.from, link.tx, link.medium);
            kernel.set_facility_up(tx, false)?;
            kernel.set_facility_up(medium, false)?;
            let mut victims = kernel.abort_service(tx)?;
            victims.extend(kernel.abort_service(medium)?);
            for token in victims {
                self.drop_packet(kernel, token, Some(from), Some(link_id), DropCause::LinkFailure)?;
                lost += 1;
            }
        }
        Ok(lost)
    }

    /// Brings both directions back; held packets resume transmission.
    pub fn restore_link(
        &mut self,
        kernel: &mut SimKernel,
        a: NodeId,
        b: NodeId,
    ) -> Result<(), NetError> {
        for link_id in self.duplex_pair(a, b)? {
            let link = &mut self.links[link_id.0];
            if link.up {
                continue;
            }
            link.up = true;
            let (tx, medium) = (link.tx, link.medium);
            kernel.set_facility_up(medium, true)?;
            kernel.set_facility_up(tx, true)?;
        }
        Ok(())
    }

    fn duplex_pair(&self, a: NodeId, b: NodeId) -> Result<Vec<LinkId>, NetError> {
        let pair: Vec<LinkId> = [self.link_between(a, b), self.link_between(b, a)]
            .into_iter()
            .flatten()
            .collect();
        if pair.is_empty() {
            return Err(NetError::NoLink { from: a, to: b });
        }
        Ok(pair)
    }
}
