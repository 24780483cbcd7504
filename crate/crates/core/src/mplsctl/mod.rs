//! MPLS forwarding state and the RSVP-TE control plane: LSP setup with
//! PATH/RESV signaling, one-to-one detours, bandwidth reservation with
//! sharing between a primary and its detours, soft-state refresh and
//! timeout, HELLO liveness per adjacency, and local fast reroute.
//!
//! Control messages travel as ordinary packets through the network shell;
//! the scenario dispatcher hands every control packet that enters or reaches
//! a node to [`MplsControl::process_control`].

mod hello;
mod ledger;
mod lib_table;
mod lsp;

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

pub use hello::HelloAdjacency;
pub use ledger::{Insufficient, Reservation, ReservationLedger};
pub use lib_table::{LibEntry, NodeLib, FIRST_LABEL};
pub use lsp::{Lsp, LspKind, LspState};

use crate::events::SimEvent;
use crate::ids::{Label, LinkId, LspId, NodeId};
use crate::kernel::rng::{RngStream, Uniform};
use crate::kernel::{KernelError, TokenId};
use crate::netshell::{
    DropCause, LabelDecision, LabelSwitch, MsgKind, NetError, Network, Packet, SimKernel,
};

/// Random stream for HELLO phase offsets.
pub const HELLO_STREAM: u64 = 1;
/// Refresh jitter of LSP `n` uses stream `REFRESH_STREAM_BASE + n`.
pub const REFRESH_STREAM_BASE: u64 = 2_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Timers {
    pub refresh_period: f64,
    pub state_timeout: f64,
    pub hello_interval: f64,
    pub hello_ack_timeout: f64,
    pub sweep_interval: f64,
    pub path_msg_size: u32,
    pub hello_msg_size: u32,
}

impl Default for Timers {
    fn default() -> Self {
        Self {
            refresh_period: 30.0,
            state_timeout: 90.0,
            hello_interval: 0.005,
            hello_ack_timeout: 0.0175,
            sweep_interval: 0.005,
            path_msg_size: 120,
            hello_msg_size: 20,
        }
    }
}

impl Timers {
    pub const KEYS: [&'static str; 7] = [
        "refresh_period",
        "state_timeout",
        "hello_interval",
        "hello_ack_timeout",
        "sweep_interval",
        "path_msg_size",
        "hello_msg_size",
    ];

    /// Sets one timer by its scenario key.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        let seconds = || -> Result<f64, String> {
            value
                .parse::<f64>()
                .map_err(|_| format!("{key}: expected seconds, got {value:?}"))
        };
        let bytes = || -> Result<u32, String> {
            value
                .parse::<u32>()
                .map_err(|_| format!("{key}: expected a byte count, got {value:?}"))
        };
        match key {
            "refresh_period" => self.refresh_period = seconds()?,
            "state_timeout" => self.state_timeout = seconds()?,
            "hello_interval" => self.hello_interval = seconds()?,
            "hello_ack_timeout" => self.hello_ack_timeout = seconds()?,
            "sweep_interval" => self.sweep_interval = seconds()?,
            "path_msg_size" => self.path_msg_size = bytes()?,
            "hello_msg_size" => self.hello_msg_size = bytes()?,
            _ => return Err(format!("unknown timer {key:?}")),
        }
        Ok(())
    }

    /// Current value of a timer, formatted for a scenario file.
    pub fn get(&self, key: &str) -> Option<String> {
        Some(match key {
            "refresh_period" => self.refresh_period.to_string(),
            "state_timeout" => self.state_timeout.to_string(),
            "hello_interval" => self.hello_interval.to_string(),
            "hello_ack_timeout" => self.hello_ack_timeout.to_string(),
            "sweep_interval" => self.sweep_interval.to_string(),
            "path_msg_size" => self.path_msg_size.to_string(),
            "hello_msg_size" => self.hello_msg_size.to_string(),
            _ => return None,
        })
    }

    pub fn validate(&self) -> Result<(), MplsError> {
        let bad = |msg: String| Err(MplsError::InvalidTimers(msg));
        for (name, v) in [
            ("refresh_period", self.refresh_period),
            ("state_timeout", self.state_timeout),
            ("hello_interval", self.hello_interval),
            ("hello_ack_timeout", self.hello_ack_timeout),
            ("sweep_interval", self.sweep_interval),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        if self.state_timeout <= self.refresh_period {
            return bad(format!(
                "state_timeout {} must exceed refresh_period {}",
                self.state_timeout, self.refresh_period
            ));
        }
        if self.hello_ack_timeout <= self.hello_interval {
            return bad(format!(
                "hello_ack_timeout {} must exceed hello_interval {}",
                self.hello_ack_timeout, self.hello_interval
            ));
        }
        if self.path_msg_size == 0 || self.hello_msg_size == 0 {
            return bad("message sizes must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MplsError {
    #[error("invalid timers: {0}")]
    InvalidTimers(String),
    #[error("lsp {0} defined twice")]
    DuplicateLsp(LspId),
    #[error("unknown lsp {0}")]
    UnknownLsp(LspId),
    #[error("lsp {lsp}: {reason}")]
    InvalidRoute { lsp: LspId, reason: String },
    #[error("backup {backup}: {node} is not on the route of lsp {protects}")]
    MergePointOffRoute {
        backup: LspId,
        protects: LspId,
        node: NodeId,
    },
    #[error("backup {backup}: lsp {protects} is not a primary lsp")]
    NotPrimary { backup: LspId, protects: LspId },
    #[error("lsp {0}: bandwidth must be finite and non-negative")]
    InvalidBandwidth(LspId),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
}

/// A primary LSP declaration.
#[derive(Debug, Clone, PartialEq)]
pub struct LspSpec {
    pub id: LspId,
    pub ingress: NodeId,
    pub egress: NodeId,
    pub bandwidth: f64,
    pub route: Vec<NodeId>,
    pub optional: bool,
}

/// A one-to-one detour declaration.
#[derive(Debug, Clone, PartialEq)]
pub struct BackupSpec {
    pub id: LspId,
    pub protects: LspId,
    pub merge_start: NodeId,
    pub merge_end: NodeId,
    pub route: Vec<NodeId>,
}

/// An LSP that could not be established.
#[derive(Debug, Clone, PartialEq)]
pub struct SetupFailure {
    pub time: f64,
    pub lsp: LspId,
    pub node: NodeId,
    pub reason: String,
    /// Whether the failure should abort the run: a non-optional primary.
    pub fatal: bool,
}

/// A HELLO timeout noticed by a sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    pub time: f64,
    pub node: NodeId,
    pub neighbor: NodeId,
    pub link: LinkId,
    pub spliced: usize,
    /// Primary LSPs over the link left without a usable detour.
    pub unprotected: usize,
}

/// One LIB rewrite made by fast reroute.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Splice {
    pub time: f64,
    pub node: NodeId,
    pub primary: LspId,
    pub backup: LspId,
    pub old_next: NodeId,
    pub old_label: Option<Label>,
    pub new_next: NodeId,
    pub new_label: Option<Label>,
}

/// Fields of a control packet needed to process it at one node.
struct Msg {
    kind: MsgKind,
    lsp: Option<LspId>,
    src: NodeId,
    dst: NodeId,
    label: Option<Label>,
    next: Option<NodeId>,
    prev: Option<NodeId>,
}

#[derive(Debug)]
pub struct MplsControl {
    pub timers: Timers,
    seed: u64,
    lsps: BTreeMap<LspId, Lsp>,
    libs: BTreeMap<NodeId, NodeLib>,
    /// (ingress, destination) → LSP whose push rule applies.
    fec: BTreeMap<(NodeId, NodeId), LspId>,
    ledgers: BTreeMap<LinkId, ReservationLedger>,
    adjacencies: BTreeMap<LinkId, HelloAdjacency>,
    /// Detours waiting for their protected LSP to come up.
    pending_backups: BTreeMap<LspId, Vec<LspId>>,
    refresh_rngs: BTreeMap<LspId, RngStream>,
    dead_links: BTreeSet<LinkId>,
    pub detections: Vec<Detection>,
    /// (time, link) of adjacencies answering again after a detection.
    pub recoveries: Vec<(f64, LinkId)>,
    pub splices: Vec<Splice>,
    pub setup_failures: Vec<SetupFailure>,
    pub stale_messages: u64,
}

impl MplsControl {
    /// Control plane for the nodes and links currently in `net`.
    pub fn new(timers: Timers, seed: u64, net: &Network) -> Result<Self, MplsError> {
        timers.validate()?;
        Ok(Self {
            timers,
            seed,
            lsps: BTreeMap::new(),
            libs: net.nodes().iter().map(|n| (n.id, NodeLib::new(n.id))).collect(),
            fec: BTreeMap::new(),
            ledgers: net
                .links()
                .iter()
                .map(|l| (l.id, ReservationLedger::new(l.bandwidth)))
                .collect(),
            adjacencies: BTreeMap::new(),
            pending_backups: BTreeMap::new(),
            refresh_rngs: BTreeMap::new(),
            dead_links: BTreeSet::new(),
            detections: Vec::new(),
            recoveries: Vec::new(),
            splices: Vec::new(),
            setup_failures: Vec::new(),
            stale_messages: 0,
        })
    }

    pub fn lsp(&self, id: LspId) -> Option<&Lsp> {
        self.lsps.get(&id)
    }

    pub fn lsps(&self) -> impl Iterator<Item = &Lsp> {
        self.lsps.values()
    }

    pub fn lib(&self, node: NodeId) -> Option<&NodeLib> {
        self.libs.get(&node)
    }

    pub fn ledger(&self, link: LinkId) -> Option<&ReservationLedger> {
        self.ledgers.get(&link)
    }

    pub fn adjacency(&self, link: LinkId) -> Option<&HelloAdjacency> {
        self.adjacencies.get(&link)
    }

    pub fn adjacencies(&self) -> impl Iterator<Item = &HelloAdjacency> {
        self.adjacencies.values()
    }

    fn validate_route(
        net: &Network,
        lsp: LspId,
        route: &[NodeId],
        start: NodeId,
        end: NodeId,
    ) -> Result<(), MplsError> {
        let invalid = |reason: String| Err(MplsError::InvalidRoute { lsp, reason });
        if route.len() < 2 {
            return invalid("route needs at least two nodes".into());
        }
        if route[0] != start {
            return invalid(format!("route starts at {} instead of {start}", route[0]));
        }
        if route[route.len() - 1] != end {
            return invalid(format!(
                "route ends at {} instead of {end}",
                route[route.len() - 1]
            ));
        }
        let mut seen = BTreeSet::new();
        for n in route {
            if net.node(*n).is_none() {
                return invalid(format!("unknown node {n}"));
            }
            if !seen.insert(*n) {
                return invalid(format!("node {n} appears twice"));
            }
        }
        for w in route.windows(2) {
            if net.link_between(w[0], w[1]).is_none() {
                return invalid(format!("no link {}->{}", w[0], w[1]));
            }
        }
        Ok(())
    }

    /// Declares a primary LSP and sends its PATH_LABEL_REQUEST from the
    /// ingress.
    pub fn set_lsp(
        &mut self,
        kernel: &mut SimKernel,
        net: &mut Network,
        spec: LspSpec,
    ) -> Result<LspId, MplsError> {
        if self.lsps.contains_key(&spec.id) {
            return Err(MplsError::DuplicateLsp(spec.id));
        }
        if !(spec.bandwidth.is_finite() && spec.bandwidth >= 0.0) {
            return Err(MplsError::InvalidBandwidth(spec.id));
        }
        Self::validate_route(net, spec.id, &spec.route, spec.ingress, spec.egress)?;
        let id = spec.id;
        self.lsps.insert(
            id,
            Lsp {
                id,
                kind: LspKind::Primary,
                ingress: spec.ingress,
                egress: spec.egress,
                route: spec.route,
                bandwidth: spec.bandwidth,
                state: LspState::Signaling,
                last_refresh: BTreeMap::new(),
                up_at: None,
                error: None,
                optional: spec.optional,
                refresh_timer: None,
            },
        );
        self.send_along(kernel, net, id, MsgKind::PathLabelRequest)?;
        Ok(id)
    }

    /// Declares a detour for `spec.protects`. Signaling starts once the
    /// protected LSP is up.
    pub fn set_backup_lsp(
        &mut self,
        kernel: &mut SimKernel,
        net: &mut Network,
        spec: BackupSpec,
    ) -> Result<LspId, MplsError> {
        if self.lsps.contains_key(&spec.id) {
            return Err(MplsError::DuplicateLsp(spec.id));
        }
        let protected = self
            .lsps
            .get(&spec.protects)
            .ok_or(MplsError::UnknownLsp(spec.protects))?;
        if !protected.is_primary() {
            return Err(MplsError::NotPrimary {
                backup: spec.id,
                protects: spec.protects,
            });
        }
        let position = |node: NodeId| {
            protected
                .route
                .iter()
                .position(|n| *n == node)
                .ok_or(MplsError::MergePointOffRoute {
                    backup: spec.id,
                    protects: spec.protects,
                    node,
                })
        };
        let start = position(spec.merge_start)?;
        let end = position(spec.merge_end)?;
        if start >= end {
            return Err(MplsError::InvalidRoute {
                lsp: spec.id,
                reason: format!(
                    "merge point {} does not precede {} on lsp {}",
                    spec.merge_start, spec.merge_end, spec.protects
                ),
            });
        }
        Self::validate_route(net, spec.id, &spec.route, spec.merge_start, spec.merge_end)?;
        let (bandwidth, protected_up) = (protected.bandwidth, protected.state == LspState::Up);
        let id = spec.id;
        self.lsps.insert(
            id,
            Lsp {
                id,
                kind: LspKind::Backup {
                    protects: spec.protects,
                    merge_start: spec.merge_start,
                    merge_end: spec.merge_end,
                },
                ingress: spec.merge_start,
                egress: spec.merge_end,
                route: spec.route,
                bandwidth,
                state: LspState::Signaling,
                last_refresh: BTreeMap::new(),
                up_at: None,
                error: None,
                optional: true,
                refresh_timer: None,
            },
        );
        if protected_up {
            self.send_along(kernel, net, id, MsgKind::PathDetour)?;
        } else {
            self.pending_backups.entry(spec.protects).or_default().push(id);
        }
        Ok(id)
    }

    fn message_size(&self, kind: MsgKind) -> u32 {
        match kind {
            MsgKind::Hello | MsgKind::HelloAck => self.timers.hello_msg_size,
            _ => self.timers.path_msg_size,
        }
    }

    fn inject(
        &self,
        kernel: &mut SimKernel,
        net: &mut Network,
        kind: MsgKind,
        route: Vec<NodeId>,
        lsp: Option<LspId>,
        label: Option<Label>,
    ) -> Result<TokenId, MplsError> {
        let mut packet = Packet::control(0, kind, self.message_size(kind), route, kernel.now());
        packet.lsp = lsp;
        packet.label = label;
        Ok(net.inject_control(kernel, packet)?)
    }

    /// Sends a downstream message along the LSP's own route.
    fn send_along(
        &self,
        kernel: &mut SimKernel,
        net: &mut Network,
        lsp: LspId,
        kind: MsgKind,
    ) -> Result<TokenId, MplsError> {
        let route = self.lsps[&lsp].route.clone();
        self.inject(kernel, net, kind, route, Some(lsp), None)
    }

    /// Sends an upstream message along the reversed LSP route.
    fn send_back(
        &self,
        kernel: &mut SimKernel,
        net: &mut Network,
        lsp: LspId,
        kind: MsgKind,
        label: Option<Label>,
    ) -> Result<TokenId, MplsError> {
        let route = self.lsps[&lsp].route.iter().rev().copied().collect();
        self.inject(kernel, net, kind, route, Some(lsp), label)
    }

    fn forward(kernel: &mut SimKernel, token: TokenId, node: NodeId) -> Result<(), MplsError> {
        kernel.schedule(SimEvent::LinkTransmitRequest { node }, 0.0, Some(token))?;
        Ok(())
    }

    fn discard_stale(
        &mut self,
        kernel: &mut SimKernel,
        net: &mut Network,
        token: TokenId,
        node: NodeId,
    ) -> Result<(), MplsError> {
        self.stale_messages += 1;
        net.drop_packet(kernel, token, Some(node), None, DropCause::Stale)?;
        Ok(())
    }

    fn lib_mut(&mut self, node: NodeId) -> &mut NodeLib {
        self.libs
            .entry(node)
            .or_insert_with(|| NodeLib::new(node))
    }

    fn link(net: &Network, from: NodeId, to: NodeId) -> Result<LinkId, MplsError> {
        net.link_between(from, to)
            .ok_or(MplsError::Net(NetError::NoLink { from, to }))
    }

    fn release_reservations(&mut self, lsp: LspId) {
        for ledger in self.ledgers.values_mut() {
            ledger.release(lsp);
        }
    }

    /// Abandons an LSP whose signaling failed at `node`.
    fn fail_setup(&mut self, kernel: &mut SimKernel, lsp: LspId, node: NodeId, reason: String) {
        self.release_reservations(lsp);
        let now = kernel.now();
        let Some(l) = self.lsps.get_mut(&lsp) else {
            return;
        };
        l.state = LspState::TornDown;
        l.error = Some(reason.clone());
        if let Some(timer) = l.refresh_timer.take() {
            kernel.cancel(timer);
        }
        let fatal = l.is_primary() && !l.optional;
        self.setup_failures.push(SetupFailure {
            time: now,
            lsp,
            node,
            reason,
            fatal,
        });
        for backup in self.pending_backups.remove(&lsp).unwrap_or_default() {
            if let Some(b) = self.lsps.get_mut(&backup) {
                b.state = LspState::TornDown;
                b.error = Some(format!("protected lsp {lsp} was not established"));
            }
        }
    }

    /// Handles a control packet that entered the network at, or arrived
    /// at, `node`.
    pub fn process_control(
        &mut self,
        kernel: &mut SimKernel,
        net: &mut Network,
        token: TokenId,
        node: NodeId,
    ) -> Result<(), MplsError> {
        let p = &kernel
            .token(token)
            .ok_or(NetError::UnknownToken(token))?
            .payload;
        let msg = Msg {
            kind: p.kind,
            lsp: p.lsp,
            src: p.src,
            dst: p.dst,
            label: p.label,
            next: p.explicit_next_hop(node),
            prev: p.explicit_prev_hop(node),
        };
        match msg.kind {
            MsgKind::Data => Ok(()),
            MsgKind::Hello => self.on_hello(kernel, net, token, node, &msg),
            MsgKind::HelloAck => self.on_hello_ack(kernel, net, token, node, &msg),
            MsgKind::PathLabelRequest | MsgKind::PathDetour => {
                self.on_path(kernel, net, token, node, &msg)
            }
            MsgKind::ResvLabelMapping | MsgKind::Resv => {
                if node == msg.src {
                    return Self::forward(kernel, token, node);
                }
                self.on_resv(kernel, net, token, node, &msg)
            }
            MsgKind::PathRefresh | MsgKind::ResvRefresh => {
                self.on_refresh(kernel, net, token, node, &msg)
            }
        }
    }

    fn on_hello(
        &mut self,
        kernel: &mut SimKernel,
        net: &mut Network,
        token: TokenId,
        node: NodeId,
        msg: &Msg,
    ) -> Result<(), MplsError> {
        if node == msg.src {
            return Self::forward(kernel, token, node);
        }
        net.consume_control(kernel, token, node)?;
        self.inject(kernel, net, MsgKind::HelloAck, vec![node, msg.src], None, None)?;
        Ok(())
    }

    fn on_hello_ack(
        &mut self,
        kernel: &mut SimKernel,
        net: &mut Network,
        token: TokenId,
        node: NodeId,
        msg: &Msg,
    ) -> Result<(), MplsError> {
        if node == msg.src {
            return Self::forward(kernel, token, node);
        }
        net.consume_control(kernel, token, node)?;
        let now = kernel.now();
        let link = Self::link(net, node, msg.src)?;
        if let Some(adj) = self.adjacencies.get_mut(&link) {
            adj.ack_received(now);
            if self.dead_links.remove(&link) {
                self.recoveries.push((now, link));
            }
        }
        Ok(())
    }

    fn on_path(
        &mut self,
        kernel: &mut SimKernel,
        net: &mut Network,
        token: TokenId,
        node: NodeId,
        msg: &Msg,
    ) -> Result<(), MplsError> {
        let now = kernel.now();
        let Some(id) = msg.lsp else {
            return self.discard_stale(kernel, net, token, node);
        };
        let Some(lsp) = self.lsps.get_mut(&id) else {
            return self.discard_stale(kernel, net, token, node);
        };
        if lsp.state != LspState::Signaling {
            return self.discard_stale(kernel, net, token, node);
        }
        lsp.last_refresh.insert(node, now);
        let kind = lsp.kind;
        let bandwidth = lsp.bandwidth;

        if node == msg.dst {
            net.consume_control(kernel, token, node)?;
            let in_label = self.lib_mut(node).allocate_label();
            let (out_label, next_node) = match kind {
                LspKind::Primary => (None, node),
                LspKind::Backup { protects, .. } => {
                    let protected = &self.lsps[&protects];
                    if node == protected.egress {
                        (None, node)
                    } else {
                        // Merge back into the protected LSP's own swap.
                        let Some(e) = self.libs.get(&node).and_then(|lib| {
                            lib.swap.values().find(|e| e.lsp == protects).copied()
                        }) else {
                            self.fail_setup(
                                kernel,
                                id,
                                node,
                                format!("lsp {protects} has no label state at merge point {node}"),
                            );
                            return Ok(());
                        };
                        (e.out_label, e.next_node)
                    }
                }
            };
            self.lib_mut(node).install_swap(LibEntry {
                node,
                in_label: Some(in_label),
                prev_node: msg.prev,
                out_label,
                next_node,
                lsp: id,
            });
            let reply = match kind {
                LspKind::Primary => MsgKind::ResvLabelMapping,
                LspKind::Backup { .. } => MsgKind::Resv,
            };
            self.send_back(kernel, net, id, reply, Some(in_label))?;
            return Ok(());
        }

        let Some(next) = msg.next else {
            return self.discard_stale(kernel, net, token, node);
        };
        let link = Self::link(net, node, next)?;
        let ledger = self.ledgers.get_mut(&link).expect("ledger per link");
        let shared = match kind {
            LspKind::Backup { protects, .. } => ledger.get(protects).is_some(),
            LspKind::Primary => false,
        };
        if !shared {
            if let Err(e) = ledger.reserve_tentative(id, bandwidth, now) {
                net.drop_packet(kernel, token, Some(node), Some(link), DropCause::Rejected)?;
                self.fail_setup(
                    kernel,
                    id,
                    node,
                    format!(
                        "admission failed on link {node}->{next}: requested {} bit/s, {} available",
                        e.requested, e.available
                    ),
                );
                return Ok(());
            }
        }
        Self::forward(kernel, token, node)
    }

    fn on_resv(
        &mut self,
        kernel: &mut SimKernel,
        net: &mut Network,
        token: TokenId,
        node: NodeId,
        msg: &Msg,
    ) -> Result<(), MplsError> {
        let now = kernel.now();
        let Some(id) = msg.lsp else {
            return self.discard_stale(kernel, net, token, node);
        };
        let state = self.lsps.get(&id).map(|l| l.state);
        let (Some(LspState::Signaling), Some(downstream), Some(out_label)) =
            (state, msg.prev, msg.label)
        else {
            return self.discard_stale(kernel, net, token, node);
        };
        let link = Self::link(net, node, downstream)?;
        if let Some(ledger) = self.ledgers.get_mut(&link) {
            ledger.confirm(id, now);
        }
        let lsp = self.lsps.get_mut(&id).expect("checked");
        lsp.last_refresh.insert(node, now);
        let kind = lsp.kind;

        if node == msg.dst {
            net.consume_control(kernel, token, node)?;
            let entry = LibEntry {
                node,
                in_label: None,
                prev_node: None,
                out_label: Some(out_label),
                next_node: downstream,
                lsp: id,
            };
            let (ingress, egress) = (lsp.ingress, lsp.egress);
            lsp.state = LspState::Up;
            lsp.up_at = Some(now);
            match kind {
                LspKind::Primary => {
                    self.lib_mut(node).install_push(entry);
                    self.fec.entry((ingress, egress)).or_insert(id);
                }
                LspKind::Backup { .. } => self.lib_mut(node).install_dormant(entry),
            }
            self.schedule_refresh(kernel, id)?;
            for backup in self.pending_backups.remove(&id).unwrap_or_default() {
                if self.lsps[&backup].state == LspState::Signaling {
                    self.send_along(kernel, net, backup, MsgKind::PathDetour)?;
                }
            }
            return Ok(());
        }

        let Some(upstream) = msg.next else {
            return self.discard_stale(kernel, net, token, node);
        };
        let lib = self.lib_mut(node);
        let in_label = lib.allocate_label();
        lib.install_swap(LibEntry {
            node,
            in_label: Some(in_label),
            prev_node: Some(upstream),
            out_label: Some(out_label),
            next_node: downstream,
            lsp: id,
        });
        if let Some(t) = kernel.token_mut(token) {
            t.payload.label = Some(in_label);
        }
        Self::forward(kernel, token, node)
    }

    fn on_refresh(
        &mut self,
        kernel: &mut SimKernel,
        net: &mut Network,
        token: TokenId,
        node: NodeId,
        msg: &Msg,
    ) -> Result<(), MplsError> {
        let now = kernel.now();
        let lsp = msg.lsp.and_then(|id| self.lsps.get_mut(&id));
        let Some(lsp) = lsp.filter(|l| l.state == LspState::Up) else {
            return self.discard_stale(kernel, net, token, node);
        };
        lsp.last_refresh.insert(node, now);
        let id = lsp.id;
        if node != msg.dst {
            return Self::forward(kernel, token, node);
        }
        net.consume_control(kernel, token, node)?;
        if msg.kind == MsgKind::PathRefresh {
            self.send_back(kernel, net, id, MsgKind::ResvRefresh, None)?;
        }
        Ok(())
    }

    /// Next refresh gap for `lsp`: uniform on [0.5, 1.5) refresh periods.
    pub(crate) fn refresh_gap(&mut self, lsp: LspId) -> f64 {
        let seed = self.seed;
        let rng = self
            .refresh_rngs
            .entry(lsp)
            .or_insert_with(|| RngStream::new(seed, REFRESH_STREAM_BASE + u64::from(lsp.0)));
        let r = self.timers.refresh_period;
        Uniform::new(0.5 * r, 1.5 * r)
            .expect("refresh period validated positive")
            .sample(rng)
    }

    fn schedule_refresh(&mut self, kernel: &mut SimKernel, lsp: LspId) -> Result<(), MplsError> {
        let gap = self.refresh_gap(lsp);
        let timer = kernel.schedule(SimEvent::RefreshLspState { lsp }, gap, None)?;
        if let Some(l) = self.lsps.get_mut(&lsp) {
            if let Some(old) = l.refresh_timer.replace(timer) {
                kernel.cancel(old);
            }
        }
        Ok(())
    }

    /// Ensures every UP LSP has a pending refresh.
    pub fn refresh_all_lsps(&mut self, kernel: &mut SimKernel) -> Result<(), MplsError> {
        let idle: Vec<LspId> = self
            .lsps
            .values()
            .filter(|l| l.state == LspState::Up)
            .filter(|l| !l.refresh_timer.is_some_and(|t| kernel.is_scheduled(t)))
            .map(|l| l.id)
            .collect();
        for lsp in idle {
            self.schedule_refresh(kernel, lsp)?;
        }
        Ok(())
    }

    /// Refresh timer of one LSP fired: send PATH_REFRESH and re-arm.
    pub fn on_refresh_timer(
        &mut self,
        kernel: &mut SimKernel,
        net: &mut Network,
        lsp: LspId,
    ) -> Result<(), MplsError> {
        let Some(l) = self.lsps.get_mut(&lsp) else {
            return Err(MplsError::UnknownLsp(lsp));
        };
        l.refresh_timer = None;
        if l.state != LspState::Up {
            return Ok(());
        }
        self.send_along(kernel, net, lsp, MsgKind::PathRefresh)?;
        self.schedule_refresh(kernel, lsp)
    }

    /// Creates one HELLO adjacency per simplex link, each with its own phase
    /// offset, and schedules the first sweep.
    pub fn start(&mut self, kernel: &mut SimKernel, net: &Network) -> Result<(), MplsError> {
        let mut rng = RngStream::new(self.seed, HELLO_STREAM);
        let phase = Uniform::new(0.0, self.timers.hello_interval)?;
        for link in net.links() {
            let offset = phase.sample(&mut rng);
            self.adjacencies.insert(
                link.id,
                HelloAdjacency::new(link.id, link.from, link.to, offset),
            );
            kernel.schedule(SimEvent::GenerateHello { link: link.id }, offset, None)?;
        }
        kernel.schedule(SimEvent::TimeoutTrigger, self.timers.sweep_interval, None)?;
        Ok(())
    }

    /// Sends the next HELLO over `link` and schedules the one after.
    pub fn generate_hello(
        &mut self,
        kernel: &mut SimKernel,
        net: &mut Network,
        link: LinkId,
    ) -> Result<(), MplsError> {
        let now = kernel.now();
        let Some(adj) = self.adjacencies.get_mut(&link) else {
            return Ok(());
        };
        adj.hello_sent(now);
        let route = vec![adj.local, adj.neighbor];
        self.inject(kernel, net, MsgKind::Hello, route, None, None)?;
        kernel.schedule(SimEvent::GenerateHello { link }, self.timers.hello_interval, None)?;
        Ok(())
    }

    /// Checks HELLO adjacencies, LSP soft state and unconfirmed
    /// reservations; schedules the next sweep. Returns new detections.
    pub fn timeout_sweep(&mut self, kernel: &mut SimKernel) -> Result<Vec<Detection>, MplsError> {
        let now = kernel.now();
        let timeout = self.timers.hello_ack_timeout;
        let expired: Vec<LinkId> = self
            .adjacencies
            .values()
            .filter(|a| a.expired(now, timeout))
            .map(|a| a.link)
            .collect();
        let mut found = Vec::new();
        for link in expired {
            let adj = self.adjacencies.get_mut(&link).expect("listed above");
            adj.alive = false;
            let (node, neighbor) = (adj.local, adj.neighbor);
            self.dead_links.insert(link);
            let (spliced, unprotected) = self.fast_reroute(now, node, neighbor);
            let d = Detection {
                time: now,
                node,
                neighbor,
                link,
                spliced,
                unprotected,
            };
            self.detections.push(d);
            found.push(d);
        }

        let state_timeout = self.timers.state_timeout;
        let stale: Vec<LspId> = self
            .lsps
            .values()
            .filter(|l| l.state == LspState::Up)
            .filter(|l| l.last_refresh.values().any(|t| now - t > state_timeout))
            .map(|l| l.id)
            .collect();
        for id in stale {
            self.release_reservations(id);
            let l = self.lsps.get_mut(&id).expect("listed above");
            l.state = LspState::TimedOut;
            l.error = Some("soft state expired".into());
            if let Some(timer) = l.refresh_timer.take() {
                kernel.cancel(timer);
            }
        }

        let mut unconfirmed = BTreeSet::new();
        for ledger in self.ledgers.values_mut() {
            unconfirmed.extend(ledger.expire_tentative(now, state_timeout));
        }
        for id in unconfirmed {
            if self.lsps.get(&id).map(|l| l.state) == Some(LspState::Signaling) {
                let node = self.lsps[&id].ingress;
                self.fail_setup(kernel, id, node, "reservation not confirmed in time".into());
            }
        }

        kernel.schedule(SimEvent::TimeoutTrigger, self.timers.sweep_interval, None)?;
        Ok(found)
    }

    /// Moves primary LSPs leaving `node` towards `neighbor` onto their
    /// detours starting at `node`. Rewrites LIB entries only; no message is
    /// sent. Returns (spliced, left unprotected).
    pub fn fast_reroute(&mut self, now: f64, node: NodeId, neighbor: NodeId) -> (usize, usize) {
        let Some(lib) = self.libs.get(&node) else {
            return (0, 0);
        };
        let affected: Vec<LibEntry> = lib
            .push
            .values()
            .chain(lib.swap.values())
            .filter(|e| {
                e.next_node == neighbor
                    && self
                        .lsps
                        .get(&e.lsp)
                        .is_some_and(|l| l.is_primary() && l.state == LspState::Up)
            })
            .copied()
            .collect();

        let (mut spliced, mut unprotected) = (0, 0);
        for entry in affected {
            let dormant = &self.libs[&node].dormant;
            let head = self
                .lsps
                .values()
                .filter(|b| {
                    b.state == LspState::Up
                        && b.protects() == Some(entry.lsp)
                        && b.merge_start() == Some(node)
                })
                .find_map(|b| dormant.get(&b.id).copied());
            let Some(head) = head else {
                unprotected += 1;
                continue;
            };
            let lib = self.libs.get_mut(&node).expect("checked");
            let slot = match entry.in_label {
                None => lib.push.get_mut(&entry.lsp),
                Some(label) => lib.swap.get_mut(&label),
            }
            .expect("entry listed above");
            slot.out_label = head.out_label;
            slot.next_node = head.next_node;
            self.splices.push(Splice {
                time: now,
                node,
                primary: entry.lsp,
                backup: head.lsp,
                old_next: entry.next_node,
                old_label: entry.out_label,
                new_next: head.next_node,
                new_label: head.out_label,
            });
            spliced += 1;
        }
        (spliced, unprotected)
    }
}

impl LabelSwitch for MplsControl {
    fn label_forward(&self, node: NodeId, packet: &Packet) -> LabelDecision {
        let lib = self.libs.get(&node);
        match packet.label {
            Some(label) => match lib.and_then(|l| l.swap.get(&label)) {
                Some(LibEntry {
                    out_label: Some(out_label),
                    next_node,
                    ..
                }) => LabelDecision::Forward {
                    next_hop: *next_node,
                    out_label: *out_label,
                },
                Some(_) => LabelDecision::Pop,
                None => LabelDecision::Miss,
            },
            None => {
                let push = self
                    .fec
                    .get(&(node, packet.dst))
                    .and_then(|lsp| lib.and_then(|l| l.push.get(lsp)));
                match push {
                    Some(LibEntry {
                        out_label: Some(out_label),
                        next_node,
                        ..
                    }) => LabelDecision::Forward {
                        next_hop: *next_node,
                        out_label: *out_label,
                    },
                    _ => LabelDecision::Unlabeled,
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::EventKind;
    use crate::netshell::ArrivalOutcome;

    fn topology(n: u32, links: &[(u32, u32)], bandwidth: f64) -> (SimKernel, Network) {
        let mut kernel = SimKernel::new();
        let mut net = Network::new();
        for _ in 0..n {
            net.create_node();
        }
        for &(a, b) in links {
            net.create_duplex_link(&mut kernel, NodeId(a), NodeId(b), bandwidth, 0.010)
                .unwrap();
        }
        (kernel, net)
    }

    fn line6() -> (SimKernel, Network) {
        topology(6, &[(1, 2), (2, 3), (3, 4), (4, 5), (5, 6)], 10e6)
    }

    fn nodes(ids: &[u32]) -> Vec<NodeId> {
        ids.iter().map(|n| NodeId(*n)).collect()
    }

    fn primary(id: u32, route: &[u32], bandwidth: f64) -> LspSpec {
        LspSpec {
            id: LspId(id),
            ingress: NodeId(route[0]),
            egress: NodeId(*route.last().unwrap()),
            bandwidth,
            route: nodes(route),
            optional: false,
        }
    }

    fn run(k: &mut SimKernel, net: &mut Network, m: &mut MplsControl, until: f64) {
        while k.next_event_time().is_some_and(|t| t <= until) {
            let e = k.cause().unwrap();
            match e.kind {
                EventKind::Release { facility, server } => {
                    net.handle_release(k, facility, server, e.token.unwrap()).unwrap()
                }
                EventKind::User(ev) => match ev {
                    SimEvent::LinkTransmitRequest { node } => {
                        net.transmit_request(k, &*m, e.token.unwrap(), node).unwrap();
                    }
                    SimEvent::PropagateThroughLink { link } => {
                        net.propagate(k, link, e.token.unwrap()).unwrap()
                    }
                    SimEvent::NodeArrival { node, .. } => {
                        let tok = e.token.unwrap();
                        if net.node_arrival(k, tok, node).unwrap() == ArrivalOutcome::Control {
                            m.process_control(k, net, tok, node).unwrap();
                        }
                    }
                    SimEvent::ControlArrival { node } => {
                        m.process_control(k, net, e.token.unwrap(), node).unwrap()
                    }
                    SimEvent::RefreshLspState { lsp } => m.on_refresh_timer(k, net, lsp).unwrap(),
                    SimEvent::GenerateHello { link } => m.generate_hello(k, net, link).unwrap(),
                    SimEvent::TimeoutTrigger => {
                        m.timeout_sweep(k).unwrap();
                    }
                    SimEvent::LinkStateChange { a, b, up } => {
                        if up {
                            net.restore_link(k, a, b).unwrap();
                        } else {
                            net.fail_link(k, a, b).unwrap();
                        }
                    }
                    other => panic!("unexpected {other:?}"),
                },
            }
        }
    }

    #[test]
    fn timers_validation() {
        assert!(Timers::default().validate().is_ok());
        let t = Timers {
            state_timeout: 30.0,
            ..Timers::default()
        };
        assert!(t.validate().is_err());
        let t = Timers {
            hello_ack_timeout: 0.005,
            ..Timers::default()
        };
        assert!(t.validate().is_err());
        let mut t = Timers::default();
        assert!(t.set("sweep_interval", "0.01").is_ok());
        assert_eq!(t.sweep_interval, 0.01);
        assert!(t.set("bogus", "1").is_err());
        assert!(t.set("path_msg_size", "1.5").is_err());
    }

    #[test]
    fn primary_setup_installs_one_entry_per_hop() {
        let (mut k, mut net) = line6();
        let mut m = MplsControl::new(Timers::default(), 1, &net).unwrap();
        m.set_lsp(&mut k, &mut net, primary(1, &[1, 2, 3, 4, 5, 6], 0.0)).unwrap();
        run(&mut k, &mut net, &mut m, 1.0);

        let lsp = m.lsp(LspId(1)).unwrap();
        assert_eq!(lsp.state, LspState::Up);
        // PATH down 5 hops and RESV back 5 hops, 120 B each at 10 Mbit/s
        let hop = 0.010 + 120.0 * 8.0 / 10e6;
        assert!((lsp.up_at.unwrap() - 10.0 * hop).abs() < 1e-12);

        let swaps: usize = (2..=6).map(|n| m.lib(NodeId(n)).unwrap().swap.len()).sum();
        assert_eq!(swaps, 5);
        assert_eq!(m.lib(NodeId(1)).unwrap().push.len(), 1);
        assert!(m.lib(NodeId(1)).unwrap().swap.is_empty());
        let egress = m.lib(NodeId(6)).unwrap().swap.values().next().copied().unwrap();
        assert_eq!(egress.out_label, None);
        assert_eq!(egress.in_label, Some(Label(FIRST_LABEL)));

        // following the chain from the push rule reaches the egress pop
        let mut at = NodeId(1);
        let push = m.lib(at).unwrap().push[&LspId(1)];
        let (mut next, mut label) = (push.next_node, push.out_label);
        let mut hops = 1;
        while let Some(l) = label {
            at = next;
            let e = m.lib(at).unwrap().swap[&l];
            assert!(net.link_between(e.prev_node.unwrap(), at).is_some());
            next = e.next_node;
            label = e.out_label;
            hops += 1;
        }
        assert_eq!((at, hops), (NodeId(6), 6));
        assert_eq!(net.control.created[&MsgKind::PathLabelRequest], 1);
        assert_eq!(net.control.created[&MsgKind::ResvLabelMapping], 1);
        assert_eq!(net.control.in_flight(), 0);
    }

    #[test]
    fn unlabeled_data_gets_pushed_at_ingress() {
        let (mut k, mut net) = line6();
        let mut m = MplsControl::new(Timers::default(), 1, &net).unwrap();
        m.set_lsp(&mut k, &mut net, primary(1, &[1, 2, 3, 4, 5, 6], 0.0)).unwrap();
        run(&mut k, &mut net, &mut m, 1.0);
        let p = Packet::data(1, crate::ids::GeneratorId(1), 512, NodeId(1), NodeId(6), 1.0);
        let push = m.lib(NodeId(1)).unwrap().push[&LspId(1)];
        assert_eq!(
            m.label_forward(NodeId(1), &p),
            LabelDecision::Forward {
                next_hop: NodeId(2),
                out_label: push.out_label.unwrap()
            }
        );
        let mut stray = p.clone();
        stray.label = Some(Label(999));
        assert_eq!(m.label_forward(NodeId(3), &stray), LabelDecision::Miss);
        let mut last = p;
        last.label = Some(Label(FIRST_LABEL));
        assert_eq!(m.label_forward(NodeId(6), &last), LabelDecision::Pop);
    }

    #[test]
    fn over_capacity_request_rejected_at_first_hop() {
        let (mut k, mut net) = line6();
        let mut m = MplsControl::new(Timers::default(), 1, &net).unwrap();
        m.set_lsp(&mut k, &mut net, primary(1, &[1, 2, 3], 10e6 + 1.0)).unwrap();
        run(&mut k, &mut net, &mut m, 1.0);
        let lsp = m.lsp(LspId(1)).unwrap();
        assert_eq!(lsp.state, LspState::TornDown);
        assert_eq!(m.setup_failures.len(), 1);
        assert_eq!(m.setup_failures[0].node, NodeId(1));
        assert!(m.setup_failures[0].fatal);
        assert!(m.ledgers.values().all(|l| l.reserved() == 0.0));
    }

    #[test]
    fn second_reservation_exceeding_link_rejected() {
        let (mut k, mut net) = line6();
        let mut m = MplsControl::new(Timers::default(), 1, &net).unwrap();
        m.set_lsp(&mut k, &mut net, primary(1, &[1, 2, 3], 6e6)).unwrap();
        run(&mut k, &mut net, &mut m, 0.5);
        let mut second = primary(2, &[2, 3, 4], 6e6);
        second.optional = true;
        m.set_lsp(&mut k, &mut net, second).unwrap();
        run(&mut k, &mut net, &mut m, 1.0);
        assert_eq!(m.lsp(LspId(1)).unwrap().state, LspState::Up);
        assert_eq!(m.lsp(LspId(2)).unwrap().state, LspState::TornDown);
        let failure = &m.setup_failures[0];
        assert_eq!((failure.lsp, failure.node, failure.fatal), (LspId(2), NodeId(2), false));
        let l23 = net.link_between(NodeId(2), NodeId(3)).unwrap();
        let l34 = net.link_between(NodeId(3), NodeId(4)).unwrap();
        assert_eq!(m.ledger(l23).unwrap().reserved(), 6e6);
        assert_eq!(m.ledger(l34).unwrap().reserved(), 0.0);
        assert!(!m.ledger(l23).unwrap().get(LspId(1)).unwrap().tentative);
    }

    fn case_topology() -> (SimKernel, Network) {
        topology(
            10,
            &[
                (1, 2),
                (2, 3),
                (3, 4),
                (4, 5),
                (5, 6),
                (2, 7),
                (7, 8),
                (8, 9),
                (9, 4),
                (3, 8),
                (9, 5),
                (3, 10),
                (10, 5),
            ],
            10e6,
        )
    }

    fn detour(id: u32, protects: u32, route: &[u32]) -> BackupSpec {
        BackupSpec {
            id: LspId(id),
            protects: LspId(protects),
            merge_start: NodeId(route[0]),
            merge_end: NodeId(*route.last().unwrap()),
            route: nodes(route),
        }
    }

    #[test]
    fn detour_shares_reservation_with_primary() {
        let (mut k, mut net) = case_topology();
        let mut m = MplsControl::new(Timers::default(), 1, &net).unwrap();
        m.set_lsp(&mut k, &mut net, primary(1, &[1, 2, 3, 4, 5, 6], 2e6)).unwrap();
        m.set_backup_lsp(&mut k, &mut net, detour(2, 1, &[2, 7, 8, 9, 4, 5, 6])).unwrap();
        run(&mut k, &mut net, &mut m, 0.12);
        assert_eq!(m.lsp(LspId(1)).unwrap().state, LspState::Up);
        let ledger_snapshot: Vec<_> = [(4, 5), (5, 6)]
            .iter()
            .map(|&(a, b)| m.ledger(net.link_between(NodeId(a), NodeId(b)).unwrap()).cloned())
            .collect();
        run(&mut k, &mut net, &mut m, 1.0);
        assert_eq!(m.lsp(LspId(2)).unwrap().state, LspState::Up);
        for (i, &(a, b)) in [(4, 5), (5, 6)].iter().enumerate() {
            let link = net.link_between(NodeId(a), NodeId(b)).unwrap();
            assert_eq!(m.ledger(link).cloned(), ledger_snapshot[i]);
            assert!(m.ledger(link).unwrap().get(LspId(2)).is_none());
        }
        for (a, b) in [(2, 7), (7, 8), (8, 9), (9, 4)] {
            let link = net.link_between(NodeId(a), NodeId(b)).unwrap();
            assert_eq!(m.ledger(link).unwrap().get(LspId(2)).unwrap().amount, 2e6);
        }
        // the detour head stays dormant at merge start
        let lib2 = m.lib(NodeId(2)).unwrap();
        assert_eq!(lib2.dormant[&LspId(2)].next_node, NodeId(7));
        assert!(lib2.swap.values().all(|e| e.lsp == LspId(1)));
        assert_eq!(net.control.created[&MsgKind::PathDetour], 1);
        assert_eq!(net.control.created[&MsgKind::Resv], 1);
    }

    #[test]
    fn merge_point_must_be_on_protected_route() {
        let (mut k, mut net) = case_topology();
        let mut m = MplsControl::new(Timers::default(), 1, &net).unwrap();
        m.set_lsp(&mut k, &mut net, primary(1, &[1, 2, 3, 4, 5, 6], 0.0)).unwrap();
        let err = m
            .set_backup_lsp(&mut k, &mut net, detour(2, 1, &[7, 8, 9, 4]))
            .unwrap_err();
        assert_eq!(
            err,
            MplsError::MergePointOffRoute {
                backup: LspId(2),
                protects: LspId(1),
                node: NodeId(7)
            }
        );
        let err = m
            .set_backup_lsp(&mut k, &mut net, detour(3, 9, &[2, 7, 8]))
            .unwrap_err();
        assert_eq!(err, MplsError::UnknownLsp(LspId(9)));
        let err = m
            .set_lsp(&mut k, &mut net, primary(4, &[1, 3], 0.0))
            .unwrap_err();
        assert!(matches!(err, MplsError::InvalidRoute { .. }));
    }

    #[test]
    fn hello_is_answered_on_reverse_link() {
        let (mut k, mut net) = topology(3, &[(2, 3)], 10e6);
        let mut m = MplsControl::new(Timers::default(), 1, &net).unwrap();
        let l23 = net.link_between(NodeId(2), NodeId(3)).unwrap();
        m.adjacencies
            .insert(l23, HelloAdjacency::new(l23, NodeId(2), NodeId(3), 0.0));
        m.generate_hello(&mut k, &mut net, l23).unwrap();
        // stop before the next HELLO leaves
        run(&mut k, &mut net, &mut m, 0.0249);
        assert_eq!(net.control.created[&MsgKind::Hello], 5);
        // HELLOs leaving at 0, 5 and 10 ms reached node 3
        assert_eq!(net.control.created[&MsgKind::HelloAck], 3);
        let adj = m.adjacency(l23).unwrap();
        let rtt = 2.0 * (0.010 + 20.0 * 8.0 / 10e6);
        assert!((adj.last_ack_at.unwrap() - rtt).abs() < 1e-12);
        assert_eq!(adj.acks_received, 1);
        assert!(adj.alive);
        let l32 = net.link_between(NodeId(3), NodeId(2)).unwrap();
        assert!(net.link(l32).drops == 0);
        let node3 = net.node(NodeId(3)).unwrap().counters;
        assert_eq!(node3.received, 3);
    }

    #[test]
    fn refresh_updates_soft_state_at_every_hop() {
        let (mut k, mut net) = line6();
        let mut m = MplsControl::new(Timers::default(), 1, &net).unwrap();
        m.set_lsp(&mut k, &mut net, primary(1, &[1, 2, 3, 4, 5, 6], 0.0)).unwrap();
        run(&mut k, &mut net, &mut m, 50.0);
        let refreshes: Vec<f64> = net
            .signals
            .iter()
            .filter(|s| s.kind == MsgKind::PathRefresh)
            .map(|s| s.time)
            .collect();
        assert!(!refreshes.is_empty());
        let lsp = m.lsp(LspId(1)).unwrap();
        assert_eq!(lsp.state, LspState::Up);
        // node 4 last saw the RESV_REFRESH, 5 hops down and 2 back
        let hop = 0.010 + 120.0 * 8.0 / 10e6;
        let last = *refreshes.last().unwrap();
        assert!((lsp.last_refresh[&NodeId(4)] - (last + 7.0 * hop)).abs() < 1e-9);
        assert!((lsp.last_refresh[&NodeId(6)] - (last + 5.0 * hop)).abs() < 1e-9);
        assert_eq!(
            net.control.created[&MsgKind::ResvRefresh],
            refreshes.len() as u64
        );
    }

    #[test]
    fn refresh_gaps_stay_within_half_to_three_halves_period() {
        let (_, net) = line6();
        let mut m = MplsControl::new(Timers::default(), 7, &net).unwrap();
        let (mut lo, mut hi) = (f64::INFINITY, 0.0_f64);
        for _ in 0..10_000 {
            let g = m.refresh_gap(LspId(1));
            assert!((15.0..45.0).contains(&g), "{g}");
            lo = lo.min(g);
            hi = hi.max(g);
        }
        assert!(lo < 15.1 && hi > 44.9);
    }

    #[test]
    fn healthy_lsp_never_times_out() {
        let (mut k, mut net) = line6();
        let timers = Timers {
            refresh_period: 1.0,
            state_timeout: 3.0,
            ..Timers::default()
        };
        let mut m = MplsControl::new(timers, 3, &net).unwrap();
        m.set_lsp(&mut k, &mut net, primary(1, &[1, 2, 3, 4, 5, 6], 0.0)).unwrap();
        m.start(&mut k, &net).unwrap();
        run(&mut k, &mut net, &mut m, 60.0);
        assert_eq!(m.lsp(LspId(1)).unwrap().state, LspState::Up);
        assert!(m.detections.is_empty());
    }

    #[test]
    fn soft_state_expires_without_refresh() {
        let (mut k, mut net) = line6();
        let timers = Timers {
            refresh_period: 1.0,
            state_timeout: 3.0,
            ..Timers::default()
        };
        let mut m = MplsControl::new(timers, 3, &net).unwrap();
        m.set_lsp(&mut k, &mut net, primary(1, &[1, 2, 3, 4, 5, 6], 1e6)).unwrap();
        m.start(&mut k, &net).unwrap();
        k.schedule(
            SimEvent::LinkStateChange { a: NodeId(3), b: NodeId(4), up: false },
            1.0,
            None,
        )
        .unwrap();
        run(&mut k, &mut net, &mut m, 10.0);
        let lsp = m.lsp(LspId(1)).unwrap();
        assert_eq!(lsp.state, LspState::TimedOut);
        assert!(m.ledgers.values().all(|l| l.get(LspId(1)).is_none()));
    }

    #[test]
    fn splice_rewrites_only_the_detecting_entry() {
        let (mut k, mut net) = case_topology();
        let mut m = MplsControl::new(Timers::default(), 1, &net).unwrap();
        m.set_lsp(&mut k, &mut net, primary(1, &[1, 2, 3, 4, 5, 6], 0.0)).unwrap();
        m.set_backup_lsp(&mut k, &mut net, detour(2, 1, &[2, 7, 8, 9, 4, 5, 6])).unwrap();
        run(&mut k, &mut net, &mut m, 1.0);

        let before = m.lib(NodeId(2)).unwrap().clone();
        let entry = *before.swap.values().find(|e| e.lsp == LspId(1)).unwrap();
        assert_eq!(entry.next_node, NodeId(3));
        let head = before.dormant[&LspId(2)];
        let sent = net.control.sent;

        assert_eq!(m.fast_reroute(2.0, NodeId(2), NodeId(3)), (1, 0));
        let after = &m.lib(NodeId(2)).unwrap().swap[&entry.in_label.unwrap()];
        assert_eq!(after.next_node, NodeId(7));
        assert_eq!(after.out_label, head.out_label);
        assert_eq!(after.in_label, entry.in_label);
        assert_eq!(net.control.sent, sent);
        assert_eq!(m.splices.len(), 1);
        assert_eq!(m.splices[0].old_label, entry.out_label);

        // already spliced: nothing left to move
        assert_eq!(m.fast_reroute(2.0, NodeId(2), NodeId(3)), (0, 0));
        // detour heads only serve their own merge-start node
        assert_eq!(m.fast_reroute(2.0, NodeId(3), NodeId(4)), (0, 1));
    }

    #[test]
    fn reroute_without_backup_splices_nothing() {
        let (mut k, mut net) = line6();
        let mut m = MplsControl::new(Timers::default(), 1, &net).unwrap();
        m.set_lsp(&mut k, &mut net, primary(1, &[1, 2, 3, 4, 5, 6], 0.0)).unwrap();
        run(&mut k, &mut net, &mut m, 1.0);
        assert_eq!(m.fast_reroute(2.0, NodeId(2), NodeId(3)), (0, 1));
        let lib2 = m.lib(NodeId(2)).unwrap();
        assert!(lib2.swap.values().all(|e| e.next_node == NodeId(3)));
    }

    #[test]
    fn hello_timeout_detects_failure_and_splices() {
        let (mut k, mut net) = case_topology();
        let mut m = MplsControl::new(Timers::default(), 11, &net).unwrap();
        m.set_lsp(&mut k, &mut net, primary(1, &[1, 2, 3, 4, 5, 6], 0.0)).unwrap();
        m.set_backup_lsp(&mut k, &mut net, detour(2, 1, &[2, 7, 8, 9, 4, 5, 6])).unwrap();
        m.start(&mut k, &net).unwrap();
        k.schedule(
            SimEvent::LinkStateChange { a: NodeId(2), b: NodeId(3), up: false },
            2.029,
            None,
        )
        .unwrap();
        run(&mut k, &mut net, &mut m, 3.0);
        let l23 = net.link_between(NodeId(2), NodeId(3)).unwrap();
        let d = m.detections.iter().find(|d| d.link == l23).unwrap();
        assert_eq!((d.node, d.spliced), (NodeId(2), 1));
        let t = Timers::default();
        let bound = t.hello_ack_timeout + t.sweep_interval + t.hello_interval;
        assert!(d.time > 2.029 && d.time <= 2.029 + bound, "{}", d.time);
        // only the two directions of the failed pair are declared dead
        assert_eq!(m.detections.len(), 2);
        assert!(m.adjacencies().filter(|a| !a.alive).count() == 2);
    }
}
