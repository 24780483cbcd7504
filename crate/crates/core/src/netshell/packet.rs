use std::fmt;

use crate::ids::{GeneratorId, Label, LspId, NodeId};

/// Kernel priority of application packets on link transmitters.
pub const DATA_PRIORITY: i32 = 1;
/// Kernel priority of signaling and HELLO traffic.
pub const CONTROL_PRIORITY: i32 = 0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum MsgKind {
    Data,
    PathLabelRequest,
    ResvLabelMapping,
    PathDetour,
    PathRefresh,
    ResvRefresh,
    Hello,
    HelloAck,
    /// Detour confirmation travelling back to the merge-start node.
    Resv,
}

impl MsgKind {
    pub const ALL: [MsgKind; 9] = [
        MsgKind::Data,
        MsgKind::PathLabelRequest,
        MsgKind::ResvLabelMapping,
        MsgKind::PathDetour,
        MsgKind::PathRefresh,
        MsgKind::ResvRefresh,
        MsgKind::Hello,
        MsgKind::HelloAck,
        MsgKind::Resv,
    ];

    pub fn is_control(self) -> bool {
        self != MsgKind::Data
    }

    pub fn as_str(self) -> &'static str {
        match self {
            MsgKind::Data => "DATA",
            MsgKind::PathLabelRequest => "PATH_LABEL_REQUEST",
            MsgKind::ResvLabelMapping => "RESV_LABEL_MAPPING",
            MsgKind::PathDetour => "PATH_DETOUR",
            MsgKind::PathRefresh => "PATH_REFRESH",
            MsgKind::ResvRefresh => "RESV_REFRESH",
            MsgKind::Hello => "HELLO",
            MsgKind::HelloAck => "HELLO_ACK",
            MsgKind::Resv => "RESV",
        }
    }
}

impl fmt::Display for MsgKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum FlowId {
    Generator(GeneratorId),
    Control,
}

impl fmt::Display for FlowId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FlowId::Generator(g) => write!(f, "{g}"),
            FlowId::Control => f.write_str("control"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Packet {
    pub id: u64,
    pub size: u32,
    pub src: NodeId,
    pub dst: NodeId,
    pub label: Option<Label>,
    pub kind: MsgKind,
    pub msg_id: Option<u64>,
    /// Hop-by-hop route for control messages, origin first.
    pub explicit_route: Option<Vec<NodeId>>,
    pub lsp: Option<LspId>,
    pub priority: i32,
    pub created_at: f64,
    pub flow: FlowId,
}

impl Packet {
    pub fn data(id: u64, generator: GeneratorId, size: u32, src: NodeId, dst: NodeId, now: f64) -> Self {
        Self {
            id,
            size,
            src,
            dst,
            label: None,
            kind: MsgKind::Data,
            msg_id: None,
            explicit_route: None,
            lsp: None,
            priority: DATA_PRIORITY,
            created_at: now,
            flow: FlowId::Generator(generator),
        }
    }

    /// A control message following `route` from its first to its last node.
    pub fn control(id: u64, kind: MsgKind, size: u32, route: Vec<NodeId>, now: f64) -> Self {
        debug_assert!(route.len() >= 2, "control route needs two nodes");
        Self {
            id,
            size,
            src: route[0],
            dst: *route.last().expect("non-empty route"),
            label: None,
            kind,
            msg_id: None,
            explicit_route: Some(route),
            lsp: None,
            priority: CONTROL_PRIORITY,
            created_at: now,
            flow: FlowId::Control,
        }
    }

    /// Next node after `node` on the explicit route.
    pub fn explicit_next_hop(&self, node: NodeId) -> Option<NodeId> {
        let route = self.explicit_route.as_ref()?;
        let pos = route.iter().position(|n| *n == node)?;
        route.get(pos + 1).copied()
    }

    /// Node before `node` on the explicit route.
    pub fn explicit_prev_hop(&self, node: NodeId) -> Option<NodeId> {
        let route = self.explicit_route.as_ref()?;
        let pos = route.iter().position(|n| *n == node)?;
        pos.checked_sub(1).map(|p| route[p])
    }

    /// Seconds needed to clock the packet onto a link of `bandwidth` bit/s.
    pub fn transmission_time(&self, bandwidth: f64) -> f64 {
        f64::from(self.size) * 8.0 / bandwidth
    }
}
