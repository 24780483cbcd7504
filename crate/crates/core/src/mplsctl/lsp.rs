use std::collections::BTreeMap;
use std::fmt;

use crate::ids::{LspId, NodeId};
use crate::kernel::EventId;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LspKind {
    Primary,
    /// One-to-one detour protecting `protects` between two merge points.
    Backup {
        protects: LspId,
        merge_start: NodeId,
        merge_end: NodeId,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum LspState {
    Signaling,
    Up,
    TimedOut,
    TornDown,
}

impl fmt::Display for LspState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LspState::Signaling => "SIGNALING",
            LspState::Up => "UP",
            LspState::TimedOut => "TIMED_OUT",
            LspState::TornDown => "TORN_DOWN",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Lsp {
    pub id: LspId,
    pub kind: LspKind,
    pub ingress: NodeId,
    pub egress: NodeId,
    pub route: Vec<NodeId>,
    /// bit/s; zero means best effort.
    pub bandwidth: f64,
    pub state: LspState,
    /// Soft-state refresh time per node on the route.
    pub last_refresh: BTreeMap<NodeId, f64>,
    pub up_at: Option<f64>,
    /// Why signaling failed, when it did.
    pub error: Option<String>,
    /// Setup failure of an optional LSP does not abort the run.
    pub optional: bool,
    pub(crate) refresh_timer: Option<EventId>,
}

impl Lsp {
    pub fn is_primary(&self) -> bool {
        self.kind == LspKind::Primary
    }

    pub fn protects(&self) -> Option<LspId> {
        match self.kind {
            LspKind::Backup { protects, .. } => Some(protects),
            LspKind::Primary => None,
        }
    }

    pub fn merge_start(&self) -> Option<NodeId> {
        match self.kind {
            LspKind::Backup { merge_start, .. } => Some(merge_start),
            LspKind::Primary => None,
        }
    }

    /// Consecutive node pairs of the route.
    pub fn hops(&self) -> impl Iterator<Item = (NodeId, NodeId)> + '_ {
        self.route.windows(2).map(|w| (w[0], w[1]))
    }
}
