//! Event codes dispatched by a simulation run.

use crate::ids::{GeneratorId, LinkId, LspId, NodeId};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimEvent {
    /// A traffic generator emits its next packet.
    SourceArrival { generator: GeneratorId },
    /// The token's packet at `node` picks a link and asks to transmit.
    LinkTransmitRequest { node: NodeId },
    /// Transmission finished; the packet enters the link medium.
    PropagateThroughLink { link: LinkId },
    /// The packet reached the far end of `link`.
    NodeArrival { node: NodeId, link: LinkId },
    /// A freshly created control message enters the domain at `node`.
    ControlArrival { node: NodeId },
    /// Soft-state refresh timer of one LSP.
    RefreshLspState { lsp: LspId },
    /// HELLO timer of the adjacency over simplex link `link`.
    GenerateHello { link: LinkId },
    TimeoutTrigger,
    StartGenerator { generator: GeneratorId },
    EndSimulation,
    /// Scripted failure (`up = false`) or repair of the duplex pair `a`–`b`.
    LinkStateChange { a: NodeId, b: NodeId, up: bool },
}

impl SimEvent {
    pub fn name(&self) -> &'static str {
        match self {
            SimEvent::SourceArrival { .. } => "source_arrival",
            SimEvent::LinkTransmitRequest { .. } => "link_transmit_request",
            SimEvent::PropagateThroughLink { .. } => "propagate",
            SimEvent::NodeArrival { .. } => "node_arrival",
            SimEvent::ControlArrival { .. } => "control_arrival",
            SimEvent::RefreshLspState { .. } => "refresh_lsp",
            SimEvent::GenerateHello { .. } => "generate_hello",
            SimEvent::TimeoutTrigger => "timeout_trigger",
            SimEvent::StartGenerator { .. } => "start_generator",
            SimEvent::EndSimulation => "end_simulation",
            SimEvent::LinkStateChange { .. } => "link_state",
        }
    }
}
