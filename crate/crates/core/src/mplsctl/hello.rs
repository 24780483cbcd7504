use crate::ids::{LinkId, NodeId};

/// HELLO liveness state kept by `local` about `neighbor` over one simplex
/// link. An adjacency counts as alive from its first acknowledged HELLO.
#[derive(Debug, Clone, PartialEq)]
pub struct HelloAdjacency {
    pub link: LinkId,
    pub local: NodeId,
    pub neighbor: NodeId,
    /// Offset of this adjacency's HELLO train within one interval.
    pub phase: f64,
    pub last_ack_at: Option<f64>,
    /// First HELLO sent since the last acknowledgement.
    pub pending_since: Option<f64>,
    pub alive: bool,
    pub hellos_sent: u64,
    pub acks_received: u64,
}

impl HelloAdjacency {
    pub fn new(link: LinkId, local: NodeId, neighbor: NodeId, phase: f64) -> Self {
        Self {
            link,
            local,
            neighbor,
            phase,
            last_ack_at: None,
            pending_since: None,
            alive: false,
            hellos_sent: 0,
            acks_received: 0,
        }
    }

    pub fn hello_sent(&mut self, now: f64) {
        self.hellos_sent += 1;
        if self.pending_since.is_none() {
            self.pending_since = Some(now);
        }
    }

    /// Records an acknowledgement; returns true if this revives the adjacency.
    pub fn ack_received(&mut self, now: f64) -> bool {
        self.acks_received += 1;
        self.last_ack_at = Some(now);
        self.pending_since = None;
        let revived = !self.alive;
        self.alive = true;
        revived
    }

    /// Whether the adjacency has gone silent for longer than `timeout`.
    pub fn expired(&self, now: f64, timeout: f64) -> bool {
        self.alive
            && self.pending_since.is_some()
            && self.last_ack_at.is_some_and(|t| now - t > timeout)
    }
}
