use std::collections::BTreeMap;

use crate::ids::{Label, LspId, NodeId};

/// Lowest label handed out by a node.
pub const FIRST_LABEL: u32 = 16;

/// One row of a node's label information base.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LibEntry {
    pub node: NodeId,
    /// `None` for the ingress push rule.
    pub in_label: Option<Label>,
    pub prev_node: Option<NodeId>,
    /// `None` at the egress (pop).
    pub out_label: Option<Label>,
    /// The node itself for a pop entry.
    pub next_node: NodeId,
    pub lsp: LspId,
}

/// Label state of a single node.
#[derive(Debug, Clone)]
pub struct NodeLib {
    pub node: NodeId,
    pub swap: BTreeMap<Label, LibEntry>,
    pub push: BTreeMap<LspId, LibEntry>,
    /// Detour heads kept at a merge-start node until a local repair uses them.
    pub dormant: BTreeMap<LspId, LibEntry>,
    next_label: u32,
}

impl NodeLib {
    pub fn new(node: NodeId) -> Self {
        Self {
            node,
            swap: BTreeMap::new(),
            push: BTreeMap::new(),
            dormant: BTreeMap::new(),
            next_label: FIRST_LABEL,
        }
    }

    pub fn allocate_label(&mut self) -> Label {
        let label = Label(self.next_label);
        self.next_label += 1;
        label
    }

    pub fn install_swap(&mut self, entry: LibEntry) {
        let label = entry.in_label.expect("swap entries have an incoming label");
        self.swap.insert(label, entry);
    }

    pub fn install_push(&mut self, entry: LibEntry) {
        self.push.insert(entry.lsp, entry);
    }

    pub fn install_dormant(&mut self, entry: LibEntry) {
        self.dormant.insert(entry.lsp, entry);
    }

    /// Active entries (push and swap) belonging to `lsp`.
    pub fn entries_for(&self, lsp: LspId) -> impl Iterator<Item = &LibEntry> {
        self.push
            .values()
            .chain(self.swap.values())
            .filter(move |e| e.lsp == lsp)
    }

    pub fn len(&self) -> usize {
        self.swap.len() + self.push.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels_start_at_sixteen_and_increase() {
        let mut lib = NodeLib::new(NodeId(2));
        assert_eq!(lib.allocate_label(), Label(16));
        assert_eq!(lib.allocate_label(), Label(17));
    }
}
