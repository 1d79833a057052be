use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{EdgeId, NodeId};

/// Run-wide innovation bookkeeping.
///
/// Node ids are always fresh. Edge ids are keyed by `(source, target)` and
/// recurrent edge ids by `(source, target, time_skip)`, so two genomes that
/// independently add the same connection share its id.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct InnovationRegistry {
    next_node_id: NodeId,
    next_edge_id: EdgeId,
    next_recurrent_edge_id: EdgeId,
    edges: HashMap<(NodeId, NodeId), EdgeId>,
    recurrent_edges: HashMap<(NodeId, NodeId, u32), EdgeId>,
}

impl InnovationRegistry {
    pub fn new_node_id(&mut self) -> NodeId {
        let id = self.next_node_id;
        self.next_node_id += 1;
        id
    }

    pub fn edge_id(&mut self, source: NodeId, target: NodeId) -> EdgeId {
        let next = &mut self.next_edge_id;
        *self.edges.entry((source, target)).or_insert_with(|| {
            let id = *next;
            *next += 1;
            id
        })
    }

    pub fn recurrent_edge_id(&mut self, source: NodeId, target: NodeId, time_skip: u32) -> EdgeId {
        let next = &mut self.next_recurrent_edge_id;
        *self.recurrent_edges.entry((source, target, time_skip)).or_insert_with(|| {
            let id = *next;
            *next += 1;
            id
        })
    }

    pub fn next_node_id(&self) -> NodeId {
        self.next_node_id
    }

    pub fn next_edge_id(&self) -> EdgeId {
        self.next_edge_id
    }

    pub fn next_recurrent_edge_id(&self) -> EdgeId {
        self.next_recurrent_edge_id
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_event_same_id() {
        let mut r = InnovationRegistry::default();
        let a = r.edge_id(1, 2);
        let b = r.edge_id(2, 1);
        assert_ne!(a, b);
        assert_eq!(r.edge_id(1, 2), a);

        let x = r.recurrent_edge_id(1, 2, 3);
        let y = r.recurrent_edge_id(1, 2, 4);
        assert_ne!(x, y);
        assert_eq!(r.recurrent_edge_id(1, 2, 3), x);
    }

    #[test]
    fn node_ids_are_fresh_and_monotone() {
        let mut r = InnovationRegistry::default();
        let ids: Vec<_> = (0..5).map(|_| r.new_node_id()).collect();
        assert_eq!(ids, vec![0, 1, 2, 3, 4]);
        assert_eq!(r.next_node_id(), 5);
    }
}
