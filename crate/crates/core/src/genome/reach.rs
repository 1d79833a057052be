use std::collections::{HashMap, HashSet, VecDeque};

use super::{EdgeId, NodeId, NodeKind, RnnGenome};

/// Elements that lie on an enabled input-to-output path.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Reachable {
    pub nodes: HashSet<NodeId>,
    pub edges: HashSet<EdgeId>,
    pub recurrent_edges: HashSet<EdgeId>,
}

/// Computes the enabled elements that have both a path from some enabled
/// input node and a path to some enabled output node. Recurrent edges count
/// as connectivity in both directions of the search.
pub fn reachable_set(genome: &RnnGenome) -> Reachable {
    let enabled: HashSet<NodeId> = genome.nodes.iter().filter(|n| n.enabled).map(|n| n.innovation_id).collect();

    let mut forward: HashMap<NodeId, Vec<NodeId>> = HashMap::new();
    let mut backward: HashMap<NodeId, Vec<NodeId>> = HashMap::new();
    let links = genome
        .edges
        .iter()
        .filter(|e| e.enabled)
        .map(|e| (e.source, e.target))
        .chain(genome.recurrent_edges.iter().filter(|e| e.enabled).map(|e| (e.source, e.target)));
    for (s, t) in links {
        if enabled.contains(&s) && enabled.contains(&t) {
            forward.entry(s).or_default().push(t);
            backward.entry(t).or_default().push(s);
        }
    }

    let from_inputs = flood(genome, &enabled, NodeKind::Input, &forward);
    let to_outputs = flood(genome, &enabled, NodeKind::Output, &backward);

    let nodes: HashSet<NodeId> = from_inputs.intersection(&to_outputs).copied().collect();
    let edges = genome
        .edges
        .iter()
        .filter(|e| e.enabled && nodes.contains(&e.source) && nodes.contains(&e.target))
        .map(|e| e.innovation_id)
        .collect();
    let recurrent_edges = genome
        .recurrent_edges
        .iter()
        .filter(|e| e.enabled && nodes.contains(&e.source) && nodes.contains(&e.target))
        .map(|e| e.innovation_id)
        .collect();

    Reachable { nodes, edges, recurrent_edges }
}

fn flood(
    genome: &RnnGenome,
    enabled: &HashSet<NodeId>,
    start: NodeKind,
    adjacency: &HashMap<NodeId, Vec<NodeId>>,
) -> HashSet<NodeId> {
    let mut seen = HashSet::new();
    let mut queue: VecDeque<NodeId> = genome
        .nodes
        .iter()
        .filter(|n| n.kind == start && enabled.contains(&n.innovation_id))
        .map(|n| n.innovation_id)
        .collect();
    seen.extend(queue.iter().copied());
    while let Some(id) = queue.pop_front() {
        for &next in adjacency.get(&id).map(Vec::as_slice).unwrap_or(&[]) {
            if seen.insert(next) {
                queue.push_back(next);
            }
        }
    }
    seen
}
