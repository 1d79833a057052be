//! Reachability against path enumeration and codec round trips.

mod common;

use std::collections::{HashMap, HashSet};

use memevo_core::genome::{deserialize, reachable_set, serialize, CellType, Fitness, NodeId, NodeKind, RnnGenome};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Every node visited by some simple path that starts at one of `starts`.
fn on_simple_paths(starts: &[NodeId], adj: &HashMap<NodeId, Vec<NodeId>>) -> HashSet<NodeId> {
    fn walk(at: NodeId, adj: &HashMap<NodeId, Vec<NodeId>>, path: &mut Vec<NodeId>, seen: &mut HashSet<NodeId>) {
        seen.insert(at);
        for &next in adj.get(&at).into_iter().flatten() {
            if !path.contains(&next) {
                path.push(next);
                walk(next, adj, path, seen);
                path.pop();
            }
        }
    }
    let mut seen = HashSet::new();
    for &s in starts {
        walk(s, adj, &mut vec![s], &mut seen);
    }
    seen
}

fn brute_force_nodes(g: &RnnGenome) -> HashSet<NodeId> {
    let enabled: HashSet<NodeId> = g.nodes.iter().filter(|n| n.enabled).map(|n| n.innovation_id).collect();
    let mut fwd: HashMap<NodeId, Vec<NodeId>> = HashMap::new();
    let mut bwd: HashMap<NodeId, Vec<NodeId>> = HashMap::new();
    let links = g.edges.iter().filter(|e| e.enabled).map(|e| (e.source, e.target));
    let rec = g.recurrent_edges.iter().filter(|e| e.enabled).map(|e| (e.source, e.target));
    for (s, t) in links.chain(rec) {
        if enabled.contains(&s) && enabled.contains(&t) {
            fwd.entry(s).or_default().push(t);
            bwd.entry(t).or_default().push(s);
        }
    }
    let of_kind = |k: NodeKind| -> Vec<NodeId> {
        g.nodes.iter().filter(|n| n.enabled && n.kind == k).map(|n| n.innovation_id).collect()
    };
    let from_in = on_simple_paths(&of_kind(NodeKind::Input), &fwd);
    let to_out = on_simple_paths(&of_kind(NodeKind::Output), &bwd);
    from_in.intersection(&to_out).copied().collect()
}

fn random_ten_node(seed: u64) -> RnnGenome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_in = rng.random_range(1..=3);
    let hidden: Vec<CellType> = (0..9 - n_in).map(|_| CellType::ALL[rng.random_range(0..6)]).collect();
    let mut g = common::random_genome(&mut rng, n_in, &hidden, 10, 1.0);
    for e in &mut g.edges {
        e.enabled = rng.random_bool(0.6);
    }
    for e in &mut g.recurrent_edges {
        e.enabled = rng.random_bool(0.7);
    }
    for n in &mut g.nodes {
        if n.kind == NodeKind::Hidden {
            n.enabled = rng.random_bool(0.8);
        }
    }
    g
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn reachable_nodes_match_path_enumeration(seed in any::<u64>()) {
        let g = random_ten_node(seed);
        prop_assert_eq!(g.nodes.len(), 10);
        let reach = reachable_set(&g);
        let oracle = brute_force_nodes(&g);
        prop_assert_eq!(&reach.nodes, &oracle);
        for e in &g.edges {
            let expect = e.enabled && oracle.contains(&e.source) && oracle.contains(&e.target);
            prop_assert_eq!(reach.edges.contains(&e.innovation_id), expect);
        }
        for e in &g.recurrent_edges {
            let expect = e.enabled && oracle.contains(&e.source) && oracle.contains(&e.target);
            prop_assert_eq!(reach.recurrent_edges.contains(&e.innovation_id), expect);
        }
    }

    #[test]
    fn codec_round_trips(seed in any::<u64>(), fitness in prop::option::of(any::<f64>()), generation in any::<u64>()) {
        let mut g = random_ten_node(seed);
        g.fitness = fitness.map_or(Fitness::Unevaluated, Fitness::Evaluated);
        g.generation_id = generation;
        let bytes = serialize(&g);
        let back = deserialize(&bytes).unwrap();
        prop_assert_eq!(serialize(&back), bytes);
        if fitness.is_none_or(|f| !f.is_nan()) {
            prop_assert_eq!(back, g);
        }
    }

    #[test]
    fn truncation_never_panics(seed in any::<u64>(), cut in 0usize..400) {
        let bytes = serialize(&random_ten_node(seed));
        let cut = cut.min(bytes.len().saturating_sub(1));
        prop_assert!(deserialize(&bytes[..cut]).is_err());
    }
}
