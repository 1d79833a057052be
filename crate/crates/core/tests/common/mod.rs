#![allow(dead_code)]

pub mod gradcheck;
pub mod oracle;

use memevo_core::genome::{
    CellParams, CellType, EdgeGene, InnovationRegistry, NodeGene, NodeKind, RecurrentEdgeGene, RnnGenome,
};
use memevo_core::runtime::{Evaluator, EvolutionConfig, Master, WorkItem, WorkResult};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random genome with `hidden` hidden nodes of the given cell types, full
/// input-to-output wiring plus random extra feed-forward and recurrent edges.
pub fn random_genome<R: Rng>(
    rng: &mut R,
    n_inputs: usize,
    cells: &[CellType],
    max_skip: u32,
    weight_scale: f64,
) -> RnnGenome {
    let mut registry = InnovationRegistry::default();
    let mut g = RnnGenome::default();
    let w = |rng: &mut R| rng.random_range(-weight_scale..weight_scale);
    for _ in 0..n_inputs {
        g.nodes.push(NodeGene {
            innovation_id: registry.new_node_id(),
            kind: NodeKind::Input,
            depth: 0.0,
            enabled: true,
            params: CellParams::zeros(CellType::Simple),
            fresh: false,
        });
    }
    let out = registry.new_node_id();
    g.nodes.push(NodeGene {
        innovation_id: out,
        kind: NodeKind::Output,
        depth: 1.0,
        enabled: true,
        params: CellParams::Simple([w(rng)]),
        fresh: false,
    });
    for &cell in cells {
        let params = CellParams::from_fn(cell, |_| w(rng));
        g.nodes.push(NodeGene {
            innovation_id: registry.new_node_id(),
            kind: NodeKind::Hidden,
            depth: rng.random_range(0.05..0.95),
            enabled: true,
            params,
            fresh: false,
        });
    }
    let nodes: Vec<(u32, f64, NodeKind)> = g.nodes.iter().map(|n| (n.innovation_id, n.depth, n.kind)).collect();
    for &(a, da, _) in &nodes {
        for &(b, db, _) in &nodes {
            let mandatory = da == 0.0 && db == 1.0;
            let hidden_link = da < db && (da > 0.0 || db < 1.0);
            if mandatory || (hidden_link && rng.random_bool(0.6)) {
                g.edges.push(EdgeGene {
                    innovation_id: registry.edge_id(a, b),
                    source: a,
                    target: b,
                    weight: w(rng),
                    enabled: true,
                });
            }
        }
    }
    let targets: Vec<u32> = nodes.iter().filter(|n| n.2 != NodeKind::Input).map(|n| n.0).collect();
    let n_rec = rng.random_range(0..=4);
    for _ in 0..n_rec {
        let src = nodes[rng.random_range(0..nodes.len())].0;
        let tgt = targets[rng.random_range(0..targets.len())];
        let skip = rng.random_range(1..=max_skip);
        if g.recurrent_edges.iter().any(|e| e.source == src && e.target == tgt && e.time_skip == skip) {
            continue;
        }
        g.recurrent_edges.push(RecurrentEdgeGene {
            innovation_id: registry.recurrent_edge_id(src, tgt, skip),
            source: src,
            target: tgt,
            time_skip: skip,
            weight: w(rng),
            enabled: true,
        });
    }
    g.canonicalize();
    g
}

/// Relative comparison with an absolute floor.
pub fn close(analytic: f64, numeric: f64, rel: f64, abs_floor: f64) -> bool {
    let diff = (analytic - numeric).abs();
    diff <= abs_floor || diff / analytic.abs().max(numeric.abs()) <= rel
}

/// Genomes grown from one seed by random mutation chains, sharing `registry`
/// so crossover can align them.
pub fn mutated_pool<R: Rng>(
    rng: &mut R,
    registry: &mut InnovationRegistry,
    n_inputs: usize,
    size: usize,
    max_steps: usize,
) -> Vec<RnnGenome> {
    use memevo_core::evolution::{mutate_with_retries, OperatorConfig};
    let config = OperatorConfig::default();
    let seed = memevo_core::genome::seed_genome(n_inputs, 1, registry, rng).unwrap();
    (0..size)
        .map(|_| {
            let mut g = seed.clone();
            for _ in 0..rng.random_range(0..=max_steps) {
                if let Ok((child, _, _)) = mutate_with_retries(&g, registry, &config, rng) {
                    g = child;
                }
            }
            g
        })
        .collect()
}

/// Scores a genome from its weights alone, optionally sleeping or panicking
/// on chosen work ids.
pub struct CheapEvaluator {
    pub delay: fn(u64) -> std::time::Duration,
    pub panic_on: fn(&memevo_core::runtime::WorkItem) -> bool,
}

impl Default for CheapEvaluator {
    fn default() -> Self {
        Self { delay: |_| std::time::Duration::ZERO, panic_on: |_| false }
    }
}

pub fn cheap_fitness(g: &RnnGenome) -> f64 {
    let w = memevo_core::trainer::genome_weights(g);
    let sum: f64 = w.iter().map(|x| (x - 0.3).powi(2)).sum();
    sum / w.len() as f64 + 0.01 * g.enabled_hidden_count() as f64
}

impl memevo_core::runtime::Evaluator for CheapEvaluator {
    fn evaluate(&self, item: &memevo_core::runtime::WorkItem) -> Result<(RnnGenome, bool), String> {
        std::thread::sleep((self.delay)(item.work_id));
        if (self.panic_on)(item) {
            panic!("injected failure for work {}", item.work_id);
        }
        let mut g = item.genome.clone();
        g.fitness = memevo_core::genome::Fitness::Evaluated(cheap_fitness(&g));
        Ok((g, false))
    }
}

/// Eleven run types times ten runs of made-up results.
pub fn stats_fixture(seed: u64) -> Vec<memevo_core::harness::RunStats> {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for (k, (name, cells)) in memevo_core::harness::standard_run_types().into_iter().enumerate() {
        for run in 0..10 {
            let mut cell_counts = std::collections::BTreeMap::new();
            for c in CellType::ALL {
                let n = if cells.contains(&c) { rng.random_range(0..6) } else { 0 };
                cell_counts.insert(c.name().to_string(), n);
            }
            out.push(memevo_core::harness::RunStats {
                run_type: name.clone(),
                fold: run % 5,
                repeat: run / 5,
                seed: run as u64,
                best_mse: 0.01 + 0.002 * k as f64 + rng.random_range(0.0..0.01),
                edges: rng.random_range(5..60),
                recurrent_edges: rng.random_range(0..20),
                hidden_nodes: cell_counts.values().sum(),
                cell_counts,
                generated: 100,
                evaluated: 100,
                inserted: rng.random_range(10..60),
                failed: 0,
            });
        }
    }
    out
}

/// Drives a master with up to `width` items in flight, completing a random
/// one each time; checks the per-step invariants and returns the master.
pub fn shuffled_run(cfg: &EvolutionConfig, seed: u64, width: usize, order_seed: u64) -> Master {
    let eval = CheapEvaluator::default();
    let mut master = Master::new(3, cfg, seed).unwrap();
    let mut order = ChaCha8Rng::seed_from_u64(order_seed);
    let mut pending: Vec<WorkItem> = Vec::new();
    let mut best = f64::INFINITY;
    loop {
        while pending.len() < width {
            match master.issue() {
                Some(item) => pending.push(item),
                None => break,
            }
        }
        if pending.is_empty() {
            break;
        }
        let k = order.random_range(0..pending.len());
        let item = pending.swap_remove(k);
        let (genome, diverged) = eval.evaluate(&item).unwrap();
        let result = WorkResult { work_id: item.work_id, genome, duration: Default::default(), worker_id: 0, diverged };
        assert!(master.complete(result).unwrap());
        for island in &master.state.islands {
            assert!(island.members.len() <= 5);
        }
        let now = master.state.best_fitness().unwrap();
        assert!(now <= best, "best rose from {best} to {now}");
        best = now;
    }
    assert!(master.is_done());
    master
}
