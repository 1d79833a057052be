//! Mutation, crossover and clone operators with Lamarckian weight
//! inheritance.
//!
//! Children start from their parents' trained weights. Elements present in
//! both crossover parents are interpolated as `w = r (w_worse - w_better) +
//! w_better` with one `r` per element; brand-new elements draw from a normal
//! distribution fitted to the parent's existing weights.

use std::collections::{HashMap, HashSet};

use rand::seq::{index, IndexedRandom, SliceRandom};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::genome::{
    reachable_set, validate_with, CellParams, CellType, EdgeGene, Fitness, InnovationRegistry, NodeGene, NodeId,
    NodeKind, RecurrentEdgeGene, RnnGenome, Violation, DEFAULT_MAX_SKIP,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MutationOp {
    DisableEdge,
    EnableEdge,
    SplitEdge,
    AddEdge,
    AddRecurrentEdge,
    DisableNode,
    EnableNode,
    AddNode,
    SplitNode,
    MergeNode,
    Clone,
}

impl MutationOp {
    pub const ALL: [MutationOp; 11] = [
        MutationOp::DisableEdge,
        MutationOp::EnableEdge,
        MutationOp::SplitEdge,
        MutationOp::AddEdge,
        MutationOp::AddRecurrentEdge,
        MutationOp::DisableNode,
        MutationOp::EnableNode,
        MutationOp::AddNode,
        MutationOp::SplitNode,
        MutationOp::MergeNode,
        MutationOp::Clone,
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GenerationKind {
    Mutation,
    IntraCrossover,
    InterCrossover,
}

/// Relative selection weights of the mutation operators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MutationRates {
    pub disable_edge: f64,
    pub enable_edge: f64,
    pub split_edge: f64,
    pub add_edge: f64,
    pub add_recurrent_edge: f64,
    pub disable_node: f64,
    pub enable_node: f64,
    pub add_node: f64,
    pub split_node: f64,
    pub merge_node: f64,
    pub clone: f64,
}

impl Default for MutationRates {
    /// Uniform over every structural operator except split edge.
    fn default() -> Self {
        let p = 1.0 / 9.0;
        Self {
            disable_edge: p,
            enable_edge: p,
            split_edge: 0.0,
            add_edge: p,
            add_recurrent_edge: p,
            disable_node: p,
            enable_node: p,
            add_node: p,
            split_node: p,
            merge_node: p,
            clone: 0.0,
        }
    }
}

impl MutationRates {
    pub fn rate(&self, op: MutationOp) -> f64 {
        match op {
            MutationOp::DisableEdge => self.disable_edge,
            MutationOp::EnableEdge => self.enable_edge,
            MutationOp::SplitEdge => self.split_edge,
            MutationOp::AddEdge => self.add_edge,
            MutationOp::AddRecurrentEdge => self.add_recurrent_edge,
            MutationOp::DisableNode => self.disable_node,
            MutationOp::EnableNode => self.enable_node,
            MutationOp::AddNode => self.add_node,
            MutationOp::SplitNode => self.split_node,
            MutationOp::MergeNode => self.merge_node,
            MutationOp::Clone => self.clone,
        }
    }

    pub fn total(&self) -> f64 {
        MutationOp::ALL.iter().map(|&op| self.rate(op)).sum()
    }

    pub fn enabled(&self) -> Vec<MutationOp> {
        MutationOp::ALL.into_iter().filter(|&op| self.rate(op) > 0.0).collect()
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> MutationOp {
        let mut u = rng.random::<f64>() * self.total();
        let mut last = MutationOp::AddNode;
        for op in MutationOp::ALL {
            let p = self.rate(op);
            if p <= 0.0 {
                continue;
            }
            last = op;
            if u < p {
                return op;
            }
            u -= p;
        }
        last
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OperatorConfig {
    pub mutation: MutationRates,
    pub p_mutation: f64,
    pub p_intra_crossover: f64,
    pub p_inter_crossover: f64,
    pub allowed_cell_types: Vec<CellType>,
    pub max_skip: u32,
    pub crossover_r_range: [f64; 2],
    /// Attempts `generate_child` makes before giving up.
    pub max_retries: usize,
}

impl Default for OperatorConfig {
    fn default() -> Self {
        Self {
            mutation: MutationRates::default(),
            p_mutation: 0.70,
            p_intra_crossover: 0.20,
            p_inter_crossover: 0.10,
            allowed_cell_types: CellType::ALL.to_vec(),
            max_skip: DEFAULT_MAX_SKIP,
            crossover_r_range: [-0.5, 1.5],
            max_retries: 32,
        }
    }
}

impl OperatorConfig {
    pub fn validate(&self) -> Result<(), String> {
        let rates = [self.p_mutation, self.p_intra_crossover, self.p_inter_crossover];
        if rates.iter().any(|p| !(0.0..=1.0).contains(p)) || (rates.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err("generation probabilities must be in [0, 1] and sum to 1".into());
        }
        if MutationOp::ALL.iter().any(|&op| !(self.mutation.rate(op) >= 0.0))
            || (self.mutation.total() - 1.0).abs() > 1e-9
        {
            return Err("mutation probabilities must be non-negative and sum to 1".into());
        }
        if self.allowed_cell_types.is_empty() {
            return Err("allowed_cell_types must not be empty".into());
        }
        if self.max_skip == 0 {
            return Err("max_skip must be at least 1".into());
        }
        let [lo, hi] = self.crossover_r_range;
        if !(lo <= hi) {
            return Err("crossover_r_range must be ordered".into());
        }
        if self.max_retries == 0 {
            return Err("max_retries must be at least 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum OperatorError {
    #[error("operator not applicable: {0}")]
    NotApplicable(&'static str),
    #[error("child discarded: {}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    Discarded(Vec<Violation>),
}

/// Canonical order, unevaluated fitness, and the structural gate every
/// child passes before leaving this module.
fn finish(mut child: RnnGenome, config: &OperatorConfig) -> Result<RnnGenome, OperatorError> {
    child.canonicalize();
    child.fitness = Fitness::Unevaluated;
    validate_with(&child, config.max_skip).map_err(OperatorError::Discarded)?;
    Ok(child)
}

/// Draws for newly created weights: normal with the mean and (population)
/// variance of the parent's enabled edge weights, uniform `[-0.5, 0.5]` when
/// the parent has fewer than two.
#[derive(Debug, Clone, Copy)]
pub enum WeightInit {
    Normal { mean: f64, std_dev: f64 },
    Uniform,
}

impl WeightInit {
    pub fn from_parent(parent: &RnnGenome) -> Self {
        let weights: Vec<f64> = parent
            .edges
            .iter()
            .filter(|e| e.enabled)
            .map(|e| e.weight)
            .chain(parent.recurrent_edges.iter().filter(|e| e.enabled).map(|e| e.weight))
            .collect();
        if weights.len() < 2 {
            return WeightInit::Uniform;
        }
        let (mean, var) = mean_var(&weights);
        WeightInit::Normal { mean, std_dev: var.sqrt() }
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            WeightInit::Uniform => rng.random_range(-0.5..=0.5),
            WeightInit::Normal { mean, std_dev } => normal(mean, std_dev, rng),
        }
    }

    pub fn params<R: Rng + ?Sized>(&self, cell: CellType, rng: &mut R) -> CellParams {
        CellParams::from_fn(cell, |_| self.draw(rng))
    }
}

fn normal<R: Rng + ?Sized>(mean: f64, std_dev: f64, rng: &mut R) -> f64 {
    if std_dev > 0.0 && std_dev.is_finite() {
        Normal::new(mean, std_dev).expect("positive finite deviation").sample(rng)
    } else {
        mean
    }
}

/// Mean and population variance.
fn mean_var(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var)
}

/// `n_re / (n_ff + n_re)` over enabled edges.
pub fn recurrent_probability(genome: &RnnGenome) -> f64 {
    let n_ff = genome.enabled_edge_count();
    let n_re = genome.enabled_recurrent_edge_count();
    if n_ff + n_re == 0 {
        0.0
    } else {
        n_re as f64 / (n_ff + n_re) as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum EdgeRef {
    Forward(usize),
    Recurrent(usize),
}

fn edges_with_flag(genome: &RnnGenome, enabled: bool) -> Vec<EdgeRef> {
    let ff = genome.edges.iter().enumerate().filter(|(_, e)| e.enabled == enabled).map(|(i, _)| EdgeRef::Forward(i));
    let rec = genome
        .recurrent_edges
        .iter()
        .enumerate()
        .filter(|(_, e)| e.enabled == enabled)
        .map(|(i, _)| EdgeRef::Recurrent(i));
    ff.chain(rec).collect()
}

fn set_edge(genome: &mut RnnGenome, edge: EdgeRef, enabled: bool) {
    match edge {
        EdgeRef::Forward(i) => genome.edges[i].enabled = enabled,
        EdgeRef::Recurrent(i) => genome.recurrent_edges[i].enabled = enabled,
    }
}

pub fn disable_edge<R: Rng + ?Sized>(
    parent: &RnnGenome,
    config: &OperatorConfig,
    rng: &mut R,
) -> Result<RnnGenome, OperatorError> {
    let candidates = edges_with_flag(parent, true);
    let &edge = candidates.choose(rng).ok_or(OperatorError::NotApplicable("no enabled edge"))?;
    let mut child = parent.clone();
    set_edge(&mut child, edge, false);
    finish(child, config)
}

pub fn enable_edge<R: Rng + ?Sized>(
    parent: &RnnGenome,
    config: &OperatorConfig,
    rng: &mut R,
) -> Result<RnnGenome, OperatorError> {
    let candidates = edges_with_flag(parent, false);
    let &edge = candidates.choose(rng).ok_or(OperatorError::NotApplicable("no disabled edge"))?;
    let mut child = parent.clone();
    set_edge(&mut child, edge, true);
    finish(child, config)
}

fn new_node<R: Rng + ?Sized>(
    registry: &mut InnovationRegistry,
    depth: f64,
    init: &WeightInit,
    config: &OperatorConfig,
    rng: &mut R,
) -> NodeGene {
    let cell = *config.allowed_cell_types.choose(rng).expect("allowed_cell_types is not empty");
    NodeGene {
        innovation_id: registry.new_node_id(),
        kind: NodeKind::Hidden,
        depth,
        enabled: true,
        params: init.params(cell, rng),
        fresh: true,
    }
}

fn push_edge(child: &mut RnnGenome, registry: &mut InnovationRegistry, source: NodeId, target: NodeId, weight: f64) {
    child.edges.push(EdgeGene {
        innovation_id: registry.edge_id(source, target),
        source,
        target,
        weight,
        enabled: true,
    });
}

fn push_recurrent(
    child: &mut RnnGenome,
    registry: &mut InnovationRegistry,
    source: NodeId,
    target: NodeId,
    time_skip: u32,
    weight: f64,
) {
    child.recurrent_edges.push(RecurrentEdgeGene {
        innovation_id: registry.recurrent_edge_id(source, target, time_skip),
        source,
        target,
        time_skip,
        weight,
        enabled: true,
    });
}

/// Open-interval depth draw.
fn random_depth<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let d: f64 = rng.random();
        if d > 0.0 && d < 1.0 {
            return d;
        }
    }
}

/// Replaces an enabled edge by a new node and two edges. Feed-forward
/// splits place the node at the midpoint depth; recurrent splits keep the
/// time skip on both new edges.
pub fn split_edge<R: Rng + ?Sized>(
    parent: &RnnGenome,
    registry: &mut InnovationRegistry,
    config: &OperatorConfig,
    rng: &mut R,
) -> Result<RnnGenome, OperatorError> {
    let candidates = edges_with_flag(parent, true);
    let &edge = candidates.choose(rng).ok_or(OperatorError::NotApplicable("no enabled edge"))?;
    let init = WeightInit::from_parent(parent);
    let depths = parent.depth_map();
    let mut child = parent.clone();
    set_edge(&mut child, edge, false);
    match edge {
        EdgeRef::Forward(i) => {
            let e = &parent.edges[i];
            let depth = (depths[&e.source] + depths[&e.target]) / 2.0;
            let node = new_node(registry, depth, &init, config, rng);
            let id = node.innovation_id;
            child.nodes.push(node);
            push_edge(&mut child, registry, e.source, id, init.draw(rng));
            push_edge(&mut child, registry, id, e.target, init.draw(rng));
        }
        EdgeRef::Recurrent(i) => {
            let e = &parent.recurrent_edges[i];
            let mid = (depths[&e.source] + depths[&e.target]) / 2.0;
            let depth = if mid > 0.0 && mid < 1.0 { mid } else { random_depth(rng) };
            let node = new_node(registry, depth, &init, config, rng);
            let id = node.innovation_id;
            child.nodes.push(node);
            push_recurrent(&mut child, registry, e.source, id, e.time_skip, init.draw(rng));
            push_recurrent(&mut child, registry, id, e.target, e.time_skip, init.draw(rng));
        }
    }
    finish(child, config)
}

/// Adds one feed-forward edge between enabled nodes `a`, `b` with
/// `depth(a) < depth(b)` that are not yet connected.
pub fn add_edge<R: Rng + ?Sized>(
    parent: &RnnGenome,
    registry: &mut InnovationRegistry,
    config: &OperatorConfig,
    rng: &mut R,
) -> Result<RnnGenome, OperatorError> {
    let existing: HashSet<(NodeId, NodeId)> = parent.edges.iter().map(|e| (e.source, e.target)).collect();
    let nodes: Vec<&NodeGene> = parent.nodes.iter().filter(|n| n.enabled).collect();
    let mut pairs = Vec::new();
    for a in &nodes {
        for b in &nodes {
            if a.depth < b.depth && !existing.contains(&(a.innovation_id, b.innovation_id)) {
                pairs.push((a.innovation_id, b.innovation_id));
            }
        }
    }
    let &(source, target) = pairs.choose(rng).ok_or(OperatorError::NotApplicable("no unconnected node pair"))?;
    let weight = WeightInit::from_parent(parent).draw(rng);
    let mut child = parent.clone();
    push_edge(&mut child, registry, source, target, weight);
    finish(child, config)
}

/// Adds a recurrent edge between any enabled pair (self-loops and
/// output-to-hidden included; inputs are never targets) with a time skip
/// drawn uniformly from the skips that pair does not use yet.
pub fn add_recurrent_edge<R: Rng + ?Sized>(
    parent: &RnnGenome,
    registry: &mut InnovationRegistry,
    config: &OperatorConfig,
    rng: &mut R,
) -> Result<RnnGenome, OperatorError> {
    let mut used: HashMap<(NodeId, NodeId), HashSet<u32>> = HashMap::new();
    for e in &parent.recurrent_edges {
        used.entry((e.source, e.target)).or_default().insert(e.time_skip);
    }
    let nodes: Vec<&NodeGene> = parent.nodes.iter().filter(|n| n.enabled).collect();
    let mut pairs = Vec::new();
    for a in &nodes {
        for b in nodes.iter().filter(|b| b.kind != NodeKind::Input) {
            let taken = used.get(&(a.innovation_id, b.innovation_id)).map_or(0, HashSet::len);
            if taken < config.max_skip as usize {
                pairs.push((a.innovation_id, b.innovation_id));
            }
        }
    }
    let &(source, target) = pairs.choose(rng).ok_or(OperatorError::NotApplicable("every pair uses every time skip"))?;
    let taken = used.get(&(source, target));
    let free: Vec<u32> = (1..=config.max_skip).filter(|k| taken.is_none_or(|t| !t.contains(k))).collect();
    let &skip = free.choose(rng).expect("pair has a free skip");
    let weight = WeightInit::from_parent(parent).draw(rng);
    let mut child = parent.clone();
    push_recurrent(&mut child, registry, source, target, skip, weight);
    finish(child, config)
}

fn set_node_and_incident(child: &mut RnnGenome, id: NodeId, enabled: bool) {
    if let Some(n) = child.node_mut(id) {
        n.enabled = enabled;
    }
    for e in child.edges.iter_mut().filter(|e| e.source == id || e.target == id) {
        e.enabled = enabled;
    }
    for e in child.recurrent_edges.iter_mut().filter(|e| e.source == id || e.target == id) {
        e.enabled = enabled;
    }
}

/// Disables a random enabled non-output node (inputs included) with all of
/// its incident edges.
pub fn disable_node<R: Rng + ?Sized>(
    parent: &RnnGenome,
    config: &OperatorConfig,
    rng: &mut R,
) -> Result<RnnGenome, OperatorError> {
    let candidates: Vec<NodeId> =
        parent.nodes.iter().filter(|n| n.enabled && n.kind != NodeKind::Output).map(|n| n.innovation_id).collect();
    let &id = candidates.choose(rng).ok_or(OperatorError::NotApplicable("no enabled non-output node"))?;
    let mut child = parent.clone();
    set_node_and_incident(&mut child, id, false);
    finish(child, config)
}

/// Enables a random disabled node with all of its incident edges.
pub fn enable_node<R: Rng + ?Sized>(
    parent: &RnnGenome,
    config: &OperatorConfig,
    rng: &mut R,
) -> Result<RnnGenome, OperatorError> {
    let candidates: Vec<NodeId> = parent.nodes.iter().filter(|n| !n.enabled).map(|n| n.innovation_id).collect();
    let &id = candidates.choose(rng).ok_or(OperatorError::NotApplicable("no disabled node"))?;
    let mut child = parent.clone();
    set_node_and_incident(&mut child, id, true);
    finish(child, config)
}

/// Degree statistics of the enabled nodes: `(mean, variance)` of the
/// feed-forward in-degree over non-input nodes, the out-degree over
/// non-output nodes, and the recurrent in-degree over non-input nodes.
pub fn degree_stats(genome: &RnnGenome) -> [(f64, f64); 3] {
    let mut fan_in: HashMap<NodeId, usize> = HashMap::new();
    let mut fan_out: HashMap<NodeId, usize> = HashMap::new();
    let mut rec_in: HashMap<NodeId, usize> = HashMap::new();
    for e in genome.edges.iter().filter(|e| e.enabled) {
        *fan_in.entry(e.target).or_default() += 1;
        *fan_out.entry(e.source).or_default() += 1;
    }
    for e in genome.recurrent_edges.iter().filter(|e| e.enabled) {
        *rec_in.entry(e.target).or_default() += 1;
    }
    let enabled = || genome.nodes.iter().filter(|n| n.enabled);
    let count = |map: &HashMap<NodeId, usize>, n: &NodeGene| *map.get(&n.innovation_id).unwrap_or(&0) as f64;
    let ins: Vec<f64> = enabled().filter(|n| n.kind != NodeKind::Input).map(|n| count(&fan_in, n)).collect();
    let outs: Vec<f64> = enabled().filter(|n| n.kind != NodeKind::Output).map(|n| count(&fan_out, n)).collect();
    let recs: Vec<f64> = enabled().filter(|n| n.kind != NodeKind::Input).map(|n| count(&rec_in, n)).collect();
    [mean_var(&ins), mean_var(&outs), mean_var(&recs)]
}

fn degree_draw<R: Rng + ?Sized>((mean, var): (f64, f64), min: usize, max: usize, rng: &mut R) -> usize {
    let x = normal(mean, var.sqrt(), rng).round();
    (x.max(min as f64) as usize).min(max).max(min.min(max))
}

/// Inserts a node at a random depth in `(0, 1)` with in, out and recurrent
/// edge counts drawn from normals fitted to the parent's node degrees.
pub fn add_node<R: Rng + ?Sized>(
    parent: &RnnGenome,
    registry: &mut InnovationRegistry,
    config: &OperatorConfig,
    rng: &mut R,
) -> Result<RnnGenome, OperatorError> {
    let depth = random_depth(rng);
    add_node_at(parent, depth, registry, config, rng)
}

/// [`add_node`] with a fixed depth.
pub fn add_node_at<R: Rng + ?Sized>(
    parent: &RnnGenome,
    depth: f64,
    registry: &mut InnovationRegistry,
    config: &OperatorConfig,
    rng: &mut R,
) -> Result<RnnGenome, OperatorError> {
    let lower: Vec<NodeId> =
        parent.nodes.iter().filter(|n| n.enabled && n.depth < depth).map(|n| n.innovation_id).collect();
    let upper: Vec<NodeId> =
        parent.nodes.iter().filter(|n| n.enabled && n.depth > depth).map(|n| n.innovation_id).collect();
    if lower.is_empty() || upper.is_empty() {
        return Err(OperatorError::NotApplicable("no enabled nodes on both sides of the depth"));
    }
    let [in_stats, out_stats, rec_stats] = degree_stats(parent);
    let n_in = degree_draw(in_stats, 1, lower.len(), rng);
    let n_out = degree_draw(out_stats, 1, upper.len(), rng);
    let n_rec = degree_draw(rec_stats, 0, usize::MAX, rng);

    let init = WeightInit::from_parent(parent);
    let mut child = parent.clone();
    let node = new_node(registry, depth, &init, config, rng);
    let id = node.innovation_id;
    child.nodes.push(node);
    for k in index::sample(rng, lower.len(), n_in) {
        push_edge(&mut child, registry, lower[k], id, init.draw(rng));
    }
    for k in index::sample(rng, upper.len(), n_out) {
        push_edge(&mut child, registry, id, upper[k], init.draw(rng));
    }

    let others: Vec<&NodeGene> = parent.nodes.iter().filter(|n| n.enabled).collect();
    let mut triples = HashSet::new();
    for _ in 0..n_rec {
        let other = others.choose(rng).expect("parent has enabled nodes");
        let (source, target) = if other.kind == NodeKind::Input || rng.random_bool(0.5) {
            (other.innovation_id, id)
        } else {
            (id, other.innovation_id)
        };
        let skip = rng.random_range(1..=config.max_skip);
        if triples.insert((source, target, skip)) {
            push_recurrent(&mut child, registry, source, target, skip, init.draw(rng));
        }
    }
    finish(child, config)
}

/// Assigns every edge to one of two children so each gets at least one;
/// with a single edge both children get it. Returns `(edge, to_a, to_b)`.
fn partition<R: Rng + ?Sized>(mut edges: Vec<usize>, rng: &mut R) -> Vec<(usize, bool, bool)> {
    edges.shuffle(rng);
    match edges.len() {
        0 => Vec::new(),
        1 => vec![(edges[0], true, true)],
        _ => edges
            .iter()
            .enumerate()
            .map(|(k, &e)| match k {
                0 => (e, true, false),
                1 => (e, false, true),
                _ => {
                    let a = rng.random_bool(0.5);
                    (e, a, !a)
                }
            })
            .collect(),
    }
}

/// Disables a hidden node and replaces it by two nodes of the same type at
/// the same depth, splitting its edges between them.
pub fn split_node<R: Rng + ?Sized>(
    parent: &RnnGenome,
    registry: &mut InnovationRegistry,
    config: &OperatorConfig,
    rng: &mut R,
) -> Result<RnnGenome, OperatorError> {
    let has = |id: NodeId, incoming: bool| {
        parent.edges.iter().any(|e| e.enabled && if incoming { e.target == id } else { e.source == id })
    };
    let candidates: Vec<&NodeGene> = parent
        .nodes
        .iter()
        .filter(|n| n.enabled && n.is_hidden() && has(n.innovation_id, true) && has(n.innovation_id, false))
        .collect();
    let node = *candidates.choose(rng).ok_or(OperatorError::NotApplicable("no splittable hidden node"))?;
    let id = node.innovation_id;

    let ins: Vec<usize> =
        (0..parent.edges.len()).filter(|&i| parent.edges[i].enabled && parent.edges[i].target == id).collect();
    let outs: Vec<usize> =
        (0..parent.edges.len()).filter(|&i| parent.edges[i].enabled && parent.edges[i].source == id).collect();
    let recs: Vec<usize> = (0..parent.recurrent_edges.len())
        .filter(|&i| {
            let e = &parent.recurrent_edges[i];
            e.enabled && (e.source == id || e.target == id)
        })
        .collect();

    let mut child = parent.clone();
    set_node_and_incident(&mut child, id, false);
    let twin = |registry: &mut InnovationRegistry| NodeGene {
        innovation_id: registry.new_node_id(),
        enabled: true,
        fresh: false,
        ..node.clone()
    };
    let (a, b) = (twin(registry), twin(registry));
    let (a_id, b_id) = (a.innovation_id, b.innovation_id);
    child.nodes.push(a);
    child.nodes.push(b);

    for (edges, incoming) in [(ins, true), (outs, false)] {
        for (i, to_a, to_b) in partition(edges, rng) {
            let e = &parent.edges[i];
            for (take, new_id) in [(to_a, a_id), (to_b, b_id)] {
                if take {
                    let (s, t) = if incoming { (e.source, new_id) } else { (new_id, e.target) };
                    push_edge(&mut child, registry, s, t, e.weight);
                }
            }
        }
    }
    for i in recs {
        let e = &parent.recurrent_edges[i];
        let new_id = if rng.random_bool(0.5) { a_id } else { b_id };
        let remap = |x: NodeId| if x == id { new_id } else { x };
        push_recurrent(&mut child, registry, remap(e.source), remap(e.target), e.time_skip, e.weight);
    }
    finish(child, config)
}

/// Disables two hidden nodes and adds one node at their mean depth wired to
/// the union of their neighbours, keeping only inputs from shallower nodes
/// and outputs to deeper ones.
pub fn merge_node<R: Rng + ?Sized>(
    parent: &RnnGenome,
    registry: &mut InnovationRegistry,
    config: &OperatorConfig,
    rng: &mut R,
) -> Result<RnnGenome, OperatorError> {
    let hidden: Vec<&NodeGene> = parent.nodes.iter().filter(|n| n.enabled && n.is_hidden()).collect();
    if hidden.len() < 2 {
        return Err(OperatorError::NotApplicable("fewer than two enabled hidden nodes"));
    }
    let picked = index::sample(rng, hidden.len(), 2);
    let (a, b) = (hidden[picked.index(0)], hidden[picked.index(1)]);
    merge_nodes(parent, a.innovation_id, b.innovation_id, registry, config, rng)
}

/// [`merge_node`] on a chosen pair.
pub fn merge_nodes<R: Rng + ?Sized>(
    parent: &RnnGenome,
    a: NodeId,
    b: NodeId,
    registry: &mut InnovationRegistry,
    config: &OperatorConfig,
    rng: &mut R,
) -> Result<RnnGenome, OperatorError> {
    let depths = parent.depth_map();
    let depth = (depths[&a] + depths[&b]) / 2.0;
    let merged = [a, b];
    let enabled: HashSet<NodeId> = parent.nodes.iter().filter(|n| n.enabled).map(|n| n.innovation_id).collect();
    let init = WeightInit::from_parent(parent);

    let mut child = parent.clone();
    set_node_and_incident(&mut child, a, false);
    set_node_and_incident(&mut child, b, false);
    let node = new_node(registry, depth, &init, config, rng);
    let id = node.innovation_id;
    child.nodes.push(node);

    let mut seen = HashSet::new();
    for e in parent.edges.iter().filter(|e| e.enabled) {
        let (other, incoming) = match (merged.contains(&e.source), merged.contains(&e.target)) {
            (false, true) => (e.source, true),
            (true, false) => (e.target, false),
            _ => continue,
        };
        if !enabled.contains(&other) {
            continue;
        }
        let keep = if incoming { depths[&other] < depth } else { depths[&other] > depth };
        let (s, t) = if incoming { (other, id) } else { (id, other) };
        if keep && seen.insert((s, t)) {
            push_edge(&mut child, registry, s, t, e.weight);
        }
    }
    let mut seen = HashSet::new();
    for e in parent.recurrent_edges.iter().filter(|e| e.enabled) {
        if !merged.contains(&e.source) && !merged.contains(&e.target) {
            continue;
        }
        let remap = |x: NodeId| if merged.contains(&x) { id } else { x };
        let (s, t) = (remap(e.source), remap(e.target));
        if enabled.contains(&s) || s == id {
            if (enabled.contains(&t) || t == id) && seen.insert((s, t, e.time_skip)) {
                push_recurrent(&mut child, registry, s, t, e.time_skip, e.weight);
            }
        }
    }
    finish(child, config)
}

/// Deep copy with the same weights and unevaluated fitness.
pub fn clone_genome(parent: &RnnGenome) -> RnnGenome {
    parent.unevaluated_copy()
}

#[derive(Debug, Clone)]
pub struct CrossoverOutcome {
    pub child: RnnGenome,
    /// Element visits performed, for checking the linear cost bound.
    pub visits: usize,
}

/// Crossover with `r` drawn uniformly from `config.crossover_r_range`.
pub fn crossover<R: Rng + ?Sized>(
    better: &RnnGenome,
    worse: &RnnGenome,
    config: &OperatorConfig,
    rng: &mut R,
) -> Result<RnnGenome, OperatorError> {
    let [lo, hi] = config.crossover_r_range;
    crossover_with(better, worse, config, || if lo < hi { rng.random_range(lo..=hi) } else { lo }).map(|o| o.child)
}

/// Child made of every reachable element of either parent, aligned by
/// innovation id. Edges of either parent whose endpoints both made it into
/// the child are carried too, disabled unless reachable in some parent.
/// Elements present in both parents get `r (w_worse - w_better) + w_better`
/// with one `r` per element; others copy their parent's values.
pub fn crossover_with(
    better: &RnnGenome,
    worse: &RnnGenome,
    config: &OperatorConfig,
    mut draw_r: impl FnMut() -> f64,
) -> Result<CrossoverOutcome, OperatorError> {
    let mut visits = 0usize;
    let reach = [reachable_set(better), reachable_set(worse)];
    visits += 2 * (better.nodes.len() + better.edges.len() + better.recurrent_edges.len());
    visits += 2 * (worse.nodes.len() + worse.edges.len() + worse.recurrent_edges.len());
    let parents = [better, worse];

    let mut nodes: Vec<NodeGene> = Vec::new();
    let mut node_slot: HashMap<NodeId, usize> = HashMap::new();
    for (p, parent) in parents.iter().enumerate() {
        for n in &parent.nodes {
            visits += 1;
            let reachable = reach[p].nodes.contains(&n.innovation_id);
            if !(reachable || n.kind != NodeKind::Hidden) {
                continue;
            }
            match node_slot.get(&n.innovation_id) {
                Some(&slot) => nodes[slot].enabled |= reachable,
                None => {
                    let mut copy = n.clone();
                    copy.enabled = reachable || (p == 0 && n.enabled);
                    node_slot.insert(n.innovation_id, nodes.len());
                    nodes.push(copy);
                }
            }
        }
    }
    let better_nodes: HashMap<NodeId, &NodeGene> = better.nodes.iter().map(|n| (n.innovation_id, n)).collect();
    let worse_nodes: HashMap<NodeId, &NodeGene> = worse.nodes.iter().map(|n| (n.innovation_id, n)).collect();
    for n in &mut nodes {
        visits += 1;
        let (Some(b), Some(w)) = (better_nodes.get(&n.innovation_id), worse_nodes.get(&n.innovation_id)) else {
            continue;
        };
        if b.params.cell_type() != w.params.cell_type() {
            continue;
        }
        let r = draw_r();
        for ((x, bv), wv) in n.params.as_mut_slice().iter_mut().zip(b.params.as_slice()).zip(w.params.as_slice()) {
            *x = r * (wv - bv) + bv;
        }
    }

    let mut edges: HashMap<u32, EdgeGene> = HashMap::new();
    let mut edge_order = Vec::new();
    let mut edge_hits: HashMap<u32, (Option<f64>, Option<f64>)> = HashMap::new();
    for (p, parent) in parents.iter().enumerate() {
        for e in &parent.edges {
            visits += 1;
            let hits = edge_hits.entry(e.innovation_id).or_default();
            if p == 0 {
                hits.0 = Some(e.weight)
            } else {
                hits.1 = Some(e.weight)
            }
            if !(node_slot.contains_key(&e.source) && node_slot.contains_key(&e.target)) {
                continue;
            }
            let reachable = reach[p].edges.contains(&e.innovation_id);
            edges.entry(e.innovation_id).and_modify(|c| c.enabled |= reachable).or_insert_with(|| {
                edge_order.push(e.innovation_id);
                EdgeGene { enabled: reachable, ..e.clone() }
            });
        }
    }
    let mut recurrent: HashMap<u32, RecurrentEdgeGene> = HashMap::new();
    let mut recurrent_order = Vec::new();
    let mut recurrent_hits: HashMap<u32, (Option<f64>, Option<f64>)> = HashMap::new();
    for (p, parent) in parents.iter().enumerate() {
        for e in &parent.recurrent_edges {
            visits += 1;
            let hits = recurrent_hits.entry(e.innovation_id).or_default();
            if p == 0 {
                hits.0 = Some(e.weight)
            } else {
                hits.1 = Some(e.weight)
            }
            if !(node_slot.contains_key(&e.source) && node_slot.contains_key(&e.target)) {
                continue;
            }
            let reachable = reach[p].recurrent_edges.contains(&e.innovation_id);
            recurrent.entry(e.innovation_id).and_modify(|c| c.enabled |= reachable).or_insert_with(|| {
                recurrent_order.push(e.innovation_id);
                RecurrentEdgeGene { enabled: reachable, ..e.clone() }
            });
        }
    }

    let mut child = RnnGenome { nodes, ..RnnGenome::default() };
    for id in edge_order {
        visits += 1;
        let mut e = edges.remove(&id).expect("recorded edge");
        if let (Some(w1), Some(w2)) = edge_hits[&id] {
            e.weight = draw_r() * (w2 - w1) + w1;
        }
        child.edges.push(e);
    }
    for id in recurrent_order {
        visits += 1;
        let mut e = recurrent.remove(&id).expect("recorded edge");
        if let (Some(w1), Some(w2)) = recurrent_hits[&id] {
            e.weight = draw_r() * (w2 - w1) + w1;
        }
        child.recurrent_edges.push(e);
    }
    child.generation_id = better.generation_id.max(worse.generation_id);
    child.island_of_origin = better.island_of_origin;
    let child = finish(child, config)?;
    Ok(CrossoverOutcome { child, visits })
}

/// Applies one mutation operator.
pub fn mutate<R: Rng + ?Sized>(
    op: MutationOp,
    parent: &RnnGenome,
    registry: &mut InnovationRegistry,
    config: &OperatorConfig,
    rng: &mut R,
) -> Result<RnnGenome, OperatorError> {
    match op {
        MutationOp::DisableEdge => disable_edge(parent, config, rng),
        MutationOp::EnableEdge => enable_edge(parent, config, rng),
        MutationOp::SplitEdge => split_edge(parent, registry, config, rng),
        MutationOp::AddEdge => add_edge(parent, registry, config, rng),
        MutationOp::AddRecurrentEdge => add_recurrent_edge(parent, registry, config, rng),
        MutationOp::DisableNode => disable_node(parent, config, rng),
        MutationOp::EnableNode => enable_node(parent, config, rng),
        MutationOp::AddNode => add_node(parent, registry, config, rng),
        MutationOp::SplitNode => split_node(parent, registry, config, rng),
        MutationOp::MergeNode => merge_node(parent, registry, config, rng),
        MutationOp::Clone => finish(clone_genome(parent), config),
    }
}

/// A generated, not yet trained child and how it was made.
#[derive(Debug, Clone)]
pub struct Child {
    pub genome: RnnGenome,
    pub kind: GenerationKind,
    /// First mutation operator drawn, for mutation generations.
    pub first_op: Option<MutationOp>,
    pub attempts: usize,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GenerationError {
    #[error("island {0} has no members")]
    EmptyIsland(usize),
    #[error("no valid child after {0} attempts")]
    Exhausted(usize),
}

/// Best genome by fitness, ties broken by lowest generation id.
pub fn best_of<'a>(genomes: impl IntoIterator<Item = &'a RnnGenome>) -> Option<&'a RnnGenome> {
    genomes.into_iter().filter(|g| g.fitness.is_evaluated()).min_by(|a, b| {
        let fa = a.fitness.value().unwrap_or(f64::INFINITY);
        let fb = b.fitness.value().unwrap_or(f64::INFINITY);
        fa.total_cmp(&fb).then(a.generation_id.cmp(&b.generation_id))
    })
}

/// Mutates `parent` once, retrying with fresh draws while the operator is
/// not applicable or its child is discarded.
pub fn mutate_with_retries<R: Rng + ?Sized>(
    parent: &RnnGenome,
    registry: &mut InnovationRegistry,
    config: &OperatorConfig,
    rng: &mut R,
) -> Result<(RnnGenome, MutationOp, usize), GenerationError> {
    let mut first = None;
    for attempt in 1..=config.max_retries {
        let op = draw_mutation(parent, config, rng);
        first.get_or_insert(op);
        if let Ok(child) = apply_drawn(op, parent, registry, config, rng) {
            return Ok((child, first.expect("set above"), attempt));
        }
    }
    Err(GenerationError::Exhausted(config.max_retries))
}

fn draw_mutation<R: Rng + ?Sized>(_parent: &RnnGenome, config: &OperatorConfig, rng: &mut R) -> MutationOp {
    config.mutation.draw(rng)
}

/// A drawn add-edge becomes a recurrent edge with the parent's recurrent
/// probability.
fn apply_drawn<R: Rng + ?Sized>(
    op: MutationOp,
    parent: &RnnGenome,
    registry: &mut InnovationRegistry,
    config: &OperatorConfig,
    rng: &mut R,
) -> Result<RnnGenome, OperatorError> {
    let op = if op == MutationOp::AddEdge && rng.random_bool(recurrent_probability(parent).clamp(0.0, 1.0)) {
        MutationOp::AddRecurrentEdge
    } else {
        op
    };
    mutate(op, parent, registry, config, rng)
}

/// Produces one child for island `target` from the fitness-sorted member
/// lists of every island.
///
/// The generation type is drawn from the configured mix; intra-island
/// crossover folds into mutation when the island has fewer than two
/// members, inter-island crossover when no other island has members.
pub fn generate_child<R: Rng + ?Sized>(
    populations: &[&[RnnGenome]],
    target: usize,
    config: &OperatorConfig,
    registry: &mut InnovationRegistry,
    rng: &mut R,
) -> Result<Child, GenerationError> {
    let members = populations[target];
    if members.is_empty() {
        return Err(GenerationError::EmptyIsland(target));
    }
    let others_best = best_of(populations.iter().enumerate().filter(|&(i, _)| i != target).flat_map(|(_, m)| m.iter()));

    let mut p_mut = config.p_mutation;
    let mut p_intra = config.p_intra_crossover;
    let mut p_inter = config.p_inter_crossover;
    if members.len() < 2 {
        p_mut += p_intra;
        p_intra = 0.0;
    }
    if others_best.is_none() {
        p_mut += p_inter;
        p_inter = 0.0;
    }
    let u = rng.random::<f64>() * (p_mut + p_intra + p_inter);
    let kind = if u < p_intra {
        GenerationKind::IntraCrossover
    } else if u < p_intra + p_inter {
        GenerationKind::InterCrossover
    } else {
        GenerationKind::Mutation
    };

    let ordered = |a: &'_ RnnGenome, b: &'_ RnnGenome| -> bool {
        // true when `a` is at least as fit as `b`
        best_of([a, b]).is_none_or(|best| std::ptr::eq(best, a))
    };

    let mut first_op = None;
    for attempt in 1..=config.max_retries {
        let result = match kind {
            GenerationKind::Mutation => {
                let parent = members.choose(rng).expect("island is not empty");
                let op = draw_mutation(parent, config, rng);
                first_op.get_or_insert(op);
                apply_drawn(op, parent, registry, config, rng)
            }
            GenerationKind::IntraCrossover => {
                let picked = index::sample(rng, members.len(), 2);
                let (a, b) = (&members[picked.index(0)], &members[picked.index(1)]);
                let (better, worse) = if ordered(a, b) { (a, b) } else { (b, a) };
                crossover(better, worse, config, rng)
            }
            GenerationKind::InterCrossover => {
                let local = members.choose(rng).expect("island is not empty");
                let other = others_best.expect("inter-island crossover needs another island");
                let (better, worse) = if ordered(other, local) { (other, local) } else { (local, other) };
                crossover(better, worse, config, rng)
            }
        };
        if let Ok(genome) = result {
            return Ok(Child { genome, kind, first_op, attempts: attempt });
        }
    }
    Err(GenerationError::Exhausted(config.max_retries))
}
