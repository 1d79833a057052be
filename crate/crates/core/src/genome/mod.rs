//! Graph-encoded recurrent network genomes.
//!
//! A genome is a set of nodes placed at real-valued depths, feed-forward
//! edges that always point from a shallower node to a deeper one, and
//! recurrent edges that may connect any pair of nodes with a time skip.
//! Every element carries an innovation id handed out by the run's
//! [`InnovationRegistry`], which lets crossover align two parents by id.

mod codec;
mod params;
mod reach;
mod registry;

use std::collections::{HashMap, HashSet};
use std::fmt::{self, Write as _};

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use codec::{deserialize, serialize, DecodeError, DecodeErrorKind, FORMAT_VERSION, MAGIC};
pub use params::{CellParams, CellType};
pub use reach::{reachable_set, Reachable};
pub use registry::InnovationRegistry;

/// Longest recurrent time skip unless configured otherwise.
pub const DEFAULT_MAX_SKIP: u32 = 10;

pub type NodeId = u32;
pub type EdgeId = u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    Input,
    Output,
    Hidden,
}

impl NodeKind {
    pub(crate) fn code(self) -> u8 {
        match self {
            NodeKind::Input => 0,
            NodeKind::Output => 1,
            NodeKind::Hidden => 2,
        }
    }

    pub(crate) fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(NodeKind::Input),
            1 => Some(NodeKind::Output),
            2 => Some(NodeKind::Hidden),
            _ => None,
        }
    }
}

impl fmt::Display for NodeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NodeKind::Input => "input",
            NodeKind::Output => "output",
            NodeKind::Hidden => "hidden",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeGene {
    pub innovation_id: NodeId,
    pub kind: NodeKind,
    pub depth: f64,
    pub enabled: bool,
    pub params: CellParams,
    /// Set on nodes created by a mutation and cleared by the first training
    /// session, which applies creation-time offsets such as the LSTM
    /// forget-gate bias.
    pub fresh: bool,
}

impl NodeGene {
    pub fn cell_type(&self) -> CellType {
        self.params.cell_type()
    }

    pub fn is_hidden(&self) -> bool {
        self.kind == NodeKind::Hidden
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeGene {
    pub innovation_id: EdgeId,
    pub source: NodeId,
    pub target: NodeId,
    pub weight: f64,
    pub enabled: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecurrentEdgeGene {
    pub innovation_id: EdgeId,
    pub source: NodeId,
    pub target: NodeId,
    pub time_skip: u32,
    pub weight: f64,
    pub enabled: bool,
}

/// Mean squared error of a trained genome, or the explicit "not yet trained"
/// state. Diverged genomes carry `Evaluated(f64::INFINITY)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub enum Fitness {
    #[default]
    Unevaluated,
    Evaluated(f64),
}

impl Fitness {
    pub fn value(self) -> Option<f64> {
        match self {
            Fitness::Unevaluated => None,
            Fitness::Evaluated(v) => Some(v),
        }
    }

    pub fn is_evaluated(self) -> bool {
        matches!(self, Fitness::Evaluated(_))
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RnnGenome {
    pub nodes: Vec<NodeGene>,
    pub edges: Vec<EdgeGene>,
    pub recurrent_edges: Vec<RecurrentEdgeGene>,
    pub fitness: Fitness,
    pub generation_id: u64,
    pub island_of_origin: u32,
}

impl RnnGenome {
    pub fn node(&self, id: NodeId) -> Option<&NodeGene> {
        self.nodes.iter().find(|n| n.innovation_id == id)
    }

    pub fn node_mut(&mut self, id: NodeId) -> Option<&mut NodeGene> {
        self.nodes.iter_mut().find(|n| n.innovation_id == id)
    }

    /// Input nodes in column order (ascending innovation id).
    pub fn input_ids(&self) -> Vec<NodeId> {
        self.ids_of(NodeKind::Input)
    }

    /// Output nodes in ascending innovation id.
    pub fn output_ids(&self) -> Vec<NodeId> {
        self.ids_of(NodeKind::Output)
    }

    fn ids_of(&self, kind: NodeKind) -> Vec<NodeId> {
        let mut ids: Vec<NodeId> = self.nodes.iter().filter(|n| n.kind == kind).map(|n| n.innovation_id).collect();
        ids.sort_unstable();
        ids
    }

    pub fn n_inputs(&self) -> usize {
        self.nodes.iter().filter(|n| n.kind == NodeKind::Input).count()
    }

    pub fn n_outputs(&self) -> usize {
        self.nodes.iter().filter(|n| n.kind == NodeKind::Output).count()
    }

    pub fn depth_map(&self) -> HashMap<NodeId, f64> {
        self.nodes.iter().map(|n| (n.innovation_id, n.depth)).collect()
    }

    pub fn enabled_edge_count(&self) -> usize {
        self.edges.iter().filter(|e| e.enabled).count()
    }

    pub fn enabled_recurrent_edge_count(&self) -> usize {
        self.recurrent_edges.iter().filter(|e| e.enabled).count()
    }

    pub fn enabled_hidden_count(&self) -> usize {
        self.nodes.iter().filter(|n| n.is_hidden() && n.enabled).count()
    }

    pub fn enabled_cell_count(&self, cell: CellType) -> usize {
        self.nodes.iter().filter(|n| n.is_hidden() && n.enabled && n.cell_type() == cell).count()
    }

    /// Sorts every element list by innovation id. All operators leave their
    /// children in this canonical order.
    pub fn canonicalize(&mut self) {
        self.nodes.sort_by_key(|n| n.innovation_id);
        self.edges.sort_by_key(|e| e.innovation_id);
        self.recurrent_edges.sort_by_key(|e| e.innovation_id);
    }

    /// Deep copy with fitness reset, as produced by the clone operator.
    pub fn unevaluated_copy(&self) -> RnnGenome {
        let mut copy = self.clone();
        copy.fitness = Fitness::Unevaluated;
        copy
    }

    /// Number of trainable scalars: edge weights plus every node's parameter
    /// block.
    pub fn weight_count(&self) -> usize {
        self.edges.len() + self.recurrent_edges.len() + self.nodes.iter().map(|n| n.params.len()).sum::<usize>()
    }

    /// Human-readable graph dump, one element per line.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        let fitness = match self.fitness {
            Fitness::Unevaluated => "unevaluated".to_string(),
            Fitness::Evaluated(v) => v.to_string(),
        };
        let _ = writeln!(
            out,
            "genome generation={} island={} fitness={}",
            self.generation_id, self.island_of_origin, fitness
        );
        for n in &self.nodes {
            let params: Vec<String> = n.params.as_slice().iter().map(|v| v.to_string()).collect();
            let _ = writeln!(
                out,
                "node {} {} {} depth={} enabled={} params=[{}]",
                n.innovation_id,
                n.kind,
                n.cell_type(),
                n.depth,
                n.enabled,
                params.join(",")
            );
        }
        for e in &self.edges {
            let _ = writeln!(
                out,
                "edge {} {}->{} weight={} enabled={}",
                e.innovation_id, e.source, e.target, e.weight, e.enabled
            );
        }
        for e in &self.recurrent_edges {
            let _ = writeln!(
                out,
                "recurrent {} {}->{} skip={} weight={} enabled={}",
                e.innovation_id, e.source, e.target, e.time_skip, e.weight, e.enabled
            );
        }
        out
    }
}

/// A structural problem found by [`validate`].
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    UnreachableOutput(NodeId),
    NoOutputs,
    DuplicateNodeId(NodeId),
    DuplicateEdgeId(EdgeId),
    DuplicateRecurrentEdgeId(EdgeId),
    DanglingEdge(EdgeId),
    DanglingRecurrentEdge(EdgeId),
    DepthOrder { edge: EdgeId, source_depth: f64, target_depth: f64 },
    BadNodeDepth { node: NodeId, depth: f64 },
    IoNodeNotSimple(NodeId),
    RecurrentIntoInput(EdgeId),
    DuplicateEdgePair { source: NodeId, target: NodeId },
    DuplicateRecurrentTriple { source: NodeId, target: NodeId, time_skip: u32 },
    TimeSkipOutOfRange { edge: EdgeId, time_skip: u32 },
    NonFiniteWeight,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::UnreachableOutput(id) => write!(f, "output node {id} is unreachable"),
            Violation::NoOutputs => write!(f, "genome has no output nodes"),
            Violation::DuplicateNodeId(id) => write!(f, "duplicate node id {id}"),
            Violation::DuplicateEdgeId(id) => write!(f, "duplicate edge id {id}"),
            Violation::DuplicateRecurrentEdgeId(id) => write!(f, "duplicate recurrent edge id {id}"),
            Violation::DanglingEdge(id) => write!(f, "edge {id} references a missing node"),
            Violation::DanglingRecurrentEdge(id) => {
                write!(f, "recurrent edge {id} references a missing node")
            }
            Violation::DepthOrder { edge, source_depth, target_depth } => {
                write!(f, "edge {edge} goes from depth {source_depth} to depth {target_depth}")
            }
            Violation::BadNodeDepth { node, depth } => {
                write!(f, "node {node} has invalid depth {depth}")
            }
            Violation::IoNodeNotSimple(id) => write!(f, "input/output node {id} is not simple"),
            Violation::RecurrentIntoInput(id) => write!(f, "recurrent edge {id} targets an input"),
            Violation::DuplicateEdgePair { source, target } => {
                write!(f, "more than one edge {source}->{target}")
            }
            Violation::DuplicateRecurrentTriple { source, target, time_skip } => {
                write!(f, "more than one recurrent edge {source}->{target} with skip {time_skip}")
            }
            Violation::TimeSkipOutOfRange { edge, time_skip } => {
                write!(f, "recurrent edge {edge} has time skip {time_skip}")
            }
            Violation::NonFiniteWeight => write!(f, "non-finite weight or parameter"),
        }
    }
}

/// Checks every structural invariant with the default maximum time skip.
pub fn validate(genome: &RnnGenome) -> Result<(), Vec<Violation>> {
    validate_with(genome, DEFAULT_MAX_SKIP)
}

pub fn validate_with(genome: &RnnGenome, max_skip: u32) -> Result<(), Vec<Violation>> {
    let mut violations = Vec::new();

    let mut depths: HashMap<NodeId, (f64, NodeKind)> = HashMap::with_capacity(genome.nodes.len());
    for n in &genome.nodes {
        if depths.insert(n.innovation_id, (n.depth, n.kind)).is_some() {
            violations.push(Violation::DuplicateNodeId(n.innovation_id));
        }
        let depth_ok = match n.kind {
            NodeKind::Input => n.depth == 0.0,
            NodeKind::Output => n.depth == 1.0,
            NodeKind::Hidden => n.depth > 0.0 && n.depth < 1.0,
        };
        if !depth_ok {
            violations.push(Violation::BadNodeDepth { node: n.innovation_id, depth: n.depth });
        }
        if n.kind != NodeKind::Hidden && n.cell_type() != CellType::Simple {
            violations.push(Violation::IoNodeNotSimple(n.innovation_id));
        }
    }

    let mut finite = genome.nodes.iter().all(|n| n.params.is_finite());

    let mut ids = HashSet::with_capacity(genome.edges.len());
    let mut pairs = HashSet::with_capacity(genome.edges.len());
    for e in &genome.edges {
        finite &= e.weight.is_finite();
        if !ids.insert(e.innovation_id) {
            violations.push(Violation::DuplicateEdgeId(e.innovation_id));
        }
        if !pairs.insert((e.source, e.target)) {
            violations.push(Violation::DuplicateEdgePair { source: e.source, target: e.target });
        }
        match (depths.get(&e.source), depths.get(&e.target)) {
            (Some(&(sd, _)), Some(&(td, _))) => {
                if !(sd < td) {
                    violations.push(Violation::DepthOrder {
                        edge: e.innovation_id,
                        source_depth: sd,
                        target_depth: td,
                    });
                }
            }
            _ => violations.push(Violation::DanglingEdge(e.innovation_id)),
        }
    }

    let mut ids = HashSet::with_capacity(genome.recurrent_edges.len());
    let mut triples = HashSet::with_capacity(genome.recurrent_edges.len());
    for e in &genome.recurrent_edges {
        finite &= e.weight.is_finite();
        if !ids.insert(e.innovation_id) {
            violations.push(Violation::DuplicateRecurrentEdgeId(e.innovation_id));
        }
        if !triples.insert((e.source, e.target, e.time_skip)) {
            violations.push(Violation::DuplicateRecurrentTriple {
                source: e.source,
                target: e.target,
                time_skip: e.time_skip,
            });
        }
        if e.time_skip < 1 || e.time_skip > max_skip {
            violations.push(Violation::TimeSkipOutOfRange { edge: e.innovation_id, time_skip: e.time_skip });
        }
        match (depths.get(&e.source), depths.get(&e.target)) {
            (Some(_), Some(&(_, NodeKind::Input))) => violations.push(Violation::RecurrentIntoInput(e.innovation_id)),
            (Some(_), Some(_)) => {}
            _ => violations.push(Violation::DanglingRecurrentEdge(e.innovation_id)),
        }
    }

    if !finite {
        violations.push(Violation::NonFiniteWeight);
    }

    let outputs: Vec<NodeId> =
        genome.nodes.iter().filter(|n| n.kind == NodeKind::Output).map(|n| n.innovation_id).collect();
    if outputs.is_empty() {
        violations.push(Violation::NoOutputs);
    }
    let reachable = reachable_set(genome);
    for id in outputs {
        let enabled = genome.node(id).is_some_and(|n| n.enabled);
        if enabled && !reachable.nodes.contains(&id) {
            violations.push(Violation::UnreachableOutput(id));
        }
    }

    if violations.is_empty() {
        Ok(())
    } else {
        Err(violations)
    }
}

/// Errors from genome construction.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GenomeError {
    #[error("a genome needs at least one input and one output (got {inputs} inputs, {outputs} outputs)")]
    InvalidCounts { inputs: usize, outputs: usize },
}

/// Minimal starting network: every input wired straight to every output,
/// weights and output biases uniform in `[-0.5, 0.5]`.
pub fn seed_genome<R: Rng + ?Sized>(
    n_inputs: usize,
    n_outputs: usize,
    registry: &mut InnovationRegistry,
    rng: &mut R,
) -> Result<RnnGenome, GenomeError> {
    if n_inputs == 0 || n_outputs == 0 {
        return Err(GenomeError::InvalidCounts { inputs: n_inputs, outputs: n_outputs });
    }
    let mut genome = RnnGenome::default();
    let mut uniform = || rng.random_range(-0.5..=0.5);

    for (kind, count, depth) in [(NodeKind::Input, n_inputs, 0.0), (NodeKind::Output, n_outputs, 1.0)] {
        for _ in 0..count {
            let params = match kind {
                NodeKind::Input => CellParams::zeros(CellType::Simple),
                _ => CellParams::Simple([uniform()]),
            };
            genome.nodes.push(NodeGene {
                innovation_id: registry.new_node_id(),
                kind,
                depth,
                enabled: true,
                params,
                fresh: false,
            });
        }
    }

    let inputs = genome.input_ids();
    let outputs = genome.output_ids();
    for &source in &inputs {
        for &target in &outputs {
            genome.edges.push(EdgeGene {
                innovation_id: registry.edge_id(source, target),
                source,
                target,
                weight: uniform(),
                enabled: true,
            });
        }
    }
    genome.canonicalize();
    Ok(genome)
}
