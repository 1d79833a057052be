//! A genome compiled into flat, index-based form for unrolling over time.

use std::collections::HashMap;

use crate::cells::{backward_step, forward_step, StepInput, StepTrace};
use crate::genome::{reachable_set, CellParams, NodeId, NodeKind, RnnGenome};

use super::TrainError;

#[derive(Debug, Clone)]
enum SlotKind {
    Input { column: usize },
    Cell { offset: usize, len: usize, template: CellParams },
}

#[derive(Debug, Clone)]
struct Slot {
    node: NodeId,
    kind: SlotKind,
    /// `(source slot, weight index)`
    ff: Vec<(usize, usize)>,
    /// `(source slot, time skip, weight index)`
    rec: Vec<(usize, usize, usize)>,
}

/// Reachable part of a genome in evaluation order (ascending depth, then
/// innovation id). Weight indices refer to the flat vector produced by
/// [`genome_weights`].
#[derive(Debug, Clone)]
pub struct Network {
    slots: Vec<Slot>,
    outputs: Vec<usize>,
    n_inputs: usize,
    n_weights: usize,
    max_skip: usize,
}

/// Stored activations of one unrolled window.
#[derive(Debug, Clone)]
pub struct Unrolled {
    n_slots: usize,
    /// `[t * n_slots + slot]`
    pub traces: Vec<StepTrace>,
    /// `[t][output]`
    pub predictions: Vec<Vec<f64>>,
}

impl Unrolled {
    fn state(&self, t: usize, slot: usize) -> f64 {
        self.traces[t * self.n_slots + slot].state
    }

    pub fn steps(&self) -> usize {
        self.predictions.len()
    }
}

/// Flattens every trainable scalar: edge weights, recurrent edge weights,
/// then each node's parameter block, all in genome order.
pub fn genome_weights(genome: &RnnGenome) -> Vec<f64> {
    let mut w = Vec::with_capacity(genome.weight_count());
    w.extend(genome.edges.iter().map(|e| e.weight));
    w.extend(genome.recurrent_edges.iter().map(|e| e.weight));
    for n in &genome.nodes {
        w.extend_from_slice(n.params.as_slice());
    }
    w
}

/// Inverse of [`genome_weights`].
pub fn set_genome_weights(genome: &mut RnnGenome, weights: &[f64]) {
    assert_eq!(weights.len(), genome.weight_count(), "weight vector length mismatch");
    let (edge_w, rest) = weights.split_at(genome.edges.len());
    let (rec_w, mut node_w) = rest.split_at(genome.recurrent_edges.len());
    for (e, &w) in genome.edges.iter_mut().zip(edge_w) {
        e.weight = w;
    }
    for (e, &w) in genome.recurrent_edges.iter_mut().zip(rec_w) {
        e.weight = w;
    }
    for n in &mut genome.nodes {
        let len = n.params.len();
        n.params.as_mut_slice().copy_from_slice(&node_w[..len]);
        node_w = &node_w[len..];
    }
}

impl Network {
    pub fn compile(genome: &RnnGenome) -> Result<Network, TrainError> {
        let reachable = reachable_set(genome);
        let n_edges = genome.edges.len();
        let n_rec = genome.recurrent_edges.len();

        let mut offsets = HashMap::with_capacity(genome.nodes.len());
        let mut offset = n_edges + n_rec;
        for n in &genome.nodes {
            offsets.insert(n.innovation_id, offset);
            offset += n.params.len();
        }
        let n_weights = offset;

        let inputs = genome.input_ids();
        let column: HashMap<NodeId, usize> = inputs.iter().enumerate().map(|(c, &id)| (id, c)).collect();

        let mut order: Vec<_> = genome.nodes.iter().filter(|n| reachable.nodes.contains(&n.innovation_id)).collect();
        order.sort_by(|a, b| a.depth.total_cmp(&b.depth).then(a.innovation_id.cmp(&b.innovation_id)));
        let slot_of: HashMap<NodeId, usize> = order.iter().enumerate().map(|(i, n)| (n.innovation_id, i)).collect();

        let mut slots: Vec<Slot> = order
            .iter()
            .map(|n| Slot {
                node: n.innovation_id,
                kind: match n.kind {
                    NodeKind::Input => SlotKind::Input { column: column[&n.innovation_id] },
                    _ => SlotKind::Cell {
                        offset: offsets[&n.innovation_id],
                        len: n.params.len(),
                        template: n.params.clone(),
                    },
                },
                ff: Vec::new(),
                rec: Vec::new(),
            })
            .collect();

        for (i, e) in genome.edges.iter().enumerate() {
            if reachable.edges.contains(&e.innovation_id) {
                slots[slot_of[&e.target]].ff.push((slot_of[&e.source], i));
            }
        }
        let mut max_skip = 0;
        for (i, e) in genome.recurrent_edges.iter().enumerate() {
            if reachable.recurrent_edges.contains(&e.innovation_id) {
                let skip = e.time_skip as usize;
                max_skip = max_skip.max(skip);
                slots[slot_of[&e.target]].rec.push((slot_of[&e.source], skip, n_edges + i));
            }
        }

        let mut outputs = Vec::new();
        for id in genome.output_ids() {
            match slot_of.get(&id) {
                Some(&slot) => outputs.push(slot),
                None => return Err(TrainError::UnreachableOutput(id)),
            }
        }

        Ok(Network { slots, outputs, n_inputs: inputs.len(), n_weights, max_skip })
    }

    pub fn n_inputs(&self) -> usize {
        self.n_inputs
    }

    pub fn n_outputs(&self) -> usize {
        self.outputs.len()
    }

    pub fn n_weights(&self) -> usize {
        self.n_weights
    }

    pub fn max_skip(&self) -> usize {
        self.max_skip
    }

    /// Node ids in evaluation order.
    pub fn order(&self) -> Vec<NodeId> {
        self.slots.iter().map(|s| s.node).collect()
    }

    fn cell_params(&self, weights: &[f64]) -> Vec<Option<CellParams>> {
        self.slots
            .iter()
            .map(|s| match &s.kind {
                SlotKind::Input { .. } => None,
                SlotKind::Cell { offset, len, template } => {
                    let mut p = template.clone();
                    p.as_mut_slice().copy_from_slice(&weights[*offset..offset + len]);
                    Some(p)
                }
            })
            .collect()
    }

    fn check_rows(&self, rows: &[Vec<f64>]) -> Result<(), TrainError> {
        for (t, row) in rows.iter().enumerate() {
            if row.len() != self.n_inputs {
                return Err(TrainError::ColumnMismatch { expected: self.n_inputs, found: row.len(), row: t });
            }
            if let Some(c) = row.iter().position(|v| !v.is_finite()) {
                return Err(TrainError::NonFiniteInput { row: t, column: c });
            }
        }
        Ok(())
    }

    /// Evaluates every node at every step. Recurrent edges read the source's
    /// state `k` steps back, zero before the window starts.
    pub fn forward(&self, weights: &[f64], rows: &[Vec<f64>]) -> Result<Unrolled, TrainError> {
        assert_eq!(weights.len(), self.n_weights, "weight vector length mismatch");
        self.check_rows(rows)?;
        let params = self.cell_params(weights);
        let n = self.slots.len();
        let mut traces = vec![StepTrace::default(); rows.len() * n];
        let mut predictions = Vec::with_capacity(rows.len());
        for (t, row) in rows.iter().enumerate() {
            let base = t * n;
            for (j, slot) in self.slots.iter().enumerate() {
                let trace = match &slot.kind {
                    SlotKind::Input { column } => StepTrace { state: row[*column], ..StepTrace::default() },
                    SlotKind::Cell { .. } => {
                        let ff = slot.ff.iter().map(|&(src, wi)| weights[wi] * traces[base + src].state).sum();
                        let rec = slot
                            .rec
                            .iter()
                            .filter(|&&(_, skip, _)| skip <= t)
                            .map(|&(src, skip, wi)| weights[wi] * traces[(t - skip) * n + src].state)
                            .sum();
                        let (prev_state, prev_cell) = if t > 0 {
                            let prev = &traces[base - n + j];
                            (prev.state, prev.cell)
                        } else {
                            (0.0, 0.0)
                        };
                        let p = params[j].as_ref().expect("cell slot has parameters");
                        forward_step(p, StepInput { ff, rec, prev_state, prev_cell })
                    }
                };
                traces[base + j] = trace;
            }
            predictions.push(self.outputs.iter().map(|&o| traces[base + o].state).collect());
        }
        Ok(Unrolled { n_slots: n, traces, predictions })
    }

    /// Backpropagation through time over a stored window, given the loss
    /// derivative with respect to every prediction. Returns the gradient for
    /// the full flat weight vector (zero for unreachable elements).
    pub fn backward(&self, weights: &[f64], unrolled: &Unrolled, d_predictions: &[Vec<f64>]) -> Vec<f64> {
        let n = self.slots.len();
        let steps = unrolled.steps();
        assert_eq!(d_predictions.len(), steps, "prediction gradient length mismatch");
        let params = self.cell_params(weights);
        let mut param_grads: Vec<Option<CellParams>> =
            params.iter().map(|p| p.as_ref().map(|p| CellParams::zeros(p.cell_type()))).collect();
        let mut grad = vec![0.0; self.n_weights];
        let mut d_state = vec![0.0; steps * n];
        let mut d_cell = vec![0.0; n];

        for (t, row) in d_predictions.iter().enumerate() {
            for (k, &slot) in self.outputs.iter().enumerate() {
                d_state[t * n + slot] += row[k];
            }
        }

        for t in (0..steps).rev() {
            let base = t * n;
            for j in (0..n).rev() {
                let slot = &self.slots[j];
                let Some(p) = params[j].as_ref() else { continue };
                let g = param_grads[j].as_mut().expect("cell slot has a gradient block");
                let step = backward_step(p, &unrolled.traces[base + j], d_state[base + j], d_cell[j], g);
                d_cell[j] = step.d_prev_cell;
                if t > 0 {
                    d_state[base - n + j] += step.d_prev_state;
                }
                for &(src, wi) in &slot.ff {
                    grad[wi] += step.d_ff * unrolled.state(t, src);
                    d_state[base + src] += step.d_ff * weights[wi];
                }
                for &(src, skip, wi) in &slot.rec {
                    if skip > t {
                        continue;
                    }
                    grad[wi] += step.d_rec * unrolled.state(t - skip, src);
                    d_state[(t - skip) * n + src] += step.d_rec * weights[wi];
                }
            }
        }

        for (slot, g) in self.slots.iter().zip(&param_grads) {
            if let (SlotKind::Cell { offset, len, .. }, Some(g)) = (&slot.kind, g) {
                grad[*offset..offset + len].copy_from_slice(g.as_slice());
            }
        }
        grad
    }
}
