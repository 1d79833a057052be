//! Forward and analytic backward steps for every node type.
//!
//! A node sees its inputs through two weighted sums: `ff`, the sum of
//! `w_ij * s_i(t)` over enabled feed-forward edges, and `rec`, the sum of
//! `v_rjk * s_r(t - k)` over enabled recurrent edges. Gated cells scale
//! each sum per gate (see [`CellParams`]). `prev_state` is the node's own
//! output at `t - 1` and `prev_cell` the LSTM cell state at `t - 1`; both
//! are zero at the first step.

use crate::genome::{CellParams, CellType};

/// Parameter indices inside each [`CellParams`] block.
pub mod layout {
    /// Offsets within one gate block.
    pub const W: usize = 0;
    pub const V: usize = 1;
    pub const B: usize = 2;
    pub const GATE: usize = 3;

    pub mod simple {
        pub const BIAS: usize = 0;
    }

    pub mod delta {
        pub const ALPHA: usize = 0;
        pub const BETA1: usize = 1;
        pub const BETA2: usize = 2;
        pub const GATE_BIAS: usize = 3;
        pub const M: usize = 4;
        pub const BIAS: usize = 5;
    }

    pub mod lstm {
        pub const FORGET: usize = 0;
        pub const INPUT: usize = 3;
        pub const CANDIDATE: usize = 6;
        pub const OUTPUT: usize = 9;
    }

    pub mod gru {
        pub const UPDATE: usize = 0;
        pub const RESET: usize = 3;
        pub const CANDIDATE: usize = 6;
    }

    pub mod mgu {
        pub const FORGET: usize = 0;
        pub const CANDIDATE: usize = 3;
    }

    pub mod ugrnn {
        pub const CANDIDATE: usize = 0;
        pub const GATE: usize = 3;
    }
}

use layout::{B, V, W};

#[inline]
pub fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

/// A value arriving over an edge together with the edge weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Weighted {
    pub value: f64,
    pub weight: f64,
}

impl Weighted {
    pub fn new(value: f64, weight: f64) -> Self {
        Self { value, weight }
    }
}

pub fn weighted_sum(inputs: &[Weighted]) -> f64 {
    inputs.iter().map(|x| x.weight * x.value).sum()
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StepInput {
    pub ff: f64,
    pub rec: f64,
    pub prev_state: f64,
    pub prev_cell: f64,
}

/// Everything one forward step stores for its backward step.
///
/// `gates` holds the cell-specific intermediates:
/// delta `[r, s~]`, lstm `[f, i, c~, o]`, gru `[z, r, s~]`, mgu `[f, s~]`,
/// ugrnn `[c, g]`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StepTrace {
    pub input: StepInput,
    pub state: f64,
    pub cell: f64,
    pub gates: [f64; 4],
}

/// Gradients flowing out of one backward step.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StepGrad {
    pub d_ff: f64,
    pub d_rec: f64,
    pub d_prev_state: f64,
    pub d_prev_cell: f64,
}

#[inline]
fn gate_pre(p: &[f64], at: usize, ff: f64, rec: f64) -> f64 {
    p[at + W] * ff + p[at + V] * rec + p[at + B]
}

pub fn forward_step(params: &CellParams, input: StepInput) -> StepTrace {
    let StepInput { ff, rec, prev_state, prev_cell } = input;
    let mut trace = StepTrace { input, ..StepTrace::default() };
    match params {
        CellParams::Simple(p) => {
            trace.state = (ff + rec + p[layout::simple::BIAS]).tanh();
        }
        CellParams::DeltaRnn(p) => {
            use layout::delta::*;
            let ew = ff + rec;
            let ev = p[M] * prev_state;
            let d1 = p[ALPHA] * ev * ew;
            let d2 = p[BETA1] * ev + p[BETA2] * ew;
            let r = sigmoid(ew + p[GATE_BIAS]);
            let proposal = (d1 + d2 + p[BIAS]).tanh();
            trace.state = ((1.0 - r) * proposal + r * prev_state).tanh();
            trace.gates = [r, proposal, 0.0, 0.0];
        }
        CellParams::Lstm(p) => {
            use layout::lstm::*;
            let f = sigmoid(gate_pre(p, FORGET, ff, rec));
            let i = sigmoid(gate_pre(p, INPUT, ff, rec));
            let c_hat = gate_pre(p, CANDIDATE, ff, rec).tanh();
            let o = sigmoid(gate_pre(p, OUTPUT, ff, rec));
            let c = f * prev_cell + i * c_hat;
            trace.cell = c;
            trace.state = o * c.tanh();
            trace.gates = [f, i, c_hat, o];
        }
        CellParams::Gru(p) => {
            use layout::gru::*;
            let z = sigmoid(gate_pre(p, UPDATE, ff, rec));
            let r = sigmoid(gate_pre(p, RESET, ff, rec));
            let proposal = gate_pre(p, CANDIDATE, ff, r * rec).tanh();
            trace.state = z * proposal + (1.0 - z) * prev_state;
            trace.gates = [z, r, proposal, 0.0];
        }
        CellParams::Mgu(p) => {
            use layout::mgu::*;
            let f = sigmoid(gate_pre(p, FORGET, ff, rec));
            let proposal = gate_pre(p, CANDIDATE, ff, f * rec).tanh();
            trace.state = f * proposal + (1.0 - f) * prev_state;
            trace.gates = [f, proposal, 0.0, 0.0];
        }
        CellParams::Ugrnn(p) => {
            use layout::ugrnn::*;
            let c = gate_pre(p, CANDIDATE, ff, rec).tanh();
            let g = sigmoid(gate_pre(p, GATE, ff, rec));
            trace.state = g * prev_state + (1.0 - g) * c;
            trace.gates = [c, g, 0.0, 0.0];
        }
    }
    trace
}

/// Accumulates the parameter gradient of one gate given the derivative with
/// respect to its pre-activation, returning that derivative's pushes into
/// the `ff` and `rec` sums.
#[inline]
fn gate_back(p: &[f64], g: &mut [f64], at: usize, d_pre: f64, ff: f64, rec: f64) -> (f64, f64) {
    g[at + W] += d_pre * ff;
    g[at + V] += d_pre * rec;
    g[at + B] += d_pre;
    (d_pre * p[at + W], d_pre * p[at + V])
}

/// Backward step through one forward step.
///
/// `d_state` is the total derivative of the loss with respect to this step's
/// output and `d_cell` the derivative with respect to the LSTM cell state
/// arriving from the next step (ignored by other cells). Parameter gradients
/// are added into `grad`, which must have the same cell type as `params`.
pub fn backward_step(
    params: &CellParams,
    trace: &StepTrace,
    d_state: f64,
    d_cell: f64,
    grad: &mut CellParams,
) -> StepGrad {
    let StepInput { ff, rec, prev_state, prev_cell } = trace.input;
    let mut out = StepGrad::default();
    match (params, grad) {
        (CellParams::Simple(_), CellParams::Simple(g)) => {
            let d_pre = d_state * (1.0 - trace.state * trace.state);
            g[layout::simple::BIAS] += d_pre;
            out.d_ff = d_pre;
            out.d_rec = d_pre;
        }
        (CellParams::DeltaRnn(p), CellParams::DeltaRnn(g)) => {
            use layout::delta::*;
            let [r, proposal, ..] = trace.gates;
            let ew = ff + rec;
            let ev = p[M] * prev_state;
            let d_mix = d_state * (1.0 - trace.state * trace.state);
            let d_proposal = d_mix * (1.0 - r);
            let d_r = d_mix * (prev_state - proposal);
            out.d_prev_state = d_mix * r;

            let d_inner = d_proposal * (1.0 - proposal * proposal);
            g[BIAS] += d_inner;
            g[ALPHA] += d_inner * ev * ew;
            g[BETA1] += d_inner * ev;
            g[BETA2] += d_inner * ew;
            let d_ev = d_inner * (p[ALPHA] * ew + p[BETA1]);
            let mut d_ew = d_inner * (p[ALPHA] * ev + p[BETA2]);

            let d_gate = d_r * r * (1.0 - r);
            g[GATE_BIAS] += d_gate;
            d_ew += d_gate;

            g[M] += d_ev * prev_state;
            out.d_prev_state += d_ev * p[M];
            out.d_ff = d_ew;
            out.d_rec = d_ew;
        }
        (CellParams::Lstm(p), CellParams::Lstm(g)) => {
            use layout::lstm::*;
            let [f, i, c_hat, o] = trace.gates;
            let tanh_c = trace.cell.tanh();
            let d_o = d_state * tanh_c;
            let d_c = d_cell + d_state * o * (1.0 - tanh_c * tanh_c);
            out.d_prev_cell = d_c * f;
            let d_f = d_c * prev_cell;
            let d_i = d_c * c_hat;
            let d_c_hat = d_c * i;
            for (at, d_pre) in [
                (FORGET, d_f * f * (1.0 - f)),
                (INPUT, d_i * i * (1.0 - i)),
                (CANDIDATE, d_c_hat * (1.0 - c_hat * c_hat)),
                (OUTPUT, d_o * o * (1.0 - o)),
            ] {
                let (a, b) = gate_back(p, g, at, d_pre, ff, rec);
                out.d_ff += a;
                out.d_rec += b;
            }
        }
        (CellParams::Gru(p), CellParams::Gru(g)) => {
            use layout::gru::*;
            let [z, r, proposal, _] = trace.gates;
            let d_z = d_state * (proposal - prev_state);
            let d_proposal = d_state * z;
            out.d_prev_state = d_state * (1.0 - z);

            let d_pre_s = d_proposal * (1.0 - proposal * proposal);
            let (a, b) = gate_back(p, g, CANDIDATE, d_pre_s, ff, r * rec);
            out.d_ff += a;
            out.d_rec += b * r;
            let d_r = b * rec;

            for (at, d_pre) in [(UPDATE, d_z * z * (1.0 - z)), (RESET, d_r * r * (1.0 - r))] {
                let (a, b) = gate_back(p, g, at, d_pre, ff, rec);
                out.d_ff += a;
                out.d_rec += b;
            }
        }
        (CellParams::Mgu(p), CellParams::Mgu(g)) => {
            use layout::mgu::*;
            let [f, proposal, ..] = trace.gates;
            let mut d_f = d_state * (proposal - prev_state);
            let d_proposal = d_state * f;
            out.d_prev_state = d_state * (1.0 - f);

            let d_pre_s = d_proposal * (1.0 - proposal * proposal);
            let (a, b) = gate_back(p, g, CANDIDATE, d_pre_s, ff, f * rec);
            out.d_ff += a;
            out.d_rec += b * f;
            d_f += b * rec;

            let (a, b) = gate_back(p, g, FORGET, d_f * f * (1.0 - f), ff, rec);
            out.d_ff += a;
            out.d_rec += b;
        }
        (CellParams::Ugrnn(p), CellParams::Ugrnn(g)) => {
            use layout::ugrnn::*;
            let [c, gate, ..] = trace.gates;
            let d_gate = d_state * (prev_state - c);
            let d_c = d_state * (1.0 - gate);
            out.d_prev_state = d_state * gate;
            for (at, d_pre) in [(CANDIDATE, d_c * (1.0 - c * c)), (GATE, d_gate * gate * (1.0 - gate))] {
                let (a, b) = gate_back(p, g, at, d_pre, ff, rec);
                out.d_ff += a;
                out.d_rec += b;
            }
        }
        (p, g) => panic!("gradient buffer for {} does not match {} parameters", g.cell_type(), p.cell_type()),
    }
    out
}

/// Simple neuron: `tanh(sum w s + sum v s_r + bias)`.
pub fn forward_simple(inputs: &[Weighted], recurrent: &[Weighted], bias: f64) -> f64 {
    let params = CellParams::Simple([bias]);
    forward_step(&params, StepInput { ff: weighted_sum(inputs), rec: weighted_sum(recurrent), ..Default::default() })
        .state
}

fn forward_with_state(
    params: &CellParams,
    expected: CellType,
    inputs: &[Weighted],
    recurrent: &[Weighted],
    prev_state: f64,
    prev_cell: f64,
) -> StepTrace {
    assert_eq!(params.cell_type(), expected, "parameter block does not match the cell");
    forward_step(params, StepInput { ff: weighted_sum(inputs), rec: weighted_sum(recurrent), prev_state, prev_cell })
}

pub fn forward_delta(inputs: &[Weighted], recurrent: &[Weighted], prev_state: f64, params: &CellParams) -> f64 {
    forward_with_state(params, CellType::DeltaRnn, inputs, recurrent, prev_state, 0.0).state
}

/// Returns `(s_j(t), c_j(t))`.
pub fn forward_lstm(inputs: &[Weighted], recurrent: &[Weighted], prev_cell: f64, params: &CellParams) -> (f64, f64) {
    let t = forward_with_state(params, CellType::Lstm, inputs, recurrent, 0.0, prev_cell);
    (t.state, t.cell)
}

pub fn forward_gru(inputs: &[Weighted], recurrent: &[Weighted], prev_state: f64, params: &CellParams) -> f64 {
    forward_with_state(params, CellType::Gru, inputs, recurrent, prev_state, 0.0).state
}

pub fn forward_mgu(inputs: &[Weighted], recurrent: &[Weighted], prev_state: f64, params: &CellParams) -> f64 {
    forward_with_state(params, CellType::Mgu, inputs, recurrent, prev_state, 0.0).state
}

pub fn forward_ugrnn(inputs: &[Weighted], recurrent: &[Weighted], prev_state: f64, params: &CellParams) -> f64 {
    forward_with_state(params, CellType::Ugrnn, inputs, recurrent, prev_state, 0.0).state
}

/// Where a recurrent input of a single unrolled unit comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum RecurrentSource {
    /// The unit's own output.
    SelfLoop,
    /// An external series, read `time_skip` steps back.
    External(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecurrentInput {
    pub source: RecurrentSource,
    pub time_skip: usize,
    pub weight: f64,
}

/// One node unrolled over time: feed-forward input series with their edge
/// weights plus recurrent inputs with time skips.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitWiring {
    pub inputs: Vec<(f64, Vec<f64>)>,
    pub recurrent: Vec<RecurrentInput>,
}

impl UnitWiring {
    pub fn steps(&self) -> usize {
        self.inputs.first().map(|(_, s)| s.len()).unwrap_or(0)
    }

    /// Largest incoming time skip; the history a unit needs to keep.
    pub fn max_skip(&self) -> usize {
        self.recurrent.iter().map(|r| r.time_skip).max().unwrap_or(0)
    }

    fn rec_sum(&self, states: &[f64], t: usize) -> f64 {
        self.recurrent
            .iter()
            .filter(|r| r.time_skip <= t)
            .map(|r| {
                let at = t - r.time_skip;
                let value = match &r.source {
                    RecurrentSource::SelfLoop => states[at],
                    RecurrentSource::External(series) => series[at],
                };
                r.weight * value
            })
            .sum()
    }
}

/// Stored per-step activations of one unrolled unit.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeActivationState {
    pub cell: CellType,
    pub steps: Vec<StepTrace>,
}

impl NodeActivationState {
    pub fn outputs(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.state).collect()
    }
}

/// Gradient of a scalar loss with respect to everything a unit touches.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientBuffer {
    pub params: CellParams,
    pub input_weights: Vec<f64>,
    pub recurrent_weights: Vec<f64>,
    /// `[input][t]`: derivative with respect to `s_i(t)`.
    pub inputs: Vec<Vec<f64>>,
    /// `[recurrent input][t]`: derivative with respect to the external
    /// series value at `t` (empty rows for self-loops).
    pub recurrent_inputs: Vec<Vec<f64>>,
}

impl GradientBuffer {
    pub fn zeros(cell: CellType, wiring: &UnitWiring) -> Self {
        let steps = wiring.steps();
        Self {
            params: CellParams::zeros(cell),
            input_weights: vec![0.0; wiring.inputs.len()],
            recurrent_weights: vec![0.0; wiring.recurrent.len()],
            inputs: vec![vec![0.0; steps]; wiring.inputs.len()],
            recurrent_inputs: wiring
                .recurrent
                .iter()
                .map(|r| match r.source {
                    RecurrentSource::SelfLoop => Vec::new(),
                    RecurrentSource::External(_) => vec![0.0; steps],
                })
                .collect(),
        }
    }
}

/// Runs one unit over its whole input window.
pub fn unroll_unit(params: &CellParams, wiring: &UnitWiring) -> NodeActivationState {
    let steps = wiring.steps();
    let mut states = Vec::with_capacity(steps);
    let mut traces = Vec::with_capacity(steps);
    let mut prev_state = 0.0;
    let mut prev_cell = 0.0;
    for t in 0..steps {
        let ff = wiring.inputs.iter().map(|(w, s)| w * s[t]).sum();
        let rec = wiring.rec_sum(&states, t);
        let trace = forward_step(params, StepInput { ff, rec, prev_state, prev_cell });
        prev_state = trace.state;
        prev_cell = trace.cell;
        states.push(trace.state);
        traces.push(trace);
    }
    NodeActivationState { cell: params.cell_type(), steps: traces }
}

/// Backpropagation through time for one unit, given `dL/ds(t)` from outside
/// the unit for every step.
///
/// # Panics
/// When `state` does not cover the wiring's window or its cell type differs
/// from `params`.
pub fn backward(
    params: &CellParams,
    wiring: &UnitWiring,
    state: &NodeActivationState,
    upstream: &[f64],
) -> GradientBuffer {
    let steps = wiring.steps();
    assert_eq!(state.steps.len(), steps, "stored activations do not cover the window");
    assert_eq!(upstream.len(), steps, "upstream gradient length mismatch");
    assert_eq!(state.cell, params.cell_type(), "stored activations are for another cell type");

    let mut grad = GradientBuffer::zeros(params.cell_type(), wiring);
    let mut d_state: Vec<f64> = upstream.to_vec();
    let mut d_cell = 0.0;
    for t in (0..steps).rev() {
        let trace = &state.steps[t];
        let step = backward_step(params, trace, d_state[t], d_cell, &mut grad.params);
        d_cell = step.d_prev_cell;
        if t > 0 {
            d_state[t - 1] += step.d_prev_state;
        }
        for (k, (w, series)) in wiring.inputs.iter().enumerate() {
            grad.input_weights[k] += step.d_ff * series[t];
            grad.inputs[k][t] += step.d_ff * w;
        }
        for (k, r) in wiring.recurrent.iter().enumerate() {
            if r.time_skip > t {
                continue;
            }
            let at = t - r.time_skip;
            match &r.source {
                RecurrentSource::SelfLoop => {
                    grad.recurrent_weights[k] += step.d_rec * state.steps[at].state;
                    d_state[at] += step.d_rec * r.weight;
                }
                RecurrentSource::External(series) => {
                    grad.recurrent_weights[k] += step.d_rec * series[at];
                    grad.recurrent_inputs[k][at] += step.d_rec * r.weight;
                }
            }
        }
    }
    grad
}
