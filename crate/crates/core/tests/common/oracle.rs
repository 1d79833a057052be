//! Scalar re-derivation of each cell's forward equations.

use memevo_core::cells::{
    forward_delta, forward_gru, forward_lstm, forward_mgu, forward_simple, forward_ugrnn, Weighted,
};
use memevo_core::genome::{CellParams, CellType};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn sig(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub struct Case {
    pub inputs: Vec<Weighted>,
    pub recurrent: Vec<Weighted>,
    pub prev: f64,
    pub prev_cell: f64,
    pub params: Vec<f64>,
}

impl Case {
    pub fn draw(rng: &mut ChaCha8Rng, cell: CellType) -> Self {
        let edge = |rng: &mut ChaCha8Rng| Weighted::new(rng.random_range(-1.0..1.0), rng.random_range(-2.0..2.0));
        let n_in = rng.random_range(1..=5);
        let n_rec = rng.random_range(0..=4);
        Case {
            inputs: (0..n_in).map(|_| edge(rng)).collect(),
            recurrent: (0..n_rec).map(|_| edge(rng)).collect(),
            prev: rng.random_range(-1.0..1.0),
            prev_cell: rng.random_range(-3.0..3.0),
            params: (0..cell.param_count()).map(|_| rng.random_range(-2.0..2.0)).collect(),
        }
    }

    /// Summed feed-forward and recurrent terms, each accumulated left to right.
    fn sums(&self) -> (f64, f64) {
        let mut ff = 0.0;
        for x in &self.inputs {
            ff += x.weight * x.value;
        }
        let mut rec = 0.0;
        for x in &self.recurrent {
            rec += x.weight * x.value;
        }
        (ff, rec)
    }

    fn block(&self, cell: CellType) -> CellParams {
        CellParams::from_slice(cell, &self.params).unwrap()
    }
}

/// One gate: scale the feed-forward sum by `w`, the recurrent sum by `v`, add `b`.
struct Gate {
    w: f64,
    v: f64,
    b: f64,
}

impl Gate {
    fn at(p: &[f64], k: usize) -> Self {
        Gate { w: p[3 * k], v: p[3 * k + 1], b: p[3 * k + 2] }
    }

    fn pre(&self, ff: f64, rec: f64) -> f64 {
        self.w * ff + self.v * rec + self.b
    }
}

/// Expected `(state, cell state)`; the cell state is only set for LSTM.
pub fn expected(cell: CellType, c: &Case) -> (f64, Option<f64>) {
    let (ff, rec) = c.sums();
    let p = &c.params;
    match cell {
        CellType::Simple => ((ff + rec + p[0]).tanh(), None),
        CellType::DeltaRnn => {
            let [alpha, beta1, beta2, gate_bias, m, bias] = p[..] else { unreachable!() };
            let e_w = ff + rec;
            let e_v = m * c.prev;
            let d1 = alpha * e_v * e_w;
            let d2 = beta1 * e_v + beta2 * e_w;
            let r = sig(e_w + gate_bias);
            let s_tilde = (d1 + d2 + bias).tanh();
            (((1.0 - r) * s_tilde + r * c.prev).tanh(), None)
        }
        CellType::Lstm => {
            let f = sig(Gate::at(p, 0).pre(ff, rec));
            let in_gate = sig(Gate::at(p, 1).pre(ff, rec));
            let c_tilde = Gate::at(p, 2).pre(ff, rec).tanh();
            let o = sig(Gate::at(p, 3).pre(ff, rec));
            let cell = f * c.prev_cell + in_gate * c_tilde;
            (o * cell.tanh(), Some(cell))
        }
        CellType::Gru => {
            let z = sig(Gate::at(p, 0).pre(ff, rec));
            let r = sig(Gate::at(p, 1).pre(ff, rec));
            let mut gated_rec = 0.0;
            for x in &c.recurrent {
                gated_rec += x.weight * (r * x.value);
            }
            let s_tilde = Gate::at(p, 2).pre(ff, gated_rec).tanh();
            (z * s_tilde + (1.0 - z) * c.prev, None)
        }
        CellType::Mgu => {
            let f = sig(Gate::at(p, 0).pre(ff, rec));
            let mut gated_rec = 0.0;
            for x in &c.recurrent {
                gated_rec += x.weight * (f * x.value);
            }
            let s_tilde = Gate::at(p, 1).pre(ff, gated_rec).tanh();
            (f * s_tilde + (1.0 - f) * c.prev, None)
        }
        CellType::Ugrnn => {
            let cand = Gate::at(p, 0).pre(ff, rec).tanh();
            let g = sig(Gate::at(p, 1).pre(ff, rec));
            (g * c.prev + (1.0 - g) * cand, None)
        }
    }
}

/// What the library computes for the same case.
pub fn computed(cell: CellType, c: &Case) -> (f64, Option<f64>) {
    match cell {
        CellType::Simple => (forward_simple(&c.inputs, &c.recurrent, c.params[0]), None),
        CellType::DeltaRnn => (forward_delta(&c.inputs, &c.recurrent, c.prev, &c.block(cell)), None),
        CellType::Lstm => {
            let (s, cs) = forward_lstm(&c.inputs, &c.recurrent, c.prev_cell, &c.block(cell));
            (s, Some(cs))
        }
        CellType::Gru => (forward_gru(&c.inputs, &c.recurrent, c.prev, &c.block(cell)), None),
        CellType::Mgu => (forward_mgu(&c.inputs, &c.recurrent, c.prev, &c.block(cell)), None),
        CellType::Ugrnn => (forward_ugrnn(&c.inputs, &c.recurrent, c.prev, &c.block(cell)), None),
    }
}

/// Largest absolute disagreement over `draws` random cases.
pub fn worst_error(cell: CellType, seed: u64, draws: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..draws {
        let c = Case::draw(&mut rng, cell);
        let (ws, wc) = expected(cell, &c);
        let (gs, gc) = computed(cell, &c);
        worst = worst.max((ws - gs).abs());
        if let (Some(a), Some(b)) = (wc, gc) {
            worst = worst.max((a - b).abs());
        }
    }
    worst
}
