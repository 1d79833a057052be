//! Central-difference checks of the analytic backward passes.

use memevo_core::cells::{backward, unroll_unit, RecurrentInput, RecurrentSource, UnitWiring};
use memevo_core::genome::{CellParams, CellType};
use memevo_core::trainer::{genome_weights, loss_and_gradient, Network};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const H: f64 = 1e-5;
pub const REL: f64 = 1e-4;
pub const FLOOR: f64 = 1e-7;

fn random_wiring(rng: &mut ChaCha8Rng, steps: usize) -> UnitWiring {
    let n_in = rng.random_range(1..=4);
    let n_rec = rng.random_range(0..=3);
    let series = |rng: &mut ChaCha8Rng| (0..steps).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<_>>();
    UnitWiring {
        inputs: (0..n_in).map(|_| (rng.random_range(-1.0..1.0), series(rng))).collect(),
        recurrent: (0..n_rec)
            .map(|_| RecurrentInput {
                source: if rng.random_bool(0.5) {
                    RecurrentSource::SelfLoop
                } else {
                    RecurrentSource::External(series(rng))
                },
                time_skip: rng.random_range(1..=3),
                weight: rng.random_range(-1.0..1.0),
            })
            .collect(),
    }
}

fn unit_loss(params: &CellParams, wiring: &UnitWiring, upstream: &[f64]) -> f64 {
    unroll_unit(params, wiring).outputs().iter().zip(upstream).map(|(s, u)| s * u).sum()
}

/// Central difference of `loss` along one scalar reached through `poke`.
fn central<T: Clone>(base: &T, poke: impl Fn(&mut T, f64), loss: impl Fn(&T) -> f64) -> f64 {
    let mut plus = base.clone();
    poke(&mut plus, H);
    let mut minus = base.clone();
    poke(&mut minus, -H);
    (loss(&plus) - loss(&minus)) / (2.0 * H)
}

struct Tracker {
    worst: f64,
    failure: Option<String>,
}

impl Tracker {
    fn record(&mut self, analytic: f64, numeric: f64, what: impl FnOnce() -> String) {
        if !super::close(analytic, numeric, REL, FLOOR) && self.failure.is_none() {
            self.failure = Some(format!("{}: analytic {analytic} numeric {numeric}", what()));
        }
        let scale = analytic.abs().max(numeric.abs());
        if scale > 1e-6 {
            self.worst = self.worst.max((analytic - numeric).abs() / scale);
        }
    }

    fn finish(self) -> Result<f64, String> {
        self.failure.map_or(Ok(self.worst), Err)
    }
}

/// One random single-unit configuration: every parameter, edge weight and
/// input value. Returns the worst relative error seen.
pub fn unit_case(cell: CellType, seed: u64) -> Result<f64, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let steps = 8;
    let params = CellParams::from_fn(cell, |_| rng.random_range(-1.0..1.0));
    let wiring = random_wiring(&mut rng, steps);
    let upstream: Vec<f64> = (0..steps).map(|_| rng.random_range(-1.0..1.0)).collect();
    let state = unroll_unit(&params, &wiring);
    let grad = backward(&params, &wiring, &state, &upstream);
    let mut t = Tracker { worst: 0.0, failure: None };
    let tag = |what: String| format!("{cell} seed {seed} {what}");

    for k in 0..params.len() {
        let n = central(&params, |p, h| p.as_mut_slice()[k] += h, |p| unit_loss(p, &wiring, &upstream));
        t.record(grad.params.as_slice()[k], n, || tag(format!("param {k}")));
    }
    for k in 0..wiring.inputs.len() {
        let n = central(&wiring, |w, h| w.inputs[k].0 += h, |w| unit_loss(&params, w, &upstream));
        t.record(grad.input_weights[k], n, || tag(format!("input weight {k}")));
        for s in 0..steps {
            let n = central(&wiring, |w, h| w.inputs[k].1[s] += h, |w| unit_loss(&params, w, &upstream));
            t.record(grad.inputs[k][s], n, || tag(format!("input {k} at {s}")));
        }
    }
    for k in 0..wiring.recurrent.len() {
        let n = central(&wiring, |w, h| w.recurrent[k].weight += h, |w| unit_loss(&params, w, &upstream));
        t.record(grad.recurrent_weights[k], n, || tag(format!("recurrent weight {k}")));
        if let RecurrentSource::External(_) = wiring.recurrent[k].source {
            for s in 0..steps {
                let n = central(
                    &wiring,
                    |w, h| {
                        if let RecurrentSource::External(series) = &mut w.recurrent[k].source {
                            series[s] += h;
                        }
                    },
                    |w| unit_loss(&params, w, &upstream),
                );
                t.record(grad.recurrent_inputs[k][s], n, || tag(format!("recurrent input {k} at {s}")));
            }
        }
    }
    t.finish()
}

/// One random whole genome: every flattened weight against the MSE loss.
pub fn network_case(seed: u64) -> Result<f64, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_hidden = rng.random_range(0..=6);
    let cells: Vec<CellType> = (0..n_hidden).map(|_| CellType::ALL[rng.random_range(0..6)]).collect();
    let n_in = rng.random_range(1..=3);
    let genome = super::random_genome(&mut rng, n_in, &cells, 3, 1.0);
    let net = Network::compile(&genome).map_err(|e| e.to_string())?;
    let steps = 8;
    let inputs: Vec<Vec<f64>> = (0..steps).map(|_| (0..n_in).map(|_| rng.random_range(0.0..1.0)).collect()).collect();
    let targets: Vec<Vec<f64>> = (0..steps).map(|_| vec![rng.random_range(0.0..1.0)]).collect();
    let w = genome_weights(&genome);
    let (_, grad) = loss_and_gradient(&net, &w, &inputs, &targets).unwrap();
    let loss = |w: &Vec<f64>| loss_and_gradient(&net, w, &inputs, &targets).unwrap().0;
    let mut t = Tracker { worst: 0.0, failure: None };
    for k in 0..w.len() {
        let n = central(&w, |w, h| w[k] += h, loss);
        t.record(grad[k], n, || format!("genome seed {seed} weight {k}"));
    }
    t.finish()
}
