//! Unrolled predictions, hand-stepped updates and learning on the fixture.

mod common;

use std::collections::HashMap;

use memevo_core::cells::{forward_step, StepInput, StepTrace};
use memevo_core::data::{synthetic_fixture, FixtureSpec, Frames, NormalizeMode, TimeSeriesSet, FIXTURE_TARGET};
use memevo_core::genome::{
    reachable_set, seed_genome, CellParams, CellType, EdgeGene, InnovationRegistry, NodeGene, NodeId, NodeKind,
    RecurrentEdgeGene, RnnGenome,
};
use memevo_core::trainer::{
    evaluate, genome_weights, l2_norm, rescale_gradient, train, BatchMode, Network, TrainingConfig,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Naive interpreter: memoized recursion over `(node, t)` on the reachable
/// subgraph, cells stepped one at a time.
struct Interpreter<'a> {
    genome: &'a RnnGenome,
    inputs: &'a [Vec<f64>],
    live_nodes: std::collections::HashSet<NodeId>,
    live_edges: std::collections::HashSet<u32>,
    live_rec: std::collections::HashSet<u32>,
    memo: HashMap<(NodeId, usize), StepTrace>,
}

impl<'a> Interpreter<'a> {
    fn new(genome: &'a RnnGenome, inputs: &'a [Vec<f64>]) -> Self {
        let r = reachable_set(genome);
        Self {
            genome,
            inputs,
            live_nodes: r.nodes,
            live_edges: r.edges,
            live_rec: r.recurrent_edges,
            memo: HashMap::new(),
        }
    }

    fn state(&mut self, node: NodeId, t: isize) -> StepTrace {
        if t < 0 {
            return StepTrace::default();
        }
        let t = t as usize;
        if let Some(s) = self.memo.get(&(node, t)) {
            return *s;
        }
        let gene = self.genome.node(node).unwrap();
        let trace = if gene.kind == NodeKind::Input {
            let column = self.genome.input_ids().iter().position(|&i| i == node).unwrap();
            StepTrace { state: self.inputs[t][column], ..Default::default() }
        } else {
            let genome = self.genome;
            let ff_in: Vec<_> = genome
                .edges
                .iter()
                .filter(|e| e.target == node && self.live_edges.contains(&e.innovation_id))
                .collect();
            let rec_in: Vec<_> = genome
                .recurrent_edges
                .iter()
                .filter(|e| e.target == node && self.live_rec.contains(&e.innovation_id))
                .collect();
            let mut ff = 0.0;
            for e in ff_in {
                ff += e.weight * self.state(e.source, t as isize).state;
            }
            let mut rec = 0.0;
            for e in rec_in {
                rec += e.weight * self.state(e.source, t as isize - e.time_skip as isize).state;
            }
            let prev = self.state(node, t as isize - 1);
            forward_step(&gene.params, StepInput { ff, rec, prev_state: prev.state, prev_cell: prev.cell })
        };
        self.memo.insert((node, t), trace);
        trace
    }

    fn predictions(&mut self) -> Vec<Vec<f64>> {
        let outputs = self.genome.output_ids();
        assert!(outputs.iter().all(|o| self.live_nodes.contains(o)));
        (0..self.inputs.len()).map(|t| outputs.iter().map(|&o| self.state(o, t as isize).state).collect()).collect()
    }
}

#[test]
fn predictions_match_reference_interpreter() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for case in 0..200 {
        let n_hidden = rng.random_range(0..=8);
        let cells: Vec<CellType> = (0..n_hidden).map(|_| CellType::ALL[rng.random_range(0..6)]).collect();
        let n_in = rng.random_range(1..=4);
        let mut genome = common::random_genome(&mut rng, n_in, &cells, 5, 1.5);
        for e in genome.edges.iter_mut().filter(|_| rng.random_bool(0.15)) {
            e.enabled = false;
        }
        let steps = rng.random_range(1..=12);
        let inputs: Vec<Vec<f64>> =
            (0..steps).map(|_| (0..n_in).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let Ok(net) = Network::compile(&genome) else { continue };
        let got = net.forward(&genome_weights(&genome), &inputs).unwrap().predictions;
        let want = Interpreter::new(&genome, &inputs).predictions();
        for (t, (g, w)) in got.iter().zip(&want).enumerate() {
            for (a, b) in g.iter().zip(w) {
                assert!((a - b).abs() < 1e-12, "case {case} step {t}: {a} vs {b}");
            }
        }
    }
}

/// Input -> simple hidden node -> output, with a skip-2 self loop on the
/// hidden node.
fn skip_two_genome() -> RnnGenome {
    let node =
        |id, kind, depth, params| NodeGene { innovation_id: id, kind, depth, enabled: true, params, fresh: false };
    let edge = |id, source, target, weight| EdgeGene { innovation_id: id, source, target, weight, enabled: true };
    let mut g = RnnGenome {
        nodes: vec![
            node(0, NodeKind::Input, 0.0, CellParams::zeros(CellType::Simple)),
            node(1, NodeKind::Output, 1.0, CellParams::Simple([0.1])),
            node(2, NodeKind::Hidden, 0.5, CellParams::Simple([-0.2])),
        ],
        edges: vec![edge(0, 0, 2, 0.8), edge(1, 2, 1, 1.1)],
        recurrent_edges: vec![RecurrentEdgeGene {
            innovation_id: 0,
            source: 2,
            target: 2,
            time_skip: 2,
            weight: 0.9,
            enabled: true,
        }],
        ..RnnGenome::default()
    };
    g.canonicalize();
    g
}

#[test]
fn skip_two_loop_reaches_back_two_steps() {
    let g = skip_two_genome();
    let net = Network::compile(&g).unwrap();
    let w = genome_weights(&g);
    let base: Vec<Vec<f64>> = (0..8).map(|t| vec![(t as f64 * 0.7).sin()]).collect();
    let mut poked = base.clone();
    poked[3][0] += 0.5;
    let a = net.forward(&w, &base).unwrap().predictions;
    let b = net.forward(&w, &poked).unwrap().predictions;
    for t in 0..8 {
        let moved = a[t][0] != b[t][0];
        let expect = t >= 3 && (t - 3) % 2 == 0;
        assert_eq!(moved, expect, "step {t}");
    }
}

fn dataset(rows: &[(f64, f64)]) -> Frames {
    Frames { inputs: rows.iter().map(|r| vec![r.0]).collect(), targets: rows.iter().map(|r| vec![r.1]).collect() }
}

#[test]
fn three_updates_match_hand_stepped_nesterov() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let mut registry = InnovationRegistry::default();
    let genome = seed_genome(1, 1, &mut registry, &mut rng).unwrap();
    let frames = dataset(&[(0.1, 0.3), (0.5, 0.45), (-0.4, -0.1), (0.9, 0.6), (0.2, 0.25)]);
    let config = TrainingConfig { epochs: 3, learning_rate: 0.05, ..TrainingConfig::default() };
    let trained = train(&genome, &[frames.clone()], &[frames.clone()], &config).unwrap();

    let mut w = genome.edges[0].weight;
    let mut b = match genome.node(genome.output_ids()[0]).unwrap().params {
        CellParams::Simple([b]) => b,
        _ => unreachable!(),
    };
    let (mut vw, mut vb) = (0.0, 0.0);
    let (mu, lr) = (config.nesterov_mu, config.learning_rate);
    let n = frames.len() as f64;
    let loss_at = |w: f64, b: f64| -> f64 {
        frames.inputs.iter().zip(&frames.targets).map(|(x, y)| ((w * x[0] + b).tanh() - y[0]).powi(2)).sum::<f64>() / n
    };
    let loss_0 = loss_at(w, b);
    for _ in 0..3 {
        let (lw, lb) = (w + mu * vw, b + mu * vb);
        let (mut gw, mut gb) = (0.0, 0.0);
        for (x, y) in frames.inputs.iter().zip(&frames.targets) {
            let p = (lw * x[0] + lb).tanh();
            let d = 2.0 * (p - y[0]) * (1.0 - p * p) / n;
            gw += d * x[0];
            gb += d;
        }
        let norm = (gw * gw + gb * gb).sqrt();
        let scale = if norm > 1.0 {
            1.0 / norm
        } else if norm > 0.0 && norm < 0.05 {
            0.05 / norm
        } else {
            1.0
        };
        vw = mu * vw - lr * gw * scale;
        vb = mu * vb - lr * gb * scale;
        w += vw;
        b += vb;
    }
    let got = genome_weights(&trained.genome);
    let out_bias = match trained.genome.node(trained.genome.output_ids()[0]).unwrap().params {
        CellParams::Simple([b]) => b,
        _ => unreachable!(),
    };
    assert!((got[0] - w).abs() < 1e-12, "weight {} vs {w}", got[0]);
    assert!((out_bias - b).abs() < 1e-12, "bias {out_bias} vs {b}");
    assert!(trained.validation_mse < loss_0, "{} vs {loss_0}", trained.validation_mse);
}

#[test]
fn rescaling_hits_thresholds() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for _ in 0..1000 {
        let n = rng.random_range(1..50);
        let dir: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let unit = l2_norm(&dir);
        for target in [4.0, 0.01, 0.5] {
            let mut g: Vec<f64> = dir.iter().map(|x| x * target / unit).collect();
            rescale_gradient(&mut g, 1.0, 0.05);
            let expect = if target > 1.0 {
                1.0
            } else if target < 0.05 {
                0.05
            } else {
                target
            };
            assert!((l2_norm(&g) - expect).abs() < 1e-9);
        }
    }
}

#[test]
fn training_on_fixture_beats_untrained() {
    let files = synthetic_fixture(&FixtureSpec { files: 4, rows: 400, ..FixtureSpec::default() });
    let data = TimeSeriesSet::prepare_fold(&files[..2], &files[2..], FIXTURE_TARGET, NormalizeMode::Minmax).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(24);
    let mut registry = InnovationRegistry::default();
    let genome = seed_genome(data.input_columns.len(), 1, &mut registry, &mut rng).unwrap();
    let net = Network::compile(&genome).unwrap();
    let before = evaluate(&net, &genome_weights(&genome), &data.validation).unwrap();
    for batch in [BatchMode::FullSequence, BatchMode::Window(50)] {
        let config = TrainingConfig { epochs: 10, batch, ..TrainingConfig::default() };
        let out = train(&genome, &data.train, &data.validation, &config).unwrap();
        assert!(!out.diverged);
        assert!(out.validation_mse < before, "{batch:?}: {} vs untrained {before}", out.validation_mse);
    }
}
