//! Browser bindings for three interactive views: a single cell's response
//! to an input signal, step-by-step genome mutation, and a small evolution
//! run on the synthetic fixture.

use std::sync::Arc;

use memevo_core::cells::{forward_step, StepInput};
use memevo_core::data::{synthetic_fixture, FixtureSpec, NormalizeMode, TimeSeriesSet, FIXTURE_TARGET};
use memevo_core::evolution::{mutate, MutationOp, OperatorConfig};
use memevo_core::genome::{seed_genome, CellParams, CellType, InnovationRegistry, RnnGenome};
use memevo_core::islands::IslandConfig;
use memevo_core::runtime::{Evaluator, EvolutionConfig, Master, TrainingEvaluator, WorkResult};
use memevo_core::trainer::BatchMode;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use wasm_bindgen::prelude::*;

#[derive(Debug, Serialize)]
pub struct CellResponse {
    pub input: Vec<f64>,
    pub state: Vec<f64>,
    pub params: Vec<f64>,
}

/// Drives one cell with a unit step starting at `steps / 4`, feeding its
/// own state back through a skip-1 recurrent weight.
pub fn cell_response(cell: CellType, steps: usize, recurrent_weight: f64, seed: u64) -> CellResponse {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = CellParams::from_fn(cell, |_| rng.random_range(-1.0..=1.0));
    let input: Vec<f64> = (0..steps).map(|t| if t >= steps / 4 { 1.0 } else { 0.0 }).collect();
    let (mut prev_state, mut prev_cell) = (0.0, 0.0);
    let mut state = Vec::with_capacity(steps);
    for &x in &input {
        let trace =
            forward_step(&params, StepInput { ff: x, rec: recurrent_weight * prev_state, prev_state, prev_cell });
        prev_state = trace.state;
        prev_cell = trace.cell;
        state.push(trace.state);
    }
    CellResponse { input, state, params: params.as_slice().to_vec() }
}

fn js_err(e: impl ToString) -> JsValue {
    JsValue::from_str(&e.to_string())
}

fn to_json(v: &impl Serialize) -> String {
    serde_json::to_string(v).expect("demo values serialize")
}

/// JSON `{input, state, params}` for the named cell type.
#[wasm_bindgen(js_name = cellResponse)]
pub fn cell_response_json(cell: &str, steps: usize, recurrent_weight: f64, seed: u64) -> Result<String, JsValue> {
    let cell: CellType = cell.parse().map_err(js_err)?;
    Ok(to_json(&cell_response(cell, steps.clamp(2, 2000), recurrent_weight, seed)))
}

#[derive(Debug, Serialize)]
pub struct GenomeSummary {
    pub nodes: usize,
    pub hidden: usize,
    pub edges: usize,
    pub recurrent_edges: usize,
}

fn summary(g: &RnnGenome) -> GenomeSummary {
    GenomeSummary {
        nodes: g.nodes.iter().filter(|n| n.enabled).count(),
        hidden: g.enabled_hidden_count(),
        edges: g.enabled_edge_count(),
        recurrent_edges: g.enabled_recurrent_edge_count(),
    }
}

/// A genome the page mutates one operator at a time.
#[wasm_bindgen]
pub struct GenomeExplorer {
    genome: RnnGenome,
    registry: InnovationRegistry,
    config: OperatorConfig,
    rng: ChaCha8Rng,
}

#[wasm_bindgen]
impl GenomeExplorer {
    #[wasm_bindgen(constructor)]
    pub fn new(n_inputs: usize, seed: u64) -> Result<GenomeExplorer, JsValue> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut registry = InnovationRegistry::default();
        let genome = seed_genome(n_inputs.clamp(1, 32), 1, &mut registry, &mut rng).map_err(js_err)?;
        Ok(Self { genome, registry, config: OperatorConfig::default(), rng })
    }

    /// Applies the named operator (`add_node`, `split_edge`, ...). Returns a
    /// status message; the genome only changes on success.
    pub fn apply(&mut self, op: &str) -> Result<String, JsValue> {
        let op = parse_op(op).map_err(js_err)?;
        Ok(self.apply_op(op))
    }

    pub fn dump(&self) -> String {
        self.genome.dump()
    }

    /// JSON node and edge counts.
    pub fn summary(&self) -> String {
        to_json(&summary(&self.genome))
    }
}

/// Operator from its snake_case name.
pub fn parse_op(name: &str) -> Result<MutationOp, String> {
    serde_json::from_value(serde_json::Value::String(name.to_string()))
        .map_err(|_| format!("unknown operator `{name}`"))
}

impl GenomeExplorer {
    pub fn genome(&self) -> &RnnGenome {
        &self.genome
    }

    pub fn apply_op(&mut self, op: MutationOp) -> String {
        match mutate(op, &self.genome, &mut self.registry, &self.config, &mut self.rng) {
            Ok(child) => {
                self.genome = child;
                format!("{op:?}: ok")
            }
            Err(e) => format!("{op:?}: {e}"),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct EvolutionStatus {
    pub generated: usize,
    pub evaluated: usize,
    pub inserted: usize,
    pub best: Option<f64>,
    pub persistence: f64,
    pub done: bool,
    pub best_genome: Option<GenomeSummary>,
}

/// A sequential evolution run advanced a few genomes per call, so the page
/// stays responsive.
#[wasm_bindgen]
pub struct EvolutionSession {
    master: Master,
    evaluator: TrainingEvaluator,
    persistence: f64,
}

impl EvolutionSession {
    pub fn create(cells: Vec<CellType>, budget: usize, seed: u64) -> Result<Self, String> {
        let spec = FixtureSpec { files: 4, rows: 300, columns: 6, seed: 2019 };
        let files = synthetic_fixture(&spec);
        let data = TimeSeriesSet::prepare_fold(&files[..2], &files[2..], FIXTURE_TARGET, NormalizeMode::Minmax)
            .map_err(|e| e.to_string())?;
        let mut config = EvolutionConfig {
            islands: IslandConfig { n_islands: 2, population_size: 4, generation_budget: budget },
            ..EvolutionConfig::default()
        };
        config.operators.allowed_cell_types = cells;
        config.training.epochs = 5;
        config.training.batch = BatchMode::Window(50);
        let persistence = data.validation_persistence_mse();
        let n_inputs = data.input_columns.len();
        let master = Master::new(n_inputs, &config, seed).map_err(|e| e.to_string())?;
        let evaluator = TrainingEvaluator { data: Arc::new(data), config: config.training.clone() };
        Ok(Self { master, evaluator, persistence })
    }

    pub fn advance(&mut self, n: usize) -> Result<EvolutionStatus, String> {
        for _ in 0..n {
            let Some(item) = self.master.issue() else { break };
            match self.evaluator.evaluate(&item) {
                Ok((genome, diverged)) => {
                    let result = WorkResult {
                        work_id: item.work_id,
                        genome,
                        duration: Default::default(),
                        worker_id: 0,
                        diverged,
                    };
                    self.master.complete(result).map_err(|e| e.to_string())?;
                }
                Err(e) => {
                    self.master.fail(item.work_id, &e);
                }
            }
        }
        Ok(self.status())
    }

    pub fn status(&self) -> EvolutionStatus {
        let p = self.master.progress();
        EvolutionStatus {
            generated: p.generated,
            evaluated: p.evaluated,
            inserted: p.inserted,
            best: p.best,
            persistence: self.persistence,
            done: self.master.is_done(),
            best_genome: self.master.state.best_genome().map(summary),
        }
    }
}

#[wasm_bindgen]
impl EvolutionSession {
    /// `cells` is a comma-separated list such as `lstm,simple`.
    #[wasm_bindgen(constructor)]
    pub fn new(cells: &str, budget: usize, seed: u64) -> Result<EvolutionSession, JsValue> {
        let cells =
            cells.split(',').map(|c| c.trim().parse::<CellType>()).collect::<Result<Vec<_>, _>>().map_err(js_err)?;
        Self::create(cells, budget.clamp(1, 500), seed).map_err(js_err)
    }

    /// Trains up to `n` more genomes; returns the JSON status.
    pub fn step(&mut self, n: usize) -> Result<String, JsValue> {
        self.advance(n).map(|s| to_json(&s)).map_err(js_err)
    }

    #[wasm_bindgen(js_name = bestDump)]
    pub fn best_dump(&self) -> String {
        self.master.state.best_genome().map(RnnGenome::dump).unwrap_or_default()
    }

    /// Tab-separated `(evaluated, best)` rows.
    pub fn trajectory(&self) -> String {
        memevo_core::harness::plot_data(&self.master.state.log)
    }
}
