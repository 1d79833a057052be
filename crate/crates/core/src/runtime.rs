//! In-process master/worker execution.
//!
//! Workers pull work when idle and push results back over channels. The
//! master owns the [`RunState`] and the generative RNG, so all population
//! updates are serialized. A [`ReplayStep`] record of the master's
//! issue/complete order reproduces any run sequentially.

use std::collections::{HashMap, VecDeque};
use std::fmt;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::str::FromStr;
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use crossbeam_channel::{unbounded, Receiver, Sender};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::FoldData;
use crate::evolution::OperatorConfig;
use crate::genome::{Fitness, RnnGenome};
use crate::islands::{EventLog, Island, IslandConfig, IslandError, NextWork, RunState};
use crate::trainer::{train, TrainError, TrainingConfig};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvolutionConfig {
    pub islands: IslandConfig,
    pub operators: OperatorConfig,
    pub training: TrainingConfig,
}

impl EvolutionConfig {
    pub fn validate(&self) -> Result<(), String> {
        self.islands.validate()?;
        self.operators.validate()?;
        self.training.validate().map_err(|e| e.to_string())
    }
}

#[derive(Debug, Clone)]
pub struct WorkItem {
    pub work_id: u64,
    pub genome: RnnGenome,
    pub island: usize,
    /// Per-item seed for any stochastic training behaviour.
    pub seed: u64,
    pub attempt: u32,
}

#[derive(Debug, Clone)]
pub struct WorkResult {
    pub work_id: u64,
    pub genome: RnnGenome,
    pub duration: Duration,
    pub worker_id: usize,
    pub diverged: bool,
}

/// Turns a child into a trained, scored genome.
pub trait Evaluator: Send + Sync {
    fn evaluate(&self, item: &WorkItem) -> Result<(RnnGenome, bool), String>;
}

/// Trains with backpropagation through time and scores on the validation
/// series of one fold.
pub struct TrainingEvaluator {
    pub data: Arc<FoldData>,
    pub config: TrainingConfig,
}

impl Evaluator for TrainingEvaluator {
    fn evaluate(&self, item: &WorkItem) -> Result<(RnnGenome, bool), String> {
        let outcome = train(&item.genome, &self.data.train, &self.data.validation, &self.config)
            .map_err(|e: TrainError| e.to_string())?;
        Ok((outcome.genome, outcome.diverged))
    }
}

/// One master action, in the order the master performed it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReplayStep {
    Issue(u64),
    Complete(u64),
    Fail(u64),
}

impl fmt::Display for ReplayStep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ReplayStep::Issue(id) => write!(f, "issue {id}"),
            ReplayStep::Complete(id) => write!(f, "complete {id}"),
            ReplayStep::Fail(id) => write!(f, "fail {id}"),
        }
    }
}

impl FromStr for ReplayStep {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (verb, id) = s.trim().split_once(' ').ok_or_else(|| format!("malformed replay step `{s}`"))?;
        let id: u64 = id.trim().parse().map_err(|_| format!("bad work id in `{s}`"))?;
        match verb {
            "issue" => Ok(ReplayStep::Issue(id)),
            "complete" => Ok(ReplayStep::Complete(id)),
            "fail" => Ok(ReplayStep::Fail(id)),
            _ => Err(format!("unknown replay step `{verb}`")),
        }
    }
}

pub fn format_replay(steps: &[ReplayStep]) -> String {
    steps.iter().map(|s| format!("{s}\n")).collect()
}

pub fn parse_replay(text: &str) -> Result<Vec<ReplayStep>, String> {
    text.lines().filter(|l| !l.trim().is_empty()).map(str::parse).collect()
}

/// Periodic status line.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Progress {
    pub generated: usize,
    pub evaluated: usize,
    pub inserted: usize,
    pub best: Option<f64>,
}

impl fmt::Display for Progress {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "generated={} evaluated={} inserted={} best=", self.generated, self.evaluated, self.inserted)?;
        match self.best {
            Some(b) => write!(f, "{b:.6e}"),
            None => write!(f, "-"),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RuntimeError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Island(#[from] IslandError),
    #[error("replay refers to unknown work id {0}")]
    UnknownWork(u64),
    #[error("replay step {0} does not match the regenerated run")]
    ReplayMismatch(usize),
    #[error("all workers stopped")]
    WorkersDied,
    #[error("every island failed to produce a child")]
    Stalled,
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Mixes several values into one seed.
pub fn derive_seed(parts: &[u64]) -> u64 {
    parts.iter().fold(0x5EED_u64, |acc, &p| splitmix(acc ^ splitmix(p)))
}

/// The master: run state, generative RNG, in-flight work and the replay
/// record.
pub struct Master {
    pub state: RunState,
    config: EvolutionConfig,
    rng: ChaCha8Rng,
    seed: u64,
    next_work_id: u64,
    in_flight: HashMap<u64, WorkItem>,
    reissue: VecDeque<WorkItem>,
    pub replay: Vec<ReplayStep>,
    stalled: bool,
}

impl Master {
    pub fn new(n_inputs: usize, config: &EvolutionConfig, seed: u64) -> Result<Self, RuntimeError> {
        config.validate().map_err(RuntimeError::Config)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let state = RunState::new(n_inputs, 1, &config.islands, &mut rng)?;
        Ok(Self {
            state,
            config: config.clone(),
            rng,
            seed,
            next_work_id: 0,
            in_flight: HashMap::new(),
            reissue: VecDeque::new(),
            replay: Vec::new(),
            stalled: false,
        })
    }

    /// Hands out the next item: a pending reissue first, then a fresh child.
    pub fn issue(&mut self) -> Option<WorkItem> {
        let item = match self.reissue.pop_front() {
            Some(item) => item,
            None => match self.state.next_work(&self.config.operators, &mut self.rng) {
                NextWork::Work(child) => {
                    let work_id = self.next_work_id;
                    self.next_work_id += 1;
                    WorkItem {
                        work_id,
                        genome: child.genome,
                        island: child.island,
                        seed: derive_seed(&[self.seed, work_id]),
                        attempt: 0,
                    }
                }
                NextWork::Exhausted => return None,
                NextWork::Stalled => {
                    self.stalled = true;
                    return None;
                }
            },
        };
        self.replay.push(ReplayStep::Issue(item.work_id));
        self.in_flight.insert(item.work_id, item.clone());
        Some(item)
    }

    /// Integrates a result. Results for unknown or already integrated work
    /// ids are ignored and return `false`.
    pub fn complete(&mut self, result: WorkResult) -> Result<bool, RuntimeError> {
        if self.in_flight.remove(&result.work_id).is_none() {
            return Ok(false);
        }
        self.replay.push(ReplayStep::Complete(result.work_id));
        self.state.insert_result(result.genome)?;
        Ok(true)
    }

    /// Records a failed attempt; the first failure of an item queues it
    /// again, the second gives up on it.
    pub fn fail(&mut self, work_id: u64, reason: &str) -> bool {
        let Some(mut item) = self.in_flight.remove(&work_id) else {
            return false;
        };
        self.replay.push(ReplayStep::Fail(work_id));
        if item.attempt == 0 {
            item.attempt = 1;
            self.reissue.push_back(item);
        } else {
            self.state.record_failure(item.island, item.genome.generation_id, reason);
        }
        true
    }

    pub fn in_flight(&self) -> usize {
        self.in_flight.len()
    }

    pub fn is_done(&self) -> bool {
        self.in_flight.is_empty() && self.reissue.is_empty() && (self.state.is_exhausted() || self.stalled)
    }

    pub fn progress(&self) -> Progress {
        Progress {
            generated: self.state.generated_count,
            evaluated: self.state.evaluated_count,
            inserted: self.state.inserted_count,
            best: self.state.best_fitness(),
        }
    }

    fn into_report(self, started: Instant) -> Result<RunReport, RuntimeError> {
        if self.stalled && self.state.evaluated_count == 0 {
            return Err(RuntimeError::Stalled);
        }
        Ok(RunReport {
            best_genome: self.state.best_genome().cloned(),
            log: self.state.log.clone(),
            islands: self.state.islands.clone(),
            replay: self.replay,
            generated: self.state.generated_count,
            evaluated: self.state.evaluated_count,
            inserted: self.state.inserted_count,
            discarded: self.state.discarded_count,
            failed: self.state.failed_count,
            elapsed: started.elapsed(),
        })
    }
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub best_genome: Option<RnnGenome>,
    pub log: EventLog,
    pub islands: Vec<Island>,
    pub replay: Vec<ReplayStep>,
    pub generated: usize,
    pub evaluated: usize,
    pub inserted: usize,
    pub discarded: usize,
    pub failed: usize,
    pub elapsed: Duration,
}

impl RunReport {
    pub fn best_fitness(&self) -> Option<f64> {
        self.best_genome.as_ref().and_then(|g| g.fitness.value())
    }
}

enum ToMaster {
    Ready(usize),
    Done(usize, WorkResult),
    Failed(usize, u64, String),
}

fn evaluate_guarded(evaluator: &dyn Evaluator, item: &WorkItem) -> Result<(RnnGenome, bool), String> {
    match catch_unwind(AssertUnwindSafe(|| evaluator.evaluate(item))) {
        Ok(result) => result,
        Err(panic) => Err(panic
            .downcast_ref::<&str>()
            .map(|s| s.to_string())
            .or_else(|| panic.downcast_ref::<String>().cloned())
            .unwrap_or_else(|| "worker panicked".to_string())),
    }
}

/// Pulls items until the master sends `None` or hangs up.
fn worker_loop(
    worker_id: usize,
    work: Receiver<Option<WorkItem>>,
    results: Sender<ToMaster>,
    evaluator: Arc<dyn Evaluator>,
) {
    if results.send(ToMaster::Ready(worker_id)).is_err() {
        return;
    }
    while let Ok(Some(item)) = work.recv() {
        let started = Instant::now();
        let message = match evaluate_guarded(evaluator.as_ref(), &item) {
            Ok((mut genome, diverged)) => {
                if !genome.fitness.is_evaluated() {
                    genome.fitness = Fitness::Evaluated(f64::INFINITY);
                }
                ToMaster::Done(
                    worker_id,
                    WorkResult { work_id: item.work_id, genome, duration: started.elapsed(), worker_id, diverged },
                )
            }
            Err(reason) => ToMaster::Failed(worker_id, item.work_id, reason),
        };
        if results.send(message).is_err() {
            return;
        }
    }
}

/// Options for [`run_with`].
pub struct RunOptions<'a> {
    pub n_workers: usize,
    /// Called with a status line every `progress_every` integrated results.
    pub progress: Option<&'a mut dyn FnMut(&Progress)>,
    pub progress_every: usize,
}

impl Default for RunOptions<'_> {
    fn default() -> Self {
        Self { n_workers: 1, progress: None, progress_every: 50 }
    }
}

/// Runs the evolution on one fold of data with the training evaluator.
pub fn run(
    data: Arc<FoldData>,
    config: &EvolutionConfig,
    n_workers: usize,
    seed: u64,
) -> Result<RunReport, RuntimeError> {
    let n_inputs = data.input_columns.len();
    let evaluator = Arc::new(TrainingEvaluator { data, config: config.training.clone() });
    run_with(n_inputs, config, seed, evaluator, RunOptions { n_workers, ..RunOptions::default() })
}

/// Runs the evolution with any evaluator.
pub fn run_with(
    n_inputs: usize,
    config: &EvolutionConfig,
    seed: u64,
    evaluator: Arc<dyn Evaluator>,
    mut options: RunOptions<'_>,
) -> Result<RunReport, RuntimeError> {
    if options.n_workers == 0 {
        return Err(RuntimeError::Config("n_workers must be at least 1".into()));
    }
    let started = Instant::now();
    let mut master = Master::new(n_inputs, config, seed)?;
    let (result_tx, result_rx) = unbounded::<ToMaster>();
    let mut work_txs = Vec::with_capacity(options.n_workers);
    let mut handles = Vec::with_capacity(options.n_workers);
    for worker_id in 0..options.n_workers {
        let (work_tx, work_rx) = unbounded::<Option<WorkItem>>();
        let results = result_tx.clone();
        let evaluator = Arc::clone(&evaluator);
        work_txs.push(work_tx);
        handles.push(
            thread::Builder::new()
                .name(format!("worker-{worker_id}"))
                .spawn(move || worker_loop(worker_id, work_rx, results, evaluator))
                .expect("spawn worker thread"),
        );
    }
    drop(result_tx);

    let mut idle: Vec<usize> = Vec::new();
    let mut integrated = 0usize;
    let mut outcome = Ok(());
    while !master.is_done() {
        let Ok(message) = result_rx.recv() else {
            outcome = Err(RuntimeError::WorkersDied);
            break;
        };
        let ready = match message {
            ToMaster::Ready(w) => w,
            ToMaster::Done(w, result) => {
                if master.complete(result)? {
                    integrated += 1;
                    if let Some(report) = options.progress.as_mut() {
                        if integrated % options.progress_every.max(1) == 0 {
                            report(&master.progress());
                        }
                    }
                }
                w
            }
            ToMaster::Failed(w, work_id, reason) => {
                master.fail(work_id, &reason);
                w
            }
        };
        idle.push(ready);
        while let Some(&w) = idle.last() {
            match master.issue() {
                Some(item) => {
                    idle.pop();
                    if work_txs[w].send(Some(item.clone())).is_err() {
                        master.fail(item.work_id, "worker unavailable");
                    }
                }
                None => break,
            }
        }
    }
    for tx in &work_txs {
        let _ = tx.send(None);
    }
    drop(work_txs);
    for h in handles {
        let _ = h.join();
    }
    outcome?;
    if let Some(report) = options.progress.as_mut() {
        report(&master.progress());
    }
    master.into_report(started)
}

/// Re-runs a recorded master order sequentially, evaluating each item when
/// its completion step comes up.
pub fn replay(
    n_inputs: usize,
    config: &EvolutionConfig,
    seed: u64,
    evaluator: &dyn Evaluator,
    steps: &[ReplayStep],
) -> Result<RunReport, RuntimeError> {
    let started = Instant::now();
    let mut master = Master::new(n_inputs, config, seed)?;
    let mut pending: HashMap<u64, WorkItem> = HashMap::new();
    for (i, step) in steps.iter().enumerate() {
        match *step {
            ReplayStep::Issue(id) => {
                let item = master.issue().ok_or(RuntimeError::ReplayMismatch(i))?;
                if item.work_id != id {
                    return Err(RuntimeError::ReplayMismatch(i));
                }
                pending.insert(id, item);
            }
            ReplayStep::Complete(id) => {
                let item = pending.remove(&id).ok_or(RuntimeError::UnknownWork(id))?;
                let (mut genome, diverged) =
                    evaluate_guarded(evaluator, &item).map_err(|_| RuntimeError::ReplayMismatch(i))?;
                if !genome.fitness.is_evaluated() {
                    genome.fitness = Fitness::Evaluated(f64::INFINITY);
                }
                let result = WorkResult { work_id: id, genome, duration: Duration::ZERO, worker_id: 0, diverged };
                master.complete(result)?;
            }
            ReplayStep::Fail(id) => {
                pending.remove(&id).ok_or(RuntimeError::UnknownWork(id))?;
                master.fail(id, "failed in recorded run");
            }
        }
    }
    master.into_report(started)
}
