//! Backpropagation through time with Nesterov momentum, global gradient
//! clipping and boosting, and Lamarckian weight reuse.

mod network;

use serde::{Deserialize, Serialize};

use crate::cells::layout;
use crate::data::Frames;
use crate::genome::{CellParams, Fitness, NodeId, RnnGenome};

pub use network::{genome_weights, set_genome_weights, Network, Unrolled};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TrainError {
    #[error("row {row} has {found} columns, the genome expects {expected}")]
    ColumnMismatch { expected: usize, found: usize, row: usize },
    #[error("non-finite input at row {row}, column {column}")]
    NonFiniteInput { row: usize, column: usize },
    #[error("series has {rows} rows, at least {needed} required")]
    SeriesTooShort { rows: usize, needed: usize },
    #[error("output node {0} is unreachable")]
    UnreachableOutput(NodeId),
    #[error("target rows have width {found}, the genome has {expected} outputs")]
    TargetMismatch { expected: usize, found: usize },
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("no training series")]
    NoData,
}

/// How the training series are cut into gradient updates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode", content = "length")]
pub enum BatchMode {
    /// One update per full series per epoch.
    FullSequence,
    /// One update per consecutive window of this many frames; hidden state
    /// restarts at each window.
    Window(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub learning_rate: f64,
    pub nesterov_mu: f64,
    pub clip_threshold: f64,
    pub boost_threshold: f64,
    pub epochs: usize,
    pub lstm_forget_bias_offset: f64,
    pub batch: BatchMode,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.001,
            nesterov_mu: 0.9,
            clip_threshold: 1.0,
            boost_threshold: 0.05,
            epochs: 10,
            lstm_forget_bias_offset: 1.0,
            batch: BatchMode::FullSequence,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |msg: &str| Err(TrainError::InvalidConfig(msg.to_string()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(0.0..1.0).contains(&self.nesterov_mu) {
            return bad("nesterov_mu must be in [0, 1)");
        }
        if !(self.clip_threshold > 0.0 && self.clip_threshold.is_finite()) {
            return bad("clip_threshold must be positive");
        }
        if !(self.boost_threshold >= 0.0 && self.boost_threshold < self.clip_threshold) {
            return bad("boost_threshold must be in [0, clip_threshold)");
        }
        if self.epochs == 0 {
            return bad("epochs must be at least 1");
        }
        if !self.lstm_forget_bias_offset.is_finite() {
            return bad("lstm_forget_bias_offset must be finite");
        }
        if self.batch == BatchMode::Window(0) {
            return bad("window length must be at least 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingOutcome {
    /// Trained copy of the genome with its fitness set (`+inf` if diverged).
    pub genome: RnnGenome,
    pub train_mse: Vec<f64>,
    pub validation_mse: f64,
    pub diverged: bool,
}

/// Mean of squared differences over every element.
pub fn mse_loss(predictions: &[f64], targets: &[f64]) -> Result<f64, TrainError> {
    if predictions.is_empty() {
        return Err(TrainError::NoData);
    }
    assert_eq!(predictions.len(), targets.len(), "prediction and target lengths differ");
    let sum: f64 = predictions.iter().zip(targets).map(|(p, y)| (p - y) * (p - y)).sum();
    Ok(sum / predictions.len() as f64)
}

/// Predictions for one series plus the stored activations.
pub fn unroll_forward(genome: &RnnGenome, frames: &Frames) -> Result<Unrolled, TrainError> {
    let net = Network::compile(genome)?;
    let needed = net.max_skip() + 1;
    if frames.len() < needed {
        return Err(TrainError::SeriesTooShort { rows: frames.len(), needed });
    }
    net.forward(&genome_weights(genome), &frames.inputs)
}

fn check_targets(net: &Network, frames: &Frames) -> Result<(), TrainError> {
    match frames.targets.iter().find(|row| row.len() != net.n_outputs()) {
        Some(row) => Err(TrainError::TargetMismatch { expected: net.n_outputs(), found: row.len() }),
        None => Ok(()),
    }
}

/// Loss and its gradient for one window at the given weights.
pub fn loss_and_gradient(
    net: &Network,
    weights: &[f64],
    inputs: &[Vec<f64>],
    targets: &[Vec<f64>],
) -> Result<(f64, Vec<f64>), TrainError> {
    let unrolled = net.forward(weights, inputs)?;
    let count = (targets.len() * net.n_outputs()) as f64;
    let mut loss = 0.0;
    let mut d_pred = Vec::with_capacity(targets.len());
    for (pred, target) in unrolled.predictions.iter().zip(targets) {
        let mut row = Vec::with_capacity(pred.len());
        for (p, y) in pred.iter().zip(target) {
            loss += (p - y) * (p - y);
            row.push(2.0 * (p - y) / count);
        }
        d_pred.push(row);
    }
    let grad = net.backward(weights, &unrolled, &d_pred);
    Ok((loss / count, grad))
}

/// Mean squared error over all frames of all series, hidden state reset at
/// the start of each series.
pub fn evaluate(net: &Network, weights: &[f64], series: &[Frames]) -> Result<f64, TrainError> {
    let mut sum = 0.0;
    let mut count = 0usize;
    for frames in series {
        check_targets(net, frames)?;
        let unrolled = net.forward(weights, &frames.inputs)?;
        for (pred, target) in unrolled.predictions.iter().zip(&frames.targets) {
            for (p, y) in pred.iter().zip(target) {
                sum += (p - y) * (p - y);
                count += 1;
            }
        }
    }
    if count == 0 {
        return Err(TrainError::NoData);
    }
    Ok(sum / count as f64)
}

pub fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Rescales the gradient in place by its global L2 norm: down to
/// `clip_threshold` when above it, up to `boost_threshold` when strictly
/// between zero and it. Returns `(norm before, norm after)`.
pub fn rescale_gradient(grad: &mut [f64], clip_threshold: f64, boost_threshold: f64) -> (f64, f64) {
    let norm = l2_norm(grad);
    let scale = if norm > clip_threshold {
        clip_threshold / norm
    } else if norm > 0.0 && norm < boost_threshold {
        boost_threshold / norm
    } else {
        return (norm, norm);
    };
    for g in grad.iter_mut() {
        *g *= scale;
    }
    (norm, l2_norm(grad))
}

/// Velocity for Nesterov momentum: `v <- mu v - lr grad(w + mu v)`, `w <- w + v`.
#[derive(Debug, Clone, PartialEq)]
pub struct Momentum {
    pub velocity: Vec<f64>,
}

impl Momentum {
    pub fn new(n: usize) -> Self {
        Self { velocity: vec![0.0; n] }
    }

    pub fn lookahead(&self, weights: &[f64], mu: f64) -> Vec<f64> {
        weights.iter().zip(&self.velocity).map(|(w, v)| w + mu * v).collect()
    }

    pub fn step(&mut self, weights: &mut [f64], grad: &[f64], mu: f64, learning_rate: f64) {
        for ((w, v), g) in weights.iter_mut().zip(&mut self.velocity).zip(grad) {
            *v = mu * *v - learning_rate * g;
            *w += *v;
        }
    }
}

fn batches<'a>(series: &'a [Frames], mode: BatchMode) -> Vec<(&'a [Vec<f64>], &'a [Vec<f64>])> {
    let mut out = Vec::new();
    for frames in series {
        match mode {
            BatchMode::FullSequence => out.push((&frames.inputs[..], &frames.targets[..])),
            BatchMode::Window(len) => {
                for (x, y) in frames.inputs.chunks(len).zip(frames.targets.chunks(len)) {
                    out.push((x, y));
                }
            }
        }
    }
    out
}

/// One pass over the training series. On a non-finite loss or weight the
/// weights are restored to their values before the epoch and `None` is
/// returned; otherwise the mean loss over the epoch's updates.
pub fn bptt_epoch(
    net: &Network,
    weights: &mut Vec<f64>,
    series: &[Frames],
    config: &TrainingConfig,
    momentum: &mut Momentum,
) -> Result<Option<f64>, TrainError> {
    let snapshot = weights.clone();
    let snapshot_velocity = momentum.velocity.clone();
    let mut loss_sum = 0.0;
    let mut frames = 0usize;
    for (inputs, targets) in batches(series, config.batch) {
        let lookahead = momentum.lookahead(weights, config.nesterov_mu);
        let (loss, mut grad) = loss_and_gradient(net, &lookahead, inputs, targets)?;
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            *weights = snapshot;
            momentum.velocity = snapshot_velocity;
            return Ok(None);
        }
        rescale_gradient(&mut grad, config.clip_threshold, config.boost_threshold);
        momentum.step(weights, &grad, config.nesterov_mu, config.learning_rate);
        loss_sum += loss * inputs.len() as f64;
        frames += inputs.len();
    }
    if weights.iter().any(|w| !w.is_finite()) {
        *weights = snapshot;
        momentum.velocity = snapshot_velocity;
        return Ok(None);
    }
    Ok(Some(loss_sum / frames.max(1) as f64))
}

/// Adds the forget-gate bias offset to LSTM nodes that have never been
/// trained, then marks every node as trained.
pub fn apply_creation_offsets(genome: &mut RnnGenome, lstm_forget_bias_offset: f64) {
    for n in &mut genome.nodes {
        if n.fresh {
            if let CellParams::Lstm(p) = &mut n.params {
                p[layout::lstm::FORGET + layout::B] += lstm_forget_bias_offset;
            }
            n.fresh = false;
        }
    }
}

/// Trains a copy of `genome` for `config.epochs` epochs and scores it on the
/// validation series. Diverged genomes get `+inf` fitness and keep their
/// last finite weights.
pub fn train(
    genome: &RnnGenome,
    train_series: &[Frames],
    validation_series: &[Frames],
    config: &TrainingConfig,
) -> Result<TrainingOutcome, TrainError> {
    config.validate()?;
    if train_series.is_empty() || validation_series.is_empty() {
        return Err(TrainError::NoData);
    }
    let mut genome = genome.clone();
    apply_creation_offsets(&mut genome, config.lstm_forget_bias_offset);
    let net = Network::compile(&genome)?;
    for frames in train_series {
        check_targets(&net, frames)?;
    }

    let mut weights = genome_weights(&genome);
    let mut momentum = Momentum::new(weights.len());
    let mut train_mse = Vec::with_capacity(config.epochs);
    let mut diverged = false;
    for _ in 0..config.epochs {
        match bptt_epoch(&net, &mut weights, train_series, config, &mut momentum)? {
            Some(loss) => train_mse.push(loss),
            None => {
                diverged = true;
                break;
            }
        }
    }

    set_genome_weights(&mut genome, &weights);
    let mut validation_mse = evaluate(&net, &weights, validation_series)?;
    if !validation_mse.is_finite() {
        diverged = true;
    }
    if diverged {
        validation_mse = f64::INFINITY;
    }
    genome.fitness = Fitness::Evaluated(validation_mse);
    Ok(TrainingOutcome { genome, train_mse, validation_mse, diverged })
}
