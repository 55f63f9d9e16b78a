//! Model assembly, optimization and the patience-based training schedule.
//!
//! The schedule tracks training accuracy only: the learning rate halves after
//! `decay_patience` epochs without a strict improvement, and training stops
//! after `stop_patience` such epochs, after `max_epochs`, or once accuracy has
//! been 100% for `converge_epochs` consecutive epochs.

mod adam;
mod model;

pub use adam::{Adam, AdamConfig};
pub use model::{Batch, BoundModel, Model};

use crate::layers::{Activation, GcnNorm, GnnBlockConfig, LayerType};
use crate::neighborsmatch::Dataset;
use crate::scalar::Scalar;
use crate::tensor::{Tape, TensorError};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrainError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("non-finite gradient in parameter {param} (shape {shape:?}): {count} entries")]
    NonFiniteGradient { param: usize, shape: Vec<usize>, count: usize },
    #[error("empty dataset")]
    EmptyDataset,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub gnn_type: LayerType,
    /// Problem radius `r`; the model predicts one of `2^r` classes.
    pub depth: u32,
    pub dim: usize,
    /// Number of GNN blocks; `None` means `depth + 1`.
    pub num_layers: Option<usize>,
    pub residual: bool,
    pub layer_norm: bool,
    /// Replace the last block's adjacency with a fully-adjacent one.
    pub fa_last: bool,
    /// Keep only this fraction of the fully-adjacent edges.
    pub fa_fraction: Option<f64>,
    /// Include `(v, v)` pairs in the fully-adjacent layer.
    pub fa_self_loops: bool,
    /// Reuse one set of GNN weights for every block.
    pub unroll_shared_weights: bool,
    pub gcn_norm: GcnNorm,
    pub gat_heads: usize,
    pub activation: Activation,
    pub seed: u64,
}

impl ModelConfig {
    pub fn new(gnn_type: LayerType, depth: u32) -> Self {
        Self {
            gnn_type,
            depth,
            dim: 32,
            num_layers: None,
            residual: true,
            layer_norm: true,
            fa_last: false,
            fa_fraction: None,
            fa_self_loops: false,
            unroll_shared_weights: false,
            gcn_norm: GcnNorm::Symmetric,
            gat_heads: 1,
            activation: Activation::Relu,
            seed: 0,
        }
    }

    /// Depth-2 classes with one block per hop from the leaves to the chain's end, plus one.
    pub fn for_chain(gnn_type: LayerType, chain_len: usize) -> Self {
        Self {
            num_layers: Some(chain_len + 3),
            ..Self::new(gnn_type, 2)
        }
    }

    pub fn layers(&self) -> usize {
        self.num_layers.unwrap_or(self.depth as usize + 1)
    }

    pub fn num_classes(&self) -> usize {
        1 << self.depth
    }

    pub fn block_config(&self) -> GnnBlockConfig {
        GnnBlockConfig {
            layer_type: self.gnn_type,
            residual: self.residual,
            layer_norm: self.layer_norm,
            gcn_norm: self.gcn_norm,
            gat_heads: self.gat_heads,
            activation: self.activation,
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: String| Err(TrainError::Config(m));
        if !(1..=16).contains(&self.depth) {
            return bad(format!("depth {} outside 1..=16", self.depth));
        }
        if self.dim == 0 {
            return bad("dim must be positive".into());
        }
        if self.layers() == 0 {
            return bad("at least one GNN layer is required".into());
        }
        if let Some(p) = self.fa_fraction {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("fa_fraction {p} outside [0, 1]"));
            }
        }
        self.block_config().validate(self.dim).map_err(TrainError::Config)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSchedule {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub decay_factor: f64,
    pub decay_patience: usize,
    pub stop_patience: usize,
    pub max_epochs: usize,
    /// Examples per optimizer step; `None` picks [`TrainSchedule::default_batch_size`].
    pub batch_size: Option<usize>,
    /// Consecutive epochs at 100% accuracy that end training early.
    pub converge_epochs: usize,
}

impl Default for TrainSchedule {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            decay_factor: 0.5,
            decay_patience: 1000,
            stop_patience: 2000,
            max_epochs: 100_000,
            batch_size: None,
            converge_epochs: 10,
        }
    }
}

impl TrainSchedule {
    /// Full batch up to 8000 examples, 1024 beyond.
    pub fn default_batch_size(n: usize) -> usize {
        if n <= 8000 {
            n.max(1)
        } else {
            1024
        }
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.adam_eps,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    #[serde(rename = "converged_100")]
    Converged100,
    StopPatience,
    MaxEpochs,
    Diverged,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub train_acc: f64,
    pub lr: f64,
}

impl EpochRecord {
    /// The record tagged `"type": "epoch"`.
    pub fn to_json(&self) -> serde_json::Value {
        let mut v = serde_json::to_value(self).expect("serializable");
        v["type"] = "epoch".into();
        v
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LrEvent {
    pub epoch: usize,
    pub lr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
    pub lr_events: Vec<LrEvent>,
    pub stop_reason: StopReason,
    pub best_accuracy: f64,
    pub final_accuracy: f64,
    pub epochs_run: usize,
    pub failed: bool,
    pub error: Option<String>,
    pub wall_time_s: f64,
}

impl TrainReport {
    /// JSON lines: one `epoch` record per epoch, then a `summary` record.
    pub fn to_json_lines(&self) -> String {
        let mut out = String::new();
        for e in &self.epochs {
            out.push_str(&e.to_json().to_string());
            out.push('\n');
        }
        out.push_str(&self.summary_json().to_string());
        out.push('\n');
        out
    }

    pub fn summary_json(&self) -> serde_json::Value {
        serde_json::json!({
            "type": "summary",
            "stop_reason": self.stop_reason,
            "best_accuracy": self.best_accuracy,
            "final_accuracy": self.final_accuracy,
            "epochs": self.epochs_run,
            "lr_events": self.lr_events,
            "failed": self.failed,
            "error": self.error,
            "wall_time_s": self.wall_time_s,
        })
    }
}

/// What the schedule does after an epoch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScheduleStep {
    Continue,
    /// Multiply the learning rate by the decay factor and continue.
    Decay,
    Stop(StopReason),
}

/// Patience counters keyed on strict improvements of training accuracy.
#[derive(Debug, Clone)]
pub struct Patience {
    decay_patience: usize,
    stop_patience: usize,
    converge_epochs: usize,
    best: Option<f64>,
    since_best: usize,
    since_decay: usize,
    perfect_streak: usize,
}

impl Patience {
    pub fn new(schedule: &TrainSchedule) -> Self {
        Self {
            decay_patience: schedule.decay_patience,
            stop_patience: schedule.stop_patience,
            converge_epochs: schedule.converge_epochs,
            best: None,
            since_best: 0,
            since_decay: 0,
            perfect_streak: 0,
        }
    }

    pub fn best(&self) -> Option<f64> {
        self.best
    }

    /// Epochs since the last strict improvement.
    pub fn since_best(&self) -> usize {
        self.since_best
    }

    pub fn observe(&mut self, acc: f64) -> ScheduleStep {
        if self.best.is_none_or(|b| acc > b) {
            self.best = Some(acc);
            self.since_best = 0;
            self.since_decay = 0;
        } else {
            self.since_best += 1;
            self.since_decay += 1;
        }
        self.perfect_streak = if acc >= 1.0 { self.perfect_streak + 1 } else { 0 };
        if self.perfect_streak >= self.converge_epochs {
            return ScheduleStep::Stop(StopReason::Converged100);
        }
        if self.since_best >= self.stop_patience {
            return ScheduleStep::Stop(StopReason::StopPatience);
        }
        if self.since_decay >= self.decay_patience {
            self.since_decay = 0;
            return ScheduleStep::Decay;
        }
        ScheduleStep::Continue
    }
}

/// Index of the largest logit in each row; ties go to the lowest class id.
pub fn argmax_rows<T: Scalar>(logits: &[T], classes: usize) -> Vec<usize> {
    logits
        .chunks_exact(classes)
        .map(|row| {
            let mut best = 0;
            for (j, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}

fn count_correct<T: Scalar>(logits: &[T], classes: usize, labels: &[usize]) -> usize {
    argmax_rows(logits, classes)
        .iter()
        .zip(labels)
        .filter(|(p, y)| p == y)
        .count()
}

const EVAL_CHUNK: usize = 4096;

/// Fraction of examples whose predicted class equals the answer.
pub fn accuracy<T: Scalar>(model: &Model<T>, dataset: &Dataset) -> Result<f64, TrainError> {
    if dataset.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let c = model.config().num_classes();
    let indexed: Vec<_> = dataset.examples.iter().enumerate().collect();
    let mut correct = 0;
    for chunk in indexed.chunks(EVAL_CHUNK) {
        let batch = Batch::new(model.config(), chunk)?;
        let logits = model.logits(&batch)?;
        correct += count_correct(logits.data(), c, &batch.labels);
    }
    Ok(correct as f64 / dataset.len() as f64)
}

/// Trains `model` on `dataset` under `schedule`. `on_epoch` sees every epoch record as it is produced.
///
/// Training accuracy for an epoch is measured on the forward passes of that
/// epoch, before each batch's update.
pub fn train<T: Scalar>(
    model: &mut Model<T>,
    dataset: &Dataset,
    schedule: &TrainSchedule,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainReport, TrainError> {
    if dataset.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let c = model.config().num_classes();
    if let Some(e) = dataset.examples.iter().find(|e| e.answer() >= c || e.num_classes() != c) {
        return Err(TrainError::Config(format!(
            "example with {} classes does not fit a {c}-class model",
            e.num_classes()
        )));
    }
    let started = Instant::now();
    let n = dataset.len();
    let batch_size = schedule.batch_size.unwrap_or_else(|| TrainSchedule::default_batch_size(n)).max(1);
    let mut order: Vec<usize> = (0..n).collect();
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(model.config().seed ^ 0x5EED_BA7C);
    let full = if batch_size >= n {
        let all: Vec<_> = dataset.examples.iter().enumerate().collect();
        Some(Batch::new(model.config(), &all)?)
    } else {
        None
    };

    let mut adam = Adam::new(schedule.adam());
    let mut lr = schedule.lr;
    let mut report = TrainReport {
        epochs: Vec::new(),
        lr_events: Vec::new(),
        stop_reason: StopReason::MaxEpochs,
        best_accuracy: 0.0,
        final_accuracy: 0.0,
        epochs_run: 0,
        failed: false,
        error: None,
        wall_time_s: 0.0,
    };
    let mut patience = Patience::new(schedule);

    'epochs: for epoch in 1..=schedule.max_epochs {
        let mut loss_sum = 0.0;
        let mut correct = 0;
        let batches: Vec<Batch<T>> = match &full {
            Some(_) => Vec::new(),
            None => {
                order.shuffle(&mut shuffle_rng);
                order
                    .chunks(batch_size)
                    .map(|idx| {
                        let ex: Vec<_> = idx.iter().map(|&i| (i, &dataset.examples[i])).collect();
                        Batch::new(model.config(), &ex)
                    })
                    .collect::<Result<_, _>>()?
            }
        };
        let batch_refs: Vec<&Batch<T>> = match &full {
            Some(b) => vec![b],
            None => batches.iter().collect(),
        };
        for batch in batch_refs {
            let mut tape = Tape::new();
            let bound = model.bind(&mut tape);
            let logits = model.forward(&mut tape, &bound, batch)?;
            correct += count_correct(tape.value(logits).data(), c, &batch.labels);
            let loss = tape.cross_entropy(logits, &batch.labels)?;
            let loss_value = tape.value(loss).item().to_f64_lossy();
            loss_sum += loss_value * batch.len() as f64;
            if !loss_value.is_finite() {
                report.stop_reason = StopReason::Diverged;
                report.failed = true;
                report.error = Some(format!("loss became {loss_value} at epoch {epoch}"));
                break 'epochs;
            }
            let mut grads = tape.backward(loss)?;
            let vars = grads.params().to_vec();
            let mut params = model.tensors_mut();
            for (p, v) in params.iter_mut().zip(vars) {
                p.grad = grads.take(v);
            }
            if let Err(e) = adam.step(&mut params, lr) {
                report.stop_reason = StopReason::Diverged;
                report.failed = true;
                report.error = Some(format!("epoch {epoch}: {e}"));
                break 'epochs;
            }
        }

        let acc = correct as f64 / n as f64;
        let record = EpochRecord {
            epoch,
            loss: loss_sum / n as f64,
            train_acc: acc,
            lr,
        };
        on_epoch(&record);
        report.epochs.push(record);
        report.epochs_run = epoch;
        report.final_accuracy = acc;

        let step = patience.observe(acc);
        report.best_accuracy = patience.best().unwrap_or(0.0);
        match step {
            ScheduleStep::Continue => {}
            ScheduleStep::Decay => {
                lr *= schedule.decay_factor;
                report.lr_events.push(LrEvent { epoch, lr });
            }
            ScheduleStep::Stop(reason) => {
                report.stop_reason = reason;
                break;
            }
        }
    }
    report.wall_time_s = started.elapsed().as_secs_f64();
    Ok(report)
}

#[cfg(test)]
mod tests;
