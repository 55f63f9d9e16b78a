//! Run settings shared by the training subcommands.
//!
//! Every field is optional so that a JSON config file and the command line can
//! be layered: flags win, then the file, then per-command defaults.

use crate::error::{CliError, CliResult, Classify};
use crate::list::{GnnList, IntList};
use clap::Args;
use oversquash::layers::{Activation, GcnNorm, LayerType};
use oversquash::train::{ModelConfig, TrainSchedule};
use serde::Deserialize;
use std::path::{Path, PathBuf};

macro_rules! options {
    ($( $(#[$meta:meta])* $name:ident : $ty:ty ),* $(,)?) => {
        #[derive(Debug, Clone, Default, Args, Deserialize)]
        #[serde(default, deny_unknown_fields)]
        pub struct Options {
            /// JSON file with any of these settings; flags take precedence.
            #[arg(long, value_name = "FILE")]
            #[serde(skip)]
            pub config: Option<PathBuf>,
            $( $(#[$meta])* pub $name: Option<$ty>, )*
        }

        impl Options {
            /// Fill unset fields from `base`.
            pub fn or(self, base: Options) -> Options {
                Options {
                    config: self.config,
                    $( $name: self.$name.or(base.$name), )*
                }
            }
        }
    };
}

options! {
    /// GNN types: comma list of gcn, gin, gat, ggnn, or `all`.
    #[arg(long, value_name = "LIST")]
    gnn: GnnList,
    /// Tree depths (problem radius), e.g. `2..4`.
    #[arg(long, short = 'r', value_name = "LIST")]
    depth: IntList,
    /// Chain lengths for chain-control; leaf-to-target distance is 2 + length.
    #[arg(long, value_name = "LIST")]
    chain: IntList,
    /// Hidden dimensions.
    #[arg(long, short = 'd', value_name = "LIST")]
    d: IntList,
    /// Seeds per cell; seed `s` runs as `seed + s`.
    #[arg(long)]
    trials: usize,
    /// Base seed for model initialization.
    #[arg(long)]
    seed: u64,
    /// Dataset seed; defaults to `seed`.
    #[arg(long)]
    data_seed: u64,
    /// Examples per dataset; defaults depend on depth.
    #[arg(long)]
    samples: usize,
    /// Read examples from a dataset file instead of generating them (train only).
    #[arg(long, value_name = "FILE")]
    data: PathBuf,
    /// Concurrent training runs; defaults to the number of CPUs.
    #[arg(long)]
    workers: usize,
    /// Adam learning rate (default 0.001).
    #[arg(long)]
    lr: f64,
    /// Hard epoch cap (default 100000).
    #[arg(long)]
    max_epochs: usize,
    /// Epochs without a new best accuracy before the learning rate halves (default 1000).
    #[arg(long)]
    decay_patience: usize,
    /// Epochs without a new best accuracy before training stops (default 2000).
    #[arg(long)]
    stop_patience: usize,
    /// Examples per step; defaults to full batch up to 8000 examples, else 1024.
    #[arg(long)]
    batch_size: usize,
    /// Epochs at 100% accuracy before stopping early.
    #[arg(long)]
    converge_epochs: usize,
    /// Make the last GNN layer fully adjacent.
    #[arg(long, num_args = 0..=1, require_equals = true, default_missing_value = "true", value_name = "BOOL")]
    fa_last: bool,
    /// Keep this fraction of the fully-adjacent edges (implies --fa-last).
    #[arg(long, value_name = "P")]
    fa_fraction: f64,
    /// Include self-pairs in the fully-adjacent layer.
    #[arg(long, num_args = 0..=1, require_equals = true, default_missing_value = "true", value_name = "BOOL")]
    fa_self_loops: bool,
    /// Residual connection around each GNN layer (default true).
    #[arg(long, num_args = 0..=1, require_equals = true, default_missing_value = "true", value_name = "BOOL")]
    residual: bool,
    /// Layer normalization after each block (default true).
    #[arg(long, num_args = 0..=1, require_equals = true, default_missing_value = "true", value_name = "BOOL")]
    layer_norm: bool,
    /// Share one set of GNN weights across all layers.
    #[arg(long, num_args = 0..=1, require_equals = true, default_missing_value = "true", value_name = "BOOL")]
    unroll_shared_weights: bool,
    /// Override the number of GNN layers.
    #[arg(long)]
    num_layers: usize,
    /// Attention heads; must divide d.
    #[arg(long)]
    gat_heads: usize,
    /// relu, tanh or identity.
    #[arg(long, value_parser = parse_serde::<Activation>)]
    activation: Activation,
    /// symmetric or in_degree.
    #[arg(long, value_parser = parse_serde::<GcnNorm>)]
    gcn_norm: GcnNorm,
    /// Output file; stdout when absent.
    #[arg(long, short = 'o', value_name = "FILE")]
    out: PathBuf,
    /// Emit CSV instead of JSON lines.
    #[arg(long, num_args = 0..=1, require_equals = true, default_missing_value = "true", value_name = "BOOL")]
    csv: bool,
}

/// Parse a unit enum through its serde name.
fn parse_serde<T: serde::de::DeserializeOwned>(s: &str) -> Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|e| e.to_string())
}

fn read_config(path: &Path) -> CliResult<Options> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::usage(format!("cannot read config {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::usage(format!("invalid config {}: {e}", path.display())))
}

impl Options {
    /// Layer flags over the config file (if any) over `defaults`.
    pub fn resolve(self, defaults: Options) -> CliResult<Options> {
        let file = match &self.config {
            Some(path) => read_config(path)?,
            None => Options::default(),
        };
        let merged = self.or(file).or(defaults);
        if merged.trials == Some(0) {
            return Err(CliError::usage("trials must be at least 1"));
        }
        if merged.workers == Some(0) {
            return Err(CliError::usage("workers must be at least 1"));
        }
        for (name, list) in [("depth", &merged.depth), ("chain", &merged.chain), ("d", &merged.d)] {
            if list.as_ref().is_some_and(|l| l.0.is_empty()) {
                return Err(CliError::usage(format!("{name} list is empty")));
            }
        }
        if merged.gnn.as_ref().is_some_and(|g| g.0.is_empty()) {
            return Err(CliError::usage("gnn list is empty"));
        }
        Ok(merged)
    }

    pub fn gnns(&self) -> Vec<LayerType> {
        self.gnn.clone().map_or_else(|| LayerType::ALL.to_vec(), |g| g.0)
    }

    pub fn list(&self, list: &Option<IntList>) -> Vec<u64> {
        list.clone().map_or_else(Vec::new, |l| l.0)
    }

    pub fn dims(&self) -> CliResult<Vec<usize>> {
        self.list(&self.d).into_iter().map(|d| usize::try_from(d).usage_err()).collect()
    }

    pub fn depths(&self) -> CliResult<Vec<u32>> {
        self.list(&self.depth).into_iter().map(|r| u32::try_from(r).usage_err()).collect()
    }

    pub fn chains(&self) -> CliResult<Vec<usize>> {
        self.list(&self.chain).into_iter().map(|c| usize::try_from(c).usage_err()).collect()
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    pub fn data_seed(&self) -> u64 {
        self.data_seed.unwrap_or(self.seed())
    }

    pub fn trials(&self) -> usize {
        self.trials.unwrap_or(1)
    }

    pub fn workers(&self) -> usize {
        self.workers
            .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
    }

    pub fn csv(&self) -> bool {
        self.csv.unwrap_or(false)
    }

    /// Model settings for one cell; `base` carries gnn type, depth and layer count.
    pub fn model(&self, base: ModelConfig, dim: usize, seed: u64) -> ModelConfig {
        let fa_last = self.fa_last.unwrap_or(false) || self.fa_fraction.is_some();
        ModelConfig {
            dim,
            seed,
            num_layers: self.num_layers.or(base.num_layers),
            residual: self.residual.unwrap_or(base.residual),
            layer_norm: self.layer_norm.unwrap_or(base.layer_norm),
            fa_last,
            fa_fraction: self.fa_fraction,
            fa_self_loops: self.fa_self_loops.unwrap_or(false),
            unroll_shared_weights: self.unroll_shared_weights.unwrap_or(false),
            gat_heads: self.gat_heads.unwrap_or(base.gat_heads),
            activation: self.activation.unwrap_or(base.activation),
            gcn_norm: self.gcn_norm.unwrap_or(base.gcn_norm),
            ..base
        }
    }

    pub fn schedule(&self) -> CliResult<TrainSchedule> {
        let d = TrainSchedule::default();
        let s = TrainSchedule {
            lr: self.lr.unwrap_or(d.lr),
            max_epochs: self.max_epochs.unwrap_or(d.max_epochs),
            decay_patience: self.decay_patience.unwrap_or(d.decay_patience),
            stop_patience: self.stop_patience.unwrap_or(d.stop_patience),
            batch_size: self.batch_size.or(d.batch_size),
            converge_epochs: self.converge_epochs.unwrap_or(d.converge_epochs),
            ..d
        };
        if !(s.lr > 0.0 && s.lr.is_finite()) {
            return Err(CliError::usage(format!("learning rate {} must be positive", s.lr)));
        }
        if s.decay_patience == 0 || s.stop_patience == 0 || s.max_epochs == 0 || s.converge_epochs == 0 {
            return Err(CliError::usage("patience, epoch and convergence counts must be positive"));
        }
        if s.batch_size == Some(0) {
            return Err(CliError::usage("batch size must be positive"));
        }
        Ok(s)
    }

    /// Short label for the fully-adjacent mode.
    pub fn fa_mode(config: &ModelConfig) -> String {
        match (config.fa_last, config.fa_fraction) {
            (false, _) => "none".into(),
            (true, None) => "last".into(),
            (true, Some(p)) => format!("partial:{p}"),
        }
    }
}
