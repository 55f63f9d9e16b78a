use crate::error::{CliError, CliResult, Classify};
use crate::options::Options;
use crate::report::ResultRow;
use oversquash::neighborsmatch::{default_sample_size, generate_chain_dataset, generate_dataset, Dataset};
use oversquash::train::{train, Model, ModelConfig, TrainSchedule};
use std::time::Instant;

/// Generates the dataset for a tree depth or, when `chain_len > 0`, a chain-control set.
pub fn make_dataset(opts: &Options, depth: u32, chain_len: usize) -> CliResult<Dataset> {
    let n = opts.samples.unwrap_or_else(|| default_sample_size(depth));
    let seed = opts.data_seed();
    if chain_len > 0 {
        generate_chain_dataset(chain_len, n, seed).data_err()
    } else {
        generate_dataset(depth, n, seed).data_err()
    }
}

/// One training run.
pub struct Job<'a> {
    pub config: ModelConfig,
    pub chain_len: usize,
    pub data: &'a Dataset,
}

impl Job<'_> {
    pub fn validate(&self) -> CliResult<()> {
        self.config.validate().map_err(CliError::usage)
    }

    pub fn run(&self, schedule: &TrainSchedule) -> ResultRow {
        let start = Instant::now();
        let outcome = Model::<f32>::new(self.config.clone()).and_then(|mut m| train(&mut m, self.data, schedule, |_| {}));
        let mut row = ResultRow {
            kind: "run",
            gnn: self.config.gnn_type,
            r: self.config.depth,
            chain_len: self.chain_len,
            distance: self.config.depth as usize + self.chain_len,
            d: self.config.dim,
            fa: Options::fa_mode(&self.config),
            seed: self.config.seed,
            samples: self.data.len(),
            accuracy: 0.0,
            best_accuracy: 0.0,
            epochs: 0,
            stop_reason: None,
            failed: true,
            error: None,
            wall_time_s: 0.0,
        };
        match outcome {
            Ok(rep) => {
                row.accuracy = rep.final_accuracy;
                row.best_accuracy = rep.best_accuracy;
                row.epochs = rep.epochs_run;
                row.stop_reason = Some(rep.stop_reason);
                row.failed = rep.failed;
                row.error = rep.error;
            }
            Err(e) => row.error = Some(e.to_string()),
        }
        row.wall_time_s = start.elapsed().as_secs_f64();
        row
    }
}

pub fn progress(row: &ResultRow) {
    let chain = if row.chain_len > 0 {
        format!(" chain={}", row.chain_len)
    } else {
        String::new()
    };
    let status = match (&row.error, row.stop_reason) {
        (Some(e), _) => format!("failed: {e}"),
        (None, Some(reason)) => format!(
            "best {:.4} after {} epochs ({})",
            row.best_accuracy,
            row.epochs,
            serde_json::to_value(reason).expect("serializable").as_str().unwrap_or_default()
        ),
        (None, None) => "failed".into(),
    };
    eprintln!(
        "{} r={}{chain} d={} fa={} seed={}: {status} [{:.1}s]",
        row.gnn, row.r, row.d, row.fa, row.seed, row.wall_time_s
    );
}

/// Aggregate over the trials of one cell.
pub fn cell_summary(rows: &[ResultRow]) -> serde_json::Value {
    let first = &rows[0];
    let best = rows.iter().map(|r| r.best_accuracy).fold(0.0, f64::max);
    let mean = rows.iter().map(|r| r.best_accuracy).sum::<f64>() / rows.len() as f64;
    serde_json::json!({
        "type": "cell",
        "gnn": first.gnn,
        "r": first.r,
        "chain_len": first.chain_len,
        "distance": first.distance,
        "d": first.d,
        "fa": first.fa,
        "trials": rows.len(),
        "best_accuracy": best,
        "mean_accuracy": mean,
        "failed": rows.iter().filter(|r| r.failed).count(),
    })
}
