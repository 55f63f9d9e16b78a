use crate::error::{CliError, CliResult};
use oversquash::layers::LayerType;
use oversquash::train::StopReason;
use serde::Serialize;
use serde_json::Value;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

/// One training run inside a sweep.
#[derive(Debug, Clone, Serialize)]
pub struct ResultRow {
    #[serde(rename = "type")]
    pub kind: &'static str,
    pub gnn: LayerType,
    pub r: u32,
    pub chain_len: usize,
    /// Leaf-to-target hops: `r + chain_len`.
    pub distance: usize,
    pub d: usize,
    pub fa: String,
    pub seed: u64,
    pub samples: usize,
    pub accuracy: f64,
    pub best_accuracy: f64,
    pub epochs: usize,
    pub stop_reason: Option<StopReason>,
    pub failed: bool,
    pub error: Option<String>,
    pub wall_time_s: f64,
}

impl ResultRow {
    pub fn json(&self) -> Value {
        serde_json::to_value(self).expect("serializable")
    }
}

/// Result stream: JSON lines, or CSV restricted to records of one type.
pub struct Sink {
    out: Box<dyn Write>,
    csv_type: Option<&'static str>,
    header: Option<Vec<String>>,
}

impl Sink {
    /// Writes to `path` (truncating) or stdout. `csv_type` selects CSV mode.
    pub fn open(path: Option<&Path>, csv_type: Option<&'static str>) -> CliResult<Self> {
        let out: Box<dyn Write> = match path {
            Some(p) => Box::new(BufWriter::new(
                File::create(p).map_err(|e| CliError::usage(format!("cannot create {}: {e}", p.display())))?,
            )),
            None => Box::new(io::stdout().lock()),
        };
        Ok(Self {
            out,
            csv_type,
            header: None,
        })
    }

    /// Appends one record and flushes so partial results stay readable.
    pub fn emit(&mut self, v: &Value) -> CliResult<()> {
        match self.csv_type {
            None => writeln!(self.out, "{v}").map_err(CliError::run)?,
            Some(t) if v["type"] == t => {
                let obj = v.as_object().expect("records are objects");
                let mut w = csv::Writer::from_writer(Vec::new());
                if self.header.is_none() {
                    let keys: Vec<String> = obj.keys().filter(|k| *k != "type").cloned().collect();
                    w.write_record(&keys).map_err(CliError::run)?;
                    self.header = Some(keys);
                }
                let header = self.header.as_ref().expect("set above");
                w.write_record(header.iter().map(|k| csv_cell(obj.get(k))))
                    .map_err(CliError::run)?;
                let bytes = w.into_inner().map_err(|e| CliError::run(anyhow::anyhow!("{e}")))?;
                self.out.write_all(&bytes).map_err(CliError::run)?;
            }
            Some(_) => return Ok(()),
        }
        self.out.flush().map_err(CliError::run)
    }
}

fn csv_cell(v: Option<&Value>) -> String {
    match v {
        None | Some(Value::Null) => String::new(),
        Some(Value::String(s)) => s.clone(),
        Some(other) => other.to_string(),
    }
}
