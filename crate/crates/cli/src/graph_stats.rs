use crate::error::{CliError, CliResult};
use crate::report::Sink;
use oversquash::graph::{diameter, parse_graph, receptive_field};
use serde_json::{json, Map, Value};
use std::path::{Path, PathBuf};
use std::str::FromStr;

/// A `v:K` receptive-field query.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RfQuery {
    pub v: usize,
    pub k: usize,
}

impl FromStr for RfQuery {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (v, k) = s.split_once(':').ok_or_else(|| format!("expected v:K, got '{s}'"))?;
        let num = |t: &str| t.trim().parse().map_err(|_| format!("invalid number '{t}' in '{s}'"));
        Ok(RfQuery { v: num(v)?, k: num(k)? })
    }
}

/// Graph files under `path`: the file itself, or every `*.graph` in the directory, by name.
fn graph_files(path: &Path) -> CliResult<Vec<PathBuf>> {
    if !path.is_dir() {
        return Ok(vec![path.to_path_buf()]);
    }
    let entries = std::fs::read_dir(path)
        .map_err(|e| CliError::data(anyhow::anyhow!("cannot list {}: {e}", path.display())))?;
    let mut files = Vec::new();
    for entry in entries {
        let p = entry.map_err(CliError::data)?.path();
        if p.is_file() && p.extension().is_some_and(|x| x == "graph") {
            files.push(p);
        }
    }
    files.sort();
    Ok(files)
}

/// Nearest-rank percentile of sorted values.
pub fn percentile(sorted: &[usize], p: f64) -> Option<usize> {
    if sorted.is_empty() {
        return None;
    }
    let rank = (p / 100.0 * sorted.len() as f64).ceil().max(1.0) as usize;
    Some(sorted[rank.min(sorted.len()) - 1])
}

pub fn aggregate(diameters: &[Option<usize>]) -> Value {
    let mut finite: Vec<usize> = diameters.iter().flatten().copied().collect();
    finite.sort_unstable();
    let n = finite.len() as f64;
    let (mean, std) = if finite.is_empty() {
        (None, None)
    } else {
        let mean = finite.iter().sum::<usize>() as f64 / n;
        let var = finite.iter().map(|&x| (x as f64 - mean).powi(2)).sum::<f64>() / n;
        (Some(mean), Some(var.sqrt()))
    };
    json!({
        "type": "aggregate",
        "graphs": diameters.len(),
        "unreachable": diameters.len() - finite.len(),
        "diameter_mean": mean,
        "diameter_std": std,
        "diameter_max": finite.last(),
        "diameter_p90": percentile(&finite, 90.0),
    })
}

pub fn graph_stats(
    path: &Path,
    directed: bool,
    rf: &[RfQuery],
    out: Option<&Path>,
    csv: bool,
) -> CliResult<()> {
    if !path.exists() {
        return Err(CliError::data(anyhow::anyhow!("{} does not exist", path.display())));
    }
    let files = graph_files(path)?;
    let mut sink = Sink::open(out, csv.then_some("graph"))?;
    let mut diameters = Vec::with_capacity(files.len());
    for file in &files {
        let text = std::fs::read_to_string(file)
            .map_err(|e| CliError::data(anyhow::anyhow!("cannot read {}: {e}", file.display())))?;
        let g = parse_graph(&text).map_err(|e| CliError::data(anyhow::anyhow!("{}: {e}", file.display())))?;
        let diam = diameter(&g, !directed).finite();
        let name = file
            .strip_prefix(path)
            .ok()
            .filter(|p| !p.as_os_str().is_empty())
            .unwrap_or(file);
        let mut row = Map::new();
        row.insert("type".into(), "graph".into());
        row.insert("file".into(), name.display().to_string().into());
        row.insert("nodes".into(), g.num_nodes().into());
        row.insert("edges".into(), g.edges().len().into());
        row.insert("diameter".into(), diam.into());
        for q in rf {
            let size = receptive_field(&g, q.v, q.k)
                .map_err(|e| CliError::data(anyhow::anyhow!("{}: {e}", file.display())))?
                .len();
            row.insert(format!("rf_{}_{}", q.v, q.k), size.into());
        }
        sink.emit(&Value::Object(row))?;
        diameters.push(diam);
    }
    sink.emit(&aggregate(&diameters))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nearest_rank_percentile() {
        assert_eq!(percentile(&[], 90.0), None);
        assert_eq!(percentile(&[5], 90.0), Some(5));
        let v: Vec<usize> = (1..=10).collect();
        assert_eq!(percentile(&v, 90.0), Some(9));
        assert_eq!(percentile(&v, 100.0), Some(10));
        let v: Vec<usize> = (1..=20).collect();
        assert_eq!(percentile(&v, 90.0), Some(18));
    }

    #[test]
    fn aggregate_statistics() {
        let a = aggregate(&[Some(2), Some(4), None, Some(6)]);
        assert_eq!(a["graphs"], 4);
        assert_eq!(a["unreachable"], 1);
        assert_eq!(a["diameter_mean"], 4.0);
        assert!((a["diameter_std"].as_f64().unwrap() - (8.0f64 / 3.0).sqrt()).abs() < 1e-12);
        assert_eq!(a["diameter_max"], 6);
        assert_eq!(a["diameter_p90"], 6);
        let empty = aggregate(&[]);
        assert_eq!((empty["graphs"].clone(), empty["diameter_mean"].clone()), (json!(0), Value::Null));
    }

    #[test]
    fn rf_query_parsing() {
        assert_eq!("3:2".parse::<RfQuery>().unwrap(), RfQuery { v: 3, k: 2 });
        assert!("3".parse::<RfQuery>().is_err());
        assert!("a:2".parse::<RfQuery>().is_err());
    }
}
