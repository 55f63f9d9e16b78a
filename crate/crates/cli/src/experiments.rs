//! Subcommands that train models.

use crate::error::{CliError, CliResult, Classify};
use crate::list::{GnnList, IntList};
use crate::options::Options;
use crate::pool::run_ordered;
use crate::report::{ResultRow, Sink};
use crate::runs::{cell_summary, make_dataset, progress, Job};
use oversquash::bounds::{min_hidden_dim, BoundParams};
use oversquash::layers::LayerType;
use oversquash::neighborsmatch::{parse_dataset, write_dataset, Dataset};
use oversquash::train::{train, Model, ModelConfig, TrainSchedule};
use std::collections::btree_map::Entry;
use std::collections::BTreeMap;
use std::path::Path;

/// Default empirical min-d candidates.
pub const D_CANDIDATES: &[u64] = &[4, 16, 64, 128, 256, 512, 1024];

fn defaults(f: impl FnOnce(&mut Options)) -> Options {
    let mut o = Options::default();
    f(&mut o);
    o
}

fn single<T: Copy>(name: &str, v: &[T]) -> CliResult<T> {
    match v {
        [x] => Ok(*x),
        _ => Err(CliError::usage(format!("{name} takes a single value here"))),
    }
}

fn sink(opts: &Options, csv_type: &'static str) -> CliResult<Sink> {
    Sink::open(opts.out.as_deref(), opts.csv().then_some(csv_type))
}

pub fn gen_data(opts: Options, graphs_dir: Option<&Path>) -> CliResult<()> {
    let opts = opts.resolve(defaults(|o| o.depth = Some(IntList(vec![2]))))?;
    let chain = match opts.chain {
        Some(_) => single("chain", &opts.chains()?)?,
        None => 0,
    };
    let depth = if chain > 0 { 2 } else { single("depth", &opts.depths()?)? };
    let ds = make_dataset(&opts, depth, chain)?;
    let text = write_dataset(&ds);
    match &opts.out {
        Some(p) => std::fs::write(p, text).map_err(|e| CliError::usage(format!("cannot write {}: {e}", p.display())))?,
        None => print!("{text}"),
    }
    if let Some(dir) = graphs_dir {
        std::fs::create_dir_all(dir).usage_err()?;
        for (i, e) in ds.examples.iter().enumerate() {
            let path = dir.join(format!("example_{i:05}.graph"));
            std::fs::write(&path, oversquash::graph::write_graph(&e.graph())).usage_err()?;
        }
    }
    let dist = ds.class_distribution();
    eprintln!("{} examples, depth {}, class counts {dist:?}", ds.len(), ds.depth);
    Ok(())
}

pub fn train_one(opts: Options) -> CliResult<()> {
    let opts = opts.resolve(defaults(|o| {
        o.gnn = Some(GnnList(vec![LayerType::Gcn]));
        o.depth = Some(IntList(vec![2]));
        o.d = Some(IntList(vec![32]));
    }))?;
    let gnn = single("gnn", &opts.gnns())?;
    let dim = single("d", &opts.dims()?)?;
    let schedule = opts.schedule()?;
    let ds = match &opts.data {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::data(anyhow::anyhow!("cannot read {}: {e}", path.display())))?;
            parse_dataset(&text)
                .map_err(|e| CliError::data(anyhow::anyhow!("{}: {e}", path.display())))?
        }
        None => {
            let chain = match opts.chain {
                Some(_) => single("chain", &opts.chains()?)?,
                None => 0,
            };
            let depth = if chain > 0 { 2 } else { single("depth", &opts.depths()?)? };
            make_dataset(&opts, depth, chain)?
        }
    };
    if ds.is_empty() {
        return Err(CliError::data(anyhow::anyhow!("dataset is empty")));
    }
    let base = if ds.chain_len > 0 {
        ModelConfig::for_chain(gnn, ds.chain_len)
    } else {
        ModelConfig::new(gnn, ds.depth)
    };
    let config = opts.model(base, dim, opts.seed());
    config.validate().map_err(CliError::usage)?;
    let mut model = Model::<f32>::new(config.clone()).map_err(CliError::usage)?;

    let mut out = sink(&opts, "epoch")?;
    out.emit(&serde_json::json!({
        "type": "config",
        "model": config,
        "schedule": schedule,
        "samples": ds.len(),
        "chain_len": ds.chain_len,
        "data_seed": opts.data.is_none().then(|| opts.data_seed()),
    }))?;
    let mut write_err = None;
    let report = train(&mut model, &ds, &schedule, |e| {
        if write_err.is_none() {
            write_err = out.emit(&e.to_json()).err();
        }
    })
    .run_err()?;
    if let Some(e) = write_err {
        return Err(e);
    }
    out.emit(&report.summary_json())?;
    eprintln!(
        "{gnn} r={} d={dim}: best {:.4}, final {:.4} after {} epochs [{:.1}s]",
        config.depth, report.best_accuracy, report.final_accuracy, report.epochs_run, report.wall_time_s
    );
    if report.failed {
        return Err(CliError::run(anyhow::anyhow!(
            "training failed: {}",
            report.error.unwrap_or_else(|| "diverged".into())
        )));
    }
    Ok(())
}

/// A grid point: one model configuration trained with `trials` seeds.
struct Cell<'a> {
    config: ModelConfig,
    chain_len: usize,
    data: &'a Dataset,
}

/// Runs every cell's trials on the worker pool, emitting rows in cell order
/// and a summary after each cell. Returns all rows.
fn run_cells(cells: &[Cell], opts: &Options, schedule: &TrainSchedule, out: &mut Sink) -> CliResult<Vec<ResultRow>> {
    let trials = opts.trials();
    let jobs: Vec<Job> = cells
        .iter()
        .flat_map(|c| {
            (0..trials).map(move |t| Job {
                config: ModelConfig {
                    seed: opts.seed().wrapping_add(t as u64),
                    ..c.config.clone()
                },
                chain_len: c.chain_len,
                data: c.data,
            })
        })
        .collect();
    for j in &jobs {
        j.validate()?;
    }
    let mut rows = Vec::with_capacity(jobs.len());
    run_ordered(&jobs, opts.workers(), |j| j.run(schedule), |i, row| {
        progress(&row);
        out.emit(&row.json())?;
        rows.push(row);
        if (i + 1) % trials == 0 {
            out.emit(&cell_summary(&rows[rows.len() - trials..]))?;
        }
        Ok(())
    })?;
    Ok(rows)
}

fn finish(rows: &[ResultRow]) -> CliResult<()> {
    let failed = rows.iter().filter(|r| r.failed).count();
    if failed > 0 {
        return Err(CliError::run(anyhow::anyhow!("{failed} of {} runs failed", rows.len())));
    }
    Ok(())
}

fn datasets(opts: &Options, keys: &[(u32, usize)]) -> CliResult<BTreeMap<(u32, usize), Dataset>> {
    let mut map = BTreeMap::new();
    for &(depth, chain) in keys {
        if let Entry::Vacant(slot) = map.entry((depth, chain)) {
            slot.insert(make_dataset(opts, depth, chain)?);
        }
    }
    Ok(map)
}

pub fn sweep_radius(opts: Options) -> CliResult<()> {
    let opts = opts.resolve(defaults(|o| {
        o.depth = Some(IntList(vec![2, 3, 4]));
        o.d = Some(IntList(vec![32]));
    }))?;
    let schedule = opts.schedule()?;
    let (depths, dims) = (opts.depths()?, opts.dims()?);
    let data = datasets(&opts, &depths.iter().map(|&r| (r, 0)).collect::<Vec<_>>())?;
    let mut cells = Vec::new();
    for gnn in opts.gnns() {
        for &r in &depths {
            for &d in &dims {
                cells.push(Cell {
                    config: opts.model(ModelConfig::new(gnn, r), d, 0),
                    chain_len: 0,
                    data: &data[&(r, 0)],
                });
            }
        }
    }
    let mut out = sink(&opts, "run")?;
    let rows = run_cells(&cells, &opts, &schedule, &mut out)?;
    finish(&rows)
}

pub fn chain_control(opts: Options) -> CliResult<()> {
    let opts = opts.resolve(defaults(|o| {
        o.chain = Some(IntList((2..=6).collect()));
        o.d = Some(IntList(vec![32]));
    }))?;
    let schedule = opts.schedule()?;
    let (chains, dims) = (opts.chains()?, opts.dims()?);
    let data = datasets(&opts, &chains.iter().map(|&c| (2, c)).collect::<Vec<_>>())?;
    let mut cells = Vec::new();
    for gnn in opts.gnns() {
        for &c in &chains {
            for &d in &dims {
                cells.push(Cell {
                    config: opts.model(ModelConfig::for_chain(gnn, c), d, 0),
                    chain_len: c,
                    data: &data[&(2, c)],
                });
            }
        }
    }
    let mut out = sink(&opts, "run")?;
    let rows = run_cells(&cells, &opts, &schedule, &mut out)?;
    finish(&rows)
}

pub fn min_dim(opts: Options) -> CliResult<()> {
    let opts = opts.resolve(defaults(|o| {
        o.gnn = Some(GnnList(vec![LayerType::Ggnn]));
        o.depth = Some(IntList(vec![2, 3]));
        o.d = Some(IntList(D_CANDIDATES.to_vec()));
    }))?;
    let schedule = opts.schedule()?;
    let (depths, dims) = (opts.depths()?, opts.dims()?);
    if dims.windows(2).any(|w| w[0] >= w[1]) {
        return Err(CliError::usage("d candidates must be strictly ascending"));
    }
    let data = datasets(&opts, &depths.iter().map(|&r| (r, 0)).collect::<Vec<_>>())?;
    let gnns = opts.gnns();
    let mut found: BTreeMap<(LayerType, u32), usize> = BTreeMap::new();
    let mut out = sink(&opts, "min_dim")?;
    let mut rows = Vec::new();
    for &d in &dims {
        let cells: Vec<Cell> = gnns
            .iter()
            .flat_map(|&g| depths.iter().map(move |&r| (g, r)))
            .filter(|key| !found.contains_key(key))
            .map(|(g, r)| Cell {
                config: opts.model(ModelConfig::new(g, r), d, 0),
                chain_len: 0,
                data: &data[&(r, 0)],
            })
            .collect();
        if cells.is_empty() {
            break;
        }
        let round = run_cells(&cells, &opts, &schedule, &mut out)?;
        for chunk in round.chunks(opts.trials()) {
            if chunk.iter().any(|r| r.best_accuracy >= 1.0) {
                found.insert((chunk[0].gnn, chunk[0].r), d);
            }
        }
        rows.extend(round);
    }
    for &g in &gnns {
        for &r in &depths {
            let empirical = found.get(&(g, r)).copied();
            let bound = min_hidden_dim(r, &BoundParams::default()).ok().map(|b| b.value);
            out.emit(&serde_json::json!({
                "type": "min_dim",
                "gnn": g,
                "r": r,
                "empirical_min_d": empirical,
                "status": if empirical.is_some() { "found" } else { "not_reached" },
                "combinatorial_min_d": bound,
                "candidates": dims,
                "trials": opts.trials(),
            }))?;
        }
    }
    finish(&rows)
}
