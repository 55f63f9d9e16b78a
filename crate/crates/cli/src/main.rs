//! `oversquash`: Tree-NeighborsMatch experiments from the command line.

mod bounds_cmd;
mod error;
mod experiments;
mod graph_stats;
mod list;
mod options;
mod pool;
mod report;
mod runs;

use clap::{Parser, Subcommand};
use error::CliResult;
use list::IntList;
use options::Options;
use oversquash::bounds::{BoundParams, BoundVariant};
use std::path::PathBuf;
use std::process::ExitCode;

#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;

#[derive(Parser)]
#[command(name = "oversquash", version, about = "Over-squashing experiments on Tree-NeighborsMatch")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a Tree-NeighborsMatch dataset file.
    GenData {
        #[command(flatten)]
        opts: Options,
        /// Also write each example's graph into this directory.
        #[arg(long, value_name = "DIR")]
        graphs: Option<PathBuf>,
    },
    /// Train one model and stream per-epoch records.
    Train {
        #[command(flatten)]
        opts: Options,
    },
    /// Train every (gnn, r, d) cell for `trials` seeds.
    SweepRadius {
        #[command(flatten)]
        opts: Options,
    },
    /// Smallest candidate d that reaches full training accuracy, per (gnn, r).
    MinDim {
        #[command(flatten)]
        opts: Options,
    },
    /// Train on depth-2 trees whose target sits at the end of a chain.
    ChainControl {
        #[command(flatten)]
        opts: Options,
    },
    /// Diameter and receptive-field statistics of graph files.
    GraphStats {
        /// A graph file or a directory of `*.graph` files.
        path: PathBuf,
        /// Follow edge directions instead of the undirected view.
        #[arg(long)]
        directed: bool,
        /// Receptive-field size of node v after K steps; repeatable.
        #[arg(long = "rf", value_name = "V:K")]
        rf: Vec<graph_stats::RfQuery>,
        #[arg(long, short = 'o', value_name = "FILE")]
        out: Option<PathBuf>,
        #[arg(long)]
        csv: bool,
    },
    /// Combinatorial lower bounds, as CSV.
    Bounds {
        /// Minimum hidden dimension for each radius; the default query (2..12).
        #[arg(long, value_name = "LIST")]
        table: Option<IntList>,
        /// Minimum hidden dimension for each `--r`.
        #[arg(long, requires = "r")]
        min_d: bool,
        #[arg(long, short = 'r', value_name = "LIST")]
        r: Option<IntList>,
        /// Largest radius each `--d` can represent.
        #[arg(long, requires = "d")]
        max_r: bool,
        #[arg(long, short = 'd', value_name = "LIST")]
        d: Option<IntList>,
        /// Tree arity.
        #[arg(long, default_value_t = 2)]
        m: u32,
        /// Counting base.
        #[arg(long, default_value_t = 2)]
        b: u32,
        /// Digits per float.
        #[arg(long, default_value_t = 32)]
        f: u32,
        /// `main` divides out sibling reorderings; `appendix` counts every leaf assignment.
        #[arg(long, default_value = "main", value_parser = parse_variant)]
        variant: BoundVariant,
    },
}

fn parse_variant(s: &str) -> Result<BoundVariant, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|_| format!("unknown variant '{s}' (main or appendix)"))
}

fn run(cmd: Command) -> CliResult<()> {
    match cmd {
        Command::GenData { opts, graphs } => experiments::gen_data(opts, graphs.as_deref()),
        Command::Train { opts } => experiments::train_one(opts),
        Command::SweepRadius { opts } => experiments::sweep_radius(opts),
        Command::MinDim { opts } => experiments::min_dim(opts),
        Command::ChainControl { opts } => experiments::chain_control(opts),
        Command::GraphStats {
            path,
            directed,
            rf,
            out,
            csv,
        } => graph_stats::graph_stats(&path, directed, &rf, out.as_deref(), csv),
        Command::Bounds {
            table,
            min_d,
            r,
            max_r,
            d,
            m,
            b,
            f,
            variant,
        } => {
            let table = if min_d { r.as_ref() } else { table.as_ref() };
            if min_d && max_r {
                return Err(error::CliError::usage("--min-d and --max-r are mutually exclusive"));
            }
            let q = bounds_cmd::query(table, max_r, d.as_ref())?;
            print!("{}", bounds_cmd::run(&q, &BoundParams { m, b, f, variant })?);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(error::Exit::Usage as u8)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit as u8)
        }
    }
}
