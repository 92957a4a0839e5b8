use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use acgm_cli::{
    cmd_dag_check, cmd_depth_sweep, cmd_edge_drop, cmd_eval, cmd_train, parse_drops, CliResult,
};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "acgm", version, about = "Action coordination graphs for cooperative multi-agent RL")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train from a config file; writes metrics.csv and checkpoints.
    Train { config: PathBuf },
    /// Greedy evaluation of a checkpoint.
    Eval {
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 1000)]
        episodes: usize,
        /// `empty`, `g528`, or a 0/1 matrix file.
        #[arg(long = "override")]
        graph_override: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train and evaluate once per depth bound.
    DepthSweep {
        config: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        k: Vec<usize>,
        #[arg(long, default_value_t = 1000)]
        episodes: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate with edges dropped from every emitted graph.
    EdgeDrop {
        checkpoint: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        drops: Vec<String>,
        /// Use the fixed 28-edge baseline graph instead of the generator.
        #[arg(long)]
        baseline: bool,
        #[arg(long, default_value_t = 1000)]
        episodes: usize,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Report acyclicity, edge count, nilpotent index and order of a 0/1 matrix file.
    DagCheck { file: PathBuf },
}

fn run(cli: Cli) -> CliResult<()> {
    let stdout = io::stdout();
    let mut out = stdout.lock();
    match cli.command {
        Command::Train { config } => {
            let dir = cmd_train(&config, &mut io::stderr())?;
            let _ = writeln!(out, "{}", dir.display());
        }
        Command::Eval {
            checkpoint,
            episodes,
            graph_override,
            seed,
        } => {
            cmd_eval(&checkpoint, episodes, graph_override.as_deref(), seed, &mut out)?;
        }
        Command::DepthSweep {
            config,
            k,
            episodes,
            out: path,
        } => {
            cmd_depth_sweep(&config, &k, episodes, path.as_deref(), &mut out)?;
        }
        Command::EdgeDrop {
            checkpoint,
            drops,
            baseline,
            episodes,
            seed,
            out: path,
        } => {
            let drops = parse_drops(&drops)?;
            cmd_edge_drop(&checkpoint, &drops, baseline, episodes, seed, path.as_deref(), &mut out)?;
        }
        Command::DagCheck { file } => {
            cmd_dag_check(&file, &mut out)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("acgm: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
