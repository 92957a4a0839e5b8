//! Subcommands of the `acgm` binary, kept in a library so tests can call
//! them without spawning processes.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use acgm_core::baseline::fixed_baseline;
use acgm_core::config::RunConfig;
use acgm_core::dagmath::{dag_report, AdjacencyMatrix};
use acgm_core::tinynet::Checkpoint;
use acgm_core::trainer::{fmt_sig9, EdgeDrop, EvalOptions, EvalSummary, Trainer, METRICS_HEADER};
use thiserror::Error;

pub const BUILD_ID: &str = concat!("acgm ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] acgm_core::Error),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("{0}")]
    Usage(String),
}

impl CliError {
    /// 2 for configuration and usage problems, 3 for a non-finite abort.
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Core(acgm_core::Error::Config(_)) | Self::Usage(_) => 2,
            Self::Core(acgm_core::Error::NonFinite(_)) => 3,
            _ => 1,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes through a sibling temporary file and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    {
        let mut f = fs::File::create(&tmp).map_err(io_err(&tmp))?;
        f.write_all(bytes).map_err(io_err(&tmp))?;
        f.sync_all().map_err(io_err(&tmp))?;
    }
    fs::rename(&tmp, path).map_err(io_err(path))
}

/// `# build:` line followed by one `# config:` line per key.
pub fn file_header(config_echo: &str) -> String {
    let mut s = format!("# build: {BUILD_ID}\n");
    for line in config_echo.lines() {
        s.push_str("# config: ");
        s.push_str(line);
        s.push('\n');
    }
    s
}

/// Reads and validates a config file and applies `ACGM_SEED`.
pub fn load_config(path: &Path) -> CliResult<RunConfig> {
    let text = fs::read_to_string(path)
        .map_err(|e| acgm_core::Error::Config(format!("cannot read {}: {e}", path.display())))?;
    let mut cfg = RunConfig::parse(&text)?;
    cfg.apply_env_overrides()?;
    Ok(cfg)
}

pub fn load_checkpoint(path: &Path) -> CliResult<Trainer> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    Ok(Trainer::from_checkpoint(&Checkpoint::decode(&bytes)?)?)
}

/// Directory holding a run's outputs.
pub fn run_dir(cfg: &RunConfig) -> PathBuf {
    cfg.output_dir.join(&cfg.run_id)
}

/// Trains per the config, writing `metrics.csv`, periodic
/// `ckpt_<episode>.acgm` and `ckpt_final.acgm`. Returns the run directory.
pub fn cmd_train(config_path: &Path, log: &mut dyn Write) -> CliResult<PathBuf> {
    let cfg = load_config(config_path)?;
    train_config(cfg, log)
}

pub fn train_config(cfg: RunConfig, log: &mut dyn Write) -> CliResult<PathBuf> {
    let dir = run_dir(&cfg);
    let metrics_path = dir.join("metrics.csv");
    let mut metrics = file_header(&cfg.to_text());
    metrics.push_str(METRICS_HEADER);
    metrics.push('\n');
    let mut trainer = Trainer::new(cfg)?;
    let total = trainer.config.episodes;
    let every = trainer.config.checkpoint_every;
    for _ in 0..total {
        let row = match trainer.train_episode() {
            Ok(row) => row,
            Err(e) => {
                write_atomic(&metrics_path, metrics.as_bytes())?;
                return Err(e.into());
            }
        };
        metrics.push_str(&row.to_csv());
        metrics.push('\n');
        let done = trainer.episodes_done;
        if every > 0 && done % every == 0 {
            let ck = dir.join(format!("ckpt_{done}.acgm"));
            write_atomic(&ck, &trainer.checkpoint().encode())?;
            write_atomic(&metrics_path, metrics.as_bytes())?;
            let _ = writeln!(log, "episode {done}/{total}: return {}", fmt_sig9(row.episode_return));
        }
    }
    write_atomic(&metrics_path, metrics.as_bytes())?;
    write_atomic(&dir.join("ckpt_final.acgm"), &trainer.checkpoint().encode())?;
    Ok(dir)
}

/// Resolves `--override`: `empty`, `g528`, or a matrix file path.
pub fn parse_override(choice: &str, agents: usize) -> CliResult<AdjacencyMatrix> {
    match choice {
        "empty" => Ok(AdjacencyMatrix::empty(agents)),
        "g528" => Ok(fixed_baseline()?),
        path => {
            let p = Path::new(path);
            let text = fs::read_to_string(p).map_err(io_err(p))?;
            Ok(AdjacencyMatrix::parse(&text)?)
        }
    }
}

pub fn summary_text(s: &EvalSummary) -> String {
    format!(
        "episodes = {}\nmean_return = {}\nstd_return = {}\nmean_edges = {}\nmean_nilpotent = {}\nviolation_rate = {}\n",
        s.episodes,
        fmt_sig9(s.mean_return),
        fmt_sig9(s.std_return),
        fmt_sig9(s.mean_edges),
        fmt_sig9(s.mean_nilpotent),
        fmt_sig9(s.violation_rate),
    )
}

pub fn cmd_eval(
    checkpoint: &Path,
    episodes: usize,
    graph_override: Option<&str>,
    seed: Option<u64>,
    out: &mut dyn Write,
) -> CliResult<EvalSummary> {
    let trainer = load_checkpoint(checkpoint)?;
    let agents = trainer.config.env.agents;
    let opts = EvalOptions {
        graph_override: graph_override.map(|s| parse_override(s, agents)).transpose()?,
        ..EvalOptions::greedy(episodes, seed.unwrap_or(trainer.config.seed))
    };
    let summary = trainer.evaluate(&opts)?;
    out.write_all(summary_text(&summary).as_bytes())
        .map_err(io_err(Path::new("<stdout>")))?;
    Ok(summary)
}

fn emit(text: &str, out_path: Option<&Path>, out: &mut dyn Write) -> CliResult<()> {
    match out_path {
        Some(p) => write_atomic(p, text.as_bytes()),
        None => out.write_all(text.as_bytes()).map_err(io_err(Path::new("<stdout>"))),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DepthRow {
    pub depth: usize,
    pub summary: EvalSummary,
}

/// One training run per depth bound with a shared seed, each evaluated greedily.
pub fn cmd_depth_sweep(
    config_path: &Path,
    ks: &[usize],
    episodes: usize,
    out_path: Option<&Path>,
    out: &mut dyn Write,
) -> CliResult<Vec<DepthRow>> {
    let cfg = load_config(config_path)?;
    depth_sweep(cfg, ks, episodes, out_path, out)
}

pub fn depth_sweep(
    cfg: RunConfig,
    ks: &[usize],
    episodes: usize,
    out_path: Option<&Path>,
    out: &mut dyn Write,
) -> CliResult<Vec<DepthRow>> {
    if ks.is_empty() {
        return Err(CliError::Usage("--k needs at least one depth".into()));
    }
    let mut text = file_header(&cfg.to_text());
    text.push_str("depth,mean_return,std_return,violation_rate\n");
    let mut rows = Vec::with_capacity(ks.len());
    for &k in ks {
        let mut c = cfg.clone();
        c.graph.k = k;
        c.run_id = format!("{}_k{k}", cfg.run_id);
        c.validate()?;
        let mut t = Trainer::new(c)?;
        for _ in 0..t.config.episodes {
            t.train_episode()?;
        }
        let summary = t.evaluate(&EvalOptions::greedy(episodes, cfg.seed))?;
        text.push_str(&format!(
            "{k},{},{},{}\n",
            fmt_sig9(summary.mean_return),
            fmt_sig9(summary.std_return),
            fmt_sig9(summary.violation_rate)
        ));
        rows.push(DepthRow { depth: k, summary });
    }
    emit(&text, out_path, out)?;
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DropRow {
    pub drop: EdgeDrop,
    pub summary: EvalSummary,
}

pub fn parse_drops(list: &[String]) -> CliResult<Vec<EdgeDrop>> {
    if list.is_empty() {
        return Err(CliError::Usage("--drops needs at least one count".into()));
    }
    list.iter()
        .map(|s| s.parse::<EdgeDrop>().map_err(|e| CliError::Usage(e.to_string())))
        .collect()
}

/// Greedy evaluation with edges removed from every emitted graph; with
/// `baseline` the fixed 28-edge graph replaces the generator first.
pub fn cmd_edge_drop(
    checkpoint: &Path,
    drops: &[EdgeDrop],
    baseline: bool,
    episodes: usize,
    seed: Option<u64>,
    out_path: Option<&Path>,
    out: &mut dyn Write,
) -> CliResult<Vec<DropRow>> {
    let trainer = load_checkpoint(checkpoint)?;
    edge_drop(&trainer, drops, baseline, episodes, seed, out_path, out)
}

pub fn edge_drop(
    trainer: &Trainer,
    drops: &[EdgeDrop],
    baseline: bool,
    episodes: usize,
    seed: Option<u64>,
    out_path: Option<&Path>,
    out: &mut dyn Write,
) -> CliResult<Vec<DropRow>> {
    let graph_override = if baseline { Some(fixed_baseline()?) } else { None };
    let seed = seed.unwrap_or(trainer.config.seed);
    let mut text = file_header(&trainer.config.to_text());
    text.push_str("drop,mean_return,std_return\n");
    let mut rows = Vec::with_capacity(drops.len());
    for &drop in drops {
        let opts = EvalOptions {
            graph_override: graph_override.clone(),
            drop,
            ..EvalOptions::greedy(episodes, seed)
        };
        let summary = trainer.evaluate(&opts)?;
        text.push_str(&format!(
            "{drop},{},{}\n",
            fmt_sig9(summary.mean_return),
            fmt_sig9(summary.std_return)
        ));
        rows.push(DropRow { drop, summary });
    }
    emit(&text, out_path, out)?;
    Ok(rows)
}

pub fn cmd_dag_check(file: &Path, out: &mut dyn Write) -> CliResult<AdjacencyMatrix> {
    let text = fs::read_to_string(file).map_err(io_err(file))?;
    let a = AdjacencyMatrix::parse(&text)?;
    out.write_all(dag_report(&a).as_bytes())
        .map_err(io_err(Path::new("<stdout>")))?;
    Ok(a)
}
