//! The `mrac` command line: run batches, compare run directories and export
//! per-step guarantee traces.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::Error;
use crate::scenario::{build_scenario, Pose};
use crate::sim::{run_batch, AlgorithmKind, BatchAggregate, EpisodeMetrics, MeanStd};

pub const OUT_DIR_ENV: &str = "MRAC_OUT_DIR";

#[derive(Debug, Parser)]
#[command(name = "mrac", version, about = "Two-robot action-consistency experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a batch of seeded episodes and write a run directory.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Override a config value, e.g. `--set algorithm.epsilon=0.7`.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        /// Comma-separated seeds, replacing `execution.seeds`.
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        /// Run directory. Defaults to `execution.out_dir`, then
        /// `$MRAC_OUT_DIR/<algo>-<run_id>`, then `runs/<algo>-<run_id>`.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, env = OUT_DIR_ENV, hide_env_values = true)]
        out_root: Option<PathBuf>,
    },
    /// Aggregate table over two or more run directories.
    Compare {
        #[arg(required = true, num_args = 2..)]
        dirs: Vec<PathBuf>,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Print the per-step trace of one seed as JSON lines.
    Trace {
        dir: PathBuf,
        #[arg(long)]
        seed: u64,
    },
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidInput(_) => CliError::Config(e.to_string()),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(format!("{}: {e}", path.display()))
}

/// One row of `steps.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRow {
    pub run_id: String,
    pub seed: u64,
    pub t: u32,
    pub algo: String,
    pub epsilon: f64,
    pub action_r: String,
    pub action_rp: String,
    pub not_ac: u8,
    pub comms: u32,
    #[serde(rename = "J_r")]
    pub j_r: f64,
    #[serde(rename = "J_rp")]
    pub j_rp: f64,
    pub p_r: u32,
    pub p_rp: u32,
}

/// One line of `trace.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub seed: u64,
    pub t: u32,
    pub declared: bool,
    pub forced: bool,
    pub p_ac: Option<f64>,
    pub p_not_ac: Option<f64>,
    pub p_comm: Option<f64>,
    pub p_ac_lb: Option<f64>,
    pub p_ac_ub: Option<f64>,
    pub actions: [String; 2],
    pub not_ac: bool,
    pub comms: u32,
    pub p: [u32; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioRecord {
    pub seed: u64,
    pub width: usize,
    pub height: usize,
    pub ground_truth: Vec<u8>,
    pub restrictions: Vec<u32>,
    pub start_poses: [Pose; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolvedConfig {
    pub run_id: String,
    #[serde(flatten)]
    pub config: RunConfig,
}

/// Writes `bytes` to `path` via a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| io_err(dir, e))?;
    tmp.write_all(bytes).map_err(|e| io_err(path, e))?;
    tmp.persist(path).map_err(|e| io_err(path, e.error))?;
    Ok(())
}

fn csv_bytes<T: Serialize>(rows: impl IntoIterator<Item = T>) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| CliError::Runtime(e.to_string()))?;
    }
    w.into_inner().map_err(|e| CliError::Runtime(e.to_string()))
}

pub fn step_rows(run_id: &str, episodes: &[EpisodeMetrics]) -> Vec<StepRow> {
    episodes
        .iter()
        .flat_map(|e| {
            e.records.iter().map(move |r| StepRow {
                run_id: run_id.to_string(),
                seed: e.seed,
                t: r.t,
                algo: e.algorithm.name().to_string(),
                epsilon: e.epsilon,
                action_r: r.action_labels[0].clone(),
                action_rp: r.action_labels[1].clone(),
                not_ac: u8::from(r.not_ac),
                comms: r.comms,
                j_r: r.j[0],
                j_rp: r.j[1],
                p_r: r.p[0],
                p_rp: r.p[1],
            })
        })
        .collect()
}

pub fn trace_records(episodes: &[EpisodeMetrics]) -> Vec<TraceRecord> {
    episodes
        .iter()
        .flat_map(|e| {
            e.records.iter().map(move |r| TraceRecord {
                seed: e.seed,
                t: r.t,
                declared: r.declared,
                forced: r.forced,
                p_ac: r.p_ac,
                p_not_ac: r.p_not_ac,
                p_comm: r.p_comm,
                p_ac_lb: r.p_ac_lb,
                p_ac_ub: r.p_ac_ub,
                actions: r.action_labels.clone(),
                not_ac: r.not_ac,
                comms: r.comms,
                p: r.p,
            })
        })
        .collect()
}

fn summary_csv(run_id: &str, episodes: &[EpisodeMetrics]) -> Result<Vec<u8>, CliError> {
    let agg = BatchAggregate::of(episodes)?;
    let e2 = 2.0 * agg.horizon as f64;
    let e1 = agg.horizon as f64;
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| CliError::Runtime(e.to_string());
    w.write_record(["run_id", "seed", "algo", "epsilon", "horizon", "not_ac", "not_ac_pct", "comms", "comm_pct", "mean_J"])
        .map_err(csv_err)?;
    for e in episodes {
        w.write_record([
            run_id.to_string(),
            e.seed.to_string(),
            e.algorithm.name().to_string(),
            e.epsilon.to_string(),
            e.horizon.to_string(),
            e.not_ac_count.to_string(),
            format!("{:.2}", 100.0 * e.not_ac_count as f64 / e1),
            e.comm_count.to_string(),
            format!("{:.2}", 100.0 * e.comm_count as f64 / e2),
            format!("{:.6}", e.mean_j()),
        ])
        .map_err(csv_err)?;
    }
    let pm = |m: MeanStd, prec: usize| format!("{:.prec$}±{:.prec$}", m.mean, m.std);
    let first = &episodes[0];
    w.write_record([
        run_id.to_string(),
        "mean±std".to_string(),
        first.algorithm.name().to_string(),
        first.epsilon.to_string(),
        agg.horizon.to_string(),
        pm(agg.not_ac, 2),
        format!("{:.2}", agg.not_ac_pct()),
        pm(agg.comms, 2),
        format!("{:.2}", agg.comm_pct()),
        pm(agg.mean_j, 6),
    ])
    .map_err(csv_err)?;
    w.into_inner().map_err(|e| CliError::Runtime(e.to_string()))
}

/// Writes every output file of a completed batch into `dir`.
pub fn write_run_dir(dir: &Path, config: &RunConfig, episodes: &[EpisodeMetrics]) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let run_id = config.run_id();
    let resolved = ResolvedConfig { run_id: run_id.clone(), config: config.clone() };
    let json = serde_json::to_vec_pretty(&resolved).map_err(|e| CliError::Runtime(e.to_string()))?;
    write_atomic(&dir.join("resolved_config.json"), &json)?;
    write_atomic(&dir.join("steps.csv"), &csv_bytes(step_rows(&run_id, episodes))?)?;

    #[derive(Serialize)]
    struct TimingRow {
        seed: u64,
        t: u32,
        wall_ns: u64,
        evaluated: u64,
    }
    let timing = episodes
        .iter()
        .flat_map(|e| e.records.iter().map(move |r| TimingRow { seed: e.seed, t: r.t, wall_ns: r.wall_ns, evaluated: r.evaluated }));
    write_atomic(&dir.join("timing.csv"), &csv_bytes(timing)?)?;
    write_atomic(&dir.join("summary.csv"), &summary_csv(&run_id, episodes)?)?;

    let mut trace = Vec::new();
    for r in trace_records(episodes) {
        serde_json::to_writer(&mut trace, &r).map_err(|e| CliError::Runtime(e.to_string()))?;
        trace.push(b'\n');
    }
    write_atomic(&dir.join("trace.jsonl"), &trace)?;

    let scenarios = config
        .execution
        .seeds
        .iter()
        .map(|&seed| {
            let s = build_scenario(&config.scenario, seed)?;
            Ok(ScenarioRecord {
                seed,
                width: s.grid.width,
                height: s.grid.height,
                ground_truth: s.ground_truth_flat(),
                restrictions: s.restrictions.iter().copied().collect(),
                start_poses: s.start_poses,
            })
        })
        .collect::<Result<Vec<_>, Error>>()?;
    let json = serde_json::to_vec_pretty(&scenarios).map_err(|e| CliError::Runtime(e.to_string()))?;
    write_atomic(&dir.join("scenarios.json"), &json)?;
    Ok(())
}

fn default_run_dir(config: &RunConfig, out_root: Option<PathBuf>) -> PathBuf {
    let root = out_root.unwrap_or_else(|| PathBuf::from("runs"));
    root.join(format!("{}-{}", config.algorithm.name.name(), config.run_id()))
}

pub fn cmd_run(
    config_path: &Path,
    overrides: &[String],
    seeds: Option<Vec<u64>>,
    out: Option<PathBuf>,
    out_root: Option<PathBuf>,
    stdout: &mut dyn std::io::Write,
) -> Result<PathBuf, CliError> {
    let mut config = RunConfig::load(config_path, overrides).map_err(|e| CliError::Config(e.to_string()))?;
    if let Some(seeds) = seeds {
        if seeds.is_empty() {
            return Err(CliError::Config("--seeds is empty".into()));
        }
        config.execution.seeds = seeds;
    }
    let dir = out.or_else(|| config.execution.out_dir.clone()).unwrap_or_else(|| default_run_dir(&config, out_root));
    let episodes = run_batch(&config.scenario, &config.algorithm, &config.execution.seeds, config.execution.parallelism)?;
    write_run_dir(&dir, &config, &episodes)?;
    let agg = BatchAggregate::of(&episodes)?;
    writeln!(
        stdout,
        "{} eps={} seeds={} not_ac={:.2}±{:.2} ({:.2}%) comms={:.2}±{:.2} ({:.2}% of 2E) mean_J={:.4}\n{}",
        config.algorithm.name.name(),
        config.algorithm.epsilon,
        agg.runs,
        agg.not_ac.mean,
        agg.not_ac.std,
        agg.not_ac_pct(),
        agg.comms.mean,
        agg.comms.std,
        agg.comm_pct(),
        agg.mean_j.mean,
        dir.display()
    )
    .map_err(|e| CliError::Runtime(e.to_string()))?;
    Ok(dir)
}

pub fn read_resolved(dir: &Path) -> Result<ResolvedConfig, CliError> {
    let path = dir.join("resolved_config.json");
    let text = std::fs::read_to_string(&path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

pub fn read_steps(dir: &Path) -> Result<Vec<StepRow>, CliError> {
    let path = dir.join("steps.csv");
    let mut r = csv::Reader::from_path(&path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    r.deserialize().collect::<Result<Vec<StepRow>, _>>().map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

/// One row of the comparison table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompareRow {
    pub dir: String,
    pub algo: String,
    pub epsilon: f64,
    pub runs: usize,
    pub horizon: u32,
    pub not_ac_mean: f64,
    pub not_ac_std: f64,
    pub not_ac_pct: f64,
    pub comms_mean: f64,
    pub comms_std: f64,
    pub comm_pct: f64,
    pub mean_j: f64,
}

pub fn compare_rows(dirs: &[PathBuf]) -> Result<Vec<CompareRow>, CliError> {
    let mut rows = Vec::new();
    let mut horizon: Option<(u32, &Path)> = None;
    for dir in dirs {
        let resolved = read_resolved(dir)?;
        let e = resolved.config.scenario.horizon;
        match horizon {
            Some((h, first)) if h != e => {
                return Err(CliError::Config(format!("horizon mismatch: {} has E={h}, {} has E={e}", first.display(), dir.display())))
            }
            None => horizon = Some((e, dir)),
            _ => {}
        }
        let mut per_seed: BTreeMap<u64, (f64, f64, f64, usize)> = BTreeMap::new();
        for s in read_steps(dir)? {
            let entry = per_seed.entry(s.seed).or_default();
            entry.0 += s.not_ac as f64;
            entry.1 += s.comms as f64;
            entry.2 += s.j_r;
            entry.3 += 1;
        }
        let not_ac = MeanStd::of(&per_seed.values().map(|v| v.0).collect::<Vec<_>>());
        let comms = MeanStd::of(&per_seed.values().map(|v| v.1).collect::<Vec<_>>());
        let mean_j = MeanStd::of(&per_seed.values().map(|v| v.2 / v.3.max(1) as f64).collect::<Vec<_>>());
        rows.push(CompareRow {
            dir: dir.display().to_string(),
            algo: resolved.config.algorithm.name.name().to_string(),
            epsilon: resolved.config.algorithm.epsilon,
            runs: per_seed.len(),
            horizon: e,
            not_ac_mean: not_ac.mean,
            not_ac_std: not_ac.std,
            not_ac_pct: 100.0 * not_ac.mean / e as f64,
            comms_mean: comms.mean,
            comms_std: comms.std,
            comm_pct: 100.0 * comms.mean / (2.0 * e as f64),
            mean_j: mean_j.mean,
        });
    }
    let order = |algo: &str| AlgorithmKind::ALL.iter().position(|k| k.name() == algo).unwrap_or(usize::MAX);
    rows.sort_by(|a, b| order(&a.algo).cmp(&order(&b.algo)).then(a.epsilon.total_cmp(&b.epsilon)));
    Ok(rows)
}

pub fn render_table(rows: &[CompareRow]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<18} {:>7} {:>5} {:>18} {:>8} {:>18} {:>8} {:>10}",
        "algo", "epsilon", "runs", "not_ac", "not_ac%", "comms", "comm%", "mean_J"
    );
    for r in rows {
        let _ = writeln!(
            out,
            "{:<18} {:>7} {:>5} {:>18} {:>8.2} {:>18} {:>8.2} {:>10.4}",
            r.algo,
            r.epsilon,
            r.runs,
            format!("{:.2}±{:.2}", r.not_ac_mean, r.not_ac_std),
            r.not_ac_pct,
            format!("{:.2}±{:.2}", r.comms_mean, r.comms_std),
            r.comm_pct,
            r.mean_j
        );
    }
    out
}

pub fn cmd_compare(dirs: &[PathBuf], csv_path: Option<&Path>, stdout: &mut dyn std::io::Write) -> Result<Vec<CompareRow>, CliError> {
    if dirs.len() < 2 {
        return Err(CliError::Config("compare needs at least two run directories".into()));
    }
    let rows = compare_rows(dirs)?;
    if let Some(path) = csv_path {
        write_atomic(path, &csv_bytes(rows.iter())?)?;
    }
    stdout.write_all(render_table(&rows).as_bytes()).map_err(|e| CliError::Runtime(e.to_string()))?;
    Ok(rows)
}

pub fn cmd_trace(dir: &Path, seed: u64, stdout: &mut dyn std::io::Write) -> Result<usize, CliError> {
    let path = dir.join("trace.jsonl");
    let text = std::fs::read_to_string(&path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let mut n = 0;
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let rec: TraceRecord = serde_json::from_str(line).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        if rec.seed == seed {
            match writeln!(stdout, "{line}") {
                Ok(()) => n += 1,
                Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => return Ok(n.max(1)),
                Err(e) => return Err(CliError::Runtime(e.to_string())),
            }
        }
    }
    if n == 0 {
        return Err(CliError::Config(format!("seed {seed} is not in {}", dir.display())));
    }
    Ok(n)
}

pub fn execute(cli: Cli, stdout: &mut dyn std::io::Write) -> Result<(), CliError> {
    match cli.command {
        Command::Run { config, overrides, seeds, out, out_root } => cmd_run(&config, &overrides, seeds, out, out_root, stdout).map(|_| ()),
        Command::Compare { dirs, csv } => cmd_compare(&dirs, csv.as_deref(), stdout).map(|_| ()),
        Command::Trace { dir, seed } => cmd_trace(&dir, seed, stdout).map(|_| ()),
    }
}

/// Entry point of the binary. Usage errors exit with 2.
pub fn main_from<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let mut stdout = std::io::stdout().lock();
    match execute(cli, &mut stdout) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("mrac: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
