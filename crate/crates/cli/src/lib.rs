//! Command-line driver: single runs, protocol comparisons, parameter sweeps
//! and manifest replay.

pub mod settings;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use wsn_core::engine::run_simulation;
use wsn_core::field::write_nodes_csv;
use wsn_core::metrics::{self, ChartMetric, ChartSeries, SummaryDocument};
use wsn_core::{ChCount, LifetimeSummary, Milestone, Protocol, RelayRule, RoundRecord, SimConfig, Simulation};

use settings::{parse_list, parse_seeds, Overrides};

/// Environment variable naming the default output directory.
pub const OUT_ENV: &str = "WSN_SIM_OUT";
const DEFAULT_OUT: &str = "wsn-out";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Runtime(#[from] anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "wsn-sim", version, about = "Round-based sensor network lifetime simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one simulation.
    Run(RunArgs),
    /// Run every protocol x node count x seed combination on shared deployments.
    Compare(CompareArgs),
    /// Vary one parameter over a list of values.
    Sweep(SweepArgs),
    /// Re-run a manifest and check every output file matches.
    Replay(ReplayArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Base parameter preset (only `table1`).
    #[arg(long)]
    pub preset: Option<String>,
    /// Flat key=value config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override one setting; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Round cap.
    #[arg(long)]
    pub rounds: Option<u64>,
    /// Output directory (default: $WSN_SIM_OUT or ./wsn-out).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub protocol: Option<String>,
    #[arg(long)]
    pub nodes: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Write one JSON round record per line.
    #[arg(long)]
    pub trace: bool,
    /// Write one JSON round plan per line.
    #[arg(long)]
    pub plans: bool,
    /// Write node placements as CSV.
    #[arg(long)]
    pub placements: bool,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long, default_value = "leach,rbebp")]
    pub protocols: String,
    #[arg(long, default_value = "35,50,100")]
    pub nodes: String,
    /// Inclusive range `a..b` and/or comma list.
    #[arg(long, default_value = "1..10")]
    pub seeds: String,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// One of: inner_radius, ch_count, relay_rule, leach_p, e_da, packet_bits,
    /// control_bits, control, initial_energy.
    #[arg(long)]
    pub param: String,
    #[arg(long)]
    pub values: String,
    #[arg(long, default_value = "rbebp")]
    pub protocols: String,
    #[arg(long, default_value = "100")]
    pub nodes: String,
    #[arg(long, default_value = "1..3")]
    pub seeds: String,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Where to regenerate files (default: `replay/` next to the manifest).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub const SWEEP_PARAMS: &[&str] = &[
    "inner_radius",
    "ch_count",
    "relay_rule",
    "leach_p",
    "e_da",
    "packet_bits",
    "control_bits",
    "control",
    "initial_energy",
];

/// A fully resolved command: everything needed to regenerate its outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Invocation {
    Run {
        config: SimConfig,
        trace: bool,
        plans: bool,
        placements: bool,
    },
    Compare {
        base: SimConfig,
        protocols: Vec<Protocol>,
        nodes: Vec<usize>,
        seeds: Vec<u64>,
    },
    Sweep {
        base: SimConfig,
        param: String,
        values: Vec<String>,
        protocols: Vec<Protocol>,
        nodes: Vec<usize>,
        seeds: Vec<u64>,
    },
}

impl Invocation {
    pub fn seeds(&self) -> Vec<u64> {
        match self {
            Invocation::Run { config, .. } => vec![config.seed],
            Invocation::Compare { seeds, .. } | Invocation::Sweep { seeds, .. } => seeds.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub invocation: Invocation,
    pub seeds: Vec<u64>,
    pub out_dir: PathBuf,
    pub files: Vec<FileEntry>,
}

fn base_overrides(common: &CommonArgs) -> Result<Overrides, CliError> {
    if let Some(preset) = &common.preset {
        if preset != "table1" {
            return Err(CliError::Usage(format!("unknown preset `{preset}` (expected table1)")));
        }
    }
    let mut o = Overrides::default();
    if let Some(path) = &common.config {
        o.load_file(path)?;
    }
    for pair in &common.set {
        o.parse_pair(pair)?;
    }
    if let Some(r) = common.rounds {
        o.set("rounds", r.to_string())?;
    }
    Ok(o)
}

fn out_dir(common: &CommonArgs) -> PathBuf {
    common
        .out
        .clone()
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
}

fn protocols(spec: &str) -> Result<Vec<Protocol>, CliError> {
    parse_list::<Protocol>(spec, "protocol")
}

fn node_counts(spec: &str) -> Result<Vec<usize>, CliError> {
    let nodes = parse_list::<usize>(spec, "node count")?;
    if nodes.contains(&0) {
        return Err(CliError::Usage("node count must be at least 1".into()));
    }
    Ok(nodes)
}

/// Turns parsed arguments into a resolved invocation and output directory.
pub fn resolve(command: &Command) -> Result<(Invocation, PathBuf), CliError> {
    match command {
        Command::Run(args) => {
            let mut o = base_overrides(&args.common)?;
            if let Some(p) = &args.protocol {
                o.set("protocol", p.as_str())?;
            }
            if let Some(n) = args.nodes {
                o.set("nodes", n.to_string())?;
            }
            if let Some(s) = args.seed {
                o.set("seed", s.to_string())?;
            }
            let config = o.resolve()?;
            Ok((
                Invocation::Run {
                    config,
                    trace: args.trace,
                    plans: args.plans,
                    placements: args.placements,
                },
                out_dir(&args.common),
            ))
        }
        Command::Compare(args) => {
            let protocols = protocols(&args.protocols)?;
            if protocols.len() < 2 {
                return Err(CliError::Usage("compare needs at least two protocols".into()));
            }
            let nodes = node_counts(&args.nodes)?;
            let seeds = parse_seeds(&args.seeds)?;
            let base = base_overrides(&args.common)?.resolve()?;
            Ok((
                Invocation::Compare {
                    base,
                    protocols,
                    nodes,
                    seeds,
                },
                out_dir(&args.common),
            ))
        }
        Command::Sweep(args) => {
            if !SWEEP_PARAMS.contains(&args.param.as_str()) {
                return Err(CliError::Usage(format!(
                    "cannot sweep `{}`; choose one of {}",
                    args.param,
                    SWEEP_PARAMS.join(", ")
                )));
            }
            let values: Vec<String> = parse_list::<String>(&args.values, "value")?;
            let base = base_overrides(&args.common)?.resolve()?;
            for v in &values {
                apply_param(&base, &args.param, v)?;
            }
            Ok((
                Invocation::Sweep {
                    base,
                    param: args.param.clone(),
                    values,
                    protocols: protocols(&args.protocols)?,
                    nodes: node_counts(&args.nodes)?,
                    seeds: parse_seeds(&args.seeds)?,
                },
                out_dir(&args.common),
            ))
        }
        Command::Replay(_) => Err(CliError::Usage("replay has no invocation of its own".into())),
    }
}

/// Returns `base` with one swept parameter replaced.
pub fn apply_param(base: &SimConfig, param: &str, value: &str) -> Result<SimConfig, CliError> {
    let bad = |e: &dyn std::fmt::Display| CliError::Usage(format!("bad value `{value}` for {param}: {e}"));
    let mut c = base.clone();
    match param {
        "inner_radius" => c.field.inner_radius = value.parse().map_err(|e| bad(&e))?,
        "ch_count" => {
            c.ch_count = if value == "auto" {
                ChCount::default()
            } else {
                ChCount::Fixed(value.parse().map_err(|e| bad(&e))?)
            }
        }
        "relay_rule" => c.relay_rule = value.parse::<RelayRule>().map_err(|e| bad(&e))?,
        "leach_p" => c.leach_p = value.parse().map_err(|e| bad(&e))?,
        "initial_energy" => c.initial_energy = value.parse().map_err(|e| bad(&e))?,
        "control_bits" => c.control_bits = value.parse().map_err(|e| bad(&e))?,
        "control" => {
            c.control_enabled = match value {
                "on" | "true" => true,
                "off" | "false" => false,
                other => return Err(bad(&format!("expected on/off, got {other}"))),
            }
        }
        "e_da" | "packet_bits" => {
            let r = c.radio;
            let (e_da, bits) = if param == "e_da" {
                (value.parse().map_err(|e| bad(&e))?, r.packet_bits())
            } else {
                (r.e_da(), value.parse().map_err(|e| bad(&e))?)
            };
            c.radio =
                wsn_core::RadioParams::new(r.e_elec(), r.eps_fs(), r.eps_mp(), e_da, bits).map_err(|e| bad(&e))?;
        }
        other => return Err(CliError::Usage(format!("cannot sweep `{other}`"))),
    }
    c.validate().map_err(|e| bad(&e))?;
    Ok(c)
}

fn run_stem(protocol: Protocol, n: usize, seed: u64) -> String {
    format!("{protocol}_n{n}_s{seed}")
}

struct Output<'a> {
    dir: &'a Path,
    files: Vec<String>,
}

impl Output<'_> {
    fn path(&mut self, rel: &str) -> anyhow::Result<PathBuf> {
        let path = self.dir.join(rel);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
        }
        self.files.push(rel.to_string());
        Ok(path)
    }

    fn text(&mut self, rel: &str, text: &str) -> anyhow::Result<()> {
        let path = self.path(rel)?;
        std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
    }
}

/// Executes an invocation, writing its files under `dir`. Returns the
/// written paths relative to `dir`, in write order.
pub fn execute(inv: &Invocation, dir: &Path, stdout: &mut dyn std::io::Write) -> Result<Vec<String>, CliError> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating output directory {}", dir.display()))?;
    let mut out = Output { dir, files: Vec::new() };
    match inv {
        Invocation::Run {
            config,
            trace,
            plans,
            placements,
        } => execute_run(config, *trace, *plans, *placements, &mut out, stdout)?,
        Invocation::Compare {
            base,
            protocols,
            nodes,
            seeds,
        } => execute_compare(base, protocols, nodes, seeds, &mut out, stdout)?,
        Invocation::Sweep {
            base,
            param,
            values,
            protocols,
            nodes,
            seeds,
        } => execute_sweep(base, param, values, protocols, nodes, seeds, &mut out, stdout)?,
    }
    Ok(out.files)
}

fn execute_run(
    config: &SimConfig,
    trace: bool,
    plans: bool,
    placements: bool,
    out: &mut Output<'_>,
    stdout: &mut dyn std::io::Write,
) -> anyhow::Result<()> {
    let stem = run_stem(config.protocol, config.node_count, config.seed);
    let mut sim = Simulation::new(config.clone())?;
    if placements {
        write_nodes_csv(sim.nodes(), &out.path(&format!("{stem}_nodes.csv"))?)?;
    }
    let mut plan_lines = String::new();
    let series = sim.run_observed(|o| {
        if plans {
            plan_lines.push_str(&serde_json::to_string(&o.plan).expect("plan serializes"));
            plan_lines.push('\n');
        }
    })?;
    let summary = metrics::summarize(&series, config.node_count, config.round_seconds);

    metrics::emit_csv(&series, &summary, &out.path(&format!("{stem}.csv"))?)?;
    let doc = SummaryDocument::new(config.protocol, config.seed, &summary);
    metrics::emit_summary_json(&doc, &out.path(&format!("{stem}.json"))?)?;
    if trace {
        metrics::emit_jsonl(&series, &out.path(&format!("{stem}.jsonl"))?)?;
    }
    if plans {
        out.text(&format!("{stem}_plans.jsonl"), &plan_lines)?;
    }

    writeln!(
        stdout,
        "{} N={} seed={}: FND={} HND={} AND={} throughput={} energy={:.6} J",
        config.protocol,
        config.node_count,
        config.seed,
        summary.fnd,
        summary.hnd,
        summary.and,
        summary.total_throughput,
        summary.total_energy_consumed
    )?;
    Ok(())
}

struct RunResult {
    protocol: Protocol,
    n: usize,
    seed: u64,
    series: Vec<RoundRecord>,
    summary: LifetimeSummary,
}

fn run_all(jobs: Vec<SimConfig>) -> anyhow::Result<Vec<RunResult>> {
    jobs.into_par_iter()
        .map(|config| {
            let (series, summary) = run_simulation(&config)?;
            Ok(RunResult {
                protocol: config.protocol,
                n: config.node_count,
                seed: config.seed,
                series,
                summary,
            })
        })
        .collect()
}

fn milestone_cell(m: &Milestone) -> String {
    m.to_string()
}

const SUMMARY_COLUMNS: &str = "fnd_s,hnd_s,and_s,throughput,energy_j";

fn summary_cells(s: &LifetimeSummary) -> String {
    format!(
        "{},{},{},{},{}",
        milestone_cell(&s.fnd),
        milestone_cell(&s.hnd),
        milestone_cell(&s.and),
        s.total_throughput,
        s.total_energy_consumed
    )
}

/// Mean of the reached values, or `None` when no run reached the milestone.
fn mean_reached(values: impl Iterator<Item = Option<f64>>) -> (Option<f64>, usize) {
    let reached: Vec<f64> = values.flatten().collect();
    if reached.is_empty() {
        (None, 0)
    } else {
        (Some(reached.iter().sum::<f64>() / reached.len() as f64), reached.len())
    }
}

fn fmt_mean(m: Option<f64>) -> String {
    m.map_or_else(|| "not reached".to_string(), |v| format!("{v:.2}"))
}

fn execute_compare(
    base: &SimConfig,
    protocols: &[Protocol],
    nodes: &[usize],
    seeds: &[u64],
    out: &mut Output<'_>,
    stdout: &mut dyn std::io::Write,
) -> anyhow::Result<()> {
    let mut jobs = Vec::new();
    for &protocol in protocols {
        for &n in nodes {
            for &seed in seeds {
                let mut c = base.clone();
                c.protocol = protocol;
                c.node_count = n;
                c.seed = seed;
                jobs.push(c);
            }
        }
    }
    let results = run_all(jobs)?;

    let mut runs_csv = format!("protocol,n,seed,{SUMMARY_COLUMNS}\n");
    for r in &results {
        metrics::emit_csv(
            &r.series,
            &r.summary,
            &out.path(&format!("runs/{}.csv", run_stem(r.protocol, r.n, r.seed)))?,
        )?;
        writeln!(
            runs_csv,
            "{},{},{},{}",
            r.protocol,
            r.n,
            r.seed,
            summary_cells(&r.summary)
        )?;
    }
    out.text("runs.csv", &runs_csv)?;

    let mut table =
        String::from("protocol,n,runs,fnd_mean_s,hnd_mean_s,and_mean_s,and_reached,throughput_mean,energy_mean_j\n");
    writeln!(
        stdout,
        "{:<8} {:>5} {:>10} {:>10} {:>10} {:>12}",
        "protocol", "N", "FND (s)", "HND (s)", "AND (s)", "throughput"
    )?;
    for &protocol in protocols {
        for &n in nodes {
            let group: Vec<&RunResult> = results.iter().filter(|r| r.protocol == protocol && r.n == n).collect();
            let (fnd, _) = mean_reached(group.iter().map(|r| r.summary.fnd.seconds()));
            let (hnd, _) = mean_reached(group.iter().map(|r| r.summary.hnd.seconds()));
            let (and, and_reached) = mean_reached(group.iter().map(|r| r.summary.and.seconds()));
            let thr = group.iter().map(|r| r.summary.total_throughput as f64).sum::<f64>() / group.len() as f64;
            let energy = group.iter().map(|r| r.summary.total_energy_consumed).sum::<f64>() / group.len() as f64;
            writeln!(
                table,
                "{protocol},{n},{},{},{},{},{and_reached},{thr:.2},{energy:.6}",
                group.len(),
                fmt_mean(fnd),
                fmt_mean(hnd),
                fmt_mean(and)
            )?;
            writeln!(
                stdout,
                "{:<8} {:>5} {:>10} {:>10} {:>10} {:>12.1}",
                protocol.as_str(),
                n,
                fmt_mean(fnd),
                fmt_mean(hnd),
                fmt_mean(and),
                thr
            )?;
        }
    }
    out.text("table.csv", &table)?;

    for metric in ChartMetric::ALL {
        let mut set = Vec::new();
        for &protocol in protocols {
            for &n in nodes {
                let runs: Vec<&[RoundRecord]> = results
                    .iter()
                    .filter(|r| r.protocol == protocol && r.n == n)
                    .map(|r| r.series.as_slice())
                    .collect();
                let label = format!("{} N={n}", protocol.as_str().to_uppercase());
                set.push(if runs.len() == 1 {
                    ChartSeries::from_records(label, runs[0], metric, base.round_seconds)
                } else {
                    ChartSeries::averaged(label, &runs, metric, base.round_seconds)
                });
            }
        }
        metrics::emit_chart(&set, metric, &out.path(&format!("{}.svg", metric.as_str()))?)?;
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn execute_sweep(
    base: &SimConfig,
    param: &str,
    values: &[String],
    protocols: &[Protocol],
    nodes: &[usize],
    seeds: &[u64],
    out: &mut Output<'_>,
    stdout: &mut dyn std::io::Write,
) -> anyhow::Result<()> {
    let mut jobs = Vec::new();
    let mut labels = Vec::new();
    for value in values {
        let swept = apply_param(base, param, value).map_err(|e| anyhow::anyhow!(e.to_string()))?;
        for &protocol in protocols {
            for &n in nodes {
                for &seed in seeds {
                    let mut c = swept.clone();
                    c.protocol = protocol;
                    c.node_count = n;
                    c.seed = seed;
                    jobs.push(c);
                    labels.push(value.clone());
                }
            }
        }
    }
    let results = run_all(jobs)?;
    let mut csv = format!("param,value,protocol,n,seed,{SUMMARY_COLUMNS}\n");
    for (value, r) in labels.iter().zip(&results) {
        writeln!(
            csv,
            "{param},{value},{},{},{},{}",
            r.protocol,
            r.n,
            r.seed,
            summary_cells(&r.summary)
        )?;
    }
    out.text("sweep.csv", &csv)?;
    writeln!(stdout, "{} runs over {param} written to sweep.csv", results.len())?;
    Ok(())
}

pub fn sha256_file(path: &Path) -> anyhow::Result<String> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Executes and records a manifest next to the outputs.
pub fn execute_with_manifest(
    inv: &Invocation,
    dir: &Path,
    stdout: &mut dyn std::io::Write,
) -> Result<RunManifest, CliError> {
    let files = execute(inv, dir, stdout)?;
    let files = files
        .into_iter()
        .map(|path| {
            let sha256 = sha256_file(&dir.join(&path))?;
            Ok(FileEntry { path, sha256 })
        })
        .collect::<anyhow::Result<Vec<_>>>()?;
    let manifest = RunManifest {
        tool: "wsn-sim".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        invocation: inv.clone(),
        seeds: inv.seeds(),
        out_dir: dir.to_path_buf(),
        files,
    };
    let path = dir.join(MANIFEST_FILE);
    let text = serde_json::to_string_pretty(&manifest).context("serializing manifest")?;
    std::fs::write(&path, text + "\n").with_context(|| format!("writing {}", path.display()))?;
    Ok(manifest)
}

/// Files whose regenerated hash differs from the manifest.
pub fn replay(manifest_path: &Path, dir: &Path, stdout: &mut dyn std::io::Write) -> Result<Vec<String>, CliError> {
    let text = std::fs::read_to_string(manifest_path)
        .map_err(|e| CliError::Usage(format!("cannot read manifest {}: {e}", manifest_path.display())))?;
    let manifest: RunManifest = serde_json::from_str(&text)
        .map_err(|e| CliError::Usage(format!("malformed manifest {}: {e}", manifest_path.display())))?;
    let mut sink = std::io::sink();
    let written = execute(&manifest.invocation, dir, &mut sink)?;
    let mut mismatched = Vec::new();
    for entry in &manifest.files {
        let ok = written.contains(&entry.path) && sha256_file(&dir.join(&entry.path))? == entry.sha256;
        if !ok {
            mismatched.push(entry.path.clone());
        }
    }
    writeln!(
        stdout,
        "replayed {} files into {}: {} mismatched",
        manifest.files.len(),
        dir.display(),
        mismatched.len()
    )
    .context("writing report")?;
    Ok(mismatched)
}

/// Parses `argv` and runs the selected command.
pub fn main_with_args<I, T>(argv: I, stdout: &mut dyn std::io::Write) -> Result<(), CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            write!(stdout, "{e}").ok();
            return Ok(());
        }
        Err(e) => return Err(CliError::Usage(e.to_string())),
    };
    match &cli.command {
        Command::Replay(args) => {
            let dir = args
                .out
                .clone()
                .unwrap_or_else(|| args.manifest.parent().unwrap_or_else(|| Path::new(".")).join("replay"));
            let mismatched = replay(&args.manifest, &dir, stdout)?;
            if mismatched.is_empty() {
                Ok(())
            } else {
                Err(CliError::Runtime(anyhow::anyhow!(
                    "replay differs in: {}",
                    mismatched.join(", ")
                )))
            }
        }
        command => {
            let (inv, dir) = resolve(command)?;
            let manifest = execute_with_manifest(&inv, &dir, stdout)?;
            writeln!(stdout, "wrote {} files to {}", manifest.files.len(), dir.display()).context("writing report")?;
            Ok(())
        }
    }
}
