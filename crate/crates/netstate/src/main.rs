use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use netstate::canonical::{canonical_bytes, write_windows};
use netstate::config::{load_csv, load_pcap, ConfigError, RunConfig};
use netstate::experiments::{run_experiment1, run_experiment2, ExperimentError};
use netstate::logio::{parse_state_model, read_jsonl, state_model_json, write_jsonl, xes_bytes};
use netstate::pnml::{parse_pnml, pnml_bytes};
use netstate::report::{conformance_csv, merge_reports, sha256_hex, OutputDir};
use netstate::synth::{write_synth, SynthOptions};
use netstate_core::conformance::{mean_fitness, Aligner, CostScheme};
use netstate_core::discovery::{tree_to_petri, inductive_miner, DEFAULT_NOISE_THRESHOLD};
use netstate_core::log::variant_filter;
use netstate_core::packet::{timestamp_regressions, ClientSpec, PacketRecord};
use netstate_core::pipeline::Preprocessing;
use netstate_core::state::StateId;
use netstate_core::window::extract_windows;
use serde::Serialize;

#[derive(Parser)]
#[command(name = "netstate", version, about = "Behavioral state models of device traffic")]
struct Cli {
    /// JSON run configuration (experiments).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (0 = one per CPU).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Serialize)]
enum Command {
    /// pcap files (one per session) to canonical CSV.
    Ingest(IngestArgs),
    /// Canonical CSV to window statistics.
    Features(FeaturesArgs),
    /// Fit a state model, or apply one, and write window states.
    States(StatesArgs),
    /// One JSONL event log per state.
    Logs(LogsArgs),
    /// Mine a process tree and PNML net per event log.
    Discover(DiscoverArgs),
    /// Align an event log against a net.
    Check(CheckArgs),
    /// Cross-device similarity, separation and complexity grid.
    Exp1,
    /// Foreign-traffic classification grid.
    Exp2,
    /// Generate a synthetic cohort with experiment configs.
    Synth(SynthArgs),
    /// Rebuild grid tables from per-cell outputs.
    Report,
}

#[derive(Args, Serialize)]
struct IngestArgs {
    #[arg(required = true)]
    pcaps: Vec<PathBuf>,
    /// Client address or CIDR subnet.
    #[arg(long)]
    client: String,
    #[arg(long, default_value_t = 1)]
    first_session: u32,
    #[arg(long, default_value = "packets.csv")]
    output: PathBuf,
}

#[derive(Args, Serialize)]
struct FeaturesArgs {
    input: PathBuf,
    #[arg(long)]
    window_length: usize,
    #[arg(long, default_value = "windows.csv")]
    output: PathBuf,
}

#[derive(Args, Serialize)]
struct StatesArgs {
    input: PathBuf,
    /// Apply this model instead of fitting one.
    #[arg(long, conflicts_with_all = ["window_length", "k"])]
    model: Option<PathBuf>,
    #[arg(long, required_unless_present = "model")]
    window_length: Option<usize>,
    #[arg(long, required_unless_present = "model")]
    k: Option<usize>,
}

#[derive(Args, Serialize)]
struct LogsArgs {
    input: PathBuf,
    #[arg(long)]
    model: PathBuf,
    #[arg(long, default_value = "device")]
    device: String,
    /// Also write XES documents.
    #[arg(long)]
    xes: bool,
}

#[derive(Args, Serialize)]
struct DiscoverArgs {
    #[arg(required = true)]
    logs: Vec<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_NOISE_THRESHOLD)]
    noise_threshold: f64,
    #[arg(long, default_value_t = 1.0)]
    keep_fraction: f64,
}

#[derive(Args, Serialize)]
struct CheckArgs {
    #[arg(long)]
    log: PathBuf,
    #[arg(long)]
    net: PathBuf,
    #[arg(long, default_value = "conformance.csv")]
    output: PathBuf,
}

#[derive(Args, Serialize)]
struct SynthArgs {
    /// `two-games`, `one-game`, or a JSON cohort definition.
    #[arg(long, default_value = "two-games")]
    profiles: String,
    #[arg(long, default_value_t = 4)]
    sessions: usize,
    #[arg(long, default_value_t = 5000)]
    packets_per_session: usize,
    /// Also write one pcap per session.
    #[arg(long)]
    pcap: bool,
}

enum Failure {
    Validation(String),
    Runtime(String),
}

fn validation(e: impl std::fmt::Display) -> Failure {
    Failure::Validation(e.to_string())
}

fn runtime(e: impl std::fmt::Display) -> Failure {
    Failure::Runtime(e.to_string())
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::Io { .. } => runtime(e),
            _ => validation(e),
        }
    }
}

impl From<ExperimentError> for Failure {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::Config(c) => c.into(),
            other => runtime(other),
        }
    }
}

fn warn(msg: impl std::fmt::Display) {
    eprintln!("warning: {msg}");
}

fn read_records(path: &Path) -> Result<Vec<PacketRecord>, Failure> {
    if !path.exists() {
        return Err(validation(format!("input missing: {}", path.display())));
    }
    let records = load_csv(path)?;
    let regressions = timestamp_regressions(&records);
    if regressions > 0 {
        warn(format!("{}: {regressions} timestamp regressions within sessions", path.display()));
    }
    Ok(records)
}

fn read_text(path: &Path) -> Result<String, Failure> {
    if !path.exists() {
        return Err(validation(format!("input missing: {}", path.display())));
    }
    fs::read_to_string(path).map_err(|e| runtime(format!("{}: {e}", path.display())))
}

fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "log".into())
}

/// `state<n>` file stems carry their state id.
fn state_of_stem(stem: &str) -> StateId {
    stem.strip_prefix("state").and_then(|n| n.parse().ok()).filter(|n| *n >= 1).map(StateId).unwrap_or(StateId(1))
}

fn run_config(cli: &Cli) -> Result<RunConfig, Failure> {
    let path = cli.config.as_ref().ok_or_else(|| validation("this command needs --config"))?;
    let mut cfg = RunConfig::load(path)?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(w) = cli.workers {
        cfg.workers = w;
    }
    if let Some(o) = &cli.out {
        cfg.out = o.clone();
    }
    Ok(cfg)
}

/// Digest of the config with the output location and worker count removed,
/// since neither changes any result.
fn config_digest(cfg: &RunConfig) -> String {
    let mut c = cfg.clone();
    c.out = PathBuf::new();
    c.workers = 0;
    c.digest()
}

fn run(cli: Cli) -> Result<(), Failure> {
    let out_root = cli.out.clone().unwrap_or_else(|| PathBuf::from("out"));
    let mut args = serde_json::to_value(&cli.command).expect("arguments serialize");
    if let Some(s) = cli.seed {
        args["seed"] = s.into();
    }
    let out = OutputDir::new(&out_root, sha256_hex(args.to_string().as_bytes()));
    let seed = cli.seed.unwrap_or(0);
    match &cli.command {
        Command::Ingest(a) => {
            let client: ClientSpec = a.client.parse().map_err(validation)?;
            if a.first_session == 0 {
                return Err(validation("--first-session must be at least 1"));
            }
            let mut records = Vec::new();
            for (i, p) in a.pcaps.iter().enumerate() {
                if !p.exists() {
                    return Err(validation(format!("input missing: {}", p.display())));
                }
                let (r, skipped) = load_pcap(p, &client, a.first_session + i as u32)?;
                if skipped > 0 {
                    warn(format!("{}: skipped {skipped} non-IPv4/TCP frames", p.display()));
                }
                records.extend(r);
            }
            let regressions = timestamp_regressions(&records);
            if regressions > 0 {
                warn(format!("{regressions} timestamp regressions within sessions"));
            }
            let path = out.write(&a.output, &canonical_bytes(&records)).map_err(runtime)?;
            println!("{} records -> {}", records.len(), path.display());
        }
        Command::Features(a) => {
            let records = read_records(&a.input)?;
            let cfg = netstate_core::window::WindowConfig::new(a.window_length).map_err(validation)?;
            let windows = extract_windows(&records, cfg);
            let mut buf = Vec::new();
            write_windows(&windows, &mut buf).map_err(runtime)?;
            let path = out.write(&a.output, &buf).map_err(runtime)?;
            println!("{} windows -> {}", windows.len(), path.display());
        }
        Command::States(a) => {
            let records = read_records(&a.input)?;
            let pre = match &a.model {
                Some(m) => parse_state_model(&read_text(m)?).map_err(validation)?,
                None => {
                    let (l, k) = (a.window_length.expect("clap"), a.k.expect("clap"));
                    let pre = Preprocessing::fit(&records, l, k, seed).map_err(runtime)?;
                    out.write("state_model.json", state_model_json(&pre).as_bytes()).map_err(runtime)?;
                    pre
                }
            };
            let (windows, states) = pre.assign(&records).map_err(runtime)?;
            let mut text = String::from("window_index,session_number,first_packet,state\n");
            for (w, s) in windows.iter().zip(&states) {
                text.push_str(&format!("{},{},{},{s}\n", w.window_index, w.session_number, w.first_packet));
            }
            let path = out.write("states.csv", text.as_bytes()).map_err(runtime)?;
            println!("{} windows -> {}", windows.len(), path.display());
        }
        Command::Logs(a) => {
            let records = read_records(&a.input)?;
            let pre = parse_state_model(&read_text(&a.model)?).map_err(validation)?;
            let logs = pre.state_logs(&a.device, &records).map_err(runtime)?;
            for (s, log) in &logs {
                let mut buf = Vec::new();
                write_jsonl(log, &mut buf).map_err(runtime)?;
                out.write(format!("state{s}.jsonl"), &buf).map_err(runtime)?;
                if a.xes {
                    out.write(format!("state{s}.xes"), &xes_bytes(log)).map_err(runtime)?;
                }
                if log.is_empty() {
                    warn(format!("state {s} has an empty event log"));
                }
            }
            println!("{} state logs -> {}", logs.len(), out.root().display());
        }
        Command::Discover(a) => {
            if !(0.0..=1.0).contains(&a.noise_threshold) || !(a.keep_fraction > 0.0 && a.keep_fraction <= 1.0) {
                return Err(validation("noise threshold must lie in [0, 1] and keep fraction in (0, 1]"));
            }
            for p in &a.logs {
                let name = stem(p);
                let text = read_text(p)?;
                let log = read_jsonl(state_of_stem(&name), BufReader::new(text.as_bytes())).map_err(validation)?;
                if log.is_empty() {
                    warn(format!("{}: empty log skipped", p.display()));
                    continue;
                }
                let log = if a.keep_fraction < 1.0 { variant_filter(&log, a.keep_fraction).map_err(runtime)? } else { log };
                let tree = inductive_miner(&log, a.noise_threshold);
                let net = tree_to_petri(&tree);
                out.write(format!("{name}.pnml"), &pnml_bytes(&net)).map_err(runtime)?;
                out.write(format!("{name}.tree.txt"), format!("{tree}\n").as_bytes()).map_err(runtime)?;
                println!("{name}: {tree}");
            }
        }
        Command::Check(a) => {
            let name = stem(&a.log);
            let log = read_jsonl(state_of_stem(&name), BufReader::new(read_text(&a.log)?.as_bytes())).map_err(validation)?;
            let net = parse_pnml(&read_text(&a.net)?).map_err(validation)?;
            let aligner = Aligner::new(&net, CostScheme::default()).map_err(validation)?;
            let variants = aligner.log_variants(&log).map_err(runtime)?;
            let path = out.write(&a.output, &conformance_csv(&variants)).map_err(runtime)?;
            println!("fitness {} over {} traces -> {}", mean_fitness(&variants), log.len(), path.display());
        }
        Command::Exp1 => {
            let cfg = run_config(&cli)?;
            let out = OutputDir::new(&cfg.out, config_digest(&cfg));
            let o = run_experiment1(&cfg, &out)?;
            o.warnings.iter().for_each(warn);
            println!("{} cells -> {}", o.cells.len(), out.path(netstate::report::HEATMAP_FILE).display());
        }
        Command::Exp2 => {
            let cfg = run_config(&cli)?;
            let out = OutputDir::new(&cfg.out, config_digest(&cfg));
            let o = run_experiment2(&cfg, &out)?;
            o.warnings.iter().for_each(warn);
            println!("{} cells -> {}", o.cells.len(), out.path(netstate::report::CLASSIFICATION_FILE).display());
        }
        Command::Synth(a) => {
            let opts = SynthOptions {
                sessions: a.sessions,
                packets_per_session: a.packets_per_session,
                seed,
                pcap: a.pcap,
            };
            let groups = netstate::synth::cohort_groups(&a.profiles).map_err(validation)?;
            let n = write_synth(&groups, &opts, &out).map_err(|e| match e {
                netstate::synth::SynthCliError::Spec(_) => validation(e),
                other => runtime(other),
            })?;
            println!("{n} devices -> {}", out.root().display());
        }
        Command::Report => {
            let cfg_out = match &cli.config {
                Some(_) => run_config(&cli)?.out,
                None => out_root.clone(),
            };
            let digest = match &cli.config {
                Some(_) => config_digest(&run_config(&cli)?),
                None => sha256_hex(b"report"),
            };
            let out = OutputDir::new(cfg_out, digest);
            let m = merge_reports(&out).map_err(runtime)?;
            if m.exp1_cells == 0 && m.exp2_cells == 0 {
                warn(format!("no per-cell summaries under {}", out.root().display()));
            }
            println!("{} + {} cells merged", m.exp1_cells, m.exp2_cells);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
    }
}
