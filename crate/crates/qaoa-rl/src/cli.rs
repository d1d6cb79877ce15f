//! Command-line surface: argument definitions, config-file merging and the
//! dispatcher behind the binary.

use std::collections::BTreeSet;
use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, CommandFactory, Parser, Subcommand};
use serde::Serialize;

use crate::commands::{self, Outcome};
use crate::error::{CliError, CliResult, EXIT_OK};
use crate::formats::read_json;
use crate::manifest::{self, RunManifest};
use crate::parallel::RayonExecutor;

pub const THREADS_ENV: &str = "QAOA_RL_THREADS";

#[derive(Parser, Debug, Clone)]
#[command(name = "qaoa-rl", version, about = "Reinforcement-learning-assisted QAOA on transverse-field Ising chains")]
pub struct Cli {
    /// Worker threads; 0 or unset uses every core.
    #[arg(long, global = true, env = THREADS_ENV)]
    pub threads: Option<usize>,
    /// JSON object supplying flags by name. The command line wins over the
    /// environment, which wins over this file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Manifest to append to; defaults to manifest.jsonl beside the first output.
    #[arg(long, global = true)]
    pub manifest: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug, Clone)]
pub enum Command {
    /// Write a chain instance.
    Instance(InstanceArgs),
    /// Train a policy with PPO.
    Train(TrainArgs),
    /// Evaluate a checkpoint on an instance.
    Test(TestArgs),
    /// Evaluate a checkpoint trained on another chain, typically a smaller one.
    Transfer(TransferArgs),
    /// Train and test over a grid of depths and seeds.
    Sweep(SweepArgs),
    /// Iteratively warm-started locally optimal schedules for P = 1..p_max.
    Baseline(BaselineArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Instance(_) => "instance",
            Command::Train(_) => "train",
            Command::Test(_) => "test",
            Command::Transfer(_) => "transfer",
            Command::Sweep(_) => "sweep",
            Command::Baseline(_) => "baseline",
        }
    }
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct InstanceArgs {
    /// Number of sites: even, at least 4.
    #[arg(long)]
    pub n: usize,
    /// Disorder seed; required unless --uniform.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Target transverse field, stored with the instance.
    #[arg(long, default_value_t = 0.0)]
    pub h: f64,
    /// All couplings equal to --j; no randomness involved.
    #[arg(long)]
    pub uniform: bool,
    #[arg(long, default_value_t = 1.0)]
    pub j: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct TrainArgs {
    #[arg(long)]
    pub instance: PathBuf,
    /// Circuit depth P.
    #[arg(long)]
    pub p: usize,
    #[arg(long, default_value_t = 1024)]
    pub epochs: usize,
    /// Episodes per epoch.
    #[arg(long, default_value_t = 100)]
    pub episodes: usize,
    /// Master seed for network init and episode sampling.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// auto, oracle, fermion or momentum.
    #[arg(long, default_value = "auto")]
    pub backend: String,
    /// raw (-E_P) or normalized (-eps).
    #[arg(long, default_value = "raw")]
    pub reward_mode: String,
    /// intensive (size independent) or bare.
    #[arg(long, default_value = "intensive")]
    pub obs_mode: String,
    /// Feed t/P to the networks as a third input.
    #[arg(long)]
    pub append_time: bool,
    /// Rewrite the checkpoint every this many epochs; 0 only at the end.
    #[arg(long, default_value_t = 128)]
    pub checkpoint_every: usize,
    #[arg(long)]
    pub out_ckpt: PathBuf,
    #[arg(long)]
    pub out_log: PathBuf,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct TestArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long)]
    pub instance: PathBuf,
    #[arg(long, default_value_t = 50)]
    pub runs: usize,
    /// Take the mean action instead of sampling.
    #[arg(long)]
    pub deterministic: bool,
    /// Refine every schedule with BFGS.
    #[arg(long)]
    pub localopt: bool,
    /// Seed for action sampling.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "auto")]
    pub backend: String,
    /// Result table. Schedules and traces go to `<stem>.runs/` beside it.
    #[arg(long)]
    pub out_csv: PathBuf,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct TransferArgs {
    /// Checkpoint trained on another chain; must use intensive observations.
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long)]
    pub instance: PathBuf,
    #[arg(long, default_value_t = 50)]
    pub runs: usize,
    #[arg(long)]
    pub deterministic: bool,
    #[arg(long)]
    pub localopt: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "auto")]
    pub backend: String,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct SweepArgs {
    #[arg(long)]
    pub instance: PathBuf,
    /// Comma-separated depths.
    #[arg(long, value_delimiter = ',', required = true)]
    pub p_list: Vec<usize>,
    /// Comma-separated master seeds.
    #[arg(long, value_delimiter = ',', default_value = "0")]
    pub seeds: Vec<u64>,
    #[arg(long)]
    pub localopt: bool,
    /// Test runs per trained policy.
    #[arg(long, default_value_t = 50)]
    pub runs: usize,
    #[arg(long, default_value_t = 1024)]
    pub epochs: usize,
    #[arg(long, default_value_t = 100)]
    pub episodes: usize,
    #[arg(long, default_value = "auto")]
    pub backend: String,
    #[arg(long, default_value = "raw")]
    pub reward_mode: String,
    #[arg(long, default_value = "intensive")]
    pub obs_mode: String,
    /// Seed for test-time action sampling.
    #[arg(long, default_value_t = 0)]
    pub eval_seed: u64,
    /// Table of mean and sample deviation of eps per (P, seed). Checkpoints
    /// go to `<stem>.ckpt/` beside it.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct BaselineArgs {
    #[arg(long)]
    pub instance: PathBuf,
    #[arg(long)]
    pub p_max: usize,
    #[arg(long, default_value = "auto")]
    pub backend: String,
    #[arg(long)]
    pub out: PathBuf,
}

/// Long flags the user typed, without the leading dashes.
fn typed_flags(argv: &[OsString]) -> BTreeSet<String> {
    argv.iter()
        .filter_map(|a| a.to_str())
        .take_while(|a| *a != "--")
        .filter_map(|a| a.strip_prefix("--"))
        .map(|a| a.split('=').next().unwrap_or(a).to_string())
        .collect()
}

fn config_path(argv: &[OsString]) -> Option<PathBuf> {
    let mut it = argv.iter().filter_map(|a| a.to_str());
    while let Some(a) = it.next() {
        if a == "--config" {
            return it.next().map(PathBuf::from);
        }
        if let Some(p) = a.strip_prefix("--config=") {
            return Some(PathBuf::from(p));
        }
    }
    None
}

/// Appends the flags a config file supplies and the command line does not.
pub fn merge_config(argv: Vec<OsString>) -> CliResult<Vec<OsString>> {
    let Some(path) = config_path(&argv) else { return Ok(argv) };
    let table: serde_json::Map<String, serde_json::Value> = read_json(&path)?;
    let root = Cli::command();
    let sub = argv
        .iter()
        .skip(1)
        .filter_map(|a| a.to_str())
        .find_map(|a| root.find_subcommand(a))
        .ok_or_else(|| CliError::Usage("a subcommand is required".into()))?;
    let typed = typed_flags(&argv);
    let mut out = argv.clone();
    for (key, value) in &table {
        let long = key.replace('_', "-");
        if long == "config" {
            return Err(CliError::format(&path, "a config file cannot name another config file"));
        }
        let arg = sub
            .get_arguments()
            .chain(root.get_arguments())
            .find(|a| a.get_long() == Some(long.as_str()))
            .ok_or_else(|| CliError::format(&path, format!("unknown flag `{key}` for `{}`", sub.get_name())))?;
        if typed.contains(&long) || (long == "threads" && std::env::var_os(THREADS_ENV).is_some()) {
            continue;
        }
        let takes_value = arg.get_action().takes_values();
        let text = match value {
            serde_json::Value::Null => continue,
            serde_json::Value::Bool(b) if !takes_value => {
                if *b {
                    out.push(format!("--{long}").into());
                }
                continue;
            }
            serde_json::Value::String(s) => s.clone(),
            serde_json::Value::Array(items) => items
                .iter()
                .map(|v| v.as_str().map_or_else(|| v.to_string(), str::to_string))
                .collect::<Vec<_>>()
                .join(","),
            other => other.to_string(),
        };
        if !takes_value {
            return Err(CliError::format(&path, format!("flag `{key}` takes true or false")));
        }
        out.push(format!("--{long}").into());
        out.push(text.into());
    }
    Ok(out)
}

/// Parses, runs and records one invocation; returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    let argv: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match merge_config(argv.clone()).map(|merged| Cli::try_parse_from(merged)) {
        Ok(Ok(cli)) => cli,
        Ok(Err(e)) if !e.use_stderr() => {
            let _ = e.print();
            return EXIT_OK;
        }
        Ok(Err(e)) => {
            let err = CliError::Usage(e.render().to_string().trim_end().to_string());
            eprintln!("{}", err.to_json_line());
            return err.exit_code();
        }
        Err(err) => {
            eprintln!("{}", err.to_json_line());
            return err.exit_code();
        }
    };
    match execute(&cli, &argv) {
        Ok(()) => EXIT_OK,
        Err(err) => {
            log::error!("{err}");
            eprintln!("{}", err.to_json_line());
            err.exit_code()
        }
    }
}

fn execute(cli: &Cli, argv: &[OsString]) -> CliResult<()> {
    let exec = RayonExecutor::new(cli.threads)?;
    let started = manifest::unix_now();
    let (config, outcome): (serde_json::Value, Outcome) = match &cli.command {
        Command::Instance(a) => (to_value(a), commands::cmd_instance(a)?),
        Command::Train(a) => (to_value(a), commands::cmd_train(&exec, a)?),
        Command::Test(a) => (to_value(a), commands::cmd_test(&exec, a)?),
        Command::Transfer(a) => (to_value(a), commands::cmd_transfer(&exec, a)?),
        Command::Sweep(a) => (to_value(a), commands::cmd_sweep(&exec, a)?),
        Command::Baseline(a) => (to_value(a), commands::cmd_baseline(&exec, a)?),
    };
    let entry = RunManifest {
        command: cli.command.name().to_string(),
        config,
        argv: argv.iter().map(|a| a.to_string_lossy().into_owned()).collect(),
        master_seed: outcome.master_seed,
        instances: outcome.instances.iter().map(|p| p.display().to_string()).collect(),
        outputs: outcome.outputs.iter().map(|p| p.display().to_string()).collect(),
        code_version: env!("CARGO_PKG_VERSION").to_string(),
        threads: exec.threads(),
        started,
        finished: manifest::unix_now(),
    };
    let path = match (&cli.manifest, outcome.outputs.first()) {
        (Some(p), _) => p.clone(),
        (None, Some(first)) => manifest::default_path(first),
        (None, None) => return Ok(()),
    };
    manifest::append(&path, &entry)
}

fn to_value<T: Serialize>(args: &T) -> serde_json::Value {
    serde_json::to_value(args).unwrap_or(serde_json::Value::Null)
}
