//! On-disk formats: JSON for structured artifacts, CSV for tables, JSON lines
//! for episode traces.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use qaoa_rl_core::chain::{ChainSpec, Schedule};
use qaoa_rl_core::env::{ObsMode, RewardMode, TraceStep, ACTION_MAX};
use qaoa_rl_core::neural::{GaussianPolicy, Mlp, ValueNet, ACTION_DIM, LOG_STD_MAX, LOG_STD_MIN};
use qaoa_rl_core::ppo::{CheckpointMeta, EpochLog, PolicyCheckpoint};
use qaoa_rl_core::schedule_opt::OptimizeReport;

use crate::error::{CliError, CliResult};

pub fn read_json<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::format(path, e))
}

/// Pretty-printed, newline-terminated. Parent directories are created.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::format(path, e))?;
    text.push('\n');
    ensure_parent(path)?;
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn ensure_parent(path: &Path) -> CliResult<()> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e)),
        _ => Ok(()),
    }
}

// ---- instances -------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceFile {
    pub n: usize,
    pub h: f64,
    pub seed: Option<u64>,
    pub couplings: Vec<f64>,
}

impl InstanceFile {
    pub fn from_spec(spec: &ChainSpec) -> Self {
        Self { n: spec.n_sites(), h: spec.h_target(), seed: spec.seed(), couplings: spec.couplings().to_vec() }
    }

    pub fn to_spec(&self) -> qaoa_rl_core::Result<ChainSpec> {
        if self.couplings.len() != self.n {
            return Err(qaoa_rl_core::Error::InvalidChain(format!(
                "n = {} but {} couplings given",
                self.n,
                self.couplings.len()
            )));
        }
        ChainSpec::new(self.couplings.clone(), self.h, self.seed)
    }
}

pub fn save_instance(path: &Path, spec: &ChainSpec) -> CliResult<()> {
    write_json(path, &InstanceFile::from_spec(spec))
}

pub fn load_instance(path: &Path) -> CliResult<ChainSpec> {
    let file: InstanceFile = read_json(path)?;
    file.to_spec().map_err(|e| CliError::format(path, e))
}

// ---- schedules -------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleFile {
    pub p: usize,
    pub gammas: Vec<f64>,
    pub betas: Vec<f64>,
}

impl ScheduleFile {
    pub fn from_schedule(s: &Schedule) -> Self {
        Self { p: s.p(), gammas: s.gammas().to_vec(), betas: s.betas().to_vec() }
    }

    pub fn to_schedule(&self) -> qaoa_rl_core::Result<Schedule> {
        if self.gammas.len() != self.p {
            return Err(qaoa_rl_core::Error::DimensionMismatch { expected: self.p, got: self.gammas.len() });
        }
        Schedule::new(self.gammas.clone(), self.betas.clone())
    }
}

pub fn save_schedule(path: &Path, s: &Schedule) -> CliResult<()> {
    write_json(path, &ScheduleFile::from_schedule(s))
}

pub fn load_schedule(path: &Path) -> CliResult<Schedule> {
    let file: ScheduleFile = read_json(path)?;
    file.to_schedule().map_err(|e| CliError::format(path, e))
}

// ---- checkpoints -----------------------------------------------------------

/// One dense layer: `weight[out][in]` and `bias[out]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerFile {
    pub weight: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointMetaFile {
    pub p_steps: usize,
    pub reward_mode: String,
    pub append_time: bool,
    pub activation: String,
    pub n_sites: usize,
    pub master_seed: u64,
    pub epochs: usize,
    pub episodes_per_epoch: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointFile {
    pub arch: Vec<usize>,
    pub weights: Vec<LayerFile>,
    pub log_std: Vec<f64>,
    pub value_arch: Vec<usize>,
    pub value_weights: Vec<LayerFile>,
    pub obs_mode: String,
    pub action_bounds: [f64; 2],
    pub meta: CheckpointMetaFile,
}

const ACTIVATION: &str = "relu";

fn layers_of(net: &Mlp) -> Vec<LayerFile> {
    net.layers()
        .into_iter()
        .zip(net.sizes().windows(2))
        .map(|((w, b), dims)| LayerFile { weight: w.chunks(dims[0]).map(<[f64]>::to_vec).collect(), bias: b.to_vec() })
        .collect()
}

fn net_from(arch: &[usize], layers: &[LayerFile], what: &str) -> Result<Mlp, String> {
    if arch.len() < 2 || layers.len() != arch.len() - 1 {
        return Err(format!("{what}: {} layers for architecture {arch:?}", layers.len()));
    }
    let mut params = Vec::new();
    for (l, (layer, dims)) in layers.iter().zip(arch.windows(2)).enumerate() {
        let (n_in, n_out) = (dims[0], dims[1]);
        if layer.weight.len() != n_out || layer.weight.iter().any(|row| row.len() != n_in) || layer.bias.len() != n_out {
            return Err(format!("{what}: layer {l} does not have shape {n_out}x{n_in}"));
        }
        params.extend(layer.weight.iter().flatten());
        params.extend(&layer.bias);
    }
    Mlp::from_params(arch, params).map_err(|e| format!("{what}: {e}"))
}

impl CheckpointFile {
    pub fn from_checkpoint(ck: &PolicyCheckpoint) -> Self {
        Self {
            arch: ck.policy.mean_net.sizes().to_vec(),
            weights: layers_of(&ck.policy.mean_net),
            log_std: ck.policy.log_std.to_vec(),
            value_arch: ck.value.net.sizes().to_vec(),
            value_weights: layers_of(&ck.value.net),
            obs_mode: ck.obs_mode.name().to_string(),
            action_bounds: ck.action_bounds,
            meta: CheckpointMetaFile {
                p_steps: ck.p_steps,
                reward_mode: ck.reward_mode.name().to_string(),
                append_time: ck.append_time,
                activation: ACTIVATION.to_string(),
                n_sites: ck.meta.n_sites,
                master_seed: ck.meta.master_seed,
                epochs: ck.meta.epochs,
                episodes_per_epoch: ck.meta.episodes_per_epoch,
            },
        }
    }

    pub fn to_checkpoint(&self) -> Result<PolicyCheckpoint, String> {
        let obs_mode = ObsMode::parse(&self.obs_mode).map_err(|e| e.to_string())?;
        let reward_mode = RewardMode::parse(&self.meta.reward_mode).map_err(|e| e.to_string())?;
        if self.meta.activation != ACTIVATION {
            return Err(format!("unsupported activation `{}`", self.meta.activation));
        }
        let mean_net = net_from(&self.arch, &self.weights, "policy")?;
        let value_net = net_from(&self.value_arch, &self.value_weights, "value")?;
        if mean_net.output_dim() != ACTION_DIM || value_net.output_dim() != 1 {
            return Err("policy must output 2 numbers and value 1".into());
        }
        let obs_dim = 2 + usize::from(self.meta.append_time);
        if mean_net.input_dim() != obs_dim || value_net.input_dim() != obs_dim {
            return Err(format!("networks must read {obs_dim} inputs"));
        }
        let log_std: [f64; ACTION_DIM] =
            self.log_std.as_slice().try_into().map_err(|_| format!("log_std needs {ACTION_DIM} entries"))?;
        if log_std.iter().any(|s| !(LOG_STD_MIN..=LOG_STD_MAX).contains(s)) {
            return Err(format!("log_std outside [{LOG_STD_MIN}, {LOG_STD_MAX}]"));
        }
        if self.action_bounds[0] != 0.0 || (self.action_bounds[1] - ACTION_MAX).abs() > 1e-6 {
            return Err(format!("action bounds must be [0, {ACTION_MAX}]"));
        }
        if self.meta.p_steps == 0 {
            return Err("p_steps must be positive".into());
        }
        Ok(PolicyCheckpoint {
            policy: GaussianPolicy { mean_net, log_std },
            value: ValueNet { net: value_net },
            obs_mode,
            reward_mode,
            append_time: self.meta.append_time,
            p_steps: self.meta.p_steps,
            action_bounds: self.action_bounds,
            meta: CheckpointMeta {
                n_sites: self.meta.n_sites,
                master_seed: self.meta.master_seed,
                epochs: self.meta.epochs,
                episodes_per_epoch: self.meta.episodes_per_epoch,
            },
        })
    }
}

pub fn save_checkpoint(path: &Path, ck: &PolicyCheckpoint) -> CliResult<()> {
    write_json(path, &CheckpointFile::from_checkpoint(ck))
}

pub fn load_checkpoint(path: &Path) -> CliResult<PolicyCheckpoint> {
    let file: CheckpointFile = read_json(path)?;
    file.to_checkpoint().map_err(|e| CliError::format(path, e))
}

// ---- tables ----------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLogRow {
    pub epoch: usize,
    pub mean_reward: f64,
    pub mean_eps: f64,
    pub kl: f64,
    pub clip_frac: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
}

impl From<&EpochLog> for TrainLogRow {
    fn from(l: &EpochLog) -> Self {
        Self {
            epoch: l.epoch,
            mean_reward: l.mean_reward,
            mean_eps: l.mean_eps,
            kl: l.kl,
            clip_frac: l.clip_frac,
            policy_loss: l.policy_loss,
            value_loss: l.value_loss,
        }
    }
}

/// One evaluated episode, optionally refined.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub run_id: usize,
    pub p: usize,
    pub n: usize,
    pub seed: u64,
    pub eps: f64,
    pub eps_refined: Option<f64>,
    pub e_p: f64,
    pub reward: f64,
    pub schedule_path: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizeRow {
    pub p: usize,
    pub eps_init: f64,
    pub eps_final: f64,
    pub iters: usize,
    pub gnorm: f64,
    pub converged: bool,
}

impl From<&OptimizeReport> for OptimizeRow {
    fn from(r: &OptimizeReport) -> Self {
        Self {
            p: r.initial.p(),
            eps_init: r.eps_initial,
            eps_final: r.eps_final,
            iters: r.iterations,
            gnorm: r.gnorm,
            converged: r.converged,
        }
    }
}

/// Mean and sample deviation of ε for one (P, seed) cell of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub p: usize,
    pub seed: u64,
    pub runs: usize,
    pub mean_eps: f64,
    pub std_eps: f64,
    pub mean_eps_refined: Option<f64>,
    pub std_eps_refined: Option<f64>,
    pub bound: f64,
}

/// One step of an iterative baseline schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineRow {
    pub p: usize,
    pub t: usize,
    pub gamma: f64,
    pub beta: f64,
    pub s: f64,
    pub eps: f64,
    pub bound: f64,
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> CliResult<()> {
    let mut w = CsvSink::create(path)?;
    for r in rows {
        w.push(r)?;
    }
    w.finish()
}

pub fn read_csv<T: DeserializeOwned>(path: &Path) -> CliResult<Vec<T>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| CliError::format(path, e))?;
    r.deserialize().collect::<Result<Vec<T>, _>>().map_err(|e| CliError::format(path, e))
}

/// A CSV file written row by row and flushed after each row, so an
/// interrupted run leaves a readable prefix behind.
pub struct CsvSink {
    path: PathBuf,
    writer: csv::Writer<File>,
}

impl CsvSink {
    pub fn create(path: &Path) -> CliResult<Self> {
        ensure_parent(path)?;
        let writer = csv::Writer::from_path(path).map_err(|e| CliError::format(path, e))?;
        Ok(Self { path: path.to_path_buf(), writer })
    }

    pub fn push<T: Serialize>(&mut self, row: &T) -> CliResult<()> {
        self.writer.serialize(row).map_err(|e| CliError::format(&self.path, e))?;
        self.writer.flush().map_err(|e| CliError::io(&self.path, e))
    }

    pub fn finish(mut self) -> CliResult<()> {
        self.writer.flush().map_err(|e| CliError::io(&self.path, e))
    }
}

// ---- traces ----------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceLine {
    pub t: usize,
    pub gamma: f64,
    pub beta: f64,
    pub obs: Vec<f64>,
    pub reward: f64,
}

impl From<&TraceStep> for TraceLine {
    fn from(s: &TraceStep) -> Self {
        Self { t: s.t, gamma: s.gamma, beta: s.beta, obs: s.obs.to_vec(), reward: s.reward }
    }
}

pub fn write_trace(path: &Path, steps: &[TraceStep]) -> CliResult<()> {
    ensure_parent(path)?;
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut w = BufWriter::new(file);
    for s in steps {
        let line = serde_json::to_string(&TraceLine::from(s)).map_err(|e| CliError::format(path, e))?;
        writeln!(w, "{line}").map_err(|e| CliError::io(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn read_trace(path: &Path) -> CliResult<Vec<TraceLine>> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    text.lines().map(|l| serde_json::from_str(l).map_err(|e| CliError::format(path, e))).collect()
}
