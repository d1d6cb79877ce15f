//! The work behind each subcommand. Every function returns the files it
//! wrote so the caller can record them in a manifest.

use std::path::{Path, PathBuf};

use qaoa_rl_core::backend::{Backend, Engine};
use qaoa_rl_core::chain::{make_disordered, make_uniform, qaoa_bound, schedule_to_s, ChainSpec};
use qaoa_rl_core::env::{ObsMode, RewardMode};
use qaoa_rl_core::exec::{Executor, Sequential};
use qaoa_rl_core::ppo::{evaluate, EvalRecord, PolicyCheckpoint, TrainConfig, Trainer};
use qaoa_rl_core::schedule_opt::{iterative_baseline, local_optimize, LoOptions, OptimizeReport};

use crate::cli::{BaselineArgs, InstanceArgs, SweepArgs, TestArgs, TrainArgs, TransferArgs};
use crate::error::{CliError, CliResult};
use crate::formats::{
    load_checkpoint, load_instance, save_checkpoint, save_instance, save_schedule, write_csv, write_trace,
    BaselineRow, CsvSink, OptimizeRow, ResultRow, SweepRow, TrainLogRow,
};

/// Epochs between progress lines in the log.
const PROGRESS_EVERY: usize = 64;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Outcome {
    pub outputs: Vec<PathBuf>,
    pub instances: Vec<PathBuf>,
    pub master_seed: Option<u64>,
}

/// `auto` or a backend name.
pub fn engine_for(spec: &ChainSpec, backend: &str) -> CliResult<Engine> {
    Ok(match backend {
        "auto" => Engine::auto(spec)?,
        name => Engine::new(spec, name.parse::<Backend>()?)?,
    })
}

/// `dir/stem.suffix` for an output path `dir/stem.ext`.
pub fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}.{suffix}"))
}

pub fn cmd_instance(a: &InstanceArgs) -> CliResult<Outcome> {
    let spec = match (a.uniform, a.seed) {
        (true, _) => make_uniform(a.n, a.j, a.h)?,
        (false, Some(seed)) => make_disordered(a.n, a.h, seed)?,
        (false, None) => return Err(CliError::Usage("a disordered instance needs --seed (or pass --uniform)".into())),
    };
    save_instance(&a.out, &spec)?;
    Ok(Outcome { outputs: vec![a.out.clone()], instances: vec![], master_seed: a.seed.filter(|_| !a.uniform) })
}

pub fn train_config(p: usize, seed: u64, epochs: usize, episodes: usize, reward: &str, obs: &str) -> CliResult<TrainConfig> {
    let cfg = TrainConfig {
        n_epochs: epochs,
        n_episodes_per_epoch: episodes,
        reward_mode: RewardMode::parse(reward)?,
        obs_mode: ObsMode::parse(obs)?,
        ..TrainConfig::new(p, seed)
    };
    cfg.validate()?;
    Ok(cfg)
}

/// Trains for `cfg.n_epochs`, streaming the log to `log_path` and rewriting
/// the checkpoint every `every` epochs.
pub fn train_to_files<X: Executor>(
    exec: &X,
    engine: &Engine,
    cfg: &TrainConfig,
    ckpt_path: &Path,
    log_path: &Path,
    every: usize,
) -> CliResult<PolicyCheckpoint> {
    let mut trainer = Trainer::new(engine, cfg.clone())?;
    let mut sink = CsvSink::create(log_path)?;
    for _ in 0..cfg.n_epochs {
        let log = trainer.run_epoch(exec)?;
        sink.push(&TrainLogRow::from(&log))?;
        let done = log.epoch + 1;
        if every > 0 && done % every == 0 && done < cfg.n_epochs {
            save_checkpoint(ckpt_path, &trainer.checkpoint())?;
        }
        if done % PROGRESS_EVERY == 0 {
            log::info!("epoch {done}/{}: mean eps {:.6}, kl {:.4}", cfg.n_epochs, log.mean_eps, log.kl);
        }
    }
    sink.finish()?;
    let ckpt = trainer.checkpoint();
    save_checkpoint(ckpt_path, &ckpt)?;
    Ok(ckpt)
}

pub fn cmd_train<X: Executor>(exec: &X, a: &TrainArgs) -> CliResult<Outcome> {
    let spec = load_instance(&a.instance)?;
    let engine = engine_for(&spec, &a.backend)?;
    let mut cfg = train_config(a.p, a.seed, a.epochs, a.episodes, &a.reward_mode, &a.obs_mode)?;
    cfg.append_time = a.append_time;
    train_to_files(exec, &engine, &cfg, &a.out_ckpt, &a.out_log, a.checkpoint_every)?;
    Ok(Outcome {
        outputs: vec![a.out_ckpt.clone(), a.out_log.clone()],
        instances: vec![a.instance.clone()],
        master_seed: Some(a.seed),
    })
}

/// One test run and its optional refinement.
#[derive(Debug, Clone)]
pub struct TestRun {
    pub record: EvalRecord,
    pub refined: Option<OptimizeReport>,
}

/// Evaluates a checkpoint and, with `localopt`, refines every schedule.
pub fn evaluate_runs<X: Executor>(
    exec: &X,
    ckpt: &PolicyCheckpoint,
    engine: &Engine,
    runs: usize,
    deterministic: bool,
    seed: u64,
    localopt: bool,
) -> CliResult<Vec<TestRun>> {
    if runs == 0 {
        return Err(CliError::Usage("--runs must be positive".into()));
    }
    let records = evaluate(exec, ckpt, engine, runs, deterministic, seed)?;
    let refined = if localopt {
        let opts = LoOptions::default();
        exec.try_map(runs, |i| local_optimize(&Sequential, engine, &records[i].schedule, &opts).map(Some))?
    } else {
        vec![None; runs]
    };
    Ok(records.into_iter().zip(refined).map(|(record, refined)| TestRun { record, refined }).collect())
}

/// Writes the result table plus per-run schedules, traces and LO reports.
fn write_runs(out_csv: &Path, spec: &ChainSpec, seed: u64, runs: &[TestRun]) -> CliResult<Vec<PathBuf>> {
    let dir = sibling(out_csv, "runs");
    let mut outputs = vec![out_csv.to_path_buf()];
    let mut rows = Vec::with_capacity(runs.len());
    for r in runs {
        let id = r.record.run;
        let raw = dir.join(format!("run_{id:04}.json"));
        let trace = dir.join(format!("run_{id:04}.trace.jsonl"));
        save_schedule(&raw, &r.record.schedule)?;
        write_trace(&trace, &r.record.trace)?;
        outputs.extend([raw.clone(), trace]);
        let schedule_path = match &r.refined {
            Some(rep) => {
                let path = dir.join(format!("run_{id:04}.refined.json"));
                save_schedule(&path, &rep.final_schedule)?;
                outputs.push(path.clone());
                path
            }
            None => raw,
        };
        rows.push(ResultRow {
            run_id: id,
            p: r.record.schedule.p(),
            n: spec.n_sites(),
            seed,
            eps: r.record.eps,
            eps_refined: r.refined.as_ref().map(|rep| rep.eps_final),
            e_p: r.record.e_p,
            reward: r.record.reward,
            schedule_path: schedule_path.display().to_string(),
        });
    }
    write_csv(out_csv, &rows)?;
    if runs.iter().any(|r| r.refined.is_some()) {
        let lo = sibling(out_csv, "lo.csv");
        let reports: Vec<OptimizeRow> = runs.iter().filter_map(|r| r.refined.as_ref()).map(OptimizeRow::from).collect();
        write_csv(&lo, &reports)?;
        outputs.push(lo);
    }
    Ok(outputs)
}

pub fn cmd_test<X: Executor>(exec: &X, a: &TestArgs) -> CliResult<Outcome> {
    let ckpt = load_checkpoint(&a.ckpt)?;
    let spec = load_instance(&a.instance)?;
    let engine = engine_for(&spec, &a.backend)?;
    let runs = evaluate_runs(exec, &ckpt, &engine, a.runs, a.deterministic, a.seed, a.localopt)?;
    Ok(Outcome {
        outputs: write_runs(&a.out_csv, &spec, a.seed, &runs)?,
        instances: vec![a.instance.clone(), a.ckpt.clone()],
        master_seed: Some(a.seed),
    })
}

/// Transfer needs observations that mean the same thing on every chain size.
pub fn check_transferable(ckpt: &PolicyCheckpoint) -> CliResult<()> {
    if ckpt.obs_mode != ObsMode::Intensive {
        return Err(qaoa_rl_core::Error::IncompatibleCheckpoint(format!(
            "transfer needs intensive observations; this checkpoint uses `{}`, whose values scale with the chain size",
            ckpt.obs_mode.name()
        ))
        .into());
    }
    Ok(())
}

pub fn cmd_transfer<X: Executor>(exec: &X, a: &TransferArgs) -> CliResult<Outcome> {
    let ckpt = load_checkpoint(&a.ckpt)?;
    check_transferable(&ckpt)?;
    let spec = load_instance(&a.instance)?;
    let engine = engine_for(&spec, &a.backend)?;
    if ckpt.meta.n_sites != spec.n_sites() {
        log::info!("transferring a policy trained on {} sites to {} sites", ckpt.meta.n_sites, spec.n_sites());
    }
    let runs = evaluate_runs(exec, &ckpt, &engine, a.runs, a.deterministic, a.seed, a.localopt)?;
    Ok(Outcome {
        outputs: write_runs(&a.out, &spec, a.seed, &runs)?,
        instances: vec![a.instance.clone(), a.ckpt.clone()],
        master_seed: Some(a.seed),
    })
}

/// Mean and sample standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

pub fn cmd_sweep<X: Executor>(exec: &X, a: &SweepArgs) -> CliResult<Outcome> {
    if a.p_list.is_empty() || a.seeds.is_empty() {
        return Err(CliError::Usage("--p-list and --seeds must not be empty".into()));
    }
    let spec = load_instance(&a.instance)?;
    let engine = engine_for(&spec, &a.backend)?;
    let ckpt_dir = sibling(&a.out, "ckpt");
    let mut outputs = vec![a.out.clone()];
    let mut sink = CsvSink::create(&a.out)?;
    for &p in &a.p_list {
        for &seed in &a.seeds {
            let cfg = train_config(p, seed, a.epochs, a.episodes, &a.reward_mode, &a.obs_mode)?;
            let ckpt_path = ckpt_dir.join(format!("p{p}_seed{seed}.json"));
            let log_path = ckpt_dir.join(format!("p{p}_seed{seed}.log.csv"));
            let ckpt = train_to_files(exec, &engine, &cfg, &ckpt_path, &log_path, 0)?;
            outputs.extend([ckpt_path, log_path]);
            let runs = evaluate_runs(exec, &ckpt, &engine, a.runs, false, a.eval_seed, a.localopt)?;
            let eps: Vec<f64> = runs.iter().map(|r| r.record.eps).collect();
            let refined: Vec<f64> = runs.iter().filter_map(|r| r.refined.as_ref().map(|x| x.eps_final)).collect();
            let (mean_eps, std_eps) = mean_std(&eps);
            let (mr, sr) = if refined.is_empty() { (None, None) } else { let (m, s) = mean_std(&refined); (Some(m), Some(s)) };
            sink.push(&SweepRow {
                p,
                seed,
                runs: a.runs,
                mean_eps,
                std_eps,
                mean_eps_refined: mr,
                std_eps_refined: sr,
                bound: qaoa_bound(p, spec.n_sites()),
            })?;
            log::info!("sweep P={p} seed={seed}: mean eps {mean_eps:.6}");
        }
    }
    sink.finish()?;
    Ok(Outcome { outputs, instances: vec![a.instance.clone()], master_seed: a.seeds.first().copied() })
}

pub fn baseline_rows<X: Executor>(exec: &X, engine: &Engine, p_max: usize) -> CliResult<Vec<BaselineRow>> {
    if p_max == 0 {
        return Err(CliError::Usage("--p-max must be positive".into()));
    }
    let n = engine.spec().n_sites();
    let mut rows = Vec::new();
    for step in iterative_baseline(exec, engine, p_max, &LoOptions::default())? {
        let s = schedule_to_s(&step.schedule)?;
        for (t, ((g, b), s)) in step.schedule.steps().zip(s).enumerate() {
            rows.push(BaselineRow { p: step.p, t: t + 1, gamma: g, beta: b, s, eps: step.eps, bound: qaoa_bound(step.p, n) });
        }
    }
    Ok(rows)
}

pub fn cmd_baseline<X: Executor>(exec: &X, a: &BaselineArgs) -> CliResult<Outcome> {
    let spec = load_instance(&a.instance)?;
    let engine = engine_for(&spec, &a.backend)?;
    write_csv(&a.out, &baseline_rows(exec, &engine, a.p_max)?)?;
    Ok(Outcome { outputs: vec![a.out.clone()], instances: vec![a.instance.clone()], master_seed: None })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn siblings() {
        assert_eq!(sibling(Path::new("out/res.csv"), "runs"), PathBuf::from("out/res.runs"));
        assert_eq!(sibling(Path::new("res.csv"), "lo.csv"), PathBuf::from("res.lo.csv"));
    }

    #[test]
    fn sample_deviation() {
        let (m, s) = mean_std(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((s - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(mean_std(&[2.0]), (2.0, 0.0));
    }

    #[test]
    fn oracle_guard() {
        let spec = make_uniform(128, 1.0, 0.0).unwrap();
        assert_eq!(engine_for(&spec, "oracle").unwrap_err().exit_code(), 2);
        assert_eq!(engine_for(&spec, "auto").unwrap().backend(), Backend::Momentum);
        assert!(engine_for(&make_uniform(8, 1.0, 0.0).unwrap(), "oracle").is_ok());
        assert!(engine_for(&spec, "gpu").is_err());
    }
}
