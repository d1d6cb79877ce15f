//! Proximal policy optimization over QAOA episodes: frozen-policy rollouts,
//! GAE advantages, clipped-surrogate policy steps and value regression.

use alloc::vec;
use alloc::vec::Vec;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::backend::{Backend, Engine};
use crate::chain::{residual_energy_density, schedule_to_s, Schedule};
use crate::env::{Env, EpisodeConfig, ObsMode, RewardMode, TraceStep, ACTION_MAX};
use crate::error::{Error, Result};
use crate::exec::Executor;
use crate::neural::{Adam, GaussianPolicy, Tape, ValueNet, ACTION_DIM};

/// Floor on the advantage standard deviation used for normalization.
pub const ADV_STD_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub n_epochs: usize,
    pub n_episodes_per_epoch: usize,
    pub p_steps: usize,
    pub discount: f64,
    pub gae_lambda: f64,
    pub clip_ratio: f64,
    pub policy_lr: f64,
    pub value_lr: f64,
    pub policy_iters: usize,
    pub value_iters: usize,
    pub kl_stop: f64,
    pub master_seed: u64,
    pub reward_mode: RewardMode,
    pub obs_mode: ObsMode,
    pub append_time: bool,
}

impl TrainConfig {
    pub fn new(p_steps: usize, master_seed: u64) -> Self {
        Self {
            n_epochs: 1024,
            n_episodes_per_epoch: 100,
            p_steps,
            discount: 1.0,
            gae_lambda: 0.97,
            clip_ratio: 0.2,
            policy_lr: 3e-4,
            value_lr: 1e-3,
            policy_iters: 80,
            value_iters: 80,
            kl_stop: 0.015,
            master_seed,
            reward_mode: RewardMode::Raw,
            obs_mode: ObsMode::Intensive,
            append_time: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidConfig(alloc::format!("{what}")));
        if self.n_epochs == 0 || self.n_episodes_per_epoch == 0 || self.p_steps == 0 {
            return bad("epochs, episodes and steps must be positive");
        }
        if !(self.clip_ratio > 0.0 && self.clip_ratio < 1.0) {
            return bad("clip ratio must lie in (0, 1)");
        }
        if !(self.discount > 0.0 && self.discount <= 1.0) {
            return bad("discount must lie in (0, 1]");
        }
        if !(self.gae_lambda > 0.0 && self.gae_lambda <= 1.0) {
            return bad("gae lambda must lie in (0, 1]");
        }
        // Zero learning rates are allowed: they freeze a network.
        if !(self.policy_lr >= 0.0 && self.value_lr >= 0.0 && self.kl_stop > 0.0) {
            return bad("learning rates must be non-negative and kl_stop positive");
        }
        if !(self.policy_lr.is_finite() && self.value_lr.is_finite() && self.kl_stop.is_finite()) {
            return bad("non-finite hyperparameter");
        }
        Ok(())
    }

    pub fn episode_config(&self, backend: Backend) -> EpisodeConfig {
        EpisodeConfig {
            p_steps: self.p_steps,
            backend,
            reward_mode: self.reward_mode,
            obs_mode: self.obs_mode,
            append_time: self.append_time,
        }
    }
}

/// Independent random stream for one episode.
pub fn episode_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// How one collected episode ended.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeSummary {
    /// Angles actually applied (after clipping).
    pub schedule: Schedule,
    pub e_p: f64,
    pub eps: f64,
    pub reward: f64,
    pub clip_events: usize,
}

/// One epoch of experience; episode `e` owns steps `e * P .. (e + 1) * P`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RolloutBuffer {
    pub obs_dim: usize,
    pub p_steps: usize,
    pub obs: Vec<f64>,
    /// Raw policy samples, before clipping.
    pub actions: Vec<[f64; ACTION_DIM]>,
    pub logp: Vec<f64>,
    pub values: Vec<f64>,
    pub rewards: Vec<f64>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
    pub episodes: Vec<EpisodeSummary>,
}

impl RolloutBuffer {
    pub fn len(&self) -> usize {
        self.logp.len()
    }

    pub fn is_empty(&self) -> bool {
        self.logp.is_empty()
    }

    pub fn obs_at(&self, i: usize) -> &[f64] {
        &self.obs[i * self.obs_dim..(i + 1) * self.obs_dim]
    }

    fn append(&mut self, ep: EpisodeRollout) {
        self.obs.extend(ep.obs);
        self.actions.extend(ep.actions);
        self.logp.extend(ep.logp);
        self.values.extend(ep.values);
        self.rewards.extend(ep.rewards);
        self.episodes.push(ep.summary);
    }
}

struct EpisodeRollout {
    obs: Vec<f64>,
    actions: Vec<[f64; ACTION_DIM]>,
    logp: Vec<f64>,
    values: Vec<f64>,
    rewards: Vec<f64>,
    summary: EpisodeSummary,
}

fn run_episode(
    engine: &Engine,
    cfg: EpisodeConfig,
    policy: &GaussianPolicy,
    value: &ValueNet,
    rng: &mut ChaCha8Rng,
) -> Result<EpisodeRollout> {
    let p = cfg.p_steps;
    let mut env = Env::new(engine, cfg)?;
    let mut obs = env.reset()?.to_vec();
    let mut ep = EpisodeRollout {
        obs: Vec::with_capacity(p * obs.len()),
        actions: Vec::with_capacity(p),
        logp: Vec::with_capacity(p),
        values: Vec::with_capacity(p),
        rewards: Vec::with_capacity(p),
        summary: EpisodeSummary { schedule: Schedule::zeros(p)?, e_p: 0.0, eps: 0.0, reward: 0.0, clip_events: 0 },
    };
    let (mut gammas, mut betas) = (Vec::with_capacity(p), Vec::with_capacity(p));
    let mut e_p = None;
    while !env.is_done() {
        let (raw, logp) = policy.sample(&obs, rng);
        ep.obs.extend_from_slice(&obs);
        ep.actions.push(raw);
        ep.logp.push(logp);
        ep.values.push(value.predict(&obs));
        let (action, out) = env.step_raw(raw)?;
        gammas.push(action.gamma);
        betas.push(action.beta);
        ep.rewards.push(out.reward);
        e_p = out.final_energy;
        obs = out.obs.to_vec();
    }
    let e_p = e_p.expect("finished episodes report E_P");
    ep.summary = EpisodeSummary {
        schedule: Schedule::new(gammas, betas)?,
        e_p,
        eps: residual_energy_density(e_p, env.extremes())?,
        reward: ep.rewards.iter().sum(),
        clip_events: env.clip_events(),
    };
    Ok(ep)
}

/// Runs one epoch of episodes under frozen networks. Episode `k` of epoch
/// `e` draws from stream `e * n_episodes + k` of the master seed.
pub fn collect_epoch<X: Executor>(
    exec: &X,
    engine: &Engine,
    policy: &GaussianPolicy,
    value: &ValueNet,
    cfg: &TrainConfig,
    epoch: usize,
) -> Result<RolloutBuffer> {
    let ep_cfg = cfg.episode_config(engine.backend());
    if policy.obs_dim() != ep_cfg.obs_dim() {
        return Err(Error::DimensionMismatch { expected: ep_cfg.obs_dim(), got: policy.obs_dim() });
    }
    let n = cfg.n_episodes_per_epoch;
    let episodes = exec.try_map(n, |k| {
        let mut rng = episode_rng(cfg.master_seed, (epoch * n + k) as u64);
        run_episode(engine, ep_cfg, policy, value, &mut rng)
    })?;
    let mut buf = RolloutBuffer { obs_dim: ep_cfg.obs_dim(), p_steps: cfg.p_steps, ..Default::default() };
    for ep in episodes {
        buf.append(ep);
    }
    Ok(buf)
}

/// GAE advantages of one episode with the terminal value fixed at zero.
pub fn episode_advantages(rewards: &[f64], values: &[f64], discount: f64, lambda: f64) -> Vec<f64> {
    let mut adv = vec![0.0; rewards.len()];
    let mut acc = 0.0;
    for t in (0..rewards.len()).rev() {
        let next = values.get(t + 1).copied().unwrap_or(0.0);
        let delta = rewards[t] + discount * next - values[t];
        acc = delta + discount * lambda * acc;
        adv[t] = acc;
    }
    adv
}

/// Fills advantages (normalized over the epoch) and returns (`A + V`, before
/// normalization).
pub fn compute_gae(buf: &mut RolloutBuffer, discount: f64, lambda: f64) {
    let p = buf.p_steps;
    buf.advantages.clear();
    for (r, v) in buf.rewards.chunks(p).zip(buf.values.chunks(p)) {
        buf.advantages.extend(episode_advantages(r, v, discount, lambda));
    }
    buf.returns = buf.advantages.iter().zip(&buf.values).map(|(a, v)| a + v).collect();
    let n = buf.advantages.len().max(1) as f64;
    let mean = buf.advantages.iter().sum::<f64>() / n;
    let var = buf.advantages.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n;
    let std = libm::sqrt(var).max(ADV_STD_FLOOR);
    for a in &mut buf.advantages {
        *a = (*a - mean) / std;
    }
}

/// `min(rho A, clip(rho, 1 - eps, 1 + eps) A)`.
pub fn clipped_objective(rho: f64, adv: f64, clip: f64) -> f64 {
    (rho * adv).min(rho.clamp(1.0 - clip, 1.0 + clip) * adv)
}

/// Surrogate loss, its gradient and the diagnostics of one evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateEval {
    /// `-mean(clipped objective)`.
    pub loss: f64,
    /// Gradient of `loss` over the mean network parameters, then `log_std`.
    pub grads: Vec<f64>,
    pub approx_kl: f64,
    pub clip_frac: f64,
}

fn policy_pass(policy: &GaussianPolicy, buf: &RolloutBuffer, clip: Option<f64>, with_grad: bool) -> SurrogateEval {
    let n_net = policy.mean_net.n_params();
    let mut grads = vec![0.0; if with_grad { n_net + ACTION_DIM } else { 0 }];
    let (mut obj, mut kl, mut clipped) = (0.0, 0.0, 0usize);
    let n = buf.len() as f64;
    let sigma2 = policy.log_std.map(|l| libm::exp(2.0 * l));
    let mut tape = Tape::default();
    for i in 0..buf.len() {
        let mean = policy.mean_net.forward_tape(buf.obs_at(i), &mut tape);
        let mean = [mean[0], mean[1]];
        let action = buf.actions[i];
        let logp = policy.log_prob_with_mean(&mean, &action);
        let rho = libm::exp(logp - buf.logp[i]);
        let adv = buf.advantages[i];
        kl += buf.logp[i] - logp;
        // d loss / d logp, zero where the clipped branch is the minimum.
        let coef = match clip {
            Some(c) => {
                if (rho - 1.0).abs() > c {
                    clipped += 1;
                }
                obj += clipped_objective(rho, adv, c);
                let inactive = (adv > 0.0 && rho > 1.0 + c) || (adv < 0.0 && rho < 1.0 - c);
                if inactive {
                    0.0
                } else {
                    -rho * adv / n
                }
            }
            None => {
                obj += logp * adv;
                -adv / n
            }
        };
        if with_grad && coef != 0.0 {
            let mut up = [0.0; ACTION_DIM];
            for k in 0..ACTION_DIM {
                let d = action[k] - mean[k];
                up[k] = coef * d / sigma2[k];
                grads[n_net + k] += coef * (d * d / sigma2[k] - 1.0);
            }
            policy.mean_net.backward(&tape, &up, &mut grads[..n_net]);
        }
    }
    SurrogateEval { loss: -obj / n, grads, approx_kl: kl / n, clip_frac: clipped as f64 / n }
}

/// Clipped surrogate evaluated at `policy` against the buffer's old
/// log-probabilities.
pub fn surrogate(policy: &GaussianPolicy, buf: &RolloutBuffer, clip: f64) -> SurrogateEval {
    policy_pass(policy, buf, Some(clip), true)
}

/// Gradient of `-mean(logp A)`, the plain policy-gradient loss.
pub fn vanilla_policy_gradient(policy: &GaussianPolicy, buf: &RolloutBuffer) -> Vec<f64> {
    policy_pass(policy, buf, None, true).grads
}

/// Mean squared value error and its parameter gradient.
pub fn value_loss(value: &ValueNet, buf: &RolloutBuffer, with_grad: bool) -> (f64, Vec<f64>) {
    let n = buf.len() as f64;
    let mut grads = vec![0.0; if with_grad { value.net.n_params() } else { 0 }];
    let mut loss = 0.0;
    let mut tape = Tape::default();
    for i in 0..buf.len() {
        let v = value.net.forward_tape(buf.obs_at(i), &mut tape)[0];
        let err = v - buf.returns[i];
        loss += err * err;
        if with_grad {
            value.net.backward(&tape, &[2.0 * err / n], &mut grads);
        }
    }
    (loss / n, grads)
}

/// Both optimizers, persistent across epochs.
#[derive(Debug, Clone, PartialEq)]
pub struct Optimizers {
    pub policy: Adam,
    pub value: Adam,
}

impl Optimizers {
    pub fn new(policy: &GaussianPolicy, value: &ValueNet, cfg: &TrainConfig) -> Self {
        Self {
            policy: Adam::new(policy.mean_net.n_params() + ACTION_DIM, cfg.policy_lr),
            value: Adam::new(value.net.n_params(), cfg.value_lr),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpdateStats {
    /// Surrogate loss before the first step.
    pub policy_loss: f64,
    /// Value loss before the first step.
    pub value_loss: f64,
    /// Approximate KL at exit (at the stop, when early stopping fired).
    pub kl: f64,
    pub clip_frac: f64,
    pub policy_steps: usize,
    pub early_stopped: bool,
}

fn check_finite(x: f64, what: &str) -> Result<()> {
    if x.is_finite() {
        Ok(())
    } else {
        Err(Error::Numerical(alloc::format!("non-finite {what}: {x}")))
    }
}

/// One PPO update on a buffer whose advantages are filled.
pub fn ppo_update(
    policy: &mut GaussianPolicy,
    value: &mut ValueNet,
    opt: &mut Optimizers,
    buf: &RolloutBuffer,
    cfg: &TrainConfig,
) -> Result<UpdateStats> {
    if buf.is_empty() || buf.advantages.len() != buf.len() || buf.returns.len() != buf.len() {
        return Err(Error::InvalidConfig("rollout buffer has no advantages".into()));
    }
    let n_net = policy.mean_net.n_params();
    let mut flat = Vec::with_capacity(n_net + ACTION_DIM);
    let mut stats =
        UpdateStats { policy_loss: 0.0, value_loss: 0.0, kl: 0.0, clip_frac: 0.0, policy_steps: 0, early_stopped: false };
    for i in 0..cfg.policy_iters {
        let eval = surrogate(policy, buf, cfg.clip_ratio);
        check_finite(eval.loss, "policy loss")?;
        if i == 0 {
            stats.policy_loss = eval.loss;
        }
        stats.kl = eval.approx_kl;
        stats.clip_frac = eval.clip_frac;
        if eval.approx_kl > cfg.kl_stop {
            stats.early_stopped = true;
            log::debug!("kl {:.4} > {} after {} policy steps", eval.approx_kl, cfg.kl_stop, stats.policy_steps);
            break;
        }
        flat.clear();
        flat.extend_from_slice(policy.mean_net.params());
        flat.extend_from_slice(&policy.log_std);
        opt.policy.step(&mut flat, &eval.grads);
        policy.mean_net.params_mut().copy_from_slice(&flat[..n_net]);
        policy.log_std.copy_from_slice(&flat[n_net..]);
        policy.clamp_log_std();
        stats.policy_steps += 1;
    }
    if !stats.early_stopped {
        let eval = policy_pass(policy, buf, Some(cfg.clip_ratio), false);
        check_finite(eval.loss, "policy loss")?;
        stats.kl = eval.approx_kl;
        stats.clip_frac = eval.clip_frac;
    }
    for j in 0..cfg.value_iters {
        let (loss, grads) = value_loss(value, buf, true);
        check_finite(loss, "value loss")?;
        if j == 0 {
            stats.value_loss = loss;
        }
        opt.value.step(value.net.params_mut(), &grads);
    }
    Ok(stats)
}

/// What a trained agent carries to other instances.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyCheckpoint {
    pub policy: GaussianPolicy,
    pub value: ValueNet,
    pub obs_mode: ObsMode,
    pub reward_mode: RewardMode,
    pub append_time: bool,
    pub p_steps: usize,
    pub action_bounds: [f64; 2],
    pub meta: CheckpointMeta,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointMeta {
    pub n_sites: usize,
    pub master_seed: u64,
    pub epochs: usize,
    pub episodes_per_epoch: usize,
}

impl PolicyCheckpoint {
    /// Episode settings the policy was trained under, on `backend`.
    pub fn episode_config(&self, backend: Backend) -> EpisodeConfig {
        EpisodeConfig {
            p_steps: self.p_steps,
            backend,
            reward_mode: self.reward_mode,
            obs_mode: self.obs_mode,
            append_time: self.append_time,
        }
    }

    pub fn check_compatible(&self, cfg: &EpisodeConfig) -> Result<()> {
        if cfg.obs_mode != self.obs_mode || cfg.append_time != self.append_time {
            return Err(Error::IncompatibleCheckpoint(alloc::format!(
                "checkpoint observes `{}`, episode asks for `{}`",
                self.obs_mode.name(),
                cfg.obs_mode.name()
            )));
        }
        if self.policy.obs_dim() != cfg.obs_dim() {
            return Err(Error::IncompatibleCheckpoint(alloc::format!(
                "policy input width {} but observations have {}",
                self.policy.obs_dim(),
                cfg.obs_dim()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub mean_reward: f64,
    pub mean_eps: f64,
    /// Best episode of the epoch.
    pub min_eps: f64,
    pub kl: f64,
    pub clip_frac: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub policy_steps: usize,
}

/// Training state between epochs.
#[derive(Debug, Clone)]
pub struct Trainer<'e> {
    engine: &'e Engine,
    cfg: TrainConfig,
    pub policy: GaussianPolicy,
    pub value: ValueNet,
    opt: Optimizers,
    epoch: usize,
}

impl<'e> Trainer<'e> {
    pub fn new(engine: &'e Engine, cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let obs_dim = cfg.episode_config(engine.backend()).obs_dim();
        // Network seeds come from a stream no episode uses.
        let mut init = episode_rng(cfg.master_seed, u64::MAX);
        let policy = GaussianPolicy::new(obs_dim, init.next_u64());
        let value = ValueNet::new(obs_dim, init.next_u64());
        let opt = Optimizers::new(&policy, &value, &cfg);
        Ok(Self { engine, cfg, policy, value, opt, epoch: 0 })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn epochs_done(&self) -> usize {
        self.epoch
    }

    pub fn run_epoch<X: Executor>(&mut self, exec: &X) -> Result<EpochLog> {
        let mut buf = collect_epoch(exec, self.engine, &self.policy, &self.value, &self.cfg, self.epoch)?;
        compute_gae(&mut buf, self.cfg.discount, self.cfg.gae_lambda);
        let stats = ppo_update(&mut self.policy, &mut self.value, &mut self.opt, &buf, &self.cfg)?;
        let n = buf.episodes.len() as f64;
        let log = EpochLog {
            epoch: self.epoch,
            mean_reward: buf.episodes.iter().map(|e| e.reward).sum::<f64>() / n,
            mean_eps: buf.episodes.iter().map(|e| e.eps).sum::<f64>() / n,
            min_eps: buf.episodes.iter().map(|e| e.eps).fold(f64::INFINITY, f64::min),
            kl: stats.kl,
            clip_frac: stats.clip_frac,
            policy_loss: stats.policy_loss,
            value_loss: stats.value_loss,
            policy_steps: stats.policy_steps,
        };
        self.epoch += 1;
        Ok(log)
    }

    pub fn checkpoint(&self) -> PolicyCheckpoint {
        PolicyCheckpoint {
            policy: self.policy.clone(),
            value: self.value.clone(),
            obs_mode: self.cfg.obs_mode,
            reward_mode: self.cfg.reward_mode,
            append_time: self.cfg.append_time,
            p_steps: self.cfg.p_steps,
            action_bounds: [0.0, ACTION_MAX],
            meta: CheckpointMeta {
                n_sites: self.engine.spec().n_sites(),
                master_seed: self.cfg.master_seed,
                epochs: self.epoch,
                episodes_per_epoch: self.cfg.n_episodes_per_epoch,
            },
        }
    }
}

/// Full training loop; `on_epoch` sees every log line and the trainer (for
/// periodic checkpoints).
pub fn train<X, F>(exec: &X, engine: &Engine, cfg: &TrainConfig, mut on_epoch: F) -> Result<(PolicyCheckpoint, Vec<EpochLog>)>
where
    X: Executor,
    F: FnMut(&EpochLog, &Trainer<'_>) -> Result<()>,
{
    let mut trainer = Trainer::new(engine, cfg.clone())?;
    let mut logs = Vec::with_capacity(cfg.n_epochs);
    for _ in 0..cfg.n_epochs {
        let log = trainer.run_epoch(exec)?;
        on_epoch(&log, &trainer)?;
        logs.push(log);
    }
    Ok((trainer.checkpoint(), logs))
}

/// One test episode.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalRecord {
    pub run: usize,
    pub schedule: Schedule,
    pub e_p: f64,
    pub eps: f64,
    pub reward: f64,
    pub trace: Vec<TraceStep>,
}

impl EvalRecord {
    pub fn s_values(&self) -> Result<Vec<f64>> {
        schedule_to_s(&self.schedule)
    }
}

/// Plays `runs` episodes with the checkpoint's policy. Stochastic runs draw
/// from streams `0..runs` of `seed`; deterministic runs take the mean action.
pub fn evaluate<X: Executor>(
    exec: &X,
    ckpt: &PolicyCheckpoint,
    engine: &Engine,
    runs: usize,
    deterministic: bool,
    seed: u64,
) -> Result<Vec<EvalRecord>> {
    let cfg = ckpt.episode_config(engine.backend());
    ckpt.check_compatible(&cfg)?;
    exec.try_map(runs, |run| {
        let mut rng = episode_rng(seed, run as u64);
        let mut env = Env::new(engine, cfg)?;
        let mut obs = env.reset()?;
        let (mut gammas, mut betas) = (Vec::new(), Vec::new());
        let mut trace = Vec::with_capacity(cfg.p_steps);
        let mut e_p = 0.0;
        let mut reward = 0.0;
        while !env.is_done() {
            let x = obs.to_vec();
            let raw = if deterministic { ckpt.policy.mean(&x) } else { ckpt.policy.sample(&x, &mut rng).0 };
            let (action, out) = env.step_raw(raw)?;
            gammas.push(action.gamma);
            betas.push(action.beta);
            trace.push(TraceStep { t: env.t(), gamma: action.gamma, beta: action.beta, obs: out.obs, reward: out.reward });
            reward += out.reward;
            if let Some(e) = out.final_energy {
                e_p = e;
            }
            obs = out.obs;
        }
        Ok(EvalRecord {
            run,
            schedule: Schedule::new(gammas, betas)?,
            e_p,
            eps: residual_energy_density(e_p, env.extremes())?,
            reward,
            trace,
        })
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::make_uniform;
    use crate::exec::Sequential;

    fn small_cfg(p: usize, seed: u64) -> TrainConfig {
        TrainConfig { n_epochs: 3, n_episodes_per_epoch: 12, ..TrainConfig::new(p, seed) }
    }

    fn engine8() -> Engine {
        Engine::auto(&make_uniform(8, 1.0, 0.0).unwrap()).unwrap()
    }

    fn nets(seed: u64) -> (GaussianPolicy, ValueNet) {
        (GaussianPolicy::new(2, seed), ValueNet::new(2, seed + 1))
    }

    #[test]
    fn defaults() {
        let c = TrainConfig::new(4, 0);
        assert_eq!((c.n_epochs, c.n_episodes_per_epoch, c.policy_iters, c.value_iters), (1024, 100, 80, 80));
        assert_eq!((c.discount, c.gae_lambda, c.clip_ratio, c.kl_stop), (1.0, 0.97, 0.2, 0.015));
        assert_eq!((c.policy_lr, c.value_lr), (3e-4, 1e-3));
        assert!(c.validate().is_ok());
        assert!(TrainConfig { clip_ratio: 1.0, ..c.clone() }.validate().is_err());
        assert!(TrainConfig { discount: 0.0, ..c }.validate().is_err());
    }

    #[test]
    fn buffer_shape_and_determinism() {
        let engine = engine8();
        let (policy, value) = nets(0);
        let cfg = small_cfg(3, 5);
        let a = collect_epoch(&Sequential, &engine, &policy, &value, &cfg, 2).unwrap();
        assert_eq!(a.len(), 12 * 3);
        assert_eq!(a.obs.len(), 12 * 3 * 2);
        for (t, r) in a.rewards.iter().enumerate() {
            if t % 3 != 2 {
                assert_eq!(*r, 0.0);
            }
        }
        for (k, ep) in a.episodes.iter().enumerate() {
            assert_eq!(a.rewards[3 * k + 2], ep.reward);
            assert_eq!(ep.reward, -ep.e_p);
        }
        let b = collect_epoch(&Sequential, &engine, &policy, &value, &cfg, 2).unwrap();
        assert_eq!(a, b);
        let c = collect_epoch(&Sequential, &engine, &policy, &value, &cfg, 3).unwrap();
        assert_ne!(a.actions, c.actions);
    }

    #[test]
    fn gae_examples() {
        assert!((episode_advantages(&[1.0], &[0.3], 1.0, 0.97)[0] - 0.7).abs() < 1e-15);
        let rewards = [0.0, 0.0, 0.0, 2.5];
        let values = [0.1, -0.4, 0.9, 1.3];
        let adv = episode_advantages(&rewards, &values, 1.0, 1.0);
        for (a, v) in adv.iter().zip(&values) {
            assert!((a - (2.5 - v)).abs() < 1e-12);
        }
        let mut buf = RolloutBuffer {
            obs_dim: 2,
            p_steps: 1,
            obs: vec![0.0; 2],
            actions: vec![[0.0; 2]],
            logp: vec![0.0],
            values: vec![0.3],
            rewards: vec![1.0],
            ..Default::default()
        };
        compute_gae(&mut buf, 1.0, 0.97);
        assert!((buf.returns[0] - 1.0).abs() < 1e-15);
        let mut zero = RolloutBuffer {
            obs_dim: 2,
            p_steps: 2,
            obs: vec![0.0; 8],
            actions: vec![[0.0; 2]; 4],
            logp: vec![0.0; 4],
            values: vec![0.0; 4],
            rewards: vec![0.0; 4],
            ..Default::default()
        };
        compute_gae(&mut zero, 1.0, 0.97);
        assert!(zero.advantages.iter().all(|&a| a == 0.0));
    }

    #[test]
    fn advantages_are_normalized() {
        let engine = engine8();
        let (policy, value) = nets(1);
        let mut buf = collect_epoch(&Sequential, &engine, &policy, &value, &small_cfg(4, 9), 0).unwrap();
        compute_gae(&mut buf, 1.0, 0.97);
        let n = buf.len() as f64;
        let mean = buf.advantages.iter().sum::<f64>() / n;
        let var = buf.advantages.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n;
        assert!(mean.abs() <= 1e-10);
        assert!((var - 1.0).abs() <= 1e-6);
    }

    #[test]
    fn clip_arithmetic() {
        assert!((clipped_objective(1.5, 1.0, 0.2) - 1.2).abs() < 1e-15);
        assert!((clipped_objective(0.5, -1.0, 0.2) + 0.8).abs() < 1e-15);
        assert_eq!(clipped_objective(1.0, 0.4, 0.2), 0.4);
    }

    fn filled_buffer() -> RolloutBuffer {
        let engine = engine8();
        let (policy, value) = nets(2);
        let mut buf = collect_epoch(&Sequential, &engine, &policy, &value, &small_cfg(2, 3), 0).unwrap();
        compute_gae(&mut buf, 1.0, 0.97);
        buf
    }

    #[test]
    fn zero_learning_rate_is_a_no_op() {
        let buf = filled_buffer();
        let (mut policy, mut value) = nets(2);
        let (p0, v0) = (policy.clone(), value.clone());
        let cfg = TrainConfig { policy_lr: 0.0, value_lr: 0.0, ..small_cfg(2, 3) };
        let mut opt = Optimizers::new(&policy, &value, &cfg);
        let stats = ppo_update(&mut policy, &mut value, &mut opt, &buf, &cfg).unwrap();
        assert_eq!(policy, p0);
        assert_eq!(value, v0);
        assert_eq!(stats.kl, 0.0);
        assert_eq!(stats.policy_steps, 80);
        assert!(!stats.early_stopped);
    }

    #[test]
    fn surrogate_at_old_policy_is_vanilla_gradient() {
        let buf = filled_buffer();
        let (policy, _) = nets(2);
        let eval = surrogate(&policy, &buf, 0.2);
        let mean_adv = buf.advantages.iter().sum::<f64>() / buf.len() as f64;
        assert!((eval.loss + mean_adv).abs() < 1e-12);
        assert_eq!((eval.approx_kl, eval.clip_frac), (0.0, 0.0));
        let vanilla = vanilla_policy_gradient(&policy, &buf);
        for (a, b) in eval.grads.iter().zip(&vanilla) {
            assert!((a - b).abs() <= 1e-10 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn surrogate_gradient_matches_finite_differences() {
        let buf = filled_buffer();
        let (mut policy, _) = nets(2);
        // Move away from the old policy so ratios differ from one.
        for p in policy.mean_net.params_mut().iter_mut().step_by(7) {
            *p += 0.01;
        }
        policy.log_std = [-0.45, -0.55];
        let eval = surrogate(&policy, &buf, 0.2);
        let n_net = policy.mean_net.n_params();
        let h = 1e-6;
        for idx in [0, 5, 64, 100, n_net - 1, n_net, n_net + 1] {
            let shifted = |delta: f64| {
                let mut q = policy.clone();
                if idx < n_net {
                    q.mean_net.params_mut()[idx] += delta;
                } else {
                    q.log_std[idx - n_net] += delta;
                }
                surrogate(&q, &buf, 0.2).loss
            };
            let fd = (shifted(h) - shifted(-h)) / (2.0 * h);
            assert!((fd - eval.grads[idx]).abs() < 1e-6 * (1.0 + fd.abs()), "{idx}: {fd} vs {}", eval.grads[idx]);
        }
    }

    #[test]
    fn kl_early_stop_reports_exceeding_kl() {
        let buf = filled_buffer();
        let (mut policy, mut value) = nets(2);
        let cfg = TrainConfig { policy_lr: 0.05, kl_stop: 1e-4, ..small_cfg(2, 3) };
        let mut opt = Optimizers::new(&policy, &value, &cfg);
        let stats = ppo_update(&mut policy, &mut value, &mut opt, &buf, &cfg).unwrap();
        assert!(stats.early_stopped);
        assert!(stats.kl > cfg.kl_stop);
        assert!(stats.policy_steps < cfg.policy_iters);
    }

    #[test]
    fn value_regression_reduces_loss() {
        let buf = filled_buffer();
        let (mut policy, mut value) = nets(2);
        let before = value_loss(&value, &buf, false).0;
        let cfg = small_cfg(2, 3);
        let mut opt = Optimizers::new(&policy, &value, &cfg);
        ppo_update(&mut policy, &mut value, &mut opt, &buf, &cfg).unwrap();
        assert!(value_loss(&value, &buf, false).0 < before);
    }

    #[test]
    fn training_is_reproducible() {
        let engine = engine8();
        let cfg = small_cfg(2, 11);
        let (ck_a, log_a) = train(&Sequential, &engine, &cfg, |_, _| Ok(())).unwrap();
        let (ck_b, log_b) = train(&Sequential, &engine, &cfg, |_, _| Ok(())).unwrap();
        assert_eq!(log_a, log_b);
        assert_eq!(ck_a, ck_b);
        assert_eq!(log_a.len(), 3);
        assert_eq!(ck_a.meta.epochs, 3);
    }

    #[test]
    fn evaluation() {
        let engine = engine8();
        let trainer = Trainer::new(&engine, small_cfg(3, 4)).unwrap();
        let ck = trainer.checkpoint();
        let a = evaluate(&Sequential, &ck, &engine, 4, true, 0).unwrap();
        let b = evaluate(&Sequential, &ck, &engine, 4, true, 1).unwrap();
        assert_eq!(a, b);
        assert!(a.windows(2).all(|w| w[0].schedule == w[1].schedule));
        let s = evaluate(&Sequential, &ck, &engine, 4, false, 0).unwrap();
        assert_ne!(s[0].schedule, s[1].schedule);
        for r in &s {
            assert_eq!(r.schedule.p(), 3);
            assert_eq!(r.trace.len(), 3);
            assert!(r.eps >= 0.0 && r.eps <= 1.0);
            assert!((r.reward + r.e_p).abs() < 1e-15);
        }
        let mut bad = ck.clone();
        bad.append_time = true;
        assert!(matches!(evaluate(&Sequential, &bad, &engine, 1, true, 0), Err(Error::IncompatibleCheckpoint(_))));
    }
}
