//! Episodic control interface: the agent sees two intensive observables,
//! picks `(gamma, beta)` each step and is rewarded once, at the end.

use alloc::vec::Vec;
use core::f64::consts::FRAC_PI_2;

use crate::backend::{Backend, Engine, SimState};
use crate::chain::{classical_extremes, residual_energy_density, ChainSpec, EnergyExtremes};
use crate::error::{Error, Result};
use crate::record::MeasurementRecord;

/// Both angles are clipped into `[0, ACTION_MAX]`.
pub const ACTION_MAX: f64 = FRAC_PI_2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RewardMode {
    /// `-E_P`.
    Raw,
    /// `-epsilon(E_P)`, comparable across chain sizes.
    Normalized,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObsMode {
    /// `<H_z>/sum J` and `<H_x>/N`, independent of chain size.
    Intensive,
    /// `<H_z>` and `<H_x>` as measured.
    Bare,
}

impl RewardMode {
    pub fn name(self) -> &'static str {
        match self {
            RewardMode::Raw => "raw",
            RewardMode::Normalized => "normalized",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "raw" => Ok(RewardMode::Raw),
            "normalized" => Ok(RewardMode::Normalized),
            _ => Err(Error::InvalidConfig(alloc::format!("unknown reward mode `{s}`"))),
        }
    }
}

impl ObsMode {
    pub fn name(self) -> &'static str {
        match self {
            ObsMode::Intensive => "intensive",
            ObsMode::Bare => "bare",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "intensive" => Ok(ObsMode::Intensive),
            "bare" => Ok(ObsMode::Bare),
            _ => Err(Error::InvalidConfig(alloc::format!("unknown observation mode `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeConfig {
    pub p_steps: usize,
    pub backend: Backend,
    pub reward_mode: RewardMode,
    pub obs_mode: ObsMode,
    /// Append `t / P` to the observation.
    pub append_time: bool,
}

impl EpisodeConfig {
    pub fn new(p_steps: usize, backend: Backend) -> Self {
        Self { p_steps, backend, reward_mode: RewardMode::Raw, obs_mode: ObsMode::Intensive, append_time: false }
    }

    /// Width of the observation vector fed to the networks.
    pub fn obs_dim(&self) -> usize {
        if self.append_time {
            3
        } else {
            2
        }
    }
}

/// What the agent sees after each step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub hz: f64,
    pub hx: f64,
    /// `t / P` when requested.
    pub time: Option<f64>,
}

impl Observation {
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = alloc::vec![self.hz, self.hx];
        v.extend(self.time);
        v
    }

    pub fn push_into(&self, out: &mut Vec<f64>) {
        out.push(self.hz);
        out.push(self.hx);
        out.extend(self.time);
    }
}

/// Observation built from `(<H_z>, <H_x>)`.
pub fn observation_from_totals(hz: f64, hx: f64, spec: &ChainSpec, mode: ObsMode) -> Result<Observation> {
    match mode {
        ObsMode::Bare => Ok(Observation { hz, hx, time: None }),
        ObsMode::Intensive => {
            let sum = spec.coupling_sum();
            if sum <= 0.0 {
                return Err(Error::InvalidChain("intensive observations need sum J > 0".into()));
            }
            Ok(Observation { hz: hz / sum, hx: hx / spec.n_sites() as f64, time: None })
        }
    }
}

pub fn observation_of(record: &MeasurementRecord, spec: &ChainSpec, mode: ObsMode) -> Result<Observation> {
    observation_from_totals(record.hz, record.hx, spec, mode)
}

/// Angles actually applied, always inside `[0, ACTION_MAX]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Action {
    pub gamma: f64,
    pub beta: f64,
}

impl Action {
    /// Clips a raw policy sample; the flag reports whether clipping fired.
    pub fn clip(raw: [f64; 2]) -> (Self, bool) {
        let c = |x: f64| if x.is_nan() { 0.0 } else { x.clamp(0.0, ACTION_MAX) };
        let action = Action { gamma: c(raw[0]), beta: c(raw[1]) };
        let clipped = action.gamma != raw[0] || action.beta != raw[1];
        (action, clipped)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub obs: Observation,
    pub reward: f64,
    pub done: bool,
    /// `E_P`, present on the final step.
    pub final_energy: Option<f64>,
}

/// One line of an episode trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceStep {
    pub t: usize,
    pub gamma: f64,
    pub beta: f64,
    pub obs: Observation,
    pub reward: f64,
}

/// A single QAOA episode on a shared engine.
#[derive(Debug, Clone)]
pub struct Env<'e> {
    engine: &'e Engine,
    cfg: EpisodeConfig,
    extremes: EnergyExtremes,
    state: SimState,
    t: usize,
    clip_events: usize,
}

impl<'e> Env<'e> {
    pub fn new(engine: &'e Engine, cfg: EpisodeConfig) -> Result<Self> {
        if cfg.p_steps == 0 {
            return Err(Error::InvalidConfig("episodes need at least one step".into()));
        }
        if engine.backend() != cfg.backend {
            return Err(Error::InvalidConfig(alloc::format!(
                "engine runs `{}` but the episode asks for `{}`",
                engine.backend(),
                cfg.backend
            )));
        }
        let spec = engine.spec();
        if cfg.obs_mode == ObsMode::Intensive && spec.coupling_sum() <= 0.0 {
            return Err(Error::InvalidChain("intensive observations need sum J > 0".into()));
        }
        let extremes = classical_extremes(spec)?;
        Ok(Self { engine, cfg, extremes, state: engine.initial_state(), t: 0, clip_events: 0 })
    }

    pub fn config(&self) -> &EpisodeConfig {
        &self.cfg
    }

    pub fn spec(&self) -> &ChainSpec {
        self.engine.spec()
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn is_done(&self) -> bool {
        self.t >= self.cfg.p_steps
    }

    /// Number of raw actions that had to be clipped since construction.
    pub fn clip_events(&self) -> usize {
        self.clip_events
    }

    pub fn extremes(&self) -> EnergyExtremes {
        self.extremes
    }

    fn observe(&self) -> Result<Observation> {
        let (hz, hx) = self.engine.totals(&self.state)?;
        let mut obs = observation_from_totals(hz, hx, self.spec(), self.cfg.obs_mode)?;
        if self.cfg.append_time {
            obs.time = Some(self.t as f64 / self.cfg.p_steps as f64);
        }
        Ok(obs)
    }

    /// Back to `|+>` at `t = 0`.
    pub fn reset(&mut self) -> Result<Observation> {
        self.state = self.engine.initial_state();
        self.t = 0;
        self.observe()
    }

    pub fn reward_for(&self, e_p: f64) -> Result<f64> {
        match self.cfg.reward_mode {
            RewardMode::Raw => Ok(-e_p),
            RewardMode::Normalized => Ok(-residual_energy_density(e_p, self.extremes)?),
        }
    }

    /// Applies `exp(-i beta H_x) exp(-i gamma H_z)`.
    pub fn step(&mut self, action: Action) -> Result<StepOutcome> {
        if self.is_done() {
            return Err(Error::EpisodeFinished(self.t));
        }
        self.engine.step(&mut self.state, action.gamma, action.beta)?;
        self.t += 1;
        let obs = self.observe()?;
        if self.is_done() {
            let e_p = self.engine.energy(&self.state)?;
            let reward = self.reward_for(e_p)?;
            Ok(StepOutcome { obs, reward, done: true, final_energy: Some(e_p) })
        } else {
            Ok(StepOutcome { obs, reward: 0.0, done: false, final_energy: None })
        }
    }

    /// Clips a raw policy sample into the action box, then steps.
    pub fn step_raw(&mut self, raw: [f64; 2]) -> Result<(Action, StepOutcome)> {
        let (action, clipped) = Action::clip(raw);
        if clipped {
            self.clip_events += 1;
            log::trace!("clipped action ({}, {}) at t = {}", raw[0], raw[1], self.t + 1);
        }
        let outcome = self.step(action)?;
        Ok((action, outcome))
    }

    /// Full measurement record of the current state.
    pub fn record(&self) -> Result<MeasurementRecord> {
        self.engine.measure(&self.state)
    }
}
