//! One dispatch point over the three exact simulators.

use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::chain::{ChainSpec, Schedule};
use crate::error::{Error, Result};
use crate::fermion::{Frame, MomentumEngine, MomentumState};
use crate::record::MeasurementRecord;
use crate::statevector::{self, StateVector, MAX_ORACLE_SITES};

/// Largest chain the automatic choice sends to the statevector oracle.
pub const AUTO_ORACLE_MAX_SITES: usize = 14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Backend {
    /// Dense statevector, `N <= 20`.
    Oracle,
    /// Real-space free fermions, any `N`.
    Fermion,
    /// Momentum-space free fermions, uniform chains only.
    Momentum,
}

impl Backend {
    /// Oracle for small chains, otherwise the cheapest exact fermion path.
    pub fn auto(spec: &ChainSpec) -> Self {
        if spec.n_sites() <= AUTO_ORACLE_MAX_SITES {
            Backend::Oracle
        } else if spec.is_uniform() {
            Backend::Momentum
        } else {
            Backend::Fermion
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Backend::Oracle => "oracle",
            Backend::Fermion => "fermion",
            Backend::Momentum => "momentum",
        }
    }
}

impl fmt::Display for Backend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Backend {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "oracle" => Ok(Backend::Oracle),
            "fermion" => Ok(Backend::Fermion),
            "momentum" => Ok(Backend::Momentum),
            other => Err(Error::InvalidConfig(alloc::format!("unknown backend `{other}`"))),
        }
    }
}

/// Per-instance simulator with everything that can be precomputed cached.
/// Immutable once built, so one engine serves any number of episodes.
#[derive(Debug, Clone)]
pub enum Engine {
    Oracle { spec: ChainSpec, energies: Vec<f64> },
    Fermion { spec: ChainSpec },
    Momentum(MomentumEngine),
}

/// Simulator state owned by one episode.
#[derive(Debug, Clone, PartialEq)]
pub enum SimState {
    Oracle(StateVector),
    Fermion(Frame),
    Momentum(MomentumState),
}

impl Engine {
    pub fn new(spec: &ChainSpec, backend: Backend) -> Result<Self> {
        match backend {
            Backend::Oracle => {
                if spec.n_sites() > MAX_ORACLE_SITES {
                    return Err(Error::TooLarge { n: spec.n_sites(), max: MAX_ORACLE_SITES });
                }
                Ok(Engine::Oracle { spec: spec.clone(), energies: statevector::z_energies(spec)? })
            }
            Backend::Fermion => Ok(Engine::Fermion { spec: spec.clone() }),
            Backend::Momentum => Ok(Engine::Momentum(MomentumEngine::new(spec)?)),
        }
    }

    pub fn auto(spec: &ChainSpec) -> Result<Self> {
        Self::new(spec, Backend::auto(spec))
    }

    pub fn spec(&self) -> &ChainSpec {
        match self {
            Engine::Oracle { spec, .. } | Engine::Fermion { spec } => spec,
            Engine::Momentum(m) => m.spec(),
        }
    }

    pub fn backend(&self) -> Backend {
        match self {
            Engine::Oracle { .. } => Backend::Oracle,
            Engine::Fermion { .. } => Backend::Fermion,
            Engine::Momentum(_) => Backend::Momentum,
        }
    }

    /// `|+>` in this engine's representation.
    pub fn initial_state(&self) -> SimState {
        match self {
            Engine::Oracle { spec, .. } => {
                // Size was validated in `new`.
                SimState::Oracle(StateVector::plus(spec.n_sites()).expect("oracle size checked"))
            }
            Engine::Fermion { spec } => SimState::Fermion(Frame::vacuum(spec.n_sites())),
            Engine::Momentum(m) => SimState::Momentum(m.vacuum()),
        }
    }

    /// One QAOA layer: `exp(-i beta H_x) exp(-i gamma H_z)`.
    pub fn step(&self, state: &mut SimState, gamma: f64, beta: f64) -> Result<()> {
        match (self, state) {
            (Engine::Oracle { energies, .. }, SimState::Oracle(psi)) => {
                psi.apply_uz_diagonal(energies, gamma)?;
                psi.apply_ux(beta);
            }
            (Engine::Fermion { spec }, SimState::Fermion(frame)) => {
                frame.apply_uz(spec, gamma)?;
                frame.apply_ux(beta);
            }
            (Engine::Momentum(m), SimState::Momentum(s)) => {
                m.apply_uz(s, gamma);
                m.apply_ux(s, beta);
            }
            _ => return Err(Error::InvalidConfig("simulator state does not belong to this engine".into())),
        }
        Ok(())
    }

    pub fn measure(&self, state: &SimState) -> Result<MeasurementRecord> {
        match (self, state) {
            (Engine::Oracle { spec, .. }, SimState::Oracle(psi)) => psi.measure(spec),
            (Engine::Fermion { spec }, SimState::Fermion(frame)) => frame.measure(spec),
            (Engine::Momentum(m), SimState::Momentum(s)) => Ok(m.measure(s)),
            _ => Err(Error::InvalidConfig("simulator state does not belong to this engine".into())),
        }
    }

    /// `(<H_z>, <H_x>)` only.
    pub fn totals(&self, state: &SimState) -> Result<(f64, f64)> {
        match (self, state) {
            (Engine::Momentum(m), SimState::Momentum(s)) => {
                let (zz, x) = m.local(s);
                let n = m.spec().n_sites() as f64;
                Ok((-m.spec().couplings()[0] * zz * n, -x * n))
            }
            _ => self.measure(state).map(|r| (r.hz, r.hx)),
        }
    }

    /// Target energy `<H_z> + h <H_x>`.
    pub fn energy(&self, state: &SimState) -> Result<f64> {
        let (hz, hx) = self.totals(state)?;
        Ok(hz + self.spec().h_target() * hx)
    }

    /// Full circuit from `|+>`, measuring after every layer.
    pub fn run(&self, sched: &Schedule) -> Result<(Vec<MeasurementRecord>, f64)> {
        let mut state = self.initial_state();
        let mut trace = Vec::with_capacity(sched.p());
        for (g, b) in sched.steps() {
            self.step(&mut state, g, b)?;
            trace.push(self.measure(&state)?);
        }
        let e_p = trace.last().map(|r| r.energy).unwrap_or(0.0);
        Ok((trace, e_p))
    }

    /// `E_P` without intermediate measurements.
    pub fn final_energy(&self, sched: &Schedule) -> Result<f64> {
        let mut state = self.initial_state();
        for (g, b) in sched.steps() {
            self.step(&mut state, g, b)?;
        }
        self.energy(&state)
    }
}
