//! Problem instances: periodic transverse-field Ising chains, QAOA schedules
//! and the metrics used to judge them.

use alloc::format;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Slack allowed when checking that an energy lies inside the spectrum.
pub const ENERGY_SLACK: f64 = 1e-9;

/// A periodic Ising chain `H_z = -sum_j J_j s^z_j s^z_{j+1}` with a transverse
/// term `H_x = -sum_j s^x_j`.
///
/// Bond `j` couples site `j` to site `j + 1`; the last bond wraps around to
/// site 0. Only even rings of at least four sites are accepted, which makes
/// the classical extremes exactly `-sum J` and `+sum J`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainSpec {
    couplings: Vec<f64>,
    h_target: f64,
    seed: Option<u64>,
}

impl ChainSpec {
    pub const MIN_SITES: usize = 4;

    /// Builds a chain from explicit couplings. `seed` is provenance only.
    pub fn new(couplings: Vec<f64>, h_target: f64, seed: Option<u64>) -> Result<Self> {
        let n = couplings.len();
        if n < Self::MIN_SITES || n % 2 != 0 {
            return Err(Error::InvalidChain(format!(
                "chain length must be even and at least {}, got {n}",
                Self::MIN_SITES
            )));
        }
        Self::checked(couplings, h_target, seed)
    }

    /// Like [`ChainSpec::new`] but admits rings of two sites, where both bonds
    /// join the same pair. Used to pin down sign conventions on tiny systems.
    #[doc(hidden)]
    pub fn new_small(couplings: Vec<f64>, h_target: f64) -> Result<Self> {
        let n = couplings.len();
        if n < 2 || n % 2 != 0 {
            return Err(Error::InvalidChain(format!("chain length must be even, got {n}")));
        }
        Self::checked(couplings, h_target, None)
    }

    fn checked(couplings: Vec<f64>, h_target: f64, seed: Option<u64>) -> Result<Self> {
        if let Some((j, &c)) = couplings
            .iter()
            .enumerate()
            .find(|(_, c)| !c.is_finite() || **c < 0.0 || **c > 1.0)
        {
            return Err(Error::InvalidChain(format!("coupling {j} = {c} is outside [0, 1]")));
        }
        if !h_target.is_finite() || h_target < 0.0 {
            return Err(Error::InvalidChain(format!("target field {h_target} must be finite and >= 0")));
        }
        Ok(Self { couplings, h_target, seed })
    }

    pub fn n_sites(&self) -> usize {
        self.couplings.len()
    }

    pub fn couplings(&self) -> &[f64] {
        &self.couplings
    }

    pub fn h_target(&self) -> f64 {
        self.h_target
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn coupling_sum(&self) -> f64 {
        self.couplings.iter().sum()
    }

    /// All couplings bitwise equal.
    pub fn is_uniform(&self) -> bool {
        self.couplings.windows(2).all(|w| w[0] == w[1])
    }

    /// Sites joined by bond `j`.
    #[inline]
    pub fn bond_sites(&self, j: usize) -> (usize, usize) {
        (j, (j + 1) % self.n_sites())
    }
}

/// Uniform chain with every coupling equal to `j`.
pub fn make_uniform(n: usize, j: f64, h: f64) -> Result<ChainSpec> {
    ChainSpec::new(alloc::vec![j; n], h, None)
}

/// Disordered chain with couplings drawn independently and uniformly from
/// `[0, 1)`. The same `(n, seed)` always produces the same instance.
pub fn make_disordered(n: usize, h: f64, seed: u64) -> Result<ChainSpec> {
    if n < ChainSpec::MIN_SITES || n % 2 != 0 {
        return Err(Error::InvalidChain(format!(
            "chain length must be even and at least {}, got {n}",
            ChainSpec::MIN_SITES
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let couplings = (0..n).map(|_| rng.random::<f64>()).collect();
    ChainSpec::new(couplings, h, Some(seed))
}

/// QAOA angles `(gamma_1..gamma_P, beta_1..beta_P)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    gammas: Vec<f64>,
    betas: Vec<f64>,
}

impl Schedule {
    pub fn new(gammas: Vec<f64>, betas: Vec<f64>) -> Result<Self> {
        if gammas.is_empty() {
            return Err(Error::InvalidSchedule("a schedule needs at least one step".into()));
        }
        if gammas.len() != betas.len() {
            return Err(Error::InvalidSchedule(format!(
                "{} gammas but {} betas",
                gammas.len(),
                betas.len()
            )));
        }
        if gammas.iter().chain(&betas).any(|x| !x.is_finite()) {
            return Err(Error::InvalidSchedule("non-finite angle".into()));
        }
        Ok(Self { gammas, betas })
    }

    /// `P` steps of zero angles (the identity circuit).
    pub fn zeros(p: usize) -> Result<Self> {
        Self::new(alloc::vec![0.0; p], alloc::vec![0.0; p])
    }

    /// Inverse of [`Schedule::to_params`]: gammas first, then betas.
    pub fn from_params(params: &[f64]) -> Result<Self> {
        if params.len() % 2 != 0 {
            return Err(Error::InvalidSchedule(format!("odd parameter count {}", params.len())));
        }
        let (g, b) = params.split_at(params.len() / 2);
        Self::new(g.to_vec(), b.to_vec())
    }

    pub fn to_params(&self) -> Vec<f64> {
        self.gammas.iter().chain(&self.betas).copied().collect()
    }

    pub fn p(&self) -> usize {
        self.gammas.len()
    }

    pub fn gammas(&self) -> &[f64] {
        &self.gammas
    }

    pub fn betas(&self) -> &[f64] {
        &self.betas
    }

    pub fn steps(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.gammas.iter().copied().zip(self.betas.iter().copied())
    }
}

/// Lowest and highest eigenvalues of the target Hamiltonian.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyExtremes {
    pub e_min: f64,
    pub e_max: f64,
}

/// Exact extremes for `h = 0`: all spins aligned satisfy every bond, the
/// Neel pattern on an even ring frustrates every bond.
pub fn classical_extremes(spec: &ChainSpec) -> Result<EnergyExtremes> {
    if spec.h_target() != 0.0 {
        return Err(Error::OutOfScope("energy extremes are only available for h = 0"));
    }
    let sum = spec.coupling_sum();
    Ok(EnergyExtremes { e_min: -sum, e_max: sum })
}

/// `(E_P - E_min) / (E_max - E_min)`.
pub fn residual_energy_density(e_p: f64, extremes: EnergyExtremes) -> Result<f64> {
    let EnergyExtremes { e_min, e_max } = extremes;
    let width = e_max - e_min;
    if !(width > 0.0) {
        return Err(Error::InvalidChain("degenerate spectrum: E_max == E_min".into()));
    }
    if !e_p.is_finite() || e_p < e_min - ENERGY_SLACK || e_p > e_max + ENERGY_SLACK {
        return Err(Error::EnergyOutOfRange { energy: e_p, e_min, e_max });
    }
    Ok((e_p - e_min) / width)
}

/// Rigorous lower bound on the residual energy density of a depth-`p` circuit
/// on a uniform ring of `n` sites at `h = 0`.
pub fn qaoa_bound(p: usize, n: usize) -> f64 {
    if 2 * p < n {
        1.0 / (2 * p + 2) as f64
    } else {
        0.0
    }
}

/// Effective annealing parameter `s_t = gamma_t / (gamma_t + beta_t)`.
pub fn schedule_to_s(sched: &Schedule) -> Result<Vec<f64>> {
    sched
        .steps()
        .enumerate()
        .map(|(t, (g, b))| {
            let d = g + b;
            if d == 0.0 {
                Err(Error::InvalidSchedule(format!("gamma + beta vanishes at step {}", t + 1)))
            } else {
                Ok(g / d)
            }
        })
        .collect()
}
