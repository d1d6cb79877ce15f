//! Dense `2^N`-amplitude simulator. It is the ground truth every other
//! back-end is checked against, so it favors directness over speed.
//!
//! Basis index bit `j` holds spin `j`; a clear bit is spin up (`s^z = +1`).

use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;

use crate::chain::{ChainSpec, Schedule};
use crate::error::{Error, Result};
use crate::record::MeasurementRecord;

/// Largest chain the oracle will allocate.
pub const MAX_ORACLE_SITES: usize = 20;

#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    n: usize,
    amplitudes: Vec<Complex64>,
}

#[inline]
fn spin(config: usize, site: usize) -> f64 {
    if config >> site & 1 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Classical energy `E_z(c) = -sum_j J_j s_j s_{j+1}` of one configuration.
pub fn z_energy(spec: &ChainSpec, config: usize) -> f64 {
    (0..spec.n_sites())
        .map(|j| {
            let (a, b) = spec.bond_sites(j);
            -spec.couplings()[j] * spin(config, a) * spin(config, b)
        })
        .sum()
}

/// `E_z` for every basis configuration, in basis order.
pub fn z_energies(spec: &ChainSpec) -> Result<Vec<f64>> {
    check_size(spec.n_sites())?;
    Ok((0..1usize << spec.n_sites()).map(|c| z_energy(spec, c)).collect())
}

fn check_size(n: usize) -> Result<()> {
    if n == 0 || n > MAX_ORACLE_SITES {
        Err(Error::TooLarge { n, max: MAX_ORACLE_SITES })
    } else {
        Ok(())
    }
}

impl StateVector {
    /// `|+>`, the ground state of `H_x`.
    pub fn plus(n: usize) -> Result<Self> {
        check_size(n)?;
        let dim = 1usize << n;
        let a = 1.0 / libm::sqrt(dim as f64);
        Ok(Self { n, amplitudes: vec![Complex64::new(a, 0.0); dim] })
    }

    /// A computational basis state.
    pub fn basis(n: usize, config: usize) -> Result<Self> {
        check_size(n)?;
        let mut amplitudes = vec![Complex64::new(0.0, 0.0); 1 << n];
        let slot = amplitudes
            .get_mut(config)
            .ok_or(Error::DimensionMismatch { expected: 1 << n, got: config })?;
        *slot = Complex64::new(1.0, 0.0);
        Ok(Self { n, amplitudes })
    }

    pub fn from_amplitudes(n: usize, amplitudes: Vec<Complex64>) -> Result<Self> {
        check_size(n)?;
        if amplitudes.len() != 1 << n {
            return Err(Error::DimensionMismatch { expected: 1 << n, got: amplitudes.len() });
        }
        Ok(Self { n, amplitudes })
    }

    pub fn n_sites(&self) -> usize {
        self.n
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }

    /// `<self|other>`.
    pub fn inner(&self, other: &Self) -> Complex64 {
        self.amplitudes.iter().zip(&other.amplitudes).map(|(a, b)| a.conj() * b).sum()
    }

    fn check_spec(&self, spec: &ChainSpec) -> Result<()> {
        if spec.n_sites() != self.n {
            return Err(Error::DimensionMismatch { expected: self.n, got: spec.n_sites() });
        }
        Ok(())
    }

    /// `exp(-i gamma H_z)`.
    pub fn apply_uz(&mut self, spec: &ChainSpec, gamma: f64) -> Result<()> {
        self.check_spec(spec)?;
        for (c, a) in self.amplitudes.iter_mut().enumerate() {
            *a *= Complex64::cis(-gamma * z_energy(spec, c));
        }
        Ok(())
    }

    /// `exp(-i gamma H_z)` with the diagonal of `H_z` precomputed.
    pub fn apply_uz_diagonal(&mut self, energies: &[f64], gamma: f64) -> Result<()> {
        if energies.len() != self.amplitudes.len() {
            return Err(Error::DimensionMismatch { expected: self.amplitudes.len(), got: energies.len() });
        }
        for (a, &e) in self.amplitudes.iter_mut().zip(energies) {
            *a *= Complex64::cis(-gamma * e);
        }
        Ok(())
    }

    /// `exp(-i beta H_x) = prod_j exp(i beta s^x_j)`, one site at a time.
    pub fn apply_ux(&mut self, beta: f64) {
        let (s, c) = libm::sincos(beta);
        let is = Complex64::new(0.0, s);
        for site in 0..self.n {
            let mask = 1usize << site;
            for c0 in 0..self.amplitudes.len() {
                if c0 & mask != 0 {
                    continue;
                }
                let c1 = c0 | mask;
                let (a0, a1) = (self.amplitudes[c0], self.amplitudes[c1]);
                self.amplitudes[c0] = a0 * c + is * a1;
                self.amplitudes[c1] = is * a0 + a1 * c;
            }
        }
    }

    /// Per-bond `<s^z s^z>`, per-site `<s^x>` and the Hamiltonian totals.
    pub fn measure(&self, spec: &ChainSpec) -> Result<MeasurementRecord> {
        self.check_spec(spec)?;
        let n = self.n;
        let mut zz = vec![0.0; n];
        let mut x = vec![0.0; n];
        for (c, a) in self.amplitudes.iter().enumerate() {
            let p = a.norm_sqr();
            for (j, slot) in zz.iter_mut().enumerate() {
                let (s0, s1) = spec.bond_sites(j);
                *slot += p * spin(c, s0) * spin(c, s1);
            }
            for (site, slot) in x.iter_mut().enumerate() {
                // <s^x> is real for any state once both orderings are summed.
                *slot += (a.conj() * self.amplitudes[c ^ (1 << site)]).re;
            }
        }
        Ok(MeasurementRecord::from_local(spec, zz, x))
    }
}

/// Runs a full QAOA circuit from `|+>`, measuring after every step.
pub fn run_schedule(spec: &ChainSpec, sched: &Schedule) -> Result<(Vec<MeasurementRecord>, f64)> {
    let energies = z_energies(spec)?;
    let mut state = StateVector::plus(spec.n_sites())?;
    let mut trace = Vec::with_capacity(sched.p());
    for (gamma, beta) in sched.steps() {
        state.apply_uz_diagonal(&energies, gamma)?;
        state.apply_ux(beta);
        trace.push(state.measure(spec)?);
    }
    let e_p = trace.last().map(|r| r.energy).unwrap_or(0.0);
    Ok((trace, e_p))
}
