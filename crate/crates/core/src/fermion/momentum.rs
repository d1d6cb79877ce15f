//! Translation-invariant fast path. With antiperiodic fermions the uniform
//! chain splits into `N/2` independent pairs `(k, -k)`, `k = (2m - 1) pi / N`,
//! each a two-level system in the basis `{|0>, c_k^dag c_-k^dag |0>}`:
//!
//! * `H_z` acts as `2J (cos k tau_z - sin k tau_y)` (up to a constant),
//! * `H_x` acts as `-2 tau_z` (up to a constant).

use alloc::vec::Vec;

use num_complex::Complex64;

use crate::chain::{ChainSpec, Schedule};
use crate::error::{Error, Result};
use crate::record::MeasurementRecord;

/// Momenta and the uniform coupling for one chain.
#[derive(Debug, Clone)]
pub struct MomentumEngine {
    spec: ChainSpec,
    coupling: f64,
    /// `(cos k, sin k)` per positive momentum.
    modes: Vec<(f64, f64)>,
}

/// One two-level amplitude pair per positive momentum.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentumState {
    psi: Vec<[Complex64; 2]>,
}

impl MomentumEngine {
    pub fn new(spec: &ChainSpec) -> Result<Self> {
        if !spec.is_uniform() {
            return Err(Error::InvalidChain("momentum path requires uniform couplings".into()));
        }
        let n = spec.n_sites();
        let modes = (1..=n / 2)
            .map(|m| {
                let k = (2 * m - 1) as f64 * core::f64::consts::PI / n as f64;
                (libm::cos(k), libm::sin(k))
            })
            .collect();
        Ok(Self { spec: spec.clone(), coupling: spec.couplings()[0], modes })
    }

    pub fn spec(&self) -> &ChainSpec {
        &self.spec
    }

    pub fn vacuum(&self) -> MomentumState {
        let one = [Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)];
        MomentumState { psi: alloc::vec![one; self.modes.len()] }
    }

    /// `exp(-i gamma H_z)`: rotation by `phi = 2 J gamma` about `(0, -sin k, cos k)`.
    pub fn apply_uz(&self, state: &mut MomentumState, gamma: f64) {
        let (s, c) = libm::sincos(2.0 * self.coupling * gamma);
        for (amp, &(ck, sk)) in state.psi.iter_mut().zip(&self.modes) {
            // cos(phi) - i sin(phi) [[cos k, i sin k], [-i sin k, -cos k]]
            let m00 = Complex64::new(c, -s * ck);
            let m01 = Complex64::new(s * sk, 0.0);
            let m10 = Complex64::new(-s * sk, 0.0);
            let m11 = Complex64::new(c, s * ck);
            let [a, b] = *amp;
            *amp = [m00 * a + m01 * b, m10 * a + m11 * b];
        }
    }

    /// `exp(-i beta H_x) = exp(2 i beta tau_z)` up to a global phase.
    pub fn apply_ux(&self, state: &mut MomentumState, beta: f64) {
        let up = Complex64::cis(2.0 * beta);
        let down = up.conj();
        for amp in &mut state.psi {
            amp[0] *= up;
            amp[1] *= down;
        }
    }

    /// Bond and site expectation values, identical on every bond and site.
    pub fn local(&self, state: &MomentumState) -> (f64, f64) {
        let n = self.spec.n_sites() as f64;
        let mut zz = 0.0;
        let mut x = 0.0;
        for ([a, b], &(ck, sk)) in state.psi.iter().zip(&self.modes) {
            let tz = a.norm_sqr() - b.norm_sqr();
            let ty = 2.0 * (a.conj() * b).im;
            zz += ck * tz - sk * ty;
            x += tz;
        }
        (-2.0 * zz / n, 2.0 * x / n)
    }

    pub fn measure(&self, state: &MomentumState) -> MeasurementRecord {
        let n = self.spec.n_sites();
        let (zz, x) = self.local(state);
        MeasurementRecord::from_local(&self.spec, alloc::vec![zz; n], alloc::vec![x; n])
    }
}

/// Uniform-chain run, `O(N)` per step.
pub fn run_schedule_uniform_k(spec: &ChainSpec, sched: &Schedule) -> Result<(Vec<MeasurementRecord>, f64)> {
    let engine = MomentumEngine::new(spec)?;
    let mut state = engine.vacuum();
    let mut trace = Vec::with_capacity(sched.p());
    for (gamma, beta) in sched.steps() {
        engine.apply_uz(&mut state, gamma);
        engine.apply_ux(&mut state, beta);
        trace.push(engine.measure(&state));
    }
    let e_p = trace.last().map(|r| r.energy).unwrap_or(0.0);
    Ok((trace, e_p))
}
