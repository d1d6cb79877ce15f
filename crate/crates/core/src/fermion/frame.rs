//! Fast real-space evolution.
//!
//! Every bond term of `H_z` and every site term of `H_x` is a bilinear in two
//! Majorana operators, and within one generator those pairs are disjoint. In
//! the per-site basis `A_j = (u_j + v_j)/sqrt2`, `B_j = (u_j - v_j)/sqrt2` of the
//! frame rows each gate is therefore a set of independent 2x2 rotations:
//!
//! * `exp(-i beta H_x)` mixes `(A_j, B_j)` by `[[c, -is], [-is, c]]`, `c + is = exp(2i beta)`;
//! * `exp(-i gamma H_z)` mixes `(B_j, A_{j+1})` by `[[c, is], [is, c]]`,
//!   `c + is = exp(2i K gamma)` with `K = J_j` (the wrap bond uses `K = -J_N`).
//!
//! That is the cached BdG exponential applied bond by bond, `O(N^2)` per step.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;
use num_complex::Complex64;

use super::{bond_sign, GaussianState};
use crate::chain::{ChainSpec, Schedule};
use crate::error::{Error, Result};
use crate::record::MeasurementRecord;

const FRAC_1_SQRT_2: f64 = core::f64::consts::FRAC_1_SQRT_2;

/// Frame rows in the `(A_j, B_j)` basis, row-major, `2N x N`.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    n: usize,
    rows: Vec<Complex64>,
}

impl Frame {
    pub fn vacuum(n: usize) -> Self {
        let mut rows = vec![Complex64::new(0.0, 0.0); 2 * n * n];
        for j in 0..n {
            rows[(2 * j) * n + j] = Complex64::new(FRAC_1_SQRT_2, 0.0);
            rows[(2 * j + 1) * n + j] = Complex64::new(FRAC_1_SQRT_2, 0.0);
        }
        Self { n, rows }
    }

    pub fn n_modes(&self) -> usize {
        self.n
    }

    #[inline]
    fn row(&self, r: usize) -> &[Complex64] {
        &self.rows[r * self.n..(r + 1) * self.n]
    }

    /// `x0 <- c x0 + i s x1`, `x1 <- c x1 + i s x0`.
    #[inline]
    fn rotate(&mut self, r0: usize, r1: usize, c: f64, s: f64) {
        let n = self.n;
        let (lo, hi, swap) = if r0 < r1 { (r0, r1, false) } else { (r1, r0, true) };
        let (head, tail) = self.rows.split_at_mut(hi * n);
        let a = &mut head[lo * n..(lo + 1) * n];
        let b = &mut tail[..n];
        let (x0, x1) = if swap { (b, a) } else { (a, b) };
        for (p, q) in x0.iter_mut().zip(x1.iter_mut()) {
            let (u, w) = (*p, *q);
            // i s w = (-s w.im, s w.re)
            *p = Complex64::new(c * u.re - s * w.im, c * u.im + s * w.re);
            *q = Complex64::new(c * w.re - s * u.im, c * w.im + s * u.re);
        }
    }

    fn check(&self, spec: &ChainSpec) -> Result<()> {
        if spec.n_sites() != self.n {
            return Err(Error::DimensionMismatch { expected: self.n, got: spec.n_sites() });
        }
        Ok(())
    }

    /// `exp(-i gamma H_z)`.
    pub fn apply_uz(&mut self, spec: &ChainSpec, gamma: f64) -> Result<()> {
        self.check(spec)?;
        for (bond, &j) in spec.couplings().iter().enumerate() {
            let (s0, s1) = spec.bond_sites(bond);
            let (s, c) = libm::sincos(2.0 * bond_sign(self.n, bond) * j * gamma);
            self.rotate(2 * s0 + 1, 2 * s1, c, s);
        }
        Ok(())
    }

    /// `exp(-i beta H_x)`.
    pub fn apply_ux(&mut self, beta: f64) {
        let (s, c) = libm::sincos(2.0 * beta);
        for j in 0..self.n {
            self.rotate(2 * j, 2 * j + 1, c, -s);
        }
    }

    /// Per-site `<s^x>` and per-bond `<s^z s^z>` without materializing `g, f`.
    fn local(&self) -> (Vec<f64>, Vec<f64>) {
        let n = self.n;
        let x = (0..n)
            .map(|j| {
                let d: f64 = self.row(2 * j).iter().zip(self.row(2 * j + 1)).map(|(a, b)| (a - b).norm_sqr()).sum();
                1.0 - d
            })
            .collect();
        let zz = (0..n)
            .map(|bond| {
                let (s0, s1) = (bond, (bond + 1) % n);
                // 2 Re(g - f)_{s0 s1} = -2 Re sum_m B_{s0 m} conj(A_{s1 m} - B_{s1 m})
                let acc: f64 = self
                    .row(2 * s0 + 1)
                    .iter()
                    .zip(self.row(2 * s1).iter().zip(self.row(2 * s1 + 1)))
                    .map(|(b0, (a1, b1))| (b0 * (a1 - b1).conj()).re)
                    .sum();
                -2.0 * bond_sign(n, bond) * acc
            })
            .collect();
        (zz, x)
    }

    pub fn measure(&self, spec: &ChainSpec) -> Result<MeasurementRecord> {
        self.check(spec)?;
        let (zz, x) = self.local();
        Ok(MeasurementRecord::from_local(spec, zz, x))
    }

    /// Back to the `(u, v)` representation.
    pub fn to_gaussian(&self) -> GaussianState {
        let n = self.n;
        let u = DMatrix::from_fn(n, n, |i, m| (self.row(2 * i)[m] + self.row(2 * i + 1)[m]) * FRAC_1_SQRT_2);
        let v = DMatrix::from_fn(n, n, |i, m| (self.row(2 * i)[m] - self.row(2 * i + 1)[m]) * FRAC_1_SQRT_2);
        GaussianState { u, v }
    }
}

/// Runs a full QAOA circuit from `|+>` on the free-fermion engine.
pub fn run_schedule_fermion(spec: &ChainSpec, sched: &Schedule) -> Result<(Vec<MeasurementRecord>, f64)> {
    let mut frame = Frame::vacuum(spec.n_sites());
    let mut trace = Vec::with_capacity(sched.p());
    for (gamma, beta) in sched.steps() {
        frame.apply_uz(spec, gamma)?;
        frame.apply_ux(beta);
        trace.push(frame.measure(spec)?);
    }
    let e_p = trace.last().map(|r| r.energy).unwrap_or(0.0);
    Ok((trace, e_p))
}

#[cfg(test)]
mod tests {
    use super::super::{run_schedule_dense, DenseEngine};
    use super::*;
    use crate::chain::{make_disordered, make_uniform};
    use crate::statevector;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_schedule(p: usize, rng: &mut ChaCha8Rng) -> Schedule {
        let mut draw = || (0..p).map(|_| rng.random::<f64>() * core::f64::consts::FRAC_PI_2).collect();
        let g = draw();
        let b = draw();
        Schedule::new(g, b).unwrap()
    }

    #[test]
    fn vacuum_is_identity_frame() {
        let g = Frame::vacuum(6).to_gaussian();
        let vac = GaussianState::vacuum(6);
        assert!(g.isometry_error() < 1e-15);
        assert!((&g.u - &vac.u).iter().chain(g.v.iter()).all(|z| z.norm() < 1e-15));
    }

    #[test]
    fn matches_dense_bdg_exponentials() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for spec in [
            ChainSpec::new_small(vec![0.4, 0.9], 0.0).unwrap(),
            make_uniform(6, 1.0, 0.0).unwrap(),
            make_disordered(10, 0.0, 42).unwrap(),
        ] {
            let n = spec.n_sites();
            let dense = DenseEngine::new(&spec).unwrap();
            let mut reference = GaussianState::vacuum(n);
            let mut frame = Frame::vacuum(n);
            for _ in 0..6 {
                let (g, b) = (rng.random::<f64>() * 2.0 - 0.5, rng.random::<f64>() * 2.0 - 0.5);
                dense.step(&mut reference, g, b);
                frame.apply_uz(&spec, g).unwrap();
                frame.apply_ux(b);
                let fast = frame.to_gaussian();
                let err = (&fast.u - &reference.u)
                    .iter()
                    .chain((&fast.v - &reference.v).iter())
                    .map(|z| z.norm())
                    .fold(0.0, f64::max);
                assert!(err < 1e-10, "{err}");
            }
        }
    }

    #[test]
    fn agrees_with_oracle_and_dense_runs() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let spec = make_disordered(8, 0.0, 42).unwrap();
        for _ in 0..20 {
            let sched = random_schedule(4, &mut rng);
            let (fast, e_fast) = run_schedule_fermion(&spec, &sched).unwrap();
            let (slow, e_slow) = run_schedule_dense(&spec, &sched).unwrap();
            let (exact, e_exact) = statevector::run_schedule(&spec, &sched).unwrap();
            assert!((e_fast - e_exact).abs() < 1e-8 && (e_fast - e_slow).abs() < 1e-10);
            for ((a, b), c) in fast.iter().zip(&slow).zip(&exact) {
                assert!(a.max_abs_diff(b) < 1e-10);
                assert!(a.max_abs_diff(c) < 1e-8);
            }
        }
    }

    #[test]
    fn isometry_survives_long_runs() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let spec = make_disordered(32, 0.0, 9).unwrap();
        let mut frame = Frame::vacuum(32);
        for _ in 0..2000 {
            frame.apply_uz(&spec, rng.random::<f64>() * 3.0).unwrap();
            frame.apply_ux(rng.random::<f64>() * 3.0);
        }
        assert!(frame.to_gaussian().isometry_error() < 1e-10);
    }

    #[test]
    fn zero_schedule_and_size_checks() {
        let spec = make_uniform(128, 1.0, 0.0).unwrap();
        let (_, e) = run_schedule_fermion(&spec, &Schedule::zeros(3).unwrap()).unwrap();
        assert_eq!(e, 0.0);
        let mut frame = Frame::vacuum(8);
        assert!(frame.apply_uz(&spec, 0.1).is_err());
    }
}
