//! Exact polynomial-cost simulation through the Jordan-Wigner mapping.
//!
//! Conventions (locked by the oracle tests below):
//!
//! * `s^x_j = 1 - 2 n_j`, `s^z_j = (c_j + c_j^dag) prod_{l<j} (1 - 2 n_l)`, so `|+>` is
//!   the fermionic vacuum.
//! * A quadratic Hamiltonian is `sum a_ij c_i^dag c_j + 1/2 sum (b_ij c_i^dag c_j^dag + h.c.)
//!   + constant`, with Bogoliubov-de Gennes matrix `[[a, b], [-conj(b), -conj(a)]]`.
//! * A Gaussian state is the vacuum of `gamma_k = sum_i conj(u_ik) c_i + conj(v_ik) c_i^dag`.
//!   Evolving by `exp(-i theta H)` multiplies the stacked frame `[u; v]` by
//!   `exp(-i theta H_BdG)`.
//! * Both QAOA unitaries conserve fermion parity and `|+>` is even, so the
//!   wrap-around bond carries the antiperiodic sign.

mod frame;
mod momentum;

pub use frame::{run_schedule_fermion, Frame};
pub use momentum::{run_schedule_uniform_k, MomentumEngine, MomentumState};

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::chain::{ChainSpec, Schedule};
use crate::error::{Error, Result};
use crate::record::MeasurementRecord;

type CMatrix = DMatrix<Complex64>;

#[cfg(test)]
const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

#[inline]
fn real(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

/// Hopping `a`, pairing `b` and a constant offset.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticHamiltonian {
    pub a: CMatrix,
    pub b: CMatrix,
    pub constant: f64,
}

impl QuadraticHamiltonian {
    pub fn n_modes(&self) -> usize {
        self.a.nrows()
    }

    /// Largest deviation from `a = a^dag` and `b = -b^T`.
    pub fn symmetry_error(&self) -> f64 {
        let ah = (&self.a - self.a.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max);
        let bt = (&self.b + self.b.transpose()).iter().map(|z| z.norm()).fold(0.0, f64::max);
        ah.max(bt)
    }

    /// The `2N x 2N` Bogoliubov-de Gennes matrix.
    pub fn bdg_matrix(&self) -> CMatrix {
        let n = self.n_modes();
        let mut h = CMatrix::zeros(2 * n, 2 * n);
        h.view_mut((0, 0), (n, n)).copy_from(&self.a);
        h.view_mut((0, n), (n, n)).copy_from(&self.b);
        h.view_mut((n, 0), (n, n)).copy_from(&(-self.b.conjugate()));
        h.view_mut((n, n), (n, n)).copy_from(&(-self.a.conjugate()));
        h
    }
}

/// Fermionic images of `H_z` and `H_x`.
pub fn build_quadratic(spec: &ChainSpec) -> (QuadraticHamiltonian, QuadraticHamiltonian) {
    let n = spec.n_sites();
    let mut a = CMatrix::zeros(n, n);
    let mut b = CMatrix::zeros(n, n);
    for (j, &coupling) in spec.couplings().iter().enumerate() {
        let (s0, s1) = spec.bond_sites(j);
        let k = bond_sign(n, j) * coupling;
        a[(s0, s1)] -= real(k);
        a[(s1, s0)] -= real(k);
        b[(s0, s1)] -= real(k);
        b[(s1, s0)] += real(k);
    }
    let hz = QuadraticHamiltonian { a, b, constant: 0.0 };
    let hx = QuadraticHamiltonian {
        a: CMatrix::identity(n, n) * real(2.0),
        b: CMatrix::zeros(n, n),
        constant: -(n as f64),
    };
    (hz, hx)
}

/// `+1` for bulk bonds, `-1` for the wrap-around bond.
#[inline]
pub(crate) fn bond_sign(n: usize, bond: usize) -> f64 {
    if bond + 1 == n {
        -1.0
    } else {
        1.0
    }
}

/// Eigendecomposition `H_BdG = Q diag(lambda) Q^dag`, computed once per
/// Hamiltonian and reused for every evolution.
#[derive(Debug, Clone)]
pub struct BdgEigensystem {
    pub eigenvalues: DVector<f64>,
    pub eigenvectors: CMatrix,
}

impl BdgEigensystem {
    pub fn new(h: &QuadraticHamiltonian) -> Result<Self> {
        if h.symmetry_error() > 1e-12 {
            return Err(Error::Numerical("quadratic Hamiltonian violates a = a^dag, b = -b^T".into()));
        }
        let eig = SymmetricEigen::new(h.bdg_matrix());
        if eig.eigenvalues.iter().any(|x| !x.is_finite()) {
            return Err(Error::Numerical("BdG diagonalization produced non-finite eigenvalues".into()));
        }
        Ok(Self { eigenvalues: eig.eigenvalues, eigenvectors: eig.eigenvectors })
    }

    /// `max |Q diag(lambda) Q^dag - H_BdG|`.
    pub fn reconstruction_error(&self, h: &QuadraticHamiltonian) -> f64 {
        let lambda = CMatrix::from_diagonal(&self.eigenvalues.map(real));
        let back = &self.eigenvectors * lambda * self.eigenvectors.adjoint();
        (back - h.bdg_matrix()).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Eigenvalues in ascending order.
    pub fn sorted_eigenvalues(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.eigenvalues.iter().copied().collect();
        v.sort_by(f64::total_cmp);
        v
    }

    /// `exp(-i theta H_BdG)`.
    pub fn propagator(&self, theta: f64) -> CMatrix {
        let q = &self.eigenvectors;
        let phases = self.eigenvalues.map(|l| Complex64::cis(-theta * l));
        let mut scaled = q.clone();
        for (mut col, p) in scaled.column_iter_mut().zip(phases.iter()) {
            col *= *p;
        }
        scaled * q.adjoint()
    }
}

/// Gaussian state in Bogoliubov frame form.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianState {
    pub u: CMatrix,
    pub v: CMatrix,
}

impl GaussianState {
    /// The c-fermion vacuum, i.e. `|+>`.
    pub fn vacuum(n: usize) -> Self {
        Self { u: CMatrix::identity(n, n), v: CMatrix::zeros(n, n) }
    }

    pub fn n_modes(&self) -> usize {
        self.u.nrows()
    }

    /// `max |u^dag u + v^dag v - 1|`.
    pub fn isometry_error(&self) -> f64 {
        let n = self.n_modes();
        let gram = self.u.adjoint() * &self.u + self.v.adjoint() * &self.v;
        (gram - CMatrix::identity(n, n)).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// The full Bogoliubov transformation `[[u, conj(v)], [v, conj(u)]]`.
    pub fn bogoliubov_matrix(&self) -> CMatrix {
        let n = self.n_modes();
        let mut t = CMatrix::zeros(2 * n, 2 * n);
        t.view_mut((0, 0), (n, n)).copy_from(&self.u);
        t.view_mut((0, n), (n, n)).copy_from(&self.v.conjugate());
        t.view_mut((n, 0), (n, n)).copy_from(&self.v);
        t.view_mut((n, n), (n, n)).copy_from(&self.u.conjugate());
        t
    }

    /// Applies `exp(-i theta H)` through the cached eigensystem of `H`.
    pub fn evolve(&mut self, eig: &BdgEigensystem, theta: f64) {
        let n = self.n_modes();
        let mut stacked = CMatrix::zeros(2 * n, n);
        stacked.view_mut((0, 0), (n, n)).copy_from(&self.u);
        stacked.view_mut((n, 0), (n, n)).copy_from(&self.v);
        let q = &eig.eigenvectors;
        let mut rotated = q.adjoint() * stacked;
        for (mut row, l) in rotated.row_iter_mut().zip(eig.eigenvalues.iter()) {
            row *= Complex64::cis(-theta * l);
        }
        let out = q * rotated;
        self.u.copy_from(&out.view((0, 0), (n, n)));
        self.v.copy_from(&out.view((n, 0), (n, n)));
    }

    /// `g_ij = <c_i^dag c_j> = (v v^dag)_ij`, `f_ij = <c_i c_j> = (u v^dag)_ij`.
    pub fn correlators(&self) -> (CMatrix, CMatrix) {
        let vd = self.v.adjoint();
        (&self.v * &vd, &self.u * vd)
    }

    pub fn measure(&self, spec: &ChainSpec) -> Result<MeasurementRecord> {
        let n = spec.n_sites();
        if n != self.n_modes() {
            return Err(Error::DimensionMismatch { expected: self.n_modes(), got: n });
        }
        let (g, f) = self.correlators();
        let x = (0..n).map(|j| 1.0 - 2.0 * g[(j, j)].re).collect();
        let zz = (0..n)
            .map(|bond| {
                let (i, j) = spec.bond_sites(bond);
                bond_sign(n, bond) * 2.0 * (g[(i, j)] - f[(i, j)]).re
            })
            .collect();
        Ok(MeasurementRecord::from_local(spec, zz, x))
    }
}

/// Cached eigensystems of both QAOA generators for one instance.
#[derive(Debug, Clone)]
pub struct DenseEngine {
    spec: ChainSpec,
    hz: BdgEigensystem,
    hx: BdgEigensystem,
}

impl DenseEngine {
    pub fn new(spec: &ChainSpec) -> Result<Self> {
        let (hz, hx) = build_quadratic(spec);
        Ok(Self { spec: spec.clone(), hz: BdgEigensystem::new(&hz)?, hx: BdgEigensystem::new(&hx)? })
    }

    pub fn step(&self, state: &mut GaussianState, gamma: f64, beta: f64) {
        state.evolve(&self.hz, gamma);
        state.evolve(&self.hx, beta);
    }

    pub fn spec(&self) -> &ChainSpec {
        &self.spec
    }
}

/// Reference real-space run through full BdG exponentials, `O(N^3)` per step.
pub fn run_schedule_dense(spec: &ChainSpec, sched: &Schedule) -> Result<(Vec<MeasurementRecord>, f64)> {
    let engine = DenseEngine::new(spec)?;
    let mut state = GaussianState::vacuum(spec.n_sites());
    let mut trace = Vec::with_capacity(sched.p());
    for (gamma, beta) in sched.steps() {
        engine.step(&mut state, gamma, beta);
        trace.push(state.measure(spec)?);
    }
    let e_p = trace.last().map(|r| r.energy).unwrap_or(0.0);
    Ok((trace, e_p))
}
