//! Classical refinement of schedules: BFGS on finite-difference gradients,
//! the iterative smooth-schedule baseline, and the RL+LO pipeline.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::FRAC_PI_2;

use nalgebra::{DMatrix, DVector};

use crate::backend::Engine;
use crate::chain::{classical_extremes, residual_energy_density, EnergyExtremes, Schedule};
use crate::error::{Error, Result};
use crate::exec::Executor;

/// Central-difference step for objective gradients.
pub const FD_STEP: f64 = 1e-5;

/// `E_P` as a function of the flattened angles (gammas, then betas).
#[derive(Debug, Clone, Copy)]
pub struct Objective<'e> {
    engine: &'e Engine,
    extremes: EnergyExtremes,
}

impl<'e> Objective<'e> {
    pub fn new(engine: &'e Engine) -> Result<Self> {
        Ok(Self { engine, extremes: classical_extremes(engine.spec())? })
    }

    pub fn engine(&self) -> &'e Engine {
        self.engine
    }

    pub fn extremes(&self) -> EnergyExtremes {
        self.extremes
    }

    pub fn energy(&self, params: &[f64]) -> Result<f64> {
        self.energy_of(&Schedule::from_params(params)?)
    }

    pub fn energy_of(&self, sched: &Schedule) -> Result<f64> {
        let e = self.engine.final_energy(sched)?;
        if e.is_finite() {
            Ok(e)
        } else {
            Err(Error::Numerical("non-finite energy".into()))
        }
    }

    pub fn eps(&self, e_p: f64) -> Result<f64> {
        residual_energy_density(e_p, self.extremes)
    }
}

/// Second-order central differences; the `2n` probes run on `exec`.
pub fn fd_gradient<X: Executor>(exec: &X, obj: &Objective<'_>, x: &[f64], h: f64) -> Result<Vec<f64>> {
    fd_probe(exec, obj, x, h).map(|(g, _)| g)
}

/// Gradient plus the lowest probe energy.
fn fd_probe<X: Executor>(exec: &X, obj: &Objective<'_>, x: &[f64], h: f64) -> Result<(Vec<f64>, f64)> {
    let n = x.len();
    let probes = exec.try_map(2 * n, |k| {
        let mut y = x.to_vec();
        y[k / 2] += if k % 2 == 0 { h } else { -h };
        obj.energy(&y)
    })?;
    let lowest = probes.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(((0..n).map(|i| (probes[2 * i] - probes[2 * i + 1]) / (2.0 * h)).collect(), lowest))
}

/// Fourth-order central differences, used to audit `fd_gradient`.
pub fn fd_gradient_4th<X: Executor>(exec: &X, obj: &Objective<'_>, x: &[f64], h: f64) -> Result<Vec<f64>> {
    const OFFSETS: [f64; 4] = [2.0, 1.0, -1.0, -2.0];
    let n = x.len();
    let probes = exec.try_map(4 * n, |k| {
        let mut y = x.to_vec();
        y[k / 4] += OFFSETS[k % 4] * h;
        obj.energy(&y)
    })?;
    Ok((0..n)
        .map(|i| {
            let f = &probes[4 * i..4 * i + 4];
            (-f[0] + 8.0 * f[1] - 8.0 * f[2] + f[3]) / (12.0 * h)
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoOptions {
    /// Stop once the gradient's infinity norm is at most this.
    pub gtol: f64,
    pub max_iters: usize,
    pub fd_step: f64,
    /// Longest step (infinity norm) a single line search may take; keeps the
    /// search in the basin of the starting point.
    pub max_step: f64,
}

impl Default for LoOptions {
    fn default() -> Self {
        Self { gtol: 1e-8, max_iters: 500, fd_step: FD_STEP, max_step: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizeReport {
    pub initial: Schedule,
    pub final_schedule: Schedule,
    pub e_initial: f64,
    pub e_final: f64,
    pub eps_initial: f64,
    pub eps_final: f64,
    pub iterations: usize,
    /// Infinity norm of the gradient at exit.
    pub gnorm: f64,
    pub converged: bool,
    /// Lowest energy of any schedule evaluated along the way, probes included.
    pub e_lowest_seen: f64,
}

fn inf_norm(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

const ARMIJO_C1: f64 = 1e-4;
const MAX_HALVINGS: usize = 60;

/// BFGS with backtracking Armijo steps. Only decreasing steps are accepted,
/// so the result is never worse than the start.
pub fn local_optimize<X: Executor>(exec: &X, engine: &Engine, init: &Schedule, opts: &LoOptions) -> Result<OptimizeReport> {
    let obj = Objective::new(engine)?;
    let n = 2 * init.p();
    let mut lowest = f64::INFINITY;
    let mut grad = |x: &DVector<f64>| -> Result<DVector<f64>> {
        let (g, low) = fd_probe(exec, &obj, x.as_slice(), opts.fd_step)?;
        lowest = lowest.min(low);
        Ok(DVector::from_vec(g))
    };

    let mut x = DVector::from_vec(init.to_params());
    let mut f = obj.energy(x.as_slice())?;
    let e_initial = f;
    let mut g = grad(&x)?;
    let mut trial_low = f;
    let mut h_inv = DMatrix::<f64>::identity(n, n);
    let mut fresh = true;
    let mut iterations = 0;
    let mut converged = inf_norm(&g) <= opts.gtol;

    while !converged && iterations < opts.max_iters {
        let mut d = -(&h_inv * &g);
        let mut slope = g.dot(&d);
        if !(slope < 0.0) {
            h_inv.fill_with_identity();
            fresh = true;
            d = -g.clone();
            slope = g.dot(&d);
        }
        let mut alpha = (opts.max_step / inf_norm(&d)).min(1.0);
        let mut accepted = None;
        for _ in 0..MAX_HALVINGS {
            let trial = &x + alpha * &d;
            let f_trial = obj.energy(trial.as_slice())?;
            trial_low = trial_low.min(f_trial);
            if f_trial <= f + ARMIJO_C1 * alpha * slope && f_trial <= f {
                accepted = Some((trial, f_trial));
                break;
            }
            alpha *= 0.5;
        }
        let Some((x_new, f_new)) = accepted else {
            if fresh {
                log::debug!("line search failed at iteration {iterations}, gnorm {:.3e}", inf_norm(&g));
                break;
            }
            h_inv.fill_with_identity();
            fresh = true;
            continue;
        };
        iterations += 1;
        let g_new = grad(&x_new)?;
        let s = &x_new - &x;
        let y = &g_new - &g;
        let sy = s.dot(&y);
        if sy > 1e-16 * s.norm() * y.norm() && sy > 0.0 {
            if fresh {
                // Scale the initial inverse Hessian to the observed curvature.
                h_inv *= sy / y.dot(&y);
            }
            let rho = 1.0 / sy;
            let hy = &h_inv * &y;
            let yhy = y.dot(&hy);
            // H <- (I - rho s y^T) H (I - rho y s^T) + rho s s^T
            h_inv += (rho * rho * yhy + rho) * (&s * s.transpose()) - rho * (&hy * s.transpose() + &s * hy.transpose());
            fresh = false;
        }
        let stalled = inf_norm(&s) == 0.0;
        x = x_new;
        f = f_new;
        g = g_new;
        converged = inf_norm(&g) <= opts.gtol;
        if stalled {
            break;
        }
    }
    let final_schedule = Schedule::from_params(x.as_slice())?;
    Ok(OptimizeReport {
        initial: init.clone(),
        final_schedule,
        e_initial,
        e_final: f,
        eps_initial: obj.eps(e_initial)?,
        eps_final: obj.eps(f)?,
        iterations,
        gnorm: inf_norm(&g),
        converged,
        e_lowest_seen: lowest.min(trial_low),
    })
}

const GRID_TIE_TOL: f64 = 1e-9;

/// Best `P = 1` angles on a `resolution x resolution` grid over `[0, pi/2]^2`.
pub fn grid_search_p1<X: Executor>(exec: &X, engine: &Engine, resolution: usize) -> Result<Schedule> {
    if resolution < 2 {
        return Err(Error::InvalidConfig("grid needs at least two points per axis".into()));
    }
    let obj = Objective::new(engine)?;
    let axis = |i: usize| FRAC_PI_2 * i as f64 / (resolution - 1) as f64;
    let energies = exec.try_map(resolution * resolution, |k| obj.energy(&[axis(k / resolution), axis(k % resolution)]))?;
    // The grid has symmetric copies of the optimum; round-off must not pick
    // between them, so take the first point within a tolerance of the minimum
    // (the one with the smallest angles).
    let min = energies.iter().copied().fold(f64::INFINITY, f64::min);
    let tol = GRID_TIE_TOL * (1.0 + min.abs());
    let best = energies.iter().position(|&e| e <= min + tol).expect("grid is not empty");
    Schedule::new(vec![axis(best / resolution)], vec![axis(best % resolution)])
}

/// Linear re-interpolation of a depth-`p` schedule onto `p + 1` points:
/// `x'_i = (i - 1)/p x_{i-1} + (p - i + 1)/p x_i`, with `x_0 = x_{p+1} = 0`.
pub fn interpolate_schedule(sched: &Schedule) -> Result<Schedule> {
    let p = sched.p();
    let stretch = |xs: &[f64]| -> Vec<f64> {
        (1..=p + 1)
            .map(|i| {
                let prev = if i >= 2 { xs[i - 2] } else { 0.0 };
                let cur = if i <= p { xs[i - 1] } else { 0.0 };
                ((i - 1) as f64 * prev + (p + 1 - i) as f64 * cur) / p as f64
            })
            .collect()
    };
    Schedule::new(stretch(sched.gammas()), stretch(sched.betas()))
}

/// Grid resolution of the `P = 1` seed.
pub const BASELINE_GRID: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineStep {
    pub p: usize,
    pub schedule: Schedule,
    pub eps: f64,
    pub report: OptimizeReport,
}

/// Grid search plus LO at `P = 1`, then interpolate and re-optimize up to
/// `p_max`.
pub fn iterative_baseline<X: Executor>(exec: &X, engine: &Engine, p_max: usize, opts: &LoOptions) -> Result<Vec<BaselineStep>> {
    if p_max == 0 {
        return Err(Error::InvalidConfig("p_max must be at least 1".into()));
    }
    let mut steps: Vec<BaselineStep> = Vec::with_capacity(p_max);
    let mut seed = grid_search_p1(exec, engine, BASELINE_GRID)?;
    for p in 1..=p_max {
        let report = local_optimize(exec, engine, &seed, opts)?;
        log::debug!("baseline P = {p}: eps {:.3e} after {} iterations", report.eps_final, report.iterations);
        let schedule = report.final_schedule.clone();
        seed = interpolate_schedule(&schedule)?;
        steps.push(BaselineStep { p, schedule, eps: report.eps_final, report });
    }
    Ok(steps)
}

/// LO applied to each schedule, with the index of the best result.
pub fn refine<X: Executor>(exec: &X, engine: &Engine, schedules: &[Schedule], opts: &LoOptions) -> Result<(Vec<OptimizeReport>, usize)> {
    if schedules.is_empty() {
        return Err(Error::InvalidConfig("nothing to refine".into()));
    }
    let reports = schedules.iter().map(|s| local_optimize(exec, engine, s, opts)).collect::<Result<Vec<_>>>()?;
    let best = reports.iter().enumerate().fold(0, |b, (k, r)| if r.eps_final < reports[b].eps_final { k } else { b });
    Ok((reports, best))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::Backend;
    use crate::chain::{make_disordered, make_uniform, qaoa_bound, schedule_to_s};
    use crate::exec::Sequential;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_schedule(p: usize, rng: &mut ChaCha8Rng) -> Schedule {
        let mut draw = || (0..p).map(|_| rng.random::<f64>() * FRAC_PI_2).collect();
        let g = draw();
        let b = draw();
        Schedule::new(g, b).unwrap()
    }

    #[test]
    fn objective_basics() {
        let engine = Engine::auto(&make_uniform(8, 1.0, 0.0).unwrap()).unwrap();
        let obj = Objective::new(&engine).unwrap();
        assert_eq!(obj.energy(&[0.0; 6]).unwrap(), 0.0);
        let x = [0.3, 0.1, 0.7, 0.2];
        assert_eq!(obj.energy(&x).unwrap(), obj.energy(&x).unwrap());
    }

    #[test]
    fn fd_gradient_agrees_with_fourth_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for spec in [make_uniform(8, 1.0, 0.0).unwrap(), make_disordered(16, 0.0, 3).unwrap()] {
            let engine = Engine::auto(&spec).unwrap();
            let obj = Objective::new(&engine).unwrap();
            for _ in 0..5 {
                let x = random_schedule(3, &mut rng).to_params();
                let g2 = fd_gradient(&Sequential, &obj, &x, FD_STEP).unwrap();
                let g4 = fd_gradient_4th(&Sequential, &obj, &x, 1e-3).unwrap();
                let scale = g4.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                for (a, b) in g2.iter().zip(&g4) {
                    assert!((a - b).abs() <= 1e-6 * scale, "{a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn interpolation() {
        let s = Schedule::new(vec![0.4], vec![0.2]).unwrap();
        let t = interpolate_schedule(&s).unwrap();
        assert_eq!((t.gammas(), t.betas()), (&[0.4, 0.4][..], &[0.2, 0.2][..]));
        let s = Schedule::new(vec![0.2, 0.6], vec![0.8, 0.4]).unwrap();
        let t = interpolate_schedule(&s).unwrap();
        assert_eq!(t.gammas(), &[0.2, 0.4, 0.6]);
        assert!((t.betas()[1] - 0.6).abs() < 1e-15);
    }

    #[test]
    fn p1_optimum_saturates_bound_on_n8() {
        let engine = Engine::auto(&make_uniform(8, 1.0, 0.0).unwrap()).unwrap();
        let seed = grid_search_p1(&Sequential, &engine, BASELINE_GRID).unwrap();
        let report = local_optimize(&Sequential, &engine, &seed, &LoOptions::default()).unwrap();
        assert!((report.eps_final - 0.25).abs() < 1e-9, "{}", report.eps_final);
        assert!(report.eps_final <= report.eps_initial + 1e-12);

        let again = local_optimize(&Sequential, &engine, &report.final_schedule, &LoOptions::default()).unwrap();
        let moved = again
            .final_schedule
            .to_params()
            .iter()
            .zip(report.final_schedule.to_params())
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(moved <= 1e-8, "{moved}");
    }

    #[test]
    fn exact_ground_state_at_p4_on_n8() {
        let engine = Engine::auto(&make_uniform(8, 1.0, 0.0).unwrap()).unwrap();
        let steps = iterative_baseline(&Sequential, &engine, 4, &LoOptions::default()).unwrap();
        for w in steps.windows(2) {
            assert!(w[1].eps <= w[0].eps + 1e-12);
        }
        assert!(steps[3].eps <= 1e-8, "{}", steps[3].eps);
        let obj = Objective::new(&engine).unwrap();
        assert!((obj.energy_of(&steps[3].schedule).unwrap() + 8.0).abs() < 1e-7);
    }

    #[test]
    fn descent_from_random_starts() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let engine = Engine::new(&make_disordered(10, 0.0, 5).unwrap(), Backend::Fermion).unwrap();
        for _ in 0..5 {
            let init = random_schedule(2, &mut rng);
            let r = local_optimize(&Sequential, &engine, &init, &LoOptions::default()).unwrap();
            assert!(r.eps_final <= r.eps_initial + 1e-12);
            assert_eq!(r.initial, init);
        }
    }

    #[test]
    fn baseline_on_n16_is_smooth_and_optimal() {
        let engine = Engine::auto(&make_uniform(16, 1.0, 0.0).unwrap()).unwrap();
        let steps = iterative_baseline(&Sequential, &engine, 4, &LoOptions::default()).unwrap();
        for step in &steps {
            assert!((step.eps - qaoa_bound(step.p, 16)).abs() < 1e-6, "P = {}: {}", step.p, step.eps);
            let s = schedule_to_s(&step.schedule).unwrap();
            assert!(s.windows(2).all(|w| w[1] >= w[0] - 1e-9), "{s:?}");
        }
    }

    #[test]
    fn refine_picks_best() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let engine = Engine::auto(&make_uniform(8, 1.0, 0.0).unwrap()).unwrap();
        let starts: Vec<Schedule> = (0..3).map(|_| random_schedule(1, &mut rng)).collect();
        let (reports, best) = refine(&Sequential, &engine, &starts, &LoOptions::default()).unwrap();
        assert_eq!(reports.len(), 3);
        assert!(reports.iter().all(|r| reports[best].eps_final <= r.eps_final));
        assert!(refine(&Sequential, &engine, &[], &LoOptions::default()).is_err());
    }
}
