//! Small dense networks with hand-written backpropagation, the Gaussian
//! policy head, the value head and Adam.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::{FRAC_PI_8, PI};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// Hidden widths of both networks.
pub const HIDDEN: [usize; 2] = [32, 16];
pub const ACTION_DIM: usize = 2;
pub const LOG_STD_MIN: f64 = -5.0;
pub const LOG_STD_MAX: f64 = 1.0;
/// Initial spread, about a twentieth of the action box.
pub const LOG_STD_INIT: f64 = -2.5;
/// Shrinks the policy's initial output weights so every observation starts
/// near the box center.
pub const POLICY_OUT_SCALE: f64 = 0.01;
/// Initial mean of both angles.
pub const POLICY_MEAN_INIT: f64 = FRAC_PI_8;

/// Fully connected network, ReLU between layers, linear output.
///
/// Parameters live in one flat vector: for each layer the `out x in`
/// row-major weight matrix followed by the `out` biases.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    sizes: Vec<usize>,
    params: Vec<f64>,
}

/// Activations kept from a forward pass for the backward pass.
#[derive(Debug, Clone, Default)]
pub struct Tape {
    acts: Vec<Vec<f64>>,
}

fn param_count(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

impl Mlp {
    /// He-scaled Gaussian weights, zero biases.
    pub fn new(sizes: &[usize], seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Vec::with_capacity(param_count(sizes));
        for w in sizes.windows(2) {
            let (n_in, n_out) = (w[0], w[1]);
            let scale = libm::sqrt(2.0 / n_in as f64);
            for _ in 0..n_in * n_out {
                let z: f64 = StandardNormal.sample(&mut rng);
                params.push(scale * z);
            }
            params.extend(core::iter::repeat_n(0.0, n_out));
        }
        Self { sizes: sizes.to_vec(), params }
    }

    pub fn zeros(sizes: &[usize]) -> Self {
        Self { sizes: sizes.to_vec(), params: vec![0.0; param_count(sizes)] }
    }

    /// Rebuilds a network from stored parameters.
    pub fn from_params(sizes: &[usize], params: Vec<f64>) -> Result<Self> {
        if sizes.len() < 2 || params.len() != param_count(sizes) {
            return Err(Error::DimensionMismatch { expected: param_count(sizes), got: params.len() });
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Numerical("non-finite network parameter".into()));
        }
        Ok(Self { sizes: sizes.to_vec(), params })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().expect("at least two layers")
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    /// `(weights, biases)` of each layer.
    pub fn layers(&self) -> Vec<(&[f64], &[f64])> {
        let mut out = Vec::with_capacity(self.sizes.len() - 1);
        let mut off = 0;
        for w in self.sizes.windows(2) {
            let (n_in, n_out) = (w[0], w[1]);
            let weights = &self.params[off..off + n_in * n_out];
            let biases = &self.params[off + n_in * n_out..off + n_in * n_out + n_out];
            out.push((weights, biases));
            off += n_in * n_out + n_out;
        }
        out
    }

    /// Mutable weights and biases of the output layer.
    pub fn output_layer_mut(&mut self) -> (&mut [f64], &mut [f64]) {
        let n_out = self.output_dim();
        let n_in = self.sizes[self.sizes.len() - 2];
        let len = self.params.len();
        self.params[len - n_out - n_in * n_out..].split_at_mut(n_in * n_out)
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut tape = Tape::default();
        self.forward_tape(x, &mut tape).to_vec()
    }

    /// Forward pass recording every layer's output.
    pub fn forward_tape<'t>(&self, x: &[f64], tape: &'t mut Tape) -> &'t [f64] {
        assert_eq!(x.len(), self.input_dim(), "input width");
        let n_layers = self.sizes.len() - 1;
        tape.acts.resize(self.sizes.len(), Vec::new());
        tape.acts[0].clear();
        tape.acts[0].extend_from_slice(x);
        let mut off = 0;
        for l in 0..n_layers {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let (w, rest) = self.params[off..].split_at(n_in * n_out);
            let b = &rest[..n_out];
            let (before, after) = tape.acts.split_at_mut(l + 1);
            let input = &before[l];
            let out = &mut after[0];
            out.clear();
            for (row, &bias) in w.chunks_exact(n_in).zip(b) {
                let z = row.iter().zip(input).fold(bias, |acc, (wi, xi)| acc + wi * xi);
                out.push(if l + 1 < n_layers { z.max(0.0) } else { z });
            }
            off += n_in * n_out + n_out;
        }
        &tape.acts[n_layers]
    }

    /// Accumulates `d(upstream . y)/d params` into `grads`.
    pub fn backward(&self, tape: &Tape, upstream: &[f64], grads: &mut [f64]) {
        let n_layers = self.sizes.len() - 1;
        assert_eq!(upstream.len(), self.output_dim(), "upstream width");
        assert_eq!(grads.len(), self.params.len(), "gradient length");
        let mut delta: Vec<f64> = upstream.to_vec();
        let mut off = self.params.len();
        for l in (0..n_layers).rev() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            off -= n_in * n_out + n_out;
            let input = &tape.acts[l];
            let (gw, gb) = grads[off..off + n_in * n_out + n_out].split_at_mut(n_in * n_out);
            for (o, &d) in delta.iter().enumerate() {
                gb[o] += d;
                if d != 0.0 {
                    for (g, &xi) in gw[o * n_in..(o + 1) * n_in].iter_mut().zip(input) {
                        *g += d * xi;
                    }
                }
            }
            if l == 0 {
                break;
            }
            let w = &self.params[off..off + n_in * n_out];
            let mut next = vec![0.0; n_in];
            for (o, &d) in delta.iter().enumerate() {
                if d != 0.0 {
                    for (acc, &wi) in next.iter_mut().zip(&w[o * n_in..(o + 1) * n_in]) {
                        *acc += d * wi;
                    }
                }
            }
            // ReLU derivative, read off the stored post-activation.
            for (acc, &a) in next.iter_mut().zip(input) {
                if a <= 0.0 {
                    *acc = 0.0;
                }
            }
            delta = next;
        }
    }

    /// Parameter gradient of `upstream . f(x)`.
    pub fn gradients(&self, x: &[f64], upstream: &[f64]) -> Vec<f64> {
        let mut tape = Tape::default();
        self.forward_tape(x, &mut tape);
        let mut grads = vec![0.0; self.params.len()];
        self.backward(&tape, upstream, &mut grads);
        grads
    }
}

/// Adam with bias correction.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(n_params: usize, lr: f64) -> Self {
        Self { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, m: vec![0.0; n_params], v: vec![0.0; n_params], t: 0 }
    }

    pub fn steps_taken(&self) -> u64 {
        self.t
    }

    /// Descends along `grads`.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grads.len(), self.m.len());
        self.t += 1;
        let c1 = 1.0 - libm::pow(self.beta1, self.t as f64);
        let c2 = 1.0 - libm::pow(self.beta2, self.t as f64);
        for (((p, &g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= self.lr * m_hat / (libm::sqrt(v_hat) + self.eps);
        }
    }
}

/// Diagonal Gaussian policy with a learned, state-independent spread.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPolicy {
    pub mean_net: Mlp,
    pub log_std: [f64; ACTION_DIM],
}

impl GaussianPolicy {
    /// Fresh policy whose mean starts at small angles, nearly independent of
    /// the observation.
    pub fn new(obs_dim: usize, seed: u64) -> Self {
        let mut mean_net = Mlp::new(&[obs_dim, HIDDEN[0], HIDDEN[1], ACTION_DIM], seed);
        let (w, b) = mean_net.output_layer_mut();
        w.iter_mut().for_each(|x| *x *= POLICY_OUT_SCALE);
        b.iter_mut().for_each(|x| *x = POLICY_MEAN_INIT);
        Self { mean_net, log_std: [LOG_STD_INIT; ACTION_DIM] }
    }

    pub fn obs_dim(&self) -> usize {
        self.mean_net.input_dim()
    }

    pub fn mean(&self, obs: &[f64]) -> [f64; ACTION_DIM] {
        let y = self.mean_net.forward(obs);
        [y[0], y[1]]
    }

    pub fn clamp_log_std(&mut self) {
        for l in &mut self.log_std {
            *l = l.clamp(LOG_STD_MIN, LOG_STD_MAX);
        }
    }

    /// Exact diagonal-Gaussian log-density at `action` given the mean.
    pub fn log_prob_with_mean(&self, mean: &[f64], action: &[f64]) -> f64 {
        let mut logp = 0.0;
        for i in 0..ACTION_DIM {
            let z = (action[i] - mean[i]) * libm::exp(-self.log_std[i]);
            logp += -0.5 * z * z - self.log_std[i] - 0.5 * libm::log(2.0 * PI);
        }
        logp
    }

    pub fn log_prob(&self, obs: &[f64], action: &[f64]) -> f64 {
        self.log_prob_with_mean(&self.mean(obs), action)
    }

    /// Raw (unclipped) sample and its log-density.
    pub fn sample<R: Rng + ?Sized>(&self, obs: &[f64], rng: &mut R) -> ([f64; ACTION_DIM], f64) {
        let mean = self.mean(obs);
        let mut action = [0.0; ACTION_DIM];
        for i in 0..ACTION_DIM {
            let z: f64 = StandardNormal.sample(rng);
            action[i] = mean[i] + libm::exp(self.log_std[i]) * z;
        }
        (action, self.log_prob_with_mean(&mean, &action))
    }
}

/// State-value estimate `V(O)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueNet {
    pub net: Mlp,
}

impl ValueNet {
    pub fn new(obs_dim: usize, seed: u64) -> Self {
        Self { net: Mlp::new(&[obs_dim, HIDDEN[0], HIDDEN[1], 1], seed) }
    }

    pub fn predict(&self, obs: &[f64]) -> f64 {
        self.net.forward(obs)[0]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SIZES: [usize; 4] = [2, 32, 16, 2];

    /// Smallest |pre-activation| over all hidden units; probes closer than
    /// the finite-difference step to a kink are skipped.
    fn kink_distance(net: &Mlp, x: &[f64]) -> f64 {
        let mut h = x.to_vec();
        let mut min = f64::INFINITY;
        let layers = net.layers();
        for (l, (w, b)) in layers.iter().enumerate() {
            let n_in = h.len();
            let z: Vec<f64> = w
                .chunks_exact(n_in)
                .zip(b.iter())
                .map(|(row, &bias)| row.iter().zip(&h).fold(bias, |a, (wi, xi)| a + wi * xi))
                .collect();
            if l + 1 < layers.len() {
                min = z.iter().fold(min, |m, v| m.min(v.abs()));
                h = z.iter().map(|v| v.max(0.0)).collect();
            }
        }
        min
    }

    fn randomize(net: &mut Mlp, rng: &mut ChaCha8Rng) {
        for p in net.params_mut() {
            *p = rng.random::<f64>() * 2.0 - 1.0;
        }
    }

    #[test]
    fn init_is_deterministic_and_bounded() {
        let a = Mlp::new(&SIZES, 7);
        assert_eq!(a, Mlp::new(&SIZES, 7));
        assert_ne!(a, Mlp::new(&SIZES, 8));
        assert_eq!(a.n_params(), 2 * 32 + 32 + 32 * 16 + 16 + 16 * 2 + 2);
        let y = a.forward(&[0.0, -1.0]);
        assert!(y.iter().all(|v| v.is_finite() && v.abs() < 10.0));
        assert_eq!(Mlp::zeros(&SIZES).forward(&[0.3, -0.2]), vec![0.0, 0.0]);
    }

    #[test]
    fn gradients_match_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(123);
        let h = 1e-6;
        let mut checked = 0;
        while checked < 100 {
            let out = if checked % 2 == 0 { 2 } else { 1 };
            let mut net = Mlp::new(&[2, 32, 16, out], checked as u64);
            randomize(&mut net, &mut rng);
            let x = [rng.random::<f64>() * 2.0 - 1.0, rng.random::<f64>() * 2.0 - 1.0];
            if kink_distance(&net, &x) < 1e-3 {
                continue;
            }
            let up: Vec<f64> = (0..out).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
            let analytic = net.gradients(&x, &up);
            let f = |n: &Mlp| n.forward(&x).iter().zip(&up).map(|(a, b)| a * b).sum::<f64>();
            let mut numeric = vec![0.0; net.n_params()];
            for i in 0..net.n_params() {
                let mut plus = net.clone();
                plus.params_mut()[i] += h;
                let mut minus = net.clone();
                minus.params_mut()[i] -= h;
                numeric[i] = (f(&plus) - f(&minus)) / (2.0 * h);
            }
            let diff = analytic.iter().zip(&numeric).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            let scale = analytic.iter().chain(&numeric).fold(0.0f64, |m, v| m.max(v.abs()));
            assert!(diff <= 1e-5 * scale, "probe {checked}: {diff} vs {scale}");
            checked += 1;
        }
    }

    #[test]
    fn affine_where_relus_are_fixed() {
        // Positive weights and inputs keep every unit active along the ray.
        let mut net = Mlp::new(&SIZES, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for p in net.params_mut() {
            *p = rng.random::<f64>();
        }
        let x = [0.4, 0.7];
        let f0 = net.forward(&[0.0, 0.0]);
        let fx = net.forward(&x);
        for alpha in [0.5, 2.0, 3.7] {
            let fa = net.forward(&[alpha * x[0], alpha * x[1]]);
            for k in 0..2 {
                assert!((fa[k] - f0[k] - alpha * (fx[k] - f0[k])).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn zero_upstream_gives_zero_gradient() {
        let net = Mlp::new(&SIZES, 3);
        assert!(net.gradients(&[0.2, -0.4], &[0.0, 0.0]).iter().all(|&g| g == 0.0));
    }

    #[test]
    fn adam_updates() {
        let mut p = vec![0.5];
        let mut adam = Adam::new(1, 1e-3);
        adam.step(&mut p, &[1.0]);
        assert!((p[0] - (0.5 - 1e-3)).abs() < 1e-10);

        let mut q = vec![0.3, -0.2];
        let mut adam = Adam::new(2, 1e-3);
        for _ in 0..50 {
            adam.step(&mut q, &[0.0, 0.0]);
        }
        assert_eq!(q, vec![0.3, -0.2]);

        let mut r = vec![0.0];
        let mut adam = Adam::new(1, 1e-2);
        let mut prev = r[0];
        for _ in 0..200 {
            adam.step(&mut r, &[0.7]);
            let step = prev - r[0];
            assert!(step > 0.0 && step <= 1e-2 * (1.0 + 1e-6));
            prev = r[0];
        }
    }

    #[test]
    fn log_density_formula() {
        let mut policy = GaussianPolicy::new(2, 0);
        let obs = [0.1, -0.9];
        let mean = policy.mean(&obs);
        let want = -policy.log_std.iter().sum::<f64>() - libm::log(2.0 * PI);
        assert!((policy.log_prob(&obs, &mean) - want).abs() < 1e-12);
        policy.log_std = [0.0, 0.0];
        let shifted = [mean[0] + 1.0, mean[1]];
        assert!((policy.log_prob(&obs, &shifted) - (-0.5 - libm::log(2.0 * PI))).abs() < 1e-12);
    }

    #[test]
    fn sample_mean_converges() {
        let policy = GaussianPolicy::new(2, 5);
        let obs = [0.0, -1.0];
        let mean = policy.mean(&obs);
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let n = 100_000;
        let mut acc = [0.0; 2];
        for _ in 0..n {
            let (a, logp) = policy.sample(&obs, &mut rng);
            assert!(logp.is_finite());
            acc[0] += a[0];
            acc[1] += a[1];
        }
        for i in 0..2 {
            let sigma = libm::exp(policy.log_std[i]);
            assert!((acc[i] / n as f64 - mean[i]).abs() < 4.0 * sigma / libm::sqrt(n as f64));
        }
    }

    #[test]
    fn marginal_density_integrates_to_one() {
        let policy = GaussianPolicy::new(2, 6);
        let obs = [0.3, -0.5];
        let mean = policy.mean(&obs);
        let sigma = libm::exp(policy.log_std[0]);
        // Integrate over the first component with the second held at its
        // mean, then divide out the second component's peak density.
        let peak = 1.0 / (libm::sqrt(2.0 * PI) * libm::exp(policy.log_std[1]));
        let (lo, hi, steps) = (mean[0] - 12.0 * sigma, mean[0] + 12.0 * sigma, 20_000);
        let dx = (hi - lo) / steps as f64;
        let total: f64 = (0..=steps)
            .map(|i| {
                let a = lo + i as f64 * dx;
                let w = if i == 0 || i == steps { 0.5 } else { 1.0 };
                w * libm::exp(policy.log_prob(&obs, &[a, mean[1]]))
            })
            .sum::<f64>()
            * dx
            / peak;
        assert!((total - 1.0).abs() < 1e-3, "{total}");
    }

    #[test]
    fn log_std_is_clamped() {
        let mut policy = GaussianPolicy::new(3, 0);
        policy.log_std = [-9.0, 4.0];
        policy.clamp_log_std();
        assert_eq!(policy.log_std, [LOG_STD_MIN, LOG_STD_MAX]);
        assert_eq!(policy.obs_dim(), 3);
    }

    #[test]
    fn from_params_validates() {
        assert!(Mlp::from_params(&SIZES, vec![0.0; 3]).is_err());
        let net = Mlp::new(&SIZES, 1);
        assert_eq!(Mlp::from_params(&SIZES, net.params().to_vec()).unwrap(), net);
    }
}
