use rand::Rng;
use rand_distr::StandardNormal;

use super::{ActionSample, Policy};
use crate::env::ActionBox;
use crate::error::{check_dim, Error, Result};
use crate::numeric::{log_one_minus_tanh_sq, LN_2PI};
use crate::rng::{tags, RngStream};

/// Pre-squash values are clipped to this magnitude when sampling, so that
/// `tanh` never rounds to exactly `+-1` and every sampled action lies strictly
/// inside the box.
pub const MAX_PRE_SQUASH: f64 = 15.0;

const ATANH_CLAMP: f64 = 1.0 - 1e-12;

/// Flattened weights of a fully connected network plus diagonal log-std.
///
/// `sizes = [d, h_1, ..., h_k, m]`. Layer `l` stores its `out x in` weight
/// matrix row-major followed by its bias; the `m` log-standard-deviations come
/// last.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicyParams {
    sizes: Vec<usize>,
    values: Vec<f64>,
}

impl PolicyParams {
    pub fn total_len(sizes: &[usize]) -> usize {
        sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum::<usize>() + sizes.last().copied().unwrap_or(0)
    }

    /// All-zero parameters.
    pub fn zeros(sizes: Vec<usize>) -> Result<Self> {
        Self::validate_sizes(&sizes)?;
        let values = vec![0.0; Self::total_len(&sizes)];
        Ok(Self { sizes, values })
    }

    pub fn from_values(sizes: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        Self::validate_sizes(&sizes)?;
        check_dim("policy parameters", Self::total_len(&sizes), values.len())?;
        Ok(Self { sizes, values })
    }

    /// Weights `N(0, 1/fan_in)`, zero biases, unit standard deviation.
    pub fn init<R: Rng + ?Sized>(sizes: Vec<usize>, rng: &mut R) -> Result<Self> {
        let mut p = Self::zeros(sizes)?;
        for l in 0..p.num_layers() {
            let (w_off, _) = p.layer_offsets(l);
            let (fan_in, fan_out) = (p.sizes[l], p.sizes[l + 1]);
            let scale = (1.0 / fan_in as f64).sqrt();
            for w in &mut p.values[w_off..w_off + fan_in * fan_out] {
                let z: f64 = rng.sample(StandardNormal);
                *w = scale * z;
            }
        }
        Ok(p)
    }

    fn validate_sizes(sizes: &[usize]) -> Result<()> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::Config(format!(
                "layer sizes must have at least input and output and no zeros, got {sizes:?}"
            )));
        }
        Ok(())
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn num_layers(&self) -> usize {
        self.sizes.len() - 1
    }

    /// Offsets of the weight matrix and bias of layer `l`.
    pub fn layer_offsets(&self, l: usize) -> (usize, usize) {
        let off: usize = self.sizes[..=l].windows(2).map(|w| w[0] * w[1] + w[1]).sum();
        (off, off + self.sizes[l] * self.sizes[l + 1])
    }

    pub fn weight(&self, l: usize) -> &[f64] {
        let (w, b) = self.layer_offsets(l);
        &self.values[w..b]
    }

    pub fn bias(&self, l: usize) -> &[f64] {
        let (_, b) = self.layer_offsets(l);
        &self.values[b..b + self.sizes[l + 1]]
    }

    pub fn log_std_offset(&self) -> usize {
        self.values.len() - self.output_dim()
    }

    pub fn log_std(&self) -> &[f64] {
        &self.values[self.log_std_offset()..]
    }

    pub fn log_std_mut(&mut self) -> &mut [f64] {
        let o = self.log_std_offset();
        &mut self.values[o..]
    }

    /// Mean of the pre-squash Gaussian.
    pub fn nn_forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim("policy input", self.input_dim(), x.len())?;
        let mut h = x.to_vec();
        for l in 0..self.num_layers() {
            h = self.affine(l, &h);
            if l + 1 < self.num_layers() {
                h.iter_mut().for_each(|v| *v = v.tanh());
            }
        }
        Ok(h)
    }

    fn affine(&self, l: usize, input: &[f64]) -> Vec<f64> {
        let w = self.weight(l);
        let b = self.bias(l);
        let n_in = self.sizes[l];
        b.iter()
            .enumerate()
            .map(|(o, &bo)| {
                let row = &w[o * n_in..(o + 1) * n_in];
                bo + row.iter().zip(input).map(|(a, x)| a * x).sum::<f64>()
            })
            .collect()
    }

    /// Forward pass keeping every layer's output for backpropagation.
    fn forward_cached(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let mut acts = Vec::with_capacity(self.sizes.len());
        acts.push(x.to_vec());
        for l in 0..self.num_layers() {
            let mut h = self.affine(l, &acts[l]);
            if l + 1 < self.num_layers() {
                h.iter_mut().for_each(|v| *v = v.tanh());
            }
            acts.push(h);
        }
        acts
    }

    /// Adds `J^T d_mean` into `grad`, where `J` is the Jacobian of the mean
    /// w.r.t. all network weights and biases.
    fn backprop(&self, acts: &[Vec<f64>], d_mean: &[f64], grad: &mut [f64]) {
        let mut delta = d_mean.to_vec();
        for l in (0..self.num_layers()).rev() {
            let (w_off, b_off) = self.layer_offsets(l);
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let input = &acts[l];
            for o in 0..n_out {
                let d = delta[o];
                if d != 0.0 {
                    let row = &mut grad[w_off + o * n_in..w_off + (o + 1) * n_in];
                    for (g, &xi) in row.iter_mut().zip(input) {
                        *g += d * xi;
                    }
                }
                grad[b_off + o] += d;
            }
            if l > 0 {
                let w = self.weight(l);
                let mut prev = vec![0.0; n_in];
                for o in 0..n_out {
                    let d = delta[o];
                    if d != 0.0 {
                        for (p, &wv) in prev.iter_mut().zip(&w[o * n_in..(o + 1) * n_in]) {
                            *p += d * wv;
                        }
                    }
                }
                // tanh'(a) = 1 - tanh(a)^2
                for (p, &h) in prev.iter_mut().zip(input) {
                    *p *= 1.0 - h * h;
                }
                delta = prev;
            }
        }
    }
}

/// Gaussian MLP policy composed with the tanh scale-shift flow.
#[derive(Clone, Debug, PartialEq)]
pub struct TanhGaussianPolicy {
    params: PolicyParams,
    action_box: ActionBox,
}

impl TanhGaussianPolicy {
    pub fn new(params: PolicyParams, action_box: ActionBox) -> Result<Self> {
        check_dim("action box", params.output_dim(), action_box.dim())?;
        Ok(Self { params, action_box })
    }

    /// Fresh network `[d, hidden..., m]` initialized from `rng`.
    pub fn init<R: Rng + ?Sized>(
        state_dim: usize,
        hidden: &[usize],
        action_box: ActionBox,
        rng: &mut R,
    ) -> Result<Self> {
        let mut sizes = vec![state_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(action_box.dim());
        Self::new(PolicyParams::init(sizes, rng)?, action_box)
    }

    /// [`Self::init`] on a stream reserved for policy initialization, so a
    /// run seed fixes the initial network too.
    pub fn init_seeded(state_dim: usize, hidden: &[usize], action_box: ActionBox, seed: u64) -> Result<Self> {
        Self::init(state_dim, hidden, action_box, &mut RngStream::new(seed).split(tags::POLICY).rng())
    }

    pub fn policy_params(&self) -> &PolicyParams {
        &self.params
    }

    pub fn policy_params_mut(&mut self) -> &mut PolicyParams {
        &mut self.params
    }

    pub fn action_box(&self) -> &ActionBox {
        &self.action_box
    }

    pub fn nn_forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.params.nn_forward(x)
    }

    /// Inverse flow `s = atanh((u - b) / a)`.
    pub fn unsquash(&self, u: &[f64]) -> Result<Vec<f64>> {
        check_dim("action", self.action_box.dim(), u.len())?;
        u.iter()
            .zip(&self.action_box.scale)
            .zip(&self.action_box.shift)
            .map(|((&ui, &a), &b)| {
                let r = (ui - b) / a;
                if !(r.abs() < 1.0) {
                    return Err(Error::Domain(format!(
                        "action {ui} is not strictly inside ({}, {})",
                        b - a,
                        b + a
                    )));
                }
                let r = r.clamp(-ATANH_CLAMP, ATANH_CLAMP);
                Ok(0.5 * ((1.0 + r) / (1.0 - r)).ln())
            })
            .collect()
    }

    fn log_jacobian(&self, s: &[f64]) -> f64 {
        s.iter()
            .zip(&self.action_box.scale)
            .map(|(&si, &a)| a.ln() + log_one_minus_tanh_sq(si))
            .sum()
    }
}

impl Policy for TanhGaussianPolicy {
    fn state_dim(&self) -> usize {
        self.params.input_dim()
    }

    fn action_dim(&self) -> usize {
        self.params.output_dim()
    }

    fn params(&self) -> &[f64] {
        self.params.values()
    }

    fn params_mut(&mut self) -> &mut [f64] {
        self.params.values_mut()
    }

    fn sample_action<R: Rng + ?Sized>(&self, x: &[f64], rng: &mut R) -> Result<ActionSample> {
        let mean = self.params.nn_forward(x)?;
        let pre_squash: Vec<f64> = mean
            .iter()
            .zip(self.params.log_std())
            .map(|(&mu, &ls)| {
                let eps: f64 = rng.sample(StandardNormal);
                (mu + ls.exp() * eps).clamp(-MAX_PRE_SQUASH, MAX_PRE_SQUASH)
            })
            .collect();
        if pre_squash.iter().any(|s| s.is_nan()) {
            return Err(Error::Numerical(format!(
                "policy produced NaN pre-squash value at state {x:?}"
            )));
        }
        let action = pre_squash
            .iter()
            .zip(&self.action_box.scale)
            .zip(&self.action_box.shift)
            .map(|((&s, &a), &b)| a * s.tanh() + b)
            .collect();
        Ok(ActionSample { action, pre_squash })
    }

    fn action_logpdf(&self, x: &[f64], u: &[f64]) -> Result<f64> {
        let s = self.unsquash(u)?;
        let mean = self.params.nn_forward(x)?;
        let gauss: f64 = s
            .iter()
            .zip(&mean)
            .zip(self.params.log_std())
            .map(|((&si, &mi), &ls)| {
                let z = (si - mi) * (-ls).exp();
                -0.5 * LN_2PI - ls - 0.5 * z * z
            })
            .sum();
        Ok(gauss - self.log_jacobian(&s))
    }

    fn accumulate_grad(&self, x: &[f64], u: &[f64], grad: &mut [f64]) -> Result<f64> {
        check_dim("gradient buffer", self.num_params(), grad.len())?;
        check_dim("policy input", self.state_dim(), x.len())?;
        let s = self.unsquash(u)?;
        let acts = self.params.forward_cached(x);
        let mean = acts.last().unwrap();
        let ls_off = self.params.log_std_offset();
        let mut d_mean = vec![0.0; mean.len()];
        let mut logp = -self.log_jacobian(&s);
        for i in 0..mean.len() {
            let ls = self.params.log_std()[i];
            let inv_var = (-2.0 * ls).exp();
            let diff = s[i] - mean[i];
            d_mean[i] = diff * inv_var;
            grad[ls_off + i] += diff * diff * inv_var - 1.0;
            logp += -0.5 * LN_2PI - ls - 0.5 * diff * diff * inv_var;
        }
        self.params.backprop(&acts, &d_mean, grad);
        Ok(logp)
    }
}
