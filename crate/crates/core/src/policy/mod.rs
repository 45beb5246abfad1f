//! Stochastic feedback policies.
//!
//! [`TanhGaussianPolicy`] is the neural policy used on the benchmarks: a
//! multilayer perceptron gives the mean of a diagonal Gaussian in an
//! unbounded pre-squash space, and the flow `u = a * tanh(s) + b` maps it into
//! the action box. [`LinearGaussianPolicy`] is the unbounded linear policy
//! used by the exact linear-Gaussian fixtures.

mod io;
mod linear;
mod mlp;

pub use io::{decode_policy, encode_policy, read_policy, write_policy};
pub use linear::LinearGaussianPolicy;
pub use mlp::{PolicyParams, TanhGaussianPolicy, MAX_PRE_SQUASH};

use rand::Rng;

use crate::error::Result;

/// One draw from a policy.
#[derive(Clone, Debug, PartialEq)]
pub struct ActionSample {
    pub action: Vec<f64>,
    /// Value before the squashing flow (equal to `action` for unsquashed policies).
    pub pre_squash: Vec<f64>,
}

/// A parametric stochastic policy `pi_theta(u | x)` with a flat parameter vector.
pub trait Policy: Send + Sync {
    fn state_dim(&self) -> usize;
    fn action_dim(&self) -> usize;

    fn params(&self) -> &[f64];
    fn params_mut(&mut self) -> &mut [f64];

    fn num_params(&self) -> usize {
        self.params().len()
    }

    fn sample_action<R: Rng + ?Sized>(&self, x: &[f64], rng: &mut R) -> Result<ActionSample>
    where
        Self: Sized;

    fn action_logpdf(&self, x: &[f64], u: &[f64]) -> Result<f64>;

    /// Adds `grad_theta log pi(u | x)` into `grad` and returns `log pi(u | x)`.
    fn accumulate_grad(&self, x: &[f64], u: &[f64], grad: &mut [f64]) -> Result<f64>;

    fn grad_action_logpdf(&self, x: &[f64], u: &[f64]) -> Result<Vec<f64>> {
        let mut g = vec![0.0; self.num_params()];
        self.accumulate_grad(x, u, &mut g)?;
        Ok(g)
    }
}
