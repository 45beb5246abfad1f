//! Stochastic benchmark systems and the environment abstraction.
//!
//! Every environment is an Euler-discretized ODE with additive diagonal
//! Gaussian noise, `x' = x + dt * drift(x, u) + sigma * eps`, plus a
//! nonnegative cost. The linear system in [`linear`] uses the same interface
//! so the particle machinery can be checked against exact Kalman recursions.

mod benchmark;
pub mod linear;

pub use benchmark::{wrap_angle, AngleCost, CostWeights, EnvKind, EnvSpec, Physics};
pub use linear::LinearEnv;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{check_dim, Error, Result};
use crate::numeric::diag_gaussian_logpdf;

/// Box `[shift - scale, shift + scale]` that bounded actions live in.
#[derive(Clone, Debug, PartialEq)]
pub struct ActionBox {
    pub scale: Vec<f64>,
    pub shift: Vec<f64>,
}

impl ActionBox {
    pub fn new(scale: Vec<f64>, shift: Vec<f64>) -> Result<Self> {
        check_dim("action shift", scale.len(), shift.len())?;
        if scale.iter().any(|&a| !(a > 0.0 && a.is_finite())) {
            return Err(Error::Config(format!(
                "action scale must be strictly positive, got {scale:?}"
            )));
        }
        if shift.iter().any(|b| !b.is_finite()) {
            return Err(Error::Config("action shift must be finite".into()));
        }
        Ok(Self { scale, shift })
    }

    /// Symmetric box `[-limit, limit]`.
    pub fn symmetric(limit: Vec<f64>) -> Result<Self> {
        let shift = vec![0.0; limit.len()];
        Self::new(limit, shift)
    }

    pub fn dim(&self) -> usize {
        self.scale.len()
    }

    /// Closed-box membership.
    pub fn contains(&self, u: &[f64]) -> bool {
        u.len() == self.dim()
            && u.iter()
                .zip(&self.scale)
                .zip(&self.shift)
                .all(|((&ui, &a), &b)| ui >= b - a && ui <= b + a)
    }
}

/// A controlled stochastic system.
pub trait Environment: Send + Sync {
    fn state_dim(&self) -> usize;
    fn action_dim(&self) -> usize;
    /// Known initial state `x_0`.
    fn initial_state(&self) -> &[f64];
    /// Per-coordinate transition noise standard deviation.
    fn noise_std(&self) -> &[f64];
    /// Noise-free one-step prediction, written into `out`.
    fn euler_mean_into(&self, x: &[f64], u: &[f64], out: &mut [f64]) -> Result<()>;
    /// Stage cost; implementations guarantee `cost >= 0`.
    fn cost(&self, x: &[f64], u: &[f64]) -> f64;
    /// Bounds on the action, when the system is action-limited.
    fn action_box(&self) -> Option<&ActionBox> {
        None
    }

    fn euler_mean(&self, x: &[f64], u: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.state_dim()];
        self.euler_mean_into(x, u, &mut out)?;
        Ok(out)
    }

    fn transition_sample<R: Rng + ?Sized>(&self, x: &[f64], u: &[f64], rng: &mut R) -> Result<Vec<f64>>
    where
        Self: Sized,
    {
        let mut out = self.euler_mean(x, u)?;
        for (xi, &s) in out.iter_mut().zip(self.noise_std()) {
            let eps: f64 = rng.sample(StandardNormal);
            *xi += s * eps;
        }
        Ok(out)
    }

    fn transition_logpdf(&self, x_next: &[f64], x: &[f64], u: &[f64]) -> Result<f64> {
        check_dim("next state", self.state_dim(), x_next.len())?;
        let mean = self.euler_mean(x, u)?;
        Ok(diag_gaussian_logpdf(x_next, &mean, self.noise_std()))
    }
}

pub(crate) fn check_state_action<E: Environment + ?Sized>(env: &E, x: &[f64], u: &[f64]) -> Result<()> {
    check_dim("state", env.state_dim(), x.len())?;
    check_dim("action", env.action_dim(), u.len())
}
