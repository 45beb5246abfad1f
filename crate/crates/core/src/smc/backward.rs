//! Backward simulation through a filtered particle system.
//!
//! Given the draw `z*_{t+1}`, index `k` at time `t` is selected with
//! probability proportional to `w_t^k f_theta(z*_{t+1} | z_t^k)`. The policy
//! factor `pi(u*_{t+1} | x*_{t+1})` of `f_theta` does not depend on `k` and
//! cancels in the normalization, so only the state transition density enters
//! the weights. Transition means `E[x_{t+1} | z_t^k]` are computed once per
//! system; each draw then costs `O(T N d)`.

use rand::Rng;

use super::{BackwardDraw, ParticleSystem};
use crate::env::Environment;
use crate::error::Result;
use crate::numeric::Categorical;
use crate::ssm::{ControlProblem, Trajectory};

pub struct BackwardSampler<'a> {
    system: &'a ParticleSystem,
    /// Flattened `[t][k][i]` transition means for `t < T`.
    means: Vec<f64>,
    inv_std: Vec<f64>,
    state_dim: usize,
}

impl<'a> BackwardSampler<'a> {
    pub fn new<E: Environment>(system: &'a ParticleSystem, problem: &ControlProblem<E>) -> Result<Self> {
        let d = problem.state_dim();
        let n = system.num_particles();
        let horizon = system.horizon();
        let mut means = vec![0.0; horizon * n * d];
        for t in 0..horizon {
            for (k, z) in system.particles[t].iter().enumerate() {
                let off = (t * n + k) * d;
                problem.env.euler_mean_into(&z.state, &z.action, &mut means[off..off + d])?;
            }
        }
        let inv_std = problem.env.noise_std().iter().map(|s| 1.0 / s).collect();
        Ok(Self {
            system,
            means,
            inv_std,
            state_dim: d,
        })
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<BackwardDraw> {
        let sys = self.system;
        let horizon = sys.horizon();
        let n = sys.num_particles();
        let d = self.state_dim;
        let mut indices = vec![0usize; horizon + 1];
        indices[horizon] = Categorical::from_log_weights(&sys.log_weights[horizon], horizon)?.sample(rng);
        let mut lw = vec![0.0; n];
        for t in (0..horizon).rev() {
            let target = &sys.particles[t + 1][indices[t + 1]].state;
            for (k, w) in lw.iter_mut().enumerate() {
                let mean = &self.means[(t * n + k) * d..(t * n + k + 1) * d];
                let mut q = 0.0;
                for i in 0..d {
                    let r = (target[i] - mean[i]) * self.inv_std[i];
                    q += r * r;
                }
                *w = sys.log_weights[t][k] - 0.5 * q;
            }
            indices[t] = Categorical::from_log_weights(&lw, t)?.sample(rng);
        }
        let steps = indices
            .iter()
            .enumerate()
            .map(|(t, &k)| sys.particles[t][k].clone())
            .collect();
        Ok(BackwardDraw {
            trajectory: Trajectory::new(steps),
            indices,
        })
    }
}

/// One backward draw from `system`.
pub fn backward_sample<E: Environment, R: Rng + ?Sized>(
    system: &ParticleSystem,
    problem: &ControlProblem<E>,
    rng: &mut R,
) -> Result<BackwardDraw> {
    BackwardSampler::new(system, problem)?.draw(rng)
}
