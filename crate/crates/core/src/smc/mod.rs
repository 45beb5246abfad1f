//! Conditional sequential Monte Carlo.
//!
//! Indexing is zero-based: slot `0` holds the reference path in a
//! conditional forward pass. Randomness comes from [`RngStream`]s; every
//! particle at every time step and every backward draw owns a substream, so
//! results do not depend on the number of worker threads.
//!
//! [`RngStream`]: crate::rng::RngStream

mod backward;
mod forward;
mod resample;
mod score;

pub use backward::{backward_sample, BackwardSampler};
pub use forward::{csmc_forward, smc_forward};
pub use resample::multinomial_resample;
pub use score::{csmc_kernel, rao_blackwellized_score, rb_csmc_score, smc_score, ScoreEstimate};

use crate::error::{check_dim, Error, Result};
use crate::ssm::{StateAction, Trajectory};

/// Output of one forward filtering pass.
#[derive(Clone, Debug, PartialEq)]
pub struct ParticleSystem {
    /// `particles[t][n]`, `T + 1` rows of `N` particles.
    pub particles: Vec<Vec<StateAction>>,
    /// Unnormalized log-weights `log g(y_t | z_t^n)`, same shape.
    pub log_weights: Vec<Vec<f64>>,
    /// `ancestors[t - 1][n]` is the parent index of particle `n` at time `t`.
    pub ancestors: Vec<Vec<usize>>,
    /// Number of transition samples drawn.
    pub interactions: u64,
}

impl ParticleSystem {
    pub fn new(
        particles: Vec<Vec<StateAction>>,
        log_weights: Vec<Vec<f64>>,
        ancestors: Vec<Vec<usize>>,
    ) -> Result<Self> {
        if particles.is_empty() {
            return Err(Error::Precondition("particle system with no time steps".into()));
        }
        let n = particles[0].len();
        if n == 0 {
            return Err(Error::Precondition("particle system with no particles".into()));
        }
        check_dim("log-weight rows", particles.len(), log_weights.len())?;
        check_dim("ancestor rows", particles.len() - 1, ancestors.len())?;
        for (row, w) in particles.iter().zip(&log_weights) {
            check_dim("particles per step", n, row.len())?;
            check_dim("weights per step", n, w.len())?;
        }
        for a in &ancestors {
            check_dim("ancestors per step", n, a.len())?;
            if a.iter().any(|&i| i >= n) {
                return Err(Error::Precondition("ancestor index out of range".into()));
            }
        }
        Ok(Self {
            particles,
            log_weights,
            ancestors,
            interactions: 0,
        })
    }

    pub fn num_particles(&self) -> usize {
        self.particles[0].len()
    }

    pub fn horizon(&self) -> usize {
        self.particles.len() - 1
    }

    /// Ancestral path ending in particle `n` at the final step.
    pub fn ancestral_path(&self, mut n: usize) -> Trajectory {
        let horizon = self.horizon();
        let mut steps = vec![self.particles[horizon][n].clone()];
        for t in (1..=horizon).rev() {
            n = self.ancestors[t - 1][n];
            steps.push(self.particles[t - 1][n].clone());
        }
        steps.reverse();
        Trajectory::new(steps)
    }
}

/// A trajectory assembled by backward sampling together with its indices.
#[derive(Clone, Debug, PartialEq)]
pub struct BackwardDraw {
    pub trajectory: Trajectory,
    /// `indices[t]` is the particle chosen at time `t`.
    pub indices: Vec<usize>,
}
