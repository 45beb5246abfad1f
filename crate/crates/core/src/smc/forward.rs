//! Bootstrap forward filtering, with or without a pinned reference path.

use rayon::prelude::*;

use super::ParticleSystem;
use crate::env::Environment;
use crate::error::{Error, Result};
use crate::numeric::Categorical;
use crate::policy::Policy;
use crate::rng::{tags, RngStream};
use crate::ssm::{ControlProblem, StateAction, Trajectory};

/// Conditional forward pass: slot `0` is the reference at every step, slots
/// `1..N` are resampled multinomially from the previous weights and
/// propagated through `f_theta` (transition, then a fresh policy draw).
pub fn csmc_forward<E: Environment, P: Policy>(
    problem: &ControlProblem<E>,
    policy: &P,
    reference: &Trajectory,
    num_particles: usize,
    stream: &RngStream,
) -> Result<ParticleSystem> {
    if num_particles < 2 {
        return Err(Error::Config(format!(
            "conditional SMC needs at least 2 particles, got {num_particles}"
        )));
    }
    reference.validate(problem)?;
    forward(problem, policy, Some(reference), num_particles, stream)
}

/// Unconditional bootstrap particle filter.
pub fn smc_forward<E: Environment, P: Policy>(
    problem: &ControlProblem<E>,
    policy: &P,
    num_particles: usize,
    stream: &RngStream,
) -> Result<ParticleSystem> {
    if num_particles < 2 {
        return Err(Error::Config(format!(
            "particle filter needs at least 2 particles, got {num_particles}"
        )));
    }
    forward(problem, policy, None, num_particles, stream)
}

fn forward<E: Environment, P: Policy>(
    problem: &ControlProblem<E>,
    policy: &P,
    reference: Option<&Trajectory>,
    n: usize,
    stream: &RngStream,
) -> Result<ParticleSystem> {
    problem.check_policy(policy)?;
    let stream = stream.split(tags::FORWARD);
    let first_free = usize::from(reference.is_some());
    let horizon = problem.horizon;
    let x0 = problem.env.initial_state();

    let mut particles: Vec<Vec<StateAction>> = Vec::with_capacity(horizon + 1);
    let mut log_weights: Vec<Vec<f64>> = Vec::with_capacity(horizon + 1);
    let mut ancestors: Vec<Vec<usize>> = Vec::with_capacity(horizon);

    let initial: Vec<StateAction> = (first_free..n)
        .into_par_iter()
        .with_min_len(8)
        .map(|i| {
            let mut rng = stream.split2(0, i as u64).rng();
            let u = policy.sample_action(x0, &mut rng)?.action;
            Ok(StateAction::new(x0.to_vec(), u))
        })
        .collect::<Result<_>>()?;
    let mut row = Vec::with_capacity(n);
    if let Some(r) = reference {
        row.push(r.steps[0].clone());
    }
    row.extend(initial);
    log_weights.push(weights(problem, &row)?);
    particles.push(row);

    for t in 1..=horizon {
        let cat = Categorical::from_log_weights(&log_weights[t - 1], t - 1)?;
        let prev = &particles[t - 1];
        let fresh: Vec<(usize, StateAction)> = (first_free..n)
            .into_par_iter()
            .with_min_len(8)
            .map(|i| {
                let mut rng = stream.split2(t as u64, i as u64).rng();
                let a = cat.sample(&mut rng);
                let parent = &prev[a];
                let x = problem.env.transition_sample(&parent.state, &parent.action, &mut rng)?;
                let u = policy.sample_action(&x, &mut rng)?.action;
                Ok((a, StateAction::new(x, u)))
            })
            .collect::<Result<_>>()?;
        let mut row = Vec::with_capacity(n);
        let mut anc = Vec::with_capacity(n);
        if let Some(r) = reference {
            row.push(r.steps[t].clone());
            anc.push(0);
        }
        for (a, z) in fresh {
            anc.push(a);
            row.push(z);
        }
        log_weights.push(weights(problem, &row)?);
        particles.push(row);
        ancestors.push(anc);
    }

    Ok(ParticleSystem {
        particles,
        log_weights,
        ancestors,
        interactions: (horizon * (n - first_free)) as u64,
    })
}

fn weights<E: Environment>(problem: &ControlProblem<E>, row: &[StateAction]) -> Result<Vec<f64>> {
    row.iter().map(|z| problem.obs_loglik(z)).collect()
}
