//! The CSMC Markov kernel and score estimators built on it.

use rand::Rng;
use rayon::prelude::*;

use super::{csmc_forward, smc_forward, BackwardSampler, ParticleSystem};
use crate::env::Environment;
use crate::error::{Error, Result};
use crate::policy::Policy;
use crate::rng::{tags, RngStream};
use crate::ssm::{accumulate_trajectory_grad, ControlProblem, Trajectory};

/// A score estimate together with the next state of the reference chain.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreEstimate {
    pub score: Vec<f64>,
    /// One of the backward draws, chosen uniformly at random.
    pub new_reference: Trajectory,
    /// Transition samples drawn by the forward pass.
    pub interactions: u64,
}

/// One application of the conditional SMC kernel with backward sampling.
///
/// Leaves the smoothing distribution `p_theta(z_{0:T} | y_{0:T})` invariant.
pub fn csmc_kernel<E: Environment, P: Policy>(
    problem: &ControlProblem<E>,
    policy: &P,
    reference: &Trajectory,
    num_particles: usize,
    stream: &RngStream,
) -> Result<Trajectory> {
    let system = csmc_forward(problem, policy, reference, num_particles, stream)?;
    let mut rng = stream.split2(tags::BACKWARD, 0).rng();
    Ok(BackwardSampler::new(&system, problem)?.draw(&mut rng)?.trajectory)
}

/// `K` backward draws from `system` and their averaged complete-data score.
///
/// Returns the average and the draws in order, so callers can also form
/// estimators from subsets (for instance the first draw alone).
pub fn rao_blackwellized_score<E: Environment, P: Policy>(
    system: &ParticleSystem,
    problem: &ControlProblem<E>,
    policy: &P,
    num_draws: usize,
    stream: &RngStream,
) -> Result<(Vec<f64>, Vec<(Trajectory, Vec<f64>)>)> {
    if num_draws == 0 {
        return Err(Error::Config("need at least one backward draw".into()));
    }
    let sampler = BackwardSampler::new(system, problem)?;
    let stream = stream.split(tags::BACKWARD);
    let draws: Vec<(Trajectory, Vec<f64>)> = (0..num_draws)
        .into_par_iter()
        .map(|j| {
            let mut rng = stream.split(j as u64).rng();
            let traj = sampler.draw(&mut rng)?.trajectory;
            let mut g = vec![0.0; policy.num_params()];
            accumulate_trajectory_grad(policy, &traj, &mut g)?;
            Ok((traj, g))
        })
        .collect::<Result<_>>()?;
    let mut mean = vec![0.0; policy.num_params()];
    for (_, g) in &draws {
        for (m, v) in mean.iter_mut().zip(g) {
            *m += v;
        }
    }
    let inv = 1.0 / num_draws as f64;
    mean.iter_mut().for_each(|m| *m *= inv);
    Ok((mean, draws))
}

fn finish(
    score: Vec<f64>,
    mut draws: Vec<(Trajectory, Vec<f64>)>,
    interactions: u64,
    stream: &RngStream,
) -> ScoreEstimate {
    let pick = stream.split(tags::SELECT).rng().random_range(0..draws.len());
    ScoreEstimate {
        score,
        new_reference: draws.swap_remove(pick).0,
        interactions,
    }
}

/// Rao-Blackwellized CSMC score: one conditional forward pass, `K`
/// independent backward draws, averaged `grad_theta log p_theta(z, y)`.
///
/// The new reference is one of the `K` draws chosen uniformly; each draw is
/// marginally a CSMC kernel output, so the reference chain stays
/// `p_theta(z | y)`-invariant.
pub fn rb_csmc_score<E: Environment, P: Policy>(
    problem: &ControlProblem<E>,
    policy: &P,
    reference: &Trajectory,
    num_particles: usize,
    num_draws: usize,
    stream: &RngStream,
) -> Result<ScoreEstimate> {
    let system = csmc_forward(problem, policy, reference, num_particles, stream)?;
    let (score, draws) = rao_blackwellized_score(&system, problem, policy, num_draws, stream)?;
    Ok(finish(score, draws, system.interactions, stream))
}

/// Particle-smoothing score from an unconditional bootstrap filter.
/// Consistent as `N` grows, but biased for finite `N`.
pub fn smc_score<E: Environment, P: Policy>(
    problem: &ControlProblem<E>,
    policy: &P,
    num_particles: usize,
    num_draws: usize,
    stream: &RngStream,
) -> Result<ScoreEstimate> {
    let system = smc_forward(problem, policy, num_particles, stream)?;
    let (score, draws) = rao_blackwellized_score(&system, problem, policy, num_draws, stream)?;
    Ok(finish(score, draws, system.interactions, stream))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{EnvSpec, LinearEnv};
    use crate::msc::init_reference;
    use crate::policy::{LinearGaussianPolicy, TanhGaussianPolicy};
    use crate::ssm::{grad_log_joint, StateAction};

    #[test]
    fn single_draw_score_is_its_gradient() {
        let problem = ControlProblem::new(EnvSpec::pendulum(), 0.05, 15).unwrap();
        let policy = TanhGaussianPolicy::init(2, &[5], EnvSpec::pendulum().action_box, &mut RngStream::new(1).rng()).unwrap();
        let reference = init_reference(&problem, &policy, &RngStream::new(2)).unwrap();
        let est = rb_csmc_score(&problem, &policy, &reference, 8, 1, &RngStream::new(3)).unwrap();
        let g = grad_log_joint(&problem, &policy, &est.new_reference).unwrap();
        assert_eq!(est.score, g);
        est.new_reference.validate(&problem).unwrap();
    }

    #[test]
    fn smc_rejects_single_particle_and_is_deterministic() {
        let problem = ControlProblem::new(EnvSpec::pendulum(), 0.05, 10).unwrap();
        let policy = TanhGaussianPolicy::init(2, &[5], EnvSpec::pendulum().action_box, &mut RngStream::new(1).rng()).unwrap();
        assert!(smc_score(&problem, &policy, 1, 1, &RngStream::new(1)).is_err());
        let a = smc_score(&problem, &policy, 16, 4, &RngStream::new(5)).unwrap();
        let b = smc_score(&problem, &policy, 16, 4, &RngStream::new(5)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn two_particle_flat_kernel_probabilities() {
        // T = 1, eta = 0 (flat weights), sigma tiny. The final index is
        // uniform over {reference, fresh}. Picking the reference at t = 1
        // forces its own parent (the only one whose transition mean matches),
        // so the output is the reference; picking the fresh particle yields a
        // path that differs at t = 1. Each outcome has probability 1/2.
        let env = LinearEnv::scalar(1.0, 1.0, 1e-3, 1.0, 1.0, 1.0).unwrap();
        let problem = ControlProblem::with_any_temperature(env, 0.0, 1).unwrap();
        let policy = LinearGaussianPolicy::new(1, 1, vec![0.0], vec![0.0]).unwrap();
        let reference = Trajectory::new(vec![
            StateAction::new(vec![1.0], vec![3.0]),
            StateAction::new(vec![4.0], vec![0.0]),
        ]);
        let reps = 20_000;
        let mut same = 0;
        let mut fresh_path = 0;
        for r in 0..reps {
            let out = csmc_kernel(&problem, &policy, &reference, 2, &RngStream::new(r)).unwrap();
            if out == reference {
                same += 1;
            } else if out.steps[1] != reference.steps[1] {
                fresh_path += 1;
            }
        }
        let f_same = same as f64 / reps as f64;
        let f_fresh = fresh_path as f64 / reps as f64;
        let se = (0.25 / reps as f64).sqrt();
        assert!((f_same - 0.5).abs() < 4.0 * se, "{f_same}");
        assert!((f_fresh - 0.5).abs() < 4.0 * se, "{f_fresh}");
    }
}
