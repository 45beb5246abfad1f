//! The state-space model induced by a control problem.
//!
//! The latent state is the state-action pair `z_t = (x_t, u_t)`. A binary
//! "optimality" observation `y_t = 1` has likelihood
//! `g(y_t = 1 | z_t) = exp(-eta * c(x_t, u_t))`, so the marginal likelihood of
//! `y_{0:T} = 1` is the exponentiated risk-sensitive objective
//! `E[exp(-eta * sum_t c(x_t, u_t))]`. The joint density factorizes as
//!
//! ```text
//! p(z_{0:T}, y_{0:T}) = delta(x_0) pi(u_0|x_0)
//!                       prod_{t<T} f(x_{t+1}|x_t,u_t) pi(u_{t+1}|x_{t+1})
//!                       prod_t g(y_t|z_t)
//! ```
//!
//! Only the policy factors depend on `theta`, so the complete-data score is
//! `sum_t grad log pi(u_t|x_t)`. The point mass on `x_0` has no finite
//! log-density; it is enforced as an invariant of [`Trajectory`] and dropped
//! from [`log_joint`].

use crate::env::Environment;
use crate::error::{check_dim, Error, Result};
use crate::policy::Policy;

/// One latent state `z_t = (x_t, u_t)`.
#[derive(Clone, Debug, PartialEq)]
pub struct StateAction {
    pub state: Vec<f64>,
    pub action: Vec<f64>,
}

impl StateAction {
    pub fn new(state: Vec<f64>, action: Vec<f64>) -> Self {
        Self { state, action }
    }
}

/// A path `z_{0:T}` of length `T + 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub steps: Vec<StateAction>,
}

impl Trajectory {
    pub fn new(steps: Vec<StateAction>) -> Self {
        Self { steps }
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// `T`, the index of the last step.
    pub fn horizon(&self) -> usize {
        self.steps.len().saturating_sub(1)
    }

    /// Total cost `sum_t c(x_t, u_t)`.
    pub fn total_cost<E: Environment + ?Sized>(&self, env: &E) -> f64 {
        self.steps.iter().map(|z| env.cost(&z.state, &z.action)).sum()
    }

    /// Checks length, dimensions, the known initial state and the action box.
    pub fn validate<E: Environment>(&self, problem: &ControlProblem<E>) -> Result<()> {
        check_dim("trajectory length", problem.horizon + 1, self.steps.len())?;
        let env = &problem.env;
        for z in &self.steps {
            check_dim("state", env.state_dim(), z.state.len())?;
            check_dim("action", env.action_dim(), z.action.len())?;
            if let Some(bx) = env.action_box() {
                if !bx.contains(&z.action) {
                    return Err(Error::Precondition(format!(
                        "action {:?} outside the action box",
                        z.action
                    )));
                }
            }
        }
        if self.steps[0].state.as_slice() != env.initial_state() {
            return Err(Error::Precondition(format!(
                "trajectory starts at {:?}, not at the initial state {:?}",
                self.steps[0].state,
                env.initial_state()
            )));
        }
        Ok(())
    }
}

/// Environment, inverse temperature `eta` and horizon `T`.
#[derive(Clone, Debug)]
pub struct ControlProblem<E> {
    pub env: E,
    pub temperature: f64,
    pub horizon: usize,
}

impl<E: Environment> ControlProblem<E> {
    pub fn new(env: E, temperature: f64, horizon: usize) -> Result<Self> {
        if !(temperature > 0.0 && temperature.is_finite()) {
            return Err(Error::Config(format!(
                "temperature must be positive, got {temperature}"
            )));
        }
        Ok(Self {
            env,
            temperature,
            horizon,
        })
    }

    /// Like [`ControlProblem::new`] but accepting `eta = 0` (flat
    /// likelihood), which test fixtures use for the risk-neutral limit.
    pub fn with_any_temperature(env: E, temperature: f64, horizon: usize) -> Result<Self> {
        if !(temperature >= 0.0 && temperature.is_finite()) {
            return Err(Error::Config(format!(
                "temperature must be nonnegative, got {temperature}"
            )));
        }
        Ok(Self {
            env,
            temperature,
            horizon,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.env.state_dim()
    }

    pub fn action_dim(&self) -> usize {
        self.env.action_dim()
    }

    /// Checks that the policy's dimensions fit the environment.
    pub fn check_policy<P: Policy>(&self, policy: &P) -> Result<()> {
        check_dim("policy state dimension", self.state_dim(), policy.state_dim())?;
        check_dim("policy action dimension", self.action_dim(), policy.action_dim())
    }

    /// `log g(y_t = 1 | z_t) = -eta * c(x_t, u_t)`.
    pub fn obs_loglik(&self, z: &StateAction) -> Result<f64> {
        check_dim("state", self.state_dim(), z.state.len())?;
        check_dim("action", self.action_dim(), z.action.len())?;
        let c = self.env.cost(&z.state, &z.action);
        if !(c >= 0.0) {
            return Err(Error::Numerical(format!(
                "cost {c} at state {:?} is not a nonnegative number",
                z.state
            )));
        }
        Ok(-self.temperature * c)
    }
}

/// `log g(y = 1 | z)`; see [`ControlProblem::obs_loglik`].
pub fn obs_loglik<E: Environment>(problem: &ControlProblem<E>, z: &StateAction) -> Result<f64> {
    problem.obs_loglik(z)
}

/// `log p_theta(z_{0:T}, y_{0:T})` without the `theta`-free point mass on `x_0`.
pub fn log_joint<E: Environment, P: Policy>(
    problem: &ControlProblem<E>,
    policy: &P,
    traj: &Trajectory,
) -> Result<f64> {
    traj.validate(problem)?;
    problem.check_policy(policy)?;
    let mut total = 0.0;
    for (t, z) in traj.steps.iter().enumerate() {
        total += policy.action_logpdf(&z.state, &z.action)?;
        total += problem.obs_loglik(z)?;
        if let Some(next) = traj.steps.get(t + 1) {
            total += problem.env.transition_logpdf(&next.state, &z.state, &z.action)?;
        }
    }
    Ok(total)
}

/// The policy-only part `sum_t log pi(u_t | x_t)` of [`log_joint`].
pub fn policy_log_density<P: Policy>(policy: &P, traj: &Trajectory) -> Result<f64> {
    traj.steps
        .iter()
        .map(|z| policy.action_logpdf(&z.state, &z.action))
        .sum()
}

/// `grad_theta log p_theta(z_{0:T}, y_{0:T}) = sum_t grad_theta log pi(u_t | x_t)`.
pub fn grad_log_joint<E: Environment, P: Policy>(
    problem: &ControlProblem<E>,
    policy: &P,
    traj: &Trajectory,
) -> Result<Vec<f64>> {
    traj.validate(problem)?;
    problem.check_policy(policy)?;
    let mut grad = vec![0.0; policy.num_params()];
    accumulate_trajectory_grad(policy, traj, &mut grad)?;
    Ok(grad)
}

/// Adds the trajectory score into `grad` without validation.
pub(crate) fn accumulate_trajectory_grad<P: Policy>(
    policy: &P,
    traj: &Trajectory,
    grad: &mut [f64],
) -> Result<()> {
    for z in &traj.steps {
        policy.accumulate_grad(&z.state, &z.action, grad)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{EnvSpec, LinearEnv};
    use crate::policy::{ActionSample, LinearGaussianPolicy, PolicyParams, TanhGaussianPolicy};
    use crate::rng::RngStream;
    use rand::Rng;
    use std::f64::consts::PI;

    fn prob(eta: f64) -> ControlProblem<EnvSpec> {
        ControlProblem::with_any_temperature(EnvSpec::pendulum(), eta, 5).unwrap()
    }

    fn random_traj<P: Policy>(problem: &ControlProblem<EnvSpec>, policy: &P, seed: u64) -> Trajectory {
        let mut rng = RngStream::new(seed).rng();
        let mut x = problem.env.initial_state().to_vec();
        let mut steps = Vec::new();
        for t in 0..=problem.horizon {
            let u = policy.sample_action(&x, &mut rng).unwrap().action;
            steps.push(StateAction::new(x.clone(), u.clone()));
            if t < problem.horizon {
                x = problem.env.transition_sample(&x, &u, &mut rng).unwrap();
            }
        }
        Trajectory::new(steps)
    }

    #[test]
    fn obs_loglik_formula() {
        let p = prob(0.05);
        let goal = StateAction::new(vec![PI, 0.0], vec![0.0]);
        assert_eq!(p.obs_loglik(&goal).unwrap(), 0.0);
        let z = StateAction::new(vec![0.0, 0.0], vec![0.0]);
        assert!((p.obs_loglik(&z).unwrap() + 0.05 * 4.0).abs() < 1e-15);
        assert!(p.obs_loglik(&StateAction::new(vec![0.0], vec![0.0])).is_err());
    }

    #[test]
    fn obs_loglik_direct_formula() {
        // cost 10 with eta 0.05 → -0.5: x'Qx = 10 in the scalar linear system
        let env = LinearEnv::scalar(1.0, 1.0, 1.0, 10.0, 1.0, 0.0).unwrap();
        let p = ControlProblem::new(env, 0.05, 1).unwrap();
        let z = StateAction::new(vec![1.0], vec![0.0]);
        assert!((p.obs_loglik(&z).unwrap() + 0.5).abs() < 1e-15);
    }

    #[test]
    fn obs_loglik_strictly_decreasing_in_eta() {
        let z = StateAction::new(vec![0.3, 0.1], vec![0.5]);
        let mut prev = f64::INFINITY;
        for eta in [0.0, 1e-3, 0.05, 1.0, 10.0] {
            let v = prob(eta).obs_loglik(&z).unwrap();
            assert!(v < prev);
            prev = v;
        }
    }

    #[test]
    fn single_step_decomposition() {
        let p = ControlProblem::new(EnvSpec::pendulum(), 0.05, 0).unwrap();
        let mut rng = RngStream::new(1).rng();
        let pol = TanhGaussianPolicy::init(2, &[4], EnvSpec::pendulum().action_box, &mut rng).unwrap();
        let traj = random_traj(&p, &pol, 3);
        let z = &traj.steps[0];
        let expected = pol.action_logpdf(&z.state, &z.action).unwrap() - 0.05 * p.env.cost(&z.state, &z.action);
        assert!((log_joint(&p, &pol, &traj).unwrap() - expected).abs() < 1e-13);
    }

    #[test]
    fn zero_temperature_is_prior_density() {
        let p = prob(0.0);
        let mut rng = RngStream::new(2).rng();
        let pol = TanhGaussianPolicy::init(2, &[3], EnvSpec::pendulum().action_box, &mut rng).unwrap();
        let traj = random_traj(&p, &pol, 4);
        let mut prior = policy_log_density(&pol, &traj).unwrap();
        for w in traj.steps.windows(2) {
            prior += p.env.transition_logpdf(&w[1].state, &w[0].state, &w[0].action).unwrap();
        }
        assert!((log_joint(&p, &pol, &traj).unwrap() - prior).abs() < 1e-10);
    }

    #[test]
    fn rejects_wrong_initial_state() {
        let p = prob(0.05);
        let mut rng = RngStream::new(2).rng();
        let pol = TanhGaussianPolicy::init(2, &[3], EnvSpec::pendulum().action_box, &mut rng).unwrap();
        let mut traj = random_traj(&p, &pol, 4);
        traj.steps[0].state[0] = 0.1;
        assert!(matches!(log_joint(&p, &pol, &traj), Err(Error::Precondition(_))));
        traj.steps.pop();
        assert!(matches!(grad_log_joint(&p, &pol, &traj), Err(Error::Dimension { .. })));
    }

    #[test]
    fn policy_difference_isolates_policy_terms() {
        let p = prob(0.05);
        let mut rng = RngStream::new(12).rng();
        let a = TanhGaussianPolicy::init(2, &[4], EnvSpec::pendulum().action_box, &mut rng).unwrap();
        let b = TanhGaussianPolicy::init(2, &[4], EnvSpec::pendulum().action_box, &mut rng).unwrap();
        let traj = random_traj(&p, &a, 5);
        let lhs = log_joint(&p, &a, &traj).unwrap() - log_joint(&p, &b, &traj).unwrap();
        let rhs = policy_log_density(&a, &traj).unwrap() - policy_log_density(&b, &traj).unwrap();
        assert!((lhs - rhs).abs() < 1e-9);
    }

    /// Policy whose density ignores its (frozen) parameters.
    struct Frozen {
        params: Vec<f64>,
    }

    impl Policy for Frozen {
        fn state_dim(&self) -> usize {
            2
        }
        fn action_dim(&self) -> usize {
            1
        }
        fn params(&self) -> &[f64] {
            &self.params
        }
        fn params_mut(&mut self) -> &mut [f64] {
            &mut self.params
        }
        fn sample_action<R: Rng + ?Sized>(&self, _x: &[f64], _rng: &mut R) -> Result<ActionSample> {
            Ok(ActionSample {
                action: vec![2.0],
                pre_squash: vec![2.0],
            })
        }
        fn action_logpdf(&self, _x: &[f64], _u: &[f64]) -> Result<f64> {
            Ok(0.0)
        }
        fn accumulate_grad(&self, _x: &[f64], _u: &[f64], _g: &mut [f64]) -> Result<f64> {
            Ok(0.0)
        }
    }

    #[test]
    fn theta_free_density_has_zero_score() {
        let p = prob(0.05);
        let pol = Frozen { params: vec![1.0, 2.0, 3.0] };
        let traj = random_traj(&p, &pol, 1);
        assert_eq!(grad_log_joint(&p, &pol, &traj).unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn linear_gaussian_score_closed_form() {
        let env = LinearEnv::scalar(0.9, 0.5, 0.2, 1.0, 0.5, 1.0).unwrap();
        let p = ControlProblem::new(env, 0.3, 6).unwrap();
        let pol = LinearGaussianPolicy::new(1, 1, vec![-0.6], vec![-0.2]).unwrap();
        let mut rng = RngStream::new(3).rng();
        let mut x = vec![1.0];
        let mut steps = Vec::new();
        for _ in 0..=6 {
            let u = pol.sample_action(&x, &mut rng).unwrap().action;
            steps.push(StateAction::new(x.clone(), u.clone()));
            x = p.env.transition_sample(&x, &u, &mut rng).unwrap();
        }
        let traj = Trajectory::new(steps);
        let var = (-0.4f64).exp();
        let (mut gk, mut gs) = (0.0, 0.0);
        for z in &traj.steps {
            let e = z.action[0] + 0.6 * z.state[0];
            gk += e * z.state[0] / var;
            gs += e * e / var - 1.0;
        }
        let g = grad_log_joint(&p, &pol, &traj).unwrap();
        assert!((g[0] - gk).abs() < 1e-12 && (g[1] - gs).abs() < 1e-12);
    }

    #[test]
    fn params_dimension_checked() {
        let p = prob(0.05);
        let pol = TanhGaussianPolicy::new(PolicyParams::zeros(vec![3, 1]).unwrap(), EnvSpec::pendulum().action_box).unwrap();
        let traj = Trajectory::new(vec![StateAction::new(vec![0.0, 0.0], vec![0.0]); 6]);
        assert!(log_joint(&p, &pol, &traj).is_err());
    }
}
