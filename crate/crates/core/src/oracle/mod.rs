//! Independent ground truth for testing the particle machinery.
//!
//! With linear dynamics, a linear-Gaussian policy and quadratic cost, the
//! pseudo-likelihood `exp(-eta z' diag(Q, R) z)` is conjugate and the
//! smoothing distribution over `z_{0:T}` is Gaussian. [`kalman_smoother`]
//! computes it by forward filtering and Rauch-Tung-Striebel smoothing;
//! [`DensePosterior`] computes the same thing by conditioning the full joint
//! Gaussian directly, which is slower but shares no code with the recursion.

mod dense;
mod fd;
mod kalman;
mod quadrature;
mod score;
pub mod stats;

pub use dense::DensePosterior;
pub use fd::finite_diff_grad;
pub use kalman::{kalman_smoother, GaussianMarginal, SmootherOutput};
pub use quadrature::{integrate, integrate_2d};
pub use score::{analytic_score, log_marginal_likelihood, ml_gain};

use nalgebra::{DMatrix, DVector};

use crate::env::LinearEnv;
use crate::error::{check_dim, Error, Result};
use crate::policy::LinearGaussianPolicy;
use crate::ssm::ControlProblem;

/// A linear-Gaussian instance of the control state-space model.
#[derive(Clone, Debug)]
pub struct LinearGaussianProblem {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    /// Per-coordinate transition noise standard deviation.
    pub noise_std: Vec<f64>,
    /// Policy gain `K` (`m x d`).
    pub gain: DMatrix<f64>,
    pub policy_log_std: Vec<f64>,
    /// Whether the policy log-std belongs to the parameter vector.
    pub learn_std: bool,
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub temperature: f64,
    pub horizon: usize,
    pub x0: DVector<f64>,
}

impl LinearGaussianProblem {
    /// Scalar system with a scalar gain whose log-std is frozen.
    #[allow(clippy::too_many_arguments)]
    pub fn scalar(
        a: f64,
        b: f64,
        noise_std: f64,
        gain: f64,
        policy_log_std: f64,
        q: f64,
        r: f64,
        temperature: f64,
        horizon: usize,
        x0: f64,
    ) -> Self {
        let m = |v| DMatrix::from_element(1, 1, v);
        Self {
            a: m(a),
            b: m(b),
            noise_std: vec![noise_std],
            gain: m(gain),
            policy_log_std: vec![policy_log_std],
            learn_std: false,
            q: m(q),
            r: m(r),
            temperature,
            horizon,
            x0: DVector::from_element(1, x0),
        }
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn action_dim(&self) -> usize {
        self.b.ncols()
    }

    /// Dimension of `z_t = (x_t, u_t)`.
    pub fn joint_dim(&self) -> usize {
        self.state_dim() + self.action_dim()
    }

    pub fn validate(&self) -> Result<()> {
        let (d, m) = (self.state_dim(), self.action_dim());
        check_dim("gain rows", m, self.gain.nrows())?;
        check_dim("gain columns", d, self.gain.ncols())?;
        check_dim("policy log std", m, self.policy_log_std.len())?;
        if !(self.temperature >= 0.0) {
            return Err(Error::Config("temperature must be nonnegative".into()));
        }
        self.env().map(|_| ())
    }

    pub fn env(&self) -> Result<LinearEnv> {
        LinearEnv::new(
            self.a.clone(),
            self.b.clone(),
            self.noise_std.clone(),
            self.q.clone(),
            self.r.clone(),
            self.x0.iter().copied().collect(),
        )
    }

    pub fn control_problem(&self) -> Result<ControlProblem<LinearEnv>> {
        ControlProblem::with_any_temperature(self.env()?, self.temperature, self.horizon)
    }

    pub fn policy(&self) -> Result<LinearGaussianPolicy> {
        let (d, m) = (self.state_dim(), self.action_dim());
        let gain: Vec<f64> = (0..m).flat_map(|i| (0..d).map(move |j| (i, j))).map(|(i, j)| self.gain[(i, j)]).collect();
        if self.learn_std {
            LinearGaussianPolicy::new(d, m, gain, self.policy_log_std.clone())
        } else {
            LinearGaussianPolicy::with_fixed_std(d, m, gain, self.policy_log_std.clone())
        }
    }

    /// Parameter vector in the [`LinearGaussianPolicy`] layout.
    pub fn params(&self) -> Vec<f64> {
        let mut p: Vec<f64> = (0..self.action_dim())
            .flat_map(|i| (0..self.state_dim()).map(move |j| (i, j)))
            .map(|(i, j)| self.gain[(i, j)])
            .collect();
        if self.learn_std {
            p.extend_from_slice(&self.policy_log_std);
        }
        p
    }

    pub fn num_params(&self) -> usize {
        self.state_dim() * self.action_dim() + if self.learn_std { self.action_dim() } else { 0 }
    }

    /// Copy with the policy parameters replaced.
    pub fn with_params(&self, theta: &[f64]) -> Self {
        assert_eq!(theta.len(), self.num_params(), "parameter length");
        let (d, m) = (self.state_dim(), self.action_dim());
        let mut out = self.clone();
        for i in 0..m {
            for j in 0..d {
                out.gain[(i, j)] = theta[i * d + j];
            }
        }
        if self.learn_std {
            out.policy_log_std.copy_from_slice(&theta[d * m..]);
        }
        out
    }

    pub(crate) fn policy_cov(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_iterator(
            self.action_dim(),
            self.policy_log_std.iter().map(|ls| (2.0 * ls).exp()),
        ))
    }

    pub(crate) fn noise_cov(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_iterator(
            self.state_dim(),
            self.noise_std.iter().map(|s| s * s),
        ))
    }

    /// `z_{t+1} = F z_t + N(0, G)`.
    pub(crate) fn joint_transition(&self) -> (DMatrix<f64>, DMatrix<f64>) {
        let (d, m) = (self.state_dim(), self.action_dim());
        let n = d + m;
        let k = &self.gain;
        let w = self.noise_cov();
        let mut f = DMatrix::zeros(n, n);
        f.view_mut((0, 0), (d, d)).copy_from(&self.a);
        f.view_mut((0, d), (d, m)).copy_from(&self.b);
        f.view_mut((d, 0), (m, d)).copy_from(&(k * &self.a));
        f.view_mut((d, d), (m, m)).copy_from(&(k * &self.b));
        let mut g = DMatrix::zeros(n, n);
        g.view_mut((0, 0), (d, d)).copy_from(&w);
        g.view_mut((0, d), (d, m)).copy_from(&(&w * k.transpose()));
        g.view_mut((d, 0), (m, d)).copy_from(&(k * &w));
        g.view_mut((d, d), (m, m)).copy_from(&(k * &w * k.transpose() + self.policy_cov()));
        (f, g)
    }

    /// Law of `z_0`: `x_0` known, `u_0 ~ N(K x_0, Sigma_u)`.
    pub(crate) fn initial_law(&self) -> (DVector<f64>, DMatrix<f64>) {
        let (d, m) = (self.state_dim(), self.action_dim());
        let mut mean = DVector::zeros(d + m);
        mean.rows_mut(0, d).copy_from(&self.x0);
        mean.rows_mut(d, m).copy_from(&(&self.gain * &self.x0));
        let mut cov = DMatrix::zeros(d + m, d + m);
        cov.view_mut((d, d), (m, m)).copy_from(&self.policy_cov());
        (mean, cov)
    }

    /// Pseudo-observation precision `2 eta diag(Q, R)`.
    pub(crate) fn observation_precision(&self) -> DMatrix<f64> {
        let (d, m) = (self.state_dim(), self.action_dim());
        let mut s = DMatrix::zeros(d + m, d + m);
        s.view_mut((0, 0), (d, d)).copy_from(&(&self.q * (2.0 * self.temperature)));
        s.view_mut((d, d), (m, m)).copy_from(&(&self.r * (2.0 * self.temperature)));
        s
    }
}

pub(crate) fn symmetrize(m: &mut DMatrix<f64>) {
    let t = m.transpose();
    *m += t;
    *m *= 0.5;
}
