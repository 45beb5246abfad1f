use rand::Rng;
use rand_distr::StandardNormal;

use super::{ActionSample, Policy};
use crate::error::{check_dim, Result};
use crate::numeric::LN_2PI;

/// `u = K x + diag(exp(log_std)) eps`, unbounded.
///
/// Parameters are the gain `K` (`m x d`, row-major), followed by the
/// log-standard-deviations when those are learned. With `learn_std = false`
/// the standard deviations are frozen and excluded from the parameter vector.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearGaussianPolicy {
    state_dim: usize,
    action_dim: usize,
    params: Vec<f64>,
    fixed_log_std: Option<Vec<f64>>,
}

impl LinearGaussianPolicy {
    /// Gain and log-std are both parameters.
    pub fn new(state_dim: usize, action_dim: usize, gain: Vec<f64>, log_std: Vec<f64>) -> Result<Self> {
        check_dim("gain", state_dim * action_dim, gain.len())?;
        check_dim("log std", action_dim, log_std.len())?;
        let mut params = gain;
        params.extend(log_std);
        Ok(Self {
            state_dim,
            action_dim,
            params,
            fixed_log_std: None,
        })
    }

    /// Only the gain is a parameter.
    pub fn with_fixed_std(state_dim: usize, action_dim: usize, gain: Vec<f64>, log_std: Vec<f64>) -> Result<Self> {
        check_dim("gain", state_dim * action_dim, gain.len())?;
        check_dim("log std", action_dim, log_std.len())?;
        Ok(Self {
            state_dim,
            action_dim,
            params: gain,
            fixed_log_std: Some(log_std),
        })
    }

    pub fn learns_std(&self) -> bool {
        self.fixed_log_std.is_none()
    }

    pub fn gain(&self) -> &[f64] {
        &self.params[..self.state_dim * self.action_dim]
    }

    pub fn log_std(&self) -> &[f64] {
        match &self.fixed_log_std {
            Some(v) => v,
            None => &self.params[self.state_dim * self.action_dim..],
        }
    }

    pub fn mean(&self, x: &[f64]) -> Vec<f64> {
        let k = self.gain();
        (0..self.action_dim)
            .map(|i| {
                k[i * self.state_dim..(i + 1) * self.state_dim]
                    .iter()
                    .zip(x)
                    .map(|(a, b)| a * b)
                    .sum()
            })
            .collect()
    }
}

impl Policy for LinearGaussianPolicy {
    fn state_dim(&self) -> usize {
        self.state_dim
    }

    fn action_dim(&self) -> usize {
        self.action_dim
    }

    fn params(&self) -> &[f64] {
        &self.params
    }

    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn sample_action<R: Rng + ?Sized>(&self, x: &[f64], rng: &mut R) -> Result<ActionSample> {
        check_dim("policy input", self.state_dim, x.len())?;
        let action: Vec<f64> = self
            .mean(x)
            .into_iter()
            .zip(self.log_std())
            .map(|(m, &ls)| {
                let eps: f64 = rng.sample(StandardNormal);
                m + ls.exp() * eps
            })
            .collect();
        Ok(ActionSample {
            pre_squash: action.clone(),
            action,
        })
    }

    fn action_logpdf(&self, x: &[f64], u: &[f64]) -> Result<f64> {
        check_dim("policy input", self.state_dim, x.len())?;
        check_dim("action", self.action_dim, u.len())?;
        Ok(self
            .mean(x)
            .iter()
            .zip(u)
            .zip(self.log_std())
            .map(|((&m, &ui), &ls)| {
                let z = (ui - m) * (-ls).exp();
                -0.5 * LN_2PI - ls - 0.5 * z * z
            })
            .sum())
    }

    fn accumulate_grad(&self, x: &[f64], u: &[f64], grad: &mut [f64]) -> Result<f64> {
        check_dim("gradient buffer", self.params.len(), grad.len())?;
        let logp = self.action_logpdf(x, u)?;
        let mean = self.mean(x);
        let d = self.state_dim;
        let learn_std = self.learns_std();
        for i in 0..self.action_dim {
            let ls = self.log_std()[i];
            let inv_var = (-2.0 * ls).exp();
            let e = u[i] - mean[i];
            for j in 0..d {
                grad[i * d + j] += e * inv_var * x[j];
            }
            if learn_std {
                grad[self.action_dim * d + i] += e * e * inv_var - 1.0;
            }
        }
        Ok(logp)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout() {
        let p = LinearGaussianPolicy::new(2, 1, vec![0.5, -1.0], vec![0.1]).unwrap();
        assert_eq!(p.num_params(), 3);
        assert_eq!(p.mean(&[2.0, 1.0]), vec![0.0]);
        let f = LinearGaussianPolicy::with_fixed_std(2, 1, vec![0.5, -1.0], vec![0.1]).unwrap();
        assert_eq!(f.num_params(), 2);
        assert_eq!(f.log_std(), &[0.1]);
    }

    #[test]
    fn gradient_is_gaussian_score() {
        let p = LinearGaussianPolicy::new(1, 1, vec![-0.4], vec![0.3]).unwrap();
        let (x, u) = (1.5, 0.2);
        let var = (0.6f64).exp();
        let e = u - (-0.4 * x);
        let g = p.grad_action_logpdf(&[x], &[u]).unwrap();
        assert!((g[0] - e * x / var).abs() < 1e-14);
        assert!((g[1] - (e * e / var - 1.0)).abs() < 1e-14);
    }
}
