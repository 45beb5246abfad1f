use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::StandardNormal;

use super::LinearGaussianProblem;
use crate::error::{Error, Result};
use crate::ssm::{StateAction, Trajectory};

/// The smoothing distribution obtained by conditioning the whole joint at once.
///
/// The stacked vector `z_{0:T}` is written as `c + L eps` with `eps` standard
/// normal (one block of policy noise and one of transition noise per step).
/// Conditioning on the pseudo-observations turns the law of `eps` into a
/// Gaussian with precision `I + L' S L`, which is all this type needs.
#[derive(Clone, Debug)]
pub struct DensePosterior {
    joint_dim: usize,
    state_dim: usize,
    horizon: usize,
    /// Posterior mean of the stacked `z_{0:T}`.
    pub mean: DVector<f64>,
    /// Posterior covariance of the stacked `z_{0:T}`.
    pub cov: DMatrix<f64>,
    /// `log p(y_{0:T} = 1)`.
    pub log_likelihood: f64,
    offset: DVector<f64>,
    loading: DMatrix<f64>,
    eps_mean: DVector<f64>,
    eps_chol: Cholesky<f64, Dyn>,
}

impl DensePosterior {
    pub fn new(problem: &LinearGaussianProblem) -> Result<Self> {
        problem.validate()?;
        let (d, m) = (problem.state_dim(), problem.action_dim());
        let n = d + m;
        let t_max = problem.horizon;
        let total = (t_max + 1) * n;
        let free = (t_max + 1) * m + t_max * d;

        let sigma_u: Vec<f64> = problem.policy_log_std.iter().map(|l| l.exp()).collect();
        let mut offset = DVector::zeros(total);
        let mut loading = DMatrix::zeros(total, free);
        let mut x_c = problem.x0.clone();
        let mut x_l = DMatrix::zeros(d, free);
        let mut col = 0;
        for t in 0..=t_max {
            let base = t * n;
            offset.rows_mut(base, d).copy_from(&x_c);
            loading.view_mut((base, 0), (d, free)).copy_from(&x_l);
            let u_c = &problem.gain * &x_c;
            let mut u_l = &problem.gain * &x_l;
            for i in 0..m {
                u_l[(i, col + i)] += sigma_u[i];
            }
            col += m;
            offset.rows_mut(base + d, m).copy_from(&u_c);
            loading.view_mut((base + d, 0), (m, free)).copy_from(&u_l);
            if t < t_max {
                x_c = &problem.a * &x_c + &problem.b * &u_c;
                x_l = &problem.a * &x_l + &problem.b * &u_l;
                for i in 0..d {
                    x_l[(i, col + i)] += problem.noise_std[i];
                }
                col += d;
            }
        }
        debug_assert_eq!(col, free);

        let block = problem.observation_precision();
        let mut s = DMatrix::zeros(total, total);
        for t in 0..=t_max {
            s.view_mut((t * n, t * n), (n, n)).copy_from(&block);
        }
        let ls = s.transpose() * &loading;
        let precision = DMatrix::identity(free, free) + loading.transpose() * &ls;
        let chol = precision
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Numerical("posterior precision is not positive definite".into()))?;
        let b = ls.transpose() * &offset;
        let eps_mean = -chol.solve(&b);
        let log_det: f64 = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
        let log_likelihood = -0.5 * offset.dot(&(&s * &offset)) - 0.5 * b.dot(&eps_mean) - 0.5 * log_det;

        let mean = &offset + &loading * &eps_mean;
        let mut cov = &loading * chol.inverse() * loading.transpose();
        super::symmetrize(&mut cov);
        Ok(Self {
            joint_dim: n,
            state_dim: d,
            horizon: t_max,
            mean,
            cov,
            log_likelihood,
            offset,
            loading,
            eps_mean,
            eps_chol: chol,
        })
    }

    /// Posterior mean and covariance of `z_t`.
    pub fn marginal(&self, t: usize) -> (DVector<f64>, DMatrix<f64>) {
        let n = self.joint_dim;
        (
            self.mean.rows(t * n, n).into_owned(),
            self.cov.view((t * n, t * n), (n, n)).into_owned(),
        )
    }

    /// Exact draw from the smoothing distribution.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Trajectory {
        let k = self.eps_mean.len();
        let xi = DVector::from_iterator(k, (0..k).map(|_| rng.sample::<f64, _>(StandardNormal)));
        // L_c' y = xi  gives  y ~ N(0, (L_c L_c')^-1)
        let y = self
            .eps_chol
            .l()
            .transpose()
            .solve_upper_triangular(&xi)
            .expect("triangular factor has a positive diagonal");
        let z = &self.offset + &self.loading * (&self.eps_mean + y);
        let (n, d) = (self.joint_dim, self.state_dim);
        Trajectory::new(
            (0..=self.horizon)
                .map(|t| {
                    let zt = z.rows(t * n, n);
                    StateAction::new(zt.rows(0, d).iter().copied().collect(), zt.rows(d, n - d).iter().copied().collect())
                })
                .collect(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn prior_when_temperature_is_zero() {
        let p = LinearGaussianProblem::scalar(1.0, 1.0, 0.5, 0.0, 0.0, 1.0, 1.0, 0.0, 1, 2.0);
        let post = DensePosterior::new(&p).unwrap();
        // x0 = 2, u0 ~ N(0,1), x1 = 2 + u0 + 0.5 w, u1 ~ N(0,1)
        assert!((post.mean - DVector::from_vec(vec![2.0, 0.0, 2.0, 0.0])).amax() < 1e-14);
        assert!((post.cov[(2, 2)] - 1.25).abs() < 1e-14);
        assert!((post.cov[(1, 2)] - 1.0).abs() < 1e-14);
        assert_eq!(post.cov[(0, 0)], 0.0);
        assert!(post.log_likelihood.abs() < 1e-14);
    }

    #[test]
    fn scalar_normalizer_by_hand() {
        // T = 0: Z = exp(-eta q x0^2) * E[exp(-eta r u^2)], u ~ N(k x0, s^2)
        let (k, s, q, r, eta, x0) = (0.3f64, 0.8f64, 2.0, 0.5, 0.9, 1.5);
        let p = LinearGaussianProblem::scalar(1.0, 1.0, 1.0, k, s.ln(), q, r, eta, 0, x0);
        let post = DensePosterior::new(&p).unwrap();
        let mu = k * x0;
        let c = 2.0 * eta * r;
        let expected = -eta * q * x0 * x0 - 0.5 * (1.0 + c * s * s).ln() - 0.5 * c * mu * mu / (1.0 + c * s * s);
        assert!((post.log_likelihood - expected).abs() < 1e-13);
    }

    #[test]
    fn sample_moments() {
        let p = LinearGaussianProblem::scalar(0.9, 0.5, 0.3, -0.4, -0.5, 1.0, 0.5, 0.6, 3, 1.0);
        let post = DensePosterior::new(&p).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 40_000;
        let mut sum = 0.0;
        let mut sq = 0.0;
        for _ in 0..n {
            let tr = post.sample(&mut rng);
            assert_eq!(tr.steps[0].state, vec![1.0]);
            let v = tr.steps[2].action[0];
            sum += v;
            sq += v * v;
        }
        let (m, c) = post.marginal(2);
        let mean = sum / n as f64;
        let var = sq / n as f64 - mean * mean;
        let se = (c[(1, 1)] / n as f64).sqrt();
        assert!((mean - m[1]).abs() < 4.0 * se);
        assert!((var / c[(1, 1)] - 1.0).abs() < 0.03);
    }
}
