use nalgebra::{DMatrix, DVector};

use super::{symmetrize, LinearGaussianProblem};
use crate::error::{Error, Result};

/// Mean and covariance of a Gaussian over `z_t = (x_t, u_t)`.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianMarginal {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

#[derive(Clone, Debug)]
pub struct SmootherOutput {
    /// `p(z_t | y_{0:t-1})`.
    pub predicted: Vec<GaussianMarginal>,
    /// `p(z_t | y_{0:t})`.
    pub filtered: Vec<GaussianMarginal>,
    /// `p(z_t | y_{0:T})`.
    pub smoothed: Vec<GaussianMarginal>,
    /// `log p(y_{0:T} = 1)`.
    pub log_likelihood: f64,
}

/// Exact smoothing marginals for a linear-Gaussian problem.
///
/// The pseudo-observation with precision `S = 2 eta diag(Q, R)` updates
/// `(m, P)` to `((I + P S)^-1 m, (I + P S)^-1 P)`; the covariance is formed in
/// the symmetric Joseph-type form `K (P + P S P) K'` with `K = (I + P S)^-1`,
/// which stays valid for the singular prior covariance of `z_0`.
pub fn kalman_smoother(problem: &LinearGaussianProblem) -> Result<SmootherOutput> {
    problem.validate()?;
    let n = problem.joint_dim();
    let (f, g) = problem.joint_transition();
    let s = problem.observation_precision();
    let eye = DMatrix::<f64>::identity(n, n);

    let (mut m, mut p) = problem.initial_law();
    let mut predicted = Vec::with_capacity(problem.horizon + 1);
    let mut filtered = Vec::with_capacity(problem.horizon + 1);
    let mut log_likelihood = 0.0;

    for t in 0..=problem.horizon {
        if t > 0 {
            let prev: &GaussianMarginal = filtered.last().unwrap();
            m = &f * &prev.mean;
            p = &f * &prev.cov * f.transpose() + &g;
            symmetrize(&mut p);
        }
        predicted.push(GaussianMarginal {
            mean: m.clone(),
            cov: p.clone(),
        });
        let a = &eye + &p * &s;
        let lu = a.clone().lu();
        let det = lu.determinant();
        if !(det > 0.0) {
            return Err(Error::Numerical(format!("I + P S is singular at step {t}")));
        }
        let k = lu
            .try_inverse()
            .ok_or_else(|| Error::Numerical(format!("I + P S is not invertible at step {t}")))?;
        let mf = &k * &m;
        let mut pf = &k * (&p + &p * &s * &p) * k.transpose();
        symmetrize(&mut pf);
        log_likelihood += -0.5 * det.ln() - 0.5 * m.dot(&(&s * &mf));
        filtered.push(GaussianMarginal { mean: mf, cov: pf });
    }

    let mut smoothed = vec![filtered[problem.horizon].clone(); problem.horizon + 1];
    for t in (0..problem.horizon).rev() {
        let pred = &predicted[t + 1];
        let chol = pred.cov.clone().cholesky().ok_or_else(|| {
            Error::Numerical(format!("predicted covariance at step {} is not positive definite", t + 1))
        })?;
        let filt = &filtered[t];
        // J = P_f F' P_pred^-1
        let j = chol.solve(&(&f * &filt.cov)).transpose();
        let next = &smoothed[t + 1];
        let mean = &filt.mean + &j * (&next.mean - &pred.mean);
        let mut cov = &filt.cov + &j * (&next.cov - &pred.cov) * j.transpose();
        symmetrize(&mut cov);
        smoothed[t] = GaussianMarginal { mean, cov };
    }

    Ok(SmootherOutput {
        predicted,
        filtered,
        smoothed,
        log_likelihood,
    })
}
