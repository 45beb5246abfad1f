use nalgebra::DMatrix;

use super::{kalman_smoother, LinearGaussianProblem};
use crate::error::{Error, Result};

/// `log p(y_{0:T} = 1 | theta)`.
pub fn log_marginal_likelihood(problem: &LinearGaussianProblem) -> Result<f64> {
    Ok(kalman_smoother(problem)?.log_likelihood)
}

/// Gradient of the log marginal likelihood in the policy parameters.
///
/// Computed as the smoothing expectation of the score
/// `sum_t grad log pi(u_t | x_t)`, which is linear in the second moments of
/// the marginals. With `e = u - K x` and `s = exp(log_std)` the gain part is
/// `E[e x'] / s^2` and the log-std part is `E[e^2] / s^2 - 1`, summed over t.
pub fn analytic_score(problem: &LinearGaussianProblem) -> Result<Vec<f64>> {
    let out = kalman_smoother(problem)?;
    let (d, m) = (problem.state_dim(), problem.action_dim());
    let k = &problem.gain;
    let var: Vec<f64> = problem.policy_log_std.iter().map(|l| (2.0 * l).exp()).collect();
    let mut ex = DMatrix::<f64>::zeros(m, d);
    let mut ee = vec![0.0; m];
    for g in &out.smoothed {
        let second = &g.cov + &g.mean * g.mean.transpose();
        let xx = second.view((0, 0), (d, d));
        let ux = second.view((d, 0), (m, d));
        let uu = second.view((d, d), (m, m));
        let e_x = ux - k * xx;
        let e_e = uu - k * ux.transpose() - ux * k.transpose() + k * xx * k.transpose();
        ex += e_x;
        for i in 0..m {
            ee[i] += e_e[(i, i)];
        }
    }
    let steps = out.smoothed.len() as f64;
    let mut grad = Vec::with_capacity(problem.num_params());
    for i in 0..m {
        for j in 0..d {
            grad.push(ex[(i, j)] / var[i]);
        }
    }
    if problem.learn_std {
        for i in 0..m {
            grad.push(ee[i] / var[i] - steps);
        }
    }
    Ok(grad)
}

/// Maximum-likelihood scalar gain on `[lo, hi]`.
///
/// A uniform grid locates the basin and golden-section search refines it.
/// Requires a problem with one state, one action and frozen std.
pub fn ml_gain(problem: &LinearGaussianProblem, lo: f64, hi: f64, grid: usize) -> Result<f64> {
    if problem.num_params() != 1 {
        return Err(Error::Precondition("ml_gain needs a single gain parameter".into()));
    }
    if !(lo < hi) || grid < 3 {
        return Err(Error::Config("ml_gain needs lo < hi and at least 3 grid points".into()));
    }
    let f = |k: f64| log_marginal_likelihood(&problem.with_params(&[k]));
    let h = (hi - lo) / (grid - 1) as f64;
    let mut best = (f64::NEG_INFINITY, lo);
    for i in 0..grid {
        let k = lo + i as f64 * h;
        let v = f(k)?;
        if v > best.0 {
            best = (v, k);
        }
    }
    let (mut a, mut b) = ((best.1 - h).max(lo), (best.1 + h).min(hi));
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - ratio * (b - a);
    let mut e = a + ratio * (b - a);
    let (mut fc, mut fe) = (f(c)?, f(e)?);
    while b - a > 1e-12 * (1.0 + best.1.abs()) {
        if fc > fe {
            b = e;
            e = c;
            fe = fc;
            c = b - ratio * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = e;
            fc = fe;
            e = a + ratio * (b - a);
            fe = f(e)?;
        }
    }
    Ok(0.5 * (a + b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::finite_diff_grad;
    use nalgebra::DVector;

    fn fixture() -> LinearGaussianProblem {
        LinearGaussianProblem::scalar(0.9, 0.5, 0.3, -0.4, -0.5, 1.0, 0.5, 0.6, 6, 1.0)
    }

    fn vector() -> LinearGaussianProblem {
        let mut p = fixture();
        p.a = DMatrix::from_row_slice(2, 2, &[1.0, 0.1, -0.2, 0.95]);
        p.b = DMatrix::from_row_slice(2, 2, &[0.0, 0.1, 0.3, 0.0]);
        p.noise_std = vec![0.1, 0.2];
        p.gain = DMatrix::from_row_slice(2, 2, &[-0.5, -0.8, 0.1, 0.2]);
        p.policy_log_std = vec![-0.3, 0.2];
        p.q = DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.2, 0.5]);
        p.r = DMatrix::from_row_slice(2, 2, &[0.3, 0.0, 0.0, 0.1]);
        p.x0 = DVector::from_vec(vec![1.0, -0.5]);
        p.learn_std = true;
        p
    }

    #[test]
    fn score_matches_finite_differences() {
        for p in [fixture(), vector()] {
            let g = analytic_score(&p).unwrap();
            let fd = finite_diff_grad(|th| log_marginal_likelihood(&p.with_params(th)).unwrap(), &p.params(), 1e-6).unwrap();
            for (a, b) in g.iter().zip(&fd) {
                assert!((a - b).abs() < 1e-6 * (1.0 + a.abs()), "{g:?} vs {fd:?}");
            }
        }
    }

    #[test]
    fn score_vanishes_at_the_maximum() {
        let p = fixture();
        let k = ml_gain(&p, -3.0, 3.0, 61).unwrap();
        let g = analytic_score(&p.with_params(&[k])).unwrap();
        assert!(g[0].abs() < 1e-6, "k={k} g={g:?}");
        let at = log_marginal_likelihood(&p.with_params(&[k])).unwrap();
        for dk in [-0.05, 0.05] {
            assert!(log_marginal_likelihood(&p.with_params(&[k + dk])).unwrap() < at);
        }
    }

    #[test]
    fn risk_neutral_score_is_zero() {
        // under the prior, E[grad log pi(u | x)] = 0 at every step
        let mut p = vector();
        p.temperature = 0.0;
        for g in analytic_score(&p).unwrap() {
            assert!(g.abs() < 1e-12);
        }
    }

    #[test]
    fn ml_gain_rejects_multi_parameter() {
        assert!(ml_gain(&vector(), -1.0, 1.0, 11).is_err());
    }
}
