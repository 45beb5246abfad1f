use crate::error::{Error, Result};

/// Central finite-difference gradient.
///
/// Coordinate `i` uses step `rel_step * max(1, |theta_i|)`.
pub fn finite_diff_grad<F>(f: F, theta: &[f64], rel_step: f64) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> f64,
{
    if !(rel_step > 0.0) {
        return Err(Error::Config("finite-difference step must be positive".into()));
    }
    let mut x = theta.to_vec();
    let mut grad = Vec::with_capacity(theta.len());
    for i in 0..theta.len() {
        let h = rel_step * theta[i].abs().max(1.0);
        x[i] = theta[i] + h;
        let up = f(&x);
        x[i] = theta[i] - h;
        let down = f(&x);
        x[i] = theta[i];
        let g = (up - down) / (2.0 * h);
        if !g.is_finite() {
            return Err(Error::Numerical(format!("non-finite difference in coordinate {i}")));
        }
        grad.push(g);
    }
    Ok(grad)
}
