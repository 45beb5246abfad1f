use rand::Rng;

use crate::error::Result;
use crate::numeric::Categorical;

/// `count` i.i.d. indices drawn with probability proportional to `exp(log_weights)`.
///
/// Fails with a degenerate-weights error when every log-weight is `-inf`.
pub fn multinomial_resample<R: Rng + ?Sized>(log_weights: &[f64], count: usize, rng: &mut R) -> Result<Vec<usize>> {
    let cat = Categorical::from_log_weights(log_weights, 0)?;
    Ok((0..count).map(|_| cat.sample(rng)).collect())
}
