//! Log-space helpers and categorical sampling.

use rand::Rng;

use crate::error::{Error, Result};

pub const LN_2PI: f64 = 1.837_877_066_409_345_4;

/// `log(1 + exp(x))` without overflow.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// `log(1 - tanh(s)^2)`, stable for large `|s|`.
pub fn log_one_minus_tanh_sq(s: f64) -> f64 {
    2.0 * (std::f64::consts::LN_2 - s - softplus(-2.0 * s))
}

/// Log-sum-exp; `-inf` when every entry is `-inf` (or the slice is empty).
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + xs.iter().map(|&x| (x - max).exp()).sum::<f64>().ln()
}

/// Categorical distribution over `0..n` built from unnormalized log-weights.
#[derive(Clone, Debug)]
pub struct Categorical {
    cumulative: Vec<f64>,
}

impl Categorical {
    /// Fails with [`Error::DegenerateWeights`] (tagged with `time`) when no
    /// weight is finite, and with a numerical error on NaN or `+inf`.
    pub fn from_log_weights(log_weights: &[f64], time: usize) -> Result<Self> {
        let mut max = f64::NEG_INFINITY;
        for &w in log_weights {
            if w.is_nan() || w == f64::INFINITY {
                return Err(Error::Numerical(format!(
                    "invalid log-weight {w} at time step {time}"
                )));
            }
            max = max.max(w);
        }
        if max == f64::NEG_INFINITY {
            return Err(Error::DegenerateWeights { time });
        }
        let mut acc = 0.0;
        let cumulative = log_weights
            .iter()
            .map(|&w| {
                acc += (w - max).exp();
                acc
            })
            .collect();
        Ok(Self { cumulative })
    }

    pub fn len(&self) -> usize {
        self.cumulative.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cumulative.is_empty()
    }

    /// Normalized probabilities.
    pub fn probabilities(&self) -> Vec<f64> {
        let total = *self.cumulative.last().unwrap_or(&1.0);
        let mut prev = 0.0;
        self.cumulative
            .iter()
            .map(|&c| {
                let p = (c - prev) / total;
                prev = c;
                p
            })
            .collect()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let total = *self.cumulative.last().expect("non-empty categorical");
        let target = rng.random::<f64>() * total;
        // first index whose cumulative mass exceeds the target; zero-mass
        // entries can never be selected
        let idx = self.cumulative.partition_point(|&c| c <= target);
        idx.min(self.cumulative.len() - 1)
    }
}

/// Round-trip-exact diagonal Gaussian log-density.
pub fn diag_gaussian_logpdf(x: &[f64], mean: &[f64], std: &[f64]) -> f64 {
    x.iter()
        .zip(mean)
        .zip(std)
        .map(|((&xi, &mi), &si)| {
            let r = (xi - mi) / si;
            -0.5 * LN_2PI - si.ln() - 0.5 * r * r
        })
        .sum()
}
