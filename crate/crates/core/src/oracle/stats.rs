//! Summary statistics for Monte Carlo checks.

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

/// Standard error of the mean of independent draws.
pub fn standard_error(xs: &[f64]) -> f64 {
    (variance(xs) / xs.len() as f64).sqrt()
}

/// Standard error of the mean of a correlated chain, by batch means.
///
/// The chain is cut into `batches` equal blocks (the remainder is dropped)
/// and the spread of the block means estimates the error.
pub fn batch_means_se(xs: &[f64], batches: usize) -> f64 {
    assert!(batches >= 2 && xs.len() >= batches, "need at least two full batches");
    let size = xs.len() / batches;
    let means: Vec<f64> = xs.chunks_exact(size).take(batches).map(mean).collect();
    standard_error(&means)
}
