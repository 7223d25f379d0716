//! Sample statistics shared by the diagnostics.

use rand::Rng;

use crate::rng::{self, Purpose};

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Standard error of the sample mean (unbiased variance).
pub fn std_error(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(xs);
    let var = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1) as f64;
    (var / n as f64).sqrt()
}

/// Empirical quantile by linear interpolation between order statistics.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    match sorted.len() {
        0 => f64::NAN,
        1 => sorted[0],
        n => {
            let pos = p.clamp(0.0, 1.0) * (n - 1) as f64;
            let lo = pos.floor() as usize;
            let hi = (lo + 1).min(n - 1);
            let frac = pos - lo as f64;
            sorted[lo] + frac * (sorted[hi] - sorted[lo])
        }
    }
}

/// Percentile bootstrap interval for `statistic` at confidence `level`.
/// Resample `r` draws its indices from the stream `(seed, Bootstrap, r)`.
/// Non-finite replicate values are kept and sort to the ends.
pub fn bootstrap_ci<F>(n: usize, resamples: usize, level: f64, seed: u64, mut statistic: F) -> (f64, f64)
where
    F: FnMut(&[usize]) -> f64,
{
    if n == 0 || resamples == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mut idx = vec![0usize; n];
    let mut reps: Vec<f64> = (0..resamples)
        .map(|r| {
            let mut g = rng::stream(seed, Purpose::Bootstrap, r as u64);
            for i in idx.iter_mut() {
                *i = g.random_range(0..n);
            }
            statistic(&idx)
        })
        .collect();
    reps.sort_by(f64::total_cmp);
    let alpha = (1.0 - level) / 2.0;
    (quantile(&reps, alpha), quantile(&reps, 1.0 - alpha))
}
