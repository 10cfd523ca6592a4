#![allow(dead_code)]

/// Mean and batch-means standard error.
pub fn batch_mean_se(xs: &[f64], n_batches: usize) -> (f64, f64) {
    let size = xs.len() / n_batches;
    let means: Vec<f64> = (0..n_batches)
        .map(|b| xs[b * size..(b + 1) * size].iter().sum::<f64>() / size as f64)
        .collect();
    let grand = means.iter().sum::<f64>() / n_batches as f64;
    let var = means.iter().map(|m| (m - grand).powi(2)).sum::<f64>() / (n_batches - 1) as f64;
    (grand, (var / n_batches as f64).sqrt())
}

/// Mean and standard error for independent draws.
pub fn iid_mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Two-sided 1e-3 critical value of `sqrt(n) D` for the Kolmogorov distribution.
pub const KS_CRITICAL_1E3: f64 = 1.9495;

/// `sqrt(n) * sup |F_n − F|`.
pub fn ks_scaled_statistic(mut xs: Vec<f64>, cdf: impl Fn(f64) -> f64) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let d = xs
        .iter()
        .enumerate()
        .map(|(k, &x)| {
            let f = cdf(x);
            (f - k as f64 / n).abs().max(((k + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max);
    d * n.sqrt()
}
