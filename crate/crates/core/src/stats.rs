//! Sample moments, weighted least squares and bootstrap resampling.

use alloc::vec::Vec;

use rand::Rng;

use crate::disorder::trial_rng;
use crate::{Error, Result};

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1) as f64
}

pub fn stderr_of_mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    libm::sqrt(variance(xs) / xs.len() as f64)
}

/// `(mean, stderr)` of integer counts.
pub fn count_moments(counts: &[usize]) -> (f64, f64) {
    let xs: Vec<f64> = counts.iter().map(|&c| c as f64).collect();
    (mean(&xs), stderr_of_mean(&xs))
}

pub fn pearson(xs: &[f64], ys: &[f64]) -> f64 {
    let mx = mean(xs);
    let my = mean(ys);
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return 0.0;
    }
    sxy / libm::sqrt(sxx * syy)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineFit {
    pub intercept: f64,
    pub slope: f64,
    pub intercept_se: f64,
    pub slope_se: f64,
}

/// Weighted least squares for `y = a + b x` with weights `1/σ²`; standard
/// errors from the weights alone.
pub fn weighted_line_fit(x: &[f64], y: &[f64], w: &[f64]) -> Result<LineFit> {
    if x.len() != y.len() || x.len() != w.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            got: y.len().min(w.len()),
        });
    }
    let mut s = 0.0;
    let mut sx = 0.0;
    let mut sy = 0.0;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut used = 0;
    for ((&xi, &yi), &wi) in x.iter().zip(y).zip(w) {
        if !(wi.is_finite() && wi > 0.0 && yi.is_finite()) {
            continue;
        }
        used += 1;
        s += wi;
        sx += wi * xi;
        sy += wi * yi;
        sxx += wi * xi * xi;
        sxy += wi * xi * yi;
    }
    let det = s * sxx - sx * sx;
    if used < 2 || det <= 0.0 {
        return Err(Error::InsufficientData("need two distinct abscissae for a line fit".into()));
    }
    Ok(LineFit {
        intercept: (sxx * sy - sx * sxy) / det,
        slope: (s * sxy - sx * sy) / det,
        intercept_se: libm::sqrt(sxx / det),
        slope_se: libm::sqrt(s / det),
    })
}

/// Statistic recomputed on `reps` resamples (with replacement) of `n` units.
pub fn bootstrap<F>(n: usize, reps: usize, seed: u64, mut stat: F) -> Vec<f64>
where
    F: FnMut(&[usize]) -> f64,
{
    let mut rng = trial_rng(seed, u64::MAX);
    let mut idx = alloc::vec![0usize; n];
    (0..reps)
        .map(|_| {
            for i in idx.iter_mut() {
                *i = rng.gen_range(0..n);
            }
            stat(&idx)
        })
        .collect()
}

/// Standard deviation of bootstrap replicates, ignoring non-finite ones.
pub fn replicate_sd(reps: &[f64]) -> f64 {
    let finite: Vec<f64> = reps.iter().copied().filter(|x| x.is_finite()).collect();
    libm::sqrt(variance(&finite))
}

/// Percentile interval `[q, 1-q]` of the replicates.
pub fn percentile_interval(reps: &[f64], q: f64) -> (f64, f64) {
    let mut v: Vec<f64> = reps.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    v.sort_by(f64::total_cmp);
    let at = |p: f64| {
        let i = libm::round(p * (v.len() - 1) as f64) as usize;
        v[i.min(v.len() - 1)]
    };
    (at(q), at(1.0 - q))
}
