//! Summary statistics shared by the Monte Carlo estimators.

use rand::Rng;
use serde::{Deserialize, Serialize};

/// Mean, unbiased variance and standard error of the mean of a sample.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub count: usize,
    pub mean: f64,
    pub variance: f64,
    pub stderr: f64,
}

impl Summary {
    pub fn of(xs: &[f64]) -> Self {
        let count = xs.len();
        if count == 0 {
            return Self { count, mean: f64::NAN, variance: f64::NAN, stderr: f64::NAN };
        }
        let mean = xs.iter().sum::<f64>() / count as f64;
        let variance = if count > 1 {
            xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (count - 1) as f64
        } else {
            0.0
        };
        Self { count, mean, variance, stderr: (variance / count as f64).sqrt() }
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    Summary::of(xs).mean
}

pub fn median(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let k = v.len() / 2;
    if v.len() % 2 == 1 {
        v[k]
    } else {
        0.5 * (v[k - 1] + v[k])
    }
}

/// Wilson score interval at 95% for `successes` out of `trials`.
pub fn wilson_interval(successes: usize, trials: usize) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    const Z: f64 = 1.959_963_984_540_054;
    let n = trials as f64;
    let p = successes as f64 / n;
    let denom = 1.0 + Z * Z / n;
    let centre = (p + Z * Z / (2.0 * n)) / denom;
    let half = Z * (p * (1.0 - p) / n + Z * Z / (4.0 * n * n)).sqrt() / denom;
    let lo = if successes == 0 { 0.0 } else { (centre - half).max(0.0) };
    let hi = if successes == trials { 1.0 } else { (centre + half).min(1.0) };
    (lo, hi)
}

/// Ordinary least squares `y = intercept + slope x`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_stderr: f64,
}

pub fn linear_fit(xs: &[f64], ys: &[f64]) -> LinearFit {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = xs.iter().zip(ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    let slope_stderr = if xs.len() > 2 { (rss / (n - 2.0) / sxx).sqrt() } else { 0.0 };
    LinearFit { slope, intercept, slope_stderr }
}

/// Bootstrap standard error of `statistic` over resamples of `items`.
pub fn bootstrap_stderr<T, R: Rng + ?Sized>(
    items: &[T],
    replicates: usize,
    rng: &mut R,
    mut statistic: impl FnMut(&[&T]) -> f64,
) -> f64 {
    let mut values = Vec::with_capacity(replicates);
    let mut pick: Vec<&T> = Vec::with_capacity(items.len());
    for _ in 0..replicates {
        pick.clear();
        pick.extend((0..items.len()).map(|_| &items[rng.random_range(0..items.len())]));
        values.push(statistic(&pick));
    }
    Summary::of(&values).variance.sqrt()
}
