//! Small statistics toolkit: moments, standard errors, two-sample
//! Kolmogorov–Smirnov tests and ordinary least squares.

use serde::{Deserialize, Serialize};

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

pub fn covariance(xs: &[f64], ys: &[f64]) -> f64 {
    let (mx, my) = (mean(xs), mean(ys));
    xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

pub fn correlation(xs: &[f64], ys: &[f64]) -> f64 {
    covariance(xs, ys) / (variance(xs) * variance(ys)).sqrt()
}

/// Standard error of the mean of i.i.d. samples.
pub fn standard_error(xs: &[f64]) -> f64 {
    (variance(xs) / xs.len() as f64).sqrt()
}

/// Sample covariance matrix of row-major samples (one row per sample).
pub fn covariance_matrix(samples: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let d = samples.first().map_or(0, Vec::len);
    let m = samples.len() as f64;
    let mu: Vec<f64> = (0..d).map(|j| samples.iter().map(|s| s[j]).sum::<f64>() / m).collect();
    let mut c = vec![vec![0.0; d]; d];
    for s in samples {
        for i in 0..d {
            let di = s[i] - mu[i];
            for j in i..d {
                c[i][j] += di * (s[j] - mu[j]);
            }
        }
    }
    for i in 0..d {
        for j in i..d {
            c[i][j] /= m - 1.0;
            c[j][i] = c[i][j];
        }
    }
    c
}

/// Standard error of a time-series mean from non-overlapping batch means.
/// Uses fewer batches when the series is shorter than `batches`.
pub fn batch_means_se(xs: &[f64], batches: usize) -> f64 {
    let batches = batches.clamp(1, xs.len().max(1));
    let size = (xs.len() / batches).max(1);
    let means: Vec<f64> = xs.chunks_exact(size).map(mean).collect();
    standard_error(&means)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
    /// Critical value of the statistic at the 1% level.
    pub critical_1pct: f64,
}

impl KsResult {
    pub fn passes_1pct(&self) -> bool {
        self.statistic < self.critical_1pct
    }
}

/// Two-sample Kolmogorov–Smirnov test with the asymptotic Kolmogorov law.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> KsResult {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len(), b.len());
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < na && j < nb {
        let x = a[i].min(b[j]);
        while i < na && a[i] <= x {
            i += 1;
        }
        while j < nb && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na as f64 - j as f64 / nb as f64).abs());
    }
    let ne = (na * nb) as f64 / (na + nb) as f64;
    let sq = ne.sqrt();
    KsResult { statistic: d, p_value: kolmogorov_q((sq + 0.12 + 0.11 / sq) * d), critical_1pct: (-(0.01f64 / 2.0).ln() / 2.0).sqrt() / sq }
}

/// Survival function of the Kolmogorov distribution.
pub fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for j in 1..=100 {
        let term = sign * (-2.0 * (j * j) as f64 * lambda * lambda).exp();
        sum += term;
        if term.abs() < 1e-12 {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_se: f64,
}

/// Ordinary least squares `y = intercept + slope·x`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> LinearFit {
    let m = xs.len() as f64;
    let (mx, my) = (mean(xs), mean(ys));
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = xs.iter().zip(ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    let slope_se = if m > 2.0 { (rss / (m - 2.0) / sxx).sqrt() } else { f64::NAN };
    LinearFit { slope, intercept, slope_se }
}
