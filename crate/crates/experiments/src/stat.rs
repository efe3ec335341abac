//! Interval helpers on top of the core statistics module.

pub use polymerlab_core::stats::*;

/// Two-sided normal quantile used for reported intervals.
pub const Z95: f64 = 1.959_963_984_540_054;

/// Mean with a 95% normal interval from the standard error.
pub fn mean_ci(xs: &[f64]) -> (f64, (f64, f64)) {
    let m = mean(xs);
    if xs.len() < 2 {
        return (m, (m, m));
    }
    let h = Z95 * standard_error(xs);
    (m, (m - h, m + h))
}

/// Jackknife estimate and standard error of `stat` over `groups`.
pub fn jackknife<G>(groups: &[G], stat: impl Fn(&[&G]) -> f64) -> (f64, f64) {
    let all: Vec<&G> = groups.iter().collect();
    let full = stat(&all);
    let m = groups.len();
    if m < 2 {
        return (full, f64::NAN);
    }
    let loo: Vec<f64> = (0..m)
        .map(|i| {
            let sub: Vec<&G> = all.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, g)| *g).collect();
            stat(&sub)
        })
        .collect();
    let lm = mean(&loo);
    let var = loo.iter().map(|x| (x - lm).powi(2)).sum::<f64>() * (m as f64 - 1.0) / m as f64;
    (full, var.sqrt())
}

/// Largest value, ignoring NaN.
pub fn max_of(xs: impl IntoIterator<Item = f64>) -> f64 {
    xs.into_iter().fold(f64::NEG_INFINITY, f64::max)
}
