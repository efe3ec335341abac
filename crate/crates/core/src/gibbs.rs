//! Finite-volume Gibbs measures
//!
//! ```text
//! ρ_n(dx) ∝ exp(-β E_n(x)) dx,   E_n(x) = ½ Σ_{k=0}^{n} (x_{k+1} - x_k)² + Σ_{k=1}^{n} F_k(x_k),
//! ```
//!
//! with `x_0 = 0` and `x_{n+1}` the fixed right endpoint. At zero potential
//! this is a Gaussian bridge with precision `βA`, `A = tridiag(-1, 2, -1)`.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::potential::{drift_into, PotentialField};
use crate::stats::{ks_two_sample, KsResult};

#[derive(Debug, Clone)]
pub struct GibbsSpec {
    pub n: usize,
    pub beta: f64,
    pub right_endpoint: f64,
    pub potential: PotentialField,
}

impl GibbsSpec {
    pub fn new(n: usize, beta: f64, right_endpoint: f64, potential: PotentialField) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidConfig("Gibbs volume must have n >= 1".into()));
        }
        if !(beta > 0.0) || !beta.is_finite() {
            return Err(Error::InvalidConfig(format!("beta must be positive, got {beta}")));
        }
        Ok(Self { n, beta, right_endpoint, potential })
    }

    pub fn with_endpoint(&self, n: usize, right_endpoint: f64) -> Self {
        Self { n, right_endpoint, ..self.clone() }
    }

    fn check(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.n {
            return Err(Error::DimensionMismatch { expected: self.n, found: x.len() });
        }
        Ok(())
    }
}

pub fn energy(spec: &GibbsSpec, x: &[f64]) -> Result<f64> {
    spec.check(x)?;
    let mut e = 0.0;
    let mut prev = 0.0;
    for (i, &xk) in x.iter().enumerate() {
        e += 0.5 * (xk - prev).powi(2);
        if !spec.potential.is_zero() {
            e += spec.potential.evaluate(i + 1, xk)?.value;
        }
        prev = xk;
    }
    Ok(e + 0.5 * (spec.right_endpoint - prev).powi(2))
}

/// `-∇E_n`, computed by the same routine as the SDE drift.
pub fn neg_gradient_into(spec: &GibbsSpec, x: &[f64], out: &mut [f64]) -> Result<()> {
    spec.check(x)?;
    drift_into(&spec.potential, x, spec.right_endpoint, out)
}

/// The zero-potential measure `N(m, (βA)^{-1})`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianBridge {
    pub n: usize,
    pub beta: f64,
    pub right_endpoint: f64,
}

impl GaussianBridge {
    pub fn new(n: usize, beta: f64, right_endpoint: f64) -> Result<Self> {
        GibbsSpec::new(n, beta, right_endpoint, PotentialField::zero())?;
        Ok(Self { n, beta, right_endpoint })
    }

    /// `m_k = k·x_{n+1}/(n+1)`.
    pub fn mean(&self) -> Vec<f64> {
        let d = (self.n + 1) as f64;
        (1..=self.n).map(|k| k as f64 * self.right_endpoint / d).collect()
    }

    /// `(A^{-1})_{kl} = min(k,l)·(n+1-max(k,l))/(n+1)`, 1-based.
    pub fn a_inverse(&self, k: usize, l: usize) -> f64 {
        let (lo, hi) = (k.min(l), k.max(l));
        (lo * (self.n + 1 - hi)) as f64 / (self.n + 1) as f64
    }

    pub fn covariance(&self) -> Vec<Vec<f64>> {
        (1..=self.n).map(|k| (1..=self.n).map(|l| self.a_inverse(k, l) / self.beta).collect()).collect()
    }

    pub fn variance(&self, k: usize) -> f64 {
        self.a_inverse(k, k) / self.beta
    }

    /// `A` as a dense matrix (without the factor `β`).
    pub fn stiffness(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.n, |i, j| match i.abs_diff(j) {
            0 => 2.0,
            1 => -1.0,
            _ => 0.0,
        })
    }

    /// Eigenvalues of `A` from a dense symmetric eigensolver, ascending.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut ev: Vec<f64> = SymmetricEigen::new(self.stiffness()).eigenvalues.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        ev
    }

    /// `2 - 2cos(mπ/(n+1))`, `m = 1..n`.
    pub fn analytic_eigenvalues(&self) -> Vec<f64> {
        let d = (self.n + 1) as f64;
        (1..=self.n).map(|m| 2.0 - 2.0 * (m as f64 * std::f64::consts::PI / d).cos()).collect()
    }

    /// I.i.d. samples via the bidiagonal Cholesky factor of `βA`.
    pub fn sample(&self, count: usize, seed: u64) -> Vec<Vec<f64>> {
        let n = self.n;
        // βA = L Lᵀ with diag(L) = d, subdiag(L) = e
        let mut d = vec![0.0; n];
        let mut e = vec![0.0; n];
        d[0] = (2.0 * self.beta).sqrt();
        for k in 1..n {
            e[k] = -self.beta / d[k - 1];
            d[k] = (2.0 * self.beta - e[k] * e[k]).sqrt();
        }
        let mean = self.mean();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..count)
            .map(|_| {
                let z: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
                // Lᵀ y = z
                let mut y = vec![0.0; n];
                y[n - 1] = z[n - 1] / d[n - 1];
                for k in (0..n - 1).rev() {
                    y[k] = (z[k] - e[k + 1] * y[k + 1]) / d[k];
                }
                y.iter().zip(&mean).map(|(a, m)| a + m).collect()
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MalaParams {
    pub step: f64,
    pub burn_in: usize,
    pub count: usize,
    pub thin: usize,
    pub seed: u64,
}

impl Default for MalaParams {
    fn default() -> Self {
        Self { step: 0.5, burn_in: 2_000, count: 10_000, thin: 5, seed: 1 }
    }
}

#[derive(Debug, Clone)]
pub struct MalaRun {
    pub samples: Vec<Vec<f64>>,
    pub acceptance_rate: f64,
}

fn mala_drift(spec: &GibbsSpec, x: &[f64], g: &mut [f64], out: &mut [f64], h: f64) -> Result<()> {
    neg_gradient_into(spec, x, g)?;
    let c = 0.5 * h * h * spec.beta;
    for ((o, xi), gi) in out.iter_mut().zip(x).zip(g.iter()) {
        *o = xi + c * gi;
    }
    Ok(())
}

/// Metropolis-adjusted Langevin chain targeting `exp(-βE_n)`.
pub fn mala_sample(spec: &GibbsSpec, init: &[f64], params: &MalaParams) -> Result<MalaRun> {
    spec.check(init)?;
    let h = params.step;
    if !(h > 0.0) {
        return Err(Error::InvalidConfig(format!("MALA step must be positive, got {h}")));
    }
    let thin = params.thin.max(1);
    let n = spec.n;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut x = init.to_vec();
    let mut ex = energy(spec, &x)?;
    let mut g = vec![0.0; n];
    let mut mx = vec![0.0; n];
    mala_drift(spec, &x, &mut g, &mut mx, h)?;
    let mut y = vec![0.0; n];
    let mut my = vec![0.0; n];
    let inv_2h2 = 1.0 / (2.0 * h * h);
    let total = params.burn_in + params.count * thin;
    let mut accepted = 0usize;
    let mut samples = Vec::with_capacity(params.count);
    for it in 0..total {
        for (yi, mi) in y.iter_mut().zip(&mx) {
            let z: f64 = rng.sample(StandardNormal);
            *yi = mi + h * z;
        }
        let ey = energy(spec, &y)?;
        mala_drift(spec, &y, &mut g, &mut my, h)?;
        let fwd: f64 = y.iter().zip(&mx).map(|(a, b)| (a - b).powi(2)).sum();
        let bwd: f64 = x.iter().zip(&my).map(|(a, b)| (a - b).powi(2)).sum();
        let log_alpha = -spec.beta * (ey - ex) + (fwd - bwd) * inv_2h2;
        let u: f64 = rng.random();
        if log_alpha >= 0.0 || u.ln() < log_alpha {
            std::mem::swap(&mut x, &mut y);
            std::mem::swap(&mut mx, &mut my);
            ex = ey;
            accepted += 1;
        }
        if it >= params.burn_in && (it - params.burn_in + 1) % thin == 0 {
            samples.push(x.clone());
        }
    }
    let acceptance_rate = accepted as f64 / total.max(1) as f64;
    if !(0.1..=0.9).contains(&acceptance_rate) {
        let suggested = if acceptance_rate < 0.1 { h * 0.5 } else { h * 2.0 };
        log::warn!("MALA acceptance rate {acceptance_rate:.3} outside [0.1, 0.9]; try step {suggested:.4}");
    }
    Ok(MalaRun { samples, acceptance_rate })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleMoments {
    pub mean: Vec<f64>,
    pub covariance: Vec<Vec<f64>>,
    /// `E[x_k²]`.
    pub second_moment: Vec<f64>,
    /// Richardson estimate `|Q_h - Q_{2h}|/3`, max over all reported moments.
    pub error_estimate: f64,
    pub resolution: usize,
    pub bounds: Vec<(f64, f64)>,
}

struct RawMoments {
    z: f64,
    first: Vec<f64>,
    cross: Vec<Vec<f64>>,
}

fn quadrature(spec: &GibbsSpec, bounds: &[(f64, f64)], res: usize, check_box: bool) -> Result<RawMoments> {
    let n = spec.n;
    let axes: Vec<Vec<f64>> = bounds.iter().map(|(a, b)| (0..=res).map(|i| a + (b - a) * i as f64 / res as f64).collect()).collect();
    let site: Vec<Vec<f64>> = axes
        .iter()
        .enumerate()
        .map(|(k, ax)| {
            ax.iter()
                .map(|&r| if spec.potential.is_zero() { Ok(0.0) } else { spec.potential.evaluate(k + 1, r).map(|v| v.value) })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    let weight = |i: usize| if i == 0 || i == res { 0.5 } else { 1.0 };
    let pts = res + 1;
    let total = pts.pow(n as u32);
    let index = |mut lin: usize, idx: &mut [usize]| {
        for slot in idx.iter_mut().rev() {
            *slot = lin % pts;
            lin /= pts;
        }
    };
    let log_density = |idx: &[usize]| {
        let mut e = 0.0;
        let mut prev = 0.0;
        for k in 0..n {
            let x = axes[k][idx[k]];
            e += 0.5 * (x - prev).powi(2) + site[k][idx[k]];
            prev = x;
        }
        -spec.beta * (e + 0.5 * (spec.right_endpoint - prev).powi(2))
    };
    // shift by the max log density for stability
    let shift = (0..total)
        .into_par_iter()
        .map(|lin| {
            let mut idx = vec![0; n];
            index(lin, &mut idx);
            log_density(&idx)
        })
        .reduce(|| f64::NEG_INFINITY, f64::max);
    if check_box {
        for k in 0..n {
            let edge = (0..total)
                .into_par_iter()
                .filter_map(|lin| {
                    let mut idx = vec![0; n];
                    index(lin, &mut idx);
                    (idx[k] == 0 || idx[k] == res).then(|| log_density(&idx))
                })
                .reduce(|| f64::NEG_INFINITY, f64::max);
            let ratio = (edge - shift).exp();
            if ratio > 1e-8 {
                return Err(Error::BoxTooSmall { coord: k + 1, ratio });
            }
        }
    }
    // slabs over the first axis, reduced in order
    let slabs: Vec<(f64, Vec<f64>, Vec<f64>)> = (0..pts)
        .into_par_iter()
        .map(|i0| {
            let mut z = 0.0;
            let mut first = vec![0.0; n];
            let mut cross = vec![0.0; n * n];
            let mut idx = vec![0; n];
            let per = total / pts;
            for rest in 0..per {
                index(i0 * per + rest, &mut idx);
                let mut w = (log_density(&idx) - shift).exp();
                for &i in idx.iter() {
                    w *= weight(i);
                }
                z += w;
                for a in 0..n {
                    let xa = axes[a][idx[a]];
                    first[a] += w * xa;
                    for b in a..n {
                        cross[a * n + b] += w * xa * axes[b][idx[b]];
                    }
                }
            }
            (z, first, cross)
        })
        .collect();
    let mut z = 0.0;
    let mut first = vec![0.0; n];
    let mut cross_flat = vec![0.0; n * n];
    for (sz, sf, sc) in slabs {
        z += sz;
        first.iter_mut().zip(sf).for_each(|(a, b)| *a += b);
        cross_flat.iter_mut().zip(sc).for_each(|(a, b)| *a += b);
    }
    let first: Vec<f64> = first.iter().map(|f| f / z).collect();
    let mut cross = vec![vec![0.0; n]; n];
    for a in 0..n {
        for b in a..n {
            cross[a][b] = cross_flat[a * n + b] / z;
            cross[b][a] = cross[a][b];
        }
    }
    Ok(RawMoments { z, first, cross })
}

/// Trapezoidal quadrature of the first and second moments over `bounds`
/// (one interval per coordinate) with `resolution` cells per axis.
pub fn grid_oracle(spec: &GibbsSpec, bounds: &[(f64, f64)], resolution: usize) -> Result<OracleMoments> {
    if spec.n > 3 {
        return Err(Error::OracleTooLarge(spec.n));
    }
    if bounds.len() != spec.n {
        return Err(Error::DimensionMismatch { expected: spec.n, found: bounds.len() });
    }
    if resolution < 4 || resolution % 2 != 0 {
        return Err(Error::InvalidConfig(format!("oracle resolution must be even and >= 4, got {resolution}")));
    }
    let fine = quadrature(spec, bounds, resolution, true)?;
    let coarse = quadrature(spec, bounds, resolution / 2, false)?;
    let n = spec.n;
    let mut err: f64 = 0.0;
    for a in 0..n {
        err = err.max((fine.first[a] - coarse.first[a]).abs() / 3.0);
        for b in 0..n {
            err = err.max((fine.cross[a][b] - coarse.cross[a][b]).abs() / 3.0);
        }
    }
    debug_assert!(fine.z > 0.0 && coarse.z > 0.0);
    let covariance = (0..n).map(|a| (0..n).map(|b| fine.cross[a][b] - fine.first[a] * fine.first[b]).collect()).collect();
    Ok(OracleMoments {
        second_moment: (0..n).map(|a| fine.cross[a][a]).collect(),
        mean: fine.first,
        covariance,
        error_estimate: err,
        resolution,
        bounds: bounds.to_vec(),
    })
}

/// Quadrature box `mean ± 8 sd` per coordinate from a pilot MALA run.
pub fn pilot_box(spec: &GibbsSpec, seed: u64) -> Result<Vec<(f64, f64)>> {
    let init = GaussianBridge::new(spec.n, spec.beta, spec.right_endpoint)?.mean();
    let params = MalaParams { step: 0.6 / spec.beta.sqrt(), burn_in: 2_000, count: 5_000, thin: 4, seed };
    let run = mala_sample(spec, &init, &params)?;
    Ok((0..spec.n)
        .map(|k| {
            let col: Vec<f64> = run.samples.iter().map(|s| s[k]).collect();
            let (m, sd) = (crate::stats::mean(&col), crate::stats::variance(&col).sqrt());
            (m - 8.0 * sd, m + 8.0 * sd)
        })
        .collect())
}

/// [`grid_oracle`] on the pilot box, widened by half its width about the
/// centre (at most `max_widen` times) while the box check fails.
pub fn grid_oracle_auto(spec: &GibbsSpec, seed: u64, resolution: usize, max_widen: usize) -> Result<OracleMoments> {
    let mut bounds = pilot_box(spec, seed)?;
    for attempt in 0..=max_widen {
        match grid_oracle(spec, &bounds, resolution) {
            Err(Error::BoxTooSmall { coord, ratio }) if attempt < max_widen => {
                log::info!("oracle box too small on coordinate {coord} (ratio {ratio:.2e}); widening");
                for (a, b) in bounds.iter_mut() {
                    let (c, h) = (0.5 * (*a + *b), 0.75 * (*b - *a));
                    (*a, *b) = (c - h, c + h);
                }
            }
            other => return other,
        }
    }
    unreachable!("the last attempt returns")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DlrParams {
    pub outer_n: usize,
    pub inner_n: usize,
    /// Conditioning value for coordinate `inner_n + 1`; defaults to its sample median.
    pub reference: Option<f64>,
    pub min_hits: usize,
    pub outer: MalaParams,
    pub inner: MalaParams,
}

impl Default for DlrParams {
    fn default() -> Self {
        Self {
            outer_n: 4,
            inner_n: 2,
            reference: None,
            min_hits: 500,
            outer: MalaParams { step: 0.6, burn_in: 2_000, count: 100_000, thin: 10, seed: 11 },
            inner: MalaParams { step: 0.6, burn_in: 2_000, count: 10_000, thin: 10, seed: 12 },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DlrReport {
    pub reference: f64,
    pub bin_half_width: f64,
    pub hits: usize,
    pub ks: Vec<KsResult>,
    pub outer_acceptance: f64,
    pub inner_acceptance: f64,
}

impl DlrReport {
    pub fn passes_1pct(&self) -> bool {
        self.ks.iter().all(KsResult::passes_1pct)
    }
}

/// Selects the `min_hits` samples whose coordinate `coord` (0-based) lies
/// closest to `r`; returns them with the resulting bin half-width.
pub fn nearest_bin(samples: &[Vec<f64>], coord: usize, r: f64, min_hits: usize) -> (Vec<&Vec<f64>>, f64) {
    let mut by_dist: Vec<(f64, &Vec<f64>)> = samples.iter().map(|s| ((s[coord] - r).abs(), s)).collect();
    by_dist.sort_by(|a, b| a.0.total_cmp(&b.0));
    let take = min_hits.min(by_dist.len());
    let half = by_dist.get(take.saturating_sub(1)).map_or(0.0, |p| p.0);
    (by_dist.into_iter().take(take).map(|p| p.1).collect(), half)
}

/// Compares the binned conditional law of the outer measure on coordinates
/// `1..=inner_n` against direct samples of the inner measure.
pub fn dlr_check(spec: &GibbsSpec, params: &DlrParams) -> Result<DlrReport> {
    dlr_check_with(spec, params, |inner, reference| {
        let init = GaussianBridge::new(inner.n, inner.beta, reference)?.mean();
        let run = mala_sample(inner, &init, &params.inner)?;
        Ok((run.samples, run.acceptance_rate))
    })
}

/// As [`dlr_check`], with the inner samples supplied by `inner_sampler`,
/// which receives the inner spec and the conditioning value and returns
/// samples with an acceptance rate (1 for exact samplers).
pub fn dlr_check_with(
    spec: &GibbsSpec,
    params: &DlrParams,
    inner_sampler: impl FnOnce(&GibbsSpec, f64) -> Result<(Vec<Vec<f64>>, f64)>,
) -> Result<DlrReport> {
    let (outer_n, inner_n) = (params.outer_n, params.inner_n);
    if inner_n == 0 || inner_n >= outer_n || outer_n > 8 {
        return Err(Error::InvalidConfig(format!("dlr_check needs 0 < inner_n < outer_n <= 8, got inner {inner_n}, outer {outer_n}")));
    }
    let outer = spec.with_endpoint(outer_n, spec.right_endpoint);
    let init = GaussianBridge::new(outer_n, spec.beta, spec.right_endpoint)?.mean();
    let outer_run = mala_sample(&outer, &init, &params.outer)?;
    let reference = params.reference.unwrap_or_else(|| {
        let mut col: Vec<f64> = outer_run.samples.iter().map(|s| s[inner_n]).collect();
        col.sort_by(f64::total_cmp);
        col[col.len() / 2]
    });
    let (hits, half) = nearest_bin(&outer_run.samples, inner_n, reference, params.min_hits);
    if hits.len() < params.min_hits {
        log::warn!("DLR bin holds {} samples (< {}); widen the bin or lengthen the chain", hits.len(), params.min_hits);
    }
    let inner = spec.with_endpoint(inner_n, reference);
    let (inner_samples, inner_acceptance) = inner_sampler(&inner, reference)?;
    let ks = (0..inner_n)
        .map(|k| {
            let a: Vec<f64> = hits.iter().map(|s| s[k]).collect();
            let b: Vec<f64> = inner_samples.iter().map(|s| s[k]).collect();
            ks_two_sample(&a, &b)
        })
        .collect();
    Ok(DlrReport { reference, bin_half_width: half, hits: hits.len(), ks, outer_acceptance: outer_run.acceptance_rate, inner_acceptance })
}
