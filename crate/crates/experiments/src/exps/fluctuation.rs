//! Fluctuation exponent: growth of `E|x_k - vk|` along equilibrated chains.
//!
//! The regressor is `log k_eff` with `k_eff = k(n+1-k)/(n+1)`, the bridge
//! variance profile; at zero potential the fitted exponent is then exactly
//! 1/2 in expectation. The plain `log k` fit is reported alongside.

use polymerlab_core::dynamics::integrate_with;
use polymerlab_core::gibbs::GaussianBridge;
use polymerlab_core::keyed::derive_seed;
use polymerlab_core::noise::grid_steps;
use polymerlab_core::polymer::PolymerState;
use polymerlab_core::potential::{PotentialField, PotentialSpec};
use serde::{Deserialize, Serialize};

use crate::config::Context;
use crate::error::Result;
use crate::report::{Outcome, Status, Table};
use crate::stat::{jackknife, linear_fit, mean, Z95};
use crate::Experiment;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Params {
    pub n: usize,
    pub slope: f64,
    pub burn_in: f64,
    pub measure: f64,
    /// Time between recorded states during the measurement phase.
    pub every: f64,
    /// Gate on the upper end of the 95% interval (sublinearity).
    pub max_upper: f64,
    /// Reported only: consistency with the 3/4 bound at desk scale.
    pub informational_bound: f64,
    /// Run a zero-potential reference and check it against 1/2.
    pub reference: bool,
    pub reference_tolerance: f64,
    pub negative_control: bool,
}

impl Default for Params {
    fn default() -> Self {
        Self {
            n: 32,
            slope: 0.0,
            burn_in: 200.0,
            measure: 2000.0,
            every: 1.0,
            max_upper: 1.0,
            informational_bound: 0.8,
            reference: true,
            reference_tolerance: 0.05,
            negative_control: true,
        }
    }
}

pub struct FluctuationExponent;

/// Per-seed time averages of `|x_k - vk|` and of the temporal spread of `x_k`.
struct SeedProfile {
    abs_dev: Vec<f64>,
    temporal_sd: f64,
}

struct Fit {
    xi: f64,
    se: f64,
    xi_log_k: f64,
    temporal_sd: f64,
    profile: Vec<f64>,
}

impl Fit {
    fn ci(&self) -> (f64, f64) {
        (self.xi - Z95 * self.se, self.xi + Z95 * self.se)
    }
}

fn fit_window(n: usize) -> (usize, usize) {
    ((n / 10).max(1), (n / 2).max(2))
}

fn k_eff(n: usize, k: usize) -> f64 {
    (k * (n + 1 - k)) as f64 / (n + 1) as f64
}

fn slope_of(n: usize, profiles: &[&SeedProfile], regressor: impl Fn(usize) -> f64) -> f64 {
    let (lo, hi) = fit_window(n);
    let ks: Vec<usize> = (lo..=hi).collect();
    let xs: Vec<f64> = ks.iter().map(|&k| regressor(k).ln()).collect();
    let ys: Vec<f64> = ks.iter().map(|&k| (profiles.iter().map(|p| p.abs_dev[k - 1]).sum::<f64>() / profiles.len() as f64).ln()).collect();
    linear_fit(&xs, &ys).slope
}

/// `field = None` uses the replicate's own environment.
fn run_seed(ctx: &Context, p: &Params, field: Option<&PotentialField>, seed: u64, sigma: f64) -> Result<SeedProfile> {
    let n = p.n;
    let field = match field {
        Some(f) => f.clone(),
        None => ctx.field(seed)?,
    };
    let r = p.slope * (n + 1) as f64;
    let bridge = GaussianBridge::new(n, ctx.beta(), r)?;
    let init = bridge.sample(1, derive_seed(seed, 0x666c)).remove(0);
    let x0 = PolymerState::new(init, r)?;
    let cfg = ctx.sde_config(p.burn_in + p.measure).with_sigma(sigma);
    let path = ctx.path(seed)?;
    let burn = grid_steps(p.burn_in, ctx.dt())? as u64;
    let total = grid_steps(p.burn_in + p.measure, ctx.dt())? as u64;
    let every = grid_steps(p.every, ctx.dt())?.max(1) as u64;
    let mut sum_abs = vec![0.0; n];
    let mut sum = vec![0.0; n];
    let mut sum_sq = vec![0.0; n];
    let mut count = 0.0;
    integrate_with(&x0, &field, &path, &cfg, 0, total, |s, x| {
        if s > burn && (s - burn) % every == 0 {
            for (k, v) in x.coords().iter().enumerate() {
                let d = v - p.slope * (k + 1) as f64;
                sum_abs[k] += d.abs();
                sum[k] += v;
                sum_sq[k] += v * v;
            }
            count += 1.0;
        }
    })?;
    let sds: Vec<f64> = sum.iter().zip(&sum_sq).map(|(s, q)| (q / count - (s / count).powi(2)).max(0.0).sqrt()).collect();
    Ok(SeedProfile { abs_dev: sum_abs.iter().map(|a| a / count).collect(), temporal_sd: mean(&sds) })
}

fn fit(ctx: &Context, p: &Params, field: Option<&PotentialField>, sigma: f64) -> Result<Fit> {
    let profiles = ctx.map(&ctx.seeds, |&seed| run_seed(ctx, p, field, seed, sigma))?;
    let n = p.n;
    let (xi, se) = jackknife(&profiles, |g| slope_of(n, g, |k| k_eff(n, k)));
    let all: Vec<&SeedProfile> = profiles.iter().collect();
    let xi_log_k = slope_of(n, &all, |k| k as f64);
    let profile = (0..n).map(|k| profiles.iter().map(|q| q.abs_dev[k]).sum::<f64>() / profiles.len() as f64).collect();
    let temporal_sd = mean(&profiles.iter().map(|q| q.temporal_sd).collect::<Vec<_>>());
    Ok(Fit { xi, se, xi_log_k, temporal_sd, profile })
}

/// Without noise the chain never leaves its initial configuration's basin,
/// so there is nothing to regress.
fn fit_status(sigma: f64, f: &Fit, max_upper: f64) -> Status {
    if sigma == 0.0 || !f.se.is_finite() {
        Status::Inconclusive
    } else {
        Status::from(f.ci().1 < max_upper)
    }
}

impl Experiment for FluctuationExponent {
    type Params = Params;
    const NAME: &'static str = "exp_fluctuation_exponent";
    const SUMMARY: &'static str = "fluctuation exponent: E|x_k - vk| grows like k^xi with xi < 1 (bound 3/4; KPZ value 2/3)";
    const DEFAULT_SEEDS: u64 = 64;

    fn run(ctx: &Context, p: &Params) -> Result<Outcome> {
        let mut out = Outcome::default();
        let field = ctx.base_field()?;
        let sigma = ctx.sigma();
        let main = fit(ctx, p, None, sigma)?;
        let (lo, hi) = main.ci();
        out.metric_ci("xi", main.xi, (lo, hi));
        out.metric("xi_se", main.se);
        out.metric("xi_log_k", main.xi_log_k);
        out.metric("temporal_sd", main.temporal_sd);
        out.check(
            "sublinear",
            fit_status(sigma, &main, p.max_upper),
            &format!("upper end of the 95% jackknife interval of xi below {} (inconclusive without noise)", p.max_upper),
            format!("xi = {:.4} [{lo:.4}, {hi:.4}]", main.xi),
        );
        out.info(
            "below_informational_bound",
            main.xi <= p.informational_bound,
            &format!("xi <= {} (reported, not gated)", p.informational_bound),
            format!("xi = {:.4}", main.xi),
        );
        let mut table = Table::new("fluctuation_profile", &["k", "k_eff", "mean_abs_dev"]);
        for (k, v) in main.profile.iter().enumerate() {
            table.push(vec![(k + 1) as f64, k_eff(p.n, k + 1), *v]);
        }
        out.tables.push(table);

        if p.reference {
            let zero = if field.is_zero() { None } else { Some(fit(ctx, p, Some(&PotentialField::new(PotentialSpec::Zero)?), sigma)?) };
            let r = zero.as_ref().unwrap_or(&main);
            let (rlo, rhi) = r.ci();
            out.metric_ci("xi_zero_potential", r.xi, (rlo, rhi));
            out.metric("xi_zero_potential_log_k", r.xi_log_k);
            out.check(
                "zero_potential_reference",
                (r.xi - 0.5).abs() <= p.reference_tolerance,
                &format!("zero potential: xi within {} of the bridge value 1/2", p.reference_tolerance),
                format!("xi = {:.4} [{rlo:.4}, {rhi:.4}]", r.xi),
            );
        }
        if p.negative_control {
            let c = fit(ctx, p, None, 0.0)?;
            let status = fit_status(0.0, &c, p.max_upper);
            out.metric("control_temporal_sd", c.temporal_sd);
            out.check(
                "negative_control_degrades",
                status == Status::Inconclusive,
                "sigma = 0 from a Gibbs start: fluctuations frozen, the regression is flagged inconclusive",
                format!("temporal sd {:.3e}, status {status:?}", c.temporal_sd),
            );
        }
        Ok(out)
    }
}
