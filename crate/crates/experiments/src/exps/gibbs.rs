//! Gibbs invariance: trajectories started from the finite-volume Gibbs
//! measure keep its moments; a long run's occupation statistics match it.

use polymerlab_core::dynamics::{evolve, integrate_with, SdeConfig};
use polymerlab_core::gibbs::{dlr_check_with, grid_oracle_auto, mala_sample, DlrParams, DlrReport, GaussianBridge, GibbsSpec, MalaParams};
use polymerlab_core::keyed::derive_seed;
use polymerlab_core::noise::grid_steps;
use polymerlab_core::polymer::PolymerState;
use serde::{Deserialize, Serialize};

use crate::config::Context;
use crate::error::{ExpError, Result};
use crate::report::{Outcome, Table};
use crate::stat::{batch_means_se, max_of, mean, mean_ci, standard_error, variance};
use crate::Experiment;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Params {
    /// Run the time-t moment comparison (and its control).
    pub invariance: bool,
    pub n: usize,
    pub right_endpoint: f64,
    pub t_end: f64,
    /// Moment discrepancies must stay within this many standard errors.
    pub gate_se: f64,
    /// Optional entrywise relative tolerance on the covariance.
    pub cov_rel_tol: Option<f64>,
    pub eigen_tol: f64,
    /// Initial-state sampler for non-zero potentials (`count` is ignored).
    pub mala: MalaParams,
    pub oracle_resolution: usize,
    pub long_run: bool,
    pub long_run_t: f64,
    pub long_run_every: f64,
    pub long_run_batches: usize,
    pub negative_control: bool,
    pub control_sigma: f64,
    pub control_trajectories: usize,
    /// Conditional-consistency check of the finite-volume measures.
    pub dlr: Option<DlrParams>,
    /// The control conditions the inner measure on `reference + shift`.
    pub dlr_control_shift: f64,
}

impl Default for Params {
    fn default() -> Self {
        Self {
            invariance: true,
            n: 8,
            right_endpoint: 0.0,
            t_end: 5.0,
            gate_se: 3.0,
            cov_rel_tol: None,
            eigen_tol: 1e-10,
            mala: MalaParams { step: 0.8, burn_in: 5_000, count: 0, thin: 60, seed: 5 },
            oracle_resolution: 240,
            long_run: true,
            long_run_t: 2000.0,
            long_run_every: 0.1,
            long_run_batches: 50,
            negative_control: true,
            control_sigma: 2.0,
            control_trajectories: 1000,
            dlr: None,
            dlr_control_shift: 1.0,
        }
    }
}

pub struct GibbsInvariance;

struct Truth {
    mean: Vec<f64>,
    cov: Vec<Vec<f64>>,
}

/// Largest standardized discrepancy of means and covariance entries
/// (`full_cov`) or means and second moments (otherwise).
struct Comparison {
    max_z: f64,
    max_rel_cov: f64,
    mean: Vec<f64>,
    second: Vec<f64>,
}

fn compare(samples: &[Vec<f64>], truth: &Truth, full_cov: bool) -> Comparison {
    let n = truth.mean.len();
    let col = |k: usize| samples.iter().map(|s| s[k]).collect::<Vec<f64>>();
    let cols: Vec<Vec<f64>> = (0..n).map(col).collect();
    let means: Vec<f64> = cols.iter().map(|c| mean(c)).collect();
    let mut max_z: f64 = 0.0;
    let mut z = |diff: f64, se: f64| {
        if se > 0.0 {
            max_z = max_z.max(diff.abs() / se);
        }
    };
    for k in 0..n {
        z(means[k] - truth.mean[k], standard_error(&cols[k]));
    }
    let mut max_rel_cov: f64 = 0.0;
    let mut second = vec![0.0; n];
    for k in 0..n {
        let sq: Vec<f64> = cols[k].iter().map(|x| x * x).collect();
        second[k] = mean(&sq);
        if !full_cov {
            let want = truth.cov[k][k] + truth.mean[k].powi(2);
            z(second[k] - want, standard_error(&sq));
        }
    }
    for k in 0..n {
        for l in k..n {
            let prods: Vec<f64> = cols[k].iter().zip(&cols[l]).map(|(a, b)| (a - means[k]) * (b - means[l])).collect();
            let m = samples.len() as f64;
            let c = prods.iter().sum::<f64>() / (m - 1.0);
            max_rel_cov = max_rel_cov.max((c - truth.cov[k][l]).abs() / truth.cov[k][l].abs());
            if full_cov {
                z(c - truth.cov[k][l], standard_error(&prods));
            }
        }
    }
    Comparison { max_z, max_rel_cov, mean: means, second }
}

/// Smallest per-coordinate effective sample size, `var / se_bm²` with 50 batch means.
fn effective_size(samples: &[Vec<f64>]) -> f64 {
    let n = samples.first().map_or(0, Vec::len);
    (0..n)
        .map(|k| {
            let col: Vec<f64> = samples.iter().map(|s| s[k]).collect();
            let se = batch_means_se(&col, 50);
            (variance(&col) / (se * se)).min(col.len() as f64)
        })
        .fold(f64::INFINITY, f64::min)
}

fn initial_samples(ctx: &Context, p: &Params, spec: &GibbsSpec, count: usize) -> Result<Vec<Vec<f64>>> {
    if spec.potential.is_zero() {
        let bridge = GaussianBridge::new(p.n, spec.beta, p.right_endpoint)?;
        Ok(bridge.sample(count, derive_seed(ctx.noise_seed, 0x6962)))
    } else {
        let init = GaussianBridge::new(p.n, spec.beta, p.right_endpoint)?.mean();
        let params = MalaParams { count, ..p.mala };
        let run = mala_sample(spec, &init, &params)?;
        log::info!("initial MALA acceptance {:.3}", run.acceptance_rate);
        Ok(run.samples)
    }
}

fn evolve_all(ctx: &Context, p: &Params, spec: &GibbsSpec, init: &[Vec<f64>], cfg: &SdeConfig<f64>) -> Result<Vec<Vec<f64>>> {
    let jobs: Vec<(u64, &Vec<f64>)> = ctx.seeds.iter().copied().zip(init).collect();
    ctx.map(&jobs, |&(seed, x)| {
        let x0 = PolymerState::new(x.clone(), p.right_endpoint)?;
        let traj = evolve(&x0, &spec.potential, &ctx.path(seed)?, cfg, usize::MAX)?;
        Ok(traj.final_state().coords().to_vec())
    })
}

impl Experiment for GibbsInvariance {
    type Params = Params;
    const NAME: &'static str = "exp_gibbs_invariance";
    const SUMMARY: &'static str =
        "Gibbs invariance: the finite-volume polymer measure is invariant for the dynamics, and a long run is mixing";
    const DEFAULT_SEEDS: u64 = 200;

    fn run(ctx: &Context, p: &Params) -> Result<Outcome> {
        let mut out = Outcome::default();
        let field = ctx.base_field()?;
        let spec = GibbsSpec::new(p.n, ctx.beta(), p.right_endpoint, field)?;
        if p.invariance {
            let truth = gibbs_truth(p, &spec, &mut out)?;
            invariance(ctx, p, &spec, &truth, &mut out)?;
        }
        if let Some(d) = &p.dlr {
            dlr(ctx, p, d, &spec, &mut out)?;
        }
        Ok(out)
    }
}

fn gibbs_truth(p: &Params, spec: &GibbsSpec, out: &mut Outcome) -> Result<Truth> {
    let truth = if spec.potential.is_zero() {
        let b = GaussianBridge::new(p.n, spec.beta, p.right_endpoint)?;
        let ev_err = b.eigenvalues().iter().zip(b.analytic_eigenvalues()).map(|(a, e)| (a - e).abs()).fold(0.0, f64::max);
        out.metric("eigenvalue_error", ev_err);
        out.check(
            "eigenvalues",
            ev_err <= p.eigen_tol,
            &format!("eigenvalues of A match 2 - 2cos(m pi/(n+1)) within {:e}", p.eigen_tol),
            format!("{ev_err:e}"),
        );
        Truth { mean: b.mean(), cov: b.covariance() }
    } else {
        if p.n > 3 {
            return Err(ExpError::Config(format!("non-zero potentials need n <= 3 for the quadrature oracle, got n = {}", p.n)));
        }
        let o = grid_oracle_auto(spec, p.mala.seed ^ 0x70, p.oracle_resolution, 4)?;
        out.metric("oracle_error_estimate", o.error_estimate);
        Truth { mean: o.mean, cov: o.covariance }
    };
    Ok(truth)
}

fn invariance(ctx: &Context, p: &Params, spec: &GibbsSpec, truth: &Truth, out: &mut Outcome) -> Result<()> {
    let zero = spec.potential.is_zero();
    let m = ctx.seeds.len();
    let init = initial_samples(ctx, p, spec, m.max(p.control_trajectories.min(m)))?;
    let cfg = ctx.sde_config(p.t_end);
    let finals = evolve_all(ctx, p, spec, &init, &cfg)?;
    let before = compare(&init, truth, zero);
    let after = compare(&finals, truth, zero);
    out.metric("trajectories", m as f64);
    out.metric("initial_ess", effective_size(&init[..m]));
    let x1: Vec<f64> = finals.iter().map(|x| x[0]).collect();
    let (m1, ci) = mean_ci(&x1);
    out.metric_ci("time_t_mean_x1", m1, ci);
    out.metric("initial_max_z", before.max_z);
    out.metric("max_z", after.max_z);
    out.metric("max_rel_cov_error", after.max_rel_cov);
    let what = if zero { "means and covariance entries" } else { "means and second moments" };
    out.check(
        "moments_invariant",
        after.max_z <= p.gate_se,
        &format!("time-t {what} within {} standard errors of the Gibbs values", p.gate_se),
        format!("max |z| = {:.3} over {m} trajectories", after.max_z),
    );
    if let Some(tol) = p.cov_rel_tol {
        out.check(
            "covariance_relative",
            after.max_rel_cov <= tol,
            &format!("every covariance entry within {}% of the Gibbs value", tol * 100.0),
            format!("max relative error {:.4}", after.max_rel_cov),
        );
    }
    let mut table = Table::new("gibbs_moments", &["k", "mean_truth", "mean_time_t", "second_truth", "second_time_t"]);
    for k in 0..p.n {
        let second = truth.cov[k][k] + truth.mean[k].powi(2);
        table.push(vec![(k + 1) as f64, truth.mean[k], after.mean[k], second, after.second[k]]);
    }
    out.tables.push(table);

    if p.long_run {
        let every = grid_steps(p.long_run_every, ctx.dt())?.max(1) as u64;
        let steps = grid_steps(p.long_run_t, ctx.dt())? as u64;
        let mut obs: Vec<Vec<f64>> = vec![Vec::new(); 2 * p.n];
        let x0 = PolymerState::new(init[0].clone(), p.right_endpoint)?;
        let path = ctx.path(u64::from(u32::MAX))?;
        integrate_with(&x0, &spec.potential, &path, &cfg, 0, steps, |s, x| {
            if s % every == 0 {
                for (k, v) in x.coords().iter().enumerate() {
                    obs[k].push(*v);
                    obs[p.n + k].push(v * v);
                }
            }
        })?;
        let mut max_z: f64 = 0.0;
        for k in 0..p.n {
            let want = [truth.mean[k], truth.cov[k][k] + truth.mean[k].powi(2)];
            for (o, w) in [&obs[k], &obs[p.n + k]].into_iter().zip(want) {
                let se = batch_means_se(o, p.long_run_batches);
                if se > 0.0 {
                    max_z = max_z.max((mean(o) - w).abs() / se);
                }
            }
        }
        out.metric("long_run_max_z", max_z);
        out.check(
            "long_run_mixing",
            max_z <= p.gate_se,
            &format!("time averages of x_k and x_k^2 within {} batch-means standard errors", p.gate_se),
            format!("max |z| = {max_z:.3} over t = {}", p.long_run_t),
        );
    }

    if p.negative_control {
        let mc = p.control_trajectories.min(m);
        let ccfg = cfg.clone().with_sigma(p.control_sigma);
        let sub = Context { seeds: ctx.seeds[..mc].to_vec(), ..ctx.clone() };
        let cf = evolve_all(&sub, p, spec, &init[..mc], &ccfg)?;
        let c = compare(&cf, truth, zero);
        out.metric("control_max_z", c.max_z);
        out.check(
            "negative_control_degrades",
            c.max_z > p.gate_se,
            &format!("sigma = {} (sigma^2 != 2/beta) must leave the gate", p.control_sigma),
            format!("max |z| = {:.3} over {mc} trajectories", c.max_z),
        );
    }
    Ok(())
}

fn dlr(ctx: &Context, p: &Params, d: &DlrParams, spec: &GibbsSpec, out: &mut Outcome) -> Result<()> {
    let outer = spec.with_endpoint(d.outer_n, p.right_endpoint);
    let exact = spec.potential.is_zero();
    let seed = derive_seed(ctx.noise_seed, 0x646c72);
    let run = |shift: f64| -> Result<DlrReport> {
        Ok(dlr_check_with(&outer, d, |inner, r| {
            let r = r + shift;
            if exact {
                Ok((GaussianBridge::new(inner.n, inner.beta, r)?.sample(d.inner.count, seed), 1.0))
            } else {
                let inner = inner.with_endpoint(inner.n, r);
                let init = GaussianBridge::new(inner.n, inner.beta, r)?.mean();
                let run = mala_sample(&inner, &init, &d.inner)?;
                Ok((run.samples, run.acceptance_rate))
            }
        })?)
    };
    let rep = run(0.0)?;
    let worst = |r: &DlrReport| max_of(r.ks.iter().map(|k| k.statistic / k.critical_1pct));
    out.metric("dlr_reference", rep.reference);
    out.metric("dlr_bin_half_width", rep.bin_half_width);
    out.metric("dlr_hits", rep.hits as f64);
    out.metric("dlr_outer_acceptance", rep.outer_acceptance);
    out.metric("dlr_inner_acceptance", rep.inner_acceptance);
    out.metric("dlr_max_ks_ratio", worst(&rep));
    let against = if exact { "exact Gaussian bridge" } else { "MALA" };
    out.check(
        "dlr_consistency",
        rep.passes_1pct() && rep.hits >= d.min_hits,
        &format!(
            "binned conditional of the n = {} measure vs the n = {} measure ({against}): KS below the 1% critical value per coordinate, >= {} hits",
            d.outer_n, d.inner_n, d.min_hits
        ),
        format!("KS/critical = {:.3}, {} hits, bin half-width {:.4}", worst(&rep), rep.hits, rep.bin_half_width),
    );
    if p.negative_control {
        let c = run(p.dlr_control_shift)?;
        out.metric("dlr_control_max_ks_ratio", worst(&c));
        out.check(
            "dlr_negative_control_degrades",
            !c.passes_1pct(),
            &format!("conditioning the inner measure on reference + {} must fail KS", p.dlr_control_shift),
            format!("KS/critical = {:.3}", worst(&c)),
        );
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::SdeSection;
    use crate::report::Verdict;
    use polymerlab_core::potential::PotentialSpec;

    #[test]
    fn zero_potential_small_run() {
        let ctx = Context::new(PotentialSpec::Zero, 2, SdeSection::default(), (0..400).collect());
        let p = Params { n: 4, t_end: 2.0, long_run_t: 500.0, ..Params::default() };
        let out = GibbsInvariance::run(&ctx, &p).unwrap();
        assert_eq!(out.verdict(), Verdict::Pass, "{:?}", out.checks);
    }
}
