//! Deterministic heat-flow properties: ray stationarity, convexity and
//! monotone growth, finite ordering time for a broken ray, energy dissipation.

use polymerlab_core::dynamics::{heat_flow, integrate_with, Scheme, SdeConfig};
use polymerlab_core::gibbs::{energy, GibbsSpec};
use polymerlab_core::noise::{grid_steps, NoisePath};
use polymerlab_core::polymer::{PolymerState, Ray};
use polymerlab_core::potential::PotentialField;
use serde::{Deserialize, Serialize};

use crate::config::Context;
use crate::error::Result;
use crate::report::{Outcome, Table};
use crate::Experiment;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Params {
    pub n: usize,
    pub dt: f64,
    pub t_end: f64,
    pub slopes: Vec<f64>,
    pub tolerance: f64,
    /// Broken ray `a·k - b` for the ordering-time check.
    pub ray_slope: f64,
    pub ray_offset: f64,
    pub ordering_n: usize,
    pub ordering_t_max: f64,
    pub negative_control: bool,
}

impl Default for Params {
    fn default() -> Self {
        Self {
            n: 200,
            dt: 0.05,
            t_end: 10.0,
            slopes: vec![-1.0, 0.5, 2.0],
            tolerance: 1e-10,
            ray_slope: 1.0,
            ray_offset: 2.0,
            ordering_n: 50,
            ordering_t_max: 2000.0,
            negative_control: true,
        }
    }
}

pub struct HeatFlowSuite;

/// Runs the homogeneous heat flow, observing every step.
fn observe_flow(
    x0: &PolymerState<f64>,
    t: f64,
    dt: f64,
    scheme: Scheme,
    observe: impl FnMut(u64, &PolymerState<f64>),
) -> Result<PolymerState<f64>> {
    let steps = grid_steps(t, dt)? as u64;
    let cfg = SdeConfig::deterministic(dt, t).with_scheme(scheme);
    let path = NoisePath::new(0, dt)?;
    Ok(integrate_with(x0, &PotentialField::zero(), &path, &cfg, 0, steps, observe)?)
}

fn ray_deviation(x0: &PolymerState<f64>, slope: f64, p: &Params, scheme: Scheme) -> Result<f64> {
    let mut worst: f64 = 0.0;
    observe_flow(x0, p.t_end, p.dt, scheme, |_, x| {
        for k in 1..=x.n() {
            worst = worst.max((x.at(k) - slope * k as f64).abs());
        }
    })?;
    Ok(worst)
}

impl Experiment for HeatFlowSuite {
    type Params = Params;
    const NAME: &'static str = "exp_heat_flow_suite";
    const SUMMARY: &'static str =
        "deterministic heat flow: harmonic rays are fixed, convexity is preserved, a broken ray becomes positive in finite time";
    const DEFAULT_SEEDS: u64 = 1;

    fn run(ctx: &Context, p: &Params) -> Result<Outcome> {
        let mut out = Outcome::default();
        let scheme = ctx.sde.scheme;

        // rays are stationary
        let mut worst: f64 = 0.0;
        for &u in &p.slopes {
            let dev = ray_deviation(&Ray::new(u, 0.0).materialize(p.n), u, p, scheme)?;
            out.metric(&format!("ray_deviation_u{u}"), dev);
            worst = worst.max(dev);
        }
        out.metric("ray_deviation_max", worst);
        out.check(
            "ray_stationarity",
            worst <= p.tolerance,
            &format!("max_k |(S^t r^u)_k - u k| <= {:e} for all snapshot t", p.tolerance),
            format!("worst deviation {worst:e}"),
        );

        // convex initial data: stays convex and grows monotonically in t
        let c = (p.n / 4) as f64;
        let convex = PolymerState::from_fn(p.n, |k| ((k as f64 - c).powi(2) - c * c) / 10.0)?;
        let mut min_lap = f64::INFINITY;
        let mut min_growth = f64::INFINITY;
        let mut prev = convex.clone();
        let mut growth = Table::new("heat_convex", &["t", "min_laplacian", "min_increment"]);
        observe_flow(&convex, p.t_end, p.dt, scheme, |s, x| {
            let lap = x.laplacian().into_iter().fold(f64::INFINITY, f64::min);
            let inc = x.coords().iter().zip(prev.coords()).map(|(a, b)| a - b).fold(f64::INFINITY, f64::min);
            min_lap = min_lap.min(lap);
            min_growth = min_growth.min(inc);
            growth.push(vec![s as f64 * p.dt, lap, inc]);
            prev.clone_from(x);
        })?;
        out.metric("convex_min_laplacian", min_lap);
        out.metric("convex_min_increment", min_growth);
        out.check("convexity_preserved", min_lap >= -1e-12, "min Δ S^t x >= -1e-12", format!("{min_lap:e}"));
        out.check("monotone_growth", min_growth >= -1e-12, "S^{t+dt} x - S^t x >= -1e-12", format!("{min_growth:e}"));

        // broken ray a k - b: becomes strictly positive after a finite time
        let n = p.ordering_n;
        let broken = Ray::new(p.ray_slope, -p.ray_offset).materialize(n);
        let mut tau = None;
        observe_flow(&broken, p.ordering_t_max, p.dt, scheme, |s, x| {
            if tau.is_none() && x.coords().iter().all(|v| *v > 0.0) {
                tau = Some(s as f64 * p.dt);
            }
        })?;
        out.metric("ordering_time", tau.unwrap_or(f64::INFINITY));
        out.check(
            "finite_ordering_time",
            tau.is_some(),
            &format!("S^t x > 0 coordinatewise for some t <= {}", p.ordering_t_max),
            format!("tau = {tau:?}"),
        );
        let limit = heat_flow(&broken, 20.0 * (n * n) as f64, 0.5, Scheme::SemiImplicitLaplacian)?;
        let b = broken.right_boundary();
        let lim_err = (1..=n).map(|k| (limit.at(k) - k as f64 * b / (n + 1) as f64).abs()).fold(0.0, f64::max);
        out.metric("limit_error", lim_err);
        out.check("linear_limit", lim_err <= 1e-8, "limit equals k·x_{n+1}/(n+1) within 1e-8", format!("{lim_err:e}"));

        // kinetic energy is non-increasing
        let spec = GibbsSpec::new(n, 1.0, b, PotentialField::zero())?;
        let mut e_prev = energy(&spec, broken.coords())?;
        let mut max_rise: f64 = f64::NEG_INFINITY;
        let mut err = None;
        observe_flow(&broken, p.t_end, p.dt, scheme, |_, x| match energy(&spec, x.coords()) {
            Ok(e) => {
                max_rise = max_rise.max(e - e_prev);
                e_prev = e;
            }
            Err(e) => err = Some(e),
        })?;
        if let Some(e) = err {
            return Err(e.into());
        }
        out.metric("energy_max_increase", max_rise);
        out.check("energy_dissipation", max_rise <= 1e-12, "kinetic energy non-increasing along the flow", format!("{max_rise:e}"));

        if p.negative_control {
            // a ray with a bump is not harmonic and must move
            let bumped = PolymerState::from_fn(p.n, |k| 0.5 * k as f64 + if k == p.n / 2 { 1.0 } else { 0.0 })?;
            let dev = ray_deviation(&bumped, 0.5, p, scheme)?;
            out.metric("control_deviation", dev);
            out.check(
                "negative_control_degrades",
                dev > p.tolerance,
                "a non-harmonic start must violate the stationarity tolerance",
                format!("deviation {dev:e}"),
            );
        }
        out.tables.push(growth);
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::SdeSection;
    use crate::report::{Status, Verdict};

    #[test]
    fn defaults_pass() {
        let ctx = Context::new(Default::default(), 0, SdeSection::default(), vec![0]);
        let out = HeatFlowSuite::run(&ctx, &Params::default()).unwrap();
        assert_eq!(out.verdict(), Verdict::Pass, "{:?}", out.checks);
        assert_eq!(out.status_of("negative_control_degrades"), Some(Status::Pass));
    }
}
