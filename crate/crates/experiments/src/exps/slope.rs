//! Slope invariance: the tail slope of a ray-like start is preserved by the
//! dynamics, and its `(v-, v+)` bracket does not widen appreciably.

use polymerlab_core::dynamics::evolve;
use polymerlab_core::keyed::derive_seed;
use polymerlab_core::polymer::estimate_slope;
use serde::{Deserialize, Serialize};

use super::perturbed_ray;
use crate::config::Context;
use crate::error::Result;
use crate::report::{Outcome, Status, Table};
use crate::stat::max_of;
use crate::Experiment;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Params {
    pub n: usize,
    pub t_end: f64,
    pub slopes: Vec<f64>,
    pub perturbation: f64,
    pub tail_fraction: f64,
    pub max_drift: f64,
    pub max_width_growth: f64,
    /// Brackets wider than this cannot resolve the slope: verdict inconclusive.
    pub max_width: f64,
    pub negative_control: bool,
    pub control_n: usize,
}

impl Default for Params {
    fn default() -> Self {
        Self {
            n: 2000,
            t_end: 10.0,
            slopes: vec![-1.0, 0.0, 1.0],
            perturbation: 1.0,
            tail_fraction: 0.5,
            max_drift: 0.05,
            max_width_growth: 0.1,
            max_width: 0.1,
            negative_control: true,
            control_n: 50,
        }
    }
}

pub struct SlopeInvariance;

struct SlopeRun {
    drift: f64,
    growth: f64,
    width: f64,
}

struct Summary {
    drift: f64,
    growth: f64,
    width: f64,
    status: Status,
    rows: Vec<(u64, f64, SlopeRun)>,
}

fn sweep(ctx: &Context, p: &Params, n: usize) -> Result<Summary> {
    let jobs: Vec<(u64, f64)> = ctx.seeds.iter().flat_map(|&s| p.slopes.iter().map(move |&v| (s, v))).collect();
    let cfg = ctx.sde_config(p.t_end);
    let runs = ctx.map(&jobs, |&(seed, v)| {
        let x0 = perturbed_ray(n, v, 0.0, p.perturbation, derive_seed(seed, 13))?;
        let traj = evolve(&x0, &ctx.field(seed)?, &ctx.path(seed)?, &cfg, usize::MAX)?;
        let a = estimate_slope(&x0, p.tail_fraction)?;
        let b = estimate_slope(traj.final_state(), p.tail_fraction)?;
        Ok(SlopeRun { drift: (b.slope - a.slope).abs(), growth: b.width() - a.width(), width: a.width().max(b.width()) })
    })?;
    let drift = max_of(runs.iter().map(|r| r.drift));
    let growth = max_of(runs.iter().map(|r| r.growth));
    let width = max_of(runs.iter().map(|r| r.width));
    let status =
        if width > p.max_width { Status::Inconclusive } else { Status::from(drift <= p.max_drift && growth <= p.max_width_growth) };
    let rows = jobs.into_iter().zip(runs).map(|((s, v), r)| (s, v, r)).collect();
    Ok(Summary { drift, growth, width, status, rows })
}

impl Experiment for SlopeInvariance {
    type Params = Params;
    const NAME: &'static str = "exp_slope_invariance";
    const SUMMARY: &'static str = "slope invariance: the slope class S(v) (finite-n surrogate) is preserved";
    const DEFAULT_SEEDS: u64 = 2;

    fn run(ctx: &Context, p: &Params) -> Result<Outcome> {
        let mut out = Outcome::default();
        let main = sweep(ctx, p, p.n)?;
        out.metric("max_slope_drift", main.drift);
        out.metric("max_width_growth", main.growth);
        out.metric("max_bracket_width", main.width);
        out.check(
            "slope_invariance",
            main.status,
            &format!(
                "slope surrogate: inconclusive if bracket width > {}; else drift <= {} and width growth <= {}",
                p.max_width, p.max_drift, p.max_width_growth
            ),
            format!("n = {}: drift {:.4e}, growth {:.4e}, width {:.4e}", p.n, main.drift, main.growth, main.width),
        );
        let mut table = Table::new("slope_runs", &["seed", "slope", "drift", "width_growth", "width"]);
        for (s, v, r) in &main.rows {
            table.push(vec![*s as f64, *v, r.drift, r.growth, r.width]);
        }
        if p.negative_control {
            let control = sweep(ctx, p, p.control_n)?;
            out.metric("control_max_bracket_width", control.width);
            out.check(
                "negative_control_degrades",
                control.status != Status::Pass,
                "a short chain cannot resolve the slope (bracket too wide)",
                format!("n = {}: width {:.4e}, status {:?}", p.control_n, control.width, control.status),
            );
        }
        out.tables.push(table);
        Ok(out)
    }
}
