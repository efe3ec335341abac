//! One force, one solution: pullback solutions from different starts in the
//! same slope class merge at time 0 as the start time recedes.

use polymerlab_core::dynamics::{integrate_with, pullback_evolve};
use polymerlab_core::noise::grid_steps;
use polymerlab_core::polymer::{weighted_norm, NormSpec, PolymerState, Ray};
use serde::{Deserialize, Serialize};

use crate::config::Context;
use crate::error::Result;
use crate::report::{Outcome, Status, Table};
use crate::stat::max_of;
use crate::Experiment;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Params {
    pub n: usize,
    pub slope: f64,
    /// Starts are `ray(slope, a)` for each offset `a`, all pinned to `boundary`.
    pub offsets: Vec<f64>,
    pub boundary: f64,
    /// Pullback depths `|t_start|`, increasing.
    pub depths: Vec<f64>,
    pub contraction: f64,
    pub min_fraction: f64,
    pub forward: bool,
    pub negative_control: bool,
    /// The control pairs slope `slope` with slope `slope + control_slope_gap`.
    pub control_slope_gap: f64,
}

impl Default for Params {
    fn default() -> Self {
        Self {
            n: 4,
            slope: 0.0,
            offsets: vec![-5.0, 0.0, 5.0],
            boundary: 0.0,
            depths: vec![10.0, 20.0, 40.0, 80.0],
            contraction: 1e-3,
            min_fraction: 0.9,
            forward: true,
            negative_control: true,
            control_slope_gap: 1.0,
        }
    }
}

pub struct Pullback;

fn lnorm_distance(a: &PolymerState<f64>, b: &PolymerState<f64>) -> Result<f64> {
    Ok(weighted_norm(&a.difference(b)?, &NormSpec::lipschitz())?)
}

fn max_pairwise(states: &[PolymerState<f64>]) -> Result<f64> {
    let mut d: f64 = 0.0;
    for (i, a) in states.iter().enumerate() {
        for b in &states[i + 1..] {
            d = d.max(lnorm_distance(a, b)?);
        }
    }
    Ok(d)
}

/// Distance profile over the depths and whether it contracts as required.
struct Profile {
    initial: f64,
    distances: Vec<f64>,
}

impl Profile {
    fn monotone(&self) -> bool {
        self.distances.windows(2).all(|w| w[1] <= w[0])
    }

    fn ratio(&self) -> f64 {
        let last = self.distances.last().copied().unwrap_or(self.initial);
        if self.initial == 0.0 {
            0.0
        } else {
            last / self.initial
        }
    }

    fn passes(&self, contraction: f64) -> bool {
        self.monotone() && self.ratio() < contraction
    }
}

fn starts(p: &Params) -> Result<Vec<PolymerState<f64>>> {
    p.offsets.iter().map(|&a| Ok(Ray::new(p.slope, a).materialize_with_boundary(p.n, p.boundary)?)).collect()
}

fn control_starts(p: &Params) -> Vec<PolymerState<f64>> {
    vec![Ray::new(p.slope, 0.0).materialize(p.n), Ray::new(p.slope + p.control_slope_gap, 0.0).materialize(p.n)]
}

fn pullback_profile(ctx: &Context, p: &Params, seed: u64, x0s: &[PolymerState<f64>]) -> Result<Profile> {
    let field = ctx.field(seed)?;
    let path = ctx.path(seed)?;
    let cfg = ctx.sde_config(0.0);
    let distances = p
        .depths
        .iter()
        .map(|&d| {
            let at0 = x0s.iter().map(|x| Ok(pullback_evolve(x, &field, &path, &cfg, -d)?)).collect::<Result<Vec<_>>>()?;
            max_pairwise(&at0)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(Profile { initial: max_pairwise(x0s)?, distances })
}

/// Forward distances `max ‖Φ^t x - Φ^t y‖` at each depth `t`.
fn forward_profile(ctx: &Context, p: &Params, seed: u64, x0s: &[PolymerState<f64>]) -> Result<Profile> {
    let field = ctx.field(seed)?;
    let path = ctx.path(seed)?;
    let t_max = max_of(p.depths.iter().copied());
    let cfg = ctx.sde_config(t_max);
    let steps = grid_steps(t_max, ctx.dt())? as u64;
    let marks: Vec<u64> = p.depths.iter().map(|&d| grid_steps(d, ctx.dt()).map(|s| s as u64)).collect::<std::result::Result<_, _>>()?;
    let mut snaps: Vec<Vec<PolymerState<f64>>> = vec![Vec::new(); marks.len()];
    for x in x0s {
        integrate_with(x, &field, &path, &cfg, 0, steps, |s, st| {
            for (i, m) in marks.iter().enumerate() {
                if *m == s {
                    snaps[i].push(st.clone());
                }
            }
        })?;
    }
    let distances = snaps.iter().map(|s| max_pairwise(s)).collect::<Result<Vec<f64>>>()?;
    Ok(Profile { initial: max_pairwise(x0s)?, distances })
}

fn fraction(profiles: &[Profile], contraction: f64) -> f64 {
    profiles.iter().filter(|q| q.passes(contraction)).count() as f64 / profiles.len().max(1) as f64
}

impl Experiment for Pullback {
    type Params = Params;
    const NAME: &'static str = "exp_1f1s_pullback";
    const SUMMARY: &'static str = "one force, one solution: pullback solutions in one slope class merge (one-point pullback attractor)";
    const DEFAULT_SEEDS: u64 = 50;

    fn run(ctx: &Context, p: &Params) -> Result<Outcome> {
        let mut out = Outcome::default();
        let x0s = starts(p)?;
        let profiles = ctx.map(&ctx.seeds, |&seed| pullback_profile(ctx, p, seed, &x0s))?;
        let frac = fraction(&profiles, p.contraction);
        let passing = profiles.iter().filter(|q| q.passes(p.contraction)).count();
        out.metric("pullback_pass_fraction", frac);
        out.metric("max_final_ratio", max_of(profiles.iter().map(Profile::ratio)));
        out.metric("monotone_seeds", profiles.iter().filter(|q| q.monotone()).count() as f64);
        out.check(
            "pullback_contraction",
            frac >= p.min_fraction,
            &format!(
                "in >= {}% of seeds the max pairwise L-norm distance at time 0 is non-increasing in the depth and ends below {:e} of its initial value",
                p.min_fraction * 100.0,
                p.contraction
            ),
            format!("{passing}/{} seeds", profiles.len()),
        );
        let mut header = vec!["seed".to_string(), "initial".to_string()];
        header.extend(p.depths.iter().map(|d| format!("depth_{d}")));
        let refs: Vec<&str> = header.iter().map(String::as_str).collect();
        let mut table = Table::new("pullback_distances", &refs);
        for (s, q) in ctx.seeds.iter().zip(&profiles) {
            let mut row = vec![*s as f64, q.initial];
            row.extend(&q.distances);
            table.push(row);
        }
        out.tables.push(table);

        if p.forward {
            let fw = ctx.map(&ctx.seeds, |&seed| forward_profile(ctx, p, seed, &x0s))?;
            let f = fraction(&fw, p.contraction);
            out.metric("forward_pass_fraction", f);
            out.check(
                "forward_synchronization",
                f >= p.min_fraction,
                "forward distances from the same starts contract by the same rule",
                format!("fraction {f:.3}"),
            );
        }
        if p.negative_control {
            let cs = control_starts(p);
            let control = ctx.map(&ctx.seeds, |&seed| pullback_profile(ctx, p, seed, &cs))?;
            let f = fraction(&control, p.contraction);
            out.metric("control_pass_fraction", f);
            out.check(
                "negative_control_degrades",
                if f < p.min_fraction { Status::Pass } else { Status::Fail },
                "starts with different slopes must not merge",
                format!("fraction {f:.3}, min final ratio {:.3e}", control.iter().map(Profile::ratio).fold(f64::INFINITY, f64::min)),
            );
        }
        Ok(out)
    }
}
