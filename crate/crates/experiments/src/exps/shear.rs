//! Shear equivariance: evolving sheared inputs equals shearing the output.

use polymerlab_core::dynamics::evolve;
use polymerlab_core::keyed::{derive_seed, domain, KeyedStream};
use serde::{Deserialize, Serialize};

use super::perturbed_ray;
use crate::config::Context;
use crate::error::Result;
use crate::report::{Outcome, Table};
use crate::stat::max_of;
use crate::Experiment;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Params {
    pub n: usize,
    pub t_end: f64,
    pub velocities: Vec<f64>,
    /// Extra velocities drawn uniformly from `[-2, 2]` per seed.
    pub random_velocities: usize,
    pub slope: f64,
    pub tolerance: f64,
    pub negative_control: bool,
    pub control_velocity: f64,
}

impl Default for Params {
    fn default() -> Self {
        Self {
            n: 512,
            t_end: 10.0,
            velocities: vec![0.0, 0.7],
            random_velocities: 2,
            slope: 0.3,
            tolerance: 1e-8,
            negative_control: true,
            control_velocity: 0.7,
        }
    }
}

pub struct ShearEquivariance;

impl Experiment for ShearEquivariance {
    type Params = Params;
    const NAME: &'static str = "exp_shear_equivariance";
    const SUMMARY: &'static str = "shear equivariance: Phi(shear x, shear F) = shear Phi(x, F)";
    const DEFAULT_SEEDS: u64 = 1;

    fn run(ctx: &Context, p: &Params) -> Result<Outcome> {
        let mut out = Outcome::default();
        let cfg = ctx.sde_config(p.t_end);
        let stride = usize::MAX;
        let mut jobs = Vec::new();
        for &seed in &ctx.seeds {
            let mut rng = KeyedStream::new(seed, domain::REPLICATE, 2, 0);
            let mut vs = p.velocities.clone();
            vs.extend((0..p.random_velocities).map(|_| 4.0 * rng.uniform() - 2.0));
            jobs.extend(vs.into_iter().map(|v| (seed, v, true)));
            if p.negative_control {
                jobs.push((seed, p.control_velocity, false));
            }
        }
        let gaps = ctx.map(&jobs, |&(seed, v, shear_potential)| {
            let field = ctx.field(seed)?;
            let path = ctx.path(seed)?;
            let x0 = perturbed_ray(p.n, p.slope, 0.0, 1.0, derive_seed(seed, 11))?;
            let moved = if shear_potential { field.sheared(v) } else { field.clone() };
            let a = evolve(&x0.shear(v), &moved, &path, &cfg, stride)?;
            let b = evolve(&x0, &field, &path, &cfg, stride)?;
            Ok(a.final_state().sup_distance(&b.final_state().shear(v))?)
        })?;
        let mut table = Table::new("shear_discrepancy", &["seed", "velocity", "potential_sheared", "discrepancy"]);
        for (&(seed, v, sp), g) in jobs.iter().zip(&gaps) {
            table.push(vec![seed as f64, v, if sp { 1.0 } else { 0.0 }, *g]);
        }
        let main = || jobs.iter().zip(&gaps).filter(|(j, _)| j.2);
        let worst = max_of(main().map(|(_, g)| *g));
        let at_zero = max_of(main().filter(|(j, _)| j.1 == 0.0).map(|(_, g)| *g));
        out.metric("max_discrepancy", worst);
        out.check(
            "equivariance",
            worst <= p.tolerance,
            &format!("sup-norm discrepancy <= {:e} at t_end = {}", p.tolerance, p.t_end),
            format!("worst {worst:e}"),
        );
        if at_zero.is_finite() {
            out.metric("discrepancy_v0", at_zero);
            out.check("zero_shear_exact", at_zero == 0.0, "v = 0 gives identical runs", format!("{at_zero:e}"));
        }
        if p.negative_control {
            let control = max_of(jobs.iter().zip(&gaps).filter(|(j, _)| !j.2).map(|(_, g)| *g));
            out.metric("control_discrepancy", control);
            out.check(
                "negative_control_degrades",
                control > p.tolerance,
                "shearing the state but not the potential must break equivariance",
                format!("{control:e}"),
            );
        }
        out.tables.push(table);
        Ok(out)
    }
}
