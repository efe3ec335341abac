//! Galerkin convergence: truncations of increasing size, driven by the same
//! keyed environment, noise and initial data, agree on the bulk.

use polymerlab_core::dynamics::evolve;
use polymerlab_core::keyed::derive_seed;
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
    /// Truncation sizes, each double the previous.
    pub sizes: Vec<usize>,
    pub t_end: f64,
    pub slope: f64,
    pub perturbation: f64,
    pub max_ratio: f64,
    /// Small sizes whose ratios are reported but not gated.
    pub diagnostic_sizes: Vec<usize>,
    pub negative_control: bool,
    /// Control sizes, run to `t_end = n^2 / 4` for the smaller size of each pair.
    pub control_sizes: Vec<usize>,
}

impl Default for Params {
    fn default() -> Self {
        Self {
            sizes: vec![128, 256, 512, 1024],
            t_end: 5.0,
            slope: 0.5,
            perturbation: 1.0,
            max_ratio: 0.7,
            diagnostic_sizes: vec![8, 16, 32, 64],
            negative_control: true,
            control_sizes: vec![8, 16, 32, 64],
        }
    }
}

pub struct GalerkinConvergence;

/// `max_{k <= n/2} |X^(n)_k - X^(2n)_k|` for each successive pair of sizes.
fn discrepancies(ctx: &Context, p: &Params, seed: u64, sizes: &[usize], t_end: impl Fn(usize) -> f64) -> Result<Vec<f64>> {
    let field = ctx.field(seed)?;
    let path = ctx.path(seed)?;
    let key = derive_seed(seed, 17);
    sizes
        .windows(2)
        .map(|w| {
            let cfg = ctx.sde_config(t_end(w[0]));
            let run = |n: usize| -> Result<Vec<f64>> {
                let x0 = perturbed_ray(n, p.slope, 0.0, p.perturbation, key)?;
                Ok(evolve(&x0, &field, &path, &cfg, usize::MAX)?.final_state().coords().to_vec())
            };
            let (a, b) = (run(w[0])?, run(w[1])?);
            Ok(max_of(a.iter().zip(&b).take(w[0] / 2).map(|(x, y)| (x - y).abs())))
        })
        .collect()
}

/// Successive ratios `d_{i+1} / d_i`; `0/0` counts as converged.
fn ratios(d: &[f64]) -> Vec<f64> {
    d.windows(2)
        .map(|w| match (w[0], w[1]) {
            (_, b) if b == 0.0 => 0.0,
            (a, b) => b / a,
        })
        .collect()
}

fn check_sizes(sizes: &[usize]) -> Result<()> {
    if sizes.len() < 3 || sizes.windows(2).any(|w| w[1] != 2 * w[0]) {
        return Err(crate::ExpError::Config(format!("sizes must be >= 3 successive doublings, got {sizes:?}")));
    }
    Ok(())
}

impl Experiment for GalerkinConvergence {
    type Params = Params;
    const NAME: &'static str = "exp_galerkin_convergence";
    const SUMMARY: &'static str = "Galerkin convergence: finite truncations converge to the infinite-chain solution";
    const DEFAULT_SEEDS: u64 = 4;

    fn run(ctx: &Context, p: &Params) -> Result<Outcome> {
        check_sizes(&p.sizes)?;
        let mut out = Outcome::default();
        let fixed = |_: usize| p.t_end;
        let main = ctx.map(&ctx.seeds, |&seed| discrepancies(ctx, p, seed, &p.sizes, fixed))?;
        let worst = max_of(main.iter().flat_map(|d| ratios(d)));
        let mut table = Table::new("galerkin_discrepancy", &["seed", "n", "discrepancy", "gated"]);
        for (s, d) in ctx.seeds.iter().zip(&main) {
            for (n, v) in p.sizes.iter().zip(d) {
                table.push(vec![*s as f64, *n as f64, *v, 1.0]);
            }
        }
        out.metric("max_ratio", worst);
        out.metric("max_discrepancy", max_of(main.iter().flatten().copied()));
        out.check(
            "geometric_convergence",
            worst <= p.max_ratio,
            &format!(
                "max over k <= n/2 of |X^(n)_k - X^(2n)_k| shrinks by ratio <= {} across {:?} at t_end = {} (0/0 counts as converged)",
                p.max_ratio, p.sizes, p.t_end
            ),
            format!("worst ratio {worst:.4e}"),
        );
        if p.diagnostic_sizes.len() >= 3 {
            let diag = ctx.map(&ctx.seeds, |&seed| discrepancies(ctx, p, seed, &p.diagnostic_sizes, fixed))?;
            let dworst = max_of(diag.iter().flat_map(|d| ratios(d)));
            out.metric("diagnostic_max_ratio", dworst);
            for (s, d) in ctx.seeds.iter().zip(&diag) {
                for (n, v) in p.diagnostic_sizes.iter().zip(d) {
                    table.push(vec![*s as f64, *n as f64, *v, 0.0]);
                }
            }
            out.info(
                "diagnostic_sizes",
                dworst <= p.max_ratio,
                "same rule on small sizes, where the discrepancy is not yet below rounding",
                format!("sizes {:?}: worst ratio {dworst:.4}", p.diagnostic_sizes),
            );
        }
        out.tables.push(table);
        if p.negative_control {
            check_sizes(&p.control_sizes)?;
            let diffusive = |n: usize| (n * n) as f64 / 4.0;
            let control = ctx.map(&ctx.seeds, |&seed| discrepancies(ctx, p, seed, &p.control_sizes, diffusive))?;
            let cworst = max_of(control.iter().flat_map(|d| ratios(d)));
            out.metric("control_max_ratio", cworst);
            out.check(
                "negative_control_degrades",
                cworst > p.max_ratio,
                "with t_end = n^2/4 the boundary is felt in the bulk and convergence stalls",
                format!("sizes {:?}: worst ratio {cworst:.4}", p.control_sizes),
            );
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::SdeSection;
    use polymerlab_core::potential::PotentialSpec;

    #[test]
    fn deterministic_ray_is_truncation_independent() {
        let sde = SdeSection { sigma: Some(0.0), ..SdeSection::default() };
        let ctx = Context::new(PotentialSpec::Zero, 2, sde, vec![0]);
        let p = Params { perturbation: 0.0, ..Params::default() };
        let d = discrepancies(&ctx, &p, 0, &p.sizes, |_| p.t_end).unwrap();
        assert!(d.iter().all(|v| *v == 0.0), "{d:?}");
    }

    #[test]
    fn zero_over_zero_counts_as_converged() {
        assert_eq!(ratios(&[1.0, 0.5, 0.0, 0.0]), vec![0.5, 0.0, 0.0]);
    }
}
