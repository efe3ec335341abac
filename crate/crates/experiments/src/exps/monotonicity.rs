//! Order preservation: ordered pairs driven by the same noise stay ordered.

use polymerlab_core::dynamics::{SdeConfig, Stepper};
use polymerlab_core::keyed::{derive_seed, domain, KeyedStream};
use polymerlab_core::noise::{grid_steps, NoisePath};
use polymerlab_core::polymer::{order_violations, PolymerState};
use polymerlab_core::potential::PotentialField;
use serde::{Deserialize, Serialize};

use super::perturbed_ray;
use crate::config::Context;
use crate::error::Result;
use crate::report::{Outcome, Table};
use crate::Experiment;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Params {
    pub n: usize,
    pub t_end: f64,
    pub eps: f64,
    pub negative_control: bool,
    /// Step size of the control run; violates `dt (2 + L_f) <= 1`.
    pub control_dt: f64,
    pub control_t_end: f64,
}

impl Default for Params {
    fn default() -> Self {
        Self { n: 64, t_end: 10.0, eps: 1e-12, negative_control: true, control_dt: 0.6, control_t_end: 6.0 }
    }
}

pub struct Monotonicity;

/// Pair kinds cycle with the seed: near-touching, unit shift, random gaps, identical.
fn make_pair(n: usize, seed: u64) -> Result<(PolymerState<f64>, PolymerState<f64>)> {
    let mut rng = KeyedStream::new(seed, domain::REPLICATE, 1, 0);
    let slope = 2.0 * rng.uniform() - 1.0;
    let x = perturbed_ray(n, slope, 0.0, 2.0, derive_seed(seed, 7))?;
    let gaps: Vec<f64> = match seed % 4 {
        0 => {
            // touching everywhere except one site, lifted by 1e-9
            let site = (rng.next_u64() % (n as u64 + 1)) as usize;
            (0..=n).map(|i| if i == site { 1e-9 } else { 0.0 }).collect()
        }
        1 => vec![1.0; n + 1],
        2 => (0..=n).map(|_| rng.uniform()).collect(),
        _ => vec![0.0; n + 1],
    };
    let y = PolymerState::new(x.coords().iter().zip(&gaps).map(|(a, g)| a + g).collect(), x.right_boundary() + gaps[n])?;
    Ok((x, y))
}

struct PairRun {
    violations: u64,
    first_violation: Option<f64>,
    min_gap: f64,
    diverged: bool,
}

fn run_pair(
    x0: &PolymerState<f64>,
    y0: &PolymerState<f64>,
    field: &PotentialField,
    path: &NoisePath,
    cfg: &SdeConfig<f64>,
    eps: f64,
) -> Result<PairRun> {
    let n = x0.n();
    let steps = grid_steps(cfg.t_end, cfg.dt)?;
    let mut stepper = Stepper::new(cfg, n);
    let (mut x, mut y) = (x0.clone(), y0.clone());
    let mut inc = vec![0.0; n];
    let mut run = PairRun { violations: 0, first_violation: None, min_gap: f64::INFINITY, diverged: false };
    for j in 0..steps {
        path.fill_increments(j, &mut inc);
        stepper.advance(&mut x, field, Some(&inc))?;
        stepper.advance(&mut y, field, Some(&inc))?;
        if !x.is_finite() || !y.is_finite() {
            run.diverged = true;
            break;
        }
        let v = order_violations(&x, &y, eps)? as u64;
        if v > 0 && run.first_violation.is_none() {
            run.first_violation = Some((j + 1) as f64 * cfg.dt);
        }
        run.violations += v;
        for (a, b) in x.coords().iter().zip(y.coords()) {
            run.min_gap = run.min_gap.min(b - a);
        }
    }
    Ok(run)
}

impl Experiment for Monotonicity {
    type Params = Params;
    const NAME: &'static str = "exp_monotonicity";
    const SUMMARY: &'static str = "order preservation: x0 <= y0 under shared noise implies X(t) <= Y(t) for all t";
    const DEFAULT_SEEDS: u64 = 100;

    fn run(ctx: &Context, p: &Params) -> Result<Outcome> {
        let mut out = Outcome::default();
        let cfg = ctx.sde_config(p.t_end);
        let runs = ctx.map(&ctx.seeds, |&seed| {
            let field = ctx.field(seed)?;
            cfg.validate(&field)?;
            let (x, y) = make_pair(p.n, seed)?;
            run_pair(&x, &y, &field, &ctx.path(seed)?, &cfg, p.eps)
        })?;
        let total: u64 = runs.iter().map(|r| r.violations).sum();
        let bad_pairs = runs.iter().filter(|r| r.violations > 0).count();
        let min_gap = runs.iter().map(|r| r.min_gap).fold(f64::INFINITY, f64::min);
        let mut table = Table::new("monotonicity_pairs", &["seed", "violations", "min_gap"]);
        for (s, r) in ctx.seeds.iter().zip(&runs) {
            table.push(vec![*s as f64, r.violations as f64, r.min_gap]);
        }
        out.metric("pairs", runs.len() as f64);
        out.metric("violations", total as f64);
        out.metric("pairs_with_violations", bad_pairs as f64);
        out.metric("min_gap", min_gap);
        out.check(
            "order_preserved",
            total == 0,
            &format!("zero coordinate violations at eps = {:e} over every step", p.eps),
            format!("{total} violation(s) in {bad_pairs} pair(s)"),
        );

        if p.negative_control {
            let ccfg = SdeConfig { dt: p.control_dt, t_end: p.control_t_end, ..cfg.clone() }.unchecked();
            let control = ctx.map(&ctx.seeds, |&seed| {
                let (x, y) = make_pair(p.n, seed)?;
                run_pair(&x, &y, &ctx.field(seed)?, &ctx.path_with_dt(seed, p.control_dt)?, &ccfg, p.eps)
            })?;
            let ctotal: u64 = control.iter().map(|r| r.violations).sum();
            let diverged = control.iter().filter(|r| r.diverged).count();
            out.metric("control_violations", ctotal as f64);
            out.metric("control_diverged", diverged as f64);
            out.check(
                "negative_control_degrades",
                ctotal > 0,
                &format!("dt = {} breaks the step-size condition and must produce violations", p.control_dt),
                format!("{ctotal} violation(s), {diverged} diverged run(s)"),
            );
        }
        out.tables.push(table);
        Ok(out)
    }
}
