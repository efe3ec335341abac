//! Numerical experiments on the truncated polymer dynamics.
//!
//! Each experiment is a deterministic function of its [`RunConfig`]: it fans
//! seeds out over a worker pool, reduces the results in seed order and
//! returns an [`ExperimentReport`] with metrics, checks and a verdict. Every
//! experiment also runs a negative control that is required to degrade.

pub mod config;
pub mod error;
pub mod exps;
pub mod report;
pub mod stat;

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};

pub use config::{Context, RunConfig, Seeds};
pub use error::{ExpError, Result};
pub use report::{Check, ExperimentReport, Metric, Outcome, Status, Table, Verdict};

pub const CODE_VERSION: &str = concat!("polymerlab ", env!("CARGO_PKG_VERSION"));

pub const DEFAULT_OUTPUT_DIR: &str = "polymerlab-out";

pub trait Experiment {
    type Params: Serialize + DeserializeOwned + Default + Clone + Send + Sync;
    const NAME: &'static str;
    /// One line: what property the experiment checks.
    const SUMMARY: &'static str;
    const DEFAULT_SEEDS: u64;

    fn run(ctx: &Context, params: &Self::Params) -> Result<Outcome>;
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentInfo {
    pub name: &'static str,
    pub summary: &'static str,
    pub default_seeds: u64,
    /// Keys accepted under `params`, with their defaults.
    pub params: serde_json::Value,
}

fn info<E: Experiment>() -> ExperimentInfo {
    ExperimentInfo {
        name: E::NAME,
        summary: E::SUMMARY,
        default_seeds: E::DEFAULT_SEEDS,
        params: serde_json::to_value(E::Params::default()).unwrap_or_default(),
    }
}

macro_rules! registry {
    ($($ty:ty),* $(,)?) => {
        /// All experiments, in a fixed order.
        pub fn list() -> Vec<ExperimentInfo> {
            vec![$(info::<$ty>()),*]
        }

        pub fn names() -> Vec<&'static str> {
            vec![$(<$ty as Experiment>::NAME),*]
        }

        fn dispatch(name: &str, value: serde_json::Value, opts: &RunOptions) -> Result<(ExperimentReport, Option<PathBuf>)> {
            $(
                if name == <$ty as Experiment>::NAME {
                    let cfg = serde_json::from_value(value).map_err(|e| ExpError::Config(e.to_string()))?;
                    return run_typed::<$ty>(cfg, opts);
                }
            )*
            Err(ExpError::UnknownExperiment { name: name.into(), valid: names() })
        }

        fn dispatch_text(name: &str, text: &str, opts: &RunOptions) -> Result<(ExperimentReport, Option<PathBuf>)> {
            $(
                if name == <$ty as Experiment>::NAME {
                    let cfg = serde_json::from_str(text).map_err(|e| ExpError::Config(e.to_string()))?;
                    return run_typed::<$ty>(cfg, opts);
                }
            )*
            Err(ExpError::UnknownExperiment { name: name.into(), valid: names() })
        }
    };
}

registry!(
    exps::monotonicity::Monotonicity,
    exps::slope::SlopeInvariance,
    exps::gibbs::GibbsInvariance,
    exps::shear::ShearEquivariance,
    exps::ordering::OrderingByNoise,
    exps::pullback::Pullback,
    exps::galerkin::GalerkinConvergence,
    exps::fluctuation::FluctuationExponent,
    exps::heat::HeatFlowSuite,
);

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Overrides the config's `output_dir`.
    pub output_dir: Option<PathBuf>,
    /// Skip writing the report and artifacts.
    pub dry_run: bool,
}

fn digest(value: &serde_json::Value) -> String {
    // serde_json maps keep keys sorted, so this string is canonical
    hex::encode(Sha256::digest(value.to_string().as_bytes()))
}

fn run_typed<E: Experiment>(mut cfg: RunConfig<E::Params>, opts: &RunOptions) -> Result<(ExperimentReport, Option<PathBuf>)> {
    cfg.validate()?;
    let seeds = cfg.seeds.clone().unwrap_or(Seeds::Count(E::DEFAULT_SEEDS)).expand();
    cfg.seeds = Some(Seeds::List(seeds.clone()));
    let embedded = serde_json::to_value(&cfg)?;
    let config_digest = digest(&embedded);
    let ctx = Context::new(cfg.potential.clone(), cfg.noise.seed, cfg.sde.clone(), seeds.clone());
    log::info!("running {} with {} seed(s) on {} worker(s)", E::NAME, seeds.len(), ctx.workers);
    let start = Instant::now();
    let outcome = E::run(&ctx, &cfg.params)?;
    let wall_time_s = start.elapsed().as_secs_f64();
    let mut report = ExperimentReport {
        name: E::NAME.into(),
        code_version: CODE_VERSION.into(),
        config_digest,
        seeds,
        verdict: outcome.verdict(),
        rule: report::VERDICT_RULE.into(),
        metrics: outcome.metrics.clone(),
        checks: outcome.checks.clone(),
        notes: outcome.notes.clone(),
        artifacts: Vec::new(),
        wall_time_s,
        config: embedded,
    };
    if opts.dry_run {
        return Ok((report, None));
    }
    let root = opts.output_dir.clone().or(cfg.output_dir.clone()).unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR));
    let dir = root.join(format!("{}-{}", E::NAME, &report.config_digest[..12]));
    std::fs::create_dir_all(&dir)?;
    for table in &outcome.tables {
        report.artifacts.push(report::write_table(&dir, table)?);
        if cfg.plot_scripts {
            report.artifacts.push(report::write_plot_script(&dir, table)?);
        }
    }
    let path = dir.join("report.json");
    report.save(&path)?;
    Ok((report, Some(path)))
}

/// Parses and runs a config given as JSON text.
pub fn run_config_str(text: &str, opts: &RunOptions) -> Result<(ExperimentReport, Option<PathBuf>)> {
    let name = config::experiment_name(text)?;
    dispatch_text(&name, text, opts)
}

pub fn run_config_file(path: &Path, opts: &RunOptions) -> Result<(ExperimentReport, Option<PathBuf>)> {
    let text = std::fs::read_to_string(path).map_err(|e| ExpError::Config(format!("cannot read {}: {e}", path.display())))?;
    run_config_str(&text, opts)
}

/// Runs an in-memory config.
pub fn run<E: Experiment>(cfg: RunConfig<E::Params>, opts: &RunOptions) -> Result<(ExperimentReport, Option<PathBuf>)> {
    run_typed::<E>(cfg, opts)
}

#[derive(Debug, Clone)]
pub struct ReplayOutcome {
    pub report: ExperimentReport,
    pub path: Option<PathBuf>,
    /// Metrics, checks or verdict that did not reproduce (empty on success;
    /// not compared when seeds were extended).
    pub differences: Vec<String>,
    pub extended: bool,
}

impl ReplayOutcome {
    pub fn reproduced(&self) -> bool {
        self.differences.is_empty()
    }
}

/// Re-executes the config embedded in `original`. With `seeds_extend > 0`
/// appends that many fresh seeds and writes the merged report; otherwise
/// checks that every metric reproduces bitwise.
pub fn replay(original: &ExperimentReport, seeds_extend: u64, opts: &RunOptions) -> Result<ReplayOutcome> {
    if original.code_version != CODE_VERSION {
        return Err(ExpError::VersionMismatch { expected: CODE_VERSION.into(), found: original.code_version.clone() });
    }
    let mut config = original.config.clone();
    let extended = seeds_extend > 0;
    if extended {
        let next = original.seeds.iter().max().map_or(0, |m| m + 1);
        let mut seeds = original.seeds.clone();
        seeds.extend(next..next + seeds_extend);
        config["seeds"] = serde_json::to_value(seeds)?;
    }
    let run_opts = RunOptions { dry_run: opts.dry_run || !extended, ..opts.clone() };
    let (report, path) = dispatch(&original.name, config, &run_opts)?;
    let differences = if extended { Vec::new() } else { report.differences(original) };
    Ok(ReplayOutcome { report, path, differences, extended })
}

pub fn replay_file(path: &Path, seeds_extend: u64, opts: &RunOptions) -> Result<ReplayOutcome> {
    replay(&ExperimentReport::load(path)?, seeds_extend, opts)
}
