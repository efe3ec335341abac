//! Run configuration files.
//!
//! A config is a JSON object naming an experiment plus shared sections
//! (`potential`, `noise`, `sde`, `seeds`) and an experiment-specific `params`
//! object. Unknown keys are rejected everywhere; parse errors carry the line
//! and column of the offending key.

use std::path::PathBuf;

use polymerlab_core::dynamics::{Scheme, SdeConfig};
use polymerlab_core::keyed::derive_seed;
use polymerlab_core::noise::NoisePath;
use polymerlab_core::potential::{PotentialField, PotentialSpec};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ExpError, Result};

pub const WORKERS_ENV: &str = "POLYMERLAB_WORKERS";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig<P> {
    pub experiment: String,
    #[serde(default)]
    pub potential: PotentialSpec,
    #[serde(default)]
    pub noise: NoiseSection,
    #[serde(default)]
    pub sde: SdeSection,
    /// A list of seeds, or a count `c` meaning seeds `0..c`. Defaults per experiment.
    #[serde(default)]
    pub seeds: Option<Seeds>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub plot_scripts: bool,
    /// Permits `σ² ≠ 2/β` (negative controls).
    #[serde(default)]
    pub allow_sigma_mismatch: bool,
    #[serde(default)]
    pub params: P,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Seeds {
    Count(u64),
    List(Vec<u64>),
}

impl Seeds {
    pub fn expand(&self) -> Vec<u64> {
        match self {
            Seeds::Count(c) => (0..*c).collect(),
            Seeds::List(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSection {
    /// Base seed; trajectory `s` uses the derived seed `(base, s)`.
    pub seed: u64,
}

impl Default for NoiseSection {
    fn default() -> Self {
        Self { seed: 2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SdeSection {
    pub dt: f64,
    pub temperature: f64,
    /// Defaults to `√(2T)`.
    pub sigma: Option<f64>,
    /// Defaults to `1/T`.
    pub beta: Option<f64>,
    pub scheme: Scheme,
}

impl Default for SdeSection {
    fn default() -> Self {
        Self { dt: 0.01, temperature: 1.0, sigma: None, beta: None, scheme: Scheme::ExplicitEm }
    }
}

impl SdeSection {
    pub fn sigma(&self) -> f64 {
        self.sigma.unwrap_or_else(|| (2.0 * self.temperature).sqrt())
    }

    pub fn beta(&self) -> f64 {
        self.beta.unwrap_or(1.0 / self.temperature)
    }
}

/// First pass: only the experiment name.
#[derive(Deserialize)]
struct Header {
    experiment: String,
}

pub fn experiment_name(text: &str) -> Result<String> {
    let h: Header = serde_json::from_str(text).map_err(|e| ExpError::Config(e.to_string()))?;
    Ok(h.experiment)
}

impl<P> RunConfig<P> {
    pub fn validate(&self) -> Result<()> {
        let s = &self.sde;
        let bad = |m: String| Err(ExpError::Config(m));
        if !(s.dt > 0.0) || !s.dt.is_finite() {
            return bad(format!("sde.dt must be positive, got {}", s.dt));
        }
        if !(s.temperature > 0.0) || !s.temperature.is_finite() {
            return bad(format!("sde.temperature must be positive, got {}", s.temperature));
        }
        if let Some(sig) = s.sigma {
            if !(sig >= 0.0) || !sig.is_finite() {
                return bad(format!("sde.sigma must be finite and non-negative, got {sig}"));
            }
        }
        if let Some(b) = s.beta {
            if !(b > 0.0) || !b.is_finite() {
                return bad(format!("sde.beta must be positive, got {b}"));
            }
        }
        if matches!(&self.seeds, Some(Seeds::Count(0))) || matches!(&self.seeds, Some(Seeds::List(v)) if v.is_empty()) {
            return bad("seeds must not be empty".into());
        }
        let (sq, two_over_beta) = (s.sigma().powi(2), 2.0 / s.beta());
        if !self.allow_sigma_mismatch && (sq - two_over_beta).abs() > 1e-9 * two_over_beta {
            return Err(ExpError::SigmaMismatch { sigma_sq: sq, two_over_beta });
        }
        PotentialField::new(self.potential.clone())?;
        Ok(())
    }
}

/// Shared run state handed to every experiment.
#[derive(Debug, Clone)]
pub struct Context {
    pub potential: PotentialSpec,
    pub noise_seed: u64,
    pub sde: SdeSection,
    pub seeds: Vec<u64>,
    pub workers: usize,
}

impl Context {
    pub fn new(potential: PotentialSpec, noise_seed: u64, sde: SdeSection, seeds: Vec<u64>) -> Self {
        Self { potential, noise_seed, sde, seeds, workers: workers_from_env() }
    }

    pub fn dt(&self) -> f64 {
        self.sde.dt
    }

    pub fn sigma(&self) -> f64 {
        self.sde.sigma()
    }

    pub fn beta(&self) -> f64 {
        self.sde.beta()
    }

    /// The configured potential with no per-seed reseeding.
    pub fn base_field(&self) -> Result<PotentialField> {
        Ok(PotentialField::new(self.potential.clone())?)
    }

    /// Environment realisation for replicate `seed`.
    pub fn field(&self, seed: u64) -> Result<PotentialField> {
        let spec = self.potential.with_seed(derive_seed(self.potential.seed(), seed));
        Ok(PotentialField::new(spec)?)
    }

    pub fn path(&self, seed: u64) -> Result<NoisePath> {
        self.path_with_dt(seed, self.sde.dt)
    }

    pub fn path_with_dt(&self, seed: u64, dt: f64) -> Result<NoisePath> {
        Ok(NoisePath::new(derive_seed(self.noise_seed, seed), dt)?)
    }

    pub fn sde_config(&self, t_end: f64) -> SdeConfig<f64> {
        SdeConfig {
            dt: self.sde.dt,
            temperature: self.sde.temperature,
            sigma_override: self.sde.sigma,
            scheme: self.sde.scheme,
            t_end,
            lipschitz_bound: None,
            check_step_condition: true,
        }
    }

    /// Maps `f` over `items` on the worker pool; output order follows input order.
    pub fn map<I, R, F>(&self, items: &[I], f: F) -> Result<Vec<R>>
    where
        I: Sync,
        R: Send,
        F: Fn(&I) -> Result<R> + Sync + Send,
    {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.workers)
            .build()
            .map_err(|e| ExpError::Config(format!("cannot start worker pool: {e}")))?;
        pool.install(|| items.par_iter().map(&f).collect())
    }
}

/// `POLYMERLAB_WORKERS` if set to a positive integer, otherwise the number of CPUs.
pub fn workers_from_env() -> usize {
    std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|w| *w > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}
