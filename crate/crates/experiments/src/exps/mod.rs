pub mod fluctuation;
pub mod galerkin;
pub mod gibbs;
pub mod heat;
pub mod monotonicity;
pub mod ordering;
pub mod pullback;
pub mod shear;
pub mod slope;

use polymerlab_core::keyed::{domain, hash, open_unit};
use polymerlab_core::polymer::PolymerState;

use crate::error::Result;

/// Keyed uniform in `[-1, 1]` for site `k`; independent of the truncation size.
pub(crate) fn site_uniform(key: u64, k: usize) -> f64 {
    2.0 * open_unit(hash(key, domain::REPLICATE, k as u64, 0, 0)) - 1.0
}

/// `x_k = slope·k + offset + amp·U_k` for `k = 1..=n+1` (the last one is the boundary).
pub(crate) fn perturbed_ray(n: usize, slope: f64, offset: f64, amp: f64, key: u64) -> Result<PolymerState<f64>> {
    Ok(PolymerState::from_fn(n, |k| slope * k as f64 + offset + amp * site_uniform(key, k))?)
}
