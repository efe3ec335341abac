//! Two-sided Wiener paths on a fixed time grid.
//!
//! The increment of coordinate `k` over grid cell `[j·dt, (j+1)·dt)` is a pure
//! function of `(seed, k, j)`, for any integer `j` (negative `j` is the past).
//! Time shifts only re-index cells, so the cocycle identity of the dynamics
//! holds bitwise.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::keyed::{self, domain, KeyedStream};

/// Resampling attempts per steered segment before declaring infeasibility.
const MAX_ATTEMPTS: u64 = 2000;

/// Converts a time to a whole number of grid steps, rejecting off-grid times.
pub fn grid_steps(t: f64, dt: f64) -> Result<i64> {
    let q = t / dt;
    let r = q.round();
    if !q.is_finite() || (q - r).abs() > 1e-9 * q.abs().max(1.0) {
        return Err(Error::OffGrid { time: t, dt });
    }
    Ok(r as i64)
}

/// Constraint window for the first `coords` coordinates, in the time frame
/// re-zeroed at `origin` (i.e. on the shifted path `W(origin + t) - W(origin)`):
///
/// * `sup_{[0, t_start]} |W_k| <= bound · k^{1/8}`
/// * `sup_{[t_start, t_end]} |W_k - a_k(t)| <= eps² · k^{1/8}`
///
/// where `a_k(t) = target` for `k >= 2` and `a_1(t) = (t - t_start + 1)·target`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SteerWindow {
    #[serde(default)]
    pub origin: f64,
    pub t_start: f64,
    pub t_end: f64,
    pub bound: f64,
    pub target: f64,
    pub eps: f64,
    pub coords: usize,
}

impl SteerWindow {
    fn envelope(k: usize) -> f64 {
        (k as f64).powf(0.125)
    }

    /// Target curve `a_k(t)` at relative time `t >= t_start`.
    pub fn target_at(&self, k: usize, t: f64) -> f64 {
        if k == 1 {
            (t - self.t_start + 1.0) * self.target
        } else {
            self.target
        }
    }

    pub fn outer_bound(&self, k: usize) -> f64 {
        self.bound * Self::envelope(k)
    }

    pub fn band(&self, k: usize) -> f64 {
        self.eps * self.eps * Self::envelope(k)
    }
}

/// Precomputed increments of one steered window, row-major by coordinate.
#[derive(Debug, PartialEq)]
struct SteeredBlock {
    window: SteerWindow,
    first_cell: i64,
    len: usize,
    rows: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoisePath {
    seed: u64,
    dt: f64,
    offset: i64,
    steering: Option<Arc<Vec<SteeredBlock>>>,
}

impl NoisePath {
    pub fn new(seed: u64, dt: f64) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidConfig(format!("dt must be positive, got {dt}")));
        }
        Ok(Self { seed, dt, offset: 0, steering: None })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Cumulative shift applied by [`NoisePath::time_shift`], in grid cells.
    pub fn offset(&self) -> i64 {
        self.offset
    }

    pub fn windows(&self) -> Vec<SteerWindow> {
        self.steering.as_ref().map_or_else(Vec::new, |b| b.iter().map(|s| s.window.clone()).collect())
    }

    /// `W_k((j+1)dt) - W_k(j dt)`, distributed `N(0, dt)`.
    #[inline]
    pub fn increment(&self, k: usize, j: i64) -> f64 {
        let cell = j + self.offset;
        if let Some(blocks) = &self.steering {
            for b in blocks.iter() {
                if k <= b.window.coords && cell >= b.first_cell && cell < b.first_cell + b.len as i64 {
                    return b.rows[k - 1][(cell - b.first_cell) as usize];
                }
            }
        }
        self.base_increment(k, cell)
    }

    #[inline]
    fn base_increment(&self, k: usize, cell: i64) -> f64 {
        self.dt.sqrt() * keyed::normal(self.seed, domain::WIENER, k as u64, cell as u64, 0)
    }

    /// Increments of coordinates `1..=out.len()` over cell `j`.
    pub fn fill_increments(&self, j: i64, out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.increment(i + 1, j);
        }
    }

    /// `W_k(j·dt)` relative to `W_k(0) = 0`, summing cells in either direction.
    pub fn cumulative(&self, k: usize, j: i64) -> f64 {
        if j >= 0 {
            (0..j).map(|i| self.increment(k, i)).sum()
        } else {
            -(j..0).map(|i| self.increment(k, i)).sum::<f64>()
        }
    }

    /// `θ^s W`: the path whose cell `j` is this path's cell `j + s/dt`.
    pub fn time_shift(&self, s: f64) -> Result<Self> {
        let m = grid_steps(s, self.dt)?;
        let mut out = self.clone();
        out.offset += m;
        Ok(out)
    }

    /// A path agreeing with `self` outside the windows and satisfying each
    /// window's sup-bounds on its steered coordinates. Segments are Brownian
    /// bridges pinned to the target curve, resampled until the bound holds.
    pub fn steered(&self, windows: &[SteerWindow]) -> Result<Self> {
        if windows.is_empty() {
            return Ok(self.clone());
        }
        let mut spans = Vec::with_capacity(windows.len());
        for w in windows {
            if !(w.t_start > 0.0 && w.t_end > w.t_start) {
                return Err(Error::InfeasibleSteering(format!(
                    "need 0 < t_start < t_end, got t_start = {}, t_end = {}",
                    w.t_start, w.t_end
                )));
            }
            if !(w.bound > w.target.abs()) {
                return Err(Error::InfeasibleSteering(format!("bound {} must exceed |target| = {}", w.bound, w.target.abs())));
            }
            if w.eps <= 0.0 || w.coords == 0 {
                return Err(Error::InfeasibleSteering("eps and coords must be positive".into()));
            }
            let first = grid_steps(w.origin, self.dt)?;
            let len = grid_steps(w.t_end, self.dt)?;
            spans.push((first, first + len));
        }
        let mut sorted = spans.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|p| p[1].0 < p[0].1) {
            return Err(Error::InfeasibleSteering("windows overlap".into()));
        }
        if self.steering.is_some() {
            return Err(Error::InfeasibleSteering("path is already steered".into()));
        }
        let blocks = windows
            .iter()
            .zip(&spans)
            .enumerate()
            .map(|(wi, (w, (first, last)))| self.steer_block(wi as u64, w, *first + self.offset, (*last - *first) as usize))
            .collect::<Result<Vec<_>>>()?;
        let mut out = self.clone();
        out.steering = Some(Arc::new(blocks));
        Ok(out)
    }

    fn steer_block(&self, wi: u64, w: &SteerWindow, first_cell: i64, len: usize) -> Result<SteeredBlock> {
        let n1 = grid_steps(w.t_start, self.dt)? as usize;
        let sqdt = self.dt.sqrt();
        let mut rows = Vec::with_capacity(w.coords);
        for k in 1..=w.coords {
            let band = w.band(k);
            // chunk duration band²/2 keeps a pinned bridge inside the band with
            // probability ~0.96 per chunk
            let chunk = ((band * band / 2.0) / self.dt).floor() as usize;
            if chunk == 0 {
                return Err(Error::InfeasibleSteering(format!(
                    "band eps²·k^(1/8) = {band:.3e} is below the resolution of dt = {}",
                    self.dt
                )));
            }
            let mut path = vec![0.0; len + 1];
            // segment 1: bridge from 0 to a_k(t_start) = target, inside the outer bound
            let end = w.target_at(k, w.t_start);
            let outer = w.outer_bound(k);
            self.fill_bridge(wi, k, 0, &mut path[..=n1], 0.0, end, sqdt, |_, v| v.abs() <= outer)?;
            // segment 2: bridges pinned to the target curve on consecutive chunks
            let mut start = n1;
            let mut chunk_id = 1;
            while start < len {
                let stop = (start + chunk).min(len);
                let t0 = start as f64 * self.dt;
                let (a0, a1) = (w.target_at(k, t0), w.target_at(k, stop as f64 * self.dt));
                let dt = self.dt;
                self.fill_bridge(wi, k, chunk_id, &mut path[start..=stop], a0, a1, sqdt, |i, v| {
                    (v - w.target_at(k, t0 + i as f64 * dt)).abs() <= band
                })?;
                start = stop;
                chunk_id += 1;
            }
            rows.push(path.windows(2).map(|p| p[1] - p[0]).collect());
        }
        Ok(SteeredBlock { window: w.clone(), first_cell, len, rows })
    }

    /// Fills `seg` with a Brownian bridge from `from` to `to`, resampling
    /// until `accept(i, value)` holds at every grid point.
    #[allow(clippy::too_many_arguments)]
    fn fill_bridge(
        &self,
        wi: u64,
        k: usize,
        segment: u64,
        seg: &mut [f64],
        from: f64,
        to: f64,
        sqdt: f64,
        accept: impl Fn(usize, f64) -> bool,
    ) -> Result<()> {
        let steps = seg.len() - 1;
        for attempt in 0..MAX_ATTEMPTS {
            let mut stream = KeyedStream::new(self.seed ^ wi.rotate_left(29), domain::STEER, k as u64, (segment << 32) | attempt);
            let mut b = 0.0;
            seg[0] = 0.0;
            for v in seg.iter_mut().skip(1) {
                b += sqdt * stream.normal();
                *v = b;
            }
            let total = seg[steps];
            for (i, v) in seg.iter_mut().enumerate() {
                let frac = i as f64 / steps as f64;
                *v = from + (*v - frac * total) + frac * (to - from);
            }
            seg[0] = from;
            seg[steps] = to;
            if seg.iter().enumerate().all(|(i, v)| accept(i, *v)) {
                return Ok(());
            }
        }
        Err(Error::InfeasibleSteering(format!("coordinate {k}: no admissible bridge after {MAX_ATTEMPTS} resamples")))
    }
}

/// Run-config description of a noise path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    pub seed: u64,
    pub dt: f64,
    #[serde(default)]
    pub steering: Vec<SteerWindow>,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self { seed: 1, dt: 0.01, steering: Vec::new() }
    }
}

impl NoiseSpec {
    pub fn build(&self) -> Result<NoisePath> {
        NoisePath::new(self.seed, self.dt)?.steered(&self.steering)
    }
}
