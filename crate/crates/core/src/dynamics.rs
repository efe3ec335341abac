//! Time integration of the truncated polymer SDE
//!
//! ```text
//! dX_k = (Δ_k X + f_k(X_k)) dt + σ dW_k,   k = 1..n,
//! ```
//!
//! with `X_0 ≡ 0` and `X_{n+1}` frozen at its initial value. All runs live on
//! the noise grid: the step from `j·dt` to `(j+1)·dt` consumes cell `j` of the
//! noise path, so restarting from an intermediate state with a time-shifted
//! path reproduces the original run bitwise.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::noise::{grid_steps, NoisePath};
use crate::polymer::{PolymerState, ORDER_EPS};
use crate::potential::{drift_into, PotentialField};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Euler–Maruyama. Order preserving when `dt·(2 + sup|f'|) <= 1`.
    #[default]
    ExplicitEm,
    /// Laplacian implicit, potential and noise explicit; tridiagonal solve per step.
    SemiImplicitLaplacian,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SdeConfig<T> {
    pub dt: T,
    /// `T`; the noise strength is `σ = √(2T)` and the inverse temperature `β = 1/T`.
    pub temperature: T,
    /// Replaces `√(2T)` (deterministic runs, mismatched-temperature controls).
    pub sigma_override: Option<T>,
    pub scheme: Scheme,
    pub t_end: T,
    /// Bound on `sup|f'|` for the explicit step-size check; defaults to the potential's hint.
    pub lipschitz_bound: Option<T>,
    pub check_step_condition: bool,
}

impl<T: Scalar> SdeConfig<T> {
    pub fn new(dt: T, temperature: T, t_end: T) -> Self {
        Self { dt, temperature, sigma_override: None, scheme: Scheme::ExplicitEm, t_end, lipschitz_bound: None, check_step_condition: true }
    }

    /// Noise-free configuration (σ = 0).
    pub fn deterministic(dt: T, t_end: T) -> Self {
        Self { sigma_override: Some(T::zero()), ..Self::new(dt, T::one(), t_end) }
    }

    pub fn with_scheme(mut self, scheme: Scheme) -> Self {
        self.scheme = scheme;
        self
    }

    pub fn with_sigma(mut self, sigma: T) -> Self {
        self.sigma_override = Some(sigma);
        self
    }

    pub fn with_t_end(mut self, t_end: T) -> Self {
        self.t_end = t_end;
        self
    }

    pub fn unchecked(mut self) -> Self {
        self.check_step_condition = false;
        self
    }

    pub fn sigma(&self) -> T {
        self.sigma_override.unwrap_or_else(|| (T::lit(2.0) * self.temperature).sqrt())
    }

    pub fn beta(&self) -> T {
        self.temperature.recip()
    }

    pub fn validate(&self, field: &PotentialField) -> Result<()> {
        if !(self.dt > T::zero()) || !self.dt.is_finite() {
            return Err(Error::InvalidConfig(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.temperature > T::zero()) {
            return Err(Error::InvalidConfig(format!("temperature must be positive, got {}", self.temperature)));
        }
        if self.sigma() < T::zero() || !self.sigma().is_finite() {
            return Err(Error::InvalidConfig("sigma must be finite and non-negative".into()));
        }
        if self.check_step_condition && self.scheme == Scheme::ExplicitEm {
            let lf = self.lipschitz_bound.map_or_else(|| field.lipschitz_hint(), |l| l.as_f64());
            let value = self.dt.as_f64() * (2.0 + lf);
            if value > 1.0 {
                return Err(Error::StepCondition { value });
            }
        }
        Ok(())
    }

    fn check_path(&self, path: &NoisePath) -> Result<()> {
        let (a, b) = (self.dt.as_f64(), path.dt());
        if (a - b).abs() > 4.0 * T::epsilon().as_f64() * b {
            return Err(Error::InvalidConfig(format!("integrator dt {a} differs from noise dt {b}")));
        }
        Ok(())
    }
}

/// One integrator with its scratch buffers; reuse across steps and states.
#[derive(Debug, Clone)]
pub struct Stepper<T> {
    dt: T,
    sigma: T,
    scheme: Scheme,
    drift: Vec<T>,
    noise: Vec<f64>,
    scratch: Vec<T>,
}

impl<T: Scalar> Stepper<T> {
    pub fn new(cfg: &SdeConfig<T>, n: usize) -> Self {
        Self {
            dt: cfg.dt,
            sigma: cfg.sigma(),
            scheme: cfg.scheme,
            drift: vec![T::zero(); n],
            noise: vec![0.0; n],
            scratch: vec![T::zero(); n],
        }
    }

    pub fn sigma(&self) -> T {
        self.sigma
    }

    /// Advances `x` over noise cell `j`.
    pub fn step(&mut self, x: &mut PolymerState<T>, field: &PotentialField, path: &NoisePath, j: i64) -> Result<()> {
        let mut noise = std::mem::take(&mut self.noise);
        noise.resize(x.n(), 0.0);
        let driven = self.sigma != T::zero();
        if driven {
            path.fill_increments(j, &mut noise);
        }
        let out = self.advance(x, field, if driven { Some(&noise) } else { None });
        self.noise = noise;
        out
    }

    /// Advances `x` with externally supplied Wiener increments (`None` = no noise).
    /// Several states advanced with the same increments share the noise exactly.
    pub fn advance(&mut self, x: &mut PolymerState<T>, field: &PotentialField, increments: Option<&[f64]>) -> Result<()> {
        let n = x.n();
        self.drift.resize(n, T::zero());
        self.scratch.resize(n, T::zero());
        let right = x.right_boundary();
        let dt = self.dt;
        match self.scheme {
            Scheme::ExplicitEm => {
                drift_into(field, x.coords(), right, &mut self.drift)?;
                let coords = x.coords_mut();
                for k in 0..n {
                    coords[k] += dt * self.drift[k];
                }
            }
            Scheme::SemiImplicitLaplacian => {
                // (I - dt Δ) x' = x + dt f(x) (+ noise), Δ with x'_0 = 0 and x'_{n+1} = right
                let rhs = &mut self.drift;
                for (k, r) in rhs.iter_mut().enumerate() {
                    let xk = x.coords()[k];
                    *r = xk + if field.is_zero() { T::zero() } else { dt * field.force(k + 1, xk)? };
                }
                if let Some(inc) = increments {
                    for (r, w) in rhs.iter_mut().zip(inc) {
                        *r += self.sigma * T::lit(*w);
                    }
                }
                rhs[n - 1] += dt * right;
                solve_heat_tridiagonal(dt, rhs, &mut self.scratch);
                x.coords_mut().copy_from_slice(rhs);
                return Ok(());
            }
        }
        if let Some(inc) = increments {
            for (c, w) in x.coords_mut().iter_mut().zip(inc) {
                *c += self.sigma * T::lit(*w);
            }
        }
        Ok(())
    }
}

/// Solves `(1 + 2dt) y_k - dt y_{k-1} - dt y_{k+1} = rhs_k` in place (Thomas algorithm).
fn solve_heat_tridiagonal<T: Scalar>(dt: T, rhs: &mut [T], c_prime: &mut [T]) {
    let n = rhs.len();
    let diag = T::one() + T::lit(2.0) * dt;
    let off = -dt;
    c_prime[0] = off / diag;
    rhs[0] /= diag;
    for k in 1..n {
        let denom = diag - off * c_prime[k - 1];
        c_prime[k] = off / denom;
        rhs[k] = (rhs[k] - off * rhs[k - 1]) / denom;
    }
    for k in (0..n - 1).rev() {
        rhs[k] -= c_prime[k] * rhs[k + 1];
    }
}

/// Where a trajectory came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub potential_seed: u64,
    pub noise_seed: u64,
    pub noise_offset: i64,
    pub initial_digest: String,
}

#[derive(Debug, Clone)]
pub struct Trajectory<T> {
    pub config: SdeConfig<T>,
    /// Snapshot times, multiples of `dt`; `times[0] = 0`.
    pub times: Vec<f64>,
    pub states: Vec<PolymerState<T>>,
    pub provenance: Provenance,
}

impl<T: Scalar> Trajectory<T> {
    pub fn final_state(&self) -> &PolymerState<T> {
        self.states.last().expect("trajectory holds the initial state")
    }
}

/// Integrates `steps` grid steps starting at noise cell `first_cell`, calling
/// `observe(step_index, &state)` after every step.
pub fn integrate_with<T: Scalar>(
    x0: &PolymerState<T>,
    field: &PotentialField,
    path: &NoisePath,
    cfg: &SdeConfig<T>,
    first_cell: i64,
    steps: u64,
    mut observe: impl FnMut(u64, &PolymerState<T>),
) -> Result<PolymerState<T>> {
    cfg.validate(field)?;
    cfg.check_path(path)?;
    let mut stepper = Stepper::new(cfg, x0.n());
    let mut x = x0.clone();
    let mut last = x.clone();
    for s in 0..steps {
        stepper.step(&mut x, field, path, first_cell + s as i64)?;
        if !x.is_finite() {
            return Err(Error::IntegrationFailure {
                step: s,
                time: (first_cell + s as i64) as f64 * path.dt(),
                last_finite: Box::new(last.cast()),
            });
        }
        observe(s + 1, &x);
        last.clone_from(&x);
    }
    Ok(x)
}

/// Runs from `t = 0` to `cfg.t_end`, keeping every `stride`-th state.
pub fn evolve<T: Scalar>(
    x0: &PolymerState<T>,
    field: &PotentialField,
    path: &NoisePath,
    cfg: &SdeConfig<T>,
    stride: usize,
) -> Result<Trajectory<T>> {
    let steps = grid_steps(cfg.t_end.as_f64(), path.dt())?;
    if steps < 0 {
        return Err(Error::BackwardIntegration(cfg.t_end.as_f64()));
    }
    let stride = stride.max(1) as u64;
    let dt = path.dt();
    let mut times = vec![0.0];
    let mut states = vec![x0.clone()];
    let steps = steps as u64;
    integrate_with(x0, field, path, cfg, 0, steps, |s, x| {
        if s % stride == 0 || s == steps {
            times.push(s as f64 * dt);
            states.push(x.clone());
        }
    })?;
    Ok(Trajectory {
        config: cfg.clone(),
        times,
        states,
        provenance: Provenance {
            potential_seed: field.spec().seed(),
            noise_seed: path.seed(),
            noise_offset: path.offset(),
            initial_digest: x0.digest(),
        },
    })
}

/// The homogeneous discrete heat flow `S^t x0` (zero potential, no noise).
pub fn heat_flow<T: Scalar>(x0: &PolymerState<T>, t: T, dt: T, scheme: Scheme) -> Result<PolymerState<T>> {
    let steps = grid_steps(t.as_f64(), dt.as_f64())?;
    if steps < 0 {
        return Err(Error::BackwardIntegration(t.as_f64()));
    }
    let cfg = SdeConfig::deterministic(dt, t).with_scheme(scheme);
    // the noise path is never read when sigma = 0
    let path = NoisePath::new(0, dt.as_f64())?;
    integrate_with(x0, &PotentialField::zero(), &path, &cfg, 0, steps as u64, |_, _| {})
}

/// State at time 0 of the solution started from `x0` at `t_start <= 0`,
/// driven by the negative-time cells of the two-sided path.
pub fn pullback_evolve<T: Scalar>(
    x0: &PolymerState<T>,
    field: &PotentialField,
    path: &NoisePath,
    cfg: &SdeConfig<T>,
    t_start: f64,
) -> Result<PolymerState<T>> {
    if t_start > 0.0 {
        return Err(Error::BackwardIntegration(t_start));
    }
    let m = grid_steps(-t_start, path.dt())?;
    integrate_with(x0, field, path, cfg, -m, m as u64, |_, _| {})
}

/// First snapshot time at which `lower ⪯ upper` holds, checked after every step.
pub fn ordering_time<T: Scalar>(lower: &[PolymerState<T>], upper: &[PolymerState<T>], times: &[f64]) -> Option<f64> {
    lower.iter().zip(upper).zip(times).find(|((a, b), _)| a.leq(b, T::lit(ORDER_EPS)).unwrap_or(false)).map(|(_, t)| *t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polymer::{estimate_slope, Ray};
    use crate::potential::{drift, PotentialSpec};

    fn shot(seed: u64) -> PotentialField {
        PotentialField::new(PotentialSpec::ShotNoise { seed, amplitude: 1.0, lambda: 1.0, width: 1.0 }).unwrap()
    }

    #[test]
    fn ray_is_stationary_without_noise_or_potential() {
        let x = Ray::new(0.5, 0.0).materialize(30);
        let cfg = SdeConfig::deterministic(0.01, 1.0);
        let path = NoisePath::new(0, 0.01).unwrap();
        let out = evolve(&x, &PotentialField::zero(), &path, &cfg, 10).unwrap();
        assert!(out.states.iter().all(|s| s == &x));
    }

    #[test]
    fn single_explicit_step_of_unit_spike() {
        let dt = 0.05;
        let mut x = PolymerState::new(vec![1.0, 0.0, 0.0, 0.0], 0.0).unwrap();
        let cfg = SdeConfig::deterministic(dt, dt);
        let mut st = Stepper::new(&cfg, 4);
        st.step(&mut x, &PotentialField::zero(), &NoisePath::new(0, dt).unwrap(), 0).unwrap();
        assert_eq!(x.coords(), &[1.0 - 2.0 * dt, dt, 0.0, 0.0]);
    }

    #[test]
    fn explicit_step_matches_scalar_reimplementation() {
        // n = 3 written out longhand
        let (dt, temp) = (0.01, 0.7);
        let f = shot(3);
        let path = NoisePath::new(8, dt).unwrap();
        let x0 = PolymerState::new(vec![0.3, -1.2, 2.5], 0.9).unwrap();
        let mut x = x0.clone();
        let cfg = SdeConfig::new(dt, temp, dt);
        Stepper::new(&cfg, 3).step(&mut x, &f, &path, 17).unwrap();
        let sigma = (2.0 * temp).sqrt();
        let (a, b, c, r) = (0.3, -1.2, 2.5, 0.9);
        let fp = |k: usize, v: f64| f.evaluate(k, v).unwrap().first;
        let e1 = a + dt * ((0.0 - 2.0 * a + b) - fp(1, a)) + sigma * path.increment(1, 17);
        let e2 = b + dt * ((a - 2.0 * b + c) - fp(2, b)) + sigma * path.increment(2, 17);
        let e3 = c + dt * ((b - 2.0 * c + r) - fp(3, c)) + sigma * path.increment(3, 17);
        for (got, want) in x.coords().iter().zip([e1, e2, e3]) {
            assert!((got - want).abs() < 1e-14);
        }
        assert_eq!(x.right_boundary(), 0.9);
        // and equals x + dt·drift + σΔW with the shared drift
        let d = drift(&f, &x0).unwrap();
        for k in 0..3 {
            let want = x0.coords()[k] + dt * d[k] + sigma * path.increment(k + 1, 17);
            assert_eq!(x.coords()[k], want);
        }
    }

    #[test]
    fn semi_implicit_solves_the_linear_system() {
        let dt = 0.3;
        let x0 = PolymerState::new(vec![1.0, -2.0, 0.5, 4.0, 0.0], 2.0).unwrap();
        let cfg = SdeConfig::deterministic(dt, dt).with_scheme(Scheme::SemiImplicitLaplacian);
        let mut x = x0.clone();
        Stepper::new(&cfg, 5).step(&mut x, &PotentialField::zero(), &NoisePath::new(0, dt).unwrap(), 0).unwrap();
        // residual of (I - dt Δ) x' = x0
        let lap = x.laplacian();
        for k in 0..5 {
            assert!((x.coords()[k] - dt * lap[k] - x0.coords()[k]).abs() < 1e-13);
        }
    }

    #[test]
    fn zero_horizon_keeps_initial_state() {
        let x = Ray::new(1.0, 2.0).materialize(5);
        let cfg = SdeConfig::new(0.01, 1.0, 0.0);
        let t = evolve(&x, &shot(1), &NoisePath::new(1, 0.01).unwrap(), &cfg, 1).unwrap();
        assert_eq!(t.states, vec![x.clone()]);
        assert_eq!(t.times, vec![0.0]);
        assert_eq!(pullback_evolve(&x, &shot(1), &NoisePath::new(1, 0.01).unwrap(), &cfg, 0.0).unwrap(), x);
    }

    #[test]
    fn cocycle_is_bitwise() {
        let (dt, s, t) = (0.01, 1.3, 2.1);
        let f = shot(4);
        let path = NoisePath::new(12, dt).unwrap();
        let x0 = Ray::new(0.4, -1.0).materialize(40);
        let whole = evolve(&x0, &f, &path, &SdeConfig::new(dt, 1.0, s + t), 1000).unwrap();
        let first = evolve(&x0, &f, &path, &SdeConfig::new(dt, 1.0, s), 1000).unwrap();
        let shifted = path.time_shift(s).unwrap();
        let second = evolve(first.final_state(), &f, &shifted, &SdeConfig::new(dt, 1.0, t), 1000).unwrap();
        assert_eq!(whole.final_state(), second.final_state());
    }

    #[test]
    fn pullback_matches_shifted_forward_run() {
        let dt = 0.01;
        let f = shot(2);
        let path = NoisePath::new(3, dt).unwrap();
        let x0 = Ray::new(0.0, 1.0).materialize(10);
        let cfg = SdeConfig::new(dt, 1.0, 2.0);
        let pulled = pullback_evolve(&x0, &f, &path, &cfg, -2.0).unwrap();
        let forward = evolve(&x0, &f, &path.time_shift(-2.0).unwrap(), &cfg, 1000).unwrap();
        assert_eq!(&pulled, forward.final_state());
        assert!(matches!(pullback_evolve(&x0, &f, &path, &cfg, 1.0), Err(Error::BackwardIntegration(_))));
    }

    #[test]
    fn shear_equivariance() {
        let (dt, v) = (0.01, 0.7);
        let f = shot(5);
        let path = NoisePath::new(5, dt).unwrap();
        let x0 = Ray::new(0.2, 0.0).materialize(64);
        let cfg = SdeConfig::new(dt, 1.0, 3.0);
        let a = evolve(&x0.shear(v), &f.sheared(v), &path, &cfg, 10_000).unwrap();
        let b = evolve(&x0, &f, &path, &cfg, 10_000).unwrap();
        let gap = a.final_state().sup_distance(&b.final_state().shear(v)).unwrap();
        assert!(gap < 1e-8, "gap {gap}");
        let bad = evolve(&x0.shear(v), &f, &path, &cfg, 10_000).unwrap();
        assert!(bad.final_state().sup_distance(&b.final_state().shear(v)).unwrap() > 1e-3);
    }

    #[test]
    fn order_is_preserved_with_shared_noise() {
        let dt = 0.01;
        let cfg = SdeConfig::new(dt, 1.0, 2.0);
        for seed in 0..10u64 {
            let f = shot(seed);
            let path = NoisePath::new(seed, dt).unwrap();
            let x0 = Ray::new(0.3, 0.0).materialize(30);
            let y0 = PolymerState::from_fn(30, |k| 0.3 * k as f64 + if k % 3 == 0 { 1e-9 } else { 0.0 }).unwrap();
            let a = evolve(&x0, &f, &path, &cfg, 1).unwrap();
            let b = evolve(&y0, &f, &path, &cfg, 1).unwrap();
            for (p, q) in a.states.iter().zip(&b.states) {
                assert!(p.leq(q, 0.0).unwrap());
            }
        }
    }

    #[test]
    fn step_condition_enforced() {
        let cfg = SdeConfig::new(0.6, 1.0, 1.0);
        assert!(matches!(cfg.validate(&PotentialField::zero()), Err(Error::StepCondition { .. })));
        assert!(cfg.clone().unchecked().validate(&PotentialField::zero()).is_ok());
        assert!(cfg.with_scheme(Scheme::SemiImplicitLaplacian).validate(&PotentialField::zero()).is_ok());
        assert!(SdeConfig::new(0.01, 1.0, 1.0).validate(&shot(0)).is_ok());
        let mut c = SdeConfig::new(0.01, 1.0, 1.0);
        c.lipschitz_bound = Some(200.0);
        assert!(c.validate(&shot(0)).is_err());
    }

    #[test]
    fn mismatched_noise_grid_is_rejected() {
        let x = Ray::new(0.0, 0.0).materialize(3);
        let cfg = SdeConfig::new(0.01, 1.0, 1.0);
        assert!(evolve(&x, &shot(1), &NoisePath::new(1, 0.02).unwrap(), &cfg, 1).is_err());
    }

    #[test]
    fn overflow_fails_fast_with_last_finite_state() {
        let x = PolymerState::new(vec![1e300; 8], 1e300).unwrap();
        let cfg = SdeConfig::deterministic(0.6, 600.0).unchecked();
        let err = evolve(&x, &PotentialField::zero(), &NoisePath::new(0, 0.6).unwrap(), &cfg, 1).unwrap_err();
        match err {
            Error::IntegrationFailure { last_finite, .. } => assert!(last_finite.is_finite()),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn heat_flow_examples() {
        let ray = Ray::new(2.0, 0.0).materialize(50);
        assert_eq!(heat_flow(&ray, 5.0, 0.05, Scheme::ExplicitEm).unwrap(), ray);
        // broken ray r^1 - 2 with boundary n - 1 converges to k (n-1)/(n+1)
        let n = 20;
        let x0 = Ray::new(1.0, -2.0).materialize(n);
        assert_eq!(x0.right_boundary(), (n - 1) as f64);
        let limit = heat_flow(&x0, 2000.0, 0.5, Scheme::SemiImplicitLaplacian).unwrap();
        for k in 1..=n {
            let want = k as f64 * (n - 1) as f64 / (n + 1) as f64;
            assert!((limit.at(k) - want).abs() < 1e-8);
        }
        let zero = PolymerState::new(vec![0.0; n], 0.0).unwrap();
        let mut t = 0.0;
        let mut x = x0.clone();
        while !zero.leq(&x, 0.0).unwrap() || x.coords().iter().any(|c| *c <= 0.0) {
            x = heat_flow(&x, 0.5, 0.05, Scheme::ExplicitEm).unwrap();
            t += 0.5;
            assert!(t < 100.0);
        }
    }

    #[test]
    fn convexity_is_preserved_by_heat_flow() {
        let n = 40;
        let x0 = PolymerState::from_fn(n, |k| ((k as f64) - 15.0).powi(2) / 10.0 - 22.5).unwrap();
        assert!(x0.laplacian().iter().all(|d| *d >= 0.0));
        let cfg = SdeConfig::deterministic(0.05, 20.0);
        let traj = evolve(&x0, &PotentialField::zero(), &NoisePath::new(0, 0.05).unwrap(), &cfg, 1).unwrap();
        for s in &traj.states {
            assert!(s.laplacian().iter().all(|d| *d >= -1e-12));
        }
    }

    #[test]
    fn slope_drifts_little() {
        let n = 400;
        let f = shot(6);
        let x0 = Ray::new(1.0, 0.0).materialize(n);
        let cfg = SdeConfig::new(0.01, 1.0, 5.0);
        let t = evolve(&x0, &f, &NoisePath::new(6, 0.01).unwrap(), &cfg, 10_000).unwrap();
        let s = estimate_slope(t.final_state(), 0.5).unwrap();
        assert!((s.slope - 1.0f64).abs() < 0.05);
    }

    #[test]
    fn generic_integration_in_f32() {
        let x: PolymerState<f32> = Ray::new(0.5f32, 0.0).materialize(16);
        let cfg = SdeConfig::<f32>::new(0.01, 1.0, 1.0);
        let out = evolve(&x, &shot(1), &NoisePath::new(1, 0.01).unwrap(), &cfg, 1000).unwrap();
        let out64 = evolve(&x.cast::<f64>(), &shot(1), &NoisePath::new(1, 0.01).unwrap(), &SdeConfig::new(0.01, 1.0, 1.0), 1000).unwrap();
        let gap = out.final_state().cast::<f64>().sup_distance(out64.final_state()).unwrap();
        assert!(gap < 1e-3, "f32 vs f64 gap {gap}");
    }
}
