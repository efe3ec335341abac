//! Polymer configurations: Galerkin-truncated chains pinned at the origin,
//! their geometry (discrete Laplacian, shear, rays), weighted norms, the
//! coordinatewise partial order, and finite-n slope estimation.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Default tolerance for order comparisons of integrated states.
pub const ORDER_EPS: f64 = 1e-12;

/// A chain `x_0 = 0, x_1, …, x_n, x_{n+1}` where `x_0` is pinned and
/// `x_{n+1}` (the right boundary) is frozen. Only `x_1..=x_n` are active.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "StateWire<T>", try_from = "StateWire<T>")]
#[serde(bound(serialize = "T: Scalar + Serialize", deserialize = "T: Scalar + Deserialize<'de>"))]
pub struct PolymerState<T> {
    coords: Vec<T>,
    right_boundary: T,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StateWire<T> {
    n: usize,
    right_boundary: T,
    coords: Vec<T>,
}

impl<T: Scalar> From<PolymerState<T>> for StateWire<T> {
    fn from(s: PolymerState<T>) -> Self {
        StateWire { n: s.coords.len(), right_boundary: s.right_boundary, coords: s.coords }
    }
}

impl<T: Scalar> TryFrom<StateWire<T>> for PolymerState<T> {
    type Error = Error;

    fn try_from(w: StateWire<T>) -> Result<Self> {
        if w.n != w.coords.len() {
            return Err(Error::DimensionMismatch { expected: w.n, found: w.coords.len() });
        }
        PolymerState::new(w.coords, w.right_boundary)
    }
}

impl<T: Scalar> PolymerState<T> {
    pub fn new(coords: Vec<T>, right_boundary: T) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::InvalidState("n must be at least 1".into()));
        }
        if let Some(k) = coords.iter().position(|c| !c.is_finite()) {
            return Err(Error::InvalidState(format!("coordinate {} is not finite", k + 1)));
        }
        if !right_boundary.is_finite() {
            return Err(Error::InvalidState("right boundary is not finite".into()));
        }
        Ok(Self { coords, right_boundary })
    }

    /// Builds a state from `f(k)` for `k = 1..=n`, with the boundary `f(n + 1)`.
    pub fn from_fn(n: usize, f: impl Fn(usize) -> T) -> Result<Self> {
        Self::new((1..=n).map(&f).collect(), f(n + 1))
    }

    pub fn n(&self) -> usize {
        self.coords.len()
    }

    /// Active coordinates `x_1..=x_n` (slice index `k - 1`).
    pub fn coords(&self) -> &[T] {
        &self.coords
    }

    pub(crate) fn coords_mut(&mut self) -> &mut [T] {
        &mut self.coords
    }

    pub fn right_boundary(&self) -> T {
        self.right_boundary
    }

    /// `x_k` for `k` in `0..=n+1`, including the pinned origin and the frozen boundary.
    pub fn at(&self, k: usize) -> T {
        match k {
            0 => T::zero(),
            k if k <= self.n() => self.coords[k - 1],
            k if k == self.n() + 1 => self.right_boundary,
            _ => panic!("index {k} outside 0..={}", self.n() + 1),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.right_boundary.is_finite() && self.coords.iter().all(|c| c.is_finite())
    }

    pub fn laplacian(&self) -> Vec<T> {
        discrete_laplacian(self)
    }

    pub fn shear(&self, v: T) -> Self {
        shear(self, v)
    }

    pub fn leq(&self, other: &Self, eps: T) -> Result<bool> {
        partial_order_leq(self, other, eps)
    }

    /// Largest coordinate difference, boundary included.
    pub fn sup_distance(&self, other: &Self) -> Result<T> {
        check_same_n(self, other)?;
        let interior = self.coords.iter().zip(&other.coords).fold(T::zero(), |m, (a, b)| m.max((*a - *b).abs()));
        Ok(interior.max((self.right_boundary - other.right_boundary).abs()))
    }

    /// Coordinatewise difference `self - other` on `1..=n`.
    pub fn difference(&self, other: &Self) -> Result<Vec<T>> {
        check_same_n(self, other)?;
        Ok(self.coords.iter().zip(&other.coords).map(|(a, b)| *a - *b).collect())
    }

    pub fn cast<U: Scalar>(&self) -> PolymerState<U> {
        PolymerState {
            coords: self.coords.iter().map(|c| U::lit(c.as_f64())).collect(),
            right_boundary: U::lit(self.right_boundary.as_f64()),
        }
    }

    /// SHA-256 over the IEEE bit patterns of `(n, right_boundary, coords)`.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.n() as u64).to_le_bytes());
        h.update(self.right_boundary.as_f64().to_bits().to_le_bytes());
        for c in &self.coords {
            h.update(c.as_f64().to_bits().to_le_bytes());
        }
        hex::encode(h.finalize())
    }
}

fn check_same_n<T: Scalar>(x: &PolymerState<T>, y: &PolymerState<T>) -> Result<()> {
    if x.n() != y.n() {
        return Err(Error::DimensionMismatch { expected: x.n(), found: y.n() });
    }
    Ok(())
}

/// The chain `k ↦ slope·k + offset`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ray<T> {
    pub slope: T,
    pub offset: T,
}

impl<T: Scalar> Ray<T> {
    pub fn new(slope: T, offset: T) -> Self {
        Self { slope, offset }
    }

    pub fn value(&self, k: usize) -> T {
        self.slope * T::index(k) + self.offset
    }

    /// Truncation to `n` active sites with the boundary on the ray, `u(n+1) + a`.
    pub fn materialize(&self, n: usize) -> PolymerState<T> {
        PolymerState::from_fn(n, |k| self.value(k)).expect("finite ray")
    }

    /// Truncation with an explicitly chosen frozen boundary.
    pub fn materialize_with_boundary(&self, n: usize, right_boundary: T) -> Result<PolymerState<T>> {
        PolymerState::new((1..=n).map(|k| self.value(k)).collect(), right_boundary)
    }
}

/// Writes `Δ_k x = x_{k-1} - 2x_k + x_{k+1}` for `k = 1..=n` into `out`,
/// with `x_0 = 0` and `x_{n+1} = right`.
#[inline]
pub fn laplacian_into<T: Scalar>(coords: &[T], right: T, out: &mut [T]) {
    let n = coords.len();
    debug_assert_eq!(out.len(), n);
    let two = T::lit(2.0);
    for k in 0..n {
        let left = if k == 0 { T::zero() } else { coords[k - 1] };
        let next = if k + 1 == n { right } else { coords[k + 1] };
        out[k] = left - two * coords[k] + next;
    }
}

pub fn discrete_laplacian<T: Scalar>(x: &PolymerState<T>) -> Vec<T> {
    let mut out = vec![T::zero(); x.n()];
    laplacian_into(&x.coords, x.right_boundary, &mut out);
    out
}

/// Exponent of a weighted norm; `p = ∞` is its own variant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Exponent<T> {
    Finite(T),
    Infinity,
}

/// Parameters `(α, p)` of the norm `‖x‖_{α,p}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormSpec<T> {
    pub alpha: T,
    pub p: Exponent<T>,
}

impl<T: Scalar> NormSpec<T> {
    pub fn new(alpha: T, p: Exponent<T>) -> Result<Self> {
        let spec = Self { alpha, p };
        spec.validate()?;
        Ok(spec)
    }

    /// `(1, ∞)`: the norm of the space of chains with finite slope.
    pub fn lipschitz() -> Self {
        Self { alpha: T::one(), p: Exponent::Infinity }
    }

    /// `(3/4, 2)`.
    pub fn star() -> Self {
        Self { alpha: T::lit(0.75), p: Exponent::Finite(T::lit(2.0)) }
    }

    fn validate(&self) -> Result<()> {
        if !(self.alpha > T::zero()) {
            return Err(Error::InvalidNorm(format!("alpha must be positive, got {}", self.alpha)));
        }
        if let Exponent::Finite(p) = self.p {
            if !(p >= T::one()) {
                return Err(Error::InvalidNorm(format!("p must be at least 1, got {p}")));
            }
        }
        Ok(())
    }

    /// Whether `α·p > 1`.
    pub fn is_admissible(&self) -> bool {
        match self.p {
            Exponent::Infinity => true,
            Exponent::Finite(p) => self.alpha * p > T::one(),
        }
    }
}

/// `‖x‖_{α,p}` over the finite sequence `x_1..=x_n` (slice index `k - 1`).
pub fn weighted_norm<T: Scalar>(x: &[T], spec: &NormSpec<T>) -> Result<T> {
    spec.validate()?;
    let weighted = x.iter().enumerate().map(|(i, v)| v.abs() / T::index(i + 1).powf(spec.alpha));
    Ok(match spec.p {
        Exponent::Infinity => weighted.fold(T::zero(), T::max),
        Exponent::Finite(p) if p == T::one() => weighted.sum(),
        Exponent::Finite(p) => weighted.map(|w| w.powf(p)).sum::<T>().powf(p.recip()),
    })
}

/// `x ⪯ y` up to `eps`: `x_k <= y_k + eps` for every active `k` and for the boundary.
pub fn partial_order_leq<T: Scalar>(x: &PolymerState<T>, y: &PolymerState<T>, eps: T) -> Result<bool> {
    Ok(order_violations(x, y, eps)? == 0)
}

/// Number of sites (boundary included) where `x_k > y_k + eps`.
pub fn order_violations<T: Scalar>(x: &PolymerState<T>, y: &PolymerState<T>, eps: T) -> Result<usize> {
    check_same_n(x, y)?;
    let interior = x.coords.iter().zip(&y.coords).filter(|(a, b)| **a > **b + eps).count();
    Ok(interior + usize::from(x.right_boundary > y.right_boundary + eps))
}

/// `(Ξ^v x)_k = x_k + k·v`, applied to the frozen boundary as well.
pub fn shear<T: Scalar>(x: &PolymerState<T>, v: T) -> PolymerState<T> {
    let coords = x.coords.iter().enumerate().map(|(i, c)| *c + T::index(i + 1) * v).collect();
    PolymerState { coords, right_boundary: x.right_boundary + T::index(x.n() + 1) * v }
}

/// Tail slope estimate with its `(v−, v+)` bracket of `x_k / k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlopeEstimate<T> {
    pub slope: T,
    pub lower: T,
    pub upper: T,
    pub window: usize,
}

impl<T: Scalar> SlopeEstimate<T> {
    pub fn width(&self) -> T {
        self.upper - self.lower
    }
}

/// Least-squares slope of `x_k` against `k` over the last `⌈tail_fraction·n⌉`
/// sites, plus the min/max of `x_k / k` over the same window.
pub fn estimate_slope<T: Scalar>(x: &PolymerState<T>, tail_fraction: T) -> Result<SlopeEstimate<T>> {
    if !(tail_fraction > T::zero() && tail_fraction <= T::one()) {
        return Err(Error::InvalidConfig(format!("tail_fraction must lie in (0, 1], got {tail_fraction}")));
    }
    let n = x.n();
    let window = (tail_fraction.as_f64() * n as f64).ceil() as usize;
    let window = window.min(n);
    if window < 2 {
        return Err(Error::DegenerateWindow { points: window });
    }
    let first = n - window + 1;
    let m = T::index(window);
    let ks = || (first..=n).map(T::index);
    let k_mean = ks().sum::<T>() / m;
    let x_mean = x.coords[first - 1..].iter().copied().sum::<T>() / m;
    let mut sxy = T::zero();
    let mut sxx = T::zero();
    let mut lower = T::infinity();
    let mut upper = T::neg_infinity();
    for (k, xk) in ks().zip(&x.coords[first - 1..]) {
        let dk = k - k_mean;
        sxy += dk * (*xk - x_mean);
        sxx += dk * dk;
        let r = *xk / k;
        lower = lower.min(r);
        upper = upper.max(r);
    }
    Ok(SlopeEstimate { slope: sxy / sxx, lower, upper, window })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn state(coords: &[f64], right: f64) -> PolymerState<f64> {
        PolymerState::new(coords.to_vec(), right).unwrap()
    }

    #[test]
    fn ray_is_harmonic() {
        for u in [-1.0f64, 0.5, 2.0, 0.3] {
            let lap = Ray::new(u, 0.0).materialize(50).laplacian();
            assert!(lap.iter().all(|v| f64::abs(*v) < 1e-12), "u = {u}");
        }
    }

    #[test]
    fn laplacian_of_unit_spike() {
        let mut c = vec![0.0; 6];
        c[0] = 1.0;
        assert_eq!(state(&c, 0.0).laplacian(), vec![-2.0, 1.0, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn shifted_ray_is_broken_at_origin() {
        let lap = Ray::new(0.75, 2.5).materialize(10).laplacian();
        assert_eq!(lap[0], -2.5);
        assert!(lap[1..].iter().all(|v| *v == 0.0));
    }

    #[test]
    fn norm_examples() {
        let ray = Ray::new(1.0, 0.0).materialize(30);
        assert_eq!(weighted_norm(ray.coords(), &NormSpec::lipschitz()).unwrap(), 1.0);
        let mut e1 = vec![0.0; 9];
        e1[0] = 1.0;
        assert_eq!(weighted_norm(&e1, &NormSpec::star()).unwrap(), 1.0);
        let ones = NormSpec::new(1.0, Exponent::Finite(1.0)).unwrap();
        assert_abs_diff_eq!(weighted_norm(&[1.0; 4], &ones).unwrap(), 1.0 + 0.5 + 1.0 / 3.0 + 0.25, epsilon = 1e-15);
    }

    #[test]
    fn norm_rejects_bad_parameters() {
        assert!(NormSpec::new(0.0, Exponent::Infinity).is_err());
        assert!(NormSpec::new(1.0, Exponent::Finite(0.5)).is_err());
        let bad = NormSpec { alpha: -1.0, p: Exponent::Finite(2.0) };
        assert!(weighted_norm(&[1.0], &bad).is_err());
        assert!(NormSpec::<f64>::star().is_admissible());
        assert!(!NormSpec::new(0.5, Exponent::Finite(2.0)).unwrap().is_admissible());
    }

    #[test]
    fn order_examples() {
        let x = state(&[0.0, 2.0, 0.0], 0.0);
        let y = state(&[1.0, 1.0, 1.0], 1.0);
        assert!(x.leq(&x, 0.0).unwrap());
        assert!(!x.leq(&y, 0.0).unwrap());
        assert!(Ray::new(0.0, 0.0).materialize(5).leq(&Ray::new(1.0, 0.0).materialize(5), 0.0).unwrap());
        assert!(x.leq(&state(&[1.0], 1.0), 0.0).is_err());
        // boundary participates
        let lo = state(&[0.0, 0.0, 0.0], 2.0);
        assert!(!lo.leq(&y, 0.0).unwrap());
    }

    #[test]
    fn shear_examples() {
        let r = Ray::new(0.4, -1.5).materialize(12);
        let s = r.shear(0.25);
        let expected = Ray::new(0.65, -1.5).materialize(12);
        assert!(s.sup_distance(&expected).unwrap() < 1e-14);
        assert_eq!(r.shear(0.0), r);
    }

    #[test]
    fn slope_of_ray_is_exact() {
        for tail in [0.1, 0.5, 1.0] {
            let est = estimate_slope(&Ray::new(-0.7, 3.0).materialize(100), tail).unwrap();
            assert_abs_diff_eq!(est.slope, -0.7, epsilon = 1e-12);
        }
    }

    #[test]
    fn slope_errors() {
        let x = Ray::new(1.0, 0.0).materialize(10);
        assert!(matches!(estimate_slope(&x, 0.1), Err(Error::DegenerateWindow { points: 1 })));
        assert!(estimate_slope(&x, 0.0).is_err());
        assert!(estimate_slope(&x, 1.5).is_err());
    }

    #[test]
    fn slope_with_bounded_perturbation() {
        let v = 0.3;
        let c = 0.5;
        for n in [200usize, 2000] {
            let x = PolymerState::from_fn(n, |k| v * k as f64 + c * (k as f64 * 1.7).sin()).unwrap();
            let est = estimate_slope(&x, 0.5).unwrap();
            assert!((est.slope - v).abs() <= c * 2.0 / est.window as f64 * 3.0);
            assert!(est.lower <= v + 1e-12 && est.upper >= v - 1e-12);
            assert!(est.width() <= 2.0 * c / (n as f64 / 2.0) + 1e-12);
        }
    }

    #[test]
    fn slope_with_sublinear_growth() {
        // Independent evaluation: closed-form least squares over k in [5000, 10000].
        let (n, v) = (10_000usize, 0.2);
        let x = PolymerState::from_fn(n, |k| v * k as f64 + (k as f64).powf(0.7)).unwrap();
        let est = estimate_slope(&x, 0.5).unwrap();
        let ks: Vec<f64> = (5001..=n).map(|k| k as f64).collect();
        let m = ks.len() as f64;
        let sk: f64 = ks.iter().sum();
        let sk2: f64 = ks.iter().map(|k| k * k).sum();
        let sy: f64 = ks.iter().map(|k| v * k + k.powf(0.7)).sum();
        let sky: f64 = ks.iter().map(|k| k * (v * k + k.powf(0.7))).sum();
        let oracle = (m * sky - sk * sy) / (m * sk2 - sk * sk);
        assert_abs_diff_eq!(est.slope, oracle, epsilon = 1e-6);
        assert!((est.slope - v).abs() < 0.1);
    }

    #[test]
    fn json_checkpoint_shape() {
        let s = state(&[1.0, 2.5], -3.0);
        let text = serde_json::to_string(&s).unwrap();
        assert_eq!(text, r#"{"n":2,"right_boundary":-3.0,"coords":[1.0,2.5]}"#);
        assert_eq!(serde_json::from_str::<PolymerState<f64>>(&text).unwrap(), s);
        assert!(serde_json::from_str::<PolymerState<f64>>(r#"{"n":3,"right_boundary":0,"coords":[1.0]}"#).is_err());
        assert!(serde_json::from_str::<PolymerState<f64>>(r#"{"n":0,"right_boundary":0,"coords":[]}"#).is_err());
    }

    #[test]
    fn generic_over_f32() {
        let x: PolymerState<f32> = Ray::new(0.5f32, 0.0).materialize(8);
        assert!(x.laplacian().iter().all(|v| *v == 0.0));
        assert_eq!(weighted_norm(x.coords(), &NormSpec::lipschitz()).unwrap(), 0.5f32);
    }

    fn arb_state(n: usize) -> impl Strategy<Value = PolymerState<f64>> {
        (prop::collection::vec(-50.0..50.0f64, n), -50.0..50.0f64).prop_map(|(c, r)| PolymerState::new(c, r).unwrap())
    }

    proptest! {
        #[test]
        fn laplacian_is_linear(x in arb_state(12), y in arb_state(12), a in -3.0..3.0f64, b in -3.0..3.0f64) {
            let combo = PolymerState::new(
                x.coords().iter().zip(y.coords()).map(|(p, q)| a * p + b * q).collect(),
                a * x.right_boundary() + b * y.right_boundary(),
            ).unwrap();
            let lhs = combo.laplacian();
            let (lx, ly) = (x.laplacian(), y.laplacian());
            for k in 0..12 {
                prop_assert!((lhs[k] - (a * lx[k] + b * ly[k])).abs() < 1e-11);
            }
        }

        #[test]
        fn shear_commutes_with_laplacian(x in arb_state(15), v in -5.0..5.0f64) {
            let (l0, l1) = (x.laplacian(), x.shear(v).laplacian());
            for k in 0..15 {
                prop_assert!((l0[k] - l1[k]).abs() < 1e-11);
            }
        }

        #[test]
        fn shear_group_inverse(x in arb_state(20), v in -5.0..5.0f64) {
            let back = x.shear(v).shear(-v);
            for k in 1..=20 {
                prop_assert!((back.at(k) - x.at(k)).abs() <= 4.0 * f64::EPSILON * (x.at(k).abs() + k as f64 * v.abs()));
            }
        }

        #[test]
        fn norm_is_a_norm(x in prop::collection::vec(-10.0..10.0f64, 10), y in prop::collection::vec(-10.0..10.0f64, 10),
                          c in -4.0..4.0f64, alpha in 0.3..2.0f64, p in 1.0..4.0f64, inf in any::<bool>()) {
            let spec = NormSpec::new(alpha, if inf { Exponent::Infinity } else { Exponent::Finite(p) }).unwrap();
            let sum: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a + b).collect();
            let scaled: Vec<f64> = x.iter().map(|a| c * a).collect();
            let (nx, ny) = (weighted_norm(&x, &spec).unwrap(), weighted_norm(&y, &spec).unwrap());
            prop_assert!(weighted_norm(&sum, &spec).unwrap() <= nx + ny + 1e-9);
            prop_assert!((weighted_norm(&scaled, &spec).unwrap() - c.abs() * nx).abs() <= 1e-9 * (1.0 + nx));
        }

        #[test]
        fn order_is_partial(x in arb_state(8), d1 in prop::collection::vec(0.0..3.0f64, 9), d2 in prop::collection::vec(0.0..3.0f64, 9)) {
            let bump = |s: &PolymerState<f64>, d: &[f64]| PolymerState::new(
                s.coords().iter().zip(d).map(|(a, b)| a + b).collect(), s.right_boundary() + d[8]).unwrap();
            let y = bump(&x, &d1);
            let z = bump(&y, &d2);
            prop_assert!(x.leq(&x, 0.0).unwrap());
            prop_assert!(x.leq(&y, 0.0).unwrap() && y.leq(&z, 0.0).unwrap() && x.leq(&z, 0.0).unwrap());
            if y.leq(&x, 0.0).unwrap() {
                prop_assert_eq!(&x, &y);
            }
        }

        #[test]
        fn slope_shifts_under_shear(x in arb_state(40), v in -3.0..3.0f64) {
            let a = estimate_slope(&x, 0.5).unwrap();
            let b = estimate_slope(&x.shear(v), 0.5).unwrap();
            prop_assert!((b.slope - a.slope - v).abs() < 1e-9);
            prop_assert!((b.lower - a.lower - v).abs() < 1e-9);
        }
    }
}
