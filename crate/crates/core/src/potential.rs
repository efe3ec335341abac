//! Seeded random environments `F = (F_k)_{k >= 1}`.
//!
//! Rows are independent, stationary in `r`, and twice continuously
//! differentiable. Every evaluation is a pure function of `(seed, k, r)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::keyed::{self, domain, KeyedStream};
use crate::polymer::{laplacian_into, PolymerState};
use crate::scalar::Scalar;

/// Upper bound on Poisson points generated in one unit cell.
pub const MAX_POINTS_PER_CELL: usize = 64;

/// Run-config description of a potential.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PotentialSpec {
    Zero,
    /// `F_k(r) = amplitude · Σ_i φ((r - p_i)/width)` over Poisson points `p_i`
    /// of intensity `lambda`, with the bump `φ(u) = (1 - u²)³` on `|u| <= 1`.
    ShotNoise {
        seed: u64,
        amplitude: f64,
        lambda: f64,
        width: f64,
    },
    /// `F_k(r) = amplitude · Σ_j a_j (A_kj cos(ω_j r) + B_kj sin(ω_j r))`
    /// with i.i.d. standard normal `A, B`.
    RandomTrig {
        seed: u64,
        amplitude: f64,
        frequencies: Vec<f64>,
        weights: Vec<f64>,
    },
}

impl Default for PotentialSpec {
    fn default() -> Self {
        PotentialSpec::ShotNoise { seed: 1, amplitude: 1.0, lambda: 1.0, width: 1.0 }
    }
}

impl PotentialSpec {
    pub fn kind_name(&self) -> &'static str {
        match self {
            PotentialSpec::Zero => "zero",
            PotentialSpec::ShotNoise { .. } => "shot_noise",
            PotentialSpec::RandomTrig { .. } => "random_trig",
        }
    }

    pub fn seed(&self) -> u64 {
        match self {
            PotentialSpec::Zero => 0,
            PotentialSpec::ShotNoise { seed, .. } | PotentialSpec::RandomTrig { seed, .. } => *seed,
        }
    }

    /// Same environment law with a different seed.
    pub fn with_seed(&self, new_seed: u64) -> Self {
        let mut out = self.clone();
        match &mut out {
            PotentialSpec::Zero => {}
            PotentialSpec::ShotNoise { seed, .. } | PotentialSpec::RandomTrig { seed, .. } => *seed = new_seed,
        }
        out
    }
}

/// `(F_k(r), F'_k(r), F''_k(r))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PotentialValue<T> {
    pub value: T,
    pub first: T,
    pub second: T,
}

impl<T: Scalar> PotentialValue<T> {
    fn zero() -> Self {
        Self { value: T::zero(), first: T::zero(), second: T::zero() }
    }
}

/// A validated, evaluable potential, optionally sheared.
#[derive(Debug, Clone, PartialEq)]
pub struct PotentialField {
    spec: PotentialSpec,
    /// Accumulated shear `v`: evaluation at `(k, r)` reads the base field at `r - k·v`.
    shear: f64,
    /// `e^{-λ}` for the Poisson inverse-CDF draw.
    poisson_base: f64,
}

impl PotentialField {
    pub fn new(spec: PotentialSpec) -> Result<Self> {
        let poisson_base = match &spec {
            PotentialSpec::Zero => 1.0,
            PotentialSpec::ShotNoise { amplitude, lambda, width, .. } => {
                check(*amplitude >= 0.0 && amplitude.is_finite(), "amplitude must be finite and >= 0")?;
                check(*lambda > 0.0 && *lambda <= 32.0, "lambda must lie in (0, 32]")?;
                check(*width > 0.0 && width.is_finite(), "width must be positive")?;
                (-lambda).exp()
            }
            PotentialSpec::RandomTrig { amplitude, frequencies, weights, .. } => {
                check(*amplitude >= 0.0 && amplitude.is_finite(), "amplitude must be finite and >= 0")?;
                check(!frequencies.is_empty(), "random_trig needs at least one mode")?;
                check(frequencies.len() == weights.len(), "frequencies and weights must have equal length")?;
                check(frequencies.iter().chain(weights).all(|x| x.is_finite()), "modes must be finite")?;
                1.0
            }
        };
        Ok(Self { spec, shear: 0.0, poisson_base })
    }

    pub fn zero() -> Self {
        Self::new(PotentialSpec::Zero).expect("zero potential is valid")
    }

    pub fn spec(&self) -> &PotentialSpec {
        &self.spec
    }

    pub fn shear_velocity(&self) -> f64 {
        self.shear
    }

    pub fn is_zero(&self) -> bool {
        match &self.spec {
            PotentialSpec::Zero => true,
            PotentialSpec::ShotNoise { amplitude, .. } | PotentialSpec::RandomTrig { amplitude, .. } => *amplitude == 0.0,
        }
    }

    /// `(Ξ^v F)_k(r) = F_k(r - k·v)`; shears compose additively.
    pub fn sheared(&self, v: f64) -> Self {
        let mut out = self.clone();
        out.shear += v;
        out
    }

    #[inline]
    fn base_point<T: Scalar>(&self, k: usize, r: T) -> T {
        if self.shear == 0.0 {
            r
        } else {
            r - T::index(k) * T::lit(self.shear)
        }
    }

    /// Value and analytic first and second derivatives of `F_k` at `r`.
    pub fn evaluate<T: Scalar>(&self, k: usize, r: T) -> Result<PotentialValue<T>> {
        if k == 0 {
            return Err(Error::PinnedIndex);
        }
        let r = self.base_point(k, r);
        Ok(match &self.spec {
            PotentialSpec::Zero => PotentialValue::zero(),
            PotentialSpec::ShotNoise { seed, amplitude, width, .. } => {
                let mut acc = PotentialValue::zero();
                let w = T::lit(*width);
                self.for_each_point(*seed, k, r.as_f64(), *width, |p| {
                    let u = (r - T::lit(p)) / w;
                    let one_m = T::one() - u * u;
                    if one_m > T::zero() {
                        acc.value += one_m * one_m * one_m;
                        acc.first += T::lit(-6.0) * u * one_m * one_m / w;
                        acc.second += one_m * (T::lit(30.0) * u * u - T::lit(6.0)) / (w * w);
                    }
                });
                let a = T::lit(*amplitude);
                PotentialValue { value: a * acc.value, first: a * acc.first, second: a * acc.second }
            }
            PotentialSpec::RandomTrig { seed, amplitude, frequencies, weights } => {
                let mut acc = PotentialValue::zero();
                for (j, (omega, weight)) in frequencies.iter().zip(weights).enumerate() {
                    let (ca, cb) = trig_coefficients(*seed, k, j);
                    let om = T::lit(*omega);
                    let (s, c) = (om * r).sin_cos();
                    let (ca, cb, wt) = (T::lit(ca), T::lit(cb), T::lit(*weight));
                    acc.value += wt * (ca * c + cb * s);
                    acc.first += wt * om * (cb * c - ca * s);
                    acc.second -= wt * om * om * (ca * c + cb * s);
                }
                let a = T::lit(*amplitude);
                PotentialValue { value: a * acc.value, first: a * acc.first, second: a * acc.second }
            }
        })
    }

    /// `F'_k(r)` only; the hot path of the integrator.
    #[inline]
    pub fn derivative<T: Scalar>(&self, k: usize, r: T) -> Result<T> {
        match &self.spec {
            PotentialSpec::Zero => {
                if k == 0 {
                    Err(Error::PinnedIndex)
                } else {
                    Ok(T::zero())
                }
            }
            PotentialSpec::ShotNoise { seed, amplitude, width, .. } => {
                if k == 0 {
                    return Err(Error::PinnedIndex);
                }
                let r = self.base_point(k, r);
                let w = T::lit(*width);
                let mut acc = T::zero();
                self.for_each_point(*seed, k, r.as_f64(), *width, |p| {
                    let u = (r - T::lit(p)) / w;
                    let one_m = T::one() - u * u;
                    if one_m > T::zero() {
                        acc += T::lit(-6.0) * u * one_m * one_m / w;
                    }
                });
                Ok(T::lit(*amplitude) * acc)
            }
            PotentialSpec::RandomTrig { .. } => self.evaluate(k, r).map(|v| v.first),
        }
    }

    /// `f_k(r) = -F'_k(r)`.
    #[inline]
    pub fn force<T: Scalar>(&self, k: usize, r: T) -> Result<T> {
        self.derivative(k, r).map(|d| -d)
    }

    /// Calls `visit` with every Poisson point of row `k` within `width` of `r`.
    fn for_each_point(&self, seed: u64, k: usize, r: f64, width: f64, mut visit: impl FnMut(f64)) {
        let lo = (r - width).floor() as i64;
        let hi = (r + width).floor() as i64;
        for cell in lo..=hi {
            let mut stream = KeyedStream::new(seed, domain::SHOT_COUNT, k as u64, cell as u64);
            let count = self.poisson_count(stream.uniform(), k, cell);
            for _ in 0..count {
                let p = cell as f64 + stream.uniform();
                if (r - p).abs() < width {
                    visit(p);
                }
            }
        }
    }

    fn poisson_count(&self, u: f64, k: usize, cell: i64) -> usize {
        let lambda = match self.spec {
            PotentialSpec::ShotNoise { lambda, .. } => lambda,
            _ => return 0,
        };
        let mut p = self.poisson_base;
        let mut cdf = p;
        let mut count = 0;
        while u > cdf {
            if count == MAX_POINTS_PER_CELL {
                log::warn!("poisson cell overflow at row {k}, cell {cell}: capped at {MAX_POINTS_PER_CELL} points");
                break;
            }
            count += 1;
            p *= lambda / count as f64;
            cdf += p;
        }
        count
    }

    /// Heuristic bound on `sup |f'_k|` used by the explicit step-size check.
    pub fn lipschitz_hint(&self) -> f64 {
        match &self.spec {
            PotentialSpec::Zero => 0.0,
            PotentialSpec::ShotNoise { amplitude, lambda, width, .. } => {
                let mean = 2.0 * lambda * width;
                let typical_max = mean + 4.0 * mean.sqrt() + 2.0;
                amplitude * 6.0 / (width * width) * typical_max
            }
            PotentialSpec::RandomTrig { amplitude, frequencies, weights, .. } => {
                // |A|, |B| below 4 with overwhelming probability
                amplitude * frequencies.iter().zip(weights).map(|(o, w)| 8.0 * w.abs() * o * o).sum::<f64>()
            }
        }
    }

    /// Scan resolution adequate to resolve features of the field.
    fn scan_step(&self) -> f64 {
        match &self.spec {
            PotentialSpec::Zero => 1.0,
            PotentialSpec::ShotNoise { width, .. } => width / 16.0,
            PotentialSpec::RandomTrig { frequencies, .. } => {
                let w_max = frequencies.iter().fold(0.0f64, |m, w| m.max(w.abs())).max(1e-3);
                std::f64::consts::TAU / w_max / 32.0
            }
        }
    }

    /// Searches centres `a >= start` for a window `[a - half_len, a + half_len]`
    /// on which `|f_k| <= delta` for every `k <= rows`. Scans at most `max_span`
    /// units of `r`. For shot noise such windows occur with positive
    /// probability per window, at a rate decaying like `e^{-2λ(l + w)·rows}`.
    pub fn find_flat_window(&self, rows: usize, half_len: f64, delta: f64, start: f64, max_span: f64) -> Option<f64> {
        let step = self.scan_step();
        let stride = (half_len / 2.0).max(step);
        let mut a = start;
        while a - start <= max_span {
            let flat = (1..=rows).all(|k| {
                let mut r = a - half_len;
                while r <= a + half_len {
                    if self.force(k, r).map_or(true, |f: f64| f.abs() > delta) {
                        return false;
                    }
                    r += step;
                }
                true
            });
            if flat {
                return Some(a);
            }
            a += stride;
        }
        None
    }
}

fn check(ok: bool, msg: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidConfig(msg.to_string()))
    }
}

fn trig_coefficients(seed: u64, k: usize, j: usize) -> (f64, f64) {
    (keyed::normal(seed, domain::TRIG_COEF, k as u64, j as u64, 0), keyed::normal(seed, domain::TRIG_COEF, k as u64, j as u64, 1))
}

/// Writes `Δ_k x + f_k(x_k) = -∂E/∂x_k` for `k = 1..=n` into `out`.
pub fn drift_into<T: Scalar>(field: &PotentialField, coords: &[T], right: T, out: &mut [T]) -> Result<()> {
    laplacian_into(coords, right, out);
    if !field.is_zero() {
        for (i, (o, x)) in out.iter_mut().zip(coords).enumerate() {
            *o += field.force(i + 1, *x)?;
        }
    }
    Ok(())
}

/// `drift_k = Δ_k x - F'_k(x_k)`.
pub fn drift<T: Scalar>(field: &PotentialField, x: &PolymerState<T>) -> Result<Vec<T>> {
    let mut out = vec![T::zero(); x.n()];
    drift_into(field, x.coords(), x.right_boundary(), &mut out)?;
    Ok(out)
}

/// Advisory fit of `sup_{|r| <= r_window} |f_k(r)|` against `C (1 + ln k + ln₊ r_window)`.
#[derive(Debug, Clone, Serialize)]
pub struct GrowthReport {
    pub sups: Vec<f64>,
    /// Least-squares `C` through the origin.
    pub fitted_c: f64,
    /// Smallest `C` for which the bound holds on every scanned row.
    pub envelope_c: f64,
    pub worst_row: usize,
    pub worst_excess: f64,
}

pub fn validate_growth(field: &PotentialField, k_max: usize, r_window: f64) -> GrowthReport {
    let step = field.scan_step();
    let sups: Vec<f64> = (1..=k_max)
        .map(|k| {
            let mut sup = 0.0f64;
            let mut r = -r_window;
            while r <= r_window {
                sup = sup.max(field.force(k, r).unwrap_or(0.0).abs());
                r += step;
            }
            sup
        })
        .collect();
    let envelope = |k: usize| 1.0 + (k as f64).ln() + r_window.ln().max(0.0);
    let (num, den) = sups.iter().enumerate().fold((0.0, 0.0), |(a, b), (i, s)| (a + s * envelope(i + 1), b + envelope(i + 1).powi(2)));
    let fitted_c = if den > 0.0 { num / den } else { 0.0 };
    let envelope_c = sups.iter().enumerate().fold(0.0f64, |m, (i, s)| m.max(s / envelope(i + 1)));
    let (worst_row, worst_excess) = sups
        .iter()
        .enumerate()
        .map(|(i, s)| (i + 1, s - fitted_c * envelope(i + 1)))
        .fold((0, f64::NEG_INFINITY), |best, cur| if cur.1 > best.1 { cur } else { best });
    GrowthReport { sups, fitted_c, envelope_c, worst_row, worst_excess }
}
