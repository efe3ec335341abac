//! Langevin dynamics of a pinned directed polymer in a random potential,
//! truncated to `n` free coordinates.
//!
//! The generic types are parameterised by the scalar (`f32` or `f64`); the
//! aliases at the crate root fix `f64`, which is what the experiments use.

pub mod dynamics;
pub mod error;
pub mod gibbs;
pub mod io;
pub mod keyed;
pub mod noise;
pub mod polymer;
pub mod potential;
pub mod scalar;
pub mod stats;

pub use dynamics::{evolve, heat_flow, pullback_evolve, Scheme, Stepper};
pub use error::{Error, Result};
pub use gibbs::{energy, grid_oracle, mala_sample, GaussianBridge, GibbsSpec, MalaParams};
pub use noise::{grid_steps, NoisePath, NoiseSpec, SteerWindow};
pub use polymer::{estimate_slope, weighted_norm, Exponent, ORDER_EPS};
pub use potential::{drift, PotentialField, PotentialSpec};
pub use scalar::Scalar;

pub type State = polymer::PolymerState<f64>;
pub type Ray = polymer::Ray<f64>;
pub type NormSpec = polymer::NormSpec<f64>;
pub type SlopeEstimate = polymer::SlopeEstimate<f64>;
pub type SdeConfig = dynamics::SdeConfig<f64>;
pub type Trajectory = dynamics::Trajectory<f64>;
