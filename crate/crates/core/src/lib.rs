//! Tracking control of the TORA benchmark by additive state decomposition.
//!
//! The compensated plant is split into an LTI primary system that carries the
//! reference and the sinusoidal disturbance, handled by an internal-model
//! controller, and a nonlinear secondary system with a zero equilibrium,
//! handled by a backstepping stabilizer. A disturbance observer supplies the
//! matched compensation and a decomposition observer recovers both states.
//!
//! All numerical code is generic over [`Real`] (`f32` or `f64`); the
//! aliases at the crate root pin the common `f64` instantiations.

#![allow(
    clippy::needless_range_loop,
    clippy::neg_cmp_op_on_partial_ord,
    clippy::too_many_arguments
)]

pub mod control;
pub mod decomposition;
pub mod error;
pub mod estimators;
pub mod numerics;
pub mod plant;
mod scalar;
pub mod simulation;

pub use error::{Error, Result};
pub use scalar::{Real, Vec4};

pub type Matrix = numerics::Matrix<f64>;
pub type ExoSystem = plant::ExoSystem<f64>;
pub type PlantParams = plant::PlantParams<f64>;
pub type SystemMatrices = decomposition::SystemMatrices<f64>;
pub type PrimaryGains = control::PrimaryGains<f64>;
pub type CompositeController = control::CompositeController<f64>;
pub type ScenarioConfig = simulation::ScenarioConfig<f64>;
pub type Trajectory = simulation::Trajectory<f64>;

pub type Matrix32 = numerics::Matrix<f32>;
pub type ExoSystem32 = plant::ExoSystem<f32>;
pub type SystemMatrices32 = decomposition::SystemMatrices<f32>;
pub type ScenarioConfig32 = simulation::ScenarioConfig<f32>;
