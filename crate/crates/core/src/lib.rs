//! Desk-scale laboratory for incompressible flow in a channel whose upper
//! wall is an elastic, clamped plate.
//!
//! The crate has three layers:
//!
//! * discrete fields and operators on a staggered reference rectangle
//!   ([`grid`]), plus the graph-map machinery that carries them onto a
//!   moving domain `0 <= y <= eta(t, x)` ([`geometry`], [`transforms`],
//!   [`mollify`]);
//! * time steppers for the plate ([`plate`]), the fluid ([`fluid`]) and the
//!   strongly coupled system ([`coupling`]);
//! * a verification bench: distance functionals between solution pairs,
//!   Gronwall-type envelope fits and operator self-checks ([`stability`],
//!   [`verify`]), driven from configs ([`config`], [`runner`], [`store`]).
//!
//! Everything is deterministic: no threading inside a solve, no
//! iteration-order-dependent containers in numeric paths, seeded generators
//! for manufactured data. Two runs from the same config produce bitwise
//! identical trajectories.

pub mod config;
pub mod coupling;
pub mod error;
pub mod fluid;
pub mod geometry;
pub mod grid;
pub mod linsolve;
pub mod mollify;
pub mod plate;
pub mod runner;
pub mod stability;
pub mod store;
pub mod transforms;
pub mod verify;

pub use coupling::{CoupledState, CoupledStepReport, Coupler, CouplingParams, EnergyBreakdown};
pub use error::{Error, Result};
pub use fluid::{FluidParams, FluidState, StressForm};
pub use grid::{GridSpec, PlateField, ScalarField, VectorField};
pub use plate::{PlateParams, PlateState, PlateStepper};
