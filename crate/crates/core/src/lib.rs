//! Dynamic deviation measures on finite filtered probability spaces.
//!
//! A [`lattice::Lattice`] discretizes a Brownian plus finite-mark jump
//! filtration. Payoffs are represented by their predictable integrands
//! ([`repr`]), a convex driver turns the integrands into a deviation process
//! ([`deviation`]), and two drivers combine by inf-convolution into the
//! optimal risk split between two agents ([`sharing`]).

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod deviation;
pub mod drivers;
pub mod error;
pub mod io;
pub mod lattice;
mod linalg;
pub mod optim;
pub mod repr;
pub mod sharing;

pub use deviation::{evaluate, evaluate_recursive, DeviationProcess};
pub use drivers::DriverSpec;
pub use error::{Error, Result};
pub use lattice::{Filtration, JumpMeasure, Lattice, NoiseModel, RandomVariable, TimeGrid};
pub use optim::SolverConfig;
pub use repr::{represent, RepresentingPair};
pub use sharing::{solve_sharing, SharingProblem, SharingSolution};
