//! Simulation and verification laboratory for iterated function systems of
//! affine expanding and contracting maps on the unit interval.
//!
//! One expanding map `x -> N x (mod 1)` and `M` contractions
//! `x -> (x + i - 1)/M` are composed in random order; the crate iterates one-
//! and many-point motions, checks the exact stationarity of Lebesgue measure,
//! solves the analytic stationary measures of the two-point motion for
//! multiplicatively dependent `(M, N)`, runs the stopping-time machinery for
//! the zero-drift regime, and reproduces the synchronization / intermittency
//! / divergence trichotomy as seeded Monte Carlo experiments.

pub mod error;
pub mod experiments;
pub mod multivalued;
pub mod report;
pub mod rng;
pub mod skew;
pub mod stationary;
pub mod system;
pub mod verify;
pub mod walks;

pub use error::{Error, Result};
pub use system::SystemParams;
