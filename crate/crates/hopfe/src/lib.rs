//! Knowledge-graph embedding on the Hopf fibration.
//!
//! Entities are points on S^2 (one per embedding dimension) lifted to fibers
//! on S^3; relations act as rotations plus fiber phase shifts. The crate
//! covers the model, reverse-mode gradients, self-adversarial training,
//! filtered link-prediction evaluation, and rotation-angle analysis.

pub mod cli;
pub mod data;
pub mod error;
pub mod eval;
pub mod hopf;
pub mod model;
pub mod quat;
pub mod real;
pub mod tape;
pub mod training;
pub mod transport;

pub use error::{HopfeError, Result};
