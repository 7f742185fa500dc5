//! Numerical toolkit for shadow boundaries of convex bodies.

pub mod bodies;
pub mod cli;
pub mod counterexamples;
pub mod error;
pub mod frame;
pub mod illumination;
pub mod projection;
pub mod regularity;
pub mod roots;

pub use error::{Error, Result};
