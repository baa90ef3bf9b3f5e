//! Numerical workbench for the Poincaré-Sobolev problem on the hyperbolic
//! ball: ground states and best constants, the spectrum of the linearised
//! operator, stability diagnostics, fast-diffusion flows, the Euclidean
//! comparison and the Hardy-Sobolev-Maz'ya lifting.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod euclidean;
pub mod extremal;
pub mod fit;
pub mod flow;
pub mod geometry;
pub mod grid;
pub mod hsm;
pub mod io;
pub mod ode;
pub mod params;
pub mod quadrature;
pub mod spectral;
pub mod stability;
pub mod tridiag;

pub use error::{Error, Result};
pub use grid::{AxisField, AxisGrid, Profile, RadialGrid, Tail};
pub use params::{Branch, ModelParams};
