//! Simulation and analysis toolkit for the smoothed, path-dependent particle
//! system attached to the two-dimensional parabolic-parabolic Keller-Segel
//! equation.
//!
//! The crate is organised bottom-up:
//!
//! * [`kernels`]: heat kernel, chemo-attractant kernel and its gradient, the
//!   smoothed interaction kernel, the envelope bound and the background field
//!   generated by the initial concentration.
//! * [`constants`]: the structural constants, the admissibility test and the
//!   sensitivity threshold optimiser.
//! * [`funineq`]: exact verification of the weighted functional inequality
//!   and its extremal profile.
//! * [`simulator`]: Euler-Maruyama integration of the particle system with a
//!   discrete history convolution for the drift.
//! * [`estimators`]: Monte Carlo functionals, domination checks and Ito /
//!   martingale residual diagnostics.

pub mod constants;
pub mod error;
pub mod estimators;
pub mod funineq;
pub mod geom;
pub mod kernels;
pub mod quadrature;
pub mod scalar;
pub mod simulator;

pub use error::{Error, Result};
pub use geom::Vec2;
pub use kernels::{KernelParams, SourceSpec};
