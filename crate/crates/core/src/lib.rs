//! Relaxed inexact proximal Gauss–Newton (RIPGN) for nonsmooth regularized
//! nonlinear least squares
//!
//! ```text
//! min_x  J(x) = ½‖A(x)‖² + F(x)
//! ```
//!
//! together with everything needed to run it on 2D electrical impedance
//! tomography: disc meshes with boundary electrodes, a complete-electrode
//! forward model with an adjoint Jacobian, total-variation and smoothness
//! regularizers, closed-form proximal maps, and a two-block primal–dual
//! inner solver with balanced step lengths.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, the
//! experiment harness and the command line live in the `ripgn` crate.
//!
//! Module map:
//! - [`geometry`]: mesh generation and P1 element geometry.
//! - [`forward`]: complete electrode model, currents, Jacobian, misfit.
//! - [`regularizers`]: TV, smoothed TV, Gaussian smoothness prior, barriers.
//! - [`prox`]: proximal maps of the primal term and the dual conjugates.
//! - [`pdps`]: two-block primal–dual splitting and its nonlinear variant.
//! - [`ripgn`]: the outer loop, stopping rules and the Newton baseline.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

// `num_traits::Float` imports are marked `allow(unused_imports)`: whenever
// std is anywhere in the build graph its inherent float methods win.

mod error;
pub mod forward;
pub mod geometry;
pub mod linalg;
pub mod operator;
pub mod pdps;
pub mod prox;
pub mod regularizers;
pub mod ripgn;

pub use error::Error;

pub type Result<T, E = Error> = core::result::Result<T, E>;
