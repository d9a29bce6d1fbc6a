//! Exact and Monte Carlo machinery for winding of uniform spanning tree
//! branches in an annulus, together with the continuum objects they
//! converge to (sech-series determinants, COE hitting laws, Dyson Brownian
//! motion and radial Loewner chains).
//!
//! Modules are layered bottom-up: [`lattice`] builds the discrete domain and
//! its zipper, [`harmonic`] solves the gauged linear systems, [`wilson`] and
//! [`loopsoup`] sample, while [`continuum`] and [`sde`] hold the limiting
//! objects.

// `!(x > 0.0)` guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod continuum;
pub mod error;
pub mod harmonic;
pub mod lattice;
pub mod linalg;
pub mod loopsoup;
pub mod rng;
pub mod sde;
pub mod stats;
pub mod wilson;

pub use error::{Error, Result};
pub use lattice::{AnnularLattice, LatticePath, Site, Zipper};
pub use num_complex::Complex64;
