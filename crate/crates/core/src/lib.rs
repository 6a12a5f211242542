//! Numerical laboratory for Brownian loops on model compact Riemannian
//! manifolds: pinned Brownian motion, stochastic parallel transport,
//! divergence functionals, Driver's flow and Monte Carlo verification of the
//! associated integration-by-parts and quasi-invariance identities.

pub mod bridge;
pub mod config;
pub mod error;
pub mod experiments;
pub mod flow;
pub mod functionals;
pub mod heatkernel;
pub mod manifold;
pub mod mc;
pub mod quadrature;
pub mod transport;

pub use error::{Error, Result};
