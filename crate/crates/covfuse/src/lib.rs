//! Conservative covariance fusion and distributed estimation.
//!
//! The crate has two halves. The fusion half implements conservative fusion
//! rules for estimates with partially known cross-correlations: Covariance
//! Intersection (CI), Split CI (SCI), and Extended SCI (ESCI), which also
//! exploits correlated error components such as a shared process noise. The
//! simulation half runs those rules inside a synchronous-round distributed
//! filter over an agent network, and provides a Monte-Carlo harness that
//! reproduces the bound/MSE behaviour of a pseudo-range localization
//! scenario observed by a small satellite network.

// Index loops mirror the matrix subscripts throughout.
#![allow(clippy::needless_range_loop)]

pub mod dfilter;
pub mod fusion;
pub mod matlib;
pub mod netsim;
pub mod omega;
pub mod scenario;

pub use matlib::{psd_margin, sym_eigen, BlockMatrix, MatError, Matrix, SpdMatrix};
