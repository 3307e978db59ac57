//! Stochastic geometry on Euclidean boxes, the hyperbolic plane and its
//! ideal boundary: Poisson sampling, thinnings, Palm/Mecke harnesses,
//! generalized Voronoi tessellations and the ideal Poisson Voronoi
//! tessellation of the Poincaré disk.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod hyperbolic;
pub mod ipvt;
pub mod measure;
pub mod process;
pub mod report;
pub mod seed;
pub mod stats;
pub mod tessellation;

pub use error::{GeomError, Result};
