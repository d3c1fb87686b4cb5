//! Numerical laboratory for horospherical projections, coarse dimension and
//! orbit growth in hyperbolic manifolds.

pub mod bianchi_model;
pub mod equidist_lab;
pub mod error;
pub mod fractal;
pub mod gmt_dimension;
pub mod hexfloat;
pub mod linalg;
pub mod polynomial_bounds;
pub mod projection_lab;
pub mod quadrature;
pub mod rng;
pub mod so_kernel;
pub mod synthetic;
pub mod stats;

pub use error::{HoroError, Result};
