//! Numerics for half-harmonic maps into spheres: nonlocal energies, harmonic
//! extensions and their density functions, quantitative symmetry and strata,
//! Jones β₂ numbers, and Reifenberg-type ball coverings.
//!
//! Everything is generic over the scalar type via [`Real`]; the `*64`
//! aliases below are the double-precision instantiations used by the CLI.

// `!(x > 0)` is how argument checks reject NaN along with nonpositive values,
// and index loops read better than zips when several arrays share an index.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod energy;
pub mod error;
pub mod extension;
pub mod fields;
pub mod linalg;
pub mod quadrature;
pub mod reifenberg;
pub mod scalar;
pub mod symmetry;

pub use error::{Error, Result};
pub use scalar::Real;

pub type GridSpec64 = fields::GridSpec<f64>;
pub type VectorField64 = fields::VectorField<f64>;
pub type GridSpec32 = fields::GridSpec<f32>;
pub type VectorField32 = fields::VectorField<f32>;
