//! Grids, sampled vector fields with exterior data, sphere targets,
//! rescaling, finite-difference gradients, and the analytic vortex.

mod exterior;
mod field;
mod grid;
pub mod io;

pub use exterior::{AnalyticKind, AnalyticMap, Exterior, FarField};
pub use field::{
    analytic_vortex, gradient, gradient_norms, gradient_transpose, project_to_sphere, rescale_field, SphereTarget,
    VectorField,
};
pub(crate) use field::{gradient_of, strides};
pub use grid::{Ball, GridSpec};
