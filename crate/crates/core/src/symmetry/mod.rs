//! Boundary symmetry of extensions, quantitative strata, regularity scales,
//! and the volume estimators behind the tube and superlevel laws.

mod fit;
mod scales;
mod strata;

pub use fit::{approximant_field, symmetrize, symmetry_defect, SymmetryFit, SymmetryOptions};
pub use scales::{
    effective_span, gradient_superlevel_volume, regularity_scale, regularity_scales, singular_candidates,
    small_scale_volume, tube_volume, EffectiveSpan,
};
pub use strata::{dyadic_schedule, quantitative_stratum, Stratum, StratumNode, StratumOptions};
