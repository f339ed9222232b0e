//! Jones β₂ numbers, the discrete Reifenberg predicate, and the
//! ball-covering construction with energy-drop certificates.

mod covering;
mod measure;

pub use covering::*;
pub use measure::*;
