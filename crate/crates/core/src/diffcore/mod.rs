//! Dense numeric core: matrices, forward ops with analytic backward passes,
//! a parameter registry with freeze masks, Adam and a finite-difference checker.

mod adam;
mod gradcheck;
mod matrix;
pub mod ops;
mod param;

pub use adam::{adam_step, Adam, AdamConfig, AdamState};
pub use gradcheck::{gradient_check, relative_error, GradCheckReport, ParamCheck};
pub use matrix::Matrix;
pub use param::{ParamId, ParamStore, Parameter};
