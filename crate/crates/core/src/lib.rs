//! Optimization on flag manifolds: nested subspace objectives, a generic
//! steepest-descent solver, and specialized fixed-point / Newton solvers.

pub mod datagen;
pub mod descent;
pub mod ensemble;
pub mod error;
pub mod experiment;
pub mod flag_manifold;
pub mod numerics;
pub mod objectives;
pub mod solvers;

pub use descent::{steepest_descent, DescentConfig, Objective, OptTrace, Termination};
pub use error::{Error, Result};
pub use flag_manifold::{FlagPoint, FlagSignature};
pub use objectives::Dataset;
