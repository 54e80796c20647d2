//! Dimension-free convex analysis: consistent sequences of group
//! representations, free conic descriptions of sequences of convex sets,
//! compatibility certificates, fitting descriptions to data, and
//! constant-size symmetry reduction of invariant conic programs.

pub mod descriptions;
pub mod equivariant;
pub mod fixtures;
pub mod error;
pub mod groups;
pub mod reduction;
pub mod regression;
pub mod seq;
pub mod solver;
pub mod sparse;

pub use error::{Error, Result};
