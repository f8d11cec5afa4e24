//! Dirichlet boundary control of Stokes flow on polygonal domains.
//!
//! The crate discretizes the Stokes equations with inf-sup stable pairs
//! (Mini, Taylor–Hood P2–P1 and P3–P2) on nested structured meshes and
//! solves the optimal control problem in which the boundary velocity is the
//! control, regularized either in the energy (H^1/2) seminorm realized by the
//! discrete Steklov–Poincaré operator or in L²(Γ).

pub mod analysis;
pub mod assembly;
pub mod control;
pub mod error;
pub mod experiment;
pub mod fem;
pub mod mesh;
pub mod optimizer;
pub mod sparse;
pub mod stokes;

pub use error::{Error, Result};
