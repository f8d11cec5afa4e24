//! Element families, quadrature and DOF layout.

pub mod basis;
pub mod quadrature;
pub mod space;

pub use basis::{eval_basis, ElementFamily, ElementKind};
pub use quadrature::Quadrature;
pub use space::{build_space, FeSpace, NodeEntity};
