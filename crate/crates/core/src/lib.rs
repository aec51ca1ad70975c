//! Numerical toolkit for dissipative measure-valued solutions of the
//! compressible Navier-Stokes system with potential temperature transport.
//!
//! The core is generic over the floating-point type; `f64` aliases are
//! provided at the crate root.

pub mod field;
pub mod mvmeasure;
pub mod relenergy;
pub mod scalar;
pub mod solver;
pub mod thermo;

pub use scalar::{sym_eigenvalues, Mat2, Scalar, Vec2};

pub type Grid = field::Grid2D<f64>;
pub type State = field::ConservedState<f64>;
pub type Params = thermo::FluidParams<f64>;
