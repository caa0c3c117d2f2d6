//! Multi-step solvers for backward stochastic differential equations.
//!
//! Two fully discrete schemes are provided:
//!
//! * a baseline `k`-step scheme on a uniform spatial grid, with `L`-point
//!   Gauss–Hermite conditional expectations and degree-`r` Lagrange
//!   interpolation at off-grid quadrature points;
//! * an interpolation-free third-order scheme that samples the time layers at
//!   offsets `0, h, 4h, 9h`, uses the 3-point Gauss–Hermite rule and a nested
//!   spatial grid with spacing `sqrt(3h)`, so that every quadrature point is a
//!   grid node of a later layer.
//!
//! The supporting pieces (quadrature rules, exact-rational derivative stencils
//! and their root-condition analysis, grids, benchmark problems and the
//! convergence harness) are exposed as separate modules.

pub mod error;
pub mod grid;
pub mod harness;
pub mod problems;
pub mod quadrature;
pub mod solver;
pub mod stencil;

pub use error::{Error, Result};
pub use grid::{NestedGrid, UniformGrid};
pub use problems::BsdeProblem;
pub use quadrature::QuadratureRule;
pub use solver::{solve, Scheme, SolveOutput, SolverConfig};
pub use stencil::{Layout, RootReport, Stencil};
