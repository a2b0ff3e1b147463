//! Numerical toolkit for families of vector fields satisfying a finite rank
//! condition: commutator frames, rescaled (Riemannian-approximation) families,
//! control distances and ball volumes on lattices, discrete Poincare/Sobolev
//! ratios, a degenerate parabolic finite-difference solver, and harnesses that
//! measure Harnack quotients and maximum-principle margins across the
//! rescaling parameter.

pub mod error;
pub mod expr;
pub mod frames;
pub mod functional;
pub mod grid;
pub mod harnack;
pub mod io;
pub mod lin;
pub mod metric;
pub mod pde;
pub mod poly;

pub use error::{Error, Result};
