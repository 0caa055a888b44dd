//! Multi-bubble blow-up configurations for `Δu + h u = |u|^{2*-2} u` on flat
//! tori: Euclidean profiles, bubble-tree combinatorics, the projected linear
//! theory, the nonlinear reduction and quadrature checks of the integral
//! estimates that drive the pointwise theory.

pub mod ansatz;
pub mod bubble_tree;
pub mod error;
pub mod estimate_verifier;
pub mod euclidean_bubble;
pub mod fixed_point;
pub mod linear_solver;
pub mod manifold;

mod krylov;
mod quadrature;

pub use error::{Error, Result};
