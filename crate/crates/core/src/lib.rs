//! Optimal control of the Poisson equation under a total-variation ball
//! constraint `TV(u) <= 1`.
//!
//! The TV-seminorm is replaced by its dual-regularized counterpart
//! `TV_eps(u) = max { -(eps/2) a[phi, phi] + (u, div phi) : |phi| <= 1 }`
//! with an elasticity-type bilinear form `a`. The regularized problem is
//! solved by an outer-approximation (cutting-plane) loop that alternates
//! between
//!
//! * a linear-quadratic master problem with finitely many linear cuts
//!   ([`master`]), and
//! * a separation oracle that evaluates `TV_eps` by solving a pointwise
//!   ball-constrained variational inequality ([`tv`]).
//!
//! Discretization uses P1 elements for state, adjoint and dual field and
//! P0 elements for the control on a Friedrichs–Keller mesh of the unit
//! square ([`mesh`], [`fem`]).

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod cli;
pub mod driver;
pub mod error;
pub mod fem;
pub mod instances;
pub mod linalg;
pub mod master;
pub mod mesh;
pub mod report;
pub mod tv;

pub use error::{Error, Result};
pub use fem::{Discretization, P0Field, P1ScalarField, P1VectorField};
pub use mesh::Mesh;
