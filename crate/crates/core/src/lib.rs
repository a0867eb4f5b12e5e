//! Solvers and diagnostics for scalar backward SDEs whose driver grows like
//! `f(|y|)|z|²` in the control variable.

// `!(x > 0.0)` also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod apriori;
pub mod cli;
pub mod backward;
pub mod coeff;
pub mod config;
pub mod error;
pub mod generator;
pub mod grid;
pub mod monitors;
pub mod pde;
pub mod pure;
pub mod quadrature;
pub mod regression;
pub mod rng;
pub mod solver;

pub use coeff::{build_u, build_v, IntegrableCoefficient, TransformKind, TransformTable};
pub use error::{Error, Result};
