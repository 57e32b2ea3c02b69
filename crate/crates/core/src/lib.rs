//! Nonnegative low-rank and sparse (NNLRS) affinity graphs.
//!
//! The crate solves the NNLRS representation program with a linearized
//! alternating direction method, turns the coefficients into a symmetric
//! affinity graph, optionally learns a linear embedding jointly with the
//! graph, and evaluates graphs with harmonic-function (GHF) and
//! local/global consistency (LGC) label propagation.

pub mod config;
pub mod dataset;
pub mod embedding;
pub mod error;
pub mod experiment;
pub mod graph;
pub mod io;
pub mod lbfgs;
pub mod proximal;
pub mod selftest;
pub mod solver;
pub mod ssl;
pub mod synth;

pub use error::{Error, Result};
pub use proximal::Matrix;
