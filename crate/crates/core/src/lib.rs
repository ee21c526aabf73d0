//! Dual solvers and certification tools for quadratically regularized
//! optimal transport between discrete measures.
//!
//! The dual objective is
//! `Γ(f, g) = Σ p f + Σ q g − (1/2ε) Σ p_i q_j (f_i + g_j − C_ij)₊²`.
//! [`solvers`] maximizes it by gradient ascent, coordinate ascent and
//! coordinate gradient ascent; [`constants`] evaluates the explicit PL
//! constants, and [`spectral`] checks the coercivity bound behind them.
//! [`oracle`] provides an independent primal solver for small instances.

pub mod cli;
pub mod constants;
pub mod costs;
pub mod dual;
pub mod error;
pub mod io;
pub mod measures;
pub mod oracle;
pub mod problem;
pub mod solvers;
pub mod spectral;

pub use error::{Error, Result};
pub use problem::{Coupling, DualPotentials, ProblemInstance};
