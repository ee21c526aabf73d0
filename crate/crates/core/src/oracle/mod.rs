//! Ground truth for small instances.
//!
//! [`primal`] solves the primal problem directly and never touches dual
//! quantities. [`kkt`] checks candidate potentials against the optimality
//! conditions.

pub mod cache;
pub mod kkt;
pub mod primal;

pub use cache::{instance_hash, solve_cached};
pub use kkt::{kkt_certificate, KktReport};
pub use primal::{solve_primal_small, solve_primal_small_from, OracleMethod, OracleSolution};
