//! Differentiable architecture search with bi-level data pruning.
//!
//! The crate is organised bottom-up:
//!
//! * [`numcore`]: vectors, softmax, seeded randomness, power iteration,
//!   finite differences.
//! * [`supernet`]: the cell search space with hand-written forward/backward.
//! * [`data`]: synthetic tasks, CSV I/O and train/validation/test splits.
//! * [`pruning`]: sample scores, pruning criteria and the class-balance cap.
//! * [`bilevel`]: the alternating α / w search loop with progressive pruning.
//! * [`analysis`]: Hessian-vector products, dominant eigenvalue, the
//!   discretization bound and β heatmaps.

pub mod analysis;
pub mod bilevel;
pub mod data;
pub mod error;
pub mod numcore;
pub mod pruning;
pub mod supernet;

pub use error::{BdpError, Result};
