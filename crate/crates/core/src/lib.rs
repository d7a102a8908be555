//! Quantum-jump unraveling and hidden entropy accounting for open quantum
//! systems whose transitions are only partly observed.
//!
//! The crate is organised bottom-up:
//!
//! * [`linops`]: dense complex matrices, Kronecker products, vectorization,
//!   matrix exponentials and null spaces.
//! * [`model`]: Lindblad models with paired, entropy-labelled jumps and the
//!   two-qubit demon instance, plus Liouville-space generators.
//! * [`unravel`]: steady states, trajectory sampling and the observer's
//!   conditioned state.
//! * [`entropy`]: forward/backward kernels, hidden entropy production,
//!   per-trajectory ledgers and fluctuation-theorem estimators.
//! * [`oracle`]: closed-form expressions for the undriven demon used as
//!   independent cross-checks.
//! * [`ensemble`]: deterministic parallel trajectory farms.

pub mod ensemble;
pub mod entropy;
pub mod linops;
pub mod model;
pub mod oracle;
pub mod unravel;

pub use linops::{ComplexMatrix, LinalgError};
pub use model::{DemonParams, JumpOperator, LindbladModel, ModelError};
