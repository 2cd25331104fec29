//! Simulation and verification toolkit for two-way entanglement
//! purification protocols.
//!
//! The crate is organized around five subsystems:
//!
//! - [`bell`]: exact combinatorics of Bell-state labels — parity tables,
//!   local-outcome statistics, and the label permutations induced by
//!   two-sided CNOTs.
//! - [`rates`]: the analytic Bell-diagonal rate recursion for bit-flip /
//!   phase-flip error rejection, with yield accounting and schedule search.
//! - [`oracle`]: an exact density-matrix simulator for up to three pairs,
//!   used to verify channel identities and as ground truth for the other
//!   modules.
//! - [`protocol`]: a line-oriented DSL for purification protocol scripts,
//!   its parser, and the static + numeric checker for the unconditional
//!   purification criteria.
//! - [`mc`]: a scalable Monte-Carlo two-party engine running protocol
//!   scripts over ensembles of Bell-labeled pairs, plus the sampling-bound
//!   analysis for the error test.

pub mod bell;
pub mod fixtures;
pub mod mc;
pub mod oracle;
pub mod protocol;
pub mod rates;

pub use bell::{Basis, BellLabel, CnotBasis, Parity};
pub use mc::{ChannelModel, PairEnsemble, SimConfig, TrialReport};
pub use oracle::{DenseState, VerifyReport};
pub use protocol::{ProtocolSpec, TheoremVerdict};
pub use rates::{RateVector, RoundKind, RoundReport};
