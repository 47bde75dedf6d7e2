//! Standard and defensive quantum state verification for the two-qubit
//! singlet.
//!
//! The crate is organised bottom-up:
//!
//! * [`linalg`]: 2×2 and 4×4 complex matrices, pure states, density matrices.
//! * [`strategy`]: homogeneous verification strategies, including the
//!   `XX`/`YY`/`ZZ` singlet strategy with `λ = 1/3`.
//! * [`certbank`]: binomial tails, their inversion and the SQSV and DQSV
//!   fidelity certificates.
//! * [`sources`]: honest and adversarial sources as mixtures of product
//!   sequences.
//! * [`sim`]: Monte Carlo simulation of verification rounds.
//! * [`oracle`]: exact small-`N` acceptance probabilities and conditional
//!   fidelities, used to validate the certificates.
//! * [`config`], [`output`] and [`reproduce`]: run configuration, file
//!   formats and the canned experiment grids driven by the command line.

pub mod certbank;
pub mod config;
pub mod error;
pub mod linalg;
pub mod oracle;
pub mod output;
pub mod reproduce;
pub mod rng;
pub mod sim;
pub mod sources;
pub mod strategy;

pub use error::{QsvError, Result};
