//! Statevector simulation of variational quantum classifiers under
//! randomized-encoding defenses.
//!
//! The crate is organised bottom-up: [`statevec`] and [`linalg`] are the
//! numerical substrate, [`circuits`] builds layered parametrized circuits
//! and their gradients, [`dataset`] produces cluster-Ising ground states,
//! [`classifier`] trains on them, [`defense`] and [`haar`] provide encoder
//! samplers and the analytic moment oracle, [`adversary`] attacks and
//! measures, and [`qec`] covers error-correcting encoders and differential
//! privacy.
//!
//! All randomness flows through [`rng::stream`], so every experiment is a
//! pure function of its seed.

pub mod adversary;
pub mod circuits;
pub mod classifier;
pub mod dataset;
pub mod defense;
pub mod error;
pub mod haar;
pub mod lanczos;
pub mod qec;
pub mod linalg;
pub mod rng;
pub mod statevec;
pub mod stats;

pub use error::{Error, Result};
pub use linalg::{CMatrix, C64};
pub use statevec::{fidelity, Gate, Observable, Pauli, PauliString, StateVector};
