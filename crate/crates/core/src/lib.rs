//! Compositional simulation-function certificates for networks of switched
//! linear subsystems.
//!
//! The crate is `no_std` (with `alloc`). File formats, the command-line tool
//! and parallel drivers live in the `simnet` crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod certificate;
pub mod linalg;
pub mod network;
pub mod random;
pub mod sampling;
pub mod simulator;
pub mod small_gain;
pub mod swing;

pub use certificate::{CertError, LocalCertificate, LocalGains};
pub use linalg::{Matrix, MatrixError, SymMatrix, ToleranceProfile, Vector};
pub use network::{Network, NetworkError, NetworkSpec, SwitchedLinearSubsystem, SwitchingSignal};
