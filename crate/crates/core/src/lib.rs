//! Driven two-polarisation-mode cavity QED with N three-level atoms.
//!
//! * [`hilbert`]: truncated bases and sparse mode/atom operators
//! * [`analytic`]: closed-form cooperativities and transmissions
//! * [`weakfield`]: first-order steady state of the between-jump Hamiltonian
//! * [`oracle`]: Lindblad master equation and quantum trajectories on the
//!   tensor-product space
//! * [`harness`]: configuration, sweeps, CSV output and headline numbers

pub mod analytic;
pub mod harness;
pub mod hilbert;
pub mod oracle;
pub mod weakfield;
