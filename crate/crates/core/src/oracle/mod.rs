//! Independent reference dynamics on the tensor-product space (N ≤ 3): the
//! Lindblad master equation and its Monte Carlo wavefunction unravelling.
//!
//! The jump operators are `√(2κ)a`, `√(2κ)b`, and per atom `√γ|1⟩⟨2|` and
//! `√Γ|3⟩⟨2|`, so `H − (i/2)Σ L†L` reproduces the weak-field effective
//! Hamiltonian.
//!
//! Two master-equation solutions are provided. [`steady_state_density`] is the
//! true null vector of the Liouvillian; with both ground levels driven by the
//! same mode it is a dark superposition of `|1⟩` and `|3⟩` in which the cavity
//! transmits as if empty. [`quasi_steady_density`] integrates from the prepared
//! state (vacuum, every atom in `|1⟩`) for a settling time much longer than
//! `1/κ` and `1/γ_tot` but far shorter than the `O(ε⁻²)` optical-pumping time;
//! this is the regime the weak-field transmissions describe.

mod lindblad;
mod trajectory;

pub use lindblad::{
    build_lindblad, empty_cavity_photons, master_equation_transmissions, photon_number_ops, quasi_steady_density, steady_state_density, Channel,
    DensityMatrix, JumpOperator, LindbladModel, OracleReport, OracleSettings, MAX_DENSE_DIM,
};
pub use trajectory::{run_trajectories, ChannelKind, TrajectoryConfig, TrajectoryStats};

use thiserror::Error;

use crate::analytic::ParamError;
use crate::hilbert::{FockSpec, HilbertError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error(transparent)]
    Param(#[from] ParamError),
    #[error(transparent)]
    Hilbert(#[from] HilbertError),
    #[error("the oracle needs a tensor-product basis")]
    NeedsTensorProduct,
    #[error("parameters describe {params} atoms but the basis holds {basis}")]
    AtomMismatch { params: usize, basis: usize },
    #[error("oracle needs at least two photons per mode, got {0:?}")]
    TruncationTooSmall(FockSpec),
    #[error("Hilbert dimension {dim} exceeds the dense limit {max}")]
    DimensionTooLarge { dim: usize, max: usize },
    #[error("Liouvillian null space is degenerate (pivot ratio {pivot_ratio:e})")]
    DegenerateNullSpace { pivot_ratio: f64 },
    #[error("integration step {dt} is too coarse: jump probability {probability:.3} per step at t = {time}")]
    StepTooCoarse { dt: f64, probability: f64, time: f64 },
    #[error("need at least 2 trajectories, got {0}")]
    TooFewTrajectories(usize),
    #[error("invalid time window: {0}")]
    InvalidWindow(String),
    #[error("empty-cavity reference has zero driven photon number")]
    ZeroReference,
}
