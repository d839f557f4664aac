//! Transmon simulation under bipolar single-flux-quantum (SFQ) pulse trains
//! and greedy search for ternary pulse sequences implementing single-qubit
//! rotations.
//!
//! The pipeline is:
//!
//! 1. [`model`] builds the truncated transmon Hamiltonian and its eigenbasis.
//! 2. [`propagation`] turns trit symbols into per-slot propagators and evolves
//!    states, with a fine-step Runge-Kutta integrator as an independent check.
//! 3. [`fidelity`] scores a unitary against a target rotation, including the
//!    free virtual-Z correction and the single-pulse angle search.
//! 4. [`seqopt`] runs the seed / mutate / select loop and adapts the sequence
//!    length until the optimal pulse angle matches the hardware value.
//! 5. [`robustness`] sweeps parameter detunings around a solution.
//!
//! Everything is deterministic; parallel evaluation reduces by index.

pub mod error;
pub mod fidelity;
pub mod format;
pub mod linalg;
pub mod model;
pub mod propagation;
pub mod robustness;
pub mod seqopt;

pub use error::{Error, Result};
pub use fidelity::{Axis, FidelityResult, GateEvaluator, GateSpec, ThetaSearch, ZCorrection};
pub use model::{CircuitParams, StaticModel, TransmonParams};
pub use propagation::{EvolutionTrace, PopulationBasis, PropagatorSet, PulseShape, SampledDrive, Trit, TritSequence};
pub use robustness::{SweepParam, SweepResult, SweepSpec};
pub use seqopt::{OptimizationReport, OptimizerConfig, SeedConfig, ThetaMode};
