//! Effective-Liouville engine for open quantum systems.
//!
//! Starting from a finite-dimensional microscopic model (system ⊗
//! environment with a total Hamiltonian), the crate
//!
//! - builds the projection superoperators P and Q and the frequency-dependent
//!   effective Liouville L(z) = L_P + L_PQ [z − L_Q]⁻¹ L_QP on the reduced
//!   system ([`projection`]);
//! - performs the bi-orthogonal spectral analysis of L(z), tracks its
//!   frequency bands, and solves the self-consistency equation z = λ_k(z)
//!   for the effective eigenvalues z_k = ω_k − iγ_k ([`spectral`], [`modes`]);
//! - reconstructs the reduced density matrix, observables, and relaxation
//!   reports from the solved modes, with an exact brute-force oracle and a
//!   time-domain memory-kernel integrator for cross-checks ([`dynamics`]);
//! - follows entropy and relative-entropy flow towards the stationary state
//!   ([`entropy`]);
//! - ships seeded model families covering the regimes of interest
//!   ([`models`]).

pub mod dynamics;
pub mod entropy;
pub mod error;
pub mod hs;
pub mod linalg;
pub mod models;
pub mod modes;
pub mod projection;
pub mod spectral;

pub use error::{Error, Result};
pub use hs::{DensityMatrix, HilbertDims};
