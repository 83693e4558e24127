//! Crate-wide error type.

use thiserror::Error;

/// Errors raised by the engine.
#[derive(Debug, Error)]
pub enum Error {
    /// Matrix dimensions do not match what an operation requires.
    #[error("dimension mismatch in {op}: {detail}")]
    DimensionMismatch { op: &'static str, detail: String },

    /// An operator that must be hermitian fails the relative tolerance check.
    #[error("{op}: matrix is not hermitian (defect {defect:.3e}, tol {tol:.3e})")]
    NotHermitian { op: &'static str, defect: f64, tol: f64 },

    /// A matrix fails the density-matrix invariants.
    #[error("invalid density matrix: {0}")]
    InvalidDensityMatrix(String),

    /// Hilbert dimensions are inconsistent or out of range.
    #[error("invalid dimensions: {0}")]
    InvalidDims(String),

    /// A linear solve hit a (numerically) singular operator.
    #[error("singular solve in {op}: {detail}")]
    SingularSolve { op: &'static str, detail: String },

    /// The dense eigensolver failed to converge.
    #[error("eigensolver failed in {op}")]
    EigFailure { op: &'static str },

    /// The spectrum is exactly degenerate/defective; no Jordan handling is provided.
    #[error("degenerate spectrum in {op}: {detail}")]
    DegenerateSpectrum { op: &'static str, detail: String },

    /// No eigenvalue close enough to zero; probability conservation broken upstream.
    #[error("no zero-mode found: smallest |lambda| = {smallest:.3e}, scale {scale:.3e}")]
    NoZeroMode { smallest: f64, scale: f64 },

    /// |1 - lambda'| too small in the residue amplitude formula.
    #[error("near-defective pole for mode {k}: |1 - lambda'| = {value:.3e}")]
    NearDefectivePole { k: usize, value: f64 },

    /// Newton iteration on z = lambda_k(z) did not converge.
    #[error("effective-eigenvalue solver failed for band {k} after {iters} iterations; trace: {trace}")]
    SolverFailure { k: usize, iters: usize, trace: String },

    /// A solved effective eigenvalue drifted into the upper half plane.
    #[error("mode {k} drifted into Im z > 0 (Im z = {im:.3e}); upstream inconsistency")]
    UpperHalfPlaneDrift { k: usize, im: f64 },

    /// A mode with finite frequency has no -conj partner.
    #[error("hermiticity violation: mode {k} at z = {z_re:.6e}{z_im:+.6e}i has no pair partner")]
    UnpairedMode { k: usize, z_re: f64, z_im: f64 },

    /// Band tracking lost a mode across a grid interval.
    #[error("band tracking failure on interval {interval}: {detail}")]
    TrackingFailure { interval: usize, detail: String },

    /// A time-domain fit window is too short to be meaningful.
    #[error("insufficient data for relaxation fit: window {window:.3e} shorter than {required:.3e}")]
    InsufficientData { window: f64, required: f64 },

    /// Integrator step too large for the requested accuracy.
    #[error("nz integration step too large: estimated local error {estimate:.3e} exceeds {limit:.3e}; refine the grid")]
    RefinementRequest { estimate: f64, limit: f64 },

    /// Requested model family cannot be built with the given dimensions.
    #[error("infeasible model: {0}")]
    InfeasibleModel(String),

    /// Two-level phenomenology parameters violate a positivity constraint.
    #[error("two-level constraint violation ({which}) at t = {t:.6e}: value {value:.6e}")]
    ConstraintViolation { which: &'static str, t: f64, value: f64 },

    /// A run parameter is out of its admissible range.
    #[error("invalid parameter {name}: {detail}")]
    InvalidParameter { name: &'static str, detail: String },
}

impl Error {
    /// The operation that raised the error, when one is recorded.
    pub fn operation(&self) -> Option<&str> {
        match self {
            Error::DimensionMismatch { op, .. }
            | Error::NotHermitian { op, .. }
            | Error::SingularSolve { op, .. }
            | Error::EigFailure { op }
            | Error::DegenerateSpectrum { op, .. } => Some(op),
            Error::InvalidParameter { name, .. } => Some(name),
            _ => None,
        }
    }

    /// Coarse module attribution for error reporting.
    pub fn module(&self) -> &'static str {
        if let Some(op) = self.operation() {
            for (prefix, module) in [
                ("hs_inner", "hs"),
                ("liouvillian", "hs"),
                ("partial_trace", "hs"),
                ("embed_system", "hs"),
                ("DensityMatrix", "hs"),
                ("ModelSpec", "models"),
                ("build_projectors", "projection"),
                ("partition_liouville", "projection"),
                ("q_resolvent", "projection"),
                ("effective_liouville", "projection"),
                ("rho_z", "projection"),
                ("frequency_identity", "projection"),
                ("decompose", "spectral"),
                ("zero_mode", "spectral"),
                ("track_bands", "spectral"),
                ("assemble_mode_set", "modes"),
                ("generator_from_modes", "models"),
                ("oracle", "dynamics"),
                ("observable_series", "dynamics"),
                ("relaxation_report", "dynamics"),
                ("stationary_basis", "dynamics"),
                ("positivity_log", "dynamics"),
                ("entropy", "entropy"),
                ("relative_entropy", "entropy"),
            ] {
                if op.starts_with(prefix) {
                    return module;
                }
            }
        }
        match self {
            Error::DimensionMismatch { .. }
            | Error::NotHermitian { .. }
            | Error::InvalidDensityMatrix(_)
            | Error::InvalidDims(_) => "hs",
            Error::SingularSolve { .. } | Error::EigFailure { .. } => "linalg",
            Error::DegenerateSpectrum { .. } | Error::NoZeroMode { .. } => "spectral",
            Error::NearDefectivePole { .. }
            | Error::SolverFailure { .. }
            | Error::UpperHalfPlaneDrift { .. }
            | Error::UnpairedMode { .. } => "modes",
            Error::TrackingFailure { .. } => "spectral",
            Error::InsufficientData { .. } | Error::RefinementRequest { .. } => "dynamics",
            Error::InfeasibleModel(_) | Error::ConstraintViolation { .. } => "models",
            Error::InvalidParameter { .. } => "config",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
