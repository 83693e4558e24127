//! Seeded model families covering the regimes of interest, plus the
//! phenomenological two-level trajectory with its positivity constraints.
//!
//! Every family draws its blocks from the Gaussian unitary ensemble
//! (hermitized complex Gaussians), rescaled to unit spectral radius so that
//! `coupling` is a dimensionless knob on H_int alone. The environment
//! reference state is thermal, e^{−βH_E}/Z, which commutes with H_E by
//! construction; β = 0 gives the maximally mixed state.

use faer::Mat;
use num_complex::Complex64 as C64;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::hs::{self, DensityMatrix, HilbertDims};
use crate::linalg::{self, CMat, ZERO};
use crate::projection::{
    build_projectors, partition_liouville, EffectiveLiouvilleEvaluator, ProjectorPair,
};

/// Default inverse temperature for the environment reference state.
///
/// Environment blocks are normalized to unit spectral radius, so this is
/// one inverse spectral scale.
pub const DEFAULT_BETA: f64 = 1.0;

/// Ratio of fast to slow coupling in the two-environment family; decay
/// rates scale with the square, targeting a rate separation well above 10.
pub const TWO_ENV_COUPLING_RATIO: f64 = 6.0;

/// Built-in model families.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelFamily {
    /// GUE system, environment, and coupling blocks.
    RandomGeneric,
    /// H_int = coupling · H_S ⊗ B: commutes with the system Hamiltonian, so
    /// populations in the H_S eigenbasis never move.
    PureDephasing,
    /// Two environment factors: a strong elastic (dephasing-like) coupling
    /// to the first and a weak generic coupling to the second.
    TwoEnvironment,
    /// Two independent open two-level systems side by side; the zero mode
    /// is doubly degenerate downstream.
    DecoupledPair,
    /// H_int = 0.
    Closed,
}

impl ModelFamily {
    pub fn name(&self) -> &'static str {
        match self {
            ModelFamily::RandomGeneric => "random-generic",
            ModelFamily::PureDephasing => "pure-dephasing",
            ModelFamily::TwoEnvironment => "two-environment",
            ModelFamily::DecoupledPair => "decoupled-pair",
            ModelFamily::Closed => "closed",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "random-generic" => Some(ModelFamily::RandomGeneric),
            "pure-dephasing" => Some(ModelFamily::PureDephasing),
            "two-environment" => Some(ModelFamily::TwoEnvironment),
            "decoupled-pair" => Some(ModelFamily::DecoupledPair),
            "closed" => Some(ModelFamily::Closed),
            _ => None,
        }
    }
}

/// A fully specified microscopic model.
#[derive(Debug, Clone)]
pub struct ModelSpec {
    pub dims: HilbertDims,
    pub h_sys: CMat,
    pub h_env: CMat,
    /// Interaction on the full d_tot space.
    pub h_int: CMat,
    pub rho_env: DensityMatrix,
    pub rho0: DensityMatrix,
    pub seed: u64,
    pub family: ModelFamily,
    pub coupling: f64,
    pub beta: f64,
}

impl ModelSpec {
    /// H_tot = H_S⊗1 + 1⊗H_E + H_int.
    pub fn h_tot(&self) -> CMat {
        linalg::kron(&self.h_sys, &linalg::eye(self.dims.d_env))
            + linalg::kron(&linalg::eye(self.dims.d_sys), &self.h_env)
            + &self.h_int
    }

    /// Check hermiticity of H_tot and stationarity of ρ_E.
    pub fn validate(&self) -> Result<()> {
        hs::check_hermitian(&self.h_tot(), "ModelSpec::validate")?;
        let comm = &self.h_env * self.rho_env.mat() - self.rho_env.mat() * &self.h_env;
        if comm.norm_l2() > 1e-12 * self.h_env.norm_l2().max(1.0) {
            return Err(Error::InfeasibleModel(format!(
                "rho_E is not stationary for H_E: ‖[H_E, ρ_E]‖ = {:.3e}",
                comm.norm_l2()
            )));
        }
        Ok(())
    }

    pub fn projectors(&self) -> Result<ProjectorPair> {
        build_projectors(self.dims, &self.rho_env)
    }

    /// Assemble the evaluator for L(z) of this model.
    pub fn evaluator(&self) -> Result<EffectiveLiouvilleEvaluator> {
        let l_tot = hs::liouvillian(&self.h_tot())?;
        let proj = self.projectors()?;
        let part = partition_liouville(&l_tot, &proj)?;
        Ok(EffectiveLiouvilleEvaluator::new(part))
    }

    /// Construct from explicit matrices, validating all invariants.
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        dims: HilbertDims,
        h_sys: CMat,
        h_env: CMat,
        h_int: CMat,
        rho_env: DensityMatrix,
        rho0: DensityMatrix,
        seed: u64,
        family: ModelFamily,
        coupling: f64,
        beta: f64,
    ) -> Result<Self> {
        hs::check_hermitian(&h_sys, "ModelSpec (H_S)")?;
        hs::check_hermitian(&h_env, "ModelSpec (H_E)")?;
        hs::check_hermitian(&h_int, "ModelSpec (H_int)")?;
        if h_sys.nrows() != dims.d_sys || h_env.nrows() != dims.d_env || h_int.nrows() != dims.d_tot()
        {
            return Err(Error::InvalidDims(
                "Hamiltonian blocks inconsistent with dims".into(),
            ));
        }
        if rho_env.dim() != dims.d_env || rho0.dim() != dims.d_sys {
            return Err(Error::InvalidDims("states inconsistent with dims".into()));
        }
        let spec = Self {
            dims,
            h_sys,
            h_env,
            h_int,
            rho_env,
            rho0,
            seed,
            family,
            coupling,
            beta,
        };
        spec.validate()?;
        Ok(spec)
    }
}

fn gaussian_complex(rng: &mut ChaCha8Rng) -> C64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(re, im)
}

/// Hermitized complex Gaussian matrix rescaled to unit spectral radius.
fn gue_normalized(d: usize, rng: &mut ChaCha8Rng) -> CMat {
    let g = Mat::from_fn(d, d, |_, _| gaussian_complex(rng));
    let h = linalg::hermitize(&g);
    let radius = linalg::hermitian_spectral_radius(&h, "gue").unwrap_or(0.0);
    if radius < 1e-14 {
        return h;
    }
    linalg::scale(C64::new(1.0 / radius, 0.0), &h)
}

/// Random full-rank density matrix (Ginibre construction).
fn random_density(d: usize, rng: &mut ChaCha8Rng) -> DensityMatrix {
    let g = Mat::from_fn(d, d, |_, _| gaussian_complex(rng));
    let p = &g * linalg::dagger(&g) + linalg::scale(C64::new(0.05, 0.0), &linalg::eye(d));
    let tr = linalg::trace(&p);
    DensityMatrix::from_mat(linalg::hermitize(&linalg::scale(tr.inv(), &p)))
        .expect("Ginibre state is a density matrix")
}

/// Smallest factor pair (e1, e2) of d_env with both ≥ 2.
fn env_split(d_env: usize) -> Option<(usize, usize)> {
    (2..=d_env / 2).find(|e1| d_env % e1 == 0).map(|e1| (e1, d_env / e1))
}

/// Build a seeded model of the requested family at the default β.
pub fn make_model(
    family: ModelFamily,
    dims: HilbertDims,
    seed: u64,
    coupling: f64,
) -> Result<ModelSpec> {
    make_model_beta(family, dims, seed, coupling, DEFAULT_BETA)
}

/// Build a seeded model with an explicit environment inverse temperature.
pub fn make_model_beta(
    family: ModelFamily,
    dims: HilbertDims,
    seed: u64,
    coupling: f64,
    beta: f64,
) -> Result<ModelSpec> {
    if coupling < 0.0 {
        return Err(Error::InvalidParameter {
            name: "coupling",
            detail: format!("coupling {coupling} must be ≥ 0"),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d_sys = dims.d_sys;
    let d_env = dims.d_env;
    let d_tot = dims.d_tot();

    let (h_sys, h_env, h_int) = match family {
        ModelFamily::RandomGeneric => {
            let h_sys = gue_normalized(d_sys, &mut rng);
            let h_env = gue_normalized(d_env, &mut rng);
            let h_int = linalg::scale(
                C64::new(coupling, 0.0),
                &gue_normalized(d_tot, &mut rng),
            );
            (h_sys, h_env, h_int)
        }
        ModelFamily::Closed => {
            let h_sys = gue_normalized(d_sys, &mut rng);
            let h_env = gue_normalized(d_env, &mut rng);
            (h_sys, h_env, Mat::zeros(d_tot, d_tot))
        }
        ModelFamily::PureDephasing => {
            let h_sys = gue_normalized(d_sys, &mut rng);
            let h_env = gue_normalized(d_env, &mut rng);
            let bath_op = gue_normalized(d_env, &mut rng);
            let h_int = linalg::scale(C64::new(coupling, 0.0), &linalg::kron(&h_sys, &bath_op));
            (h_sys, h_env, h_int)
        }
        ModelFamily::TwoEnvironment => {
            let (e1, e2) = env_split(d_env).ok_or_else(|| {
                Error::InfeasibleModel(format!(
                    "two-environment family needs a composite d_env ≥ 4, got {d_env}"
                ))
            })?;
            let h_sys = gue_normalized(d_sys, &mut rng);
            let h_e1 = gue_normalized(e1, &mut rng);
            let h_e2 = gue_normalized(e2, &mut rng);
            let h_env = linalg::kron(&h_e1, &linalg::eye(e2)) + linalg::kron(&linalg::eye(e1), &h_e2);
            // fast channel: elastic (commutes with H_S), strong, on factor 1
            let b1 = gue_normalized(e1, &mut rng);
            let fast = linalg::kron(&h_sys, &linalg::kron(&b1, &linalg::eye(e2)));
            // slow channel: generic, weak, on factor 2
            let c_sys = gue_normalized(d_sys, &mut rng);
            let b2 = gue_normalized(e2, &mut rng);
            let slow = linalg::kron(&c_sys, &linalg::kron(&linalg::eye(e1), &b2));
            let h_int = linalg::scale(C64::new(coupling, 0.0), &fast)
                + linalg::scale(C64::new(coupling / TWO_ENV_COUPLING_RATIO, 0.0), &slow);
            (h_sys, h_env, h_int)
        }
        ModelFamily::DecoupledPair => {
            if d_sys != 4 {
                return Err(Error::InfeasibleModel(format!(
                    "decoupled-pair family needs d_sys = 4 (two 2-level blocks), got {d_sys}"
                )));
            }
            let h1 = gue_normalized(2, &mut rng);
            let h2 = gue_normalized(2, &mut rng);
            let h_sys = Mat::from_fn(4, 4, |i, j| match (i / 2, j / 2) {
                (0, 0) => h1[(i, j)],
                (1, 1) => h2[(i - 2, j - 2)],
                _ => ZERO,
            });
            let h_env = gue_normalized(d_env, &mut rng);
            let a1 = gue_normalized(2, &mut rng);
            let a2 = gue_normalized(2, &mut rng);
            let b1 = gue_normalized(d_env, &mut rng);
            let b2 = gue_normalized(d_env, &mut rng);
            let block = |a: &CMat, blk: usize| {
                Mat::from_fn(4, 4, |i, j| {
                    if i / 2 == blk && j / 2 == blk {
                        a[(i - 2 * blk, j - 2 * blk)]
                    } else {
                        ZERO
                    }
                })
            };
            let h_int = linalg::scale(
                C64::new(coupling, 0.0),
                &(linalg::kron(&block(&a1, 0), &b1) + linalg::kron(&block(&a2, 1), &b2)),
            );
            (h_sys, h_env, h_int)
        }
    };

    let rho_env = DensityMatrix::thermal(&h_env, beta)?;
    let rho0 = random_density(d_sys, &mut rng);
    ModelSpec::from_parts(
        dims, h_sys, h_env, h_int, rho_env, rho0, seed, family, coupling, beta,
    )
}

/// z-independent two-level generator with a purely relaxational spectrum
/// {0, −iγ_pop, −iγ_coh, −1.3iγ_coh} and stationary population p_inf.
///
/// All mode frequencies vanish: the overdamped case.
pub fn overdamped_generator(p_inf: f64, gamma_pop: f64, gamma_coh: f64) -> CMat {
    let zs = [
        ZERO,
        C64::new(0.0, -gamma_pop),
        C64::new(0.0, -gamma_coh),
        C64::new(0.0, -1.3 * gamma_coh),
    ];
    let s2 = std::f64::consts::SQRT_2.recip();
    let rho_inf = Mat::from_fn(2, 2, |i, j| match (i, j) {
        (0, 0) => C64::new(p_inf, 0.0),
        (1, 1) => C64::new(1.0 - p_inf, 0.0),
        _ => ZERO,
    });
    let b_z = Mat::from_fn(2, 2, |i, j| match (i, j) {
        (0, 0) => C64::new(s2, 0.0),
        (1, 1) => C64::new(-s2, 0.0),
        _ => ZERO,
    });
    let b_x = Mat::from_fn(2, 2, |i, j| if i != j { C64::new(s2, 0.0) } else { ZERO });
    let b_y = Mat::from_fn(2, 2, |i, j| match (i, j) {
        (0, 1) => C64::new(0.0, -s2),
        (1, 0) => C64::new(0.0, s2),
        _ => ZERO,
    });
    generator_from_modes(&[rho_inf, b_z, b_x, b_y], &zs)
}

/// z-independent two-level generator with one oscillating pair at ±ω − iγ
/// plus a population mode at −iγ_pop. Ω/γ sets the damping regime.
///
/// The oscillating eigenmatrices carry a diagonal admixture so that the
/// oscillation is visible in the populations (and hence in the entropy),
/// not only in the phase of a coherence.
pub fn underdamped_generator(p_inf: f64, gamma: f64, omega: f64, gamma_pop: f64) -> CMat {
    let zs = [
        ZERO,
        C64::new(0.0, -gamma_pop),
        C64::new(omega, -gamma),
        C64::new(-omega, -gamma),
    ];
    let s2 = std::f64::consts::SQRT_2.recip();
    let rho_inf = Mat::from_fn(2, 2, |i, j| match (i, j) {
        (0, 0) => C64::new(p_inf, 0.0),
        (1, 1) => C64::new(1.0 - p_inf, 0.0),
        _ => ZERO,
    });
    let b_z = Mat::from_fn(2, 2, |i, j| match (i, j) {
        (0, 0) => C64::new(s2, 0.0),
        (1, 1) => C64::new(-s2, 0.0),
        _ => ZERO,
    });
    let mix = 0.4 * s2;
    let m_up = Mat::from_fn(2, 2, |i, j| match (i, j) {
        (0, 1) => C64::new(1.0, 0.0),
        (0, 0) => C64::new(mix, 0.0),
        (1, 1) => C64::new(-mix, 0.0),
        _ => ZERO,
    });
    let m_down = linalg::dagger(&m_up);
    generator_from_modes(&[rho_inf, b_z, m_up, m_down], &zs)
}

/// L = R diag(z) R⁻¹ from prescribed right eigenmatrices.
fn generator_from_modes(rights: &[CMat], zs: &[C64]) -> CMat {
    let d = rights[0].nrows();
    let n = d * d;
    let r = Mat::from_fn(n, n, |i, k| hs::vec_op(&rights[k])[(i, 0)]);
    let diag = Mat::from_fn(n, n, |i, j| if i == j { zs[i] } else { ZERO });
    let r_inv = linalg::lu_solve(&r, &linalg::eye(n), "generator_from_modes")
        .expect("mode basis is invertible");
    &r * diag * &r_inv
}

/// Phenomenological two-level trajectory parameters.
#[derive(Debug, Clone, Copy)]
pub struct TwoLevelPhenomenology {
    pub gamma1: f64,
    pub gamma2: f64,
    pub omega: f64,
    pub r: f64,
    pub s: f64,
    pub phi0: f64,
    pub p_infinity: f64,
}

/// Verdict of the positivity-constraint scan.
#[derive(Debug, Clone)]
pub struct ConstraintVerdict {
    pub pass: bool,
    /// (constraint name, t, value) of the first violation.
    pub witness: Option<(&'static str, f64, f64)>,
    /// True when both rates vanish with finite amplitudes: the scan window
    /// had to be capped.
    pub infinite_window: bool,
}

impl TwoLevelPhenomenology {
    /// ρ₁₁(t) = p_∞ + s e^{−γ₁t} + 2r cos(ωt+φ₀) e^{−γ₂t}.
    pub fn rho11(&self, t: f64) -> f64 {
        self.p_infinity
            + self.s * (-self.gamma1 * t).exp()
            + 2.0 * self.r * (self.omega * t + self.phi0).cos() * (-self.gamma2 * t).exp()
    }

    /// ρ₁₂(t) = s e^{−γ₁t} + i r e^{−iωt−iφ₀} e^{−γ₂t}.
    pub fn rho12(&self, t: f64) -> C64 {
        let coherent = C64::new(0.0, 1.0)
            * C64::new(0.0, -(self.omega * t + self.phi0)).exp()
            * C64::new(self.r * (-self.gamma2 * t).exp(), 0.0);
        C64::new(self.s * (-self.gamma1 * t).exp(), 0.0) + coherent
    }

    pub fn state(&self, t: f64) -> CMat {
        let p11 = self.rho11(t);
        let p12 = self.rho12(t);
        Mat::from_fn(2, 2, |i, j| match (i, j) {
            (0, 0) => C64::new(p11, 0.0),
            (1, 1) => C64::new(1.0 - p11, 0.0),
            (0, 1) => p12,
            _ => p12.conj(),
        })
    }

    fn det(&self, t: f64) -> f64 {
        let p11 = self.rho11(t);
        p11 * (1.0 - p11) - self.rho12(t).norm_sqr()
    }

    /// Scan 0 ≤ ρ₁₁ ≤ 1 and det ρ ≥ 0 on a dense grid plus the endpoints.
    pub fn constraint_validate(&self) -> ConstraintVerdict {
        if self.gamma1 < 0.0 || self.gamma2 < 0.0 {
            return ConstraintVerdict {
                pass: false,
                witness: Some(("negative decay rate", 0.0, self.gamma1.min(self.gamma2))),
                infinite_window: false,
            };
        }
        let min_rate = self.gamma1.min(self.gamma2);
        let mut infinite_window = false;
        let t_max = if min_rate > 0.0 {
            10.0 / min_rate
        } else if self.r.abs() > 0.0 || self.s.abs() > 0.0 {
            infinite_window = true;
            if self.omega.abs() > 0.0 {
                1e3 / self.omega.abs()
            } else {
                1e3
            }
        } else {
            1.0
        };
        let n = 10_000usize;
        let check = |t: f64| -> Option<(&'static str, f64, f64)> {
            let p11 = self.rho11(t);
            if !(0.0..=1.0).contains(&p11) {
                return Some(("rho11 out of [0,1]", t, p11));
            }
            let det = self.det(t);
            if det < -1e-12 {
                return Some(("det rho negative", t, det));
            }
            None
        };
        for i in 0..=n {
            let t = t_max * i as f64 / n as f64;
            if let Some(w) = check(t) {
                return ConstraintVerdict {
                    pass: false,
                    witness: Some(w),
                    infinite_window,
                };
            }
        }
        // t → ∞ limit: diag(p_∞, 1−p_∞)
        if !(0.0..=1.0).contains(&self.p_infinity) {
            return ConstraintVerdict {
                pass: false,
                witness: Some(("stationary population out of [0,1]", f64::INFINITY, self.p_infinity)),
                infinite_window,
            };
        }
        ConstraintVerdict {
            pass: true,
            witness: None,
            infinite_window,
        }
    }

    /// Evaluate the closed-form trajectory after validating the constraints.
    pub fn trajectory(&self, times: &[f64]) -> Result<crate::dynamics::Trajectory> {
        let verdict = self.constraint_validate();
        if let Some((which, t, value)) = verdict.witness {
            return Err(Error::ConstraintViolation {
                which,
                t,
                value,
            });
        }
        let states: Vec<CMat> = times.iter().map(|&t| self.state(t)).collect();
        let positivity_log: Vec<f64> = times.iter().map(|&t| {
            let det = self.det(t);
            let tr = 1.0_f64;
            // eigenvalues of a 2×2 hermitian unit-trace matrix
            let disc = (tr * tr / 4.0 - det).max(0.0).sqrt();
            tr / 2.0 - disc
        }).collect();
        Ok(crate::dynamics::Trajectory {
            times: times.to_vec(),
            states,
            basis_label: crate::dynamics::BasisLabel::StationaryEigenbasis,
            positivity_log,
        })
    }
}
