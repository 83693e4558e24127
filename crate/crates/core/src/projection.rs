//! Projection superoperators and the frequency-dependent effective Liouville.
//!
//! The relevant projector P· = Tr_E(·) ⊗ ρ_E and its complement Q = 1 − P
//! split the total Liouville into blocks L_P, L_PQ, L_QP, L_Q. Virtual
//! excursions through Q-space give the effective generator on the reduced
//! system,
//!
//! ```text
//! L(z) = L_P + L_PQ [z − L_Q]⁻¹ L_QP ,
//! ```
//!
//! a d_sys²×d_sys² matrix for every complex frequency z. The exact
//! frequency-domain identity
//!
//! ```text
//! i[z − L(z)]⁻¹ ρ₀  =  Tr_E( i[z − L_tot]⁻¹ (ρ₀ ⊗ ρ_E) )
//! ```
//!
//! holds without approximation for every finite model and is exposed here as
//! a residual check.
//!
//! P is idempotent but, for a generic ρ_E, not hermitian under the plain
//! Hilbert-Schmidt product; nothing below assumes orthogonality of P.

use faer::Mat;
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::hs::{self, DensityMatrix, HilbertDims};
use crate::linalg::{self, CMat, I, ONE, ZERO};

/// The pair (P, Q) with its defining data.
#[derive(Debug, Clone)]
pub struct ProjectorPair {
    p: CMat,
    q: CMat,
    dims: HilbertDims,
    rho_env: DensityMatrix,
}

/// Residuals of the defining projector identities, for verification reports.
#[derive(Debug, Clone, Copy)]
pub struct ProjectorResiduals {
    pub p_idempotent: f64,
    pub q_idempotent: f64,
    pub pq_zero: f64,
    pub qp_zero: f64,
    pub completeness: f64,
}

impl ProjectorResiduals {
    pub fn max(&self) -> f64 {
        self.p_idempotent
            .max(self.q_idempotent)
            .max(self.pq_zero)
            .max(self.qp_zero)
            .max(self.completeness)
    }
}

/// Build P· = Tr_E(·) ⊗ ρ_E and Q = 1 − P as dense superoperator matrices.
pub fn build_projectors(dims: HilbertDims, rho_env: &DensityMatrix) -> Result<ProjectorPair> {
    if rho_env.dim() != dims.d_env {
        return Err(Error::DimensionMismatch {
            op: "build_projectors",
            detail: format!("rho_E dim {} vs d_env {}", rho_env.dim(), dims.d_env),
        });
    }
    let d_tot = dims.d_tot();
    let d_env = dims.d_env;
    let dd = d_tot * d_tot;
    let re = rho_env.mat();
    // P[(a,b),(c,d)] = δ_{e_c e_d} δ_{s_a s_c} δ_{s_b s_d} (ρ_E)_{e_a e_b}
    let p = Mat::from_fn(dd, dd, |row, col| {
        let (a, b) = (row / d_tot, row % d_tot);
        let (c, d) = (col / d_tot, col % d_tot);
        let (sa, ea) = (a / d_env, a % d_env);
        let (sb, eb) = (b / d_env, b % d_env);
        let (sc, ec) = (c / d_env, c % d_env);
        let (sd, ed) = (d / d_env, d % d_env);
        if ec == ed && sa == sc && sb == sd {
            re[(ea, eb)]
        } else {
            ZERO
        }
    });
    let q = linalg::eye(dd) - &p;
    Ok(ProjectorPair {
        p,
        q,
        dims,
        rho_env: rho_env.clone(),
    })
}

impl ProjectorPair {
    pub fn p(&self) -> &CMat {
        &self.p
    }

    pub fn q(&self) -> &CMat {
        &self.q
    }

    pub fn dims(&self) -> HilbertDims {
        self.dims
    }

    pub fn rho_env(&self) -> &DensityMatrix {
        &self.rho_env
    }

    /// Rank of P from its trace (exact for idempotents).
    pub fn p_rank(&self) -> usize {
        linalg::trace(&self.p).re.round() as usize
    }

    /// Measure P² = P, Q² = Q, PQ = QP = 0, P + Q = 1.
    pub fn residuals(&self) -> ProjectorResiduals {
        let dd = self.p.nrows();
        let norm = |m: &CMat| m.norm_l2().max(1e-300);
        let p2 = &self.p * &self.p;
        let q2 = &self.q * &self.q;
        let pq = &self.p * &self.q;
        let qp = &self.q * &self.p;
        let sum = &self.p + &self.q;
        ProjectorResiduals {
            p_idempotent: (&p2 - &self.p).norm_l2() / norm(&self.p),
            q_idempotent: (&q2 - &self.q).norm_l2() / norm(&self.q),
            pq_zero: pq.norm_l2() / norm(&self.p),
            qp_zero: qp.norm_l2() / norm(&self.p),
            completeness: (&sum - linalg::eye(dd)).norm_l2() / (dd as f64).sqrt(),
        }
    }
}

/// The total Liouville split into projector blocks, with the lift/reduce
/// maps of the P-space ↔ system-operator-space identification X ↔ X⊗ρ_E.
#[derive(Debug, Clone)]
pub struct PartitionedLiouville {
    l_tot: CMat,
    proj: ProjectorPair,
    /// lift matrix W: system op space → total op space, col k = vec(E_k ⊗ ρ_E)
    lift: CMat,
    /// reduce matrix V: total op space → system op space, V W = 1
    reduce: CMat,
    /// Q L_tot Q on the full space
    qlq: CMat,
    /// Q L_tot W: the L_QP block, columns indexed by system dyads
    q_lw: CMat,
    /// V L_tot: applies L then reduces; L_PQ action is its restriction to range(Q)
    vl: CMat,
    /// V L_tot W: the system-reduced L_P block
    l_p: CMat,
    /// orthonormal basis of range(Q) (D × (D − d_sys²))
    q_basis: CMat,
    /// max |eigenvalue| of the (hermitian) total Liouville
    spectral_scale: f64,
}

/// Partition L_tot into P/Q blocks and precompute the reduced maps.
pub fn partition_liouville(l_tot: &CMat, proj: &ProjectorPair) -> Result<PartitionedLiouville> {
    let dims = proj.dims();
    let d_tot = dims.d_tot();
    let d_env = dims.d_env;
    let dd = d_tot * d_tot;
    let n_sys = dims.d_sys * dims.d_sys;
    if l_tot.nrows() != dd || l_tot.ncols() != dd {
        return Err(Error::DimensionMismatch {
            op: "partition_liouville",
            detail: format!("L_tot is {}x{}, expected {dd}x{dd}", l_tot.nrows(), l_tot.ncols()),
        });
    }

    let re = proj.rho_env().mat();
    let d_sys = dims.d_sys;
    // W[(a,b),(m,n)] = δ_{s_a m} δ_{s_b n} (ρ_E)_{e_a e_b}
    let lift = Mat::from_fn(dd, n_sys, |row, col| {
        let (a, b) = (row / d_tot, row % d_tot);
        let (m, n) = (col / d_sys, col % d_sys);
        if a / d_env == m && b / d_env == n {
            re[(a % d_env, b % d_env)]
        } else {
            ZERO
        }
    });
    // V[(m,n),(a,b)] = δ_{s_a m} δ_{s_b n} δ_{e_a e_b}
    let reduce = Mat::from_fn(n_sys, dd, |row, col| {
        let (m, n) = (row / d_sys, row % d_sys);
        let (a, b) = (col / d_tot, col % d_tot);
        if a / d_env == m && b / d_env == n && a % d_env == b % d_env {
            ONE
        } else {
            ZERO
        }
    });

    let q = proj.q();
    let lq = l_tot * q;
    let qlq = q * &lq;
    let lw = l_tot * &lift;
    let q_lw = q * &lw;
    let vl = &reduce * l_tot;
    let l_p = &reduce * &lw;

    // Orthonormal basis of range(Q) from the SVD of Q; rank is D − d_sys²
    // because P has rank d_sys² for full-support ρ_E.
    let rank_q = dd - n_sys;
    let svd = q.svd().map_err(|_| Error::EigFailure {
        op: "partition_liouville (svd of Q)",
    })?;
    let sing_ok = svd.S()[rank_q - 1].re > 1e-8 && {
        // gap between kept and discarded singular values
        rank_q == dd || svd.S()[rank_q].re < 1e-8 * svd.S()[0].re
    };
    if !sing_ok {
        return Err(Error::SingularSolve {
            op: "partition_liouville",
            detail: format!(
                "range(Q) is not {rank_q}-dimensional: σ_{} = {:.3e}, σ_{} = {:.3e}",
                rank_q - 1,
                svd.S()[rank_q - 1].re,
                rank_q,
                if rank_q < dd { svd.S()[rank_q].re } else { 0.0 }
            ),
        });
    }
    let q_basis = svd.U().get(.., 0..rank_q).to_owned();

    let spectral_scale = linalg::hermitian_spectral_radius(l_tot, "partition_liouville")?;

    Ok(PartitionedLiouville {
        l_tot: l_tot.clone(),
        proj: proj.clone(),
        lift,
        reduce,
        qlq,
        q_lw,
        vl,
        l_p,
        q_basis,
        spectral_scale,
    })
}

impl PartitionedLiouville {
    pub fn dims(&self) -> HilbertDims {
        self.proj.dims()
    }

    pub fn projectors(&self) -> &ProjectorPair {
        &self.proj
    }

    pub fn l_tot(&self) -> &CMat {
        &self.l_tot
    }

    /// System-reduced bare block L_P (d_sys² × d_sys²).
    pub fn l_p(&self) -> &CMat {
        &self.l_p
    }

    /// Q L_tot Q on the full space.
    pub fn qlq(&self) -> &CMat {
        &self.qlq
    }

    /// The L_QP block as a (d_tot²) × (d_sys²) matrix of Q-space columns.
    pub fn q_lw(&self) -> &CMat {
        &self.q_lw
    }

    /// V L_tot; applying it to a Q-space vector realizes L_PQ.
    pub fn vl(&self) -> &CMat {
        &self.vl
    }

    pub fn lift_matrix(&self) -> &CMat {
        &self.lift
    }

    pub fn reduce_matrix(&self) -> &CMat {
        &self.reduce
    }

    pub fn q_basis(&self) -> &CMat {
        &self.q_basis
    }

    /// Largest |eigenvalue| of the total Liouville; the model's frequency scale.
    pub fn spectral_scale(&self) -> f64 {
        self.spectral_scale
    }

    /// Lift a system operator (matrix form) into the total operator space.
    pub fn lift_op(&self, x: &CMat) -> CMat {
        &self.lift * hs::vec_op(x)
    }

    /// Reduce a total-space vector to a system operator (matrix form).
    pub fn reduce_op(&self, v: &CMat) -> CMat {
        hs::unvec_op(&(&self.reduce * v), self.dims().d_sys)
    }

    /// ‖P L P + P L Q + Q L P + Q L Q − L_tot‖ / ‖L_tot‖.
    pub fn reassembly_residual(&self) -> f64 {
        let p = self.proj.p();
        let q = self.proj.q();
        let lp = p * &self.l_tot * p;
        let lpq = p * &self.l_tot * q;
        let lqp = q * &self.l_tot * p;
        let lq = q * &self.l_tot * q;
        let sum = &lp + &lpq + &lqp + &lq;
        (sum - &self.l_tot).norm_l2() / self.l_tot.norm_l2().max(1e-300)
    }
}

/// Solve (z·1 − M) y = b by dense LU on the full space.
///
/// For M = Q L Q and b ∈ range(Q) with z ≠ 0 the solution is the Q-subspace
/// resolvent applied to b: the operator acts as z·1 on range(P), so the
/// unique solution has zero P-component.
pub fn resolvent_solve(m: &CMat, z: C64, b: &CMat, op: &'static str) -> Result<CMat> {
    let dd = m.nrows();
    let shifted = linalg::scale(z, &linalg::eye(dd)) - m;
    linalg::lu_solve(&shifted, b, op)
}

/// Apply the Q-space resolvent [z − L_Q]⁻¹ to a vector in range(Q).
pub fn q_resolvent_apply(part: &PartitionedLiouville, z: C64, b: &CMat) -> Result<CMat> {
    if b.nrows() != part.qlq.nrows() || b.ncols() != 1 {
        return Err(Error::DimensionMismatch {
            op: "q_resolvent_apply",
            detail: format!("rhs is {}x{}", b.nrows(), b.ncols()),
        });
    }
    resolvent_solve(&part.qlq, z, b, "q_resolvent_apply")
}

/// Callable evaluator for L(z) and its z-derivative.
///
/// Immutable after construction; evaluations at distinct z are independent.
#[derive(Debug, Clone)]
pub struct EffectiveLiouvilleEvaluator {
    part: PartitionedLiouville,
    epsilon_min: f64,
}

impl EffectiveLiouvilleEvaluator {
    /// Default smoothing floor relative to the spectral scale.
    pub const EPSILON_MIN_REL: f64 = 1e-6;

    pub fn new(part: PartitionedLiouville) -> Self {
        let epsilon_min = Self::EPSILON_MIN_REL * part.spectral_scale().max(1e-300);
        Self { part, epsilon_min }
    }

    pub fn with_epsilon_min(mut self, epsilon_min: f64) -> Self {
        self.epsilon_min = epsilon_min;
        self
    }

    pub fn partition(&self) -> &PartitionedLiouville {
        &self.part
    }

    pub fn dims(&self) -> HilbertDims {
        self.part.dims()
    }

    /// Smallest recommended Im z for near-real evaluations.
    pub fn epsilon_min(&self) -> f64 {
        self.epsilon_min
    }

    pub fn spectral_scale(&self) -> f64 {
        self.part.spectral_scale()
    }

    fn check_z(&self, z: C64) -> Result<()> {
        if !z.re.is_finite() || !z.im.is_finite() {
            return Err(Error::InvalidParameter {
                name: "z",
                detail: format!("non-finite frequency {z}"),
            });
        }
        if z.im < 0.0 {
            return Err(Error::InvalidParameter {
                name: "z",
                detail: format!("Im z = {} < 0: below the analyticity domain", z.im),
            });
        }
        Ok(())
    }

    /// L(z) = L_P + L_PQ [z − L_Q]⁻¹ L_QP, assembled column-by-column over
    /// the embedded system basis dyads.
    pub fn evaluate(&self, z: C64) -> Result<CMat> {
        Ok(self.evaluate_impl(z, false)?.0)
    }

    /// L(z) together with L'(z) = −L_PQ [z − L_Q]⁻² L_QP.
    pub fn evaluate_with_derivative(&self, z: C64) -> Result<(CMat, CMat)> {
        let (l, d) = self.evaluate_impl(z, true)?;
        Ok((l, d.expect("derivative requested")))
    }

    fn evaluate_impl(&self, z: C64, want_derivative: bool) -> Result<(CMat, Option<CMat>)> {
        self.check_z(z)?;
        let part = &self.part;
        let dd = part.qlq.nrows();
        let shifted = linalg::scale(z, &linalg::eye(dd)) - &part.qlq;
        let lu = shifted.partial_piv_lu();
        let y = faer::linalg::solvers::Solve::solve(&lu, &part.q_lw);
        let resid = (&shifted * &y - &part.q_lw).norm_l2();
        let rhs_norm = part.q_lw.norm_l2();
        if !resid.is_finite() || resid > 1e-8 * rhs_norm.max(part.spectral_scale()) {
            return Err(Error::SingularSolve {
                op: "effective_liouville",
                detail: format!("resolvent residual {resid:.3e} at z = {z}"),
            });
        }
        let l_z = &part.l_p + &part.vl * &y;
        let deriv = if want_derivative {
            let y2 = faer::linalg::solvers::Solve::solve(&lu, &y);
            Some(linalg::scale(-ONE, &(&part.vl * &y2)))
        } else {
            None
        };
        Ok((l_z, deriv))
    }

    /// (L(ω+iε) − L(ω+iε)†)/2, the hermiticity-breaking part.
    ///
    /// Written as −i·C, the coefficient C = i·(L−L†)/2 is the ε-broadened
    /// counterpart of π L_PQ δ(ω−L_Q) L_QP.
    pub fn antihermitian_part(&self, omega: f64, eps: f64) -> Result<CMat> {
        if eps <= 0.0 {
            return Err(Error::InvalidParameter {
                name: "eps",
                detail: format!("ε = {eps} must be > 0"),
            });
        }
        let l = self.evaluate(C64::new(omega, eps))?;
        let ld = linalg::dagger(&l);
        Ok(linalg::scale(C64::new(0.5, 0.0), &(&l - &ld)))
    }

    /// The hermitian coefficient C in (L − L†)/2 = −i C.
    pub fn antihermitian_coefficient(&self, omega: f64, eps: f64) -> Result<CMat> {
        Ok(linalg::scale(I, &self.antihermitian_part(omega, eps)?))
    }

    /// ρ(z) = i[z − L(z)]⁻¹ ρ₀ as a vectorized system operator.
    pub fn rho_z(&self, z: C64, rho0: &DensityMatrix) -> Result<CMat> {
        let n_sys = self.dims().d_sys * self.dims().d_sys;
        let l_z = self.evaluate(z)?;
        let shifted = linalg::scale(z, &linalg::eye(n_sys)) - &l_z;
        let rhs = linalg::scale(I, &hs::vec_op(rho0.mat()));
        linalg::lu_solve(&shifted, &rhs, "rho_z")
    }

    /// Relative HS error of the exact frequency-domain identity
    /// i[z−L(z)]⁻¹ρ₀ vs Tr_E(i[z−L_tot]⁻¹(ρ₀⊗ρ_E)).
    pub fn frequency_identity_residual(&self, z: C64, rho0: &DensityMatrix) -> Result<f64> {
        let part = &self.part;
        let lhs = self.rho_z(z, rho0)?;
        let dd = part.l_tot.nrows();
        let emb = part.lift_op(rho0.mat());
        let shifted = linalg::scale(z, &linalg::eye(dd)) - &part.l_tot;
        let full = linalg::lu_solve(&shifted, &linalg::scale(I, &emb), "frequency_identity")?;
        let rhs = &part.reduce * &full;
        let denom = rhs.norm_l2().max(1e-300);
        Ok((lhs - rhs).norm_l2() / denom)
    }

    /// ‖vec(1)† L(z)‖: the unit matrix must be a left zero-eigenvector.
    pub fn left_annihilation_residual(&self, z: C64) -> Result<f64> {
        let l_z = self.evaluate(z)?;
        let d_sys = self.dims().d_sys;
        let one = hs::vec_op(&linalg::eye(d_sys));
        Ok((linalg::dagger(&one) * &l_z).norm_l2())
    }

    /// |⟨1|ρ(z)⟩ − i/z|: frequency-space probability conservation.
    pub fn probability_conservation_residual(&self, z: C64, rho0: &DensityMatrix) -> Result<f64> {
        let rho = self.rho_z(z, rho0)?;
        let d_sys = self.dims().d_sys;
        let tr: C64 = (0..d_sys).map(|m| rho[(m * d_sys + m, 0)]).sum();
        Ok((tr - I / z).norm())
    }
}
