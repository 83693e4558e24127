//! Hilbert-Schmidt space algebra.
//!
//! Operators on a d-dimensional Hilbert space live in a d²-dimensional
//! operator space with the scalar product (A|B) = Tr{A†B}. Superoperators are
//! d²×d² matrices acting on vectorized operators.
//!
//! Conventions, fixed project-wide:
//! - vectorization is row-major: element (m,n) maps to flat index m·d + n,
//!   so vec(A X B) = (A ⊗ Bᵀ) vec(X);
//! - composite system⊗environment index: |s⟩⊗|e⟩ ↦ s·d_env + e.

use faer::Mat;
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::linalg::{self, CMat};

/// Relative tolerance for hermiticity checks (Hilbert-Schmidt norm).
pub const HERM_TOL: f64 = 1e-12;

/// Dimensions of the system/environment split.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HilbertDims {
    pub d_sys: usize,
    pub d_env: usize,
}

impl HilbertDims {
    pub fn new(d_sys: usize, d_env: usize) -> Result<Self> {
        if d_sys < 2 {
            return Err(Error::InvalidDims(format!("d_sys = {d_sys}, need ≥ 2")));
        }
        if d_env < 1 {
            return Err(Error::InvalidDims(format!("d_env = {d_env}, need ≥ 1")));
        }
        Ok(Self { d_sys, d_env })
    }

    pub fn d_tot(&self) -> usize {
        self.d_sys * self.d_env
    }

    /// Composite index of |s⟩⊗|e⟩.
    pub fn composite(&self, s: usize, e: usize) -> usize {
        s * self.d_env + e
    }
}

/// Hermitian, unit-trace, positive-semidefinite state.
#[derive(Debug, Clone)]
pub struct DensityMatrix {
    mat: CMat,
    tol_pos: f64,
}

impl DensityMatrix {
    /// Default positivity tolerance.
    pub const DEFAULT_TOL_POS: f64 = 1e-10;

    /// Validate and wrap a candidate state.
    pub fn new(mat: CMat, tol_pos: f64) -> Result<Self> {
        if mat.nrows() != mat.ncols() {
            return Err(Error::InvalidDensityMatrix(format!(
                "not square: {}x{}",
                mat.nrows(),
                mat.ncols()
            )));
        }
        let defect = linalg::hermiticity_defect(&mat);
        if defect > HERM_TOL {
            return Err(Error::InvalidDensityMatrix(format!(
                "hermiticity defect {defect:.3e} exceeds {HERM_TOL:.0e}"
            )));
        }
        let tr = linalg::trace(&mat);
        if (tr - C64::new(1.0, 0.0)).norm() > 1e-12 {
            return Err(Error::InvalidDensityMatrix(format!(
                "trace {} differs from 1",
                tr
            )));
        }
        let (evals, _) = linalg::eig_hermitian(&linalg::hermitize(&mat), "DensityMatrix::new")?;
        let min = evals.first().copied().unwrap_or(0.0);
        if min < -tol_pos {
            return Err(Error::InvalidDensityMatrix(format!(
                "minimum eigenvalue {min:.3e} below -{tol_pos:.0e}"
            )));
        }
        Ok(Self { mat, tol_pos })
    }

    pub fn from_mat(mat: CMat) -> Result<Self> {
        Self::new(mat, Self::DEFAULT_TOL_POS)
    }

    /// ρ = |ψ⟩⟨ψ| from a (normalized on entry) pure state.
    pub fn pure_state(psi: &[C64]) -> Result<Self> {
        let norm: f64 = psi.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::InvalidDensityMatrix("zero state vector".into()));
        }
        let d = psi.len();
        let mat = Mat::from_fn(d, d, |i, j| psi[i] * psi[j].conj() / C64::new(norm * norm, 0.0));
        Self::from_mat(mat)
    }

    /// 1/d.
    pub fn maximally_mixed(d: usize) -> Self {
        let mat = linalg::scale(C64::new(1.0 / d as f64, 0.0), &linalg::eye(d));
        Self {
            mat,
            tol_pos: Self::DEFAULT_TOL_POS,
        }
    }

    /// Thermal state e^{-βH}/Z of a hermitian H. Commutes with H by construction.
    pub fn thermal(h: &CMat, beta: f64) -> Result<Self> {
        check_hermitian(h, "DensityMatrix::thermal")?;
        let (evals, evecs) = linalg::eig_hermitian(h, "DensityMatrix::thermal")?;
        let e0 = evals.first().copied().unwrap_or(0.0);
        let weights: Vec<f64> = evals.iter().map(|e| (-beta * (e - e0)).exp()).collect();
        let z: f64 = weights.iter().sum();
        let d = h.nrows();
        let diag = Mat::from_fn(d, d, |i, j| {
            if i == j {
                C64::new(weights[i] / z, 0.0)
            } else {
                linalg::ZERO
            }
        });
        let mat = &evecs * diag * linalg::dagger(&evecs);
        Self::new(linalg::hermitize(&mat), Self::DEFAULT_TOL_POS)
    }

    pub fn mat(&self) -> &CMat {
        &self.mat
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn tol_pos(&self) -> f64 {
        self.tol_pos
    }
}

/// Flatten an operator into a column vector, row-major.
pub fn vec_op(x: &CMat) -> CMat {
    let d = x.nrows();
    Mat::from_fn(d * x.ncols(), 1, |idx, _| x[(idx / d, idx % d)])
}

/// Inverse of [`vec_op`] for a d×d operator.
pub fn unvec_op(v: &CMat, d: usize) -> CMat {
    assert_eq!(v.nrows(), d * d, "unvec: length must be d²");
    Mat::from_fn(d, d, |m, n| v[(m * d + n, 0)])
}

/// Hilbert-Schmidt scalar product (A|B) = Tr{A†B}.
pub fn hs_inner(a: &CMat, b: &CMat) -> Result<C64> {
    if a.nrows() != b.nrows() || a.ncols() != b.ncols() {
        return Err(Error::DimensionMismatch {
            op: "hs_inner",
            detail: format!(
                "{}x{} vs {}x{}",
                a.nrows(),
                a.ncols(),
                b.nrows(),
                b.ncols()
            ),
        });
    }
    let mut acc = linalg::ZERO;
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            acc += a[(i, j)].conj() * b[(i, j)];
        }
    }
    Ok(acc)
}

/// Hilbert-Schmidt norm ‖A‖ = √(A|A).
pub fn hs_norm(a: &CMat) -> f64 {
    linalg::fro_norm(a)
}

pub(crate) fn check_hermitian(h: &CMat, op: &'static str) -> Result<()> {
    let defect = linalg::hermiticity_defect(h);
    if defect > HERM_TOL {
        return Err(Error::NotHermitian {
            op,
            defect,
            tol: HERM_TOL,
        });
    }
    Ok(())
}

/// Commutator superoperator L· = [H, ·] of a hermitian H.
///
/// Under the row-major convention this is H⊗1 − 1⊗Hᵀ, so
/// L vec(X) = vec(HX − XH).
pub fn liouvillian(h: &CMat) -> Result<CMat> {
    check_hermitian(h, "liouvillian")?;
    let d = h.nrows();
    let id = linalg::eye(d);
    let ht = h.transpose().to_owned();
    Ok(linalg::kron(h, &id) - linalg::kron(&id, &ht))
}

/// Partial trace over the environment factor.
///
/// (Tr_E X)_{s s'} = Σ_e X_{(s,e),(s',e)} under the composite index
/// convention; preserves the full trace.
pub fn partial_trace_env(x: &CMat, dims: HilbertDims) -> Result<CMat> {
    let d_tot = dims.d_tot();
    if x.nrows() != d_tot || x.ncols() != d_tot {
        return Err(Error::DimensionMismatch {
            op: "partial_trace_env",
            detail: format!("operator is {}x{}, dims give d_tot = {d_tot}", x.nrows(), x.ncols()),
        });
    }
    let (ds, de) = (dims.d_sys, dims.d_env);
    Ok(Mat::from_fn(ds, ds, |s, sp| {
        (0..de)
            .map(|e| x[(dims.composite(s, e), dims.composite(sp, e))])
            .sum()
    }))
}

/// Embed a system operator as X ⊗ ρ_E on the total space.
pub fn embed_system(x: &CMat, rho_env: &DensityMatrix, dims: HilbertDims) -> Result<CMat> {
    if x.nrows() != dims.d_sys || x.ncols() != dims.d_sys {
        return Err(Error::DimensionMismatch {
            op: "embed_system",
            detail: format!("system operator is {}x{}, d_sys = {}", x.nrows(), x.ncols(), dims.d_sys),
        });
    }
    if rho_env.dim() != dims.d_env {
        return Err(Error::DimensionMismatch {
            op: "embed_system",
            detail: format!("rho_E dim {} vs d_env {}", rho_env.dim(), dims.d_env),
        });
    }
    Ok(linalg::kron(x, rho_env.mat()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{dagger, eye, hermitize, max_abs_diff, scale, ZERO};
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn random_cmat(d: usize, rng: &mut ChaCha8Rng) -> CMat {
        Mat::from_fn(d, d, |_, _| {
            C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
        })
    }

    #[test]
    fn hs_inner_identity_gives_dimension() {
        let id = eye(4);
        assert_eq!(hs_inner(&id, &id).unwrap(), C64::new(4.0, 0.0));
    }

    #[test]
    fn hs_inner_orthogonal_dyads() {
        // A = |0⟩⟨1|, B = |1⟩⟨0|
        let mut a: CMat = Mat::zeros(2, 2);
        let mut b: CMat = Mat::zeros(2, 2);
        a[(0, 1)] = C64::new(1.0, 0.0);
        b[(1, 0)] = C64::new(1.0, 0.0);
        assert_eq!(hs_inner(&a, &b).unwrap(), ZERO);
    }

    #[test]
    fn hs_inner_matches_elementwise_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let a = random_cmat(3, &mut rng);
        let b = random_cmat(3, &mut rng);
        // independent double-loop oracle
        let mut expect = ZERO;
        for m in 0..3 {
            for n in 0..3 {
                expect += a[(m, n)].conj() * b[(m, n)];
            }
        }
        let got = hs_inner(&a, &b).unwrap();
        assert_relative_eq!(got.re, expect.re, epsilon = 1e-14);
        assert_relative_eq!(got.im, expect.im, epsilon = 1e-14);
        // conjugate symmetry
        let rev = hs_inner(&b, &a).unwrap();
        assert_relative_eq!(rev.re, got.re, epsilon = 1e-14);
        assert_relative_eq!(rev.im, -got.im, epsilon = 1e-14);
    }

    #[test]
    fn hs_inner_rejects_dimension_mismatch() {
        assert!(hs_inner(&eye(2), &eye(3)).is_err());
    }

    #[test]
    fn liouvillian_of_diagonal_has_bohr_frequencies() {
        let (e1, e2) = (0.35, -1.2);
        let h = Mat::from_fn(2, 2, |i, j| {
            if i == j {
                C64::new(if i == 0 { e1 } else { e2 }, 0.0)
            } else {
                ZERO
            }
        });
        let l = liouvillian(&h).unwrap();
        let (mut vals, _) = linalg::eig_hermitian(&l, "test").unwrap();
        vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut expect = vec![0.0, 0.0, e1 - e2, e2 - e1];
        expect.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (v, e) in vals.iter().zip(expect.iter()) {
            assert_relative_eq!(v, e, epsilon = 1e-12);
        }
    }

    #[test]
    fn liouvillian_of_identity_multiple_vanishes() {
        let h = scale(C64::new(2.7, 0.0), &eye(3));
        let l = liouvillian(&h).unwrap();
        assert!(l.norm_max() < 1e-14);
    }

    #[test]
    fn liouvillian_action_matches_commutator_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let h = hermitize(&random_cmat(3, &mut rng));
        let x = random_cmat(3, &mut rng);
        let l = liouvillian(&h).unwrap();
        let got = unvec_op(&(&l * vec_op(&x)), 3);
        let expect = &h * &x - &x * &h;
        assert!(max_abs_diff(&got, &expect) < 1e-13);
    }

    #[test]
    fn liouvillian_rejects_non_hermitian() {
        let mut h: CMat = Mat::zeros(2, 2);
        h[(0, 1)] = C64::new(1.0, 0.0);
        assert!(liouvillian(&h).is_err());
    }

    #[test]
    fn liouvillian_is_hermitian_superoperator() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let h = hermitize(&random_cmat(4, &mut rng));
        let l = liouvillian(&h).unwrap();
        assert!(linalg::hermiticity_defect(&l) <= 1e-12);
    }

    #[test]
    fn total_liouvillian_zero_eigenvalue_multiplicity() {
        // eigenvalue 0 at least d_tot-fold degenerate for any hermitian H
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let d_tot = 6;
        let h = hermitize(&random_cmat(d_tot, &mut rng));
        let l = liouvillian(&h).unwrap();
        let (vals, _) = linalg::eig_hermitian(&l, "test").unwrap();
        let scale = vals.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let zeros = vals.iter().filter(|v| v.abs() <= 1e-10 * scale).count();
        assert!(zeros >= d_tot, "found {zeros} zero eigenvalues, need ≥ {d_tot}");
    }

    #[test]
    fn partial_trace_recovers_tensor_factor() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let dims = HilbertDims::new(2, 3).unwrap();
        let rho = {
            let g = random_cmat(2, &mut rng);
            let p = &g * dagger(&g);
            let tr = linalg::trace(&p);
            scale(tr.inv(), &p)
        };
        let rho_env = {
            let g = random_cmat(3, &mut rng);
            let p = &g * dagger(&g);
            let tr = linalg::trace(&p);
            DensityMatrix::from_mat(hermitize(&scale(tr.inv(), &p))).unwrap()
        };
        let x = linalg::kron(&rho, rho_env.mat());
        let back = partial_trace_env(&x, dims).unwrap();
        assert!(max_abs_diff(&back, &rho) < 1e-13);
    }

    #[test]
    fn partial_trace_of_identity() {
        let dims = HilbertDims::new(2, 3).unwrap();
        let got = partial_trace_env(&eye(6), dims).unwrap();
        let expect = scale(C64::new(3.0, 0.0), &eye(2));
        assert!(max_abs_diff(&got, &expect) < 1e-14);
    }

    #[test]
    fn partial_trace_matches_index_sum_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let dims = HilbertDims::new(2, 3).unwrap();
        let x = random_cmat(6, &mut rng);
        let got = partial_trace_env(&x, dims).unwrap();
        // triple-loop oracle
        for s in 0..2 {
            for sp in 0..2 {
                let mut acc = ZERO;
                for e in 0..3 {
                    acc += x[(s * 3 + e, sp * 3 + e)];
                }
                assert!((got[(s, sp)] - acc).norm() < 1e-14);
            }
        }
        // trace preservation
        let tr_red = linalg::trace(&got);
        let tr_full = linalg::trace(&x);
        assert!((tr_red - tr_full).norm() < 1e-13);
    }

    #[test]
    fn embed_entries_match_product_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let dims = HilbertDims::new(2, 3).unwrap();
        let x = random_cmat(2, &mut rng);
        let rho_env = DensityMatrix::maximally_mixed(3);
        let emb = embed_system(&x, &rho_env, dims).unwrap();
        for s in 0..2 {
            for e in 0..3 {
                for sp in 0..2 {
                    for ep in 0..3 {
                        let got = emb[(dims.composite(s, e), dims.composite(sp, ep))];
                        let expect = x[(s, sp)] * rho_env.mat()[(e, ep)];
                        assert!((got - expect).norm() < 1e-15);
                    }
                }
            }
        }
    }

    #[test]
    fn embed_then_trace_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let dims = HilbertDims::new(3, 2).unwrap();
        let x = random_cmat(3, &mut rng);
        let h_env = hermitize(&random_cmat(2, &mut rng));
        let rho_env = DensityMatrix::thermal(&h_env, 0.8).unwrap();
        let emb = embed_system(&x, &rho_env, dims).unwrap();
        let back = partial_trace_env(&emb, dims).unwrap();
        assert!(max_abs_diff(&back, &x) < 1e-13);
    }

    #[test]
    fn density_matrix_rejects_bad_inputs() {
        // non-unit trace
        assert!(DensityMatrix::from_mat(eye(2)).is_err());
        // non-hermitian
        let mut m: CMat = Mat::zeros(2, 2);
        m[(0, 0)] = C64::new(1.0, 0.0);
        m[(0, 1)] = C64::new(0.3, 0.1);
        assert!(DensityMatrix::from_mat(m).is_err());
        // negative eigenvalue
        let neg = Mat::from_fn(2, 2, |i, j| {
            if i == j {
                C64::new(if i == 0 { 1.5 } else { -0.5 }, 0.0)
            } else {
                ZERO
            }
        });
        assert!(DensityMatrix::from_mat(neg).is_err());
    }

    #[test]
    fn dims_validation() {
        assert!(HilbertDims::new(1, 3).is_err());
        assert!(HilbertDims::new(2, 0).is_err());
        assert_eq!(HilbertDims::new(2, 3).unwrap().d_tot(), 6);
    }

    proptest! {
        #[test]
        fn vec_unvec_roundtrip(entries in proptest::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 16)) {
            let x = Mat::from_fn(4, 4, |i, j| {
                let (re, im) = entries[i * 4 + j];
                C64::new(re, im)
            });
            let back = unvec_op(&vec_op(&x), 4);
            prop_assert!(max_abs_diff(&back, &x) == 0.0);
        }

        #[test]
        fn partial_trace_preserves_trace(seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let dims = HilbertDims::new(2, 3).unwrap();
            let x = random_cmat(6, &mut rng);
            let red = partial_trace_env(&x, dims).unwrap();
            let diff = (linalg::trace(&red) - linalg::trace(&x)).norm();
            prop_assert!(diff < 1e-13);
        }
    }
}
