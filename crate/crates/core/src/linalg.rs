//! Dense complex linear algebra helpers shared by every module.
//!
//! Everything runs on `faer::Mat<Complex64>`. Factorizations (LU, general
//! and self-adjoint eigendecompositions) are delegated to faer; the matrix
//! exponential is implemented here by scaling and squaring so that semigroup
//! oracles do not depend on any eigendecomposition path.

use faer::linalg::kron::kron as faer_kron;
use faer::{Mat, Side};
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

/// Square complex matrix used for operators and superoperators alike.
pub type CMat = Mat<C64>;

pub const ONE: C64 = C64 { re: 1.0, im: 0.0 };
pub const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
pub const I: C64 = C64 { re: 0.0, im: 1.0 };

/// Complex identity matrix.
pub fn eye(n: usize) -> CMat {
    Mat::identity(n, n)
}

/// Tr A.
pub fn trace(a: &CMat) -> C64 {
    (0..a.nrows().min(a.ncols())).map(|i| a[(i, i)]).sum()
}

/// Conjugate transpose, owned.
pub fn dagger(a: &CMat) -> CMat {
    a.adjoint().to_owned()
}

/// (A + A†)/2.
pub fn hermitize(a: &CMat) -> CMat {
    let ad = dagger(a);
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| 0.5 * (a[(i, j)] + ad[(i, j)]))
}

/// Frobenius (Hilbert-Schmidt) norm.
pub fn fro_norm(a: &CMat) -> f64 {
    a.norm_l2()
}

/// ‖A − A†‖ relative to ‖A‖; 0 for the zero matrix.
pub fn hermiticity_defect(a: &CMat) -> f64 {
    let norm = fro_norm(a);
    if norm == 0.0 {
        return 0.0;
    }
    (a - dagger(a)).norm_l2() / norm
}

/// Kronecker product A ⊗ B.
pub fn kron(a: &CMat, b: &CMat) -> CMat {
    let mut dst = Mat::zeros(a.nrows() * b.nrows(), a.ncols() * b.ncols());
    faer_kron(dst.as_mut(), a.as_ref(), b.as_ref());
    dst
}

/// Scalar multiple of a matrix.
pub fn scale(c: C64, a: &CMat) -> CMat {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| c * a[(i, j)])
}

/// Solve A x = b for a square A via partially pivoted LU.
///
/// Rejects numerically singular systems by checking the solve residual.
pub fn lu_solve(a: &CMat, b: &CMat, op: &'static str) -> Result<CMat> {
    let lu = a.partial_piv_lu();
    let x = faer::linalg::solvers::Solve::solve(&lu, b);
    let resid = (a * &x - b).norm_l2();
    let scale = b.norm_l2().max(1e-300);
    if !resid.is_finite() || resid > 1e-8 * scale.max(a.norm_l2() * x.norm_l2()) {
        return Err(Error::SingularSolve {
            op,
            detail: format!("residual {resid:.3e} vs rhs norm {scale:.3e}"),
        });
    }
    Ok(x)
}

/// Eigenvalues and right eigenvectors of a general complex matrix.
///
/// Columns of the returned matrix are the (unit-norm) eigenvectors, in the
/// same order as the eigenvalues.
pub fn eig_general(a: &CMat, op: &'static str) -> Result<(Vec<C64>, CMat)> {
    let dec = a.eigen().map_err(|_| Error::EigFailure { op })?;
    let n = a.nrows();
    let vals: Vec<C64> = (0..n).map(|k| dec.S()[k]).collect();
    let mut vecs = dec.U().to_owned();
    for k in 0..n {
        let norm: f64 = (0..n).map(|i| vecs[(i, k)].norm_sqr()).sum::<f64>().sqrt();
        if norm > 0.0 {
            for i in 0..n {
                vecs[(i, k)] /= C64::new(norm, 0.0);
            }
        }
    }
    Ok((vals, vecs))
}

/// Eigenvalues (ascending) and orthonormal eigenvectors of a hermitian matrix.
pub fn eig_hermitian(a: &CMat, op: &'static str) -> Result<(Vec<f64>, CMat)> {
    let dec = a
        .self_adjoint_eigen(Side::Lower)
        .map_err(|_| Error::EigFailure { op })?;
    let n = a.nrows();
    let mut pairs: Vec<(f64, usize)> = (0..n).map(|k| (dec.S()[k].re, k)).collect();
    pairs.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap());
    let vals: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let vecs = Mat::from_fn(n, n, |i, j| dec.U()[(i, pairs[j].1)]);
    Ok((vals, vecs))
}

/// Spectral radius of a hermitian matrix (largest |eigenvalue|).
pub fn hermitian_spectral_radius(a: &CMat, op: &'static str) -> Result<f64> {
    let (vals, _) = eig_hermitian(a, op)?;
    Ok(vals.iter().fold(0.0_f64, |m, v| m.max(v.abs())))
}

/// Matrix exponential e^A by scaling and squaring with a Taylor kernel.
///
/// The scaled block has norm ≤ 1/2, so 24 Taylor terms reach machine
/// precision; the result is then squared back up.
pub fn expm(a: &CMat) -> CMat {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "expm needs a square matrix");
    let norm = a.norm_max() * n as f64;
    let s = if norm > 0.5 {
        (norm / 0.5).log2().ceil() as u32
    } else {
        0
    };
    let factor = C64::new(1.0 / (2.0_f64).powi(s as i32), 0.0);
    let b = scale(factor, a);

    let mut result = eye(n);
    let mut term = eye(n);
    for k in 1..=24 {
        term = &term * &b;
        term = scale(C64::new(1.0 / k as f64, 0.0), &term);
        result = result + &term;
    }
    for _ in 0..s {
        result = &result * &result;
    }
    result
}

/// Max |entry| of A − B, for quick closeness checks in tests and validators.
pub fn max_abs_diff(a: &CMat, b: &CMat) -> f64 {
    (a - b).norm_max()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn randish(n: usize, seed: u64) -> CMat {
        // small deterministic pseudo-random fill, test-local
        let mut state = seed.wrapping_mul(0x9E3779B97F4A7C15).wrapping_add(1);
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        Mat::from_fn(n, n, |_, _| C64::new(next(), next()))
    }

    #[test]
    fn trace_of_identity() {
        assert_eq!(trace(&eye(5)), C64::new(5.0, 0.0));
    }

    #[test]
    fn lu_solve_recovers_solution() {
        let a = randish(8, 3) + scale(C64::new(4.0, 0.0), &eye(8));
        let x_true = randish(8, 4).get(.., 0..2).to_owned();
        let b = &a * &x_true;
        let x = lu_solve(&a, &b, "test").unwrap();
        assert!(max_abs_diff(&x, &x_true) < 1e-10);
    }

    #[test]
    fn eig_general_reconstructs() {
        let a = randish(6, 7);
        let (vals, vecs) = eig_general(&a, "test").unwrap();
        for k in 0..6 {
            let v = vecs.get(.., k..k + 1).to_owned();
            let av = &a * &v;
            let lv = scale(vals[k], &v);
            assert!((av - lv).norm_l2() < 1e-10);
        }
    }

    #[test]
    fn eig_hermitian_sorted_and_orthonormal() {
        let g = randish(6, 11);
        let h = hermitize(&g);
        let (vals, vecs) = eig_hermitian(&h, "test").unwrap();
        for w in vals.windows(2) {
            assert!(w[0] <= w[1]);
        }
        let gram = dagger(&vecs) * &vecs;
        assert!(max_abs_diff(&gram, &eye(6)) < 1e-12);
    }

    #[test]
    fn expm_matches_scalar_exp_on_diagonal() {
        let d = Mat::from_fn(3, 3, |i, j| {
            if i == j {
                C64::new(-0.3 * (i as f64 + 1.0), 0.7 * i as f64)
            } else {
                ZERO
            }
        });
        let e = expm(&d);
        for i in 0..3 {
            let expected = d[(i, i)].exp();
            assert_relative_eq!(e[(i, i)].re, expected.re, epsilon = 1e-13);
            assert_relative_eq!(e[(i, i)].im, expected.im, epsilon = 1e-13);
        }
    }

    #[test]
    fn expm_agrees_with_hermitian_eig_route() {
        let h = hermitize(&randish(5, 21));
        // e^{-iH} via eigendecomposition
        let (vals, vecs) = eig_hermitian(&h, "test").unwrap();
        let phases = Mat::from_fn(5, 5, |i, j| {
            if i == j {
                (C64::new(0.0, -vals[i])).exp()
            } else {
                ZERO
            }
        });
        let via_eig = &vecs * &phases * dagger(&vecs);
        let via_expm = expm(&scale(-I, &h));
        assert!(max_abs_diff(&via_eig, &via_expm) < 1e-12);
    }

    #[test]
    fn expm_of_commuting_sum_factorizes() {
        let a = randish(4, 31);
        let e1 = expm(&a) * expm(&a);
        let e2 = expm(&scale(C64::new(2.0, 0.0), &a));
        assert!(max_abs_diff(&e1, &e2) < 1e-11);
    }
}
