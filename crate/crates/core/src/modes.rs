//! Effective eigenvalues z_k = ω_k − iγ_k, residue amplitudes, and mode sets.
//!
//! Each band of the effective Liouville defines a self-consistency equation
//! z = λ_k(z) whose solution in the lower half plane carries the oscillation
//! frequency ω_k and decay rate γ_k of one relaxation mode. The residue of
//! i[z−L(z)]⁻¹ at the pole gives the amplitude
//!
//! ```text
//! a_k = (L_k(z_k)|ρ₀) / (1 − λ'_k) ,       A_k = a_k Λ_k ,
//! ```
//!
//! and the reduced state reconstructs as ρ_∞ plus hermitian mode pairs.
//!
//! Finite environments are treated through a smoothing shift: all solver
//! evaluations use L(z + iε) with the ε of the band grid, which keeps the
//! resolvent argument in its analyticity domain and realizes the broadened
//! bands' continuation below the real axis. Modes with γ_k approaching ε are
//! not representable at that smoothing and surface as solver failures.

use num_complex::Complex64 as C64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::hs::{self, DensityMatrix};
use crate::linalg::{self, CMat};
use crate::projection::EffectiveLiouvilleEvaluator;
use crate::spectral::{self, BandTrack, SpectralDecomposition};

/// Newton convergence tolerance relative to the frequency scale.
pub const NEWTON_TOL: f64 = 1e-10;

/// Iteration cap of the effective-eigenvalue solver.
pub const MAX_NEWTON_ITERS: usize = 100;

/// Decay rates below this (relative to scale) count as non-decaying.
pub const GAMMA_FLOOR_REL: f64 = 1e-9;

/// Amplitude floor: modes with ‖A_k‖ below this × ‖ρ₀‖ are accidentally dark.
pub const AMP_FLOOR_REL: f64 = 1e-10;

/// Pairing tolerance for z_k ↔ −conj(z_k), relative to scale.
pub const PAIR_TOL_REL: f64 = 1e-6;

/// Anything that can produce a generator matrix and its z-derivative.
///
/// The physical implementation is [`EffectiveLiouvilleEvaluator`]; test
/// doubles with closed-form λ(z) plug into the same solver.
pub trait FrequencyGenerator {
    fn generator_at(&self, z: C64) -> Result<CMat>;
    fn generator_with_derivative(&self, z: C64) -> Result<(CMat, CMat)>;
    fn frequency_scale(&self) -> f64;
}

impl FrequencyGenerator for EffectiveLiouvilleEvaluator {
    fn generator_at(&self, z: C64) -> Result<CMat> {
        self.evaluate(z)
    }

    fn generator_with_derivative(&self, z: C64) -> Result<(CMat, CMat)> {
        self.evaluate_with_derivative(z)
    }

    fn frequency_scale(&self) -> f64 {
        self.spectral_scale()
    }
}

/// Converged solution of z = λ_k(z) for one band, before amplitudes.
#[derive(Debug, Clone)]
pub struct SolvedBand {
    /// Band index within the track (0 is the zero branch and never solved).
    pub band: usize,
    pub z: C64,
    /// Right eigenmatrix Λ_k at z_k.
    pub right: CMat,
    /// Bi-orthonormal left partner at z_k.
    pub left: CMat,
    /// dλ_k/dz at z_k from first-order perturbation (L_k|L'(z)|R_k).
    pub lambda_prime: C64,
    pub iterations: usize,
}

impl SolvedBand {
    pub fn omega(&self) -> f64 {
        self.z.re
    }

    pub fn gamma(&self) -> f64 {
        -self.z.im
    }
}

/// One relaxation mode with its residue amplitude.
#[derive(Debug, Clone)]
pub struct EffectiveMode {
    pub k: usize,
    pub z: C64,
    /// Λ_k, the right eigenmatrix at z_k.
    pub lambda_mat: CMat,
    pub left_mat: CMat,
    pub lambda_prime: C64,
    /// a_k = (L_k(z_k)|ρ₀)/(1−λ'_k).
    pub amplitude: C64,
    /// A_k = a_k Λ_k.
    pub a_mat: CMat,
}

impl EffectiveMode {
    pub fn omega(&self) -> f64 {
        self.z.re
    }

    pub fn gamma(&self) -> f64 {
        -self.z.im
    }
}

/// Solved modes, stationary state, and the relaxation scale of one model.
#[derive(Debug, Clone)]
pub struct ModeSet {
    pub rho_infinity: DensityMatrix,
    /// Constant term of the reconstruction: the hermitized zero-branch
    /// residue (L₀|ρ₀)·R₀. Coincides with ρ_∞ whenever the zero mode is
    /// unique; for separated systems it keeps the reconstruction exact.
    pub stationary_residue: CMat,
    /// Modes k = 1..N (the zero branch is represented by the residue).
    pub modes: Vec<EffectiveMode>,
    /// Longest relaxation time 1/γ₁ over contributing decaying modes;
    /// infinite for non-relaxing (closed) dynamics.
    pub tau: f64,
    /// Index pairs into `modes` with z_{k'} ≈ −conj(z_k).
    pub pairing: Vec<(usize, usize)>,
    pub markov: bool,
    /// Smoothing ε the modes were solved at.
    pub epsilon: f64,
    /// False when the zero eigenvalue is shared (independent subsystems).
    pub zero_mode_unique: bool,
    pub zero_mode_count: usize,
    /// Solved bands at z ≈ 0 that were folded into the stationary residue;
    /// they belong to the spectrum with ω = 0, γ = 0.
    pub folded_zero_modes: usize,
    /// Index into `modes` of the τ-setting mode (Λ̂), when one exists.
    pub slowest: Option<usize>,
    /// Frequency scale used for all relative tolerances.
    pub scale: f64,
    /// ‖ρ₀‖ the amplitude floor was measured against.
    pub rho0_norm: f64,
}

impl ModeSet {
    /// Modes above the amplitude floor with γ above the decay floor.
    pub fn contributing_decaying(&self) -> Vec<usize> {
        let amp_floor = AMP_FLOOR_REL * self.rho0_norm;
        let gamma_floor = GAMMA_FLOOR_REL * self.scale;
        (0..self.modes.len())
            .filter(|&i| {
                hs::hs_norm(&self.modes[i].a_mat) > amp_floor && self.modes[i].gamma() > gamma_floor
            })
            .collect()
    }

    /// Sorted decay rates of contributing modes.
    pub fn relaxation_rates(&self) -> Vec<f64> {
        let mut rates: Vec<f64> = self
            .contributing_decaying()
            .into_iter()
            .map(|i| self.modes[i].gamma())
            .collect();
        rates.sort_by(|a, b| a.partial_cmp(b).unwrap());
        rates
    }

    /// |ω| of the τ-setting mode.
    pub fn slow_frequency(&self) -> Option<f64> {
        self.slowest.map(|i| self.modes[i].omega().abs())
    }

    /// The slowest mode's eigenmatrix Λ̂.
    pub fn slowest_eigenmatrix(&self) -> Option<&CMat> {
        self.slowest.map(|i| &self.modes[i].lambda_mat)
    }

    pub fn is_relaxing(&self) -> bool {
        self.tau.is_finite()
    }

    /// Quantum-map spectrum over unit time, Φ_k = e^{−iz_k}; lies in the
    /// closed unit disc with Φ₀ = 1 for the zero mode.
    pub fn quantum_map_spectrum(&self) -> Vec<C64> {
        let mut phis = vec![C64::new(1.0, 0.0)];
        phis.extend(
            self.modes
                .iter()
                .map(|m| (C64::new(0.0, -1.0) * m.z).exp()),
        );
        phis
    }

    /// JSON export with per-mode data and the stationary state.
    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct ModeOut {
            k: usize,
            omega: f64,
            gamma: f64,
            a_re: f64,
            a_im: f64,
            lambda_prime_re: f64,
            lambda_prime_im: f64,
        }
        #[derive(Serialize)]
        struct ModeSetOut {
            modes: Vec<ModeOut>,
            rho_infinity: Vec<f64>,
            tau: Option<f64>,
            markov: bool,
            epsilon: f64,
            zero_mode_unique: bool,
        }
        let d = self.rho_infinity.dim();
        let mut rho_flat = Vec::with_capacity(2 * d * d);
        for m in 0..d {
            for n in 0..d {
                let v = self.rho_infinity.mat()[(m, n)];
                rho_flat.push(v.re);
                rho_flat.push(v.im);
            }
        }
        let out = ModeSetOut {
            modes: self
                .modes
                .iter()
                .map(|m| ModeOut {
                    k: m.k,
                    omega: m.omega(),
                    gamma: m.gamma(),
                    a_re: m.amplitude.re,
                    a_im: m.amplitude.im,
                    lambda_prime_re: m.lambda_prime.re,
                    lambda_prime_im: m.lambda_prime.im,
                })
                .collect(),
            rho_infinity: rho_flat,
            tau: if self.tau.is_finite() { Some(self.tau) } else { None },
            markov: self.markov,
            epsilon: self.epsilon,
            zero_mode_unique: self.zero_mode_unique,
        };
        serde_json::to_string_pretty(&out).expect("mode set serializes")
    }
}

fn normalized_overlap(a: &CMat, b: &CMat) -> f64 {
    let na = a.norm_l2();
    let nb = b.norm_l2();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (linalg::dagger(a) * b)[(0, 0)].norm() / (na * nb)
}

/// λ'_k = (L_k| L'(z) |R_k) for a bi-normalized pair.
fn lambda_prime_of(dec: &SpectralDecomposition, k: usize, deriv: &CMat) -> C64 {
    let lv = hs::vec_op(&dec.left[k]);
    let rv = hs::vec_op(&dec.right[k]);
    (linalg::dagger(&lv) * deriv * &rv)[(0, 0)]
}

/// Newton iteration on f(z) = z − λ_k(z + iε), tracking the mode identity by
/// eigenvector overlap against the previous iterate.
pub fn solve_effective_eigenvalue<G: FrequencyGenerator>(
    gen: &G,
    band: usize,
    z_init: C64,
    eps_shift: f64,
    init_vec: Option<&CMat>,
) -> Result<SolvedBand> {
    let scale = gen.frequency_scale().max(1e-300);
    let shift = C64::new(0.0, eps_shift);
    let mut z = z_init;
    let mut v_prev: Option<CMat> = init_vec.cloned();
    let mut last_res = f64::INFINITY;
    let mut trace_log = String::new();

    for iter in 0..MAX_NEWTON_ITERS {
        if z.im > 1e-9 * scale {
            return Err(Error::UpperHalfPlaneDrift { k: band, im: z.im });
        }
        let (l_z, deriv) = gen
            .generator_with_derivative(z + shift)
            .map_err(|e| Error::SolverFailure {
                k: band,
                iters: iter,
                trace: format!("evaluation failed at z = {z}: {e}; {trace_log}"),
            })?;
        let dec = spectral::decompose(&l_z, z + shift)?;
        let n = dec.eigenvalues.len();
        let idx = match &v_prev {
            Some(v) => {
                let mut best = (0usize, -1.0_f64);
                for j in 0..n {
                    let ov = normalized_overlap(v, &hs::vec_op(&dec.right[j]));
                    if ov > best.1 {
                        best = (j, ov);
                    }
                }
                best.0
            }
            None => {
                // nearest eigenvalue to the iterate
                let mut best = (0usize, f64::INFINITY);
                for j in 0..n {
                    let d = (dec.eigenvalues[j] - z).norm();
                    if d < best.1 {
                        best = (j, d);
                    }
                }
                best.0
            }
        };
        let lam = dec.eigenvalues[idx];
        let lam_prime = lambda_prime_of(&dec, idx, &deriv);
        v_prev = Some(hs::vec_op(&dec.right[idx]));

        let f = z - lam;
        let res = f.norm();
        if res <= NEWTON_TOL * scale {
            return Ok(SolvedBand {
                band,
                z,
                right: dec.right[idx].clone(),
                left: dec.left[idx].clone(),
                lambda_prime: lam_prime,
                iterations: iter,
            });
        }
        let fprime = C64::new(1.0, 0.0) - lam_prime;
        if fprime.norm() < 1e-8 {
            return Err(Error::SolverFailure {
                k: band,
                iters: iter,
                trace: format!("|1 − λ'| = {:.3e} too small at z = {z}", fprime.norm()),
            });
        }
        let mut step = f / fprime;
        if res > last_res {
            step *= C64::new(0.5, 0.0);
        }
        last_res = res;
        trace_log = format!("iter {iter}: z = {z}, |f| = {res:.3e}");
        z -= step;
    }
    Err(Error::SolverFailure {
        k: band,
        iters: MAX_NEWTON_ITERS,
        trace: format!("no convergence; {trace_log}"),
    })
}

/// Initial guess for one band: the band value at the grid point closest to
/// self-consistency, z_init = λ_k(ω* + iε) with ω* = argmin |ω_j − Re λ_k|.
fn band_initial_guess(track: &BandTrack, band: usize) -> (C64, CMat) {
    let b = &track.bands[band];
    let mut best = (0usize, f64::INFINITY);
    for (j, z) in track.grid.iter().enumerate() {
        let mismatch = (z.re - b.lambda[j].re).abs();
        if mismatch < best.1 {
            best = (j, mismatch);
        }
    }
    (b.lambda[best.0], hs::vec_op(&b.right[best.0]))
}

/// Solve one tracked band of a physical evaluator.
pub fn solve_band_mode(
    ev: &EffectiveLiouvilleEvaluator,
    track: &BandTrack,
    band: usize,
) -> Result<SolvedBand> {
    let (z_init, v_init) = band_initial_guess(track, band);
    solve_effective_eigenvalue(ev, band, z_init, track.epsilon, Some(&v_init))
}

/// Residue amplitude a_k = (L_k(z_k)|ρ₀)/(1 − λ'_k).
pub fn amplitude(solved: &SolvedBand, rho0: &DensityMatrix) -> Result<C64> {
    let denom = C64::new(1.0, 0.0) - solved.lambda_prime;
    if denom.norm() <= 1e-8 {
        return Err(Error::NearDefectivePole {
            k: solved.band,
            value: denom.norm(),
        });
    }
    let overlap = hs::hs_inner(&solved.left, rho0.mat())?;
    Ok(overlap / denom)
}

fn finalize_mode_set(
    dec0: &SpectralDecomposition,
    solved: Vec<SolvedBand>,
    rho0: &DensityMatrix,
    markov: bool,
    epsilon: f64,
    scale: f64,
) -> Result<ModeSet> {
    let zero = spectral::zero_mode(dec0)?;
    let zero_tol = spectral::DEGENERACY_TOL * scale.max(1e-300);

    // Static content: the full zero-cluster residue Σ_i (L_i|ρ₀) R_i. This is
    // the spectral projection of ρ₀ onto the stationary subspace and is
    // invariant under the eigensolver's arbitrary basis choice inside a
    // degenerate cluster. Solved bands sitting at z ≈ 0 are folded in here
    // (they carry no time dependence) instead of being kept as modes.
    let d = dec0.dim_op();
    let mut residue: CMat = faer::Mat::zeros(d, d);
    for (k, v) in dec0.eigenvalues.iter().enumerate() {
        if v.norm() <= zero_tol {
            let w = hs::hs_inner(&dec0.left[k], rho0.mat())?;
            residue += linalg::scale(w, &dec0.right[k]);
        }
    }
    let stationary_residue = linalg::hermitize(&residue);
    let n_before = solved.len();
    let solved: Vec<SolvedBand> = solved
        .into_iter()
        .filter(|sb| sb.z.norm() > zero_tol)
        .collect();
    let folded_zero_modes = n_before - solved.len();

    // degenerate solved eigenvalues are out of scope (no t^n e^{-izt} terms)
    for i in 0..solved.len() {
        for j in (i + 1)..solved.len() {
            if (solved[i].z - solved[j].z).norm() <= spectral::DEGENERACY_TOL * scale {
                return Err(Error::DegenerateSpectrum {
                    op: "assemble_mode_set",
                    detail: format!(
                        "bands {} and {} converged to degenerate z = {}",
                        solved[i].band, solved[j].band, solved[i].z
                    ),
                });
            }
        }
    }

    let mut modes = Vec::with_capacity(solved.len());
    for sb in solved {
        let a = amplitude(&sb, rho0)?;
        let a_mat = linalg::scale(a, &sb.right);
        modes.push(EffectiveMode {
            k: modes.len() + 1,
            z: sb.z,
            lambda_mat: sb.right,
            left_mat: sb.left,
            lambda_prime: sb.lambda_prime,
            amplitude: a,
            a_mat,
        });
    }

    // hermitian pairing: z_{k'} ≈ −conj(z_k) for finite frequencies
    let pair_tol = PAIR_TOL_REL * scale;
    let mut pairing = Vec::new();
    let mut paired = vec![false; modes.len()];
    for i in 0..modes.len() {
        if paired[i] || modes[i].omega().abs() <= pair_tol {
            continue;
        }
        let target = -modes[i].z.conj();
        let mut best: Option<(usize, f64)> = None;
        for j in 0..modes.len() {
            if j == i || paired[j] {
                continue;
            }
            let d = (modes[j].z - target).norm();
            if best.map_or(true, |(_, bd)| d < bd) {
                best = Some((j, d));
            }
        }
        match best {
            Some((j, d)) if d <= pair_tol => {
                paired[i] = true;
                paired[j] = true;
                pairing.push((i, j));
            }
            _ => {
                return Err(Error::UnpairedMode {
                    k: modes[i].k,
                    z_re: modes[i].z.re,
                    z_im: modes[i].z.im,
                });
            }
        }
    }

    // τ = 1/min γ over contributing decaying modes
    let rho0_norm = hs::hs_norm(rho0.mat());
    let amp_floor = AMP_FLOOR_REL * rho0_norm;
    let gamma_floor = GAMMA_FLOOR_REL * scale;
    let mut min_gamma = f64::INFINITY;
    let mut slowest = None;
    for (i, m) in modes.iter().enumerate() {
        if hs::hs_norm(&m.a_mat) > amp_floor && m.gamma() > gamma_floor && m.gamma() < min_gamma {
            min_gamma = m.gamma();
            slowest = Some(i);
        }
    }
    let tau = if min_gamma.is_finite() {
        1.0 / min_gamma
    } else {
        f64::INFINITY
    };

    Ok(ModeSet {
        rho_infinity: zero.rho_infinity,
        stationary_residue,
        modes,
        tau,
        pairing,
        markov,
        epsilon,
        zero_mode_unique: zero.unique,
        zero_mode_count: zero.zero_count,
        folded_zero_modes,
        slowest,
        scale,
        rho0_norm,
    })
}

/// Track, solve every band, and assemble the full mode set.
pub fn assemble_mode_set(
    ev: &EffectiveLiouvilleEvaluator,
    rho0: &DensityMatrix,
    grid: &[C64],
) -> Result<ModeSet> {
    let track = spectral::track_bands(ev, grid)?;
    let epsilon = track.epsilon;
    let scale = ev.spectral_scale();

    // stationary state from the zero branch at z → i0 (smoothed)
    let dec0 = spectral::decompose(
        &ev.evaluate(C64::new(0.0, epsilon))?,
        C64::new(0.0, epsilon),
    )?;

    let mut solved = Vec::with_capacity(track.n_bands() - 1);
    for band in 1..track.n_bands() {
        solved.push(solve_band_mode(ev, &track, band)?);
    }
    finalize_mode_set(&dec0, solved, rho0, false, epsilon, scale)
}

/// Freeze the z-dependence at z★ and return the semigroup generator with its
/// (Markov) mode set: λ' = 0 and z_k = λ_k(z★).
pub fn markov_freeze(
    ev: &EffectiveLiouvilleEvaluator,
    z_star: C64,
    rho0: &DensityMatrix,
) -> Result<(CMat, ModeSet)> {
    let l_star = ev.evaluate(z_star)?;
    let ms = mode_set_from_generator(&l_star, rho0, ev.spectral_scale(), z_star.im)?;
    Ok((l_star, ms))
}

/// Mode set of a fixed (z-independent) generator.
///
/// Used by the Markov freeze and by synthetic generators in tests; the
/// eigenvalues are the effective eigenvalues themselves.
pub fn mode_set_from_generator(
    generator: &CMat,
    rho0: &DensityMatrix,
    scale: f64,
    epsilon: f64,
) -> Result<ModeSet> {
    let dec = spectral::decompose(generator, C64::new(0.0, epsilon))?;
    let mut solved = Vec::new();
    for k in 1..dec.eigenvalues.len() {
        solved.push(SolvedBand {
            band: k,
            z: dec.eigenvalues[k],
            right: dec.right[k].clone(),
            left: dec.left[k].clone(),
            lambda_prime: linalg::ZERO,
            iterations: 0,
        });
    }
    finalize_mode_set(&dec, solved, rho0, true, epsilon, scale)
}
