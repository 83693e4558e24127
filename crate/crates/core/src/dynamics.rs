//! Time-domain dynamics: mode reconstruction, exact oracle, memory-kernel
//! integration, and relaxation reporting.
//!
//! The mode reconstruction evaluates
//!
//! ```text
//! ρ(t) = ρ_∞ + Σ_k ½ (A_k e^{−iω_k t} + A_k† e^{iω_k t}) e^{−γ_k t} ,
//! ```
//!
//! which is trace preserving by construction (the A_k are traceless) and
//! hermitian term by term. Positivity is monitored per sample, never
//! enforced: finite smoothing makes small transient violations possible and
//! they must stay visible.
//!
//! The brute-force oracle propagates the full model unitarily through the
//! eigendecomposition of H_tot and reduces by partial trace. The
//! Nakajima-Zwanzig integrator advances
//!
//! ```text
//! ∂_t ρ(t) = −i L_P ρ(t) − ∫₀ᵗ ds  L_PQ e^{−iL_Q (t−s)} L_QP ρ(s)
//! ```
//!
//! with trapezoidal memory quadrature and a second-order
//! predictor-corrector step; the sign of the memory term is fixed by
//! Laplace consistency with the frequency-domain form and verified against
//! the oracle.

use faer::Mat;
use num_complex::Complex64 as C64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::hs::{self, DensityMatrix, HilbertDims};
use crate::linalg::{self, CMat, I};
use crate::modes::ModeSet;
use crate::projection::PartitionedLiouville;

/// Basis the trajectory samples are expressed in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BasisLabel {
    Computational,
    StationaryEigenbasis,
    ObservableEigenbasis,
}

/// Time-sampled reduced states with a positivity log.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<CMat>,
    pub basis_label: BasisLabel,
    /// Minimum eigenvalue of ρ(t) per sample.
    pub positivity_log: Vec<f64>,
}

impl Trajectory {
    pub fn dim(&self) -> usize {
        self.states.first().map(|s| s.nrows()).unwrap_or(0)
    }

    /// Worst trace deviation |Tr ρ(t) − 1| over the trajectory.
    pub fn max_trace_defect(&self) -> f64 {
        self.states
            .iter()
            .map(|s| (linalg::trace(s) - C64::new(1.0, 0.0)).norm())
            .fold(0.0, f64::max)
    }

    /// Worst hermiticity defect ‖ρ − ρ†‖ over the trajectory.
    pub fn max_hermiticity_defect(&self) -> f64 {
        self.states
            .iter()
            .map(|s| (s - linalg::dagger(s)).norm_l2())
            .fold(0.0, f64::max)
    }

    /// Most negative eigenvalue seen along the trajectory.
    pub fn min_eigenvalue(&self) -> f64 {
        self.positivity_log.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// CSV export: t, d² columns re(ρ_mn), d² columns im(ρ_mn) row-major,
    /// then the minimum eigenvalue.
    pub fn to_csv(&self) -> String {
        let d = self.dim();
        let mut header = String::from("t");
        for m in 0..d {
            for n in 0..d {
                header.push_str(&format!(",re_{m}{n}"));
            }
        }
        for m in 0..d {
            for n in 0..d {
                header.push_str(&format!(",im_{m}{n}"));
            }
        }
        header.push_str(",min_eigenvalue\n");
        let mut out = header;
        for (i, t) in self.times.iter().enumerate() {
            out.push_str(&format!("{t:.16e}"));
            let s = &self.states[i];
            for m in 0..d {
                for n in 0..d {
                    out.push_str(&format!(",{:.16e}", s[(m, n)].re));
                }
            }
            for m in 0..d {
                for n in 0..d {
                    out.push_str(&format!(",{:.16e}", s[(m, n)].im));
                }
            }
            out.push_str(&format!(",{:.16e}\n", self.positivity_log[i]));
        }
        out
    }
}

fn min_eig_of(state: &CMat) -> f64 {
    linalg::eig_hermitian(&linalg::hermitize(state), "positivity_log")
        .map(|(vals, _)| vals.first().copied().unwrap_or(0.0))
        .unwrap_or(f64::NAN)
}

/// Reconstruct ρ(t) from a solved mode set.
pub fn reconstruct(ms: &ModeSet, times: &[f64]) -> Result<Trajectory> {
    if times.iter().any(|t| *t < 0.0 || !t.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "times",
            detail: "reconstruction times must be finite and ≥ 0".into(),
        });
    }
    let mut states = Vec::with_capacity(times.len());
    let mut positivity_log = Vec::with_capacity(times.len());
    for &t in times {
        let mut rho = ms.stationary_residue.clone();
        for m in &ms.modes {
            let damp = (-m.gamma() * t).exp();
            if damp == 0.0 {
                continue;
            }
            let osc = (C64::new(0.0, -m.omega() * t)).exp();
            let half = C64::new(0.5 * damp, 0.0);
            let fwd = linalg::scale(half * osc, &m.a_mat);
            let bwd = linalg::scale(half * osc.conj(), &linalg::dagger(&m.a_mat));
            rho = rho + fwd + bwd;
        }
        let rho = linalg::hermitize(&rho);
        positivity_log.push(min_eig_of(&rho));
        states.push(rho);
    }
    Ok(Trajectory {
        times: times.to_vec(),
        states,
        basis_label: BasisLabel::Computational,
        positivity_log,
    })
}

/// Modulus/phase of one mode's overlap with an observable.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ModeStrength {
    pub k: usize,
    pub magnitude: f64,
    pub phase: f64,
}

/// O(t) = O_∞ + Σ_k |a_O,k| cos(ω_k t + φ_O,k) e^{−γ_k t}.
#[derive(Debug, Clone)]
pub struct ObservableSeries {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub mode_strengths: Vec<ModeStrength>,
    pub o_infinity: f64,
}

impl ObservableSeries {
    /// CSV export: t, value.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,value\n");
        for (t, v) in self.times.iter().zip(self.values.iter()) {
            out.push_str(&format!("{t:.16e},{v:.16e}\n"));
        }
        out
    }
}

/// Expectation-value series of a hermitian observable over the mode set.
pub fn observable_series(
    ms: &ModeSet,
    observable: &CMat,
    times: &[f64],
) -> Result<ObservableSeries> {
    hs::check_hermitian(observable, "observable_series")?;
    let d = ms.rho_infinity.dim();
    if observable.nrows() != d {
        return Err(Error::DimensionMismatch {
            op: "observable_series",
            detail: format!("observable is {}x{}, state dim {d}", observable.nrows(), observable.ncols()),
        });
    }
    // the stationary value; equals Tr(Ô ρ_∞) whenever the zero mode is unique
    let o_infinity = hs::hs_inner(observable, &ms.stationary_residue)?.re;
    let mut mode_strengths = Vec::with_capacity(ms.modes.len());
    for m in &ms.modes {
        let a = hs::hs_inner(observable, &m.a_mat)?;
        // a = |a| e^{−iφ}
        mode_strengths.push(ModeStrength {
            k: m.k,
            magnitude: a.norm(),
            phase: -a.arg(),
        });
    }
    let values: Vec<f64> = times
        .iter()
        .map(|&t| {
            let mut v = o_infinity;
            for (s, m) in mode_strengths.iter().zip(ms.modes.iter()) {
                v += s.magnitude * (m.omega() * t + s.phase).cos() * (-m.gamma() * t).exp();
            }
            v
        })
        .collect();
    Ok(ObservableSeries {
        times: times.to_vec(),
        values,
        mode_strengths,
        o_infinity,
    })
}

/// Unitarily evolved total state ϱ(t) = U e^{−iEt} U† ϱ₀ U e^{iEt} U†.
pub struct TotalEvolution {
    evals: Vec<f64>,
    evecs: CMat,
    rho_tot0_eig: CMat,
    dims: HilbertDims,
}

impl TotalEvolution {
    pub fn new(
        h_tot: &CMat,
        rho0: &DensityMatrix,
        rho_env: &DensityMatrix,
        dims: HilbertDims,
    ) -> Result<Self> {
        hs::check_hermitian(h_tot, "oracle_exact")?;
        if h_tot.nrows() != dims.d_tot() {
            return Err(Error::DimensionMismatch {
                op: "oracle_exact",
                detail: format!("H_tot is {}x{}, d_tot {}", h_tot.nrows(), h_tot.ncols(), dims.d_tot()),
            });
        }
        let (evals, evecs) = linalg::eig_hermitian(h_tot, "oracle_exact")?;
        let rho_tot0 = linalg::kron(rho0.mat(), rho_env.mat());
        let rho_tot0_eig = linalg::dagger(&evecs) * &rho_tot0 * &evecs;
        Ok(Self {
            evals,
            evecs,
            rho_tot0_eig,
            dims,
        })
    }

    /// Total-system state at time t (computational basis).
    pub fn total_state(&self, t: f64) -> CMat {
        let n = self.evals.len();
        let evolved = Mat::from_fn(n, n, |a, b| {
            let phase = C64::new(0.0, -(self.evals[a] - self.evals[b]) * t).exp();
            self.rho_tot0_eig[(a, b)] * phase
        });
        &self.evecs * evolved * linalg::dagger(&self.evecs)
    }

    /// Reduced state at time t.
    pub fn reduced_state(&self, t: f64) -> Result<CMat> {
        hs::partial_trace_env(&self.total_state(t), self.dims)
    }
}

/// Exact reduced trajectory of the full model.
pub fn oracle_exact(
    h_tot: &CMat,
    rho0: &DensityMatrix,
    rho_env: &DensityMatrix,
    dims: HilbertDims,
    times: &[f64],
) -> Result<Trajectory> {
    let evo = TotalEvolution::new(h_tot, rho0, rho_env, dims)?;
    let mut states = Vec::with_capacity(times.len());
    let mut positivity_log = Vec::with_capacity(times.len());
    for &t in times {
        let rho = linalg::hermitize(&evo.reduced_state(t)?);
        positivity_log.push(min_eig_of(&rho));
        states.push(rho);
    }
    Ok(Trajectory {
        times: times.to_vec(),
        states,
        basis_label: BasisLabel::Computational,
        positivity_log,
    })
}

/// Integrate the Nakajima-Zwanzig equation on a uniform grid.
pub fn nz_integrate(
    part: &PartitionedLiouville,
    rho0: &DensityMatrix,
    times: &[f64],
) -> Result<Trajectory> {
    if times.len() < 2 {
        return Err(Error::InvalidParameter {
            name: "times",
            detail: "need at least two samples".into(),
        });
    }
    let h = times[1] - times[0];
    if h <= 0.0 {
        return Err(Error::InvalidParameter {
            name: "times",
            detail: "grid must be increasing".into(),
        });
    }
    for w in times.windows(2) {
        if ((w[1] - w[0]) - h).abs() > 1e-9 * h {
            return Err(Error::InvalidParameter {
                name: "times",
                detail: "grid must be uniform".into(),
            });
        }
    }
    if (times[0]).abs() > 1e-12 {
        return Err(Error::InvalidParameter {
            name: "times",
            detail: "grid must start at t = 0".into(),
        });
    }

    let n_steps = times.len() - 1;
    let d_sys = part.dims().d_sys;
    let n_sys = d_sys * d_sys;
    let l_p = part.l_p();

    // memory kernel on the grid: K_j = V L e^{-i QLQ (jh)} Q L W
    let propagator = linalg::expm(&linalg::scale(-I * C64::new(h, 0.0), part.qlq()));
    let mut kernel: Vec<CMat> = Vec::with_capacity(n_steps + 1);
    let mut g = part.q_lw().clone();
    kernel.push(part.vl() * &g);
    for _ in 0..n_steps {
        g = &propagator * &g;
        kernel.push(part.vl() * &g);
    }

    let kmul = |j: usize, x: &CMat| -> CMat { &kernel[j] * x };
    let minus_i = -I;

    let mut history: Vec<CMat> = Vec::with_capacity(times.len());
    history.push(hs::vec_op(rho0.mat()));

    let mut states = Vec::with_capacity(times.len());
    let mut positivity_log = Vec::with_capacity(times.len());
    let push_state = |states: &mut Vec<CMat>, log: &mut Vec<f64>, x: &CMat| {
        let rho = linalg::hermitize(&hs::unvec_op(x, d_sys));
        log.push(min_eig_of(&rho));
        states.push(rho);
    };
    push_state(&mut states, &mut positivity_log, &history[0]);

    // trapezoidal memory integral over the stored history
    let memory = |history: &[CMat], n: usize, endpoint: &CMat| -> CMat {
        // ∫₀^{t_n} K(t_n − s) ρ(s) ds with ρ(t_n) = endpoint
        let mut acc: CMat = Mat::zeros(n_sys, 1);
        if n == 0 {
            return acc;
        }
        acc += linalg::scale(C64::new(0.5, 0.0), &kmul(n, &history[0]));
        for m in 1..n {
            acc += kmul(n - m, &history[m]);
        }
        acc += linalg::scale(C64::new(0.5, 0.0), &kmul(0, endpoint));
        linalg::scale(C64::new(h, 0.0), &acc)
    };

    for n in 0..n_steps {
        let x_n = history[n].clone();
        let f_n = linalg::scale(minus_i, &(l_p * &x_n)) - memory(&history, n, &x_n);
        // predictor
        let x_pred = &x_n + linalg::scale(C64::new(h, 0.0), &f_n);
        // corrector
        let f_pred = linalg::scale(minus_i, &(l_p * &x_pred)) - memory(&history, n + 1, &x_pred);
        let x_next = &x_n + linalg::scale(C64::new(0.5 * h, 0.0), &(&f_n + &f_pred));
        let local_err = (&x_next - &x_pred).norm_l2() / x_next.norm_l2().max(1e-300);
        if local_err > 1e-4 {
            return Err(Error::RefinementRequest {
                estimate: local_err,
                limit: 1e-4,
            });
        }
        push_state(&mut states, &mut positivity_log, &x_next);
        history.push(x_next);
    }

    Ok(Trajectory {
        times: times.to_vec(),
        states,
        basis_label: BasisLabel::Computational,
        positivity_log,
    })
}

/// Eigenbasis of the stationary state: descending eigenvalues, phases fixed
/// by making the largest-modulus component of each vector real positive.
pub fn stationary_basis(rho_infinity: &DensityMatrix) -> Result<CMat> {
    let (_, vecs) = linalg::eig_hermitian(
        &linalg::hermitize(rho_infinity.mat()),
        "stationary_basis",
    )?;
    let d = rho_infinity.dim();
    // ascending from the solver: reverse to descending
    let order: Vec<usize> = (0..d).rev().collect();
    let mut basis = Mat::from_fn(d, d, |i, j| vecs[(i, order[j])]);
    for j in 0..d {
        let mut best = (0usize, 0.0_f64);
        for i in 0..d {
            let m = basis[(i, j)].norm();
            if m > best.1 {
                best = (i, m);
            }
        }
        let pivot = basis[(best.0, j)];
        if pivot.norm() > 0.0 {
            let phase = pivot / C64::new(pivot.norm(), 0.0);
            for i in 0..d {
                basis[(i, j)] /= phase;
            }
        }
    }
    Ok(basis)
}

/// Transform a trajectory into the eigenbasis of ρ_∞.
pub fn to_stationary_basis(traj: &Trajectory, ms: &ModeSet) -> Result<Trajectory> {
    let basis = stationary_basis(&ms.rho_infinity)?;
    let bd = linalg::dagger(&basis);
    let states: Vec<CMat> = traj.states.iter().map(|s| &bd * s * &basis).collect();
    Ok(Trajectory {
        times: traj.times.clone(),
        states,
        basis_label: BasisLabel::StationaryEigenbasis,
        positivity_log: traj.positivity_log.clone(),
    })
}

/// Fitted relaxation scale of one density-matrix element.
#[derive(Debug, Clone, Serialize)]
pub struct ElementFit {
    pub m: usize,
    pub n: usize,
    /// e-folding time of |ρ_mn(t) − ρ_∞,mn|; None when the element is
    /// stationary from the start.
    pub tau_mn: Option<f64>,
    /// |Λ̂_mn| of the slowest eigenmatrix in this basis.
    pub slow_weight: f64,
    /// True when Λ̂ is (numerically) absent from this element, so faster
    /// modes set its scale.
    pub below_floor: bool,
    pub is_population: bool,
}

/// Relaxation-time report in the stationary eigenbasis.
#[derive(Debug, Clone, Serialize)]
pub struct RelaxationReport {
    pub tau: f64,
    pub fits: Vec<ElementFit>,
    /// ‖[Ô, ρ_∞]‖ / max(‖Ôρ_∞‖, ‖ρ_∞Ô‖) when an observable was supplied.
    pub commutator_diagnostic: Option<f64>,
}

/// Elements with |Λ̂_mn| below this × max|Λ̂| are flagged as slow-mode dark.
pub const ELEMENT_FLOOR_REL: f64 = 0.05;

/// Fit per-element relaxation times over the window [τ, 4τ].
///
/// The envelope |ρ_mn(t) − ρ_∞,mn| is averaged over one period of the
/// dominant oscillation frequency, then log-linear fitted.
pub fn relaxation_report(
    traj: &Trajectory,
    ms: &ModeSet,
    observable: Option<&CMat>,
) -> Result<RelaxationReport> {
    if !ms.tau.is_finite() {
        return Err(Error::InsufficientData {
            window: 0.0,
            required: f64::INFINITY,
        });
    }
    let tau = ms.tau;
    let t_end = traj.times.last().copied().unwrap_or(0.0);
    if t_end - tau < 2.0 * tau {
        return Err(Error::InsufficientData {
            window: t_end - tau,
            required: 2.0 * tau,
        });
    }
    let in_basis = match traj.basis_label {
        BasisLabel::StationaryEigenbasis => traj.clone(),
        BasisLabel::Computational => to_stationary_basis(traj, ms)?,
        BasisLabel::ObservableEigenbasis => {
            return Err(Error::InvalidParameter {
                name: "trajectory",
                detail: "relaxation_report needs a computational or stationary-basis trajectory"
                    .into(),
            })
        }
    };
    let basis = stationary_basis(&ms.rho_infinity)?;
    let rho_inf_basis =
        linalg::dagger(&basis) * ms.rho_infinity.mat() * &basis;

    // dominant oscillation: the strongest-amplitude contributing mode
    let dominant_omega = ms
        .contributing_decaying()
        .into_iter()
        .max_by(|&a, &b| {
            hs::hs_norm(&ms.modes[a].a_mat)
                .partial_cmp(&hs::hs_norm(&ms.modes[b].a_mat))
                .unwrap()
        })
        .map(|i| ms.modes[i].omega().abs())
        .unwrap_or(0.0);

    let slow_mat = ms
        .slowest_eigenmatrix()
        .map(|lam| linalg::dagger(&basis) * lam * &basis);
    let slow_max = slow_mat
        .as_ref()
        .map(|m| m.norm_max())
        .unwrap_or(0.0);

    let d = in_basis.dim();
    let scale_norm = hs::hs_norm(ms.rho_infinity.mat());
    let mut fits = Vec::with_capacity(d * d);
    for m in 0..d {
        for n in 0..d {
            // raw deviation from stationarity
            let samples: Vec<(f64, f64)> = in_basis
                .times
                .iter()
                .zip(in_basis.states.iter())
                .map(|(&t, s)| (t, (s[(m, n)] - rho_inf_basis[(m, n)]).norm()))
                .collect();
            let tau_mn = fit_envelope(&samples, tau, dominant_omega, scale_norm);
            let slow_weight = slow_mat.as_ref().map(|sm| sm[(m, n)].norm()).unwrap_or(0.0);
            fits.push(ElementFit {
                m,
                n,
                tau_mn,
                slow_weight,
                below_floor: slow_weight < ELEMENT_FLOOR_REL * slow_max,
                is_population: m == n,
            });
        }
    }

    let commutator_diagnostic = match observable {
        Some(o) => {
            hs::check_hermitian(o, "relaxation_report")?;
            let rho = ms.rho_infinity.mat();
            let comm = o * rho - rho * o;
            let prod1 = (o * rho).norm_l2();
            let prod2 = (rho * o).norm_l2();
            Some(comm.norm_l2() / prod1.max(prod2).max(1e-300))
        }
        None => None,
    };

    Ok(RelaxationReport {
        tau,
        fits,
        commutator_diagnostic,
    })
}

/// Log-linear fit of an oscillation-averaged envelope over [τ, 4τ].
fn fit_envelope(
    samples: &[(f64, f64)],
    tau: f64,
    dominant_omega: f64,
    scale_norm: f64,
) -> Option<f64> {
    let (lo, hi) = (tau, 4.0 * tau);
    let window: Vec<(f64, f64)> = samples
        .iter()
        .copied()
        .filter(|(t, _)| *t >= lo && *t <= hi)
        .collect();
    if window.len() < 8 {
        return None;
    }
    // stationary elements carry no signal to fit
    let peak = window.iter().map(|(_, y)| *y).fold(0.0, f64::max);
    if peak < 1e-12 * scale_norm.max(1e-300) {
        return None;
    }
    // average |ρ_mn − ρ_∞| over one period of the dominant oscillation; slow
    // oscillations (period beyond half the window) need no averaging
    let period = if dominant_omega > 0.0 {
        let p = 2.0 * std::f64::consts::PI / dominant_omega;
        if p > 0.5 * (hi - lo) {
            0.0
        } else {
            p
        }
    } else {
        0.0
    };
    let averaged: Vec<(f64, f64)> = window
        .iter()
        .map(|&(t, _)| {
            let mut acc = 0.0;
            let mut count = 0usize;
            for &(s, y) in &window {
                if (s - t).abs() <= period / 2.0 {
                    acc += y;
                    count += 1;
                }
            }
            (t, acc / count.max(1) as f64)
        })
        .collect();
    // linear regression of ln(y) on t
    let pts: Vec<(f64, f64)> = averaged
        .iter()
        .filter(|(_, y)| *y > 0.0)
        .map(|&(t, y)| (t, y.ln()))
        .collect();
    if pts.len() < 8 {
        return None;
    }
    let n = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    let denom = n * sxx - sx * sx;
    if denom.abs() < 1e-300 {
        return None;
    }
    let slope = (n * sxy - sx * sy) / denom;
    if slope >= -1e-300 {
        return None;
    }
    Some(-1.0 / slope)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hs::liouvillian;
    use crate::linalg::{eye, hermitize, max_abs_diff, scale, ZERO};
    use crate::modes::{self, markov_freeze};
    use crate::projection::{build_projectors, partition_liouville, EffectiveLiouvilleEvaluator};
    use crate::spectral::frequency_grid;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn random_cmat(d: usize, rng: &mut ChaCha8Rng) -> CMat {
        Mat::from_fn(d, d, |_, _| {
            C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
        })
    }

    fn random_density(d: usize, rng: &mut ChaCha8Rng) -> DensityMatrix {
        let g = random_cmat(d, rng);
        let p = &g * linalg::dagger(&g) + scale(C64::new(0.1, 0.0), &eye(d));
        let tr = linalg::trace(&p);
        DensityMatrix::from_mat(hermitize(&scale(tr.inv(), &p))).unwrap()
    }

    struct TestModel {
        h_tot: CMat,
        rho_env: DensityMatrix,
        rho0: DensityMatrix,
        ev: EffectiveLiouvilleEvaluator,
    }

    fn build_model(seed: u64, dims: HilbertDims, coupling: f64, beta: f64) -> TestModel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let norm1 = |h: &CMat| {
            let r = linalg::hermitian_spectral_radius(h, "test").unwrap();
            scale(C64::new(1.0 / r, 0.0), h)
        };
        let h_s = norm1(&hermitize(&random_cmat(dims.d_sys, &mut rng)));
        let h_e = norm1(&hermitize(&random_cmat(dims.d_env, &mut rng)));
        let h_int = scale(
            C64::new(coupling, 0.0),
            &norm1(&hermitize(&random_cmat(dims.d_tot(), &mut rng))),
        );
        let h_tot = linalg::kron(&h_s, &eye(dims.d_env))
            + linalg::kron(&eye(dims.d_sys), &h_e)
            + h_int;
        let l_tot = liouvillian(&h_tot).unwrap();
        let rho_env = DensityMatrix::thermal(&h_e, beta).unwrap();
        let proj = build_projectors(dims, &rho_env).unwrap();
        let part = partition_liouville(&l_tot, &proj).unwrap();
        let rho0 = random_density(dims.d_sys, &mut rng);
        TestModel {
            h_tot,
            rho_env,
            rho0,
            ev: EffectiveLiouvilleEvaluator::new(part),
        }
    }

    #[test]
    fn markov_reconstruction_recovers_initial_state_and_semigroup() {
        let dims = HilbertDims::new(2, 3).unwrap();
        let model = build_model(1, dims, 0.5, 1.0);
        let scale_z = model.ev.spectral_scale();
        let (gen, ms) = markov_freeze(&model.ev, C64::new(0.0, 0.1 * scale_z), &model.rho0).unwrap();

        let times: Vec<f64> = (0..100).map(|i| i as f64 * 0.25 / scale_z).collect();
        let traj = reconstruct(&ms, &times).unwrap();

        // t = 0 recovery through mode completeness
        assert!(max_abs_diff(&traj.states[0], model.rho0.mat()) < 1e-9);

        // matrix-exponential semigroup oracle
        for (i, &t) in times.iter().enumerate() {
            let u = linalg::expm(&scale(C64::new(0.0, -t), &gen));
            let evolved = hs::unvec_op(&(&u * hs::vec_op(model.rho0.mat())), 2);
            let evolved = hermitize(&evolved);
            assert!(
                max_abs_diff(&traj.states[i], &evolved) < 1e-9,
                "mismatch at t = {t}"
            );
        }

        // exact trace preservation and hermiticity
        assert!(traj.max_trace_defect() < 1e-9);
        assert!(traj.max_hermiticity_defect() < 1e-12);
    }

    #[test]
    fn reconstruction_settles_to_stationary_state() {
        let dims = HilbertDims::new(2, 3).unwrap();
        let model = build_model(2, dims, 0.5, 1.0);
        let scale_z = model.ev.spectral_scale();
        let (_, ms) = markov_freeze(&model.ev, C64::new(0.0, 0.1 * scale_z), &model.rho0).unwrap();
        assert!(ms.is_relaxing());
        let t_late = 50.0 * ms.tau;
        let traj = reconstruct(&ms, &[t_late]).unwrap();
        assert!(max_abs_diff(&traj.states[0], ms.rho_infinity.mat()) < 1e-9);
    }

    #[test]
    fn observable_identity_is_constant() {
        let dims = HilbertDims::new(2, 3).unwrap();
        let model = build_model(3, dims, 0.5, 1.0);
        let scale_z = model.ev.spectral_scale();
        let (_, ms) = markov_freeze(&model.ev, C64::new(0.0, 0.1 * scale_z), &model.rho0).unwrap();
        let times: Vec<f64> = (0..50).map(|i| i as f64 * 0.3).collect();
        let series = observable_series(&ms, &eye(2), &times).unwrap();
        for v in &series.values {
            assert!((v - 1.0).abs() < 1e-9);
        }
        for s in &series.mode_strengths {
            assert!(s.magnitude < 1e-9, "traceless A_k must not couple to 1");
        }
    }

    #[test]
    fn observable_series_matches_trace_of_reconstruction() {
        let dims = HilbertDims::new(2, 3).unwrap();
        let model = build_model(4, dims, 0.5, 1.0);
        let scale_z = model.ev.spectral_scale();
        let (_, ms) = markov_freeze(&model.ev, C64::new(0.0, 0.1 * scale_z), &model.rho0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let obs = hermitize(&random_cmat(2, &mut rng));
        let times: Vec<f64> = (0..80).map(|i| i as f64 * 0.2 / scale_z).collect();
        let series = observable_series(&ms, &obs, &times).unwrap();
        let traj = reconstruct(&ms, &times).unwrap();
        for i in 0..times.len() {
            let direct = hs::hs_inner(&obs, &traj.states[i]).unwrap().re;
            assert!(
                (series.values[i] - direct).abs() < 1e-10,
                "mismatch at sample {i}"
            );
        }
    }

    #[test]
    fn closed_system_series_oscillates_and_averages_to_dephased_value() {
        let dims = HilbertDims::new(2, 3).unwrap();
        let model = build_model(5, dims, 0.0, 1.0);
        let scale_z = model.ev.spectral_scale();
        let grid = frequency_grid(-2.0 * scale_z, 2.0 * scale_z, 41, 0.05 * scale_z);
        let ms = modes::assemble_mode_set(&model.ev, &model.rho0, &grid).unwrap();
        assert!(!ms.is_relaxing());

        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let obs = hermitize(&random_cmat(2, &mut rng));

        // Bohr frequency of the two-level system
        let delta = ms
            .modes
            .iter()
            .map(|m| m.omega().abs())
            .fold(0.0_f64, f64::max);
        assert!(delta > 1e-6);
        let period = 2.0 * std::f64::consts::PI / delta;
        let n_per = 400usize;
        let times: Vec<f64> = (0..(n_per * 50))
            .map(|i| i as f64 * period / n_per as f64)
            .collect();
        let series = observable_series(&ms, &obs, &times).unwrap();
        let avg: f64 = series.values.iter().sum::<f64>() / series.values.len() as f64;

        // independent dephasing oracle: drop off-diagonals of ρ₀ in the
        // H_S eigenbasis, then take the expectation value
        let h_s = hs::partial_trace_env(&model.h_tot, dims).unwrap();
        let h_s = scale(C64::new(1.0 / 3.0, 0.0), &h_s); // Tr_E adds a factor d_env
        let (_, vecs) = linalg::eig_hermitian(&h_s, "test").unwrap();
        let rho_eig = linalg::dagger(&vecs) * model.rho0.mat() * &vecs;
        let dephased_eig = Mat::from_fn(2, 2, |i, j| if i == j { rho_eig[(i, j)] } else { ZERO });
        let dephased = &vecs * dephased_eig * linalg::dagger(&vecs);
        let expect = hs::hs_inner(&obs, &dephased).unwrap().re;
        assert!(
            (avg - expect).abs() < 2e-3,
            "time average {avg} vs dephased {expect}"
        );
    }

    #[test]
    fn oracle_starts_at_initial_state_and_preserves_purity() {
        let dims = HilbertDims::new(2, 3).unwrap();
        let model = build_model(6, dims, 0.8, 1.0);
        let evo = TotalEvolution::new(&model.h_tot, &model.rho0, &model.rho_env, dims).unwrap();
        let rho_t0 = evo.reduced_state(0.0).unwrap();
        assert!(max_abs_diff(&rho_t0, model.rho0.mat()) < 1e-12);
        // unitary invariance of the total purity
        let p0 = linalg::trace(&(&evo.total_state(0.0) * &evo.total_state(0.0))).re;
        let p1 = linalg::trace(&(&evo.total_state(3.7) * &evo.total_state(3.7))).re;
        assert!((p0 - p1).abs() < 1e-10);
    }

    #[test]
    fn oracle_zero_coupling_is_unitary_conjugation() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let dims = HilbertDims::new(2, 2).unwrap();
        let h_s = hermitize(&random_cmat(2, &mut rng));
        let h_e = hermitize(&random_cmat(2, &mut rng));
        let h_tot = linalg::kron(&h_s, &eye(2)) + linalg::kron(&eye(2), &h_e);
        let rho_env = DensityMatrix::thermal(&h_e, 1.0).unwrap();
        let rho0 = random_density(2, &mut rng);
        let times = [0.0, 0.9, 2.3];
        let traj = oracle_exact(&h_tot, &rho0, &rho_env, dims, &times).unwrap();
        for (i, &t) in times.iter().enumerate() {
            let u = linalg::expm(&scale(C64::new(0.0, -t), &h_s));
            let expect = &u * rho0.mat() * linalg::dagger(&u);
            assert!(max_abs_diff(&traj.states[i], &expect) < 1e-12);
        }
    }

    #[test]
    fn nz_zero_coupling_matches_von_neumann() {
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        let dims = HilbertDims::new(2, 2).unwrap();
        let h_s = hermitize(&random_cmat(2, &mut rng));
        let h_e = hermitize(&random_cmat(2, &mut rng));
        let h_tot = linalg::kron(&h_s, &eye(2)) + linalg::kron(&eye(2), &h_e);
        let l_tot = liouvillian(&h_tot).unwrap();
        let rho_env = DensityMatrix::thermal(&h_e, 1.0).unwrap();
        let proj = build_projectors(dims, &rho_env).unwrap();
        let part = partition_liouville(&l_tot, &proj).unwrap();
        let rho0 = random_density(2, &mut rng);
        let h = 1e-3;
        let times: Vec<f64> = (0..=1500).map(|i| i as f64 * h).collect();
        let traj = nz_integrate(&part, &rho0, &times).unwrap();
        let t_end = *times.last().unwrap();
        let u = linalg::expm(&scale(C64::new(0.0, -t_end), &h_s));
        let expect = &u * rho0.mat() * linalg::dagger(&u);
        assert!(
            max_abs_diff(traj.states.last().unwrap(), &expect) < 1e-8,
            "defect {:.3e}",
            max_abs_diff(traj.states.last().unwrap(), &expect)
        );
    }

    #[test]
    fn nz_matches_oracle_and_converges_second_order() {
        let dims = HilbertDims::new(2, 3).unwrap();
        let model = build_model(7, dims, 0.6, 1.0);
        let l_tot = liouvillian(&model.h_tot).unwrap();
        let proj = build_projectors(dims, &model.rho_env).unwrap();
        let part = partition_liouville(&l_tot, &proj).unwrap();
        let scale_z = part.spectral_scale();
        let t_max = 1.5 / scale_z;

        let run = |n_steps: usize| -> f64 {
            let h = t_max / n_steps as f64;
            let times: Vec<f64> = (0..=n_steps).map(|i| i as f64 * h).collect();
            let traj = nz_integrate(&part, &model.rho0, &times).unwrap();
            let oracle = oracle_exact(&model.h_tot, &model.rho0, &model.rho_env, dims, &times).unwrap();
            traj.states
                .iter()
                .zip(oracle.states.iter())
                .map(|(a, b)| (a - b).norm_l2())
                .fold(0.0, f64::max)
        };

        let err_coarse = run(600);
        let err_fine = run(1200);
        assert!(
            err_coarse / err_fine >= 3.5,
            "h-halving gain {:.2} (coarse {err_coarse:.3e}, fine {err_fine:.3e})",
            err_coarse / err_fine
        );
        assert!(err_fine < 1e-5, "fine error {err_fine:.3e}");
    }

    #[test]
    fn nz_rejects_bad_grids() {
        let dims = HilbertDims::new(2, 2).unwrap();
        let model = build_model(8, dims, 0.4, 1.0);
        let l_tot = liouvillian(&model.h_tot).unwrap();
        let proj = build_projectors(dims, &model.rho_env).unwrap();
        let part = partition_liouville(&l_tot, &proj).unwrap();
        assert!(nz_integrate(&part, &model.rho0, &[0.0]).is_err());
        assert!(nz_integrate(&part, &model.rho0, &[0.0, 0.1, 0.3]).is_err());
        assert!(nz_integrate(&part, &model.rho0, &[0.5, 0.6]).is_err());
    }

    #[test]
    fn relaxation_report_common_timescale_and_commutator() {
        let dims = HilbertDims::new(2, 3).unwrap();
        let model = build_model(9, dims, 0.5, 1.0);
        let scale_z = model.ev.spectral_scale();
        let (_, ms) = markov_freeze(&model.ev, C64::new(0.0, 0.1 * scale_z), &model.rho0).unwrap();
        assert!(ms.is_relaxing());
        let n = 600usize;
        let t_max = 6.0 * ms.tau;
        let times: Vec<f64> = (0..n).map(|i| i as f64 * t_max / (n - 1) as f64).collect();
        let traj = reconstruct(&ms, &times).unwrap();
        let report = relaxation_report(&traj, &ms, Some(ms.rho_infinity.mat())).unwrap();

        // Ô = ρ_∞ commutes with ρ_∞
        assert!(report.commutator_diagnostic.unwrap() < 1e-12);

        // elements carrying the slow mode agree within a loose factor
        let taus: Vec<f64> = report
            .fits
            .iter()
            .filter(|f| !f.below_floor)
            .filter_map(|f| f.tau_mn)
            .collect();
        assert!(taus.len() >= 2, "need at least two fitted elements");
        let max = taus.iter().cloned().fold(0.0, f64::max);
        let min = taus.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(
            max / min < 3.0,
            "population/coherence scales differ: {taus:?}"
        );
    }

    #[test]
    fn relaxation_report_requires_long_enough_window() {
        let dims = HilbertDims::new(2, 3).unwrap();
        let model = build_model(10, dims, 0.5, 1.0);
        let scale_z = model.ev.spectral_scale();
        let (_, ms) = markov_freeze(&model.ev, C64::new(0.0, 0.1 * scale_z), &model.rho0).unwrap();
        let times: Vec<f64> = (0..20).map(|i| i as f64 * ms.tau / 10.0).collect();
        let traj = reconstruct(&ms, &times).unwrap();
        assert!(matches!(
            relaxation_report(&traj, &ms, None),
            Err(Error::InsufficientData { .. })
        ));
    }

    #[test]
    fn trajectory_csv_shape() {
        let dims = HilbertDims::new(2, 2).unwrap();
        let model = build_model(11, dims, 0.4, 1.0);
        let scale_z = model.ev.spectral_scale();
        let (_, ms) = markov_freeze(&model.ev, C64::new(0.0, 0.1 * scale_z), &model.rho0).unwrap();
        let times = [0.0, 1.0, 2.0];
        let traj = reconstruct(&ms, &times).unwrap();
        let csv = traj.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 4);
        assert_eq!(lines[0].split(',').count(), 1 + 4 + 4 + 1);
    }
}
