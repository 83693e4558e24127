//! Pipeline orchestration: run the configured stages and write artifacts.

use std::fs;
use std::path::Path;

use num_complex::Complex64 as C64;
use serde_json::{json, Value};

use liouville_core::dynamics::{
    self, nz_integrate, oracle_exact, reconstruct, relaxation_report, Trajectory,
};
use liouville_core::entropy::{entropy_series, lyapunov_check, LyapunovVerdict, OVERDAMPED_THRESHOLD};
use liouville_core::hs::DensityMatrix;
use liouville_core::linalg::{self, CMat};
use liouville_core::modes::{assemble_mode_set, markov_freeze, ModeSet};
use liouville_core::projection::{partition_liouville, EffectiveLiouvilleEvaluator};
use liouville_core::spectral::{self, frequency_grid};
use liouville_core::Error as CoreError;

use crate::config::{RunConfig, RunMode};

pub enum Failure {
    Config(String),
    Numerical(CoreError),
    Io(std::io::Error),
}

impl From<CoreError> for Failure {
    fn from(e: CoreError) -> Self {
        Failure::Numerical(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Io(e)
    }
}

pub type RunResult<T> = Result<T, Failure>;

fn write_text(dir: &Path, name: &str, text: &str) -> RunResult<()> {
    fs::write(dir.join(name), text)?;
    Ok(())
}

struct Stages {
    ev: EffectiveLiouvilleEvaluator,
    scale: f64,
    epsilon: f64,
    omega_min: f64,
    omega_max: f64,
}

fn prepare(cfg: &RunConfig) -> RunResult<Stages> {
    let ev = cfg.model.evaluator()?;
    let scale = ev.spectral_scale();
    let unit = if cfg.frequencies_relative { scale } else { 1.0 };
    Ok(Stages {
        ev,
        scale,
        epsilon: cfg.epsilon * unit,
        omega_min: cfg.omega_min * unit,
        omega_max: cfg.omega_max * unit,
    })
}

fn time_axis(cfg: &RunConfig, tau: Option<f64>) -> RunResult<Vec<f64>> {
    let t_max = match (cfg.t_max, cfg.t_max_tau) {
        (Some(t), _) => t,
        (None, Some(m)) => match tau {
            Some(tau) if tau.is_finite() => m * tau,
            _ => {
                return Err(Failure::Config(
                    "time_grid.t_max_tau needs a relaxing mode set; this run has no finite τ"
                        .into(),
                ))
            }
        },
        _ => unreachable!("validated in config"),
    };
    let n = cfg.n_t;
    Ok((0..n).map(|i| i as f64 * t_max / (n - 1) as f64).collect())
}

fn identity_block(st: &Stages, rho0: &DensityMatrix) -> RunResult<Value> {
    let mut worst_identity = 0.0_f64;
    let mut worst_left = 0.0_f64;
    let mut worst_prob = 0.0_f64;
    let probes = [
        C64::new(0.0, st.epsilon.max(0.05 * st.scale)),
        C64::new(0.37 * st.scale, 0.11 * st.scale),
        C64::new(-0.81 * st.scale, 0.23 * st.scale),
    ];
    for &z in &probes {
        worst_identity = worst_identity.max(st.ev.frequency_identity_residual(z, rho0)?);
        worst_left = worst_left.max(st.ev.left_annihilation_residual(z)?);
        worst_prob = worst_prob.max(st.ev.probability_conservation_residual(z, rho0)?);
    }
    Ok(json!({
        "frequency_identity": worst_identity,
        "left_annihilation": worst_left,
        "probability_conservation": worst_prob,
    }))
}

fn trajectory_block(traj: &Trajectory) -> Value {
    json!({
        "max_trace_defect": traj.max_trace_defect(),
        "max_hermiticity_defect": traj.max_hermiticity_defect(),
        "min_eigenvalue": traj.min_eigenvalue(),
        "positivity_warnings": traj
            .positivity_log
            .iter()
            .filter(|&&m| m < -1e-6)
            .count(),
    })
}

fn mode_block(ms: &ModeSet) -> Value {
    json!({
        "tau": if ms.tau.is_finite() { Value::from(ms.tau) } else { Value::Null },
        "markov": ms.markov,
        "epsilon": ms.epsilon,
        "zero_mode_unique": ms.zero_mode_unique,
        "zero_mode_count": ms.zero_mode_count,
        "folded_zero_modes": ms.folded_zero_modes,
        "modes": ms.modes.iter().map(|m| json!({
            "k": m.k,
            "omega": m.omega(),
            "gamma": m.gamma(),
            "a_re": m.amplitude.re,
            "a_im": m.amplitude.im,
            "lambda_prime_re": m.lambda_prime.re,
            "lambda_prime_im": m.lambda_prime.im,
        })).collect::<Vec<_>>(),
    })
}

/// Reference state for entropy flow when no mode set exists: the mean of the
/// trajectory tail (last quarter of the samples).
fn tail_reference(traj: &Trajectory) -> RunResult<DensityMatrix> {
    let n = traj.states.len();
    let start = 3 * n / 4;
    let d = traj.dim();
    let mut avg: CMat = faer::Mat::zeros(d, d);
    let count = (n - start).max(1);
    for s in &traj.states[start..] {
        avg += linalg::scale(C64::new(1.0 / count as f64, 0.0), s);
    }
    Ok(DensityMatrix::new(linalg::hermitize(&avg), 1e-6)?)
}

fn entropy_csv_and_block(
    traj: &Trajectory,
    reference: &DensityMatrix,
    ms: Option<&ModeSet>,
    dir: &Path,
) -> RunResult<Value> {
    let series = entropy_series(traj, reference)?;
    write_text(dir, "entropy.csv", &series.to_csv())?;
    let lyapunov = match ms {
        Some(ms) if ms.tau.is_finite() => {
            let t_end = traj.times.last().copied().unwrap_or(0.0);
            match lyapunov_check(&series, ms, (ms.tau, t_end), OVERDAMPED_THRESHOLD) {
                Ok(report) => json!({
                    "verdict": match report.verdict {
                        LyapunovVerdict::Pass => "PASS",
                        LyapunovVerdict::Fail => "FAIL",
                        LyapunovVerdict::NotApplicable => "NOT-APPLICABLE",
                        LyapunovVerdict::RefusedBelowTau => "REFUSED-BELOW-TAU",
                    },
                    "omega_tau": report.omega_tau,
                    "max_production": if report.max_production.is_finite() {
                        Value::from(report.max_production)
                    } else {
                        Value::Null
                    },
                    "sign_changes": report.sign_changes,
                }),
                Err(e) => json!({ "verdict": "UNAVAILABLE", "reason": e.to_string() }),
            }
        }
        _ => json!({ "verdict": "UNAVAILABLE", "reason": "no relaxing mode set" }),
    };
    Ok(json!({
        "s_infinity": series.s_infinity,
        "reliability_warning": series.reliability_warning,
        "lyapunov": lyapunov,
    }))
}

fn observables_csv(
    ms: &ModeSet,
    observables: &[(String, CMat)],
    times: &[f64],
    dir: &Path,
) -> RunResult<Value> {
    let mut blocks = Vec::new();
    for (name, mat) in observables {
        let series = dynamics::observable_series(ms, mat, times)?;
        write_text(dir, &format!("observable_{name}.csv"), &series.to_csv())?;
        blocks.push(json!({
            "name": name,
            "o_infinity": series.o_infinity,
            "mode_strengths": series.mode_strengths.iter().map(|s| json!({
                "k": s.k, "magnitude": s.magnitude, "phase": s.phase,
            })).collect::<Vec<_>>(),
        }));
    }
    Ok(Value::Array(blocks))
}

/// Execute the configured pipeline; returns the report JSON.
pub fn run(cfg: &RunConfig) -> RunResult<Value> {
    fs::create_dir_all(&cfg.out_dir)?;
    let dir = cfg.out_dir.clone();
    let st = prepare(cfg)?;
    let model = &cfg.model;

    let mut report = json!({
        "model": {
            "family": model.family.name(),
            "d_sys": model.dims.d_sys,
            "d_env": model.dims.d_env,
            "seed": model.seed,
            "coupling": model.coupling,
            "beta": model.beta,
            "spectral_scale": st.scale,
        },
        "mode": cfg.mode.name(),
        "epsilon": st.epsilon,
    });
    let obj = report.as_object_mut().unwrap();

    match cfg.mode {
        RunMode::OracleOnly => {
            let times = time_axis(cfg, None)?;
            let traj = oracle_exact(&model.h_tot(), &model.rho0, &model.rho_env, model.dims, &times)?;
            write_text(&dir, "trajectory.csv", &traj.to_csv())?;
            let reference = tail_reference(&traj)?;
            obj.insert(
                "entropy".into(),
                entropy_csv_and_block(&traj, &reference, None, &dir)?,
            );
            obj.insert("trajectory".into(), trajectory_block(&traj));
        }
        RunMode::NzOnly => {
            let l_tot = liouville_core::hs::liouvillian(&model.h_tot())?;
            let proj = model.projectors()?;
            let part = partition_liouville(&l_tot, &proj)?;
            let times = time_axis(cfg, None)?;
            let traj = nz_integrate(&part, &model.rho0, &times)?;
            write_text(&dir, "trajectory.csv", &traj.to_csv())?;
            let reference = tail_reference(&traj)?;
            obj.insert(
                "entropy".into(),
                entropy_csv_and_block(&traj, &reference, None, &dir)?,
            );
            obj.insert("trajectory".into(), trajectory_block(&traj));
            obj.insert("identity_checks".into(), identity_block(&st, &model.rho0)?);
        }
        RunMode::Markov | RunMode::Full | RunMode::CompareAll => {
            let grid = frequency_grid(st.omega_min, st.omega_max, cfg.n_z, st.epsilon);
            let track = spectral::track_bands(&st.ev, &grid)?;
            write_text(&dir, "spectrum.csv", &track.to_csv())?;

            let ms = match cfg.mode {
                RunMode::Markov => {
                    let (_, ms) = markov_freeze(&st.ev, C64::new(0.0, st.epsilon), &model.rho0)?;
                    ms
                }
                _ => assemble_mode_set(&st.ev, &model.rho0, &grid)?,
            };
            write_text(&dir, "modes.json", &ms.to_json())?;

            let times = time_axis(cfg, Some(ms.tau))?;
            let traj = reconstruct(&ms, &times)?;
            write_text(&dir, "trajectory.csv", &traj.to_csv())?;
            obj.insert("trajectory".into(), trajectory_block(&traj));
            obj.insert("modes".into(), mode_block(&ms));
            obj.insert("identity_checks".into(), identity_block(&st, &model.rho0)?);
            obj.insert(
                "entropy".into(),
                entropy_csv_and_block(&traj, &ms.rho_infinity, Some(&ms), &dir)?,
            );
            obj.insert(
                "observables".into(),
                observables_csv(&ms, &cfg.observables, &times, &dir)?,
            );
            obj.insert(
                "crossing_intervals".into(),
                Value::from(track.crossing_flags.iter().filter(|f| **f).count()),
            );

            // per-element relaxation fits when the window allows them
            if ms.tau.is_finite() {
                match relaxation_report(&traj, &ms, cfg.observables.first().map(|(_, m)| m)) {
                    Ok(rep) => {
                        obj.insert(
                            "relaxation".into(),
                            serde_json::to_value(&rep.fits).unwrap_or(Value::Null),
                        );
                        if let Some(c) = rep.commutator_diagnostic {
                            obj.insert("commutator_diagnostic".into(), Value::from(c));
                        }
                    }
                    Err(e) => {
                        obj.insert("relaxation".into(), json!({ "unavailable": e.to_string() }));
                    }
                }
            }

            if cfg.mode == RunMode::CompareAll {
                let oracle =
                    oracle_exact(&model.h_tot(), &model.rho0, &model.rho_env, model.dims, &times)?;
                write_text(&dir, "trajectory_oracle.csv", &oracle.to_csv())?;
                let max_dev = traj
                    .states
                    .iter()
                    .zip(oracle.states.iter())
                    .map(|(a, b)| (a - b).norm_l2())
                    .fold(0.0_f64, f64::max);

                // NZ with its quadratic-cost memory integral runs at a fixed
                // fine step over (at most) the early part of the window
                let l_tot = liouville_core::hs::liouvillian(&model.h_tot())?;
                let proj = model.projectors()?;
                let part = partition_liouville(&l_tot, &proj)?;
                let t_end = *times.last().unwrap();
                let h = 1e-2 / st.scale;
                let n_steps = ((t_end / h).ceil() as usize).clamp(50, 2000);
                let nz_times: Vec<f64> = (0..=n_steps).map(|i| i as f64 * h).collect();
                let nz = nz_integrate(&part, &model.rho0, &nz_times)?;
                write_text(&dir, "trajectory_nz.csv", &nz.to_csv())?;
                let nz_oracle =
                    oracle_exact(&model.h_tot(), &model.rho0, &model.rho_env, model.dims, &nz_times)?;
                let nz_dev = nz
                    .states
                    .iter()
                    .zip(nz_oracle.states.iter())
                    .map(|(a, b)| (a - b).norm_l2())
                    .fold(0.0_f64, f64::max);
                obj.insert(
                    "cross_method".into(),
                    json!({
                        "reconstruction_vs_oracle_max": max_dev,
                        "nz_vs_oracle_max": nz_dev,
                        "nz_step": h,
                        "nz_t_end": nz_times.last().copied().unwrap_or(0.0),
                    }),
                );
            }
        }
    }

    let text = serde_json::to_string_pretty(&report).expect("report serializes");
    write_text(&dir, "report.json", &text)?;
    Ok(report)
}

/// One invariant check line.
pub struct Check {
    pub name: &'static str,
    pub residual: f64,
    pub tolerance: f64,
    pub pass: bool,
    pub note: Option<String>,
}

/// Run the invariant suite on the configured model without trajectories.
pub fn verify(cfg: &RunConfig) -> RunResult<Vec<Check>> {
    let st = prepare(cfg)?;
    let model = &cfg.model;
    let mut checks = Vec::new();
    let mut push = |name: &'static str, residual: f64, tolerance: f64, note: Option<String>| {
        checks.push(Check {
            name,
            residual,
            tolerance,
            pass: residual <= tolerance,
            note,
        });
    };

    let l_tot = liouville_core::hs::liouvillian(&model.h_tot())?;
    push(
        "total_liouvillian_hermitian",
        linalg::hermiticity_defect(&l_tot),
        1e-12,
        None,
    );

    let proj = model.projectors()?;
    push("projector_identities", proj.residuals().max(), 1e-12, None);
    let part = partition_liouville(&l_tot, &proj)?;
    push("partition_reassembly", part.reassembly_residual(), 1e-12, None);

    let mut worst_identity = 0.0_f64;
    let mut worst_left = 0.0_f64;
    let mut worst_prob = 0.0_f64;
    for &z in &[
        C64::new(0.0, st.epsilon.max(0.05 * st.scale)),
        C64::new(0.43 * st.scale, 0.09 * st.scale),
        C64::new(-0.67 * st.scale, 0.31 * st.scale),
    ] {
        worst_identity = worst_identity.max(st.ev.frequency_identity_residual(z, &model.rho0)?);
        worst_left = worst_left.max(st.ev.left_annihilation_residual(z)?);
        worst_prob = worst_prob.max(st.ev.probability_conservation_residual(z, &model.rho0)?);
    }
    push("frequency_domain_identity", worst_identity, 1e-9, None);
    push("left_unit_annihilation", worst_left, 1e-10, None);
    push("probability_conservation_iz", worst_prob, 1e-10, None);

    // derivative vs finite differences at one interior point
    let z = C64::new(0.29 * st.scale, st.epsilon.max(0.08 * st.scale));
    let (_, deriv) = st.ev.evaluate_with_derivative(z)?;
    let h = 1e-6 * st.scale;
    let lp = st.ev.evaluate(z + C64::new(h, 0.0))?;
    let lm = st.ev.evaluate(z - C64::new(h, 0.0))?;
    let fd = linalg::scale(C64::new(1.0 / (2.0 * h), 0.0), &(lp - lm));
    let rel = (&deriv - &fd).norm_l2() / fd.norm_l2().max(1e-300);
    push("derivative_finite_difference", rel, 1e-5, None);

    // spectral decomposition invariants at z = iε
    let z0 = C64::new(0.0, st.epsilon);
    let l_z = st.ev.evaluate(z0)?;
    let dec = spectral::decompose(&l_z, z0)?;
    push("biorthogonality_defect", dec.condition, 1e-9, None);
    push("spectral_reassembly", dec.reassembly_residual(&l_z), 1e-9, None);
    push("super_unity_completeness", dec.completeness_residual(), 1e-8, None);
    let traceless = spectral::traceless_check(&dec);
    push("traceless_modes", traceless.max_relative, 1e-9, None);
    match spectral::zero_mode(&dec) {
        Ok(zm) => {
            let note = if zm.unique {
                None
            } else {
                Some(format!("NOT-UNIQUE (expected for separated systems): {} zero modes", zm.zero_count))
            };
            push("zero_mode_exists", 0.0, 1.0, note);
        }
        Err(e) => push("zero_mode_exists", f64::INFINITY, 1.0, Some(e.to_string())),
    }

    // solved effective eigenvalues stay below the axis and pair up
    let grid = frequency_grid(st.omega_min, st.omega_max, cfg.n_z, st.epsilon);
    match assemble_mode_set(&st.ev, &model.rho0, &grid) {
        Ok(ms) => {
            let worst_im = ms
                .modes
                .iter()
                .map(|m| m.z.im)
                .fold(f64::NEG_INFINITY, f64::max);
            push(
                "lower_half_plane_confinement",
                worst_im.max(0.0),
                1e-9,
                None,
            );
            let mut worst_pair = 0.0_f64;
            for m in &ms.modes {
                let target = -m.z.conj();
                let dist = ms
                    .modes
                    .iter()
                    .map(|o| (o.z - target).norm())
                    .fold(f64::INFINITY, f64::min);
                worst_pair = worst_pair.max(dist);
            }
            push(
                "hermitian_pairing",
                worst_pair,
                1e-6 * st.scale,
                None,
            );
        }
        Err(e) => {
            push(
                "lower_half_plane_confinement",
                f64::INFINITY,
                1e-9,
                Some(format!("mode solve failed: {e}")),
            );
        }
    }

    Ok(checks)
}
