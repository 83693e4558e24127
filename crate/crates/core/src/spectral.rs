//! Bi-orthogonal spectral analysis of the (non-hermitian) effective Liouville.
//!
//! At a fixed frequency z the d²×d² matrix L(z) is decomposed into right and
//! left eigenmatrices normalized to (L_j|R_k) = δ_jk, so that
//! Σ_k |R_k)(L_k| resolves the super-unity and Σ_k λ_k |R_k)(L_k| = L(z).
//! The unit matrix is always a left eigenvector with eigenvalue 0; its right
//! partner is the zero-mode, which normalizes to the stationary state. All
//! other right eigenmatrices are traceless. Across a frequency grid the
//! eigenvalues λ_k(z) form bands, tracked by eigenvector overlap.

use faer::Mat;
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::hs::{self, DensityMatrix};
use crate::linalg::{self, CMat};
use crate::projection::EffectiveLiouvilleEvaluator;

/// Eigenvalue pairs closer than this (relative to max |λ|) count as degenerate.
pub const DEGENERACY_TOL: f64 = 1e-8;

/// Bi-orthogonality defect beyond which a decomposition is flagged.
pub const NEAR_DEGENERATE_TOL: f64 = 1e-6;

/// Band-to-band matching overlaps below this raise a crossing flag.
pub const CROSSING_OVERLAP: f64 = 0.7;

/// Bi-orthogonal eigendecomposition of one L(z).
#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    pub z: C64,
    /// Eigenvalues, k = 0 reserved for the zero-mode branch.
    pub eigenvalues: Vec<C64>,
    /// Right eigenmatrices R_k (d×d).
    pub right: Vec<CMat>,
    /// Left eigenmatrices L_k (d×d), (L_j|R_k) = δ_jk.
    pub left: Vec<CMat>,
    /// Max bi-orthogonality defect |(L_j|R_k) − δ_jk|.
    pub condition: f64,
    /// True when the defect exceeds [`NEAR_DEGENERATE_TOL`].
    pub near_degenerate: bool,
    /// Index pairs with |λ_i − λ_j| ≤ DEGENERACY_TOL · max|λ|.
    pub degenerate_pairs: Vec<(usize, usize)>,
    /// ‖vec(1)† L(z)‖ / ‖L(z)‖: how well the unit matrix annihilates from the left.
    pub left_unit_residual: f64,
}

impl SpectralDecomposition {
    pub fn dim_op(&self) -> usize {
        self.right.first().map(|r| r.nrows()).unwrap_or(0)
    }

    /// Largest |eigenvalue|.
    pub fn max_abs_eigenvalue(&self) -> f64 {
        self.eigenvalues.iter().fold(0.0_f64, |m, v| m.max(v.norm()))
    }

    /// ‖Σ_k λ_k |R_k)(L_k| − L(z)‖ / ‖L(z)‖ against the decomposed matrix.
    pub fn reassembly_residual(&self, l_z: &CMat) -> f64 {
        let n = l_z.nrows();
        let mut sum: CMat = Mat::zeros(n, n);
        for k in 0..self.eigenvalues.len() {
            let r = hs::vec_op(&self.right[k]);
            let l = hs::vec_op(&self.left[k]);
            sum += linalg::scale(self.eigenvalues[k], &(&r * linalg::dagger(&l)));
        }
        (sum - l_z).norm_l2() / l_z.norm_l2().max(1e-300)
    }

    /// ‖Σ_k |R_k)(L_k| − 1‖ on the superoperator level.
    pub fn completeness_residual(&self) -> f64 {
        let d2 = self.eigenvalues.len();
        let mut sum: CMat = Mat::zeros(d2, d2);
        for k in 0..d2 {
            let r = hs::vec_op(&self.right[k]);
            let l = hs::vec_op(&self.left[k]);
            sum += &r * linalg::dagger(&l);
        }
        (sum - linalg::eye(d2)).norm_l2() / (d2 as f64).sqrt()
    }
}

/// Fix the overall phase of a vector: largest-modulus entry real positive.
fn phase_fix(v: &mut CMat) {
    let mut best = (0usize, 0.0_f64);
    for i in 0..v.nrows() {
        let m = v[(i, 0)].norm();
        if m > best.1 {
            best = (i, m);
        }
    }
    let pivot = v[(best.0, 0)];
    if pivot.norm() > 0.0 {
        let phase = pivot / C64::new(pivot.norm(), 0.0);
        for i in 0..v.nrows() {
            v[(i, 0)] /= phase;
        }
    }
}

fn column(m: &CMat, k: usize) -> CMat {
    m.get(.., k..k + 1).to_owned()
}

/// General bi-orthogonal eigendecomposition of a superoperator.
///
/// Left modes come from the adjoint problem and are matched to the right
/// eigenvalues by conjugate proximity; each pair is rescaled by 1/√(L_k|R_k)
/// on both sides. The eigenvalue of smallest modulus lands at index 0.
pub fn decompose(l_z: &CMat, z: C64) -> Result<SpectralDecomposition> {
    let n = l_z.nrows();
    if n != l_z.ncols() {
        return Err(Error::DimensionMismatch {
            op: "decompose",
            detail: format!("{}x{}", l_z.nrows(), l_z.ncols()),
        });
    }
    let d = (n as f64).sqrt().round() as usize;
    if d * d != n {
        return Err(Error::DimensionMismatch {
            op: "decompose",
            detail: format!("superoperator dimension {n} is not a perfect square"),
        });
    }

    let (vals_r, vecs_r) = linalg::eig_general(l_z, "decompose")?;
    let adj = linalg::dagger(l_z);
    let (vals_l, vecs_l) = linalg::eig_general(&adj, "decompose (adjoint)")?;

    // match left eigenvalues (conjugated) to right eigenvalues, greedily by
    // proximity, smallest distances first
    let mut dist: Vec<(f64, usize, usize)> = Vec::with_capacity(n * n);
    for k in 0..n {
        for j in 0..n {
            dist.push(((vals_l[j].conj() - vals_r[k]).norm(), k, j));
        }
    }
    dist.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let mut right_taken = vec![false; n];
    let mut left_taken = vec![false; n];
    let mut partner = vec![usize::MAX; n];
    let mut assigned = 0;
    for &(_, k, j) in &dist {
        if right_taken[k] || left_taken[j] {
            continue;
        }
        right_taken[k] = true;
        left_taken[j] = true;
        partner[k] = j;
        assigned += 1;
        if assigned == n {
            break;
        }
    }

    let scale = vals_r.iter().fold(0.0_f64, |m, v| m.max(v.norm()));

    // cluster (numerically) degenerate eigenvalues: inside a cluster the
    // eigenvector mixing is arbitrary and bi-orthogonality needs the block
    // Gram matrix, not per-pair scaling
    let mut cluster_of = vec![usize::MAX; n];
    let mut clusters: Vec<Vec<usize>> = Vec::new();
    for k in 0..n {
        if cluster_of[k] != usize::MAX {
            continue;
        }
        let id = clusters.len();
        let mut members = vec![k];
        cluster_of[k] = id;
        for j in (k + 1)..n {
            if cluster_of[j] == usize::MAX
                && (vals_r[j] - vals_r[k]).norm() <= DEGENERACY_TOL * scale.max(1e-300)
            {
                cluster_of[j] = id;
                members.push(j);
            }
        }
        clusters.push(members);
    }

    let mut modes: Vec<(C64, CMat, CMat)> = (0..n)
        .map(|_| (linalg::ZERO, Mat::zeros(n, 1), Mat::zeros(n, 1)))
        .collect();
    for members in &clusters {
        if members.len() == 1 {
            let k = members[0];
            let mut r = column(&vecs_r, k);
            phase_fix(&mut r);
            let l = column(&vecs_l, partner[k]);
            let c = (linalg::dagger(&l) * &r)[(0, 0)];
            // |c| near zero means the pair is (numerically) defective
            if c.norm() < 1e-12 {
                return Err(Error::DegenerateSpectrum {
                    op: "decompose",
                    detail: format!(
                        "defective pair at λ = {} ((L|R) = {:.3e})",
                        vals_r[k],
                        c.norm()
                    ),
                });
            }
            let s = c.sqrt();
            modes[k] = (
                vals_r[k],
                linalg::scale(s.inv(), &r),
                linalg::scale(s.conj().inv(), &l),
            );
        } else {
            // r' = r G⁻¹ with G_ij = (L_i|R_j) restores (L_i|R'_j) = δ_ij
            let m = members.len();
            let rights: Vec<CMat> = members
                .iter()
                .map(|&k| {
                    let mut r = column(&vecs_r, k);
                    phase_fix(&mut r);
                    r
                })
                .collect();
            let lefts: Vec<CMat> = members
                .iter()
                .map(|&k| column(&vecs_l, partner[k]))
                .collect();
            let gram = Mat::from_fn(m, m, |i, j| {
                (linalg::dagger(&lefts[i]) * &rights[j])[(0, 0)]
            });
            let inv = linalg::lu_solve(&gram, &linalg::eye(m), "decompose (degenerate block)")
                .map_err(|_| Error::DegenerateSpectrum {
                    op: "decompose",
                    detail: format!(
                        "defective {m}-fold block at λ = {} (singular Gram)",
                        vals_r[members[0]]
                    ),
                })?;
            for (jj, &k) in members.iter().enumerate() {
                let mut r_new: CMat = Mat::zeros(n, 1);
                for (ii, r) in rights.iter().enumerate() {
                    r_new += linalg::scale(inv[(ii, jj)], r);
                }
                modes[k] = (vals_r[k], r_new, lefts[jj].clone());
            }
        }
    }

    // zero-mode branch first, remaining modes by |λ| for determinism
    modes.sort_by(|a, b| a.0.norm().partial_cmp(&b.0.norm()).unwrap());

    let eigenvalues: Vec<C64> = modes.iter().map(|m| m.0).collect();
    let right: Vec<CMat> = modes.iter().map(|m| hs::unvec_op(&m.1, d)).collect();
    let left: Vec<CMat> = modes.iter().map(|m| hs::unvec_op(&m.2, d)).collect();

    // bi-orthogonality defect
    let mut condition = 0.0_f64;
    for j in 0..n {
        let lv = hs::vec_op(&left[j]);
        for k in 0..n {
            let rv = hs::vec_op(&right[k]);
            let ov = (linalg::dagger(&lv) * &rv)[(0, 0)];
            let target = if j == k { C64::new(1.0, 0.0) } else { linalg::ZERO };
            condition = condition.max((ov - target).norm());
        }
    }

    let mut degenerate_pairs = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            if (eigenvalues[i] - eigenvalues[j]).norm() <= DEGENERACY_TOL * scale.max(1e-300) {
                degenerate_pairs.push((i, j));
            }
        }
    }

    let one = hs::vec_op(&linalg::eye(d));
    let left_unit_residual =
        (linalg::dagger(&one) * l_z).norm_l2() / l_z.norm_l2().max(1e-300);

    Ok(SpectralDecomposition {
        z,
        eigenvalues,
        right,
        left,
        condition,
        near_degenerate: condition > NEAR_DEGENERATE_TOL,
        degenerate_pairs,
        left_unit_residual,
    })
}

/// The zero-mode normalized to a stationary-state candidate.
#[derive(Debug, Clone)]
pub struct ZeroMode {
    pub rho_infinity: DensityMatrix,
    /// False when another eigenvalue sits within the degeneracy tolerance of 0.
    pub unique: bool,
    /// Number of eigenvalues within tolerance of zero.
    pub zero_count: usize,
}

/// Extract and normalize the stationary state from a decomposition.
pub fn zero_mode(dec: &SpectralDecomposition) -> Result<ZeroMode> {
    let scale = dec.max_abs_eigenvalue().max(1e-300);
    let lam0 = dec.eigenvalues[0];
    if lam0.norm() > DEGENERACY_TOL * scale {
        return Err(Error::NoZeroMode {
            smallest: lam0.norm(),
            scale,
        });
    }
    let zero_indices: Vec<usize> = dec
        .eigenvalues
        .iter()
        .enumerate()
        .filter(|(_, v)| v.norm() <= DEGENERACY_TOL * scale)
        .map(|(k, _)| k)
        .collect();
    let zero_count = zero_indices.len();

    // basis-invariant candidate: the zero-subspace residue of the maximally
    // mixed state, Σ_i (L_i|1/d) R_i. For a unique zero mode this is the
    // trace-normalized zero mode itself.
    let d = dec.dim_op();
    let mixed = linalg::scale(C64::new(1.0 / d as f64, 0.0), &linalg::eye(d));
    let mut candidate: CMat = faer::Mat::zeros(d, d);
    for &k in &zero_indices {
        let weight = hs::hs_inner(&dec.left[k], &mixed)?;
        candidate += linalg::scale(weight, &dec.right[k]);
    }
    let herm = linalg::hermitize(&candidate);
    let tr = linalg::trace(&herm);
    if tr.norm() < 1e-10 {
        return Err(Error::DegenerateSpectrum {
            op: "zero_mode",
            detail: format!("zero-mode candidate has vanishing trace {:.3e}", tr.norm()),
        });
    }
    let rho = linalg::scale(tr.inv(), &herm);
    // small negative weight may remain when the zero eigenvalue is shared;
    // report through a relaxed positivity tolerance
    let rho_infinity = DensityMatrix::new(linalg::hermitize(&rho), 1e-6)?;
    Ok(ZeroMode {
        rho_infinity,
        unique: zero_count == 1,
        zero_count,
    })
}

/// One entry of the traceless report.
#[derive(Debug, Clone, Copy)]
pub struct TraceViolation {
    pub k: usize,
    pub trace_abs: f64,
    pub relative: f64,
}

/// Report on Tr R_k = 0 for k ≠ 0.
#[derive(Debug, Clone)]
pub struct TracelessReport {
    pub violations: Vec<TraceViolation>,
    pub max_relative: f64,
}

impl TracelessReport {
    pub fn pass(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Check that every right eigenmatrix with λ_k ≠ 0 is traceless.
///
/// (1|R_k)λ_k = 0 forces the trace only for non-vanishing eigenvalues;
/// additional zero-cluster members of separated systems carry trace
/// legitimately.
pub fn traceless_check(dec: &SpectralDecomposition) -> TracelessReport {
    let scale = dec.max_abs_eigenvalue().max(1e-300);
    let mut violations = Vec::new();
    let mut max_relative = 0.0_f64;
    for k in 1..dec.eigenvalues.len() {
        if dec.eigenvalues[k].norm() <= DEGENERACY_TOL * scale {
            continue;
        }
        let tr = linalg::trace(&dec.right[k]).norm();
        let rel = tr / hs::hs_norm(&dec.right[k]).max(1e-300);
        max_relative = max_relative.max(rel);
        if rel > 1e-9 {
            violations.push(TraceViolation {
                k,
                trace_abs: tr,
                relative: rel,
            });
        }
    }
    TracelessReport {
        violations,
        max_relative,
    }
}

/// λ_k(z), R_k(z), L_k(z) of one band along the grid.
#[derive(Debug, Clone)]
pub struct Band {
    pub lambda: Vec<C64>,
    pub right: Vec<CMat>,
    pub left: Vec<CMat>,
}

/// Continuously matched bands over a frequency grid.
#[derive(Debug, Clone)]
pub struct BandTrack {
    pub grid: Vec<C64>,
    pub bands: Vec<Band>,
    /// One flag per grid interval; true when the best overlap fell below
    /// [`CROSSING_OVERLAP`] anywhere in the matching.
    pub crossing_flags: Vec<bool>,
    /// Common imaginary part of the grid (the smoothing ε).
    pub epsilon: f64,
}

impl BandTrack {
    pub fn n_bands(&self) -> usize {
        self.bands.len()
    }

    /// CSV export: z_re, z_im, k, lambda_re, lambda_im, crossing_flag.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("z_re,z_im,k,lambda_re,lambda_im,crossing_flag\n");
        for (j, z) in self.grid.iter().enumerate() {
            let flag = if j < self.crossing_flags.len() && self.crossing_flags[j] {
                1
            } else {
                0
            };
            for (k, band) in self.bands.iter().enumerate() {
                let lam = band.lambda[j];
                out.push_str(&format!(
                    "{:.16e},{:.16e},{},{:.16e},{:.16e},{}\n",
                    z.re, z.im, k, lam.re, lam.im, flag
                ));
            }
        }
        out
    }
}

/// Track all bands of L(z) across a sorted frequency grid.
///
/// Modes at consecutive grid points are matched greedily on the
/// |(L_j(z_i)|R_k(z_{i+1}))| overlap matrix.
pub fn track_bands(ev: &EffectiveLiouvilleEvaluator, grid: &[C64]) -> Result<BandTrack> {
    if grid.len() < 2 {
        return Err(Error::InvalidParameter {
            name: "grid",
            detail: format!("need at least 2 points, got {}", grid.len()),
        });
    }
    for w in grid.windows(2) {
        if w[0].re > w[1].re {
            return Err(Error::InvalidParameter {
                name: "grid",
                detail: "grid must be sorted by real part".into(),
            });
        }
        if (w[0].im - w[1].im).abs() > 1e-12 * (1.0 + w[0].im.abs()) {
            return Err(Error::InvalidParameter {
                name: "grid",
                detail: "grid must have a constant imaginary part".into(),
            });
        }
    }
    let epsilon = grid[0].im;

    let first = decompose(&ev.evaluate(grid[0])?, grid[0])?;
    let n = first.eigenvalues.len();
    let mut bands: Vec<Band> = (0..n)
        .map(|k| Band {
            lambda: vec![first.eigenvalues[k]],
            right: vec![first.right[k].clone()],
            left: vec![first.left[k].clone()],
        })
        .collect();
    let mut crossing_flags = Vec::with_capacity(grid.len() - 1);
    let mut prev = first;

    for (interval, &z) in grid.iter().enumerate().skip(1) {
        let cur = decompose(&ev.evaluate(z)?, z)?;
        // overlap of previous left modes with current right modes
        let mut overlap = vec![vec![0.0_f64; n]; n];
        for (j, row) in overlap.iter_mut().enumerate() {
            let lv = hs::vec_op(&prev.left[j]);
            for (k, entry) in row.iter_mut().enumerate() {
                let rv = hs::vec_op(&cur.right[k]);
                *entry = (linalg::dagger(&lv) * &rv)[(0, 0)].norm();
            }
        }
        // greedy assignment on the largest remaining overlap
        let mut order = vec![usize::MAX; n];
        let mut assign_overlap = vec![0.0_f64; n];
        let mut row_used = vec![false; n];
        let mut col_used = vec![false; n];
        for _ in 0..n {
            let mut best = (0usize, 0usize, -1.0_f64);
            for j in 0..n {
                if row_used[j] {
                    continue;
                }
                for k in 0..n {
                    if col_used[k] {
                        continue;
                    }
                    if overlap[j][k] > best.2 {
                        best = (j, k, overlap[j][k]);
                    }
                }
            }
            if !best.2.is_finite() || best.2 < 1e-12 {
                return Err(Error::TrackingFailure {
                    interval: interval - 1,
                    detail: format!("near-singular overlap {:.3e}", best.2),
                });
            }
            order[best.0] = best.1;
            assign_overlap[best.0] = best.2;
            row_used[best.0] = true;
            col_used[best.1] = true;
        }
        // reorder to band order
        let mut vals: Vec<C64> = (0..n).map(|j| cur.eigenvalues[order[j]]).collect();
        let mut rights: Vec<CMat> = (0..n).map(|j| cur.right[order[j]].clone()).collect();
        let mut lefts: Vec<CMat> = (0..n).map(|j| cur.left[order[j]].clone()).collect();

        // inside a degenerate cluster the eigensolver's basis is arbitrary;
        // re-gauge it against the previous point for continuity
        let val_scale = vals.iter().fold(0.0_f64, |m, v| m.max(v.norm()));
        let mut in_cluster = vec![false; n];
        let mut flagged = false;
        let mut visited = vec![false; n];
        for j in 0..n {
            if visited[j] {
                continue;
            }
            let mut cluster = vec![j];
            visited[j] = true;
            for k in (j + 1)..n {
                if !visited[k]
                    && (vals[k] - vals[j]).norm() <= DEGENERACY_TOL * val_scale.max(1e-300)
                {
                    visited[k] = true;
                    cluster.push(k);
                }
            }
            if cluster.len() < 2 {
                continue;
            }
            for &idx in &cluster {
                in_cluster[idx] = true;
            }
            let m = cluster.len();
            let o = Mat::from_fn(m, m, |a, b| {
                let lv = hs::vec_op(&prev.left[cluster[a]]);
                let rv = hs::vec_op(&rights[cluster[b]]);
                (linalg::dagger(&lv) * &rv)[(0, 0)]
            });
            match linalg::lu_solve(&o, &linalg::eye(m), "track_bands (gauge)") {
                Ok(oinv) => {
                    let d_op = rights[cluster[0]].nrows();
                    let mut new_rights = Vec::with_capacity(m);
                    let mut new_lefts = Vec::with_capacity(m);
                    for b in 0..m {
                        let mut r: CMat = Mat::zeros(d_op, d_op);
                        let mut l: CMat = Mat::zeros(d_op, d_op);
                        for a in 0..m {
                            r += linalg::scale(oinv[(a, b)], &rights[cluster[a]]);
                            l += linalg::scale(o[(b, a)].conj(), &lefts[cluster[a]]);
                        }
                        new_rights.push(r);
                        new_lefts.push(l);
                    }
                    for (b, &idx) in cluster.iter().enumerate() {
                        rights[idx] = new_rights[b].clone();
                        lefts[idx] = new_lefts[b].clone();
                    }
                }
                Err(_) => {
                    flagged = true;
                }
            }
        }
        // a weak overlap outside degenerate clusters signals a band crossing
        for j in 0..n {
            if !in_cluster[j] && assign_overlap[j] < CROSSING_OVERLAP {
                flagged = true;
            }
        }
        crossing_flags.push(flagged);

        for (j, band) in bands.iter_mut().enumerate() {
            band.lambda.push(vals[j]);
            band.right.push(rights[j].clone());
            band.left.push(lefts[j].clone());
        }
        prev = SpectralDecomposition {
            z,
            eigenvalues: std::mem::take(&mut vals),
            right: std::mem::take(&mut rights),
            left: std::mem::take(&mut lefts),
            condition: cur.condition,
            near_degenerate: cur.near_degenerate,
            degenerate_pairs: Vec::new(),
            left_unit_residual: cur.left_unit_residual,
        };
    }

    Ok(BandTrack {
        grid: grid.to_vec(),
        bands,
        crossing_flags,
        epsilon,
    })
}

/// Evenly spaced grid ω ∈ [ω_min, ω_max] at height ε.
pub fn frequency_grid(omega_min: f64, omega_max: f64, n_points: usize, epsilon: f64) -> Vec<C64> {
    let step = if n_points > 1 {
        (omega_max - omega_min) / (n_points - 1) as f64
    } else {
        0.0
    };
    (0..n_points)
        .map(|j| C64::new(omega_min + j as f64 * step, epsilon))
        .collect()
}
