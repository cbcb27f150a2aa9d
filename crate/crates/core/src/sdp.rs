//! First-order solver for the K-means semidefinite relaxation
//!
//! ```text
//! max ⟨A, Z⟩  s.t.  Z = Zᵀ, Z ⪰ 0, tr Z = K, Z1 = 1, Z ≥ 0
//! ```
//!
//! The feasible set is split into three sets with closed-form projections:
//! `S₁ = {Z = Zᵀ, Z1 = 1}`, `S₂ = {Z ⪰ 0, tr Z = K}` and `S₃ = {Z ≥ 0}`.
//! A consensus alternating-direction iteration runs over the three copies,
//! with the linear objective folded into the consensus step:
//!
//! ```text
//! Z̄  ← mean_i(Yᵢ + Uᵢ) + Ã / (3ρ)
//! Yᵢ ← P_{Sᵢ}(Z̄ − Uᵢ)
//! Uᵢ ← Uᵢ + Yᵢ − Z̄
//! ```
//!
//! `Ã` is `A` with its row/column means removed, rescaled to Frobenius norm
//! `3/√n`. On the feasible set `⟨u1ᵀ + 1uᵀ, Z⟩ = 2⟨u, 1⟩` is constant,
//! so the maximizer is unchanged while the iteration becomes insensitive to
//! the magnitude and offset of the similarities.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, SYMMETRY_TOL};
use crate::similarity::SimilarityMatrix;

/// `‖Ã‖_F · √n` after preconditioning. With this normalization the best
/// penalty stays close to `ρ = 1` from n ≈ 8 to n ≈ 100.
const OBJECTIVE_SCALE: f64 = 3.0;

/// Number of trailing consensus objectives kept on the solution.
pub const OBJECTIVE_WINDOW: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub rho: f64,
    pub max_iters: usize,
    pub tol_primal: f64,
    pub tol_dual: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            rho: 1.0,
            max_iters: 20_000,
            tol_primal: 1e-5,
            tol_dual: 1e-5,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0 && self.rho.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "rho={} must be > 0",
                self.rho
            )));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidParameter("max_iters must be positive".into()));
        }
        for (name, v) in [("tol_primal", self.tol_primal), ("tol_dual", self.tol_dual)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::InvalidParameter(format!(
                    "{name}={v} must lie in (0, 1)"
                )));
            }
        }
        Ok(())
    }
}

/// Constraint violations of a candidate matrix. All fields are `≥ 0`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FeasibilityResiduals {
    /// `max |Z_ij − Z_ji|`
    pub sym: f64,
    /// `max(0, −λ_min(Z))`
    pub psd: f64,
    /// `|tr Z − K|`
    pub trace_gap: f64,
    /// `max_i |(Z1)_i − 1|`
    pub rowsum: f64,
    /// `max(0, −min_ij Z_ij)`
    pub neg: f64,
}

impl FeasibilityResiduals {
    pub fn max(&self) -> f64 {
        [self.sym, self.psd, self.trace_gap, self.rowsum, self.neg]
            .into_iter()
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SdpSolution {
    pub z_hat: DMatrix<f64>,
    /// `⟨A, Ẑ⟩` on the caller's (unpreconditioned) matrix.
    pub objective: f64,
    pub residuals: FeasibilityResiduals,
    pub iters: usize,
    pub converged: bool,
    /// `⟨A, Z̄_t⟩` over the last (up to) [`OBJECTIVE_WINDOW`] iterations.
    pub recent_objectives: Vec<f64>,
}

pub fn residuals(z: &DMatrix<f64>, k: usize) -> Result<FeasibilityResiduals> {
    let n = linalg::ensure_square(z)?;
    let mut sym = 0.0_f64;
    for i in 0..n {
        for j in (i + 1)..n {
            sym = sym.max((z[(i, j)] - z[(j, i)]).abs());
        }
    }
    let min_eig = if n == 0 {
        0.0
    } else {
        linalg::min_eigenvalue(&linalg::symmetrized(z))?
    };
    let rowsum = z
        .row_iter()
        .map(|r| (r.sum() - 1.0).abs())
        .fold(0.0, f64::max);
    let min_entry = z.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(FeasibilityResiduals {
        sym,
        psd: (-min_eig).max(0.0),
        trace_gap: (z.trace() - k as f64).abs(),
        rowsum,
        neg: if n == 0 { 0.0 } else { (-min_entry).max(0.0) },
    })
}

/// Euclidean projection of `v` onto `{λ ≥ 0, Σλ = total}` (sorted-threshold rule).
pub fn project_simplex(v: &[f64], total: f64) -> Vec<f64> {
    if v.is_empty() {
        return Vec::new();
    }
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumulative = 0.0;
    let mut theta = 0.0;
    for (j, &u) in sorted.iter().enumerate() {
        cumulative += u;
        let candidate = (cumulative - total) / (j + 1) as f64;
        if u - candidate > 0.0 {
            theta = candidate;
        }
    }
    v.iter().map(|&x| (x - theta).max(0.0)).collect()
}

/// Frobenius projection onto `{Z ⪰ 0, tr Z = K}` via the eigenvalue simplex.
pub fn project_psd_trace(m: &DMatrix<f64>, k: usize) -> Result<DMatrix<f64>> {
    linalg::ensure_square(m)?;
    let eig = linalg::sym_eigen(&linalg::symmetrized(m))?;
    let projected = project_simplex(eig.values.as_slice(), k as f64);
    let n = m.nrows();
    let mut out = DMatrix::zeros(n, n);
    for (j, &w) in projected.iter().enumerate() {
        if w > 0.0 {
            let v = eig.vectors.column(j);
            out.ger(w, &v, &v, 1.0);
        }
    }
    linalg::symmetrize_in_place(&mut out);
    Ok(out)
}

/// Frobenius projection onto `{Z = Zᵀ, Z1 = 1}`:
/// `S + u1ᵀ + 1uᵀ` with `S = (M + Mᵀ)/2`, `r = 1 − S1`, `u = (r − (1ᵀr / 2n) 1) / n`.
pub fn project_affine(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = linalg::ensure_square(m)?;
    let mut s = linalg::symmetrized(m);
    if n == 0 {
        return Ok(s);
    }
    let nf = n as f64;
    let r: Vec<f64> = s.row_iter().map(|row| 1.0 - row.sum()).collect();
    let half_mean = r.iter().sum::<f64>() / (2.0 * nf);
    let u: Vec<f64> = r.iter().map(|ri| (ri - half_mean) / nf).collect();
    for i in 0..n {
        for j in 0..n {
            s[(i, j)] += u[i] + u[j];
        }
    }
    Ok(s)
}

/// Entrywise `max(M, 0)`.
pub fn project_nonneg(m: &DMatrix<f64>) -> DMatrix<f64> {
    m.map(|x| x.max(0.0))
}

/// Frobenius projection onto `{Z = Zᵀ, Z1 = 1, tr Z = K}`.
pub fn project_affine_trace(m: &DMatrix<f64>, k: usize) -> Result<DMatrix<f64>> {
    let mut z = project_affine(m)?;
    let n = z.nrows();
    if n < 2 {
        return Ok(z);
    }
    // I − 11ᵀ/n is the component of I orthogonal to {u1ᵀ + 1uᵀ}.
    let shift = (k as f64 - z.trace()) / (n as f64 - 1.0);
    let off = shift / n as f64;
    for i in 0..n {
        for j in 0..n {
            z[(i, j)] -= off;
        }
        z[(i, i)] += shift;
    }
    Ok(z)
}

/// Move a near-feasible matrix into the feasible set exactly (up to
/// rounding): project onto the affine constraints, then take the smallest
/// step toward the interior point `αI + β11ᵀ` (`α = (K−1)/(n−1)`,
/// `β = (n−K)/(n(n−1))`) that restores `Z ≥ 0` and `Z ⪰ 0`.
///
/// Returns the repaired matrix and the mixing weight used.
pub fn restore_feasibility(z: &DMatrix<f64>, k: usize) -> Result<(DMatrix<f64>, f64)> {
    let n = linalg::ensure_square(z)?;
    if k == 0 || k > n {
        return Err(Error::InvalidClusterCount { k, n });
    }
    let nf = n as f64;
    // K = 1 and K = n leave a single feasible point: 11ᵀ/n and I.
    if k == 1 {
        return Ok((DMatrix::from_element(n, n, 1.0 / nf), 1.0));
    }
    if k == n {
        return Ok((DMatrix::identity(n, n), 1.0));
    }
    let kf = k as f64;
    let alpha = (kf - 1.0) / (nf - 1.0);
    let beta = (nf - kf) / (nf * (nf - 1.0));
    let affine = project_affine_trace(z, k)?;

    // Entry condition: (1−θ) z_min + θ·min(α+β, β) ≥ 0.
    let center_min = beta.min(alpha + beta);
    let z_min = affine.iter().copied().fold(f64::INFINITY, f64::min);
    let mut theta: f64 = 0.0;
    if z_min < 0.0 {
        if center_min <= 0.0 {
            return Err(Error::InvalidParameter(
                "no strictly nonnegative interior point".into(),
            ));
        }
        theta = theta.max(-z_min / (center_min - z_min));
    }
    // On 1⊥ the center is αI, and 1 is an eigenvector of both with eigenvalue 1.
    let p = DMatrix::identity(n, n) - DMatrix::from_element(n, n, 1.0 / nf);
    let restricted = &p * &affine * &p;
    let eig = linalg::sym_eigen(&linalg::symmetrized(&restricted))?;
    // The restriction has an eigenvalue 0 on span{1}; drop the one closest to it.
    let mut values: Vec<f64> = eig.values.iter().copied().collect();
    let ones = DVector::from_element(n, 1.0 / nf.sqrt());
    let (drop, _) = (0..n)
        .map(|j| (j, eig.vectors.column(j).dot(&ones).abs()))
        .fold(
            (0, -1.0),
            |best, cur| if cur.1 > best.1 { cur } else { best },
        );
    values.remove(drop);
    let lam_min = values.iter().copied().fold(f64::INFINITY, f64::min);
    if lam_min < 0.0 {
        if alpha <= 0.0 {
            return Err(Error::InvalidParameter(
                "no strictly PSD interior point".into(),
            ));
        }
        theta = theta.max(-lam_min / (alpha - lam_min));
    }
    if theta == 0.0 {
        return Ok((affine, 0.0));
    }
    // A hair past the threshold so rounding cannot leave a −1e-17 entry.
    let theta = (theta * (1.0 + 1e-9)).min(1.0);
    let mut center = DMatrix::from_element(n, n, beta);
    for i in 0..n {
        center[(i, i)] += alpha;
    }
    let mixed = affine * (1.0 - theta) + center * theta;
    Ok((project_affine_trace(&mixed, k)?, theta))
}

/// Double-center and normalize the objective; see the module docs.
fn precondition(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let nf = n as f64;
    let row_means: Vec<f64> = a.row_iter().map(|r| r.sum() / nf).collect();
    let grand = row_means.iter().sum::<f64>() / nf;
    let mut c = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            c[(i, j)] = a[(i, j)] - row_means[i] - row_means[j] + grand;
        }
    }
    linalg::symmetrize_in_place(&mut c);
    let norm = c.norm();
    if norm > 1e-300 && norm.is_finite() {
        c *= OBJECTIVE_SCALE / (norm * nf.sqrt());
    }
    c
}

pub fn solve(a: &SimilarityMatrix, k: usize, cfg: &SolverConfig) -> Result<SdpSolution> {
    cfg.validate()?;
    let am = a.matrix();
    let n = linalg::ensure_symmetric(am, SYMMETRY_TOL)?;
    if k < 1 || k > n {
        return Err(Error::InvalidClusterCount { k, n });
    }

    let target = precondition(am);
    let step = &target / (3.0 * cfg.rho);

    let mut zbar = DMatrix::identity(n, n) * (k as f64 / n as f64);
    let mut ys = [zbar.clone(), zbar.clone(), zbar.clone()];
    let mut us = [
        DMatrix::<f64>::zeros(n, n),
        DMatrix::zeros(n, n),
        DMatrix::zeros(n, n),
    ];
    let mut recent = Vec::with_capacity(OBJECTIVE_WINDOW);
    let mut best: Option<(f64, DMatrix<f64>)> = None;
    let mut iters = 0;
    let mut converged = false;

    while iters < cfg.max_iters {
        iters += 1;
        let prev = std::mem::replace(
            &mut zbar,
            (&ys[0] + &us[0] + &ys[1] + &us[1] + &ys[2] + &us[2]) / 3.0 + &step,
        );
        ys[0] = project_affine(&(&zbar - &us[0]))?;
        ys[1] = project_psd_trace(&(&zbar - &us[1]), k)?;
        ys[2] = project_nonneg(&(&zbar - &us[2]));
        let mut primal = 0.0_f64;
        for (y, u) in ys.iter().zip(us.iter_mut()) {
            let gap = y - &zbar;
            primal = primal.max(gap.norm());
            *u += gap;
        }
        let dual = (&zbar - &prev).norm();

        if recent.len() == OBJECTIVE_WINDOW {
            recent.remove(0);
        }
        recent.push(linalg::frobenius_dot(am, &zbar));

        let scale = zbar.norm().max(1.0);
        if best.as_ref().is_none_or(|(r, _)| primal < *r) {
            best = Some((primal, zbar.clone()));
        }
        if primal <= cfg.tol_primal * scale && dual <= cfg.tol_dual * scale {
            let candidate = finalize(&zbar)?;
            if residuals(&candidate, k)?.max() <= cfg.tol_primal {
                converged = true;
                break;
            }
        }
    }

    let source = if converged {
        zbar
    } else {
        best.map(|(_, z)| z).unwrap_or(zbar)
    };
    let z_hat = finalize(&source)?;
    let residuals = residuals(&z_hat, k)?;
    Ok(SdpSolution {
        objective: linalg::frobenius_dot(am, &z_hat),
        z_hat,
        residuals,
        iters,
        converged,
        recent_objectives: recent,
    })
}

fn finalize(zbar: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    project_affine(&project_nonneg(zbar))
}
