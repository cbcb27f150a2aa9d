//! Dense symmetric linear algebra shared by the solver, the operator-norm
//! routines and the samplers.
//!
//! The eigensolver contract is: for every returned pair `(λ, v)`,
//! `‖Cv − λv‖ ≤ 1e-8 ‖C‖_op`. It is backed by nalgebra's tridiagonal QR.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Relative tolerance used when validating symmetry of user input.
pub const SYMMETRY_TOL: f64 = 1e-12;

const EIGEN_MAX_SWEEPS: usize = 10_000;

/// Eigendecomposition `C = V diag(values) Vᵀ`, eigenvalues sorted descending.
#[derive(Debug, Clone)]
pub struct SymEigen {
    pub values: DVector<f64>,
    pub vectors: DMatrix<f64>,
}

impl SymEigen {
    pub fn max_value(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Rebuild `V diag(f(λ)) Vᵀ`, skipping columns where `f(λ) == 0`.
    pub fn recompose_with(&self, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
        let n = self.vectors.nrows();
        let mut out = DMatrix::zeros(n, n);
        for (j, &lambda) in self.values.iter().enumerate() {
            let w = f(lambda);
            if w == 0.0 {
                continue;
            }
            let v = self.vectors.column(j);
            out.ger(w, &v, &v, 1.0);
        }
        symmetrize_in_place(&mut out);
        out
    }
}

pub fn ensure_square(m: &DMatrix<f64>) -> Result<usize> {
    if m.nrows() != m.ncols() {
        return Err(Error::NotSquare {
            rows: m.nrows(),
            cols: m.ncols(),
        });
    }
    Ok(m.nrows())
}

/// `max |m_ij − m_ji| / max(max |m_ij|, tiny)`.
pub fn relative_asymmetry(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let scale = m.amax();
    if scale == 0.0 {
        return 0.0;
    }
    let mut worst = 0.0_f64;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst / scale
}

pub fn ensure_symmetric(m: &DMatrix<f64>, tol: f64) -> Result<usize> {
    let n = ensure_square(m)?;
    if m.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidParameter(
            "matrix has non-finite entries".into(),
        ));
    }
    let asymmetry = relative_asymmetry(m);
    if asymmetry > tol {
        return Err(Error::NotSymmetric { asymmetry });
    }
    Ok(n)
}

/// Overwrite both triangles with their average.
pub fn symmetrize_in_place(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

pub fn symmetrized(m: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = m.clone();
    symmetrize_in_place(&mut out);
    out
}

/// Eigendecomposition of a symmetric matrix. Only the lower triangle is read.
pub fn sym_eigen(m: &DMatrix<f64>) -> Result<SymEigen> {
    let n = ensure_square(m)?;
    if m.iter().any(|x| !x.is_finite()) {
        return Err(Error::Eigen("non-finite input".into()));
    }
    if n == 0 {
        return Ok(SymEigen {
            values: DVector::zeros(0),
            vectors: DMatrix::zeros(0, 0),
        });
    }
    let eig = SymmetricEigen::try_new(m.clone(), f64::EPSILON, EIGEN_MAX_SWEEPS)
        .ok_or_else(|| Error::Eigen(format!("no convergence for {n}x{n} input")))?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = DVector::from_iterator(n, order.iter().map(|&j| eig.eigenvalues[j]));
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    Ok(SymEigen { values, vectors })
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> Result<f64> {
    Ok(sym_eigen(m)?.min_value())
}

/// Symmetric square root of a PSD matrix; slightly negative eigenvalues clip to 0.
pub fn psd_sqrt(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    Ok(sym_eigen(m)?.recompose_with(|l| l.max(0.0).sqrt()))
}

/// Frobenius inner product `Σ_ij a_ij b_ij`.
pub fn frobenius_dot(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

/// Entrywise absolute sum `|M|₁`.
pub fn l1_norm(m: &DMatrix<f64>) -> f64 {
    m.iter().map(|x| x.abs()).sum()
}

/// Sample covariance (divisor `N`, known zero mean when `centered`).
pub fn sample_covariance(samples: &[Vec<f64>], centered: bool) -> Result<DMatrix<f64>> {
    let Some(first) = samples.first() else {
        return Err(Error::InvalidParameter("no samples".into()));
    };
    let d = first.len();
    let count = samples.len() as f64;
    let mut mean = vec![0.0; d];
    if !centered {
        for s in samples {
            if s.len() != d {
                return Err(Error::DimensionMismatch {
                    context: "sample_covariance",
                    expected: d,
                    found: s.len(),
                });
            }
            for (m, x) in mean.iter_mut().zip(s) {
                *m += x;
            }
        }
        mean.iter_mut().for_each(|m| *m /= count);
    }
    let mut cov = DMatrix::zeros(d, d);
    let mut centred = DVector::zeros(d);
    for s in samples {
        if s.len() != d {
            return Err(Error::DimensionMismatch {
                context: "sample_covariance",
                expected: d,
                found: s.len(),
            });
        }
        for k in 0..d {
            centred[k] = s[k] - mean[k];
        }
        cov.ger(1.0, &centred, &centred, 1.0);
    }
    cov /= count;
    symmetrize_in_place(&mut cov);
    Ok(cov)
}
