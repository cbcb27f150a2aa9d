//! Similarity (Gram) matrices `a_ij = ⟨Xᵢ, Xⱼ⟩` for every supported space,
//! including implicit feature spaces given by a positive semidefinite kernel.
//!
//! Kernel Gram matrices are not centered.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{dot, Point, SpaceSpec};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum KernelSpec {
    /// `(⟨x, y⟩ + c)^r`
    Polynomial { c: f64, r: u32 },
    /// `exp(−‖x − y‖² / (2h²))`
    Rbf { h: f64 },
}

impl KernelSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            KernelSpec::Polynomial { c, r } => {
                if !(c >= 0.0 && c.is_finite()) {
                    return Err(Error::InvalidParameter(format!(
                        "polynomial offset c={c} must be >= 0"
                    )));
                }
                if r < 1 {
                    return Err(Error::InvalidParameter(
                        "polynomial degree r must be >= 1".into(),
                    ));
                }
                Ok(())
            }
            KernelSpec::Rbf { h } => {
                if !(h > 0.0 && h.is_finite()) {
                    return Err(Error::InvalidParameter(format!(
                        "rbf bandwidth h={h} must be > 0"
                    )));
                }
                Ok(())
            }
        }
    }
}

pub(crate) fn kernel_value(x: &[f64], y: &[f64], k: &KernelSpec) -> f64 {
    match *k {
        KernelSpec::Polynomial { c, r } => (dot(x, y) + c).powi(r as i32),
        KernelSpec::Rbf { h } => {
            let d2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
            (-d2 / (2.0 * h * h)).exp()
        }
    }
}

pub fn kernel_eval(x: &Point, y: &Point, k: &KernelSpec) -> Result<f64> {
    k.validate()?;
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            context: "kernel_eval",
            expected: x.len(),
            found: y.len(),
        });
    }
    Ok(kernel_value(x.coords(), y.coords(), k))
}

/// Symmetric `n × n` similarity matrix together with the space it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    a: DMatrix<f64>,
    source: Option<SpaceSpec>,
}

impl SimilarityMatrix {
    /// Wrap an arbitrary square matrix, e.g. for solver experiments on
    /// synthetic objectives. Symmetry is checked by the solver.
    pub fn from_matrix(a: DMatrix<f64>) -> Result<Self> {
        crate::linalg::ensure_square(&a)?;
        Ok(Self { a, source: None })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn source(&self) -> Option<&SpaceSpec> {
        self.source.as_ref()
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.a
    }
}

/// Dense Gram matrix. The upper triangle is computed and mirrored, so the
/// result is bitwise symmetric.
pub fn gram(data: &[Point], space: &SpaceSpec) -> Result<SimilarityMatrix> {
    space.validate()?;
    let n = data.len();
    if n < 2 {
        return Err(Error::InvalidParameter(format!(
            "gram needs at least 2 points, got {n}"
        )));
    }
    let expected = space.expected_len().unwrap_or(data[0].len());
    for (index, p) in data.iter().enumerate() {
        if p.len() != expected {
            return Err(Error::NonconformingPoint {
                index,
                expected,
                found: p.len(),
            });
        }
    }
    let embedded: Vec<Vec<Vec<f64>>> = data.iter().map(|p| space.embed(p)).collect();
    let mut a = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = space.embedded_inner(&embedded[i], &embedded[j]);
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
    }
    Ok(SimilarityMatrix {
        a,
        source: Some(space.clone()),
    })
}
