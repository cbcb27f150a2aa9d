//! Hilbert-space point representations and inner products.
//!
//! Functional data are grid samples on `[0, 1]`. `L²` integrals use the
//! trapezoidal rule on the grid; derivatives for the Sobolev inner product
//! use second-order central differences in the interior and first-order
//! one-sided differences at the two endpoints. Higher derivatives apply the
//! same difference operator repeatedly.
//!
//! Covariance operators are always finite truncations, either in the
//! coordinate basis or in a Karhunen–Loève eigenbasis.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, SYMMETRY_TOL};
use crate::similarity::{self, KernelSpec};

/// Strictly increasing sample locations in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGrid", into = "Vec<f64>")]
pub struct Grid {
    points: Vec<f64>,
    weights: Vec<f64>,
}

impl Grid {
    pub fn new(points: Vec<f64>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::InvalidGrid(format!(
                "need at least 2 points, got {}",
                points.len()
            )));
        }
        if points
            .iter()
            .any(|t| !t.is_finite() || *t < 0.0 || *t > 1.0)
        {
            return Err(Error::InvalidGrid("points must lie in [0, 1]".into()));
        }
        if let Some(i) = points.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::InvalidGrid(format!(
                "not strictly increasing at index {}",
                i + 1
            )));
        }
        let m = points.len();
        let mut weights = vec![0.0; m];
        for i in 0..m - 1 {
            let h = points[i + 1] - points[i];
            weights[i] += 0.5 * h;
            weights[i + 1] += 0.5 * h;
        }
        Ok(Self { points, weights })
    }

    /// `m` equally spaced points from 0 to 1 inclusive.
    pub fn uniform(m: usize) -> Result<Self> {
        if m < 2 {
            return Err(Error::InvalidGrid(format!(
                "need at least 2 points, got {m}"
            )));
        }
        let step = 1.0 / (m - 1) as f64;
        let mut pts: Vec<f64> = (0..m).map(|i| i as f64 * step).collect();
        pts[m - 1] = 1.0;
        Self::new(pts)
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    /// Trapezoidal quadrature weights.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Trapezoidal `∫₀¹ f g` from grid values.
    pub fn integrate_product(&self, f: &[f64], g: &[f64]) -> f64 {
        self.weights
            .iter()
            .zip(f.iter().zip(g))
            .map(|(w, (a, b))| w * (a * b))
            .sum()
    }

    /// Finite-difference derivative of grid values.
    pub fn derivative(&self, f: &[f64]) -> Vec<f64> {
        let t = &self.points;
        let m = t.len();
        let mut d = vec![0.0; m];
        d[0] = (f[1] - f[0]) / (t[1] - t[0]);
        d[m - 1] = (f[m - 1] - f[m - 2]) / (t[m - 1] - t[m - 2]);
        for i in 1..m - 1 {
            d[i] = (f[i + 1] - f[i - 1]) / (t[i + 1] - t[i - 1]);
        }
        d
    }
}

/// Serialized grids: an explicit point list or `{ uniform = m }`.
#[derive(Deserialize)]
#[serde(untagged)]
enum RawGrid {
    Points(Vec<f64>),
    Uniform { uniform: usize },
}

impl TryFrom<RawGrid> for Grid {
    type Error = Error;
    fn try_from(raw: RawGrid) -> Result<Self> {
        match raw {
            RawGrid::Points(v) => Grid::new(v),
            RawGrid::Uniform { uniform } => Grid::uniform(uniform),
        }
    }
}

impl From<Grid> for Vec<f64> {
    fn from(g: Grid) -> Self {
        g.points
    }
}

/// The inner-product space a dataset lives in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SpaceSpec {
    Euclidean { dim: usize },
    L2Grid { grid: Grid },
    Sobolev { grid: Grid, order: usize },
    KernelImplicit { kernel: KernelSpec },
}

pub const MAX_SOBOLEV_ORDER: usize = 2;

impl SpaceSpec {
    pub fn euclidean(dim: usize) -> Self {
        SpaceSpec::Euclidean { dim }
    }

    pub fn l2(grid: Grid) -> Self {
        SpaceSpec::L2Grid { grid }
    }

    pub fn sobolev(grid: Grid, order: usize) -> Result<Self> {
        let spec = SpaceSpec::Sobolev { grid, order };
        spec.validate()?;
        Ok(spec)
    }

    pub fn kernel(kernel: KernelSpec) -> Result<Self> {
        kernel.validate()?;
        Ok(SpaceSpec::KernelImplicit { kernel })
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            SpaceSpec::Euclidean { dim } if *dim == 0 => Err(Error::InvalidParameter(
                "euclidean dimension must be positive".into(),
            )),
            SpaceSpec::Sobolev { grid, order } => {
                if *order > MAX_SOBOLEV_ORDER {
                    return Err(Error::InvalidParameter(format!(
                        "sobolev order {order} not in 0..={MAX_SOBOLEV_ORDER}"
                    )));
                }
                if grid.len() < order + 2 {
                    return Err(Error::InvalidGrid(format!(
                        "sobolev order {order} needs at least {} points, got {}",
                        order + 2,
                        grid.len()
                    )));
                }
                Ok(())
            }
            SpaceSpec::KernelImplicit { kernel } => kernel.validate(),
            _ => Ok(()),
        }
    }

    /// Required coordinate length, if the space fixes one.
    pub fn expected_len(&self) -> Option<usize> {
        match self {
            SpaceSpec::Euclidean { dim } => Some(*dim),
            SpaceSpec::L2Grid { grid } | SpaceSpec::Sobolev { grid, .. } => Some(grid.len()),
            SpaceSpec::KernelImplicit { .. } => None,
        }
    }

    pub fn grid(&self) -> Option<&Grid> {
        match self {
            SpaceSpec::L2Grid { grid } | SpaceSpec::Sobolev { grid, .. } => Some(grid),
            _ => None,
        }
    }

    pub(crate) fn check_len(&self, len: usize) -> Result<()> {
        match self.expected_len() {
            Some(expected) if expected != len => Err(Error::DimensionMismatch {
                context: "point vs space",
                expected,
                found: len,
            }),
            _ => Ok(()),
        }
    }

    /// Per-point representation whose plain weighted dot product gives the
    /// inner product: the stacked derivatives `f, f', …, f^(k)` for Sobolev,
    /// `f` itself otherwise. Kernel spaces return the raw coordinates.
    pub(crate) fn embed(&self, x: &Point) -> Vec<Vec<f64>> {
        match self {
            SpaceSpec::Sobolev { grid, order } => {
                let mut out = Vec::with_capacity(order + 1);
                out.push(x.coords().to_vec());
                for j in 0..*order {
                    let next = grid.derivative(&out[j]);
                    out.push(next);
                }
                out
            }
            _ => vec![x.coords().to_vec()],
        }
    }

    /// Inner product between two embeddings produced by [`SpaceSpec::embed`].
    pub(crate) fn embedded_inner(&self, x: &[Vec<f64>], y: &[Vec<f64>]) -> f64 {
        match self {
            SpaceSpec::Euclidean { .. } => dot(&x[0], &y[0]),
            SpaceSpec::L2Grid { grid } => grid.integrate_product(&x[0], &y[0]),
            SpaceSpec::Sobolev { grid, .. } => x
                .iter()
                .zip(y)
                .map(|(a, b)| grid.integrate_product(a, b))
                .sum(),
            SpaceSpec::KernelImplicit { kernel } => similarity::kernel_value(&x[0], &y[0], kernel),
        }
    }
}

/// A single observation: Euclidean coordinates, a function sampled on the
/// grid, or the raw input vector of a kernel space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Point(Vec<f64>);

impl Point {
    pub fn new(coords: Vec<f64>) -> Self {
        Point(coords)
    }

    pub fn zeros(len: usize) -> Self {
        Point(vec![0.0; len])
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn coords_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn sub(&self, other: &Point) -> Result<Point> {
        if self.len() != other.len() {
            return Err(Error::DimensionMismatch {
                context: "point difference",
                expected: self.len(),
                found: other.len(),
            });
        }
        Ok(Point(
            self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect(),
        ))
    }
}

impl From<Vec<f64>> for Point {
    fn from(v: Vec<f64>) -> Self {
        Point(v)
    }
}

pub(crate) fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

pub fn inner_product(x: &Point, y: &Point, space: &SpaceSpec) -> Result<f64> {
    space.check_len(x.len())?;
    space.check_len(y.len())?;
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            context: "inner_product",
            expected: x.len(),
            found: y.len(),
        });
    }
    Ok(space.embedded_inner(&space.embed(x), &space.embed(y)))
}

pub fn norm(x: &Point, space: &SpaceSpec) -> Result<f64> {
    Ok(inner_product(x, x, space)?.max(0.0).sqrt())
}

/// Which basis a truncated covariance operator is expressed in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Basis {
    Coordinate,
    KarhunenLoeve,
}

/// Truncated covariance operator (Γ or Σ). Serialized as row-major `rows`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawCovariance", into = "RawCovariance")]
pub struct CovarianceOp {
    matrix: DMatrix<f64>,
    basis: Basis,
}

impl CovarianceOp {
    /// Validates symmetry (1e-12 relative) and PSD (min eigenvalue ≥ −1e-10 ‖C‖_op).
    pub fn new(matrix: DMatrix<f64>, basis: Basis) -> Result<Self> {
        linalg::ensure_symmetric(&matrix, SYMMETRY_TOL)?;
        let eig = linalg::sym_eigen(&matrix)?;
        let op = eig.values.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        let min = eig.min_value();
        if matrix.nrows() > 0 && min < -1e-10 * op {
            return Err(Error::NotPsd {
                min_eigenvalue: min,
            });
        }
        Ok(Self { matrix, basis })
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            matrix: DMatrix::identity(dim, dim),
            basis: Basis::Coordinate,
        }
    }

    pub fn diagonal(values: &[f64], basis: Basis) -> Result<Self> {
        if values.iter().any(|v| *v < 0.0 || !v.is_finite()) {
            return Err(Error::InvalidParameter(
                "diagonal covariance needs nonnegative entries".into(),
            ));
        }
        Ok(Self {
            matrix: DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(values)),
            basis,
        })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn basis(&self) -> Basis {
        self.basis
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            matrix: &self.matrix * factor,
            basis: self.basis,
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCovariance {
    rows: Vec<Vec<f64>>,
    #[serde(default = "coordinate_basis")]
    basis: Basis,
}

fn coordinate_basis() -> Basis {
    Basis::Coordinate
}

impl TryFrom<RawCovariance> for CovarianceOp {
    type Error = Error;

    fn try_from(raw: RawCovariance) -> Result<Self> {
        let n = raw.rows.len();
        if let Some(bad) = raw.rows.iter().find(|r| r.len() != n) {
            return Err(Error::NotSquare {
                rows: n,
                cols: bad.len(),
            });
        }
        CovarianceOp::new(DMatrix::from_fn(n, n, |i, j| raw.rows[i][j]), raw.basis)
    }
}

impl From<CovarianceOp> for RawCovariance {
    fn from(c: CovarianceOp) -> Self {
        let rows = c
            .matrix
            .row_iter()
            .map(|r| r.iter().copied().collect())
            .collect();
        RawCovariance {
            rows,
            basis: c.basis,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatorNorms {
    pub op: f64,
    pub hs: f64,
    pub trace: f64,
}

impl OperatorNorms {
    pub fn hs_squared(&self) -> f64 {
        self.hs * self.hs
    }
}

pub fn operator_norms(c: &CovarianceOp) -> Result<OperatorNorms> {
    let m = c.matrix();
    linalg::ensure_symmetric(m, SYMMETRY_TOL)?;
    let eig = linalg::sym_eigen(m)?;
    let op = eig.values.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    Ok(OperatorNorms {
        op,
        hs: m.norm(),
        trace: m.trace(),
    })
}

/// Whether `4 L² Γ − Σ ⪰ 0` up to `1e-8 ‖Γ‖_op`.
pub fn check_domination(sigma: &CovarianceOp, gamma: &CovarianceOp, l: f64) -> Result<bool> {
    if sigma.dim() != gamma.dim() {
        return Err(Error::DimensionMismatch {
            context: "check_domination",
            expected: gamma.dim(),
            found: sigma.dim(),
        });
    }
    let gap = gamma.matrix() * (4.0 * l * l) - sigma.matrix();
    let min = linalg::min_eigenvalue(&linalg::symmetrized(&gap))?;
    let gamma_op = linalg::sym_eigen(gamma.matrix())?.max_value().abs();
    Ok(min >= -1e-8 * gamma_op)
}
