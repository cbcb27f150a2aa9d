//! Seeded generators for the mixture models, the heavy-mixture scalar
//! counterexample, and signal-to-noise quantities.
//!
//! Point `i` of a dataset is generated from stream `i` of the configured
//! seed (see [`crate::rng`]), so datasets do not depend on generation order.
//!
//! Karhunen–Loève noise uses the sine basis `e_j(t) = √2 sin(jπt)` with
//! eigenvalues `γ_j = j^(−2β−1)`. Choice of the sub-gaussian constant `L`:
//! Gaussian models use `L = 1` with `Γ = Σ`; the bounded uniform model is
//! sub-gaussian with respect to `w² I` by Hoeffding's lemma, which against its
//! covariance `Σ = (w²/3) I` means `L = √3`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{self, Basis, CovarianceOp, Grid, OperatorNorms, Point, SpaceSpec};
use crate::linalg;
use crate::rng::{stream_rng, StreamRng};
use crate::rounding::Assignment;
use crate::similarity;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum NoiseModel {
    GaussianIso { sigma: f64 },
    GaussianCov { cov: CovarianceOp },
    KlProcess { beta: f64, d: usize, grid: Grid },
    BoundedUniform { half_width: f64 },
}

impl NoiseModel {
    pub fn validate(&self, dim: usize) -> Result<()> {
        match self {
            NoiseModel::GaussianIso { sigma } if !(*sigma >= 0.0 && sigma.is_finite()) => Err(
                Error::InvalidParameter(format!("sigma={sigma} must be >= 0")),
            ),
            NoiseModel::GaussianCov { cov } if cov.dim() != dim => Err(Error::DimensionMismatch {
                context: "noise covariance",
                expected: dim,
                found: cov.dim(),
            }),
            NoiseModel::KlProcess { beta, d, grid } => {
                if !(*beta > 0.0 && beta.is_finite()) {
                    return Err(Error::InvalidParameter(format!("beta={beta} must be > 0")));
                }
                if *d == 0 {
                    return Err(Error::InvalidParameter(
                        "KL truncation d must be positive".into(),
                    ));
                }
                if grid.len() != dim {
                    return Err(Error::DimensionMismatch {
                        context: "KL grid vs means",
                        expected: dim,
                        found: grid.len(),
                    });
                }
                Ok(())
            }
            NoiseModel::BoundedUniform { half_width }
                if !(*half_width >= 0.0 && half_width.is_finite()) =>
            {
                Err(Error::InvalidParameter(format!(
                    "half_width={half_width} must be >= 0"
                )))
            }
            _ => Ok(()),
        }
    }

    /// `γ_j = j^(−2β−1)` for `j = 1..=d` (empty for other models).
    pub fn kl_eigenvalues(&self) -> Vec<f64> {
        match self {
            NoiseModel::KlProcess { beta, d, .. } => (1..=*d)
                .map(|j| (j as f64).powf(-2.0 * beta - 1.0))
                .collect(),
            _ => Vec::new(),
        }
    }

    /// Covariance of the noise in its native representation: the coordinate
    /// basis for vector models, the KL basis for the process.
    pub fn covariance(&self, dim: usize) -> Result<CovarianceOp> {
        match self {
            NoiseModel::GaussianIso { sigma } => {
                Ok(CovarianceOp::identity(dim).scaled(sigma * sigma))
            }
            NoiseModel::GaussianCov { cov } => Ok(cov.clone()),
            NoiseModel::KlProcess { .. } => {
                CovarianceOp::diagonal(&self.kl_eigenvalues(), Basis::KarhunenLoeve)
            }
            NoiseModel::BoundedUniform { half_width } => {
                Ok(CovarianceOp::identity(dim).scaled(half_width * half_width / 3.0))
            }
        }
    }

    /// Sub-gaussian constant `L` relative to [`NoiseModel::covariance`].
    pub fn psi2_constant(&self) -> f64 {
        match self {
            NoiseModel::BoundedUniform { .. } => 3f64.sqrt(),
            _ => 1.0,
        }
    }

    /// A reference operator Γ with `E e^{⟨z, X⟩} ≤ e^{⟨Γz, z⟩/2}` (ψ₂ norm ≤ 1).
    pub fn subgaussian_reference(&self, dim: usize) -> Result<CovarianceOp> {
        match self {
            NoiseModel::BoundedUniform { half_width } => {
                Ok(CovarianceOp::identity(dim).scaled(half_width * half_width))
            }
            _ => self.covariance(dim),
        }
    }

    pub(crate) fn prepare(&self, dim: usize) -> Result<PreparedNoise> {
        self.validate(dim)?;
        Ok(match self {
            NoiseModel::GaussianIso { sigma } => PreparedNoise::Iso(*sigma),
            NoiseModel::GaussianCov { cov } => PreparedNoise::Cov(linalg::psd_sqrt(cov.matrix())?),
            NoiseModel::KlProcess { grid, .. } => {
                let gammas = self.kl_eigenvalues();
                let d = gammas.len();
                let basis = DMatrix::from_fn(grid.len(), d, |i, j| {
                    gammas[j].sqrt() * kl_basis_function(j + 1, grid.points()[i])
                });
                PreparedNoise::Kl(basis)
            }
            NoiseModel::BoundedUniform { half_width } => PreparedNoise::Uniform(*half_width),
        })
    }
}

/// `√2 sin(jπt)`.
pub fn kl_basis_function(j: usize, t: f64) -> f64 {
    std::f64::consts::SQRT_2 * (j as f64 * PI * t).sin()
}

/// Noise generator with its square root / basis evaluated once.
pub(crate) enum PreparedNoise {
    Iso(f64),
    Cov(DMatrix<f64>),
    Kl(DMatrix<f64>),
    Uniform(f64),
}

impl PreparedNoise {
    pub(crate) fn draw(&self, rng: &mut StreamRng, dim: usize) -> Vec<f64> {
        match self {
            PreparedNoise::Iso(sigma) => (0..dim)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(rng);
                    sigma * z
                })
                .collect(),
            PreparedNoise::Cov(root) => {
                let xi = DVector::from_fn(dim, |_, _| StandardNormal.sample(rng));
                (root * xi).iter().copied().collect()
            }
            PreparedNoise::Kl(basis) => {
                let xi = DVector::from_fn(basis.ncols(), |_, _| StandardNormal.sample(rng));
                (basis * xi).iter().copied().collect()
            }
            PreparedNoise::Uniform(w) => {
                if *w == 0.0 {
                    return vec![0.0; dim];
                }
                (0..dim).map(|_| rng.random_range(-*w..*w)).collect()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixtureConfig {
    pub cluster_sizes: Vec<usize>,
    pub means: Vec<Point>,
    pub noise: NoiseModel,
    pub seed: u64,
}

impl MixtureConfig {
    pub fn k(&self) -> usize {
        self.means.len()
    }

    pub fn n(&self) -> usize {
        self.cluster_sizes.iter().sum()
    }

    pub fn dim(&self) -> usize {
        self.means.first().map_or(0, Point::len)
    }

    pub fn validate(&self) -> Result<()> {
        if self.means.is_empty() {
            return Err(Error::InvalidParameter(
                "mixture needs at least one mean".into(),
            ));
        }
        if self.cluster_sizes.len() != self.means.len() {
            return Err(Error::DimensionMismatch {
                context: "cluster_sizes vs means",
                expected: self.means.len(),
                found: self.cluster_sizes.len(),
            });
        }
        if let Some(k) = self.cluster_sizes.iter().position(|&s| s == 0) {
            return Err(Error::EmptyCluster { cluster: k + 1 });
        }
        let dim = self.dim();
        if dim == 0 {
            return Err(Error::InvalidParameter(
                "means must be nonempty vectors".into(),
            ));
        }
        for (index, m) in self.means.iter().enumerate() {
            if m.len() != dim {
                return Err(Error::NonconformingPoint {
                    index,
                    expected: dim,
                    found: m.len(),
                });
            }
        }
        self.noise.validate(dim)
    }
}

/// Draw a labelled dataset; clusters occupy contiguous index blocks.
pub fn sample_mixture(cfg: &MixtureConfig) -> Result<(Vec<Point>, Assignment)> {
    cfg.validate()?;
    let dim = cfg.dim();
    let noise = cfg.noise.prepare(dim)?;
    let truth = Assignment::from_sizes(&cfg.cluster_sizes)?;
    let data = truth
        .labels()
        .iter()
        .enumerate()
        .map(|(i, &label)| {
            let mut rng = stream_rng(cfg.seed, i as u64);
            let eps = noise.draw(&mut rng, dim);
            let mean = cfg.means[label - 1].coords();
            Point::new(mean.iter().zip(eps).map(|(m, e)| m + e).collect())
        })
        .collect();
    Ok((data, truth))
}

/// Draw `count` centered noise vectors (no means), stream `offset + i` for item `i`.
pub fn sample_noise(
    model: &NoiseModel,
    dim: usize,
    count: usize,
    seed: u64,
    offset: u64,
) -> Result<Vec<Point>> {
    let noise = model.prepare(dim)?;
    Ok((0..count)
        .map(|i| {
            let mut rng = stream_rng(seed, offset + i as u64);
            Point::new(noise.draw(&mut rng, dim))
        })
        .collect())
}

/// I.i.d. draws from `(1 − a⁻⁴) N(0, 1) + a⁻⁴ N(0, a²)`.
pub fn sample_counterexample(a_n: f64, n: usize, seed: u64) -> Result<Vec<f64>> {
    if !(a_n > 1.0 && a_n.is_finite()) {
        return Err(Error::InvalidParameter(format!("a_n={a_n} must be > 1")));
    }
    let eps = a_n.powi(-4);
    Ok((0..n)
        .map(|i| {
            let mut rng = stream_rng(seed, i as u64);
            let heavy = rng.random::<f64>() < eps;
            let z: f64 = StandardNormal.sample(&mut rng);
            if heavy {
                a_n * z
            } else {
                z
            }
        })
        .collect())
}

/// `1 − a⁻⁴ + a⁻²`.
pub fn counterexample_variance(a_n: f64) -> f64 {
    1.0 - a_n.powi(-4) + a_n.powi(-2)
}

/// `min_{i≠j} ‖μᵢ − μⱼ‖_H`.
pub fn min_separation(means: &[Point], space: &SpaceSpec) -> Result<f64> {
    if means.len() < 2 {
        return Err(Error::InvalidParameter(
            "separation needs at least two means".into(),
        ));
    }
    let mut best = f64::INFINITY;
    for i in 0..means.len() {
        for j in (i + 1)..means.len() {
            let d = match space {
                // The kernel-induced distance ‖φ(x) − φ(y)‖.
                SpaceSpec::KernelImplicit { kernel } => {
                    let xx = similarity::kernel_eval(&means[i], &means[i], kernel)?;
                    let yy = similarity::kernel_eval(&means[j], &means[j], kernel)?;
                    let xy = similarity::kernel_eval(&means[i], &means[j], kernel)?;
                    (xx + yy - 2.0 * xy).max(0.0).sqrt()
                }
                _ => hilbert::norm(&means[i].sub(&means[j])?, space)?,
            };
            best = best.min(d);
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SnrInputs {
    pub delta: f64,
    pub l: f64,
    pub sigma_norms: OperatorNorms,
    pub n_min: usize,
}

/// `Δ²/(L²‖Σ‖_op) ∧ n̄Δ⁴/(L⁴‖Σ‖²_HS)`.
pub fn snr_squared(inp: &SnrInputs) -> f64 {
    let l2 = inp.l * inp.l;
    let d2 = inp.delta * inp.delta;
    let first = d2 / (l2 * inp.sigma_norms.op);
    let second = inp.n_min as f64 * d2 * d2 / (l2 * l2 * inp.sigma_norms.hs_squared());
    first.min(second)
}

/// Norms of the covariance operator of `samples` (assumed centered) in
/// `space`, via the sample Gram matrix: `Σ̂ = N⁻¹ Σ Xᵢ ⊗ Xᵢ` shares its
/// nonzero spectrum with `G/N`, `G_ij = ⟨Xᵢ, Xⱼ⟩`.
pub fn empirical_norms(samples: &[Point], space: &SpaceSpec) -> Result<OperatorNorms> {
    let g = similarity::gram(samples, space)?.into_matrix() / samples.len() as f64;
    let eig = linalg::sym_eigen(&g)?;
    Ok(OperatorNorms {
        op: eig.max_value().max(0.0),
        hs: g.norm(),
        trace: g.trace(),
    })
}

/// Number of noise draws used by [`noise_norms`] when no closed form applies.
pub const EMPIRICAL_NORM_SAMPLES: usize = 500;

/// Covariance norms of `model`'s noise as seen through `space`. Closed form
/// when the space is the model's native one (Euclidean for vector models,
/// `L²` for the KL process); otherwise estimated from
/// [`EMPIRICAL_NORM_SAMPLES`] draws.
pub fn noise_norms(model: &NoiseModel, space: &SpaceSpec, seed: u64) -> Result<OperatorNorms> {
    let dim = noise_dim(model, space)?;
    if is_native(model, space) {
        return hilbert::operator_norms(&model.covariance(dim)?);
    }
    let samples = sample_noise(model, dim, EMPIRICAL_NORM_SAMPLES, seed, 0)?;
    empirical_norms(&samples, space)
}

/// Whether `space` is the representation the model's covariance is written
/// in: Euclidean for vector models, `L²` for the KL process.
pub fn is_native(model: &NoiseModel, space: &SpaceSpec) -> bool {
    matches!(
        (model, space),
        (NoiseModel::KlProcess { .. }, SpaceSpec::L2Grid { .. })
            | (
                NoiseModel::GaussianIso { .. }
                    | NoiseModel::GaussianCov { .. }
                    | NoiseModel::BoundedUniform { .. },
                SpaceSpec::Euclidean { .. }
            )
    )
}

/// Length of a noise vector of `model` observed in `space`.
pub fn noise_dim(model: &NoiseModel, space: &SpaceSpec) -> Result<usize> {
    match (model, space.expected_len()) {
        (NoiseModel::KlProcess { grid, .. }, _) => Ok(grid.len()),
        (_, Some(d)) => Ok(d),
        (NoiseModel::GaussianCov { cov }, None) => Ok(cov.dim()),
        _ => Err(Error::InvalidParameter(
            "cannot infer noise dimension for a kernel space".into(),
        )),
    }
}

/// Coefficients `⟨f, e_j⟩_{L²}` for `j = 1..=d`, trapezoidal quadrature.
pub fn kl_coefficients(f: &Point, grid: &Grid, d: usize) -> Result<Vec<f64>> {
    if f.len() != grid.len() {
        return Err(Error::DimensionMismatch {
            context: "kl_coefficients",
            expected: grid.len(),
            found: f.len(),
        });
    }
    Ok((1..=d)
        .map(|j| {
            let e: Vec<f64> = grid
                .points()
                .iter()
                .map(|&t| kl_basis_function(j, t))
                .collect();
            grid.integrate_product(f.coords(), &e)
        })
        .collect())
}
