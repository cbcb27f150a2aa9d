//! Monte Carlo laboratory for quadratic forms `Q = Σ a_ij ⟨Xᵢ, Xⱼ⟩` in
//! centered sub-gaussian data: tail fits against the Hanson–Wright family,
//! MGF dominance, and Bernstein-type moment constants.
//!
//! Trial `t` of an experiment seeded with `s` draws point `i` from stream `i`
//! of `derive_seed(s, [t])`. Trials run on the current rayon pool and are
//! merged by index, so results do not depend on the thread count.

use nalgebra::DMatrix;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{self, CovarianceOp, OperatorNorms, Point, SpaceSpec};
use crate::linalg;
use crate::rng::{derive_seed, stream_rng};
use crate::sampling::{self, NoiseModel};

pub const TAIL_GRID_POINTS: usize = 20;
/// Tail grid endpoints in units of the empirical standard deviation of `Q`.
pub const TAIL_GRID_SD: (f64, f64) = (0.5, 5.0);
pub const MIN_TAIL_TRIALS: usize = 1000;
pub const MIN_USABLE_POINTS: usize = 3;
/// A grid point enters the fit once at least this many trials exceed it.
pub const USABLE_TAIL_COUNT: f64 = 10.0;

/// `P(X² ≥ 4)` for `X ~ N(0, 1)`, i.e. `erfc(√2)`.
pub fn chi2_one_tail_at_four() -> f64 {
    statrs::function::erf::erfc(std::f64::consts::SQRT_2)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiagonalRule {
    #[default]
    Keep,
    Abs,
    Zero,
}

/// Weight matrix `A` of a quadratic form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum WeightSpec {
    Identity {
        n: usize,
    },
    /// Standard normal entries on and above the diagonal, mirrored.
    RandomSymmetric {
        n: usize,
        seed: u64,
        #[serde(default)]
        diagonal: DiagonalRule,
    },
    Explicit {
        rows: Vec<Vec<f64>>,
    },
}

impl WeightSpec {
    pub fn matrix(&self) -> Result<DMatrix<f64>> {
        let m = match self {
            WeightSpec::Identity { n } => DMatrix::identity(*n, *n),
            WeightSpec::RandomSymmetric { n, seed, diagonal } => {
                random_symmetric(*n, *seed, *diagonal)
            }
            WeightSpec::Explicit { rows } => {
                let n = rows.len();
                if let Some(bad) = rows.iter().find(|r| r.len() != n) {
                    return Err(Error::NotSquare {
                        rows: n,
                        cols: bad.len(),
                    });
                }
                DMatrix::from_fn(n, n, |i, j| rows[i][j])
            }
        };
        if m.nrows() == 0 {
            return Err(Error::InvalidParameter(
                "weight matrix must be at least 1x1".into(),
            ));
        }
        Ok(m)
    }
}

pub fn random_symmetric(n: usize, seed: u64, diagonal: DiagonalRule) -> DMatrix<f64> {
    let mut rng = stream_rng(seed, 0);
    let mut a = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v: f64 = StandardNormal.sample(&mut rng);
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
        a[(i, i)] = match diagonal {
            DiagonalRule::Keep => a[(i, i)],
            DiagonalRule::Abs => a[(i, i)].abs(),
            DiagonalRule::Zero => 0.0,
        };
    }
    a
}

/// Quadratic form in `n` i.i.d. centered noise vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadraticFormSpec {
    pub weight: WeightSpec,
    pub noise: NoiseModel,
    pub space: SpaceSpec,
    pub trials: usize,
    pub seed: u64,
}

fn qf_embedded(a: &DMatrix<f64>, emb: &[Vec<Vec<f64>>], space: &SpaceSpec) -> f64 {
    let n = a.nrows();
    let mut q = 0.0;
    for i in 0..n {
        q += a[(i, i)] * space.embedded_inner(&emb[i], &emb[i]);
        for j in (i + 1)..n {
            let w = a[(i, j)] + a[(j, i)];
            if w != 0.0 {
                q += w * space.embedded_inner(&emb[i], &emb[j]);
            }
        }
    }
    q
}

fn check_form_inputs(a: &DMatrix<f64>, data: &[Point], space: &SpaceSpec) -> Result<()> {
    let n = linalg::ensure_square(a)?;
    if data.len() != n {
        return Err(Error::DimensionMismatch {
            context: "weight matrix vs data",
            expected: n,
            found: data.len(),
        });
    }
    space.validate()?;
    let expected = space.expected_len().or(data.first().map(Point::len));
    for (index, p) in data.iter().enumerate() {
        if let Some(expected) = expected.filter(|&e| e != p.len()) {
            return Err(Error::NonconformingPoint {
                index,
                expected,
                found: p.len(),
            });
        }
    }
    Ok(())
}

/// `Σ_{i,j} a_ij ⟨Xᵢ, Xⱼ⟩`.
pub fn quadratic_form(a: &DMatrix<f64>, data: &[Point], space: &SpaceSpec) -> Result<f64> {
    check_form_inputs(a, data, space)?;
    let emb: Vec<_> = data.iter().map(|p| space.embed(p)).collect();
    Ok(qf_embedded(a, &emb, space))
}

/// [`quadratic_form`] with the diagonal of `a` zeroed.
pub fn offdiag_quadratic_form(a: &DMatrix<f64>, data: &[Point], space: &SpaceSpec) -> Result<f64> {
    let mut off = a.clone();
    off.fill_diagonal(0.0);
    quadratic_form(&off, data, space)
}

/// Draws of `Q` for `spec.trials` independent datasets, in trial order.
pub fn simulate_quadratic_forms(spec: &QuadraticFormSpec) -> Result<Vec<f64>> {
    if spec.trials == 0 {
        return Err(Error::InvalidParameter("trials must be positive".into()));
    }
    let a = spec.weight.matrix()?;
    spec.space.validate()?;
    let dim = sampling::noise_dim(&spec.noise, &spec.space)?;
    let noise = spec.noise.prepare(dim)?;
    let n = a.nrows();
    Ok((0..spec.trials as u64)
        .into_par_iter()
        .map(|t| {
            let base = derive_seed(spec.seed, &[t]);
            let emb: Vec<_> = (0..n as u64)
                .map(|i| {
                    spec.space
                        .embed(&Point::new(noise.draw(&mut stream_rng(base, i), dim)))
                })
                .collect();
            qf_embedded(&a, &emb, &spec.space)
        })
        .collect())
}

/// Scale parameters of the bound family
/// `2 exp(−C min(t²/D₂, t/D₁))`, `D₂ = L⁴‖Γ‖²_HS‖A‖²_HS`, `D₁ = L²‖Γ‖_op‖A‖_op`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundParams {
    pub l: f64,
    pub gamma_norms: OperatorNorms,
    pub a_hs: f64,
    pub a_op: f64,
}

impl BoundParams {
    pub fn for_spec(spec: &QuadraticFormSpec) -> Result<Self> {
        let a = spec.weight.matrix()?;
        let gamma_norms = sampling::noise_norms(
            &spec.noise,
            &spec.space,
            derive_seed(spec.seed, &[u64::MAX]),
        )?;
        Ok(Self {
            l: spec.noise.psi2_constant(),
            gamma_norms,
            a_hs: a.norm(),
            a_op: spectral_norm(&a),
        })
    }

    pub fn d2(&self) -> f64 {
        self.l.powi(4) * self.gamma_norms.hs_squared() * self.a_hs * self.a_hs
    }

    pub fn d1(&self) -> f64 {
        self.l * self.l * self.gamma_norms.op * self.a_op
    }

    pub fn exponent(&self, t: f64) -> f64 {
        (t * t / self.d2()).min(t / self.d1())
    }

    pub fn bound(&self, c: f64, t: f64) -> f64 {
        2.0 * (-c * self.exponent(t)).exp()
    }
}

pub fn spectral_norm(a: &DMatrix<f64>) -> f64 {
    a.clone().singular_values().max()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TailSide {
    /// `P(|Q − Q̄| ≥ t)` around the Monte Carlo mean.
    TwoSided,
    /// `P(Q − Σ a_ii L² ‖Γ‖_tr ≥ t)`.
    UpperDiagonal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailReport {
    pub side: TailSide,
    pub trials: usize,
    pub centering: f64,
    pub mc_mean: f64,
    pub mc_sd: f64,
    /// `Σ a_ii ‖Σ‖_tr`, the exact `E[Q]` for centered data.
    pub analytic_mean: f64,
    pub t_grid: Vec<f64>,
    pub t_sd_units: Vec<f64>,
    pub empirical_tail: Vec<f64>,
    pub std_error: Vec<f64>,
    pub usable: Vec<bool>,
    pub bound_value: Vec<f64>,
    pub bound_params: BoundParams,
    pub fitted_c: f64,
}

impl TailReport {
    pub fn mean_gap(&self) -> f64 {
        self.mc_mean - self.analytic_mean
    }

    pub fn usable_count(&self) -> usize {
        self.usable.iter().filter(|&&u| u).count()
    }

    pub fn csv_rows(&self) -> Vec<[f64; 5]> {
        (0..self.t_grid.len())
            .map(|i| {
                [
                    self.t_grid[i],
                    self.t_sd_units[i],
                    self.empirical_tail[i],
                    self.std_error[i],
                    self.bound_value[i],
                ]
            })
            .collect()
    }
}

fn mean_sd(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = if x.len() > 1 {
        x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

/// Fraction of `sorted` (ascending) that is `≥ t`.
fn tail_fraction(sorted: &[f64], t: f64) -> f64 {
    (sorted.len() - sorted.partition_point(|&d| d < t)) as f64 / sorted.len() as f64
}

fn binomial_se(p: f64, trials: usize) -> f64 {
    (p * (1.0 - p) / trials as f64).sqrt()
}

/// Build a tail report from simulated draws of `Q`.
pub fn tail_report(
    samples: &[f64],
    params: BoundParams,
    side: TailSide,
    diag_sum: f64,
) -> Result<TailReport> {
    let trials = samples.len();
    let (mc_mean, mc_sd) = mean_sd(samples);
    let analytic_mean = diag_sum * params.gamma_norms.trace;
    let centering = match side {
        TailSide::TwoSided => mc_mean,
        TailSide::UpperDiagonal => diag_sum * params.l * params.l * params.gamma_norms.trace,
    };
    let mut dev: Vec<f64> = samples
        .iter()
        .map(|q| match side {
            TailSide::TwoSided => (q - centering).abs(),
            TailSide::UpperDiagonal => q - centering,
        })
        .collect();
    dev.sort_by(f64::total_cmp);

    let (lo, hi) = TAIL_GRID_SD;
    let t_sd_units: Vec<f64> = (0..TAIL_GRID_POINTS)
        .map(|i| lo + (hi - lo) * i as f64 / (TAIL_GRID_POINTS - 1) as f64)
        .collect();
    let t_grid: Vec<f64> = t_sd_units.iter().map(|k| k * mc_sd).collect();
    let empirical_tail: Vec<f64> = t_grid.iter().map(|&t| tail_fraction(&dev, t)).collect();
    assert!(
        empirical_tail.windows(2).all(|w| w[1] <= w[0]),
        "empirical tail must be nonincreasing"
    );
    let std_error: Vec<f64> = empirical_tail
        .iter()
        .map(|&p| binomial_se(p, trials))
        .collect();
    let floor = USABLE_TAIL_COUNT / trials as f64;
    let usable: Vec<bool> = t_grid
        .iter()
        .zip(&empirical_tail)
        .map(|(&t, &p)| t > 0.0 && p >= floor)
        .collect();
    let count = usable.iter().filter(|&&u| u).count();
    if count < MIN_USABLE_POINTS {
        return Err(Error::InsufficientTail {
            usable: count,
            required: MIN_USABLE_POINTS,
        });
    }
    // Largest C with 2exp(−C·m(t)) ≥ p + 2se at every usable point.
    let fitted_c = (0..t_grid.len())
        .filter(|&i| usable[i])
        .map(|i| (2.0 / (empirical_tail[i] + 2.0 * std_error[i])).ln() / params.exponent(t_grid[i]))
        .fold(f64::INFINITY, f64::min);
    let bound_value = t_grid.iter().map(|&t| params.bound(fitted_c, t)).collect();
    Ok(TailReport {
        side,
        trials,
        centering,
        mc_mean,
        mc_sd,
        analytic_mean,
        t_grid,
        t_sd_units,
        empirical_tail,
        std_error,
        usable,
        bound_value,
        bound_params: params,
        fitted_c,
    })
}

fn check_tail_trials(spec: &QuadraticFormSpec) -> Result<()> {
    if spec.trials < MIN_TAIL_TRIALS {
        return Err(Error::InvalidParameter(format!(
            "tail experiments need at least {MIN_TAIL_TRIALS} trials, got {}",
            spec.trials
        )));
    }
    Ok(())
}

/// Two-sided tail of `Q` around its Monte Carlo mean, with the fitted constant.
pub fn tail_experiment(spec: &QuadraticFormSpec) -> Result<TailReport> {
    check_tail_trials(spec)?;
    let a = spec.weight.matrix()?;
    let params = BoundParams::for_spec(spec)?;
    let samples = simulate_quadratic_forms(spec)?;
    tail_report(&samples, params, TailSide::TwoSided, a.trace())
}

/// One-sided tail above `Σ a_ii L² ‖Γ‖_tr`; needs a nonnegative diagonal.
pub fn upper_tail_diag_experiment(spec: &QuadraticFormSpec) -> Result<TailReport> {
    check_tail_trials(spec)?;
    let a = spec.weight.matrix()?;
    if let Some(i) = (0..a.nrows()).find(|&i| a[(i, i)] < 0.0) {
        return Err(Error::InvalidParameter(format!(
            "upper-tail experiment needs a nonnegative diagonal; a[{i},{i}] = {}",
            a[(i, i)]
        )));
    }
    let params = BoundParams::for_spec(spec)?;
    let samples = simulate_quadratic_forms(spec)?;
    tail_report(&samples, params, TailSide::UpperDiagonal, a.trace())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DominanceCheck {
    pub c: f64,
    pub checked_points: usize,
    /// `(t, empirical tail, bound)` wherever the bound falls below the tail.
    pub violations: Vec<(f64, f64, f64)>,
    pub pass: bool,
}

/// Whether `2exp(−c·m(t))` with `report`'s own scale parameters stays above
/// the empirical tail at every usable grid point.
pub fn bound_dominates(report: &TailReport, c: f64) -> DominanceCheck {
    let mut checked_points = 0;
    let mut violations = Vec::new();
    for i in (0..report.t_grid.len()).filter(|&i| report.usable[i]) {
        checked_points += 1;
        let t = report.t_grid[i];
        let bound = report.bound_params.bound(c, t);
        if bound < report.empirical_tail[i] {
            violations.push((t, report.empirical_tail[i], bound));
        }
    }
    DominanceCheck {
        c,
        checked_points,
        pass: violations.is_empty(),
        violations,
    }
}

/// Empirical `P(|X² − 1| ≥ 3)` for scalar standard normals against the exact value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Chi2Calibration {
    pub t: f64,
    pub empirical: f64,
    pub exact: f64,
    pub std_error: f64,
    pub z_score: f64,
    pub pass: bool,
}

pub const CHI2_CALIBRATION_SIGMAS: f64 = 3.0;

pub fn chi2_calibration(trials: usize, seed: u64) -> Result<Chi2Calibration> {
    let spec = QuadraticFormSpec {
        weight: WeightSpec::Identity { n: 1 },
        noise: NoiseModel::GaussianIso { sigma: 1.0 },
        space: SpaceSpec::euclidean(1),
        trials,
        seed,
    };
    let samples = simulate_quadratic_forms(&spec)?;
    let t = 3.0;
    let hits = samples.iter().filter(|&&q| (q - 1.0).abs() >= t).count();
    let empirical = hits as f64 / trials as f64;
    let exact = chi2_one_tail_at_four();
    let std_error = binomial_se(exact, trials);
    let z_score = (empirical - exact) / std_error;
    Ok(Chi2Calibration {
        t,
        empirical,
        exact,
        std_error,
        z_score,
        pass: z_score.abs() <= CHI2_CALIBRATION_SIGMAS,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MgfReport {
    pub t_grid: Vec<f64>,
    pub mgf_x: Vec<f64>,
    pub mgf_z: Vec<f64>,
    /// `Π_j (1 − tγ_j)^(−1/2)`.
    pub mgf_z_exact: Vec<f64>,
    pub ratio: Vec<f64>,
    pub max_ratio: f64,
}

/// Largest admissible MGF argument as a multiple of `1/‖Γ‖_op`.
pub const MGF_T_LIMIT: f64 = 0.9;

/// Compare `E e^{t‖X‖²/2}` for `model` with the same for `Z ~ N(0, Γ)`.
pub fn mgf_dominance_check(
    model: &NoiseModel,
    gamma: &CovarianceOp,
    t_grid: &[f64],
    trials: usize,
    seed: u64,
) -> Result<MgfReport> {
    if trials == 0 {
        return Err(Error::InvalidParameter("trials must be positive".into()));
    }
    let dim = gamma.dim();
    let eig = linalg::sym_eigen(gamma.matrix())?;
    let op = eig.max_value();
    let limit = MGF_T_LIMIT / op;
    if let Some(t) = t_grid
        .iter()
        .find(|&&t| !(0.0..=limit * (1.0 + 1e-12)).contains(&t))
    {
        return Err(Error::InvalidParameter(format!(
            "MGF argument t={t} outside [0, {limit}]"
        )));
    }
    let x_noise = model.prepare(dim)?;
    let z_noise = NoiseModel::GaussianCov { cov: gamma.clone() }.prepare(dim)?;
    let sq_norms = |noise: &sampling::PreparedNoise, s: u64| -> Vec<f64> {
        (0..trials as u64)
            .into_par_iter()
            .map(|i| {
                let v = noise.draw(&mut stream_rng(s, i), dim);
                v.iter().map(|x| x * x).sum()
            })
            .collect()
    };
    let x_sq = sq_norms(&x_noise, derive_seed(seed, &[0]));
    let z_sq = sq_norms(&z_noise, derive_seed(seed, &[1]));
    let mgf =
        |sq: &[f64], t: f64| sq.iter().map(|s| (t * s / 2.0).exp()).sum::<f64>() / trials as f64;
    let mgf_x: Vec<f64> = t_grid.iter().map(|&t| mgf(&x_sq, t)).collect();
    let mgf_z: Vec<f64> = t_grid.iter().map(|&t| mgf(&z_sq, t)).collect();
    let mgf_z_exact = t_grid
        .iter()
        .map(|&t| {
            eig.values
                .iter()
                .map(|g| (1.0 - t * g.max(0.0)).powf(-0.5))
                .product()
        })
        .collect();
    let ratio: Vec<f64> = mgf_x.iter().zip(&mgf_z).map(|(x, z)| x / z).collect();
    let max_ratio = ratio.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(MgfReport {
        t_grid: t_grid.to_vec(),
        mgf_x,
        mgf_z,
        mgf_z_exact,
        ratio,
        max_ratio,
    })
}

/// Data model for squared-norm moment checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum MomentModel {
    /// Noise observed in its native space; `Γ` is the model's sub-gaussian
    /// reference with `L = 1`.
    Noise { noise: NoiseModel, space: SpaceSpec },
    /// The scalar heavy mixture, with `Γ = 2a²`, `L = 1`.
    Counterexample { a_n: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentRow {
    pub k: u32,
    /// Monte Carlo `E|‖X‖² − E‖X‖²|^k`.
    pub moment: f64,
    pub std_error: f64,
    /// `moment / (k! L^(k−2) ‖Γ‖_op^(k−2) ‖Σ‖²_HS)`.
    pub implied_c: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BernsteinReport {
    pub mean_sq_norm: f64,
    pub l: f64,
    pub gamma_op: f64,
    pub sigma_hs_squared: f64,
    pub rows: Vec<MomentRow>,
}

pub const MAX_MOMENT_ORDER: u32 = 6;

pub fn bernstein_moment_check(
    model: &MomentModel,
    k_max: u32,
    trials: usize,
    seed: u64,
) -> Result<BernsteinReport> {
    if !(3..=MAX_MOMENT_ORDER).contains(&k_max) {
        return Err(Error::InvalidParameter(format!(
            "k_max={k_max} must lie in 3..={MAX_MOMENT_ORDER}"
        )));
    }
    if trials < 2 {
        return Err(Error::InvalidParameter(
            "moment checks need at least 2 trials".into(),
        ));
    }
    let (sq, mean, gamma_op, sigma_hs2) = match model {
        MomentModel::Noise { noise, space } => {
            if !sampling::is_native(noise, space) {
                return Err(Error::InvalidParameter(
                    "moment checks need the noise model's native space".into(),
                ));
            }
            let dim = sampling::noise_dim(noise, space)?;
            let sigma = hilbert::operator_norms(&noise.covariance(dim)?)?;
            let gamma = hilbert::operator_norms(&noise.subgaussian_reference(dim)?)?;
            let prepared = noise.prepare(dim)?;
            let sq: Vec<f64> = (0..trials as u64)
                .into_par_iter()
                .map(|i| {
                    let p = Point::new(prepared.draw(&mut stream_rng(seed, i), dim));
                    space.embedded_inner(&space.embed(&p), &space.embed(&p))
                })
                .collect();
            (sq, sigma.trace, gamma.op, sigma.hs_squared())
        }
        MomentModel::Counterexample { a_n } => {
            let y = sampling::sample_counterexample(*a_n, trials, seed)?;
            let var = sampling::counterexample_variance(*a_n);
            (
                y.iter().map(|v| v * v).collect(),
                var,
                2.0 * a_n * a_n,
                var * var,
            )
        }
    };
    let l = 1.0;
    let rows = (3..=k_max)
        .map(|k| {
            let dev: Vec<f64> = sq.iter().map(|s| (s - mean).abs().powi(k as i32)).collect();
            let (moment, sd) = mean_sd(&dev);
            let factorial: f64 = (1..=k).map(f64::from).product();
            let norm = factorial * (l * gamma_op).powi(k as i32 - 2) * sigma_hs2;
            MomentRow {
                k,
                moment,
                std_error: sd / (trials as f64).sqrt(),
                implied_c: moment / norm,
            }
        })
        .collect();
    Ok(BernsteinReport {
        mean_sq_norm: mean,
        l,
        gamma_op,
        sigma_hs_squared: sigma_hs2,
        rows,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundComparison {
    pub t: f64,
    /// Family with `(‖Γ‖_HS, ‖Γ‖_op, ‖A‖_HS, ‖A‖_op)`.
    pub sharp: f64,
    /// Bernstein family for the diagonal sum with `‖Γ‖_tr` only.
    pub trace_only: f64,
}

/// Evaluate both bound families at a shared constant `c`.
pub fn compare_diagonal_bounds(
    gamma: &OperatorNorms,
    a: &DMatrix<f64>,
    l: f64,
    c: f64,
    t_grid: &[f64],
) -> Vec<BoundComparison> {
    let sharp = BoundParams {
        l,
        gamma_norms: *gamma,
        a_hs: a.norm(),
        a_op: spectral_norm(a),
    };
    let diag_sq: f64 = a.diagonal().iter().map(|v| v * v).sum();
    let diag_max = a.diagonal().iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let l2 = l * l;
    t_grid
        .iter()
        .map(|&t| {
            let e = (t * t / (l2 * l2 * gamma.trace * gamma.trace * diag_sq))
                .min(t / (l2 * gamma.trace * diag_max));
            BoundComparison {
                t,
                sharp: sharp.bound(c, t),
                trace_only: 2.0 * (-c * e).exp(),
            }
        })
        .collect()
}

/// One quadratic-form scenario of a tail check; seeds are derived.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TailCase {
    pub weight: WeightSpec,
    pub noise: NoiseModel,
    pub space: SpaceSpec,
}

fn default_true() -> bool {
    true
}

/// Calibrate the constant on one case and test it on held-out cases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TailCheckConfig {
    pub trials: usize,
    pub seed: u64,
    pub calibration: TailCase,
    #[serde(default)]
    pub held_out: Vec<TailCase>,
    #[serde(default)]
    pub upper_tail: Vec<TailCase>,
    #[serde(default = "default_true")]
    pub chi2_check: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeldOutResult {
    pub report: TailReport,
    pub dominance: DominanceCheck,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailCheckOutcome {
    pub calibration: TailReport,
    pub held_out: Vec<HeldOutResult>,
    pub upper_tail: Vec<TailReport>,
    pub chi2: Option<Chi2Calibration>,
}

impl TailCheckOutcome {
    pub fn all_dominated(&self) -> bool {
        self.held_out.iter().all(|h| h.dominance.pass)
    }
}

const UPPER_TAIL_SEED_OFFSET: u64 = 1 << 32;
const CHI2_SEED_PATH: u64 = u64::MAX - 1;

impl TailCase {
    pub fn to_spec(&self, trials: usize, seed: u64) -> QuadraticFormSpec {
        QuadraticFormSpec {
            weight: self.weight.clone(),
            noise: self.noise.clone(),
            space: self.space.clone(),
            trials,
            seed,
        }
    }
}

pub fn run_tail_check(cfg: &TailCheckConfig) -> Result<TailCheckOutcome> {
    let calibration = tail_experiment(
        &cfg.calibration
            .to_spec(cfg.trials, derive_seed(cfg.seed, &[0])),
    )?;
    let held_out = cfg
        .held_out
        .iter()
        .enumerate()
        .map(|(i, case)| {
            let report =
                tail_experiment(&case.to_spec(cfg.trials, derive_seed(cfg.seed, &[1 + i as u64])))?;
            let dominance = bound_dominates(&report, calibration.fitted_c);
            Ok(HeldOutResult { report, dominance })
        })
        .collect::<Result<_>>()?;
    let upper_tail = cfg
        .upper_tail
        .iter()
        .enumerate()
        .map(|(i, case)| {
            upper_tail_diag_experiment(&case.to_spec(
                cfg.trials,
                derive_seed(cfg.seed, &[UPPER_TAIL_SEED_OFFSET + i as u64]),
            ))
        })
        .collect::<Result<_>>()?;
    let chi2 = if cfg.chi2_check {
        Some(chi2_calibration(
            cfg.trials,
            derive_seed(cfg.seed, &[CHI2_SEED_PATH]),
        )?)
    } else {
        None
    };
    Ok(TailCheckOutcome {
        calibration,
        held_out,
        upper_tail,
        chi2,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::Grid;
    use crate::similarity::gram;

    fn data(n: usize, dim: usize, seed: u64) -> Vec<Point> {
        sampling::sample_noise(&NoiseModel::GaussianIso { sigma: 1.0 }, dim, n, seed, 0).unwrap()
    }

    #[test]
    fn identity_and_zero_weights() {
        let x = data(4, 3, 1);
        let s = SpaceSpec::euclidean(3);
        let q = quadratic_form(&DMatrix::identity(4, 4), &x, &s).unwrap();
        let sq: f64 = x
            .iter()
            .map(|p| hilbert::inner_product(p, p, &s).unwrap())
            .sum();
        assert!((q - sq).abs() < 1e-12);
        assert_eq!(quadratic_form(&DMatrix::zeros(4, 4), &x, &s).unwrap(), 0.0);
    }

    #[test]
    fn form_matches_gram_frobenius_product() {
        let x = data(5, 4, 2);
        let s = SpaceSpec::euclidean(4);
        let mut a = random_symmetric(5, 3, DiagonalRule::Keep);
        a[(0, 1)] += 0.7;
        let g = gram(&x, &s).unwrap();
        let q = quadratic_form(&a, &x, &s).unwrap();
        assert!((q - linalg::frobenius_dot(g.matrix(), &a)).abs() < 1e-10);
        let off = offdiag_quadratic_form(&a, &x, &s).unwrap();
        let diag: f64 = (0..5).map(|i| a[(i, i)] * g.matrix()[(i, i)]).sum();
        assert!((off - (q - diag)).abs() < 1e-10);
    }

    #[test]
    fn offdiag_examples() {
        let x = data(2, 3, 4);
        let s = SpaceSpec::euclidean(3);
        let d = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![2.0, 5.0]));
        assert_eq!(offdiag_quadratic_form(&d, &x, &s).unwrap(), 0.0);
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let want = 2.0 * hilbert::inner_product(&x[0], &x[1], &s).unwrap();
        assert!((offdiag_quadratic_form(&a, &x, &s).unwrap() - want).abs() < 1e-12);
    }

    #[test]
    fn mismatched_inputs_rejected() {
        let x = data(3, 2, 5);
        assert!(quadratic_form(&DMatrix::identity(2, 2), &x, &SpaceSpec::euclidean(2)).is_err());
        assert!(quadratic_form(&DMatrix::identity(3, 3), &x, &SpaceSpec::euclidean(3)).is_err());
    }

    fn gaussian_spec(trials: usize) -> QuadraticFormSpec {
        QuadraticFormSpec {
            weight: WeightSpec::RandomSymmetric {
                n: 6,
                seed: 1,
                diagonal: DiagonalRule::Keep,
            },
            noise: NoiseModel::GaussianIso { sigma: 1.0 },
            space: SpaceSpec::euclidean(3),
            trials,
            seed: 11,
        }
    }

    #[test]
    fn tail_report_shape_and_fit() {
        let r = tail_experiment(&gaussian_spec(4000)).unwrap();
        assert_eq!(r.t_grid.len(), TAIL_GRID_POINTS);
        assert!(r.empirical_tail.windows(2).all(|w| w[1] <= w[0]));
        assert!(r.fitted_c > 0.0 && r.fitted_c.is_finite());
        assert!(bound_dominates(&r, r.fitted_c).pass);
        for i in (0..TAIL_GRID_POINTS).filter(|&i| r.usable[i]) {
            assert!(r.bound_value[i] >= r.empirical_tail[i] + 2.0 * r.std_error[i] - 1e-12);
        }
    }

    #[test]
    fn too_few_trials_rejected() {
        assert!(tail_experiment(&gaussian_spec(10)).is_err());
        let mut spec = gaussian_spec(2000);
        spec.weight = WeightSpec::Explicit {
            rows: vec![vec![-1.0, 0.0], vec![0.0, 1.0]],
        };
        assert!(upper_tail_diag_experiment(&spec).is_err());
    }

    #[test]
    fn degenerate_data_has_no_tail() {
        let mut spec = gaussian_spec(1000);
        spec.noise = NoiseModel::GaussianIso { sigma: 0.0 };
        assert!(matches!(
            tail_experiment(&spec),
            Err(Error::InsufficientTail { usable: 0, .. })
        ));
    }

    #[test]
    fn simulation_is_schedule_independent() {
        let spec = gaussian_spec(300);
        let serial = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap()
            .install(|| simulate_quadratic_forms(&spec).unwrap());
        let parallel = rayon::ThreadPoolBuilder::new()
            .num_threads(4)
            .build()
            .unwrap()
            .install(|| simulate_quadratic_forms(&spec).unwrap());
        assert_eq!(serial, parallel);
    }

    #[test]
    fn chi2_exact_value() {
        assert!((chi2_one_tail_at_four() - 0.0455).abs() < 5e-5);
    }

    #[test]
    fn mgf_of_zero_noise_is_dominated() {
        let r = mgf_dominance_check(
            &NoiseModel::BoundedUniform { half_width: 0.0 },
            &CovarianceOp::identity(2),
            &[0.0, 0.3, 0.9],
            2000,
            1,
        )
        .unwrap();
        assert!(r.ratio.iter().all(|&q| q <= 1.0));
        assert!(mgf_dominance_check(
            &NoiseModel::BoundedUniform { half_width: 1.0 },
            &CovarianceOp::identity(2),
            &[0.95],
            10,
            1
        )
        .is_err());
    }

    #[test]
    fn trace_bound_is_weaker_for_identity_covariance() {
        let gamma = hilbert::operator_norms(&CovarianceOp::identity(100)).unwrap();
        let a = DMatrix::identity(10, 10);
        let t: Vec<f64> = (1..=20).map(|i| i as f64 * 5.0).collect();
        for row in compare_diagonal_bounds(&gamma, &a, 1.0, 1.0, &t) {
            assert!(row.trace_only > row.sharp, "{row:?}");
        }
    }

    #[test]
    fn moment_check_rejects_bad_order_and_space() {
        let m = MomentModel::Noise {
            noise: NoiseModel::GaussianIso { sigma: 1.0 },
            space: SpaceSpec::euclidean(1),
        };
        assert!(bernstein_moment_check(&m, 7, 100, 0).is_err());
        let g = Grid::uniform(11).unwrap();
        let m = MomentModel::Noise {
            noise: NoiseModel::KlProcess {
                beta: 1.0,
                d: 3,
                grid: g.clone(),
            },
            space: SpaceSpec::sobolev(g, 1).unwrap(),
        };
        assert!(bernstein_moment_check(&m, 3, 100, 0).is_err());
    }
}
