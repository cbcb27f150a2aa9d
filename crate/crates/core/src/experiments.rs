//! End-to-end recovery experiments: error versus separation, Sobolev versus
//! `L²` similarities on identical functional datasets, and `(Δ, n)` phase
//! diagrams.
//!
//! Each `(cell, trial)` dataset is drawn with seed
//! `derive_seed(seed, [cell, trial])` and evaluated under every configured
//! space. Trials run on the current rayon pool and are merged by index.
//!
//! Means are the configured layout rescaled so that the minimum pairwise
//! separation, measured in the first configured space, equals the cell's
//! `delta`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{Grid, OperatorNorms, Point, SpaceSpec};
use crate::report::{csv_table, Field};
use crate::rng::derive_seed;
use crate::rounding::{self, Assignment};
use crate::sampling::{self, MixtureConfig, NoiseModel, SnrInputs};
use crate::sdp::{self, SolverConfig};
use crate::similarity;

pub const MIN_TRIALS_PER_CELL: usize = 10;

/// Unscaled cluster means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MeanLayout {
    /// `e_1, …, e_K` in `ℝ^dim`.
    Orthonormal {
        k: usize,
        dim: usize,
    },
    /// `0` and `√2 sin(Jπt)` on the grid.
    HighFrequency {
        grid: Grid,
        frequency: usize,
    },
    /// `0` and the constant function `1`.
    Flat {
        grid: Grid,
    },
    Explicit {
        means: Vec<Point>,
    },
}

impl MeanLayout {
    pub fn directions(&self) -> Result<Vec<Point>> {
        match self {
            MeanLayout::Orthonormal { k, dim } => {
                if k > dim {
                    return Err(Error::InvalidParameter(format!(
                        "{k} orthonormal means need dim >= {k}, got {dim}"
                    )));
                }
                Ok((0..*k)
                    .map(|i| {
                        let mut p = Point::zeros(*dim);
                        p.coords_mut()[i] = 1.0;
                        p
                    })
                    .collect())
            }
            MeanLayout::HighFrequency { grid, frequency } => {
                let wave = grid
                    .points()
                    .iter()
                    .map(|&t| sampling::kl_basis_function(*frequency, t))
                    .collect();
                Ok(vec![Point::zeros(grid.len()), Point::new(wave)])
            }
            MeanLayout::Flat { grid } => Ok(vec![
                Point::zeros(grid.len()),
                Point::new(vec![1.0; grid.len()]),
            ]),
            MeanLayout::Explicit { means } => Ok(means.clone()),
        }
    }
}

/// Means of `layout` rescaled to minimum separation `delta` in `space`.
pub fn scaled_means(layout: &MeanLayout, space: &SpaceSpec, delta: f64) -> Result<Vec<Point>> {
    let dirs = layout.directions()?;
    let sep = sampling::min_separation(&dirs, space)?;
    if sep.is_nan() || sep <= 0.0 {
        return Err(Error::InvalidParameter(
            "mean layout has coincident means".into(),
        ));
    }
    let factor = delta / sep;
    Ok(dirs
        .into_iter()
        .map(|p| Point::new(p.coords().iter().map(|v| v * factor).collect()))
        .collect())
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub means: MeanLayout,
    /// Cluster sizes for error curves and Sobolev comparisons.
    #[serde(default)]
    pub cluster_sizes: Vec<usize>,
    /// Total sample sizes for phase diagrams; clusters are equal.
    #[serde(default)]
    pub n_grid: Vec<usize>,
    pub noise: NoiseModel,
    pub space_specs: Vec<SpaceSpec>,
    pub delta_grid: Vec<f64>,
    pub trials_per_cell: usize,
    #[serde(default)]
    pub solver: SolverConfig,
    pub seed: u64,
    /// Record the feasible-set identities of every solved matrix.
    #[serde(default = "default_true")]
    pub check_identities: bool,
}

impl ExperimentConfig {
    pub fn k(&self) -> Result<usize> {
        Ok(self.means.directions()?.len())
    }

    fn validate(&self) -> Result<()> {
        if self.trials_per_cell < MIN_TRIALS_PER_CELL {
            return Err(Error::InvalidParameter(format!(
                "trials_per_cell={} must be at least {MIN_TRIALS_PER_CELL}",
                self.trials_per_cell
            )));
        }
        if self.delta_grid.is_empty() {
            return Err(Error::InvalidParameter("delta_grid is empty".into()));
        }
        if self.delta_grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidParameter(
                "delta_grid must be strictly increasing".into(),
            ));
        }
        if let Some(d) = self
            .delta_grid
            .iter()
            .find(|d| !(**d >= 0.0 && d.is_finite()))
        {
            return Err(Error::InvalidParameter(format!(
                "delta {d} must be finite and >= 0"
            )));
        }
        if self.space_specs.is_empty() {
            return Err(Error::InvalidParameter("space_specs is empty".into()));
        }
        for s in &self.space_specs {
            s.validate()?;
        }
        self.solver.validate()
    }
}

/// Aggregate over the trials of one `(delta, n, space)` cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub cell: usize,
    pub space: usize,
    pub delta: f64,
    pub n: usize,
    /// Minimum mean separation measured in this cell's space.
    pub separation: f64,
    pub snr2: f64,
    pub median_l1_error: f64,
    pub recovery_rate: f64,
    pub mean_solver_iters: f64,
    pub nonconverged: usize,
    /// `max(n/n̄, log n)`, phase diagrams only.
    pub threshold: Option<f64>,
    /// `n̄²K ≥ n`, phase diagrams only.
    pub size_condition: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub cell: usize,
    pub trial: usize,
    pub space: usize,
    pub delta: f64,
    pub n: usize,
    pub seed: u64,
    pub converged: bool,
    pub iters: usize,
    pub objective: f64,
    pub error_l1: f64,
    pub recovered: bool,
    pub k_hat: usize,
    pub identities_pass: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentOutput {
    pub cells: Vec<CellResult>,
    pub trials: Vec<TrialRecord>,
}

impl ExperimentOutput {
    pub fn cells_for_space(&self, space: usize) -> Vec<&CellResult> {
        self.cells.iter().filter(|c| c.space == space).collect()
    }

    pub fn results_csv(&self) -> Result<String> {
        csv_table(
            &[
                "cell",
                "space",
                "delta",
                "n",
                "separation",
                "snr2",
                "median_l1_error",
                "recovery_rate",
                "mean_iters",
                "nonconverged",
                "threshold",
                "size_condition",
            ],
            self.cells.iter().map(|c| {
                vec![
                    c.cell.into(),
                    c.space.into(),
                    c.delta.into(),
                    c.n.into(),
                    c.separation.into(),
                    c.snr2.into(),
                    c.median_l1_error.into(),
                    c.recovery_rate.into(),
                    c.mean_solver_iters.into(),
                    c.nonconverged.into(),
                    c.threshold.into(),
                    c.size_condition.into(),
                ]
            }),
        )
    }

    pub fn trials_csv(&self) -> Result<String> {
        csv_table(
            &[
                "cell",
                "trial",
                "space",
                "delta",
                "n",
                "seed",
                "converged",
                "iters",
                "objective",
                "error_l1",
                "recovered",
                "k_hat",
                "identities_pass",
            ],
            self.trials.iter().map(|t| {
                vec![
                    t.cell.into(),
                    t.trial.into(),
                    t.space.into(),
                    t.delta.into(),
                    t.n.into(),
                    Field::Text(t.seed.to_string()),
                    t.converged.into(),
                    t.iters.into(),
                    t.objective.into(),
                    t.error_l1.into(),
                    t.recovered.into(),
                    t.k_hat.into(),
                    t.identities_pass.into(),
                ]
            }),
        )
    }
}

struct Cell {
    delta: f64,
    sizes: Vec<usize>,
    phase: bool,
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let m = values.len();
    if m % 2 == 1 {
        values[m / 2]
    } else {
        0.5 * (values[m / 2 - 1] + values[m / 2])
    }
}

fn run_trial(
    cfg: &ExperimentConfig,
    means: &[Point],
    cell_index: usize,
    cell: &Cell,
    trial: usize,
) -> Result<Vec<TrialRecord>> {
    let seed = derive_seed(cfg.seed, &[cell_index as u64, trial as u64]);
    let mixture = MixtureConfig {
        cluster_sizes: cell.sizes.clone(),
        means: means.to_vec(),
        noise: cfg.noise.clone(),
        seed,
    };
    let (data, truth) = sampling::sample_mixture(&mixture)?;
    let z_star = rounding::membership_matrix(&truth);
    let k = truth.k();
    cfg.space_specs
        .iter()
        .enumerate()
        .map(|(space_index, space)| {
            let a = similarity::gram(&data, space)?;
            let sol = sdp::solve(&a, k, &cfg.solver)?;
            let error_l1 = rounding::error_l1(&sol.z_hat, &z_star)?;
            let rounded: Assignment = rounding::round_solution(&sol.z_hat)?;
            let identities_pass = if cfg.check_identities {
                let (feasible, _) = sdp::restore_feasibility(&sol.z_hat, k)?;
                Some(rounding::feasible_set_identities(&feasible, &z_star)?.all_pass())
            } else {
                None
            };
            Ok(TrialRecord {
                cell: cell_index,
                trial,
                space: space_index,
                delta: cell.delta,
                n: truth.n(),
                seed,
                converged: sol.converged,
                iters: sol.iters,
                objective: sol.objective,
                error_l1,
                recovered: rounding::same_partition(&rounded, &truth),
                k_hat: rounded.k(),
                identities_pass,
            })
        })
        .collect()
}

fn run_cells(cfg: &ExperimentConfig, cells: &[Cell]) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let primary = &cfg.space_specs[0];
    let cell_means: Vec<Vec<Point>> = cells
        .iter()
        .map(|c| scaled_means(&cfg.means, primary, c.delta))
        .collect::<Result<_>>()?;
    let k = cell_means[0].len();
    for c in cells {
        if c.sizes.len() != k {
            return Err(Error::DimensionMismatch {
                context: "cluster sizes vs means",
                expected: k,
                found: c.sizes.len(),
            });
        }
    }
    let noise_norms: Vec<OperatorNorms> = cfg
        .space_specs
        .iter()
        .enumerate()
        .map(|(i, s)| {
            sampling::noise_norms(&cfg.noise, s, derive_seed(cfg.seed, &[u64::MAX, i as u64]))
        })
        .collect::<Result<_>>()?;

    let tasks: Vec<(usize, usize)> = (0..cells.len())
        .flat_map(|c| (0..cfg.trials_per_cell).map(move |t| (c, t)))
        .collect();
    let records: Vec<Vec<TrialRecord>> = tasks
        .par_iter()
        .map(|&(c, t)| run_trial(cfg, &cell_means[c], c, &cells[c], t))
        .collect::<Result<_>>()?;

    let l = cfg.noise.psi2_constant();
    let mut out_cells = Vec::new();
    for (ci, cell) in cells.iter().enumerate() {
        let n: usize = cell.sizes.iter().sum();
        let n_min = *cell.sizes.iter().min().expect("sizes nonempty");
        for (si, space) in cfg.space_specs.iter().enumerate() {
            let trials: Vec<&TrialRecord> = records
                [ci * cfg.trials_per_cell..(ci + 1) * cfg.trials_per_cell]
                .iter()
                .map(|r| &r[si])
                .collect();
            let count = trials.len() as f64;
            let separation = sampling::min_separation(&cell_means[ci], space)?;
            let snr2 = sampling::snr_squared(&SnrInputs {
                delta: separation,
                l,
                sigma_norms: noise_norms[si],
                n_min,
            });
            let mut errors: Vec<f64> = trials.iter().map(|t| t.error_l1).collect();
            let nf = n as f64;
            out_cells.push(CellResult {
                cell: ci,
                space: si,
                delta: cell.delta,
                n,
                separation,
                snr2,
                median_l1_error: median(&mut errors),
                recovery_rate: trials.iter().filter(|t| t.recovered).count() as f64 / count,
                mean_solver_iters: trials.iter().map(|t| t.iters as f64).sum::<f64>() / count,
                nonconverged: trials.iter().filter(|t| !t.converged).count(),
                threshold: cell.phase.then(|| (nf / n_min as f64).max(nf.ln())),
                size_condition: cell.phase.then(|| n_min * n_min * k >= n),
            });
        }
    }
    Ok(ExperimentOutput {
        cells: out_cells,
        trials: records.into_iter().flatten().collect(),
    })
}

fn require_sizes(cfg: &ExperimentConfig) -> Result<()> {
    if cfg.cluster_sizes.is_empty() {
        return Err(Error::InvalidParameter("cluster_sizes is empty".into()));
    }
    Ok(())
}

/// One cell per `delta`, for every configured space.
pub fn run_error_curve(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    require_sizes(cfg)?;
    let cells: Vec<Cell> = cfg
        .delta_grid
        .iter()
        .map(|&delta| Cell {
            delta,
            sizes: cfg.cluster_sizes.clone(),
            phase: false,
        })
        .collect();
    run_cells(cfg, &cells)
}

/// Error curves under `L²` (space 0) and first-order Sobolev (space 1) on the
/// same datasets.
pub fn run_sobolev_comparison(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    match cfg.space_specs.as_slice() {
        [SpaceSpec::L2Grid { grid: g0 }, SpaceSpec::Sobolev { grid: g1, order: 1 }] if g0 == g1 => {}
        _ => {
            return Err(Error::InvalidParameter(
                "sobolev comparison needs space_specs = [l2 on a grid, sobolev order 1 on the same grid]".into(),
            ))
        }
    }
    run_error_curve(cfg)
}

/// Cells over `delta_grid × n_grid` (delta-major) with equal clusters.
pub fn run_phase_diagram(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    let k = cfg.k()?;
    if cfg.n_grid.is_empty() {
        return Err(Error::InvalidParameter("n_grid is empty".into()));
    }
    if let Some(n) = cfg.n_grid.iter().find(|&&n| n % k != 0 || n < k) {
        return Err(Error::InvalidParameter(format!(
            "n={n} is not a positive multiple of K={k}"
        )));
    }
    let cells: Vec<Cell> = cfg
        .delta_grid
        .iter()
        .flat_map(|&delta| {
            cfg.n_grid.iter().map(move |&n| Cell {
                delta,
                sizes: vec![n / k; k],
                phase: true,
            })
        })
        .collect();
    run_cells(cfg, &cells)
}
