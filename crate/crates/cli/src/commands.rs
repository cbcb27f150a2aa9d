use std::path::Path;

use hkm_core::concentration::{self, TailCheckOutcome, TailReport};
use hkm_core::dataset;
use hkm_core::experiments::{self, ExperimentOutput};
use hkm_core::report::{csv_table, Field};
use hkm_core::rounding::{self, Assignment};
use hkm_core::sdp::{self, FeasibilityResiduals, SolverConfig};
use hkm_core::similarity;
use serde::Serialize;

use crate::args::{ClusterArgs, RunArgs, ValidateArgs};
use crate::config::{self, PhaseDiagramFile, SimulateFile, SimulationKind, TailCheckFile};
use crate::output::{ensure_dir, matrix_csv, write_atomic, write_json};
use crate::Failure;

fn core(e: hkm_core::error::Error) -> Failure {
    Failure::input(e.to_string())
}

#[derive(Serialize)]
struct Diagnostics<'a> {
    n: usize,
    k: usize,
    k_hat: usize,
    objective: f64,
    converged: bool,
    iters: usize,
    residuals: FeasibilityResiduals,
    solver: SolverConfig,
    space: &'a hkm_core::hilbert::SpaceSpec,
    #[serde(skip_serializing_if = "Option::is_none")]
    partition_match: Option<bool>,
}

pub fn cluster(args: &ClusterArgs) -> Result<(), Failure> {
    let data = dataset::read_dataset(&args.data).map_err(core)?;
    let n = data.points.len();
    if args.k == 0 || args.k > n {
        return Err(Failure::input(format!("K={} must lie in 1..={n}", args.k)));
    }
    let truth = if args.score {
        let labels = data
            .labels
            .as_ref()
            .ok_or_else(|| Failure::input("--score needs a dataset with a 'label' column"))?;
        Some(Assignment::from_raw_labels(labels).map_err(core)?)
    } else {
        None
    };
    let space = args.space.to_spec(data.dim()).map_err(core)?;
    let mut solver = SolverConfig::default();
    if let Some(rho) = args.rho {
        solver.rho = rho;
    }
    if let Some(m) = args.max_iters {
        solver.max_iters = m;
    }
    if let Some(t) = args.tol {
        solver.tol_primal = t;
        solver.tol_dual = t;
    }
    solver.validate().map_err(core)?;

    let a = similarity::gram(&data.points, &space).map_err(core)?;
    let sol = sdp::solve(&a, args.k, &solver).map_err(core)?;
    let assignment = rounding::round_solution(&sol.z_hat).map_err(core)?;
    let partition_match = truth
        .as_ref()
        .map(|t| rounding::same_partition(&assignment, t));

    ensure_dir(&args.out)?;
    let rows = assignment
        .labels()
        .iter()
        .enumerate()
        .map(|(i, &l)| vec![Field::from(i), Field::from(l)]);
    write_atomic(
        &args.out,
        "assignment.csv",
        csv_table(&["index", "label"], rows)
            .map_err(core)?
            .as_bytes(),
    )?;
    write_atomic(&args.out, "zhat.csv", matrix_csv(&sol.z_hat).as_bytes())?;
    write_json(
        &args.out,
        "diagnostics.json",
        &Diagnostics {
            n,
            k: args.k,
            k_hat: assignment.k(),
            objective: sol.objective,
            converged: sol.converged,
            iters: sol.iters,
            residuals: sol.residuals,
            solver,
            space: &space,
            partition_match,
        },
    )?;
    if let Some(m) = partition_match {
        println!("partition_match={m}");
    }
    if !sol.converged {
        return Err(Failure::non_converged(format!(
            "solver stopped after {} iterations without converging (max residual {:.3e}); results written",
            sol.iters,
            sol.residuals.max()
        )));
    }
    Ok(())
}

pub fn validate(args: &ValidateArgs) -> Result<(), Failure> {
    let data = dataset::read_dataset(&args.data).map_err(core)?;
    println!(
        "ok: {} observations, {} coordinates, labels: {}",
        data.points.len(),
        data.dim(),
        if data.labels.is_some() { "yes" } else { "no" }
    );
    Ok(())
}

fn with_pool<T>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T, Failure>
where
    T: Send,
{
    match threads {
        None => Ok(f()),
        Some(0) => Err(Failure::input("--threads must be at least 1")),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map(|pool| pool.install(f))
            .map_err(|e| Failure::input(format!("cannot start thread pool: {e}"))),
    }
}

fn write_experiment(
    out: &Path,
    result: &ExperimentOutput,
    echo: &impl Serialize,
) -> Result<(), Failure> {
    ensure_dir(out)?;
    write_atomic(
        out,
        "results.csv",
        result.results_csv().map_err(core)?.as_bytes(),
    )?;
    write_atomic(
        out,
        "trials.csv",
        result.trials_csv().map_err(core)?.as_bytes(),
    )?;
    write_json(out, "config_echo.json", echo)
}

pub fn simulate(args: &RunArgs) -> Result<(), Failure> {
    let cfg: SimulateFile = config::load(&args.config)?;
    let result = with_pool(args.threads, || match cfg.kind {
        SimulationKind::ErrorCurve => experiments::run_error_curve(&cfg.experiment),
        SimulationKind::SobolevComparison => experiments::run_sobolev_comparison(&cfg.experiment),
    })?
    .map_err(core)?;
    write_experiment(&args.out, &result, &cfg)?;
    println!(
        "wrote {} cells, {} trial rows to {}",
        result.cells.len(),
        result.trials.len(),
        args.out.display()
    );
    Ok(())
}

pub fn phase_diagram(args: &RunArgs) -> Result<(), Failure> {
    let cfg: PhaseDiagramFile = config::load(&args.config)?;
    let result = with_pool(args.threads, || {
        experiments::run_phase_diagram(&cfg.experiment)
    })?
    .map_err(core)?;
    write_experiment(&args.out, &result, &cfg)?;
    println!(
        "wrote {} cells to {}",
        result.cells.len(),
        args.out.display()
    );
    Ok(())
}

fn tail_csv(r: &TailReport) -> Result<String, Failure> {
    let rows = r
        .csv_rows()
        .into_iter()
        .zip(&r.usable)
        .map(|(row, &usable)| {
            let mut fields: Vec<Field> = row.iter().map(|&v| Field::Float(v)).collect();
            fields.push(usable.into());
            fields
        });
    csv_table(
        &[
            "t",
            "t_sd",
            "empirical_tail",
            "std_error",
            "bound_value",
            "usable",
        ],
        rows,
    )
    .map_err(core)
}

#[derive(Serialize)]
struct TailSummary<'a> {
    outcome: &'a TailCheckOutcome,
    all_held_out_dominated: bool,
    mgf: Option<&'a concentration::MgfReport>,
    bernstein: Option<&'a concentration::BernsteinReport>,
}

pub fn tail_check(args: &RunArgs) -> Result<(), Failure> {
    let cfg: TailCheckFile = config::load(&args.config)?;
    let (outcome, mgf, bernstein) = with_pool(args.threads, || -> hkm_core::error::Result<_> {
        let outcome = concentration::run_tail_check(&cfg.tail)?;
        let mgf = cfg
            .mgf
            .as_ref()
            .map(|m| {
                concentration::mgf_dominance_check(&m.noise, &m.gamma, &m.t_grid, m.trials, m.seed)
            })
            .transpose()?;
        let bernstein = cfg
            .bernstein
            .as_ref()
            .map(|b| concentration::bernstein_moment_check(&b.model, b.k_max, b.trials, b.seed))
            .transpose()?;
        Ok((outcome, mgf, bernstein))
    })?
    .map_err(core)?;

    let out = &args.out;
    ensure_dir(out)?;
    write_atomic(
        out,
        "tail_calibration.csv",
        tail_csv(&outcome.calibration)?.as_bytes(),
    )?;
    for (i, h) in outcome.held_out.iter().enumerate() {
        write_atomic(
            out,
            &format!("tail_held_out_{i}.csv"),
            tail_csv(&h.report)?.as_bytes(),
        )?;
    }
    for (i, r) in outcome.upper_tail.iter().enumerate() {
        write_atomic(out, &format!("tail_upper_{i}.csv"), tail_csv(r)?.as_bytes())?;
    }
    if let Some(c) = &outcome.chi2 {
        let row = vec![
            c.t.into(),
            c.empirical.into(),
            c.exact.into(),
            c.std_error.into(),
            c.z_score.into(),
            c.pass.into(),
        ];
        let text = csv_table(
            &[
                "t",
                "empirical_tail",
                "exact_tail",
                "std_error",
                "z_score",
                "pass",
            ],
            [row],
        )
        .map_err(core)?;
        write_atomic(out, "chi2_calibration.csv", text.as_bytes())?;
    }
    if let Some(m) = &mgf {
        let rows = (0..m.t_grid.len()).map(|i| {
            vec![
                m.t_grid[i].into(),
                m.mgf_x[i].into(),
                m.mgf_z[i].into(),
                m.mgf_z_exact[i].into(),
                m.ratio[i].into(),
            ]
        });
        let text =
            csv_table(&["t", "mgf_x", "mgf_z", "mgf_z_exact", "ratio"], rows).map_err(core)?;
        write_atomic(out, "mgf.csv", text.as_bytes())?;
    }
    if let Some(b) = &bernstein {
        let rows = b.rows.iter().map(|r| {
            vec![
                Field::from(r.k as usize),
                r.moment.into(),
                r.std_error.into(),
                r.implied_c.into(),
            ]
        });
        let text = csv_table(&["k", "moment", "std_error", "implied_c"], rows).map_err(core)?;
        write_atomic(out, "bernstein.csv", text.as_bytes())?;
    }
    write_json(
        out,
        "summary.json",
        &TailSummary {
            outcome: &outcome,
            all_held_out_dominated: outcome.all_dominated(),
            mgf: mgf.as_ref(),
            bernstein: bernstein.as_ref(),
        },
    )?;
    write_json(out, "config_echo.json", &cfg)?;
    println!(
        "fitted C = {:.6}; held-out dominated: {}",
        outcome.calibration.fitted_c,
        outcome.all_dominated()
    );
    Ok(())
}
