//! End-to-end acceptance suite. Prints one PASS/FAIL line per criterion and
//! exits nonzero if a criterion outside `EXPECTED_RED` fails.

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use hkm_core::concentration::{
    mgf_dominance_check, run_tail_check, DiagonalRule, TailCase, TailCheckConfig, WeightSpec,
};
use hkm_core::experiments::{
    run_error_curve, run_sobolev_comparison, ExperimentConfig, MeanLayout,
};
use hkm_core::hilbert::{Grid, Point, SpaceSpec};
use hkm_core::linalg::min_eigenvalue;
use hkm_core::rng::{derive_seed, stream_rng};
use hkm_core::rounding::{
    brute_force_kmeans, feasible_set_identities, membership_matrix, rearrangement_bound,
    round_solution, same_partition,
};
use hkm_core::sampling::{sample_mixture, MixtureConfig, NoiseModel};
use hkm_core::sdp::{self, project_affine, project_nonneg, project_psd_trace, SolverConfig};
use hkm_core::similarity::gram;
use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

/// Criteria that fail for reasons recorded in the decisions ledger.
const EXPECTED_RED: &[(u32, &str)] = &[(
    4,
    "calibration case leaves the quadratic regime early; held-out near-gaussian tails need a smaller constant",
)];

type Projection<'a> = &'a dyn Fn(&DMatrix<f64>) -> DMatrix<f64>;
type Criterion = (u32, &'static str, fn() -> Outcome);

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn gaussian_mixture(sizes: Vec<usize>, means: Vec<Point>, seed: u64) -> MixtureConfig {
    MixtureConfig {
        cluster_sizes: sizes,
        means,
        noise: NoiseModel::GaussianIso { sigma: 1.0 },
        seed,
    }
}

fn two_means(dim: usize, delta: f64) -> Vec<Point> {
    let mut far = Point::zeros(dim);
    far.coords_mut()[0] = delta;
    vec![Point::zeros(dim), far]
}

fn relaxation_sandwich() -> Outcome {
    let solver = SolverConfig::default();
    let mut worst_gap = f64::NEG_INFINITY;
    let (mut separated, mut agree) = (0, 0);
    for i in 0..50u64 {
        let mut rng = stream_rng(derive_seed(101, &[i]), 0);
        let n = rng.random_range(4..=8);
        let well_separated = i % 2 == 0;
        let delta = if well_separated {
            rng.random_range(6.0..10.0)
        } else {
            rng.random_range(0.0..4.0)
        };
        let n1 = rng.random_range(1..n);
        let cfg = gaussian_mixture(
            vec![n1, n - n1],
            two_means(3, delta),
            derive_seed(102, &[i]),
        );
        let (x, _) = sample_mixture(&cfg).unwrap();
        let a = gram(&x, &SpaceSpec::euclidean(3)).unwrap();
        let sol = sdp::solve(&a, 2, &solver).unwrap();
        let (best, best_obj) = brute_force_kmeans(&a, 2).unwrap();
        worst_gap = worst_gap.max((best_obj - sol.objective) / a.matrix().norm());
        if well_separated {
            separated += 1;
            if same_partition(&round_solution(&sol.z_hat).unwrap(), &best) {
                agree += 1;
            }
        }
    }
    let rate = agree as f64 / separated as f64;
    outcome(
        worst_gap <= 1e-3 && rate >= 0.95,
        format!(
            "max (brute - sdp)/|A|_F = {worst_gap:.2e}; separated agreement {agree}/{separated}"
        ),
    )
}

fn iso_curve(
    k: usize,
    dim: usize,
    sizes: Vec<usize>,
    deltas: Vec<f64>,
    trials: usize,
) -> ExperimentConfig {
    ExperimentConfig {
        means: MeanLayout::Orthonormal { k, dim },
        cluster_sizes: sizes,
        n_grid: vec![],
        noise: NoiseModel::GaussianIso { sigma: 1.0 },
        space_specs: vec![SpaceSpec::euclidean(dim)],
        delta_grid: deltas,
        trials_per_cell: trials,
        solver: SolverConfig::default(),
        seed: 7,
        check_identities: false,
    }
}

fn exact_recovery() -> Outcome {
    let out = run_error_curve(&iso_curve(3, 20, vec![30, 30, 30], vec![0.0, 10.0], 50)).unwrap();
    let (null, sep) = (&out.cells[0], &out.cells[1]);
    outcome(
        sep.recovery_rate == 1.0 && null.recovery_rate <= 0.1,
        format!(
            "delta=10 rate {:.2} (snr2 {:.1}); delta=0 rate {:.2}",
            sep.recovery_rate, sep.snr2, null.recovery_rate
        ),
    )
}

fn exponential_decay() -> Outcome {
    let deltas = vec![1.5, 2.5, 3.5, 4.5, 5.5, 6.5];
    let out = run_error_curve(&iso_curve(2, 20, vec![20, 20], deltas, 50)).unwrap();
    let med: Vec<f64> = out.cells.iter().map(|c| c.median_l1_error).collect();
    let snr: Vec<f64> = out.cells.iter().map(|c| c.snr2).collect();
    let inversions = med.windows(2).filter(|w| w[1] > w[0]).count();
    let y: Vec<f64> = med.iter().map(|m| (m + 1e-6).ln()).collect();
    let (mx, my) = (mean(&snr), mean(&y));
    let sxy: f64 = snr.iter().zip(&y).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = snr.iter().map(|x| (x - mx) * (x - mx)).sum();
    let slope = sxy / sxx;
    let meds: Vec<String> = med.iter().map(|m| format!("{m:.3}")).collect();
    outcome(
        inversions <= 1 && slope < -0.01,
        format!(
            "medians [{}], inversions {inversions}, slope {slope:.4}",
            meds.join(", ")
        ),
    )
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn tail_verification() -> Outcome {
    let grid = Grid::uniform(101).unwrap();
    let kl = NoiseModel::KlProcess {
        beta: 1.0,
        d: 30,
        grid: grid.clone(),
    };
    let case = |weight| TailCase {
        weight,
        noise: kl.clone(),
        space: SpaceSpec::l2(grid.clone()),
    };
    let cfg = TailCheckConfig {
        trials: 10_000,
        seed: 2024,
        calibration: case(WeightSpec::RandomSymmetric {
            n: 20,
            seed: 1,
            diagonal: DiagonalRule::Keep,
        }),
        held_out: vec![
            case(WeightSpec::RandomSymmetric {
                n: 50,
                seed: 2,
                diagonal: DiagonalRule::Keep,
            }),
            case(WeightSpec::Identity { n: 50 }),
        ],
        upper_tail: vec![],
        chi2_check: true,
    };
    let out = run_tail_check(&cfg).unwrap();
    let c = out.calibration.fitted_c;
    let chi2 = out.chi2.unwrap();
    let violations: Vec<String> = out
        .held_out
        .iter()
        .map(|h| {
            format!(
                "{}/{}",
                h.dominance.violations.len(),
                h.dominance.checked_points
            )
        })
        .collect();
    outcome(
        c > 0.0 && out.all_dominated() && chi2.pass,
        format!(
            "fitted C {c:.4}; held-out violations {}; chi2 tail {:.5} vs {:.5} (z {:.2})",
            violations.join(", "),
            chi2.empirical,
            chi2.exact,
            chi2.z_score
        ),
    )
}

fn mgf_dominance() -> Outcome {
    let model = NoiseModel::BoundedUniform { half_width: 1.0 };
    let gamma = model.subgaussian_reference(3).unwrap();
    let grid: Vec<f64> = (0..=18).map(|i| 0.9 * i as f64 / 18.0).collect();
    let r = mgf_dominance_check(&model, &gamma, &grid, 100_000, 5).unwrap();
    outcome(
        r.max_ratio <= 1.05,
        format!("max ratio {:.4} over t in [0, 0.9]", r.max_ratio),
    )
}

fn feasible_identities() -> Outcome {
    let solver = SolverConfig::default();
    let mut failures = 0;
    let mut min_slack = f64::INFINITY;
    for i in 0..100u64 {
        let mut rng = stream_rng(derive_seed(303, &[i]), 0);
        let k = rng.random_range(2..=4);
        let sizes: Vec<usize> = (0..k).map(|_| rng.random_range(2..=6)).collect();
        let delta = rng.random_range(0.0..8.0);
        let means: Vec<Point> = (0..k)
            .map(|j| {
                let mut p = Point::zeros(5);
                p.coords_mut()[j] = delta;
                p
            })
            .collect();
        let (x, truth) =
            sample_mixture(&gaussian_mixture(sizes, means, derive_seed(304, &[i]))).unwrap();
        let a = gram(&x, &SpaceSpec::euclidean(5)).unwrap();
        let sol = sdp::solve(&a, k, &solver).unwrap();
        let (z, _) = sdp::restore_feasibility(&sol.z_hat, k).unwrap();
        let report = feasible_set_identities(&z, &membership_matrix(&truth)).unwrap();
        for c in [report.trace_bound, report.lower, report.upper] {
            min_slack = min_slack.min(c.slack);
        }
        if !report.all_pass() {
            failures += 1;
        }
    }
    outcome(
        failures == 0,
        format!("{failures}/100 instances failed; smallest inequality slack {min_slack:.3e}"),
    )
}

fn monotone_rearrangement() -> Outcome {
    let mut rng = stream_rng(404, 0);
    let (mut below, mut unequal) = (0, 0);
    for _ in 0..10_000 {
        let n = rng.random_range(1..=40);
        let a: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
        let b: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..=1.0)).collect();
        let dot: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
        if rearrangement_bound(&a, &b).unwrap() < dot - 1e-12 {
            below += 1;
        }
        // Indicator of the top-s entries.
        let s = rng.random_range(0..=n);
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| a[j].total_cmp(&a[i]));
        let mut top = vec![0.0; n];
        for &i in &order[..s] {
            top[i] = 1.0;
        }
        let top_sum: f64 = order[..s].iter().map(|&i| a[i]).sum();
        if (rearrangement_bound(&a, &top).unwrap() - top_sum).abs() > 1e-12 * (1.0 + top_sum.abs())
        {
            unequal += 1;
        }
    }
    outcome(
        below == 0 && unequal == 0,
        format!("10000 pairs: {below} below the inner product, {unequal} top-s mismatches"),
    )
}

fn random_matrix(rng: &mut impl Rng, n: usize, scale: f64) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |_, _| {
        let z: f64 = StandardNormal.sample(rng);
        scale * z
    })
}

fn projection_correctness() -> Outcome {
    let mut rng = stream_rng(505, 0);
    let mut worst_idem: f64 = 0.0;
    let mut worst_expand: f64 = 0.0;
    let mut worst_trace: f64 = 0.0;
    let mut worst_eig: f64 = 0.0;
    for _ in 0..1000 {
        let n = rng.random_range(2..=12);
        let k = rng.random_range(1..=n);
        let scale = 10f64.powf(rng.random_range(-1.0..1.0));
        let (x, y) = (
            random_matrix(&mut rng, n, scale),
            random_matrix(&mut rng, n, scale),
        );
        let (sx, sy) = ((&x + x.transpose()) * 0.5, (&y + y.transpose()) * 0.5);
        let psd = |m: &DMatrix<f64>| project_psd_trace(m, k).unwrap();
        let aff = |m: &DMatrix<f64>| project_affine(m).unwrap();
        let cases: [(Projection, &DMatrix<f64>, &DMatrix<f64>); 3] =
            [(&psd, &sx, &sy), (&aff, &x, &y), (&project_nonneg, &x, &y)];
        for (p, u, v) in cases {
            let pu = p(u);
            worst_idem = worst_idem.max((p(&pu) - &pu).norm() / pu.norm().max(1.0));
            let d = (u - v).norm();
            worst_expand = worst_expand.max((pu - p(v)).norm() / d - 1.0);
        }
        let z = psd(&sx);
        worst_trace = worst_trace.max((z.trace() - k as f64).abs());
        worst_eig = worst_eig.max(-min_eigenvalue(&z).unwrap());
    }
    outcome(
        worst_idem <= 1e-10 && worst_expand <= 1e-10 && worst_trace <= 1e-10 && worst_eig <= 1e-10,
        format!(
            "idempotence {worst_idem:.1e}, expansion {worst_expand:.1e}, trace gap {worst_trace:.1e}, negative eigenvalue {worst_eig:.1e}"
        ),
    )
}

fn sobolev_gain() -> Outcome {
    let frequency = 8;
    let g = Grid::uniform(201).unwrap();
    let cfg = ExperimentConfig {
        means: MeanLayout::HighFrequency {
            grid: g.clone(),
            frequency,
        },
        cluster_sizes: vec![20, 20],
        n_grid: vec![],
        noise: NoiseModel::KlProcess {
            beta: 2.0,
            d: 30,
            grid: g.clone(),
        },
        space_specs: vec![SpaceSpec::l2(g.clone()), SpaceSpec::sobolev(g, 1).unwrap()],
        delta_grid: vec![1.5, 1.75, 2.0, 2.25],
        trials_per_cell: 40,
        solver: SolverConfig::default(),
        seed: 9,
        check_identities: false,
    };
    let out = run_sobolev_comparison(&cfg).unwrap();
    let (l2, sob) = (out.cells_for_space(0), out.cells_for_space(1));
    let gain = (sob[0].separation / l2[0].separation).powi(2);
    let needed = 1.0 + (frequency as f64 * std::f64::consts::PI).powi(2) * 0.9;
    let Some(i) = l2
        .iter()
        .position(|c| (0.2..=0.8).contains(&c.recovery_rate))
    else {
        let rates: Vec<String> = l2
            .iter()
            .map(|c| format!("{:.2}", c.recovery_rate))
            .collect();
        return outcome(
            false,
            format!(
                "no epsilon with L2 recovery in [0.2, 0.8]: [{}]",
                rates.join(", ")
            ),
        );
    };
    outcome(
        gain >= needed && sob[i].recovery_rate >= l2[i].recovery_rate,
        format!(
            "separation gain {gain:.1} (need {needed:.1}); epsilon {}: sobolev {:.2} vs l2 {:.2}",
            l2[i].delta, sob[i].recovery_rate, l2[i].recovery_rate
        ),
    )
}

const TOY: &str = "x,y,label\n0,0.1,1\n0.2,-0.1,1\n-0.1,0,1\n3,3.1,2\n3.2,2.9,2\n2.9,3,2\n";

const CURVE: &str = r#"
schema_version = 1
kind = "error_curve"
[experiment]
means = { kind = "orthonormal", k = 2, dim = 3 }
cluster_sizes = [5, 5]
noise = { type = "gaussian_iso", sigma = 1.0 }
space_specs = [{ kind = "euclidean", dim = 3 }]
delta_grid = [0.0, 3.0, 8.0]
trials_per_cell = 10
seed = 1
"#;

const SOBOLEV: &str = r#"
schema_version = 1
kind = "sobolev_comparison"
[experiment]
means = { kind = "high_frequency", grid = { uniform = 21 }, frequency = 2 }
cluster_sizes = [5, 5]
noise = { type = "kl_process", beta = 2.0, d = 8, grid = { uniform = 21 } }
space_specs = [{ kind = "l2_grid", grid = { uniform = 21 } }, { kind = "sobolev", grid = { uniform = 21 }, order = 1 }]
delta_grid = [0.5, 2.0]
trials_per_cell = 10
seed = 2
"#;

const PHASE: &str = r#"
schema_version = 1
[experiment]
means = { kind = "orthonormal", k = 2, dim = 3 }
n_grid = [6, 10]
noise = { type = "gaussian_iso", sigma = 1.0 }
space_specs = [{ kind = "euclidean", dim = 3 }]
delta_grid = [1.0, 6.0]
trials_per_cell = 10
seed = 3
"#;

const TAIL: &str = r#"
schema_version = 1
[tail]
trials = 2000
seed = 4
[tail.calibration]
weight = { kind = "random_symmetric", n = 5, seed = 1 }
noise = { type = "gaussian_iso", sigma = 1.0 }
space = { kind = "euclidean", dim = 2 }
[[tail.held_out]]
weight = { kind = "identity", n = 4 }
noise = { type = "bounded_uniform", half_width = 1.0 }
space = { kind = "euclidean", dim = 2 }
[[tail.upper_tail]]
weight = { kind = "random_symmetric", n = 4, seed = 2, diagonal = "abs" }
noise = { type = "gaussian_iso", sigma = 1.0 }
space = { kind = "euclidean", dim = 2 }
[mgf]
noise = { type = "bounded_uniform", half_width = 1.0 }
gamma = { rows = [[1.0, 0.0], [0.0, 1.0]] }
t_grid = [0.0, 0.3, 0.6, 0.9]
trials = 2000
seed = 5
[bernstein]
model = { type = "counterexample", a_n = 3.0 }
k_max = 4
trials = 2000
seed = 6
"#;

fn csv_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                std::fs::read(&p).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

fn run_hkm(args: &[&str]) -> bool {
    Command::new(env!("CARGO_BIN_EXE_hkm"))
        .args(args)
        .env_remove("HKM_SEED")
        .output()
        .map(|o| o.status.success())
        .unwrap_or(false)
}

fn determinism() -> Outcome {
    let tmp = tempfile::TempDir::new().unwrap();
    let root = tmp.path();
    let mut mismatched = Vec::new();
    let mut compared = 0;

    let data = root.join("toy.csv");
    std::fs::write(&data, TOY).unwrap();
    let runs: Vec<_> = ["c1", "c2"]
        .iter()
        .map(|name| {
            let out = root.join(name);
            let ok = run_hkm(&[
                "cluster",
                "--data",
                data.to_str().unwrap(),
                "--k",
                "2",
                "--out",
                out.to_str().unwrap(),
            ]);
            (ok, out)
        })
        .collect();
    if !runs.iter().all(|(ok, _)| *ok) {
        return outcome(false, "cluster command failed");
    }
    let (a, b) = (csv_files(&runs[0].1), csv_files(&runs[1].1));
    compared += a.len();
    if a != b {
        mismatched.push("cluster".to_string());
    }

    for (command, name, text) in [
        ("simulate", "curve", CURVE),
        ("simulate", "sobolev", SOBOLEV),
        ("phase-diagram", "phase", PHASE),
        ("tail-check", "tail", TAIL),
    ] {
        let cfg = root.join(format!("{name}.toml"));
        std::fs::write(&cfg, text).unwrap();
        let mut outputs = Vec::new();
        for threads in ["1", "8"] {
            let out = root.join(format!("{name}_{threads}"));
            let args = [
                command,
                "--config",
                cfg.to_str().unwrap(),
                "--out",
                out.to_str().unwrap(),
                "--threads",
                threads,
            ];
            if !run_hkm(&args) {
                return outcome(
                    false,
                    format!("{command} ({name}) failed with --threads {threads}"),
                );
            }
            outputs.push(csv_files(&out));
        }
        compared += outputs[0].len();
        if outputs[0].is_empty() || outputs[0] != outputs[1] {
            mismatched.push(name.to_string());
        }
    }
    outcome(
        mismatched.is_empty(),
        format!(
            "{compared} CSV artifacts compared; mismatches: [{}]",
            mismatched.join(", ")
        ),
    )
}

fn main() {
    // `cargo test` passes harness flags; a name filter selects criteria by number.
    let filter: Vec<u32> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    let criteria: [Criterion; 10] = [
        (1, "relaxation sandwich", relaxation_sandwich),
        (2, "exact recovery", exact_recovery),
        (3, "error decay trend", exponential_decay),
        (4, "quadratic-form tail bound", tail_verification),
        (5, "MGF dominance", mgf_dominance),
        (6, "feasible-set identities", feasible_identities),
        (7, "monotone rearrangement", monotone_rearrangement),
        (8, "projection correctness", projection_correctness),
        (9, "Sobolev separation gain", sobolev_gain),
        (10, "CLI determinism", determinism),
    ];
    let mut unexpected = Vec::new();
    for (id, name, check) in criteria {
        if !filter.is_empty() && !filter.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let o = check();
        let secs = start.elapsed().as_secs_f64();
        let status = if o.pass { "PASS" } else { "FAIL" };
        let red = EXPECTED_RED.iter().find(|(r, _)| *r == id);
        let note = match (o.pass, red) {
            (false, Some((_, why))) => format!(" [expected: {why}]"),
            (true, Some(_)) => " [listed as expected red but passed]".to_string(),
            _ => String::new(),
        };
        println!(
            "criterion {id:>2} {status} {name} ({secs:.1}s): {}{note}",
            o.detail
        );
        if !o.pass && red.is_none() {
            unexpected.push(id);
        }
    }
    if !unexpected.is_empty() {
        eprintln!("unexpected failures: {unexpected:?}");
        std::process::exit(1);
    }
}
