use hkm_core::concentration::mgf_dominance_check;
use hkm_core::hilbert::{check_domination, Basis, CovarianceOp, Grid, Point, SpaceSpec};
use hkm_core::linalg::sample_covariance;
use hkm_core::sampling::{
    counterexample_variance, kl_coefficients, noise_norms, sample_counterexample, sample_mixture,
    sample_noise, MixtureConfig, NoiseModel,
};
use nalgebra::DMatrix;

fn coords(points: &[Point]) -> Vec<Vec<f64>> {
    points.iter().map(|p| p.coords().to_vec()).collect()
}

fn spd(p: usize) -> DMatrix<f64> {
    // Gershgorin keeps the spectrum above 0.4.
    DMatrix::from_fn(p, p, |i, j| match i.abs_diff(j) {
        0 => 1.0 + 0.1 * i as f64,
        1 => 0.3,
        _ => 0.0,
    })
}

#[test]
fn isotropic_covariance_is_reproduced() {
    let cfg = MixtureConfig {
        cluster_sizes: vec![5000],
        means: vec![Point::zeros(10)],
        noise: NoiseModel::GaussianIso { sigma: 1.0 },
        seed: 11,
    };
    let (x, _) = sample_mixture(&cfg).unwrap();
    let est = sample_covariance(&coords(&x), true).unwrap();
    let err = hkm_core::concentration::spectral_norm(&(est - DMatrix::identity(10, 10)));
    assert!(err < 0.1, "operator-norm error {err}");
}

#[test]
fn correlated_covariance_is_reproduced() {
    let sigma = spd(6);
    let model = NoiseModel::GaussianCov {
        cov: CovarianceOp::new(sigma.clone(), Basis::Coordinate).unwrap(),
    };
    let x = sample_noise(&model, 6, 20_000, 11, 0).unwrap();
    let est = sample_covariance(&coords(&x), true).unwrap();
    let err = hkm_core::concentration::spectral_norm(&(est - sigma));
    assert!(err < 0.1, "operator-norm error {err}");
}

#[test]
fn counterexample_variance_matches_closed_form() {
    let trials = 1_000_000;
    for (a, seed) in [(10.0, 3), (1.0 + 1e-9, 4)] {
        let y = sample_counterexample(a, trials, seed).unwrap();
        let sq: Vec<f64> = y.iter().map(|v| v * v).collect();
        let mean = sq.iter().sum::<f64>() / trials as f64;
        let var = sq.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / (trials as f64 - 1.0);
        let se = (var / trials as f64).sqrt();
        let exact = counterexample_variance(a);
        assert!(
            (mean - exact).abs() <= 3.0 * se,
            "a={a}: {mean} vs {exact} (se {se})"
        );
        if a < 1.1 {
            assert!((0.97..=1.03).contains(&mean));
        }
    }
    assert!(sample_counterexample(1.0, 10, 0).is_err());
}

#[test]
fn kl_coefficients_have_the_prescribed_variances() {
    let grid = Grid::uniform(101).unwrap();
    let model = NoiseModel::KlProcess {
        beta: 1.0,
        d: 6,
        grid: grid.clone(),
    };
    let gammas = model.kl_eigenvalues();
    let trials = 100_000;
    let x = sample_noise(&model, grid.len(), trials, 5, 0).unwrap();
    let coefs: Vec<Vec<f64>> = x
        .iter()
        .map(|p| kl_coefficients(p, &grid, 6).unwrap())
        .collect();
    for (j, &g) in gammas.iter().enumerate() {
        let var = coefs.iter().map(|c| c[j] * c[j]).sum::<f64>() / trials as f64;
        // Var of a χ²₁ average: 2γ²/N.
        let se = g * (2.0 / trials as f64).sqrt();
        assert!((var - g).abs() <= 5.0 * se, "j={}: {var} vs {g}", j + 1);
    }
    let cross = coefs.iter().map(|c| c[0] * c[1]).sum::<f64>() / trials as f64;
    assert!(cross.abs() <= 5.0 * (gammas[0] * gammas[1] / trials as f64).sqrt());
}

#[test]
fn gaussian_noise_dominates_its_own_covariance() {
    let sigma = CovarianceOp::new(spd(4), Basis::Coordinate).unwrap();
    assert!(check_domination(&sigma, &sigma, 1.0).unwrap());
    assert!(check_domination(&sigma, &sigma.scaled(0.25), 1.0).unwrap());
    assert!(!check_domination(&sigma, &sigma.scaled(0.2), 1.0).unwrap());
    let bounded = NoiseModel::BoundedUniform { half_width: 2.0 };
    let cov = bounded.covariance(3).unwrap();
    assert!(check_domination(&cov, &bounded.subgaussian_reference(3).unwrap(), 1.0).unwrap());
}

#[test]
fn bounded_noise_mgf_stays_below_hoeffding_reference() {
    let model = NoiseModel::BoundedUniform { half_width: 1.5 };
    let gamma = model.subgaussian_reference(4).unwrap();
    let limit = 0.9 / (1.5 * 1.5);
    let grid: Vec<f64> = (0..=6).map(|i| limit * i as f64 / 6.0).collect();
    let r = mgf_dominance_check(&model, &gamma, &grid, 50_000, 9).unwrap();
    assert!(r.max_ratio <= 1.0 + 1e-12, "{:?}", r.ratio);
    // Away from the singularity the Gaussian reference MGF is estimated well.
    for i in 0..4 {
        assert!((r.mgf_z[i] / r.mgf_z_exact[i] - 1.0).abs() < 0.05);
    }
}

#[test]
fn native_norms_are_closed_form_and_others_are_estimated() {
    let grid = Grid::uniform(201).unwrap();
    let model = NoiseModel::KlProcess {
        beta: 1.0,
        d: 30,
        grid: grid.clone(),
    };
    let native = noise_norms(&model, &SpaceSpec::l2(grid.clone()), 0).unwrap();
    let trace: f64 = model.kl_eigenvalues().iter().sum();
    assert!((native.trace - trace).abs() < 1e-12);
    assert!((native.op - 1.0).abs() < 1e-12);
    // Independent samples under L² estimate the same trace to a few percent.
    let est = hkm_core::sampling::empirical_norms(
        &sample_noise(&model, grid.len(), 2000, 1, 0).unwrap(),
        &SpaceSpec::l2(grid.clone()),
    )
    .unwrap();
    assert!((est.trace / trace - 1.0).abs() < 0.1);
    let sob = noise_norms(&model, &SpaceSpec::sobolev(grid, 1).unwrap(), 0).unwrap();
    assert!(sob.trace > trace);
}

#[test]
fn mixture_labels_are_contiguous_blocks() {
    let cfg = MixtureConfig {
        cluster_sizes: vec![2, 3, 1],
        means: vec![
            Point::new(vec![0.0]),
            Point::new(vec![5.0]),
            Point::new(vec![-5.0]),
        ],
        noise: NoiseModel::GaussianIso { sigma: 0.0 },
        seed: 1,
    };
    let (x, truth) = sample_mixture(&cfg).unwrap();
    assert_eq!(truth.labels(), &[1, 1, 2, 2, 2, 3]);
    assert_eq!(x[5].coords(), &[-5.0]);
}
