use std::sync::Arc;

use fdmodels::config::{preset, Study};
use fdmodels::kernels::{analytic_cosine_basis, basis_on_grid, nystrom_eigendecomposition};
use fdmodels::klmodel::FdModel;
use fdmodels::pde::{apparent_conductivity_fd, apparent_of_field, ConductivitySample};
use fdmodels::samplers::{sample_gaussian_field_2d, sample_gaussian_process, translation_apply};
use fdmodels::studies::run_study;
use fdmodels::{Grid, Kernel, Marginal, Quadrature, SeededRng};

fn in_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .unwrap()
        .install(f)
}

#[test]
fn cosine_eigenfunctions_match_closed_form() {
    let k = Kernel::cosine_example(1.0, 5.0).unwrap();
    let num = nystrom_eigendecomposition(&k, 401, Quadrature::Trapezoid, 6).unwrap();
    let exact = analytic_cosine_basis(1.0, 5.0, 6, 401).unwrap();
    for m in 0..6 {
        let err = num
            .mode(m)
            .iter()
            .zip(exact.mode(m))
            .fold(0.0_f64, |a, (x, y)| a.max((x - y).abs()));
        assert!(err < 5e-3, "mode {m}: {err}");
    }
}

#[test]
fn full_basis_reconstructs_translated_paths() {
    let k = Kernel::matern_like(0.1, 0.0, 20.0).unwrap();
    let grid = Grid::with_step(0.0, 20.0, 0.1).unwrap();
    let g = sample_gaussian_process(&k, &grid, 20, SeededRng::new(3, 0), 1).unwrap();
    let m = Marginal::Gumbel {
        location: 0.0,
        scale: 1.0,
    };
    let x = translation_apply(&m, &g).unwrap();
    let mean = vec![m.mean(); grid.len()];
    let mut centered_cov = nalgebra::DMatrix::zeros(grid.len(), grid.len());
    for s in 0..x.n_samples() {
        let v =
            nalgebra::DVector::from_iterator(grid.len(), x.path(s, 0).iter().map(|v| v - mean[0]));
        centered_cov += &v * v.transpose();
    }
    let basis = Arc::new(
        fdmodels::kernels::basis_from_covariance(
            &(centered_cov / x.n_samples() as f64),
            grid.clone(),
            fdmodels::kernels::BasisSource::Empirical {
                label: "X".into(),
                n_samples: x.n_samples(),
            },
            grid.len(),
        )
        .unwrap(),
    );
    let model =
        FdModel::project_centered(Arc::new(x), vec![basis], &[grid.len()], vec![mean]).unwrap();
    let worst = model.sup_discrepancy().into_iter().fold(0.0, f64::max);
    assert!(worst < 1e-8, "{worst}");
}

#[test]
fn full_basis_conductivity_matches_target() {
    let grid = Grid::tensor_uniform([0.0, 0.0], [4.0, 3.0], [9, 7]).unwrap();
    let k = Kernel::gauss_2d(0.7, [0.0, 0.0], [4.0, 3.0]).unwrap();
    let g = Arc::new(sample_gaussian_field_2d(&k, &grid, 4, SeededRng::new(5, 0)).unwrap());
    let basis = Arc::new(basis_on_grid(&k, &grid, grid.len()).unwrap());
    let model = FdModel::project(g.clone(), vec![basis], &[grid.len()]).unwrap();
    let m = Marginal::ScaledBeta {
        p: 0.5,
        q: 1.5,
        lower: 1.0,
        upper: 20.0,
    };
    let fd = apparent_conductivity_fd(&model, &m, grid.len()).unwrap();
    for (s, a) in fd.iter().enumerate() {
        let x = g.path(s, 0).iter().map(|z| m.from_gaussian(*z)).collect();
        let target = apparent_of_field(&ConductivitySample::new(grid.clone(), x).unwrap()).unwrap();
        assert!((a.normalized - target.normalized).abs() < 1e-6);
        assert!((a.literal - target.literal).abs() < 1e-6);
    }
}

#[test]
fn sampling_is_independent_of_thread_count() {
    let k = Kernel::matern_like(0.1, 0.0, 50.0).unwrap();
    let grid = Grid::with_step(0.0, 50.0, 0.05).unwrap();
    let run = || sample_gaussian_process(&k, &grid, 40, SeededRng::new(9, 2), 10).unwrap();
    let a = in_pool(1, run);
    let b = in_pool(4, run);
    assert_eq!(a.values(), b.values());
    let prefix = in_pool(2, || {
        sample_gaussian_process(&k, &grid, 10, SeededRng::new(9, 2), 10).unwrap()
    });
    assert_eq!(prefix.values(), a.select(0..10).unwrap().values());
}

#[test]
fn small_study_is_reproducible_and_consistent() {
    let mut cfg = preset("example2_input").unwrap();
    cfg.n_samples = 40;
    if let Study::Example2Input(p) = &mut cfg.study {
        p.tau = 4.0;
    }
    let a = in_pool(1, || run_study(&cfg, cfg.n_samples).unwrap());
    let b = in_pool(3, || run_study(&cfg, cfg.n_samples).unwrap());
    assert_eq!(a.summary, b.summary);
    assert!(a.summary.checks.iter().all(|c| c.holds == c.total));
    let dir = tempfile::tempdir().unwrap();
    let files = a.write(dir.path()).unwrap();
    assert!(files.iter().any(|f| f == "summary.json"));
    let back: fdmodels::studies::Summary =
        fdmodels::io::read_json(&dir.path().join("summary.json")).unwrap();
    assert_eq!(back, a.summary);
}
