//! Ground-truth ensembles: Gaussian processes and fields, translation
//! processes, stationary Ornstein-Uhlenbeck paths and piecewise-linear
//! reference models.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ensemble::{PathEnsemble, SeedRecord};
use crate::error::{Error, Result};
use crate::grid::{interpolate_linear, Grid};
use crate::kernels::{CorrelationFunction, Kernel, KernelFamily, MAX_DENSE_NODES};
pub use crate::marginal::Marginal;

const SAMPLE_BITS: u32 = 40;

/// Seed and stream of a ChaCha20 generator.
///
/// Every sample draws from its own stream, `(stream << 40) | sample_id`, so
/// results do not depend on how samples are scheduled across threads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeededRng {
    pub seed: u64,
    pub stream: u64,
}

impl SeededRng {
    pub const ALGORITHM: &'static str = "chacha20";

    pub fn new(seed: u64, stream: u64) -> Self {
        SeededRng { seed, stream }
    }

    /// Same seed, a different stream family.
    pub fn fork(&self, offset: u64) -> Self {
        SeededRng {
            seed: self.seed,
            stream: self.stream.wrapping_add(offset) & ((1 << (64 - SAMPLE_BITS)) - 1),
        }
    }

    pub fn for_sample(&self, sample: usize) -> ChaCha20Rng {
        let mut rng = ChaCha20Rng::seed_from_u64(self.seed);
        rng.set_stream((self.stream << SAMPLE_BITS) | sample as u64);
        rng
    }

    pub fn record(&self) -> SeedRecord {
        SeedRecord {
            algorithm: Self::ALGORITHM.to_string(),
            seed: self.seed,
            stream: self.stream,
        }
    }
}

/// Draws from a zero-mean Gaussian vector with a tabulated covariance.
#[derive(Debug, Clone)]
pub struct GaussianSampler {
    grid: Grid,
    factor: DMatrix<f64>,
    jitter: f64,
}

impl GaussianSampler {
    /// Cholesky factor of `C + εI`, with `ε` raised tenfold from
    /// `1e-12·tr(C)/n` up to `1e-6·tr(C)/n` until the factorization succeeds.
    pub fn new<K: CorrelationFunction + ?Sized>(kernel: &K, grid: &Grid) -> Result<Self> {
        let n = grid.len();
        if n > MAX_DENSE_NODES {
            return Err(Error::argument(format!(
                "{n} nodes exceed the dense limit of {MAX_DENSE_NODES}; use a coarser mesh"
            )));
        }
        let (lo, hi) = grid.bounds();
        let domain = kernel.domain();
        if !domain.contains(&lo) || !domain.contains(&hi) {
            return Err(Error::argument(format!(
                "grid spanning {lo:?}..{hi:?} is not inside the kernel domain {domain}"
            )));
        }
        let points = grid.points();
        let columns: Vec<Vec<f64>> = (0..n)
            .into_par_iter()
            .map(|j| {
                (0..n)
                    .map(|i| kernel.covariance(&points[i], &points[j]))
                    .collect()
            })
            .collect();
        let cov = DMatrix::from_iterator(n, n, columns.into_iter().flatten());
        Self::from_covariance(cov, grid.clone())
    }

    pub fn from_covariance(cov: DMatrix<f64>, grid: Grid) -> Result<Self> {
        let n = cov.nrows();
        let scale = cov.trace() / n as f64;
        if !(scale > 0.0) || !scale.is_finite() {
            return Err(Error::numerical(
                "covariance has non-positive or non-finite trace",
                vec![format!("mean diagonal {scale}")],
            ));
        }
        let mut tried = Vec::new();
        let mut jitter = 1e-12 * scale;
        while jitter <= 1e-6 * scale * (1.0 + 1e-9) {
            let mut m = cov.clone();
            for i in 0..n {
                m[(i, i)] += jitter;
            }
            if let Some(ch) = Cholesky::new(m) {
                return Ok(GaussianSampler {
                    grid,
                    factor: ch.unpack(),
                    jitter,
                });
            }
            tried.push(format!("{jitter:.3e}"));
            jitter *= 10.0;
        }
        Err(Error::numerical(
            "covariance Cholesky failed at every jitter level",
            vec![
                format!("matrix size {n}"),
                format!("tried {}", tried.join(", ")),
            ],
        ))
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// Diagonal shift that made the factorization succeed.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let n = self.factor.nrows();
        let xi = DVector::from_iterator(n, (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)));
        (&self.factor * xi).as_slice().to_vec()
    }
}

/// Zero-mean Gaussian paths with covariance from a 1D kernel.
///
/// The covariance is factorized on every `thin`-th node; samples on the full
/// grid are linear interpolants of the knot values.
pub fn sample_gaussian_process<K: CorrelationFunction + ?Sized>(
    kernel: &K,
    grid: &Grid,
    n_samples: usize,
    rng: SeededRng,
    thin: usize,
) -> Result<PathEnsemble> {
    if grid.dim() != 1 || kernel.domain().dim() != 1 {
        return Err(Error::argument(
            "sample_gaussian_process needs a 1D kernel and grid",
        ));
    }
    check_samples(n_samples)?;
    let knots = grid.thinned(thin)?;
    let sampler = GaussianSampler::new(kernel, &knots)?;
    let fine = grid.nodes().expect("line grid");
    let coarse = knots.nodes().expect("line grid");
    let same = knots.len() == grid.len();
    let paths: Vec<Vec<f64>> = (0..n_samples)
        .into_par_iter()
        .map(|s| {
            let v = sampler.draw(&mut rng.for_sample(s));
            if same {
                v
            } else {
                interpolate_linear(coarse, &v, fine)
            }
        })
        .collect();
    PathEnsemble::from_paths(grid.clone(), "G", paths, Some(rng.record()))
}

/// Gaussian random fields on a tensor grid, dense Cholesky on all nodes.
pub fn sample_gaussian_field_2d(
    kernel: &Kernel,
    grid: &Grid,
    n_samples: usize,
    rng: SeededRng,
) -> Result<PathEnsemble> {
    if !matches!(kernel.family(), KernelFamily::Gauss2d { .. }) || grid.dim() != 2 {
        return Err(Error::argument(
            "sample_gaussian_field_2d needs a gauss_2d kernel and a tensor grid",
        ));
    }
    check_samples(n_samples)?;
    let sampler = GaussianSampler::new(kernel, grid)?;
    let paths: Vec<Vec<f64>> = (0..n_samples)
        .into_par_iter()
        .map(|s| sampler.draw(&mut rng.for_sample(s)))
        .collect();
    PathEnsemble::from_paths(grid.clone(), "G", paths, Some(rng.record()))
}

/// `F⁻¹∘Φ` applied pointwise.
pub fn translation_apply(marginal: &Marginal, gaussian: &PathEnsemble) -> Result<PathEnsemble> {
    marginal.validate()?;
    if let Some(v) = gaussian.values().iter().find(|v| !v.is_finite()) {
        return Err(Error::argument(format!("non-finite Gaussian input {v}")));
    }
    let values: Vec<f64> = gaussian
        .values()
        .par_iter()
        .map(|z| marginal.from_gaussian(*z))
        .collect();
    PathEnsemble::new(
        gaussian.grid().clone(),
        gaussian.labels().to_vec(),
        values,
        gaussian.seed().cloned(),
    )
}

/// Stationary OU paths with unit variance by the exact AR(1) recursion.
pub fn sample_ou(rho: f64, grid: &Grid, n_samples: usize, rng: SeededRng) -> Result<PathEnsemble> {
    if !(rho > 0.0) || !rho.is_finite() {
        return Err(Error::argument(format!(
            "ou rate must be positive, got {rho}"
        )));
    }
    check_samples(n_samples)?;
    let dt = grid.uniform_step()?;
    let a = (-rho * dt).exp();
    let b = (-(-2.0 * rho * dt).exp_m1()).sqrt();
    let n = grid.len();
    let paths: Vec<Vec<f64>> = (0..n_samples)
        .into_par_iter()
        .map(|s| {
            let mut r = rng.for_sample(s);
            let mut y = Vec::with_capacity(n);
            y.push(r.sample::<f64, _>(StandardNormal));
            for j in 1..n {
                let xi: f64 = r.sample(StandardNormal);
                y.push(a * y[j - 1] + b * xi);
            }
            y
        })
        .collect();
    PathEnsemble::from_paths(grid.clone(), "Y", paths, Some(rng.record()))
}

/// Linear interpolants between every `(n_nodes - 1)/n_intervals`-th node.
pub fn piecewise_linear_reference(fine: &PathEnsemble, n_intervals: usize) -> Result<PathEnsemble> {
    let nodes = fine
        .grid()
        .nodes()
        .ok_or_else(|| Error::argument("piecewise-linear reference needs a 1D grid"))?;
    let m = nodes.len() - 1;
    if n_intervals == 0 || m % n_intervals != 0 {
        return Err(Error::argument(format!(
            "{n_intervals} intervals do not divide the {m} grid intervals"
        )));
    }
    let stride = m / n_intervals;
    let knots: Vec<f64> = nodes.iter().step_by(stride).copied().collect();
    let mut values = Vec::with_capacity(fine.values().len());
    for s in 0..fine.n_samples() {
        for c in 0..fine.n_components() {
            let at_knots: Vec<f64> = fine.path(s, c).iter().step_by(stride).copied().collect();
            values.extend(interpolate_linear(&knots, &at_knots, nodes));
        }
    }
    PathEnsemble::new(
        fine.grid().clone(),
        fine.labels().to_vec(),
        values,
        fine.seed().cloned(),
    )
}

fn check_samples(n: usize) -> Result<()> {
    if n == 0 {
        Err(Error::argument("n_samples must be at least 1"))
    } else {
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lag_correlation(e: &PathEnsemble, i: usize, j: usize) -> f64 {
        let n = e.n_samples() as f64;
        let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
        for s in 0..e.n_samples() {
            let p = e.path(s, 0);
            sxy += p[i] * p[j];
            sxx += p[i] * p[i];
            syy += p[j] * p[j];
        }
        (sxy / n) / ((sxx / n) * (syy / n)).sqrt()
    }

    #[test]
    fn streams_are_independent_of_order() {
        let r = SeededRng::new(7, 3);
        let a: f64 = r.for_sample(5).sample(StandardNormal);
        let _ = r.for_sample(4);
        let b: f64 = r.for_sample(5).sample(StandardNormal);
        let c: f64 = r.for_sample(6).sample(StandardNormal);
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn single_node_is_standard_normal() {
        let k = Kernel::ou(1.0, 0.0, 1.0).unwrap();
        let g = Grid::line(vec![0.5]).unwrap();
        let e = sample_gaussian_process(&k, &g, 4000, SeededRng::new(1, 0), 1).unwrap();
        let v: Vec<f64> = (0..4000).map(|s| e.path(s, 0)[0]).collect();
        let mean = v.iter().sum::<f64>() / 4000.0;
        let var = v.iter().map(|x| x * x).sum::<f64>() / 4000.0;
        assert!(
            mean.abs() < 0.06 && (var - 1.0).abs() < 0.07,
            "{mean} {var}"
        );
    }

    #[test]
    fn ou_lag_one_correlation() {
        let g = Grid::uniform(0.0, 1.0, 101).unwrap();
        let e = sample_ou(1.0, &g, 4000, SeededRng::new(2, 0)).unwrap();
        let r = lag_correlation(&e, 50, 51);
        assert!((r - (-0.01_f64).exp()).abs() < 5e-3, "{r}");
        let nonuniform = Grid::line(vec![0.0, 0.1, 0.3]).unwrap();
        assert!(sample_ou(1.0, &nonuniform, 2, SeededRng::new(0, 0)).is_err());
    }

    #[test]
    fn jitter_failure_reports_levels() {
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        let err =
            GaussianSampler::from_covariance(bad, Grid::uniform(0.0, 1.0, 2).unwrap()).unwrap_err();
        assert!(err.is_numerical());
        let text = err.to_string();
        assert!(
            text.contains("1.000e-12") && text.contains("tried"),
            "{text}"
        );
    }

    #[test]
    fn reference_model_exact_at_knots() {
        let g = Grid::uniform(0.0, 1.0, 11).unwrap();
        let e = PathEnsemble::from_paths(
            g.clone(),
            "x",
            vec![(0..11).map(|j| ((j * j) as f64).sin()).collect()],
            None,
        )
        .unwrap();
        let r = piecewise_linear_reference(&e, 5).unwrap();
        for j in (0..11).step_by(2) {
            assert_eq!(r.path(0, 0)[j], e.path(0, 0)[j]);
        }
        assert_eq!(piecewise_linear_reference(&e, 10).unwrap(), e);
        assert!(piecewise_linear_reference(&e, 3).is_err());
    }

    #[test]
    fn field_cap_enforced() {
        let k = Kernel::gauss_2d(0.7, [0.0, 0.0], [20.0, 15.0]).unwrap();
        let g = Grid::tensor_uniform([0.0, 0.0], [20.0, 15.0], [70, 70]).unwrap();
        let err = sample_gaussian_field_2d(&k, &g, 1, SeededRng::new(0, 0)).unwrap_err();
        assert!(err.to_string().contains("coarser"));
    }
}
