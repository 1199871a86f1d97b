use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{CorrelationFunction, Domain, Kernel};
use crate::error::{Error, Result};
use crate::grid::{interpolate_linear, Grid, Quadrature, NODE_TOL};
use crate::marginal::Marginal;

/// Largest node count for which dense eigensolves and factorizations are attempted.
pub const MAX_DENSE_NODES: usize = 4096;

/// Provenance of a basis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BasisSource {
    Kernel {
        kernel: Kernel,
    },
    /// Covariance of `F⁻¹∘Φ(G)` with `G` correlated by `base`.
    Translated {
        base: Kernel,
        marginal: Marginal,
        hermite_terms: usize,
    },
    AnalyticCosine {
        gamma: f64,
        tau: f64,
    },
    /// Sample covariance of an ensemble.
    Empirical {
        label: String,
        n_samples: usize,
    },
}

/// Leading eigenpairs of a covariance operator tabulated on quadrature nodes.
///
/// Columns of `modes` are eigenfunction values `φ_k(t_j)`, orthonormal under
/// the quadrature weights.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralBasis {
    eigenvalues: Vec<f64>,
    modes: DMatrix<f64>,
    grid: Grid,
    weights: Vec<f64>,
    quadrature: Quadrature,
    source: BasisSource,
    sup_sq: Vec<f64>,
    discrete_trace: f64,
}

impl SpectralBasis {
    /// Assembles a basis from tabulated parts, checking shapes and ordering.
    pub fn new(
        eigenvalues: Vec<f64>,
        modes: DMatrix<f64>,
        grid: Grid,
        weights: Vec<f64>,
        quadrature: Quadrature,
        source: BasisSource,
        discrete_trace: f64,
    ) -> Result<Self> {
        let d = eigenvalues.len();
        if d == 0 {
            return Err(Error::argument("a basis needs at least one mode"));
        }
        if modes.ncols() != d || modes.nrows() != grid.len() || weights.len() != grid.len() {
            return Err(Error::argument(format!(
                "basis shape mismatch: {} eigenvalues, modes {}x{}, {} nodes, {} weights",
                d,
                modes.nrows(),
                modes.ncols(),
                grid.len(),
                weights.len()
            )));
        }
        if eigenvalues.iter().any(|l| !(*l >= 0.0) || !l.is_finite()) {
            return Err(Error::argument(
                "eigenvalues must be finite and nonnegative",
            ));
        }
        if eigenvalues.windows(2).any(|w| w[1] > w[0]) {
            return Err(Error::argument(
                "eigenvalues must be sorted in descending order",
            ));
        }
        if modes.iter().any(|v| !v.is_finite()) {
            return Err(Error::argument("eigenfunction values must be finite"));
        }
        let sup_sq = modes
            .column_iter()
            .map(|c| c.iter().fold(0.0_f64, |m, v| m.max(v * v)))
            .collect();
        Ok(SpectralBasis {
            eigenvalues,
            modes,
            grid,
            weights,
            quadrature,
            source,
            sup_sq,
            discrete_trace,
        })
    }

    pub fn n_modes(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn n_nodes(&self) -> usize {
        self.grid.len()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// `φ_k` on the nodes (zero-based `k`).
    pub fn mode(&self, k: usize) -> &[f64] {
        let n = self.n_nodes();
        &self.modes.as_slice()[k * n..(k + 1) * n]
    }

    pub fn modes(&self) -> &DMatrix<f64> {
        &self.modes
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn quadrature(&self) -> Quadrature {
        self.quadrature
    }

    pub fn source(&self) -> &BasisSource {
        &self.source
    }

    /// `C_k = max_j φ_k(t_j)²`.
    pub fn sup_squares(&self) -> &[f64] {
        &self.sup_sq
    }

    /// Trace of the discretized operator, the quadrature value of `∫ c(t,t) dt`.
    pub fn discrete_trace(&self) -> f64 {
        self.discrete_trace
    }

    /// Leading `d` modes.
    pub fn truncated(&self, d: usize) -> Result<SpectralBasis> {
        if d == 0 || d > self.n_modes() {
            return Err(Error::argument(format!(
                "cannot truncate a {}-mode basis to {d} modes",
                self.n_modes()
            )));
        }
        SpectralBasis::new(
            self.eigenvalues[..d].to_vec(),
            self.modes.columns(0, d).into_owned(),
            self.grid.clone(),
            self.weights.clone(),
            self.quadrature,
            self.source.clone(),
            self.discrete_trace,
        )
    }

    /// `max |Φᵀ W Φ - I|`.
    pub fn orthonormality_residual(&self) -> f64 {
        let mut weighted = self.modes.clone();
        for (j, w) in self.weights.iter().enumerate() {
            weighted.row_mut(j).scale_mut(*w);
        }
        let gram = self.modes.transpose() * weighted;
        let mut worst = 0.0_f64;
        for k in 0..gram.nrows() {
            for l in 0..gram.ncols() {
                let target = if k == l { 1.0 } else { 0.0 };
                worst = worst.max((gram[(k, l)] - target).abs());
            }
        }
        worst
    }

    /// `max_{i,j} |Σ_{k<d} λ_k φ_k(t_i) φ_k(t_j) - c(t_i, t_j)|` over the nodes.
    pub fn mercer_residual<K: CorrelationFunction + ?Sized>(&self, kernel: &K, d: usize) -> f64 {
        let d = d.min(self.n_modes());
        let points = self.grid.points();
        let mut scaled = self.modes.columns(0, d).into_owned();
        for k in 0..d {
            scaled.column_mut(k).scale_mut(self.eigenvalues[k]);
        }
        let approx = &scaled * self.modes.columns(0, d).transpose();
        (0..points.len())
            .into_par_iter()
            .map(|i| {
                (0..points.len())
                    .map(|j| (approx[(i, j)] - kernel.covariance(&points[i], &points[j])).abs())
                    .fold(0.0_f64, f64::max)
            })
            .reduce(|| 0.0, f64::max)
    }

    /// Mode values on another grid: exact copy when the grids agree, linear
    /// interpolation for 1D grids inside the basis range.
    pub fn modes_on(&self, target: &Grid) -> Result<DMatrix<f64>> {
        if self.grid.approx_eq(target) {
            return Ok(self.modes.clone());
        }
        let (Some(src), Some(dst)) = (self.grid.nodes(), target.nodes()) else {
            return Err(Error::argument(
                "2D bases can only be evaluated on their own tensor grid",
            ));
        };
        let (lo, hi) = (src[0], src[src.len() - 1]);
        let slack = NODE_TOL * (1.0 + (hi - lo).abs());
        let outside: Vec<f64> = dst
            .iter()
            .copied()
            .filter(|t| *t < lo - slack || *t > hi + slack)
            .take(5)
            .collect();
        if !outside.is_empty() {
            return Err(Error::argument(format!(
                "nodes {outside:?} lie outside the basis range [{lo}, {hi}]"
            )));
        }
        let mut out = DMatrix::zeros(dst.len(), self.n_modes());
        for k in 0..self.n_modes() {
            let col = interpolate_linear(src, self.mode(k), dst);
            out.column_mut(k).copy_from_slice(&col);
        }
        Ok(out)
    }
}

/// Terms `λ_k C_k` and partial sums `S_d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniformBound {
    pub terms: Vec<f64>,
    pub partial_sums: Vec<f64>,
}

impl UniformBound {
    pub fn total(&self) -> f64 {
        self.partial_sums.last().copied().unwrap_or(0.0)
    }
}

/// Partial sums of `Σ λ_k sup φ_k²`.
pub fn uniform_bound_condition(basis: &SpectralBasis) -> UniformBound {
    let terms: Vec<f64> = basis
        .eigenvalues()
        .iter()
        .zip(basis.sup_squares())
        .map(|(l, c)| l * c)
        .collect();
    let partial_sums = terms
        .iter()
        .scan(0.0, |acc, t| {
            *acc += t;
            Some(*acc)
        })
        .collect();
    UniformBound {
        terms,
        partial_sums,
    }
}

/// Symmetric Nyström eigendecomposition on a quadrature rule over the kernel
/// domain: `n_nodes` points per axis, tensor product in 2D.
pub fn nystrom_eigendecomposition<K: CorrelationFunction + ?Sized>(
    kernel: &K,
    n_nodes: usize,
    quadrature: Quadrature,
    d: usize,
) -> Result<SpectralBasis> {
    let (grid, weights) = match kernel.domain() {
        Domain::Interval { lo, hi } => {
            let (x, w) = quadrature.rule(lo, hi, n_nodes)?;
            (Grid::line(x)?, w)
        }
        Domain::Rectangle { lo, hi } => {
            let (x1, w1) = quadrature.rule(lo[0], hi[0], n_nodes)?;
            let (x2, w2) = quadrature.rule(lo[1], hi[1], n_nodes)?;
            let w = w1
                .iter()
                .flat_map(|a| w2.iter().map(move |b| a * b))
                .collect();
            (Grid::tensor(x1, x2)?, w)
        }
    };
    nystrom_on(kernel, grid, weights, quadrature, d)
}

/// Nyström basis on the nodes of an existing grid with its trapezoid weights.
pub fn basis_on_grid<K: CorrelationFunction + ?Sized>(
    kernel: &K,
    grid: &Grid,
    d: usize,
) -> Result<SpectralBasis> {
    let (lo, hi) = grid.bounds();
    let domain = kernel.domain();
    if !domain.contains(&lo) || !domain.contains(&hi) {
        return Err(Error::argument(format!(
            "grid spanning {lo:?}..{hi:?} is not inside the kernel domain {domain}"
        )));
    }
    nystrom_on(
        kernel,
        grid.clone(),
        grid.trapezoid_weights(),
        Quadrature::Trapezoid,
        d,
    )
}

fn nystrom_on<K: CorrelationFunction + ?Sized>(
    kernel: &K,
    grid: Grid,
    weights: Vec<f64>,
    quadrature: Quadrature,
    d: usize,
) -> Result<SpectralBasis> {
    let n = grid.len();
    check_size(n, d)?;
    let points = grid.points();
    let sqrt_w: Vec<f64> = weights.iter().map(|w| w.sqrt()).collect();
    let columns: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|j| {
            (0..n)
                .map(|i| sqrt_w[i] * kernel.covariance(&points[i], &points[j]) * sqrt_w[j])
                .collect()
        })
        .collect();
    let a = DMatrix::from_iterator(n, n, columns.into_iter().flatten());
    weighted_eigenbasis(a, grid, weights, quadrature, kernel.source(), d)
}

/// Basis from a covariance matrix tabulated on `grid`, weighted by trapezoid rule.
pub fn basis_from_covariance(
    cov: &DMatrix<f64>,
    grid: Grid,
    source: BasisSource,
    d: usize,
) -> Result<SpectralBasis> {
    let n = grid.len();
    check_size(n, d)?;
    if cov.nrows() != n || cov.ncols() != n {
        return Err(Error::argument(format!(
            "covariance is {}x{} but the grid has {n} nodes",
            cov.nrows(),
            cov.ncols()
        )));
    }
    let weights = grid.trapezoid_weights();
    let sqrt_w: Vec<f64> = weights.iter().map(|w| w.sqrt()).collect();
    let a = DMatrix::from_fn(n, n, |i, j| {
        0.5 * (cov[(i, j)] + cov[(j, i)]) * sqrt_w[i] * sqrt_w[j]
    });
    weighted_eigenbasis(a, grid, weights, Quadrature::Trapezoid, source, d)
}

fn check_size(n: usize, d: usize) -> Result<()> {
    if d == 0 {
        return Err(Error::argument("d must be at least 1"));
    }
    if d > n {
        return Err(Error::argument(format!(
            "requested {d} modes from only {n} quadrature nodes"
        )));
    }
    if n > MAX_DENSE_NODES {
        return Err(Error::argument(format!(
            "{n} nodes exceed the dense limit of {MAX_DENSE_NODES}; use a coarser mesh"
        )));
    }
    Ok(())
}

/// Eigensolve of `W^{1/2} C W^{1/2}` followed by `φ = v / √w`.
fn weighted_eigenbasis(
    a: DMatrix<f64>,
    grid: Grid,
    weights: Vec<f64>,
    quadrature: Quadrature,
    source: BasisSource,
    d: usize,
) -> Result<SpectralBasis> {
    let n = a.nrows();
    if let Some(pos) = a.iter().position(|v| !v.is_finite()) {
        return Err(Error::numerical(
            "kernel matrix has non-finite entries",
            vec![format!("first at row {}, column {}", pos % n, pos / n)],
        ));
    }
    let trace = a.trace();
    let max_iter = 100 * n + 1000;
    let eig = SymmetricEigen::try_new(a, f64::EPSILON, max_iter).ok_or_else(|| {
        Error::numerical(
            "symmetric eigensolver did not converge",
            vec![
                format!("matrix size {n}"),
                format!("iteration cap {max_iter}"),
                format!("trace {trace:e}"),
            ],
        )
    })?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let mut eigenvalues = Vec::with_capacity(d);
    let mut modes = DMatrix::zeros(n, d);
    for (k, &src) in order.iter().take(d).enumerate() {
        eigenvalues.push(eig.eigenvalues[src].max(0.0));
        let mut col: Vec<f64> = eig
            .eigenvectors
            .column(src)
            .iter()
            .zip(&weights)
            .map(|(v, w)| v / w.sqrt())
            .collect();
        orient(&mut col);
        modes.column_mut(k).copy_from_slice(&col);
    }
    SpectralBasis::new(eigenvalues, modes, grid, weights, quadrature, source, trace)
}

/// Sign convention: the first non-negligible node value is positive.
pub(crate) fn orient(col: &mut [f64]) {
    let scale = col.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if let Some(first) = col.iter().find(|v| v.abs() > 1e-8 * scale) {
        if *first < 0.0 {
            col.iter_mut().for_each(|v| *v = -*v);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matern_trace_and_orthonormality() {
        let k = Kernel::matern_like(0.1, 0.0, 50.0).unwrap();
        let b = nystrom_eigendecomposition(&k, 400, Quadrature::Trapezoid, 400).unwrap();
        let sum: f64 = b.eigenvalues().iter().sum();
        assert!((sum / 50.0 - 1.0).abs() < 0.01, "trace {sum}");
        assert!(b.orthonormality_residual() < 1e-8);
        assert!(b.eigenvalues().windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn leading_mode_matches_full_solve() {
        let k = Kernel::ou(1.0, 0.0, 10.0).unwrap();
        let full = nystrom_eigendecomposition(&k, 60, Quadrature::Trapezoid, 60).unwrap();
        let one = nystrom_eigendecomposition(&k, 60, Quadrature::Trapezoid, 1).unwrap();
        assert_eq!(one.n_modes(), 1);
        assert!((one.eigenvalues()[0] - full.eigenvalues()[0]).abs() < 1e-14);
    }

    #[test]
    fn sign_convention() {
        let k = Kernel::ou(1.0, 0.0, 10.0).unwrap();
        let b = nystrom_eigendecomposition(&k, 80, Quadrature::GaussLegendre, 10).unwrap();
        for m in 0..10 {
            assert!(b.mode(m)[0] > 0.0);
        }
    }

    #[test]
    fn too_many_modes_is_an_argument_error() {
        let k = Kernel::ou(1.0, 0.0, 10.0).unwrap();
        let e = nystrom_eigendecomposition(&k, 10, Quadrature::Trapezoid, 11).unwrap_err();
        assert!(matches!(e, Error::Argument(_)));
    }

    #[test]
    fn mercer_residual_small_at_half_rank() {
        let k = Kernel::matern_like(0.1, 0.0, 50.0).unwrap();
        let b = nystrom_eigendecomposition(&k, 400, Quadrature::Trapezoid, 200).unwrap();
        assert!(b.mercer_residual(&k, 200) < 1e-2);
    }

    #[test]
    fn partial_sums_monotone() {
        let k = Kernel::ou(1.0, 0.0, 10.0).unwrap();
        let b = nystrom_eigendecomposition(&k, 100, Quadrature::Trapezoid, 30).unwrap();
        let u = uniform_bound_condition(&b);
        assert!(u.partial_sums.windows(2).all(|w| w[1] >= w[0]));
        assert!((u.partial_sums[0] - b.eigenvalues()[0] * b.sup_squares()[0]).abs() < 1e-15);
    }

    #[test]
    fn interpolated_modes_on_refined_grid() {
        let k = Kernel::ou(1.0, 0.0, 10.0).unwrap();
        let coarse = Grid::uniform(0.0, 10.0, 101).unwrap();
        let fine = Grid::uniform(0.0, 10.0, 1001).unwrap();
        let b = basis_on_grid(&k, &coarse, 5).unwrap();
        let m = b.modes_on(&fine).unwrap();
        for j in 0..=100 {
            assert!((m[(10 * j, 2)] - b.mode(2)[j]).abs() < 1e-12);
        }
        assert!(b.modes_on(&Grid::uniform(0.0, 11.0, 12).unwrap()).is_err());
    }

    #[test]
    fn tensor_basis_orthonormal() {
        let k = Kernel::gauss_2d(0.3, [0.0, 0.0], [4.0, 3.0]).unwrap();
        let b = nystrom_eigendecomposition(&k, 15, Quadrature::Trapezoid, 20).unwrap();
        assert_eq!(b.n_nodes(), 225);
        assert!(b.orthonormality_residual() < 1e-8);
        assert!((b.discrete_trace() - 12.0).abs() < 1e-9);
    }
}
