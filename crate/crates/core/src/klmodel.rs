//! Finite-dimensional models `X_d = m + Σ_{k≤d} Z_k φ_k` built by projecting
//! sample paths on spectral bases.

use std::sync::Arc;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::ensemble::PathEnsemble;
use crate::error::{Error, Result};
use crate::grid::{embed_nodes, list_indices};
use crate::kernels::SpectralBasis;

#[derive(Debug, Clone)]
struct ComponentFit {
    basis: Arc<SpectralBasis>,
    /// Basis modes on the ensemble grid, one column per projected mode.
    modes: DMatrix<f64>,
    mean: Vec<f64>,
}

/// Paired FD model of an ensemble.
#[derive(Debug, Clone)]
pub struct FdModel {
    source: Arc<PathEnsemble>,
    fits: Vec<ComponentFit>,
    levels: Vec<usize>,
    projected: Vec<usize>,
    /// `[sample][component][k]`, padded to the largest projected count.
    coefficients: Arc<Vec<f64>>,
    stride: usize,
}

impl FdModel {
    /// Projection of zero-mean paths on the leading `levels[c]` modes.
    pub fn project(
        ensemble: Arc<PathEnsemble>,
        bases: Vec<Arc<SpectralBasis>>,
        levels: &[usize],
    ) -> Result<FdModel> {
        let means = vec![Vec::new(); bases.len()];
        FdModel::project_centered(ensemble, bases, levels, means)
    }

    /// Projection of `X - m`, with `means[c]` the mean profile of component
    /// `c` on the ensemble grid (an empty vector means zero).
    pub fn project_centered(
        ensemble: Arc<PathEnsemble>,
        bases: Vec<Arc<SpectralBasis>>,
        levels: &[usize],
        means: Vec<Vec<f64>>,
    ) -> Result<FdModel> {
        let nc = ensemble.n_components();
        if bases.len() != nc || levels.len() != nc || means.len() != nc {
            return Err(Error::argument(format!(
                "{nc} components need as many bases, levels and means (got {}, {}, {})",
                bases.len(),
                levels.len(),
                means.len()
            )));
        }
        let n = ensemble.n_nodes();
        let mut fits = Vec::with_capacity(nc);
        let mut weights = Vec::with_capacity(nc);
        for (c, ((basis, &d), mean)) in bases.into_iter().zip(levels).zip(means).enumerate() {
            if d == 0 || d > basis.n_modes() {
                return Err(Error::argument(format!(
                    "component {c}: level {d} outside 1..={}",
                    basis.n_modes()
                )));
            }
            let mean = if mean.is_empty() { vec![0.0; n] } else { mean };
            if mean.len() != n {
                return Err(Error::argument(format!(
                    "component {c}: mean profile has {} values for {n} nodes",
                    mean.len()
                )));
            }
            let (modes, w) = modes_for(&basis, &ensemble)?;
            fits.push(ComponentFit {
                modes: modes.columns(0, d).into_owned(),
                basis,
                mean,
            });
            weights.push(w);
        }
        let stride = *levels.iter().max().expect("nonempty");
        // Weighted modes so each coefficient is a plain dot product.
        let weighted: Vec<DMatrix<f64>> = fits
            .iter()
            .zip(&weights)
            .map(|(f, w)| {
                let mut m = f.modes.clone();
                for (j, wj) in w.iter().enumerate() {
                    m.row_mut(j).scale_mut(*wj);
                }
                m
            })
            .collect();
        let per_sample: Vec<Vec<f64>> = (0..ensemble.n_samples())
            .into_par_iter()
            .map(|s| {
                let mut out = vec![0.0; nc * stride];
                let mut centered = vec![0.0; n];
                for (c, fit) in fits.iter().enumerate() {
                    for ((x, p), m) in centered.iter_mut().zip(ensemble.path(s, c)).zip(&fit.mean) {
                        *x = p - m;
                    }
                    let wm = &weighted[c];
                    for k in 0..wm.ncols() {
                        out[c * stride + k] = dot(wm.column(k).as_slice(), &centered);
                    }
                }
                out
            })
            .collect();
        Ok(FdModel {
            source: ensemble,
            levels: levels.to_vec(),
            projected: levels.to_vec(),
            fits,
            coefficients: Arc::new(per_sample.concat()),
            stride,
        })
    }

    pub fn source(&self) -> &Arc<PathEnsemble> {
        &self.source
    }

    pub fn n_samples(&self) -> usize {
        self.source.n_samples()
    }

    pub fn n_components(&self) -> usize {
        self.fits.len()
    }

    pub fn levels(&self) -> &[usize] {
        &self.levels
    }

    pub fn basis(&self, c: usize) -> &Arc<SpectralBasis> {
        &self.fits[c].basis
    }

    pub fn mean_profile(&self, c: usize) -> &[f64] {
        &self.fits[c].mean
    }

    /// Same coefficients, lower truncation levels.
    pub fn with_levels(&self, levels: &[usize]) -> Result<FdModel> {
        if levels.len() != self.n_components() {
            return Err(Error::argument("one level per component is required"));
        }
        for (c, (&d, &p)) in levels.iter().zip(&self.projected).enumerate() {
            if d == 0 || d > p {
                return Err(Error::argument(format!(
                    "component {c}: level {d} outside the projected range 1..={p}"
                )));
            }
        }
        let mut out = self.clone();
        out.levels = levels.to_vec();
        Ok(out)
    }

    /// `Z_{c,k}` for `k < levels[c]`.
    pub fn coefficients(&self, sample: usize, c: usize) -> &[f64] {
        let start = (sample * self.n_components() + c) * self.stride;
        &self.coefficients[start..start + self.levels[c]]
    }

    /// `m + Σ z_k φ_k` on the ensemble grid for an arbitrary coefficient vector.
    pub fn synthesize(&self, c: usize, z: &[f64]) -> Result<Vec<f64>> {
        let fit = self
            .fits
            .get(c)
            .ok_or_else(|| Error::argument(format!("no component {c}")))?;
        if z.len() > fit.modes.ncols() {
            return Err(Error::argument(format!(
                "{} coefficients but only {} projected modes",
                z.len(),
                fit.modes.ncols()
            )));
        }
        let mut out = fit.mean.clone();
        for (k, zk) in z.iter().enumerate() {
            for (o, p) in out.iter_mut().zip(fit.modes.column(k).iter()) {
                *o += zk * p;
            }
        }
        Ok(out)
    }

    /// FD path of one sample at the model's levels.
    pub fn reconstruct(&self, sample: usize, c: usize) -> Result<Vec<f64>> {
        self.reconstruct_at(sample, c, self.checked_level(c)?)
    }

    pub fn reconstruct_at(&self, sample: usize, c: usize, d: usize) -> Result<Vec<f64>> {
        if sample >= self.n_samples() {
            return Err(Error::argument(format!(
                "sample {sample} out of range for {} samples",
                self.n_samples()
            )));
        }
        let p = self.checked_level(c).map(|_| self.projected[c])?;
        if d > p {
            return Err(Error::argument(format!(
                "component {c}: level {d} exceeds the {p} projected modes"
            )));
        }
        let start = (sample * self.n_components() + c) * self.stride;
        self.synthesize(c, &self.coefficients[start..start + d])
    }

    /// All FD paths, paired with the source samples.
    pub fn reconstruct_all(&self) -> Result<PathEnsemble> {
        let nc = self.n_components();
        let paths: Vec<Vec<f64>> = (0..self.n_samples())
            .into_par_iter()
            .map(|s| {
                (0..nc)
                    .flat_map(|c| self.reconstruct(s, c).expect("indices in range"))
                    .collect()
            })
            .collect();
        PathEnsemble::new(
            self.source.grid().clone(),
            self.source.labels().to_vec(),
            paths.concat(),
            self.source.seed().cloned(),
        )
    }

    /// Per-sample `sup_t max_c |X_{c,d}(t) - X_c(t)|`.
    pub fn sup_discrepancy(&self) -> Vec<f64> {
        let all: Vec<usize> = (0..self.n_components()).collect();
        self.sup_discrepancy_over(&all)
    }

    /// As [`FdModel::sup_discrepancy`] restricted to some components.
    pub fn sup_discrepancy_over(&self, components: &[usize]) -> Vec<f64> {
        (0..self.n_samples())
            .into_par_iter()
            .map(|s| {
                components
                    .iter()
                    .map(|&c| {
                        let fd = self.reconstruct(s, c).expect("indices in range");
                        fd.iter()
                            .zip(self.source.path(s, c))
                            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()))
                    })
                    .fold(0.0_f64, f64::max)
            })
            .collect()
    }

    /// Sample mean of `Z_{c,k}`.
    pub fn coefficient_mean(&self, c: usize) -> Vec<f64> {
        let d = self.levels[c];
        let mut m = vec![0.0; d];
        for s in 0..self.n_samples() {
            for (a, z) in m.iter_mut().zip(self.coefficients(s, c)) {
                *a += z;
            }
        }
        m.iter().map(|v| v / self.n_samples() as f64).collect()
    }

    /// Sample second-moment matrix `E[Z_k Z_l]` of component `c`.
    pub fn coefficient_moments(&self, c: usize) -> DMatrix<f64> {
        let d = self.levels[c];
        let mut acc = DMatrix::zeros(d, d);
        for s in 0..self.n_samples() {
            let z = nalgebra::DVector::from_column_slice(self.coefficients(s, c));
            acc += &z * z.transpose();
        }
        acc / self.n_samples() as f64
    }

    fn checked_level(&self, c: usize) -> Result<usize> {
        self.levels
            .get(c)
            .copied()
            .ok_or_else(|| Error::argument(format!("no component {c}")))
    }
}

/// Basis modes on the ensemble grid with the projection weights to use.
fn modes_for(basis: &SpectralBasis, ensemble: &PathEnsemble) -> Result<(DMatrix<f64>, Vec<f64>)> {
    let grid = ensemble.grid();
    if basis.grid().approx_eq(grid) {
        return Ok((basis.modes().clone(), basis.weights().to_vec()));
    }
    match (basis.grid().nodes(), grid.nodes()) {
        (Some(coarse), Some(fine)) => {
            embed_nodes(coarse, fine)?;
            Ok((basis.modes_on(grid)?, grid.trapezoid_weights()))
        }
        _ => {
            let mismatched: Vec<usize> = (0..basis.n_nodes().min(grid.len()))
                .filter(|&j| {
                    basis
                        .grid()
                        .point(j)
                        .iter()
                        .zip(grid.point(j))
                        .any(|(a, b)| (a - b).abs() > 1e-9)
                })
                .collect();
            Err(Error::argument(format!(
                "grid mismatch: basis has {} nodes, ensemble has {}; differing nodes {}",
                basis.n_nodes(),
                grid.len(),
                list_indices(&mismatched)
            )))
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `Σ_{d ≤ k < n_modes} λ_k φ_k(t_j)²` at node `j`.
pub fn truncation_mse(basis: &SpectralBasis, d: usize, node: usize) -> f64 {
    (d..basis.n_modes())
        .map(|k| basis.eigenvalues()[k] * basis.mode(k)[node].powi(2))
        .sum()
}

/// [`truncation_mse`] at every node.
pub fn truncation_mse_profile(basis: &SpectralBasis, d: usize) -> Vec<f64> {
    (0..basis.n_nodes())
        .map(|j| truncation_mse(basis, d, j))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Grid, Quadrature};
    use crate::kernels::{basis_on_grid, nystrom_eigendecomposition, Kernel};

    fn ou_basis(n: usize, d: usize) -> Arc<SpectralBasis> {
        let k = Kernel::ou(1.0, 0.0, 10.0).unwrap();
        Arc::new(basis_on_grid(&k, &Grid::uniform(0.0, 10.0, n).unwrap(), d).unwrap())
    }

    #[test]
    fn basis_function_roundtrip() {
        let b = ou_basis(101, 10);
        let e = PathEnsemble::from_paths(b.grid().clone(), "x", vec![b.mode(0).to_vec()], None)
            .unwrap();
        let m = FdModel::project(Arc::new(e), vec![b.clone()], &[5]).unwrap();
        let z = m.coefficients(0, 0);
        assert!((z[0] - 1.0).abs() < 1e-10);
        assert!(z[1..].iter().all(|v| v.abs() < 1e-10));
        let r = m.reconstruct(0, 0).unwrap();
        assert!(r.iter().zip(b.mode(0)).all(|(a, b)| (a - b).abs() < 1e-10));
    }

    #[test]
    fn full_basis_is_exact() {
        let b = ou_basis(41, 41);
        let path: Vec<f64> = (0..41).map(|j| (j as f64 * 0.3).sin() + 0.1).collect();
        let e = PathEnsemble::from_paths(b.grid().clone(), "x", vec![path.clone()], None).unwrap();
        let m = FdModel::project(Arc::new(e), vec![b], &[41]).unwrap();
        assert!(m.sup_discrepancy()[0] < 1e-10);
    }

    #[test]
    fn refined_grid_projection_and_mismatch() {
        let b = ou_basis(11, 5);
        let fine = Grid::uniform(0.0, 10.0, 101).unwrap();
        let e = PathEnsemble::from_paths(fine, "x", vec![vec![0.0; 101]], None).unwrap();
        let m = FdModel::project(Arc::new(e), vec![b.clone()], &[5]).unwrap();
        assert!(m.coefficients(0, 0).iter().all(|z| *z == 0.0));

        let off = Grid::uniform(0.0, 10.0, 16).unwrap();
        let e = PathEnsemble::from_paths(off, "x", vec![vec![0.0; 16]], None).unwrap();
        let err = FdModel::project(Arc::new(e), vec![b], &[5]).unwrap_err();
        assert!(err.to_string().contains("grid mismatch"), "{err}");
    }

    #[test]
    fn centering_is_added_back() {
        let b = ou_basis(21, 3);
        let mean = vec![2.5; 21];
        let e = PathEnsemble::from_paths(b.grid().clone(), "x", vec![mean.clone()], None).unwrap();
        let m = FdModel::project_centered(Arc::new(e), vec![b], &[3], vec![mean]).unwrap();
        assert!(m.coefficients(0, 0).iter().all(|z| z.abs() < 1e-14));
        assert!(m
            .reconstruct(0, 0)
            .unwrap()
            .iter()
            .all(|v| (v - 2.5).abs() < 1e-14));
    }

    #[test]
    fn truncation_mse_tail() {
        let k = Kernel::matern_like(0.1, 0.0, 50.0).unwrap();
        let b = nystrom_eigendecomposition(&k, 200, Quadrature::Trapezoid, 200).unwrap();
        for j in [0, 57, 199] {
            assert_eq!(truncation_mse(&b, 200, j), 0.0);
            assert!((truncation_mse(&b, 0, j) - 1.0).abs() < 1e-8);
            let mut prev = f64::INFINITY;
            for d in 0..=20 {
                let v = truncation_mse(&b, d, j);
                assert!(v <= prev + 1e-15);
                prev = v;
            }
        }
    }

    #[test]
    fn level_bounds() {
        let b = ou_basis(21, 3);
        let e = PathEnsemble::from_paths(b.grid().clone(), "x", vec![vec![1.0; 21]], None).unwrap();
        let e = Arc::new(e);
        assert!(FdModel::project(e.clone(), vec![b.clone()], &[4]).is_err());
        let m = FdModel::project(e, vec![b], &[3]).unwrap();
        assert!(m.with_levels(&[2]).is_ok());
        assert!(m.with_levels(&[4]).is_err());
        assert!(m.reconstruct(1, 0).is_err());
    }
}
