use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;

/// Provenance of the random numbers behind an ensemble.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedRecord {
    pub algorithm: String,
    pub seed: u64,
    pub stream: u64,
}

/// Sampled paths on a shared grid, stored sample-major:
/// `values[(s * n_components + c) * n_nodes + j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PathEnsemble {
    grid: Grid,
    n_samples: usize,
    labels: Vec<String>,
    values: Vec<f64>,
    seed: Option<SeedRecord>,
}

impl PathEnsemble {
    pub fn new(
        grid: Grid,
        labels: Vec<String>,
        values: Vec<f64>,
        seed: Option<SeedRecord>,
    ) -> Result<Self> {
        let n_nodes = grid.len();
        let nc = labels.len();
        if nc == 0 {
            return Err(Error::argument("an ensemble needs at least one component"));
        }
        if values.is_empty() || !values.len().is_multiple_of(nc * n_nodes) {
            return Err(Error::argument(format!(
                "{} values do not fill whole paths of {n_nodes} nodes x {nc} components",
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            let path = pos / n_nodes;
            return Err(Error::argument(format!(
                "non-finite value in sample {}, component {}, node {}",
                path / nc,
                path % nc,
                pos % n_nodes
            )));
        }
        Ok(PathEnsemble {
            n_samples: values.len() / (nc * n_nodes),
            grid,
            labels,
            values,
            seed,
        })
    }

    /// Builds a single-component ensemble from one path per sample.
    pub fn from_paths(
        grid: Grid,
        label: &str,
        paths: Vec<Vec<f64>>,
        seed: Option<SeedRecord>,
    ) -> Result<Self> {
        let n = grid.len();
        if let Some(bad) = paths.iter().position(|p| p.len() != n) {
            return Err(Error::argument(format!(
                "path {bad} has {} values, grid has {n} nodes",
                paths[bad].len()
            )));
        }
        PathEnsemble::new(grid, vec![label.to_string()], paths.concat(), seed)
    }

    /// Places the components of several ensembles side by side.
    pub fn stack(parts: &[&PathEnsemble]) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| Error::argument("nothing to stack"))?;
        for p in parts {
            if !p.grid.approx_eq(&first.grid) || p.n_samples != first.n_samples {
                return Err(Error::argument(
                    "stacked ensembles must share grid and sample count",
                ));
            }
        }
        let n = first.n_nodes();
        let labels: Vec<String> = parts.iter().flat_map(|p| p.labels.clone()).collect();
        let mut values = Vec::with_capacity(first.n_samples * labels.len() * n);
        for s in 0..first.n_samples {
            for p in parts {
                for c in 0..p.n_components() {
                    values.extend_from_slice(p.path(s, c));
                }
            }
        }
        let seed = first.seed.clone();
        PathEnsemble::new(first.grid.clone(), labels, values, seed)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn n_components(&self) -> usize {
        self.labels.len()
    }

    pub fn n_nodes(&self) -> usize {
        self.grid.len()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn seed(&self) -> Option<&SeedRecord> {
        self.seed.as_ref()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn path(&self, sample: usize, component: usize) -> &[f64] {
        let n = self.n_nodes();
        let start = (sample * self.n_components() + component) * n;
        &self.values[start..start + n]
    }

    /// Checked variant of [`PathEnsemble::path`].
    pub fn try_path(&self, sample: usize, component: usize) -> Result<&[f64]> {
        if sample >= self.n_samples || component >= self.n_components() {
            return Err(Error::argument(format!(
                "path ({sample}, {component}) out of range for {} samples x {} components",
                self.n_samples,
                self.n_components()
            )));
        }
        Ok(self.path(sample, component))
    }

    pub fn component_index(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    /// One component as its own ensemble.
    pub fn component(&self, c: usize) -> Result<PathEnsemble> {
        if c >= self.n_components() {
            return Err(Error::argument(format!("no component {c}")));
        }
        let values = (0..self.n_samples)
            .flat_map(|s| self.path(s, c).iter().copied())
            .collect();
        PathEnsemble::new(
            self.grid.clone(),
            vec![self.labels[c].clone()],
            values,
            self.seed.clone(),
        )
    }

    /// Samples `range` as a new ensemble, preserving order.
    pub fn select(&self, range: std::ops::Range<usize>) -> Result<PathEnsemble> {
        if range.start >= range.end || range.end > self.n_samples {
            return Err(Error::argument(format!(
                "sample range {range:?} invalid for {} samples",
                self.n_samples
            )));
        }
        let width = self.n_components() * self.n_nodes();
        PathEnsemble::new(
            self.grid.clone(),
            self.labels.clone(),
            self.values[range.start * width..range.end * width].to_vec(),
            self.seed.clone(),
        )
    }

    /// Pointwise transform of every value.
    pub fn map<F: Fn(f64) -> f64>(&self, f: F) -> Result<PathEnsemble> {
        PathEnsemble::new(
            self.grid.clone(),
            self.labels.clone(),
            self.values.iter().map(|v| f(*v)).collect(),
            self.seed.clone(),
        )
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.labels.len() {
            return Err(Error::argument("label count must match component count"));
        }
        self.labels = labels;
        Ok(self)
    }

    /// Pointwise mean over samples for one component.
    pub fn mean_path(&self, c: usize) -> Vec<f64> {
        let mut acc = vec![0.0; self.n_nodes()];
        for s in 0..self.n_samples {
            for (a, v) in acc.iter_mut().zip(self.path(s, c)) {
                *a += v;
            }
        }
        acc.iter().map(|a| a / self.n_samples as f64).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> PathEnsemble {
        let g = Grid::uniform(0.0, 1.0, 3).unwrap();
        let values = (0..12).map(|v| v as f64).collect();
        PathEnsemble::new(g, vec!["a".into(), "b".into()], values, None).unwrap()
    }

    #[test]
    fn layout() {
        let e = small();
        assert_eq!(e.n_samples(), 2);
        assert_eq!(e.path(1, 0), &[6.0, 7.0, 8.0]);
        assert_eq!(e.path(0, 1), &[3.0, 4.0, 5.0]);
        assert!(e.try_path(2, 0).is_err());
    }

    #[test]
    fn component_and_stack_roundtrip() {
        let e = small();
        let a = e.component(0).unwrap();
        let b = e.component(1).unwrap();
        assert_eq!(PathEnsemble::stack(&[&a, &b]).unwrap(), e);
    }

    #[test]
    fn rejects_nan() {
        let g = Grid::uniform(0.0, 1.0, 2).unwrap();
        let err = PathEnsemble::new(g, vec!["x".into()], vec![0.0, f64::NAN], None).unwrap_err();
        assert!(err.to_string().contains("node 1"));
    }
}
