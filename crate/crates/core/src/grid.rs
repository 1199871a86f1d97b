//! Index sets for paths and fields: ordered 1D node lists and 2D tensor grids,
//! together with the quadrature rules used on them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance used when comparing node coordinates.
pub const NODE_TOL: f64 = 1e-9;

/// Nodes of a path (1D) or of a field (2D tensor product).
///
/// Tensor grids are stored t1-major: node `(i1, i2)` has flat index
/// `i1 * t2.len() + i2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Grid {
    Line { nodes: Vec<f64> },
    Tensor { t1: Vec<f64>, t2: Vec<f64> },
}

impl Grid {
    pub fn line(nodes: Vec<f64>) -> Result<Self> {
        check_axis(&nodes, "nodes")?;
        Ok(Grid::Line { nodes })
    }

    pub fn tensor(t1: Vec<f64>, t2: Vec<f64>) -> Result<Self> {
        check_axis(&t1, "t1")?;
        check_axis(&t2, "t2")?;
        Ok(Grid::Tensor { t1, t2 })
    }

    /// `n_nodes` equally spaced nodes on `[lo, hi]`, endpoints included.
    pub fn uniform(lo: f64, hi: f64, n_nodes: usize) -> Result<Self> {
        Ok(Grid::Line {
            nodes: uniform_axis(lo, hi, n_nodes)?,
        })
    }

    /// Uniform grid on `[lo, hi]` with spacing `step`; the span must be a
    /// whole number of steps.
    pub fn with_step(lo: f64, hi: f64, step: f64) -> Result<Self> {
        let n = intervals_for(lo, hi, step)?;
        Grid::uniform(lo, hi, n + 1)
    }

    pub fn tensor_uniform(lo: [f64; 2], hi: [f64; 2], n_nodes: [usize; 2]) -> Result<Self> {
        Ok(Grid::Tensor {
            t1: uniform_axis(lo[0], hi[0], n_nodes[0])?,
            t2: uniform_axis(lo[1], hi[1], n_nodes[1])?,
        })
    }

    pub fn dim(&self) -> usize {
        match self {
            Grid::Line { .. } => 1,
            Grid::Tensor { .. } => 2,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Grid::Line { nodes } => nodes.len(),
            Grid::Tensor { t1, t2 } => t1.len() * t2.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Axis coordinates; one axis for a line, two for a tensor grid.
    pub fn axes(&self) -> Vec<&[f64]> {
        match self {
            Grid::Line { nodes } => vec![nodes.as_slice()],
            Grid::Tensor { t1, t2 } => vec![t1.as_slice(), t2.as_slice()],
        }
    }

    /// Line nodes; `None` for tensor grids.
    pub fn nodes(&self) -> Option<&[f64]> {
        match self {
            Grid::Line { nodes } => Some(nodes),
            Grid::Tensor { .. } => None,
        }
    }

    /// Coordinates of node `j` (length 1 or 2).
    pub fn point(&self, j: usize) -> Vec<f64> {
        match self {
            Grid::Line { nodes } => vec![nodes[j]],
            Grid::Tensor { t1, t2 } => {
                let n2 = t2.len();
                vec![t1[j / n2], t2[j % n2]]
            }
        }
    }

    pub fn points(&self) -> Vec<Vec<f64>> {
        (0..self.len()).map(|j| self.point(j)).collect()
    }

    /// Lower and upper corners of the bounding box.
    pub fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
        let axes = self.axes();
        (
            axes.iter().map(|a| a[0]).collect(),
            axes.iter().map(|a| a[a.len() - 1]).collect(),
        )
    }

    /// Composite trapezoid weights (tensor products of the axis weights in 2D).
    pub fn trapezoid_weights(&self) -> Vec<f64> {
        match self {
            Grid::Line { nodes } => trapezoid_axis(nodes),
            Grid::Tensor { t1, t2 } => {
                let w1 = trapezoid_axis(t1);
                let w2 = trapezoid_axis(t2);
                w1.iter()
                    .flat_map(|a| w2.iter().map(move |b| a * b))
                    .collect()
            }
        }
    }

    /// Common spacing of a uniform 1D grid.
    pub fn uniform_step(&self) -> Result<f64> {
        let nodes = self
            .nodes()
            .ok_or_else(|| Error::argument("expected a 1D grid"))?;
        if nodes.len() < 2 {
            return Err(Error::argument("a uniform grid needs at least two nodes"));
        }
        let step = (nodes[nodes.len() - 1] - nodes[0]) / (nodes.len() - 1) as f64;
        let bad: Vec<usize> = nodes
            .windows(2)
            .enumerate()
            .filter(|(_, w)| ((w[1] - w[0]) - step).abs() > NODE_TOL * step.abs().max(1.0))
            .map(|(i, _)| i)
            .collect();
        if !bad.is_empty() {
            return Err(Error::argument(format!(
                "grid is not uniform; irregular intervals start at nodes {}",
                list_indices(&bad)
            )));
        }
        Ok(step)
    }

    /// Every `stride`-th node of a 1D grid. The last node must be kept.
    pub fn thinned(&self, stride: usize) -> Result<Grid> {
        let nodes = self
            .nodes()
            .ok_or_else(|| Error::argument("thinning applies to 1D grids"))?;
        if stride == 0 || (nodes.len() - 1) % stride != 0 {
            return Err(Error::argument(format!(
                "stride {stride} does not divide the {} intervals of the grid",
                nodes.len() - 1
            )));
        }
        Ok(Grid::Line {
            nodes: nodes.iter().step_by(stride).copied().collect(),
        })
    }

    pub fn approx_eq(&self, other: &Grid) -> bool {
        let (a, b) = (self.axes(), other.axes());
        a.len() == b.len()
            && a.iter()
                .zip(&b)
                .all(|(x, y)| x.len() == y.len() && x.iter().zip(*y).all(|(p, q)| close(*p, *q)))
    }
}

/// Quadrature rule used to discretize integral operators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Quadrature {
    #[default]
    Trapezoid,
    GaussLegendre,
}

impl Quadrature {
    /// Nodes and weights of the rule on `[lo, hi]`.
    pub fn rule(self, lo: f64, hi: f64, n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
        match self {
            Quadrature::Trapezoid => {
                let nodes = uniform_axis(lo, hi, n)?;
                let w = trapezoid_axis(&nodes);
                Ok((nodes, w))
            }
            Quadrature::GaussLegendre => {
                if n == 0 || !(hi > lo) {
                    return Err(Error::argument("Gauss-Legendre needs n >= 1 and lo < hi"));
                }
                let (x, w) = gauss_legendre(n);
                let half = 0.5 * (hi - lo);
                let mid = 0.5 * (hi + lo);
                Ok((
                    x.iter().map(|x| mid + half * x).collect(),
                    w.iter().map(|w| half * w).collect(),
                ))
            }
        }
    }
}

/// Gauss-Legendre nodes (ascending) and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // Tricomi's initial guess, refined by Newton on P_n.
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, z);
            dp = d;
            let dz = p / d;
            z -= dz;
            if dz.abs() <= 1e-15 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, z);
        dp = if d.is_finite() { d } else { dp };
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

fn legendre_with_derivative(n: usize, z: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = z;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (z * p1 - p0) / (z * z - 1.0);
    (p1, d)
}

pub fn trapezoid_axis(nodes: &[f64]) -> Vec<f64> {
    let n = nodes.len();
    let mut w = vec![0.0; n];
    for j in 0..n.saturating_sub(1) {
        let h = nodes[j + 1] - nodes[j];
        w[j] += 0.5 * h;
        w[j + 1] += 0.5 * h;
    }
    w
}

/// Piecewise-linear interpolation of `values` tabulated at ascending `nodes`.
/// Queries outside the node range are clamped to the end values.
pub fn interpolate_linear(nodes: &[f64], values: &[f64], queries: &[f64]) -> Vec<f64> {
    let n = nodes.len();
    queries
        .iter()
        .map(|&q| {
            if q <= nodes[0] {
                return values[0];
            }
            if q >= nodes[n - 1] {
                return values[n - 1];
            }
            let hi = nodes.partition_point(|&x| x <= q).min(n - 1);
            let lo = hi - 1;
            let h = nodes[hi] - nodes[lo];
            let s = (q - nodes[lo]) / h;
            values[lo] * (1.0 - s) + values[hi] * s
        })
        .collect()
}

/// For each node of `coarse`, its index in `fine`; errors list the coarse
/// nodes without a match.
pub fn embed_nodes(coarse: &[f64], fine: &[f64]) -> Result<Vec<usize>> {
    let mut idx = Vec::with_capacity(coarse.len());
    let mut missing = Vec::new();
    for (k, &c) in coarse.iter().enumerate() {
        let p = fine.partition_point(|&x| x < c);
        let hit = [p.wrapping_sub(1), p]
            .into_iter()
            .filter(|&i| i < fine.len())
            .find(|&i| close(fine[i], c));
        match hit {
            Some(i) => idx.push(i),
            None => missing.push(k),
        }
    }
    if missing.is_empty() {
        Ok(idx)
    } else {
        Err(Error::argument(format!(
            "grid mismatch: basis nodes {} are not nodes of the sample grid",
            list_indices(&missing)
        )))
    }
}

pub(crate) fn list_indices(idx: &[usize]) -> String {
    const SHOWN: usize = 8;
    let head: Vec<String> = idx.iter().take(SHOWN).map(|i| i.to_string()).collect();
    if idx.len() > SHOWN {
        format!("[{}, ... ({} total)]", head.join(", "), idx.len())
    } else {
        format!("[{}]", head.join(", "))
    }
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= NODE_TOL * a.abs().max(b.abs()).max(1.0)
}

fn uniform_axis(lo: f64, hi: f64, n: usize) -> Result<Vec<f64>> {
    if n < 2 {
        if n == 1 && lo == hi {
            return Ok(vec![lo]);
        }
        return Err(Error::argument("a uniform axis needs at least two nodes"));
    }
    if !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::argument(format!("invalid interval [{lo}, {hi}]")));
    }
    let h = (hi - lo) / (n - 1) as f64;
    let mut v: Vec<f64> = (0..n).map(|j| lo + j as f64 * h).collect();
    v[n - 1] = hi;
    Ok(v)
}

/// Number of intervals of width `step` that tile `[lo, hi]`.
pub fn intervals_for(lo: f64, hi: f64, step: f64) -> Result<usize> {
    if !(step > 0.0) || !(hi > lo) {
        return Err(Error::argument(format!(
            "invalid step {step} for interval [{lo}, {hi}]"
        )));
    }
    let n = ((hi - lo) / step).round();
    if ((hi - lo) - n * step).abs() > 1e-9 * (hi - lo) {
        return Err(Error::argument(format!(
            "step {step} does not tile [{lo}, {hi}]"
        )));
    }
    Ok(n as usize)
}

fn check_axis(v: &[f64], name: &str) -> Result<()> {
    if v.is_empty() {
        return Err(Error::argument(format!("{name}: empty axis")));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::argument(format!("{name}: non-finite coordinate")));
    }
    if let Some(k) = v.windows(2).position(|w| w[1] <= w[0]) {
        return Err(Error::argument(format!(
            "{name}: nodes must be strictly increasing (violated at index {})",
            k + 1
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trapezoid_weights_sum_to_length() {
        let g = Grid::uniform(0.0, 50.0, 401).unwrap();
        let s: f64 = g.trapezoid_weights().iter().sum();
        assert!((s - 50.0).abs() < 1e-12);
        let g2 = Grid::tensor_uniform([0.0, 0.0], [20.0, 15.0], [51, 51]).unwrap();
        let s2: f64 = g2.trapezoid_weights().iter().sum();
        assert!((s2 - 300.0).abs() < 1e-9);
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(7);
        // exact through degree 13
        let i: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(12)).sum();
        assert!((i - 2.0 / 13.0).abs() < 1e-14);
        let (x, w) = Quadrature::GaussLegendre.rule(0.0, 2.0, 5).unwrap();
        let i: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(3)).sum();
        assert!((i - 4.0).abs() < 1e-13);
    }

    #[test]
    fn gauss_legendre_large_n_weights_sum() {
        let (_, w) = gauss_legendre(400);
        assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn with_step_rejects_non_tiling() {
        assert!(Grid::with_step(0.0, 1.0, 0.3).is_err());
        assert_eq!(Grid::with_step(0.0, 50.0, 0.01).unwrap().len(), 5001);
    }

    #[test]
    fn thinning_keeps_endpoints() {
        let g = Grid::with_step(0.0, 50.0, 0.01).unwrap();
        let t = g.thinned(10).unwrap();
        assert_eq!(t.len(), 501);
        assert_eq!(t.nodes().unwrap()[500], 50.0);
        assert!(g.thinned(3).is_err());
    }

    #[test]
    fn embedding_reports_missing_nodes() {
        let fine = uniform_axis(0.0, 1.0, 11).unwrap();
        assert_eq!(
            embed_nodes(&[0.0, 0.5, 1.0], &fine).unwrap(),
            vec![0, 5, 10]
        );
        let err = embed_nodes(&[0.0, 0.55, 1.0], &fine).unwrap_err();
        assert!(err.to_string().contains("[1]"));
    }

    #[test]
    fn tensor_point_ordering() {
        let g = Grid::tensor(vec![0.0, 1.0], vec![0.0, 10.0, 20.0]).unwrap();
        assert_eq!(g.point(4), vec![1.0, 10.0]);
    }

    #[test]
    fn nonuniform_grid_detected() {
        let g = Grid::line(vec![0.0, 1.0, 2.5]).unwrap();
        assert!(g.uniform_step().is_err());
    }
}
