//! `∇·(X ∇U) = 0` on a rectangle with `U = 0` at `t1 = 0`, `U = 1` at
//! `t1 = τ1` and zero flux across the `t2` edges, discretized by vertex-centered
//! finite volumes with harmonic-mean face conductivities.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::klmodel::FdModel;
use crate::marginal::Marginal;

const RESIDUAL_TOL: f64 = 1e-10;

/// Nodal conductivities on a tensor grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ConductivitySample {
    grid: Grid,
    values: Vec<f64>,
}

impl ConductivitySample {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        let axes = grid.axes();
        if grid.dim() != 2 || axes[0].len() < 3 || axes[1].len() < 3 {
            return Err(Error::argument(
                "conductivity needs a tensor grid of at least 3x3",
            ));
        }
        if values.len() != grid.len() {
            return Err(Error::argument(format!(
                "{} conductivity values for {} nodes",
                values.len(),
                grid.len()
            )));
        }
        if let Some(j) = values.iter().position(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::argument(format!(
                "conductivity must be positive and finite; node {j} has {}",
                values[j]
            )));
        }
        Ok(ConductivitySample { grid, values })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    fn at(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n2() + j]
    }

    fn n1(&self) -> usize {
        self.grid.axes()[0].len()
    }

    fn n2(&self) -> usize {
        self.grid.axes()[1].len()
    }

    /// Harmonic mean across the face between columns `i` and `i + 1`.
    fn face_t1(&self, i: usize, j: usize) -> f64 {
        harmonic(self.at(i, j), self.at(i + 1, j))
    }

    fn face_t2(&self, i: usize, j: usize) -> f64 {
        harmonic(self.at(i, j), self.at(i, j + 1))
    }
}

fn harmonic(a: f64, b: f64) -> f64 {
    2.0 * a * b / (a + b)
}

/// Nodal potentials on the same grid as the field.
#[derive(Debug, Clone, PartialEq)]
pub struct PotentialSample {
    grid: Grid,
    values: Vec<f64>,
    residual: f64,
}

impl PotentialSample {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Relative residual `|b - AU| / |b|` of the interior system.
    pub fn residual(&self) -> f64 {
        self.residual
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum LinearSolver {
    /// Cholesky factorization of the banded SPD matrix.
    #[default]
    BandedCholesky,
    /// Jacobi-preconditioned conjugate gradients.
    ConjugateGradient { max_iter: usize },
}

/// Apparent conductivity, literal and relative to a unit homogeneous medium.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ApparentConductivity {
    pub literal: f64,
    pub normalized: f64,
}

/// Flux into the specimen at `t1 = 0` and out at `t1 = τ1`, both per unit depth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryFluxes {
    pub left: f64,
    pub right: f64,
}

/// Sparse symmetric system over the interior columns, unknown `(i-1)·n2 + j`.
struct System {
    n: usize,
    band: usize,
    /// `diag[r]`, `east[r]` couples `r` and `r + n2`, `north[r]` couples `r` and `r + 1`.
    diag: Vec<f64>,
    east: Vec<f64>,
    north: Vec<f64>,
    rhs: Vec<f64>,
}

impl System {
    fn assemble(field: &ConductivitySample) -> System {
        let (n1, n2) = (field.n1(), field.n2());
        let axes = field.grid.axes();
        let (x, y) = (axes[0], axes[1]);
        let dual_y = dual_lengths(y);
        let dual_x = dual_lengths(x);
        let n = (n1 - 2) * n2;
        let mut s = System {
            n,
            band: n2,
            diag: vec![0.0; n],
            east: vec![0.0; n],
            north: vec![0.0; n],
            rhs: vec![0.0; n],
        };
        for i in 1..n1 - 1 {
            for j in 0..n2 {
                let r = (i - 1) * n2 + j;
                // t1 faces: conductance = k · face length / spacing
                let west = field.face_t1(i - 1, j) * dual_y[j] / (x[i] - x[i - 1]);
                let east = field.face_t1(i, j) * dual_y[j] / (x[i + 1] - x[i]);
                s.diag[r] += west + east;
                if i == n1 - 2 {
                    s.rhs[r] += east;
                } else {
                    s.east[r] = -east;
                }
                // U = 0 on the west boundary adds nothing to the rhs.
                if j + 1 < n2 {
                    let north = field.face_t2(i, j) * dual_x[i] / (y[j + 1] - y[j]);
                    s.diag[r] += north;
                    s.diag[r + 1] += north;
                    s.north[r] = -north;
                }
            }
        }
        s
    }

    fn apply(&self, u: &[f64], out: &mut [f64]) {
        let m = self.band;
        for r in 0..self.n {
            let mut v = self.diag[r] * u[r];
            if r + 1 < self.n {
                v += self.north[r] * u[r + 1];
            }
            if r >= 1 {
                v += self.north[r - 1] * u[r - 1];
            }
            if r + m < self.n {
                v += self.east[r] * u[r + m];
            }
            if r >= m {
                v += self.east[r - m] * u[r - m];
            }
            out[r] = v;
        }
    }

    fn entry(&self, r: usize, c: usize) -> f64 {
        // r >= c within the band
        match r - c {
            0 => self.diag[r],
            1 => self.north[c],
            d if d == self.band => self.east[c],
            _ => 0.0,
        }
    }

    fn relative_residual(&self, u: &[f64]) -> f64 {
        let mut au = vec![0.0; self.n];
        self.apply(u, &mut au);
        norm(
            &au.iter()
                .zip(&self.rhs)
                .map(|(a, b)| b - a)
                .collect::<Vec<_>>(),
        ) / norm(&self.rhs)
    }

    fn solve_banded(&self) -> Result<Vec<f64>> {
        let (n, p) = (self.n, self.band);
        // l[r * (p + 1) + k] holds L(r, r - k).
        let mut l = vec![0.0; n * (p + 1)];
        for r in 0..n {
            let start = r.saturating_sub(p);
            for c in start..=r {
                let mut s = self.entry(r, c);
                let kstart = start.max(c.saturating_sub(p));
                for k in kstart..c {
                    s -= l[r * (p + 1) + (r - k)] * l[c * (p + 1) + (c - k)];
                }
                if r == c {
                    if !(s > 0.0) {
                        return Err(Error::numerical(
                            "banded Cholesky hit a non-positive pivot",
                            vec![format!("row {r}"), format!("pivot {s:e}")],
                        ));
                    }
                    l[r * (p + 1)] = s.sqrt();
                } else {
                    l[r * (p + 1) + (r - c)] = s / l[c * (p + 1)];
                }
            }
        }
        let mut y = self.rhs.clone();
        for r in 0..n {
            let mut s = y[r];
            for c in r.saturating_sub(p)..r {
                s -= l[r * (p + 1) + (r - c)] * y[c];
            }
            y[r] = s / l[r * (p + 1)];
        }
        for r in (0..n).rev() {
            let mut s = y[r];
            for c in r + 1..(r + p + 1).min(n) {
                s -= l[c * (p + 1) + (c - r)] * y[c];
            }
            y[r] = s / l[r * (p + 1)];
        }
        Ok(y)
    }

    fn solve_cg(&self, max_iter: usize) -> Result<Vec<f64>> {
        let n = self.n;
        let mut u = vec![0.0; n];
        let mut r = self.rhs.clone();
        let z: Vec<f64> = r.iter().zip(&self.diag).map(|(a, d)| a / d).collect();
        let mut p = z.clone();
        let mut rz = dot(&r, &z);
        let b_norm = norm(&self.rhs);
        let mut history = Vec::new();
        let mut ap = vec![0.0; n];
        for it in 0..max_iter {
            self.apply(&p, &mut ap);
            let alpha = rz / dot(&p, &ap);
            for k in 0..n {
                u[k] += alpha * p[k];
                r[k] -= alpha * ap[k];
            }
            let rel = norm(&r) / b_norm;
            if it % 50 == 0 {
                history.push(format!("iter {it}: {rel:.3e}"));
            }
            if rel < 0.1 * RESIDUAL_TOL {
                return Ok(u);
            }
            let z: Vec<f64> = r.iter().zip(&self.diag).map(|(a, d)| a / d).collect();
            let rz_new = dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            for k in 0..n {
                p[k] = z[k] + beta * p[k];
            }
        }
        history.push(format!("final: {:.3e}", norm(&r) / b_norm));
        Err(Error::numerical(
            format!("conjugate gradients did not converge in {max_iter} iterations"),
            history,
        ))
    }
}

fn dual_lengths(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    (0..n)
        .map(|j| {
            let lo = if j == 0 {
                x[0]
            } else {
                0.5 * (x[j - 1] + x[j])
            };
            let hi = if j + 1 == n {
                x[n - 1]
            } else {
                0.5 * (x[j] + x[j + 1])
            };
            hi - lo
        })
        .collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn solve_conductivity(field: &ConductivitySample) -> Result<PotentialSample> {
    solve_conductivity_with(field, LinearSolver::default())
}

pub fn solve_conductivity_with(
    field: &ConductivitySample,
    solver: LinearSolver,
) -> Result<PotentialSample> {
    let sys = System::assemble(field);
    let interior = match solver {
        LinearSolver::BandedCholesky => sys.solve_banded()?,
        LinearSolver::ConjugateGradient { max_iter } => sys.solve_cg(max_iter)?,
    };
    let residual = sys.relative_residual(&interior);
    if !(residual < RESIDUAL_TOL) {
        return Err(Error::numerical(
            "potential solve missed the residual tolerance",
            vec![format!("relative residual {residual:.3e}")],
        ));
    }
    let (n1, n2) = (field.n1(), field.n2());
    let mut values = vec![0.0; n1 * n2];
    values[(n1 - 1) * n2..].iter_mut().for_each(|v| *v = 1.0);
    values[n2..(n1 - 1) * n2].copy_from_slice(&interior);
    Ok(PotentialSample {
        grid: field.grid.clone(),
        values,
        residual,
    })
}

fn check_pair(field: &ConductivitySample, potential: &PotentialSample) -> Result<()> {
    if !field.grid.approx_eq(&potential.grid) {
        return Err(Error::argument(
            "field and potential live on different grids",
        ));
    }
    Ok(())
}

/// `∫ X ∂U/∂t1 dt1` per row by the midpoint rule on face fluxes, then the
/// trapezoid rule in `t2`, divided by `τ2`.
fn literal_apparent(field: &ConductivitySample, u: &[f64]) -> f64 {
    let (n1, n2) = (field.n1(), field.n2());
    let y = field.grid.axes()[1];
    let wy = crate::grid::trapezoid_axis(y);
    let tau2 = y[n2 - 1] - y[0];
    let mut total = 0.0;
    for j in 0..n2 {
        let row: f64 = (0..n1 - 1)
            .map(|i| field.face_t1(i, j) * (u[(i + 1) * n2 + j] - u[i * n2 + j]))
            .sum();
        total += wy[j] * row;
    }
    total / tau2
}

pub fn apparent_conductivity(
    field: &ConductivitySample,
    potential: &PotentialSample,
) -> Result<ApparentConductivity> {
    check_pair(field, potential)?;
    let literal = literal_apparent(field, &potential.values);
    let unit = ConductivitySample {
        grid: field.grid.clone(),
        values: vec![1.0; field.values.len()],
    };
    let x = field.grid.axes()[0];
    let tau1 = x[x.len() - 1] - x[0];
    let affine: Vec<f64> = field
        .grid
        .points()
        .iter()
        .map(|p| (p[0] - x[0]) / tau1)
        .collect();
    let reference = literal_apparent(&unit, &affine);
    Ok(ApparentConductivity {
        literal,
        normalized: literal / reference,
    })
}

/// Discrete fluxes through the Dirichlet edges.
pub fn boundary_fluxes(
    field: &ConductivitySample,
    potential: &PotentialSample,
) -> Result<BoundaryFluxes> {
    check_pair(field, potential)?;
    let (n1, n2) = (field.n1(), field.n2());
    let axes = field.grid.axes();
    let (x, y) = (axes[0], axes[1]);
    let dual_y = dual_lengths(y);
    let u = &potential.values;
    let mut left = 0.0;
    let mut right = 0.0;
    for j in 0..n2 {
        left += field.face_t1(0, j) * dual_y[j] * (u[n2 + j] - u[j]) / (x[1] - x[0]);
        right +=
            field.face_t1(n1 - 2, j) * dual_y[j] * (u[(n1 - 1) * n2 + j] - u[(n1 - 2) * n2 + j])
                / (x[n1 - 1] - x[n1 - 2]);
    }
    Ok(BoundaryFluxes { left, right })
}

/// Solve and evaluate in one step.
pub fn apparent_of_field(field: &ConductivitySample) -> Result<ApparentConductivity> {
    let u = solve_conductivity(field)?;
    apparent_conductivity(field, &u)
}

/// Apparent conductivities of `α + (β-α) F⁻¹∘Φ(G_d)` for every sample of an
/// FD model of `G`, in sample order.
pub fn apparent_conductivity_fd(
    model: &FdModel,
    marginal: &Marginal,
    d: usize,
) -> Result<Vec<ApparentConductivity>> {
    let model = model.with_levels(&[d])?;
    let grid = model.source().grid().clone();
    (0..model.n_samples())
        .into_par_iter()
        .map(|s| {
            let g = model.reconstruct(s, 0)?;
            let x = g.iter().map(|z| marginal.from_gaussian(*z)).collect();
            apparent_of_field(&ConductivitySample::new(grid.clone(), x)?)
        })
        .collect()
}
