//! Closed-form eigenpairs of `c(s,t) = (1 + e^{-2γ|s-t|})/4` on `[-τ, τ]`.
//!
//! With `c = 2γ`, odd modes are `sin(ωt)` where `ω cos ωτ + c sin ωτ = 0`.
//! Even modes carry a constant offset from the rank-one part of the kernel:
//! `cos(ωt) + B` (or `cosh(κt) + B` for the single mode above `1/(2c)`), with
//! `μ = ω²` (or `-κ²`) a root of
//!
//! `G(μ) = (c C - μ S)(μ + τ c (c² + μ)) - (c² + μ)² S`,
//!
//! `S = sin(ωτ)/ω`, `C = cos(ωτ)`, and `B = -c (c C - μ S)/(c² + μ)`.
//! Both families have eigenvalue `c / (2 (c² + μ))`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::basis::{BasisSource, SpectralBasis};
use crate::error::{Error, Result};
use crate::grid::{Grid, Quadrature};

use std::f64::consts::PI;

const ROOT_TOL: f64 = 1e-14;
const SCAN_PER_PERIOD: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeParity {
    Even,
    Odd,
}

/// One analytic eigenpair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CosineMode {
    pub parity: ModeParity,
    /// Signed squared frequency; negative on the hyperbolic branch.
    pub mu: f64,
    /// Constant offset `B` (zero for odd modes).
    pub offset: f64,
    /// L² norm of the unnormalized function.
    pub norm: f64,
    pub eigenvalue: f64,
    /// Relative residual of the characteristic equation at the returned root.
    pub residual: f64,
}

impl CosineMode {
    pub fn eval(&self, t: f64) -> f64 {
        let raw = match self.parity {
            ModeParity::Odd => (self.mu.sqrt() * t).sin(),
            ModeParity::Even if self.mu >= 0.0 => (self.mu.sqrt() * t).cos() + self.offset,
            ModeParity::Even => ((-self.mu).sqrt() * t).cosh() + self.offset,
        };
        raw / self.norm
    }
}

/// The leading `d` analytic modes, by decreasing eigenvalue.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CosineModes {
    pub gamma: f64,
    pub tau: f64,
    pub modes: Vec<CosineMode>,
}

impl CosineModes {
    pub fn solve(gamma: f64, tau: f64, d: usize) -> Result<Self> {
        if !(gamma.is_finite() && tau.is_finite() && tau > 0.0) {
            return Err(Error::argument(format!(
                "cosine example needs finite gamma and tau > 0 (got {gamma}, {tau})"
            )));
        }
        if !(gamma > 1.0 / (2.0 * tau)) {
            return Err(Error::argument(format!(
                "cosine example requires gamma > 1/(2 tau): {gamma} <= {}",
                1.0 / (2.0 * tau)
            )));
        }
        if d == 0 {
            return Err(Error::argument("d must be at least 1"));
        }
        let c = 2.0 * gamma;
        let odd = odd_roots(c, tau, d)?;
        let even = even_roots(c, tau, d)?;
        let mut modes: Vec<CosineMode> = odd
            .into_iter()
            .map(|(mu, r)| odd_mode(c, tau, mu, r))
            .chain(even.into_iter().map(|(mu, r)| even_mode(c, tau, mu, r)))
            .collect();
        modes.sort_by(|a, b| a.mu.total_cmp(&b.mu));
        modes.truncate(d);
        Ok(CosineModes { gamma, tau, modes })
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        self.modes.iter().map(|m| m.eigenvalue).collect()
    }

    /// Largest characteristic-equation residual among the returned roots.
    pub fn max_residual(&self) -> f64 {
        self.modes.iter().fold(0.0, |m, r| m.max(r.residual))
    }
}

/// Analytic basis tabulated on `n_nodes` uniform trapezoid nodes of `[-τ, τ]`.
pub fn analytic_cosine_basis(
    gamma: f64,
    tau: f64,
    d: usize,
    n_nodes: usize,
) -> Result<SpectralBasis> {
    let solved = CosineModes::solve(gamma, tau, d)?;
    let grid = Grid::uniform(-tau, tau, n_nodes)?;
    let nodes = grid.nodes().expect("line grid").to_vec();
    let mut modes = DMatrix::zeros(nodes.len(), d);
    for (k, m) in solved.modes.iter().enumerate() {
        let mut col: Vec<f64> = nodes.iter().map(|t| m.eval(*t)).collect();
        super::basis::orient(&mut col);
        modes.column_mut(k).copy_from_slice(&col);
    }
    let weights = grid.trapezoid_weights();
    SpectralBasis::new(
        solved.eigenvalues(),
        modes,
        grid,
        weights,
        Quadrature::Trapezoid,
        BasisSource::AnalyticCosine { gamma, tau },
        tau,
    )
}

fn eigenvalue(c: f64, mu: f64) -> f64 {
    c / (2.0 * (c * c + mu))
}

fn odd_mode(c: f64, tau: f64, mu: f64, residual: f64) -> CosineMode {
    let w = mu.sqrt();
    let norm_sq = tau - (2.0 * w * tau).sin() / (2.0 * w);
    CosineMode {
        parity: ModeParity::Odd,
        mu,
        offset: 0.0,
        norm: norm_sq.sqrt(),
        eigenvalue: eigenvalue(c, mu),
        residual,
    }
}

fn even_mode(c: f64, tau: f64, mu: f64, residual: f64) -> CosineMode {
    let (s, cs) = s_and_c(mu, tau);
    let offset = -c * (c * cs - mu * s) / (c * c + mu);
    // ∫ (cos ωt)² over [-τ, τ] is τ + sin(2ωτ)/(2ω); the hyperbolic analogue uses sinh.
    let square = if mu >= 0.0 {
        let w = mu.sqrt();
        tau + (2.0 * w * tau).sin() / (2.0 * w)
    } else {
        let k = (-mu).sqrt();
        tau + (2.0 * k * tau).sinh() / (2.0 * k)
    };
    let norm_sq = square + 4.0 * offset * s + 2.0 * tau * offset * offset;
    CosineMode {
        parity: ModeParity::Even,
        mu,
        offset,
        norm: norm_sq.sqrt(),
        eigenvalue: eigenvalue(c, mu),
        residual,
    }
}

/// `(sin(ωτ)/ω, cos(ωτ))` continued analytically to `μ = ω² ≤ 0`.
fn s_and_c(mu: f64, tau: f64) -> (f64, f64) {
    if mu > 0.0 {
        let w = mu.sqrt();
        ((w * tau).sin() / w, (w * tau).cos())
    } else if mu < 0.0 {
        let k = (-mu).sqrt();
        ((k * tau).sinh() / k, (k * tau).cosh())
    } else {
        (tau, 1.0)
    }
}

/// Even characteristic function with the spurious root at `μ = 0` divided out.
fn even_char(c: f64, tau: f64, mu: f64) -> f64 {
    let (s, cs) = s_and_c(mu, tau);
    let g = (c * cs - mu * s) * (mu + tau * c * (c * c + mu)) - (c * c + mu).powi(2) * s;
    g / mu
}

fn even_scale(c: f64, tau: f64, mu: f64) -> f64 {
    let (s, cs) = s_and_c(mu, tau);
    let a = (c * cs.abs() + mu.abs() * s.abs()) * (mu.abs() + tau * c * (c * c + mu.abs()));
    (a + (c * c + mu.abs()).powi(2) * s.abs()) / mu.abs()
}

fn odd_roots(c: f64, tau: f64, d: usize) -> Result<Vec<(f64, f64)>> {
    let f = |w: f64| w * (w * tau).cos() + c * (w * tau).sin();
    (1..=d)
        .map(|k| {
            let lo = (k as f64 - 0.5) * PI / tau;
            let hi = k as f64 * PI / tau;
            let w = bisect(f, lo, hi)?;
            let residual = f(w).abs() / (w + c);
            Ok((w * w, residual))
        })
        .collect()
}

fn even_roots(c: f64, tau: f64, d: usize) -> Result<Vec<(f64, f64)>> {
    let h = |mu: f64| even_char(c, tau, mu);
    let mut roots = Vec::with_capacity(d);
    // Hyperbolic branch: μ in (-c², 0).
    let n_scan = 4000;
    let lo = -c * c * (1.0 - 1e-12);
    let hi = -1e-9 * c * c;
    let mut prev = (lo, h(lo));
    for i in 1..=n_scan {
        let mu = lo + (hi - lo) * i as f64 / n_scan as f64;
        let val = h(mu);
        if val.signum() != prev.1.signum() {
            let root = bisect(h, prev.0, mu)?;
            roots.push((root, h(root).abs() / even_scale(c, tau, root)));
        }
        prev = (mu, val);
    }
    // Oscillatory branch, scanned in ω = √μ.
    let hw = |w: f64| h(w * w);
    let step = PI / (tau * SCAN_PER_PERIOD as f64);
    let max_steps = (d + 2) * SCAN_PER_PERIOD * 4 + 1000;
    let mut w_prev = 0.5 * step;
    let mut v_prev = hw(w_prev);
    let mut steps = 0;
    while roots.len() < d {
        steps += 1;
        if steps > max_steps {
            return Err(Error::numerical(
                "even-mode root scan exhausted",
                vec![format!("found {} of {d} roots", roots.len())],
            ));
        }
        let w = w_prev + step;
        let v = hw(w);
        if v.signum() != v_prev.signum() {
            let root = bisect(hw, w_prev, w)?;
            let mu = root * root;
            roots.push((mu, h(mu).abs() / even_scale(c, tau, mu)));
        }
        w_prev = w;
        v_prev = v;
    }
    Ok(roots)
}

fn bisect<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64) -> Result<f64> {
    let mut f_lo = f(lo);
    let f_hi = f(hi);
    if f_lo == 0.0 {
        return Ok(lo);
    }
    if f_hi == 0.0 {
        return Ok(hi);
    }
    if f_lo.signum() == f_hi.signum() {
        return Err(Error::numerical(
            "root bracket does not change sign",
            vec![format!("[{lo}, {hi}] -> ({f_lo}, {f_hi})")],
        ));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if (hi - lo) <= ROOT_TOL * mid.abs().max(1.0) || mid <= lo || mid >= hi {
            return Ok(mid);
        }
        let f_mid = f(mid);
        if f_mid == 0.0 {
            return Ok(mid);
        }
        if f_mid.signum() == f_lo.signum() {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn top_eigenvalues_reference() {
        let m = CosineModes::solve(1.0, 5.0, 4).unwrap();
        let l = m.eigenvalues();
        assert!((l[0] - 2.737_739_054_756_093).abs() < 1e-10);
        assert_eq!(m.modes[0].parity, ModeParity::Even);
        assert!(m.modes[0].mu < 0.0);
        assert_eq!(m.modes[1].parity, ModeParity::Odd);
        assert!((l[2] - 0.213_909_011_338_833_6).abs() < 1e-10);
        assert!(m.max_residual() < 1e-12);
    }

    #[test]
    fn eigen_equation_by_quadrature() {
        let (gamma, tau) = (1.0, 5.0);
        let m = CosineModes::solve(gamma, tau, 8).unwrap();
        let n = 20001;
        let h = 2.0 * tau / (n - 1) as f64;
        for mode in &m.modes {
            for &t in &[-4.1, 0.37, 2.9] {
                // composite Simpson on each side of the kink at s = t
                let integrand =
                    |s: f64| 0.25 * (1.0 + (-2.0 * gamma * (t - s).abs()).exp()) * mode.eval(s);
                let simpson = |a: f64, b: f64| {
                    let k = (((b - a) / h).ceil() as usize).max(2) & !1;
                    let dh = (b - a) / k as f64;
                    let mut acc = integrand(a) + integrand(b);
                    for i in 1..k {
                        acc += integrand(a + i as f64 * dh) * if i % 2 == 1 { 4.0 } else { 2.0 };
                    }
                    acc * dh / 3.0
                };
                let lhs = simpson(-tau, t) + simpson(t, tau);
                let rhs = mode.eigenvalue * mode.eval(t);
                assert!((lhs - rhs).abs() < 1e-9, "{mode:?} t={t}: {lhs} vs {rhs}");
            }
        }
    }

    #[test]
    fn rejects_small_gamma() {
        assert!(CosineModes::solve(0.1, 5.0, 3).is_err());
        assert!(CosineModes::solve(0.1, 5.0, 3)
            .unwrap_err()
            .to_string()
            .contains("gamma"));
    }

    fn max_off_diagonal(modes: &CosineModes, nodes: &[f64], weights: &[f64]) -> (f64, f64) {
        let vals: Vec<Vec<f64>> = modes
            .modes
            .iter()
            .map(|m| nodes.iter().map(|t| m.eval(*t)).collect())
            .collect();
        let (mut off, mut diag) = (0.0_f64, 0.0_f64);
        for k in 0..vals.len() {
            for l in 0..=k {
                let s: f64 = (0..nodes.len())
                    .map(|j| weights[j] * vals[k][j] * vals[l][j])
                    .sum();
                if k == l {
                    diag = diag.max((s - 1.0).abs());
                } else {
                    off = off.max(s.abs());
                }
            }
        }
        (off, diag)
    }

    #[test]
    fn closed_forms_are_orthonormal() {
        let modes = CosineModes::solve(1.0, 5.0, 12).unwrap();
        let (x, w) = Quadrature::GaussLegendre.rule(-5.0, 5.0, 1000).unwrap();
        let (off, diag) = max_off_diagonal(&modes, &x, &w);
        assert!(off < 1e-12 && diag < 1e-12, "{off} {diag}");
    }

    #[test]
    fn trapezoid_orthogonality_is_second_order() {
        // Even-even products have a nonzero endpoint-derivative jump, so the
        // trapezoid error is O(h²) and scales by 4 when h halves.
        let modes = CosineModes::solve(1.0, 5.0, 12).unwrap();
        let err = |n: usize| {
            let g = Grid::uniform(-5.0, 5.0, n).unwrap();
            max_off_diagonal(&modes, g.nodes().unwrap(), &g.trapezoid_weights()).0
        };
        let (e1, e2) = (err(1000), err(1999));
        assert!(e1 < 2e-5, "{e1}");
        assert!((e1 / e2 - 4.0).abs() < 0.2, "{e1} {e2}");
    }

    #[test]
    fn tabulated_basis_keeps_sign_convention() {
        let b = analytic_cosine_basis(1.0, 5.0, 12, 1000).unwrap();
        for k in 0..12 {
            let first = b.mode(k).iter().find(|v| v.abs() > 1e-8).unwrap();
            assert!(*first > 0.0);
        }
        assert!(b.orthonormality_residual() < 1e-4);
    }
}
