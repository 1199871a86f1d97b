//! Scalar special functions: the standard normal distribution, probabilists'
//! Gauss-Hermite quadrature and the inverse of the regularized incomplete beta
//! function.

use nalgebra::{DMatrix, SymmetricEigen};
use statrs::function::beta::{beta_reg, ln_beta};

use std::f64::consts::{FRAC_1_SQRT_2, PI};

/// Standard normal CDF.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z * FRAC_1_SQRT_2)
}

/// Standard normal density.
pub fn normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * PI).sqrt()
}

/// `(Φ(z), 1 - Φ(z))`, each evaluated without cancellation.
pub fn normal_cdf_pair(z: f64) -> (f64, f64) {
    (normal_cdf(z), normal_cdf(-z))
}

/// Probabilists' Gauss-Hermite rule: `E[f(Z)] ≈ Σ w_i f(x_i)` for `Z ~ N(0,1)`.
///
/// Nodes from the eigenvalues of the Jacobi matrix; weights from the
/// Christoffel function `1 / Σ_k p_k(x_i)²`, which keeps relative accuracy in
/// the far tails where eigenvector components underflow into round-off.
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    let jacobi = DMatrix::from_fn(n, n, |i, j| {
        if i + 1 == j || j + 1 == i {
            (i.max(j) as f64).sqrt()
        } else {
            0.0
        }
    });
    let mut nodes: Vec<f64> = SymmetricEigen::new(jacobi)
        .eigenvalues
        .iter()
        .copied()
        .collect();
    nodes.sort_by(f64::total_cmp);
    let raw: Vec<f64> = nodes
        .iter()
        .map(|&x| {
            1.0 / normalized_hermite(n - 1, x)
                .iter()
                .map(|p| p * p)
                .sum::<f64>()
        })
        .collect();
    let total: f64 = raw.iter().sum();
    (nodes, raw.iter().map(|w| w / total).collect())
}

/// Orthonormal Hermite polynomials `He_n(x)/sqrt(n!)` for `n = 0..=order`.
pub fn normalized_hermite(order: usize, x: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(order + 1);
    out.push(1.0);
    if order == 0 {
        return out;
    }
    out.push(x);
    for n in 1..order {
        let next = (x * out[n] - (n as f64).sqrt() * out[n - 1]) / ((n + 1) as f64).sqrt();
        out.push(next);
    }
    out
}

const BETA_TOL: f64 = 1e-12;

/// Quantile of the standard Beta(p, q) distribution.
///
/// `lower` is the probability `u` and `upper` its complement `1 - u`; upper
/// tails are solved against the complement. Newton steps inside a bisection
/// bracket.
pub fn beta_quantile(p: f64, q: f64, lower: f64, upper: f64) -> f64 {
    if lower <= 0.0 {
        return 0.0;
    }
    if upper <= 0.0 {
        return 1.0;
    }
    if lower <= upper {
        lower_tail_quantile(p, q, lower)
    } else {
        1.0 - lower_tail_quantile(q, p, upper)
    }
}

/// Solves `I_x(p, q) = u` for `u <= 1/2`.
fn lower_tail_quantile(p: f64, q: f64, u: f64) -> f64 {
    let ln_b = ln_beta(p, q);
    // Small-x asymptote I_x ≈ x^p / (p B), clipped into the bracket.
    let mut x = ((u * p).ln() + ln_b).exp().powf(1.0 / p).clamp(1e-300, 0.5);
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    for _ in 0..200 {
        let f = beta_reg(p, q, x) - u;
        if f == 0.0 {
            return x;
        }
        if f < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let log_pdf = (p - 1.0) * x.ln() + (q - 1.0) * (-x).ln_1p() - ln_b;
        let step = f / log_pdf.exp();
        let newton = x - step;
        let next = if newton.is_finite() && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if (next - x).abs() <= BETA_TOL * x.max(f64::MIN_POSITIVE) || hi - lo <= BETA_TOL * lo {
            return next;
        }
        x = next;
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normal_cdf_reference_values() {
        assert!((normal_cdf(0.0) - 0.5).abs() < 1e-16);
        assert!((normal_cdf(1.959963984540054) - 0.975).abs() < 1e-15);
        // upper tail keeps relative accuracy
        let (_, upper) = normal_cdf_pair(8.0);
        assert!((upper / 6.22096057427178e-16 - 1.0).abs() < 1e-13);
    }

    #[test]
    fn hermite_rule_moments() {
        let (x, w) = gauss_hermite(40);
        let m2: f64 = x.iter().zip(&w).map(|(x, w)| w * x * x).sum();
        let m4: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(4)).sum();
        assert!((m2 - 1.0).abs() < 1e-12);
        assert!((m4 - 3.0).abs() < 1e-11);
    }

    #[test]
    fn hermite_polynomials_orthonormal() {
        let (x, w) = gauss_hermite(60);
        let polys: Vec<Vec<f64>> = x.iter().map(|&x| normalized_hermite(10, x)).collect();
        for a in 0..=10 {
            for b in 0..=10 {
                let s: f64 = polys.iter().zip(&w).map(|(p, w)| w * p[a] * p[b]).sum();
                let expect = if a == b { 1.0 } else { 0.0 };
                assert!((s - expect).abs() < 1e-10, "<{a},{b}> = {s}");
            }
        }
    }

    #[test]
    fn beta_quantile_inverts_cdf() {
        for &(p, q) in &[(0.5, 1.5), (2.0, 3.0), (1.0, 1.0)] {
            for &u in &[1e-14, 1e-6, 0.01, 0.3, 0.5, 0.7, 0.999, 1.0 - 1e-9] {
                let x = beta_quantile(p, q, u, 1.0 - u);
                let back = beta_reg(p, q, x);
                assert!(
                    (back - u).abs() <= 1e-11 * u.max(1e-3),
                    "p={p} q={q} u={u} x={x} back={back}"
                );
            }
        }
    }

    #[test]
    fn beta_uniform_is_identity() {
        let x = beta_quantile(1.0, 1.0, 0.25, 0.75);
        assert!((x - 0.25).abs() < 1e-12);
    }

    #[test]
    fn beta_quantile_endpoints() {
        assert_eq!(beta_quantile(0.5, 1.5, 0.0, 1.0), 0.0);
        assert_eq!(beta_quantile(0.5, 1.5, 1.0, 0.0), 1.0);
    }
}
