use serde::{Deserialize, Serialize};

use super::basis::BasisSource;
use super::{CorrelationFunction, Domain, Kernel};
use crate::error::{Error, Result};
use crate::marginal::Marginal;
use crate::special::{gauss_hermite, normalized_hermite};

const HERMITE_NODES: usize = 160;

/// Covariance of the translation process `h(G) = F⁻¹∘Φ(G)`.
///
/// With Hermite coefficients `b_n = E[h(Z) He_n(Z)]/√n!`, the covariance at
/// Gaussian correlation `ρ` is `Σ_{n≥1} b_n² ρⁿ` (Mehler's formula).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranslatedKernel {
    base: Kernel,
    marginal: Marginal,
    coefficients_sq: Vec<f64>,
}

impl TranslatedKernel {
    pub fn new(base: Kernel, marginal: Marginal, terms: usize) -> Result<Self> {
        marginal.validate()?;
        if terms == 0 || terms > 120 {
            return Err(Error::argument(format!(
                "hermite expansion needs 1..=120 terms, got {terms}"
            )));
        }
        if base.family().variance() != 1.0 {
            return Err(Error::argument(
                "translation needs a unit-variance Gaussian correlation",
            ));
        }
        let (x, w) = gauss_hermite(HERMITE_NODES);
        let mut b = vec![0.0; terms + 1];
        for (z, wz) in x.iter().zip(&w) {
            let hz = marginal.from_gaussian(*z);
            for (n, p) in normalized_hermite(terms, *z).iter().enumerate() {
                b[n] += wz * hz * p;
            }
        }
        Ok(TranslatedKernel {
            base,
            marginal,
            coefficients_sq: b[1..].iter().map(|v| v * v).collect(),
        })
    }

    pub fn base(&self) -> &Kernel {
        &self.base
    }

    pub fn marginal(&self) -> &Marginal {
        &self.marginal
    }

    pub fn terms(&self) -> usize {
        self.coefficients_sq.len()
    }

    /// Covariance at Gaussian correlation `rho`.
    pub fn covariance_at(&self, rho: f64) -> f64 {
        self.coefficients_sq
            .iter()
            .rev()
            .fold(0.0, |acc, b2| (acc + b2) * rho)
    }

    /// Fraction of the marginal variance captured by the truncated expansion.
    pub fn completeness(&self) -> f64 {
        self.coefficients_sq.iter().sum::<f64>() / self.marginal.variance()
    }
}

impl CorrelationFunction for TranslatedKernel {
    fn domain(&self) -> Domain {
        self.base.domain()
    }

    fn covariance(&self, s: &[f64], t: &[f64]) -> f64 {
        self.covariance_at(self.base.eval_unchecked(s, t))
    }

    fn source(&self) -> BasisSource {
        BasisSource::Translated {
            base: self.base,
            marginal: self.marginal,
            hermite_terms: self.terms(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gumbel(location: f64, scale: f64) -> Marginal {
        Marginal::Gumbel { location, scale }
    }

    #[test]
    fn zero_lag_recovers_variance() {
        let k = Kernel::matern_like(0.1, 0.0, 50.0).unwrap();
        let t = TranslatedKernel::new(k, gumbel(1.0, 2.0), 60).unwrap();
        assert!(
            (t.completeness() - 1.0).abs() < 2e-3,
            "{}",
            t.completeness()
        );
        assert_eq!(t.covariance_at(0.0), 0.0);
    }

    #[test]
    fn gaussian_marginal_is_identity() {
        let k = Kernel::ou(1.0, 0.0, 10.0).unwrap();
        let t = TranslatedKernel::new(k, Marginal::StandardNormal, 10).unwrap();
        for rho in [-0.5, 0.1, 0.9] {
            assert!((t.covariance_at(rho) - rho).abs() < 1e-12);
        }
    }

    #[test]
    fn matches_bivariate_quadrature() {
        // E[h(Z1) h(Z2)] - m² with Z2 = ρ Z1 + √(1-ρ²) Z3, by tensor Gauss-Hermite
        let m = gumbel(0.0, 1.0);
        let k = Kernel::matern_like(0.1, 0.0, 50.0).unwrap();
        let t = TranslatedKernel::new(k, m, 60).unwrap();
        let (x, w) = gauss_hermite(80);
        for rho in [0.3, 0.7] {
            let s = (1.0_f64 - rho * rho).sqrt();
            let mut e = 0.0;
            for (a, wa) in x.iter().zip(&w) {
                for (b, wb) in x.iter().zip(&w) {
                    e += wa * wb * m.from_gaussian(*a) * m.from_gaussian(rho * a + s * b);
                }
            }
            let cov = e - m.mean().powi(2);
            assert!((cov - t.covariance_at(rho)).abs() < 2e-3, "rho={rho}");
        }
    }
}
