//! Correlation kernels and their Mercer eigen-decompositions.

mod basis;
mod cosine;
mod translated;

pub use basis::{
    basis_from_covariance, basis_on_grid, nystrom_eigendecomposition, uniform_bound_condition,
    BasisSource, SpectralBasis, UniformBound, MAX_DENSE_NODES,
};
pub use cosine::{analytic_cosine_basis, CosineMode, CosineModes, ModeParity};
pub use translated::TranslatedKernel;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Slack allowed when testing domain membership.
const DOMAIN_SLACK: f64 = 1e-9;

/// Closed-form correlation families.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum KernelFamily {
    /// `(1 + ν|u|) e^{-ν|u|}`
    MaternLike { nu: f64 },
    /// `e^{-ρ|u|}`
    Ou { rho: f64 },
    /// `(1 + e^{-2γ|u|}) / 4`
    CosineExample { gamma: f64 },
    /// `exp(-(u1² + 2ρ u1 u2 + u2²) / 2)`
    Gauss2d { rho: f64 },
}

impl KernelFamily {
    pub fn dim(&self) -> usize {
        match self {
            KernelFamily::Gauss2d { .. } => 2,
            _ => 1,
        }
    }

    /// Correlation as a function of the lag `t - s`.
    pub fn at_lag(&self, lag: &[f64]) -> f64 {
        match *self {
            KernelFamily::MaternLike { nu } => {
                let a = nu * lag[0].abs();
                (1.0 + a) * (-a).exp()
            }
            KernelFamily::Ou { rho } => (-rho * lag[0].abs()).exp(),
            KernelFamily::CosineExample { gamma } => {
                0.25 * (1.0 + (-2.0 * gamma * lag[0].abs()).exp())
            }
            KernelFamily::Gauss2d { rho } => {
                let (a, b) = (lag[0], lag[1]);
                (-0.5 * (a * a + 2.0 * rho * a * b + b * b)).exp()
            }
        }
    }

    /// Zero-lag value.
    pub fn variance(&self) -> f64 {
        match self {
            KernelFamily::CosineExample { .. } => 0.5,
            _ => 1.0,
        }
    }

    fn validate(&self) -> Result<()> {
        let (name, value) = match *self {
            KernelFamily::MaternLike { nu } => ("matern_like nu", nu),
            KernelFamily::Ou { rho } => ("ou rho", rho),
            KernelFamily::CosineExample { gamma } => ("cosine_example gamma", gamma),
            KernelFamily::Gauss2d { rho } => {
                if !(rho > -1.0 && rho < 1.0) {
                    return Err(Error::argument(format!(
                        "gauss_2d rho must lie in (-1, 1), got {rho}"
                    )));
                }
                return Ok(());
            }
        };
        if !(value > 0.0) || !value.is_finite() {
            return Err(Error::argument(format!(
                "{name} must be positive and finite, got {value}"
            )));
        }
        Ok(())
    }
}

/// Index set of a kernel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Domain {
    Interval { lo: f64, hi: f64 },
    Rectangle { lo: [f64; 2], hi: [f64; 2] },
}

impl Domain {
    pub fn dim(&self) -> usize {
        match self {
            Domain::Interval { .. } => 1,
            Domain::Rectangle { .. } => 2,
        }
    }

    pub fn lower(&self) -> Vec<f64> {
        match self {
            Domain::Interval { lo, .. } => vec![*lo],
            Domain::Rectangle { lo, .. } => lo.to_vec(),
        }
    }

    pub fn upper(&self) -> Vec<f64> {
        match self {
            Domain::Interval { hi, .. } => vec![*hi],
            Domain::Rectangle { hi, .. } => hi.to_vec(),
        }
    }

    /// Lebesgue measure.
    pub fn measure(&self) -> f64 {
        self.lower()
            .iter()
            .zip(self.upper())
            .map(|(l, h)| h - l)
            .product()
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        p.len() == self.dim()
            && self
                .lower()
                .iter()
                .zip(self.upper())
                .zip(p)
                .all(|((l, h), x)| {
                    let slack = DOMAIN_SLACK * (1.0 + (h - l).abs());
                    *x >= l - slack && *x <= h + slack
                })
    }

    fn validate(&self) -> Result<()> {
        for (l, h) in self.lower().iter().zip(self.upper()) {
            if !(l.is_finite() && h.is_finite() && *l < h) {
                return Err(Error::argument(format!(
                    "empty or non-finite domain side [{l}, {h}]"
                )));
            }
        }
        Ok(())
    }
}

impl std::fmt::Display for Domain {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Domain::Interval { lo, hi } => write!(f, "[{lo}, {hi}]"),
            Domain::Rectangle { lo, hi } => {
                write!(f, "[{}, {}]x[{}, {}]", lo[0], hi[0], lo[1], hi[1])
            }
        }
    }
}

/// Anything with a covariance on a domain that a Nyström basis can be built from.
pub trait CorrelationFunction: Sync {
    fn domain(&self) -> Domain;
    /// Covariance without domain checks.
    fn covariance(&self, s: &[f64], t: &[f64]) -> f64;
    fn source(&self) -> BasisSource;
}

/// A validated correlation kernel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawKernel", into = "RawKernel")]
pub struct Kernel {
    family: KernelFamily,
    domain: Domain,
}

#[derive(Serialize, Deserialize)]
struct RawKernel {
    #[serde(flatten)]
    family: KernelFamily,
    domain: Domain,
}

impl TryFrom<RawKernel> for Kernel {
    type Error = Error;
    fn try_from(raw: RawKernel) -> Result<Self> {
        Kernel::new(raw.family, raw.domain)
    }
}

impl From<Kernel> for RawKernel {
    fn from(k: Kernel) -> Self {
        RawKernel {
            family: k.family,
            domain: k.domain,
        }
    }
}

impl Kernel {
    pub fn new(family: KernelFamily, domain: Domain) -> Result<Self> {
        family.validate()?;
        domain.validate()?;
        if family.dim() != domain.dim() {
            return Err(Error::argument(format!(
                "{family:?} needs a {}-dimensional domain, got {domain}",
                family.dim()
            )));
        }
        Ok(Kernel { family, domain })
    }

    pub fn matern_like(nu: f64, lo: f64, hi: f64) -> Result<Self> {
        Kernel::new(KernelFamily::MaternLike { nu }, Domain::Interval { lo, hi })
    }

    pub fn ou(rho: f64, lo: f64, hi: f64) -> Result<Self> {
        Kernel::new(KernelFamily::Ou { rho }, Domain::Interval { lo, hi })
    }

    /// The solvable example on `[-tau, tau]`.
    pub fn cosine_example(gamma: f64, tau: f64) -> Result<Self> {
        Kernel::new(
            KernelFamily::CosineExample { gamma },
            Domain::Interval { lo: -tau, hi: tau },
        )
    }

    pub fn gauss_2d(rho: f64, lo: [f64; 2], hi: [f64; 2]) -> Result<Self> {
        Kernel::new(KernelFamily::Gauss2d { rho }, Domain::Rectangle { lo, hi })
    }

    pub fn family(&self) -> KernelFamily {
        self.family
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn dim(&self) -> usize {
        self.family.dim()
    }

    /// `c(s, t)`, rejecting points outside the domain.
    pub fn eval(&self, s: &[f64], t: &[f64]) -> Result<f64> {
        for p in [s, t] {
            if !self.domain.contains(p) {
                return Err(Error::Domain {
                    point: p.to_vec(),
                    domain: self.domain.to_string(),
                });
            }
        }
        Ok(self.eval_unchecked(s, t))
    }

    #[inline]
    pub fn eval_unchecked(&self, s: &[f64], t: &[f64]) -> f64 {
        match self.dim() {
            1 => self.family.at_lag(&[t[0] - s[0]]),
            _ => self.family.at_lag(&[t[0] - s[0], t[1] - s[1]]),
        }
    }

    /// `∫ c(t,t) dt` over the domain.
    pub fn trace(&self) -> f64 {
        self.family.variance() * self.domain.measure()
    }
}

impl CorrelationFunction for Kernel {
    fn domain(&self) -> Domain {
        self.domain
    }

    fn covariance(&self, s: &[f64], t: &[f64]) -> f64 {
        self.eval_unchecked(s, t)
    }

    fn source(&self) -> BasisSource {
        BasisSource::Kernel { kernel: *self }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_values() {
        let m = Kernel::matern_like(0.1, 0.0, 50.0).unwrap();
        assert_eq!(m.eval(&[3.0], &[3.0]).unwrap(), 1.0);
        assert!((m.eval(&[0.0], &[10.0]).unwrap() - 2.0 * (-1.0_f64).exp()).abs() < 1e-15);

        let ou = Kernel::ou(1.0, 0.0, 10.0).unwrap();
        assert!((ou.eval(&[2.0], &[3.0]).unwrap() - 0.367_879_441_171_442_3).abs() < 1e-15);

        let g = Kernel::gauss_2d(0.7, [0.0, 0.0], [20.0, 15.0]).unwrap();
        let v = g.eval(&[1.0, 1.0], &[2.0, 1.0]).unwrap();
        assert!((v - 0.606_530_659_712_633_4).abs() < 1e-15);

        let c = Kernel::cosine_example(1.0, 5.0).unwrap();
        assert_eq!(c.eval(&[-5.0], &[-5.0]).unwrap(), 0.5);
    }

    #[test]
    fn gauss_2d_cross_term_sign() {
        let g = Kernel::gauss_2d(0.5, [0.0, 0.0], [2.0, 2.0]).unwrap();
        // lag (1,1): exp(-(1 + 1 + 1)/2); lag (1,-1): exp(-(1 - 1 + 1)/2)
        let same = g.eval(&[0.0, 0.0], &[1.0, 1.0]).unwrap();
        let opposite = g.eval(&[0.0, 1.0], &[1.0, 0.0]).unwrap();
        assert!((same - (-1.5_f64).exp()).abs() < 1e-15);
        assert!((opposite - (-0.5_f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn outside_domain_is_rejected() {
        let k = Kernel::ou(1.0, 0.0, 10.0).unwrap();
        let err = k.eval(&[0.0], &[10.5]).unwrap_err();
        assert!(matches!(err, Error::Domain { .. }));
        let c = Kernel::cosine_example(1.0, 5.0).unwrap();
        assert!(c.eval(&[-6.0], &[0.0]).is_err());
    }

    #[test]
    fn invalid_parameters() {
        assert!(Kernel::ou(0.0, 0.0, 1.0).is_err());
        assert!(Kernel::matern_like(-1.0, 0.0, 1.0).is_err());
        assert!(Kernel::gauss_2d(1.0, [0.0; 2], [1.0; 2]).is_err());
        assert!(Kernel::ou(1.0, 2.0, 1.0).is_err());
        assert!(Kernel::new(
            KernelFamily::Ou { rho: 1.0 },
            Domain::Rectangle {
                lo: [0.0; 2],
                hi: [1.0; 2]
            }
        )
        .is_err());
    }

    #[test]
    fn json_roundtrip_validates() {
        let k = Kernel::matern_like(0.2, 0.0, 50.0).unwrap();
        let s = serde_json::to_string(&k).unwrap();
        assert_eq!(serde_json::from_str::<Kernel>(&s).unwrap(), k);
        let bad = r#"{"family":"ou","rho":-1.0,"domain":{"interval":{"lo":0.0,"hi":1.0}}}"#;
        assert!(serde_json::from_str::<Kernel>(bad).is_err());
    }
}
