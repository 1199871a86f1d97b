//! Target marginal distributions of translation processes.

use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;

use crate::error::{Error, Result};
use crate::special::{beta_quantile, normal_cdf, normal_cdf_pair};

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Marginal law `F` of a translation process `F⁻¹∘Φ(G)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Marginal {
    /// Gumbel (maximum) law, `F(x) = exp(-exp(-(x - location)/scale))`.
    Gumbel {
        location: f64,
        scale: f64,
    },
    /// Beta(p, q) law affinely mapped onto `[lower, upper]`.
    ScaledBeta {
        p: f64,
        q: f64,
        lower: f64,
        upper: f64,
    },
    StandardNormal,
}

impl Marginal {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Marginal::Gumbel { location, scale } => {
                if !location.is_finite() || !(scale > 0.0) || !scale.is_finite() {
                    return Err(Error::argument(format!(
                        "gumbel: need finite location and scale > 0 (got {location}, {scale})"
                    )));
                }
            }
            Marginal::ScaledBeta { p, q, lower, upper } => {
                if !(p > 0.0 && q > 0.0) || !p.is_finite() || !q.is_finite() {
                    return Err(Error::argument(format!(
                        "scaled beta: shape parameters must be > 0 (got p={p}, q={q})"
                    )));
                }
                if !(lower < upper) || !lower.is_finite() || !upper.is_finite() {
                    return Err(Error::argument(format!(
                        "scaled beta: need lower < upper (got {lower}, {upper})"
                    )));
                }
            }
            Marginal::StandardNormal => {}
        }
        Ok(())
    }

    pub fn cdf(&self, x: f64) -> f64 {
        match *self {
            Marginal::Gumbel { location, scale } => (-(-(x - location) / scale).exp()).exp(),
            Marginal::ScaledBeta { p, q, lower, upper } => {
                if x <= lower {
                    0.0
                } else if x >= upper {
                    1.0
                } else {
                    beta_reg(p, q, (x - lower) / (upper - lower))
                }
            }
            Marginal::StandardNormal => normal_cdf(x),
        }
    }

    /// `F⁻¹(u)`.
    pub fn quantile(&self, u: f64) -> f64 {
        self.quantile_pair(u, 1.0 - u)
    }

    /// `F⁻¹∘Φ(z)`: the translation map applied to one standard normal value.
    pub fn from_gaussian(&self, z: f64) -> f64 {
        match *self {
            Marginal::StandardNormal => z,
            _ => {
                let (lo, hi) = normal_cdf_pair(z);
                self.quantile_pair(lo, hi)
            }
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            Marginal::Gumbel { location, scale } => location + scale * EULER_GAMMA,
            Marginal::ScaledBeta { p, q, lower, upper } => lower + (upper - lower) * p / (p + q),
            Marginal::StandardNormal => 0.0,
        }
    }

    pub fn variance(&self) -> f64 {
        match *self {
            Marginal::Gumbel { scale, .. } => std::f64::consts::PI.powi(2) * scale * scale / 6.0,
            Marginal::ScaledBeta { p, q, lower, upper } => {
                let s = p + q;
                (upper - lower).powi(2) * p * q / (s * s * (s + 1.0))
            }
            Marginal::StandardNormal => 1.0,
        }
    }

    /// Closed support, when bounded.
    pub fn support(&self) -> Option<(f64, f64)> {
        match *self {
            Marginal::ScaledBeta { lower, upper, .. } => Some((lower, upper)),
            _ => None,
        }
    }

    /// Quantile from the pair `(u, 1 - u)`; whichever side is small is used.
    fn quantile_pair(&self, lower_tail: f64, upper_tail: f64) -> f64 {
        match *self {
            Marginal::Gumbel { location, scale } => {
                // -ln F(x) = exp(-(x-μ)/γ); -ln(u) computed from the accurate side.
                let neg_ln_u = if lower_tail < 0.5 {
                    -lower_tail.ln()
                } else {
                    -(-upper_tail).ln_1p()
                };
                location - scale * neg_ln_u.ln()
            }
            Marginal::ScaledBeta { p, q, lower, upper } => {
                lower + (upper - lower) * beta_quantile(p, q, lower_tail, upper_tail)
            }
            Marginal::StandardNormal => {
                // Only reached through `quantile`; bisection on the CDF.
                let (mut lo, mut hi) = (-40.0_f64, 40.0_f64);
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if normal_cdf(mid) < lower_tail {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                0.5 * (lo + hi)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gumbel_median_at_zero_input() {
        let m = Marginal::Gumbel {
            location: 0.0,
            scale: 1.0,
        };
        // F⁻¹(1/2) = -ln(ln 2)
        let expect = -(2.0_f64.ln()).ln();
        assert!((m.from_gaussian(0.0) - expect).abs() < 1e-14);
        assert!((expect - 0.366_512_920_581_664_3).abs() < 1e-15);
    }

    #[test]
    fn gumbel_cdf_is_increasing_and_inverts() {
        let m = Marginal::Gumbel {
            location: 1.0,
            scale: 2.0,
        };
        let xs: Vec<f64> = (-20..40).map(|k| k as f64 * 0.5).collect();
        for w in xs.windows(2) {
            assert!(m.cdf(w[1]) >= m.cdf(w[0]));
        }
        for &u in &[1e-10, 0.1, 0.5, 0.9, 1.0 - 1e-10] {
            assert!((m.cdf(m.quantile(u)) - u).abs() < 1e-9);
        }
    }

    #[test]
    fn gumbel_upper_tail_accurate() {
        let m = Marginal::Gumbel {
            location: 0.0,
            scale: 1.0,
        };
        // for large z, 1-F(x) ≈ exp(-x) matches Φ(-z)
        let z = 7.0;
        let x = m.from_gaussian(z);
        let tail = normal_cdf(-z);
        assert!(((-x).exp() / tail - 1.0).abs() < 1e-6);
    }

    #[test]
    fn scaled_beta_stays_in_support() {
        let m = Marginal::ScaledBeta {
            p: 0.5,
            q: 1.5,
            lower: 1.0,
            upper: 20.0,
        };
        for k in -80..=80 {
            let x = m.from_gaussian(k as f64 * 0.1);
            assert!((1.0..=20.0).contains(&x), "{x}");
        }
    }

    #[test]
    fn validation_rejects_bad_parameters() {
        assert!(Marginal::Gumbel {
            location: 0.0,
            scale: 0.0
        }
        .validate()
        .is_err());
        assert!(Marginal::ScaledBeta {
            p: 1.0,
            q: 1.0,
            lower: 2.0,
            upper: 1.0
        }
        .validate()
        .is_err());
    }

    #[test]
    fn moments_match_quadrature() {
        let (x, w) = crate::special::gauss_hermite(120);
        for m in [
            Marginal::Gumbel {
                location: 1.0,
                scale: 2.0,
            },
            Marginal::ScaledBeta {
                p: 2.0,
                q: 3.0,
                lower: 1.0,
                upper: 20.0,
            },
        ] {
            let mean: f64 = x.iter().zip(&w).map(|(z, w)| w * m.from_gaussian(*z)).sum();
            let var: f64 = x
                .iter()
                .zip(&w)
                .map(|(z, w)| w * (m.from_gaussian(*z) - mean).powi(2))
                .sum();
            assert!((mean - m.mean()).abs() < 1e-6, "{m:?}");
            assert!((var / m.variance() - 1.0).abs() < 1e-4, "{m:?}");
        }
    }
}
