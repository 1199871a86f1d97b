//! Linear oscillators `ẍ + αẋ + βx = γ f(t)` at rest at `t = 0`, solved by
//! Duhamel convolution with the underdamped impulse response.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ensemble::PathEnsemble;
use crate::error::{Error, Result};
use crate::kernels::{BasisSource, SpectralBasis};
use crate::klmodel::FdModel;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Oscillator {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl Oscillator {
    pub fn new(alpha: f64, beta: f64, gamma: f64) -> Result<Self> {
        let o = Oscillator { alpha, beta, gamma };
        o.validate()?;
        Ok(o)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("gamma", self.gamma),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::argument(format!(
                    "oscillator {name} must be positive, got {v}"
                )));
            }
        }
        if !(self.beta - self.alpha * self.alpha / 4.0 > 0.0) {
            return Err(Error::argument(format!(
                "oscillator must be underdamped: beta - alpha^2/4 = {} <= 0",
                self.beta - self.alpha * self.alpha / 4.0
            )));
        }
        Ok(())
    }

    /// Damped frequency `ψ = √(β - α²/4)`.
    pub fn psi(&self) -> f64 {
        (self.beta - self.alpha * self.alpha / 4.0).sqrt()
    }

    /// `h(u) = (γ/ψ) e^{-αu/2} sin(ψu)`.
    pub fn impulse_response(&self, u: f64) -> f64 {
        let psi = self.psi();
        self.gamma / psi * (-0.5 * self.alpha * u).exp() * (psi * u).sin()
    }

    /// Bound `γτ/ψ` of the response map's sup-norm Lipschitz constant on `[0, τ]`.
    pub fn sup_gain(&self, tau: f64) -> f64 {
        self.gamma * tau / self.psi()
    }
}

/// Oscillators driven by the same squared input, one per response component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OscillatorParams {
    pub components: Vec<Oscillator>,
}

impl OscillatorParams {
    pub fn new(components: Vec<Oscillator>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::argument("at least one oscillator is required"));
        }
        for o in &components {
            o.validate()?;
        }
        Ok(OscillatorParams { components })
    }

    pub fn get(&self, c: usize) -> Result<&Oscillator> {
        self.components
            .get(c)
            .ok_or_else(|| Error::argument(format!("no oscillator {c}")))
    }
}

/// `X(t_n) = Σ_m w_m h(t_n - t_m) f(t_m)` with trapezoid weights on a uniform grid.
pub fn duhamel(osc: &Oscillator, forcing: &[f64], dt: f64) -> Vec<f64> {
    let h: Vec<f64> = (0..forcing.len())
        .map(|k| osc.impulse_response(k as f64 * dt))
        .collect();
    convolve(&h, forcing, dt)
}

fn convolve(h: &[f64], f: &[f64], dt: f64) -> Vec<f64> {
    let n = f.len();
    let mut out = vec![0.0; n];
    for (i, o) in out.iter_mut().enumerate().skip(1) {
        // h(0) = 0 removes the m = i endpoint.
        let mut acc = 0.5 * h[i] * f[0];
        for m in 1..i {
            acc += h[i - m] * f[m];
        }
        *o = acc * dt;
    }
    out
}

/// Response of oscillator `component` to the square of the forcing paths.
pub fn oscillator_response(
    params: &OscillatorParams,
    forcing: &PathEnsemble,
    component: usize,
) -> Result<PathEnsemble> {
    let osc = params.get(component)?;
    let dt = forcing.grid().uniform_step()?;
    let h: Vec<f64> = (0..forcing.n_nodes())
        .map(|k| osc.impulse_response(k as f64 * dt))
        .collect();
    let paths: Vec<Vec<f64>> = (0..forcing.n_samples())
        .into_par_iter()
        .map(|s| {
            let sq: Vec<f64> = forcing.path(s, 0).iter().map(|y| y * y).collect();
            convolve(&h, &sq, dt)
        })
        .collect();
    PathEnsemble::from_paths(
        forcing.grid().clone(),
        &format!("X{}", component + 1),
        paths,
        forcing.seed().cloned(),
    )
}

/// All responses stacked as components `X1, X2, ...`.
pub fn oscillator_responses(
    params: &OscillatorParams,
    forcing: &PathEnsemble,
) -> Result<PathEnsemble> {
    let parts = (0..params.components.len())
        .map(|c| oscillator_response(params, forcing, c))
        .collect::<Result<Vec<_>>>()?;
    PathEnsemble::stack(&parts.iter().collect::<Vec<_>>())
}

/// Responses to `Y_d²`, with `Y_d` the FD model of the input at level `d`.
pub fn fd_response_via_input(
    params: &OscillatorParams,
    input_fd: &FdModel,
    d: usize,
) -> Result<PathEnsemble> {
    let model = input_fd.with_levels(&[d])?;
    let fd_input = model.reconstruct_all()?;
    oscillator_responses(params, &fd_input)
}

/// Nyström basis of the sample covariance of one ensemble component.
pub fn response_basis(
    ensemble: &PathEnsemble,
    component: usize,
    d: usize,
) -> Result<SpectralBasis> {
    if ensemble.n_samples() < 2 {
        return Err(Error::argument(
            "a sample covariance needs at least two samples",
        ));
    }
    let n = ensemble.n_nodes();
    let mean = ensemble.mean_path(component);
    let ns = ensemble.n_samples();
    let mut centered = DMatrix::zeros(n, ns);
    for s in 0..ns {
        for (j, (v, m)) in ensemble.path(s, component).iter().zip(&mean).enumerate() {
            centered[(j, s)] = v - m;
        }
    }
    let cov = (&centered * centered.transpose()) / (ns - 1) as f64;
    crate::kernels::basis_from_covariance(
        &cov,
        ensemble.grid().clone(),
        BasisSource::Empirical {
            label: ensemble.labels()[component].clone(),
            n_samples: ns,
        },
        d,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Classical RK4 on (x, v) with forcing interpolated linearly between nodes.
    fn rk4(osc: &Oscillator, f: &[f64], dt: f64) -> Vec<f64> {
        let force = |t: f64| {
            let k = ((t / dt).floor() as usize).min(f.len() - 2);
            let r = t / dt - k as f64;
            (1.0 - r) * f[k] + r * f[k + 1]
        };
        let rhs = |t: f64, x: f64, v: f64| (v, osc.gamma * force(t) - osc.alpha * v - osc.beta * x);
        let (mut x, mut v) = (0.0, 0.0);
        let mut out = vec![0.0];
        let sub = 10;
        let h = dt / sub as f64;
        for n in 0..f.len() - 1 {
            for s in 0..sub {
                let t = n as f64 * dt + s as f64 * h;
                let (k1x, k1v) = rhs(t, x, v);
                let (k2x, k2v) = rhs(t + h / 2.0, x + h / 2.0 * k1x, v + h / 2.0 * k1v);
                let (k3x, k3v) = rhs(t + h / 2.0, x + h / 2.0 * k2x, v + h / 2.0 * k2v);
                let (k4x, k4v) = rhs(t + h, x + h * k3x, v + h * k3v);
                x += h / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x);
                v += h / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
            }
            out.push(x);
        }
        out
    }

    #[test]
    fn psi_reference() {
        let o = Oscillator::new(0.5, 10.0, 1.0).unwrap();
        assert!((o.psi() - 9.9375_f64.sqrt()).abs() < 1e-15);
        assert!((o.psi() - 3.152_380).abs() < 1e-6);
    }

    #[test]
    fn underdamping_required() {
        let e = Oscillator::new(2.0, 1.0, 1.0).unwrap_err();
        assert!(e.to_string().contains("underdamped"));
    }

    #[test]
    fn matches_runge_kutta() {
        let o = Oscillator::new(0.5, 10.0, 1.0).unwrap();
        let dt = 0.01;
        let f: Vec<f64> = (0..1001)
            .map(|j| 1.0 + (0.7 * j as f64 * dt).sin().powi(2))
            .collect();
        let a = duhamel(&o, &f, dt);
        let b = rk4(&o, &f, dt);
        let err = a
            .iter()
            .zip(&b)
            .fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()));
        assert!(err < 1e-4, "{err}");
    }

    #[test]
    fn static_limit() {
        let o = Oscillator::new(0.5, 10.0, 2.0).unwrap();
        let f = vec![3.0; 6001];
        let x = duhamel(&o, &f, 0.01);
        let target = 2.0 * 3.0 / 10.0;
        assert!((x[6000] / target - 1.0).abs() < 0.01);
    }

    #[test]
    fn zero_forcing() {
        let o = Oscillator::new(0.2, 5.0, 2.0).unwrap();
        assert!(duhamel(&o, &[0.0; 50], 0.01).iter().all(|v| *v == 0.0));
    }
}
