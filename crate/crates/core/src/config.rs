//! Declarative experiment descriptions, built-in presets and validation.

use serde::{Deserialize, Serialize};

use crate::dynamics::Oscillator;
use crate::grid::intervals_for;
use crate::kernels::{Kernel, KernelFamily, TranslatedKernel, MAX_DENSE_NODES};
use crate::marginal::Marginal;

pub const SCHEMA_VERSION: u32 = 1;

pub const PRESETS: [&str; 6] = [
    "example1_direct",
    "example1_translation",
    "example2_response",
    "example2_input",
    "example3_conductivity",
    "custom",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub name: String,
    pub seed: u64,
    /// Desk-scale sample count.
    pub n_samples: usize,
    /// Sample count restored by `--paper-scale`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub full_n_samples: Option<usize>,
    /// Default output directory, overridden on the command line.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
    /// Number of leading samples exported as path overlays.
    #[serde(default = "default_overlays")]
    pub n_overlays: usize,
    pub study: Study,
}

fn default_overlays() -> usize {
    3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Study {
    Example1Direct(Example1),
    Example1Translation(Example1),
    Example2Response(Example2),
    Example2Input(Example2),
    Example3Conductivity(Example3),
    Custom(Custom),
}

impl Study {
    pub fn kind(&self) -> &'static str {
        match self {
            Study::Example1Direct(_) => "example1_direct",
            Study::Example1Translation(_) => "example1_translation",
            Study::Example2Response(_) => "example2_response",
            Study::Example2Input(_) => "example2_input",
            Study::Example3Conductivity(_) => "example3_conductivity",
            Study::Custom(_) => "custom",
        }
    }
}

/// Translation input `F⁻¹∘Φ(G)` with `G` correlated by `(1 + ν|u|)e^{-ν|u|}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranslatedInput {
    pub nu: f64,
    pub marginal: Marginal,
}

/// Two translation inputs combined into `X1 = Y1`, `X2 = Y1 + Y2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Example1 {
    pub tau: f64,
    pub dt: f64,
    /// Covariance factorization and basis nodes use every `thin`-th node.
    pub thin: usize,
    pub inputs: Vec<TranslatedInput>,
    /// Truncation pairs `(d1, d2)`.
    pub levels: Vec<[usize; 2]>,
    pub hermite_terms: usize,
}

/// Oscillators forced by the square of a stationary OU process.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Example2 {
    pub rho: f64,
    pub tau: f64,
    pub dt: f64,
    pub oscillators: Vec<Oscillator>,
    pub levels: Vec<usize>,
}

/// Which apparent conductivity drives the statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    Literal,
    #[default]
    Normalized,
}

/// Random conductivity field on a rectangle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Example3 {
    pub rho: f64,
    pub lo: [f64; 2],
    pub hi: [f64; 2],
    pub nodes: [usize; 2],
    pub marginal: Marginal,
    pub levels: Vec<usize>,
    #[serde(default)]
    pub normalization: Normalization,
}

/// Scalar process on the kernel's interval, optionally translated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Custom {
    pub kernel: Kernel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub marginal: Option<Marginal>,
    pub dt: f64,
    pub thin: usize,
    pub levels: Vec<usize>,
    #[serde(default = "default_hermite")]
    pub hermite_terms: usize,
}

fn default_hermite() -> usize {
    100
}

impl ExperimentConfig {
    pub fn sample_count(&self, paper_scale: bool) -> usize {
        match (paper_scale, self.full_n_samples) {
            (true, Some(n)) => n,
            _ => self.n_samples,
        }
    }

    pub fn from_json(text: &str) -> crate::Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

pub fn preset(name: &str) -> Option<ExperimentConfig> {
    let example1 = || Example1 {
        tau: 50.0,
        dt: 0.01,
        thin: 10,
        inputs: vec![
            TranslatedInput {
                nu: 0.1,
                marginal: Marginal::Gumbel {
                    location: 0.0,
                    scale: 1.0,
                },
            },
            TranslatedInput {
                nu: 0.2,
                marginal: Marginal::Gumbel {
                    location: 1.0,
                    scale: 2.0,
                },
            },
        ],
        levels: vec![[5, 15], [10, 20], [15, 25]],
        hermite_terms: 100,
    };
    let example2 = || Example2 {
        rho: 1.0,
        tau: 10.0,
        dt: 0.01,
        oscillators: vec![
            Oscillator {
                alpha: 0.5,
                beta: 10.0,
                gamma: 1.0,
            },
            Oscillator {
                alpha: 0.2,
                beta: 5.0,
                gamma: 2.0,
            },
        ],
        levels: vec![5, 15, 25],
    };
    let (study, n, full) = match name {
        "example1_direct" => (Study::Example1Direct(example1()), 2000, 5000),
        "example1_translation" => (Study::Example1Translation(example1()), 2000, 5000),
        "example2_response" => (Study::Example2Response(example2()), 2000, 5000),
        "example2_input" => (Study::Example2Input(example2()), 2000, 5000),
        "example3_conductivity" => (
            Study::Example3Conductivity(Example3 {
                rho: 0.7,
                lo: [0.0, 0.0],
                hi: [20.0, 15.0],
                nodes: [51, 51],
                marginal: Marginal::ScaledBeta {
                    p: 0.5,
                    q: 1.5,
                    lower: 1.0,
                    upper: 20.0,
                },
                levels: vec![50, 150],
                normalization: Normalization::Normalized,
            }),
            200,
            1000,
        ),
        "custom" => (
            Study::Custom(Custom {
                kernel: Kernel::cosine_example(1.0, 5.0).expect("valid preset"),
                marginal: None,
                dt: 0.01,
                thin: 5,
                levels: vec![5, 10, 20],
                hermite_terms: 100,
            }),
            1000,
            5000,
        ),
        _ => return None,
    };
    Some(ExperimentConfig {
        schema_version: SCHEMA_VERSION,
        name: name.to_string(),
        seed: 20240,
        n_samples: n,
        full_n_samples: Some(full),
        output: None,
        n_overlays: 3,
        study,
    })
}

/// Every violation that would stop `run`, in a stable order.
pub fn validate(cfg: &ExperimentConfig) -> Vec<String> {
    let mut v = Vec::new();
    if cfg.schema_version != SCHEMA_VERSION {
        v.push(format!(
            "schema_version {} is not supported (expected {SCHEMA_VERSION})",
            cfg.schema_version
        ));
    }
    if cfg.n_samples < 2 {
        v.push(format!(
            "n_samples must be at least 2, got {}",
            cfg.n_samples
        ));
    }
    if let Some(n) = cfg.full_n_samples {
        if n < 2 {
            v.push(format!("full_n_samples must be at least 2, got {n}"));
        }
    }
    if cfg.n_overlays > cfg.n_samples {
        v.push(format!(
            "n_overlays ({}) exceeds n_samples ({})",
            cfg.n_overlays, cfg.n_samples
        ));
    }
    match &cfg.study {
        Study::Example1Direct(p) | Study::Example1Translation(p) => validate_example1(p, &mut v),
        Study::Example2Response(p) | Study::Example2Input(p) => validate_example2(p, &mut v),
        Study::Example3Conductivity(p) => validate_example3(p, &mut v),
        Study::Custom(p) => validate_custom(p, &mut v),
    }
    v
}

fn check_increasing(name: &str, levels: &[usize], max: usize, v: &mut Vec<String>) {
    if levels.is_empty() {
        v.push(format!("{name}: at least one truncation level is required"));
    }
    if levels.windows(2).any(|w| w[1] <= w[0]) {
        v.push(format!(
            "{name}: truncation levels {levels:?} are not strictly increasing"
        ));
    }
    if let Some(d) = levels.iter().find(|d| **d == 0 || **d > max) {
        v.push(format!("{name}: level {d} outside 1..={max}"));
    }
}

/// Node count of `[lo, hi]` at step `dt` thinned by `thin`, if consistent.
fn coarse_nodes(
    name: &str,
    lo: f64,
    hi: f64,
    dt: f64,
    thin: usize,
    v: &mut Vec<String>,
) -> Option<usize> {
    let m = match intervals_for(lo, hi, dt) {
        Ok(m) => m,
        Err(e) => {
            v.push(format!("{name}: {e}"));
            return None;
        }
    };
    if thin == 0 || m % thin != 0 {
        v.push(format!(
            "{name}: thin {thin} does not divide the {m} grid intervals"
        ));
        return None;
    }
    let n = m / thin + 1;
    if n > MAX_DENSE_NODES {
        v.push(format!(
            "{name}: {n} covariance nodes exceed the dense limit {MAX_DENSE_NODES}; increase thin"
        ));
        return None;
    }
    Some(n)
}

fn validate_example1(p: &Example1, v: &mut Vec<String>) {
    if !(p.tau > 0.0) {
        v.push(format!("tau must be positive, got {}", p.tau));
    }
    let nodes = coarse_nodes("grid", 0.0, p.tau, p.dt, p.thin, v).unwrap_or(usize::MAX);
    if p.inputs.len() != 2 {
        v.push(format!("two inputs are required, got {}", p.inputs.len()));
    }
    for (i, input) in p.inputs.iter().enumerate() {
        if let Err(e) = Kernel::matern_like(input.nu, 0.0, p.tau.max(1.0)) {
            v.push(format!("inputs[{i}]: {e}"));
        }
        if let Err(e) = input.marginal.validate() {
            v.push(format!("inputs[{i}]: {e}"));
        }
    }
    if p.hermite_terms == 0 || p.hermite_terms > 120 {
        v.push(format!(
            "hermite_terms must be in 1..=120, got {}",
            p.hermite_terms
        ));
    }
    for c in 0..2 {
        let seq: Vec<usize> = p.levels.iter().map(|l| l[c]).collect();
        check_increasing(&format!("levels (component {})", c + 1), &seq, nodes, v);
    }
}

fn validate_example2(p: &Example2, v: &mut Vec<String>) {
    if !(p.rho > 0.0) || !p.rho.is_finite() {
        v.push(format!("rho must be positive, got {}", p.rho));
    }
    let nodes = coarse_nodes("grid", 0.0, p.tau, p.dt, 1, v).unwrap_or(usize::MAX);
    if p.oscillators.is_empty() {
        v.push("at least one oscillator is required".into());
    }
    for (i, o) in p.oscillators.iter().enumerate() {
        if let Err(e) = o.validate() {
            v.push(format!("oscillators[{i}]: {e}"));
        }
    }
    check_increasing("levels", &p.levels, nodes, v);
}

fn validate_example3(p: &Example3, v: &mut Vec<String>) {
    if let Err(e) = Kernel::gauss_2d(p.rho, p.lo, p.hi) {
        v.push(format!("kernel: {e}"));
    }
    if let Err(e) = p.marginal.validate() {
        v.push(format!("marginal: {e}"));
    }
    if let Marginal::ScaledBeta { lower, .. } = p.marginal {
        if !(lower > 0.0) {
            v.push(format!(
                "conductivity lower bound must be positive, got {lower}"
            ));
        }
    } else {
        v.push("conductivity needs a scaled_beta marginal with a positive lower bound".into());
    }
    if p.nodes[0] < 3 || p.nodes[1] < 3 {
        v.push(format!("grid needs at least 3x3 nodes, got {:?}", p.nodes));
    }
    let total = p.nodes[0] * p.nodes[1];
    if total > MAX_DENSE_NODES {
        v.push(format!(
            "{total} field nodes exceed the dense limit {MAX_DENSE_NODES}; use a coarser mesh"
        ));
    }
    check_increasing("levels", &p.levels, total, v);
}

fn validate_custom(p: &Custom, v: &mut Vec<String>) {
    let (lo, hi) = match p.kernel.domain() {
        crate::kernels::Domain::Interval { lo, hi } => (lo, hi),
        _ => {
            v.push("custom studies need a kernel on an interval".into());
            return;
        }
    };
    if let KernelFamily::CosineExample { gamma } = p.kernel.family() {
        let tau = 0.5 * (hi - lo);
        if !(gamma > 1.0 / (2.0 * tau)) {
            v.push(format!(
                "cosine kernel needs gamma > 1/(2 tau) = {}, got {gamma}",
                1.0 / (2.0 * tau)
            ));
        }
    }
    let nodes = coarse_nodes("grid", lo, hi, p.dt, p.thin, v).unwrap_or(usize::MAX);
    if let Some(m) = &p.marginal {
        if let Err(e) = TranslatedKernel::new(p.kernel, *m, p.hermite_terms) {
            v.push(format!("marginal: {e}"));
        }
    }
    check_increasing("levels", &p.levels, nodes, v);
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_are_valid_and_roundtrip() {
        for name in PRESETS {
            let cfg = preset(name).unwrap();
            assert_eq!(validate(&cfg), Vec::<String>::new(), "{name}");
            assert_eq!(cfg.study.kind(), name);
            let text = serde_json::to_string_pretty(&cfg).unwrap();
            assert_eq!(ExperimentConfig::from_json(&text).unwrap(), cfg);
        }
        assert!(preset("nope").is_none());
    }

    #[test]
    fn critical_damping_is_reported() {
        let mut cfg = preset("example2_input").unwrap();
        if let Study::Example2Input(p) = &mut cfg.study {
            p.oscillators[0].beta = p.oscillators[0].alpha.powi(2) / 4.0;
            p.levels = vec![5, 5];
        }
        let v = validate(&cfg);
        assert_eq!(v.len(), 2, "{v:?}");
        assert!(v[0].contains("underdamped"));
        assert!(v[1].contains("not strictly increasing"));
    }

    #[test]
    fn cosine_gamma_cross_check() {
        let mut cfg = preset("custom").unwrap();
        if let Study::Custom(p) = &mut cfg.study {
            p.kernel = Kernel::cosine_example(0.05, 5.0).unwrap();
        }
        let v = validate(&cfg);
        assert!(v.iter().any(|m| m.contains("gamma > 1/(2 tau)")), "{v:?}");
    }

    #[test]
    fn paper_scale_counts() {
        let cfg = preset("example3_conductivity").unwrap();
        assert_eq!(cfg.sample_count(false), 200);
        assert_eq!(cfg.sample_count(true), 1000);
    }

    #[test]
    fn unknown_fields_rejected() {
        let mut value = serde_json::to_value(preset("custom").unwrap()).unwrap();
        value["bogus"] = serde_json::json!(1);
        assert!(ExperimentConfig::from_json(&value.to_string()).is_err());
    }
}
