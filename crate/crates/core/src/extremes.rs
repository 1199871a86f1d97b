//! Sup-norm functionals and the Monte Carlo estimators built on them.

use serde::{Deserialize, Serialize};

use crate::ensemble::PathEnsemble;
use crate::error::{Error, Result};

/// Fractions of the target sup's standard deviation used as `ε` levels.
pub const EPSILON_FRACTIONS: [f64; 4] = [0.05, 0.1, 0.25, 0.5];
pub const DEFAULT_THRESHOLDS: usize = 64;

/// Per-sample `max_j |X_c(t_j)|`.
pub fn sup_abs(ensemble: &PathEnsemble, component: usize) -> Result<Vec<f64>> {
    sup_vector_norm(ensemble, &[component])
}

/// Per-sample `max_j max_{c ∈ components} |X_c(t_j)|`.
pub fn sup_vector_norm(ensemble: &PathEnsemble, components: &[usize]) -> Result<Vec<f64>> {
    if components.is_empty() {
        return Err(Error::argument("no components selected"));
    }
    if let Some(c) = components.iter().find(|c| **c >= ensemble.n_components()) {
        return Err(Error::argument(format!("no component {c}")));
    }
    Ok((0..ensemble.n_samples())
        .map(|s| {
            components
                .iter()
                .flat_map(|&c| ensemble.path(s, c).iter())
                .fold(0.0_f64, |m, v| m.max(v.abs()))
        })
        .collect())
}

/// Empirical exceedance probabilities with binomial standard errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExceedanceCurve {
    pub thresholds: Vec<f64>,
    pub probabilities: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub n_samples: usize,
    pub label: String,
    pub level: Option<usize>,
}

/// `P̂(x) = #{v > x} / n` at each threshold (sorted ascending on output).
pub fn exceedance(values: &[f64], thresholds: &[f64]) -> Result<ExceedanceCurve> {
    if values.is_empty() {
        return Err(Error::argument("exceedance needs at least one value"));
    }
    if values.iter().chain(thresholds).any(|v| v.is_nan()) {
        return Err(Error::argument("NaN in exceedance input"));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut xs = thresholds.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let probabilities: Vec<f64> = xs
        .iter()
        .map(|x| {
            let at_or_below = sorted.partition_point(|v| v <= x);
            (sorted.len() - at_or_below) as f64 / n
        })
        .collect();
    let std_errors = probabilities
        .iter()
        .map(|p| (p * (1.0 - p) / n).sqrt())
        .collect();
    Ok(ExceedanceCurve {
        thresholds: xs,
        probabilities,
        std_errors,
        n_samples: values.len(),
        label: String::new(),
        level: None,
    })
}

/// Empirical quantile with linear interpolation between order statistics.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    quantile_sorted(&v, q)
}

fn quantile_sorted(v: &[f64], q: f64) -> f64 {
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (pos - lo as f64) * (v[hi] - v[lo])
}

pub fn median(values: &[f64]) -> f64 {
    quantile(values, 0.5)
}

/// `count` thresholds from the 10th percentile to the maximum, log-spaced
/// when the lower end is positive and linear otherwise.
pub fn default_thresholds(values: &[f64], count: usize) -> Result<Vec<f64>> {
    if values.is_empty() || count < 2 {
        return Err(Error::argument("need values and at least two thresholds"));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let lo = quantile_sorted(&v, 0.1);
    let hi = v[v.len() - 1];
    let t = |k: usize| k as f64 / (count - 1) as f64;
    Ok(if lo > 0.0 && hi > lo {
        let (a, b) = (lo.ln(), hi.ln());
        (0..count).map(|k| (a + t(k) * (b - a)).exp()).collect()
    } else {
        (0..count).map(|k| lo + t(k) * (hi - lo)).collect()
    })
}

/// Two-sample Kolmogorov-Smirnov statistic.
pub fn ks_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::argument("KS distance needs two nonempty samples"));
    }
    let mut x = a.to_vec();
    let mut y = b.to_vec();
    x.sort_by(f64::total_cmp);
    y.sort_by(f64::total_cmp);
    let (n, m) = (x.len() as f64, y.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut worst = 0.0_f64;
    while i < x.len() && j < y.len() {
        let t = x[i].min(y[j]);
        while i < x.len() && x[i] <= t {
            i += 1;
        }
        while j < y.len() && y[j] <= t {
            j += 1;
        }
        worst = worst.max((i as f64 / n - j as f64 / m).abs());
    }
    Ok(worst)
}

/// One-sample KS statistic against a continuous CDF.
pub fn ks_against<F: Fn(f64) -> f64>(values: &[f64], cdf: F) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::argument("KS statistic needs a nonempty sample"));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    Ok(v.iter().enumerate().fold(0.0_f64, |m, (k, x)| {
        let f = cdf(*x);
        m.max((f - k as f64 / n).abs())
            .max(((k + 1) as f64 / n - f).abs())
    }))
}

/// Sample standard deviation.
pub fn std_dev(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    if values.len() < 2 {
        return 0.0;
    }
    let m = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

/// Pearson correlation of paired samples, or 0 when either sample is constant.
pub fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        return 0.0;
    }
    sab / (saa * sbb).sqrt()
}

/// One truncation level of a convergence study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub d: usize,
    pub median_discrepancy: f64,
    pub ks_extremes: f64,
    /// Pearson correlation of paired target and FD extremes.
    pub correlation: f64,
    /// `(ε, fraction of samples with discrepancy > ε)`.
    pub exceed_fraction: Vec<(f64, f64)>,
}

/// Paired data for one level: per-sample discrepancies and FD sup-extremes.
#[derive(Debug, Clone)]
pub struct LevelSample {
    pub d: usize,
    pub discrepancy: Vec<f64>,
    pub fd_extremes: Vec<f64>,
}

/// Rows of `(d, median discrepancy, KS of extremes, P(Ω_d(ε)))`, with `ε`
/// set from the target sup's standard deviation.
pub fn convergence_report(
    target_extremes: &[f64],
    levels: &[LevelSample],
) -> Result<Vec<ConvergenceRow>> {
    let sd = std_dev(target_extremes);
    let eps: Vec<f64> = EPSILON_FRACTIONS.iter().map(|f| f * sd).collect();
    levels
        .iter()
        .map(|l| {
            if l.discrepancy.len() != target_extremes.len()
                || l.fd_extremes.len() != target_extremes.len()
            {
                return Err(Error::argument(format!(
                    "level {} is not paired with the {} target samples",
                    l.d,
                    target_extremes.len()
                )));
            }
            let n = l.discrepancy.len() as f64;
            Ok(ConvergenceRow {
                d: l.d,
                median_discrepancy: median(&l.discrepancy),
                ks_extremes: ks_distance(target_extremes, &l.fd_extremes)?,
                correlation: correlation(target_extremes, &l.fd_extremes),
                exceed_fraction: eps
                    .iter()
                    .map(|e| {
                        (
                            *e,
                            l.discrepancy.iter().filter(|v| **v > *e).count() as f64 / n,
                        )
                    })
                    .collect(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;

    #[test]
    fn sup_of_constant() {
        let g = Grid::uniform(0.0, 1.0, 4).unwrap();
        let e = PathEnsemble::from_paths(g, "x", vec![vec![-2.0; 4]], None).unwrap();
        assert_eq!(sup_abs(&e, 0).unwrap(), vec![2.0]);
    }

    #[test]
    fn exceedance_basics() {
        let v: Vec<f64> = (1..=100).map(|k| k as f64).collect();
        let c = exceedance(&v, &[200.0, 0.0, 50.0]).unwrap();
        assert_eq!(c.thresholds, vec![0.0, 50.0, 200.0]);
        assert_eq!(c.probabilities, vec![1.0, 0.5, 0.0]);
        assert!(exceedance(&[], &[1.0]).is_err());
    }

    #[test]
    fn ks_extremes() {
        assert_eq!(ks_distance(&[1.0, 2.0], &[2.0, 1.0]).unwrap(), 0.0);
        assert_eq!(ks_distance(&[1.0, 2.0], &[3.0, 4.0]).unwrap(), 1.0);
        assert!((ks_distance(&[1.0, 2.0, 3.0, 4.0], &[3.0, 4.0]).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn thresholds_log_or_linear() {
        let v: Vec<f64> = (1..=10).map(|k| k as f64).collect();
        let t = default_thresholds(&v, 64).unwrap();
        assert_eq!(t.len(), 64);
        assert!((t[63] - 10.0).abs() < 1e-12);
        assert!((t[1] / t[0] - t[2] / t[1]).abs() < 1e-12);
        let w: Vec<f64> = (-5..=5).map(|k| k as f64).collect();
        let t = default_thresholds(&w, 5).unwrap();
        assert!(((t[1] - t[0]) - (t[2] - t[1])).abs() < 1e-12);
    }

    #[test]
    fn report_large_epsilon_is_zero() {
        let target = vec![1.0, 2.0, 3.0];
        let rows = convergence_report(
            &target,
            &[LevelSample {
                d: 3,
                discrepancy: vec![0.0, 0.0, 0.0],
                fd_extremes: target.clone(),
            }],
        )
        .unwrap();
        assert_eq!(rows[0].ks_extremes, 0.0);
        assert!(rows[0].exceed_fraction.iter().all(|(_, p)| *p == 0.0));
    }
}
