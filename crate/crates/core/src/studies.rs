//! End-to-end pipelines: sample the inputs, build paired FD models, and
//! collect the statistics and tables behind each study.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{Custom, Example1, Example2, Example3, ExperimentConfig, Normalization, Study};
use crate::dynamics::{duhamel, oscillator_responses, response_basis, Oscillator};
use crate::ensemble::PathEnsemble;
use crate::error::{Error, Result};
use crate::extremes::{
    convergence_report, default_thresholds, exceedance, std_dev, ConvergenceRow, ExceedanceCurve,
    LevelSample, DEFAULT_THRESHOLDS,
};
use crate::grid::{interpolate_linear, Grid};
use crate::io;
use crate::kernels::{basis_on_grid, Kernel, SpectralBasis, TranslatedKernel};
use crate::klmodel::FdModel;
use crate::marginal::Marginal;
use crate::pde::{
    apparent_conductivity, solve_conductivity, ApparentConductivity, ConductivitySample,
};
use crate::samplers::{sample_gaussian_field_2d, sample_gaussian_process, sample_ou, SeededRng};

/// Convergence table of one monitored quantity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentSummary {
    pub label: String,
    pub target_std: f64,
    pub rows: Vec<ConvergenceRow>,
}

/// Count of samples satisfying a per-sample inequality.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub component: String,
    pub d: usize,
    pub holds: usize,
    pub total: usize,
    /// Largest ratio of left to right side over the samples.
    pub worst_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub name: String,
    pub kind: String,
    pub seed: u64,
    pub n_samples: usize,
    /// Truncation level per component at each step of the study.
    pub levels: Vec<Vec<usize>>,
    pub components: Vec<ComponentSummary>,
    pub checks: Vec<Check>,
    pub diagnostics: BTreeMap<String, f64>,
}

impl Summary {
    pub fn component(&self, label: &str) -> Option<&ComponentSummary> {
        self.components.iter().find(|c| c.label == label)
    }
}

/// A file the study wants written, named relative to the output directory.
#[derive(Debug, Clone)]
pub enum Artifact {
    Ensemble(String, Arc<PathEnsemble>),
    Basis(String, Arc<SpectralBasis>),
    Coefficients(String, FdModel),
    Exceedance(String, Vec<ExceedanceCurve>),
    Report(String, String, Vec<ConvergenceRow>),
    Scatter(String, Vec<f64>, Vec<f64>),
    Overlay(String, Grid, Vec<(String, Vec<f64>)>),
    Field(String, Grid, String, Vec<f64>),
    Table(String, Vec<String>, Vec<Vec<f64>>),
}

impl Artifact {
    /// Writes the artifact and returns the created file names.
    pub fn write(&self, dir: &Path) -> Result<Vec<String>> {
        let f = |name: &str, ext: &str| format!("{name}.{ext}");
        Ok(match self {
            Artifact::Ensemble(name, e) => {
                let (b, j) = (f(name, "bin"), f(name, "json"));
                io::write_ensemble(e, &dir.join(&b), &dir.join(&j))?;
                vec![b, j]
            }
            Artifact::Basis(name, basis) => {
                let (c, j) = (f(name, "csv"), f(name, "json"));
                io::write_basis(basis, &dir.join(&c), &dir.join(&j))?;
                vec![c, j]
            }
            Artifact::Coefficients(name, model) => {
                let (c, j) = (f(name, "csv"), format!("{name}_model.json"));
                io::write_coefficients(model, &dir.join(&c), &dir.join(&j))?;
                vec![c, j]
            }
            Artifact::Exceedance(name, curves) => {
                let c = f(name, "csv");
                io::write_exceedance(&dir.join(&c), curves)?;
                vec![c]
            }
            Artifact::Report(name, label, rows) => {
                let c = f(name, "csv");
                io::write_report(&dir.join(&c), label, rows)?;
                vec![c]
            }
            Artifact::Scatter(name, a, b) => {
                let c = f(name, "csv");
                io::write_scatter(&dir.join(&c), a, b)?;
                vec![c]
            }
            Artifact::Overlay(name, grid, cols) => {
                let c = f(name, "csv");
                io::write_overlay(&dir.join(&c), grid, cols)?;
                vec![c]
            }
            Artifact::Field(name, grid, col, values) => {
                let c = f(name, "csv");
                io::write_field(&dir.join(&c), grid, col, values)?;
                vec![c]
            }
            Artifact::Table(name, header, rows) => {
                let c = f(name, "csv");
                let h: Vec<&str> = header.iter().map(String::as_str).collect();
                io::write_table(&dir.join(&c), &h, rows.iter().cloned())?;
                vec![c]
            }
        })
    }
}

#[derive(Debug, Clone)]
pub struct StudyResult {
    pub summary: Summary,
    pub artifacts: Vec<Artifact>,
}

impl StudyResult {
    /// Writes every artifact plus `summary.json`, returning file names in order.
    pub fn write(&self, dir: &Path) -> Result<Vec<String>> {
        std::fs::create_dir_all(dir).map_err(|e| {
            Error::Io(std::io::Error::new(
                e.kind(),
                format!("{}: {e}", dir.display()),
            ))
        })?;
        let mut files = Vec::new();
        for a in &self.artifacts {
            files.extend(a.write(dir)?);
        }
        io::write_json(&dir.join("summary.json"), &self.summary)?;
        files.push("summary.json".into());
        Ok(files)
    }
}

/// Draws the random inputs of a study: Gaussian paths on the covariance
/// grid, OU paths, or Gaussian fields.
pub fn sample_inputs(cfg: &ExperimentConfig, n_samples: usize) -> Result<PathEnsemble> {
    let rng = SeededRng::new(cfg.seed, 0);
    match &cfg.study {
        Study::Example1Direct(p) | Study::Example1Translation(p) => {
            let (_, coarse) = example1_grids(p)?;
            let parts = p
                .inputs
                .iter()
                .enumerate()
                .map(|(i, input)| {
                    let k = Kernel::matern_like(input.nu, 0.0, p.tau)?;
                    sample_gaussian_process(&k, &coarse, n_samples, rng.fork(i as u64), 1)
                })
                .collect::<Result<Vec<_>>>()?;
            PathEnsemble::stack(&parts.iter().collect::<Vec<_>>())?
                .with_labels(vec!["G1".into(), "G2".into()])
        }
        Study::Example2Response(p) | Study::Example2Input(p) => {
            sample_ou(p.rho, &Grid::with_step(0.0, p.tau, p.dt)?, n_samples, rng)
        }
        Study::Example3Conductivity(p) => {
            let k = Kernel::gauss_2d(p.rho, p.lo, p.hi)?;
            sample_gaussian_field_2d(
                &k,
                &Grid::tensor_uniform(p.lo, p.hi, p.nodes)?,
                n_samples,
                rng,
            )
        }
        Study::Custom(p) => {
            let (_, coarse) = custom_grids(p)?;
            sample_gaussian_process(&p.kernel, &coarse, n_samples, rng, 1)
        }
    }
}

/// Samples the inputs and analyzes them.
pub fn run_study(cfg: &ExperimentConfig, n_samples: usize) -> Result<StudyResult> {
    let errors = crate::config::validate(cfg);
    if !errors.is_empty() {
        return Err(Error::Argument(errors.join("; ")));
    }
    let inputs = Arc::new(sample_inputs(cfg, n_samples)?);
    analyze(cfg, inputs)
}

/// Builds the FD models and statistics from stored inputs.
pub fn analyze(cfg: &ExperimentConfig, inputs: Arc<PathEnsemble>) -> Result<StudyResult> {
    let mut out = match &cfg.study {
        Study::Example1Direct(p) => example1(cfg, p, inputs, false),
        Study::Example1Translation(p) => example1(cfg, p, inputs, true),
        Study::Example2Input(p) => example2(cfg, p, inputs, false),
        Study::Example2Response(p) => example2(cfg, p, inputs, true),
        Study::Example3Conductivity(p) => example3(cfg, p, inputs),
        Study::Custom(p) => custom(cfg, p, inputs),
    }?;
    out.summary.name = cfg.name.clone();
    out.summary.kind = cfg.study.kind().to_string();
    out.summary.seed = cfg.seed;
    Ok(out)
}

/// Kernel bases of a study without sampling, for inspection and export.
///
/// Studies whose bases come from sample covariances fall back to the input
/// kernel. A cosine kernel additionally yields its analytic basis.
pub fn study_bases(cfg: &ExperimentConfig) -> Result<Vec<(String, Arc<SpectralBasis>)>> {
    let errors = crate::config::validate(cfg);
    if !errors.is_empty() {
        return Err(Error::Argument(errors.join("; ")));
    }
    let mut out = Vec::new();
    match &cfg.study {
        Study::Example1Direct(p) | Study::Example1Translation(p) => {
            let (_, coarse) = example1_grids(p)?;
            let dmax = p
                .levels
                .iter()
                .flat_map(|l| l.iter())
                .copied()
                .max()
                .unwrap_or(1);
            let direct = matches!(cfg.study, Study::Example1Direct(_));
            for (i, input) in p.inputs.iter().enumerate() {
                let base = Kernel::matern_like(input.nu, 0.0, p.tau)?;
                let (name, b) = if direct {
                    let tk = TranslatedKernel::new(base, input.marginal, p.hermite_terms)?;
                    (
                        format!("basis_Y{}", i + 1),
                        basis_on_grid(&tk, &coarse, dmax)?,
                    )
                } else {
                    (
                        format!("basis_G{}", i + 1),
                        basis_on_grid(&base, &coarse, dmax)?,
                    )
                };
                out.push((name, Arc::new(b)));
            }
        }
        Study::Example2Response(p) | Study::Example2Input(p) => {
            let grid = Grid::with_step(0.0, p.tau, p.dt)?;
            let k = Kernel::ou(p.rho, 0.0, p.tau)?;
            let dmax = *p.levels.iter().max().unwrap_or(&1);
            out.push(("basis_Y".into(), Arc::new(basis_on_grid(&k, &grid, dmax)?)));
        }
        Study::Example3Conductivity(p) => {
            let grid = Grid::tensor_uniform(p.lo, p.hi, p.nodes)?;
            let k = Kernel::gauss_2d(p.rho, p.lo, p.hi)?;
            let dmax = *p.levels.iter().max().unwrap_or(&1);
            out.push(("basis_G".into(), Arc::new(basis_on_grid(&k, &grid, dmax)?)));
        }
        Study::Custom(p) => {
            let (_, coarse) = custom_grids(p)?;
            let dmax = *p.levels.iter().max().unwrap_or(&1);
            let b = match &p.marginal {
                Some(m) => {
                    let tk = TranslatedKernel::new(p.kernel, *m, p.hermite_terms)?;
                    basis_on_grid(&tk, &coarse, dmax)?
                }
                None => basis_on_grid(&p.kernel, &coarse, dmax)?,
            };
            out.push(("basis_X".into(), Arc::new(b)));
            if let (crate::kernels::KernelFamily::CosineExample { gamma }, None) =
                (p.kernel.family(), &p.marginal)
            {
                let tau = 0.5 * (p.kernel.domain().upper()[0] - p.kernel.domain().lower()[0]);
                let a = crate::kernels::analytic_cosine_basis(gamma, tau, dmax, coarse.len())?;
                out.push(("basis_X_analytic".into(), Arc::new(a)));
            }
        }
    }
    Ok(out)
}

fn example1_grids(p: &Example1) -> Result<(Grid, Grid)> {
    let fine = Grid::with_step(0.0, p.tau, p.dt)?;
    let coarse = fine.thinned(p.thin)?;
    Ok((fine, coarse))
}

fn custom_grids(p: &Custom) -> Result<(Grid, Grid)> {
    let (lo, hi) = (p.kernel.domain().lower()[0], p.kernel.domain().upper()[0]);
    let fine = Grid::with_step(lo, hi, p.dt)?;
    let coarse = fine.thinned(p.thin)?;
    Ok((fine, coarse))
}

fn check_inputs(inputs: &PathEnsemble, grid: &Grid, components: usize) -> Result<()> {
    if !inputs.grid().approx_eq(grid) || inputs.n_components() != components {
        return Err(Error::argument(format!(
            "stored inputs ({} components on {} nodes) do not match the configuration",
            inputs.n_components(),
            inputs.n_nodes()
        )));
    }
    Ok(())
}

/// Linear interpolation of every path onto a finer 1D grid.
fn refine(coarse: &PathEnsemble, fine: &Grid) -> Result<PathEnsemble> {
    let (xc, xf) = match (coarse.grid().nodes(), fine.nodes()) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err(Error::argument("refinement needs 1D grids")),
    };
    if coarse.grid().approx_eq(fine) {
        return Ok(coarse.clone());
    }
    let values: Vec<Vec<f64>> = (0..coarse.n_samples())
        .into_par_iter()
        .map(|s| {
            (0..coarse.n_components())
                .flat_map(|c| interpolate_linear(xc, coarse.path(s, c), xf))
                .collect()
        })
        .collect();
    PathEnsemble::new(
        fine.clone(),
        coarse.labels().to_vec(),
        values.concat(),
        coarse.seed().cloned(),
    )
}

fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()))
}

fn sup_abs(a: &[f64]) -> f64 {
    a.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

/// `[quantity][sample]` or `[quantity][node]`.
type Table = Vec<Vec<f64>>;

/// Paired target and FD paths of one sample, one entry per component.
struct SamplePaths {
    target: Vec<Vec<f64>>,
    fd: Vec<Vec<f64>>,
}

/// Per-sample sup-discrepancies and FD sup-extremes, `[quantity][sample]`,
/// with the vector norm appended when there are several components.
fn level_statistics<F>(n: usize, eval: F) -> Result<(Table, Table)>
where
    F: Fn(usize) -> Result<SamplePaths> + Sync,
{
    let per: Vec<(Vec<f64>, Vec<f64>)> = (0..n)
        .into_par_iter()
        .map(|s| {
            let p = eval(s)?;
            let mut disc: Vec<f64> =
                p.fd.iter()
                    .zip(&p.target)
                    .map(|(a, b)| sup_diff(a, b))
                    .collect();
            let mut ext: Vec<f64> = p.fd.iter().map(|a| sup_abs(a)).collect();
            if p.fd.len() > 1 {
                disc.push(disc.iter().fold(0.0_f64, |m, v| m.max(*v)));
                ext.push(ext.iter().fold(0.0_f64, |m, v| m.max(*v)));
            }
            Ok((disc, ext))
        })
        .collect::<Result<_>>()?;
    Ok(transpose_pairs(per))
}

fn transpose_pairs(per: Vec<(Vec<f64>, Vec<f64>)>) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let q = per.first().map_or(0, |p| p.0.len());
    let mut disc = vec![Vec::with_capacity(per.len()); q];
    let mut ext = vec![Vec::with_capacity(per.len()); q];
    for (d, e) in per {
        for c in 0..q {
            disc[c].push(d[c]);
            ext[c].push(e[c]);
        }
    }
    (disc, ext)
}

fn target_extremes(target: &PathEnsemble) -> Vec<Vec<f64>> {
    let nc = target.n_components();
    let per: Vec<Vec<f64>> = (0..target.n_samples())
        .into_par_iter()
        .map(|s| {
            let mut e: Vec<f64> = (0..nc).map(|c| sup_abs(target.path(s, c))).collect();
            if nc > 1 {
                e.push(e.iter().fold(0.0_f64, |m, v| m.max(*v)));
            }
            e
        })
        .collect();
    (0..per[0].len())
        .map(|c| per.iter().map(|e| e[c]).collect())
        .collect()
}

/// Statistics and tables for one monitored quantity across levels.
fn component_outputs(
    label: &str,
    target: &[f64],
    levels: Vec<LevelSample>,
    artifacts: &mut Vec<Artifact>,
) -> Result<ComponentSummary> {
    let rows = convergence_report(target, &levels)?;
    let thresholds = default_thresholds(target, DEFAULT_THRESHOLDS)?;
    let mut curves = Vec::with_capacity(levels.len() + 1);
    let mut c = exceedance(target, &thresholds)?;
    c.label = label.to_string();
    curves.push(c);
    for l in &levels {
        let mut c = exceedance(&l.fd_extremes, &thresholds)?;
        c.label = label.to_string();
        c.level = Some(l.d);
        curves.push(c);
        artifacts.push(Artifact::Scatter(
            format!("scatter_{label}_d{}", l.d),
            target.to_vec(),
            l.fd_extremes.clone(),
        ));
    }
    artifacts.push(Artifact::Exceedance(format!("exceedance_{label}"), curves));
    artifacts.push(Artifact::Report(
        format!("report_{label}"),
        label.to_string(),
        rows.clone(),
    ));
    Ok(ComponentSummary {
        label: label.to_string(),
        target_std: std_dev(target),
        rows,
    })
}

/// Overlay tables `t, target_s, fd_s` for the first samples.
fn overlays<F>(
    labels: &[String],
    grid: &Grid,
    levels: &[usize],
    n: usize,
    eval: F,
    artifacts: &mut Vec<Artifact>,
) -> Result<()>
where
    F: Fn(usize) -> Result<SamplePaths>,
{
    if n == 0 {
        return Ok(());
    }
    let paths = (0..n).map(&eval).collect::<Result<Vec<_>>>()?;
    for (c, label) in labels.iter().enumerate() {
        let mut cols = Vec::new();
        for (s, p) in paths.iter().enumerate() {
            cols.push((format!("target_{s}"), p.target[c].clone()));
            cols.push((format!("fd_{s}"), p.fd[c].clone()));
        }
        artifacts.push(Artifact::Overlay(
            format!("overlay_{label}_d{}", levels[c]),
            grid.clone(),
            cols,
        ));
    }
    Ok(())
}

fn example1(
    cfg: &ExperimentConfig,
    p: &Example1,
    inputs: Arc<PathEnsemble>,
    translation: bool,
) -> Result<StudyResult> {
    let (fine, coarse) = example1_grids(p)?;
    check_inputs(&inputs, &coarse, 2)?;
    let n = inputs.n_samples();
    let g = Arc::new(refine(&inputs, &fine)?);
    let marginals: Vec<Marginal> = p.inputs.iter().map(|i| i.marginal).collect();
    let y = Arc::new(
        PathEnsemble::stack(&[
            &crate::samplers::translation_apply(&marginals[0], &g.component(0)?)?,
            &crate::samplers::translation_apply(&marginals[1], &g.component(1)?)?,
        ])?
        .with_labels(vec!["Y1".into(), "Y2".into()])?,
    );
    let dmax = p
        .levels
        .iter()
        .flat_map(|l| l.iter())
        .copied()
        .max()
        .unwrap_or(1);
    let mut diagnostics = BTreeMap::new();
    let mut bases = Vec::new();
    for (i, input) in p.inputs.iter().enumerate() {
        let base = Kernel::matern_like(input.nu, 0.0, p.tau)?;
        let basis = if translation {
            basis_on_grid(&base, &coarse, dmax)?
        } else {
            let tk = TranslatedKernel::new(base, input.marginal, p.hermite_terms)?;
            diagnostics.insert(format!("hermite_completeness_{}", i + 1), tk.completeness());
            basis_on_grid(&tk, &coarse, dmax)?
        };
        diagnostics.insert(
            format!("orthonormality_residual_{}", i + 1),
            basis.orthonormality_residual(),
        );
        bases.push(Arc::new(basis));
    }
    let model = if translation {
        FdModel::project(g.clone(), bases.clone(), &[dmax, dmax])?
    } else {
        let means = marginals
            .iter()
            .map(|m| vec![m.mean(); fine.len()])
            .collect();
        FdModel::project_centered(y.clone(), bases.clone(), &[dmax, dmax], means)?
    };
    let target = |s: usize| -> Vec<Vec<f64>> {
        let (y1, y2) = (y.path(s, 0), y.path(s, 1));
        vec![y1.to_vec(), y1.iter().zip(y2).map(|(a, b)| a + b).collect()]
    };
    let eval = |s: usize, d1: usize, d2: usize| -> Result<SamplePaths> {
        let fd = if translation {
            let a: Vec<f64> = model
                .reconstruct_at(s, 0, d1)?
                .iter()
                .map(|z| marginals[0].from_gaussian(*z))
                .collect();
            let b = model.reconstruct_at(s, 1, d2)?;
            let x2 = a
                .iter()
                .zip(&b)
                .map(|(u, z)| u + marginals[1].from_gaussian(*z))
                .collect();
            vec![a, x2]
        } else {
            let a = model.reconstruct_at(s, 0, d1)?;
            let b = model.reconstruct_at(s, 0, d2)?;
            let c = model.reconstruct_at(s, 1, d2)?;
            vec![a, b.iter().zip(&c).map(|(u, v)| u + v).collect()]
        };
        Ok(SamplePaths {
            target: target(s),
            fd,
        })
    };

    let target_ens = PathEnsemble::new(
        fine.clone(),
        vec!["X1".into(), "X2".into()],
        (0..n).flat_map(|s| target(s).concat()).collect(),
        y.seed().cloned(),
    )?;
    let t_ext = target_extremes(&target_ens);
    drop(target_ens);

    let labels = ["X1", "X2", "norm"];
    let mut per_label: Vec<Vec<LevelSample>> = vec![Vec::new(); 3];
    let mut artifacts = vec![Artifact::Ensemble("inputs".into(), inputs.clone())];
    for (i, b) in bases.iter().enumerate() {
        artifacts.push(Artifact::Basis(format!("basis_Y{}", i + 1), b.clone()));
    }
    artifacts.push(Artifact::Coefficients("coefficients".into(), model.clone()));
    for &[d1, d2] in &p.levels {
        let (disc, ext) = level_statistics(n, |s| eval(s, d1, d2))?;
        for (q, (dq, eq)) in disc.into_iter().zip(ext).enumerate() {
            let d = if q == 0 { d1 } else { d2 };
            per_label[q].push(LevelSample {
                d,
                discrepancy: dq,
                fd_extremes: eq,
            });
        }
        overlays(
            &["X1".into(), "X2".into()],
            &fine,
            &[d1, d2],
            cfg.n_overlays.min(n),
            |s| eval(s, d1, d2),
            &mut artifacts,
        )?;
    }
    let components = labels
        .iter()
        .zip(per_label)
        .zip(&t_ext)
        .map(|((l, levels), t)| component_outputs(l, t, levels, &mut artifacts))
        .collect::<Result<Vec<_>>>()?;
    Ok(StudyResult {
        summary: Summary {
            name: String::new(),
            kind: String::new(),
            seed: 0,
            n_samples: n,
            levels: p.levels.iter().map(|l| l.to_vec()).collect(),
            components,
            checks: Vec::new(),
            diagnostics,
        },
        artifacts,
    })
}

fn example2(
    cfg: &ExperimentConfig,
    p: &Example2,
    inputs: Arc<PathEnsemble>,
    response_model: bool,
) -> Result<StudyResult> {
    let grid = Grid::with_step(0.0, p.tau, p.dt)?;
    check_inputs(&inputs, &grid, 1)?;
    let n = inputs.n_samples();
    let params = crate::dynamics::OscillatorParams::new(p.oscillators.clone())?;
    let nc = params.components.len();
    let target = Arc::new(oscillator_responses(&params, &inputs)?);
    let labels: Vec<String> = (1..=nc).map(|i| format!("X{i}")).collect();
    let dmax = *p.levels.iter().max().unwrap_or(&1);
    let mut diagnostics = BTreeMap::new();
    let mut artifacts = vec![Artifact::Ensemble("inputs".into(), inputs.clone())];

    let model = if response_model {
        let bases = (0..nc)
            .map(|c| response_basis(&target, c, dmax).map(Arc::new))
            .collect::<Result<Vec<_>>>()?;
        for (c, b) in bases.iter().enumerate() {
            diagnostics.insert(
                format!("orthonormality_residual_X{}", c + 1),
                b.orthonormality_residual(),
            );
            artifacts.push(Artifact::Basis(format!("basis_X{}", c + 1), b.clone()));
        }
        let means = (0..nc).map(|c| target.mean_path(c)).collect();
        FdModel::project_centered(target.clone(), bases, &vec![dmax; nc], means)?
    } else {
        let k = Kernel::ou(p.rho, 0.0, p.tau)?;
        let b = Arc::new(basis_on_grid(&k, &grid, dmax)?);
        diagnostics.insert(
            "orthonormality_residual_Y".into(),
            b.orthonormality_residual(),
        );
        artifacts.push(Artifact::Basis("basis_Y".into(), b.clone()));
        FdModel::project(inputs.clone(), vec![b], &[dmax])?
    };
    artifacts.push(Artifact::Coefficients("coefficients".into(), model.clone()));

    let dt = p.dt;
    let eval = |s: usize, d: usize| -> Result<SamplePaths> {
        let tgt: Vec<Vec<f64>> = (0..nc).map(|c| target.path(s, c).to_vec()).collect();
        let fd = if response_model {
            (0..nc)
                .map(|c| model.reconstruct_at(s, c, d))
                .collect::<Result<Vec<_>>>()?
        } else {
            let sq: Vec<f64> = model
                .reconstruct_at(s, 0, d)?
                .iter()
                .map(|v| v * v)
                .collect();
            params
                .components
                .iter()
                .map(|o| duhamel(o, &sq, dt))
                .collect()
        };
        Ok(SamplePaths { target: tgt, fd })
    };

    let t_ext = target_extremes(&target);
    let mut names = labels.clone();
    if nc > 1 {
        names.push("norm".into());
    }
    let mut per_label: Vec<Vec<LevelSample>> = vec![Vec::new(); names.len()];
    let mut checks = Vec::new();
    for &d in &p.levels {
        let (disc, ext) = level_statistics(n, |s| eval(s, d))?;
        if !response_model {
            checks.extend(bound_checks(
                &params.components,
                &inputs,
                &model,
                &disc,
                d,
                p.tau,
            )?);
        }
        for (q, (dq, eq)) in disc.into_iter().zip(ext).enumerate() {
            per_label[q].push(LevelSample {
                d,
                discrepancy: dq,
                fd_extremes: eq,
            });
        }
        overlays(
            &labels,
            &grid,
            &vec![d; nc],
            cfg.n_overlays.min(n),
            |s| eval(s, d),
            &mut artifacts,
        )?;
    }
    let components = names
        .iter()
        .zip(per_label)
        .zip(&t_ext)
        .map(|((l, levels), t)| component_outputs(l, t, levels, &mut artifacts))
        .collect::<Result<Vec<_>>>()?;
    Ok(StudyResult {
        summary: Summary {
            name: String::new(),
            kind: String::new(),
            seed: 0,
            n_samples: n,
            levels: p.levels.iter().map(|d| vec![*d; nc]).collect(),
            components,
            checks,
            diagnostics,
        },
        artifacts,
    })
}

/// `sup|X_{i,d} - X_i| <= (γ_i τ/ψ_i) sup|Y_d² - Y²|` on every sample.
fn bound_checks(
    oscillators: &[Oscillator],
    inputs: &PathEnsemble,
    model: &FdModel,
    disc: &[Vec<f64>],
    d: usize,
    tau: f64,
) -> Result<Vec<Check>> {
    let n = inputs.n_samples();
    let forcing_gap: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|s| {
            let yd = model.reconstruct_at(s, 0, d)?;
            Ok(inputs
                .path(s, 0)
                .iter()
                .zip(&yd)
                .fold(0.0_f64, |m, (y, z)| m.max((z * z - y * y).abs())))
        })
        .collect::<Result<_>>()?;
    Ok(oscillators
        .iter()
        .enumerate()
        .map(|(c, o)| {
            let gain = o.sup_gain(tau);
            let mut holds = 0;
            let mut worst = 0.0_f64;
            for (lhs, gap) in disc[c].iter().zip(&forcing_gap) {
                let rhs = gain * gap;
                if *lhs <= rhs * (1.0 + 1e-12) {
                    holds += 1;
                }
                if rhs > 0.0 {
                    worst = worst.max(lhs / rhs);
                }
            }
            Check {
                name: "oscillator_sup_bound".into(),
                component: format!("X{}", c + 1),
                d,
                holds,
                total: n,
                worst_ratio: worst,
            }
        })
        .collect())
}

fn example3(
    cfg: &ExperimentConfig,
    p: &Example3,
    inputs: Arc<PathEnsemble>,
) -> Result<StudyResult> {
    let grid = Grid::tensor_uniform(p.lo, p.hi, p.nodes)?;
    check_inputs(&inputs, &grid, 1)?;
    let n = inputs.n_samples();
    let kernel = Kernel::gauss_2d(p.rho, p.lo, p.hi)?;
    let dmax = *p.levels.iter().max().unwrap_or(&1);
    let basis = Arc::new(basis_on_grid(&kernel, &grid, dmax)?);
    let model = FdModel::project(inputs.clone(), vec![basis.clone()], &[dmax])?;
    let mut diagnostics = BTreeMap::new();
    diagnostics.insert(
        "orthonormality_residual_G".into(),
        basis.orthonormality_residual(),
    );
    diagnostics.insert(
        "captured_variance_fraction".into(),
        basis.eigenvalues().iter().sum::<f64>() / basis.discrete_trace(),
    );

    let field_of = |g: &[f64]| -> Result<ConductivitySample> {
        ConductivitySample::new(
            grid.clone(),
            g.iter().map(|z| p.marginal.from_gaussian(*z)).collect(),
        )
    };
    let solve = |g: &[f64]| -> Result<(ConductivitySample, Vec<f64>, ApparentConductivity)> {
        let f = field_of(g)?;
        let u = solve_conductivity(&f)?;
        let a = apparent_conductivity(&f, &u)?;
        Ok((f, u.values().to_vec(), a))
    };
    let pick = |a: &ApparentConductivity| match p.normalization {
        Normalization::Literal => a.literal,
        Normalization::Normalized => a.normalized,
    };

    let target: Vec<ApparentConductivity> = (0..n)
        .into_par_iter()
        .map(|s| solve(inputs.path(s, 0)).map(|r| r.2))
        .collect::<Result<_>>()?;
    let mut per_level = Vec::new();
    for &d in &p.levels {
        let a: Vec<ApparentConductivity> = (0..n)
            .into_par_iter()
            .map(|s| solve(&model.reconstruct_at(s, 0, d)?).map(|r| r.2))
            .collect::<Result<_>>()?;
        per_level.push(a);
    }

    let mut artifacts = vec![
        Artifact::Ensemble("inputs".into(), inputs.clone()),
        Artifact::Basis("basis_G".into(), basis.clone()),
        Artifact::Coefficients("coefficients".into(), model.clone()),
    ];
    let mut header = vec![
        "sample_id".to_string(),
        "target_literal".into(),
        "target_normalized".into(),
    ];
    for d in &p.levels {
        header.push(format!("d{d}_literal"));
        header.push(format!("d{d}_normalized"));
    }
    let rows = (0..n)
        .map(|s| {
            let mut r = vec![s as f64, target[s].literal, target[s].normalized];
            for a in &per_level {
                r.push(a[s].literal);
                r.push(a[s].normalized);
            }
            r
        })
        .collect();
    artifacts.push(Artifact::Table("apparent".into(), header, rows));

    if cfg.n_overlays > 0 {
        let (f, u, _) = solve(inputs.path(0, 0))?;
        artifacts.push(Artifact::Field(
            "field_target".into(),
            grid.clone(),
            "x".into(),
            f.values().to_vec(),
        ));
        artifacts.push(Artifact::Field(
            "potential_target".into(),
            grid.clone(),
            "u".into(),
            u,
        ));
        for &d in &p.levels {
            let (f, u, _) = solve(&model.reconstruct_at(0, 0, d)?)?;
            artifacts.push(Artifact::Field(
                format!("field_fd_d{d}"),
                grid.clone(),
                "x".into(),
                f.values().to_vec(),
            ));
            artifacts.push(Artifact::Field(
                format!("potential_fd_d{d}"),
                grid.clone(),
                "u".into(),
                u,
            ));
        }
    }

    let t: Vec<f64> = target.iter().map(pick).collect();
    let levels = p
        .levels
        .iter()
        .zip(&per_level)
        .map(|(d, a)| {
            let fd: Vec<f64> = a.iter().map(pick).collect();
            LevelSample {
                d: *d,
                discrepancy: fd.iter().zip(&t).map(|(x, y)| (x - y).abs()).collect(),
                fd_extremes: fd,
            }
        })
        .collect();
    let components = vec![component_outputs("Xapp", &t, levels, &mut artifacts)?];
    Ok(StudyResult {
        summary: Summary {
            name: String::new(),
            kind: String::new(),
            seed: 0,
            n_samples: n,
            levels: p.levels.iter().map(|d| vec![*d]).collect(),
            components,
            checks: Vec::new(),
            diagnostics,
        },
        artifacts,
    })
}

fn custom(cfg: &ExperimentConfig, p: &Custom, inputs: Arc<PathEnsemble>) -> Result<StudyResult> {
    let (fine, coarse) = custom_grids(p)?;
    check_inputs(&inputs, &coarse, 1)?;
    let n = inputs.n_samples();
    let g = refine(&inputs, &fine)?;
    let dmax = *p.levels.iter().max().unwrap_or(&1);
    let mut diagnostics = BTreeMap::new();
    let (x, basis, mean) = match &p.marginal {
        Some(m) => {
            let tk = TranslatedKernel::new(p.kernel, *m, p.hermite_terms)?;
            diagnostics.insert("hermite_completeness".into(), tk.completeness());
            let b = basis_on_grid(&tk, &coarse, dmax)?;
            (crate::samplers::translation_apply(m, &g)?, b, m.mean())
        }
        None => (g, basis_on_grid(&p.kernel, &coarse, dmax)?, 0.0),
    };
    let x = Arc::new(x.with_labels(vec!["X".into()])?);
    let basis = Arc::new(basis);
    diagnostics.insert(
        "orthonormality_residual".into(),
        basis.orthonormality_residual(),
    );
    let model = FdModel::project_centered(
        x.clone(),
        vec![basis.clone()],
        &[dmax],
        vec![vec![mean; fine.len()]],
    )?;
    let eval = |s: usize, d: usize| -> Result<SamplePaths> {
        Ok(SamplePaths {
            target: vec![x.path(s, 0).to_vec()],
            fd: vec![model.reconstruct_at(s, 0, d)?],
        })
    };
    let mut artifacts = vec![
        Artifact::Ensemble("inputs".into(), inputs.clone()),
        Artifact::Basis("basis_X".into(), basis),
        Artifact::Coefficients("coefficients".into(), model.clone()),
    ];
    let t_ext = target_extremes(&x);
    let mut levels = Vec::new();
    for &d in &p.levels {
        let (mut disc, mut ext) = level_statistics(n, |s| eval(s, d))?;
        levels.push(LevelSample {
            d,
            discrepancy: disc.remove(0),
            fd_extremes: ext.remove(0),
        });
        overlays(
            &["X".into()],
            &fine,
            &[d],
            cfg.n_overlays.min(n),
            |s| eval(s, d),
            &mut artifacts,
        )?;
    }
    let components = vec![component_outputs("X", &t_ext[0], levels, &mut artifacts)?];
    Ok(StudyResult {
        summary: Summary {
            name: String::new(),
            kind: String::new(),
            seed: 0,
            n_samples: n,
            levels: p.levels.iter().map(|d| vec![*d]).collect(),
            components,
            checks: Vec::new(),
            diagnostics,
        },
        artifacts,
    })
}
