//! On-disk formats: basis and coefficient CSVs with JSON sidecars, flat
//! binary ensembles, and the tables consumed by the plotting scripts.
//!
//! CSVs are comma-separated with a header row. Floats are written in the
//! shortest form that round-trips, so identical values give identical bytes.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::ensemble::{PathEnsemble, SeedRecord};
use crate::error::{Error, Result};
use crate::extremes::{ConvergenceRow, ExceedanceCurve};
use crate::grid::{Grid, Quadrature};
use crate::kernels::{BasisSource, SpectralBasis};
use crate::klmodel::FdModel;

pub const ENSEMBLE_MAGIC: [u8; 8] = *b"FDENSEMB";
pub const ENSEMBLE_VERSION: u32 = 1;

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir).map_err(|e| io_at(path, e))?;
        }
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| io_at(path, e))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| io_at(path, e))
}

fn io_at(path: &Path, e: std::io::Error) -> Error {
    Error::Io(std::io::Error::new(
        e.kind(),
        format!("{}: {e}", path.display()),
    ))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    Ok(csv::Writer::from_writer(create(path)?))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n").map_err(|e| io_at(path, e))?;
    w.flush().map_err(|e| io_at(path, e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    Ok(serde_json::from_reader(open(path)?)?)
}

/// Writes a numeric table with the given header.
pub fn write_table(
    path: &Path,
    header: &[&str],
    rows: impl IntoIterator<Item = Vec<f64>>,
) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(header)?;
    for row in rows {
        if row.len() != header.len() {
            return Err(Error::argument(format!(
                "row of {} values under a {}-column header",
                row.len(),
                header.len()
            )));
        }
        w.write_record(row.iter().map(|v| v.to_string()))?;
    }
    w.flush().map_err(|e| io_at(path, e))
}

fn coordinate_headers(grid: &Grid) -> Vec<String> {
    match grid {
        Grid::Line { .. } => vec!["t".into()],
        Grid::Tensor { .. } => vec!["t1".into(), "t2".into()],
    }
}

/// JSON sidecar of a basis CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisMeta {
    pub eigenvalues: Vec<f64>,
    pub source: BasisSource,
    pub quadrature: Quadrature,
    pub grid: Grid,
    pub weights: Vec<f64>,
    /// `C_k = max_j φ_k(t_j)²`.
    pub sup_squares: Vec<f64>,
    pub discrete_trace: f64,
}

/// Writes `csv_path` (coordinates then `phi_1..phi_d` per node) and the sidecar.
pub fn write_basis(basis: &SpectralBasis, csv_path: &Path, json_path: &Path) -> Result<()> {
    let grid = basis.grid();
    let mut header = coordinate_headers(grid);
    header.extend((1..=basis.n_modes()).map(|k| format!("phi_{k}")));
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let rows = grid.points().into_iter().enumerate().map(|(j, mut p)| {
        p.extend(basis.modes().row(j).iter());
        p
    });
    write_table(csv_path, &header, rows)?;
    write_json(
        json_path,
        &BasisMeta {
            eigenvalues: basis.eigenvalues().to_vec(),
            source: basis.source().clone(),
            quadrature: basis.quadrature(),
            grid: grid.clone(),
            weights: basis.weights().to_vec(),
            sup_squares: basis.sup_squares().to_vec(),
            discrete_trace: basis.discrete_trace(),
        },
    )
}

pub fn read_basis(csv_path: &Path, json_path: &Path) -> Result<SpectralBasis> {
    let meta: BasisMeta = read_json(json_path)?;
    let coords = meta.grid.dim();
    let d = meta.eigenvalues.len();
    let mut r = csv::Reader::from_reader(open(csv_path)?);
    let mut values = Vec::with_capacity(meta.grid.len() * d);
    let mut rows = 0;
    for rec in r.records() {
        let rec = rec?;
        if rec.len() != coords + d {
            return Err(Error::Format(format!(
                "{}: row {rows} has {} fields, expected {}",
                csv_path.display(),
                rec.len(),
                coords + d
            )));
        }
        for f in rec.iter().skip(coords) {
            values.push(parse_f64(f, csv_path)?);
        }
        rows += 1;
    }
    if rows != meta.grid.len() {
        return Err(Error::Format(format!(
            "{}: {rows} rows for a grid of {} nodes",
            csv_path.display(),
            meta.grid.len()
        )));
    }
    SpectralBasis::new(
        meta.eigenvalues,
        DMatrix::from_row_slice(rows, d, &values),
        meta.grid,
        meta.weights,
        meta.quadrature,
        meta.source,
        meta.discrete_trace,
    )
}

fn parse_f64(s: &str, path: &Path) -> Result<f64> {
    s.trim().parse().map_err(|_| {
        Error::Format(format!(
            "{}: cannot parse {s:?} as a number",
            path.display()
        ))
    })
}

/// Model metadata written next to the coefficient CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub labels: Vec<String>,
    pub levels: Vec<usize>,
    pub n_samples: usize,
    pub eigenvalues: Vec<Vec<f64>>,
    pub sources: Vec<BasisSource>,
    pub seed: Option<SeedRecord>,
}

/// Coefficients as `sample_id,component,k,z` rows (`k` from 1) plus metadata.
pub fn write_coefficients(model: &FdModel, csv_path: &Path, json_path: &Path) -> Result<()> {
    let mut w = csv_writer(csv_path)?;
    w.write_record(["sample_id", "component", "k", "z"])?;
    let labels = model.source().labels();
    for s in 0..model.n_samples() {
        for (c, label) in labels.iter().enumerate() {
            for (k, z) in model.coefficients(s, c).iter().enumerate() {
                w.write_record([
                    s.to_string(),
                    label.clone(),
                    (k + 1).to_string(),
                    z.to_string(),
                ])?;
            }
        }
    }
    w.flush().map_err(|e| io_at(csv_path, e))?;
    write_json(
        json_path,
        &ModelMeta {
            labels: labels.to_vec(),
            levels: model.levels().to_vec(),
            n_samples: model.n_samples(),
            eigenvalues: (0..model.n_components())
                .map(|c| model.basis(c).eigenvalues()[..model.levels()[c]].to_vec())
                .collect(),
            sources: (0..model.n_components())
                .map(|c| model.basis(c).source().clone())
                .collect(),
            seed: model.source().seed().cloned(),
        },
    )
}

/// JSON metadata of a binary ensemble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleMeta {
    pub format: String,
    pub version: u32,
    pub layout: String,
    pub n_samples: usize,
    pub labels: Vec<String>,
    pub grid: Grid,
    pub seed: Option<SeedRecord>,
}

/// Binary layout, all little-endian: magic, `u32` version, `u32` grid
/// dimension, `u64` sample count, `u64` component count, one `u64` length
/// per axis, the axis coordinates as `f64`, then the values sample-major
/// as `f64` (`[sample][component][node]`).
pub fn write_ensemble(ens: &PathEnsemble, bin_path: &Path, json_path: &Path) -> Result<()> {
    let mut w = create(bin_path)?;
    let axes = ens.grid().axes();
    let mut put = |bytes: &[u8]| w.write_all(bytes).map_err(|e| io_at(bin_path, e));
    put(&ENSEMBLE_MAGIC)?;
    put(&ENSEMBLE_VERSION.to_le_bytes())?;
    put(&(axes.len() as u32).to_le_bytes())?;
    put(&(ens.n_samples() as u64).to_le_bytes())?;
    put(&(ens.n_components() as u64).to_le_bytes())?;
    for a in &axes {
        put(&(a.len() as u64).to_le_bytes())?;
    }
    for v in axes.iter().flat_map(|a| a.iter()).chain(ens.values()) {
        put(&v.to_le_bytes())?;
    }
    w.flush().map_err(|e| io_at(bin_path, e))?;
    write_json(
        json_path,
        &EnsembleMeta {
            format: "fdmodels-ensemble".into(),
            version: ENSEMBLE_VERSION,
            layout: "f64 little-endian, [sample][component][node], tensor nodes t1-major".into(),
            n_samples: ens.n_samples(),
            labels: ens.labels().to_vec(),
            grid: ens.grid().clone(),
            seed: ens.seed().cloned(),
        },
    )
}

pub fn read_ensemble(bin_path: &Path, json_path: &Path) -> Result<PathEnsemble> {
    let meta: EnsembleMeta = read_json(json_path)?;
    let mut bytes = Vec::new();
    open(bin_path)?
        .read_to_end(&mut bytes)
        .map_err(|e| io_at(bin_path, e))?;
    let bad = |what: &str| Error::Format(format!("{}: {what}", bin_path.display()));
    let mut pos = 0usize;
    let mut take = |n: usize| -> Result<&[u8]> {
        let s = bytes
            .get(pos..pos + n)
            .ok_or_else(|| bad("truncated file"))?;
        pos += n;
        Ok(s)
    };
    if take(8)? != ENSEMBLE_MAGIC {
        return Err(bad("not an ensemble file"));
    }
    let u32_at = |s: &[u8]| u32::from_le_bytes(s.try_into().unwrap());
    let u64_at = |s: &[u8]| u64::from_le_bytes(s.try_into().unwrap()) as usize;
    let version = u32_at(take(4)?);
    if version != ENSEMBLE_VERSION {
        return Err(bad(&format!("unsupported version {version}")));
    }
    let dim = u32_at(take(4)?) as usize;
    let n_samples = u64_at(take(8)?);
    let n_components = u64_at(take(8)?);
    if dim == 0 || dim > 2 {
        return Err(bad(&format!("grid dimension {dim}")));
    }
    let lens = (0..dim)
        .map(|_| take(8).map(u64_at))
        .collect::<Result<Vec<_>>>()?;
    let mut floats = |n: usize| -> Result<Vec<f64>> {
        let raw = take(n.checked_mul(8).ok_or_else(|| bad("size overflow"))?)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    };
    let axes = lens
        .iter()
        .map(|n| floats(*n))
        .collect::<Result<Vec<_>>>()?;
    let grid = match axes.len() {
        1 => Grid::line(axes[0].clone())?,
        _ => Grid::tensor(axes[0].clone(), axes[1].clone())?,
    };
    let values = floats(n_samples * n_components * grid.len())?;
    if pos != bytes.len() {
        return Err(bad("trailing bytes"));
    }
    if !grid.approx_eq(&meta.grid)
        || meta.labels.len() != n_components
        || meta.n_samples != n_samples
    {
        return Err(bad("header disagrees with the JSON metadata"));
    }
    PathEnsemble::new(grid, meta.labels, values, meta.seed)
}

/// Exceedance curves in long form: `label,d,threshold,probability,std_error`
/// with `d = 0` marking the target.
pub fn write_exceedance(path: &Path, curves: &[ExceedanceCurve]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["label", "d", "threshold", "probability", "std_error"])?;
    for c in curves {
        let d = c.level.unwrap_or(0).to_string();
        for ((x, p), se) in c.thresholds.iter().zip(&c.probabilities).zip(&c.std_errors) {
            w.write_record([
                c.label.clone(),
                d.clone(),
                x.to_string(),
                p.to_string(),
                se.to_string(),
            ])?;
        }
    }
    w.flush().map_err(|e| io_at(path, e))
}

/// Convergence rows in long form, one line per `(d, ε)`.
pub fn write_report(path: &Path, label: &str, rows: &[ConvergenceRow]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record([
        "label",
        "d",
        "median_discrepancy",
        "ks_extremes",
        "correlation",
        "epsilon",
        "p_exceed",
    ])?;
    for r in rows {
        for (eps, p) in &r.exceed_fraction {
            w.write_record([
                label.to_string(),
                r.d.to_string(),
                r.median_discrepancy.to_string(),
                r.ks_extremes.to_string(),
                r.correlation.to_string(),
                eps.to_string(),
                p.to_string(),
            ])?;
        }
    }
    w.flush().map_err(|e| io_at(path, e))
}

/// Paired scatter data: `sample_id,target,fd` per sample.
pub fn write_scatter(path: &Path, target: &[f64], fd: &[f64]) -> Result<()> {
    if target.len() != fd.len() {
        return Err(Error::argument("scatter columns differ in length"));
    }
    let mut w = csv_writer(path)?;
    w.write_record(["sample_id", "target", "fd"])?;
    for (s, (a, b)) in target.iter().zip(fd).enumerate() {
        w.write_record([s.to_string(), a.to_string(), b.to_string()])?;
    }
    w.flush().map_err(|e| io_at(path, e))
}

/// Sample paths side by side: `t,<name_1>,<name_2>,...`.
pub fn write_overlay(path: &Path, grid: &Grid, columns: &[(String, Vec<f64>)]) -> Result<()> {
    let nodes = grid
        .nodes()
        .ok_or_else(|| Error::argument("overlays need a 1D grid"))?;
    if columns.iter().any(|(_, v)| v.len() != nodes.len()) {
        return Err(Error::argument(
            "overlay column length differs from the grid",
        ));
    }
    let mut header = vec!["t"];
    header.extend(columns.iter().map(|(n, _)| n.as_str()));
    write_table(
        path,
        &header,
        nodes.iter().enumerate().map(|(j, t)| {
            let mut row = vec![*t];
            row.extend(columns.iter().map(|(_, v)| v[j]));
            row
        }),
    )
}

/// A field on a tensor grid as `t1,t2,<name>` rows, t1-major.
pub fn write_field(path: &Path, grid: &Grid, name: &str, values: &[f64]) -> Result<()> {
    if grid.dim() != 2 || values.len() != grid.len() {
        return Err(Error::argument(
            "field snapshots need a tensor grid and one value per node",
        ));
    }
    write_table(
        path,
        &["t1", "t2", name],
        grid.points().into_iter().zip(values).map(|(mut p, v)| {
            p.push(*v);
            p
        }),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{basis_on_grid, Kernel};

    #[test]
    fn ensemble_roundtrip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let g = Grid::tensor_uniform([0.0, 0.0], [1.0, 2.0], [3, 4]).unwrap();
        let values: Vec<f64> = (0..48).map(|k| (k as f64).sin() / 3.0).collect();
        let seed = SeedRecord {
            algorithm: "chacha20".into(),
            seed: 9,
            stream: 2,
        };
        let e = PathEnsemble::new(g, vec!["a".into(), "b".into()], values, Some(seed)).unwrap();
        let (b, j) = (dir.path().join("e.bin"), dir.path().join("e.json"));
        write_ensemble(&e, &b, &j).unwrap();
        assert_eq!(read_ensemble(&b, &j).unwrap(), e);
        let len = std::fs::metadata(&b).unwrap().len();
        assert_eq!(len, 8 + 4 + 4 + 8 + 8 + 16 + 8 * (7 + 48));
    }

    #[test]
    fn truncated_ensemble_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let g = Grid::uniform(0.0, 1.0, 5).unwrap();
        let e = PathEnsemble::from_paths(g, "x", vec![vec![1.0; 5]; 2], None).unwrap();
        let (b, j) = (dir.path().join("e.bin"), dir.path().join("e.json"));
        write_ensemble(&e, &b, &j).unwrap();
        let bytes = std::fs::read(&b).unwrap();
        std::fs::write(&b, &bytes[..bytes.len() - 3]).unwrap();
        assert!(matches!(read_ensemble(&b, &j), Err(Error::Format(_))));
    }

    #[test]
    fn basis_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let k = Kernel::matern_like(0.5, 0.0, 4.0).unwrap();
        let g = Grid::uniform(0.0, 4.0, 41).unwrap();
        let basis = basis_on_grid(&k, &g, 6).unwrap();
        let (c, j) = (dir.path().join("b.csv"), dir.path().join("b.json"));
        write_basis(&basis, &c, &j).unwrap();
        assert_eq!(read_basis(&c, &j).unwrap(), basis);
        let text = std::fs::read_to_string(&c).unwrap();
        assert!(text.starts_with("t,phi_1,phi_2,phi_3,phi_4,phi_5,phi_6\n"));
    }

    #[test]
    fn table_checks_width() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.csv");
        assert!(write_table(&p, &["a", "b"], vec![vec![1.0]]).is_err());
        write_table(&p, &["a", "b"], vec![vec![0.1, 2.0]]).unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), "a,b\n0.1,2\n");
    }
}
