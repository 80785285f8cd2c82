//! CSV and JSON files written by the CLI, with matching readers.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use icr_core::Matrix;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRow {
    pub index: usize,
    pub euclidean_coord: f64,
    pub modeled_coord: f64,
    pub value: f64,
}

fn create(path: &Path) -> Result<File> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    File::create(path).with_context(|| format!("writing {}", path.display()))
}

/// Several realizations are written as consecutive blocks of `N` rows; the
/// index restarts at 0 for each.
pub fn write_samples(path: &Path, rows: &[SampleRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_samples(path: &Path) -> Result<Vec<SampleRow>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(r.deserialize().collect::<Result<_, _>>()?)
}

/// One entry of a refinement matrix. Broadcast levels store a single window
/// (`window = 0`) that every window of the level shares.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixEntry {
    pub level: usize,
    pub window: usize,
    pub broadcast: bool,
    /// `R` or `sqrtD`.
    pub matrix: String,
    pub row: usize,
    pub col: usize,
    pub value: f64,
}

pub fn write_entries(path: &Path, rows: &[MatrixEntry]) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_entries(path: &Path) -> Result<Vec<MatrixEntry>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(r.deserialize().collect::<Result<_, _>>()?)
}

/// Square matrix with its coordinates as the header row and first column.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledMatrix {
    pub coords: Vec<f64>,
    pub values: Matrix,
}

pub fn write_matrix(path: &Path, coords: &[f64], m: &Matrix) -> Result<()> {
    if m.nrows() != coords.len() || m.ncols() != coords.len() {
        bail!("matrix is {}x{} but there are {} coordinates", m.nrows(), m.ncols(), coords.len());
    }
    let mut w = csv::Writer::from_writer(create(path)?);
    let mut header = vec!["coord".to_string()];
    header.extend(coords.iter().map(|c| format!("{c:e}")));
    w.write_record(&header)?;
    for (i, c) in coords.iter().enumerate() {
        let mut rec = vec![format!("{c:e}")];
        rec.extend(m.row(i).iter().map(|v| format!("{v:e}")));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_matrix(path: &Path) -> Result<LabeledMatrix> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let coords: Vec<f64> = r.headers()?.iter().skip(1).map(str::parse).collect::<Result<_, _>>()?;
    let n = coords.len();
    let mut values = Matrix::zeros(n, n);
    let mut rows = 0;
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        if i >= n || rec.len() != n + 1 {
            bail!("{}: expected {n} rows of {} fields", path.display(), n + 1);
        }
        for (j, v) in rec.iter().skip(1).enumerate() {
            values[(i, j)] = v.parse()?;
        }
        rows += 1;
    }
    if rows != n {
        bail!("{}: expected {n} rows, found {rows}", path.display());
    }
    Ok(LabeledMatrix { coords, values })
}

/// Metrics of one approximate covariance against the truth. `kl` is `null`
/// when the approximation is singular.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    pub n: usize,
    pub method: String,
    pub mae: f64,
    pub max_abs_err: f64,
    pub max_diag_err: f64,
    pub kl: Option<f64>,
    pub params: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateRow {
    pub n_csz: usize,
    pub n_fsz: usize,
    pub n0: Option<usize>,
    pub kl: Option<f64>,
    pub mae: Option<f64>,
    pub reachable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub n: usize,
    pub n_lvl: usize,
    pub policy: String,
    pub winner: (usize, usize),
    pub candidates: Vec<CandidateRow>,
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let f = File::open(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(serde_json::from_reader(BufReader::new(f))?)
}

/// One benchmark size. Timings are empty when the size was skipped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub method: String,
    pub n: usize,
    pub params: String,
    pub build_ms: Option<f64>,
    pub median_ms: Option<f64>,
    pub min_ms: Option<f64>,
    pub max_ms: Option<f64>,
    pub threads: usize,
}

pub fn write_bench(path: &Path, rows: &[BenchRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_bench(path: &Path) -> Result<Vec<BenchRow>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(r.deserialize().collect::<Result<_, _>>()?)
}
