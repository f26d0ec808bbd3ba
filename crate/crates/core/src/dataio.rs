//! Instance files, CSV ingestion, standardisation and experiment outputs.
//!
//! Instance files are JSON. Floats are written in shortest round-trip form
//! and parsed exactly, so `load(save(x))` is bitwise lossless.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::datagen::{GeneratorMeta, PlantedInstance};
use crate::error::{GmcError, Result};
use crate::instance::{Instance, SparseWeight};

pub const SCHEMA_VERSION: u32 = 1;

fn io_err(path: &Path, source: std::io::Error) -> GmcError {
    GmcError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// On-disk instance: `a` is row-major (`m` rows of `n` values); `support0`
/// holds 0-based column indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceFile {
    pub schema_version: u32,
    pub m: usize,
    pub n: usize,
    pub a: Vec<Vec<f64>>,
    pub y: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub support0: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_var: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<GeneratorMeta>,
}

impl InstanceFile {
    pub fn from_instance(inst: &Instance) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            m: inst.m(),
            n: inst.n(),
            a: inst.rows(),
            y: inst.y().to_vec(),
            x0: None,
            support0: None,
            noise_var: None,
            generator: None,
        }
    }

    pub fn from_planted(pi: &PlantedInstance) -> Self {
        Self {
            x0: Some(pi.x0.clone()),
            support0: Some(pi.support0.ones()),
            noise_var: Some(pi.noise_var),
            generator: pi.generator.clone(),
            ..Self::from_instance(&pi.inst)
        }
    }

    /// Checks the schema version and every declared shape.
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(GmcError::SchemaVersionMismatch {
                found: self.schema_version,
                expected: SCHEMA_VERSION,
            });
        }
        if self.a.len() != self.m {
            return Err(GmcError::ShapeMismatch(format!(
                "m = {} but the matrix has {} rows",
                self.m,
                self.a.len()
            )));
        }
        if let Some((i, row)) = self.a.iter().enumerate().find(|(_, r)| r.len() != self.n) {
            return Err(GmcError::ShapeMismatch(format!(
                "n = {} but matrix row {i} has {} entries",
                self.n,
                row.len()
            )));
        }
        if self.y.len() != self.m {
            return Err(GmcError::ShapeMismatch(format!(
                "m = {} but y has {} entries",
                self.m,
                self.y.len()
            )));
        }
        if let Some(x0) = &self.x0 {
            if x0.len() != self.n {
                return Err(GmcError::ShapeMismatch(format!(
                    "n = {} but x0 has {} entries",
                    self.n,
                    x0.len()
                )));
            }
        }
        if let Some(s) = &self.support0 {
            if let Some(&bad) = s.iter().find(|&&i| i >= self.n) {
                return Err(GmcError::ShapeMismatch(format!(
                    "support0 index {bad} out of range for n = {}",
                    self.n
                )));
            }
        }
        Ok(())
    }

    pub fn instance(&self) -> Result<Instance> {
        self.validate()?;
        Instance::from_rows(&self.a, self.y.clone())
    }

    /// The planted view, when the file carries a ground-truth signal.
    pub fn planted(&self) -> Result<Option<PlantedInstance>> {
        let Some(x0) = &self.x0 else {
            return Ok(None);
        };
        let inst = self.instance()?;
        let support0 = match &self.support0 {
            Some(s) => SparseWeight::from_indices(self.n, s)?,
            None => {
                let idx: Vec<usize> = (0..self.n).filter(|&i| x0[i] != 0.0).collect();
                SparseWeight::from_indices(self.n, &idx)?
            }
        };
        Ok(Some(PlantedInstance {
            inst,
            x0: x0.clone(),
            support0,
            noise_var: self.noise_var.unwrap_or(0.0),
            generator: self.generator.clone(),
        }))
    }
}

pub fn save_instance(file: &InstanceFile, path: &Path) -> Result<()> {
    write_json_compact(path, file)
}

pub fn load_instance(path: &Path) -> Result<InstanceFile> {
    let file: InstanceFile = read_json(path)?;
    file.validate()?;
    Ok(file)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let f = File::open(path).map_err(|e| io_err(path, e))?;
    Ok(serde_json::from_reader(BufReader::new(f))?)
}

fn write_with<F>(path: &Path, body: F) -> Result<()>
where
    F: FnOnce(&mut BufWriter<File>) -> Result<()>,
{
    let f = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(f);
    body(&mut w)?;
    w.flush().map_err(|e| io_err(path, e))
}

fn write_json_compact<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_with(path, |w| {
        serde_json::to_writer(&mut *w, value)?;
        w.write_all(b"\n").map_err(|e| io_err(path, e))
    })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_with(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value)?;
        w.write_all(b"\n").map_err(|e| io_err(path, e))
    })
}

/// Writes rows with a header derived from the row type's field names.
pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

fn read_numeric_csv(path: &Path, header: bool) -> Result<Vec<Vec<f64>>> {
    let name = path.display().to_string();
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => io_err(path, io),
            other => GmcError::Parse {
                file: name.clone(),
                row: 0,
                col: 0,
                msg: format!("{other:?}"),
            },
        })?;
    let offset = usize::from(header);
    let mut rows = Vec::new();
    for (r, rec) in rdr.records().enumerate() {
        let row_no = r + 1 + offset;
        let rec = rec?;
        let mut row = Vec::with_capacity(rec.len());
        for (c, cell) in rec.iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| GmcError::Parse {
                file: name.clone(),
                row: row_no,
                col: c + 1,
                msg: format!("non-numeric cell {cell:?}"),
            })?;
            if !v.is_finite() {
                return Err(GmcError::Parse {
                    file: name.clone(),
                    row: row_no,
                    col: c + 1,
                    msg: format!("non-finite value {cell:?}"),
                });
            }
            row.push(v);
        }
        rows.push(row);
    }
    Ok(rows)
}

/// Reads predictors and response from separate comma-separated files. With
/// `header` set, the first line of each file is skipped. Parse errors carry
/// 1-based line and column numbers.
pub fn load_csv(path_a: &Path, path_y: &Path, header: bool) -> Result<Instance> {
    let a = read_numeric_csv(path_a, header)?;
    let y_rows = read_numeric_csv(path_y, header)?;
    if a.is_empty() {
        return Err(GmcError::ShapeMismatch(format!("{} has no data rows", path_a.display())));
    }
    let n = a[0].len();
    if let Some((i, r)) = a.iter().enumerate().find(|(_, r)| r.len() != n) {
        return Err(GmcError::ShapeMismatch(format!(
            "{}: data row {} has {} columns, expected {n}",
            path_a.display(),
            i + 1,
            r.len()
        )));
    }
    if let Some((i, r)) = y_rows.iter().enumerate().find(|(_, r)| r.len() != 1) {
        return Err(GmcError::ShapeMismatch(format!(
            "{}: data row {} has {} columns, expected 1",
            path_y.display(),
            i + 1,
            r.len()
        )));
    }
    if y_rows.len() != a.len() {
        return Err(GmcError::ShapeMismatch(format!(
            "{} has {} rows but {} has {}",
            path_a.display(),
            a.len(),
            path_y.display(),
            y_rows.len()
        )));
    }
    let y = y_rows.into_iter().map(|r| r[0]).collect();
    Instance::from_rows(&a, y)
}

/// Centred, unit-norm design and centred response, with the maps needed to
/// translate back.
#[derive(Debug, Clone, PartialEq)]
pub struct StandardizedData {
    pub data: Instance,
    pub col_means: Vec<f64>,
    pub col_norms: Vec<f64>,
    pub y_mean: f64,
}

impl StandardizedData {
    /// Prediction on the original response scale for a raw predictor row,
    /// given coefficients fitted on the standardised data.
    pub fn predict_raw(&self, raw_row: &[f64], std_coefficients: &[f64]) -> f64 {
        let mut p = self.y_mean;
        for (j, &b) in std_coefficients.iter().enumerate() {
            if b != 0.0 {
                p += b * (raw_row[j] - self.col_means[j]) / self.col_norms[j];
            }
        }
        p
    }
}

fn centered(v: &[f64]) -> (Vec<f64>, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let mut out: Vec<f64> = v.iter().map(|x| x - mean).collect();
    // second pass removes the rounding left by the first
    let corr = out.iter().sum::<f64>() / n;
    for x in &mut out {
        *x -= corr;
    }
    (out, mean + corr)
}

/// Centres `y` and every column of `A`, then scales the columns to unit
/// Euclidean norm.
pub fn standardize(inst: &Instance) -> Result<StandardizedData> {
    let (m, n) = (inst.m(), inst.n());
    let mut a = Vec::with_capacity(m * n);
    let mut col_means = Vec::with_capacity(n);
    let mut col_norms = Vec::with_capacity(n);
    for j in 0..n {
        let raw = inst.column(j);
        let (mut col, mean) = centered(raw);
        let norm = col.iter().map(|x| x * x).sum::<f64>().sqrt();
        let scale = raw.iter().fold(0.0f64, |acc, x| acc.max(x.abs()));
        if norm == 0.0 || norm <= 1e-14 * scale * (m as f64).sqrt() {
            return Err(GmcError::ZeroVarianceColumn(j));
        }
        for x in &mut col {
            *x /= norm;
        }
        a.extend_from_slice(&col);
        col_means.push(mean);
        col_norms.push(norm);
    }
    let (y, y_mean) = centered(inst.y());
    Ok(StandardizedData {
        data: Instance::from_col_major(m, n, a, y)?,
        col_means,
        col_norms,
        y_mean,
    })
}

/// Rows of the experiment CSVs. Field names are the column headers.
pub mod rows {
    use serde::Serialize;

    #[derive(Debug, Clone, Serialize)]
    pub struct Phase {
        pub alpha: f64,
        pub rho0: f64,
        pub n_samp: usize,
        pub p_samp: f64,
    }

    #[derive(Debug, Clone, Serialize)]
    pub struct Success {
        #[serde(rename = "N")]
        pub n: usize,
        pub alpha: f64,
        pub rho0: f64,
        pub n_init: usize,
        pub n_samp: usize,
        pub p_suc_mean: f64,
        pub p_suc_stderr: f64,
    }

    #[derive(Debug, Clone, Serialize)]
    pub struct Scaling {
        #[serde(rename = "N")]
        pub n: usize,
        pub nconv_mean: f64,
        pub nconv_stderr: f64,
    }

    #[derive(Debug, Clone, Serialize)]
    pub struct Noisy {
        pub rho: f64,
        pub eps_y_mean: f64,
        pub eps_y_stderr: f64,
        pub eps_x_mean: f64,
        pub eps_x_stderr: f64,
    }

    #[derive(Debug, Clone, Serialize)]
    pub struct Cv {
        #[serde(rename = "K")]
        pub k: usize,
        pub eps_cv: f64,
    }

    /// `variable` is the 1-based column number in the input data.
    #[derive(Debug, Clone, Serialize)]
    pub struct Count {
        pub variable: usize,
        pub count: usize,
    }
}
