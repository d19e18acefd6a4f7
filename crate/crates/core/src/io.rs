//! Model documents (JSON) and pair datasets (CSV).

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Dataset, FactorModel, Label, MetricModel};
use crate::noise::NoiseKind;
use crate::scalar::Scalar;

/// Value written to `metadata.created`. A fixed tool tag rather than a
/// timestamp, so that reruns produce byte-identical files.
pub const CREATED_TAG: &str = concat!("metricfit ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMetadata {
    pub seed: Option<u64>,
    pub noise_kind: Option<NoiseKind>,
    pub created: String,
}

impl Default for ModelMetadata {
    fn default() -> Self {
        Self {
            seed: None,
            noise_kind: None,
            created: CREATED_TAG.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorDocument {
    pub rows: usize,
    pub cols: usize,
    /// Row-major entries of `A`.
    pub data: Vec<f64>,
    /// Unclamped threshold of the factor model.
    pub tau: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    pub dim: usize,
    /// Row-major entries of `M`.
    pub matrix: Vec<f64>,
    pub tau: f64,
    pub metadata: ModelMetadata,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_scale: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub factor: Option<FactorDocument>,
}

fn row_major<T: Scalar>(m: &DMatrix<T>) -> Vec<f64> {
    m.transpose().iter().map(|x| x.as_f64()).collect()
}

fn from_row_major<T: Scalar>(rows: usize, cols: usize, data: &[f64]) -> Result<DMatrix<T>> {
    if data.len() != rows * cols {
        return Err(Error::Format(format!(
            "expected {} matrix entries, found {}",
            rows * cols,
            data.len()
        )));
    }
    Ok(DMatrix::from_row_iterator(rows, cols, data.iter().map(|&x| T::lit(x))))
}

impl ModelDocument {
    pub fn new<T: Scalar>(model: &MetricModel<T>, factor: Option<&FactorModel<T>>, metadata: ModelMetadata) -> Self {
        Self {
            dim: model.matrix().nrows(),
            matrix: row_major(model.matrix()),
            tau: model.tau().as_f64(),
            metadata,
            noise_scale: None,
            factor: factor.map(|f| FactorDocument {
                rows: f.factor().nrows(),
                cols: f.factor().ncols(),
                data: row_major(f.factor()),
                tau: f.tau().as_f64(),
            }),
        }
    }

    pub fn metric<T: Scalar>(&self) -> Result<MetricModel<T>> {
        MetricModel::new(from_row_major(self.dim, self.dim, &self.matrix)?, T::lit(self.tau))
    }

    pub fn factor_model<T: Scalar>(&self) -> Result<Option<FactorModel<T>>> {
        self.factor
            .as_ref()
            .map(|f| FactorModel::new(from_row_major(f.rows, f.cols, &f.data)?, T::lit(f.tau)))
            .transpose()
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        serde_json::to_writer_pretty(&mut w, self)?;
        w.write_all(b"\n")?;
        w.flush()?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
    }
}

/// Writes `z0..z{d−1},label[,clean_label]` rows.
pub fn write_dataset<T: Scalar, W: Write>(data: &Dataset<T>, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let d = data.dim();
    let mut header: Vec<String> = (0..d).map(|j| format!("z{j}")).collect();
    header.push("label".into());
    let clean = data.clean_labels();
    if clean.is_some() {
        header.push("clean_label".into());
    }
    w.write_record(&header)?;
    let zs = data.zs();
    let mut row = Vec::with_capacity(d + 2);
    for i in 0..data.len() {
        row.clear();
        row.extend((0..d).map(|j| format!("{}", zs[(j, i)].as_f64())));
        row.push(data.labels()[i].as_i8().to_string());
        if let Some(c) = clean {
            row.push(c[i].as_i8().to_string());
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_dataset_file<T: Scalar>(data: &Dataset<T>, path: &Path) -> Result<()> {
    write_dataset(data, BufWriter::new(File::create(path)?))
}

fn parse_f64(s: &str, line: usize) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| Error::Format(format!("row {line}: cannot parse `{s}` as a number")))
}

/// Label codes accepted on input: `-1/+1`, `0/1` and `close/far`.
pub fn parse_label(s: &str, line: usize) -> Result<Label> {
    match s.trim().to_ascii_lowercase().as_str() {
        "-1" | "-1.0" | "close" | "0" | "0.0" => Ok(Label::Close),
        "1" | "+1" | "1.0" | "far" => Ok(Label::Far),
        other => Err(Error::Format(format!("row {line}: unrecognized label `{other}`"))),
    }
}

/// Reads the dataset format written by [`write_dataset`].
pub fn read_dataset<T: Scalar, R: Read>(input: R) -> Result<Dataset<T>> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers()?.clone();
    let mut z_cols = Vec::new();
    let mut label_col = None;
    let mut clean_col = None;
    for (idx, name) in header.iter().enumerate() {
        let name = name.trim();
        if name == "label" {
            label_col = Some(idx);
        } else if name == "clean_label" {
            clean_col = Some(idx);
        } else if let Some(j) = name.strip_prefix('z').and_then(|n| n.parse::<usize>().ok()) {
            z_cols.push((j, idx));
        } else {
            return Err(Error::Format(format!("unexpected column `{name}`")));
        }
    }
    z_cols.sort();
    if z_cols.iter().enumerate().any(|(k, &(j, _))| j != k) {
        return Err(Error::Format("feature columns must be z0..z{d-1}".into()));
    }
    let label_col = label_col.ok_or_else(|| Error::Format("missing `label` column".into()))?;
    let d = z_cols.len();
    let mut values = Vec::new();
    let mut labels = Vec::new();
    let mut clean = clean_col.map(|_| Vec::new());
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        let line = line + 2;
        for &(_, idx) in &z_cols {
            values.push(T::lit(parse_f64(&rec[idx], line)?));
        }
        labels.push(Label::from_int(parse_f64(&rec[label_col], line)? as i64)?);
        if let (Some(c), Some(idx)) = (clean.as_mut(), clean_col) {
            c.push(Label::from_int(parse_f64(&rec[idx], line)? as i64)?);
        }
    }
    let zs = DMatrix::from_vec(d, labels.len(), values);
    Dataset::new(zs, labels, clean)
}

pub fn read_dataset_file<T: Scalar>(path: &Path) -> Result<Dataset<T>> {
    read_dataset(BufReader::new(File::open(path)?))
}

/// How rows of a generic table become difference vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum PairColumns {
    /// The listed columns are `z` itself (`y = 0`). Empty means every
    /// column except the label.
    Direct { columns: Vec<String> },
    /// `z = x − y` from two equally long column lists.
    Difference { x: Vec<String>, y: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabularSpec {
    pub label_column: String,
    #[serde(default = "default_delimiter")]
    pub delimiter: char,
    pub pairs: PairColumns,
}

fn default_delimiter() -> char {
    ','
}

/// Ingests an arbitrary delimited table with a header row.
pub fn read_tabular<T: Scalar, R: Read>(input: R, spec: &TabularSpec) -> Result<Dataset<T>> {
    if !spec.delimiter.is_ascii() {
        return Err(Error::Format("delimiter must be a single ASCII character".into()));
    }
    let mut r = csv::ReaderBuilder::new()
        .delimiter(spec.delimiter as u8)
        .trim(csv::Trim::All)
        .from_reader(input);
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    let find = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Format(format!("column `{name}` not found")))
    };
    let label_idx = find(&spec.label_column)?;
    let (plus, minus): (Vec<usize>, Vec<usize>) = match &spec.pairs {
        PairColumns::Direct { columns } if columns.is_empty() => {
            ((0..header.len()).filter(|&i| i != label_idx).collect(), Vec::new())
        }
        PairColumns::Direct { columns } => (columns.iter().map(|c| find(c)).collect::<Result<_>>()?, Vec::new()),
        PairColumns::Difference { x, y } => {
            if x.len() != y.len() {
                return Err(Error::DimensionMismatch {
                    expected: x.len(),
                    actual: y.len(),
                });
            }
            (
                x.iter().map(|c| find(c)).collect::<Result<_>>()?,
                y.iter().map(|c| find(c)).collect::<Result<_>>()?,
            )
        }
    };
    let d = plus.len();
    let mut values = Vec::new();
    let mut labels = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        let line = line + 2;
        for (k, &i) in plus.iter().enumerate() {
            let mut v = parse_f64(&rec[i], line)?;
            if let Some(&j) = minus.get(k) {
                v -= parse_f64(&rec[j], line)?;
            }
            values.push(T::lit(v));
        }
        labels.push(parse_label(&rec[label_idx], line)?);
    }
    Dataset::new(DMatrix::from_vec(d, labels.len(), values), labels, None)
}
