//! Dataset CSV, matrix files, checkpoints and JSON output.
//!
//! Dataset CSV has the header `f0,...,f{D-1},label` with an optional
//! trailing `clean_label` column. Matrices are headerless numeric CSV, or
//! JSON of the form `{"num_classes": C, "matrix": [[...], ...]}` when the
//! file name ends in `.json`. Reals are written with 17 significant digits,
//! so files round-trip exactly.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use ordcost_core::cost_matrices::{ConfusionCounts, CostMatrix, RowStochastic};
use ordcost_core::data::Dataset;
use ordcost_core::model::Model;
use ordcost_core::trainer::{EpochRecord, TrainConfig};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

/// Formats a real with 17 significant digits.
pub fn format_real(x: f64) -> String {
    format!("{x:.16e}")
}

/// Dataset columns before the class count is fixed.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTable {
    pub input_dim: usize,
    pub features: Vec<f64>,
    pub labels: Vec<usize>,
    pub clean_labels: Option<Vec<usize>>,
}

impl RawTable {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Largest label, clean labels included.
    pub fn max_label(&self) -> usize {
        self.labels.iter().chain(self.clean_labels.iter().flatten()).copied().max().unwrap_or(0)
    }

    pub fn into_dataset(self, num_classes: usize, provenance: String) -> ordcost_core::Result<Dataset> {
        Ok(Dataset::new(self.input_dim, num_classes, self.features, self.labels, self.clean_labels)?
            .with_provenance(provenance))
    }
}

fn parse_label(cell: &str, path: &Path, line: u64, column: &str) -> Result<usize> {
    let cell = cell.trim();
    let value: f64 = cell
        .parse()
        .map_err(|_| CliError::parse(path, line, format!("{column}: '{cell}' is not a number")))?;
    if value < 0.0 {
        return Err(CliError::parse(path, line, format!("{column}: negative label {cell}")));
    }
    if value.fract() != 0.0 || !value.is_finite() {
        return Err(CliError::parse(path, line, format!("{column}: '{cell}' is not an integer")));
    }
    Ok(value as usize)
}

fn read_header(path: &Path, header: &csv::StringRecord) -> Result<(usize, bool)> {
    let names: Vec<&str> = header.iter().map(str::trim).collect();
    let has_clean = names.last() == Some(&"clean_label");
    let label_at = names.len() - usize::from(has_clean);
    if label_at == 0 || names[label_at - 1] != "label" {
        return Err(CliError::parse(path, 1, "header must be f0,...,f{D-1},label[,clean_label]"));
    }
    let dim = label_at - 1;
    if dim == 0 {
        return Err(CliError::parse(path, 1, "no feature columns"));
    }
    for (k, name) in names[..dim].iter().enumerate() {
        if *name != format!("f{k}") {
            return Err(CliError::parse(path, 1, format!("column {} is '{name}', expected 'f{k}'", k + 1)));
        }
    }
    Ok((dim, has_clean))
}

/// Reads a dataset CSV without fixing the class count.
pub fn read_table(path: &Path) -> Result<RawTable> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(file);
    let header = reader.headers().map_err(|e| CliError::Csv { path: path.into(), source: e })?.clone();
    let (dim, has_clean) = read_header(path, &header)?;
    let width = header.len();

    let mut table = RawTable { input_dim: dim, features: Vec::new(), labels: Vec::new(), clean_labels: has_clean.then(Vec::new) };
    for record in reader.records() {
        let record = record.map_err(|e| CliError::Csv { path: path.into(), source: e })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != width {
            return Err(CliError::parse(path, line, format!("expected {width} columns, found {}", record.len())));
        }
        for (k, cell) in record.iter().take(dim).enumerate() {
            let v: f64 = cell
                .trim()
                .parse()
                .map_err(|_| CliError::parse(path, line, format!("f{k}: '{cell}' is not a number")))?;
            if !v.is_finite() {
                return Err(CliError::parse(path, line, format!("f{k}: non-finite value")));
            }
            table.features.push(v);
        }
        table.labels.push(parse_label(&record[dim], path, line, "label")?);
        if let Some(clean) = table.clean_labels.as_mut() {
            clean.push(parse_label(&record[dim + 1], path, line, "clean_label")?);
        }
    }
    if table.is_empty() {
        return Err(CliError::parse(path, 1, "no data rows"));
    }
    Ok(table)
}

/// Loads a dataset; the class count is `max label + 1` unless given.
pub fn load_csv(path: &Path, num_classes: Option<usize>) -> Result<Dataset> {
    let table = read_table(path)?;
    let inferred = table.max_label() + 1;
    let c = match num_classes {
        Some(c) if c < inferred => {
            return Err(CliError::Usage(format!(
                "{}: label {} does not fit {c} classes",
                path.display(),
                inferred - 1
            )))
        }
        Some(c) => c,
        None => inferred,
    };
    table
        .into_dataset(c, format!("loaded from {}", path.display()))
        .map_err(|e| CliError::InFile { path: path.into(), source: e })
}

pub fn save_csv(path: &Path, data: &Dataset) -> Result<()> {
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    let csv_err = |e| CliError::Csv { path: path.into(), source: e };
    let mut header: Vec<String> = (0..data.input_dim()).map(|k| format!("f{k}")).collect();
    header.push("label".into());
    if data.clean_labels().is_some() {
        header.push("clean_label".into());
    }
    w.write_record(&header).map_err(csv_err)?;
    for i in 0..data.len() {
        let mut row: Vec<String> = data.row(i).iter().map(|&x| format_real(x)).collect();
        row.push(data.labels()[i].to_string());
        if let Some(clean) = data.clean_labels() {
            row.push(clean[i].to_string());
        }
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

fn is_json(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"))
}

/// Rows of a headerless numeric CSV, checked to be square.
pub fn read_matrix_csv(path: &Path) -> Result<Vec<Vec<f64>>> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(false).flexible(true).from_reader(file);
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| CliError::Csv { path: path.into(), source: e })?;
        let line = record.position().map_or(0, |p| p.line());
        let row = record
            .iter()
            .map(|cell| {
                cell.trim()
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| CliError::parse(path, line, format!("'{cell}' is not a finite number")))
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push((line, row));
    }
    let n = rows.len();
    if n == 0 {
        return Err(CliError::parse(path, 1, "empty matrix"));
    }
    for (line, row) in &rows {
        if row.len() != n {
            return Err(CliError::parse(path, *line, format!("expected {n} columns for a {n}x{n} matrix, found {}", row.len())));
        }
    }
    Ok(rows.into_iter().map(|(_, r)| r).collect())
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_reader(std::io::BufReader::new(file)).map_err(|e| CliError::Json { path: path.into(), source: e })
}

fn in_file<T>(path: &Path, r: ordcost_core::Result<T>) -> Result<T> {
    r.map_err(|e| CliError::InFile { path: path.into(), source: e })
}

/// Integer count matrix, e.g. annotator confusion counts.
pub fn read_confusion(path: &Path) -> Result<ConfusionCounts> {
    if is_json(path) {
        return read_json(path);
    }
    let rows = read_matrix_csv(path)?;
    let mut counts = Vec::new();
    for (i, row) in rows.iter().enumerate() {
        for v in row {
            if *v < 0.0 || v.fract() != 0.0 {
                return Err(CliError::parse(path, i as u64 + 1, format!("count {v} is not a non-negative integer")));
            }
            counts.push(*v as u64);
        }
    }
    in_file(path, ConfusionCounts::from_row_major(rows.len(), counts))
}

pub fn read_row_stochastic(path: &Path) -> Result<RowStochastic> {
    if is_json(path) {
        return read_json(path);
    }
    let rows = read_matrix_csv(path)?;
    in_file(path, RowStochastic::from_row_major(rows.len(), rows.concat()))
}

pub fn read_cost_matrix(path: &Path) -> Result<CostMatrix> {
    if is_json(path) {
        return read_json(path);
    }
    let rows = read_matrix_csv(path)?;
    in_file(path, CostMatrix::from_row_major(rows.len(), rows.concat()))
}

/// Writes a square matrix as headerless CSV.
pub fn write_matrix_csv<T: ToString>(path: &Path, rows: &[Vec<T>]) -> Result<()> {
    let mut out = String::new();
    for row in rows {
        out.push_str(&row.iter().map(T::to_string).collect::<Vec<_>>().join(","));
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| CliError::io(path, e))
}

pub fn real_rows(rows: Vec<Vec<f64>>) -> Vec<Vec<String>> {
    rows.into_iter().map(|r| r.into_iter().map(format_real).collect()).collect()
}

/// Trained model with the configuration that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub model: Model,
    pub config: TrainConfig,
    pub best_epoch: usize,
    pub best_val_kappa: f64,
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    read_json(path)
}

/// Pretty-printed JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Json { path: path.into(), source: e })?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

/// One line of a training history file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryLine {
    pub lambda: f64,
    #[serde(flatten)]
    pub record: EpochRecord,
}

pub fn write_jsonl<T: Serialize>(path: &Path, lines: impl IntoIterator<Item = T>) -> Result<()> {
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut w = BufWriter::new(file);
    for line in lines {
        serde_json::to_writer(&mut w, &line).map_err(|e| CliError::Json { path: path.into(), source: e })?;
        w.write_all(b"\n").map_err(|e| CliError::io(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn create_dir(path: &Path) -> Result<PathBuf> {
    std::fs::create_dir_all(path).map_err(|e| CliError::io(path, e))?;
    Ok(path.to_path_buf())
}
