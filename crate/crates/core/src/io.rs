//! CSV and JSON artifacts.
//!
//! Datasets are flat CSV with columns `x_0..x_{d-1},label,split`. Soft labels
//! are CSV with columns `p_0..p_{C-1}` plus a `<file>.json` sidecar naming
//! the source teachers. Floats are written in Rust's shortest round-trip
//! form, so a write/read cycle is lossless.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::data::{LabeledDataset, Split};
use crate::error::{Error, Result};
use crate::relabel::SoftLabelSet;

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::format("csv", format!("{}: {other:?}", path.display())),
    }
}

fn parse_f64(path: &Path, line: u64, field: &str) -> Result<f64> {
    field
        .trim()
        .parse::<f64>()
        .map_err(|_| Error::format("csv", format!("{}:{line}: `{field}` is not a number", path.display())))
}

pub fn write_dataset(path: &Path, data: &LabeledDataset) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    let mut header: Vec<String> = (0..data.dim()).map(|k| format!("x_{k}")).collect();
    header.push("label".into());
    header.push("split".into());
    w.write_record(&header).map_err(|e| csv_error(path, e))?;
    let split = data.split.to_string();
    for (row, label) in data.points.outer_iter().zip(&data.labels) {
        let mut rec: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        rec.push(label.to_string());
        rec.push(split.clone());
        w.write_record(&rec).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a dataset CSV. Every row must carry the same split tag; the
/// number of classes is taken from `num_classes` or, if `None`, as one more
/// than the largest label.
pub fn read_dataset(path: &Path, num_classes: Option<usize>) -> Result<LabeledDataset> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let header = r.headers().map_err(|e| csv_error(path, e))?.clone();
    let dim = header.iter().take_while(|h| h.starts_with("x_")).count();
    let expected: Vec<String> = (0..dim)
        .map(|k| format!("x_{k}"))
        .chain(["label".to_string(), "split".to_string()])
        .collect();
    if dim == 0 || header.iter().ne(expected.iter().map(String::as_str)) {
        return Err(Error::format(
            "dataset csv",
            format!("{}: header must be x_0..x_(d-1),label,split", path.display()),
        ));
    }
    let mut values = Vec::new();
    let mut labels = Vec::new();
    let mut split: Option<Split> = None;
    for rec in r.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        for k in 0..dim {
            values.push(parse_f64(path, line, &rec[k])?);
        }
        let label: usize = rec[dim]
            .trim()
            .parse()
            .map_err(|_| Error::format("csv", format!("{}:{line}: bad label `{}`", path.display(), &rec[dim])))?;
        labels.push(label);
        let s: Split = rec[dim + 1].trim().parse()?;
        match split {
            None => split = Some(s),
            Some(prev) if prev != s => {
                return Err(Error::format("dataset csv", format!("{}: mixed split tags", path.display())));
            }
            _ => {}
        }
    }
    let n = labels.len();
    let classes = num_classes.unwrap_or_else(|| labels.iter().max().map_or(0, |m| m + 1));
    let points = Array2::from_shape_vec((n, dim), values).expect("row lengths checked");
    LabeledDataset::new(points, labels, classes, split.unwrap_or(Split::Train))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct SoftLabelManifest {
    num_classes: usize,
    rows: usize,
    source_teachers: Vec<String>,
}

/// Path of the JSON sidecar for a soft-label CSV.
pub fn sidecar_path(csv_path: &Path) -> PathBuf {
    let mut name = csv_path.as_os_str().to_owned();
    name.push(".json");
    PathBuf::from(name)
}

pub fn write_soft_labels(path: &Path, soft: &SoftLabelSet) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    let header: Vec<String> = (0..soft.num_classes()).map(|k| format!("p_{k}")).collect();
    w.write_record(&header).map_err(|e| csv_error(path, e))?;
    for row in soft.labels.outer_iter() {
        w.write_record(row.iter().map(|v| v.to_string())).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    write_json(
        &sidecar_path(path),
        &SoftLabelManifest {
            num_classes: soft.num_classes(),
            rows: soft.len(),
            source_teachers: soft.source_teachers.clone(),
        },
    )
}

pub fn read_soft_labels(path: &Path) -> Result<SoftLabelSet> {
    let manifest: SoftLabelManifest = read_json(&sidecar_path(path))?;
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let width = r.headers().map_err(|e| csv_error(path, e))?.len();
    if width != manifest.num_classes {
        return Err(Error::format(
            "soft-label csv",
            format!("{}: {width} columns but sidecar says {} classes", path.display(), manifest.num_classes),
        ));
    }
    let mut values = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        for field in rec.iter() {
            values.push(parse_f64(path, line, field)?);
        }
    }
    let rows = values.len() / width.max(1);
    if rows != manifest.rows {
        return Err(Error::format(
            "soft-label csv",
            format!("{}: {rows} rows but sidecar says {}", path.display(), manifest.rows),
        ));
    }
    let labels = Array2::from_shape_vec((rows, width), values).expect("row lengths checked");
    SoftLabelSet::from_rows(labels, manifest.source_teachers)
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| Error::format("json", e))?;
    w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_reader(std::io::BufReader::new(file))
        .map_err(|e| Error::format("json", format!("{}: {e}", path.display())))
}
