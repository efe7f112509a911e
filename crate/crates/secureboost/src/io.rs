//! Dataset files. CSV has a header row whose first column is the instance
//! id and whose optional second column, named `label` or `y`, holds the
//! label. libsvm rows are `[label] index:value ...` with 1-based indices;
//! ids are the 0-based line numbers. Empty or `nan` cells read as 0.0.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use secureboost_core::data::{FeatureMatrix, PartyDataset};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Libsvm,
}

impl Format {
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("libsvm" | "svm") => Format::Libsvm,
            _ => Format::Csv,
        }
    }
}

pub fn load_dataset(path: &Path) -> Result<PartyDataset> {
    match Format::from_path(path) {
        Format::Csv => read_csv(path),
        Format::Libsvm => read_libsvm(path),
    }
}

fn parse_value(cell: &str) -> Option<f64> {
    let cell = cell.trim();
    if cell.is_empty() {
        return Some(0.0);
    }
    let v: f64 = cell.parse().ok()?;
    Some(if v.is_nan() { 0.0 } else { v })
}

pub fn read_csv(path: &Path) -> Result<PartyDataset> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::parse(path, e))?;
    let header = reader.headers().map_err(|e| Error::parse(path, e))?.clone();
    if header.is_empty() {
        return Err(Error::parse(path, "missing header"));
    }
    let has_label = header.get(1).is_some_and(|h| h.eq_ignore_ascii_case("label") || h.eq_ignore_ascii_case("y"));
    let first_feature = if has_label { 2 } else { 1 };
    let names: Vec<String> = header.iter().skip(first_feature).map(str::to_string).collect();
    let (mut ids, mut labels, mut values) = (Vec::new(), Vec::new(), Vec::new());
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::parse(path, e))?;
        let at = |what: &str| Error::parse(path, format!("row {}: {what}", line + 2));
        ids.push(record.get(0).ok_or_else(|| at("missing id"))?.to_string());
        if has_label {
            let cell = record.get(1).ok_or_else(|| at("missing label"))?;
            labels.push(cell.parse::<f64>().map_err(|_| at(&format!("bad label {cell:?}")))?);
        }
        for cell in record.iter().skip(first_feature) {
            values.push(parse_value(cell).ok_or_else(|| at(&format!("bad value {cell:?}")))?);
        }
    }
    let features = FeatureMatrix::new(ids.len(), names.len(), values)?;
    Ok(PartyDataset::new(ids, features, has_label.then_some(labels), names)?)
}

pub fn read_libsvm(path: &Path) -> Result<PartyDataset> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rows: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut labels: Vec<f64> = Vec::new();
    let mut labelled: Option<bool> = None;
    let mut width = 0;
    for (line_no, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let at = |what: String| Error::parse(path, format!("line {}: {what}", line_no + 1));
        let line = line.split('#').next().unwrap_or("");
        let mut tokens = line.split_whitespace().peekable();
        let has_label = tokens.peek().is_some_and(|t| !t.contains(':'));
        match labelled {
            None if tokens.peek().is_some() => labelled = Some(has_label),
            Some(l) if tokens.peek().is_some() && l != has_label => {
                return Err(at("rows disagree on whether a label is present".into()));
            }
            _ => {}
        }
        if has_label {
            let t = tokens.next().expect("peeked");
            labels.push(t.parse().map_err(|_| at(format!("bad label {t:?}")))?);
        } else if labelled == Some(true) {
            return Err(at("missing label".into()));
        }
        let mut row = Vec::new();
        for t in tokens {
            let (i, v) = t.split_once(':').ok_or_else(|| at(format!("bad entry {t:?}")))?;
            let i: usize = i.parse().map_err(|_| at(format!("bad index {i:?}")))?;
            if i == 0 {
                return Err(at("indices are 1-based".into()));
            }
            let v = parse_value(v).ok_or_else(|| at(format!("bad value {v:?}")))?;
            width = width.max(i);
            row.push((i - 1, v));
        }
        rows.push(row);
    }
    let mut values = vec![0.0; rows.len() * width];
    for (r, row) in rows.iter().enumerate() {
        for &(c, v) in row {
            values[r * width + c] = v;
        }
    }
    let ids = (0..rows.len()).map(|i| i.to_string()).collect();
    let names = (1..=width).map(|i| format!("f{i}")).collect();
    let features = FeatureMatrix::new(rows.len(), width, values)?;
    Ok(PartyDataset::new(ids, features, (labelled == Some(true)).then_some(labels), names)?)
}

pub fn write_csv(path: &Path, data: &PartyDataset) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::parse(path, e))?;
    let mut header = vec!["id".to_string()];
    if data.labels.is_some() {
        header.push("label".into());
    }
    header.extend(data.feature_names.iter().cloned());
    w.write_record(&header).map_err(|e| Error::parse(path, e))?;
    for r in 0..data.n_rows() {
        let mut rec = vec![data.ids[r].clone()];
        if let Some(l) = &data.labels {
            rec.push(l[r].to_string());
        }
        rec.extend(data.features.row(r).iter().map(|v| v.to_string()));
        w.write_record(&rec).map_err(|e| Error::parse(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// One row per instance: id followed by the score columns.
pub fn write_scores(path: &Path, ids: &[String], columns: &[String], scores: &[f64]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let k = columns.len();
    let io = |e| Error::io(path, e);
    writeln!(w, "id,{}", columns.join(",")).map_err(io)?;
    for (i, id) in ids.iter().enumerate() {
        let row: Vec<String> = scores[i * k..(i + 1) * k].iter().map(|v| v.to_string()).collect();
        writeln!(w, "{id},{}", row.join(",")).map_err(io)?;
    }
    w.flush().map_err(io)
}
