//! Small CSV tables the CLI reads and writes besides the logit format.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::Write;
use std::path::Path;

use abstain::data_model::Split;
use abstain::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub id: String,
    pub split: Split,
    pub label: Option<usize>,
    pub score: f64,
}

impl ScoreRow {
    pub fn is_id(&self) -> bool {
        self.split != Split::Ood
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct PredictionRow {
    pub id: String,
    pub label: usize,
    pub prediction: usize,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
struct LabelRow {
    id: String,
    label: String,
}

fn open(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| Error::Io { path: path.to_path_buf(), source: e })?;
    Ok(csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file))
}

fn malformed(row: usize, e: impl ToString) -> Error {
    Error::MalformedRow { row, message: e.to_string() }
}

fn read_rows<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut rdr = open(path)?;
    let rows = rdr
        .deserialize()
        .enumerate()
        .map(|(i, r)| r.map_err(|e| malformed(i + 1, e)))
        .collect::<Result<Vec<T>>>()?;
    if rows.is_empty() {
        return Err(Error::EmptyInput);
    }
    Ok(rows)
}

pub fn read_scores(path: &Path) -> Result<Vec<ScoreRow>> {
    let rows: Vec<ScoreRow> = read_rows(path)?;
    for (i, r) in rows.iter().enumerate() {
        if !r.score.is_finite() {
            return Err(malformed(i + 1, "score is not finite"));
        }
    }
    Ok(rows)
}

pub fn write_scores<W: Write>(w: W, rows: &[ScoreRow]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    for r in rows {
        wtr.serialize(r).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    }
    wtr.flush().map_err(|e| Error::InvalidArgument(e.to_string()))
}

pub fn read_predictions(path: &Path) -> Result<Vec<PredictionRow>> {
    read_rows(path)
}

/// Labels by id. Integer labels are used as class indices; otherwise the
/// distinct names are indexed in sorted order.
pub struct Labels {
    pub ids: Vec<String>,
    pub labels: Vec<usize>,
    pub classes: Vec<String>,
}

pub fn read_labels(path: &Path) -> Result<Labels> {
    let rows: Vec<LabelRow> = read_rows(path)?;
    let numeric: Option<Vec<usize>> = rows.iter().map(|r| r.label.parse().ok()).collect();
    let (labels, classes) = match numeric {
        Some(labels) => {
            let c = labels.iter().max().map_or(0, |m| m + 1);
            (labels, (0..c).map(|k| k.to_string()).collect())
        }
        None => {
            let names: BTreeMap<&str, usize> = rows.iter().map(|r| (r.label.as_str(), 0)).collect();
            let index: BTreeMap<&str, usize> = names.keys().enumerate().map(|(i, &n)| (n, i)).collect();
            (
                rows.iter().map(|r| index[r.label.as_str()]).collect(),
                index.keys().map(|s| s.to_string()).collect(),
            )
        }
    };
    Ok(Labels { ids: rows.into_iter().map(|r| r.id).collect(), labels, classes })
}

/// One named numeric column.
pub fn read_column(path: &Path, column: &str) -> Result<Vec<f64>> {
    let mut rdr = open(path)?;
    let headers = rdr.headers().map_err(|e| Error::MalformedHeader(e.to_string()))?.clone();
    let k = headers
        .iter()
        .position(|h| h == column)
        .ok_or_else(|| Error::MalformedHeader(format!("no column named {column:?}")))?;
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| malformed(i + 1, e))?;
        let field = rec.get(k).ok_or_else(|| malformed(i + 1, "short row"))?;
        let v: f64 = field.parse().map_err(|_| malformed(i + 1, format!("{field:?} is not a number")))?;
        if !v.is_finite() {
            return Err(malformed(i + 1, "value is not finite"));
        }
        out.push(v);
    }
    if out.is_empty() {
        return Err(Error::EmptyInput);
    }
    Ok(out)
}
