//! CSV datasets: one observation per row. A header row is optional; when
//! present and its last column is named `label`, that column holds integer
//! cluster labels and is not part of the coordinates.

use std::path::Path;

use crate::error::{Error, Result};
use crate::hilbert::Point;
use crate::report::{csv_table, Field};

pub const LABEL_COLUMN: &str = "label";

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub points: Vec<Point>,
    pub labels: Option<Vec<i64>>,
}

impl Dataset {
    pub fn dim(&self) -> usize {
        self.points.first().map_or(0, Point::len)
    }
}

fn bad(line: u64, message: impl Into<String>) -> Error {
    Error::Dataset {
        line: line as usize,
        message: message.into(),
    }
}

pub fn parse_dataset(text: &str) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let mut points = Vec::new();
    let mut labels: Option<Vec<i64>> = None;
    let mut width: Option<usize> = None;
    let mut first = true;
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            bad(line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.iter().all(str::is_empty) {
            continue;
        }
        if first {
            first = false;
            if record.iter().any(|f| f.parse::<f64>().is_err()) {
                let has_label = record.iter().next_back() == Some(LABEL_COLUMN);
                if has_label {
                    labels = Some(Vec::new());
                }
                width = Some(record.len());
                continue;
            }
        }
        let expected = *width.get_or_insert(record.len());
        if record.len() != expected {
            return Err(bad(
                line,
                format!("expected {expected} fields, found {}", record.len()),
            ));
        }
        let coord_count = expected - usize::from(labels.is_some());
        if coord_count == 0 {
            return Err(bad(line, "row has no coordinates"));
        }
        let coords = record
            .iter()
            .take(coord_count)
            .enumerate()
            .map(|(col, f)| match f.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(bad(
                    line,
                    format!("column {}: '{f}' is not a finite number", col + 1),
                )),
            })
            .collect::<Result<Vec<f64>>>()?;
        if let Some(labels) = labels.as_mut() {
            let raw = &record[coord_count];
            let label = raw
                .parse::<i64>()
                .map_err(|_| bad(line, format!("label '{raw}' is not an integer")))?;
            labels.push(label);
        }
        points.push(Point::new(coords));
    }
    if points.is_empty() {
        return Err(bad(1, "dataset has no observations"));
    }
    Ok(Dataset { points, labels })
}

pub fn read_dataset(path: &Path) -> Result<Dataset> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    parse_dataset(&text)
}

/// Render points (and optional labels) with a `x1,…,xp[,label]` header.
pub fn dataset_csv(points: &[Point], labels: Option<&[usize]>) -> Result<String> {
    let dim = points.first().map_or(0, Point::len);
    let mut header: Vec<String> = (1..=dim).map(|j| format!("x{j}")).collect();
    if labels.is_some() {
        header.push(LABEL_COLUMN.to_string());
    }
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    csv_table(
        &header_refs,
        points.iter().enumerate().map(|(i, p)| {
            let mut row: Vec<Field> = p.coords().iter().map(|&v| Field::Float(v)).collect();
            if let Some(l) = labels {
                row.push(Field::from(l[i]));
            }
            row
        }),
    )
}
