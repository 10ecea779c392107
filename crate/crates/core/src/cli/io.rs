use std::fs::File;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use mvrr::{Matrix, MvrrError, Result};

pub const NA: &str = "NA";

fn io_err(path: &Path, source: std::io::Error) -> MvrrError {
    MvrrError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn parse_err(path: &Path, e: impl std::fmt::Display) -> MvrrError {
    MvrrError::Parse(format!("{}: {e}", path.display()))
}

/// Reads a header-less numeric CSV. With `allow_na`, the literal `NA` marks a
/// missing cell and the returned mask is `false` there.
pub fn read_matrix(path: &Path, allow_na: bool) -> Result<(Matrix, DMatrix<bool>)> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(file);
    let mut values = Vec::new();
    let mut observed = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| parse_err(path, e))?;
        if *cols.get_or_insert(record.len()) != record.len() {
            return Err(parse_err(path, format!("row {} has {} fields", i + 1, record.len())));
        }
        for (j, field) in record.iter().enumerate() {
            if field == NA {
                if !allow_na {
                    return Err(MvrrError::InvalidData(format!(
                        "{}: missing value at row {}, column {}; predictors must be complete",
                        path.display(),
                        i + 1,
                        j + 1
                    )));
                }
                values.push(0.0);
                observed.push(false);
            } else {
                let v: f64 = field
                    .parse()
                    .map_err(|_| parse_err(path, format!("row {}, column {}: '{field}' is not a number", i + 1, j + 1)))?;
                values.push(v);
                observed.push(true);
            }
        }
        rows += 1;
    }
    let cols = cols.unwrap_or(0);
    if rows == 0 || cols == 0 {
        return Err(MvrrError::InvalidData(format!("{}: empty matrix", path.display())));
    }
    Ok((
        DMatrix::from_row_slice(rows, cols, &values),
        DMatrix::from_row_slice(rows, cols, &observed),
    ))
}

/// Writes a header-less CSV with 17 significant digits per value.
pub fn write_matrix(path: &Path, m: &Matrix) -> Result<()> {
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(file);
    for i in 0..m.nrows() {
        w.write_record(m.row(i).iter().map(|v| format!("{v:.16e}")))
            .map_err(|e| parse_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

/// Like [`write_matrix`], writing `NA` for unobserved cells.
pub fn write_response(path: &Path, m: &Matrix, mask: &DMatrix<bool>) -> Result<()> {
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(file);
    for i in 0..m.nrows() {
        w.write_record((0..m.ncols()).map(|j| {
            if mask[(i, j)] {
                format!("{:.16e}", m[(i, j)])
            } else {
                NA.to_string()
            }
        }))
        .map_err(|e| parse_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| parse_err(path, e))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| io_err(path, e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    serde_json::from_str(&text).map_err(|e| parse_err(path, e))
}

/// `<path without extension>.<suffix>`
pub fn sibling(path: &Path, suffix: &str) -> PathBuf {
    path.with_extension(suffix)
}

/// One view: a name and an inclusive zero-based column range.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ViewSpec {
    pub name: String,
    pub cols: [usize; 2],
}

impl ViewSpec {
    pub fn width(&self) -> usize {
        self.cols[1] - self.cols[0] + 1
    }
}

/// Checks that views are non-empty, well-formed, disjoint and listed in
/// column order.
pub fn validate_views(views: &[ViewSpec]) -> Result<()> {
    if views.is_empty() {
        return Err(MvrrError::InvalidData("the view file lists no views".into()));
    }
    for v in views {
        if v.cols[0] > v.cols[1] {
            return Err(MvrrError::InvalidData(format!(
                "view '{}' has an empty range [{}, {}]",
                v.name, v.cols[0], v.cols[1]
            )));
        }
    }
    for (i, a) in views.iter().enumerate() {
        for b in &views[i + 1..] {
            let lo = a.cols[0].max(b.cols[0]);
            let hi = a.cols[1].min(b.cols[1]);
            if lo <= hi {
                return Err(MvrrError::InvalidData(format!(
                    "views '{}' and '{}' overlap on columns {lo}..={hi}",
                    a.name, b.name
                )));
            }
        }
    }
    for pair in views.windows(2) {
        if pair[1].cols[0] < pair[0].cols[0] {
            return Err(MvrrError::InvalidData(format!(
                "view '{}' starts before view '{}'; list views in column order",
                pair[1].name, pair[0].name
            )));
        }
    }
    Ok(())
}

pub fn read_views(path: &Path) -> Result<Vec<ViewSpec>> {
    let views: Vec<ViewSpec> = read_json(path)?;
    validate_views(&views)?;
    Ok(views)
}

/// Cuts the listed column ranges out of `x`.
pub fn extract_blocks(x: &Matrix, views: &[ViewSpec]) -> Result<Vec<Matrix>> {
    views
        .iter()
        .map(|v| {
            if v.cols[1] >= x.ncols() {
                Err(MvrrError::Dimension(format!(
                    "view '{}' ends at column {} but the predictor file has {} columns",
                    v.name,
                    v.cols[1],
                    x.ncols()
                )))
            } else {
                Ok(x.columns(v.cols[0], v.width()).into_owned())
            }
        })
        .collect()
}
