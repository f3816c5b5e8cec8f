//! EER matrix reports. CSV: a header `enroll,<test genres...>,all`, then
//! one row per enrollment genre with values to 3 decimals. JSON: the
//! `{genres, cells}` object at full precision.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use genre_align_core::eval::EerMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{read_text, write_text};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct MatrixJson {
    genres: Vec<String>,
    cells: Vec<Vec<f64>>,
}

pub fn format_csv(m: &EerMatrix) -> String {
    let mut out = String::from("enroll");
    for g in &m.genres {
        out.push(',');
        out.push_str(g);
    }
    out.push_str(",all\n");
    for (g, row) in m.genres.iter().zip(&m.cells) {
        out.push_str(g);
        for v in row {
            let _ = write!(out, ",{v:.3}");
        }
        out.push('\n');
    }
    out
}

pub fn format_json(m: &EerMatrix) -> String {
    let j = MatrixJson {
        genres: m.genres.clone(),
        cells: m.cells.clone(),
    };
    let mut s = serde_json::to_string_pretty(&j).expect("matrix of finite floats serializes");
    s.push('\n');
    s
}

pub fn parse_json(text: &str, path: &Path) -> Result<EerMatrix> {
    let j: MatrixJson = serde_json::from_str(text).map_err(|e| Error::format(path, e.to_string()))?;
    let g = j.genres.len();
    if j.cells.len() != g || j.cells.iter().any(|r| r.len() != g + 1) {
        return Err(Error::format(path, format!("expected {g} rows of {} cells", g + 1)));
    }
    Ok(EerMatrix {
        genres: j.genres,
        cells: j.cells,
    })
}

pub fn load_json(path: &Path) -> Result<EerMatrix> {
    parse_json(&read_text(path)?, path)
}

/// Writes `<prefix>.csv` and `<prefix>.json`.
pub fn write_reports(m: &EerMatrix, prefix: &Path) -> Result<()> {
    write_text(&with_suffix(prefix, ".csv"), &format_csv(m))?;
    write_text(&with_suffix(prefix, ".json"), &format_json(m))
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}
