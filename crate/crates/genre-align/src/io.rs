//! Text formats for datasets, training history and trial lists.
//!
//! Dataset file: a `#dim=<d>` header line, then one tab-separated row per
//! utterance, `utt_id  speaker  genre  v1 ... vd`. Values are written as
//! the shortest decimal that parses back to the same `f64`, so a save/load
//! round trip is bit-exact. Values written at single precision by other
//! tools are read as the nearest `f64`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use genre_align_core::eval::TrialList;
use genre_align_core::trainer::StepRecord;
use genre_align_core::{Dataset, EmbeddingRecord};

use crate::error::{Error, Result};

/// Shortest round-trip decimal for `v`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

pub(crate) fn parse_f64(field: &str) -> std::result::Result<f64, String> {
    let v: f64 = field.parse().map_err(|_| format!("`{field}` is not a number"))?;
    if !v.is_finite() {
        return Err(format!("`{field}` is not finite"));
    }
    Ok(v)
}

pub(crate) fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn format_dataset(ds: &Dataset) -> String {
    let mut out = format!("#dim={}\n", ds.dim());
    for r in ds.records() {
        out.push_str(&r.utt_id);
        out.push('\t');
        out.push_str(&r.speaker);
        out.push('\t');
        out.push_str(&r.genre);
        for v in &r.vector {
            out.push('\t');
            out.push_str(&fmt_f64(*v));
        }
        out.push('\n');
    }
    out
}

/// Parses the dataset format; `path` is only used in error messages.
pub fn parse_dataset(text: &str, path: &Path) -> Result<Dataset> {
    let mut lines = text.lines().enumerate();
    let header = loop {
        match lines.next() {
            Some((_, l)) if l.trim().is_empty() => continue,
            Some((_, l)) => break l.trim_end_matches('\r'),
            None => return Err(Error::format(path, "missing header (expected `#dim=<d>`)")),
        }
    };
    let dim: usize = header
        .strip_prefix("#dim=")
        .and_then(|d| d.trim().parse().ok())
        .ok_or_else(|| Error::format(path, format!("missing header (expected `#dim=<d>`, found `{header}`)")))?;
    if dim == 0 {
        return Err(Error::format(path, "header declares dim=0"));
    }
    let mut records = Vec::new();
    for (i, line) in lines {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let lineno = i + 1;
        let fields: Vec<&str> = line.split('\t').collect();
        let row = |msg: String| {
            let utt = fields.first().copied().unwrap_or("");
            Error::format(path, format!("line {lineno} (utterance `{utt}`): {msg}"))
        };
        if fields.len() != dim + 3 {
            let got = fields.len().saturating_sub(3);
            return Err(row(format!("expected {dim} values, found {got}")));
        }
        let vector = fields[3..]
            .iter()
            .map(|f| parse_f64(f))
            .collect::<std::result::Result<Vec<f64>, String>>()
            .map_err(row)?;
        records.push(EmbeddingRecord::new(fields[0], fields[1], fields[2], vector));
    }
    let ds = Dataset::new(dim, records);
    let violations = ds.validate();
    if !violations.is_empty() {
        let list: Vec<String> = violations.iter().map(|v| v.to_string()).collect();
        return Err(Error::format(path, list.join("; ")));
    }
    Ok(ds)
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    parse_dataset(&read_text(path)?, path)
}

pub fn save_dataset(ds: &Dataset, path: &Path) -> Result<()> {
    write_text(path, &format_dataset(ds))
}

pub fn format_history(history: &[StepRecord]) -> String {
    let mut out = String::from("step,ce,da,total\n");
    for r in history {
        let _ = writeln!(out, "{},{},{},{}", r.step, fmt_f64(r.ce), fmt_f64(r.da), fmt_f64(r.total));
    }
    out
}

pub fn parse_history(text: &str, path: &Path) -> Result<Vec<StepRecord>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, "step,ce,da,total")) => {}
        _ => return Err(Error::format(path, "missing header `step,ce,da,total`")),
    }
    let mut out = Vec::new();
    for (i, line) in lines {
        let bad = |msg: String| Error::format(path, format!("line {}: {msg}", i + 1));
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 4 {
            return Err(bad(format!("expected 4 fields, found {}", f.len())));
        }
        let step = f[0].parse().map_err(|_| bad(format!("bad step `{}`", f[0])))?;
        let num = |s: &str| parse_f64(s).map_err(bad);
        out.push(StepRecord {
            step,
            ce: num(f[1])?,
            da: num(f[2])?,
            total: num(f[3])?,
        });
    }
    Ok(out)
}

/// One trial per line: `enroll1,enroll2,...<TAB>test<TAB>{0|1}`.
pub fn format_trials(trials: &TrialList) -> String {
    let mut out = String::new();
    for t in &trials.trials {
        let _ = writeln!(out, "{}\t{}\t{}", t.enroll_utts.join(","), t.test_utt, u8::from(t.target));
    }
    out
}
