//! Model checkpoint text format.
//!
//! ```text
//! #checkpoint input_dim=16 hidden=64 embed_dim=16 num_classes=50 loss_kind=aam_softmax margin=0.2 scale=30.0
//! #layer0.weight 64x16
//! <64 tab-separated rows of 16 values>
//! #layer0.bias 1x64
//! ...
//! #class_weights 50x16
//! ```
//!
//! `hidden=none` marks a single-layer model. Values use the dataset file's
//! float format.

use std::fmt::Write as _;
use std::path::Path;

use genre_align_core::matrix::Mat;
use genre_align_core::trainer::{Affine, ClassLossKind, ClassLossParams, ModelShape, ProjectionModel};

use crate::error::{Error, Result};
use crate::io::{fmt_f64, parse_f64, read_text, write_text};

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: ProjectionModel,
    pub class_loss: ClassLossParams,
}

fn push_block(out: &mut String, name: &str, rows: usize, cols: usize, data: &[f64]) {
    let _ = writeln!(out, "#{name} {rows}x{cols}");
    for r in 0..rows {
        let row: Vec<String> = data[r * cols..(r + 1) * cols].iter().map(|v| fmt_f64(*v)).collect();
        out.push_str(&row.join("\t"));
        out.push('\n');
    }
}

pub fn format_checkpoint(ck: &Checkpoint) -> String {
    let shape = ck.model.shape();
    let hidden = shape.hidden.map_or_else(|| "none".to_string(), |h| h.to_string());
    let mut out = format!(
        "#checkpoint input_dim={} hidden={hidden} embed_dim={} num_classes={} loss_kind={} margin={} scale={}\n",
        shape.input_dim,
        shape.embed_dim,
        shape.num_classes,
        ck.class_loss.kind,
        fmt_f64(ck.class_loss.margin),
        fmt_f64(ck.class_loss.scale),
    );
    for (i, layer) in ck.model.layers.iter().enumerate() {
        let w = &layer.weight;
        push_block(&mut out, &format!("layer{i}.weight"), w.rows(), w.cols(), w.as_slice());
        push_block(&mut out, &format!("layer{i}.bias"), 1, layer.bias.len(), &layer.bias);
    }
    let c = &ck.model.class_weights;
    push_block(&mut out, "class_weights", c.rows(), c.cols(), c.as_slice());
    out
}

struct Reader<'a> {
    lines: std::iter::Enumerate<std::str::Lines<'a>>,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn err(&self, line: usize, msg: impl std::fmt::Display) -> Error {
        Error::format(self.path, format!("line {line}: {msg}"))
    }

    fn next_line(&mut self) -> Result<(usize, &'a str)> {
        match self.lines.next() {
            Some((i, l)) => Ok((i + 1, l.trim_end_matches('\r'))),
            None => Err(Error::format(self.path, "unexpected end of file")),
        }
    }

    fn block(&mut self, name: &str, rows: usize, cols: usize) -> Result<Vec<f64>> {
        let (n, header) = self.next_line()?;
        let expected = format!("#{name} {rows}x{cols}");
        if header != expected {
            return Err(self.err(n, format!("expected `{expected}`, found `{header}`")));
        }
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows {
            let (n, line) = self.next_line()?;
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != cols {
                return Err(self.err(n, format!("expected {cols} values, found {}", fields.len())));
            }
            for f in fields {
                data.push(parse_f64(f).map_err(|m| self.err(n, m))?);
            }
        }
        Ok(data)
    }
}

fn header_fields(line: &str) -> Option<Vec<(&str, &str)>> {
    let rest = line.strip_prefix("#checkpoint ")?;
    rest.split_whitespace().map(|kv| kv.split_once('=')).collect()
}

pub fn parse_checkpoint(text: &str, path: &Path) -> Result<Checkpoint> {
    let mut rd = Reader {
        lines: text.lines().enumerate(),
        path,
    };
    let (n, header) = rd.next_line().map_err(|_| Error::format(path, "missing header"))?;
    let fields = header_fields(header).ok_or_else(|| rd.err(n, "missing `#checkpoint` header"))?;
    let get = |key: &str| {
        fields
            .iter()
            .find(|(k, _)| *k == key)
            .map(|(_, v)| *v)
            .ok_or_else(|| rd.err(n, format!("header lacks `{key}`")))
    };
    let int = |key: &str| -> Result<usize> {
        let v = get(key)?;
        v.parse().map_err(|_| rd.err(n, format!("bad {key} `{v}`")))
    };
    let hidden = match get("hidden")? {
        "none" => None,
        v => Some(v.parse().map_err(|_| rd.err(n, format!("bad hidden `{v}`")))?),
    };
    let shape = ModelShape {
        input_dim: int("input_dim")?,
        hidden,
        embed_dim: int("embed_dim")?,
        num_classes: int("num_classes")?,
    };
    shape.validate().map_err(|e| rd.err(n, e))?;
    let kind: ClassLossKind = get("loss_kind")?.parse().map_err(|e| rd.err(n, e))?;
    let margin = parse_f64(get("margin")?).map_err(|m| rd.err(n, m))?;
    let scale = parse_f64(get("scale")?).map_err(|m| rd.err(n, m))?;

    let dims: Vec<usize> = match shape.hidden {
        Some(h) => vec![shape.input_dim, h, shape.embed_dim],
        None => vec![shape.input_dim, shape.embed_dim],
    };
    let mut layers = Vec::new();
    for (i, w) in dims.windows(2).enumerate() {
        let weight = Mat::from_vec(w[1], w[0], rd.block(&format!("layer{i}.weight"), w[1], w[0])?);
        let bias = rd.block(&format!("layer{i}.bias"), 1, w[1])?;
        layers.push(Affine { weight, bias });
    }
    let cw = rd.block("class_weights", shape.num_classes, shape.embed_dim)?;
    let class_weights = Mat::from_vec(shape.num_classes, shape.embed_dim, cw);
    if let Some((i, l)) = rd.lines.find(|(_, l)| !l.trim().is_empty()) {
        return Err(rd.err(i + 1, format!("unexpected trailing content `{l}`")));
    }
    Ok(Checkpoint {
        model: ProjectionModel { layers, class_weights },
        class_loss: ClassLossParams { kind, margin, scale },
    })
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    parse_checkpoint(&read_text(path)?, path)
}

pub fn save_checkpoint(ck: &Checkpoint, path: &Path) -> Result<()> {
    write_text(path, &format_checkpoint(ck))
}
