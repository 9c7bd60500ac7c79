//! FIELD text files and binary PGM previews.
//!
//! FIELD format: a header line `FIELD <ndim> <dim0> [dim1]` followed by one
//! value per line in row-major order, written with the shortest decimal
//! representation that round-trips exactly.

use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use super::field::Field;
use super::grid::Grid;
use crate::error::{Error, Result};

pub fn field_to_text(field: &Field) -> String {
    let dims = field.grid().dims();
    let mut s = format!("FIELD {}", dims.len());
    for d in &dims {
        write!(s, " {d}").unwrap();
    }
    s.push('\n');
    for v in field.values() {
        writeln!(s, "{v:?}").unwrap();
    }
    s
}

pub fn field_from_text(text: &str) -> Result<Field> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| Error::Parse("empty FIELD file".into()))?;
    let tokens: Vec<&str> = header.split_whitespace().collect();
    if tokens.first() != Some(&"FIELD") {
        return Err(Error::Parse(format!("bad FIELD header: {header}")));
    }
    let parse = |t: Option<&&str>| -> Result<usize> {
        t.ok_or_else(|| Error::Parse("truncated FIELD header".into()))?
            .parse::<usize>()
            .map_err(|e| Error::Parse(e.to_string()))
    };
    let ndim = parse(tokens.get(1))?;
    let grid = match ndim {
        1 => Grid::line(parse(tokens.get(2))?)?,
        2 => Grid::plane(parse(tokens.get(2))?, parse(tokens.get(3))?)?,
        _ => return Err(Error::Parse(format!("unsupported ndim {ndim}"))),
    };
    let values = lines
        .filter(|l| !l.trim().is_empty())
        .map(|l| l.trim().parse::<f64>().map_err(|e| Error::Parse(format!("{l}: {e}"))))
        .collect::<Result<Vec<_>>>()?;
    Field::new(grid, values)
}

pub fn write_field(path: &Path, field: &Field) -> Result<()> {
    std::fs::write(path, field_to_text(field))?;
    Ok(())
}

pub fn read_field(path: &Path) -> Result<Field> {
    field_from_text(&std::fs::read_to_string(path)?)
}

/// Binary P5 PGM with values mapped affinely from `[min, max]` to `[0, 255]`.
/// A line is written as a single-row image; a constant field maps to 0.
pub fn field_to_pgm(field: &Field) -> Vec<u8> {
    let (rows, cols) = match field.grid() {
        Grid::Line(n) => (1, n),
        Grid::Plane { rows, cols } => (rows, cols),
    };
    let (lo, hi) = (field.min(), field.max());
    let span = hi - lo;
    let mut out = format!("P5\n{cols} {rows}\n255\n").into_bytes();
    out.extend(field.values().iter().map(|&v| {
        if span > 0.0 {
            (((v - lo) / span) * 255.0).round().clamp(0.0, 255.0) as u8
        } else {
            0
        }
    }));
    out
}

pub fn write_pgm(path: &Path, field: &Field) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(&field_to_pgm(field))?;
    Ok(())
}
