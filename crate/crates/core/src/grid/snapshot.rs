//! Plain-text field snapshots: a `key value` header followed by one cell
//! value per line in row-major order. Values use the shortest
//! representation that parses back to the same `f64`, so a write/read
//! cycle is bit-exact.

use std::io::{BufRead, Write};
use std::sync::Arc;

use thiserror::Error;

use super::{BoxGrid, Grid, GridError, GridField, RadialGrid};

const MAGIC: &str = "movingdom-snapshot 1";

#[derive(Debug, Error)]
pub enum SnapshotError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
    #[error(transparent)]
    Grid(#[from] GridError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub time: f64,
    pub field: GridField,
}

fn join(values: impl IntoIterator<Item = impl std::fmt::Display>) -> String {
    values
        .into_iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn write_snapshot<W: Write>(mut out: W, time: f64, field: &GridField) -> std::io::Result<()> {
    writeln!(out, "{MAGIC}")?;
    match field.grid().as_ref() {
        Grid::Box(g) => {
            writeln!(out, "grid box")?;
            writeln!(out, "dim {}", g.counts().len())?;
            writeln!(out, "cells {}", join(g.counts()))?;
            writeln!(out, "extents {}", join(g.extents()))?;
        }
        Grid::Radial(g) => {
            writeln!(out, "grid radial")?;
            writeln!(out, "dim {}", field.grid().dim())?;
            writeln!(out, "cells {}", g.cells())?;
        }
    }
    writeln!(out, "time {time}")?;
    writeln!(out, "values {}", field.len())?;
    for v in field.values() {
        writeln!(out, "{v}")?;
    }
    Ok(())
}

pub fn read_snapshot<R: BufRead>(input: R) -> Result<Snapshot, SnapshotError> {
    let mut lines = input.lines().enumerate();
    let mut next = |expect: &str| -> Result<(usize, String), SnapshotError> {
        match lines.next() {
            Some((i, line)) => Ok((i + 1, line?)),
            None => Err(SnapshotError::Format {
                line: 0,
                message: format!("unexpected end of file, expected {expect}"),
            }),
        }
    };
    let bad = |line: usize, message: String| SnapshotError::Format { line, message };
    let (n, magic) = next("header")?;
    if magic.trim() != MAGIC {
        return Err(bad(n, format!("expected `{MAGIC}`")));
    }
    let mut field = |key: &str| -> Result<(usize, Vec<String>), SnapshotError> {
        let (n, line) = next(key)?;
        let mut parts = line.split_whitespace();
        if parts.next() != Some(key) {
            return Err(bad(n, format!("expected `{key}`")));
        }
        Ok((n, parts.map(str::to_string).collect()))
    };
    fn parse<T: std::str::FromStr>(n: usize, s: &str) -> Result<T, SnapshotError> {
        s.parse().map_err(|_| SnapshotError::Format {
            line: n,
            message: format!("cannot parse `{s}`"),
        })
    }
    let (n, kind) = field("grid")?;
    let (dn, dim) = field("dim")?;
    let dim: usize = parse(dn, dim.first().map_or("", String::as_str))?;
    let (cn, cells) = field("cells")?;
    let cells: Vec<usize> = cells.iter().map(|c| parse(cn, c)).collect::<Result<_, _>>()?;
    let grid = match kind.first().map(String::as_str) {
        Some("box") => {
            let (en, extents) = field("extents")?;
            let extents: Vec<f64> = extents.iter().map(|c| parse(en, c)).collect::<Result<_, _>>()?;
            if cells.len() != dim {
                return Err(bad(cn, format!("expected {dim} cell counts")));
            }
            Grid::Box(BoxGrid::new(&cells, &extents)?)
        }
        Some("radial") => {
            let &[count] = cells.as_slice() else {
                return Err(bad(cn, "expected one radial cell count".into()));
            };
            Grid::Radial(RadialGrid::new(dim, count)?)
        }
        other => return Err(bad(n, format!("unknown grid kind {other:?}"))),
    };
    let (tn, time) = field("time")?;
    let time: f64 = parse(tn, time.first().map_or("", String::as_str))?;
    let (vn, count) = field("values")?;
    let count: usize = parse(vn, count.first().map_or("", String::as_str))?;
    if count != grid.len() {
        return Err(bad(vn, format!("{count} values for {} cells", grid.len())));
    }
    let mut values = Vec::with_capacity(count);
    for _ in 0..count {
        let (n, line) = next("value")?;
        values.push(parse::<f64>(n, line.trim())?);
    }
    Ok(Snapshot {
        time,
        field: GridField::new(Arc::new(grid), values)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let grid = Arc::new(Grid::Box(BoxGrid::new(&[3, 4], &[1.0, 0.7]).unwrap()));
        let mut values: Vec<f64> = (0..12)
            .map(|i| (i as f64 * 0.37).sin() * 10f64.powi(i - 6) - 1e-300)
            .collect();
        values[3] = -0.0;
        let field = GridField::new(grid, values).unwrap();
        let mut buf = Vec::new();
        write_snapshot(&mut buf, 0.1 + 0.2, &field).unwrap();
        let back = read_snapshot(buf.as_slice()).unwrap();
        assert_eq!(back.time.to_bits(), (0.1f64 + 0.2).to_bits());
        for (a, b) in back.field.values().iter().zip(field.values()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        assert_eq!(back.field.grid(), field.grid());

        let radial = Arc::new(Grid::Radial(RadialGrid::new(3, 9).unwrap()));
        let field = GridField::from_fn(radial, |y| y[0].exp()).unwrap();
        let mut buf = Vec::new();
        write_snapshot(&mut buf, -3.5, &field).unwrap();
        assert_eq!(read_snapshot(buf.as_slice()).unwrap().field, field);
    }

    #[test]
    fn malformed_input_is_rejected() {
        assert!(read_snapshot("nope\n".as_bytes()).is_err());
        let text = format!("{MAGIC}\ngrid radial\ndim 1\ncells 8\ntime 0\nvalues 2\n1\n2\n");
        assert!(read_snapshot(text.as_bytes()).is_err());
    }
}
