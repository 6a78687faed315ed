//! Versioned CSV tables. Row 1 is `schema,<name>,<version>`, row 2 the
//! column names, then data rows.

use std::io::{Read, Write};
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum TableError {
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("missing or malformed schema row")]
    Schema,
    #[error("row {row} has {got} fields, expected {expected}")]
    Width { row: usize, got: usize, expected: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub version: u32,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

/// Shortest decimal form that parses back to the same `f64`.
pub fn num(v: f64) -> String {
    v.to_string()
}

impl Table {
    pub fn new(name: &str, version: u32, columns: &[&str]) -> Self {
        Table {
            name: name.to_string(),
            version,
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push<I, S>(&mut self, row: I)
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let row: Vec<String> = row.into_iter().map(Into::into).collect();
        assert_eq!(row.len(), self.columns.len(), "row width for table {}", self.name);
        self.rows.push(row);
    }

    pub fn write<W: Write>(&self, out: W) -> Result<(), TableError> {
        let mut w = csv::WriterBuilder::new().flexible(true).from_writer(out);
        w.write_record(["schema", &self.name, &self.version.to_string()])?;
        w.write_record(&self.columns)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<(), TableError> {
        let file = std::fs::File::create(path)?;
        self.write(std::io::BufWriter::new(file))
    }

    pub fn read<R: Read>(input: R) -> Result<Self, TableError> {
        let mut r = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .from_reader(input);
        let mut records = r.records();
        let schema = records.next().ok_or(TableError::Schema)??;
        if schema.len() != 3 || &schema[0] != "schema" {
            return Err(TableError::Schema);
        }
        let version = schema[2].parse().map_err(|_| TableError::Schema)?;
        let columns: Vec<String> = records
            .next()
            .ok_or(TableError::Schema)??
            .iter()
            .map(str::to_string)
            .collect();
        let mut rows = Vec::new();
        for (i, rec) in records.enumerate() {
            let rec = rec?;
            if rec.len() != columns.len() {
                return Err(TableError::Width {
                    row: i + 3,
                    got: rec.len(),
                    expected: columns.len(),
                });
            }
            rows.push(rec.iter().map(str::to_string).collect());
        }
        Ok(Table {
            name: schema[1].to_string(),
            version,
            columns,
            rows,
        })
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }
}
