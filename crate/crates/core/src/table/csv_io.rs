// SPDX-License-Identifier: Apache-2.0
// SPDX-FileCopyrightText: Copyright The Lakeflow Authors

//! RFC-4180 CSV in the shared dialect: header row, empty field is null,
//! cells in their canonical text rendering.

use std::fs::File;
use std::io::{BufReader, Write};
use std::path::Path;

use csv::StringRecord;

use super::{ColumnType, Row, Schema, TableData, Value, ValueError};

#[derive(Debug, thiserror::Error)]
pub enum CsvError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed csv in {path}: {source}")]
    Csv {
        path: String,
        #[source]
        source: csv::Error,
    },
    #[error("header of {path} does not match schema: missing {missing:?}, unexpected {unexpected:?}")]
    HeaderMismatch {
        path: String,
        missing: Vec<String>,
        unexpected: Vec<String>,
    },
    #[error("{path} line {line}: expected {expected} fields, found {found}")]
    FieldCount {
        path: String,
        line: u64,
        expected: usize,
        found: usize,
    },
    #[error("{path} line {line} column {column:?}: {source}")]
    Value {
        path: String,
        line: u64,
        column: String,
        #[source]
        source: ValueError,
    },
}

impl CsvError {
    pub fn is_not_found(&self) -> bool {
        matches!(self, CsvError::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound)
    }
}

/// Writes `data` with a header row.
pub fn write_csv<W: Write>(out: W, data: &TableData) -> Result<(), csv::Error> {
    write_csv_rows(out, data.schema(), data.rows())
}

/// Writes a header for `schema` followed by `rows`, which must conform to it.
pub fn write_csv_rows<W: Write>(out: W, schema: &Schema, rows: &[Row]) -> Result<(), csv::Error> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .buffer_capacity(1 << 16)
        .from_writer(out);
    w.write_record(schema.names())?;
    let mut buf: Vec<String> = vec![String::new(); schema.len()];
    for row in rows {
        for (slot, cell) in buf.iter_mut().zip(row) {
            slot.clear();
            if let Some(v) = cell {
                v.render_into(slot);
            }
        }
        w.write_record(&buf)?;
    }
    w.flush()?;
    Ok(())
}

/// Streaming reader that maps file columns onto a schema's order.
pub struct CsvScanner {
    path: String,
    reader: csv::Reader<BufReader<File>>,
    header: Vec<String>,
    positions: Vec<usize>,
    record: StringRecord,
}

/// One record of a [`CsvScanner`], addressed by schema column index.
pub struct RawRecord<'a> {
    scanner: &'a CsvScanner,
}

impl CsvScanner {
    /// Opens `path` without a schema; call [`CsvScanner::bind`] before reading.
    pub fn open(path: &Path) -> Result<Self, CsvError> {
        let path_s = path.display().to_string();
        let file = File::open(path).map_err(|source| CsvError::Io {
            path: path_s.clone(),
            source,
        })?;
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .flexible(true)
            .from_reader(BufReader::with_capacity(1 << 16, file));
        let header = reader
            .headers()
            .map_err(|source| CsvError::Csv {
                path: path_s.clone(),
                source,
            })?
            .iter()
            .map(str::to_string)
            .collect();
        Ok(CsvScanner {
            path: path_s,
            reader,
            header,
            positions: Vec::new(),
            record: StringRecord::new(),
        })
    }

    pub fn header(&self) -> &[String] {
        &self.header
    }

    /// Resolves schema columns against the header; both must name the same set.
    pub fn bind(&mut self, schema: &Schema) -> Result<(), CsvError> {
        let mut missing = Vec::new();
        let mut positions = Vec::with_capacity(schema.len());
        for name in schema.names() {
            match self.header.iter().position(|h| h == name) {
                Some(p) => positions.push(p),
                None => missing.push(name.to_string()),
            }
        }
        let unexpected: Vec<String> = self
            .header
            .iter()
            .filter(|h| schema.index_of(h).is_none())
            .cloned()
            .collect();
        if !missing.is_empty() || !unexpected.is_empty() || self.header.len() != schema.len() {
            return Err(CsvError::HeaderMismatch {
                path: self.path.clone(),
                missing,
                unexpected,
            });
        }
        self.positions = positions;
        Ok(())
    }

    /// Advances to the next record; `false` at end of file.
    pub fn advance(&mut self) -> Result<bool, CsvError> {
        let more = self
            .reader
            .read_record(&mut self.record)
            .map_err(|source| CsvError::Csv {
                path: self.path.clone(),
                source,
            })?;
        if more && self.record.len() != self.header.len() {
            return Err(CsvError::FieldCount {
                path: self.path.clone(),
                line: self.line(),
                expected: self.header.len(),
                found: self.record.len(),
            });
        }
        Ok(more)
    }

    pub fn current(&self) -> RawRecord<'_> {
        RawRecord { scanner: self }
    }

    fn line(&self) -> u64 {
        self.record.position().map_or(0, |p| p.line())
    }
}

impl RawRecord<'_> {
    /// Raw text of schema column `i`; `None` for null.
    #[inline]
    pub fn cell(&self, i: usize) -> Option<&str> {
        let s = &self.scanner.record[self.scanner.positions[i]];
        (!s.is_empty()).then_some(s)
    }

    pub fn line(&self) -> u64 {
        self.scanner.line()
    }

    pub fn value_error(&self, schema: &Schema, i: usize, source: ValueError) -> CsvError {
        CsvError::Value {
            path: self.scanner.path.clone(),
            line: self.line(),
            column: schema.columns()[i].name.clone(),
            source,
        }
    }

    pub fn parse_cell(&self, schema: &Schema, i: usize) -> Result<Option<Value>, CsvError> {
        match self.cell(i) {
            None => Ok(None),
            Some(text) => Value::parse(schema.columns()[i].ty, text)
                .map(Some)
                .map_err(|e| self.value_error(schema, i, e)),
        }
    }

    pub fn parse_row(&self, schema: &Schema) -> Result<Row, CsvError> {
        (0..schema.len()).map(|i| self.parse_cell(schema, i)).collect()
    }

    pub fn column_type(&self, schema: &Schema, i: usize) -> ColumnType {
        schema.columns()[i].ty
    }
}

/// Opens and binds a scanner in one step.
pub fn scan_csv(path: &Path, schema: &Schema) -> Result<CsvScanner, CsvError> {
    let mut s = CsvScanner::open(path)?;
    s.bind(schema)?;
    Ok(s)
}

/// Reads a whole file into typed rows, in file order.
pub fn read_csv(path: &Path, schema: &Schema) -> Result<TableData, CsvError> {
    let mut scanner = scan_csv(path, schema)?;
    let mut rows = Vec::new();
    while scanner.advance()? {
        rows.push(scanner.current().parse_row(schema)?);
    }
    // Cells were parsed with the schema's own types.
    Ok(TableData::new(schema.clone(), rows).expect("rows parsed against schema"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::table::{Column, Timestamp};

    fn schema() -> Schema {
        Schema::new(vec![
            Column::new("id", ColumnType::Integer),
            Column::new("name", ColumnType::Text),
            Column::new("amount", ColumnType::Decimal),
            Column::new("ok", ColumnType::Boolean),
            Column::new("ts", ColumnType::Timestamp),
        ])
        .unwrap()
    }

    #[test]
    fn write_then_read() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        let data = TableData::new(
            schema(),
            vec![
                vec![
                    Some(Value::Integer(1)),
                    Some(Value::text("Zürich, \"HQ\"\nline")),
                    Some(Value::decimal("-0.50").unwrap()),
                    Some(Value::Boolean(false)),
                    Some(Value::Timestamp(Timestamp::from_millis(1_700_000_000_123))),
                ],
                vec![Some(Value::Integer(2)), None, None, None, None],
            ],
        )
        .unwrap();
        write_csv(File::create(&path).unwrap(), &data).unwrap();
        assert_eq!(read_csv(&path, &schema()).unwrap(), data);
    }

    #[test]
    fn header_reordering_and_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        std::fs::write(&path, "name,id\nx,1\n").unwrap();
        let s = Schema::new(vec![
            Column::new("id", ColumnType::Integer),
            Column::new("name", ColumnType::Text),
        ])
        .unwrap();
        let t = read_csv(&path, &s).unwrap();
        assert_eq!(t.rows()[0], vec![Some(Value::Integer(1)), Some(Value::text("x"))]);

        std::fs::write(&path, "id\n1\n").unwrap();
        match read_csv(&path, &s) {
            Err(CsvError::HeaderMismatch { missing, .. }) => assert_eq!(missing, vec!["name"]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn bad_value_reports_line_and_column() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        std::fs::write(&path, "id\n1\nx\n").unwrap();
        let s = Schema::new(vec![Column::new("id", ColumnType::Integer)]).unwrap();
        match read_csv(&path, &s) {
            Err(CsvError::Value { line, column, .. }) => {
                assert_eq!(line, 3);
                assert_eq!(column, "id");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn short_record_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        std::fs::write(&path, "a,b\n1\n").unwrap();
        let s = Schema::text(&["a", "b"]).unwrap();
        assert!(matches!(read_csv(&path, &s), Err(CsvError::FieldCount { .. })));
    }
}
