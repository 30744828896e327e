// SPDX-License-Identifier: Apache-2.0
// SPDX-FileCopyrightText: Copyright The Lakeflow Authors

//! Rows already encoded as canonical CSV records, ready to be written.

use std::borrow::Cow;
use std::collections::BTreeMap;

use super::csv_io::{CsvError, RawRecord};
use super::{canonical_text, ColumnType, Row, Schema, TableData, Timestamp, Value};

/// Encoded CSV body (no header) for rows of one schema, with the byte offset
/// where each row starts and the maximum of every timestamp column.
#[derive(Debug, Clone)]
pub struct RowBatch {
    schema: Schema,
    body: Vec<u8>,
    starts: Vec<usize>,
    ts_columns: Vec<usize>,
    ts_max: Vec<Option<Timestamp>>,
    // Canonical timestamps are fixed-width, so text order is time order.
    ts_max_text: Vec<String>,
    scratch: Vec<String>,
}

impl RowBatch {
    pub fn new(schema: Schema) -> Self {
        let ts_columns: Vec<usize> = schema
            .columns()
            .iter()
            .enumerate()
            .filter(|(_, c)| c.ty == ColumnType::Timestamp)
            .map(|(i, _)| i)
            .collect();
        RowBatch {
            ts_max: vec![None; ts_columns.len()],
            ts_max_text: vec![String::new(); ts_columns.len()],
            scratch: vec![String::new(); schema.len()],
            schema,
            body: Vec::new(),
            starts: Vec::new(),
            ts_columns,
        }
    }

    pub fn from_table(data: &TableData) -> Self {
        let mut batch = RowBatch::new(data.schema().clone());
        batch.body.reserve(data.len() * 16 * data.schema().len().max(1));
        for row in data.rows() {
            batch.push_row(row);
        }
        batch
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn len(&self) -> usize {
        self.starts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.starts.is_empty()
    }

    /// Appends a typed row, which must conform to the schema.
    pub fn push_row(&mut self, row: &Row) {
        let mut scratch = std::mem::take(&mut self.scratch);
        for (slot, cell) in scratch.iter_mut().zip(row) {
            slot.clear();
            if let Some(v) = cell {
                v.render_into(slot);
            }
        }
        for (k, &i) in self.ts_columns.iter().enumerate() {
            let ts = row[i].as_ref().and_then(|v| v.as_timestamp());
            self.ts_max[k] = self.ts_max[k].max(ts);
        }
        self.write_fields(scratch.iter().map(|s| (!s.is_empty()).then_some(s.as_str())));
        self.scratch = scratch;
    }

    /// Appends fields that are already canonical (see [`canonical_fields`]).
    pub fn push_canonical(&mut self, fields: &[Option<Cow<'_, str>>]) {
        for (k, &i) in self.ts_columns.iter().enumerate() {
            if let Some(t) = fields[i].as_deref() {
                let best = &mut self.ts_max_text[k];
                if t > best.as_str() {
                    best.clear();
                    best.push_str(t);
                }
            }
        }
        self.write_fields(fields.iter().map(|f| f.as_deref()));
    }

    fn write_fields<'a>(&mut self, fields: impl Iterator<Item = Option<&'a str>>) {
        self.starts.push(self.body.len());
        for (n, field) in fields.enumerate() {
            if n > 0 {
                self.body.push(b',');
            }
            let text = field.unwrap_or("");
            if needs_quotes(text) {
                self.body.push(b'"');
                for &b in text.as_bytes() {
                    if b == b'"' {
                        self.body.push(b'"');
                    }
                    self.body.push(b);
                }
                self.body.push(b'"');
            } else {
                self.body.extend_from_slice(text.as_bytes());
            }
        }
        // A lone empty field would be an empty line, which readers skip.
        if self.schema.len() == 1 && self.body.len() == *self.starts.last().expect("just pushed") {
            self.body.extend_from_slice(b"\"\"");
        }
        self.body.push(b'\n');
    }

    /// Encoded rows `range`, each terminated by a newline.
    pub fn body(&self, range: std::ops::Range<usize>) -> &[u8] {
        let start = self.starts.get(range.start).copied().unwrap_or(self.body.len());
        let end = self.starts.get(range.end).copied().unwrap_or(self.body.len());
        &self.body[start..end]
    }

    /// Parses the encoded rows back into typed rows.
    pub fn to_table_data(&self) -> Result<TableData, CsvError> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .from_reader(self.body.as_slice());
        let mut record = csv::StringRecord::new();
        let mut rows = Vec::with_capacity(self.len());
        let err = |line: usize, source| CsvError::Csv {
            path: format!("<batch row {line}>"),
            source,
        };
        while reader.read_record(&mut record).map_err(|e| err(rows.len(), e))? {
            let row = record
                .iter()
                .zip(self.schema.columns())
                .map(|(text, col)| match text {
                    "" => Ok(None),
                    t => Value::parse(col.ty, t).map(Some).map_err(|source| CsvError::Value {
                        path: "<batch>".into(),
                        line: rows.len() as u64 + 1,
                        column: col.name.clone(),
                        source,
                    }),
                })
                .collect::<Result<Row, _>>()?;
            rows.push(row);
        }
        Ok(TableData::new(self.schema.clone(), rows).expect("batch rows conform to schema"))
    }

    /// Maximum non-null value of each timestamp column, by column name.
    pub fn timestamp_max(&self) -> BTreeMap<String, Option<Timestamp>> {
        self.ts_columns
            .iter()
            .zip(self.ts_max.iter().zip(&self.ts_max_text))
            .map(|(&i, (typed, text))| {
                let from_text = Timestamp::parse(text).ok();
                (self.schema.columns()[i].name.clone(), (*typed).max(from_text))
            })
            .collect()
    }
}

fn needs_quotes(text: &str) -> bool {
    text.bytes().any(|b| matches!(b, b',' | b'"' | b'\n' | b'\r'))
        || text.starts_with(' ')
        || text.ends_with(' ')
}

/// Every cell of `rec` in canonical form, validated against `schema`.
pub fn canonical_fields<'r>(rec: &'r RawRecord<'_>, schema: &Schema) -> Result<Vec<Option<Cow<'r, str>>>, CsvError> {
    let mut out = Vec::with_capacity(schema.len());
    for (i, col) in schema.columns().iter().enumerate() {
        out.push(match rec.cell(i) {
            None => None,
            Some(text) => Some(canonical_text(col.ty, text).map_err(|e| rec.value_error(schema, i, e))?),
        });
    }
    Ok(out)
}
