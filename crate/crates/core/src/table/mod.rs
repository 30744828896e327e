// SPDX-License-Identifier: Apache-2.0
// SPDX-FileCopyrightText: Copyright The Lakeflow Authors

//! Typed tabular data shared by sources, the lake, and change detection.
//!
//! Every value has a single canonical text rendering. The same rendering is
//! used for CSV files and for row hashing, so a cell read back from the lake
//! hashes identically to the cell that was written.

mod batch;
mod csv_io;
mod timestamp;

use std::borrow::Cow;
use std::collections::HashSet;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use batch::{canonical_fields, RowBatch};
pub use csv_io::{read_csv, scan_csv, write_csv, write_csv_rows, CsvError, CsvScanner, RawRecord};
pub use timestamp::{Timestamp, TimestampError};

use crate::fnv::Fnv1a64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnType {
    Integer,
    Decimal,
    Text,
    Boolean,
    Timestamp,
}

impl ColumnType {
    pub fn as_str(self) -> &'static str {
        match self {
            ColumnType::Integer => "integer",
            ColumnType::Decimal => "decimal",
            ColumnType::Text => "text",
            ColumnType::Boolean => "boolean",
            ColumnType::Timestamp => "timestamp",
        }
    }
}

impl fmt::Display for ColumnType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    #[serde(rename = "type")]
    pub ty: ColumnType,
}

impl Column {
    pub fn new(name: impl Into<String>, ty: ColumnType) -> Self {
        Column {
            name: name.into(),
            ty,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SchemaError {
    #[error("duplicate column name {0:?}")]
    DuplicateColumn(String),
    #[error("empty column name at position {0}")]
    EmptyColumnName(usize),
    #[error("cannot read schema file {path}: {reason}")]
    Unreadable { path: String, reason: String },
}

/// Ordered, uniquely named columns. Order is significant for hashing.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct Schema {
    columns: Vec<Column>,
}

impl Schema {
    pub fn new(columns: Vec<Column>) -> Result<Self, SchemaError> {
        let mut seen = HashSet::new();
        for (i, c) in columns.iter().enumerate() {
            if c.name.is_empty() {
                return Err(SchemaError::EmptyColumnName(i));
            }
            if !seen.insert(c.name.as_str()) {
                return Err(SchemaError::DuplicateColumn(c.name.clone()));
            }
        }
        Ok(Schema { columns })
    }

    /// All-text schema over the given names.
    pub fn text(names: &[&str]) -> Result<Self, SchemaError> {
        Schema::new(names.iter().map(|n| Column::new(*n, ColumnType::Text)).collect())
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn column(&self, name: &str) -> Option<&Column> {
        self.columns.iter().find(|c| c.name == name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.columns.iter().map(|c| c.name.as_str())
    }

    /// Lowercase hex FNV-1a digest over `name 0x1F type 0x1E` per column.
    pub fn fingerprint(&self) -> String {
        let mut h = Fnv1a64::new();
        for c in &self.columns {
            h.write(c.name.as_bytes());
            h.write_byte(0x1f);
            h.write(c.ty.as_str().as_bytes());
            h.write_byte(0x1e);
        }
        format!("{:016x}", h.finish())
    }

    pub fn load(path: &Path) -> Result<Self, SchemaError> {
        let unreadable = |reason: String| SchemaError::Unreadable {
            path: path.display().to_string(),
            reason,
        };
        let text = std::fs::read_to_string(path).map_err(|e| unreadable(e.to_string()))?;
        serde_json::from_str(&text).map_err(|e| unreadable(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("schema serializes")
    }
}

impl<'de> Deserialize<'de> for Schema {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            columns: Vec<Column>,
        }
        let raw = Raw::deserialize(deserializer)?;
        Schema::new(raw.columns).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ValueError {
    #[error("{text:?} is not a valid {ty}")]
    Invalid { ty: ColumnType, text: String },
    #[error(transparent)]
    Timestamp(#[from] TimestampError),
}

/// Decimal kept as its validated source text (`-?digits[.digits]`).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Decimal(Box<str>);

impl Decimal {
    pub fn parse(text: &str) -> Result<Self, ValueError> {
        if is_decimal(text) {
            Ok(Decimal(text.into()))
        } else {
            Err(ValueError::Invalid {
                ty: ColumnType::Decimal,
                text: text.to_string(),
            })
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

fn is_decimal(text: &str) -> bool {
    let b = text.as_bytes();
    let b = b.strip_prefix(b"-").unwrap_or(b);
    let (int, frac) = match b.iter().position(|&c| c == b'.') {
        Some(i) => (&b[..i], Some(&b[i + 1..])),
        None => (b, None),
    };
    !int.is_empty()
        && int.iter().all(u8::is_ascii_digit)
        && frac.map_or(true, |f| !f.is_empty() && f.iter().all(u8::is_ascii_digit))
}

fn is_canonical_integer(text: &str) -> bool {
    let b = text.as_bytes();
    let digits = b.strip_prefix(b"-").unwrap_or(b);
    match digits {
        [] => false,
        [b'0'] => digits.len() == b.len(),
        [b'0', ..] => false,
        _ => digits.len() <= 18 && digits.iter().all(u8::is_ascii_digit),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Value {
    Integer(i64),
    Decimal(Decimal),
    Text(Box<str>),
    Boolean(bool),
    Timestamp(Timestamp),
}

/// A nullable cell.
pub type Cell = Option<Value>;
pub type Row = Vec<Cell>;

impl Value {
    pub fn text(s: impl Into<Box<str>>) -> Self {
        Value::Text(s.into())
    }

    pub fn decimal(s: &str) -> Result<Self, ValueError> {
        Decimal::parse(s).map(Value::Decimal)
    }

    pub fn column_type(&self) -> ColumnType {
        match self {
            Value::Integer(_) => ColumnType::Integer,
            Value::Decimal(_) => ColumnType::Decimal,
            Value::Text(_) => ColumnType::Text,
            Value::Boolean(_) => ColumnType::Boolean,
            Value::Timestamp(_) => ColumnType::Timestamp,
        }
    }

    /// Parses one non-null field.
    pub fn parse(ty: ColumnType, text: &str) -> Result<Self, ValueError> {
        let invalid = || ValueError::Invalid {
            ty,
            text: text.to_string(),
        };
        match ty {
            ColumnType::Integer => text.parse().map(Value::Integer).map_err(|_| invalid()),
            ColumnType::Decimal => Decimal::parse(text).map(Value::Decimal),
            ColumnType::Text => Ok(Value::Text(text.into())),
            ColumnType::Boolean => match text {
                "true" => Ok(Value::Boolean(true)),
                "false" => Ok(Value::Boolean(false)),
                _ => Err(invalid()),
            },
            ColumnType::Timestamp => Ok(Value::Timestamp(Timestamp::parse(text)?)),
        }
    }

    /// Appends the canonical text rendering.
    pub fn render_into(&self, out: &mut String) {
        use std::fmt::Write;
        match self {
            Value::Integer(v) => write!(out, "{v}").expect("write to string"),
            Value::Decimal(d) => out.push_str(d.as_str()),
            Value::Text(s) => out.push_str(s),
            Value::Boolean(true) => out.push_str("true"),
            Value::Boolean(false) => out.push_str("false"),
            Value::Timestamp(t) => t.render_into(out),
        }
    }

    pub fn render(&self) -> Cow<'_, str> {
        match self {
            Value::Decimal(d) => Cow::Borrowed(d.as_str()),
            Value::Text(s) => Cow::Borrowed(s),
            Value::Boolean(true) => Cow::Borrowed("true"),
            Value::Boolean(false) => Cow::Borrowed("false"),
            other => {
                let mut s = String::new();
                other.render_into(&mut s);
                Cow::Owned(s)
            }
        }
    }

    pub fn as_timestamp(&self) -> Option<Timestamp> {
        match self {
            Value::Timestamp(t) => Some(*t),
            _ => None,
        }
    }
}

/// Validates a raw non-null field and returns its canonical rendering,
/// borrowing when the input is already canonical.
pub fn canonical_text(ty: ColumnType, text: &str) -> Result<Cow<'_, str>, ValueError> {
    match ty {
        ColumnType::Text => Ok(Cow::Borrowed(text)),
        ColumnType::Decimal if is_decimal(text) => Ok(Cow::Borrowed(text)),
        ColumnType::Decimal => Err(ValueError::Invalid {
            ty,
            text: text.to_string(),
        }),
        ColumnType::Boolean => match text {
            "true" | "false" => Ok(Cow::Borrowed(text)),
            _ => Err(ValueError::Invalid {
                ty,
                text: text.to_string(),
            }),
        },
        ColumnType::Integer if is_canonical_integer(text) => Ok(Cow::Borrowed(text)),
        ColumnType::Timestamp => {
            let ts = Timestamp::parse(text)?;
            if text.len() == 24 {
                Ok(Cow::Borrowed(text))
            } else {
                Ok(Cow::Owned(ts.render()))
            }
        }
        ColumnType::Integer => Ok(Value::parse(ty, text)?.render().into_owned().into()),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TableError {
    #[error("row {row} has {found} cells, schema has {expected} columns")]
    Arity {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("row {row} column {column:?}: expected {expected}, found {found}")]
    CellType {
        row: usize,
        column: String,
        expected: ColumnType,
        found: ColumnType,
    },
}

/// Rows conforming to a schema, in a significant order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TableData {
    schema: Schema,
    rows: Vec<Row>,
}

impl TableData {
    pub fn new(schema: Schema, rows: Vec<Row>) -> Result<Self, TableError> {
        for (i, row) in rows.iter().enumerate() {
            check_row(&schema, i, row)?;
        }
        Ok(TableData { schema, rows })
    }

    pub fn empty(schema: Schema) -> Self {
        TableData {
            schema,
            rows: Vec::new(),
        }
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn rows(&self) -> &[Row] {
        &self.rows
    }

    pub fn rows_mut(&mut self) -> &mut Vec<Row> {
        &mut self.rows
    }

    pub fn into_rows(self) -> Vec<Row> {
        self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn push(&mut self, row: Row) -> Result<(), TableError> {
        check_row(&self.schema, self.rows.len(), &row)?;
        self.rows.push(row);
        Ok(())
    }

    /// Re-checks every row; used where rows were edited through `rows_mut`.
    pub fn validate(&self) -> Result<(), TableError> {
        for (i, row) in self.rows.iter().enumerate() {
            check_row(&self.schema, i, row)?;
        }
        Ok(())
    }

    pub fn extend(&mut self, other: TableData) -> Result<(), TableError> {
        for row in other.rows {
            self.push(row)?;
        }
        Ok(())
    }

    /// Maximum non-null timestamp in `column`, if any.
    pub fn max_timestamp(&self, column: usize) -> Option<Timestamp> {
        self.rows
            .iter()
            .filter_map(|r| r[column].as_ref().and_then(Value::as_timestamp))
            .max()
    }
}

fn check_row(schema: &Schema, index: usize, row: &Row) -> Result<(), TableError> {
    if row.len() != schema.len() {
        return Err(TableError::Arity {
            row: index,
            expected: schema.len(),
            found: row.len(),
        });
    }
    for (cell, col) in row.iter().zip(schema.columns()) {
        if let Some(v) = cell {
            if v.column_type() != col.ty {
                return Err(TableError::CellType {
                    row: index,
                    column: col.name.clone(),
                    expected: col.ty,
                    found: v.column_type(),
                });
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn schema_rejects_duplicates() {
        assert_eq!(
            Schema::text(&["a", "b", "a"]),
            Err(SchemaError::DuplicateColumn("a".into()))
        );
    }

    #[test]
    fn fingerprint_depends_on_order_and_type() {
        let a = Schema::text(&["x", "y"]).unwrap();
        let b = Schema::text(&["y", "x"]).unwrap();
        let c = Schema::new(vec![
            Column::new("x", ColumnType::Integer),
            Column::new("y", ColumnType::Text),
        ])
        .unwrap();
        assert_ne!(a.fingerprint(), b.fingerprint());
        assert_ne!(a.fingerprint(), c.fingerprint());
        assert_eq!(a.fingerprint().len(), 16);
    }

    #[test]
    fn schema_json_round_trip() {
        let s = Schema::new(vec![
            Column::new("id", ColumnType::Integer),
            Column::new("ts", ColumnType::Timestamp),
        ])
        .unwrap();
        let back: Schema = serde_json::from_str(&s.to_json()).unwrap();
        assert_eq!(back, s);
        assert!(serde_json::from_str::<Schema>(r#"{"columns":[{"name":"a","type":"text"},{"name":"a","type":"text"}]}"#).is_err());
    }

    #[test]
    fn rendering_table() {
        assert_eq!(Value::Integer(7).render(), "7");
        assert_eq!(Value::text("7").render(), "7");
        assert_eq!(Value::Integer(-42).render(), "-42");
        assert_eq!(Value::decimal("5000.00").unwrap().render(), "5000.00");
        assert_eq!(Value::Boolean(true).render(), "true");
        assert_eq!(
            Value::Timestamp(Timestamp::from_millis(0)).render(),
            "1970-01-01T00:00:00.000Z"
        );
    }

    #[test]
    fn decimal_validation() {
        for ok in ["0", "-1", "5000.00", "0.5", "-0.25"] {
            assert!(Decimal::parse(ok).is_ok(), "{ok}");
        }
        for bad in ["", "-", ".5", "5.", "1e5", "1,5", "+1", "--1", "1.2.3"] {
            assert!(Decimal::parse(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn canonical_text_normalizes() {
        assert_eq!(canonical_text(ColumnType::Integer, "-0042").unwrap(), "-42");
        assert_eq!(canonical_text(ColumnType::Integer, "+7").unwrap(), "7");
        assert_eq!(canonical_text(ColumnType::Integer, "-0").unwrap(), "0");
        assert!(matches!(canonical_text(ColumnType::Integer, "12").unwrap(), Cow::Borrowed(_)));
        assert_eq!(
            canonical_text(ColumnType::Timestamp, "2024-03-01T12:34:56Z").unwrap(),
            "2024-03-01T12:34:56.000Z"
        );
        assert!(canonical_text(ColumnType::Boolean, "TRUE").is_err());
        assert!(canonical_text(ColumnType::Integer, "1.0").is_err());
    }

    #[test]
    fn table_checks_arity_and_types() {
        let s = Schema::new(vec![
            Column::new("id", ColumnType::Integer),
            Column::new("name", ColumnType::Text),
        ])
        .unwrap();
        assert!(TableData::new(s.clone(), vec![vec![Some(Value::Integer(1)), None]]).is_ok());
        assert!(matches!(
            TableData::new(s.clone(), vec![vec![Some(Value::Integer(1))]]),
            Err(TableError::Arity { .. })
        ));
        assert!(matches!(
            TableData::new(s, vec![vec![Some(Value::text("1")), None]]),
            Err(TableError::CellType { .. })
        ));
    }

    fn arb_raw(ty: ColumnType) -> BoxedStrategy<String> {
        match ty {
            ColumnType::Integer => any::<i64>().prop_map(|v| v.to_string()).boxed(),
            ColumnType::Decimal => "-?[0-9]{1,6}(\\.[0-9]{1,4})?".boxed(),
            ColumnType::Text => "[a-zA-Z0-9 ,\"]{1,12}".boxed(),
            ColumnType::Boolean => prop_oneof![Just("true".to_string()), Just("false".to_string())].boxed(),
            ColumnType::Timestamp => (Timestamp::MIN_RENDERABLE.as_millis()..Timestamp::MAX_RENDERABLE.as_millis())
                .prop_map(|ms| Timestamp::from_millis(ms).render())
                .boxed(),
        }
    }

    proptest! {
        #[test]
        fn canonical_text_matches_parse_then_render(
            (ty, raw) in prop_oneof![
                Just(ColumnType::Integer), Just(ColumnType::Decimal), Just(ColumnType::Text),
                Just(ColumnType::Boolean), Just(ColumnType::Timestamp)
            ].prop_flat_map(|ty| (Just(ty), arb_raw(ty)))
        ) {
            let via_value = Value::parse(ty, &raw).unwrap().render().into_owned();
            prop_assert_eq!(canonical_text(ty, &raw).unwrap().into_owned(), via_value);
        }
    }
}
