//! Columnar partition files: one row group, columns in registry order.
//! Text and timestamps are UTF-8 strings, integers INT64, reals DOUBLE.

use std::fs::File;
use std::path::Path;
use std::sync::Arc;

use parquet::basic::{LogicalType, Repetition, Type as PhysicalType};
use parquet::data_type::{BoolType, ByteArray, ByteArrayType, DoubleType, Int64Type};
use parquet::errors::ParquetError;
use parquet::file::properties::WriterProperties;
use parquet::file::reader::{FileReader, SerializedFileReader};
use parquet::file::writer::SerializedFileWriter;
use parquet::record::Field;
use parquet::schema::types::Type;
use thiserror::Error;

use crate::table::{Column, ColumnType, Row, Value};

#[derive(Debug, Error)]
pub enum ColumnarError {
    #[error("parquet: {0}")]
    Parquet(#[from] ParquetError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("{path}: expected columns {expected:?}, found {found:?}")]
    SchemaMismatch { path: String, expected: Vec<String>, found: Vec<String> },
    #[error("{path}: column {column} holds an unsupported value")]
    BadValue { path: String, column: String },
}

fn field_type(c: &Column) -> Result<Type, ParquetError> {
    let rep = if c.nullable { Repetition::OPTIONAL } else { Repetition::REQUIRED };
    let b = match c.ty {
        ColumnType::Text | ColumnType::Timestamp => {
            Type::primitive_type_builder(c.name, PhysicalType::BYTE_ARRAY).with_logical_type(Some(LogicalType::String))
        }
        ColumnType::Integer => Type::primitive_type_builder(c.name, PhysicalType::INT64),
        ColumnType::Real => Type::primitive_type_builder(c.name, PhysicalType::DOUBLE),
        ColumnType::Bool => Type::primitive_type_builder(c.name, PhysicalType::BOOLEAN),
    };
    b.with_repetition(rep).build()
}

pub fn message_type(name: &str, columns: &[Column]) -> Result<Type, ParquetError> {
    let fields = columns.iter().map(|c| field_type(c).map(Arc::new)).collect::<Result<Vec<_>, _>>()?;
    Type::group_type_builder(name).with_fields(fields).build()
}

/// Values and definition levels for one column; `None` entries are nulls.
fn column_values<'a, T>(rows: &'a [Row], idx: usize, f: impl Fn(&'a Value) -> Option<T>) -> (Vec<T>, Vec<i16>) {
    let mut values = Vec::with_capacity(rows.len());
    let mut defs = Vec::with_capacity(rows.len());
    for r in rows {
        match f(r.get(idx)) {
            Some(v) => {
                values.push(v);
                defs.push(1);
            }
            None => defs.push(0),
        }
    }
    (values, defs)
}

/// Writes `rows` to `path`, replacing any existing file.
pub fn write_rows(path: &Path, table: &str, columns: &[Column], rows: &[Row]) -> Result<(), ColumnarError> {
    let schema = Arc::new(message_type(table, columns)?);
    let props = Arc::new(WriterProperties::builder().build());
    let mut writer = SerializedFileWriter::new(File::create(path)?, schema, props)?;
    let mut rg = writer.next_row_group()?;
    let mut idx = 0;
    while let Some(mut col) = rg.next_column()? {
        let c = &columns[idx];
        let defs_for = |defs: &[i16]| if c.nullable { Some(defs.to_vec()) } else { None };
        match c.ty {
            ColumnType::Text | ColumnType::Timestamp => {
                let (v, d) = column_values(rows, idx, |v| v.as_text().map(|s| ByteArray::from(s.as_bytes().to_vec())));
                col.typed::<ByteArrayType>().write_batch(&v, defs_for(&d).as_deref(), None)?;
            }
            ColumnType::Integer => {
                let (v, d) = column_values(rows, idx, Value::as_i64);
                col.typed::<Int64Type>().write_batch(&v, defs_for(&d).as_deref(), None)?;
            }
            ColumnType::Real => {
                let (v, d) = column_values(rows, idx, |v| if v.is_null() { None } else { v.as_f64() });
                col.typed::<DoubleType>().write_batch(&v, defs_for(&d).as_deref(), None)?;
            }
            ColumnType::Bool => {
                let (v, d) = column_values(rows, idx, Value::as_bool);
                col.typed::<BoolType>().write_batch(&v, defs_for(&d).as_deref(), None)?;
            }
        }
        col.close()?;
        idx += 1;
    }
    rg.close()?;
    writer.close()?;
    Ok(())
}

/// Reads a partition file written by [`write_rows`] with the same columns.
pub fn read_rows(path: &Path, columns: &[Column]) -> Result<Vec<Row>, ColumnarError> {
    let reader = SerializedFileReader::new(File::open(path)?)?;
    let found: Vec<String> =
        reader.metadata().file_metadata().schema_descr().columns().iter().map(|c| c.name().to_string()).collect();
    let expected: Vec<String> = columns.iter().map(|c| c.name.to_string()).collect();
    let shown = || path.display().to_string();
    if found != expected {
        return Err(ColumnarError::SchemaMismatch { path: shown(), expected, found });
    }
    let mut rows = Vec::new();
    for rec in reader.get_row_iter(None)? {
        let rec = rec?;
        let mut out = Vec::with_capacity(columns.len());
        for ((_, field), c) in rec.get_column_iter().zip(columns) {
            let v = match field {
                Field::Null => Value::Null,
                Field::Bool(b) => Value::Bool(*b),
                Field::Long(i) => Value::Integer(*i),
                Field::Double(x) => Value::Real(*x),
                Field::Str(s) => Value::Text(s.clone()),
                _ => return Err(ColumnarError::BadValue { path: shown(), column: c.name.to_string() }),
            };
            out.push(v);
        }
        rows.push(Row(out));
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::table::{DERIVED_COLUMNS, POSTS};

    #[test]
    fn roundtrip_preserves_nulls_and_types() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.parquet");
        let cols: Vec<Column> = POSTS.columns.iter().chain(DERIVED_COLUMNS.iter()).copied().collect();
        let row = |id: &str, url: Option<&str>, hour: Option<i64>| {
            Row(vec![
                id.into(),
                "a1".into(),
                "alpha".into(),
                "general".into(),
                "title".into(),
                "héllo".into(),
                url.map(String::from).into(),
                Value::Integer(-3),
                Value::Integer(2),
                "2026-02-01T00:00:00+00:00".into(),
                "2026-02-01T01:00:00+00:00".into(),
                Value::Bool(true),
                "2026-02-01".into(),
                hour.map_or(Value::Null, |_| "2026-02-01".into()),
                hour.map_or(Value::Null, Value::Integer),
                Value::Integer(5),
            ])
        };
        let rows = vec![row("p1", None, Some(0)), row("p2", Some("http://x"), None)];
        write_rows(&path, "posts", &cols, &rows).unwrap();
        assert_eq!(read_rows(&path, &cols).unwrap(), rows);
    }

    #[test]
    fn rejects_foreign_schema() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.parquet");
        write_rows(&path, "posts", &POSTS.columns[..2], &[]).unwrap();
        assert!(matches!(read_rows(&path, POSTS.columns), Err(ColumnarError::SchemaMismatch { .. })));
    }
}
