use std::fs;
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use floquet_core::{Error, Result};
use serde_json::{Map, Number, Value};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

/// Rows of a CSV table as an array of objects keyed by the header.
pub fn csv_to_json(text: &str) -> Value {
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().map(|h| h.split(',').collect()).unwrap_or_default();
    let rows = lines
        .filter(|l| !l.is_empty())
        .map(|l| {
            let obj: Map<String, Value> = header.iter().zip(l.split(',')).map(|(k, v)| (k.to_string(), cell(v))).collect();
            Value::Object(obj)
        })
        .collect();
    Value::Array(rows)
}

fn cell(v: &str) -> Value {
    if let Ok(i) = v.parse::<i64>() {
        return Value::from(i);
    }
    match v.parse::<f64>() {
        Ok(x) => Number::from_f64(x).map_or(Value::Null, Value::Number),
        Err(_) => Value::String(v.to_string()),
    }
}

/// Write `csv` (header line first) as `<dir>/<stem>.csv` or `.json`.
pub fn emit(dir: &Path, stem: &str, csv: &str, format: Format) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let (path, body) = match format {
        Format::Csv => (dir.join(format!("{stem}.csv")), csv.to_string()),
        Format::Json => {
            let mut s = serde_json::to_string_pretty(&csv_to_json(csv)).map_err(|e| Error::Io(e.to_string()))?;
            s.push('\n');
            (dir.join(format!("{stem}.json")), s)
        }
    };
    fs::write(&path, body)?;
    Ok(path)
}

pub fn emit_json(dir: &Path, stem: &str, value: &Value) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let path = dir.join(format!("{stem}.json"));
    let mut s = serde_json::to_string_pretty(value).map_err(|e| Error::Io(e.to_string()))?;
    s.push('\n');
    fs::write(&path, s)?;
    Ok(path)
}
