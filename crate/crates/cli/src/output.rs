//! JSON and CSV rendering. CSV is the JSON object flattened to one
//! `key,value` row per leaf, so both carry the same numbers verbatim.

use std::io::Write;

use serde_json::{Map, Value};

use crate::config::Format;

pub const FORMAT_VERSION: u32 = 1;
pub const CSV_HEADER: [&str; 5] = ["format_version", "command", "seed", "key", "value"];

/// Wraps a command's fields with the version, command name and seed.
pub fn envelope(command: &str, seed: u64, body: Value) -> Value {
    let mut out = Map::new();
    out.insert("format_version".into(), FORMAT_VERSION.into());
    out.insert("command".into(), command.into());
    out.insert("seed".into(), seed.into());
    if let Value::Object(fields) = body {
        out.extend(fields);
    }
    Value::Object(out)
}

fn flatten(prefix: &str, value: &Value, rows: &mut Vec<(String, String)>) {
    let key = |k: &str| if prefix.is_empty() { k.to_string() } else { format!("{prefix}.{k}") };
    match value {
        Value::Object(map) => {
            for (k, v) in map {
                flatten(&key(k), v, rows);
            }
        }
        Value::Array(items) => {
            for (i, v) in items.iter().enumerate() {
                flatten(&key(&i.to_string()), v, rows);
            }
        }
        Value::String(s) => rows.push((prefix.to_string(), s.clone())),
        Value::Null => rows.push((prefix.to_string(), String::new())),
        other => rows.push((prefix.to_string(), other.to_string())),
    }
}

pub fn write(out: &mut impl Write, value: &Value, format: Format) -> std::io::Result<()> {
    match format {
        Format::Json => {
            serde_json::to_writer_pretty(&mut *out, value)?;
            writeln!(out)
        }
        Format::Csv => {
            let field = |k: &str| value.get(k).map(|v| v.to_string().trim_matches('"').to_string()).unwrap_or_default();
            let (command, seed) = (field("command"), field("seed"));
            let mut rows = Vec::new();
            flatten("", value, &mut rows);
            let mut w = csv::Writer::from_writer(out);
            w.write_record(CSV_HEADER)?;
            for (key, v) in rows.iter().filter(|(k, _)| !matches!(k.as_str(), "format_version" | "command" | "seed")) {
                w.write_record([FORMAT_VERSION.to_string().as_str(), &command, &seed, key, v])?;
            }
            w.flush()
        }
    }
}
