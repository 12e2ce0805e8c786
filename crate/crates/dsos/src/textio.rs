//! Deterministic text serialization shared by the CSV and JSON emitters.
//!
//! Reports must be byte-identical across runs and lossless to read back, so
//! floats are always printed at 17 significant digits and JSON objects keep
//! their insertion order.

use std::path::Path;

use serde_json::Value;

use crate::error::{Error, Result};

/// Formats a float with 17 significant digits. Parsing the result with
/// `str::parse::<f64>()` reproduces the exact bit pattern.
pub fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}

/// Reads a user-supplied input file. Failures are usage errors that name
/// the path, not runtime faults.
pub fn read_input(path: &Path) -> Result<String> {
    std::fs::read_to_string(path)
        .map_err(|e| Error::Input(format!("cannot read {}: {e}", path.display())))
}

/// Writes an output artifact.
pub fn write_output(path: &Path, content: &str) -> Result<()> {
    std::fs::write(path, content).map_err(|e| Error::io(path, e))
}

/// Renders a JSON value deterministically: object keys in insertion order,
/// floats at 17 significant digits, two-space indentation with scalar-only
/// containers kept on a single line.
pub fn to_json_string(value: &Value) -> String {
    let mut out = String::new();
    write_value(&mut out, value, 0);
    out.push('\n');
    out
}

fn is_scalar(v: &Value) -> bool {
    !matches!(v, Value::Array(_) | Value::Object(_))
}

fn write_value(out: &mut String, v: &Value, indent: usize) {
    match v {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => write_number(out, n),
        Value::String(s) => write_string(out, s),
        Value::Array(items) => write_array(out, items, indent),
        Value::Object(map) => write_object(out, map, indent),
    }
}

fn write_number(out: &mut String, n: &serde_json::Number) {
    if let Some(i) = n.as_i64() {
        out.push_str(&i.to_string());
    } else if let Some(u) = n.as_u64() {
        out.push_str(&u.to_string());
    } else {
        out.push_str(&fmt_float(n.as_f64().expect("finite json number")));
    }
}

fn write_string(out: &mut String, s: &str) {
    out.push('"');
    for ch in s.chars() {
        match ch {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            c if (c as u32) < 0x20 => out.push_str(&format!("\\u{:04x}", c as u32)),
            c => out.push(c),
        }
    }
    out.push('"');
}

fn write_array(out: &mut String, items: &[Value], indent: usize) {
    if items.is_empty() {
        out.push_str("[]");
        return;
    }
    if items.iter().all(is_scalar) {
        out.push('[');
        for (i, item) in items.iter().enumerate() {
            if i > 0 {
                out.push_str(", ");
            }
            write_value(out, item, indent);
        }
        out.push(']');
        return;
    }
    out.push_str("[\n");
    let pad = "  ".repeat(indent + 1);
    for (i, item) in items.iter().enumerate() {
        out.push_str(&pad);
        write_value(out, item, indent + 1);
        if i + 1 < items.len() {
            out.push(',');
        }
        out.push('\n');
    }
    out.push_str(&"  ".repeat(indent));
    out.push(']');
}

fn write_object(out: &mut String, map: &serde_json::Map<String, Value>, indent: usize) {
    if map.is_empty() {
        out.push_str("{}");
        return;
    }
    if map.values().all(is_scalar) {
        out.push('{');
        for (i, (k, v)) in map.iter().enumerate() {
            if i > 0 {
                out.push_str(", ");
            }
            write_string(out, k);
            out.push_str(": ");
            write_value(out, v, indent);
        }
        out.push('}');
        return;
    }
    out.push_str("{\n");
    let pad = "  ".repeat(indent + 1);
    for (i, (k, v)) in map.iter().enumerate() {
        out.push_str(&pad);
        write_string(out, k);
        out.push_str(": ");
        write_value(out, v, indent + 1);
        if i + 1 < map.len() {
            out.push(',');
        }
        out.push('\n');
    }
    out.push_str(&"  ".repeat(indent));
    out.push('}');
}
