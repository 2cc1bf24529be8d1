//! Plain-text checkpoint format.
//!
//! ```text
//! RPG-CKPT v1
//! <name> <ndim> <d1> <d2> ...
//! <v1> <v2> ...            (17 significant digits)
//! ```
//! repeated once per entry, nothing else.

use std::fmt::Write as _;
use std::io::{Read, Write};

use super::params::{Entry, ParameterSet};
use crate::error::{Error, Result};

pub const HEADER: &str = "RPG-CKPT v1";

/// 17 significant digits in scientific notation.
pub fn format_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn save_params(params: &ParameterSet) -> Vec<u8> {
    let mut out = String::new();
    out.push_str(HEADER);
    out.push('\n');
    for e in params.entries() {
        write!(out, "{} {}", e.name(), e.shape().len()).unwrap();
        for d in e.shape() {
            write!(out, " {d}").unwrap();
        }
        out.push('\n');
        let vals: Vec<String> = e.values().iter().map(|&v| format_f64(v)).collect();
        out.push_str(&vals.join(" "));
        out.push('\n');
    }
    out.into_bytes()
}

pub fn write_params<W: Write>(params: &ParameterSet, mut w: W) -> Result<()> {
    w.write_all(&save_params(params))?;
    Ok(())
}

pub fn read_params<R: Read>(mut r: R) -> Result<ParameterSet> {
    let mut buf = Vec::new();
    r.read_to_end(&mut buf)?;
    load_params(&buf)
}

/// Lines with the byte offset at which each starts.
fn lines_with_offsets(text: &str) -> Vec<(usize, &str)> {
    let mut out = Vec::new();
    let mut offset = 0;
    for line in text.split_inclusive('\n') {
        out.push((offset, line.strip_suffix('\n').unwrap_or(line)));
        offset += line.len();
    }
    out
}

pub fn load_params(bytes: &[u8]) -> Result<ParameterSet> {
    let perr = |entry: &str, offset: usize, message: String| Error::Parse {
        entry: entry.to_string(),
        offset,
        message,
    };
    let text = std::str::from_utf8(bytes)
        .map_err(|e| perr("<header>", e.valid_up_to(), "stream is not UTF-8".into()))?;
    let lines = lines_with_offsets(text);
    match lines.first() {
        Some((_, l)) if *l == HEADER => {}
        _ => return Err(perr("<header>", 0, format!("expected `{HEADER}`"))),
    }

    let mut params = ParameterSet::new();
    let mut i = 1;
    while i < lines.len() {
        let (off, header) = lines[i];
        let mut fields = header.split_ascii_whitespace();
        let name = fields
            .next()
            .ok_or_else(|| perr("<unnamed>", off, "empty entry header".into()))?;
        let ndim: usize = fields
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| perr(name, off, "missing or invalid ndim".into()))?;
        let shape: Vec<usize> = fields
            .map(|s| s.parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| perr(name, off, format!("invalid dimension: {e}")))?;
        if shape.len() != ndim {
            return Err(perr(name, off, format!("ndim {ndim} but {} dimensions", shape.len())));
        }
        let expected: usize = shape.iter().product();

        let Some(&(voff, line)) = lines.get(i + 1) else {
            return Err(perr(name, text.len(), format!("missing values line ({expected} values expected)")));
        };
        let values: Vec<f64> = line
            .split_ascii_whitespace()
            .map(|s| s.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| perr(name, voff, format!("invalid value: {e}")))?;
        if values.len() != expected {
            return Err(perr(
                name,
                voff,
                format!("expected {expected} values, found {}", values.len()),
            ));
        }
        let entry = Entry::new(name, shape, values).map_err(|e| perr(name, off, e.to_string()))?;
        params.push(entry).map_err(|e| perr(name, off, e.to_string()))?;
        i += 2;
    }
    Ok(params)
}
