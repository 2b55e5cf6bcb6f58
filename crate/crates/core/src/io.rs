//! On-disk formats for signals and experiment outputs.
//!
//! Dense vectors are stored one float per line. Sparse vectors are CSV with
//! an `index,value` header. 2D signals are stored dense row-major with a
//! JSON sidecar recording the shape. All floats are written with 17
//! significant digits so round trips are lossless.

use crate::error::{Error, Result};
use crate::signal_model::{Domain, SpikeStream, Support};
use std::fs;
use std::io::Write;
use std::path::Path;

/// 17 significant digits: enough to reproduce any f64 exactly.
pub fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.display().to_string(),
        source,
    }
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        line,
        msg: msg.into(),
    }
}

fn check_finite(path: &Path, values: &[f64]) -> Result<()> {
    if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "refusing to write non-finite value at position {pos} to {}",
            path.display()
        )));
    }
    Ok(())
}

/// Write a dense vector, one float per line.
pub fn write_dense(path: &Path, values: &[f64]) -> Result<()> {
    check_finite(path, values)?;
    let mut out = String::with_capacity(values.len() * 24);
    for v in values {
        out.push_str(&format_float(*v));
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| io_err(path, e))
}

/// Read a dense vector written by [`write_dense`].
pub fn read_dense(path: &Path) -> Result<Vec<f64>> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut values = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let t = raw.trim();
        if t.is_empty() {
            continue;
        }
        let v: f64 = t
            .parse()
            .map_err(|_| parse_err(path, line, format!("not a float: {t:?}")))?;
        if !v.is_finite() {
            return Err(parse_err(path, line, "non-finite value"));
        }
        values.push(v);
    }
    Ok(values)
}

/// Write a sparse vector as CSV with an `index,value` header.
pub fn write_sparse(path: &Path, spikes: &SpikeStream) -> Result<()> {
    check_finite(path, spikes.values())?;
    let mut out = String::from("index,value\n");
    for (&i, &v) in spikes.support().indices().iter().zip(spikes.values()) {
        out.push_str(&format!("{i},{}\n", format_float(v)));
    }
    fs::write(path, out).map_err(|e| io_err(path, e))
}

/// Read a sparse CSV into a spike stream on `domain`. Rejects missing
/// headers, duplicate or out-of-range indices, and non-finite values.
pub fn read_sparse(path: &Path, domain: &Domain) -> Result<SpikeStream> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == "index,value" => {}
        Some((_, h)) => {
            return Err(parse_err(path, 1, format!("expected header \"index,value\", got {h:?}")))
        }
        None => return Err(parse_err(path, 1, "empty file, expected header")),
    }
    let mut pairs: Vec<(usize, f64)> = Vec::new();
    for (i, raw) in lines {
        let line = i + 1;
        let t = raw.trim();
        if t.is_empty() {
            continue;
        }
        let (is, vs) = t
            .split_once(',')
            .ok_or_else(|| parse_err(path, line, format!("expected index,value, got {t:?}")))?;
        let idx: usize = is
            .trim()
            .parse()
            .map_err(|_| parse_err(path, line, format!("not an index: {:?}", is.trim())))?;
        let v: f64 = vs
            .trim()
            .parse()
            .map_err(|_| parse_err(path, line, format!("not a float: {:?}", vs.trim())))?;
        if !v.is_finite() {
            return Err(parse_err(path, line, "non-finite value"));
        }
        if idx >= domain.size() {
            return Err(parse_err(
                path,
                line,
                format!("index {idx} out of range for size {}", domain.size()),
            ));
        }
        if pairs.iter().any(|&(j, _)| j == idx) {
            return Err(parse_err(path, line, format!("duplicate index {idx}")));
        }
        pairs.push((idx, v));
    }
    pairs.sort_unstable_by_key(|&(i, _)| i);
    let (indices, values): (Vec<usize>, Vec<f64>) = pairs.into_iter().unzip();
    SpikeStream::new(Support::new(indices, domain.clone())?, values)
}

fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_os_string();
    s.push(".shape.json");
    s.into()
}

/// Write a row-major dense signal together with a `{"shape": [...]}`
/// sidecar at `<path>.shape.json`.
pub fn write_dense_shaped(path: &Path, values: &[f64], shape: &[usize]) -> Result<()> {
    let n: usize = shape.iter().product();
    if n != values.len() {
        return Err(Error::DimensionMismatch(format!(
            "shape {shape:?} does not match {} values",
            values.len()
        )));
    }
    write_dense(path, values)?;
    let sidecar = sidecar_path(path);
    let body = serde_json::json!({ "shape": shape });
    let mut f = fs::File::create(&sidecar).map_err(|e| io_err(&sidecar, e))?;
    writeln!(f, "{body}").map_err(|e| io_err(&sidecar, e))
}

/// Read a shaped dense signal and its sidecar; returns values and shape.
pub fn read_dense_shaped(path: &Path) -> Result<(Vec<f64>, Vec<usize>)> {
    let values = read_dense(path)?;
    let sidecar = sidecar_path(path);
    let text = fs::read_to_string(&sidecar).map_err(|e| io_err(&sidecar, e))?;
    let parsed: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| parse_err(&sidecar, e.line(), e.to_string()))?;
    let shape: Vec<usize> = parsed
        .get("shape")
        .and_then(|s| s.as_array())
        .ok_or_else(|| parse_err(&sidecar, 1, "missing \"shape\" array"))?
        .iter()
        .map(|v| {
            v.as_u64()
                .filter(|&x| x >= 1)
                .map(|x| x as usize)
                .ok_or_else(|| parse_err(&sidecar, 1, "shape entries must be positive integers"))
        })
        .collect::<Result<_>>()?;
    let n: usize = shape.iter().product();
    if n != values.len() {
        return Err(parse_err(
            &sidecar,
            1,
            format!("shape {shape:?} does not match {} stored values", values.len()),
        ));
    }
    Ok((values, shape))
}
