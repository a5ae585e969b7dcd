//! Tuple files, JSON encoding of numerical results, and exit codes.

use std::fmt;

use num_rational::Ratio;
use serde_json::{json, Value};
use specflag_core::numcore::{c, CMatrix, C64};
use specflag_core::{Error, Subspace};

/// Process exit codes.
pub mod exit {
    pub const SUCCESS: u8 = 0;
    pub const CERTIFICATION: u8 = 2;
    pub const BOUNDARY: u8 = 3;
    pub const FORMAT: u8 = 64;
    pub const NUMERICAL: u8 = 70;
}

/// Failure carrying the exit code it maps to.
#[derive(Debug, Clone, PartialEq)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn format(message: impl Into<String>) -> Self {
        CliError { code: exit::FORMAT, message: message.into() }
    }

    pub fn numerical(message: impl Into<String>) -> Self {
        CliError { code: exit::NUMERICAL, message: message.into() }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::NonCommuting { .. } => exit::CERTIFICATION,
            Error::BoundaryAmbiguous { .. } => exit::BOUNDARY,
            Error::NotSquare { .. }
            | Error::Empty(_)
            | Error::NonFinite(_)
            | Error::InvalidArgument(_)
            | Error::Unsupported(_) => exit::FORMAT,
            _ => exit::NUMERICAL,
        };
        CliError { code, message: e.to_string() }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

/// Parsed contents of a tuple file.
#[derive(Debug, Clone)]
pub struct TupleFile {
    pub k: usize,
    pub n: usize,
    pub matrices: Vec<CMatrix>,
    pub labels: Option<Vec<String>>,
}

fn field<'a>(doc: &'a Value, name: &str) -> CliResult<&'a Value> {
    doc.get(name).ok_or_else(|| CliError::format(format!("missing field \"{name}\"")))
}

fn as_count(v: &Value, what: &str) -> CliResult<usize> {
    v.as_u64()
        .filter(|&x| x > 0)
        .map(|x| x as usize)
        .ok_or_else(|| CliError::format(format!("\"{what}\" must be a positive integer")))
}

/// Reads `[re, im]`.
pub fn parse_complex(v: &Value, what: &str) -> CliResult<C64> {
    let pair = v.as_array().filter(|a| a.len() == 2);
    let parts = pair.and_then(|a| Some((a[0].as_f64()?, a[1].as_f64()?)));
    match parts {
        Some((re, im)) if re.is_finite() && im.is_finite() => Ok(c(re, im)),
        _ => Err(CliError::format(format!("{what}: expected [re, im] with finite numbers"))),
    }
}

/// Reads a point `[[re, im], ...]` of the given length.
pub fn parse_point(v: &Value, n: usize, what: &str) -> CliResult<Vec<C64>> {
    let items = v.as_array().ok_or_else(|| CliError::format(format!("{what}: expected an array")))?;
    if items.len() != n {
        return Err(CliError::format(format!("{what}: expected {n} coordinates, found {}", items.len())));
    }
    items.iter().enumerate().map(|(j, z)| parse_complex(z, &format!("{what}[{j}]"))).collect()
}

/// Parses a tuple document, reporting syntax errors with line and column.
pub fn parse_tuple_file(text: &str) -> CliResult<TupleFile> {
    let doc: Value = serde_json::from_str(text)
        .map_err(|e| CliError::format(format!("malformed JSON at line {}, column {}: {e}", e.line(), e.column())))?;
    let k = as_count(field(&doc, "k")?, "k")?;
    let n = as_count(field(&doc, "n")?, "n")?;
    let mats = field(&doc, "matrices")?
        .as_array()
        .ok_or_else(|| CliError::format("\"matrices\" must be an array"))?;
    if mats.len() != n {
        return Err(CliError::format(format!("expected {n} matrices, found {}", mats.len())));
    }
    let mut matrices = Vec::with_capacity(n);
    for (i, m) in mats.iter().enumerate() {
        let rows = m.as_array().filter(|r| r.len() == k).ok_or_else(|| {
            CliError::format(format!("matrix {i} must have {k} rows"))
        })?;
        let mut out = CMatrix::zeros(k, k);
        for (r, row) in rows.iter().enumerate() {
            let entries = row.as_array().filter(|e| e.len() == k).ok_or_else(|| {
                CliError::format(format!("matrix {i}, row {r} must have {k} entries"))
            })?;
            for (col, z) in entries.iter().enumerate() {
                out[(r, col)] = parse_complex(z, &format!("matrix {i}, entry ({r}, {col})"))?;
            }
        }
        matrices.push(out);
    }
    let labels = match doc.get("labels") {
        None | Some(Value::Null) => None,
        Some(v) => {
            let items = v.as_array().filter(|a| a.len() == n).ok_or_else(|| {
                CliError::format(format!("\"labels\" must be an array of {n} strings"))
            })?;
            Some(
                items
                    .iter()
                    .map(|s| s.as_str().map(str::to_owned).ok_or_else(|| CliError::format("labels must be strings")))
                    .collect::<CliResult<_>>()?,
            )
        }
    };
    Ok(TupleFile { k, n, matrices, labels })
}

pub fn complex_json(z: C64) -> Value {
    json!([z.re, z.im])
}

pub fn point_json(p: &[C64]) -> Value {
    Value::Array(p.iter().map(|&z| complex_json(z)).collect())
}

/// Row-major `[[[re, im], ...], ...]`.
pub fn matrix_json(m: &CMatrix) -> Value {
    Value::Array((0..m.nrows()).map(|i| Value::Array((0..m.ncols()).map(|j| complex_json(m[(i, j)])).collect())).collect())
}

pub fn ratio_json(r: Ratio<usize>) -> Value {
    Value::String(format!("{}/{}", r.numer(), r.denom()))
}

pub fn ratio_value(r: Ratio<usize>) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

/// Orthonormal frame of a subspace as a `k × dim` matrix.
pub fn subspace_json(s: &Subspace) -> Value {
    json!({ "dim": s.dim(), "frame": matrix_json(s.frame()) })
}

/// Tuple document in the input format.
pub fn tuple_json(matrices: &[CMatrix], labels: Option<&[String]>) -> Value {
    let mut doc = json!({
        "k": matrices.first().map(|m| m.nrows()).unwrap_or(0),
        "n": matrices.len(),
        "matrices": matrices.iter().map(matrix_json).collect::<Vec<_>>(),
    });
    if let Some(l) = labels {
        doc["labels"] = json!(l);
    }
    doc
}

/// Pretty JSON with a trailing newline; floats use the shortest
/// representation that round-trips.
pub fn render(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("JSON values always serialize");
    s.push('\n');
    s
}
