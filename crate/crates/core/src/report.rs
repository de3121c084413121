//! JSON plumbing: complex matrices as nested `[re, im]` arrays and a
//! deterministic float format (`%.12e`) for every emitted number.

use std::io;

use serde::{Deserialize, Serialize};
use serde_json::ser::Formatter;

use crate::error::{Error, Result};
use crate::linalg::{CMatrix, C64};

/// A complex entry as written in model files: `[re, im]` or a bare real.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ComplexJson {
    Pair([f64; 2]),
    Real(f64),
}

impl From<ComplexJson> for C64 {
    fn from(value: ComplexJson) -> Self {
        match value {
            ComplexJson::Pair([re, im]) => C64::new(re, im),
            ComplexJson::Real(re) => C64::new(re, 0.0),
        }
    }
}

/// Row-major nested matrix.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MatrixJson(pub Vec<Vec<ComplexJson>>);

impl MatrixJson {
    pub fn from_matrix(m: &CMatrix) -> Self {
        MatrixJson(
            (0..m.nrows())
                .map(|r| (0..m.ncols()).map(|k| ComplexJson::Pair([m[(r, k)].re, m[(r, k)].im])).collect())
                .collect(),
        )
    }

    /// Converts to a dense matrix, checking that it is `rows × cols` when given.
    pub fn to_matrix(&self, what: &str, square: Option<usize>) -> Result<CMatrix> {
        let rows = self.0.len();
        let cols = self.0.first().map_or(0, Vec::len);
        if let Some(n) = square {
            if rows != n {
                return Err(Error::DimensionMismatch { what: format!("{what} rows"), expected: n, found: rows });
            }
        }
        for row in &self.0 {
            let expected = square.unwrap_or(cols);
            if row.len() != expected {
                return Err(Error::DimensionMismatch { what: format!("{what} columns"), expected, found: row.len() });
            }
        }
        let m = CMatrix::from_fn(rows, square.unwrap_or(cols), |r, k| self.0[r][k].into());
        if !crate::linalg::is_finite(&m) {
            return Err(Error::InvalidInput(format!("{what} has non-finite entries")));
        }
        Ok(m)
    }
}

pub fn complex_json(z: C64) -> [f64; 2] {
    [z.re, z.im]
}

/// Formatter writing every float as `{:.12e}` so identical runs give identical bytes.
#[derive(Clone, Copy, Debug, Default)]
pub struct FixedFloatFormatter;

impl Formatter for FixedFloatFormatter {
    fn write_f64<W>(&mut self, writer: &mut W, value: f64) -> io::Result<()>
    where
        W: ?Sized + io::Write,
    {
        write!(writer, "{value:.12e}")
    }

    fn write_f32<W>(&mut self, writer: &mut W, value: f32) -> io::Result<()>
    where
        W: ?Sized + io::Write,
    {
        self.write_f64(writer, f64::from(value))
    }
}

/// Serializes with [`FixedFloatFormatter`]; output ends with a newline.
pub fn to_json_string<T: Serialize>(value: &T) -> String {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, FixedFloatFormatter);
    value.serialize(&mut ser).expect("serializing to memory cannot fail");
    buf.push(b'\n');
    String::from_utf8(buf).expect("serde_json emits UTF-8")
}

/// Reads a bare nested matrix, or an object carrying it under `"matrix"` or `"U"`.
pub fn parse_matrix(text: &str) -> Result<CMatrix> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Wrapped {
        Bare(MatrixJson),
        Matrix {
            matrix: MatrixJson,
        },
        U {
            #[serde(rename = "U")]
            u: MatrixJson,
        },
    }
    let parsed: Wrapped = serde_json::from_str(text).map_err(Error::from_json)?;
    let m = match parsed {
        Wrapped::Bare(m) | Wrapped::Matrix { matrix: m } | Wrapped::U { u: m } => m,
    };
    m.to_matrix("matrix", None)
}
