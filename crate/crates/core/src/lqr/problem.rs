use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::ops::Deref;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::linalg::sym_min_eig;
use crate::{Error, Matrix, Result};

/// Smallest admissible eigenvalue of Q, R and Σ.
pub const MIN_WEIGHT_EIG: f64 = 1e-12;

/// State feedback (C = I) or static output feedback.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Kind {
    Slqr,
    Olqr,
}

impl std::fmt::Display for Kind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Kind::Slqr => "SLQR",
            Kind::Olqr => "OLQR",
        })
    }
}

/// Plant `(A, B, C)` with weights `Q`, `R` and initial-state covariance `Σ`.
#[derive(Debug, Clone, PartialEq)]
pub struct LqrProblem {
    a: Matrix,
    b: Matrix,
    c: Matrix,
    q: Matrix,
    r: Matrix,
    sigma: Matrix,
    kind: Kind,
    meta: BTreeMap<String, Value>,
}

impl LqrProblem {
    /// Validates dimensions and definiteness; the kind is SLQR exactly when `C` is the identity.
    pub fn new(a: Matrix, b: Matrix, c: Matrix, q: Matrix, r: Matrix, sigma: Matrix) -> Result<Self> {
        let n = a.nrows();
        let m = b.ncols();
        if n == 0 || m == 0 || c.nrows() == 0 {
            return Err(Error::Dimension("empty system matrix".into()));
        }
        let shapes = [
            ("A", &a, n, n),
            ("B", &b, n, m),
            ("C", &c, c.nrows(), n),
            ("Q", &q, n, n),
            ("R", &r, m, m),
            ("Sigma", &sigma, n, n),
        ];
        for (name, mat, rows, cols) in shapes {
            if mat.nrows() != rows || mat.ncols() != cols {
                return Err(Error::Dimension(format!(
                    "{name} is {}x{}, expected {rows}x{cols}",
                    mat.nrows(),
                    mat.ncols()
                )));
            }
            if !mat.iter().all(|v| v.is_finite()) {
                return Err(Error::InvalidProblem(format!("{name} has non-finite entries")));
            }
        }
        for (name, mat) in [("Q", &q), ("R", &r), ("Sigma", &sigma)] {
            if mat != &mat.transpose() {
                let asym = (mat - mat.transpose()).norm();
                if asym > 1e-12 * mat.norm() {
                    return Err(Error::InvalidProblem(format!("{name} is not symmetric")));
                }
            }
            let lmin = sym_min_eig(&((mat + mat.transpose()) * 0.5))?;
            if lmin <= MIN_WEIGHT_EIG {
                return Err(Error::InvalidProblem(format!("{name} is not positive definite (min eigenvalue {lmin:e})")));
            }
        }
        let kind = if c.is_square() && c == Matrix::identity(n, n) { Kind::Slqr } else { Kind::Olqr };
        Ok(Self { a, b, c, q, r, sigma, kind, meta: BTreeMap::new() })
    }

    /// Same as [`new`](Self::new) with `C = I`.
    pub fn state_feedback(a: Matrix, b: Matrix, q: Matrix, r: Matrix, sigma: Matrix) -> Result<Self> {
        let n = a.nrows();
        Self::new(a, b, Matrix::identity(n, n), q, r, sigma)
    }

    pub fn a(&self) -> &Matrix {
        &self.a
    }
    pub fn b(&self) -> &Matrix {
        &self.b
    }
    pub fn c(&self) -> &Matrix {
        &self.c
    }
    pub fn q(&self) -> &Matrix {
        &self.q
    }
    pub fn r(&self) -> &Matrix {
        &self.r
    }
    pub fn sigma(&self) -> &Matrix {
        &self.sigma
    }
    pub fn kind(&self) -> Kind {
        self.kind
    }

    /// State dimension.
    pub fn n(&self) -> usize {
        self.a.nrows()
    }
    /// Input dimension.
    pub fn m(&self) -> usize {
        self.b.ncols()
    }
    /// Output dimension.
    pub fn outputs(&self) -> usize {
        self.c.nrows()
    }
    /// Shape `(m, r)` of a feedback gain.
    pub fn gain_shape(&self) -> (usize, usize) {
        (self.m(), self.outputs())
    }

    /// Free-form provenance stored alongside the matrices in the problem file.
    pub fn meta(&self) -> &BTreeMap<String, Value> {
        &self.meta
    }

    pub fn with_meta(mut self, key: impl Into<String>, value: impl Into<Value>) -> Self {
        self.meta.insert(key.into(), value.into());
        self
    }

    /// A copy with `Σ` replaced.
    pub fn with_sigma(&self, sigma: Matrix) -> Result<Self> {
        let mut p = Self::new(self.a.clone(), self.b.clone(), self.c.clone(), self.q.clone(), self.r.clone(), sigma)?;
        p.meta = self.meta.clone();
        Ok(p)
    }

    pub fn zero_gain(&self) -> Gain {
        let (m, r) = self.gain_shape();
        Gain(Matrix::zeros(m, r))
    }

    pub fn check_gain(&self, k: &Matrix) -> Result<()> {
        let (m, r) = self.gain_shape();
        if k.nrows() != m || k.ncols() != r {
            return Err(Error::Dimension(format!("gain is {}x{}, expected {m}x{r}", k.nrows(), k.ncols())));
        }
        if !k.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFiniteValue("gain entry"));
        }
        Ok(())
    }

    /// JSON text with every number printed to 17 significant digits.
    pub fn to_json(&self) -> String {
        let mut s = String::from("{\n");
        for (key, mat) in [
            ("A", &self.a),
            ("B", &self.b),
            ("C", &self.c),
            ("Q", &self.q),
            ("R", &self.r),
            ("Sigma", &self.sigma),
        ] {
            let _ = writeln!(s, "  \"{key}\": {},", matrix_to_json(mat));
        }
        if !self.meta.is_empty() {
            let meta = serde_json::to_string(&self.meta).expect("metadata serializes");
            let _ = writeln!(s, "  \"meta\": {meta},");
        }
        let _ = writeln!(s, "  \"kind\": \"{}\"", self.kind);
        s.push('}');
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ProblemFile = serde_json::from_str(text)?;
        let mut p = Self::new(
            rows_to_matrix("A", &file.a)?,
            rows_to_matrix("B", &file.b)?,
            rows_to_matrix("C", &file.c)?,
            rows_to_matrix("Q", &file.q)?,
            rows_to_matrix("R", &file.r)?,
            rows_to_matrix("Sigma", &file.sigma)?,
        )?;
        if let Some(kind) = file.kind {
            if kind != p.kind {
                return Err(Error::InvalidProblem(format!("declared kind {kind} does not match C (inferred {})", p.kind)));
            }
        }
        p.meta = file.meta.unwrap_or_default();
        Ok(p)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[derive(Deserialize)]
struct ProblemFile {
    #[serde(rename = "A")]
    a: Vec<Vec<f64>>,
    #[serde(rename = "B")]
    b: Vec<Vec<f64>>,
    #[serde(rename = "C")]
    c: Vec<Vec<f64>>,
    #[serde(rename = "Q")]
    q: Vec<Vec<f64>>,
    #[serde(rename = "R")]
    r: Vec<Vec<f64>>,
    #[serde(rename = "Sigma")]
    sigma: Vec<Vec<f64>>,
    kind: Option<Kind>,
    meta: Option<BTreeMap<String, Value>>,
}

/// Formats a float with 17 significant digits, which round-trips any `f64` exactly.
pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        format!("{x}")
    }
}

/// Row-major nested JSON array.
pub fn matrix_to_json(m: &Matrix) -> String {
    let rows: Vec<String> = m
        .row_iter()
        .map(|row| format!("[{}]", row.iter().map(|v| fmt_f64(*v)).collect::<Vec<_>>().join(", ")))
        .collect();
    format!("[{}]", rows.join(", "))
}

pub fn rows_to_matrix(name: &str, rows: &[Vec<f64>]) -> Result<Matrix> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if nrows == 0 || ncols == 0 {
        return Err(Error::Parse(format!("{name} is empty")));
    }
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::Parse(format!("{name} has ragged rows")));
    }
    Ok(Matrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

pub fn matrix_to_rows(m: &Matrix) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// Static feedback matrix `K` of shape `m × r`; the control law is `u = -K C x`.
#[derive(Debug, Clone, PartialEq)]
pub struct Gain(Matrix);

impl Gain {
    pub fn new(k: Matrix) -> Result<Self> {
        if k.is_empty() {
            return Err(Error::Dimension("empty gain".into()));
        }
        if !k.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFiniteValue("gain entry"));
        }
        Ok(Self(k))
    }

    /// A `1 × r` gain.
    pub fn row(entries: &[f64]) -> Result<Self> {
        Self::new(Matrix::from_row_slice(1, entries.len(), entries))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        Self::new(rows_to_matrix("K", rows)?)
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix {
        self.0
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        matrix_to_rows(&self.0)
    }
}

impl Deref for Gain {
    type Target = Matrix;
    fn deref(&self) -> &Matrix {
        &self.0
    }
}

impl From<Gain> for Matrix {
    fn from(g: Gain) -> Matrix {
        g.0
    }
}

impl Serialize for Gain {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_rows().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Gain {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        Gain::from_rows(&rows).map_err(serde::de::Error::custom)
    }
}
