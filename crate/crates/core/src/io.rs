//! JSON and CSV formats for subspaces, relations, bounds, instances and sweeps.
//!
//! Complex numbers are `[re, im]` pairs. Infinities serialize as the string
//! `"inf"`. Matrix shorthand entries may be plain reals or `[re, im]`.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::chains::Nu;
use crate::error::{Error, Result};
use crate::lab::{InstanceSpec, SweepReport};
use crate::linalg::{CMatrix, C64};
use crate::metrics;
use crate::relation::LinearRelation;
use crate::subspace::Subspace;

/// Serde adapter for `f64` values that may be infinite or NaN.
pub mod extended {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if v.is_nan() {
            s.serialize_str("nan")
        } else if *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            N(f64),
            S(String),
        }
        match Raw::deserialize(d)? {
            Raw::N(v) => Ok(v),
            Raw::S(s) => match s.as_str() {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                "nan" => Ok(f64::NAN),
                other => Err(serde::de::Error::custom(format!("expected a number, \"inf\" or \"nan\", got {other:?}"))),
            },
        }
    }
}

/// Serde adapter for a complex scalar as `[re, im]`.
pub mod complex {
    use super::C64;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &C64, s: S) -> Result<S::Ok, S::Error> {
        [v.re, v.im].serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<C64, D::Error> {
        let [re, im] = <[f64; 2]>::deserialize(d)?;
        Ok(C64::new(re, im))
    }
}

/// A matrix entry in JSON input: real or `[re, im]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Entry {
    Real(f64),
    Complex([f64; 2]),
}

impl Entry {
    fn value(self) -> C64 {
        match self {
            Entry::Real(re) => C64::new(re, 0.0),
            Entry::Complex([re, im]) => C64::new(re, im),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubspaceJson {
    pub ambient: usize,
    /// One entry per basis column.
    pub basis: Vec<Vec<Entry>>,
}

impl SubspaceJson {
    pub fn from_subspace(s: &Subspace) -> Self {
        let basis = s.basis().column_iter().map(|c| c.iter().map(|z| Entry::Complex([z.re, z.im])).collect()).collect();
        Self { ambient: s.ambient(), basis }
    }

    /// Orthonormalizes the given columns with the default tolerance.
    pub fn to_subspace(&self) -> Result<Subspace> {
        if self.ambient == 0 {
            return Err(Error::EmptyAmbient);
        }
        let mut m = CMatrix::zeros(self.ambient, self.basis.len());
        for (j, col) in self.basis.iter().enumerate() {
            if col.len() != self.ambient {
                return Err(Error::ShapeMismatch {
                    expected: format!("basis column {j} of length {}", self.ambient),
                    got: format!("length {}", col.len()),
                });
            }
            for (i, e) in col.iter().enumerate() {
                m[(i, j)] = e.value();
            }
        }
        Subspace::span_default(&m)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RelationJson {
    Graph { x_dim: usize, y_dim: usize, graph: SubspaceJson },
    /// Row-major `y_dim × x_dim` matrix of an everywhere-defined operator.
    Matrix { matrix: Vec<Vec<Entry>> },
}

impl RelationJson {
    pub fn from_relation(t: &LinearRelation) -> Self {
        RelationJson::Graph { x_dim: t.x_dim(), y_dim: t.y_dim(), graph: SubspaceJson::from_subspace(t.graph()) }
    }

    pub fn to_relation(&self) -> Result<LinearRelation> {
        match self {
            RelationJson::Graph { x_dim, y_dim, graph } => LinearRelation::from_graph(graph.to_subspace()?, *x_dim, *y_dim),
            RelationJson::Matrix { matrix } => {
                let rows = matrix.len();
                let cols = matrix.first().map_or(0, Vec::len);
                if rows == 0 || cols == 0 {
                    return Err(Error::EmptyAmbient);
                }
                let mut m = CMatrix::zeros(rows, cols);
                for (i, row) in matrix.iter().enumerate() {
                    if row.len() != cols {
                        return Err(Error::ShapeMismatch {
                            expected: format!("row {i} with {cols} entries"),
                            got: format!("{} entries", row.len()),
                        });
                    }
                    for (j, e) in row.iter().enumerate() {
                        let v = e.value();
                        if !(v.re.is_finite() && v.im.is_finite()) {
                            return Err(Error::NonFinite { row: i, col: j });
                        }
                        m[(i, j)] = v;
                    }
                }
                Ok(LinearRelation::from_matrix(&m))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Measured {
    pub alpha: usize,
    pub beta: usize,
    #[serde(with = "extended")]
    pub gamma: f64,
    pub nu: Nu,
}

impl Measured {
    pub fn of(a: &LinearRelation, b: &LinearRelation) -> Result<Self> {
        Ok(Self { alpha: metrics::alpha(a), beta: metrics::beta(a), gamma: metrics::gamma(a), nu: crate::chains::nu(a, b)? })
    }
}

/// An `(A, B)` pair on disk, optionally with the `InstanceSpec` that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceFile {
    #[serde(rename = "A")]
    pub a: RelationJson,
    #[serde(rename = "B")]
    pub b: RelationJson,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spec: Option<InstanceSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub measured: Option<Measured>,
}

impl InstanceFile {
    pub fn new(a: &LinearRelation, b: &LinearRelation, spec: Option<InstanceSpec>) -> Result<Self> {
        Ok(Self {
            a: RelationJson::from_relation(a),
            b: RelationJson::from_relation(b),
            spec,
            measured: Some(Measured::of(a, b)?),
        })
    }

    pub fn relations(&self) -> Result<(LinearRelation, LinearRelation)> {
        let a = self.a.to_relation()?;
        let b = self.b.to_relation()?;
        if a.x_dim() != b.x_dim() || a.y_dim() != b.y_dim() {
            return Err(Error::RelationMismatch { x1: a.x_dim(), y1: a.y_dim(), x2: b.x_dim(), y2: b.y_dim() });
        }
        Ok((a, b))
    }
}

/// SHA-256 of the canonical JSON form of an instance.
pub fn instance_sha256(file: &InstanceFile) -> String {
    use sha2::{Digest, Sha256};
    hex::encode(Sha256::digest(to_json_string(file).as_bytes()))
}

/// Parse failure with the position reported by the JSON parser.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{message} at line {line}, column {column}")]
pub struct ParseError {
    pub message: String,
    pub line: usize,
    pub column: usize,
}

pub fn from_json_str<T: serde::de::DeserializeOwned>(text: &str) -> std::result::Result<T, ParseError> {
    serde_json::from_str(text).map_err(|e| {
        let full = e.to_string();
        let suffix = format!(" at line {} column {}", e.line(), e.column());
        let message = full.strip_suffix(&suffix).unwrap_or(&full).to_string();
        ParseError { message, line: e.line(), column: e.column() }
    })
}

/// Pretty JSON with a trailing newline.
pub fn to_json_string<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable value");
    s.push('\n');
    s
}

pub const SWEEP_CSV_HEADER: &str = "re,im,alpha,beta,gamma,gap_fwd,gap_bwd,bound,flags";

fn csv_number(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v:.16e}")
    }
}

/// One row per grid point; columns as in [`SWEEP_CSV_HEADER`]. A missing
/// finishing bound is written as `nan`; flags are `|`-joined.
pub fn sweep_csv(report: &SweepReport) -> String {
    let mut out = String::from(SWEEP_CSV_HEADER);
    out.push('\n');
    for r in &report.records {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            csv_number(r.lambda.re),
            csv_number(r.lambda.im),
            r.alpha,
            r.beta,
            csv_number(r.gamma),
            csv_number(r.gap_fwd),
            csv_number(r.gap_bwd),
            csv_number(r.bound.unwrap_or(f64::NAN)),
            r.flags.names().join("|"),
        );
    }
    out
}
