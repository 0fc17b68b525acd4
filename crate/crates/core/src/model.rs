//! JSON documents read and written by the folding pipeline.
//!
//! Input:
//!
//! ```json
//! {
//!   "layers": [
//!     { "name": "conv1.bn", "mu": "0.5", "sigma": "2", "gamma": "1",
//!       "beta": "0.25", "c": "0", "w": 15, "a": 15, "y_min": 0, "y_max": 1 }
//!   ]
//! }
//! ```
//!
//! Parameters may be decimal strings (`"0.618"`, `"1e-3"`, `"3/4"`),
//! integers, or binary floats. Unknown keys, on the document or on a layer,
//! are carried through to the output unchanged.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::convert::{FixedAffine, SignThreshold};
use crate::oracle::EquivalenceReport;
use crate::rational::{self, ParseRationalError, Rational};

/// A parameter as written in the document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Number {
    Text(String),
    Int(i64),
    Float(f64),
}

impl Default for Number {
    fn default() -> Self {
        Number::Int(0)
    }
}

impl Number {
    /// Exact value; floats convert through their binary expansion.
    pub fn to_rational(&self) -> Result<Rational, ParseRationalError> {
        match self {
            Number::Text(s) => rational::parse_rational(s),
            Number::Int(v) => Ok(rational::int(*v)),
            Number::Float(x) => rational::from_f64(*x),
        }
    }

    pub fn is_float(&self) -> bool {
        matches!(self, Number::Float(_))
    }
}

fn default_y_max() -> i64 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub layers: Vec<LayerSpec>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub metadata: BTreeMap<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub name: String,
    pub mu: Number,
    pub sigma: Number,
    pub gamma: Number,
    pub beta: Number,
    #[serde(default)]
    pub c: Number,
    pub w: i64,
    pub a: i64,
    #[serde(default)]
    pub y_min: i64,
    #[serde(default = "default_y_max")]
    pub y_max: i64,
    #[serde(flatten)]
    pub extra: BTreeMap<String, Value>,
}

/// `(t, b)` as exact `"p/q"` strings.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AffineText {
    pub t: String,
    pub b: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerFailure {
    pub kind: String,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<i64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<Vec<i32>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub suggested_k: Option<i64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldedRecord {
    pub name: String,
    pub source: LayerSpec,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub affine: Option<AffineText>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fixed: Option<FixedAffine>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sign: Option<SignThreshold>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub certificate: Option<EquivalenceReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<LayerFailure>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notices: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FoldedModel {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scale: Option<i64>,
    pub layers: Vec<FoldedRecord>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub metadata: BTreeMap<String, Value>,
}

impl FoldedModel {
    pub fn failures(&self) -> usize {
        self.layers.iter().filter(|l| l.error.is_some()).count()
    }
}

/// Pretty JSON with a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("document types always serialize");
    s.push('\n');
    s
}
