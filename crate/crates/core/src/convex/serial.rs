//! JSON document form of a [`ConvexFunction`].

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::ConvexFunction;
use crate::error::{Error, Result};

/// `{n, quad_matrix (row-major), quad_center, affine_slopes, affine_offsets, constant}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FunctionDoc {
    pub n: usize,
    pub quad_matrix: Vec<f64>,
    pub quad_center: Vec<f64>,
    #[serde(default)]
    pub affine_slopes: Vec<Vec<f64>>,
    #[serde(default)]
    pub affine_offsets: Vec<f64>,
    #[serde(default)]
    pub constant: f64,
}

impl From<&ConvexFunction> for FunctionDoc {
    fn from(f: &ConvexFunction) -> Self {
        let n = f.dim();
        let mut quad_matrix = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                quad_matrix.push(f.quad_matrix[(i, j)]);
            }
        }
        Self {
            n,
            quad_matrix,
            quad_center: f.quad_center.iter().copied().collect(),
            affine_slopes: f.affine_slopes.iter().map(|a| a.iter().copied().collect()).collect(),
            affine_offsets: f.affine_offsets.clone(),
            constant: f.constant,
        }
    }
}

impl TryFrom<FunctionDoc> for ConvexFunction {
    type Error = Error;

    fn try_from(doc: FunctionDoc) -> Result<Self> {
        let n = doc.n;
        if doc.quad_matrix.len() != n * n {
            return Err(Error::InvalidFunction(format!(
                "quad_matrix has {} entries, expected {}",
                doc.quad_matrix.len(),
                n * n
            )));
        }
        if doc.quad_center.len() != n {
            return Err(Error::Dimension { expected: n, got: doc.quad_center.len() });
        }
        ConvexFunction::new(
            DMatrix::from_row_slice(n, n, &doc.quad_matrix),
            DVector::from_vec(doc.quad_center),
            doc.affine_slopes.into_iter().map(DVector::from_vec).collect(),
            doc.affine_offsets,
            doc.constant,
        )
    }
}

impl Serialize for ConvexFunction {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        FunctionDoc::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for ConvexFunction {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let doc = FunctionDoc::deserialize(d)?;
        ConvexFunction::try_from(doc).map_err(serde::de::Error::custom)
    }
}

impl ConvexFunction {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("finite function serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}
