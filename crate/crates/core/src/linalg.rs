//! Complex matrix aliases and the `[re, im]` JSON layout used by fixtures.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;

/// Matrix as a list of rows, each entry an `[re, im]` pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixJson(pub Vec<Vec<[f64; 2]>>);

impl From<&CMat> for MatrixJson {
    fn from(m: &CMat) -> Self {
        MatrixJson(
            (0..m.nrows())
                .map(|r| {
                    (0..m.ncols())
                        .map(|c| [m[(r, c)].re, m[(r, c)].im])
                        .collect()
                })
                .collect(),
        )
    }
}

impl MatrixJson {
    pub fn to_matrix(&self) -> Option<CMat> {
        let rows = self.0.len();
        let cols = self.0.first().map_or(0, Vec::len);
        if self.0.iter().any(|r| r.len() != cols) {
            return None;
        }
        Some(CMat::from_fn(rows, cols, |r, c| {
            let [re, im] = self.0[r][c];
            C64::new(re, im)
        }))
    }
}

/// serde adapter for `Vec<CMat>` fields.
pub mod matrices {
    use super::*;

    pub fn serialize<S: Serializer>(ms: &[CMat], s: S) -> Result<S::Ok, S::Error> {
        let v: Vec<MatrixJson> = ms.iter().map(MatrixJson::from).collect();
        v.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<CMat>, D::Error> {
        let v: Vec<MatrixJson> = Vec::deserialize(d)?;
        v.iter()
            .map(|m| {
                m.to_matrix()
                    .ok_or_else(|| serde::de::Error::custom("ragged matrix rows"))
            })
            .collect()
    }
}

/// Squared Euclidean norm of a complex slice.
pub fn norm_sqr(v: impl IntoIterator<Item = C64>) -> f64 {
    v.into_iter().map(|z| z.norm_sqr()).sum()
}

/// `row · col` without conjugation.
pub fn dot(row: &[C64], col: &[C64]) -> C64 {
    row.iter().zip(col).map(|(a, b)| a * b).sum()
}
