//! Mappings from two monolingual embedding spaces into a space where a
//! document and its translation can be compared directly.
//!
//! Every fitted model exposes the same `encode(v, side)` surface: `Source`
//! vectors come from language x, `Target` vectors from language y, and both
//! encodings have the same width.

mod lca;
mod lcc;
mod nca;
mod serialize;

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{DenseMatrix, LinalgError};
use crate::nn::{TrainConfig, TrainError};

pub use lca::{fit_lca, LcaModel, LCA_RCOND};
pub use lcc::{fit_lcc, LccModel};
pub use nca::{fit_nca, NcaModel};
pub use serialize::{decode_model, encode_model, read_model, write_model, MODEL_MAGIC, MODEL_VERSION};

#[derive(Debug, Error)]
pub enum MapperError {
    #[error("{method} dimension {dim} out of range 1..={max}")]
    DimOutOfRange { method: Method, dim: usize, max: usize },
    #[error("expected a vector of length {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("training matrices disagree: {0}")]
    Misaligned(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("bad model magic {0:?}, expected \"TLDM\"")]
    BadMagic([u8; 4]),
    #[error("unsupported model format version {0}")]
    UnsupportedVersion(u16),
    #[error("unknown method code {0}")]
    UnknownMethod(u8),
    #[error("truncated model file while reading {0}")]
    Truncated(&'static str),
    #[error("{0} trailing bytes after model payload")]
    TrailingBytes(usize),
}

pub type Result<T> = std::result::Result<T, MapperError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Lca,
    Lcc,
    Nca,
    None,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Lca, Method::Lcc, Method::Nca, Method::None];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Lca => "lca",
            Method::Lcc => "lcc",
            Method::Nca => "nca",
            Method::None => "none",
        }
    }

    /// Whether the method has a dimension knob (`n_basis` for LCA, shared
    /// width `m` for LCC).
    pub fn is_swept(self) -> bool {
        matches!(self, Method::Lca | Method::Lcc)
    }

    pub(crate) fn code(self) -> u8 {
        match self {
            Method::None => 0,
            Method::Lca => 1,
            Method::Lcc => 2,
            Method::Nca => 3,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "lca" => Ok(Method::Lca),
            "lcc" => Ok(Method::Lcc),
            "nca" => Ok(Method::Nca),
            "none" => Ok(Method::None),
            other => Err(format!("unknown method {other:?} (expected lca, lcc, nca or none)")),
        }
    }
}

/// Which language a vector belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Source,
    Target,
}

/// Identity encoding used by the unmapped baseline.
pub fn no_mapping_encode(v: &[f64]) -> Vec<f64> {
    v.to_vec()
}

#[derive(Debug, Clone)]
pub enum MapperModel {
    None { input_dim: usize },
    Lca(LcaModel),
    Lcc(LccModel),
    Nca(NcaModel),
}

impl MapperModel {
    pub fn method(&self) -> Method {
        match self {
            MapperModel::None { .. } => Method::None,
            MapperModel::Lca(_) => Method::Lca,
            MapperModel::Lcc(_) => Method::Lcc,
            MapperModel::Nca(_) => Method::Nca,
        }
    }

    /// Width of the raw embeddings the model accepts.
    pub fn input_dim(&self) -> usize {
        match self {
            MapperModel::None { input_dim } => *input_dim,
            MapperModel::Lca(m) => m.input_dim(),
            MapperModel::Lcc(m) => m.input_dim(),
            MapperModel::Nca(m) => m.input_dim(),
        }
    }

    /// The sweep parameter, for methods that have one.
    pub fn dim(&self) -> Option<usize> {
        match self {
            MapperModel::Lca(m) => Some(m.n_basis()),
            MapperModel::Lcc(m) => Some(m.shared_dim()),
            _ => None,
        }
    }

    pub fn encode(&self, v: &[f64], side: Side) -> Result<Vec<f64>> {
        match self {
            MapperModel::None { input_dim } => {
                check_len(v, *input_dim)?;
                Ok(no_mapping_encode(v))
            }
            MapperModel::Lca(m) => m.encode(v, side),
            MapperModel::Lcc(m) => m.encode(v, side),
            MapperModel::Nca(m) => m.encode(v, side),
        }
    }

    /// Encodes every row of `rows`.
    pub fn encode_batch(&self, rows: &DenseMatrix, side: Side) -> Result<DenseMatrix> {
        if rows.cols() != self.input_dim() {
            return Err(MapperError::DimensionMismatch {
                expected: self.input_dim(),
                found: rows.cols(),
            });
        }
        match self {
            MapperModel::None { .. } => Ok(rows.clone()),
            MapperModel::Lcc(m) => m.encode_batch(rows, side),
            MapperModel::Nca(m) => m.encode_batch(rows, side),
            MapperModel::Lca(_) => {
                let encoded: Vec<Vec<f64>> = (0..rows.rows())
                    .into_par_iter()
                    .map(|i| self.encode(rows.row(i), side))
                    .collect::<Result<_>>()?;
                if encoded.is_empty() {
                    return Ok(DenseMatrix::zeros(0, self.dim().unwrap_or(0)));
                }
                Ok(DenseMatrix::from_rows(&encoded)?)
            }
        }
    }
}

/// Fits any method. `dim` is required for LCA/LCC and ignored otherwise;
/// validation rows are used by NCA only.
pub fn fit_mapper(
    method: Method,
    x_train: &DenseMatrix,
    y_train: &DenseMatrix,
    x_val: &DenseMatrix,
    y_val: &DenseMatrix,
    dim: Option<usize>,
    nca_config: &TrainConfig,
) -> Result<MapperModel> {
    check_aligned(x_train, y_train)?;
    let require_dim = |method| {
        dim.ok_or(MapperError::DimOutOfRange {
            method,
            dim: 0,
            max: x_train.rows(),
        })
    };
    Ok(match method {
        Method::None => MapperModel::None {
            input_dim: x_train.cols(),
        },
        Method::Lca => MapperModel::Lca(fit_lca(x_train, y_train, require_dim(method)?)?),
        Method::Lcc => MapperModel::Lcc(fit_lcc(x_train, y_train, require_dim(method)?)?),
        Method::Nca => MapperModel::Nca(fit_nca(x_train, y_train, x_val, y_val, nca_config)?),
    })
}

pub(crate) fn check_len(v: &[f64], expected: usize) -> Result<()> {
    if v.len() != expected {
        return Err(MapperError::DimensionMismatch {
            expected,
            found: v.len(),
        });
    }
    Ok(())
}

pub(crate) fn check_aligned(x: &DenseMatrix, y: &DenseMatrix) -> Result<()> {
    if x.shape() != y.shape() {
        return Err(MapperError::Misaligned(format!(
            "source is {:?}, target is {:?}",
            x.shape(),
            y.shape()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.as_str().parse::<Method>().unwrap(), m);
        }
        assert!("pca".parse::<Method>().is_err());
    }

    #[test]
    fn none_is_identity() {
        let v = [1.0, -2.0, 3.5];
        assert_eq!(no_mapping_encode(&v), v.to_vec());
        let model = MapperModel::None { input_dim: 3 };
        assert_eq!(model.encode(&v, Side::Source).unwrap(), v.to_vec());
        assert_eq!(model.encode(&v, Side::Target).unwrap(), v.to_vec());
        assert!(model.encode(&v[..2], Side::Source).is_err());
        assert_eq!(model.dim(), None);
    }

    #[test]
    fn fit_requires_dim_for_swept_methods() {
        let x = DenseMatrix::identity(3);
        let err = fit_mapper(Method::Lca, &x, &x, &x, &x, None, &TrainConfig::default()).unwrap_err();
        assert!(matches!(err, MapperError::DimOutOfRange { .. }));
    }
}
