use super::{check_aligned, check_len, MapperError, Method, Result, Side};
use crate::linalg::{truncated_svd, DenseMatrix};

/// Linear concept compression: a closed-form linear autoencoder over the
/// column-concatenated training matrix `[X | Y]`.
///
/// The top `m` right singular vectors `V` (2k × m) of the mean-centered
/// concatenation act as decoder; their upper and lower halves give the
/// per-language encoders `enc_x = V[..k]ᵀ` and `enc_y = V[k..]ᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct LccModel {
    mean_x: Vec<f64>,
    mean_y: Vec<f64>,
    enc_x: DenseMatrix,
    enc_y: DenseMatrix,
    singular_values: Vec<f64>,
}

pub fn fit_lcc(x_train: &DenseMatrix, y_train: &DenseMatrix, shared_dim: usize) -> Result<LccModel> {
    check_aligned(x_train, y_train)?;
    let (n, k) = x_train.shape();
    let max = n.min(2 * k);
    if shared_dim < 1 || shared_dim > max {
        return Err(MapperError::DimOutOfRange {
            method: Method::Lcc,
            dim: shared_dim,
            max,
        });
    }
    let mean_x = x_train.column_means();
    let mean_y = y_train.column_means();
    let joint = x_train
        .center_rows(&mean_x)?
        .hconcat(&y_train.center_rows(&mean_y)?)?;
    let svd = truncated_svd(&joint, shared_dim)?;

    let v = &svd.v;
    let enc_x = DenseMatrix::from_fn(shared_dim, k, |i, j| v[(j, i)]);
    let enc_y = DenseMatrix::from_fn(shared_dim, k, |i, j| v[(k + j, i)]);
    Ok(LccModel {
        mean_x,
        mean_y,
        enc_x,
        enc_y,
        singular_values: svd.singular_values,
    })
}

impl LccModel {
    pub fn from_parts(
        mean_x: Vec<f64>,
        mean_y: Vec<f64>,
        enc_x: DenseMatrix,
        enc_y: DenseMatrix,
        singular_values: Vec<f64>,
    ) -> Result<Self> {
        check_aligned(&enc_x, &enc_y)?;
        let (m, k) = enc_x.shape();
        if mean_x.len() != k || mean_y.len() != k || singular_values.len() != m {
            return Err(MapperError::Misaligned(format!(
                "encoders {m}x{k} with means of {} and {} and {} singular values",
                mean_x.len(),
                mean_y.len(),
                singular_values.len()
            )));
        }
        Ok(Self {
            mean_x,
            mean_y,
            enc_x,
            enc_y,
            singular_values,
        })
    }

    /// The model restricted to its leading `shared_dim` components; equal to
    /// fitting with that width directly.
    pub fn truncated(&self, shared_dim: usize) -> Result<Self> {
        if shared_dim < 1 || shared_dim > self.shared_dim() {
            return Err(MapperError::DimOutOfRange {
                method: Method::Lcc,
                dim: shared_dim,
                max: self.shared_dim(),
            });
        }
        let rows: Vec<usize> = (0..shared_dim).collect();
        Ok(Self {
            mean_x: self.mean_x.clone(),
            mean_y: self.mean_y.clone(),
            enc_x: self.enc_x.select_rows(&rows),
            enc_y: self.enc_y.select_rows(&rows),
            singular_values: self.singular_values[..shared_dim].to_vec(),
        })
    }

    pub fn input_dim(&self) -> usize {
        self.enc_x.cols()
    }

    pub fn shared_dim(&self) -> usize {
        self.enc_x.rows()
    }

    pub fn singular_values(&self) -> &[f64] {
        &self.singular_values
    }

    pub fn encoder(&self, side: Side) -> &DenseMatrix {
        match side {
            Side::Source => &self.enc_x,
            Side::Target => &self.enc_y,
        }
    }

    pub fn mean(&self, side: Side) -> &[f64] {
        match side {
            Side::Source => &self.mean_x,
            Side::Target => &self.mean_y,
        }
    }

    pub fn encode(&self, v: &[f64], side: Side) -> Result<Vec<f64>> {
        check_len(v, self.input_dim())?;
        let centered: Vec<f64> = v.iter().zip(self.mean(side)).map(|(x, m)| x - m).collect();
        Ok(self.encoder(side).matvec(&centered)?)
    }

    pub fn encode_batch(&self, rows: &DenseMatrix, side: Side) -> Result<DenseMatrix> {
        let centered = rows.center_rows(self.mean(side))?;
        Ok(centered.matmul_t(self.encoder(side))?)
    }
}
