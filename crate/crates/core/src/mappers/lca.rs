use super::{check_aligned, check_len, MapperError, Method, Result, Side};
use crate::linalg::{DenseMatrix, LeastSquares};

/// Relative singular-value cutoff for the basis solves. Embeddings are
/// stored as f32, so directions below f32 precision are treated as null.
pub const LCA_RCOND: f64 = f32::EPSILON as f64;

/// Linear concept approximation: a document is represented by its
/// least-squares coordinates in the span of aligned training documents.
///
/// The bases hold one training document per column (`k × n_basis`); column
/// `j` of `basis_x` and of `basis_y` are the same document in either
/// language.
#[derive(Debug, Clone)]
pub struct LcaModel {
    basis_x: DenseMatrix,
    basis_y: DenseMatrix,
    solver_x: LeastSquares,
    solver_y: LeastSquares,
}

/// Uses the first `n_basis` aligned rows of the training matrices as basis.
pub fn fit_lca(x_train: &DenseMatrix, y_train: &DenseMatrix, n_basis: usize) -> Result<LcaModel> {
    check_aligned(x_train, y_train)?;
    let n_train = x_train.rows();
    if n_basis < 1 || n_basis > n_train {
        return Err(MapperError::DimOutOfRange {
            method: Method::Lca,
            dim: n_basis,
            max: n_train,
        });
    }
    let leading: Vec<usize> = (0..n_basis).collect();
    let basis_x = x_train.select_rows(&leading).transpose();
    let basis_y = y_train.select_rows(&leading).transpose();
    LcaModel::from_bases(basis_x, basis_y)
}

impl LcaModel {
    pub fn from_bases(basis_x: DenseMatrix, basis_y: DenseMatrix) -> Result<Self> {
        check_aligned(&basis_x, &basis_y)?;
        let (solver_x, solver_y) = rayon::join(
            || LeastSquares::with_rcond(&basis_x, LCA_RCOND),
            || LeastSquares::with_rcond(&basis_y, LCA_RCOND),
        );
        Ok(Self {
            solver_x: solver_x?,
            solver_y: solver_y?,
            basis_x,
            basis_y,
        })
    }

    pub fn basis(&self, side: Side) -> &DenseMatrix {
        match side {
            Side::Source => &self.basis_x,
            Side::Target => &self.basis_y,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.basis_x.rows()
    }

    pub fn n_basis(&self) -> usize {
        self.basis_x.cols()
    }

    /// Coordinates of `v` in the span of the side's training documents.
    pub fn encode(&self, v: &[f64], side: Side) -> Result<Vec<f64>> {
        check_len(v, self.input_dim())?;
        let solver = match side {
            Side::Source => &self.solver_x,
            Side::Target => &self.solver_y,
        };
        Ok(solver.solve(v)?)
    }
}
