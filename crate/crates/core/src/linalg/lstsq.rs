use super::{dot, thin_svd, DenseMatrix, HouseholderQr, LinalgError, Result, Svd};

/// Relative cutoff below which singular values (or QR pivots, for the
/// rank-deficiency check) count as zero.
pub const DEFAULT_RCOND: f64 = 1e-10;

/// A factorized least-squares operator for repeated solves against one
/// matrix. Full-column-rank tall systems use Householder QR; anything else
/// falls back to the SVD pseudoinverse, which yields the minimum-norm
/// minimizer.
#[derive(Debug, Clone)]
pub struct LeastSquares {
    rows: usize,
    cols: usize,
    solver: Solver,
}

#[derive(Debug, Clone)]
enum Solver {
    Qr(HouseholderQr),
    Pseudoinverse { svd: Svd, inv_values: Vec<f64> },
}

impl LeastSquares {
    pub fn new(a: &DenseMatrix) -> Result<Self> {
        Self::with_rcond(a, DEFAULT_RCOND)
    }

    pub fn with_rcond(a: &DenseMatrix, rcond: f64) -> Result<Self> {
        let (rows, cols) = a.shape();
        if rows == 0 || cols == 0 {
            return Err(LinalgError::Empty);
        }
        if rows >= cols {
            let qr = HouseholderQr::new(a)?;
            if qr.diag_ratio() > rcond {
                return Ok(Self {
                    rows,
                    cols,
                    solver: Solver::Qr(qr),
                });
            }
        }
        let svd = thin_svd(a)?;
        let cutoff = rcond * svd.singular_values[0];
        let inv_values = svd
            .singular_values
            .iter()
            .map(|&s| if s > cutoff && s > 0.0 { 1.0 / s } else { 0.0 })
            .collect();
        Ok(Self {
            rows,
            cols,
            solver: Solver::Pseudoinverse { svd, inv_values },
        })
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    /// True when the SVD fallback is in use.
    pub fn is_rank_deficient(&self) -> bool {
        matches!(self.solver, Solver::Pseudoinverse { .. })
    }

    /// `argmin_x ‖A·x − b‖₂`, minimum-norm when not unique.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        if b.len() != self.rows {
            return Err(LinalgError::ShapeMismatch {
                op: "least_squares",
                left: (self.rows, self.cols),
                right: (b.len(), 1),
            });
        }
        match &self.solver {
            Solver::Qr(qr) => qr.solve(b),
            Solver::Pseudoinverse { svd, inv_values } => {
                let coeffs: Vec<f64> = (0..inv_values.len())
                    .map(|j| {
                        if inv_values[j] == 0.0 {
                            0.0
                        } else {
                            let uj = (0..self.rows).map(|i| svd.u[(i, j)] * b[i]).sum::<f64>();
                            uj * inv_values[j]
                        }
                    })
                    .collect();
                Ok((0..self.cols).map(|i| dot(svd.v.row(i), &coeffs)).collect())
            }
        }
    }
}

/// One-shot least squares; see [`LeastSquares`].
pub fn least_squares(a: &DenseMatrix, b: &[f64]) -> Result<Vec<f64>> {
    if b.len() != a.rows() {
        return Err(LinalgError::ShapeMismatch {
            op: "least_squares",
            left: a.shape(),
            right: (b.len(), 1),
        });
    }
    LeastSquares::new(a)?.solve(b)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn identity_system() {
        let x = least_squares(&DenseMatrix::identity(3), &[1.0, 2.0, 3.0]).unwrap();
        assert!(close(&x, &[1.0, 2.0, 3.0], 1e-15));
    }

    #[test]
    fn overdetermined_mean() {
        // (AᵀA)⁻¹Aᵀb = 4 / 2
        let a = DenseMatrix::from_rows(&[[1.0], [1.0]]).unwrap();
        let x = least_squares(&a, &[1.0, 3.0]).unwrap();
        assert!(close(&x, &[2.0], 1e-15));
    }

    #[test]
    fn minimum_norm_on_singular_system() {
        // Among {a1 + a2 = 2} the smallest-norm point is (1, 1).
        let a = DenseMatrix::from_rows(&[[1.0, 1.0], [1.0, 1.0]]).unwrap();
        let solver = LeastSquares::new(&a).unwrap();
        assert!(solver.is_rank_deficient());
        let x = solver.solve(&[2.0, 2.0]).unwrap();
        assert!(close(&x, &[1.0, 1.0], 1e-12), "{x:?}");
    }

    #[test]
    fn underdetermined_uses_pseudoinverse() {
        let a = DenseMatrix::from_rows(&[[1.0, 0.0, 1.0]]).unwrap();
        let x = least_squares(&a, &[2.0]).unwrap();
        assert!(close(&x, &[1.0, 0.0, 1.0], 1e-12), "{x:?}");
    }

    #[test]
    fn dimension_mismatch() {
        let a = DenseMatrix::identity(3);
        assert!(matches!(
            least_squares(&a, &[1.0, 2.0]),
            Err(LinalgError::ShapeMismatch { .. })
        ));
    }
}
