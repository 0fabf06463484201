use super::{DenseMatrix, LinalgError, Result};

/// Householder QR factorization of a tall matrix (`rows >= cols`).
///
/// Storage is column-major: `R` on and above the diagonal, the tails of the
/// Householder vectors below it (their leading entry is an implicit 1).
#[derive(Debug, Clone)]
pub struct HouseholderQr {
    rows: usize,
    cols: usize,
    factors: Vec<f64>,
    taus: Vec<f64>,
}

impl HouseholderQr {
    pub fn new(a: &DenseMatrix) -> Result<Self> {
        let (m, n) = a.shape();
        if m == 0 || n == 0 {
            return Err(LinalgError::Empty);
        }
        if m < n {
            return Err(LinalgError::ShapeMismatch {
                op: "householder_qr (needs rows >= cols)",
                left: (m, n),
                right: (m, n),
            });
        }
        let mut factors = a.to_col_major();
        let mut taus = vec![0.0; n];

        for j in 0..n {
            let (done, rest) = factors.split_at_mut((j + 1) * m);
            let col = &mut done[j * m..];
            let x0 = col[j];
            let tail_sq: f64 = col[j + 1..].iter().map(|x| x * x).sum();
            if tail_sq == 0.0 {
                // Already upper triangular in this column; H = I.
                taus[j] = 0.0;
                continue;
            }
            let norm = (x0 * x0 + tail_sq).sqrt();
            let alpha = if x0 >= 0.0 { -norm } else { norm };
            let tau = (alpha - x0) / alpha;
            let scale = 1.0 / (x0 - alpha);
            col[j + 1..].iter_mut().for_each(|v| *v *= scale);
            col[j] = alpha;
            taus[j] = tau;

            let v_tail = &col[j + 1..];
            for c in rest.chunks_exact_mut(m) {
                let w = c[j] + v_tail.iter().zip(&c[j + 1..]).map(|(v, x)| v * x).sum::<f64>();
                let tw = tau * w;
                c[j] -= tw;
                for (x, v) in c[j + 1..].iter_mut().zip(v_tail) {
                    *x -= tw * v;
                }
            }
        }
        Ok(Self {
            rows: m,
            cols: n,
            factors,
            taus,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    fn reflect(&self, j: usize, b: &mut [f64]) {
        let tau = self.taus[j];
        if tau == 0.0 {
            return;
        }
        let m = self.rows;
        let v_tail = &self.factors[j * m + j + 1..(j + 1) * m];
        let w = b[j] + v_tail.iter().zip(&b[j + 1..]).map(|(v, x)| v * x).sum::<f64>();
        let tw = tau * w;
        b[j] -= tw;
        for (x, v) in b[j + 1..].iter_mut().zip(v_tail) {
            *x -= tw * v;
        }
    }

    /// Overwrites `b` with `Qᵀ b`.
    pub fn apply_qt(&self, b: &mut [f64]) {
        debug_assert_eq!(b.len(), self.rows);
        for j in 0..self.cols {
            self.reflect(j, b);
        }
    }

    /// Overwrites `b` with `Q b`.
    pub fn apply_q(&self, b: &mut [f64]) {
        debug_assert_eq!(b.len(), self.rows);
        for j in (0..self.cols).rev() {
            self.reflect(j, b);
        }
    }

    #[inline]
    pub fn r_diag(&self, j: usize) -> f64 {
        self.factors[j * self.rows + j]
    }

    /// `cols x cols` upper-triangular factor.
    pub fn r(&self) -> DenseMatrix {
        let m = self.rows;
        DenseMatrix::from_fn(self.cols, self.cols, |i, j| {
            if i <= j {
                self.factors[j * m + i]
            } else {
                0.0
            }
        })
    }

    /// Thin orthonormal factor, `rows x cols`.
    pub fn thin_q(&self) -> DenseMatrix {
        let (m, n) = (self.rows, self.cols);
        let mut cols = vec![0.0; m * n];
        for (j, c) in cols.chunks_exact_mut(m).enumerate() {
            c[j] = 1.0;
            self.apply_q(c);
        }
        DenseMatrix::from_col_major(m, n, &cols)
    }

    /// Smallest over largest `|R_jj|`; zero when some pivot vanishes.
    pub fn diag_ratio(&self) -> f64 {
        let (lo, hi) = (0..self.cols)
            .map(|j| self.r_diag(j).abs())
            .fold((f64::INFINITY, 0.0f64), |(lo, hi), d| (lo.min(d), hi.max(d)));
        if hi == 0.0 {
            0.0
        } else {
            lo / hi
        }
    }

    /// Least-squares solution for a full-column-rank factorization.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        if b.len() != self.rows {
            return Err(LinalgError::ShapeMismatch {
                op: "qr_solve",
                left: (self.rows, self.cols),
                right: (b.len(), 1),
            });
        }
        let mut c = b.to_vec();
        self.apply_qt(&mut c);
        let n = self.cols;
        let m = self.rows;
        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            let mut s = c[i];
            for j in i + 1..n {
                s -= self.factors[j * m + i] * x[j];
            }
            x[i] = s / self.r_diag(i);
        }
        Ok(x)
    }
}
