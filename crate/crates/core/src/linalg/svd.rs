use super::{dot, norm, DenseMatrix, HouseholderQr, LinalgError, Result};

/// Pairs whose normalized inner product falls below this are treated as
/// orthogonal.
const JACOBI_TOL: f64 = 1e-12;
const MAX_SWEEPS: usize = 80;

/// Thin singular value decomposition `A ≈ U · diag(s) · Vᵀ`.
///
/// Singular values are sorted non-increasing. Each column of `v` is signed so
/// that its largest-magnitude entry is positive, with `u` flipped to match.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: DenseMatrix,
    pub singular_values: Vec<f64>,
    pub v: DenseMatrix,
}

impl Svd {
    pub fn rank(&self) -> usize {
        self.singular_values.len()
    }

    /// `U · diag(s) · Vᵀ`
    pub fn reconstruct(&self) -> DenseMatrix {
        let mut us = self.u.clone();
        for i in 0..us.rows() {
            for (x, s) in us.row_mut(i).iter_mut().zip(&self.singular_values) {
                *x *= s;
            }
        }
        us.matmul_t(&self.v).expect("factor shapes are consistent")
    }

    /// Number of singular values above `rcond · s_max`.
    pub fn numerical_rank(&self, rcond: f64) -> usize {
        let cutoff = rcond * self.singular_values.first().copied().unwrap_or(0.0);
        self.singular_values.iter().filter(|&&s| s > cutoff).count()
    }
}

/// Full thin SVD with `min(rows, cols)` components.
pub fn thin_svd(a: &DenseMatrix) -> Result<Svd> {
    let (m, n) = a.shape();
    if m == 0 || n == 0 {
        return Err(LinalgError::Empty);
    }
    let (u_cols, s, v_cols) = if m >= n {
        tall_svd(a)?
    } else {
        let (u, s, v) = tall_svd(&a.transpose())?;
        (v, s, u)
    };
    Ok(assemble(m, n, u_cols, s, v_cols))
}

/// Leading `rank` components of the SVD.
pub fn truncated_svd(a: &DenseMatrix, rank: usize) -> Result<Svd> {
    let max = a.rows().min(a.cols());
    if rank < 1 || rank > max {
        return Err(LinalgError::RankOutOfRange { rank, max });
    }
    let full = thin_svd(a)?;
    Ok(Svd {
        u: full.u.leading_columns(rank),
        singular_values: full.singular_values[..rank].to_vec(),
        v: full.v.leading_columns(rank),
    })
}

type Factors = (Vec<Vec<f64>>, Vec<f64>, Vec<Vec<f64>>);

fn assemble(m: usize, n: usize, u_cols: Vec<Vec<f64>>, s: Vec<f64>, v_cols: Vec<Vec<f64>>) -> Svd {
    let q = s.len();
    let mut order: Vec<usize> = (0..q).collect();
    order.sort_by(|&i, &j| s[j].total_cmp(&s[i]).then(i.cmp(&j)));

    let mut u = DenseMatrix::zeros(m, q);
    let mut v = DenseMatrix::zeros(n, q);
    let mut values = Vec::with_capacity(q);
    for (dst, &src) in order.iter().enumerate() {
        let vc = &v_cols[src];
        let pivot = vc
            .iter()
            .enumerate()
            .fold(0, |best, (i, x)| if x.abs() > vc[best].abs() { i } else { best });
        let sign = if vc[pivot] < 0.0 { -1.0 } else { 1.0 };
        for i in 0..m {
            u[(i, dst)] = sign * u_cols[src][i];
        }
        for i in 0..n {
            v[(i, dst)] = sign * vc[i];
        }
        values.push(s[src]);
    }
    Svd {
        u,
        singular_values: values,
        v,
    }
}

/// SVD of a matrix with at least as many rows as columns. Taller inputs are
/// reduced to their square `R` factor first so the Jacobi sweeps run on
/// `cols`-length vectors.
fn tall_svd(a: &DenseMatrix) -> Result<Factors> {
    let (m, n) = a.shape();
    if m == n {
        return jacobi_factors(columns_of(a));
    }
    let qr = HouseholderQr::new(a)?;
    let (ur, s, v) = jacobi_factors(columns_of(&qr.r()))?;
    let u = ur
        .into_iter()
        .map(|c| {
            let mut full = vec![0.0; m];
            full[..n].copy_from_slice(&c);
            qr.apply_q(&mut full);
            full
        })
        .collect();
    Ok((u, s, v))
}

fn columns_of(a: &DenseMatrix) -> Vec<Vec<f64>> {
    (0..a.cols()).map(|j| a.column(j)).collect()
}

/// One-sided Jacobi: orthogonalizes the columns of `g` by plane rotations,
/// accumulating them in `V`. On return `g = U · diag(s)`.
fn jacobi_factors(mut g: Vec<Vec<f64>>) -> Result<Factors> {
    let n = g.len();
    let len = g.first().map_or(0, Vec::len);
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|j| {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            e
        })
        .collect();

    let mut converged = false;
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let (gp, gq) = pair_mut(&mut g, p, q);
                let alpha = dot(gp, gp);
                let beta = dot(gq, gq);
                let gamma = dot(gp, gq);
                if gamma == 0.0 || gamma.abs() <= JACOBI_TOL * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = if zeta.abs() > 1e150 {
                    0.5 / zeta
                } else {
                    zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate(gp, gq, c, s);
                let (vp, vq) = pair_mut(&mut v, p, q);
                rotate(vp, vq, c, s);
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(LinalgError::NoConvergence { sweeps: MAX_SWEEPS });
    }

    let s: Vec<f64> = g.iter().map(|c| norm(c)).collect();
    let s_max = s.iter().copied().fold(0.0, f64::max);
    let negligible = len.max(n) as f64 * f64::EPSILON * s_max;
    let mut u: Vec<Option<Vec<f64>>> = g
        .into_iter()
        .zip(&s)
        .map(|(c, &sv)| {
            (sv > negligible && sv > 0.0).then(|| c.iter().map(|x| x / sv).collect())
        })
        .collect();
    complete_basis(&mut u, len);
    Ok((u.into_iter().map(Option::unwrap).collect(), s, v))
}

/// Fills missing left singular vectors (null singular values) with unit
/// vectors orthogonal to every other column, taken from the standard basis
/// in index order.
fn complete_basis(cols: &mut [Option<Vec<f64>>], len: usize) {
    let mut candidate = 0;
    for j in 0..cols.len() {
        if cols[j].is_some() {
            continue;
        }
        while candidate < len {
            let mut w = vec![0.0; len];
            w[candidate] = 1.0;
            candidate += 1;
            for _ in 0..2 {
                for c in cols.iter().flatten() {
                    let proj = dot(c, &w);
                    w.iter_mut().zip(c).for_each(|(x, y)| *x -= proj * y);
                }
            }
            let nw = norm(&w);
            if nw > 1e-3 {
                w.iter_mut().for_each(|x| *x /= nw);
                cols[j] = Some(w);
                break;
            }
        }
        assert!(cols[j].is_some(), "basis completion ran out of candidates");
    }
}

#[inline]
fn pair_mut(cols: &mut [Vec<f64>], p: usize, q: usize) -> (&mut [f64], &mut [f64]) {
    debug_assert!(p < q);
    let (head, tail) = cols.split_at_mut(q);
    (&mut head[p], &mut tail[0])
}

#[inline]
fn rotate(a: &mut [f64], b: &mut [f64], c: f64, s: f64) {
    for (x, y) in a.iter_mut().zip(b.iter_mut()) {
        let (xa, yb) = (*x, *y);
        *x = c * xa - s * yb;
        *y = s * xa + c * yb;
    }
}
