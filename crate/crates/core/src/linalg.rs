//! Small dense linear-algebra kernels.
//!
//! Everything here operates on `ndarray::Array2<f64>` and is written for the
//! matrix sizes this crate actually sees: d x d weight matrices with d <= ~50
//! and n x n Gaussian-process kernels with n <= 5000. No BLAS/LAPACK binding.

use ndarray::{Array1, Array2, ArrayView2};

use crate::error::{Error, Result};

/// LU factorization with partial pivoting. Returns (lu, perm, sign) where `lu`
/// packs L (unit lower) and U, `perm` maps row i of the factorization to the
/// original row `perm[i]`.
pub struct Lu {
    lu: Array2<f64>,
    perm: Vec<usize>,
    sign: f64,
}

impl Lu {
    pub fn factor(a: &ArrayView2<f64>) -> Result<Lu> {
        let n = square_dim(a)?;
        let mut lu = a.to_owned();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut sign = 1.0;
        for k in 0..n {
            // pivot search
            let mut p = k;
            let mut best = lu[[k, k]].abs();
            for i in (k + 1)..n {
                let v = lu[[i, k]].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best == 0.0 || !best.is_finite() {
                return Err(Error::Numerical(format!("singular matrix at pivot {k}")));
            }
            if p != k {
                for j in 0..n {
                    lu.swap([k, j], [p, j]);
                }
                perm.swap(k, p);
                sign = -sign;
            }
            let piv = lu[[k, k]];
            for i in (k + 1)..n {
                let m = lu[[i, k]] / piv;
                lu[[i, k]] = m;
                for j in (k + 1)..n {
                    lu[[i, j]] -= m * lu[[k, j]];
                }
            }
        }
        Ok(Lu { lu, perm, sign })
    }

    pub fn det(&self) -> f64 {
        let n = self.lu.nrows();
        let mut d = self.sign;
        for i in 0..n {
            d *= self.lu[[i, i]];
        }
        d
    }

    /// log |det| and its sign.
    pub fn slogdet(&self) -> (f64, f64) {
        let n = self.lu.nrows();
        let mut log = 0.0;
        let mut sign = self.sign;
        for i in 0..n {
            let u = self.lu[[i, i]];
            log += u.abs().ln();
            if u < 0.0 {
                sign = -sign;
            }
        }
        (sign, log)
    }

    pub fn solve_vec(&self, b: &Array1<f64>) -> Array1<f64> {
        let n = self.lu.nrows();
        let mut x = Array1::zeros(n);
        for i in 0..n {
            x[i] = b[self.perm[i]];
        }
        // forward substitution with unit lower triangle
        for i in 0..n {
            for j in 0..i {
                let l = self.lu[[i, j]];
                x[i] -= l * x[j];
            }
        }
        // back substitution
        for i in (0..n).rev() {
            for j in (i + 1)..n {
                let u = self.lu[[i, j]];
                x[i] -= u * x[j];
            }
            x[i] /= self.lu[[i, i]];
        }
        x
    }

    pub fn solve_mat(&self, b: &ArrayView2<f64>) -> Array2<f64> {
        let n = self.lu.nrows();
        let m = b.ncols();
        let mut out = Array2::zeros((n, m));
        for c in 0..m {
            let col = b.column(c).to_owned();
            let x = self.solve_vec(&col);
            out.column_mut(c).assign(&x);
        }
        out
    }

    pub fn inverse(&self) -> Array2<f64> {
        let n = self.lu.nrows();
        self.solve_mat(&Array2::eye(n).view())
    }
}

/// LU without pivoting, used as the M-matrix certificate for the log-det
/// constraint: for a Z-matrix (non-positive off-diagonal), elimination
/// succeeds with all pivots positive iff every leading principal minor is
/// positive, i.e. iff the matrix is a nonsingular M-matrix.
///
/// Returns the pivots on success, `Error::LdetDomain` on a non-positive or
/// non-finite pivot.
pub struct LuNoPivot {
    lu: Array2<f64>,
}

impl LuNoPivot {
    pub fn factor_m_matrix(a: &ArrayView2<f64>) -> Result<LuNoPivot> {
        let n = square_dim(a)?;
        let mut lu = a.to_owned();
        for k in 0..n {
            let piv = lu[[k, k]];
            if !(piv > 0.0) || !piv.is_finite() {
                return Err(Error::LdetDomain);
            }
            for i in (k + 1)..n {
                let m = lu[[i, k]] / piv;
                lu[[i, k]] = m;
                for j in (k + 1)..n {
                    lu[[i, j]] -= m * lu[[k, j]];
                }
            }
        }
        Ok(LuNoPivot { lu })
    }

    /// Sum of log-pivots; equals log det for an M-matrix.
    pub fn logdet(&self) -> f64 {
        let n = self.lu.nrows();
        (0..n).map(|i| self.lu[[i, i]].ln()).sum()
    }

    pub fn solve_vec(&self, b: &Array1<f64>) -> Array1<f64> {
        let n = self.lu.nrows();
        let mut x = b.clone();
        for i in 0..n {
            for j in 0..i {
                let l = self.lu[[i, j]];
                x[i] -= l * x[j];
            }
        }
        for i in (0..n).rev() {
            for j in (i + 1)..n {
                let u = self.lu[[i, j]];
                x[i] -= u * x[j];
            }
            x[i] /= self.lu[[i, i]];
        }
        x
    }

    pub fn inverse(&self) -> Array2<f64> {
        let n = self.lu.nrows();
        let mut out = Array2::zeros((n, n));
        for c in 0..n {
            let mut e = Array1::zeros(n);
            e[c] = 1.0;
            out.column_mut(c).assign(&self.solve_vec(&e));
        }
        out
    }
}

/// In-place Cholesky of a symmetric positive-definite matrix; returns the
/// lower factor L with A = L L^T.
pub fn cholesky(a: &ArrayView2<f64>) -> Result<Array2<f64>> {
    let n = square_dim(a)?;
    let mut l = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[[i, j]];
            for k in 0..j {
                s -= l[[i, k]] * l[[j, k]];
            }
            if i == j {
                if !(s > 0.0) || !s.is_finite() {
                    return Err(Error::Numerical(format!(
                        "cholesky breakdown at row {i}: pivot {s}"
                    )));
                }
                l[[i, j]] = s.sqrt();
            } else {
                l[[i, j]] = s / l[[j, j]];
            }
        }
    }
    Ok(l)
}

/// Solves A x = b with A = L L^T given the lower Cholesky factor.
pub fn cholesky_solve(l: &ArrayView2<f64>, b: &Array1<f64>) -> Array1<f64> {
    let n = l.nrows();
    let mut x = b.clone();
    for i in 0..n {
        for j in 0..i {
            let v = l[[i, j]];
            x[i] -= v * x[j];
        }
        x[i] /= l[[i, i]];
    }
    for i in (0..n).rev() {
        for j in (i + 1)..n {
            let v = l[[j, i]];
            x[i] -= v * x[j];
        }
        x[i] /= l[[i, i]];
    }
    x
}

/// Maximum absolute column sum.
pub fn norm_1(a: &ArrayView2<f64>) -> f64 {
    let mut best = 0.0_f64;
    for c in a.columns() {
        let s: f64 = c.iter().map(|v| v.abs()).sum();
        best = best.max(s);
    }
    best
}

/// Frobenius norm.
pub fn norm_fro(a: &ArrayView2<f64>) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub(crate) fn square_dim(a: &ArrayView2<f64>) -> Result<usize> {
    if a.nrows() != a.ncols() {
        return Err(Error::Shape(format!(
            "expected square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    Ok(a.nrows())
}
