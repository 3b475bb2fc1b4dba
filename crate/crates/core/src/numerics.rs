//! Small dense linear algebra: one-sided Jacobi SVD, Moore–Penrose
//! pseudoinverse, numerical rank and a partial-pivoting LU fast path.
//!
//! The matrices in this crate are tiny (at most `24 × 24` for the projection
//! systems, `6 × 6` for balancing weights), so everything is plain `Vec<f64>`
//! in row-major order.

use std::fmt;
use std::ops::{Index, IndexMut, Mul};

use crate::error::{Error, Result};

/// Dense row-major matrix.
#[derive(Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Matrix {}x{} [", self.rows, self.cols)?;
        for r in 0..self.rows {
            writeln!(f, "  {:?}", self.row(r))?;
        }
        write!(f, "]")
    }
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|row| row.len() == c), "ragged rows");
        Matrix {
            rows: r,
            cols: c,
            data: rows.concat(),
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols);
        Matrix { rows, cols, data }
    }

    pub fn diag(values: &[f64]) -> Self {
        let mut m = Matrix::zeros(values.len(), values.len());
        for (i, &v) in values.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self[(r, c)]).collect()
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                t[(c, r)] = self[(r, c)];
            }
        }
        t
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols);
        (0..self.rows)
            .map(|r| self.row(r).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;

    fn index(&self, (r, c): (usize, usize)) -> &f64 {
        &self.data[r * self.cols + c]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut f64 {
        &mut self.data[r * self.cols + c]
    }
}

impl Mul for &Matrix {
    type Output = Matrix;

    fn mul(self, rhs: &Matrix) -> Matrix {
        assert_eq!(self.cols, rhs.rows);
        let mut out = Matrix::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                for j in 0..rhs.cols {
                    out[(i, j)] += a * rhs[(k, j)];
                }
            }
        }
        out
    }
}

/// Thin singular value decomposition `A = U diag(σ) Vᵀ`.
#[derive(Clone, Debug)]
pub struct SvdResult {
    /// `rows × k` with orthonormal columns, `k = min(rows, cols)`.
    pub u: Matrix,
    /// Singular values, descending.
    pub sigma: Vec<f64>,
    /// `cols × k` with orthonormal columns.
    pub v: Matrix,
}

impl SvdResult {
    pub fn reconstruct(&self) -> Matrix {
        let mut us = self.u.clone();
        for r in 0..us.rows {
            for (c, s) in self.sigma.iter().enumerate() {
                us[(r, c)] *= s;
            }
        }
        &us * &self.v.transpose()
    }

    pub fn sigma_max(&self) -> f64 {
        self.sigma.first().copied().unwrap_or(0.0)
    }

    /// Count of singular values above `rel_tol · σ_max`.
    pub fn rank(&self, rel_tol: f64) -> usize {
        let cutoff = rel_tol * self.sigma_max();
        self.sigma.iter().filter(|&&s| s > cutoff && s > 0.0).count()
    }
}

const JACOBI_MAX_SWEEPS: usize = 80;

/// Default relative threshold `ε · max(rows, cols)`.
pub fn default_tol(rows: usize, cols: usize) -> f64 {
    f64::EPSILON * rows.max(cols) as f64
}

/// One-sided (Hestenes) Jacobi SVD.
pub fn svd(a: &Matrix) -> Result<SvdResult> {
    if !a.is_finite() {
        return Err(Error::InvalidArgument("matrix has non-finite entries".into()));
    }
    if a.rows < a.cols {
        let t = svd(&a.transpose())?;
        return Ok(SvdResult {
            u: t.v,
            sigma: t.sigma,
            v: t.u,
        });
    }
    let (m, n) = (a.rows, a.cols);
    // Work on columns: w holds A V, stored column-major for cache locality.
    let mut w: Vec<Vec<f64>> = (0..n).map(|c| a.column(c)).collect();
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|c| (0..n).map(|r| if r == c { 1.0 } else { 0.0 }).collect())
        .collect();

    let frob2: f64 = a.data.iter().map(|x| x * x).sum();
    let negligible_col = frob2 * f64::EPSILON * f64::EPSILON;
    let mut converged = n < 2;
    for _ in 0..JACOBI_MAX_SWEEPS {
        if converged {
            break;
        }
        let mut rotated = false;
        for p in 0..n - 1 {
            for q in p + 1..n {
                let alpha: f64 = w[p].iter().map(|x| x * x).sum();
                let beta: f64 = w[q].iter().map(|x| x * x).sum();
                let gamma: f64 = w[p].iter().zip(&w[q]).map(|(x, y)| x * y).sum();
                if alpha <= negligible_col
                    || beta <= negligible_col
                    || gamma.abs() <= f64::EPSILON * (alpha * beta).sqrt()
                {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let t = if zeta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for k in 0..m {
                    let (x, y) = (w[p][k], w[q][k]);
                    w[p][k] = c * x - s * y;
                    w[q][k] = s * x + c * y;
                }
                for k in 0..n {
                    let (x, y) = (v[p][k], v[q][k]);
                    v[p][k] = c * x - s * y;
                    v[q][k] = s * x + c * y;
                }
            }
        }
        converged = !rotated;
    }
    if !converged {
        return Err(Error::SvdNoConvergence(JACOBI_MAX_SWEEPS));
    }

    let norms: Vec<f64> = w.iter().map(|col| col.iter().map(|x| x * x).sum::<f64>().sqrt()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]));

    let sigma_max = norms[order[0]];
    let negligible = sigma_max * f64::EPSILON * m as f64;
    let mut u = Matrix::zeros(m, n);
    let mut vm = Matrix::zeros(n, n);
    let mut sigma = Vec::with_capacity(n);
    let mut filled: Vec<Vec<f64>> = Vec::with_capacity(n);
    for (k, &j) in order.iter().enumerate() {
        let s = norms[j];
        sigma.push(s);
        for r in 0..n {
            vm[(r, k)] = v[j][r];
        }
        let col = if s > negligible && s > 0.0 {
            w[j].iter().map(|x| x / s).collect()
        } else {
            complete_basis(&filled, m)
        };
        for r in 0..m {
            u[(r, k)] = col[r];
        }
        filled.push(col);
    }
    Ok(SvdResult { u, sigma, v: vm })
}

/// A unit vector orthogonal to every vector in `basis` (Gram–Schmidt against e_i).
fn complete_basis(basis: &[Vec<f64>], m: usize) -> Vec<f64> {
    let mut best: Option<(f64, Vec<f64>)> = None;
    for i in 0..m {
        let mut e = vec![0.0; m];
        e[i] = 1.0;
        for _ in 0..2 {
            for b in basis {
                let d: f64 = b.iter().zip(&e).map(|(x, y)| x * y).sum();
                for (ek, bk) in e.iter_mut().zip(b) {
                    *ek -= d * bk;
                }
            }
        }
        let norm = e.iter().map(|x| x * x).sum::<f64>().sqrt();
        if best.as_ref().is_none_or(|(bn, _)| norm > *bn) {
            best = Some((norm, e));
        }
        if norm > 0.5 {
            break;
        }
    }
    let (norm, e) = best.expect("m >= 1");
    e.into_iter().map(|x| x / norm).collect()
}

/// Moore–Penrose pseudoinverse; σ_i ≤ `rel_tol · σ_max` are treated as zero.
/// `None` selects [`default_tol`].
pub fn pseudoinverse(a: &Matrix, rel_tol: Option<f64>) -> Result<Matrix> {
    let dec = svd(a)?;
    Ok(pinv_from_svd(&dec, rel_tol.unwrap_or_else(|| default_tol(a.rows, a.cols))))
}

fn pinv_from_svd(dec: &SvdResult, rel_tol: f64) -> Matrix {
    let cutoff = rel_tol * dec.sigma_max();
    let (n, m) = (dec.v.rows(), dec.u.rows());
    let mut out = Matrix::zeros(n, m);
    for (k, &s) in dec.sigma.iter().enumerate() {
        if s <= cutoff || s == 0.0 {
            continue;
        }
        let inv = 1.0 / s;
        for i in 0..n {
            let vi = dec.v[(i, k)] * inv;
            if vi == 0.0 {
                continue;
            }
            for j in 0..m {
                out[(i, j)] += vi * dec.u[(j, k)];
            }
        }
    }
    out
}

/// Outcome of [`solve`].
#[derive(Clone, Debug, PartialEq)]
pub struct Solution {
    pub x: Vec<f64>,
    /// Set when some σ_i ≤ tol · σ_max; `x` is then the minimum-norm
    /// least-squares solution `A⁺ b`.
    pub singular: bool,
    pub rank: usize,
}

/// Solves a square system through the pseudoinverse.
pub fn solve(a: &Matrix, b: &[f64], rel_tol: Option<f64>) -> Result<Solution> {
    if a.rows != a.cols {
        return Err(Error::SizeMismatch {
            expected: a.rows,
            found: a.cols,
        });
    }
    if b.len() != a.rows {
        return Err(Error::SizeMismatch {
            expected: a.rows,
            found: b.len(),
        });
    }
    let tol = rel_tol.unwrap_or_else(|| default_tol(a.rows, a.cols));
    let dec = svd(a)?;
    let rank = dec.rank(tol);
    let x = pinv_from_svd(&dec, tol).mul_vec(b);
    Ok(Solution {
        x,
        singular: rank < a.rows,
        rank,
    })
}

/// Numerical rank: singular values above `rel_tol · σ_max`.
pub fn rank(a: &Matrix, rel_tol: Option<f64>) -> Result<usize> {
    if a.rows == 0 || a.cols == 0 {
        return Ok(0);
    }
    let dec = svd(a)?;
    Ok(dec.rank(rel_tol.unwrap_or_else(|| default_tol(a.rows, a.cols))))
}

/// LU factorisation with partial pivoting of a square matrix.
#[derive(Clone, Debug)]
pub struct Lu {
    lu: Matrix,
    perm: Vec<usize>,
    sign: f64,
}

impl Lu {
    /// Factorises `a`; returns `None` if an exactly zero pivot is met.
    pub fn new(a: &Matrix) -> Option<Lu> {
        assert_eq!(a.rows, a.cols);
        let n = a.rows;
        let mut lu = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut sign = 1.0;
        for k in 0..n {
            let (p, pivot) = (k..n)
                .map(|r| (r, lu[(r, k)].abs()))
                .max_by(|a, b| a.1.total_cmp(&b.1))
                .expect("nonempty");
            if pivot == 0.0 {
                return None;
            }
            if p != k {
                for c in 0..n {
                    lu.data.swap(k * n + c, p * n + c);
                }
                perm.swap(k, p);
                sign = -sign;
            }
            let d = lu[(k, k)];
            for r in k + 1..n {
                let f = lu[(r, k)] / d;
                lu[(r, k)] = f;
                if f != 0.0 {
                    for c in k + 1..n {
                        let t = lu[(k, c)];
                        lu[(r, c)] -= f * t;
                    }
                }
            }
        }
        Some(Lu { lu, perm, sign })
    }

    pub fn det(&self) -> f64 {
        (0..self.lu.rows).fold(self.sign, |acc, i| acc * self.lu[(i, i)])
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.lu.rows;
        let mut y: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            for j in 0..i {
                y[i] -= self.lu[(i, j)] * y[j];
            }
        }
        for i in (0..n).rev() {
            for j in i + 1..n {
                y[i] -= self.lu[(i, j)] * y[j];
            }
            y[i] /= self.lu[(i, i)];
        }
        y
    }
}

/// Exact determinant of a small integer matrix (Bareiss fraction-free elimination).
pub fn det_exact(rows: &[Vec<i64>]) -> i128 {
    let n = rows.len();
    let mut m: Vec<Vec<i128>> = rows
        .iter()
        .map(|r| r.iter().map(|&v| v as i128).collect())
        .collect();
    let mut sign = 1i128;
    let mut prev = 1i128;
    for k in 0..n {
        if m[k][k] == 0 {
            match (k + 1..n).find(|&r| m[r][k] != 0) {
                Some(r) => {
                    m.swap(k, r);
                    sign = -sign;
                }
                None => return 0,
            }
        }
        for i in k + 1..n {
            for j in k + 1..n {
                m[i][j] = (m[i][j] * m[k][k] - m[i][k] * m[k][j]) / prev;
            }
        }
        prev = m[k][k];
    }
    sign * m[n - 1][n - 1]
}
