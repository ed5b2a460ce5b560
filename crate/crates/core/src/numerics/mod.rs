//! Dense linear algebra, linear programming and simplex projections.
//!
//! Everything here is small-scale and allocation-light: the inner problems of
//! the robust solvers have at most a few dozen variables.

mod lp;
mod polytope;

pub use lp::{LinearProgram, LpSolution, Relation, FEAS_TOL, OPT_TOL};
pub use polytope::{budget_min_oracle, lp_minimize, BudgetSet, Polytope};

use serde::{Deserialize, Serialize};
use std::ops::{Index, IndexMut};

use crate::error::{Error, Result};

/// Pivots smaller than this are treated as zero by [`solve_linear_system`].
pub const PIVOT_TOL: f64 = 1e-12;

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
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

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Matrix { rows, cols, data }
    }

    /// Builds a matrix from nested rows. Ragged input is rejected.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for row in rows {
            if row.len() != cols {
                return Err(Error::dims("matrix row", cols, row.len()));
            }
            data.extend_from_slice(row);
        }
        Ok(Matrix {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        let c = self.cols;
        &mut self.data[i * c..(i + 1) * c]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn set_column(&mut self, j: usize, values: &[f64]) {
        for (i, &x) in values.iter().enumerate() {
            self[(i, j)] = x;
        }
    }

    pub fn transpose(&self) -> Matrix {
        Matrix::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.cols);
        (0..self.rows).map(|i| dot(self.row(i), x)).collect()
    }

    /// `selfᵀ x` without materialising the transpose.
    pub fn tr_mul_vec(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.rows);
        let mut out = vec![0.0; self.cols];
        for (i, &xi) in x.iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            for (o, &a) in out.iter_mut().zip(self.row(i)) {
                *o += a * xi;
            }
        }
        out
    }

    pub fn matmul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.cols, other.rows, "matmul dimension mismatch");
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out.data[i * other.cols + j] += a * other.data[k * other.cols + j];
                }
            }
        }
        out
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    /// Induced 1-norm: maximum absolute column sum.
    pub fn norm_1(&self) -> f64 {
        (0..self.cols)
            .map(|j| (0..self.rows).map(|i| self[(i, j)].abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// Induced ∞-norm: maximum absolute row sum.
    pub fn norm_inf(&self) -> f64 {
        (0..self.rows)
            .map(|i| self.row(i).iter().map(|x| x.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;

    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

impl From<Vec<Vec<f64>>> for Matrix {
    fn from(rows: Vec<Vec<f64>>) -> Self {
        // Ragged input degrades to a zero-column matrix; validated loaders use `from_rows`.
        Matrix::from_rows(&rows).unwrap_or_else(|_| Matrix::zeros(rows.len(), 0))
    }
}

impl From<Matrix> for Vec<Vec<f64>> {
    fn from(m: Matrix) -> Self {
        m.to_rows()
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm_inf_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

/// Pairwise summation; the result depends only on the order of `xs`.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 8 {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// Solves `M x = rhs` by LU factorisation with partial pivoting.
pub fn solve_linear_system(m: &Matrix, rhs: &[f64]) -> Result<Vec<f64>> {
    let n = m.rows();
    if m.cols() != n {
        return Err(Error::dims("square matrix", n, m.cols()));
    }
    if rhs.len() != n {
        return Err(Error::dims("right-hand side", n, rhs.len()));
    }
    let mut a = m.clone();
    let mut x = rhs.to_vec();
    for k in 0..n {
        let (p, pivot) = (k..n)
            .map(|i| (i, a[(i, k)].abs()))
            .fold((k, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        if pivot < PIVOT_TOL {
            return Err(Error::SingularMatrix { pivot });
        }
        if p != k {
            for j in 0..n {
                a.data.swap(k * n + j, p * n + j);
            }
            x.swap(k, p);
        }
        let akk = a[(k, k)];
        for i in k + 1..n {
            let f = a[(i, k)] / akk;
            if f == 0.0 {
                continue;
            }
            a[(i, k)] = 0.0;
            for j in k + 1..n {
                a.data[i * n + j] -= f * a.data[k * n + j];
            }
            x[i] -= f * x[k];
        }
    }
    for k in (0..n).rev() {
        let s: f64 = (k + 1..n).map(|j| a[(k, j)] * x[j]).sum();
        x[k] = (x[k] - s) / a[(k, k)];
    }
    Ok(x)
}

/// Euclidean projection onto the probability simplex `{p ≥ 0, Σp = 1}`.
///
/// Sort-based: find the largest `k` with `u_k - (Σ_{j≤k} u_j - 1)/k > 0`
/// over the descending sort `u`, then shift and clamp.
pub fn project_simplex(x: &[f64]) -> Result<Vec<f64>> {
    if x.is_empty() {
        return Err(Error::EmptyInput);
    }
    if is_on_simplex(x) {
        return Ok(x.to_vec());
    }
    let mut u = x.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (k, &uk) in u.iter().enumerate() {
        cumsum += uk;
        let t = (cumsum - 1.0) / (k + 1) as f64;
        if uk - t > 0.0 {
            theta = t;
        }
    }
    let mut p: Vec<f64> = x.iter().map(|&xi| (xi - theta).max(0.0)).collect();
    // Remove the rounding drift so the output sums to one.
    let total: f64 = p.iter().sum();
    if total > 0.0 {
        p.iter_mut().for_each(|v| *v /= total);
    }
    Ok(p)
}

fn is_on_simplex(x: &[f64]) -> bool {
    x.iter().all(|&v| v >= 0.0) && (x.iter().sum::<f64>() - 1.0).abs() <= 1e-15
}

/// Euclidean projection of `x` onto `{p | lo ≤ p ≤ hi, Σp = 1}`.
///
/// The caller guarantees the set is nonempty (`Σlo ≤ 1 ≤ Σhi`). The
/// multiplier is located by bisection on the monotone map
/// `θ ↦ Σ clamp(x - θ, lo, hi)`.
pub fn project_capped_simplex(x: &[f64], lo: &[f64], hi: &[f64]) -> Result<Vec<f64>> {
    if x.is_empty() {
        return Err(Error::EmptyInput);
    }
    if lo.len() != x.len() || hi.len() != x.len() {
        return Err(Error::dims("projection bounds", x.len(), lo.len().min(hi.len())));
    }
    let lo_sum: f64 = lo.iter().sum();
    let hi_sum: f64 = hi.iter().sum();
    if lo_sum > 1.0 + 1e-12 || hi_sum < 1.0 - 1e-12 {
        return Err(Error::Infeasible);
    }
    let clamp_sum = |theta: f64| -> f64 {
        x.iter()
            .zip(lo.iter().zip(hi))
            .map(|(&xi, (&l, &h))| (xi - theta).clamp(l, h))
            .sum()
    };
    let spread = x.iter().fold(0.0f64, |m, v| m.max(v.abs())) + 2.0;
    let (mut a, mut b) = (-spread, spread);
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        if clamp_sum(mid) > 1.0 {
            a = mid;
        } else {
            b = mid;
        }
        if b - a < 1e-16 {
            break;
        }
    }
    let theta = 0.5 * (a + b);
    let mut p: Vec<f64> = x
        .iter()
        .zip(lo.iter().zip(hi))
        .map(|(&xi, (&l, &h))| (xi - theta).clamp(l, h))
        .collect();
    // Spread the residual over coordinates strictly inside their bounds.
    let resid = 1.0 - p.iter().sum::<f64>();
    if resid != 0.0 {
        for (j, pj) in p.iter_mut().enumerate() {
            let room = if resid > 0.0 { hi[j] - *pj } else { *pj - lo[j] };
            if room > resid.abs() {
                *pj += resid;
                break;
            }
        }
    }
    Ok(p)
}
