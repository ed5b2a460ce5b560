//! Factor feasible sets: general polytopes and budget-of-uncertainty sets.

use serde::{Deserialize, Serialize};

use super::lp::{LinearProgram, Relation};
use super::{dot, Matrix};
use crate::error::{Error, Result};

/// `{ w ∈ R^dim | ∃ t: A (w, t) ≥ b, (w, t) ≥ 0 }`.
///
/// Columns past `dim` are auxiliary (lifting) variables that never carry
/// objective weight. With `nonneg == false` every variable is free.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polytope {
    pub a: Matrix,
    pub b: Vec<f64>,
    pub dim: usize,
    #[serde(default = "default_true")]
    pub nonneg: bool,
}

fn default_true() -> bool {
    true
}

impl Polytope {
    /// Polytope in `A w ≥ b, w ≥ 0` form without lifting variables.
    pub fn new(a: Matrix, b: Vec<f64>) -> Result<Self> {
        let dim = a.cols();
        Polytope::lifted(a, b, dim)
    }

    pub fn lifted(a: Matrix, b: Vec<f64>, dim: usize) -> Result<Self> {
        if a.rows() == 0 || a.cols() == 0 {
            return Err(Error::EmptyInput);
        }
        if b.len() != a.rows() {
            return Err(Error::dims("polytope rhs", a.rows(), b.len()));
        }
        if dim == 0 || dim > a.cols() {
            return Err(Error::dims("polytope dimension", a.cols(), dim));
        }
        Ok(Polytope {
            a,
            b,
            dim,
            nonneg: true,
        })
    }

    /// The probability simplex as `Σw ≥ 1, -Σw ≥ -1, w ≥ 0`.
    pub fn simplex(n: usize) -> Self {
        let a = Matrix::from_fn(2, n, |i, _| if i == 0 { 1.0 } else { -1.0 });
        Polytope::new(a, vec![1.0, -1.0]).expect("n ≥ 1")
    }

    /// The singleton `{point}` as paired inequalities.
    pub fn singleton(point: &[f64]) -> Self {
        let n = point.len();
        let a = Matrix::from_fn(2 * n, n, |i, j| {
            if i / 2 != j {
                0.0
            } else if i % 2 == 0 {
                1.0
            } else {
                -1.0
            }
        });
        let b = (0..2 * n)
            .map(|i| if i % 2 == 0 { point[i / 2] } else { -point[i / 2] })
            .collect();
        Polytope::new(a, b).expect("nonempty point")
    }

    /// Convex hull of `points`, lifted over barycentric weights `μ`:
    /// `w − Vμ ≥ 0`, `Vμ − w ≥ 0`, `Σμ ≥ 1`, `−Σμ ≥ −1`.
    pub fn convex_hull(points: &[Vec<f64>]) -> Result<Self> {
        let k = points.len();
        let n = points.first().ok_or(Error::EmptyInput)?.len();
        if let Some(p) = points.iter().find(|p| p.len() != n) {
            return Err(Error::dims("hull point", n, p.len()));
        }
        let mut a = Matrix::zeros(2 * n + 2, n + k);
        for s in 0..n {
            a[(s, s)] = 1.0;
            a[(n + s, s)] = -1.0;
            for (j, p) in points.iter().enumerate() {
                a[(s, n + j)] = -p[s];
                a[(n + s, n + j)] = p[s];
            }
        }
        for j in 0..k {
            a[(2 * n, n + j)] = 1.0;
            a[(2 * n + 1, n + j)] = -1.0;
        }
        let mut b = vec![0.0; 2 * n + 2];
        b[2 * n] = 1.0;
        b[2 * n + 1] = -1.0;
        Polytope::lifted(a, b, n)
    }

    pub fn num_rows(&self) -> usize {
        self.a.rows()
    }

    pub fn num_vars(&self) -> usize {
        self.a.cols()
    }

    /// Largest violation of `A x ≥ b` (and `x ≥ 0`) at a full variable vector.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        if self.nonneg {
            worst = x.iter().fold(worst, |m, &v| m.max(-v));
        }
        for i in 0..self.a.rows() {
            worst = worst.max(self.b[i] - dot(self.a.row(i), x));
        }
        worst
    }

    fn program(&self, c: &[f64]) -> LinearProgram {
        let mut obj = vec![0.0; self.num_vars()];
        obj[..self.dim].copy_from_slice(c);
        let mut lp = LinearProgram::minimize(obj);
        if !self.nonneg {
            (0..self.num_vars()).for_each(|j| lp.set_free(j));
        }
        for i in 0..self.a.rows() {
            lp.add_row(self.a.row(i).to_vec(), Relation::Ge, self.b[i]);
        }
        lp
    }

    /// Some feasible point (primary coordinates only).
    pub fn feasible_point(&self) -> Result<Vec<f64>> {
        let sol = self.program(&vec![0.0; self.dim]).solve()?;
        Ok(sol.x[..self.dim].to_vec())
    }
}

/// Budget-of-uncertainty set around a nominal probability vector:
/// `{ w ≥ 0, Σw = 1, ‖w − w_nom‖∞ ≤ tau, ‖w − w_nom‖₁ ≤ gamma }`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetSet {
    pub w_nom: Vec<f64>,
    pub tau: f64,
    pub gamma: f64,
}

impl BudgetSet {
    pub fn new(w_nom: Vec<f64>, tau: f64, gamma: f64) -> Result<Self> {
        if w_nom.is_empty() {
            return Err(Error::EmptyInput);
        }
        if w_nom.iter().any(|&x| !(x >= 0.0)) {
            return Err(Error::invalid("w_nom", "entries must be non-negative"));
        }
        let sum: f64 = w_nom.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::NotStochastic {
                what: "w_nom".into(),
                detail: format!("sums to {sum}"),
            });
        }
        if !(0.0..=1.0).contains(&tau) {
            return Err(Error::invalid("tau", format!("{tau} not in [0, 1]")));
        }
        if !(gamma >= 0.0) {
            return Err(Error::invalid("gamma", format!("{gamma} is negative")));
        }
        Ok(BudgetSet { w_nom, tau, gamma })
    }

    pub fn dim(&self) -> usize {
        self.w_nom.len()
    }

    pub fn contains(&self, w: &[f64], tol: f64) -> bool {
        if w.len() != self.dim() || w.iter().any(|&x| x < -tol) {
            return false;
        }
        if (w.iter().sum::<f64>() - 1.0).abs() > tol {
            return false;
        }
        let mut l1 = 0.0;
        for (x, y) in w.iter().zip(&self.w_nom) {
            let d = (x - y).abs();
            if d > self.tau + tol {
                return false;
            }
            l1 += d;
        }
        l1 <= self.gamma + tol
    }

    /// Lifted polytope over `(w, t)` with `t ≥ |w − w_nom|`.
    ///
    /// Row layout (all rows read `row · (w, t) ≥ b`):
    /// - `0`: `Σw ≥ 1`; `1`: `−Σw ≥ −1`
    /// - `2 + j`: `t_j − w_j ≥ −w_nom_j`
    /// - `2 + S + j`: `t_j + w_j ≥ w_nom_j`
    /// - `2 + 2S + j`: `−t_j ≥ −tau`
    /// - `2 + 3S`: `−Σt ≥ −gamma`
    pub fn to_polytope(&self) -> Polytope {
        let s = self.dim();
        let m = 3 * s + 3;
        let mut a = Matrix::zeros(m, 2 * s);
        let mut b = vec![0.0; m];
        for j in 0..s {
            a[(0, j)] = 1.0;
            a[(1, j)] = -1.0;
            a[(2 + j, s + j)] = 1.0;
            a[(2 + j, j)] = -1.0;
            b[2 + j] = -self.w_nom[j];
            a[(2 + s + j, s + j)] = 1.0;
            a[(2 + s + j, j)] = 1.0;
            b[2 + s + j] = self.w_nom[j];
            a[(2 + 2 * s + j, s + j)] = -1.0;
            b[2 + 2 * s + j] = -self.tau;
            a[(2 + 3 * s, s + j)] = -1.0;
        }
        b[0] = 1.0;
        b[1] = -1.0;
        b[2 + 3 * s] = -self.gamma;
        Polytope::lifted(a, b, s).expect("well-formed budget polytope")
    }
}

/// `min cᵀw` over a polytope; returns a vertex-optimal primary point and its value.
pub fn lp_minimize(c: &[f64], set: &Polytope) -> Result<(Vec<f64>, f64)> {
    if c.len() != set.dim {
        return Err(Error::dims("objective", set.dim, c.len()));
    }
    let sol = set.program(c).solve()?;
    let w = sol.x[..set.dim].to_vec();
    let value = dot(c, &w);
    Ok((w, value))
}

/// `min cᵀw` over a budget set by greedy mass transfer.
///
/// Mass moves from the most expensive donor coordinate to the cheapest
/// receiver while the cost gap is positive. Each unit moved spends two
/// units of the ℓ₁ budget, so at most `gamma / 2` moves in total; donors
/// give at most `min(tau, w_nom_j)` and receivers take at most
/// `min(tau, 1 − w_nom_j)`. The marginal gain is non-increasing in the
/// moved mass, which makes the greedy transfer optimal.
pub fn budget_min_oracle(c: &[f64], set: &BudgetSet) -> Result<(Vec<f64>, f64)> {
    let n = set.dim();
    if c.len() != n {
        return Err(Error::dims("objective", n, c.len()));
    }
    let mut w = set.w_nom.clone();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| c[i].total_cmp(&c[j]).then(i.cmp(&j)));

    let mut give: Vec<f64> = set.w_nom.iter().map(|&x| x.min(set.tau)).collect();
    let mut take: Vec<f64> = set.w_nom.iter().map(|&x| (1.0 - x).min(set.tau)).collect();
    let mut budget = 0.5 * set.gamma;
    let (mut lo, mut hi) = (0usize, n.saturating_sub(1));
    while lo < hi && budget > 0.0 {
        let (recv, donor) = (order[lo], order[hi]);
        if c[donor] <= c[recv] {
            break;
        }
        let amount = give[donor].min(take[recv]).min(budget);
        if amount > 0.0 {
            w[donor] -= amount;
            w[recv] += amount;
            give[donor] -= amount;
            take[recv] -= amount;
            budget -= amount;
        }
        if give[donor] <= 0.0 {
            hi -= 1;
        }
        if take[recv] <= 0.0 {
            lo += 1;
        }
    }
    for x in w.iter_mut() {
        if *x < 0.0 {
            *x = 0.0;
        }
    }
    let value = dot(c, &w);
    Ok((w, value))
}
