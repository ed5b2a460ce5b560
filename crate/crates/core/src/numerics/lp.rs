//! Dense two-phase primal simplex with Bland's anti-cycling rule.

use crate::error::{Error, Result};

pub const FEAS_TOL: f64 = 1e-9;
pub const OPT_TOL: f64 = 1e-9;
const PIVOT_EPS: f64 = 1e-11;
const MAX_PIVOTS: usize = 200_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone)]
struct Row {
    coefs: Vec<f64>,
    rel: Relation,
    rhs: f64,
}

/// `minimize cᵀx` subject to linear rows; each variable is either `≥ 0` or free.
#[derive(Debug, Clone)]
pub struct LinearProgram {
    objective: Vec<f64>,
    free: Vec<bool>,
    rows: Vec<Row>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub value: f64,
    pub pivots: usize,
}

impl LinearProgram {
    /// All variables non-negative by default.
    pub fn minimize(objective: Vec<f64>) -> Self {
        let n = objective.len();
        LinearProgram {
            objective,
            free: vec![false; n],
            rows: Vec::new(),
        }
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn set_free(&mut self, var: usize) {
        self.free[var] = true;
    }

    pub fn add_row(&mut self, coefs: Vec<f64>, rel: Relation, rhs: f64) {
        assert_eq!(coefs.len(), self.num_vars(), "row length mismatch");
        self.rows.push(Row { coefs, rel, rhs });
    }

    /// Largest constraint violation of `x` (including sign constraints).
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for (j, &xj) in x.iter().enumerate() {
            if !self.free[j] {
                worst = worst.max(-xj);
            }
        }
        for row in &self.rows {
            let lhs: f64 = row.coefs.iter().zip(x).map(|(a, b)| a * b).sum();
            let v = match row.rel {
                Relation::Le => lhs - row.rhs,
                Relation::Ge => row.rhs - lhs,
                Relation::Eq => (lhs - row.rhs).abs(),
            };
            worst = worst.max(v);
        }
        worst
    }

    pub fn solve(&self) -> Result<LpSolution> {
        let n = self.num_vars();
        // Column map: original variable -> (positive column, optional negative column).
        let mut col_of = Vec::with_capacity(n);
        let mut ncols = 0;
        for j in 0..n {
            if self.free[j] {
                col_of.push((ncols, Some(ncols + 1)));
                ncols += 2;
            } else {
                col_of.push((ncols, None));
                ncols += 1;
            }
        }
        let n_struct = ncols;
        let m = self.rows.len();

        // Normalise to non-negative right-hand sides.
        let mut rows: Vec<(Vec<f64>, Relation, f64)> = Vec::with_capacity(m);
        for row in &self.rows {
            let mut coefs = vec![0.0; n_struct];
            for (j, &a) in row.coefs.iter().enumerate() {
                let (p, neg) = col_of[j];
                coefs[p] = a;
                if let Some(q) = neg {
                    coefs[q] = -a;
                }
            }
            let (mut rel, mut rhs) = (row.rel, row.rhs);
            if rhs < 0.0 {
                coefs.iter_mut().for_each(|c| *c = -*c);
                rhs = -rhs;
                rel = match rel {
                    Relation::Le => Relation::Ge,
                    Relation::Ge => Relation::Le,
                    Relation::Eq => Relation::Eq,
                };
            }
            rows.push((coefs, rel, rhs));
        }

        let n_slack = rows.iter().filter(|r| r.1 != Relation::Eq).count();
        let n_art = rows.iter().filter(|r| r.1 != Relation::Le).count();
        let total = n_struct + n_slack + n_art;
        let art_start = n_struct + n_slack;

        let mut t = Tableau::new(m, total);
        let mut slack = n_struct;
        let mut art = art_start;
        for (i, (coefs, rel, rhs)) in rows.iter().enumerate() {
            t.a[i][..n_struct].copy_from_slice(coefs);
            t.a[i][total] = *rhs;
            match rel {
                Relation::Le => {
                    t.a[i][slack] = 1.0;
                    t.basis[i] = slack;
                    slack += 1;
                }
                Relation::Ge => {
                    t.a[i][slack] = -1.0;
                    slack += 1;
                    t.a[i][art] = 1.0;
                    t.basis[i] = art;
                    art += 1;
                }
                Relation::Eq => {
                    t.a[i][art] = 1.0;
                    t.basis[i] = art;
                    art += 1;
                }
            }
        }

        let scale = 1.0 + rows.iter().fold(0.0f64, |s, r| s.max(r.2));
        if n_art > 0 {
            let mut phase1 = vec![0.0; total];
            phase1[art_start..].iter_mut().for_each(|c| *c = 1.0);
            t.set_objective(&phase1);
            t.run(total)?;
            if t.objective_value() > FEAS_TOL * scale {
                return Err(Error::Infeasible);
            }
            t.drive_out_artificials(art_start);
        }

        let mut phase2 = vec![0.0; total];
        for (j, &(p, neg)) in col_of.iter().enumerate() {
            phase2[p] = self.objective[j];
            if let Some(q) = neg {
                phase2[q] = -self.objective[j];
            }
        }
        t.set_objective(&phase2);
        t.run(art_start)?;

        let mut xs = vec![0.0; total];
        for (i, &b) in t.basis.iter().enumerate() {
            xs[b] = t.a[i][total];
        }
        let x: Vec<f64> = col_of
            .iter()
            .map(|&(p, neg)| match neg {
                Some(q) => xs[p] - xs[q],
                None => xs[p].max(0.0),
            })
            .collect();
        let value = self.objective.iter().zip(&x).map(|(c, v)| c * v).sum();
        Ok(LpSolution {
            x,
            value,
            pivots: t.pivots,
        })
    }
}

/// Row-major tableau; the last column holds the right-hand side and the
/// extra row holds reduced costs (objective row).
struct Tableau {
    a: Vec<Vec<f64>>,
    obj: Vec<f64>,
    basis: Vec<usize>,
    width: usize,
    pivots: usize,
}

impl Tableau {
    fn new(m: usize, total: usize) -> Self {
        Tableau {
            a: vec![vec![0.0; total + 1]; m],
            obj: vec![0.0; total + 1],
            basis: vec![0; m],
            width: total,
            pivots: 0,
        }
    }

    /// Installs cost vector `c` and prices out the current basis.
    fn set_objective(&mut self, c: &[f64]) {
        self.obj[..self.width].copy_from_slice(c);
        self.obj[self.width] = 0.0;
        for (i, &b) in self.basis.iter().enumerate() {
            let cb = self.obj[b];
            if cb != 0.0 {
                for (o, &v) in self.obj.iter_mut().zip(&self.a[i]) {
                    *o -= cb * v;
                }
            }
        }
    }

    fn objective_value(&self) -> f64 {
        -self.obj[self.width]
    }

    /// Runs Bland's rule; only columns `< allowed` may enter.
    fn run(&mut self, allowed: usize) -> Result<()> {
        loop {
            let Some(enter) = (0..allowed).find(|&j| self.obj[j] < -OPT_TOL) else {
                return Ok(());
            };
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..self.a.len() {
                let aij = self.a[i][enter];
                if aij <= PIVOT_EPS {
                    continue;
                }
                let ratio = self.a[i][self.width] / aij;
                leave = match leave {
                    None => Some((i, ratio)),
                    Some((l, best)) => {
                        if ratio < best - 1e-12
                            || (ratio <= best + 1e-12 && self.basis[i] < self.basis[l])
                        {
                            Some((i, ratio))
                        } else {
                            Some((l, best))
                        }
                    }
                };
            }
            let Some((row, _)) = leave else {
                return Err(Error::Unbounded);
            };
            self.pivot(row, enter);
            if self.pivots > MAX_PIVOTS {
                return Err(Error::NoConvergence(MAX_PIVOTS));
            }
        }
    }

    fn pivot(&mut self, row: usize, col: usize) {
        self.pivots += 1;
        let p = self.a[row][col];
        for v in self.a[row].iter_mut() {
            *v /= p;
        }
        let pivot_row = self.a[row].clone();
        for (i, r) in self.a.iter_mut().enumerate() {
            if i == row {
                continue;
            }
            let f = r[col];
            if f != 0.0 {
                for (v, &pv) in r.iter_mut().zip(&pivot_row) {
                    *v -= f * pv;
                }
                r[col] = 0.0;
            }
        }
        let f = self.obj[col];
        if f != 0.0 {
            for (v, &pv) in self.obj.iter_mut().zip(&pivot_row) {
                *v -= f * pv;
            }
            self.obj[col] = 0.0;
        }
        self.basis[row] = col;
    }

    /// Pivots zero-level artificial variables out of the basis where possible.
    fn drive_out_artificials(&mut self, art_start: usize) {
        for i in 0..self.a.len() {
            if self.basis[i] < art_start {
                continue;
            }
            if let Some(j) = (0..art_start).find(|&j| self.a[i][j].abs() > 1e-9) {
                self.pivot(i, j);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn textbook_maximisation() {
        // max 3x + 5y, x ≤ 4, 2y ≤ 12, 3x + 2y ≤ 18 → (2, 6), 36.
        let mut lp = LinearProgram::minimize(vec![-3.0, -5.0]);
        lp.add_row(vec![1.0, 0.0], Relation::Le, 4.0);
        lp.add_row(vec![0.0, 2.0], Relation::Le, 12.0);
        lp.add_row(vec![3.0, 2.0], Relation::Le, 18.0);
        let sol = lp.solve().unwrap();
        assert_abs_diff_eq!(sol.value, -36.0, epsilon = 1e-12);
        assert_abs_diff_eq!(sol.x[0], 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(sol.x[1], 6.0, epsilon = 1e-12);
    }

    #[test]
    fn equality_and_free_variables() {
        // min x - y, x + y = 1, y ≤ 3, x free → x = -2, y = 3.
        let mut lp = LinearProgram::minimize(vec![1.0, -1.0]);
        lp.set_free(0);
        lp.add_row(vec![1.0, 1.0], Relation::Eq, 1.0);
        lp.add_row(vec![0.0, 1.0], Relation::Le, 3.0);
        let sol = lp.solve().unwrap();
        assert_abs_diff_eq!(sol.x[0], -2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(sol.value, -5.0, epsilon = 1e-12);
        assert!(lp.max_violation(&sol.x) <= 1e-12);
    }

    #[test]
    fn detects_infeasible_and_unbounded() {
        let mut lp = LinearProgram::minimize(vec![1.0]);
        lp.add_row(vec![1.0], Relation::Ge, 2.0);
        lp.add_row(vec![1.0], Relation::Le, 1.0);
        assert_eq!(lp.solve(), Err(Error::Infeasible));

        let mut lp = LinearProgram::minimize(vec![-1.0, 0.0]);
        lp.add_row(vec![1.0, -1.0], Relation::Le, 1.0);
        assert_eq!(lp.solve(), Err(Error::Unbounded));
    }

    #[test]
    fn degenerate_problem_terminates() {
        // Beale's cycling example; Bland's rule must terminate.
        let mut lp = LinearProgram::minimize(vec![-0.75, 150.0, -0.02, 6.0]);
        lp.add_row(vec![0.25, -60.0, -0.04, 9.0], Relation::Le, 0.0);
        lp.add_row(vec![0.5, -90.0, -0.02, 3.0], Relation::Le, 0.0);
        lp.add_row(vec![0.0, 0.0, 1.0, 0.0], Relation::Le, 1.0);
        let sol = lp.solve().unwrap();
        assert_abs_diff_eq!(sol.value, -0.05, epsilon = 1e-12);
    }

    #[test]
    fn redundant_equalities() {
        let mut lp = LinearProgram::minimize(vec![1.0, 2.0]);
        lp.add_row(vec![1.0, 1.0], Relation::Eq, 1.0);
        lp.add_row(vec![2.0, 2.0], Relation::Eq, 2.0);
        let sol = lp.solve().unwrap();
        assert_abs_diff_eq!(sol.value, 1.0, epsilon = 1e-12);
    }
}
