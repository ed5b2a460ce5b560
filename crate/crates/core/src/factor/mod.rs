//! Factor-matrix uncertainty: coefficient models, per-factor feasible sets,
//! kernel assembly and set builders.
//!
//! A kernel in the model has rows `P_sa = Σ_i u^i_sa w_i` where the factor
//! columns `w_i` are probability vectors chosen independently from their own
//! sets `𝒲^i`.

mod nmf;

pub use nmf::{factorize_with_absorbing, nmf_factorize, NmfOptions, NmfResult, Residuals};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{check_distribution, TransitionKernel};
use crate::numerics::{budget_min_oracle, lp_minimize, BudgetSet, LinearProgram, Matrix, Polytope, Relation};

const COEF_TOL: f64 = 1e-10;
/// Tolerance on factor column normalisation accepted by [`assemble_kernel`].
pub const FACTOR_SUM_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct FactorModel {
    states: usize,
    actions: usize,
    rank: usize,
    /// `u[s][i][a]`, flat.
    u: Vec<f64>,
    w_nom: Matrix,
}

impl FactorModel {
    /// `u` is indexed `[s][i][a]`; `w_nom` is `S × r` with stochastic columns.
    pub fn new(u: &[Vec<Vec<f64>>], w_nom: Matrix) -> Result<Self> {
        let states = u.len();
        if states == 0 {
            return Err(Error::EmptyInput);
        }
        let rank = u[0].len();
        let actions = u[0].first().map_or(0, Vec::len);
        if rank == 0 || actions == 0 {
            return Err(Error::EmptyInput);
        }
        let mut flat = Vec::with_capacity(states * rank * actions);
        for block in u {
            if block.len() != rank {
                return Err(Error::dims("coefficient factors", rank, block.len()));
            }
            for row in block {
                if row.len() != actions {
                    return Err(Error::dims("coefficient actions", actions, row.len()));
                }
                flat.extend_from_slice(row);
            }
        }
        FactorModel::from_flat(states, actions, rank, flat, w_nom)
    }

    pub(crate) fn from_flat(states: usize, actions: usize, rank: usize, u: Vec<f64>, w_nom: Matrix) -> Result<Self> {
        if w_nom.rows() != states {
            return Err(Error::dims("W_nom rows", states, w_nom.rows()));
        }
        if w_nom.cols() != rank {
            return Err(Error::dims("W_nom columns", rank, w_nom.cols()));
        }
        let fm = FactorModel {
            states,
            actions,
            rank,
            u,
            w_nom,
        };
        fm.validate()?;
        Ok(fm)
    }

    fn validate(&self) -> Result<()> {
        if self.u.iter().any(|&x| !(x >= 0.0)) {
            return Err(Error::invalid("U", "coefficients must be non-negative"));
        }
        for s in 0..self.states {
            for a in 0..self.actions {
                let sum: f64 = (0..self.rank).map(|i| self.coef(s, i, a)).sum();
                if (sum - 1.0).abs() > COEF_TOL {
                    return Err(Error::NotStochastic {
                        what: format!("U coefficients at ({s}, {a})"),
                        detail: format!("sum to {sum}"),
                    });
                }
            }
        }
        check_factor_columns("W_nom", &self.w_nom, COEF_TOL)
    }

    pub fn states(&self) -> usize {
        self.states
    }

    pub fn actions(&self) -> usize {
        self.actions
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn coef(&self, s: usize, i: usize, a: usize) -> f64 {
        self.u[(s * self.rank + i) * self.actions + a]
    }

    /// Coefficient column `(u^i_sa)_i` for one state-action pair.
    pub fn coefs(&self, s: usize, a: usize) -> Vec<f64> {
        (0..self.rank).map(|i| self.coef(s, i, a)).collect()
    }

    pub fn w_nom(&self) -> &Matrix {
        &self.w_nom
    }

    /// `u` as nested `[s][i][a]` arrays.
    pub fn u_nested(&self) -> Vec<Vec<Vec<f64>>> {
        (0..self.states)
            .map(|s| {
                (0..self.rank)
                    .map(|i| (0..self.actions).map(|a| self.coef(s, i, a)).collect())
                    .collect()
            })
            .collect()
    }

    pub fn nominal_kernel(&self) -> Result<TransitionKernel> {
        assemble_kernel(self, &self.w_nom)
    }
}

fn check_factor_columns(what: &str, w: &Matrix, tol: f64) -> Result<()> {
    for i in 0..w.cols() {
        check_distribution(&format!("{what} column {i}"), &w.column(i), tol)?;
    }
    Ok(())
}

/// `P_sa = Σ_i u^i_sa w_i`.
pub fn assemble_kernel(fm: &FactorModel, w: &Matrix) -> Result<TransitionKernel> {
    if w.rows() != fm.states() {
        return Err(Error::dims("W rows", fm.states(), w.rows()));
    }
    if w.cols() != fm.rank() {
        return Err(Error::dims("W columns", fm.rank(), w.cols()));
    }
    check_factor_columns("W", w, FACTOR_SUM_TOL)?;
    let (n, na) = (fm.states(), fm.actions());
    let mut data = vec![0.0; n * na * n];
    for s in 0..n {
        for a in 0..na {
            let row = &mut data[(s * na + a) * n..(s * na + a + 1) * n];
            for i in 0..fm.rank() {
                let c = fm.coef(s, i, a);
                if c == 0.0 {
                    continue;
                }
                for (t, dst) in row.iter_mut().enumerate() {
                    *dst += c * w[(t, i)];
                }
            }
        }
    }
    TransitionKernel::new_unchecked(n, na, data)
}

/// Feasible set of a single factor column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum FactorSet {
    Budget(BudgetSet),
    Polytope(Polytope),
    Singleton { point: Vec<f64> },
}

impl FactorSet {
    pub fn dim(&self) -> usize {
        match self {
            FactorSet::Budget(b) => b.dim(),
            FactorSet::Polytope(p) => p.dim,
            FactorSet::Singleton { point } => point.len(),
        }
    }

    /// `argmin_{w ∈ set} cᵀw` and its value.
    pub fn minimize(&self, c: &[f64]) -> Result<(Vec<f64>, f64)> {
        match self {
            FactorSet::Budget(b) => budget_min_oracle(c, b),
            FactorSet::Polytope(p) => lp_minimize(c, p),
            FactorSet::Singleton { point } => {
                if c.len() != point.len() {
                    return Err(Error::dims("objective", point.len(), c.len()));
                }
                Ok((point.clone(), crate::numerics::dot(c, point)))
            }
        }
    }

    pub fn to_polytope(&self) -> Polytope {
        match self {
            FactorSet::Budget(b) => b.to_polytope(),
            FactorSet::Polytope(p) => p.clone(),
            FactorSet::Singleton { point } => Polytope::singleton(point),
        }
    }

    /// A member of the set: the nominal centre where one exists.
    pub fn reference_point(&self) -> Result<Vec<f64>> {
        match self {
            FactorSet::Budget(b) => Ok(b.w_nom.clone()),
            FactorSet::Polytope(p) => p.feasible_point(),
            FactorSet::Singleton { point } => Ok(point.clone()),
        }
    }

    pub fn contains(&self, w: &[f64], tol: f64) -> bool {
        match self {
            FactorSet::Budget(b) => b.contains(w, tol),
            FactorSet::Singleton { point } => {
                w.len() == point.len() && crate::numerics::norm_inf_diff(w, point) <= tol
            }
            FactorSet::Polytope(p) => {
                if w.len() != p.dim {
                    return false;
                }
                // Fix the primary coordinates and ask the LP for auxiliary values.
                let mut lp = LinearProgram::minimize(vec![0.0; p.num_vars()]);
                if !p.nonneg {
                    (0..p.num_vars()).for_each(|j| lp.set_free(j));
                }
                for i in 0..p.num_rows() {
                    let row = p.a.row(i);
                    let fixed: f64 = row[..p.dim].iter().zip(w).map(|(a, x)| a * x).sum();
                    let mut coefs = vec![0.0; p.num_vars()];
                    coefs[p.dim..].copy_from_slice(&row[p.dim..]);
                    lp.add_row(coefs, Relation::Ge, p.b[i] - fixed - tol);
                }
                for j in 0..p.dim {
                    let mut coefs = vec![0.0; p.num_vars()];
                    coefs[j] = 1.0;
                    lp.add_row(coefs, Relation::Eq, w[j]);
                }
                let sign_ok = !p.nonneg || w.iter().all(|&x| x >= -tol);
                sign_ok && lp.solve().is_ok()
            }
        }
    }
}

/// Cartesian product `𝒲¹ × … × 𝒲^r` of per-factor sets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorUncertainty {
    pub sets: Vec<FactorSet>,
}

impl FactorUncertainty {
    pub fn new(sets: Vec<FactorSet>) -> Result<Self> {
        if sets.is_empty() {
            return Err(Error::EmptyInput);
        }
        let dim = sets[0].dim();
        if let Some(bad) = sets.iter().find(|s| s.dim() != dim) {
            return Err(Error::dims("factor set dimension", dim, bad.dim()));
        }
        Ok(FactorUncertainty { sets })
    }

    pub fn rank(&self) -> usize {
        self.sets.len()
    }

    pub fn dim(&self) -> usize {
        self.sets[0].dim()
    }

    pub fn check_against(&self, fm: &FactorModel) -> Result<()> {
        if self.rank() != fm.rank() {
            return Err(Error::dims("factor sets", fm.rank(), self.rank()));
        }
        if self.dim() != fm.states() {
            return Err(Error::dims("factor set dimension", fm.states(), self.dim()));
        }
        Ok(())
    }

    pub fn contains(&self, w: &Matrix, tol: f64) -> bool {
        w.cols() == self.rank() && self.sets.iter().enumerate().all(|(i, set)| set.contains(&w.column(i), tol))
    }

    /// Per-factor minimisers of `w_iᵀ c`, stacked as columns, and the values.
    pub fn minimize_all(&self, c: &[f64]) -> Result<(Matrix, Vec<f64>)> {
        let mut w = Matrix::zeros(self.dim(), self.rank());
        let mut values = Vec::with_capacity(self.rank());
        for (i, set) in self.sets.iter().enumerate() {
            let (wi, v) = set.minimize(c)?;
            w.set_column(i, &wi);
            values.push(v);
        }
        Ok((w, values))
    }

    /// Whether every set is a single point.
    pub fn is_pinned(&self) -> bool {
        self.sets.iter().all(|s| match s {
            FactorSet::Singleton { .. } => true,
            FactorSet::Budget(b) => b.tau == 0.0 || b.gamma == 0.0,
            FactorSet::Polytope(_) => false,
        })
    }
}

/// Budget sets around each nominal factor with `gamma = c·√S·tau`.
pub fn build_budget_uncertainty(w_nom: &Matrix, tau: f64, c: f64) -> Result<FactorUncertainty> {
    if !(tau >= 0.0) {
        return Err(Error::invalid("tau", "must be non-negative"));
    }
    if !(c >= 0.0) {
        return Err(Error::invalid("c", "must be non-negative"));
    }
    let gamma = c * (w_nom.rows() as f64).sqrt() * tau;
    let sets = (0..w_nom.cols())
        .map(|i| BudgetSet::new(w_nom.column(i), tau.min(1.0), gamma).map(FactorSet::Budget))
        .collect::<Result<Vec<_>>>()?;
    FactorUncertainty::new(sets)
}

/// Replaces `𝒲^index` with the singleton `{point}`.
pub fn pin_factor(fu: &FactorUncertainty, index: usize, point: &[f64]) -> Result<FactorUncertainty> {
    if index >= fu.rank() {
        return Err(Error::IndexOutOfRange {
            index,
            len: fu.rank(),
        });
    }
    if point.len() != fu.dim() {
        return Err(Error::dims("pinned point", fu.dim(), point.len()));
    }
    check_distribution("pinned point", point, FACTOR_SUM_TOL)?;
    let mut sets = fu.sets.clone();
    sets[index] = FactorSet::Singleton {
        point: point.to_vec(),
    };
    Ok(FactorUncertainty { sets })
}

/// Embeds one set per `(s, a)` pair (indexed `s·A + a`) as a factor model
/// with `r = S·A` and unit-selection coefficients.
pub fn embed_sa_rectangular(
    states: usize,
    actions: usize,
    per_pair_sets: Vec<FactorSet>,
) -> Result<(FactorModel, FactorUncertainty)> {
    let r = states * actions;
    if per_pair_sets.len() != r {
        return Err(Error::dims("per-pair sets", r, per_pair_sets.len()));
    }
    let mut w_nom = Matrix::zeros(states, r);
    for (i, set) in per_pair_sets.iter().enumerate() {
        if set.dim() != states {
            return Err(Error::dims("per-pair set dimension", states, set.dim()));
        }
        w_nom.set_column(i, &set.reference_point()?);
    }
    let mut u = vec![0.0; states * r * actions];
    for s in 0..states {
        for a in 0..actions {
            let i = s * actions + a;
            u[(s * r + i) * actions + a] = 1.0;
        }
    }
    let fm = FactorModel::from_flat(states, actions, r, u, w_nom)?;
    Ok((fm, FactorUncertainty::new(per_pair_sets)?))
}
