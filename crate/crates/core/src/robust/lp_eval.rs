use serde::Serialize;

use super::RobustProblem;
use crate::error::Result;
use crate::mdp::{build_t_pi, Policy};
use crate::numerics::{dot, LinearProgram, Relation};

/// Dual multipliers of the per-factor inner problems at the optimum of the
/// single-LP evaluation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DualCertificate {
    pub alphas: Vec<Vec<f64>>,
    /// `b_iᵀ α_i` per factor; equals the adversary's values at optimality.
    pub betas: Vec<f64>,
    pub objective: f64,
}

/// Worst-case reward of `pi` as one linear program over the dual
/// multipliers `α_l ≥ 0` of every factor set (in polytope form):
///
/// `max p0ᵀ(r_π + λ T_π (b_iᵀα_i)_i)` s.t.
/// `A_lᵀ α_l ≤ r_π + λ T_π (b_iᵀα_i)_i` on primary columns and
/// `A_lᵀ α_l ≤ 0` on lifting columns, for every `l`.
pub fn evaluate_worst_case_lp(problem: &RobustProblem<'_>, pi: &Policy) -> Result<(f64, DualCertificate)> {
    let inst = problem.inst;
    let r_pi = inst.policy_rewards(pi)?;
    let t_pi = build_t_pi(problem.fm, pi)?;
    let lambda = inst.discount();
    let s_count = inst.states();
    let polys: Vec<_> = problem.fu.sets.iter().map(|s| s.to_polytope()).collect();

    let offsets: Vec<usize> = polys
        .iter()
        .scan(0, |acc, p| {
            let start = *acc;
            *acc += p.num_rows();
            Some(start)
        })
        .collect();
    let n_vars: usize = polys.iter().map(|p| p.num_rows()).sum();

    // Weight of β_i in the objective: (p0ᵀ T_π)_i.
    let weight = t_pi.tr_mul_vec(inst.p0());
    let mut objective = vec![0.0; n_vars];
    for (i, p) in polys.iter().enumerate() {
        for k in 0..p.num_rows() {
            objective[offsets[i] + k] = -lambda * weight[i] * p.b[k];
        }
    }
    let mut lp = LinearProgram::minimize(objective);

    for (l, p) in polys.iter().enumerate() {
        let rel = if p.nonneg { Relation::Le } else { Relation::Eq };
        for j in 0..p.num_vars() {
            let mut coefs = vec![0.0; n_vars];
            for k in 0..p.num_rows() {
                coefs[offsets[l] + k] += p.a[(k, j)];
            }
            let rhs = if j < s_count {
                for (i, q) in polys.iter().enumerate() {
                    let tsi = t_pi[(j, i)];
                    if tsi == 0.0 {
                        continue;
                    }
                    for k in 0..q.num_rows() {
                        coefs[offsets[i] + k] -= lambda * tsi * q.b[k];
                    }
                }
                r_pi[j]
            } else {
                0.0
            };
            lp.add_row(coefs, rel, rhs);
        }
    }

    let sol = lp.solve()?;
    let alphas: Vec<Vec<f64>> = polys
        .iter()
        .enumerate()
        .map(|(i, p)| sol.x[offsets[i]..offsets[i] + p.num_rows()].to_vec())
        .collect();
    let betas: Vec<f64> = polys.iter().zip(&alphas).map(|(p, a)| dot(&p.b, a)).collect();
    let z = dot(inst.p0(), &r_pi) + lambda * dot(&weight, &betas);
    Ok((
        z,
        DualCertificate {
            alphas,
            betas,
            objective: z,
        },
    ))
}

impl DualCertificate {
    /// Largest violation of `A_lᵀα_l ≤ r_π + λ T_π β` (or `≤ 0` on lifting
    /// columns) over all `l`, with `β = b_iᵀα_i`, plus any negative multiplier.
    pub fn constraint_violation(&self, problem: &RobustProblem<'_>, pi: &Policy) -> Result<f64> {
        let r_pi = problem.inst.policy_rewards(pi)?;
        let t_pi = build_t_pi(problem.fm, pi)?;
        let lambda = problem.inst.discount();
        let bound: Vec<f64> = t_pi
            .mul_vec(&self.betas)
            .iter()
            .zip(&r_pi)
            .map(|(tb, r)| r + lambda * tb)
            .collect();
        let mut worst = self.alphas.iter().flatten().fold(0.0_f64, |m, &x| m.max(-x));
        for (set, alpha) in problem.fu.sets.iter().zip(&self.alphas) {
            let p = set.to_polytope();
            let lhs = p.a.tr_mul_vec(alpha);
            for (j, &x) in lhs.iter().enumerate() {
                let rhs = if j < bound.len() { bound[j] } else { 0.0 };
                let excess = if p.nonneg { x - rhs } else { (x - rhs).abs() };
                worst = worst.max(excess);
            }
        }
        Ok(worst)
    }
}
