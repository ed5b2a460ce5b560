//! Executable checks of the structural results: min-max duality, the
//! `Wᵀv = β` identity, the robust maximum principle and discount stability.

use rayon::prelude::*;
use serde::Serialize;

use super::{RobustProblem, RobustSolveReport, Variant};
use crate::error::Result;
use crate::factor::{assemble_kernel, FactorModel, FactorUncertainty};
use crate::mdp::{bellman_optimality, MdpInstance, Policy};
use crate::numerics::{dot, norm_inf_diff, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DualityCheck {
    /// `|p0ᵀv − z(π*)|`.
    pub gap: f64,
    /// Larger of `‖v − B*_{P*} v‖∞` and `‖v − B^{π*}_{P*} v‖∞` at `P* = assemble(W*)`.
    pub bellman_residual: f64,
    /// `‖W*ᵀv − β‖∞`.
    pub eval_residual: f64,
}

impl DualityCheck {
    pub fn max_residual(&self) -> f64 {
        self.gap.max(self.bellman_residual).max(self.eval_residual)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MaxPrincipleCheck {
    pub holds: bool,
    /// Smallest `v*_s − v^π_s` over all candidates and states.
    pub min_slack: f64,
    pub slacks: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlackwellEntry {
    pub discount: f64,
    pub policy: Policy,
    pub w_star: Matrix,
    pub signature: Vec<Vec<i64>>,
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlackwellScan {
    pub entries: Vec<BlackwellEntry>,
    /// Earliest grid index from which `(policy, signature)` never changes.
    pub threshold_index: usize,
    pub stable_pair: (Policy, Matrix),
}

pub fn verify_duality(problem: &RobustProblem<'_>, report: &RobustSolveReport, eps: f64) -> Result<DualityCheck> {
    let worst = problem.evaluate_worst_case(&report.policy, eps)?;
    let gap = (report.objective - worst.z).abs();

    let p_star = assemble_kernel(problem.fm, &report.w_star)?;
    let (opt, _) = bellman_optimality(problem.inst, &p_star, &report.v);
    let r_pi = problem.inst.policy_rewards(&report.policy)?;
    let lambda = problem.discount();
    let on_policy: Vec<f64> = (0..problem.inst.states())
        .map(|s| {
            let cont: f64 = (0..problem.inst.actions())
                .map(|a| report.policy.row(s)[a] * dot(p_star.row(s, a), &report.v))
                .sum();
            r_pi[s] + lambda * cont
        })
        .collect();
    let bellman_residual = norm_inf_diff(&report.v, &opt).max(norm_inf_diff(&report.v, &on_policy));

    let eval_residual = norm_inf_diff(&report.w_star.tr_mul_vec(&report.v), &report.beta);
    Ok(DualityCheck {
        gap,
        bellman_residual,
        eval_residual,
    })
}

/// Compares the worst-case value vector of every candidate with the
/// report's value vector; holds iff no state falls short by more than `10·eps`.
pub fn check_max_principle(
    problem: &RobustProblem<'_>,
    candidates: &[Policy],
    report: &RobustSolveReport,
    eps: f64,
) -> Result<MaxPrincipleCheck> {
    let slacks = candidates
        .iter()
        .map(|pi| {
            let worst = problem.evaluate_worst_case(pi, eps)?;
            Ok(report
                .v
                .iter()
                .zip(&worst.value)
                .map(|(a, b)| a - b)
                .fold(f64::INFINITY, f64::min))
        })
        .collect::<Result<Vec<f64>>>()?;
    let min_slack = slacks.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(MaxPrincipleCheck {
        holds: min_slack >= -10.0 * eps,
        min_slack,
        slacks,
    })
}

/// `W*` entries as integer multiples of `1e-8`, for exact comparison.
pub fn vertex_signature(w: &Matrix) -> Vec<Vec<i64>> {
    w.to_rows()
        .into_iter()
        .map(|row| row.into_iter().map(|x| (x * 1e8).round() as i64).collect())
        .collect()
}

/// Solves the robust problem at each discount of an ascending grid and
/// reports where the optimal `(policy, W*)` pair stops changing.
pub fn blackwell_scan(
    inst: &MdpInstance,
    fm: &FactorModel,
    fu: &FactorUncertainty,
    lambdas: &[f64],
    eps: f64,
    variant: Variant,
) -> Result<BlackwellScan> {
    if lambdas.is_empty() {
        return Err(crate::Error::EmptyInput);
    }
    if lambdas.windows(2).any(|w| w[0] >= w[1]) {
        return Err(crate::Error::invalid("lambdas", "grid must be strictly ascending"));
    }
    let entries = lambdas
        .par_iter()
        .map(|&discount| {
            let scaled = inst.with_discount(discount)?;
            let problem = RobustProblem::new(&scaled, fm, fu)?;
            let report = problem.improve_policy(eps, variant)?;
            Ok(BlackwellEntry {
                discount,
                signature: vertex_signature(&report.w_star),
                policy: report.policy,
                w_star: report.w_star,
                objective: report.objective,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let last = entries.last().expect("non-empty grid");
    let same = |e: &BlackwellEntry| e.policy == last.policy && e.signature == last.signature;
    let threshold_index = entries.iter().rposition(|e| !same(e)).map_or(0, |k| k + 1);
    let stable_pair = (last.policy.clone(), last.w_star.clone());
    Ok(BlackwellScan {
        entries,
        threshold_index,
        stable_pair,
    })
}

