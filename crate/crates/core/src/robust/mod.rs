//! Robust policy evaluation and improvement over r-rectangular factor sets.
//!
//! Evaluation iterates the adversary's Bellman map
//! `φ(β)_i = min_{w_i ∈ 𝒲^i} w_iᵀ(r_π + λ T_π β)` to its fixed point.
//! Improvement iterates either the decision-maker operator `F₁` (on value
//! vectors over states) or the adversary operator `F₂` (on value vectors
//! over factors); both are monotone `λ`-contractions, and the greedy policy
//! at the fixed point is deterministic.

mod brute;
mod lp_eval;
mod srect;
mod verify;

pub use brute::{brute_force_oracle, BruteForceResult, ENUMERATION_LIMIT};
pub use lp_eval::{evaluate_worst_case_lp, DualCertificate};
pub use srect::{s_rect_evaluate, s_rect_robust_vi, SRectSolution, SRectUncertainty};
pub use verify::{
    blackwell_scan, check_max_principle, verify_duality, vertex_signature, BlackwellEntry, BlackwellScan,
    DualityCheck, MaxPrincipleCheck,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::factor::{FactorModel, FactorUncertainty};
use crate::mdp::{build_t_pi, stopping_threshold, MdpInstance, Policy};
use crate::numerics::{dot, norm_inf_diff, Matrix};

/// Discount factors at or above this are rejected.
pub const MAX_DISCOUNT: f64 = 1.0 - 1e-6;
const MAX_ITERS: usize = 50_000_000;

/// Adversary value vector over factor indices.
pub type AdversaryValue = Vec<f64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    #[default]
    F1,
    F2,
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "f1" => Ok(Variant::F1),
            "f2" => Ok(Variant::F2),
            other => Err(Error::invalid("variant", format!("unknown variant {other:?}"))),
        }
    }
}

/// Validated triple of instance, factor model and factor uncertainty.
#[derive(Debug, Clone, Copy)]
pub struct RobustProblem<'a> {
    pub inst: &'a MdpInstance,
    pub fm: &'a FactorModel,
    pub fu: &'a FactorUncertainty,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhiStep {
    pub beta: AdversaryValue,
    /// Per-factor minimisers, stacked as columns.
    pub w: Matrix,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WorstCase {
    pub z: f64,
    pub w_star: Matrix,
    pub beta: AdversaryValue,
    /// Worst-case value vector `r_π + λ T_π β`.
    pub value: Vec<f64>,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct F1Step {
    pub v_next: Vec<f64>,
    pub actions: Vec<usize>,
    pub w: Matrix,
    pub beta: AdversaryValue,
}

#[derive(Debug, Clone, PartialEq)]
pub struct F2Step {
    pub beta_next: AdversaryValue,
    pub actions: Vec<usize>,
    pub v: Vec<f64>,
    pub w: Matrix,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RobustSolveReport {
    pub policy: Policy,
    pub w_star: Matrix,
    pub v: Vec<f64>,
    pub beta: AdversaryValue,
    pub objective: f64,
    pub iterations: usize,
    /// Sup-norm change of the last iteration.
    pub residual: f64,
    pub epsilon: f64,
    pub variant: Variant,
}

impl<'a> RobustProblem<'a> {
    pub fn new(inst: &'a MdpInstance, fm: &'a FactorModel, fu: &'a FactorUncertainty) -> Result<Self> {
        if fm.states() != inst.states() {
            return Err(Error::dims("factor model states", inst.states(), fm.states()));
        }
        if fm.actions() != inst.actions() {
            return Err(Error::dims("factor model actions", inst.actions(), fm.actions()));
        }
        fu.check_against(fm)?;
        if inst.discount() >= MAX_DISCOUNT {
            return Err(Error::InvalidDiscount(inst.discount()));
        }
        Ok(RobustProblem { inst, fm, fu })
    }

    pub fn discount(&self) -> f64 {
        self.inst.discount()
    }

    fn policy_terms(&self, pi: &Policy) -> Result<(Vec<f64>, Matrix)> {
        Ok((self.inst.policy_rewards(pi)?, build_t_pi(self.fm, pi)?))
    }

    fn continuation(&self, r_pi: &[f64], t_pi: &Matrix, beta: &[f64]) -> Vec<f64> {
        let lambda = self.discount();
        t_pi.mul_vec(beta)
            .into_iter()
            .zip(r_pi)
            .map(|(tb, r)| r + lambda * tb)
            .collect()
    }

    fn check_beta(&self, beta: &[f64]) -> Result<()> {
        if beta.len() != self.fm.rank() {
            return Err(Error::dims("adversary value", self.fm.rank(), beta.len()));
        }
        Ok(())
    }

    fn check_v(&self, v: &[f64]) -> Result<()> {
        if v.len() != self.inst.states() {
            return Err(Error::dims("value vector", self.inst.states(), v.len()));
        }
        Ok(())
    }

    /// `φ(π, β)_i = min_{w_i ∈ 𝒲^i} w_iᵀ(r_π + λ T_π β)`.
    pub fn adversarial_bellman_phi(&self, pi: &Policy, beta: &[f64]) -> Result<PhiStep> {
        self.check_beta(beta)?;
        let (r_pi, t_pi) = self.policy_terms(pi)?;
        let v = self.continuation(&r_pi, &t_pi, beta);
        let (w, beta) = self.fu.minimize_all(&v)?;
        Ok(PhiStep { beta, w })
    }

    /// Worst-case reward of `pi` by value iteration on the adversary's values.
    pub fn evaluate_worst_case(&self, pi: &Policy, eps: f64) -> Result<WorstCase> {
        check_eps(eps)?;
        let (r_pi, t_pi) = self.policy_terms(pi)?;
        let guard = stopping_threshold(eps, self.discount());
        let mut beta = vec![0.0; self.fm.rank()];
        let mut iterations = 0;
        let w_star = loop {
            let v = self.continuation(&r_pi, &t_pi, &beta);
            let (w, next) = self.fu.minimize_all(&v)?;
            iterations += 1;
            let diff = norm_inf_diff(&next, &beta);
            beta = next;
            if diff < guard {
                break w;
            }
            if iterations >= MAX_ITERS {
                return Err(Error::NoConvergence(MAX_ITERS));
            }
        };
        let value = self.continuation(&r_pi, &t_pi, &beta);
        Ok(WorstCase {
            z: dot(self.inst.p0(), &value),
            w_star,
            beta,
            value,
            iterations,
        })
    }

    /// Greedy robust action per state given adversary values `beta`:
    /// `argmax_a r_sa + λ Σ_i u^i_sa β_i`, lowest index on ties.
    fn greedy(&self, beta: &[f64]) -> (Vec<f64>, Vec<usize>) {
        let lambda = self.discount();
        (0..self.inst.states())
            .map(|s| {
                let mut best = (f64::NEG_INFINITY, 0);
                for a in 0..self.inst.actions() {
                    let cont: f64 = (0..self.fm.rank()).map(|i| self.fm.coef(s, i, a) * beta[i]).sum();
                    let q = self.inst.reward(s, a) + lambda * cont;
                    if q > best.0 {
                        best = (q, a);
                    }
                }
                best
            })
            .unzip()
    }

    pub fn robust_bellman_f1(&self, v: &[f64]) -> Result<F1Step> {
        self.check_v(v)?;
        let (w, beta) = self.fu.minimize_all(v)?;
        let (v_next, actions) = self.greedy(&beta);
        Ok(F1Step {
            v_next,
            actions,
            w,
            beta,
        })
    }

    pub fn robust_bellman_f2(&self, beta: &[f64]) -> Result<F2Step> {
        self.check_beta(beta)?;
        let (v, actions) = self.greedy(beta);
        let (w, beta_next) = self.fu.minimize_all(&v)?;
        Ok(F2Step {
            beta_next,
            actions,
            v,
            w,
        })
    }

    /// Robust value iteration; returns a deterministic ε-optimal policy.
    pub fn improve_policy(&self, eps: f64, variant: Variant) -> Result<RobustSolveReport> {
        check_eps(eps)?;
        let guard = stopping_threshold(eps, self.discount());
        let mut iterations = 0;
        let (v, residual) = match variant {
            Variant::F1 => {
                let mut v = vec![0.0; self.inst.states()];
                loop {
                    let step = self.robust_bellman_f1(&v)?;
                    iterations += 1;
                    let diff = norm_inf_diff(&step.v_next, &v);
                    v = step.v_next;
                    if diff < guard {
                        break (v, diff);
                    }
                    if iterations >= MAX_ITERS {
                        return Err(Error::NoConvergence(MAX_ITERS));
                    }
                }
            }
            Variant::F2 => {
                let mut beta = vec![0.0; self.fm.rank()];
                loop {
                    let step = self.robust_bellman_f2(&beta)?;
                    iterations += 1;
                    let diff = norm_inf_diff(&step.beta_next, &beta);
                    beta = step.beta_next;
                    if diff < guard {
                        break (self.greedy(&beta).0, diff);
                    }
                    if iterations >= MAX_ITERS {
                        return Err(Error::NoConvergence(MAX_ITERS));
                    }
                }
            }
        };
        let (w_star, beta) = self.fu.minimize_all(&v)?;
        let (_, actions) = self.greedy(&beta);
        let policy = Policy::deterministic(&actions, self.inst.actions())?;
        Ok(RobustSolveReport {
            objective: dot(self.inst.p0(), &v),
            policy,
            w_star,
            v,
            beta,
            iterations,
            residual,
            epsilon: eps,
            variant,
        })
    }
}

fn check_eps(eps: f64) -> Result<()> {
    if eps > 0.0 && eps.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid("eps", "must be positive"))
    }
}
