//! s-rectangular budget baseline: per-state sets over the action-by-state
//! block `P_s`, solved by per-state max-min Bellman updates.
//!
//! The inner minimisation over `P_s` is an LP; for the optimisation over
//! randomised actions it is dualised so that each state update is a single
//! LP over `(π_s, y)`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::mdp::{stopping_threshold, MdpInstance, Policy, TransitionKernel};
use crate::numerics::{dot, lp_minimize, norm_inf_diff, LinearProgram, Matrix, Polytope, Relation};

const MAX_ITERS: usize = 10_000_000;

/// Per-state sets `{P_s = P_s^nom + Δ : |Δ| ≤ tau entry-wise, ‖Δ‖₁ ≤ gamma,
/// rows stochastic}`; pinned states keep their nominal block.
#[derive(Debug, Clone, PartialEq)]
pub struct SRectUncertainty {
    pub nominal: TransitionKernel,
    pub tau: f64,
    pub gamma: f64,
    pub pinned: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SRectSolution {
    pub policy: Policy,
    pub z: f64,
    pub v: Vec<f64>,
    pub iterations: usize,
}

impl SRectUncertainty {
    /// Budget `gamma = c·√(S·A)·tau`.
    pub fn new(nominal: TransitionKernel, tau: f64, c: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&tau) {
            return Err(Error::invalid("tau", format!("{tau} not in [0, 1]")));
        }
        if !(c >= 0.0) {
            return Err(Error::invalid("c", "must be non-negative"));
        }
        let gamma = c * ((nominal.states() * nominal.actions()) as f64).sqrt() * tau;
        let pinned = vec![false; nominal.states()];
        Ok(SRectUncertainty {
            nominal,
            tau,
            gamma,
            pinned,
        })
    }

    pub fn pin_state(mut self, s: usize) -> Result<Self> {
        if s >= self.pinned.len() {
            return Err(Error::IndexOutOfRange {
                index: s,
                len: self.pinned.len(),
            });
        }
        self.pinned[s] = true;
        Ok(self)
    }

    /// Pins every absorbing state of the nominal kernel.
    pub fn pin_absorbing(mut self) -> Self {
        for s in 0..self.nominal.states() {
            if self.nominal.is_absorbing(s) {
                self.pinned[s] = true;
            }
        }
        self
    }

    fn is_fixed(&self, s: usize) -> bool {
        self.pinned[s] || self.tau == 0.0 || self.gamma == 0.0
    }

    /// Lifted polytope over `(P_s flat [a][s'], t)` for state `s`.
    ///
    /// Rows: per action `Σ P_a ≥ 1` and `−Σ P_a ≥ −1`; per entry
    /// `t − P ≥ −P^nom`, `t + P ≥ P^nom`, `−t ≥ −tau`; finally `−Σt ≥ −gamma`.
    pub fn state_polytope(&self, s: usize) -> Polytope {
        let (n, na) = (self.nominal.states(), self.nominal.actions());
        let k = n * na;
        let m = 2 * na + 3 * k + 1;
        let mut a = Matrix::zeros(m, 2 * k);
        let mut b = vec![0.0; m];
        for act in 0..na {
            for t in 0..n {
                a[(2 * act, act * n + t)] = 1.0;
                a[(2 * act + 1, act * n + t)] = -1.0;
            }
            b[2 * act] = 1.0;
            b[2 * act + 1] = -1.0;
        }
        let base = 2 * na;
        for act in 0..na {
            let nom = self.nominal.row(s, act);
            for t in 0..n {
                let e = act * n + t;
                a[(base + e, k + e)] = 1.0;
                a[(base + e, e)] = -1.0;
                b[base + e] = -nom[t];
                a[(base + k + e, k + e)] = 1.0;
                a[(base + k + e, e)] = 1.0;
                b[base + k + e] = nom[t];
                a[(base + 2 * k + e, k + e)] = -1.0;
                b[base + 2 * k + e] = -self.tau;
                a[(m - 1, k + e)] = -1.0;
            }
        }
        b[m - 1] = -self.gamma;
        Polytope::lifted(a, b, k).expect("well-formed state polytope")
    }

    fn check(&self, inst: &MdpInstance) -> Result<()> {
        inst.check_kernel(&self.nominal)
    }
}

/// Worst-case value of a fixed policy over the s-rectangular set.
pub fn s_rect_evaluate(inst: &MdpInstance, sr: &SRectUncertainty, pi: &Policy, eps: f64) -> Result<SRectSolution> {
    sr.check(inst)?;
    inst.check_policy(pi)?;
    let (n, na) = (inst.states(), inst.actions());
    let lambda = inst.discount();
    let polys: Vec<Polytope> = (0..n).map(|s| sr.state_polytope(s)).collect();
    let r_pi = inst.policy_rewards(pi)?;
    let guard = stopping_threshold(eps, lambda);
    let mut v = vec![0.0; n];
    let mut iterations = 0;
    loop {
        let mut next = vec![0.0; n];
        for s in 0..n {
            let worst = if sr.is_fixed(s) {
                (0..na).map(|a| pi.row(s)[a] * dot(sr.nominal.row(s, a), &v)).sum()
            } else {
                let c: Vec<f64> = (0..na).flat_map(|a| v.iter().map(move |&x| pi.row(s)[a] * x)).collect();
                lp_minimize(&c, &polys[s])?.1
            };
            next[s] = r_pi[s] + lambda * worst;
        }
        iterations += 1;
        let diff = norm_inf_diff(&next, &v);
        v = next;
        if diff < guard {
            break;
        }
        if iterations >= MAX_ITERS {
            return Err(Error::NoConvergence(MAX_ITERS));
        }
    }
    Ok(SRectSolution {
        policy: pi.clone(),
        z: dot(inst.p0(), &v),
        v,
        iterations,
    })
}

/// Robust value iteration over the s-rectangular set; the policy may be randomised.
pub fn s_rect_robust_vi(inst: &MdpInstance, sr: &SRectUncertainty, eps: f64) -> Result<SRectSolution> {
    if !(eps > 0.0) {
        return Err(Error::invalid("eps", "must be positive"));
    }
    sr.check(inst)?;
    let n = inst.states();
    let polys: Vec<Polytope> = (0..n).map(|s| sr.state_polytope(s)).collect();
    let guard = stopping_threshold(eps, inst.discount());
    let mut v = vec![0.0; n];
    let mut iterations = 0;
    let mut rows: Vec<Vec<f64>>;
    loop {
        let mut next = vec![0.0; n];
        rows = Vec::with_capacity(n);
        for s in 0..n {
            let (value, pi_s) = state_update(inst, sr, &polys[s], s, &v)?;
            next[s] = value;
            rows.push(pi_s);
        }
        iterations += 1;
        let diff = norm_inf_diff(&next, &v);
        v = next;
        if diff < guard {
            break;
        }
        if iterations >= MAX_ITERS {
            return Err(Error::NoConvergence(MAX_ITERS));
        }
    }
    let policy = Policy::new(Matrix::from_rows(&rows)?)?;
    Ok(SRectSolution {
        policy,
        z: dot(inst.p0(), &v),
        v,
        iterations,
    })
}

/// `max_{π_s ∈ Δ} min_{P_s} Σ_a π_a (r_sa + λ P_saᵀ v)` for one state.
fn state_update(
    inst: &MdpInstance,
    sr: &SRectUncertainty,
    poly: &Polytope,
    s: usize,
    v: &[f64],
) -> Result<(f64, Vec<f64>)> {
    let (n, na) = (inst.states(), inst.actions());
    let lambda = inst.discount();
    if sr.is_fixed(s) {
        let mut best = (f64::NEG_INFINITY, 0);
        for a in 0..na {
            let q = inst.reward(s, a) + lambda * dot(sr.nominal.row(s, a), v);
            if q > best.0 {
                best = (q, a);
            }
        }
        let mut row = vec![0.0; na];
        row[best.1] = 1.0;
        return Ok((best.0, row));
    }
    // Variables: π (na) then y (one per polytope row), all ≥ 0.
    let m = poly.num_rows();
    let total = na + m;
    let mut objective = vec![0.0; total];
    for a in 0..na {
        objective[a] = -inst.reward(s, a);
    }
    for k in 0..m {
        objective[na + k] = -lambda * poly.b[k];
    }
    let mut lp = LinearProgram::minimize(objective);
    for j in 0..poly.num_vars() {
        let mut coefs = vec![0.0; total];
        for k in 0..m {
            coefs[na + k] = poly.a[(k, j)];
        }
        if j < n * na {
            let (a, t) = (j / n, j % n);
            coefs[a] = -v[t];
        }
        lp.add_row(coefs, Relation::Le, 0.0);
    }
    let mut simplex_row = vec![0.0; total];
    simplex_row[..na].iter_mut().for_each(|x| *x = 1.0);
    lp.add_row(simplex_row, Relation::Eq, 1.0);
    let sol = lp.solve()?;
    let mut pi_s: Vec<f64> = sol.x[..na].iter().map(|&x| x.max(0.0)).collect();
    let total_mass: f64 = pi_s.iter().sum();
    pi_s.iter_mut().for_each(|x| *x /= total_mass);
    Ok((-sol.value, pi_s))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::nominal_value_iteration;
    use crate::synthetic::{random_instance, random_kernel, random_policy};
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_radius_is_nominal_value_iteration() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let inst = random_instance(&mut rng, 4, 3, 0.9);
        let p = random_kernel(&mut rng, 4, 3);
        let sr = SRectUncertainty::new(p.clone(), 0.0, 1.0).unwrap();
        let sol = s_rect_robust_vi(&inst, &sr, 1e-6).unwrap();
        let (pi, v) = nominal_value_iteration(&inst, &p, 1e-6).unwrap();
        assert_eq!(sol.policy, pi);
        assert!(norm_inf_diff(&sol.v, &v) <= 1e-9);
    }

    #[test]
    fn single_action_is_evaluation() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let inst = random_instance(&mut rng, 3, 1, 0.85);
        let sr = SRectUncertainty::new(random_kernel(&mut rng, 3, 1), 0.2, 1.0).unwrap();
        let pi = Policy::uniform(3, 1);
        let vi = s_rect_robust_vi(&inst, &sr, 1e-7).unwrap();
        let ev = s_rect_evaluate(&inst, &sr, &pi, 1e-7).unwrap();
        assert_abs_diff_eq!(vi.z, ev.z, epsilon = 1e-6);
    }

    #[test]
    fn state_update_matches_grid_search() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..5 {
            let inst = random_instance(&mut rng, 2, 2, 0.8);
            let sr = SRectUncertainty::new(random_kernel(&mut rng, 2, 2), 0.3, 1.0).unwrap();
            let v = [rng.random_range(0.0..20.0), rng.random_range(0.0..20.0)];
            for s in 0..2 {
                let poly = sr.state_polytope(s);
                let (value, _) = state_update(&inst, &sr, &poly, s, &v).unwrap();
                let mut best = f64::NEG_INFINITY;
                for k in 0..=1000 {
                    let p = k as f64 / 1000.0;
                    let pi = [p, 1.0 - p];
                    let c: Vec<f64> = (0..2).flat_map(|a| v.iter().map(move |&x| pi[a] * x)).collect();
                    let inner = lp_minimize(&c, &poly).unwrap().1;
                    let q = pi[0] * inst.reward(s, 0) + pi[1] * inst.reward(s, 1) + inst.discount() * inner;
                    best = best.max(q);
                }
                assert!(value >= best - 1e-9);
                assert!(value - best <= 1e-4, "{value} vs {best}");
            }
        }
    }

    #[test]
    fn robust_value_is_below_nominal_and_dominates_evaluation() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let inst = random_instance(&mut rng, 4, 2, 0.9);
        let p = random_kernel(&mut rng, 4, 2);
        let sr = SRectUncertainty::new(p.clone(), 0.1, 1.0).unwrap();
        let sol = s_rect_robust_vi(&inst, &sr, 1e-6).unwrap();
        let (_, v_nom) = nominal_value_iteration(&inst, &p, 1e-6).unwrap();
        assert!(sol.z <= dot(inst.p0(), &v_nom) + 1e-6);
        for _ in 0..10 {
            let pi = random_policy(&mut rng, 4, 2);
            let ev = s_rect_evaluate(&inst, &sr, &pi, 1e-6).unwrap();
            assert!(ev.z <= sol.z + 2e-6);
        }
        let own = s_rect_evaluate(&inst, &sr, &sol.policy, 1e-6).unwrap();
        assert_abs_diff_eq!(own.z, sol.z, epsilon = 2e-6);
    }

    #[test]
    fn pinned_states_keep_nominal_rows() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut p = random_kernel(&mut rng, 3, 2);
        for a in 0..2 {
            p.row_mut(2, a).copy_from_slice(&[0.0, 0.0, 1.0]);
        }
        let sr = SRectUncertainty::new(p, 0.2, 1.0).unwrap().pin_absorbing();
        assert_eq!(sr.pinned, vec![false, false, true]);
        assert!(sr.clone().pin_state(3).is_err());
    }
}
