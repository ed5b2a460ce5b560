//! Nominal MDP machinery: instances, policies, kernels, exact discounted
//! reward and value iteration.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::factor::FactorModel;
use crate::numerics::{dot, norm_inf_diff, solve_linear_system, Matrix};

pub const DEFAULT_EPS: f64 = 1e-6;
const SUM_TOL: f64 = 1e-12;
const KERNEL_TOL: f64 = 1e-10;

/// Stopping threshold on successive iterates that guarantees an
/// `eps`-accurate fixed point for a `discount`-contraction.
pub fn stopping_threshold(eps: f64, discount: f64) -> f64 {
    eps * (1.0 - discount) / (2.0 * discount)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MdpInstance {
    states: usize,
    actions: usize,
    rewards: Matrix,
    discount: f64,
    p0: Vec<f64>,
}

impl MdpInstance {
    pub fn new(rewards: Matrix, discount: f64, p0: Vec<f64>) -> Result<Self> {
        let (states, actions) = (rewards.rows(), rewards.cols());
        if states == 0 || actions == 0 {
            return Err(Error::EmptyInput);
        }
        if rewards.as_slice().iter().any(|&r| !(r >= 0.0) || !r.is_finite()) {
            return Err(Error::invalid("rewards", "entries must be finite and non-negative"));
        }
        if !(discount > 0.0 && discount < 1.0) {
            return Err(Error::InvalidDiscount(discount));
        }
        if p0.len() != states {
            return Err(Error::dims("p0", states, p0.len()));
        }
        check_distribution("p0", &p0, SUM_TOL)?;
        Ok(MdpInstance {
            states,
            actions,
            rewards,
            discount,
            p0,
        })
    }

    pub fn states(&self) -> usize {
        self.states
    }

    pub fn actions(&self) -> usize {
        self.actions
    }

    pub fn rewards(&self) -> &Matrix {
        &self.rewards
    }

    pub fn reward(&self, s: usize, a: usize) -> f64 {
        self.rewards[(s, a)]
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    pub fn p0(&self) -> &[f64] {
        &self.p0
    }

    pub fn max_reward(&self) -> f64 {
        self.rewards.max_abs()
    }

    /// Upper bound `max r / (1 − λ)` on any value.
    pub fn value_bound(&self) -> f64 {
        self.max_reward() / (1.0 - self.discount)
    }

    pub fn with_discount(&self, discount: f64) -> Result<Self> {
        MdpInstance::new(self.rewards.clone(), discount, self.p0.clone())
    }

    /// `r_π[s] = Σ_a π_sa r_sa`.
    pub fn policy_rewards(&self, pi: &Policy) -> Result<Vec<f64>> {
        self.check_policy(pi)?;
        Ok((0..self.states).map(|s| dot(pi.row(s), self.rewards.row(s))).collect())
    }

    pub fn check_policy(&self, pi: &Policy) -> Result<()> {
        if pi.states() != self.states {
            return Err(Error::dims("policy states", self.states, pi.states()));
        }
        if pi.actions() != self.actions {
            return Err(Error::dims("policy actions", self.actions, pi.actions()));
        }
        Ok(())
    }

    pub fn check_kernel(&self, p: &TransitionKernel) -> Result<()> {
        if p.states() != self.states {
            return Err(Error::dims("kernel states", self.states, p.states()));
        }
        if p.actions() != self.actions {
            return Err(Error::dims("kernel actions", self.actions, p.actions()));
        }
        Ok(())
    }
}

pub(crate) fn check_distribution(what: &str, p: &[f64], tol: f64) -> Result<()> {
    if p.iter().any(|&x| !(x >= 0.0)) {
        return Err(Error::NotStochastic {
            what: what.to_string(),
            detail: "negative or non-finite entry".into(),
        });
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > tol {
        return Err(Error::NotStochastic {
            what: what.to_string(),
            detail: format!("sums to {sum}"),
        });
    }
    Ok(())
}

/// Stationary Markovian policy; row `s` is a distribution over actions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Policy {
    probs: Matrix,
}

impl Policy {
    pub fn new(probs: Matrix) -> Result<Self> {
        if probs.rows() == 0 || probs.cols() == 0 {
            return Err(Error::EmptyInput);
        }
        for s in 0..probs.rows() {
            check_distribution(&format!("policy row {s}"), probs.row(s), SUM_TOL)?;
        }
        Ok(Policy { probs })
    }

    pub fn deterministic(choice: &[usize], actions: usize) -> Result<Self> {
        if choice.is_empty() {
            return Err(Error::EmptyInput);
        }
        if let Some(&a) = choice.iter().find(|&&a| a >= actions) {
            return Err(Error::IndexOutOfRange { index: a, len: actions });
        }
        Ok(Policy {
            probs: Matrix::from_fn(choice.len(), actions, |s, a| if choice[s] == a { 1.0 } else { 0.0 }),
        })
    }

    pub fn uniform(states: usize, actions: usize) -> Self {
        Policy {
            probs: Matrix::from_fn(states, actions, |_, _| 1.0 / actions as f64),
        }
    }

    pub fn states(&self) -> usize {
        self.probs.rows()
    }

    pub fn actions(&self) -> usize {
        self.probs.cols()
    }

    pub fn row(&self, s: usize) -> &[f64] {
        self.probs.row(s)
    }

    pub fn matrix(&self) -> &Matrix {
        &self.probs
    }

    pub fn is_deterministic(&self) -> bool {
        self.chosen_actions().is_some()
    }

    /// The chosen action per state when every row is a unit vector.
    pub fn chosen_actions(&self) -> Option<Vec<usize>> {
        (0..self.states())
            .map(|s| {
                let row = self.row(s);
                let ones = row.iter().filter(|&&x| x == 1.0).count();
                let zeros = row.iter().filter(|&&x| x == 0.0).count();
                if ones == 1 && ones + zeros == row.len() {
                    row.iter().position(|&x| x == 1.0)
                } else {
                    None
                }
            })
            .collect()
    }

    /// Every deterministic policy, in lexicographic order of action choices.
    pub fn enumerate_deterministic(states: usize, actions: usize) -> impl Iterator<Item = Policy> {
        let total = (actions as u64).pow(states as u32);
        (0..total).map(move |mut code| {
            let mut choice = vec![0; states];
            for c in choice.iter_mut().rev() {
                *c = (code % actions as u64) as usize;
                code /= actions as u64;
            }
            Policy::deterministic(&choice, actions).expect("valid choice")
        })
    }
}

/// `P[s][a][s']`, stored flat.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionKernel {
    states: usize,
    actions: usize,
    data: Vec<f64>,
}

impl TransitionKernel {
    pub fn new(states: usize, actions: usize, data: Vec<f64>) -> Result<Self> {
        let k = TransitionKernel::new_unchecked(states, actions, data)?;
        k.validate(KERNEL_TOL)?;
        Ok(k)
    }

    pub(crate) fn new_unchecked(states: usize, actions: usize, data: Vec<f64>) -> Result<Self> {
        if states == 0 || actions == 0 {
            return Err(Error::EmptyInput);
        }
        if data.len() != states * actions * states {
            return Err(Error::dims("kernel data", states * actions * states, data.len()));
        }
        Ok(TransitionKernel { states, actions, data })
    }

    pub fn from_nested(p: &[Vec<Vec<f64>>]) -> Result<Self> {
        let states = p.len();
        let actions = p.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(states * actions * states);
        for rows in p {
            if rows.len() != actions {
                return Err(Error::dims("kernel actions", actions, rows.len()));
            }
            for row in rows {
                if row.len() != states {
                    return Err(Error::dims("kernel row", states, row.len()));
                }
                data.extend_from_slice(row);
            }
        }
        TransitionKernel::new(states, actions, data)
    }

    pub fn validate(&self, tol: f64) -> Result<()> {
        for s in 0..self.states {
            for a in 0..self.actions {
                check_distribution(&format!("kernel row ({s}, {a})"), self.row(s, a), tol)?;
            }
        }
        Ok(())
    }

    pub fn states(&self) -> usize {
        self.states
    }

    pub fn actions(&self) -> usize {
        self.actions
    }

    pub fn row(&self, s: usize, a: usize) -> &[f64] {
        let start = (s * self.actions + a) * self.states;
        &self.data[start..start + self.states]
    }

    pub fn row_mut(&mut self, s: usize, a: usize) -> &mut [f64] {
        let start = (s * self.actions + a) * self.states;
        &mut self.data[start..start + self.states]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn to_nested(&self) -> Vec<Vec<Vec<f64>>> {
        (0..self.states)
            .map(|s| (0..self.actions).map(|a| self.row(s, a).to_vec()).collect())
            .collect()
    }

    /// Largest entry-wise deviation from another kernel of the same shape.
    pub fn max_abs_diff(&self, other: &TransitionKernel) -> f64 {
        norm_inf_diff(&self.data, &other.data)
    }

    /// Whether every action at `s` moves to `s` with probability one.
    pub fn is_absorbing(&self, s: usize) -> bool {
        (0..self.actions).all(|a| {
            self.row(s, a)
                .iter()
                .enumerate()
                .all(|(t, &p)| if t == s { p == 1.0 } else { p == 0.0 })
        })
    }
}

/// `L(π, P)[s][s'] = Σ_a π_sa P_sas'`.
pub fn induced_chain(pi: &Policy, p: &TransitionKernel) -> Result<Matrix> {
    if pi.states() != p.states() {
        return Err(Error::dims("policy states", p.states(), pi.states()));
    }
    if pi.actions() != p.actions() {
        return Err(Error::dims("policy actions", p.actions(), pi.actions()));
    }
    let n = p.states();
    let mut l = Matrix::zeros(n, n);
    for s in 0..n {
        for (a, &w) in pi.row(s).iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            for (dst, &q) in l.row_mut(s).iter_mut().zip(p.row(s, a)) {
                *dst += w * q;
            }
        }
    }
    Ok(l)
}

/// Value vector `(I − λL)⁻¹ r_π` of a policy at a fixed kernel.
pub fn policy_value(inst: &MdpInstance, pi: &Policy, p: &TransitionKernel) -> Result<Vec<f64>> {
    inst.check_kernel(p)?;
    let r_pi = inst.policy_rewards(pi)?;
    let l = induced_chain(pi, p)?;
    let lambda = inst.discount();
    let n = inst.states();
    let m = Matrix::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 } - lambda * l[(i, j)]);
    solve_linear_system(&m, &r_pi)
}

/// Expected discounted reward `p0ᵀ (I − λL)⁻¹ r_π`.
pub fn expected_reward(inst: &MdpInstance, pi: &Policy, p: &TransitionKernel) -> Result<f64> {
    Ok(dot(inst.p0(), &policy_value(inst, pi, p)?))
}

/// One classical Bellman optimality update; returns the new values and the
/// greedy actions (lowest index on ties).
pub fn bellman_optimality(inst: &MdpInstance, p: &TransitionKernel, v: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let lambda = inst.discount();
    (0..inst.states())
        .map(|s| {
            let mut best = (f64::NEG_INFINITY, 0);
            for a in 0..inst.actions() {
                let q = inst.reward(s, a) + lambda * dot(p.row(s, a), v);
                if q > best.0 {
                    best = (q, a);
                }
            }
            best
        })
        .unzip()
}

/// Value iteration from `v⁰ = 0` with the ε-optimal stopping rule.
pub fn nominal_value_iteration(
    inst: &MdpInstance,
    p: &TransitionKernel,
    eps: f64,
) -> Result<(Policy, Vec<f64>)> {
    if !(eps > 0.0) {
        return Err(Error::invalid("eps", "must be positive"));
    }
    inst.check_kernel(p)?;
    let guard = stopping_threshold(eps, inst.discount());
    let mut v = vec![0.0; inst.states()];
    loop {
        let (next, _) = bellman_optimality(inst, p, &v);
        let diff = norm_inf_diff(&next, &v);
        v = next;
        if diff < guard {
            break;
        }
    }
    let (_, choice) = bellman_optimality(inst, p, &v);
    let policy = Policy::deterministic(&choice, inst.actions())?;
    Ok((policy, v))
}

/// `T_π[s][i] = Σ_a π_sa u^i_sa`.
pub fn build_t_pi(fm: &FactorModel, pi: &Policy) -> Result<Matrix> {
    if pi.states() != fm.states() {
        return Err(Error::dims("policy states", fm.states(), pi.states()));
    }
    if pi.actions() != fm.actions() {
        return Err(Error::dims("policy actions", fm.actions(), pi.actions()));
    }
    Ok(Matrix::from_fn(fm.states(), fm.rank(), |s, i| {
        pi.row(s)
            .iter()
            .enumerate()
            .map(|(a, &w)| w * fm.coef(s, i, a))
            .sum()
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::{random_instance, random_kernel, random_policy};
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn induced_chain_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = random_kernel(&mut rng, 3, 2);
        let first = Policy::deterministic(&[0, 0, 0], 2).unwrap();
        let l = induced_chain(&first, &p).unwrap();
        for s in 0..3 {
            assert_eq!(l.row(s), p.row(s, 0));
        }
        let l = induced_chain(&Policy::uniform(3, 2), &p).unwrap();
        for s in 0..3 {
            for t in 0..3 {
                assert_abs_diff_eq!(l[(s, t)], 0.5 * (p.row(s, 0)[t] + p.row(s, 1)[t]), epsilon = 1e-15);
            }
        }
        for _ in 0..50 {
            let pi = random_policy(&mut rng, 3, 2);
            let l = induced_chain(&pi, &p).unwrap();
            for s in 0..3 {
                assert_abs_diff_eq!(l.row(s).iter().sum::<f64>(), 1.0, epsilon = 1e-12);
            }
        }
        let wrong = Policy::uniform(2, 2);
        assert!(matches!(induced_chain(&wrong, &p), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn expected_reward_geometric_and_zero() {
        let inst = MdpInstance::new(Matrix::from_rows(&[vec![1.0]]).unwrap(), 0.8, vec![1.0]).unwrap();
        let p = TransitionKernel::new(1, 1, vec![1.0]).unwrap();
        let pi = Policy::deterministic(&[0], 1).unwrap();
        assert_abs_diff_eq!(expected_reward(&inst, &pi, &p).unwrap(), 5.0, epsilon = 1e-12);

        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let zero = MdpInstance::new(Matrix::zeros(3, 2), 0.9, vec![0.2, 0.3, 0.5]).unwrap();
        let p = random_kernel(&mut rng, 3, 2);
        let pi = random_policy(&mut rng, 3, 2);
        assert_eq!(expected_reward(&zero, &pi, &p).unwrap(), 0.0);
    }

    #[test]
    fn expected_reward_matches_truncated_series() {
        // Σ_{t ≤ 200} λᵗ p0ᵀ Lᵗ r_π, with row-vector propagation p_{t+1} = p_t L.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let inst = random_instance(&mut rng, 2, 2, 0.9);
            let p = random_kernel(&mut rng, 2, 2);
            let pi = random_policy(&mut rng, 2, 2);
            let l = induced_chain(&pi, &p).unwrap();
            let r_pi = inst.policy_rewards(&pi).unwrap();
            let mut dist = inst.p0().to_vec();
            let mut total = 0.0;
            let mut disc = 1.0;
            for _ in 0..=200 {
                total += disc * dot(&dist, &r_pi);
                dist = l.tr_mul_vec(&dist);
                disc *= inst.discount();
            }
            let tail = inst.discount().powi(200) * inst.max_reward() / (1.0 - inst.discount());
            let exact = expected_reward(&inst, &pi, &p).unwrap();
            assert!((exact - total).abs() <= tail, "{exact} vs {total}");
        }
    }

    #[test]
    fn value_iteration_one_state_and_ties() {
        let inst = MdpInstance::new(Matrix::from_rows(&[vec![1.0, 3.0, 2.0]]).unwrap(), 0.5, vec![1.0]).unwrap();
        let p = TransitionKernel::new(1, 3, vec![1.0; 3]).unwrap();
        let (pi, v) = nominal_value_iteration(&inst, &p, 1e-9).unwrap();
        assert_eq!(pi.chosen_actions().unwrap(), vec![1]);
        assert_abs_diff_eq!(v[0], 6.0, epsilon = 1e-9);

        let inst = MdpInstance::new(Matrix::from_rows(&[vec![1.0, 1.0], vec![2.0, 2.0]]).unwrap(), 0.9, vec![0.5, 0.5]).unwrap();
        let p = TransitionKernel::new(2, 2, vec![0.3, 0.7, 0.3, 0.7, 0.6, 0.4, 0.6, 0.4]).unwrap();
        let (pi, _) = nominal_value_iteration(&inst, &p, DEFAULT_EPS).unwrap();
        assert_eq!(pi.chosen_actions().unwrap(), vec![0, 0]);
    }

    #[test]
    fn value_iteration_matches_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            let inst = random_instance(&mut rng, 3, 2, 0.85);
            let p = random_kernel(&mut rng, 3, 2);
            let eps = 1e-6;
            let (pi, v) = nominal_value_iteration(&inst, &p, eps).unwrap();
            assert!(pi.is_deterministic());
            let mut best = [f64::NEG_INFINITY; 3];
            for cand in Policy::enumerate_deterministic(3, 2) {
                let vc = policy_value(&inst, &cand, &p).unwrap();
                for s in 0..3 {
                    best[s] = best[s].max(vc[s]);
                    // maximum principle: no policy beats the optimum anywhere
                    assert!(vc[s] <= v[s] + eps);
                }
            }
            for s in 0..3 {
                assert!((best[s] - v[s]).abs() <= eps);
            }
            // Bellman residual of the returned pair.
            let l = induced_chain(&pi, &p).unwrap();
            let r_pi = inst.policy_rewards(&pi).unwrap();
            let lv = l.mul_vec(&v);
            let resid = (0..3)
                .map(|s| (v[s] - r_pi[s] - inst.discount() * lv[s]).abs())
                .fold(0.0, f64::max);
            assert!(resid <= 2.0 * eps);
        }
    }

    #[test]
    fn expected_reward_is_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let inst = random_instance(&mut rng, 4, 3, 0.95);
            let p = random_kernel(&mut rng, 4, 3);
            let pi = random_policy(&mut rng, 4, 3);
            let z = expected_reward(&inst, &pi, &p).unwrap();
            assert!(z >= 0.0 && z <= inst.value_bound() + 1e-9);
        }
    }

    #[test]
    fn instance_validation() {
        let r = Matrix::from_rows(&[vec![1.0], vec![1.0]]).unwrap();
        assert!(matches!(
            MdpInstance::new(r.clone(), 0.9, vec![0.5, 0.4]),
            Err(Error::NotStochastic { .. })
        ));
        assert_eq!(MdpInstance::new(r.clone(), 1.0, vec![0.5, 0.5]), Err(Error::InvalidDiscount(1.0)));
        let neg = Matrix::from_rows(&[vec![-1.0], vec![1.0]]).unwrap();
        assert!(MdpInstance::new(neg, 0.9, vec![0.5, 0.5]).is_err());
        assert!(TransitionKernel::new(1, 1, vec![0.9]).is_err());
    }

    #[test]
    fn deterministic_enumeration_order() {
        let all: Vec<Vec<usize>> = Policy::enumerate_deterministic(2, 3)
            .map(|p| p.chosen_actions().unwrap())
            .collect();
        assert_eq!(all.len(), 9);
        assert_eq!(all[0], vec![0, 0]);
        assert_eq!(all[1], vec![0, 1]);
        assert_eq!(all[8], vec![2, 2]);
    }
}
