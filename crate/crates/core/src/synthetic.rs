//! Seeded random instances and the small fixed desk instances used by the
//! experiments and test suites.

use rand::Rng;

use crate::factor::{build_budget_uncertainty, FactorModel, FactorSet, FactorUncertainty};
use crate::mdp::{MdpInstance, Policy, TransitionKernel};
use crate::numerics::{Matrix, Polytope};

/// Uniform point on the probability simplex.
pub fn random_distribution<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
    let s: f64 = raw.iter().sum();
    let mut p: Vec<f64> = raw.into_iter().map(|x| x / s).collect();
    let drift = 1.0 - p.iter().sum::<f64>();
    let k = p.iter().enumerate().fold(0, |b, (i, &x)| if x > p[b] { i } else { b });
    p[k] += drift;
    p
}

pub fn random_instance<R: Rng>(rng: &mut R, states: usize, actions: usize, discount: f64) -> MdpInstance {
    let rewards = Matrix::from_fn(states, actions, |_, _| rng.random_range(0.0..10.0));
    let p0 = random_distribution(rng, states);
    MdpInstance::new(rewards, discount, p0).expect("valid random instance")
}

pub fn random_kernel<R: Rng>(rng: &mut R, states: usize, actions: usize) -> TransitionKernel {
    let mut data = Vec::with_capacity(states * actions * states);
    for _ in 0..states * actions {
        data.extend(random_distribution(rng, states));
    }
    TransitionKernel::new(states, actions, data).expect("valid random kernel")
}

pub fn random_policy<R: Rng>(rng: &mut R, states: usize, actions: usize) -> Policy {
    let rows: Vec<Vec<f64>> = (0..states).map(|_| random_distribution(rng, actions)).collect();
    Policy::new(Matrix::from_rows(&rows).expect("rectangular")).expect("valid random policy")
}

/// `n × cols` matrix with probability-vector columns.
pub fn random_stochastic_columns<R: Rng>(rng: &mut R, n: usize, cols: usize) -> Matrix {
    let mut w = Matrix::zeros(n, cols);
    for j in 0..cols {
        w.set_column(j, &random_distribution(rng, n));
    }
    w
}

pub fn random_factor_model<R: Rng>(rng: &mut R, states: usize, actions: usize, rank: usize) -> FactorModel {
    let w = random_stochastic_columns(rng, states, rank);
    let mut u = vec![vec![vec![0.0; actions]; rank]; states];
    for block in u.iter_mut() {
        for a in 0..actions {
            let c = random_distribution(rng, rank);
            for i in 0..rank {
                block[i][a] = c[i];
            }
        }
    }
    FactorModel::new(&u, w).expect("valid random factor model")
}

/// Random factor sets given as convex hulls of `1..=max_vertices` random
/// distributions; the first point of each hull is the nominal factor.
///
/// Returns the factor model (built on those nominal factors), the
/// uncertainty and the per-factor vertex lists.
pub fn random_hull_problem<R: Rng>(
    rng: &mut R,
    states: usize,
    actions: usize,
    rank: usize,
    max_vertices: usize,
) -> (FactorModel, FactorUncertainty, Vec<Vec<Vec<f64>>>) {
    let base = random_factor_model(rng, states, actions, rank);
    let vertices: Vec<Vec<Vec<f64>>> = (0..rank)
        .map(|_| {
            let k = rng.random_range(1..=max_vertices);
            (0..k).map(|_| random_distribution(rng, states)).collect()
        })
        .collect();
    let mut w_nom = Matrix::zeros(states, rank);
    for (i, v) in vertices.iter().enumerate() {
        w_nom.set_column(i, &v[0]);
    }
    let fm = FactorModel::new(&base.u_nested(), w_nom).expect("valid factor model");
    let sets = vertices
        .iter()
        .map(|v| FactorSet::Polytope(Polytope::convex_hull(v).expect("non-empty hull")))
        .collect();
    let fu = FactorUncertainty::new(sets).expect("non-empty uncertainty");
    (fm, fu, vertices)
}

/// Three states, two actions, two factors with budget sets (`tau = 0.1`, `c = 1`).
///
/// Action 0 pays more now and drifts towards the low-reward state; action 1
/// pays less now and drifts towards the high-reward state.
pub fn desk_three_state(discount: f64) -> (MdpInstance, FactorModel, FactorUncertainty) {
    let rewards = Matrix::from_rows(&[vec![2.0, 1.0], vec![4.0, 2.5], vec![6.0, 5.0]]).expect("rectangular");
    let inst = MdpInstance::new(rewards, discount, vec![0.5, 0.3, 0.2]).expect("valid desk instance");
    let w_nom = Matrix::from_rows(&[vec![0.6, 0.1], vec![0.3, 0.3], vec![0.1, 0.6]]).expect("rectangular");
    // u[s][i][a]
    let u = vec![
        vec![vec![0.8, 0.3], vec![0.2, 0.7]],
        vec![vec![0.7, 0.2], vec![0.3, 0.8]],
        vec![vec![0.9, 0.4], vec![0.1, 0.6]],
    ];
    let fm = FactorModel::new(&u, w_nom).expect("valid desk factor model");
    let fu = build_budget_uncertainty(fm.w_nom(), 0.1, 1.0).expect("valid budget sets");
    (inst, fm, fu)
}

/// Six health states and three treatment intensities, `λ = 0.95`.
///
/// States `0..=4` are health levels from best to worst and state 5 is
/// absorbing mortality. Actions pay 10, 8 and 6 per period (0 after death);
/// more intensive treatment shifts weight away from deterioration. The
/// non-absorbing rows are exact mixtures of three planted factors.
pub fn desk_healthcare() -> (MdpInstance, TransitionKernel) {
    const S: usize = 6;
    const A: usize = 3;
    let factors = [
        [0.45, 0.30, 0.15, 0.05, 0.03, 0.02],
        [0.10, 0.25, 0.30, 0.20, 0.10, 0.05],
        [0.02, 0.08, 0.15, 0.30, 0.30, 0.15],
    ];
    let mut data = Vec::with_capacity(S * A * S);
    for s in 0..S {
        for a in 0..A {
            if s == S - 1 {
                data.extend((0..S).map(|t| if t == s { 1.0 } else { 0.0 }));
                continue;
            }
            let decline = 0.15 + 0.15 * s as f64;
            let u3 = decline * (1.0 - 0.3 * a as f64);
            let u1 = (1.0 - u3) * (0.25 + 0.25 * a as f64);
            let u2 = 1.0 - u1 - u3;
            data.extend((0..S).map(|t| u1 * factors[0][t] + u2 * factors[1][t] + u3 * factors[2][t]));
        }
    }
    let kernel = TransitionKernel::new(S, A, data).expect("valid desk kernel");
    let rewards = Matrix::from_fn(S, A, |s, a| if s == S - 1 { 0.0 } else { [10.0, 8.0, 6.0][a] });
    let p0 = vec![0.2, 0.2, 0.2, 0.2, 0.2, 0.0];
    let inst = MdpInstance::new(rewards, 0.95, p0).expect("valid desk instance");
    (inst, kernel)
}
