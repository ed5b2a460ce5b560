//! Column-stochastic nonnegative matrix factorisation of a nominal kernel.
//!
//! The data matrix stacks the transition rows as columns: column `(s, a)` is
//! `P_sa`, so `M ≈ W U` with `W` (`S × r`) and every column of `U`
//! (`r × #pairs`) on the probability simplex. Both blocks are updated by
//! projected gradient steps with backtracking, so every iterate is feasible
//! and the objective `½‖M − WU‖²_F` never increases.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::FactorModel;
use crate::error::{Error, Result};
use crate::mdp::TransitionKernel;
use crate::numerics::{project_simplex, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NmfOptions {
    pub max_iters: usize,
    /// Relative objective decrease below which an iteration counts as stalled.
    pub tol: f64,
    pub restarts: usize,
    pub seed: u64,
}

impl Default for NmfOptions {
    fn default() -> Self {
        NmfOptions {
            max_iters: 20_000,
            tol: 1e-12,
            restarts: 10,
            seed: 0,
        }
    }
}

/// Norms of `M − WU`: Frobenius, max column sum, max row sum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Residuals {
    pub l2: f64,
    pub l1: f64,
    pub linf: f64,
}

impl Residuals {
    fn of(err: &Matrix) -> Self {
        Residuals {
            l2: err.frobenius_norm(),
            l1: err.norm_1(),
            linf: err.norm_inf(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct NmfResult {
    pub w: Matrix,
    /// `r × #pairs`; column order follows the factored `(s, a)` pairs.
    pub u: Matrix,
    pub pairs: Vec<(usize, usize)>,
    pub residuals: Residuals,
    pub objective: f64,
    /// Objective after every iteration of the winning restart (index 0 is the start).
    pub history: Vec<f64>,
    pub restart: usize,
}

impl NmfResult {
    /// Factor model over all states; requires that every pair was factored.
    pub fn factor_model(&self, states: usize, actions: usize) -> Result<FactorModel> {
        if self.pairs.len() != states * actions {
            return Err(Error::invalid("factor model", "not every state-action pair was factored"));
        }
        let r = self.w.cols();
        let mut u = vec![0.0; states * r * actions];
        for (col, &(s, a)) in self.pairs.iter().enumerate() {
            for i in 0..r {
                u[(s * r + i) * actions + a] = self.u[(i, col)];
            }
        }
        FactorModel::from_flat(states, actions, r, u, self.w.clone())
    }
}

/// Factorises every transition row of `p_nom` with `r` factors.
pub fn nmf_factorize(p_nom: &TransitionKernel, r: usize, opts: &NmfOptions) -> Result<NmfResult> {
    let pairs: Vec<(usize, usize)> = (0..p_nom.states())
        .flat_map(|s| (0..p_nom.actions()).map(move |a| (s, a)))
        .collect();
    factorize_pairs(p_nom, &pairs, r, opts)
}

/// Factorises the non-absorbing rows with `r` factors and appends one pinned
/// factor `e_m` per absorbing state `m`, with `u^{new}_{ma} = 1`.
///
/// Returns the factor model, the `(index, point)` list of pinned factors and
/// the factorisation report for the non-absorbing block.
pub fn factorize_with_absorbing(
    p_nom: &TransitionKernel,
    r: usize,
    opts: &NmfOptions,
) -> Result<(FactorModel, Vec<(usize, Vec<f64>)>, NmfResult)> {
    let (states, actions) = (p_nom.states(), p_nom.actions());
    let absorbing: Vec<usize> = (0..states).filter(|&s| p_nom.is_absorbing(s)).collect();
    let pairs: Vec<(usize, usize)> = (0..states)
        .filter(|s| !absorbing.contains(s))
        .flat_map(|s| (0..actions).map(move |a| (s, a)))
        .collect();
    if pairs.is_empty() {
        return Err(Error::invalid("kernel", "every state is absorbing"));
    }
    let res = factorize_pairs(p_nom, &pairs, r, opts)?;
    let total = r + absorbing.len();
    let mut w = Matrix::zeros(states, total);
    for i in 0..r {
        w.set_column(i, &res.w.column(i));
    }
    let mut pinned = Vec::new();
    let mut u = vec![0.0; states * total * actions];
    for (col, &(s, a)) in res.pairs.iter().enumerate() {
        for i in 0..r {
            u[(s * total + i) * actions + a] = res.u[(i, col)];
        }
    }
    for (k, &m) in absorbing.iter().enumerate() {
        let idx = r + k;
        let mut e = vec![0.0; states];
        e[m] = 1.0;
        w.set_column(idx, &e);
        for a in 0..actions {
            u[(m * total + idx) * actions + a] = 1.0;
        }
        pinned.push((idx, e));
    }
    let fm = FactorModel::from_flat(states, actions, total, u, w)?;
    Ok((fm, pinned, res))
}

fn factorize_pairs(p_nom: &TransitionKernel, pairs: &[(usize, usize)], r: usize, opts: &NmfOptions) -> Result<NmfResult> {
    let max = p_nom.states() * p_nom.actions();
    if r == 0 {
        return Err(Error::invalid("r", "must be at least 1"));
    }
    if r > max {
        return Err(Error::RankTooLarge { rank: r, max });
    }
    if opts.max_iters == 0 {
        return Err(Error::invalid("max_iters", "must be at least 1"));
    }
    let n = p_nom.states();
    let mut m = Matrix::zeros(n, pairs.len());
    for (col, &(s, a)) in pairs.iter().enumerate() {
        m.set_column(col, p_nom.row(s, a));
    }
    let restarts = opts.restarts.max(1);
    let runs: Vec<Result<Run>> = (0..restarts)
        .into_par_iter()
        .map(|k| {
            let (w, u) = if k == 0 {
                spread_init(&m, r, opts.seed)?
            } else {
                random_init(&m, r, opts.seed.wrapping_add(k as u64))?
            };
            Ok(run(&m, w, u, opts))
        })
        .collect();
    let mut best: Option<(usize, Run)> = None;
    for (k, run) in runs.into_iter().enumerate() {
        let run = run?;
        let better = match &best {
            None => true,
            Some((_, b)) => run.objective < b.objective,
        };
        if better {
            best = Some((k, run));
        }
    }
    let (restart, run) = best.expect("at least one restart");
    let err = residual_matrix(&m, &run.w, &run.u);
    Ok(NmfResult {
        residuals: Residuals::of(&err),
        w: run.w,
        u: run.u,
        pairs: pairs.to_vec(),
        objective: run.objective,
        history: run.history,
        restart,
    })
}

struct Run {
    w: Matrix,
    u: Matrix,
    objective: f64,
    history: Vec<f64>,
}

fn residual_matrix(m: &Matrix, w: &Matrix, u: &Matrix) -> Matrix {
    let wu = w.matmul(u);
    Matrix::from_fn(m.rows(), m.cols(), |i, j| m[(i, j)] - wu[(i, j)])
}

fn objective(m: &Matrix, w: &Matrix, u: &Matrix) -> f64 {
    0.5 * residual_matrix(m, w, u).as_slice().iter().map(|x| x * x).sum::<f64>()
}

fn project_columns(x: &Matrix) -> Matrix {
    let mut out = x.clone();
    for j in 0..x.cols() {
        let p = project_simplex(&x.column(j)).expect("nonempty column");
        out.set_column(j, &p);
    }
    out
}

/// Farthest-point selection of data columns as initial factors; remaining
/// slots (when `r` exceeds the number of distinct columns) are uniform.
fn spread_init(m: &Matrix, r: usize, seed: u64) -> Result<(Matrix, Matrix)> {
    let n = m.cols();
    let cols: Vec<Vec<f64>> = (0..n).map(|j| m.column(j)).collect();
    let dist = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>();
    let mut chosen: Vec<usize> = Vec::new();
    let mut nearest = vec![f64::INFINITY; n];
    while chosen.len() < r.min(n) {
        let next = if chosen.is_empty() {
            0
        } else {
            let (j, d) = nearest
                .iter()
                .enumerate()
                .fold((0, -1.0), |b, (j, &d)| if d > b.1 { (j, d) } else { b });
            if d <= 0.0 {
                break;
            }
            j
        };
        chosen.push(next);
        for j in 0..n {
            nearest[j] = nearest[j].min(dist(&cols[j], &cols[next]));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut w = Matrix::zeros(m.rows(), r);
    for i in 0..r {
        match chosen.get(i) {
            Some(&j) => w.set_column(i, &cols[j]),
            None => w.set_column(i, &random_simplex(&mut rng, m.rows())),
        }
    }
    // Each data column starts on its nearest chosen factor.
    let mut u = Matrix::zeros(r, n);
    for j in 0..n {
        let k = (0..r)
            .min_by(|&a, &b| dist(&cols[j], &w.column(a)).total_cmp(&dist(&cols[j], &w.column(b))))
            .expect("r ≥ 1");
        u[(k, j)] = 1.0;
    }
    Ok((w, u))
}

fn random_init(m: &Matrix, r: usize, seed: u64) -> Result<(Matrix, Matrix)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut w = Matrix::zeros(m.rows(), r);
    for i in 0..r {
        w.set_column(i, &random_simplex(&mut rng, m.rows()));
    }
    let mut u = Matrix::zeros(r, m.cols());
    for j in 0..m.cols() {
        u.set_column(j, &random_simplex(&mut rng, r));
    }
    Ok((w, u))
}

fn random_simplex(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    // Normalised exponentials: uniform on the simplex.
    let raw: Vec<f64> = (0..n).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|x| x / s).collect()
}

/// One backtracking projected-gradient step on a block. `grad` and
/// `lipschitz` describe the block; `eval` scores a candidate.
fn block_step(
    x: &Matrix,
    grad: &Matrix,
    lipschitz: f64,
    f0: f64,
    mut eval: impl FnMut(&Matrix) -> f64,
) -> Option<(Matrix, f64)> {
    let mut t = 4.0 / lipschitz.max(1e-300);
    for _ in 0..60 {
        let trial = Matrix::from_fn(x.rows(), x.cols(), |i, j| x[(i, j)] - t * grad[(i, j)]);
        let cand = project_columns(&trial);
        let f = eval(&cand);
        if f <= f0 {
            return Some((cand, f));
        }
        t *= 0.5;
    }
    None
}

fn run(m: &Matrix, mut w: Matrix, mut u: Matrix, opts: &NmfOptions) -> Run {
    let mut f = objective(m, &w, &u);
    let mut history = vec![f];
    let mut stalled = 0;
    for _ in 0..opts.max_iters {
        if f <= 1e-30 {
            break;
        }
        let prev = f;

        let err = residual_matrix(m, &w, &u); // M − WU
        let ut = u.transpose();
        let grad_w = Matrix::from_fn(w.rows(), w.cols(), |i, j| -(0..m.cols()).map(|k| err[(i, k)] * ut[(k, j)]).sum::<f64>());
        let lw = u.matmul(&ut).frobenius_norm();
        if let Some((cand, fc)) = block_step(&w, &grad_w, lw, f, |c| objective(m, c, &u)) {
            w = cand;
            f = fc;
        }

        let err = residual_matrix(m, &w, &u);
        let wt = w.transpose();
        let grad_u = Matrix::from_fn(u.rows(), u.cols(), |i, j| -(0..m.rows()).map(|k| wt[(i, k)] * err[(k, j)]).sum::<f64>());
        let lu = wt.matmul(&w).frobenius_norm();
        if let Some((cand, fc)) = block_step(&u, &grad_u, lu, f, |c| objective(m, &w, c)) {
            u = cand;
            f = fc;
        }

        history.push(f);
        if prev - f <= opts.tol * prev {
            stalled += 1;
            if stalled >= 20 {
                break;
            }
        } else {
            stalled = 0;
        }
    }
    Run {
        w,
        u,
        objective: f,
        history,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::factor::assemble_kernel;
    use crate::synthetic::{random_factor_model, random_kernel};
    use rand::SeedableRng;

    fn check_feasible(res: &NmfResult) {
        for i in 0..res.w.cols() {
            let col = res.w.column(i);
            assert!(col.iter().all(|&x| x >= 0.0));
            assert!((col.iter().sum::<f64>() - 1.0).abs() <= 1e-10);
        }
        for j in 0..res.u.cols() {
            let col = res.u.column(j);
            assert!(col.iter().all(|&x| x >= 0.0));
            assert!((col.iter().sum::<f64>() - 1.0).abs() <= 1e-10);
        }
    }

    #[test]
    fn full_rank_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = random_kernel(&mut rng, 3, 2);
        let res = nmf_factorize(&p, 6, &NmfOptions::default()).unwrap();
        assert!(res.residuals.linf <= 1e-8, "{:?}", res.residuals);
        check_feasible(&res);
        let fm = res.factor_model(3, 2).unwrap();
        let q = assemble_kernel(&fm, fm.w_nom()).unwrap();
        assert!(q.max_abs_diff(&p) <= 1e-8);
    }

    #[test]
    fn planted_factorisation_is_recovered() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let fm0 = random_factor_model(&mut rng, 5, 2, 2);
        let p = fm0.nominal_kernel().unwrap();
        let res = nmf_factorize(&p, 2, &NmfOptions::default()).unwrap();
        assert!(res.residuals.linf <= 1e-6, "{:?}", res.residuals);
    }

    #[test]
    fn objective_is_monotone_and_iterates_feasible() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = random_kernel(&mut rng, 4, 2);
        let opts = NmfOptions {
            max_iters: 500,
            ..NmfOptions::default()
        };
        let res = nmf_factorize(&p, 2, &opts).unwrap();
        for pair in res.history.windows(2) {
            assert!(pair[1] <= pair[0] + 1e-12);
        }
        check_feasible(&res);
    }

    #[test]
    fn rank_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let p = random_kernel(&mut rng, 2, 2);
        assert!(matches!(
            nmf_factorize(&p, 5, &NmfOptions::default()),
            Err(Error::RankTooLarge { rank: 5, max: 4 })
        ));
    }

    #[test]
    fn absorbing_states_get_pinned_factor() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut p = random_kernel(&mut rng, 4, 2);
        for a in 0..2 {
            let row = p.row_mut(3, a);
            row.iter_mut().for_each(|x| *x = 0.0);
            row[3] = 1.0;
        }
        let (fm, pinned, _) = factorize_with_absorbing(&p, 2, &NmfOptions::default()).unwrap();
        assert_eq!(fm.rank(), 3);
        assert_eq!(pinned, vec![(2, vec![0.0, 0.0, 0.0, 1.0])]);
        let q = fm.nominal_kernel().unwrap();
        assert!(q.is_absorbing(3));
        for s in 0..3 {
            for a in 0..2 {
                assert_eq!(fm.coef(s, 2, a), 0.0);
            }
        }
    }
}
