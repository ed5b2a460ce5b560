//! Seeded perturbation samplers around a nominal kernel.
//!
//! Absorbing rows are never perturbed. Every other row of a sample stays on
//! the simplex and within `tau` of the nominal row entry-wise.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::TransitionKernel;
use crate::numerics::{project_capped_simplex, Matrix};

/// Fresh draws tried before a `B_inf` row falls back to projection.
const MAX_REJECTIONS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Family {
    #[serde(rename = "B_r")]
    BR,
    #[serde(rename = "B_inf")]
    BInf,
}

impl Family {
    pub fn label(self) -> &'static str {
        match self {
            Family::BR => "B_r",
            Family::BInf => "B_inf",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationSample {
    pub kernels: Vec<TransitionKernel>,
    pub family: Family,
    pub tau: f64,
    pub r: Option<usize>,
    pub seed: u64,
}

fn check_args(tau: f64, n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::invalid("n", "must be at least 1"));
    }
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::invalid("tau", format!("{tau} not in [0, 1]")));
    }
    Ok(())
}

/// Nearest point of `{p ∈ Δ : |p − nom| ≤ tau}` to `x`.
fn project_row(x: &[f64], nom: &[f64], tau: f64) -> Result<Vec<f64>> {
    let lo: Vec<f64> = nom.iter().map(|&p| (p - tau).max(0.0)).collect();
    let hi: Vec<f64> = nom.iter().map(|&p| (p + tau).min(1.0)).collect();
    let mut p = project_capped_simplex(x, &lo, &hi)?;
    // Bisection leaves round-off; pin the bounds and the sum exactly.
    for (pj, (&l, &h)) in p.iter_mut().zip(lo.iter().zip(&hi)) {
        *pj = pj.clamp(l, h);
    }
    let drift = 1.0 - p.iter().sum::<f64>();
    if let Some(k) = (0..p.len()).find(|&k| p[k] + drift >= lo[k] && p[k] + drift <= hi[k]) {
        p[k] += drift;
    }
    Ok(p)
}

/// `n` kernels whose rows are `P^nom_sa + d` with `d` uniform in direction on
/// the zero-sum subspace and `‖d‖∞ = ρ·tau`, `ρ ~ U(0, 1)`. Draws that leave
/// the simplex are redrawn; after repeated failures the last draw is projected.
pub fn sample_b_inf(p_nom: &TransitionKernel, tau: f64, n: usize, seed: u64) -> Result<PerturbationSample> {
    check_args(tau, n)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (states, actions) = (p_nom.states(), p_nom.actions());
    let mut kernels = Vec::with_capacity(n);
    for _ in 0..n {
        let mut p = p_nom.clone();
        for s in (0..states).filter(|&s| !p_nom.is_absorbing(s)) {
            for a in 0..actions {
                let nom = p_nom.row(s, a);
                let mut row = nom.to_vec();
                if tau > 0.0 && states > 1 {
                    for attempt in 0..MAX_REJECTIONS {
                        let g: Vec<f64> = (0..states).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
                        let mean = g.iter().sum::<f64>() / states as f64;
                        let d: Vec<f64> = g.iter().map(|x| x - mean).collect();
                        let scale = d.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
                        if scale == 0.0 {
                            continue;
                        }
                        let rho: f64 = rng.random();
                        let cand: Vec<f64> = nom.iter().zip(&d).map(|(p, x)| p + rho * tau * x / scale).collect();
                        if cand.iter().all(|&x| x >= 0.0) {
                            row = project_row(&cand, nom, tau)?;
                            break;
                        }
                        if attempt + 1 == MAX_REJECTIONS {
                            row = project_row(&cand, nom, tau)?;
                        }
                    }
                }
                p.row_mut(s, a).copy_from_slice(&row);
            }
        }
        kernels.push(p);
    }
    Ok(PerturbationSample {
        kernels,
        family: Family::BInf,
        tau,
        r: None,
        seed,
    })
}

/// Low-rank deviation `D = W U` (`S × S·A`, column `s·A + a` perturbs row
/// `(s, a)`): `W` has zero-sum columns drawn from `U(−1, 1)` and centred,
/// `U` entries are `U(−1, 1)`, and `D` is scaled to `‖D‖∞ = ρ·tau`.
/// Columns of absorbing states are zero.
pub fn b_r_deviation<R: Rng>(rng: &mut R, p_nom: &TransitionKernel, r: usize, tau: f64) -> Matrix {
    let (states, actions) = (p_nom.states(), p_nom.actions());
    let mut w = Matrix::from_fn(states, r, |_, _| rng.random_range(-1.0..1.0));
    for j in 0..r {
        let col = w.column(j);
        let mean = col.iter().sum::<f64>() / states as f64;
        let centred: Vec<f64> = col.iter().map(|x| x - mean).collect();
        w.set_column(j, &centred);
    }
    let u = Matrix::from_fn(r, states * actions, |_, k| {
        let x = rng.random_range(-1.0..1.0);
        if p_nom.is_absorbing(k / actions) {
            0.0
        } else {
            x
        }
    });
    let d = w.matmul(&u);
    let rho: f64 = rng.random();
    let scale = d.max_abs();
    if scale == 0.0 {
        return d;
    }
    Matrix::from_fn(d.rows(), d.cols(), |i, j| rho * tau * d[(i, j)] / scale)
}

/// `n` kernels `P^nom + D` with `D` from [`b_r_deviation`], rows projected
/// back onto `{p ∈ Δ : |p − P^nom_sa| ≤ tau}` where they leave the simplex.
pub fn sample_b_r(p_nom: &TransitionKernel, r: usize, tau: f64, n: usize, seed: u64) -> Result<PerturbationSample> {
    check_args(tau, n)?;
    let (states, actions) = (p_nom.states(), p_nom.actions());
    if r == 0 || r > states * actions {
        return Err(Error::RankTooLarge {
            rank: r,
            max: states * actions,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut kernels = Vec::with_capacity(n);
    for _ in 0..n {
        let d = b_r_deviation(&mut rng, p_nom, r, tau);
        let mut p = p_nom.clone();
        for s in 0..states {
            for a in 0..actions {
                let nom = p_nom.row(s, a);
                let cand: Vec<f64> = (0..states).map(|t| nom[t] + d[(t, s * actions + a)]).collect();
                let row = if cand.iter().all(|&x| x >= 0.0) {
                    cand
                } else {
                    project_row(&cand, nom, tau)?
                };
                p.row_mut(s, a).copy_from_slice(&row);
            }
        }
        kernels.push(p);
    }
    Ok(PerturbationSample {
        kernels,
        family: Family::BR,
        tau,
        r: Some(r),
        seed,
    })
}
