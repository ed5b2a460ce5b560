use crate::error::{Error, Result};
use crate::factor::{assemble_kernel, FactorModel};
use crate::mdp::{expected_reward, MdpInstance, Policy};
use crate::numerics::Matrix;

/// Largest number of (policy, vertex combination) pairs the oracle accepts.
pub const ENUMERATION_LIMIT: u128 = 1_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct BruteForceResult {
    pub policy: Policy,
    pub w_star: Matrix,
    pub z_star: f64,
}

/// Exact max-min by enumeration: every deterministic policy against every
/// combination of per-factor vertices. First maximiser / minimiser in
/// lexicographic order wins ties.
pub fn brute_force_oracle(inst: &MdpInstance, fm: &FactorModel, vertices: &[Vec<Vec<f64>>]) -> Result<BruteForceResult> {
    if vertices.len() != fm.rank() {
        return Err(Error::dims("vertex lists", fm.rank(), vertices.len()));
    }
    if let Some(v) = vertices.iter().flatten().find(|v| v.len() != fm.states()) {
        return Err(Error::dims("vertex", fm.states(), v.len()));
    }
    if vertices.iter().any(Vec::is_empty) {
        return Err(Error::EmptyInput);
    }
    let policies = (inst.actions() as u128).checked_pow(inst.states() as u32);
    let combos = vertices
        .iter()
        .try_fold(1u128, |acc, v| acc.checked_mul(v.len() as u128));
    let count = policies.zip(combos).and_then(|(p, c)| p.checked_mul(c)).unwrap_or(u128::MAX);
    if count > ENUMERATION_LIMIT {
        return Err(Error::TooLarge {
            count,
            limit: ENUMERATION_LIMIT,
        });
    }

    // Kernels depend only on the vertex combination; assemble them once.
    let mut kernels = Vec::new();
    let mut idx = vec![0usize; vertices.len()];
    loop {
        let mut w = Matrix::zeros(fm.states(), fm.rank());
        for (i, &k) in idx.iter().enumerate() {
            w.set_column(i, &vertices[i][k]);
        }
        kernels.push((assemble_kernel(fm, &w)?, w));
        if !advance(&mut idx, vertices) {
            break;
        }
    }

    let mut best: Option<BruteForceResult> = None;
    for policy in Policy::enumerate_deterministic(inst.states(), inst.actions()) {
        let mut worst: Option<(f64, &Matrix)> = None;
        for (p, w) in &kernels {
            let z = expected_reward(inst, &policy, p)?;
            if worst.is_none_or(|(wz, _)| z < wz) {
                worst = Some((z, w));
            }
        }
        let (z, w) = worst.expect("at least one combination");
        if best.as_ref().is_none_or(|b| z > b.z_star) {
            best = Some(BruteForceResult {
                policy,
                w_star: w.clone(),
                z_star: z,
            });
        }
    }
    Ok(best.expect("at least one policy"))
}

fn advance(idx: &mut [usize], vertices: &[Vec<Vec<f64>>]) -> bool {
    for i in (0..idx.len()).rev() {
        idx[i] += 1;
        if idx[i] < vertices[i].len() {
            return true;
        }
        idx[i] = 0;
    }
    false
}
