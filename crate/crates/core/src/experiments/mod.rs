//! Nominal-versus-robust comparison: perturbation samplers, empirical
//! statistics and the table-shaped comparison report.

mod sampling;
mod stats;

pub use sampling::{b_r_deviation, sample_b_inf, sample_b_r, Family, PerturbationSample};
pub use stats::{empirical_stats, EmpiricalStats};

use std::fmt::Write as _;

use log::info;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::factor::{build_budget_uncertainty, factorize_with_absorbing, pin_factor, FactorModel, NmfOptions, Residuals};
use crate::mdp::{expected_reward, nominal_value_iteration, MdpInstance, Policy, TransitionKernel};
use crate::robust::{s_rect_evaluate, s_rect_robust_vi, RobustProblem, SRectUncertainty, Variant};

/// Factor model used by the comparison, with its deterministic (pinned) factors.
#[derive(Debug, Clone)]
pub struct FactorSetup {
    pub fm: FactorModel,
    pub pinned: Vec<(usize, Vec<f64>)>,
    pub residuals: Option<Residuals>,
}

impl FactorSetup {
    /// Factorises `p_nom` with `rank` factors in total, one of which is
    /// pinned to `e_m` for every absorbing state `m`.
    pub fn from_kernel(p_nom: &TransitionKernel, rank: usize, opts: &NmfOptions) -> Result<Self> {
        let absorbing = (0..p_nom.states()).filter(|&s| p_nom.is_absorbing(s)).count();
        if rank <= absorbing {
            return Err(Error::invalid(
                "r",
                format!("rank {rank} leaves no free factor next to {absorbing} absorbing states"),
            ));
        }
        let (fm, pinned, res) = factorize_with_absorbing(p_nom, rank - absorbing, opts)?;
        info!("factorised nominal kernel, linf residual {:.3e}", res.residuals.linf);
        Ok(FactorSetup {
            fm,
            pinned,
            residuals: Some(res.residuals),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonConfig {
    pub taus: Vec<f64>,
    /// Rank of the `B_r` deviations.
    pub r: usize,
    pub n: usize,
    pub seed: u64,
    pub eps: f64,
    /// Budget constant: `gamma = c·√S·tau` (factor sets), `c·√(S·A)·tau` (s-rect).
    pub c: f64,
    pub variant: Variant,
}

impl Default for ComparisonConfig {
    fn default() -> Self {
        ComparisonConfig {
            taus: vec![0.05, 0.07, 0.09],
            r: 4,
            n: 10_000,
            seed: 0,
            eps: crate::mdp::DEFAULT_EPS,
            c: 1.0,
            variant: Variant::F1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub tau: f64,
    pub table: u8,
    pub quantity: String,
    pub value: f64,
    pub conf95: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RobustPolicies {
    pub tau: f64,
    pub robust_r: Policy,
    pub robust_s: Policy,
}

/// Rows are scaled so that the nominal policy at the nominal kernel reads 100.
///
/// Table 1 rows: `nominal.{nominal,worst_r,worst_s}`. Table 2 rows:
/// `robust_r.*` and `robust_s.*` with the same suffixes. Table 3 rows:
/// `{nominal,robust_r,robust_s}.{B_r,B_inf}` with a 95% half-width.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub normalizer: f64,
    pub rank: usize,
    pub residuals: Option<Residuals>,
    pub nominal_policy: Policy,
    pub rows: Vec<ReportRow>,
    pub policies: Vec<RobustPolicies>,
    pub config: ComparisonConfig,
}

impl ComparisonReport {
    pub const CSV_HEADER: &'static str = "tau,table,quantity,value,conf95";

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for row in &self.rows {
            let conf = row.conf95.map(|c| c.to_string()).unwrap_or_default();
            writeln!(out, "{},{},{},{},{}", row.tau, row.table, row.quantity, row.value, conf).expect("write to string");
        }
        out
    }

    pub fn value(&self, tau: f64, quantity: &str) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.tau == tau && r.quantity == quantity)
            .map(|r| r.value)
    }
}

/// Runs the nominal/robust comparison for every `tau` in the grid.
pub fn comparison_pipeline(inst: &MdpInstance, setup: &FactorSetup, config: &ComparisonConfig) -> Result<ComparisonReport> {
    if config.taus.is_empty() {
        return Err(Error::invalid("tau", "grid is empty"));
    }
    let p_nom = setup.fm.nominal_kernel()?;
    inst.check_kernel(&p_nom)?;
    let (pi_nom, _) = nominal_value_iteration(inst, &p_nom, config.eps)?;
    let normalizer = expected_reward(inst, &pi_nom, &p_nom)?;
    if !(normalizer > 0.0) {
        return Err(Error::invalid("rewards", "nominal policy earns nothing; cannot normalise"));
    }

    let per_tau = config
        .taus
        .par_iter()
        .enumerate()
        .map(|(k, &tau)| tau_rows(inst, setup, config, &p_nom, &pi_nom, normalizer, k, tau))
        .collect::<Result<Vec<_>>>()?;

    let mut rows = Vec::new();
    let mut policies = Vec::new();
    for (r, p) in per_tau {
        rows.extend(r);
        policies.push(p);
    }
    Ok(ComparisonReport {
        normalizer,
        rank: setup.fm.rank(),
        residuals: setup.residuals,
        nominal_policy: pi_nom,
        rows,
        policies,
        config: config.clone(),
    })
}

#[allow(clippy::too_many_arguments)]
fn tau_rows(
    inst: &MdpInstance,
    setup: &FactorSetup,
    config: &ComparisonConfig,
    p_nom: &TransitionKernel,
    pi_nom: &Policy,
    normalizer: f64,
    k: usize,
    tau: f64,
) -> Result<(Vec<ReportRow>, RobustPolicies)> {
    let eps = config.eps;
    let mut fu = build_budget_uncertainty(setup.fm.w_nom(), tau, config.c)?;
    for (idx, point) in &setup.pinned {
        fu = pin_factor(&fu, *idx, point)?;
    }
    let problem = RobustProblem::new(inst, &setup.fm, &fu)?;
    let sr = SRectUncertainty::new(p_nom.clone(), tau, config.c)?.pin_absorbing();

    let robust_r = problem.improve_policy(eps, config.variant)?.policy;
    let robust_s = s_rect_robust_vi(inst, &sr, eps)?.policy;
    info!("tau {tau}: robust policies computed");

    let scale = |x: f64| 100.0 * x / normalizer;
    let mut rows = Vec::new();
    let named = [(1u8, "nominal", pi_nom), (2, "robust_r", &robust_r), (2, "robust_s", &robust_s)];
    for (table, name, pi) in named {
        let nominal = expected_reward(inst, pi, p_nom)?;
        let worst_r = problem.evaluate_worst_case(pi, eps)?.z;
        let worst_s = s_rect_evaluate(inst, &sr, pi, eps)?.z;
        for (suffix, v) in [("nominal", nominal), ("worst_r", worst_r), ("worst_s", worst_s)] {
            rows.push(ReportRow {
                tau,
                table,
                quantity: format!("{name}.{suffix}"),
                value: scale(v),
                conf95: None,
            });
        }
    }

    let b_r = sample_b_r(p_nom, config.r, tau, config.n, config.seed.wrapping_add(2 * k as u64))?;
    let b_inf = sample_b_inf(p_nom, tau, config.n, config.seed.wrapping_add(2 * k as u64 + 1))?;
    for (name, pi) in [("nominal", pi_nom), ("robust_r", &robust_r), ("robust_s", &robust_s)] {
        for sample in [&b_r, &b_inf] {
            let st = empirical_stats(inst, pi, sample, normalizer)?;
            rows.push(ReportRow {
                tau,
                table: 3,
                quantity: format!("{name}.{}", sample.family.label()),
                value: st.mean,
                conf95: Some(st.conf95),
            });
        }
    }
    Ok((
        rows,
        RobustPolicies {
            tau,
            robust_r,
            robust_s,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::desk_healthcare;
    use approx::assert_abs_diff_eq;

    fn desk_setup() -> (MdpInstance, FactorSetup) {
        let (inst, p) = desk_healthcare();
        let opts = NmfOptions {
            restarts: 4,
            ..NmfOptions::default()
        };
        (inst, FactorSetup::from_kernel(&p, 4, &opts).unwrap())
    }

    #[test]
    fn zero_radius_reads_one_hundred() {
        let (inst, setup) = desk_setup();
        let config = ComparisonConfig {
            taus: vec![0.0],
            n: 20,
            ..ComparisonConfig::default()
        };
        let report = comparison_pipeline(&inst, &setup, &config).unwrap();
        for row in report.rows.iter() {
            if row.table < 3 {
                assert_abs_diff_eq!(row.value, 100.0, epsilon = 1e-4);
            }
        }
    }

    #[test]
    fn report_schema_and_determinism() {
        let (inst, setup) = desk_setup();
        let config = ComparisonConfig {
            taus: vec![0.05],
            n: 50,
            ..ComparisonConfig::default()
        };
        let report = comparison_pipeline(&inst, &setup, &config).unwrap();
        let quantities: Vec<&str> = report.rows.iter().map(|r| r.quantity.as_str()).collect();
        for name in ["nominal", "robust_r", "robust_s"] {
            for suffix in ["nominal", "worst_r", "worst_s", "B_r", "B_inf"] {
                assert!(quantities.contains(&format!("{name}.{suffix}").as_str()));
            }
        }
        assert_eq!(report.rows.len(), 15);
        let csv = report.to_csv();
        assert!(csv.starts_with(ComparisonReport::CSV_HEADER));
        assert_eq!(csv.lines().count(), 16);
        assert_eq!(report, comparison_pipeline(&inst, &setup, &config).unwrap());
        assert_eq!(report.rank, 4);
    }

    #[test]
    fn rejects_rank_without_free_factor() {
        let (_, p) = desk_healthcare();
        assert!(FactorSetup::from_kernel(&p, 1, &NmfOptions::default()).is_err());
    }
}
